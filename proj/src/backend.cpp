#include "pps/backend.hpp"

#include <algorithm>
#include <numeric>

namespace pps {

int DecisionBackend::sign(const std::string& ctx, const LinExpr& e) {
  if (e.is_constant()) {
    return e.constant > 0 ? 1 : (e.constant < 0 ? -1 : 0);
  }
  return sign_impl(ctx, e);
}

bool DecisionBackend::is_ge(const std::string& ctx, const LinExpr& a, const LinExpr& b) {
  return sign(ctx, a - b) >= 0;
}

long long PlainBackend::eval(const LinExpr& e) const {
  return e.eval([this](int id) { return s_->bidder(id).bid; });
}

std::vector<size_t> PlainBackend::order_desc(const std::string&,
                                             const std::vector<LinExpr>& values) {
  std::vector<long long> v(values.size());
  for (size_t i = 0; i < values.size(); ++i) v[i] = eval(values[i]);
  std::vector<size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] > v[b]; });
  return idx;
}

std::vector<size_t> PlainBackend::order_ratios(const std::string&,
                                               const std::vector<LinExpr>& values,
                                               const std::vector<long long>& divisors) {
  if (values.size() != divisors.size()) {
    throw std::invalid_argument("order_ratios: size mismatch");
  }
  std::vector<long long> v(values.size());
  for (size_t i = 0; i < values.size(); ++i) v[i] = eval(values[i]);
  std::vector<size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
    // v[a]/d[a] > v[b]/d[b], cross-multiplied to stay in integers.
    return v[a] * divisors[b] > v[b] * divisors[a];
  });
  return idx;
}

size_t PlainBackend::argmax(const std::string&, const std::vector<LinExpr>& values) {
  if (values.empty()) throw std::invalid_argument("argmax over empty batch");
  size_t best = 0;
  long long best_v = eval(values[0]);
  for (size_t i = 1; i < values.size(); ++i) {
    long long v = eval(values[i]);
    if (v > best_v) {
      best = i;
      best_v = v;
    }
  }
  return best;
}

long long PlainBackend::reveal(const std::string&, const LinExpr& e) { return eval(e); }

int PlainBackend::sign_impl(const std::string&, const LinExpr& e) {
  long long v = eval(e);
  return v > 0 ? 1 : (v < 0 ? -1 : 0);
}

}  // namespace pps
