#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <sstream>
#include <string>

namespace pps {

// Integer-linear combination of bids plus a constant. Payment logic builds
// candidate thresholds symbolically so the same formula can be evaluated
// against plaintext bids or assembled homomorphically from ciphertexts.
struct LinExpr {
  std::map<int, long long> coeff;  // bidder id -> coefficient
  long long constant = 0;

  static LinExpr of_const(long long v) {
    LinExpr e;
    e.constant = v;
    return e;
  }

  static LinExpr of_bid(int id, long long c = 1) {
    LinExpr e;
    if (c != 0) e.coeff[id] = c;
    return e;
  }

  LinExpr& add_bid(int id, long long c) {
    if (c == 0) return *this;
    long long& slot = coeff[id];
    slot += c;
    if (slot == 0) coeff.erase(id);
    return *this;
  }

  LinExpr& add_const(long long v) {
    constant += v;
    return *this;
  }

  LinExpr& add_scaled(const LinExpr& o, long long s) {
    for (const auto& [id, c] : o.coeff) add_bid(id, c * s);
    constant += o.constant * s;
    return *this;
  }

  LinExpr operator+(const LinExpr& o) const {
    LinExpr r = *this;
    r.add_scaled(o, 1);
    return r;
  }

  LinExpr operator-(const LinExpr& o) const {
    LinExpr r = *this;
    r.add_scaled(o, -1);
    return r;
  }

  bool is_constant() const { return coeff.empty(); }

  bool depends_on(int id) const { return coeff.count(id) != 0; }

  long long eval(const std::function<long long(int)>& bid_of) const {
    long long v = constant;
    for (const auto& [id, c] : coeff) v += c * bid_of(id);
    return v;
  }

  bool operator==(const LinExpr& o) const {
    return constant == o.constant && coeff == o.coeff;
  }

  // Human-readable form for logs, e.g. "2*b3 + b7 - 5".
  std::string describe() const {
    std::ostringstream out;
    bool first = true;
    for (const auto& [id, c] : coeff) {
      if (first) {
        if (c < 0) out << "-";
      } else {
        out << (c < 0 ? " - " : " + ");
      }
      long long mag = c < 0 ? -c : c;
      if (mag != 1) out << mag << "*";
      out << "b" << id;
      first = false;
    }
    if (constant != 0 || first) {
      if (first) {
        out << constant;
      } else {
        out << (constant < 0 ? " - " : " + ") << (constant < 0 ? -constant : constant);
      }
    }
    return out.str();
  }
};

}  // namespace pps
