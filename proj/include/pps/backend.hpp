#pragma once

#include <string>
#include <vector>

#include "pps/linexpr.hpp"
#include "pps/model.hpp"

namespace pps {

// Seam between auction logic and whoever is allowed to look at bid values.
// Auction cores route every bid-dependent choice through this interface; the
// plaintext backend evaluates expressions directly, the protocol backend
// turns each call into masked-ciphertext exchanges with the auctioneer.
// Because both modes answer the same questions, they decide identically.
//
// The ctx string names the decision point (one stable label per batch); the
// protocol side uses it to scope masks and label transcript entries.
class DecisionBackend {
 public:
  virtual ~DecisionBackend() = default;

  // Indices of values in descending order; original index breaks exact ties,
  // so callers encode tie preference in how they order the input.
  virtual std::vector<size_t> order_desc(const std::string& ctx,
                                         const std::vector<LinExpr>& values) = 0;

  // Descending order of values[i] / divisors[i], compared exactly as
  // rationals. Divisors are public (channel demands), values are bids.
  virtual std::vector<size_t> order_ratios(const std::string& ctx,
                                           const std::vector<LinExpr>& values,
                                           const std::vector<long long>& divisors) = 0;

  // Index of the maximum value, lowest index on ties.
  virtual size_t argmax(const std::string& ctx, const std::vector<LinExpr>& values) = 0;

  // Sign of e over the true bids. Constant expressions short-circuit locally
  // and never reach the wire.
  int sign(const std::string& ctx, const LinExpr& e);

  bool is_ge(const std::string& ctx, const LinExpr& a, const LinExpr& b);

  // Openly evaluate e. Only used where the result is a public output of the
  // mechanism (final weights, payments).
  virtual long long reveal(const std::string& ctx, const LinExpr& e) = 0;

 protected:
  virtual int sign_impl(const std::string& ctx, const LinExpr& e) = 0;
};

// Direct evaluation against a scenario's bid column.
class PlainBackend final : public DecisionBackend {
 public:
  explicit PlainBackend(const Scenario& s) : s_(&s) {}

  std::vector<size_t> order_desc(const std::string& ctx,
                                 const std::vector<LinExpr>& values) override;
  std::vector<size_t> order_ratios(const std::string& ctx, const std::vector<LinExpr>& values,
                                   const std::vector<long long>& divisors) override;
  size_t argmax(const std::string& ctx, const std::vector<LinExpr>& values) override;
  long long reveal(const std::string& ctx, const LinExpr& e) override;

 protected:
  int sign_impl(const std::string& ctx, const LinExpr& e) override;

 private:
  long long eval(const LinExpr& e) const;
  const Scenario* s_;
};

}  // namespace pps
