#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pps/alloc_sua.hpp"
#include "pps/model.hpp"
#include "pps/paillier.hpp"

namespace pps {

// Above these sizes the exact optimum is not computed, and no efficiency
// ratio is reported rather than estimating one without ground truth.
inline constexpr int kSuaOracleCap = 22;
inline constexpr int kMuaOracleCap = 14;

// Key size for encrypted runs when the caller does not pick one: the
// PPS_KEY_BITS environment variable, or 512.
unsigned default_key_bits();

// Fingerprint of the canonical scenario JSON; ties every report back to its
// exact input.
std::string scenario_digest(const Scenario& s);

struct RunOptions {
  std::string mechanism = "sua";  // sua | mua | emua
  int k = 2;                      // shifting parameter, single-unit only
  size_t set_cap = kDefaultSetCap;
  bool encrypted = false;
  unsigned key_bits = 0;  // 0 = default_key_bits()
  uint64_t seed = 1;      // drives key, mask and pseudonym randomness
  bool want_ratio = true;
  long long bid_ceiling = 1000000;
};

struct RunReport {
  std::string scenario_digest;
  std::string mechanism;  // PPS-SUA | PPS-MUA | PPS-EMUA
  int n = 0;
  int k = 0;              // single-unit runs
  int channel_count = 0;  // multi-unit runs
  bool encrypted = false;
  std::optional<double> social_efficiency_ratio;  // only under the oracle cap
  double agent_time_ms = 0;
  double auctioneer_time_ms = 0;
  size_t comm_total_bytes = 0;
  size_t comm_messages = 0;
  int auctioneer_decryptions = 0;
  int agent_hom_ops = 0;
  long long weight = 0;
  long long payments_total = 0;

  std::string to_json() const;
  static std::string csv_header();
  std::string to_csv_row() const;
};

// One full auction. Encrypted runs first recompute the plaintext outcome and
// assert the protocol announced exactly the same winners, channels and
// payments; only then is anything reported. reuse_keys skips per-run key
// generation inside sweeps.
RunReport run_auction(const Scenario& s, const RunOptions& opt,
                      const KeyPair* reuse_keys = nullptr);

struct BenchOptions {
  std::string mechanism = "sua";
  std::vector<int> n_values{8, 12, 16};
  std::vector<int> k_values{2, 4};  // single-unit axis
  std::vector<int> m_values{4};     // multi-unit axis
  int repetitions = 10;
  bool encrypted = true;
  unsigned key_bits = 0;
  uint64_t seed_base = 1;
  double area = 10;  // square side for generated scenarios
  int jobs = 4;
  long long bid_ceiling = 1000000;
};

// Averaged metrics per (n, k) or (n, m) point, one CSV row each, fixed
// schema either way. Repetitions run in parallel; the output is
// deterministic for fixed options.
std::string bench_csv(const BenchOptions& opt);

struct PropertyViolation {
  uint64_t seed = 0;
  std::string property;
  std::string detail;
};

struct VerifyOptions {
  std::string mechanism = "all";  // sua | mua | emua | all
  int fuzz = 100;
  uint64_t seed_base = 1;
  std::string inject = "none";  // none | pay-as-bid | mask-overflow
  unsigned key_bits = 0;
  int equivalence_stride = 10;  // every Nth seed also runs encrypted
};

// Property fuzzing: critical-value payments hold up as exact thresholds,
// raising a winner's bid never unseats it, misreports never beat honesty,
// the approximation bounds hold against the oracles, and sampled encrypted
// runs match plaintext with a clean privacy audit. The inject options
// deliberately break a rule to prove the checks can fail.
std::vector<PropertyViolation> verify_properties(const VerifyOptions& opt);

// The same property battery on one concrete scenario.
std::vector<PropertyViolation> verify_scenario(const Scenario& s, const VerifyOptions& opt);

}  // namespace pps
