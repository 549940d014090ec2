#include "pps/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "pps/alloc_mua.hpp"
#include "pps/bignum.hpp"
#include "pps/protocol.hpp"

namespace pps {
namespace {

uint64_t fnv1a_str(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

double ms_between(std::chrono::steady_clock::time_point a, std::chrono::steady_clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

void check_mechanism_name(const std::string& mech) {
  if (mech != "sua" && mech != "mua" && mech != "emua")
    throw std::invalid_argument("unknown mechanism: " + mech);
}

struct MechanismRun {
  Allocation alloc;
  std::map<int, long long> payments;
};

MechanismRun run_plain(const Scenario& s, const std::string& mech, int k, size_t cap) {
  MechanismRun out;
  if (mech == "sua") {
    SuaResult r = ptas_allocate(s, k, cap);
    out.alloc = r.allocation;
    for (int w : out.alloc.winners) out.payments[w] = critical_value_sua(s, k, w, r);
  } else if (mech == "mua") {
    MuaResult r = mua_allocate(s);
    out.alloc = r.allocation;
    for (int w : out.alloc.winners) out.payments[w] = mua_payment(s, r, w);
  } else {
    EmuaFill f = emua_allocate(s);
    out.alloc = f.final_alloc;
    for (int w : out.alloc.winners) out.payments[w] = emua_payment(s, f, w);
  }
  return out;
}

// Allocation-only rerun: does `id` win this variant of the scenario?
bool wins(const Scenario& s, const std::string& mech, int k, size_t cap, int id) {
  if (mech == "sua") return ptas_allocate(s, k, cap).allocation.winners.count(id) != 0;
  if (mech == "mua") return mua_allocate(s).allocation.winners.count(id) != 0;
  return emua_allocate(s).final_alloc.winners.count(id) != 0;
}

// Win flag plus critical payment for one bidder, as a misreport would see.
std::pair<bool, long long> outcome_for(const Scenario& s, const std::string& mech, int k,
                                       size_t cap, int id) {
  if (mech == "sua") {
    SuaResult r = ptas_allocate(s, k, cap);
    if (!r.allocation.winners.count(id)) return {false, 0};
    return {true, critical_value_sua(s, k, id, r)};
  }
  if (mech == "mua") {
    MuaResult r = mua_allocate(s);
    if (!r.allocation.winners.count(id)) return {false, 0};
    return {true, mua_payment(s, r, id)};
  }
  EmuaFill f = emua_allocate(s);
  if (!f.final_alloc.winners.count(id)) return {false, 0};
  return {true, emua_payment(s, f, id)};
}

Scenario with_bid(const Scenario& s, int id, long long bid) {
  Scenario out = s;
  for (Bidder& b : out.bidders) {
    if (b.id == id) {
      b.bid = bid;  // the report changes, the private valuation does not
      return out;
    }
  }
  throw std::invalid_argument("with_bid: unknown bidder");
}

long long oracle_weight(const Scenario& s, const std::string& mech) {
  if (mech == "sua") return brute_force_mwis(s).weight;
  return brute_force_mua(s);
}

Scenario fuzz_scenario(const std::string& mech, uint64_t seed) {
  GenerateConfig g;
  g.seed = seed;
  if (mech == "sua") {
    g.model = ModelKind::SUA;
    g.n = 6 + static_cast<int>(seed % 10);
    g.width = g.height = 5;
  } else {
    g.model = ModelKind::MUA;
    g.n = 5 + static_cast<int>(seed % 8);
    g.width = g.height = 4;
    g.channel_count = 2 + static_cast<int>(seed % 3);
    g.demand_min = 1;
    g.demand_max = 3;
  }
  return generate_scenario(g);
}

struct PropertyChecker {
  const VerifyOptions* opt;
  std::vector<PropertyViolation>* out;
  const KeyPair* keys = nullptr;  // set when encrypted spot checks are on

  void flag(uint64_t seed, std::string property, std::string detail) const {
    out->push_back(PropertyViolation{seed, std::move(property), std::move(detail)});
  }

  void check_scenario(const std::string& mech, uint64_t seed, const Scenario& s,
                      bool spot_check_encrypted) const {
    const int k = mech == "sua" ? 2 + 2 * static_cast<int>(seed % 3) : 2;
    const size_t cap = kDefaultSetCap;
    const bool pay_as_bid = opt->inject == "pay-as-bid";
    MechanismRun base = run_plain(s, mech, k, cap);

    // Payments are exact thresholds: win at p, lose at p - 1.
    int examined = 0;
    for (int w : base.alloc.winners) {
      if (++examined > 3) break;
      long long p = base.payments.at(w);
      if (p < 0 || p > s.bidder(w).bid) {
        flag(seed, "payment-range", "payment outside [0, bid] for bidder " + std::to_string(w));
        continue;
      }
      if (!wins(with_bid(s, w, p), mech, k, cap, w))
        flag(seed, "critical-value", "bidder " + std::to_string(w) + " loses at its threshold");
      if (p > 0 && wins(with_bid(s, w, p - 1), mech, k, cap, w))
        flag(seed, "critical-value", "bidder " + std::to_string(w) + " wins below its threshold");
    }

    // Raising a winning bid must never unseat the winner.
    if (!base.alloc.winners.empty()) {
      int w = *base.alloc.winners.begin();
      long long delta = 1 + static_cast<long long>(seed % 37);
      if (!wins(with_bid(s, w, s.bidder(w).bid + delta), mech, k, cap, w))
        flag(seed, "monotonicity", "bidder " + std::to_string(w) + " lost after raising its bid");
    }

    // Misreports never beat honesty. The pay-as-bid injection swaps the
    // critical payment for the reported bid, which is exactly the broken
    // rule a profitable misreport exposes.
    Rng rng(seed * 7919 + 11);
    for (int probe = 0; probe < 2 && !s.bidders.empty(); ++probe) {
      const Bidder& bd = s.bidders[rng.u64() % s.bidders.size()];
      long long v = bd.valuation;
      bool won = base.alloc.winners.count(bd.id) != 0;
      long long honest_pay = won ? (pay_as_bid ? bd.bid : base.payments.at(bd.id)) : 0;
      long long u0 = won ? v - honest_pay : 0;

      std::vector<long long> reports{v / 2, 2 * v + 3};
      if (won && base.payments.at(bd.id) < v) reports.push_back(base.payments.at(bd.id));
      for (long long r : reports) {
        if (r == bd.bid || r < 0) continue;
        Scenario mis = with_bid(s, bd.id, r);
        auto [mis_won, mis_pay] = outcome_for(mis, mech, k, cap, bd.id);
        long long u1 = mis_won ? v - (pay_as_bid ? r : mis_pay) : 0;
        if (u1 > u0)
          flag(seed, "strategyproofness",
               "bidder " + std::to_string(bd.id) + " gains by reporting " + std::to_string(r));
      }
    }

    // Approximation bounds against the exact oracles.
    const int n = static_cast<int>(s.bidders.size());
    if (mech == "sua" && n <= kSuaOracleCap) {
      long long opt_w = oracle_weight(s, mech);
      if (static_cast<long long>(k) * k * base.alloc.weight <
          static_cast<long long>(k - 1) * (k - 1) * opt_w)
        flag(seed, "approximation-bound", "weight below the (1-1/k)^2 guarantee");
    }
    if (mech != "sua" && n <= kMuaOracleCap) {
      long long opt_w = oracle_weight(s, mech);
      if (32 * base.alloc.weight < opt_w)
        flag(seed, "approximation-bound", "weight below the factor-32 guarantee");
    }
    if (mech == "emua" && base.alloc.weight < mua_allocate(s).allocation.weight)
      flag(seed, "fill-dominance", "leftover fill lost weight against the base run");

    // Sampled end-to-end check: encrypted run equals plaintext, clean audit.
    if (spot_check_encrypted && keys) {
      ProtocolConfig pc;
      pc.k = k;
      pc.set_cap = cap;
      pc.mask_seed = seed * 2 + 1;
      pc.perm_seed = seed * 3 + 5;
      ProtocolResult r = mech == "sua"   ? run_pps_sua(s, *keys, pc)
                         : mech == "mua" ? run_pps_mua(s, *keys, pc)
                                         : run_pps_emua(s, *keys, pc);
      if (r.allocation.winners != base.alloc.winners ||
          r.allocation.channel_assignment != base.alloc.channel_assignment ||
          r.allocation.weight != base.alloc.weight || r.payments.by_winner != base.payments)
        flag(seed, "equivalence", "encrypted outcome differs from plaintext");
      AuditReport audit = audit_privacy(r.transcript);
      for (const std::string& v : audit.violations) flag(seed, "audit", v);
    }
  }
};

std::vector<std::string> mechanisms_of(const std::string& name) {
  if (name == "all") return {"sua", "mua", "emua"};
  check_mechanism_name(name);
  return {name};
}

}  // namespace

unsigned default_key_bits() {
  const char* env = std::getenv("PPS_KEY_BITS");
  if (!env || !*env) return 512;
  char* end = nullptr;
  unsigned long v = std::strtoul(env, &end, 10);
  if (end == nullptr || *end != '\0' || v < 256 || v > 8192 || v % 16 != 0)
    throw std::invalid_argument("PPS_KEY_BITS must be a multiple of 16 in [256, 8192]");
  return static_cast<unsigned>(v);
}

std::string scenario_digest(const Scenario& s) { return hex64(fnv1a_str(scenario_to_json(s))); }

RunReport run_auction(const Scenario& s, const RunOptions& opt, const KeyPair* reuse_keys) {
  check_mechanism_name(opt.mechanism);
  const ModelKind want = opt.mechanism == "sua" ? ModelKind::SUA : ModelKind::MUA;
  if (s.model != want)
    throw std::invalid_argument("scenario model does not fit mechanism " + opt.mechanism);

  RunReport rep;
  rep.scenario_digest = scenario_digest(s);
  rep.mechanism = opt.mechanism == "sua"   ? "PPS-SUA"
                  : opt.mechanism == "mua" ? "PPS-MUA"
                                           : "PPS-EMUA";
  rep.n = static_cast<int>(s.bidders.size());
  rep.k = opt.mechanism == "sua" ? opt.k : 0;
  rep.channel_count = opt.mechanism == "sua" ? 0 : s.channel_count;
  rep.encrypted = opt.encrypted;

  auto plain_begin = std::chrono::steady_clock::now();
  MechanismRun plain = run_plain(s, opt.mechanism, opt.k, opt.set_cap);
  auto plain_end = std::chrono::steady_clock::now();

  if (opt.encrypted) {
    KeyPair fresh;
    const KeyPair* keys = reuse_keys;
    if (keys == nullptr) {
      Rng key_rng(opt.seed ^ 0x9e3779b97f4a7c15ull);
      fresh = keygen(opt.key_bits ? opt.key_bits : default_key_bits(), key_rng);
      keys = &fresh;
    }
    ProtocolConfig pc;
    pc.k = opt.k;
    pc.set_cap = opt.set_cap;
    pc.bid_ceiling = opt.bid_ceiling;
    pc.mask_seed = opt.seed * 2 + 1;
    pc.perm_seed = opt.seed * 3 + 5;

    auto enc_begin = std::chrono::steady_clock::now();
    ProtocolResult r = opt.mechanism == "sua"   ? run_pps_sua(s, *keys, pc)
                       : opt.mechanism == "mua" ? run_pps_mua(s, *keys, pc)
                                                : run_pps_emua(s, *keys, pc);
    auto enc_end = std::chrono::steady_clock::now();

    // Nothing is reported unless the protocol reproduced the plaintext
    // outcome exactly.
    if (r.allocation.winners != plain.alloc.winners ||
        r.allocation.channel_assignment != plain.alloc.channel_assignment ||
        r.allocation.weight != plain.alloc.weight || r.payments.by_winner != plain.payments)
      throw std::logic_error("encrypted run diverged from the plaintext mechanism");

    CommStats cs = comm_stats(r.transcript);
    rep.comm_total_bytes = cs.total_bytes;
    rep.comm_messages = cs.message_count;
    rep.auctioneer_decryptions = cs.auctioneer_decryptions;
    rep.agent_hom_ops = cs.agent_hom_ops;
    rep.auctioneer_time_ms = r.transcript.auctioneer_ms;
    rep.agent_time_ms = std::max(0.0, ms_between(enc_begin, enc_end) - r.transcript.auctioneer_ms);
  } else {
    rep.agent_time_ms = ms_between(plain_begin, plain_end);
  }

  rep.weight = plain.alloc.weight;
  for (const auto& [id, p] : plain.payments) rep.payments_total += p;

  if (opt.want_ratio) {
    const int cap = opt.mechanism == "sua" ? kSuaOracleCap : kMuaOracleCap;
    if (rep.n <= cap) {
      try {
        long long opt_w = oracle_weight(s, opt.mechanism);
        rep.social_efficiency_ratio =
            opt_w == 0 ? 1.0 : static_cast<double>(rep.weight) / static_cast<double>(opt_w);
      } catch (const std::length_error&) {
        // Oracle refused the instance; leave the ratio out.
      }
    }
  }
  return rep;
}

std::string RunReport::to_json() const {
  nlohmann::ordered_json j;
  j["scenario_digest"] = scenario_digest;
  j["mechanism"] = mechanism;
  j["n"] = n;
  if (k > 0) j["k"] = k;
  if (channel_count > 0) j["channel_count"] = channel_count;
  j["encrypted"] = encrypted;
  if (social_efficiency_ratio)
    j["social_efficiency_ratio"] = *social_efficiency_ratio;
  else
    j["social_efficiency_ratio"] = nullptr;
  j["agent_time_ms"] = agent_time_ms;
  j["auctioneer_time_ms"] = auctioneer_time_ms;
  j["comm"] = {{"total_bytes", comm_total_bytes},
               {"messages", comm_messages},
               {"auctioneer_decryptions", auctioneer_decryptions},
               {"agent_hom_ops", agent_hom_ops}};
  j["weight"] = weight;
  j["payments_total"] = payments_total;
  return j.dump(2) + "\n";
}

std::string RunReport::csv_header() {
  return "scenario_digest,mechanism,n,k,channel_count,encrypted,social_efficiency_ratio,"
         "agent_time_ms,auctioneer_time_ms,comm_total_bytes,comm_messages,"
         "auctioneer_decryptions,agent_hom_ops,weight,payments_total\n";
}

std::string RunReport::to_csv_row() const {
  std::ostringstream row;
  row << scenario_digest << ',' << mechanism << ',' << n << ',' << k << ',' << channel_count
      << ',' << (encrypted ? 1 : 0) << ',';
  char buf[40];
  if (social_efficiency_ratio) {
    std::snprintf(buf, sizeof buf, "%.6f", *social_efficiency_ratio);
    row << buf;
  }
  std::snprintf(buf, sizeof buf, "%.3f", agent_time_ms);
  row << ',' << buf;
  std::snprintf(buf, sizeof buf, "%.3f", auctioneer_time_ms);
  row << ',' << buf;
  row << ',' << comm_total_bytes << ',' << comm_messages << ',' << auctioneer_decryptions << ','
      << agent_hom_ops << ',' << weight << ',' << payments_total << '\n';
  return row.str();
}

std::string bench_csv(const BenchOptions& opt) {
  check_mechanism_name(opt.mechanism);
  if (opt.repetitions < 1) throw std::invalid_argument("bench: repetitions must be positive");
  const bool single_unit = opt.mechanism == "sua";
  const std::vector<int>& axis = single_unit ? opt.k_values : opt.m_values;
  if (opt.n_values.empty() || axis.empty())
    throw std::invalid_argument("bench: empty sweep axis");

  KeyPair keys;
  bool have_keys = false;
  if (opt.encrypted) {
    Rng key_rng(opt.seed_base ^ 0x517cc1b727220a95ull);
    keys = keygen(opt.key_bits ? opt.key_bits : default_key_bits(), key_rng);
    have_keys = true;
  }

  std::ostringstream csv;
  csv << "mechanism,n,k,m,reps,encrypted,avg_ratio,ratio_runs,avg_agent_ms,avg_auctioneer_ms,"
         "avg_comm_bytes,avg_messages,avg_weight,avg_payments_total\n";

  const int jobs = std::clamp(opt.jobs, 1, 16);
  for (int n : opt.n_values) {
    for (int ax : axis) {
      std::vector<RunReport> reports(opt.repetitions);
      std::vector<std::exception_ptr> errors(opt.repetitions);
      auto worker = [&](int first) {
        for (int rep = first; rep < opt.repetitions; rep += jobs) {
          try {
            GenerateConfig g;
            g.seed = opt.seed_base + static_cast<uint64_t>(rep);
            g.n = n;
            g.width = g.height = opt.area;
            if (single_unit) {
              g.model = ModelKind::SUA;
            } else {
              g.model = ModelKind::MUA;
              g.channel_count = ax;
              g.demand_max = std::min(4, ax);
            }
            Scenario s = generate_scenario(g);

            RunOptions ro;
            ro.mechanism = opt.mechanism;
            ro.k = single_unit ? ax : 2;
            ro.encrypted = opt.encrypted;
            ro.key_bits = opt.key_bits;
            ro.seed = opt.seed_base + static_cast<uint64_t>(rep);
            ro.bid_ceiling = opt.bid_ceiling;
            reports[rep] = run_auction(s, ro, have_keys ? &keys : nullptr);
          } catch (...) {
            errors[rep] = std::current_exception();
          }
        }
      };
      std::vector<std::thread> pool;
      for (int j = 0; j < jobs; ++j) pool.emplace_back(worker, j);
      for (std::thread& th : pool) th.join();
      for (const std::exception_ptr& e : errors)
        if (e) std::rethrow_exception(e);

      double ratio_sum = 0, agent_sum = 0, auct_sum = 0;
      double bytes_sum = 0, msg_sum = 0, weight_sum = 0, pay_sum = 0;
      int ratio_runs = 0;
      for (const RunReport& r : reports) {
        if (r.social_efficiency_ratio) {
          ratio_sum += *r.social_efficiency_ratio;
          ++ratio_runs;
        }
        agent_sum += r.agent_time_ms;
        auct_sum += r.auctioneer_time_ms;
        bytes_sum += static_cast<double>(r.comm_total_bytes);
        msg_sum += static_cast<double>(r.comm_messages);
        weight_sum += static_cast<double>(r.weight);
        pay_sum += static_cast<double>(r.payments_total);
      }
      const double reps = opt.repetitions;
      char buf[40];
      csv << opt.mechanism << ',' << n << ',' << (single_unit ? ax : 0) << ','
          << (single_unit ? 1 : ax) << ',' << opt.repetitions << ',' << (opt.encrypted ? 1 : 0)
          << ',';
      if (ratio_runs > 0) {
        std::snprintf(buf, sizeof buf, "%.6f", ratio_sum / ratio_runs);
        csv << buf;
      }
      csv << ',' << ratio_runs;
      std::snprintf(buf, sizeof buf, "%.3f", agent_sum / reps);
      csv << ',' << buf;
      std::snprintf(buf, sizeof buf, "%.3f", auct_sum / reps);
      csv << ',' << buf;
      std::snprintf(buf, sizeof buf, "%.1f", bytes_sum / reps);
      csv << ',' << buf;
      std::snprintf(buf, sizeof buf, "%.1f", msg_sum / reps);
      csv << ',' << buf;
      std::snprintf(buf, sizeof buf, "%.1f", weight_sum / reps);
      csv << ',' << buf;
      std::snprintf(buf, sizeof buf, "%.1f", pay_sum / reps);
      csv << ',' << buf << '\n';
    }
  }
  return csv.str();
}

std::vector<PropertyViolation> verify_properties(const VerifyOptions& opt) {
  std::vector<PropertyViolation> out;

  if (opt.inject == "mask-overflow") {
    // The stock mask widths cannot fit the smallest legal modulus; the
    // crypto layer must refuse rather than wrap around.
    Rng key_rng(1);
    KeyPair kp = keygen(256, key_rng);
    MaskConfig mc;
    mc.w_max = 1000000;
    mc.signed_values = true;
    try {
      Rng mask_rng(2);
      draw_mask(kp.pk, mc, mask_rng);
      out.push_back({0, "mask-overflow", "oversized mask accepted; overflow guard missing"});
    } catch (const std::invalid_argument& e) {
      out.push_back({0, "mask-overflow", std::string("overflow guard: ") + e.what()});
    }
    return out;
  }
  if (opt.inject != "none" && opt.inject != "pay-as-bid")
    throw std::invalid_argument("unknown injection: " + opt.inject);

  KeyPair keys;
  PropertyChecker checker{&opt, &out, nullptr};
  if (opt.equivalence_stride > 0 && opt.fuzz > 0) {
    Rng key_rng(opt.seed_base ^ 0xabcdef1234567890ull);
    keys = keygen(opt.key_bits ? opt.key_bits : default_key_bits(), key_rng);
    checker.keys = &keys;
  }

  for (const std::string& mech : mechanisms_of(opt.mechanism)) {
    for (int i = 0; i < opt.fuzz; ++i) {
      uint64_t seed = opt.seed_base + static_cast<uint64_t>(i);
      Scenario s = fuzz_scenario(mech, seed);
      bool spot = opt.equivalence_stride > 0 && i % opt.equivalence_stride == 0;
      checker.check_scenario(mech, seed, s, spot);
    }
  }
  return out;
}

std::vector<PropertyViolation> verify_scenario(const Scenario& s, const VerifyOptions& opt) {
  std::vector<PropertyViolation> out;
  std::vector<std::string> mechs;
  if (opt.mechanism == "all") {
    if (s.model == ModelKind::SUA)
      mechs = {"sua"};
    else
      mechs = {"mua", "emua"};
  } else {
    check_mechanism_name(opt.mechanism);
    mechs = {opt.mechanism};
  }

  KeyPair keys;
  PropertyChecker checker{&opt, &out, nullptr};
  if (opt.equivalence_stride > 0) {
    Rng key_rng(opt.seed_base ^ 0xabcdef1234567890ull);
    keys = keygen(opt.key_bits ? opt.key_bits : default_key_bits(), key_rng);
    checker.keys = &keys;
  }
  for (const std::string& mech : mechs)
    checker.check_scenario(mech, opt.seed_base, s, opt.equivalence_stride > 0);
  return out;
}

}  // namespace pps
