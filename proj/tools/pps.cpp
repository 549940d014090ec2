// Command line front end: generate scenarios, run single auctions,
// sweep benchmarks, and fuzz the mechanism properties.

#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pps/harness.hpp"
#include "pps/model.hpp"

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pps: strategyproof spectrum auctions over encrypted bids"};
  app.require_subcommand(1);
  int exit_code = 0;

  // generate: deterministic random scenario, written as JSON.
  auto* gen = app.add_subcommand("generate", "Write a random scenario as JSON");
  pps::GenerateConfig gcfg;
  std::string g_model = "sua";
  double g_area = 100;
  std::string g_out;
  gen->add_option("--model", g_model, "Auction model")
      ->check(CLI::IsMember({"sua", "mua"}));
  gen->add_option("--n", gcfg.n, "Number of bidders")->check(CLI::PositiveNumber);
  auto* g_area_opt = gen->add_option("--area", g_area, "Side length of a square area");
  auto* g_w_opt = gen->add_option("--width", gcfg.width, "Area width");
  auto* g_h_opt = gen->add_option("--height", gcfg.height, "Area height");
  g_area_opt->excludes(g_w_opt)->excludes(g_h_opt);
  gen->add_option("--seed", gcfg.seed, "Generator seed");
  gen->add_option("--channels", gcfg.channel_count, "Channels on offer (multi-unit only)")
      ->check(CLI::PositiveNumber);
  gen->add_option("--demand-max", gcfg.demand_max, "Largest channel demand (multi-unit only)")
      ->check(CLI::PositiveNumber);
  gen->add_option("--demand-min", gcfg.demand_min, "Smallest channel demand")
      ->check(CLI::PositiveNumber);
  gen->add_option("--bid-max", gcfg.bid_max, "Largest bid value");
  gen->add_option("--bid-min", gcfg.bid_min, "Smallest bid value");
  gen->add_option("-o,--out", g_out, "Output path (default stdout)");
  gen->callback([&] {
    if (g_model == "sua") {
      gcfg.model = pps::ModelKind::SUA;
      if (gen->count("--channels"))
        throw CLI::ValidationError("generate", "--channels only applies to --model mua");
      if (gen->count("--demand-max") || gen->count("--demand-min"))
        throw CLI::ValidationError("generate", "--demand-* only applies to --model mua");
    } else {
      gcfg.model = pps::ModelKind::MUA;
      if (!gen->count("--channels")) gcfg.channel_count = 4;
      if (!gen->count("--demand-max"))
        gcfg.demand_max = std::min(4, gcfg.channel_count);
    }
    if (gen->count("--area")) gcfg.width = gcfg.height = g_area;
    pps::Scenario s = pps::generate_scenario(gcfg);
    write_output(g_out, pps::scenario_to_json(s));
  });

  // run: one auction over a scenario file, report as JSON or CSV.
  auto* run = app.add_subcommand("run", "Run one auction and report the outcome");
  std::string r_path, r_mech, r_format = "json", r_out;
  double r_epsilon = 0;
  pps::RunOptions ropt;
  run->add_option("scenario", r_path, "Scenario JSON file")->required();
  run->add_option("--mechanism", r_mech, "sua, mua or emua (default: from the scenario)")
      ->check(CLI::IsMember({"sua", "mua", "emua"}));
  auto* r_k_opt = run->add_option("--k", ropt.k, "Shifting parameter (single-unit)")
                      ->check(CLI::Range(2, 64));
  run->add_option("--epsilon", r_epsilon, "Pick k from a target slack (1-1/k)^2 >= 1/(1+eps)")
      ->excludes(r_k_opt)
      ->check(CLI::PositiveNumber);
  run->add_flag("--encrypted", ropt.encrypted, "Run the two-party encrypted protocol");
  run->add_option("--key-bits", ropt.key_bits, "Paillier modulus bits (default PPS_KEY_BITS or 512)");
  run->add_option("--seed", ropt.seed, "Seed for masks, pseudonyms and key generation");
  run->add_option("--bid-ceiling", ropt.bid_ceiling, "Public cap the protocol assumes on bids");
  run->add_flag("!--no-ratio", ropt.want_ratio, "Skip the exact-optimum comparison");
  run->add_option("--format", r_format, "Report format")->check(CLI::IsMember({"json", "csv"}));
  run->add_option("-o,--out", r_out, "Output path (default stdout)");
  run->callback([&] {
    pps::Scenario s = pps::scenario_from_json(read_file(r_path));
    ropt.mechanism = r_mech.empty() ? (s.model == pps::ModelKind::SUA ? "sua" : "mua") : r_mech;
    if (run->count("--epsilon")) ropt.k = pps::k_from_epsilon(r_epsilon);
    pps::RunReport rep = pps::run_auction(s, ropt);
    if (r_format == "csv")
      write_output(r_out, pps::RunReport::csv_header() + rep.to_csv_row());
    else
      write_output(r_out, rep.to_json());
  });

  // bench: sweep scenario sizes, average repetitions, emit CSV.
  auto* bench = app.add_subcommand("bench", "Sweep sizes and emit averaged CSV rows");
  pps::BenchOptions bopt;
  std::string b_out;
  bool b_plain = false;
  bench->add_option("--mechanism", bopt.mechanism, "sua, mua or emua")
      ->required()
      ->check(CLI::IsMember({"sua", "mua", "emua"}));
  bench->add_option("--n", bopt.n_values, "Bidder counts to sweep")->delimiter(',');
  bench->add_option("--k", bopt.k_values, "Shifting parameters to sweep (single-unit)")
      ->delimiter(',');
  bench->add_option("--m", bopt.m_values, "Channel counts to sweep (multi-unit)")->delimiter(',');
  bench->add_option("--reps", bopt.repetitions, "Scenarios averaged per cell")
      ->check(CLI::PositiveNumber);
  bench->add_flag("--plain", b_plain, "Time the plaintext mechanism instead of the protocol");
  bench->add_option("--key-bits", bopt.key_bits, "Paillier modulus bits");
  bench->add_option("--seed", bopt.seed_base, "First scenario seed");
  bench->add_option("--jobs", bopt.jobs, "Worker threads across repetitions")
      ->check(CLI::Range(1, 16));
  bench->add_option("--area", bopt.area, "Side length of the square area");
  bench->add_option("-o,--out", b_out, "Output path (default stdout)");
  bench->callback([&] {
    bopt.encrypted = !b_plain;
    write_output(b_out, pps::bench_csv(bopt));
  });

  // verify: property fuzzing, nonzero exit when anything is violated.
  auto* verify = app.add_subcommand("verify", "Check mechanism properties, exit nonzero on a violation");
  std::string v_path;
  pps::VerifyOptions vopt;
  verify->add_option("scenario", v_path, "Scenario JSON file (default: fuzz fresh ones)");
  verify->add_option("--mechanism", vopt.mechanism, "sua, mua, emua or all")
      ->check(CLI::IsMember({"sua", "mua", "emua", "all"}));
  verify->add_option("--fuzz", vopt.fuzz, "Scenarios per mechanism")->check(CLI::PositiveNumber);
  verify->add_option("--seed", vopt.seed_base, "First fuzz seed");
  verify->add_option("--inject", vopt.inject, "Plant a known fault to prove detection")
      ->check(CLI::IsMember({"none", "pay-as-bid", "mask-overflow"}));
  verify->add_option("--key-bits", vopt.key_bits, "Paillier modulus bits for spot checks");
  verify->add_option("--stride", vopt.equivalence_stride,
                     "Encrypted spot check every Nth seed (0 disables)");
  verify->callback([&] {
    std::vector<pps::PropertyViolation> bad;
    if (v_path.empty()) {
      bad = pps::verify_properties(vopt);
    } else {
      pps::Scenario s = pps::scenario_from_json(read_file(v_path));
      bad = pps::verify_scenario(s, vopt);
    }
    if (bad.empty()) {
      std::cout << "ok: all properties hold\n";
      return;
    }
    for (const pps::PropertyViolation& v : bad)
      std::cout << "seed " << v.seed << " " << v.property << ": " << v.detail << "\n";
    std::cout << bad.size() << " violation(s)\n";
    exit_code = 1;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "pps: " << e.what() << "\n";
    return 1;
  }
  return exit_code;
}
