#include "pps/model.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <stdexcept>

namespace pps {

namespace {

// Geometric predicates run on floats but every meaningful boundary in this
// domain (distance 1, line offset 1/2) is decided with a small slack so that
// representation noise cannot flip a tangent case.
constexpr double kGeomEps = 1e-9;

long long uniform_in(std::mt19937_64& rng, long long lo, long long hi) {
  return lo + static_cast<long long>(rng() % static_cast<uint64_t>(hi - lo + 1));
}

// Offset of x from the nearest line in the family {v : v = anchor mod period}.
double line_distance(double x, int anchor, int period) {
  double t = std::fmod(x - anchor, static_cast<double>(period));
  if (t < 0) t += period;
  return std::min(t, period - t);
}

}  // namespace

std::string model_kind_name(ModelKind kind) {
  return kind == ModelKind::SUA ? "sua" : "mua";
}

ModelKind model_kind_from_name(const std::string& name) {
  if (name == "sua") return ModelKind::SUA;
  if (name == "mua") return ModelKind::MUA;
  throw std::invalid_argument("unknown model kind: " + name);
}

const Bidder& Scenario::bidder(int id) const {
  for (const Bidder& b : bidders) {
    if (b.id == id) return b;
  }
  throw std::out_of_range("no bidder with id " + std::to_string(id));
}

void Scenario::validate() const {
  if (width <= 0 || height <= 0) throw std::invalid_argument("scenario: empty area");
  if (channel_count < 1) throw std::invalid_argument("scenario: channel_count must be >= 1");
  if (model == ModelKind::SUA && channel_count != 1) {
    throw std::invalid_argument("scenario: single-unit model requires exactly one channel");
  }
  std::set<int> seen;
  for (const Bidder& b : bidders) {
    if (!seen.insert(b.id).second) {
      throw std::invalid_argument("scenario: duplicate bidder id " + std::to_string(b.id));
    }
    if (b.x < 0 || b.x > width || b.y < 0 || b.y > height) {
      throw std::invalid_argument("scenario: bidder " + std::to_string(b.id) + " outside area");
    }
    if (b.bid < 0) throw std::invalid_argument("scenario: negative bid");
    if (b.demand < 1) throw std::invalid_argument("scenario: demand must be >= 1");
    if (model == ModelKind::SUA && b.demand != 1) {
      throw std::invalid_argument("scenario: single-unit model requires unit demands");
    }
  }
}

bool conflicts(const Bidder& a, const Bidder& b) {
  double dx = a.x - b.x;
  double dy = a.y - b.y;
  return dx * dx + dy * dy < 1.0 - kGeomEps;
}

std::vector<std::vector<int>> conflict_graph(const Scenario& s) {
  size_t n = s.bidders.size();
  std::vector<std::vector<int>> adj(n);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      if (conflicts(s.bidders[i], s.bidders[j])) {
        adj[i].push_back(static_cast<int>(j));
        adj[j].push_back(static_cast<int>(i));
      }
    }
  }
  return adj;
}

ShiftingPartition shifting_partition(const Scenario& s, const ShiftingSpec& spec) {
  if (spec.k < 2) throw std::invalid_argument("shifting_partition: k must be >= 2");
  if (spec.r < 0 || spec.r >= spec.k || spec.s < 0 || spec.s >= spec.k) {
    throw std::invalid_argument("shifting_partition: shift outside [0,k)");
  }
  ShiftingPartition out;
  for (const Bidder& b : s.bidders) {
    bool cut = line_distance(b.x, spec.r, spec.k) < 0.5 - kGeomEps ||
               line_distance(b.y, spec.s, spec.k) < 0.5 - kGeomEps;
    if (cut) {
      out.discarded.push_back(b.id);
      continue;
    }
    GridIndex g{static_cast<long long>(std::floor((b.x - spec.r) / spec.k)),
                static_cast<long long>(std::floor((b.y - spec.s) / spec.k))};
    out.grids[g].push_back(b.id);
  }
  // Bidder order within buckets follows the scenario; normalize to id order.
  for (auto& [g, ids] : out.grids) std::sort(ids.begin(), ids.end());
  std::sort(out.discarded.begin(), out.discarded.end());
  return out;
}

int k_from_epsilon(double epsilon) {
  if (!(epsilon > 0)) throw std::invalid_argument("k_from_epsilon: epsilon must be positive");
  double v = (1 + epsilon + std::sqrt(1 + epsilon)) / epsilon;
  return std::max(2, static_cast<int>(std::ceil(v)));
}

SubgridAddress subgrid_address(double x, double y, double area_width) {
  SubgridAddress a;
  long long cells_per_row = std::max(1LL, static_cast<long long>(std::ceil(area_width / 2.0)));
  long long cx = std::min(static_cast<long long>(std::floor(x / 2.0)), cells_per_row - 1);
  long long cy = static_cast<long long>(std::floor(y / 2.0));
  a.cell = cy * cells_per_row + cx;

  auto parity = [](double v) { return static_cast<int>(std::floor(v)) & 1; };
  a.grid_type = 2 * parity(y) + parity(x) + 1;
  a.subcell = 2 * parity(2 * y) + parity(2 * x) + 1;
  return a;
}

void check_allocation(const Scenario& s, const Allocation& a) {
  long long weight = 0;
  for (int id : a.winners) {
    const Bidder& b = s.bidder(id);
    weight += b.bid;
    auto it = a.channel_assignment.find(id);
    size_t have = it == a.channel_assignment.end() ? 0 : it->second.size();
    if (have != static_cast<size_t>(b.demand)) {
      throw std::logic_error("allocation: winner " + std::to_string(id) +
                             " holds " + std::to_string(have) + " channels, demand " +
                             std::to_string(b.demand));
    }
    for (int ch : it->second) {
      if (ch < 0 || ch >= s.channel_count) {
        throw std::logic_error("allocation: channel index out of range");
      }
    }
  }
  if (weight != a.weight) throw std::logic_error("allocation: weight mismatch");

  for (int i : a.winners) {
    for (int j : a.winners) {
      if (i >= j || !conflicts(s.bidder(i), s.bidder(j))) continue;
      const std::set<int>& ci = a.channel_assignment.at(i);
      const std::set<int>& cj = a.channel_assignment.at(j);
      for (int ch : ci) {
        if (cj.count(ch)) {
          throw std::logic_error("allocation: conflicting winners " + std::to_string(i) +
                                 "," + std::to_string(j) + " share channel " +
                                 std::to_string(ch));
        }
      }
    }
  }
}

Scenario generate_scenario(const GenerateConfig& cfg) {
  if (cfg.n < 1) throw std::invalid_argument("generate_scenario: n must be >= 1");
  if (cfg.bid_max < cfg.bid_min || cfg.demand_max < cfg.demand_min || cfg.demand_min < 1) {
    throw std::invalid_argument("generate_scenario: empty range");
  }
  if (cfg.width < 1 || cfg.height < 1) {
    throw std::invalid_argument("generate_scenario: area too small");
  }

  Scenario s;
  s.model = cfg.model;
  s.channel_count = cfg.model == ModelKind::SUA ? 1 : cfg.channel_count;
  s.width = cfg.width;
  s.height = cfg.height;

  std::mt19937_64 rng(cfg.seed);
  // Locations land on a 0.05 lattice so distance and line comparisons stay
  // clear of the strict boundaries at 1 and 1/2.
  long long steps_x = static_cast<long long>(std::llround(cfg.width / 0.05));
  long long steps_y = static_cast<long long>(std::llround(cfg.height / 0.05));
  for (int i = 0; i < cfg.n; ++i) {
    Bidder b;
    b.id = i;
    b.x = 0.05 * uniform_in(rng, 0, steps_x - 1);
    b.y = 0.05 * uniform_in(rng, 0, steps_y - 1);
    b.bid = uniform_in(rng, cfg.bid_min, cfg.bid_max);
    b.demand = cfg.model == ModelKind::SUA
                   ? 1
                   : static_cast<int>(uniform_in(rng, cfg.demand_min, cfg.demand_max));
    b.valuation = b.bid;
    s.bidders.push_back(b);
  }
  s.validate();
  return s;
}

std::string scenario_to_json(const Scenario& s) {
  nlohmann::ordered_json j;
  j["model"] = model_kind_name(s.model);
  j["m"] = s.channel_count;
  j["area"] = {s.width, s.height};
  j["bidders"] = nlohmann::ordered_json::array();
  for (const Bidder& b : s.bidders) {
    j["bidders"].push_back({{"id", b.id},
                            {"x", b.x},
                            {"y", b.y},
                            {"bid", b.bid},
                            {"demand", b.demand},
                            {"valuation", b.valuation}});
  }
  return j.dump(2);
}

Scenario scenario_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  Scenario s;
  s.model = model_kind_from_name(j.at("model").get<std::string>());
  s.channel_count = j.at("m").get<int>();
  s.width = j.at("area").at(0).get<double>();
  s.height = j.at("area").at(1).get<double>();
  for (const auto& jb : j.at("bidders")) {
    Bidder b;
    b.id = jb.at("id").get<int>();
    b.x = jb.at("x").get<double>();
    b.y = jb.at("y").get<double>();
    b.bid = jb.at("bid").get<long long>();
    b.demand = jb.at("demand").get<int>();
    b.valuation = jb.value("valuation", b.bid);
    s.bidders.push_back(b);
  }
  s.validate();
  return s;
}

}  // namespace pps
