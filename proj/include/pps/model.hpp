#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace pps {

enum class ModelKind { SUA, MUA };

std::string model_kind_name(ModelKind kind);
ModelKind model_kind_from_name(const std::string& name);

struct Bidder {
  int id = 0;
  double x = 0;
  double y = 0;
  long long bid = 0;       // b_i, non-negative integer
  int demand = 1;          // N_i, channels requested
  long long valuation = 0; // v_i, private; only the harness looks at it
};

struct Scenario {
  ModelKind model = ModelKind::SUA;
  int channel_count = 1;  // m
  double width = 0;
  double height = 0;
  std::vector<Bidder> bidders;

  const Bidder& bidder(int id) const;
  void validate() const;  // throws std::invalid_argument on broken invariants
};

// Interference is a unit-disk relation: two bidders conflict when their
// locations are strictly closer than 1 unit.
bool conflicts(const Bidder& a, const Bidder& b);

// Adjacency lists over bidder indices (not ids), symmetric.
std::vector<std::vector<int>> conflict_graph(const Scenario& s);

struct ShiftingSpec {
  int k = 2;
  int r = 0;
  int s = 0;

  bool operator<(const ShiftingSpec& o) const {
    if (r != o.r) return r < o.r;
    return s < o.s;
  }
  bool operator==(const ShiftingSpec& o) const { return k == o.k && r == o.r && s == o.s; }
};

struct GridIndex {
  long long gx = 0;
  long long gy = 0;
  auto operator<=>(const GridIndex&) const = default;
};

struct ShiftingPartition {
  std::map<GridIndex, std::vector<int>> grids;  // grid -> bidder ids, id-ascending
  std::vector<int> discarded;                   // bidder ids, id-ascending
};

// Removes every bidder whose radius-1/2 disk crosses a line x = r (mod k) or
// y = s (mod k), then buckets the survivors into the k-by-k squares between
// those lines. Disks exactly tangent to a line stay in play.
ShiftingPartition shifting_partition(const Scenario& s, const ShiftingSpec& spec);

// Smallest usable k for a target approximation slack: (1 - 1/k)^2 >= 1/(1+eps).
int k_from_epsilon(double epsilon);

struct SubgridAddress {
  long long cell = 0;  // row-major index of the 2x2 cell within the area
  int grid_type = 0;   // 1..4, which 1x1 square inside the cell
  int subcell = 0;     // 1..4, which half-unit square inside that
  auto operator<=>(const SubgridAddress&) const = default;
};

// Canonical labeling: grid_type = 2*(floor(y) mod 2) + (floor(x) mod 2) + 1,
// subcell the same pattern at half resolution. Everything in one subcell is
// mutually conflicting (diameter sqrt(2)/2 < 1).
SubgridAddress subgrid_address(double x, double y, double area_width);

struct Allocation {
  std::set<int> winners;
  std::map<int, std::set<int>> channel_assignment;  // winner id -> channel indices
  long long weight = 0;                             // sum of winner bids
};

// Checks the allocation invariants against a scenario: demands exactly met,
// conflicting winners on disjoint channels, weight consistent.
void check_allocation(const Scenario& s, const Allocation& a);

struct GenerateConfig {
  int n = 10;
  double width = 10;
  double height = 10;
  long long bid_min = 0;
  long long bid_max = 100;
  int demand_min = 1;
  int demand_max = 4;
  int channel_count = 1;
  ModelKind model = ModelKind::SUA;
  uint64_t seed = 1;
};

// Deterministic for a fixed seed. Locations are uniform over the area
// (snapped to 0.05 to keep geometric predicates away from float noise),
// bids and demands uniform over their ranges, valuations equal to bids.
Scenario generate_scenario(const GenerateConfig& cfg);

std::string scenario_to_json(const Scenario& s);
Scenario scenario_from_json(const std::string& text);

}  // namespace pps
