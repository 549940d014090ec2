#pragma once

#include <cstddef>
#include <vector>

#include "pps/backend.hpp"
#include "pps/model.hpp"

namespace pps {

// Depth guard for the per-grid enumeration, which is exponential in the
// worst case even though typical grids hold a handful of disks.
inline constexpr size_t kDefaultSetCap = 50000;

struct CandidateSet {
  std::vector<int> ids;  // ascending bidder ids
  long long weight = 0;
};

// One grid of one shifting: every maximal conflict-free bidder set, ranked
// by weight (ties to the lexicographically smallest id set). The payment
// rule walks the ranked list, so the full list is kept, not just the top.
struct GridSolution {
  GridIndex grid;
  std::vector<CandidateSet> candidates;
  size_t chosen_index = 0;  // rank-1 after sorting

  bool empty() const { return candidates.empty(); }
  const CandidateSet& chosen() const { return candidates.at(chosen_index); }
};

struct ShiftingSolution {
  ShiftingSpec spec;
  std::vector<GridSolution> grids;
  long long weight = 0;  // sum of chosen-set weights

  // Index of the grid whose chosen set contains the bidder, or -1.
  int grid_of(int bidder_id) const;
};

struct SuaResult {
  Allocation allocation;
  ShiftingSpec best_spec;
  size_t best_index = 0;               // into all_solutions
  std::vector<ShiftingSolution> all_solutions;
};

// All maximal independent sets of the conflict graph restricted to the given
// bidders. Throws std::length_error past the cap and for more than 64
// bidders in one grid.
std::vector<CandidateSet> enumerate_maximal_independent_sets(
    const Scenario& s, const std::vector<int>& ids, size_t cap = kDefaultSetCap);

GridSolution grid_optimum(const Scenario& s, GridIndex grid, const std::vector<int>& ids,
                          size_t cap = kDefaultSetCap);

// The shifting construction: evaluate every (r,s) offset, solve each grid
// exactly, keep the heaviest shifting. Ties fall to the smaller (r,s).
SuaResult ptas_allocate(const Scenario& s, int k, size_t cap = kDefaultSetCap);

// Same construction with every bid-dependent choice routed through the
// backend; candidate weights and shifting weights in the result stay zero
// because only the backend may look at bids.
SuaResult ptas_allocate_core(const Scenario& s, int k, size_t cap, DecisionBackend& backend);

// Exact maximum-weight independent set by branch and bound; the ground truth
// the approximation bound is measured against.
Allocation brute_force_mwis(const Scenario& s, size_t max_n = 22);

// The lower-bound terms whose maximum (floored at zero) is the winner's
// threshold bid. Each term is built purely from the cached id structure and
// never mentions the winner's own bid, so it can be evaluated on encrypted
// bids as well as in the clear.
std::vector<LinExpr> sua_payment_terms(int winner_id, const SuaResult& cached);

// Lowest integer bid at which winner_id still wins under ptas_allocate with
// everyone else fixed, computed from the cached solution structure.
long long critical_value_sua(const Scenario& s, int k, int winner_id, const SuaResult& cached);

}  // namespace pps
