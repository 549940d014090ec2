#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <vector>

#include "pps/backend.hpp"
#include "pps/linexpr.hpp"
#include "pps/model.hpp"

namespace pps {

// Outcome of the per-unit greedy on one subcell. Everyone in a subcell
// conflicts with everyone else there, so winners share nothing and the
// contested case reduces to a prefix-versus-critical-bidder rule.
struct SubgridSolution {
  SubgridAddress address;
  std::vector<int> cohort;    // feasible members (demand <= m), id-ascending
  std::vector<int> winners;   // greedy prefix, the critical bidder alone, or everyone
  long long weight = 0;       // winner bid sum; filled on plaintext runs
  std::vector<int> sorted_order;  // contested only: cohort by bid/demand desc, id asc
  std::optional<size_t> critical_index;  // contested only: first overflow position
  LinExpr weight_expr;        // winner bid sum, symbolically
};

// One 1x1 square of one grid type: the four half-unit subcells compete and
// exactly one survives.
struct SquareSolution {
  long long cell = 0;
  int grid_type = 1;
  std::array<SubgridSolution, 4> subcells;  // indexed subcell-1
  std::array<bool, 4> occupied{};           // subcell holds a feasible bidder
  int picked_subcell = 0;                   // 1..4
  LinExpr weight_expr;                      // picked subcell's winner sum
};

struct MuaResult {
  Allocation allocation;
  int picked_type = 1;                       // 1..4
  std::array<LinExpr, 4> type_weight_exprs;  // per grid type
  std::array<long long, 4> type_weights{};   // filled on plaintext runs
  std::array<bool, 4> type_occupied{};
  std::vector<SquareSolution> squares;       // (cell, grid_type) ascending

  const SquareSolution* square(long long cell, int grid_type) const;
};

// Per-unit greedy for one subcell population; ids must share a subcell.
// Bidders demanding more than m channels can never be satisfied and are
// dropped before anything else happens.
SubgridSolution subgrid_greedy(const Scenario& s, const std::vector<int>& ids, int m);

// Layered allocation: greedy per subcell, heaviest subcell per square
// (lowest subcell index on ties), heaviest grid type overall (lowest type on
// ties). Winners get consecutive channel blocks in ascending id order.
MuaResult mua_allocate(const Scenario& s);

// Same mechanism with every bid-dependent decision routed through a backend;
// numeric weight fields stay unset unless the backend can evaluate openly.
MuaResult mua_allocate_core(const Scenario& s, DecisionBackend& backend);

// Exact optimum over all feasible channel assignments, by branch and bound
// over the conflict components. Ground truth for the approximation bound.
long long brute_force_mua(const Scenario& s, std::size_t max_n = 14);

// Lowest integer bid at which the winner still wins, with everyone else
// fixed. Resolved by monotone bisection; each probe replays the winner's
// subcell contest and the square/type races at the probe bid.
long long mua_payment(const Scenario& s, const MuaResult& cache, int winner_id);

// Bisection over [0, bid_ceiling] with decisions routed through a backend.
long long mua_critical(const Scenario& s, const MuaResult& cache, int winner_id,
                       DecisionBackend& backend, long long bid_ceiling);

// Leftover-channel fill: losers reapply in bid order (descending, id
// ascending on ties) and are admitted when enough channels remain free
// among the winners they conflict with.
struct EmuaFill {
  MuaResult base;
  std::vector<int> admitted_losers;  // in admission order
  Allocation final_alloc;
};

EmuaFill emua_allocate(const Scenario& s);
EmuaFill emua_allocate_core(const Scenario& s, DecisionBackend& backend);

// Critical value against the filled allocation: bisection where each probe
// replays the base layers around the bidder and then the whole fill pass.
long long emua_payment(const Scenario& s, const EmuaFill& fill, int winner_id);

long long emua_critical(const Scenario& s, const EmuaFill& fill, int winner_id,
                        DecisionBackend& backend, long long bid_ceiling);

}  // namespace pps
