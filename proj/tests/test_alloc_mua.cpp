#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>
#include <vector>

#include "pps/alloc_mua.hpp"

using namespace pps;

namespace {

struct Spot {
  double x;
  double y;
  long long bid;
  int demand;
};

Scenario mua_scenario(const std::vector<Spot>& spots, int channels, double side = 20) {
  Scenario s;
  s.model = ModelKind::MUA;
  s.channel_count = channels;
  s.width = s.height = side;
  int id = 1;
  for (const Spot& sp : spots) {
    Bidder b;
    b.id = id++;
    b.x = sp.x;
    b.y = sp.y;
    b.bid = sp.bid;
    b.demand = sp.demand;
    b.valuation = sp.bid;
    s.bidders.push_back(b);
  }
  s.validate();
  return s;
}

Scenario with_bid(Scenario s, int id, long long bid) {
  for (Bidder& b : s.bidders) {
    if (b.id == id) b.bid = bid;
  }
  return s;
}

std::vector<int> all_ids(const Scenario& s) {
  std::vector<int> ids;
  for (const Bidder& b : s.bidders) ids.push_back(b.id);
  return ids;
}

// Three heavy two-channel bidders crammed into one subcell.
Scenario trio_scenario(int channels) {
  return mua_scenario({{0.2, 0.2, 10, 2}, {0.3, 0.3, 9, 2}, {0.1, 0.1, 8, 2}}, channels);
}

// Two co-located partners in the type-1 unit square of cell 0 against a
// single rival in the adjacent type-2 square. The rival conflicts with
// bidder 2 but sits exactly one unit from bidder 1.
Scenario race_scenario() {
  return mua_scenario({{0.2, 0.2, 10, 2}, {0.3, 0.3, 9, 2}, {1.2, 0.2, 15, 1}}, 4, 2);
}

// Exact 0/1 knapsack optimum by dynamic programming over channel capacity.
long long knapsack_opt(const std::vector<std::pair<long long, int>>& items, int cap) {
  std::vector<long long> best(static_cast<size_t>(cap) + 1, 0);
  for (const auto& [value, size] : items) {
    if (size > cap) continue;
    for (int c = cap; c >= size; --c) {
      best[static_cast<size_t>(c)] =
          std::max(best[static_cast<size_t>(c)], best[static_cast<size_t>(c - size)] + value);
    }
  }
  return best[static_cast<size_t>(cap)];
}

}  // namespace

TEST_CASE("per-unit greedy keeps the heavy prefix") {
  Scenario s = trio_scenario(4);
  SubgridSolution sol = subgrid_greedy(s, all_ids(s), 4);
  CHECK(sol.sorted_order == std::vector<int>{1, 2, 3});
  REQUIRE(sol.critical_index.has_value());
  CHECK(*sol.critical_index == 2);
  CHECK(sol.winners == std::vector<int>{1, 2});
  CHECK(sol.weight == 19);
}

TEST_CASE("per-unit greedy can prefer the overflow bidder alone") {
  Scenario s = mua_scenario({{0.2, 0.2, 5, 1}, {0.3, 0.3, 9, 3}}, 3);
  SubgridSolution sol = subgrid_greedy(s, all_ids(s), 3);
  CHECK(sol.sorted_order == std::vector<int>{1, 2});
  REQUIRE(sol.critical_index.has_value());
  CHECK(*sol.critical_index == 1);
  CHECK(sol.winners == std::vector<int>{2});
  CHECK(sol.weight == 9);
}

TEST_CASE("per-unit order is by value density, not raw bid") {
  Scenario s = mua_scenario({{0.2, 0.2, 100, 3}, {0.3, 0.3, 2, 1}, {0.1, 0.1, 3, 2}}, 4);
  SubgridSolution sol = subgrid_greedy(s, all_ids(s), 4);
  CHECK(sol.sorted_order == std::vector<int>{1, 2, 3});
  CHECK(sol.winners == std::vector<int>{1, 2});
  CHECK(sol.weight == 102);
}

TEST_CASE("slack capacity seats the whole cohort") {
  Scenario s = trio_scenario(8);
  SubgridSolution sol = subgrid_greedy(s, all_ids(s), 8);
  CHECK(sol.sorted_order.empty());
  CHECK(!sol.critical_index.has_value());
  CHECK(sol.winners == std::vector<int>{1, 2, 3});
  CHECK(sol.weight == 27);
}

TEST_CASE("density ties and near-ties resolve exactly") {
  Scenario tie = mua_scenario({{0.2, 0.2, 4, 2}, {0.3, 0.3, 2, 1}}, 2);
  SubgridSolution sol = subgrid_greedy(tie, all_ids(tie), 2);
  CHECK(sol.sorted_order == std::vector<int>{1, 2});  // equal density, lower id first
  CHECK(sol.winners == std::vector<int>{1});

  // 1000000/3 and 666667/2 differ only in the second decimal place of the
  // density; the comparison must still be exact.
  Scenario close = mua_scenario({{0.2, 0.2, 1000000, 3}, {0.3, 0.3, 666667, 2}}, 4);
  SubgridSolution near = subgrid_greedy(close, all_ids(close), 4);
  CHECK(near.sorted_order == std::vector<int>{2, 1});
  CHECK(near.winners == std::vector<int>{1});
  CHECK(near.weight == 1000000);
}

TEST_CASE("demands above capacity drop out before the contest") {
  Scenario s = mua_scenario({{0.2, 0.2, 50, 9}, {0.3, 0.3, 10, 2}}, 8);
  SubgridSolution sol = subgrid_greedy(s, all_ids(s), 8);
  CHECK(sol.winners == std::vector<int>{2});
  CHECK(sol.weight == 10);
}

TEST_CASE("subgrid_greedy rejects mixed subcells") {
  Scenario s = mua_scenario({{0.2, 0.2, 5, 1}, {0.7, 0.2, 5, 1}}, 2);
  CHECK_THROWS_AS(subgrid_greedy(s, all_ids(s), 2), std::invalid_argument);
}

TEST_CASE("allocation runs the square and type races") {
  Scenario s = race_scenario();
  MuaResult r = mua_allocate(s);
  CHECK(r.picked_type == 1);
  CHECK(r.type_weights[0] == 19);
  CHECK(r.type_weights[1] == 15);
  CHECK(r.allocation.winners == std::set<int>{1, 2});
  CHECK(r.allocation.weight == 19);
  CHECK(r.allocation.channel_assignment.at(1) == std::set<int>{0, 1});
  CHECK(r.allocation.channel_assignment.at(2) == std::set<int>{2, 3});
  check_allocation(s, r.allocation);

  const SquareSolution* sq = r.square(0, 1);
  REQUIRE(sq != nullptr);
  CHECK(sq->picked_subcell == 1);
  CHECK(r.square(0, 2) != nullptr);
  CHECK(r.square(0, 3) == nullptr);
}

TEST_CASE("weight ties pick the lowest subcell and type") {
  Scenario type_tie = mua_scenario({{0.2, 0.2, 10, 1}, {1.2, 0.2, 10, 1}}, 2, 2);
  MuaResult r1 = mua_allocate(type_tie);
  CHECK(r1.picked_type == 1);
  CHECK(r1.allocation.winners == std::set<int>{1});

  Scenario sub_tie = mua_scenario({{0.2, 0.2, 10, 1}, {0.7, 0.2, 10, 1}}, 2, 2);
  MuaResult r2 = mua_allocate(sub_tie);
  REQUIRE(r2.square(0, 1) != nullptr);
  CHECK(r2.square(0, 1)->picked_subcell == 1);
  CHECK(r2.allocation.winners == std::set<int>{1});
}

TEST_CASE("a bidder with no rivals pays nothing") {
  // Subcell 4 of the type-4 unit square; with occupied-only races every
  // comparison is vacuous and the threshold is zero.
  Scenario s = mua_scenario({{1.7, 1.7, 10, 2}}, 4, 2);
  MuaResult r = mua_allocate(s);
  REQUIRE(r.allocation.winners.count(1) == 1);
  CHECK(mua_payment(s, r, 1) == 0);
  EmuaFill fill = emua_allocate(s);
  CHECK(fill.final_alloc.winners == std::set<int>{1});
  CHECK(emua_payment(s, fill, 1) == 0);
}

TEST_CASE("payments replay the type race") {
  Scenario s = race_scenario();
  MuaResult r = mua_allocate(s);
  // Bidder 1 must keep the type-1 weight at or above 15: 15 - 9 = 6.
  CHECK(mua_payment(s, r, 1) == 6);
  // Bidder 2 likewise: 15 - 10 = 5.
  CHECK(mua_payment(s, r, 2) == 5);
  CHECK_THROWS_AS(mua_payment(s, r, 3), std::invalid_argument);

  // The thresholds are sharp under a full re-run.
  CHECK(mua_allocate(with_bid(s, 1, 6)).allocation.winners.count(1) == 1);
  CHECK(mua_allocate(with_bid(s, 1, 5)).allocation.winners.count(1) == 0);
  CHECK(mua_allocate(with_bid(s, 2, 5)).allocation.winners.count(2) == 1);
  CHECK(mua_allocate(with_bid(s, 2, 4)).allocation.winners.count(2) == 0);
}

TEST_CASE("fill admits compatible losers and zeroes their thresholds") {
  Scenario s = race_scenario();
  EmuaFill fill = emua_allocate(s);
  CHECK(fill.base.allocation.winners == std::set<int>{1, 2});
  CHECK(fill.admitted_losers == std::vector<int>{3});
  CHECK(fill.final_alloc.winners == std::set<int>{1, 2, 3});
  CHECK(fill.final_alloc.weight == 34);
  check_allocation(s, fill.final_alloc);

  // With the fill stage everyone here can be seated no matter the bid.
  CHECK(emua_payment(s, fill, 1) == 0);
  CHECK(emua_payment(s, fill, 2) == 0);
  CHECK(emua_payment(s, fill, 3) == 0);
}

TEST_CASE("a saturated subcell blocks the fill") {
  Scenario s = mua_scenario({{0.2, 0.2, 10, 2}, {0.3, 0.3, 9, 2}, {0.1, 0.1, 1, 1}}, 2);
  EmuaFill fill = emua_allocate(s);
  CHECK(fill.base.allocation.winners == std::set<int>{1});
  CHECK(fill.admitted_losers.empty());
  CHECK(fill.final_alloc.winners == std::set<int>{1});
  check_allocation(s, fill.final_alloc);
  MuaResult r = mua_allocate(s);
  CHECK(mua_payment(s, r, 1) == 9);
  CHECK(emua_payment(s, fill, 1) == 9);
}

TEST_CASE("brute force oracle handles demand edges") {
  Scenario tight = mua_scenario({{0.2, 0.2, 7, 2}}, 1);
  CHECK(brute_force_mua(tight) == 0);
  Scenario fits = mua_scenario({{0.2, 0.2, 7, 2}}, 2);
  CHECK(brute_force_mua(fits) == 7);
  CHECK(brute_force_mua(trio_scenario(4)) == 19);
  CHECK(brute_force_mua(race_scenario()) == 34);
}

TEST_CASE("brute force adds up independent conflict groups") {
  Scenario s = mua_scenario({{0.2, 0.2, 5, 2},
                             {0.3, 0.3, 6, 2},
                             {10.2, 10.2, 7, 2},
                             {10.3, 10.3, 8, 2}},
                            2);
  CHECK(brute_force_mua(s) == 14);

  std::vector<Spot> many;
  for (int i = 0; i < 15; ++i) many.push_back({0.05 * i, 0.0, 1, 1});
  Scenario big = mua_scenario(many, 1);
  CHECK_THROWS_AS(brute_force_mua(big, 14), std::length_error);
}

TEST_CASE("greedy weight stays within half of the cohort optimum") {
  std::mt19937_64 rng(20260819);
  for (int iter = 0; iter < 200; ++iter) {
    int n = 1 + static_cast<int>(rng() % 10);
    int m = std::vector<int>{3, 5, 8}[rng() % 3];
    std::vector<Spot> spots;
    std::vector<std::pair<long long, int>> items;
    for (int i = 0; i < n; ++i) {
      double x = 0.05 * static_cast<double>(rng() % 10);
      double y = 0.05 * static_cast<double>(rng() % 10);
      long long bid = 1 + static_cast<long long>(rng() % 50);
      int demand = 1 + static_cast<int>(rng() % 4);
      spots.push_back({x, y, bid, demand});
      items.emplace_back(bid, demand);
    }
    Scenario s = mua_scenario(spots, m);
    SubgridSolution sol = subgrid_greedy(s, all_ids(s), m);
    long long opt = knapsack_opt(items, m);
    CHECK(2 * sol.weight >= opt);
    CHECK(sol.weight <= opt);
  }
}

TEST_CASE("allocation weight stays within factor 32 of optimal") {
  for (uint64_t seed = 1; seed <= 40; ++seed) {
    GenerateConfig cfg;
    cfg.n = 6 + static_cast<int>(seed % 7);
    cfg.width = cfg.height = 6;
    cfg.bid_min = 1;
    cfg.bid_max = 40;
    cfg.demand_min = 1;
    cfg.demand_max = 3;
    cfg.channel_count = 4;
    cfg.model = ModelKind::MUA;
    cfg.seed = seed;
    Scenario s = generate_scenario(cfg);

    MuaResult r = mua_allocate(s);
    check_allocation(s, r.allocation);
    long long opt = brute_force_mua(s);
    CHECK(32 * r.allocation.weight >= opt);
    CHECK(r.allocation.weight <= opt);

    EmuaFill fill = emua_allocate(s);
    check_allocation(s, fill.final_alloc);
    CHECK(fill.final_alloc.weight >= r.allocation.weight);
    CHECK(fill.final_alloc.weight <= opt);
  }
}

TEST_CASE("payments are exact win thresholds under re-runs") {
  for (uint64_t seed = 100; seed < 125; ++seed) {
    GenerateConfig cfg;
    cfg.n = 5 + static_cast<int>(seed % 6);
    cfg.width = cfg.height = 6;
    cfg.bid_min = 1;
    cfg.bid_max = 30;
    cfg.demand_min = 1;
    cfg.demand_max = 3;
    cfg.channel_count = 4;
    cfg.model = ModelKind::MUA;
    cfg.seed = seed;
    Scenario s = generate_scenario(cfg);

    MuaResult r = mua_allocate(s);
    for (int id : r.allocation.winners) {
      long long p = mua_payment(s, r, id);
      CHECK(p <= s.bidder(id).bid);
      CHECK(mua_allocate(with_bid(s, id, p)).allocation.winners.count(id) == 1);
      if (p > 0) {
        CHECK(mua_allocate(with_bid(s, id, p - 1)).allocation.winners.count(id) == 0);
      }
    }

    EmuaFill fill = emua_allocate(s);
    for (int id : fill.final_alloc.winners) {
      long long p = emua_payment(s, fill, id);
      CHECK(p <= s.bidder(id).bid);
      CHECK(emua_allocate(with_bid(s, id, p)).final_alloc.winners.count(id) == 1);
      if (p > 0) {
        CHECK(emua_allocate(with_bid(s, id, p - 1)).final_alloc.winners.count(id) == 0);
      }
      bool fill_no_pricier = r.allocation.winners.count(id) == 0 || p <= mua_payment(s, r, id);
      CHECK(fill_no_pricier);
    }
  }
}

TEST_CASE("raising a bid never evicts a winner") {
  for (uint64_t seed = 200; seed < 215; ++seed) {
    GenerateConfig cfg;
    cfg.n = 6;
    cfg.width = cfg.height = 4;
    cfg.bid_min = 1;
    cfg.bid_max = 25;
    cfg.demand_min = 1;
    cfg.demand_max = 3;
    cfg.channel_count = 4;
    cfg.model = ModelKind::MUA;
    cfg.seed = seed;
    Scenario s = generate_scenario(cfg);
    int id = 1 + static_cast<int>(seed % static_cast<uint64_t>(s.bidders.size()));

    bool won_mua = false;
    bool won_emua = false;
    for (long long t : {1, 3, 7, 12, 20, 35}) {
      Scenario mod = with_bid(s, id, t);
      bool w1 = mua_allocate(mod).allocation.winners.count(id) == 1;
      bool w2 = emua_allocate(mod).final_alloc.winners.count(id) == 1;
      CHECK(!(won_mua && !w1));
      CHECK(!(won_emua && !w2));
      won_mua = w1;
      won_emua = w2;
    }
  }
}
