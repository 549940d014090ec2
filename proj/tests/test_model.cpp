#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pps/linexpr.hpp"
#include "pps/model.hpp"

using namespace pps;

namespace {
Bidder at(double x, double y, long long bid = 1, int id = 0) {
  Bidder b;
  b.id = id;
  b.x = x;
  b.y = y;
  b.bid = bid;
  b.valuation = bid;
  return b;
}
}  // namespace

TEST_CASE("conflict is strict unit distance") {
  CHECK(conflicts(at(0, 0), at(0.5, 0.8)));       // distance ~0.943
  CHECK_FALSE(conflicts(at(0, 0), at(1.0, 0)));   // tangent disks
  CHECK(conflicts(at(0, 0), at(0, 0)));           // co-located
  CHECK(conflicts(at(2, 3), at(2.6, 3.75)));      // distance ~0.96
  CHECK_FALSE(conflicts(at(0, 0), at(0.6, 0.8))); // distance exactly 1
}

TEST_CASE("shifting partition discards disks crossing the lines") {
  Scenario s;
  s.width = s.height = 12;
  s.bidders = {at(1.3, 5.0, 1, 0), at(3.0, 4.5, 1, 1), at(1.5, 4.0, 1, 2)};

  ShiftingPartition p = shifting_partition(s, {4, 1, 2});
  // (1.3, 5.0) sits 0.3 from the line x = 1, inside the cut strip.
  CHECK(p.discarded == std::vector<int>{0});
  // (3.0, 4.5) falls in the square [1,5) x [2,6).
  // (1.5, 4.0) touches the line x = 1 tangentially and stays in the same square.
  GridIndex g{0, 0};
  REQUIRE(p.grids.count(g) == 1);
  CHECK(p.grids.at(g) == std::vector<int>{1, 2});
}

TEST_CASE("shifting partition covers every bidder exactly once") {
  GenerateConfig cfg;
  cfg.n = 60;
  cfg.width = cfg.height = 20;
  cfg.seed = 42;
  Scenario s = generate_scenario(cfg);

  for (int k : {2, 3, 4}) {
    for (int r = 0; r < k; ++r) {
      for (int sh = 0; sh < k; ++sh) {
        ShiftingPartition p = shifting_partition(s, {k, r, sh});
        std::set<int> seen(p.discarded.begin(), p.discarded.end());
        size_t total = p.discarded.size();
        for (const auto& [g, ids] : p.grids) {
          total += ids.size();
          for (int id : ids) CHECK(seen.insert(id).second);
        }
        CHECK(total == s.bidders.size());

        // Bidders in different squares of one shifting can never conflict:
        // the discarded strips keep the squares a full unit apart.
        for (const auto& [ga, ia] : p.grids) {
          for (const auto& [gb, ib] : p.grids) {
            if (ga == gb) continue;
            for (int a : ia) {
              for (int b : ib) {
                CHECK_FALSE(conflicts(s.bidder(a), s.bidder(b)));
              }
            }
          }
        }
      }
    }
  }
}

TEST_CASE("shifting partition validates its spec") {
  Scenario s;
  s.width = s.height = 4;
  s.bidders = {at(1, 1)};
  CHECK_THROWS_AS(shifting_partition(s, {1, 0, 0}), std::invalid_argument);
  CHECK_THROWS_AS(shifting_partition(s, {4, 4, 0}), std::invalid_argument);
  CHECK_THROWS_AS(shifting_partition(s, {4, 0, -1}), std::invalid_argument);
}

TEST_CASE("subgrid addressing follows the canonical labeling") {
  SubgridAddress a = subgrid_address(0.2, 0.3, 10);
  CHECK(a.cell == 0);
  CHECK(a.grid_type == 1);
  CHECK(a.subcell == 1);

  // Same subcell implies conflict.
  SubgridAddress b1 = subgrid_address(1.7, 0.3, 10);
  SubgridAddress b2 = subgrid_address(1.9, 0.4, 10);
  CHECK(b1 == b2);
  CHECK(conflicts(at(1.7, 0.3), at(1.9, 0.4)));

  // Same grid type in neighboring 2x2 cells stays out of conflict range.
  SubgridAddress c1 = subgrid_address(0.9, 0.5, 10);
  SubgridAddress c2 = subgrid_address(2.1, 0.5, 10);
  CHECK(c1.grid_type == c2.grid_type);
  CHECK(c1.cell != c2.cell);
  CHECK_FALSE(conflicts(at(0.9, 0.5), at(2.1, 0.5)));

  SubgridAddress d = subgrid_address(2.1, 3.9, 10);
  CHECK(d.cell == 6);  // cell (1,1) in a 5-cell-wide row
  CHECK(d.grid_type == 3);
  CHECK(d.subcell == 3);
}

TEST_CASE("subgrid geometry properties hold on a lattice sweep") {
  std::vector<std::pair<double, double>> pts;
  for (int xi = 0; xi < 24; ++xi) {
    for (int yi = 0; yi < 24; ++yi) {
      pts.emplace_back(xi * 0.25, yi * 0.25);
    }
  }
  for (size_t i = 0; i < pts.size(); ++i) {
    SubgridAddress ai = subgrid_address(pts[i].first, pts[i].second, 6);
    for (size_t j = i + 1; j < pts.size(); ++j) {
      SubgridAddress aj = subgrid_address(pts[j].first, pts[j].second, 6);
      Bidder u = at(pts[i].first, pts[i].second);
      Bidder v = at(pts[j].first, pts[j].second);
      if (ai == aj) {
        CHECK(conflicts(u, v));  // subcell diameter sqrt(2)/2
      } else if (ai.grid_type == aj.grid_type && ai.cell != aj.cell) {
        CHECK_FALSE(conflicts(u, v));  // same-type squares are >= 1 apart
      }
    }
  }
}

TEST_CASE("k_from_epsilon returns the smallest usable k") {
  CHECK(k_from_epsilon(1.0) == 4);
  CHECK(k_from_epsilon(0.5) == 6);
  CHECK(k_from_epsilon(100.0) == 2);
  CHECK_THROWS_AS(k_from_epsilon(0.0), std::invalid_argument);
  CHECK_THROWS_AS(k_from_epsilon(-1.0), std::invalid_argument);

  for (double eps : {0.1, 0.25, 0.4, 0.75, 1.5, 3.0, 10.0}) {
    int k = k_from_epsilon(eps);
    auto holds = [&](int kk) {
      double f = (1.0 - 1.0 / kk);
      return f * f >= 1.0 / (1.0 + eps);
    };
    CHECK(holds(k));
    if (k > 2) CHECK_FALSE(holds(k - 1));
  }
}

TEST_CASE("scenario generation is deterministic and honors ranges") {
  GenerateConfig cfg;
  cfg.n = 50;
  cfg.width = cfg.height = 100;
  cfg.seed = 7;
  Scenario a = generate_scenario(cfg);
  Scenario b = generate_scenario(cfg);
  CHECK(scenario_to_json(a) == scenario_to_json(b));

  cfg.seed = 8;
  CHECK(scenario_to_json(generate_scenario(cfg)) != scenario_to_json(a));

  cfg.n = 300;
  cfg.model = ModelKind::MUA;
  cfg.channel_count = 8;
  Scenario c = generate_scenario(cfg);
  for (const Bidder& bd : c.bidders) {
    CHECK(bd.bid >= 0);
    CHECK(bd.bid <= 100);
    CHECK(bd.demand >= 1);
    CHECK(bd.demand <= 4);
    CHECK(bd.x >= 0);
    CHECK(bd.x < 100);
    CHECK(bd.y >= 0);
    CHECK(bd.y < 100);
  }

  for (const Bidder& bd : a.bidders) CHECK(bd.demand == 1);  // single-unit model
}

TEST_CASE("scenario generation rejects unusable configs") {
  GenerateConfig cfg;
  cfg.n = 0;
  CHECK_THROWS_AS(generate_scenario(cfg), std::invalid_argument);
  cfg.n = 5;
  cfg.bid_min = 10;
  cfg.bid_max = 5;
  CHECK_THROWS_AS(generate_scenario(cfg), std::invalid_argument);
  cfg.bid_max = 20;
  cfg.demand_min = 3;
  cfg.demand_max = 2;
  CHECK_THROWS_AS(generate_scenario(cfg), std::invalid_argument);
}

TEST_CASE("scenario json roundtrips bit-exactly") {
  GenerateConfig cfg;
  cfg.n = 25;
  cfg.width = 30;
  cfg.height = 15.5;
  cfg.model = ModelKind::MUA;
  cfg.channel_count = 6;
  cfg.seed = 99;
  Scenario s = generate_scenario(cfg);

  std::string text = scenario_to_json(s);
  Scenario back = scenario_from_json(text);
  CHECK(scenario_to_json(back) == text);
  CHECK(back.channel_count == 6);
  CHECK(back.model == ModelKind::MUA);

  CHECK_THROWS_AS(scenario_from_json("{\"model\":\"nope\",\"m\":1,\"area\":[1,1],\"bidders\":[]}"),
                  std::invalid_argument);
}

TEST_CASE("scenario validation catches broken invariants") {
  Scenario s;
  s.width = s.height = 10;
  s.bidders = {at(1, 1, 5, 0), at(2, 2, 3, 0)};
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);  // duplicate id

  s.bidders = {at(1, 1, 5, 0), at(11, 2, 3, 1)};
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);  // outside area

  s.bidders = {at(1, 1, 5, 0)};
  s.bidders[0].demand = 2;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);  // SUA needs unit demand

  s.model = ModelKind::MUA;
  s.channel_count = 4;
  CHECK_NOTHROW(s.validate());

  CHECK_THROWS_AS(s.bidder(42), std::out_of_range);
}

TEST_CASE("allocation checker enforces demands and channel disjointness") {
  Scenario s;
  s.model = ModelKind::MUA;
  s.channel_count = 3;
  s.width = s.height = 10;
  s.bidders = {at(1, 1, 5, 0), at(1.2, 1, 4, 1), at(5, 5, 2, 2)};
  s.bidders[0].demand = 2;
  s.bidders[1].demand = 1;
  s.bidders[2].demand = 1;

  Allocation a;
  a.winners = {0, 1, 2};
  a.channel_assignment = {{0, {0, 1}}, {1, {2}}, {2, {0}}};
  a.weight = 11;
  CHECK_NOTHROW(check_allocation(s, a));

  Allocation shared = a;
  shared.channel_assignment[1] = {1};  // bidders 0 and 1 conflict
  CHECK_THROWS_AS(check_allocation(s, shared), std::logic_error);

  Allocation wrong_weight = a;
  wrong_weight.weight = 10;
  CHECK_THROWS_AS(check_allocation(s, wrong_weight), std::logic_error);

  Allocation short_changed = a;
  short_changed.channel_assignment[0] = {0};
  CHECK_THROWS_AS(check_allocation(s, short_changed), std::logic_error);

  Allocation bad_channel = a;
  bad_channel.channel_assignment[2] = {5};
  CHECK_THROWS_AS(check_allocation(s, bad_channel), std::logic_error);
}

TEST_CASE("linear bid expressions evaluate and simplify") {
  LinExpr e = LinExpr::of_bid(3, 2);
  e.add_bid(7, 1).add_const(-5);
  auto bids = [](int id) -> long long { return id == 3 ? 10 : 4; };
  CHECK(e.eval(bids) == 19);
  CHECK(e.describe() == "2*b3 + b7 - 5");
  CHECK(e.depends_on(7));
  CHECK_FALSE(e.depends_on(4));

  LinExpr f = e - e;
  CHECK(f.is_constant());
  CHECK(f.eval(bids) == 0);
  CHECK(f.describe() == "0");

  LinExpr g = LinExpr::of_const(4) + LinExpr::of_bid(2);
  g.add_scaled(LinExpr::of_bid(2), -1);
  CHECK(g.is_constant());
  CHECK(g.constant == 4);
}
