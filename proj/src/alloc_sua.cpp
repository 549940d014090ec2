#include "pps/alloc_sua.hpp"

#include <algorithm>
#include <bit>
#include <stdexcept>

namespace pps {

namespace {

bool lex_less(const std::vector<int>& a, const std::vector<int>& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

// Rank order for candidate sets: heavier first, then smaller id sequence.
bool ranked_before(const CandidateSet& a, const CandidateSet& b) {
  if (a.weight != b.weight) return a.weight > b.weight;
  return lex_less(a.ids, b.ids);
}

bool set_contains(const CandidateSet& c, int id) {
  return std::binary_search(c.ids.begin(), c.ids.end(), id);
}

// Maximal cliques of the compatibility graph are exactly the maximal
// independent sets of the conflict graph.
class CliqueCollector {
 public:
  CliqueCollector(const std::vector<uint64_t>& compat, size_t cap)
      : compat_(compat), cap_(cap) {}

  void run() {
    uint64_t all = compat_.size() == 64 ? ~0ull : (1ull << compat_.size()) - 1;
    expand(0, all, 0);
  }

  std::vector<uint64_t>& found() { return found_; }

 private:
  void expand(uint64_t r, uint64_t p, uint64_t x) {
    if (p == 0 && x == 0) {
      if (found_.size() >= cap_) {
        throw std::length_error("independent-set enumeration exceeded the configured cap");
      }
      found_.push_back(r);
      return;
    }
    // Standard pivot choice: the vertex covering most of P prunes hardest.
    uint64_t px = p | x;
    int pivot = -1;
    int best_cover = -1;
    for (uint64_t m = px; m != 0; m &= m - 1) {
      int v = std::countr_zero(m);
      int cover = std::popcount(p & compat_[v]);
      if (cover > best_cover) {
        best_cover = cover;
        pivot = v;
      }
    }
    uint64_t ext = p & ~compat_[pivot];
    for (uint64_t m = ext; m != 0; m &= m - 1) {
      uint64_t bit = m & (~m + 1);
      int v = std::countr_zero(bit);
      expand(r | bit, p & compat_[v], x & compat_[v]);
      p &= ~bit;
      x |= bit;
    }
  }

  const std::vector<uint64_t>& compat_;
  size_t cap_;
  std::vector<uint64_t> found_;
};

}  // namespace

int ShiftingSolution::grid_of(int bidder_id) const {
  for (size_t i = 0; i < grids.size(); ++i) {
    if (!grids[i].empty() && set_contains(grids[i].chosen(), bidder_id)) {
      return static_cast<int>(i);
    }
  }
  return -1;
}

std::vector<CandidateSet> enumerate_maximal_independent_sets(const Scenario& s,
                                                             const std::vector<int>& ids,
                                                             size_t cap) {
  if (ids.empty()) return {};
  if (ids.size() > 64) {
    throw std::length_error("grid population exceeds the enumeration limit of 64");
  }
  std::vector<const Bidder*> members;
  members.reserve(ids.size());
  for (int id : ids) members.push_back(&s.bidder(id));

  std::vector<uint64_t> compat(ids.size(), 0);
  for (size_t i = 0; i < members.size(); ++i) {
    for (size_t j = i + 1; j < members.size(); ++j) {
      if (!conflicts(*members[i], *members[j])) {
        compat[i] |= 1ull << j;
        compat[j] |= 1ull << i;
      }
    }
  }

  CliqueCollector collector(compat, cap);
  collector.run();

  std::vector<CandidateSet> out;
  out.reserve(collector.found().size());
  for (uint64_t mask : collector.found()) {
    CandidateSet c;
    for (uint64_t m = mask; m != 0; m &= m - 1) {
      int v = std::countr_zero(m);
      c.ids.push_back(members[v]->id);
      c.weight += members[v]->bid;
    }
    std::sort(c.ids.begin(), c.ids.end());
    out.push_back(std::move(c));
  }
  return out;
}

GridSolution grid_optimum(const Scenario& s, GridIndex grid, const std::vector<int>& ids,
                          size_t cap) {
  GridSolution g;
  g.grid = grid;
  g.candidates = enumerate_maximal_independent_sets(s, ids, cap);
  std::sort(g.candidates.begin(), g.candidates.end(), ranked_before);
  g.chosen_index = 0;
  return g;
}

SuaResult ptas_allocate_core(const Scenario& s, int k, size_t cap, DecisionBackend& backend) {
  if (s.model != ModelKind::SUA) {
    throw std::invalid_argument("ptas_allocate: needs a single-unit scenario");
  }
  if (k < 2) throw std::invalid_argument("ptas_allocate: k must be >= 2");

  SuaResult result;
  std::vector<LinExpr> shift_exprs;
  for (int r = 0; r < k; ++r) {
    for (int sh = 0; sh < k; ++sh) {
      ShiftingSolution sol;
      sol.spec = {k, r, sh};
      LinExpr shift_expr;
      ShiftingPartition part = shifting_partition(s, sol.spec);
      size_t gi = 0;
      for (const auto& [grid, ids] : part.grids) {
        GridSolution g;
        g.grid = grid;
        g.candidates = enumerate_maximal_independent_sets(s, ids, cap);
        if (!g.candidates.empty()) {
          // Lexicographic pre-sort is bid-free; the stable weight sort on
          // top of it realizes the (weight desc, id-set asc) rank order.
          std::sort(g.candidates.begin(), g.candidates.end(),
                    [](const CandidateSet& a, const CandidateSet& b) {
                      return lex_less(a.ids, b.ids);
                    });
          std::vector<LinExpr> exprs;
          exprs.reserve(g.candidates.size());
          for (const CandidateSet& c : g.candidates) {
            LinExpr e;
            for (int id : c.ids) e.add_bid(id, 1);
            exprs.push_back(std::move(e));
          }
          std::string ctx = "shift." + std::to_string(r) + "." + std::to_string(sh) + "/grid" +
                            std::to_string(gi) + "/order";
          std::vector<size_t> perm = backend.order_desc(ctx, exprs);
          std::vector<CandidateSet> ranked;
          ranked.reserve(g.candidates.size());
          for (size_t p : perm) ranked.push_back(std::move(g.candidates[p]));
          g.candidates = std::move(ranked);
          shift_expr = shift_expr + exprs[perm[0]];
        }
        sol.grids.push_back(std::move(g));
        ++gi;
      }
      result.all_solutions.push_back(std::move(sol));
      shift_exprs.push_back(std::move(shift_expr));
    }
  }

  // Shifting exprs arrive in (r,s) ascending order and argmax returns the
  // first maximum, which realizes the lowest-spec tie-break.
  size_t best = backend.argmax("shift/pick", shift_exprs);
  result.best_index = best;
  result.best_spec = result.all_solutions[best].spec;

  LinExpr total;
  for (const GridSolution& g : result.all_solutions[best].grids) {
    if (g.empty()) continue;
    for (int id : g.chosen().ids) {
      result.allocation.winners.insert(id);
      result.allocation.channel_assignment[id] = {0};
      total.add_bid(id, 1);
    }
  }
  if (!result.allocation.winners.empty()) {
    result.allocation.weight = backend.reveal("alloc/weight", total);
  }
  return result;
}

SuaResult ptas_allocate(const Scenario& s, int k, size_t cap) {
  PlainBackend backend(s);
  SuaResult result = ptas_allocate_core(s, k, cap, backend);
  auto bids = [&s](int id) { return s.bidder(id).bid; };
  for (ShiftingSolution& sol : result.all_solutions) {
    sol.weight = 0;
    for (GridSolution& g : sol.grids) {
      for (CandidateSet& c : g.candidates) {
        c.weight = 0;
        for (int id : c.ids) c.weight += bids(id);
      }
      if (!g.empty()) sol.weight += g.chosen().weight;
    }
  }
  return result;
}

Allocation brute_force_mwis(const Scenario& s, size_t max_n) {
  size_t n = s.bidders.size();
  if (n > max_n || n > 64) {
    throw std::length_error("brute_force_mwis: instance above the oracle cap");
  }

  // Work in ascending id order so the search is deterministic.
  std::vector<const Bidder*> order;
  for (const Bidder& b : s.bidders) order.push_back(&b);
  std::sort(order.begin(), order.end(),
            [](const Bidder* a, const Bidder* b) { return a->id < b->id; });

  std::vector<uint64_t> compat(n, 0);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < n; ++j) {
      if (i != j && !conflicts(*order[i], *order[j])) compat[i] |= 1ull << j;
    }
  }
  std::vector<long long> suffix(n + 1, 0);
  for (size_t i = n; i-- > 0;) suffix[i] = suffix[i + 1] + order[i]->bid;

  long long best_w = 0;
  uint64_t best_set = 0;
  // Plain include-first branch and bound with a remaining-weight bound.
  auto rec = [&](auto&& self, size_t i, uint64_t allowed, long long cur, uint64_t chosen) -> void {
    if (cur > best_w) {
      best_w = cur;
      best_set = chosen;
    }
    if (i == n || cur + suffix[i] <= best_w) return;
    uint64_t bit = 1ull << i;
    if (allowed & bit) {
      self(self, i + 1, allowed & compat[i], cur + order[i]->bid, chosen | bit);
    }
    self(self, i + 1, allowed & ~bit, cur, chosen);
  };
  rec(rec, 0, n == 64 ? ~0ull : (1ull << n) - 1, 0, 0);

  Allocation a;
  a.weight = best_w;
  for (uint64_t m = best_set; m != 0; m &= m - 1) {
    int v = std::countr_zero(m);
    a.winners.insert(order[v]->id);
    a.channel_assignment[order[v]->id] = {0};
  }
  return a;
}

std::vector<LinExpr> sua_payment_terms(int winner_id, const SuaResult& cached) {
  if (cached.allocation.winners.count(winner_id) == 0) {
    throw std::invalid_argument("sua_payment_terms: bidder did not win");
  }
  const ShiftingSolution& best = cached.all_solutions.at(cached.best_index);
  int gi = best.grid_of(winner_id);
  if (gi < 0) throw std::logic_error("sua_payment_terms: winner missing from best shifting");

  // The winner's own bid cancels out of every term: subtracting the full
  // winning structure and adding the bid back leaves only rival bids and a
  // tie-break constant, so each term is evaluable without knowing b_i.
  auto add_ids = [](LinExpr& e, const std::vector<int>& ids, long long c) {
    for (int id : ids) e.add_bid(id, c);
  };

  std::vector<LinExpr> terms;

  // Displacement inside the winning shifting's own grid: the first ranked
  // candidate set without i is what i's set must keep outranking.
  const GridSolution& grid = best.grids[static_cast<size_t>(gi)];
  const CandidateSet& own = grid.chosen();
  for (const CandidateSet& rival : grid.candidates) {
    if (set_contains(rival, winner_id)) continue;
    LinExpr t = LinExpr::of_const(lex_less(own.ids, rival.ids) ? 0 : 1);
    add_ids(t, rival.ids, 1);
    add_ids(t, own.ids, -1);
    t.add_bid(winner_id, 1);
    terms.push_back(std::move(t));
    break;
  }

  LinExpr best_minus_i;
  for (const GridSolution& g : best.grids) {
    if (!g.empty()) add_ids(best_minus_i, g.chosen().ids, 1);
  }
  best_minus_i.add_bid(winner_id, -1);

  // Every other shifting bounds i's bid from below: either its weight is
  // fixed (i absent from its optimum), or it falls back to a fixed weight
  // once i's set is dethroned inside that shifting's grid.
  for (size_t qi = 0; qi < cached.all_solutions.size(); ++qi) {
    if (qi == cached.best_index) continue;
    const ShiftingSolution& q = cached.all_solutions[qi];
    LinExpr t = LinExpr::of_const(best.spec < q.spec ? 0 : 1) - best_minus_i;
    int gq = q.grid_of(winner_id);
    const GridSolution* swap = gq < 0 ? nullptr : &q.grids[static_cast<size_t>(gq)];
    const CandidateSet* fallback = nullptr;
    if (swap != nullptr) {
      for (const CandidateSet& c : swap->candidates) {
        if (!set_contains(c, winner_id)) {
          fallback = &c;
          break;
        }
      }
      if (fallback == nullptr) continue;  // this shifting follows i's bid down
    }
    for (const GridSolution& g : q.grids) {
      if (g.empty()) continue;
      if (&g == swap) {
        add_ids(t, fallback->ids, 1);
      } else {
        add_ids(t, g.chosen().ids, 1);
      }
    }
    terms.push_back(std::move(t));
  }
  return terms;
}

long long critical_value_sua(const Scenario& s, int k, int winner_id, const SuaResult& cached) {
  (void)k;
  auto bids = [&s](int id) { return s.bidder(id).bid; };
  long long payment = 0;
  for (const LinExpr& t : sua_payment_terms(winner_id, cached)) {
    payment = std::max(payment, t.eval(bids));
  }
  if (payment > s.bidder(winner_id).bid) {
    throw std::logic_error("critical_value_sua: threshold above the bid");
  }
  return payment;
}

}  // namespace pps
