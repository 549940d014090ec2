#include "pps/alloc_mua.hpp"

#include <algorithm>
#include <bit>
#include <map>
#include <stdexcept>
#include <string>

namespace pps {

namespace {

std::string addr_tag(const SubgridAddress& a) {
  return "c" + std::to_string(a.cell) + ".t" + std::to_string(a.grid_type) + ".s" +
         std::to_string(a.subcell);
}

LinExpr sum_of_bids(const std::vector<int>& ids) {
  LinExpr e;
  for (int id : ids) e.add_bid(id, 1);
  return e;
}

// Ascending-id winners get consecutive channel blocks starting at 0. Within
// a subcell everyone conflicts, so blocks must be disjoint; across subcells
// of the surviving type there are no conflicts and indices can repeat.
void assign_blocks(const Scenario& s, std::vector<int> winner_ids, Allocation& out) {
  std::sort(winner_ids.begin(), winner_ids.end());
  int next = 0;
  for (int id : winner_ids) {
    std::set<int> chans;
    for (int c = 0; c < s.bidder(id).demand; ++c) chans.insert(next++);
    out.winners.insert(id);
    out.channel_assignment[id] = std::move(chans);
  }
}

// Per-unit greedy on one subcell cohort. ids must already be feasible
// (demand <= m) and id-ascending; the id order is what the ratio sort's
// stable tie-break keys on.
SubgridSolution solve_subcell(const SubgridAddress& addr, const std::vector<int>& ids,
                              const Scenario& s, int m, DecisionBackend& backend) {
  SubgridSolution sol;
  sol.address = addr;
  sol.cohort = ids;

  long long total = 0;
  for (int id : ids) total += s.bidder(id).demand;
  if (total <= m) {
    sol.winners = ids;
    sol.weight_expr = sum_of_bids(ids);
    return sol;
  }

  std::vector<LinExpr> values;
  std::vector<long long> divisors;
  values.reserve(ids.size());
  divisors.reserve(ids.size());
  for (int id : ids) {
    values.push_back(LinExpr::of_bid(id));
    divisors.push_back(s.bidder(id).demand);
  }
  std::vector<size_t> perm = backend.order_ratios(addr_tag(addr) + "/order", values, divisors);
  sol.sorted_order.reserve(ids.size());
  for (size_t p : perm) sol.sorted_order.push_back(ids[p]);

  long long cum = 0;
  size_t k = 0;
  for (; k < sol.sorted_order.size(); ++k) {
    cum += s.bidder(sol.sorted_order[k]).demand;
    if (cum > m) break;
  }
  sol.critical_index = k;

  std::vector<int> prefix(sol.sorted_order.begin(),
                          sol.sorted_order.begin() + static_cast<long>(k));
  int critical = sol.sorted_order[k];
  LinExpr prefix_sum = sum_of_bids(prefix);
  if (backend.is_ge(addr_tag(addr) + "/prefix", prefix_sum, LinExpr::of_bid(critical))) {
    sol.winners = prefix;
    sol.weight_expr = prefix_sum;
  } else {
    sol.winners = {critical};
    sol.weight_expr = LinExpr::of_bid(critical);
  }
  return sol;
}

// ---- payment probes ----------------------------------------------------

// Everything t-independent about one bidder's subcell contest.
struct ReplayInputs {
  int i = 0;
  int ni = 1;
  int m = 1;
  bool contested = false;
  std::vector<int> others;        // cohort minus i; per-unit order when contested
  std::vector<long long> cum;     // cumulative demand over others
  LinExpr all_others;             // bid sum of others (uncontested case)
  std::string tag;                // context label prefix
};

ReplayInputs make_replay_inputs(const Scenario& s, const SubgridSolution& sub, int i,
                                const std::string& tag) {
  ReplayInputs rin;
  rin.i = i;
  rin.ni = s.bidder(i).demand;
  rin.m = s.channel_count;
  rin.contested = !sub.sorted_order.empty();
  rin.tag = tag;
  const std::vector<int>& pool = rin.contested ? sub.sorted_order : sub.cohort;
  for (int id : pool) {
    if (id != i) rin.others.push_back(id);
  }
  long long cum = 0;
  for (int id : rin.others) {
    cum += s.bidder(id).demand;
    rin.cum.push_back(cum);
    rin.all_others.add_bid(id, 1);
  }
  return rin;
}

// The subcell contest with i's bid forced to the integer t.
struct ReplayResult {
  bool includes_i = false;
  std::vector<int> other_winners;  // winners besides i
  LinExpr weight_expr;             // winner bid sum, t folded into the constant
};

// Would i rank above other o when bidding t? Exact rational comparison of
// t/n_i against b_o/n_o, ties to the lower id.
bool ranks_above(const ReplayInputs& rin, int o, long long t, const Scenario& s,
                 DecisionBackend& backend) {
  long long no = s.bidder(o).demand;
  LinExpr e = LinExpr::of_const(t * no);
  e.add_bid(o, -rin.ni);
  int sg = backend.sign(rin.tag + "/rank." + std::to_string(o) + ".t" + std::to_string(t), e);
  return rin.i < o ? sg >= 0 : sg > 0;
}

// want_losers: also resolve the contest outcome when i is not part of it
// (needed when a downstream fill pass has to know who did win).
ReplayResult replay_subcell(const ReplayInputs& rin, long long t, const Scenario& s,
                            DecisionBackend& backend, bool want_losers) {
  ReplayResult rep;
  std::string tag = rin.tag + ".t" + std::to_string(t);
  if (!rin.contested) {
    rep.includes_i = true;
    rep.other_winners = rin.others;
    rep.weight_expr = rin.all_others + LinExpr::of_const(t);
    return rep;
  }

  // Others keep their relative order at every t; only i's slot moves. The
  // per-unit thresholds for overtaking are non-increasing down the list, so
  // the first other that i outranks marks its slot.
  size_t p = 0;
  while (p < rin.others.size() && !ranks_above(rin, rin.others[p], t, s, backend)) ++p;
  long long before = p == 0 ? 0 : rin.cum[p - 1];

  auto others_only_outcome = [&]() {
    // The contest as if i were absent; constant in t.
    size_t c0 = 0;
    while (rin.cum[c0] <= rin.m) ++c0;
    std::vector<int> prefix(rin.others.begin(), rin.others.begin() + static_cast<long>(c0));
    LinExpr prefix_sum = sum_of_bids(prefix);
    if (backend.is_ge(rin.tag + "/noi", prefix_sum, LinExpr::of_bid(rin.others[c0]))) {
      rep.other_winners = prefix;
      rep.weight_expr = prefix_sum;
    } else {
      rep.other_winners = {rin.others[c0]};
      rep.weight_expr = LinExpr::of_bid(rin.others[c0]);
    }
  };

  if (before > rin.m) {
    // The contest overflows before i's slot; i is out regardless of t.
    if (want_losers) others_only_outcome();
    return rep;
  }

  if (before + rin.ni > rin.m) {
    // i is the overflow point: it beats the prefix alone or loses to it.
    std::vector<int> prefix(rin.others.begin(), rin.others.begin() + static_cast<long>(p));
    LinExpr prefix_sum = sum_of_bids(prefix);
    LinExpr e = LinExpr::of_const(t - 1) - prefix_sum;
    if (backend.sign(tag + "/solo", e) >= 0) {
      rep.includes_i = true;
      rep.weight_expr = LinExpr::of_const(t);
    } else {
      rep.other_winners = prefix;
      rep.weight_expr = prefix_sum;
    }
    return rep;
  }

  // i fits into the prefix; the critical rival sits further down.
  size_t c = p;
  while (c < rin.others.size() && rin.cum[c] + rin.ni <= rin.m) ++c;
  if (c == rin.others.size()) {
    throw std::logic_error("replay_subcell: contested cohort never overflowed");
  }
  std::vector<int> prefix(rin.others.begin(), rin.others.begin() + static_cast<long>(c));
  LinExpr prefix_sum = sum_of_bids(prefix);
  LinExpr e = LinExpr::of_const(t) + prefix_sum - LinExpr::of_bid(rin.others[c]);
  if (backend.sign(tag + "/member", e) >= 0) {
    rep.includes_i = true;
    rep.other_winners = prefix;
    rep.weight_expr = prefix_sum + LinExpr::of_const(t);
  } else {
    rep.other_winners = {rin.others[c]};
    rep.weight_expr = LinExpr::of_bid(rin.others[c]);
  }
  return rep;
}

struct RivalTerm {
  LinExpr expr;
  int adj = 0;  // 1 when the rival wins exact ties
};

// Shared context for both payment probes.
struct PayCtx {
  const Scenario* s = nullptr;
  const MuaResult* cache = nullptr;
  int i = 0;
  SubgridAddress addr;
  const SquareSolution* sq = nullptr;
  ReplayInputs rin;
  std::vector<RivalTerm> rival_subcells;
  std::vector<RivalTerm> rival_types;
  LinExpr other_cells;  // same-type weight contributed by the other squares
};

PayCtx make_pay_ctx(const Scenario& s, const MuaResult& cache, int i, const std::string& tag) {
  PayCtx ctx;
  ctx.s = &s;
  ctx.cache = &cache;
  ctx.i = i;
  const Bidder& b = s.bidder(i);
  ctx.addr = subgrid_address(b.x, b.y, s.width);
  ctx.sq = cache.square(ctx.addr.cell, ctx.addr.grid_type);
  if (ctx.sq == nullptr) {
    throw std::logic_error("payment context: bidder's square missing from the cache");
  }
  const SubgridSolution& sub = ctx.sq->subcells[static_cast<size_t>(ctx.addr.subcell - 1)];
  ctx.rin = make_replay_inputs(s, sub, i, tag);

  for (int sp = 1; sp <= 4; ++sp) {
    if (sp == ctx.addr.subcell || !ctx.sq->occupied[static_cast<size_t>(sp - 1)]) continue;
    ctx.rival_subcells.push_back(
        {ctx.sq->subcells[static_cast<size_t>(sp - 1)].weight_expr, ctx.addr.subcell < sp ? 0 : 1});
  }
  for (int r = 1; r <= 4; ++r) {
    if (r == ctx.addr.grid_type || !cache.type_occupied[static_cast<size_t>(r - 1)]) continue;
    ctx.rival_types.push_back(
        {cache.type_weight_exprs[static_cast<size_t>(r - 1)], ctx.addr.grid_type < r ? 0 : 1});
  }
  ctx.other_cells =
      cache.type_weight_exprs[static_cast<size_t>(ctx.addr.grid_type - 1)] - ctx.sq->weight_expr;
  return ctx;
}

// Does i keep its seat when bidding t? Subcell contest first, then the
// square race against rival subcells, then the type race; i's own subcell
// weight moves linearly with t while every rival weight is fixed.
bool mua_wins_at(const PayCtx& ctx, long long t, DecisionBackend& backend) {
  ReplayResult rep = replay_subcell(ctx.rin, t, *ctx.s, backend, false);
  if (!rep.includes_i) return false;

  LinExpr cin = sum_of_bids(rep.other_winners);
  std::string tag = ctx.rin.tag + ".t" + std::to_string(t);
  for (size_t j = 0; j < ctx.rival_subcells.size(); ++j) {
    const RivalTerm& rv = ctx.rival_subcells[j];
    LinExpr e = LinExpr::of_const(t - rv.adj) + cin - rv.expr;
    if (backend.sign(tag + "/sub" + std::to_string(j), e) < 0) return false;
  }
  for (size_t j = 0; j < ctx.rival_types.size(); ++j) {
    const RivalTerm& rv = ctx.rival_types[j];
    LinExpr e = LinExpr::of_const(t - rv.adj) + ctx.other_cells + cin - rv.expr;
    if (backend.sign(tag + "/type" + std::to_string(j), e) < 0) return false;
  }
  return true;
}

// Smallest t in [0, hi] with wins(t), assuming wins is monotone and
// wins(hi) holds.
template <typename Fn>
long long bisect_min_win(long long hi, Fn&& wins) {
  long long lo = 0;
  while (lo < hi) {
    long long mid = lo + (hi - lo) / 2;
    if (wins(mid)) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return lo;
}

}  // namespace

const SquareSolution* MuaResult::square(long long cell, int grid_type) const {
  for (const SquareSolution& sq : squares) {
    if (sq.cell == cell && sq.grid_type == grid_type) return &sq;
  }
  return nullptr;
}

SubgridSolution subgrid_greedy(const Scenario& s, const std::vector<int>& ids, int m) {
  if (ids.empty()) throw std::invalid_argument("subgrid_greedy: empty population");
  if (m < 1) throw std::invalid_argument("subgrid_greedy: need at least one channel");
  SubgridAddress addr;
  std::vector<int> feasible;
  for (size_t j = 0; j < ids.size(); ++j) {
    const Bidder& b = s.bidder(ids[j]);
    SubgridAddress a = subgrid_address(b.x, b.y, s.width);
    if (j == 0) {
      addr = a;
    } else if (!(a == addr)) {
      throw std::invalid_argument("subgrid_greedy: bidders span several subcells");
    }
    if (b.demand <= m) feasible.push_back(ids[j]);
  }
  std::sort(feasible.begin(), feasible.end());

  PlainBackend backend(s);
  SubgridSolution sol;
  if (feasible.empty()) {
    sol.address = addr;
  } else {
    sol = solve_subcell(addr, feasible, s, m, backend);
  }
  sol.weight = sol.weight_expr.eval([&](int id) { return s.bidder(id).bid; });
  return sol;
}

MuaResult mua_allocate_core(const Scenario& s, DecisionBackend& backend) {
  if (s.model != ModelKind::MUA) {
    throw std::invalid_argument("mua_allocate: needs a multi-unit scenario");
  }
  const int m = s.channel_count;

  // Feasible bidders bucketed by subcell, ids ascending within each.
  std::map<SubgridAddress, std::vector<int>> cohorts;
  for (const Bidder& b : s.bidders) {
    if (b.demand > m) continue;
    cohorts[subgrid_address(b.x, b.y, s.width)].push_back(b.id);
  }
  for (auto& [addr, ids] : cohorts) std::sort(ids.begin(), ids.end());

  MuaResult result;
  std::map<std::pair<long long, int>, SquareSolution> squares;
  for (const auto& [addr, ids] : cohorts) {
    SquareSolution& sq = squares[{addr.cell, addr.grid_type}];
    sq.cell = addr.cell;
    sq.grid_type = addr.grid_type;
    sq.subcells[static_cast<size_t>(addr.subcell - 1)] = solve_subcell(addr, ids, s, m, backend);
    sq.occupied[static_cast<size_t>(addr.subcell - 1)] = true;
  }

  for (auto& [key, sq] : squares) {
    std::vector<int> subs;
    std::vector<LinExpr> exprs;
    for (int sp = 1; sp <= 4; ++sp) {
      if (!sq.occupied[static_cast<size_t>(sp - 1)]) continue;
      subs.push_back(sp);
      exprs.push_back(sq.subcells[static_cast<size_t>(sp - 1)].weight_expr);
    }
    std::string ctx = "square.c" + std::to_string(sq.cell) + ".t" + std::to_string(sq.grid_type) +
                      "/pick";
    sq.picked_subcell = subs[backend.argmax(ctx, exprs)];
    sq.weight_expr = sq.subcells[static_cast<size_t>(sq.picked_subcell - 1)].weight_expr;
    result.type_weight_exprs[static_cast<size_t>(sq.grid_type - 1)].add_scaled(sq.weight_expr, 1);
    result.type_occupied[static_cast<size_t>(sq.grid_type - 1)] = true;
    result.squares.push_back(std::move(sq));
  }

  std::vector<int> types;
  std::vector<LinExpr> type_exprs;
  for (int r = 1; r <= 4; ++r) {
    if (!result.type_occupied[static_cast<size_t>(r - 1)]) continue;
    types.push_back(r);
    type_exprs.push_back(result.type_weight_exprs[static_cast<size_t>(r - 1)]);
  }
  if (types.empty()) return result;  // nobody feasible anywhere
  result.picked_type = types[backend.argmax("types/pick", type_exprs)];

  for (const SquareSolution& sq : result.squares) {
    if (sq.grid_type != result.picked_type) continue;
    const SubgridSolution& sub = sq.subcells[static_cast<size_t>(sq.picked_subcell - 1)];
    assign_blocks(s, sub.winners, result.allocation);
  }
  if (!result.allocation.winners.empty()) {
    LinExpr total;
    for (int id : result.allocation.winners) total.add_bid(id, 1);
    result.allocation.weight = backend.reveal("alloc/weight", total);
  }
  return result;
}

namespace {

void evaluate_weights(MuaResult& r, const Scenario& s) {
  auto bids = [&s](int id) { return s.bidder(id).bid; };
  for (SquareSolution& sq : r.squares) {
    for (SubgridSolution& sub : sq.subcells) sub.weight = sub.weight_expr.eval(bids);
  }
  for (size_t t = 0; t < 4; ++t) r.type_weights[t] = r.type_weight_exprs[t].eval(bids);
}

}  // namespace

MuaResult mua_allocate(const Scenario& s) {
  PlainBackend backend(s);
  MuaResult r = mua_allocate_core(s, backend);
  evaluate_weights(r, s);
  return r;
}

long long brute_force_mua(const Scenario& s, std::size_t max_n) {
  if (s.model != ModelKind::MUA) {
    throw std::invalid_argument("brute_force_mua: needs a multi-unit scenario");
  }
  const int m = s.channel_count;
  if (m > 64) throw std::length_error("brute_force_mua: channel masks cap out at 64");

  std::vector<const Bidder*> feasible;
  for (const Bidder& b : s.bidders) {
    if (b.demand <= m) feasible.push_back(&b);
  }
  if (feasible.size() > max_n) {
    throw std::length_error("brute_force_mua: instance above the oracle cap");
  }
  std::sort(feasible.begin(), feasible.end(),
            [](const Bidder* a, const Bidder* b) { return a->id < b->id; });

  const size_t n = feasible.size();
  std::vector<std::vector<size_t>> adj(n);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      if (conflicts(*feasible[i], *feasible[j])) {
        adj[i].push_back(j);
        adj[j].push_back(i);
      }
    }
  }

  // Channel choices only interact inside a conflict component, so solve the
  // components separately and add up.
  std::vector<int> comp(n, -1);
  int comps = 0;
  for (size_t i = 0; i < n; ++i) {
    if (comp[i] >= 0) continue;
    std::vector<size_t> stack{i};
    comp[i] = comps;
    while (!stack.empty()) {
      size_t v = stack.back();
      stack.pop_back();
      for (size_t w : adj[v]) {
        if (comp[w] < 0) {
          comp[w] = comps;
          stack.push_back(w);
        }
      }
    }
    ++comps;
  }

  const uint64_t full = m == 64 ? ~0ull : (1ull << m) - 1;
  long long total = 0;
  for (int c = 0; c < comps; ++c) {
    std::vector<size_t> members;
    for (size_t i = 0; i < n; ++i) {
      if (comp[i] == c) members.push_back(i);
    }
    // Heavy bids first so the bound bites early.
    std::sort(members.begin(), members.end(), [&](size_t a, size_t b) {
      if (feasible[a]->bid != feasible[b]->bid) return feasible[a]->bid > feasible[b]->bid;
      return feasible[a]->id < feasible[b]->id;
    });
    std::vector<long long> suffix(members.size() + 1, 0);
    for (size_t i = members.size(); i-- > 0;) {
      suffix[i] = suffix[i + 1] + feasible[members[i]]->bid;
    }

    long long best = 0;
    std::vector<std::pair<size_t, uint64_t>> chosen;  // member index, channel mask
    auto combos = [](auto&& self, uint64_t free, int need, uint64_t acc,
                     std::vector<uint64_t>& out) -> void {
      if (need == 0) {
        out.push_back(acc);
        return;
      }
      if (std::popcount(free) < need) return;
      uint64_t bit = free & (~free + 1);
      self(self, free ^ bit, need - 1, acc | bit, out);
      self(self, free ^ bit, need, acc, out);
    };
    auto rec = [&](auto&& self, size_t idx, long long cur) -> void {
      best = std::max(best, cur);
      if (idx == members.size() || cur + suffix[idx] <= best) return;
      size_t v = members[idx];
      uint64_t blocked = 0;
      for (const auto& [w, mask] : chosen) {
        if (std::find(adj[v].begin(), adj[v].end(), w) != adj[v].end()) blocked |= mask;
      }
      uint64_t free = full & ~blocked;
      int need = feasible[v]->demand;
      if (std::popcount(free) >= need) {
        std::vector<uint64_t> options;
        if (chosen.empty()) {
          // Channels are interchangeable until the first pick pins them down.
          options.push_back((need == 64 ? ~0ull : (1ull << need) - 1));
        } else {
          combos(combos, free, need, 0, options);
        }
        for (uint64_t mask : options) {
          chosen.emplace_back(v, mask);
          self(self, idx + 1, cur + feasible[v]->bid);
          chosen.pop_back();
        }
      }
      self(self, idx + 1, cur);
    };
    rec(rec, 0, 0);
    total += best;
  }
  return total;
}

long long mua_critical(const Scenario& s, const MuaResult& cache, int winner_id,
                       DecisionBackend& backend, long long bid_ceiling) {
  if (cache.allocation.winners.count(winner_id) == 0) {
    throw std::invalid_argument("mua_critical: bidder did not win");
  }
  PayCtx ctx = make_pay_ctx(s, cache, winner_id, "crit.b" + std::to_string(winner_id));
  return bisect_min_win(bid_ceiling,
                        [&](long long t) { return mua_wins_at(ctx, t, backend); });
}

long long mua_payment(const Scenario& s, const MuaResult& cache, int winner_id) {
  PlainBackend backend(s);
  long long p = mua_critical(s, cache, winner_id, backend, s.bidder(winner_id).bid);
  if (p > s.bidder(winner_id).bid) {
    throw std::logic_error("mua_payment: threshold above the bid");
  }
  return p;
}

// ---- fill stage ----------------------------------------------------------

namespace {

uint64_t mask_of(const std::set<int>& chans) {
  uint64_t m = 0;
  for (int c : chans) m |= 1ull << c;
  return m;
}

// One admission step: which channels are still free for bidder id against
// the already-seated winners it conflicts with.
uint64_t free_channels(const Scenario& s, int id, const std::map<int, uint64_t>& seated,
                       uint64_t full) {
  const Bidder& b = s.bidder(id);
  uint64_t blocked = 0;
  for (const auto& [w, mask] : seated) {
    if (conflicts(b, s.bidder(w))) blocked |= mask;
  }
  return full & ~blocked;
}

uint64_t lowest_bits(uint64_t from, int count) {
  uint64_t out = 0;
  for (int taken = 0; taken < count; ++taken) {
    uint64_t bit = from & (~from + 1);
    out |= bit;
    from ^= bit;
  }
  return out;
}

}  // namespace

EmuaFill emua_allocate_core(const Scenario& s, DecisionBackend& backend) {
  if (s.channel_count > 64) {
    throw std::length_error("emua_allocate: channel masks cap out at 64");
  }
  EmuaFill fill;
  fill.base = mua_allocate_core(s, backend);

  const int m = s.channel_count;
  const uint64_t full = m == 64 ? ~0ull : (1ull << m) - 1;
  std::map<int, uint64_t> seated;
  for (const auto& [id, chans] : fill.base.allocation.channel_assignment) {
    seated[id] = mask_of(chans);
  }

  std::vector<int> losers;
  for (const Bidder& b : s.bidders) {
    if (b.demand <= m && fill.base.allocation.winners.count(b.id) == 0) losers.push_back(b.id);
  }
  std::sort(losers.begin(), losers.end());
  std::vector<LinExpr> exprs;
  exprs.reserve(losers.size());
  for (int id : losers) exprs.push_back(LinExpr::of_bid(id));
  // Unit divisors: this is a plain bid sort, phrased as a ratio batch so the
  // encrypted backend can ship it as one per-bidder masked batch.
  const std::vector<long long> ones(losers.size(), 1);
  std::vector<size_t> perm =
      losers.empty() ? std::vector<size_t>{} : backend.order_ratios("fill/order", exprs, ones);

  fill.final_alloc = fill.base.allocation;
  for (size_t p : perm) {
    int id = losers[p];
    int need = s.bidder(id).demand;
    uint64_t free = free_channels(s, id, seated, full);
    if (std::popcount(free) < need) continue;
    uint64_t taken = lowest_bits(free, need);
    seated[id] = taken;
    fill.admitted_losers.push_back(id);
    std::set<int> chans;
    for (uint64_t t = taken; t != 0; t &= t - 1) chans.insert(std::countr_zero(t));
    fill.final_alloc.winners.insert(id);
    fill.final_alloc.channel_assignment[id] = std::move(chans);
  }
  if (!fill.final_alloc.winners.empty()) {
    LinExpr total;
    for (int id : fill.final_alloc.winners) total.add_bid(id, 1);
    fill.final_alloc.weight = backend.reveal("fill/weight", total);
  }
  return fill;
}

EmuaFill emua_allocate(const Scenario& s) {
  PlainBackend backend(s);
  EmuaFill fill = emua_allocate_core(s, backend);
  evaluate_weights(fill.base, s);
  return fill;
}

namespace {

// Does i end up seated (base allocation or fill) when bidding t? Replays
// the layers i can influence against the cached rivals, then runs the whole
// admission pass.
bool emua_wins_at(const PayCtx& ctx, long long t, DecisionBackend& backend) {
  const Scenario& s = *ctx.s;
  const MuaResult& cache = *ctx.cache;
  std::string tag = ctx.rin.tag + ".t" + std::to_string(t);

  ReplayResult rep = replay_subcell(ctx.rin, t, s, backend, true);

  // Square race at t: i's subcell weight moved, the rivals are cached.
  int picked_sub = ctx.addr.subcell;
  LinExpr picked_expr = rep.weight_expr;
  for (int sp = 1; sp <= 4; ++sp) {
    if (sp == ctx.addr.subcell || !ctx.sq->occupied[static_cast<size_t>(sp - 1)]) continue;
    const LinExpr& rival = ctx.sq->subcells[static_cast<size_t>(sp - 1)].weight_expr;
    bool rival_ahead;
    if (sp < picked_sub) {
      rival_ahead = backend.sign(tag + "/race.s" + std::to_string(sp), rival - picked_expr) >= 0;
    } else {
      rival_ahead = backend.sign(tag + "/race.s" + std::to_string(sp), rival - picked_expr) > 0;
    }
    if (rival_ahead) {
      picked_sub = sp;
      picked_expr = rival;
    }
  }

  // Type race at t.
  LinExpr own_type = ctx.other_cells + picked_expr;
  int picked_type = ctx.addr.grid_type;
  LinExpr picked_type_expr = own_type;
  for (int r = 1; r <= 4; ++r) {
    if (r == ctx.addr.grid_type || !cache.type_occupied[static_cast<size_t>(r - 1)]) continue;
    const LinExpr& rival = cache.type_weight_exprs[static_cast<size_t>(r - 1)];
    bool rival_ahead;
    if (r < picked_type) {
      rival_ahead = backend.sign(tag + "/race.r" + std::to_string(r), rival - picked_type_expr) >= 0;
    } else {
      rival_ahead = backend.sign(tag + "/race.r" + std::to_string(r), rival - picked_type_expr) > 0;
    }
    if (rival_ahead) {
      picked_type = r;
      picked_type_expr = rival;
    }
  }

  if (picked_type == ctx.addr.grid_type && picked_sub == ctx.addr.subcell && rep.includes_i) {
    return true;
  }

  // Base winners at t with their channel blocks.
  const int m = s.channel_count;
  const uint64_t full = m == 64 ? ~0ull : (1ull << m) - 1;
  std::map<int, uint64_t> seated;
  auto seat_block = [&](const std::vector<int>& ids) {
    std::vector<int> sorted = ids;
    std::sort(sorted.begin(), sorted.end());
    int next = 0;
    for (int id : sorted) {
      int need = s.bidder(id).demand;
      seated[id] = ((need == 64 ? ~0ull : (1ull << need) - 1)) << next;
      next += need;
    }
  };
  for (const SquareSolution& sq : cache.squares) {
    if (sq.grid_type != picked_type) continue;
    if (sq.cell == ctx.addr.cell && sq.grid_type == ctx.addr.grid_type) {
      if (picked_sub == ctx.addr.subcell) {
        seat_block(rep.other_winners);  // i itself would have returned above
      } else {
        seat_block(sq.subcells[static_cast<size_t>(picked_sub - 1)].winners);
      }
    } else {
      seat_block(sq.subcells[static_cast<size_t>(sq.picked_subcell - 1)].winners);
    }
  }

  // Fill pass: bid descending, id ascending on ties; i carries the probe bid.
  std::vector<std::pair<int, LinExpr>> losers;
  for (const Bidder& b : s.bidders) {
    if (b.demand > m || seated.count(b.id) != 0) continue;
    losers.emplace_back(b.id, b.id == ctx.i ? LinExpr::of_const(t) : LinExpr::of_bid(b.id));
  }
  std::sort(losers.begin(), losers.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::stable_sort(losers.begin(), losers.end(), [&](const auto& a, const auto& b) {
    return backend.sign(tag + "/fillcmp." + std::to_string(a.first) + "." +
                            std::to_string(b.first),
                        a.second - b.second) > 0;
  });

  for (const auto& [id, expr] : losers) {
    int need = s.bidder(id).demand;
    uint64_t free = free_channels(s, id, seated, full);
    if (std::popcount(free) < need) {
      if (id == ctx.i) return false;
      continue;
    }
    if (id == ctx.i) return true;
    seated[id] = lowest_bits(free, need);
  }
  throw std::logic_error("emua_wins_at: probe bidder missing from the fill pass");
}

}  // namespace

long long emua_critical(const Scenario& s, const EmuaFill& fill, int winner_id,
                        DecisionBackend& backend, long long bid_ceiling) {
  if (fill.final_alloc.winners.count(winner_id) == 0) {
    throw std::invalid_argument("emua_critical: bidder did not win");
  }
  PayCtx ctx = make_pay_ctx(s, fill.base, winner_id, "ecrit.b" + std::to_string(winner_id));
  return bisect_min_win(bid_ceiling,
                        [&](long long t) { return emua_wins_at(ctx, t, backend); });
}

long long emua_payment(const Scenario& s, const EmuaFill& fill, int winner_id) {
  PlainBackend backend(s);
  long long p = emua_critical(s, fill, winner_id, backend, s.bidder(winner_id).bid);
  if (p > s.bidder(winner_id).bid) {
    throw std::logic_error("emua_payment: threshold above the bid");
  }
  return p;
}

}  // namespace pps
