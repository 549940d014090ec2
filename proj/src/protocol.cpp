#include "pps/protocol.hpp"

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <exception>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "pps/alloc_mua.hpp"
#include "pps/backend.hpp"
#include "pps/bignum.hpp"

namespace pps {
namespace {

// Frame layout: u32 body length | u8 kind | u32 seq | payload. All integers
// big-endian; ciphertexts fixed-width at pk.ciphertext_bytes().
constexpr size_t kFrameHeader = 9;

uint64_t fnv1a(const uint8_t* p, size_t n) {
  uint64_t h = 1469598103934665603ull;
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void put_u8(std::vector<uint8_t>& b, uint8_t v) { b.push_back(v); }

void put_u32(std::vector<uint8_t>& b, uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<uint8_t>(v >> s));
}

void put_i64(std::vector<uint8_t>& b, long long v) {
  auto u = static_cast<uint64_t>(v);
  for (int s = 56; s >= 0; s -= 8) b.push_back(static_cast<uint8_t>(u >> s));
}

void put_ct(std::vector<uint8_t>& b, const PublicKey& pk, const Ciphertext& c) {
  std::vector<uint8_t> raw = ciphertext_to_bytes(pk, c);
  b.insert(b.end(), raw.begin(), raw.end());
}

// Bounds-checked cursor over a frame body; any overrun means a malformed
// frame and aborts the run.
struct Reader {
  const uint8_t* p;
  size_t n;
  size_t off = 0;

  void need(size_t k) {
    if (off + k > n) throw std::runtime_error("protocol: malformed frame");
  }

  uint8_t u8() {
    need(1);
    return p[off++];
  }

  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | p[off++];
    return v;
  }

  long long i64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | p[off++];
    return static_cast<long long>(v);
  }

  Ciphertext ct(const PublicKey& pk) {
    size_t k = pk.ciphertext_bytes();
    need(k);
    Ciphertext c = ciphertext_from_bytes(pk, p + off, k);
    off += k;
    return c;
  }

  void expect_end() const {
    if (off != n) throw std::runtime_error("protocol: trailing bytes in frame");
  }
};

// In-memory duplex channel; each direction is a queue with its own lock.
struct Mailbox {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::vector<uint8_t>> q;

  void push(std::vector<uint8_t> f) {
    {
      std::lock_guard<std::mutex> lk(mu);
      q.push_back(std::move(f));
    }
    cv.notify_one();
  }

  std::vector<uint8_t> pop() {
    std::unique_lock<std::mutex> lk(mu);
    cv.wait(lk, [&] { return !q.empty(); });
    std::vector<uint8_t> f = std::move(q.front());
    q.pop_front();
    return f;
  }
};

class MemoryEndpoint final : public Transport {
 public:
  MemoryEndpoint(std::shared_ptr<Mailbox> out, std::shared_ptr<Mailbox> in)
      : out_(std::move(out)), in_(std::move(in)) {}

  void send(std::vector<uint8_t> frame) override { out_->push(std::move(frame)); }

  std::vector<uint8_t> recv() override { return in_->pop(); }

 private:
  std::shared_ptr<Mailbox> out_;
  std::shared_ptr<Mailbox> in_;
};

// Both parties append to one transcript; the sequence counter orders the
// whole conversation. Lockstep request-reply keeps this deterministic.
struct Recorder {
  std::mutex mu;
  Transcript t;
  uint32_t next_seq = 0;
  uint32_t next_ctx = 0;

  uint32_t record(char sender, MsgKind kind, const std::vector<uint8_t>& payload) {
    std::lock_guard<std::mutex> lk(mu);
    uint32_t seq = next_seq++;
    t.messages.push_back(ProtocolMessage{seq, sender, kind, payload});
    return seq;
  }

  uint32_t fresh_ctx() {
    std::lock_guard<std::mutex> lk(mu);
    return next_ctx++;
  }

  void note_context(MaskContextStat c) {
    std::lock_guard<std::mutex> lk(mu);
    t.contexts.push_back(std::move(c));
  }

  void note_bid_batch(BidBatchRecord r) {
    std::lock_guard<std::mutex> lk(mu);
    t.bid_batches.push_back(std::move(r));
  }

  void count_decrypts(int n) {
    std::lock_guard<std::mutex> lk(mu);
    t.auctioneer_decryptions += n;
  }

  void count_homs(int n) {
    std::lock_guard<std::mutex> lk(mu);
    t.agent_hom_ops += n;
  }

  void add_auct_ms(double ms) {
    std::lock_guard<std::mutex> lk(mu);
    t.auctioneer_ms += ms;
  }
};

void send_frame(Transport& tr, Recorder& rec, char sender, MsgKind kind,
                std::vector<uint8_t> payload) {
  uint32_t seq = rec.record(sender, kind, payload);
  std::vector<uint8_t> f;
  f.reserve(kFrameHeader + payload.size());
  put_u32(f, static_cast<uint32_t>(5 + payload.size()));
  put_u8(f, static_cast<uint8_t>(kind));
  put_u32(f, seq);
  f.insert(f.end(), payload.begin(), payload.end());
  tr.send(std::move(f));
}

struct Frame {
  MsgKind kind = MsgKind::kShutdown;
  uint32_t seq = 0;
  std::vector<uint8_t> payload;
};

Frame recv_frame(Transport& tr) {
  std::vector<uint8_t> raw = tr.recv();
  if (raw.size() < kFrameHeader) throw std::runtime_error("protocol: truncated frame");
  Reader r{raw.data(), raw.size()};
  uint32_t len = r.u32();
  if (len + 4 != raw.size()) throw std::runtime_error("protocol: frame length mismatch");
  Frame f;
  f.kind = static_cast<MsgKind>(r.u8());
  f.seq = r.u32();
  f.payload.assign(raw.begin() + kFrameHeader, raw.end());
  return f;
}

long long to_ll(const mpz_class& z) {
  if (!z.fits_slong_p()) throw std::range_error("protocol: decrypted value out of range");
  return static_cast<long long>(mpz_get_si(z.get_mpz_t()));
}

mpz_class z_of(long long v) { return mpz_class(static_cast<long>(v)); }

uint64_t mask_fingerprint(const MaskPair& m) {
  std::string s = to_hex(m.delta_mult) + ":" + to_hex(m.delta_add);
  return fnv1a(reinterpret_cast<const uint8_t*>(s.data()), s.size());
}

// ---------------------------------------------------------------------------
// Auctioneer: owns the secret key, answers ranking and payment queries over
// whatever the agent sends, and records the announced outcome. It never sees
// an unmasked bid outside the sanctioned payment lane.

class Auctioneer {
 public:
  Auctioneer(const KeyPair& keys, Transport& tr, Recorder& rec)
      : keys_(&keys), tr_(&tr), rec_(&rec) {}

  void serve() {
    for (;;) {
      Frame f = recv_frame(*tr_);
      auto begin = std::chrono::steady_clock::now();
      bool done = false;
      switch (f.kind) {
        case MsgKind::kMaskedWeightBatch:
          handle_weight_batch(f);
          break;
        case MsgKind::kMaskedBidBatch:
          handle_bid_batch(f);
          break;
        case MsgKind::kPaymentComponentBatch:
          handle_payment_batch(f);
          break;
        case MsgKind::kSubcellPick:
        case MsgKind::kTypePick:
          break;  // public narration, nothing to answer
        case MsgKind::kFinalAllocation:
          handle_final(f);
          done = true;
          break;
        case MsgKind::kShutdown:
          done = true;
          break;
        default:
          throw std::runtime_error("protocol: unexpected frame kind");
      }
      std::chrono::duration<double, std::milli> spent = std::chrono::steady_clock::now() - begin;
      rec_->add_auct_ms(spent.count());
      if (done) return;
    }
  }

  const Allocation& allocation() const { return alloc_; }
  const std::map<int, long long>& payments() const { return pays_; }

 private:
  void reply(MsgKind kind, std::vector<uint8_t> payload) {
    send_frame(*tr_, *rec_, 'U', kind, std::move(payload));
  }

  mpz_class dec(const Ciphertext& c) {
    rec_->count_decrypts(1);
    return decrypt_signed(*keys_, c);
  }

  // Stable descending order over decrypted values, with rank-adjacent tie
  // flags so the agent can recognize exact ties.
  static std::vector<size_t> order_of(const std::vector<mpz_class>& vals) {
    std::vector<size_t> idx(vals.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::stable_sort(idx.begin(), idx.end(),
                     [&](size_t a, size_t b) { return vals[a] > vals[b]; });
    return idx;
  }

  void send_order_reply(uint32_t ctx, const std::vector<size_t>& order,
                        const std::vector<uint8_t>& ties) {
    std::vector<uint8_t> out;
    put_u32(out, ctx);
    put_u32(out, static_cast<uint32_t>(order.size()));
    for (size_t i : order) put_u32(out, static_cast<uint32_t>(i));
    for (uint8_t t : ties) put_u8(out, t);
    reply(MsgKind::kOrderReply, std::move(out));
  }

  void handle_weight_batch(const Frame& f) {
    Reader r{f.payload.data(), f.payload.size()};
    uint32_t ctx = r.u32();
    uint8_t mode = r.u8();  // 0 full order, 1 argmax
    if (mode > 1) throw std::runtime_error("protocol: unknown batch mode");
    uint32_t z = r.u32();
    if (z == 0) throw std::runtime_error("protocol: empty batch");
    std::vector<mpz_class> vals;
    vals.reserve(z);
    for (uint32_t i = 0; i < z; ++i) vals.push_back(dec(r.ct(keys_->pk)));
    r.expect_end();
    if (mode == 1) {
      const mpz_class* best = &vals[0];
      for (const mpz_class& v : vals)
        if (v > *best) best = &v;
      std::vector<uint8_t> out;
      put_u32(out, ctx);
      std::vector<uint32_t> top;
      for (uint32_t i = 0; i < z; ++i)
        if (vals[i] == *best) top.push_back(i);
      put_u32(out, static_cast<uint32_t>(top.size()));
      for (uint32_t i : top) put_u32(out, i);
      reply(MsgKind::kWinnerSetReply, std::move(out));
      return;
    }
    std::vector<size_t> order = order_of(vals);
    std::vector<uint8_t> ties(z, 0);
    for (uint32_t i = 1; i < z; ++i) ties[i] = vals[order[i]] == vals[order[i - 1]] ? 1 : 0;
    send_order_reply(ctx, order, ties);
  }

  void handle_bid_batch(const Frame& f) {
    Reader r{f.payload.data(), f.payload.size()};
    uint32_t ctx = r.u32();
    uint32_t z = r.u32();
    if (z == 0) throw std::runtime_error("protocol: empty batch");
    std::vector<mpz_class> vals(z);
    std::vector<long long> divs(z);
    for (uint32_t i = 0; i < z; ++i) {
      r.u32();  // pseudonym, informational
      divs[i] = r.u32();
      if (divs[i] < 1) throw std::runtime_error("protocol: divisor must be positive");
      vals[i] = dec(r.ct(keys_->pk));
    }
    r.expect_end();
    // Exact rational compare: masked values share one mask pair, so the
    // cross product ranks vals[i]/divs[i] exactly like the true bids.
    std::vector<size_t> idx(z);
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
      return vals[a] * z_of(divs[b]) > vals[b] * z_of(divs[a]);
    });
    std::vector<uint8_t> ties(z, 0);
    for (uint32_t i = 1; i < z; ++i) {
      size_t a = idx[i - 1], b = idx[i];
      ties[i] = vals[a] * z_of(divs[b]) == vals[b] * z_of(divs[a]) ? 1 : 0;
    }
    send_order_reply(ctx, idx, ties);
  }

  void handle_payment_batch(const Frame& f) {
    Reader r{f.payload.data(), f.payload.size()};
    uint32_t ctx = r.u32();
    uint8_t aggregate = r.u8();
    r.u32();  // winner id, informational
    uint32_t z = r.u32();
    std::vector<long long> vals;
    vals.reserve(z);
    for (uint32_t i = 0; i < z; ++i) vals.push_back(to_ll(dec(r.ct(keys_->pk))));
    r.expect_end();
    std::vector<uint8_t> out;
    put_u32(out, ctx);
    if (aggregate) {
      // The payment is the largest lower-bound term, floored at zero.
      long long p = 0;
      for (long long v : vals) p = std::max(p, v);
      put_u32(out, 1);
      put_i64(out, p);
    } else {
      put_u32(out, z);
      for (long long v : vals) put_i64(out, v);
    }
    reply(MsgKind::kPaymentReply, std::move(out));
  }

  void handle_final(const Frame& f) {
    Reader r{f.payload.data(), f.payload.size()};
    uint32_t nwin = r.u32();
    for (uint32_t i = 0; i < nwin; ++i) {
      int id = static_cast<int>(r.u32());
      long long pay = r.i64();
      uint32_t nch = r.u32();
      std::set<int> chans;
      for (uint32_t c = 0; c < nch; ++c) chans.insert(static_cast<int>(r.u32()));
      alloc_.winners.insert(id);
      alloc_.channel_assignment[id] = std::move(chans);
      pays_[id] = pay;
    }
    alloc_.weight = r.i64();
    r.expect_end();
  }

  const KeyPair* keys_;
  Transport* tr_;
  Recorder* rec_;
  Allocation alloc_;
  std::map<int, long long> pays_;
};

// ---------------------------------------------------------------------------
// Agent: holds ciphertexts and the public key only. Every bid-dependent
// decision becomes a masked exchange; everything else runs locally on the
// bid-stripped scenario.

struct AgentCore {
  const Scenario* s;  // bids zeroed
  const PublicKey* pk;
  std::map<int, Ciphertext> enc;
  std::map<int, int> pi;  // bidder id -> wire pseudonym
  Transport* tr;
  Recorder* rec;
  Rng rng;
  long long ceiling;

  AgentCore(const Scenario& stripped, const PublicKey& pubkey, std::map<int, Ciphertext> cts,
            std::map<int, int> perm, Transport& transport, Recorder& recorder,
            const ProtocolConfig& cfg)
      : s(&stripped),
        pk(&pubkey),
        enc(std::move(cts)),
        pi(std::move(perm)),
        tr(&transport),
        rec(&recorder),
        rng(cfg.mask_seed),
        ceiling(cfg.bid_ceiling) {}

  void send(MsgKind kind, std::vector<uint8_t> payload) {
    send_frame(*tr, *rec, 'A', kind, std::move(payload));
  }

  Frame recv_reply(MsgKind want) {
    Frame f = recv_frame(*tr);
    if (f.kind == MsgKind::kShutdown) throw std::runtime_error("protocol: auctioneer aborted");
    if (f.kind != want) throw std::runtime_error("protocol: unexpected reply kind");
    return f;
  }

  Ciphertext enc_value(const mpz_class& m) {
    mpz_class v = m % pk->n;
    if (v < 0) v += pk->n;
    return encrypt(*pk, v, rng);
  }

  // E(e) assembled homomorphically from the bid ciphertexts.
  Ciphertext expr_ct(const LinExpr& e) {
    Ciphertext acc = enc_value(z_of(e.constant));
    int homs = 0;
    for (const auto& [id, c] : e.coeff) {
      auto it = enc.find(id);
      if (it == enc.end()) throw std::logic_error("protocol: expression names unknown bidder");
      acc = hom_add(*pk, acc, hom_scale_signed(*pk, it->second, z_of(c)));
      homs += 2;
    }
    if (homs) rec->count_homs(homs);
    return acc;
  }

  // |e| is bounded by the public bid ceiling; the mask widths hang off this.
  mpz_class expr_bound(const LinExpr& e) const {
    mpz_class b = e.constant < 0 ? z_of(-e.constant) : z_of(e.constant);
    for (const auto& [id, c] : e.coeff) b += z_of(c < 0 ? -c : c) * z_of(ceiling);
    return b;
  }

  // Additive mask width that still fits the signed plaintext range after the
  // multiplier and the value bound take their share.
  unsigned fit_gamma_add(const mpz_class& w_max, unsigned extra_bits) const {
    size_t limit_bits = mpz_sizeinbase(pk->n.get_mpz_t(), 2) - 1;  // n/2
    mpz_class w = w_max < 1 ? mpz_class(1) : w_max;
    size_t wb = mpz_sizeinbase(w.get_mpz_t(), 2);
    long avail = static_cast<long>(limit_bits) - 64 - static_cast<long>(wb) - 2 -
                 static_cast<long>(extra_bits);
    if (avail < 32) throw std::invalid_argument("protocol: modulus too small for mask widths");
    return static_cast<unsigned>(std::min<long>(avail, 768));
  }

  MaskPair draw_ctx_mask(const mpz_class& w_max, unsigned extra_bits) {
    MaskConfig mc;
    mc.w_max = w_max;
    mc.signed_values = true;
    mc.gamma_add = fit_gamma_add(w_max, extra_bits);
    return draw_mask(*pk, mc, rng);
  }
};

class ProtocolBackend final : public DecisionBackend {
 public:
  explicit ProtocolBackend(AgentCore& core) : a_(&core) {}

  std::vector<size_t> order_desc(const std::string& ctx,
                                 const std::vector<LinExpr>& values) override {
    std::vector<size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    if (values.size() < 2) return idx;
    // Pairwise comparisons instead of one masked batch: a grid can hold far
    // more candidate sets than distinct bidders, and a single batch of that
    // shape would hand the auctioneer more relations than unknowns.
    std::stable_sort(idx.begin(), idx.end(), [&](size_t x, size_t y) {
      std::string label = ctx + "/cmp" + std::to_string(cmp_counter_++);
      return sign(label, values[x] - values[y]) > 0;
    });
    return idx;
  }

  std::vector<size_t> order_ratios(const std::string& ctx, const std::vector<LinExpr>& values,
                                   const std::vector<long long>& divisors) override {
    if (values.size() != divisors.size())
      throw std::invalid_argument("order_ratios: size mismatch");
    std::vector<size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    if (values.size() < 2) return idx;

    long long max_div = 1;
    std::vector<int> raw_ids;
    raw_ids.reserve(values.size());
    for (size_t i = 0; i < values.size(); ++i) {
      const LinExpr& e = values[i];
      if (e.constant != 0 || e.coeff.size() != 1 || e.coeff.begin()->second != 1)
        throw std::invalid_argument("order_ratios: expected one plain bid per entry");
      raw_ids.push_back(e.coeff.begin()->first);
      if (divisors[i] < 1) throw std::invalid_argument("order_ratios: divisor must be positive");
      max_div = std::max(max_div, divisors[i]);
    }

    // One shared mask pair: m_i = dm*b_i + da*N_i, so cross products cancel
    // the masks and rank b_i/N_i exactly. The offset is scaled by each
    // divisor, which costs extra headroom in the additive width.
    unsigned extra = static_cast<unsigned>(mpz_sizeinbase(z_of(max_div).get_mpz_t(), 2)) + 1;
    MaskPair mask = a_->draw_ctx_mask(z_of(a_->ceiling), extra);
    if (mask.delta_mult * z_of(a_->ceiling) + mask.delta_add * z_of(max_div) >= a_->pk->n / 2)
      throw std::logic_error("order_ratios: mask overflow");

    uint32_t cs = a_->rec->fresh_ctx();
    std::vector<uint8_t> payload;
    put_u32(payload, cs);
    put_u32(payload, static_cast<uint32_t>(values.size()));
    BidBatchRecord rec_entry{cs, raw_ids, {}};
    for (size_t i = 0; i < values.size(); ++i) {
      Ciphertext ct = hom_add(*a_->pk, hom_scale(*a_->pk, a_->enc.at(raw_ids[i]), mask.delta_mult),
                              a_->enc_value(mask.delta_add * z_of(divisors[i])));
      a_->rec->count_homs(2);
      auto wire = static_cast<uint32_t>(a_->pi.at(raw_ids[i]));
      rec_entry.wire_ids.push_back(wire);
      put_u32(payload, wire);
      put_u32(payload, static_cast<uint32_t>(divisors[i]));
      put_ct(payload, *a_->pk, ct);
    }
    std::set<int> distinct(raw_ids.begin(), raw_ids.end());
    a_->rec->note_context(MaskContextStat{cs, ctx, static_cast<int>(values.size()),
                                          static_cast<int>(distinct.size()),
                                          mask_fingerprint(mask), is_masking(mask)});
    a_->rec->note_bid_batch(std::move(rec_entry));
    a_->send(MsgKind::kMaskedBidBatch, std::move(payload));
    return parse_order(cs, values.size()).first;
  }

  size_t argmax(const std::string& ctx, const std::vector<LinExpr>& values) override {
    if (values.empty()) throw std::invalid_argument("argmax: empty input");
    if (values.size() == 1) return 0;

    std::set<int> distinct;
    for (const LinExpr& e : values)
      for (const auto& [id, c] : e.coeff) distinct.insert(id);
    if (values.size() >= distinct.size() + 2) {
      // Too many entries for one mask pair; fall back to a tournament of
      // pairwise sign tests, each under its own mask.
      size_t best = 0;
      for (size_t j = 1; j < values.size(); ++j) {
        std::string label = ctx + "/t" + std::to_string(j);
        if (sign(label, values[j] - values[best]) > 0) best = j;
      }
      return best;
    }

    mpz_class bound(1);
    for (const LinExpr& e : values) bound = std::max(bound, a_->expr_bound(e));
    MaskPair mask = a_->draw_ctx_mask(bound, 0);
    uint32_t cs = a_->rec->fresh_ctx();
    std::vector<uint8_t> payload;
    put_u32(payload, cs);
    put_u8(payload, 1);  // argmax mode
    put_u32(payload, static_cast<uint32_t>(values.size()));
    for (const LinExpr& e : values) {
      Ciphertext ct = mask_affine(*a_->pk, a_->expr_ct(e), mask, bound, a_->rng);
      a_->rec->count_homs(2);
      put_ct(payload, *a_->pk, ct);
    }
    a_->rec->note_context(MaskContextStat{cs, ctx, static_cast<int>(values.size()),
                                          static_cast<int>(distinct.size()),
                                          mask_fingerprint(mask), is_masking(mask)});
    a_->send(MsgKind::kMaskedWeightBatch, std::move(payload));

    Frame f = a_->recv_reply(MsgKind::kWinnerSetReply);
    Reader r{f.payload.data(), f.payload.size()};
    if (r.u32() != cs) throw std::runtime_error("protocol: reply for wrong context");
    uint32_t cnt = r.u32();
    if (cnt == 0) throw std::runtime_error("protocol: empty winner set");
    size_t best = values.size();
    for (uint32_t i = 0; i < cnt; ++i) best = std::min(best, static_cast<size_t>(r.u32()));
    r.expect_end();
    if (best >= values.size()) throw std::runtime_error("protocol: winner index out of range");
    return best;
  }

  long long reveal(const std::string& ctx, const LinExpr& e) override {
    (void)ctx;
    std::vector<long long> vals = reveal_components(0, false, {e});
    return vals.at(0);
  }

  // Sanctioned payment lane: ciphertexts go over unmasked, the auctioneer
  // decrypts and, in fold mode, applies the max-with-zero payment rule.
  std::vector<long long> reveal_components(int winner_id, bool fold,
                                           const std::vector<LinExpr>& terms) {
    uint32_t cs = a_->rec->fresh_ctx();
    std::vector<uint8_t> payload;
    put_u32(payload, cs);
    put_u8(payload, fold ? 1 : 0);
    put_u32(payload, static_cast<uint32_t>(winner_id));
    put_u32(payload, static_cast<uint32_t>(terms.size()));
    for (const LinExpr& e : terms) put_ct(payload, *a_->pk, a_->expr_ct(e));
    a_->send(MsgKind::kPaymentComponentBatch, std::move(payload));

    Frame f = a_->recv_reply(MsgKind::kPaymentReply);
    Reader r{f.payload.data(), f.payload.size()};
    if (r.u32() != cs) throw std::runtime_error("protocol: reply for wrong context");
    uint32_t z = r.u32();
    std::vector<long long> vals;
    vals.reserve(z);
    for (uint32_t i = 0; i < z; ++i) vals.push_back(r.i64());
    r.expect_end();
    if (vals.size() != (fold ? 1u : terms.size()))
      throw std::runtime_error("protocol: payment reply size mismatch");
    return vals;
  }

 protected:
  int sign_impl(const std::string& ctx, const LinExpr& e) override {
    mpz_class bound = a_->expr_bound(e);
    MaskPair mask = a_->draw_ctx_mask(bound, 0);
    Ciphertext masked = mask_affine(*a_->pk, a_->expr_ct(e), mask, bound, a_->rng);
    a_->rec->count_homs(2);
    Ciphertext baseline = a_->enc_value(mask.delta_add);

    uint32_t cs = a_->rec->fresh_ctx();
    std::vector<uint8_t> payload;
    put_u32(payload, cs);
    put_u8(payload, 0);  // full-order mode over the pair
    put_u32(payload, 2);
    put_ct(payload, *a_->pk, masked);
    put_ct(payload, *a_->pk, baseline);
    a_->rec->note_context(MaskContextStat{cs, ctx, 2, static_cast<int>(e.coeff.size()),
                                          mask_fingerprint(mask), is_masking(mask)});
    a_->send(MsgKind::kMaskedWeightBatch, std::move(payload));

    auto [order, ties] = parse_order(cs, 2);
    if (ties[1]) return 0;
    return order[0] == 0 ? 1 : -1;
  }

 private:
  static bool is_masking(const MaskPair& m) { return m.delta_mult != 1 || m.delta_add != 0; }

  std::pair<std::vector<size_t>, std::vector<uint8_t>> parse_order(uint32_t cs, size_t z) {
    Frame f = a_->recv_reply(MsgKind::kOrderReply);
    Reader r{f.payload.data(), f.payload.size()};
    if (r.u32() != cs) throw std::runtime_error("protocol: reply for wrong context");
    if (r.u32() != z) throw std::runtime_error("protocol: order reply size mismatch");
    std::vector<size_t> order(z);
    std::vector<bool> seen(z, false);
    for (size_t i = 0; i < z; ++i) {
      order[i] = r.u32();
      if (order[i] >= z || seen[order[i]])
        throw std::runtime_error("protocol: order reply is not a permutation");
      seen[order[i]] = true;
    }
    std::vector<uint8_t> ties(z);
    for (size_t i = 0; i < z; ++i) ties[i] = r.u8();
    r.expect_end();
    return {std::move(order), std::move(ties)};
  }

  AgentCore* a_;
  size_t cmp_counter_ = 0;
};

// Drives one full auction from the agent's seat.
class AgentRunner {
 public:
  AgentRunner(AgentCore& core) : core_(&core), backend_(core) {}

  void run_sua(int k, size_t cap) {
    SuaResult r = ptas_allocate_core(*core_->s, k, cap, backend_);
    std::map<int, long long> pays;
    for (int w : r.allocation.winners) {
      std::vector<LinExpr> terms = sua_payment_terms(w, r);
      pays[w] = terms.empty() ? 0 : backend_.reveal_components(w, true, terms).at(0);
    }
    send_final(r.allocation, pays);
  }

  void run_mua() {
    MuaResult r = mua_allocate_core(*core_->s, backend_);
    narrate(r);
    std::map<int, long long> pays;
    for (int w : r.allocation.winners)
      pays[w] = mua_critical(*core_->s, r, w, backend_, core_->ceiling);
    send_final(r.allocation, pays);
  }

  void run_emua() {
    EmuaFill f = emua_allocate_core(*core_->s, backend_);
    narrate(f.base);
    std::map<int, long long> pays;
    for (int w : f.final_alloc.winners)
      pays[w] = emua_critical(*core_->s, f, w, backend_, core_->ceiling);
    send_final(f.final_alloc, pays);
  }

 private:
  // The square and type picks are public outcomes; announcing them keeps the
  // auctioneer's view of the run complete.
  void narrate(const MuaResult& r) {
    for (const SquareSolution& sq : r.squares) {
      std::vector<uint8_t> p;
      put_i64(p, sq.cell);
      put_u8(p, static_cast<uint8_t>(sq.grid_type));
      put_u8(p, static_cast<uint8_t>(sq.picked_subcell));
      core_->send(MsgKind::kSubcellPick, std::move(p));
    }
    std::vector<uint8_t> p;
    put_u8(p, static_cast<uint8_t>(r.picked_type));
    core_->send(MsgKind::kTypePick, std::move(p));
  }

  void send_final(const Allocation& a, const std::map<int, long long>& pays) {
    std::vector<uint8_t> p;
    put_u32(p, static_cast<uint32_t>(a.winners.size()));
    for (int id : a.winners) {
      put_u32(p, static_cast<uint32_t>(id));
      put_i64(p, pays.at(id));
      const std::set<int>& chans = a.channel_assignment.at(id);
      put_u32(p, static_cast<uint32_t>(chans.size()));
      for (int c : chans) put_u32(p, static_cast<uint32_t>(c));
    }
    put_i64(p, a.weight);
    core_->send(MsgKind::kFinalAllocation, std::move(p));
  }

  AgentCore* core_;
  ProtocolBackend backend_;
};

std::map<int, int> make_permutation(const Scenario& s, uint64_t seed) {
  std::vector<int> ids;
  ids.reserve(s.bidders.size());
  for (const Bidder& b : s.bidders) ids.push_back(b.id);
  std::sort(ids.begin(), ids.end());
  std::vector<int> image = ids;
  Rng rng(seed);
  for (size_t i = image.size(); i > 1; --i) {
    auto j = static_cast<size_t>(mpz_get_ui(rng.below(static_cast<unsigned long>(i)).get_mpz_t()));
    std::swap(image[i - 1], image[j]);
  }
  std::map<int, int> pi;
  for (size_t i = 0; i < ids.size(); ++i) pi[ids[i]] = image[i];
  return pi;
}

enum class Mech { kSua, kMua, kEmua };

ProtocolResult run_protocol(const Scenario& s, const KeyPair& keys, const ProtocolConfig& cfg,
                            Mech mech) {
  if (!keys.has_secret())
    throw std::invalid_argument("protocol: the auctioneer needs the secret key");
  if (cfg.bid_ceiling < 1) throw std::invalid_argument("protocol: bid_ceiling must be positive");
  s.validate();
  for (const Bidder& b : s.bidders) {
    if (b.bid > cfg.bid_ceiling)
      throw std::invalid_argument("protocol: bid exceeds the public ceiling");
  }

  // Bidders encrypt under the auctioneer's key; the agent receives only the
  // ciphertexts plus the public scenario geometry.
  Scenario stripped = s;
  for (Bidder& b : stripped.bidders) {
    b.bid = 0;
    b.valuation = 0;
  }
  Rng enc_rng(cfg.mask_seed ^ 0x5deece66dull);
  std::map<int, Ciphertext> enc;
  {
    std::vector<int> ids;
    for (const Bidder& b : s.bidders) ids.push_back(b.id);
    std::sort(ids.begin(), ids.end());
    for (int id : ids) enc[id] = encrypt(keys.pk, z_of(s.bidder(id).bid), enc_rng);
  }
  std::map<int, int> pi = make_permutation(s, cfg.perm_seed);

  auto [agent_tr, auct_tr] = make_memory_transport();
  Recorder rec;
  Auctioneer auctioneer(keys, *auct_tr, rec);
  std::exception_ptr auct_err;
  std::thread responder([&] {
    try {
      auctioneer.serve();
    } catch (...) {
      auct_err = std::current_exception();
      try {
        send_frame(*auct_tr, rec, 'U', MsgKind::kShutdown, {});
      } catch (...) {
      }
    }
  });

  std::exception_ptr agent_err;
  {
    AgentCore core(stripped, keys.pk, std::move(enc), pi, *agent_tr, rec, cfg);
    AgentRunner agent(core);
    try {
      switch (mech) {
        case Mech::kSua:
          agent.run_sua(cfg.k, cfg.set_cap);
          break;
        case Mech::kMua:
          agent.run_mua();
          break;
        case Mech::kEmua:
          agent.run_emua();
          break;
      }
    } catch (...) {
      agent_err = std::current_exception();
      try {
        send_frame(*agent_tr, rec, 'A', MsgKind::kShutdown, {});
      } catch (...) {
      }
    }
  }
  responder.join();
  if (agent_err) std::rethrow_exception(agent_err);
  if (auct_err) std::rethrow_exception(auct_err);

  Transcript t = std::move(rec.t);
  t.permutation = std::move(pi);
  t.allocation = auctioneer.allocation();
  t.payments = auctioneer.payments();
  // The announced outcome must hold up against the real bids.
  check_allocation(s, t.allocation);

  ProtocolResult out;
  out.allocation = t.allocation;
  out.payments.by_winner = t.payments;
  out.transcript = std::move(t);
  return out;
}

}  // namespace

const char* msg_kind_name(MsgKind k) {
  switch (k) {
    case MsgKind::kShutdown:
      return "Shutdown";
    case MsgKind::kMaskedWeightBatch:
      return "MaskedWeightBatch";
    case MsgKind::kOrderReply:
      return "OrderReply";
    case MsgKind::kMaskedBidBatch:
      return "MaskedBidBatch";
    case MsgKind::kWinnerSetReply:
      return "WinnerSetReply";
    case MsgKind::kSubcellPick:
      return "SubcellPick";
    case MsgKind::kTypePick:
      return "TypePick";
    case MsgKind::kPaymentComponentBatch:
      return "PaymentComponentBatch";
    case MsgKind::kPaymentReply:
      return "PaymentReply";
    case MsgKind::kFinalAllocation:
      return "FinalAllocation";
  }
  return "Unknown";
}

size_t ProtocolMessage::size_bytes() const { return kFrameHeader + payload.size(); }

long long PaymentSchedule::total() const {
  long long t = 0;
  for (const auto& [id, p] : by_winner) t += p;
  return t;
}

std::string Transcript::to_jsonl() const {
  std::ostringstream out;
  for (const ProtocolMessage& m : messages) {
    nlohmann::json j;
    j["seq"] = m.seq;
    j["sender"] = m.sender == 'A' ? "agent" : "auctioneer";
    j["kind"] = msg_kind_name(m.kind);
    j["size_bytes"] = m.size_bytes();
    j["payload_digest"] = hex64(fnv1a(m.payload.data(), m.payload.size()));
    out << j.dump() << "\n";
  }
  return out.str();
}

std::pair<std::unique_ptr<Transport>, std::unique_ptr<Transport>> make_memory_transport() {
  auto a_to_u = std::make_shared<Mailbox>();
  auto u_to_a = std::make_shared<Mailbox>();
  return {std::make_unique<MemoryEndpoint>(a_to_u, u_to_a),
          std::make_unique<MemoryEndpoint>(u_to_a, a_to_u)};
}

ProtocolResult run_pps_sua(const Scenario& s, const KeyPair& keys, const ProtocolConfig& cfg) {
  return run_protocol(s, keys, cfg, Mech::kSua);
}

ProtocolResult run_pps_mua(const Scenario& s, const KeyPair& keys, const ProtocolConfig& cfg) {
  return run_protocol(s, keys, cfg, Mech::kMua);
}

ProtocolResult run_pps_emua(const Scenario& s, const KeyPair& keys, const ProtocolConfig& cfg) {
  return run_protocol(s, keys, cfg, Mech::kEmua);
}

CommStats comm_stats(const Transcript& t) {
  CommStats cs;
  for (const ProtocolMessage& m : t.messages) {
    size_t b = m.size_bytes();
    cs.total_bytes += b;
    cs.message_count += 1;
    cs.bytes_by_kind[msg_kind_name(m.kind)] += b;
    if (m.sender == 'A')
      cs.agent_bytes += b;
    else
      cs.auctioneer_bytes += b;
  }
  cs.auctioneer_decryptions = t.auctioneer_decryptions;
  cs.agent_hom_ops = t.agent_hom_ops;
  return cs;
}

AuditReport audit_privacy(const Transcript& t) {
  AuditReport rep;

  std::map<uint32_t, const MaskContextStat*> by_ctx;
  for (const MaskContextStat& c : t.contexts) {
    if (!by_ctx.emplace(c.ctx_seq, &c).second)
      rep.violations.push_back("duplicate mask context " + std::to_string(c.ctx_seq));
  }

  // Every masked-lane ciphertext batch must be annotated with a real mask.
  for (const ProtocolMessage& m : t.messages) {
    if (m.kind != MsgKind::kMaskedWeightBatch && m.kind != MsgKind::kMaskedBidBatch) continue;
    ++rep.messages_checked;
    if (m.payload.size() < 4) {
      rep.violations.push_back("truncated batch at seq " + std::to_string(m.seq));
      continue;
    }
    uint32_t cs = (uint32_t(m.payload[0]) << 24) | (uint32_t(m.payload[1]) << 16) |
                  (uint32_t(m.payload[2]) << 8) | uint32_t(m.payload[3]);
    auto it = by_ctx.find(cs);
    if (it == by_ctx.end()) {
      rep.violations.push_back("no mask annotation for batch at seq " + std::to_string(m.seq));
    } else if (!it->second->masked) {
      rep.violations.push_back("unmasked values sent in context '" + it->second->label +
                               "' at seq " + std::to_string(m.seq));
    }
  }

  // Wire ids in per-bidder batches must be the recorded pseudonyms.
  for (const BidBatchRecord& bb : t.bid_batches) {
    if (bb.raw_ids.size() != bb.wire_ids.size()) {
      rep.violations.push_back("bid batch " + std::to_string(bb.ctx_seq) + " has mismatched ids");
      continue;
    }
    for (size_t i = 0; i < bb.raw_ids.size(); ++i) {
      auto pit = t.permutation.find(bb.raw_ids[i]);
      if (pit == t.permutation.end()) {
        rep.violations.push_back("bid batch " + std::to_string(bb.ctx_seq) +
                                 " names unknown bidder " + std::to_string(bb.raw_ids[i]));
        continue;
      }
      if (bb.wire_ids[i] != static_cast<uint32_t>(pit->second)) {
        bool raw_leak = bb.wire_ids[i] == static_cast<uint32_t>(bb.raw_ids[i]);
        rep.violations.push_back(
            (raw_leak ? "raw bidder id " : "wrong pseudonym for bidder ") +
            std::to_string(bb.raw_ids[i]) + " on the wire in context " +
            std::to_string(bb.ctx_seq));
      }
    }
  }

  // Fresh masks per batch, and each batch must stay underdetermined: fewer
  // disclosed relations than bid variables plus the two mask unknowns.
  std::map<uint64_t, uint32_t> seen_masks;
  for (const MaskContextStat& c : t.contexts) {
    ++rep.contexts_checked;
    auto [it, fresh] = seen_masks.emplace(c.mask_digest, c.ctx_seq);
    if (!fresh) {
      rep.violations.push_back("mask pair reused across contexts " + std::to_string(it->second) +
                               " and " + std::to_string(c.ctx_seq));
    }
    if (c.relations >= c.distinct_bids + 2) {
      rep.violations.push_back("context '" + c.label + "' discloses " +
                               std::to_string(c.relations) + " relations over " +
                               std::to_string(c.distinct_bids) + " bids");
    }
  }

  return rep;
}

AuditReport audit_privacy(const Transcript& a, const Transcript& b) {
  AuditReport rep = audit_privacy(a);
  if (a.allocation.winners != b.allocation.winners)
    rep.violations.push_back("winner sets differ between runs");
  if (a.allocation.channel_assignment != b.allocation.channel_assignment)
    rep.violations.push_back("channel assignments differ between runs");
  if (a.allocation.weight != b.allocation.weight)
    rep.violations.push_back("allocation weights differ between runs");
  if (a.payments != b.payments) rep.violations.push_back("payments differ between runs");
  return rep;
}

}  // namespace pps
