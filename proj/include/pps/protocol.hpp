#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "pps/alloc_sua.hpp"
#include "pps/model.hpp"
#include "pps/paillier.hpp"

namespace pps {

// Two-party auction protocol. The agent holds the bidders' ciphertexts and
// the public key; it runs the allocation and payment logic but can never
// decrypt. The auctioneer holds the secret key and answers comparison
// queries, but only ever decrypts masked values (or sanctioned payment
// components), so neither party alone learns the raw bids.

// Everything that crosses the wire is one of these frames.
enum class MsgKind : uint8_t {
  kShutdown = 0,              // abort marker, only on error paths
  kMaskedWeightBatch = 1,     // agent -> auctioneer: masked linear forms to rank
  kOrderReply = 2,            // auctioneer -> agent: descending order plus tie flags
  kMaskedBidBatch = 3,        // agent -> auctioneer: per-bidder masked bids with divisors
  kWinnerSetReply = 4,        // auctioneer -> agent: indices tied for the maximum
  kSubcellPick = 5,           // agent -> auctioneer: which subcell won a square
  kTypePick = 6,              // agent -> auctioneer: which grid type won overall
  kPaymentComponentBatch = 7, // agent -> auctioneer: unmasked payment terms (sanctioned)
  kPaymentReply = 8,          // auctioneer -> agent: decrypted values or folded payment
  kFinalAllocation = 9,       // agent -> auctioneer: winners, channels, payments
};

const char* msg_kind_name(MsgKind k);

struct ProtocolMessage {
  uint32_t seq = 0;  // strictly increasing across both parties
  char sender = 'A';  // 'A' agent, 'U' auctioneer
  MsgKind kind = MsgKind::kShutdown;
  std::vector<uint8_t> payload;  // frame body after the header

  size_t size_bytes() const;  // payload plus frame header
};

// One fresh (multiplier, offset) mask pair scopes one batch. The audit
// needs to see how many masked values were put under each pair and how many
// bid variables they touch: the system of disclosed relations must stay
// underdetermined, so relations < distinct bids + the two mask unknowns.
struct MaskContextStat {
  uint32_t ctx_seq = 0;  // pairs the context with its wire messages
  std::string label;     // decision point, e.g. "c12.t3.s1/order"
  int relations = 0;     // masked values sent under this mask pair
  int distinct_bids = 0; // bid variables appearing across those values
  uint64_t mask_digest = 0;  // fingerprint of the pair, for reuse detection
  bool masked = true;
};

// What a per-bidder batch claimed on the wire versus who was really in it,
// so the audit can confirm ids were pseudonymized.
struct BidBatchRecord {
  uint32_t ctx_seq = 0;
  std::vector<int> raw_ids;
  std::vector<uint32_t> wire_ids;
};

struct Transcript {
  std::vector<ProtocolMessage> messages;
  std::vector<MaskContextStat> contexts;
  std::vector<BidBatchRecord> bid_batches;
  std::map<int, int> permutation;  // bidder id -> wire pseudonym
  int auctioneer_decryptions = 0;
  int agent_hom_ops = 0;           // homomorphic adds and scalings
  double auctioneer_ms = 0;        // time inside auctioneer handlers, not queue waits
  Allocation allocation;           // final outputs, for cross-run checks
  std::map<int, long long> payments;

  // One JSON object per message: seq, sender, kind, size, payload digest.
  std::string to_jsonl() const;
};

// Byte-frame channel between the two parties. The in-memory pair runs the
// auctioneer on a second thread; a socket implementation would slot in here.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual void send(std::vector<uint8_t> frame) = 0;
  virtual std::vector<uint8_t> recv() = 0;  // blocks until a frame arrives
};

// Two connected endpoints: first element for the agent, second for the
// auctioneer. Each side's send feeds the other side's recv.
std::pair<std::unique_ptr<Transport>, std::unique_ptr<Transport>> make_memory_transport();

struct ProtocolConfig {
  int k = 2;                          // shifting parameter for single-unit runs
  size_t set_cap = kDefaultSetCap;    // per-grid enumeration guard
  long long bid_ceiling = 1000000;    // public upper bound on any bid
  uint64_t mask_seed = 1;             // agent-side masking randomness
  uint64_t perm_seed = 1;             // id pseudonym shuffle
};

struct PaymentSchedule {
  std::map<int, long long> by_winner;

  long long total() const;
};

struct ProtocolResult {
  Allocation allocation;
  PaymentSchedule payments;
  Transcript transcript;
};

// Run the full protocol for one scenario: encrypt the bids, hand the agent a
// bid-stripped copy, and drive agent and auctioneer to the final allocation.
// The scenario keeps its plaintext bids only to encrypt them and to sanity
// check the announced outcome; keys must include the secret half.
ProtocolResult run_pps_sua(const Scenario& s, const KeyPair& keys, const ProtocolConfig& cfg);
ProtocolResult run_pps_mua(const Scenario& s, const KeyPair& keys, const ProtocolConfig& cfg);
ProtocolResult run_pps_emua(const Scenario& s, const KeyPair& keys, const ProtocolConfig& cfg);

struct CommStats {
  size_t total_bytes = 0;
  size_t message_count = 0;
  std::map<std::string, size_t> bytes_by_kind;
  size_t agent_bytes = 0;       // sent by the agent
  size_t auctioneer_bytes = 0;  // sent by the auctioneer
  int auctioneer_decryptions = 0;
  int agent_hom_ops = 0;
};

CommStats comm_stats(const Transcript& t);

struct AuditReport {
  std::vector<std::string> violations;
  size_t contexts_checked = 0;
  size_t messages_checked = 0;

  bool clean() const { return violations.empty(); }
};

// Mechanical checks over a finished transcript: every ciphertext batch
// outside the sanctioned payment lane is mask-annotated, wire ids match the
// recorded pseudonym map, no mask pair is reused across batches, and every
// mask context discloses fewer relations than it has unknowns.
AuditReport audit_privacy(const Transcript& t);

// Same checks on the first transcript, plus output invariance: two runs
// that differ only in masking and pseudonym seeds must announce identical
// winners, channels, weights and payments.
AuditReport audit_privacy(const Transcript& a, const Transcript& b);

}  // namespace pps
