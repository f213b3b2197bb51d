#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "provtrace/events.hpp"
#include "provtrace/rng.hpp"
#include "provtrace/traces.hpp"

namespace provtrace {

// Token ids: [PAD]=0, [DTC]=1, [END]=2, [MASK]=3, then object-action pairs
// in schema order. |V| = 4 + |objects| * |actions|.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kDtc = 1;
  static constexpr int kEnd = 2;
  static constexpr int kMask = 3;
  static constexpr int kSpecials = 4;

  explicit Vocabulary(const DatasetSchema& schema);
  explicit Vocabulary(std::vector<std::string> tokens);  // from vocab file

  int id(const std::string& token) const;  // throws on unknown token
  const std::string& token(int id) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::uint64_t fingerprint() const;  // FNV-1a over the ordered token list

  void save(std::ostream& out) const;  // JSON ordered token array
  static Vocabulary load(std::istream& in);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct TemporalConfig {
  double window_seconds = 2.0;
};

// Buckets cumulative event times into windows of w seconds and normalizes
// by the total slot count, so values lie in (0, 1] and the last event maps
// to exactly 1. Deltas are per-event offsets from the parent; the first
// entry is measured from the trace start.
std::vector<double> assign_slots(const std::vector<double>& deltas, double w);

// Model input for one finalized trace:
//   position 0           [DTC]
//   positions 1..m       content tokens (possibly [MASK]ed)
//   position m+1         [END]
//   positions m+2..L-1   [PAD]
// with L = max_length + 2.
struct EmbeddedSequence {
  std::vector<int> token_ids;
  std::vector<double> slot_values;    // 0 at specials and pads
  std::vector<bool> attention_mask;   // false at pads
  std::vector<int> mlm_targets;       // -1 except masked positions
  bool label = false;

  std::size_t length() const { return token_ids.size(); }
  std::size_t content_length() const;  // m
};

struct EncodeConfig {
  TemporalConfig temporal;
  double p_mask = 0.15;
  bool use_temporal = true;  // slots forced to 0 when off (ablation axis)
};

// Dynamic masking: positions are re-drawn on every call. When p_mask > 0
// and the trace has content, at least one position ends up masked.
// Throws on tokens absent from the vocabulary or negative deltas.
EmbeddedSequence encode(const Trace& trace, const Vocabulary& vocab,
                        const EncodeConfig& cfg, Rng& rng);

void write_encoded(const std::vector<EmbeddedSequence>& seqs,
                   std::ostream& out);

}  // namespace provtrace
