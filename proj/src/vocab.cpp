#include "provtrace/vocab.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include "provtrace/errors.hpp"
#include "json.hpp"

namespace provtrace {

using nlohmann::json;

Vocabulary::Vocabulary(const DatasetSchema& schema) {
  schema.validate();
  tokens_ = {"[PAD]", "[DTC]", "[END]", "[MASK]"};
  for (const auto& obj : schema.objects) {
    for (const auto& act : schema.actions) {
      tokens_.push_back(obj + "_" + act);
    }
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    index_.emplace(tokens_[i], static_cast<int>(i));
  }
}

Vocabulary::Vocabulary(std::vector<std::string> tokens)
    : tokens_(std::move(tokens)) {
  if (tokens_.size() < kSpecials || tokens_[0] != "[PAD]" ||
      tokens_[1] != "[DTC]" || tokens_[2] != "[END]" ||
      tokens_[3] != "[MASK]") {
    throw ContractError(
        "vocabulary must start with [PAD],[DTC],[END],[MASK]");
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw ContractError("vocabulary: duplicate token '" + tokens_[i] + "'");
    }
  }
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) {
    throw ContractError("token '" + token + "' not in vocabulary");
  }
  return it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw ContractError("token id out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::uint64_t Vocabulary::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 0x100000001b3ULL;
  };
  for (const auto& t : tokens_) {
    for (unsigned char c : t) mix(c);
    mix('\n');
  }
  return h;
}

void Vocabulary::save(std::ostream& out) const {
  out << json(tokens_).dump(2) << '\n';
}

Vocabulary Vocabulary::load(std::istream& in) {
  json j;
  try {
    in >> j;
  } catch (const json::exception& ex) {
    throw ContractError(std::string("vocabulary file: ") + ex.what());
  }
  return Vocabulary(j.get<std::vector<std::string>>());
}

std::vector<double> assign_slots(const std::vector<double>& deltas, double w) {
  if (deltas.empty()) throw ContractError("assign_slots: no events");
  if (!(w > 0.0) || !std::isfinite(w)) {
    throw ContractError("assign_slots: window must be finite and positive");
  }
  std::vector<long long> idx(deltas.size());
  double cumulative = 0.0;
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    if (!(deltas[i] >= 0.0) || !std::isfinite(deltas[i])) {
      throw ContractError("assign_slots: deltas must be finite and >= 0");
    }
    cumulative += deltas[i];
    idx[i] = static_cast<long long>(std::floor(cumulative / w)) + 1;
  }
  const long long total = idx.back();  // deltas >= 0 make idx non-decreasing
  std::vector<double> slots(deltas.size());
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    slots[i] = static_cast<double>(std::min(idx[i], total)) /
               static_cast<double>(total);
  }
  return slots;
}

std::size_t EmbeddedSequence::content_length() const {
  std::size_t m = 0;
  for (std::size_t k = 1; k < token_ids.size(); ++k) {
    if (token_ids[k] == Vocabulary::kEnd) {
      m = k - 1;
      break;
    }
  }
  return m;
}

EmbeddedSequence encode(const Trace& trace, const Vocabulary& vocab,
                        const EncodeConfig& cfg, Rng& rng) {
  const std::size_t max_length = trace.events.size();
  if (max_length == 0) throw ContractError("encode: empty trace");

  std::vector<int> content_ids;
  std::vector<double> content_deltas;
  for (const auto& ev : trace.events) {
    if (ev.is_pad()) break;  // pads only trail in a finalized trace
    content_ids.push_back(vocab.id(ev.token));
    content_deltas.push_back(ev.time_delta.value_or(0.0));
  }
  const std::size_t m = content_ids.size();
  if (m == 0) throw ContractError("encode: trace has no content events");

  std::vector<double> slots(m, 0.0);
  if (cfg.use_temporal) {
    slots = assign_slots(content_deltas, cfg.temporal.window_seconds);
  }

  const std::size_t L = max_length + 2;
  EmbeddedSequence seq;
  seq.token_ids.assign(L, Vocabulary::kPad);
  seq.slot_values.assign(L, 0.0);
  seq.attention_mask.assign(L, false);
  seq.mlm_targets.assign(L, -1);
  seq.label = trace.malicious;

  seq.token_ids[0] = Vocabulary::kDtc;
  for (std::size_t i = 0; i < m; ++i) {
    seq.token_ids[1 + i] = content_ids[i];
    seq.slot_values[1 + i] = slots[i];
  }
  seq.token_ids[m + 1] = Vocabulary::kEnd;
  for (std::size_t k = 0; k < m + 2; ++k) seq.attention_mask[k] = true;

  if (cfg.p_mask > 0.0) {
    // redraw until at least one content position is masked
    std::size_t masked = 0;
    do {
      masked = 0;
      for (std::size_t i = 0; i < m; ++i) {
        seq.mlm_targets[1 + i] = -1;
        if (rng.bernoulli(cfg.p_mask)) {
          seq.mlm_targets[1 + i] = content_ids[i];
          ++masked;
        }
      }
    } while (masked == 0);
    for (std::size_t i = 0; i < m; ++i) {
      if (seq.mlm_targets[1 + i] >= 0) {
        seq.token_ids[1 + i] = Vocabulary::kMask;
      }
    }
  }
  return seq;
}

void write_encoded(const std::vector<EmbeddedSequence>& seqs,
                   std::ostream& out) {
  for (const auto& s : seqs) {
    nlohmann::ordered_json j;
    j["token_ids"] = s.token_ids;
    j["slot_values"] = s.slot_values;
    j["mlm_targets"] = s.mlm_targets;
    out << j.dump() << '\n';
  }
}

}  // namespace provtrace
