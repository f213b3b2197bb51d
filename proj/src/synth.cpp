#include "provtrace/synth.hpp"

#include <algorithm>
#include <cstdio>

#include "provtrace/errors.hpp"
#include "provtrace/rng.hpp"

namespace provtrace {

namespace {

std::size_t categorical(const std::vector<double>& weights, Rng& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    u -= weights[i];
    if (u < 0.0) return i;
  }
  return weights.size() - 1;
}

std::size_t geometric(double p, Rng& rng) {
  std::size_t k = 0;
  while (!rng.bernoulli(p)) ++k;
  return k;
}

std::string padded(std::size_t v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%08zu", v);
  return buf;
}

struct HostState {
  std::string name;
  std::size_t event_counter = 0;
  std::size_t entity_counter = 0;
};

RawEvent make_event(HostState& host, const std::string& actor, double ts,
                    const DatasetSchema& schema, std::size_t obj_idx,
                    std::size_t act_idx) {
  RawEvent e;
  e.id = host.name + "-e" + padded(host.event_counter++);
  e.actor_id = actor;
  e.object_id = host.name + "-n" + padded(host.entity_counter++);
  e.object = schema.objects[obj_idx];
  e.action = schema.actions[act_idx];
  e.ts = ts;
  e.host = host.name;
  return e;
}

}  // namespace

void GeneratorConfig::validate(const DatasetSchema& schema) const {
  schema.validate();
  if (benign_object_weights.size() != schema.objects.size() ||
      malicious_object_weights.size() != schema.objects.size() ||
      benign_action_weights.size() != schema.actions.size() ||
      malicious_action_weights.size() != schema.actions.size()) {
    throw ContractError("generator weights do not match schema arity");
  }
  if (!(mean_malicious_delay > mean_benign_delay)) {
    throw ContractError(
        "generator requires mean_malicious_delay > mean_benign_delay");
  }
  if (chain_min == 0 || chain_min > chain_max) {
    throw ContractError("generator chain length range invalid");
  }
  if (branching_p <= 0.0 || branching_p > 1.0) {
    throw ContractError("generator branching_p must lie in (0, 1]");
  }
  if (stealth_fraction < 0.0 || stealth_fraction > 1.0) {
    throw ContractError("generator stealth_fraction must lie in [0, 1]");
  }
}

SynthOutput generate(const GeneratorConfig& cfg) {
  return generate(cfg, optc_schema());
}

SynthOutput generate(const GeneratorConfig& cfg, const DatasetSchema& schema) {
  cfg.validate(schema);
  SynthOutput out;
  out.schema = schema;

  for (std::size_t hi = 0; hi < cfg.n_hosts; ++hi) {
    Rng rng = Rng(cfg.seed).substream(hi + 1);
    HostState host;
    host.name = "host" + std::to_string(hi);

    struct NodeRef {
      std::size_t event_index;  // into out.events
      std::size_t depth;
    };
    std::vector<NodeRef> host_nodes;  // benign attachment points

    for (std::size_t ti = 0; ti < cfg.benign_trees_per_host; ++ti) {
      const double start = rng.uniform() * 86400.0;
      const std::string boot =
          host.name + "-boot" + std::to_string(ti);
      RawEvent root = make_event(host, boot, start, schema,
                                 categorical(cfg.benign_object_weights, rng),
                                 categorical(cfg.benign_action_weights, rng));
      const std::size_t root_index = out.events.size();
      out.events.push_back(root);
      host_nodes.push_back({root_index, 0});

      std::vector<NodeRef> frontier{{root_index, 0}};
      std::size_t tree_nodes = 1;
      while (!frontier.empty() && tree_nodes < cfg.max_tree_nodes) {
        NodeRef cur = frontier.back();
        frontier.pop_back();
        if (cur.depth + 1 >= cfg.depth_cap) continue;
        const std::size_t n_children = geometric(cfg.branching_p, rng);
        for (std::size_t c = 0;
             c < n_children && tree_nodes < cfg.max_tree_nodes; ++c) {
          const RawEvent& parent = out.events[cur.event_index];
          RawEvent child =
              make_event(host, parent.object_id,
                         parent.ts + rng.exponential(cfg.mean_benign_delay),
                         schema,
                         categorical(cfg.benign_object_weights, rng),
                         categorical(cfg.benign_action_weights, rng));
          out.true_parent[child.id] = parent.id;
          const std::size_t child_index = out.events.size();
          out.events.push_back(std::move(child));
          host_nodes.push_back({child_index, cur.depth + 1});
          frontier.push_back({child_index, cur.depth + 1});
          ++tree_nodes;
        }
      }
    }

    for (std::size_t ci = 0; ci < cfg.chains_per_host; ++ci) {
      const bool stealthy = rng.uniform() < cfg.stealth_fraction;
      const auto& obj_w = stealthy ? cfg.benign_object_weights
                                   : cfg.malicious_object_weights;
      const auto& act_w = stealthy ? cfg.benign_action_weights
                                   : cfg.malicious_action_weights;
      const std::size_t len =
          cfg.chain_min + rng.below(cfg.chain_max - cfg.chain_min + 1);
      const NodeRef attach = host_nodes[rng.below(host_nodes.size())];
      std::size_t parent_index = attach.event_index;
      std::vector<std::string> chain_ids;
      for (std::size_t k = 0; k < len; ++k) {
        const RawEvent& parent = out.events[parent_index];
        RawEvent ev = make_event(
            host, parent.object_id,
            parent.ts + rng.exponential(cfg.mean_malicious_delay), schema,
            categorical(obj_w, rng), categorical(act_w, rng));
        out.true_parent[ev.id] = parent.id;
        out.labels.malicious_event_ids.insert(ev.id);
        chain_ids.push_back(ev.id);
        parent_index = out.events.size();
        out.events.push_back(std::move(ev));
      }
      out.chains.push_back(std::move(chain_ids));
    }
  }

  std::sort(out.events.begin(), out.events.end(),
            [](const RawEvent& a, const RawEvent& b) {
              if (a.ts != b.ts) return a.ts < b.ts;
              return a.id < b.id;
            });
  return out;
}

}  // namespace provtrace
