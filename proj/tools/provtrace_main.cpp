// provtrace: provenance-trace anomaly detection pipeline.
//
// Subcommands mirror the pipeline stages: synth -> ingest -> graph ->
// trace -> encode -> train -> eval, plus eda, sweep and compare. Every
// run writes a manifest with input hashes and the seed next to its
// outputs, so any result can be reproduced from the manifest alone.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "provtrace/checkpoint.hpp"
#include "provtrace/eda.hpp"
#include "provtrace/errors.hpp"
#include "provtrace/io_util.hpp"
#include "provtrace/manifest.hpp"
#include "provtrace/synth.hpp"
#include "provtrace/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace provtrace;

namespace {

struct Timer {
  std::chrono::steady_clock::time_point start =
      std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start)
        .count();
  }
};

std::string join_args(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) {
    if (i) s += ' ';
    s += argv[i];
  }
  return s;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open input: " + path);
  return in;
}

DatasetSchema schema_from(const std::string& path) {
  auto in = open_input(path);
  return load_schema(in);
}

std::vector<Trace> traces_from(const std::string& path) {
  auto in = open_input(path);
  return read_traces(in);
}

std::string out_path(const std::string& dir, const std::string& name) {
  return (fs::path(resolve_output_path(dir)) / name).string();
}

// ---- train/eval shared plumbing -------------------------------------------

struct TrainCli {
  std::string traces_path, schema_path, out_dir = ".";
  std::string test_traces_path;  // optional override (cross-corpus runs)
  TrainConfig cfg;
  std::string sample_benign = "all";
  std::vector<double> split_ratios{0.8, 0.1, 0.1};
  std::vector<double> weights{1.0, 1.0};
  bool no_temporal = false;
};

void add_train_options(CLI::App* cmd, TrainCli& t, bool need_seed = true) {
  cmd->add_option("--traces", t.traces_path, "trace JSONL input")
      ->required();
  cmd->add_option("--schema", t.schema_path, "schema JSON")->required();
  cmd->add_option("--out-dir", t.out_dir, "output directory");
  auto* seed = cmd->add_option("--seed", t.cfg.seed, "run seed");
  if (need_seed) seed->required();
  cmd->add_option("--model", t.cfg.model_kind,
                  "model kind: transformer|lstm");
  cmd->add_option("--epochs", t.cfg.epochs, "training epochs");
  cmd->add_option("--batch", t.cfg.batch_size, "mini-batch size");
  cmd->add_option("--lr", t.cfg.optimizer.lr, "learning rate");
  cmd->add_option("--weight-decay", t.cfg.optimizer.weight_decay,
                  "AdamW weight decay");
  cmd->add_option("--lambda", t.cfg.lambda_mlm,
                  "weight of the MLM term in the joint loss");
  cmd->add_option("--p-mask", t.cfg.p_mask, "dynamic masking rate");
  cmd->add_option("--window", t.cfg.window_seconds,
                  "temporal slot window (seconds)");
  cmd->add_option("--max-len", t.cfg.max_length, "trace length after pad");
  cmd->add_option("--d-model", t.cfg.d_model, "model width");
  cmd->add_option("--heads", t.cfg.n_heads, "attention heads");
  cmd->add_option("--layers", t.cfg.n_layers, "encoder layers");
  cmd->add_option("--d-ff", t.cfg.d_ff, "feed-forward width");
  cmd->add_option("--dropout", t.cfg.dropout, "dropout rate");
  cmd->add_option("--lstm-hidden", t.cfg.lstm_hidden, "LSTM hidden size");
  cmd->add_flag("--no-temporal", t.no_temporal,
                "drop the temporal slot signal");
  cmd->add_option("--sample-benign", t.sample_benign,
                  "train-split benign downsample target (count or 'all')");
  cmd->add_option("--split", t.split_ratios,
                  "train/val/test ratios (three numbers)")
      ->expected(3);
  cmd->add_option("--class-weights", t.weights,
                  "benign,malicious loss weights")
      ->expected(2);
  cmd->add_option("--test-traces", t.test_traces_path,
                  "separate trace file to test on (replaces the test split)");
}

TrainConfig finish_config(TrainCli& t) {
  TrainConfig cfg = t.cfg;
  cfg.use_temporal = !t.no_temporal;
  cfg.ratios = {t.split_ratios[0], t.split_ratios[1], t.split_ratios[2]};
  cfg.class_weights = {t.weights[0], t.weights[1]};
  if (t.sample_benign != "all") {
    cfg.sampling.benign_target = std::stoull(t.sample_benign);
  }
  return cfg;
}

json encode_settings_json(const TrainConfig& cfg) {
  json j;
  j["max_length"] = cfg.max_length;
  j["window_seconds"] = cfg.window_seconds;
  j["use_temporal"] = cfg.use_temporal;
  return j;
}

void save_model(const std::string& path, SequenceClassifier& model,
                const TrainConfig& cfg, const Vocabulary& vocab,
                std::uint64_t step) {
  CheckpointHeader header;
  header.kind = model.kind();
  json cj;
  cj["model"] = json::parse(model.config_json());
  cj["encode"] = encode_settings_json(cfg);
  header.config_json = cj.dump();
  header.vocab_fingerprint = vocab.fingerprint();
  header.step = step;
  std::vector<const Param*> params;
  for (Param* p : model.parameters()) params.push_back(p);
  ensure_parent_dir(path);
  save_checkpoint(path, header, params);
}

struct LoadedModel {
  std::unique_ptr<SequenceClassifier> model;
  TrainConfig cfg;  // encode settings restored from the header
};

LoadedModel load_model(const std::string& path, const Vocabulary& vocab) {
  CheckpointHeader header = peek_checkpoint(path);
  if (header.vocab_fingerprint != vocab.fingerprint()) {
    throw ContractError("checkpoint was built against a different vocabulary");
  }
  json cj = json::parse(header.config_json);
  const json& mj = cj.at("model");
  const json& ej = cj.at("encode");
  LoadedModel out;
  out.cfg.model_kind = header.kind;
  out.cfg.max_length = ej.at("max_length").get<std::size_t>();
  out.cfg.window_seconds = ej.at("window_seconds").get<double>();
  out.cfg.use_temporal = ej.at("use_temporal").get<bool>();
  if (header.kind == "transformer") {
    out.cfg.d_model = mj.at("d_model").get<std::size_t>();
    out.cfg.n_heads = mj.at("n_heads").get<std::size_t>();
    out.cfg.n_layers = mj.at("n_layers").get<std::size_t>();
    out.cfg.d_ff = mj.at("d_ff").get<std::size_t>();
    out.cfg.dropout = mj.at("dropout").get<double>();
    out.cfg.lambda_mlm = mj.at("lambda_mlm").get<double>();
    const auto w = mj.at("class_weights").get<std::vector<double>>();
    out.cfg.class_weights = {w[0], w[1]};
  } else if (header.kind == "lstm") {
    out.cfg.lstm_hidden = mj.at("hidden_size").get<std::size_t>();
    out.cfg.d_model = mj.at("embed_dim").get<std::size_t>();
    const auto w = mj.at("class_weights").get<std::vector<double>>();
    out.cfg.class_weights = {w[0], w[1]};
  } else {
    throw ContractError("unknown checkpoint kind '" + header.kind + "'");
  }
  out.model = make_classifier(out.cfg, vocab);
  load_checkpoint(path, out.model->parameters());
  return out;
}

std::vector<bool> predictions_for(const SequenceClassifier& model,
                                  const std::vector<Trace>& finalized,
                                  const Vocabulary& vocab,
                                  const TrainConfig& cfg) {
  std::vector<bool> preds;
  evaluate(model, finalized, vocab, cfg, &preds);
  return preds;
}

// ---- subcommands -----------------------------------------------------------

int run_synth(const std::string& cmdline, GeneratorConfig& gc,
              const std::string& out_dir) {
  Timer timer;
  SynthOutput out = generate(gc);

  std::ostringstream events;
  serialize_events(out.events, events);
  write_text_atomic(out_path(out_dir, "events.jsonl"), events.str());

  std::vector<std::string> ids(out.labels.malicious_event_ids.begin(),
                               out.labels.malicious_event_ids.end());
  std::sort(ids.begin(), ids.end());
  std::string labels;
  for (const auto& id : ids) labels += id + "\n";
  write_text_atomic(out_path(out_dir, "labels.txt"), labels);

  std::ostringstream schema;
  save_schema(out.schema, schema);
  write_text_atomic(out_path(out_dir, "schema.json"), schema.str());

  json manifest;
  manifest["chains"] = json::array();
  for (const auto& chain : out.chains) {
    manifest["chains"].push_back({{"ids", chain}});
  }
  write_text_atomic(out_path(out_dir, "ground_truth.json"),
                    manifest.dump(2) + "\n");

  RunManifest rm;
  rm.command_line = cmdline;
  json cfg;
  cfg["n_hosts"] = gc.n_hosts;
  cfg["benign_trees_per_host"] = gc.benign_trees_per_host;
  cfg["chains_per_host"] = gc.chains_per_host;
  cfg["stealth_fraction"] = gc.stealth_fraction;
  cfg["mean_benign_delay"] = gc.mean_benign_delay;
  cfg["mean_malicious_delay"] = gc.mean_malicious_delay;
  cfg["branching_p"] = gc.branching_p;
  cfg["depth_cap"] = gc.depth_cap;
  rm.config_json = cfg.dump();
  rm.seed = gc.seed;
  rm.duration_seconds = timer.seconds();
  rm.outputs = {out_path(out_dir, "events.jsonl"),
                out_path(out_dir, "labels.txt"),
                out_path(out_dir, "schema.json"),
                out_path(out_dir, "ground_truth.json")};
  rm.write(out_path(out_dir, "synth.manifest.json"));

  std::cout << "synth: " << out.events.size() << " events, "
            << out.labels.malicious_event_ids.size() << " malicious\n";
  return 0;
}

int run_ingest(const std::string& cmdline, const std::string& events_path,
               const std::string& schema_path, bool lenient,
               const std::string& out_file) {
  Timer timer;
  const DatasetSchema schema = schema_from(schema_path);
  auto in = open_input(events_path);
  ParseResult parsed = parse_events(in, schema, lenient);
  std::ostringstream body;
  serialize_events(parsed.events, body);
  const std::string resolved = resolve_output_path(out_file);
  write_text_atomic(resolved, body.str());
  for (const auto& issue : parsed.issues) {
    std::cerr << "line " << issue.line_no << ": " << issue.message << "\n";
  }

  RunManifest rm;
  rm.command_line = cmdline;
  rm.config_json = json{{"lenient", lenient}}.dump();
  rm.add_input(events_path);
  rm.add_input(schema_path);
  rm.duration_seconds = timer.seconds();
  rm.outputs = {resolved};
  rm.write(resolved + ".manifest.json");

  std::cout << "ingest: " << parsed.events.size() << " events, "
            << parsed.issues.size() << " skipped\n";
  return 0;
}

int run_graph(const std::string& cmdline, const std::string& events_path,
              const std::string& schema_path, const std::string& labels_path,
              const std::string& out_file) {
  Timer timer;
  const DatasetSchema schema = schema_from(schema_path);
  auto in = open_input(events_path);
  ParseResult parsed = parse_events(in, schema);
  LabelSet labels;
  if (!labels_path.empty()) {
    auto lin = open_input(labels_path);
    labels = parse_labels(lin);
  }
  auto cp = build_cp_mapping(parsed.events);
  ProvenanceTree tree = build_tree(parsed.events, cp, labels);
  std::ostringstream body;
  dump_tree(tree, body);
  const std::string resolved = resolve_output_path(out_file);
  write_text_atomic(resolved, body.str());

  RunManifest rm;
  rm.command_line = cmdline;
  rm.add_input(events_path);
  rm.add_input(schema_path);
  if (!labels_path.empty()) rm.add_input(labels_path);
  rm.duration_seconds = timer.seconds();
  rm.outputs = {resolved};
  rm.write(resolved + ".manifest.json");

  std::cout << "graph: " << tree.nodes.size() << " nodes, "
            << tree.roots.size() << " roots\n";
  return 0;
}

int run_trace(const std::string& cmdline, const std::string& tree_path,
              TraceConfig& tc, bool leaves_only,
              const std::string& out_file) {
  Timer timer;
  auto in = open_input(tree_path);
  ProvenanceTree tree = load_tree_dump(in);
  BackTree back = build_back_tree(tree);
  tc.per_event_start = !leaves_only;
  std::vector<Trace> traces = generate_traces(back, tc);
  for (Trace& t : traces) t = finalize_trace(t, tc);
  std::ostringstream body;
  write_traces(traces, body);
  const std::string resolved = resolve_output_path(out_file);
  write_text_atomic(resolved, body.str());

  std::size_t malicious = 0;
  for (const Trace& t : traces) malicious += t.malicious ? 1 : 0;

  RunManifest rm;
  rm.command_line = cmdline;
  json cfg;
  cfg["max_length"] = tc.max_length;
  cfg["min_length"] = tc.min_length;
  cfg["per_event_start"] = tc.per_event_start;
  rm.config_json = cfg.dump();
  rm.add_input(tree_path);
  rm.seed = tc.seed;
  rm.duration_seconds = timer.seconds();
  rm.outputs = {resolved};
  rm.write(resolved + ".manifest.json");

  std::cout << "trace: " << traces.size() << " traces (" << malicious
            << " malicious)\n";
  return 0;
}

int run_encode(const std::string& cmdline, const std::string& traces_path,
               const std::string& schema_path, EncodeConfig& ec,
               std::uint64_t seed, std::size_t max_length,
               const std::string& out_file, const std::string& vocab_out) {
  Timer timer;
  const DatasetSchema schema = schema_from(schema_path);
  Vocabulary vocab(schema);
  std::vector<Trace> traces = traces_from(traces_path);
  Rng rng(seed);
  std::vector<EmbeddedSequence> seqs;
  seqs.reserve(traces.size());
  TraceConfig tc;
  tc.max_length = max_length;
  for (const Trace& t : traces) {
    seqs.push_back(encode(finalize_trace(t, tc), vocab, ec, rng));
  }
  std::ostringstream body;
  write_encoded(seqs, body);
  const std::string resolved = resolve_output_path(out_file);
  write_text_atomic(resolved, body.str());
  std::vector<std::string> outputs{resolved};
  if (!vocab_out.empty()) {
    std::ostringstream vs;
    vocab.save(vs);
    const std::string vres = resolve_output_path(vocab_out);
    write_text_atomic(vres, vs.str());
    outputs.push_back(vres);
  }

  RunManifest rm;
  rm.command_line = cmdline;
  json cfg;
  cfg["p_mask"] = ec.p_mask;
  cfg["window_seconds"] = ec.temporal.window_seconds;
  cfg["use_temporal"] = ec.use_temporal;
  cfg["max_length"] = max_length;
  rm.config_json = cfg.dump();
  rm.add_input(traces_path);
  rm.add_input(schema_path);
  rm.seed = seed;
  rm.duration_seconds = timer.seconds();
  rm.outputs = outputs;
  rm.write(resolved + ".manifest.json");

  std::cout << "encode: " << seqs.size() << " sequences, |V|=" << vocab.size()
            << "\n";
  return 0;
}

int run_train(const std::string& cmdline, TrainCli& t) {
  Timer timer;
  const DatasetSchema schema = schema_from(t.schema_path);
  Vocabulary vocab(schema);
  TrainConfig cfg = finish_config(t);
  std::vector<Trace> traces = traces_from(t.traces_path);

  TrainResult result = train(traces, vocab, cfg);

  if (!t.test_traces_path.empty()) {
    auto test = finalize_all(traces_from(t.test_traces_path), cfg.max_length);
    result.test_report = evaluate(*result.model, test, vocab, cfg);
  }

  const std::string ckpt = out_path(t.out_dir, "checkpoint.bin");
  save_model(ckpt, *result.model, cfg, vocab, result.steps);

  std::ostringstream runlog;
  write_run_log(result.history, runlog);
  write_text_atomic(out_path(t.out_dir, "runlog.csv"), runlog.str());

  std::ostringstream metrics;
  write_metrics_csv(result.test_report, metrics);
  write_text_atomic(out_path(t.out_dir, "test_metrics.csv"), metrics.str());

  std::ostringstream test_body;
  write_traces(result.split.test, test_body);
  write_text_atomic(out_path(t.out_dir, "test_traces.jsonl"),
                    test_body.str());

  RunManifest rm;
  rm.command_line = cmdline;
  json cfgj;
  cfgj["model"] = cfg.model_kind;
  cfgj["epochs"] = cfg.epochs;
  cfgj["batch"] = cfg.batch_size;
  cfgj["lr"] = cfg.optimizer.lr;
  cfgj["lambda_mlm"] = cfg.lambda_mlm;
  cfgj["p_mask"] = cfg.p_mask;
  cfgj["use_temporal"] = cfg.use_temporal;
  cfgj["window_seconds"] = cfg.window_seconds;
  cfgj["max_length"] = cfg.max_length;
  cfgj["sample_benign"] = t.sample_benign;
  cfgj["class_weights"] = {cfg.class_weights[0], cfg.class_weights[1]};
  cfgj["split"] = t.split_ratios;
  rm.config_json = cfgj.dump();
  rm.add_input(t.traces_path);
  rm.add_input(t.schema_path);
  if (!t.test_traces_path.empty()) rm.add_input(t.test_traces_path);
  rm.seed = cfg.seed;
  rm.duration_seconds = timer.seconds();
  rm.outputs = {ckpt, out_path(t.out_dir, "runlog.csv"),
                out_path(t.out_dir, "test_metrics.csv"),
                out_path(t.out_dir, "test_traces.jsonl")};
  rm.write(out_path(t.out_dir, "train.manifest.json"));

  std::cout << "train: best val F1 " << result.best_val_f1 << " at epoch "
            << result.best_epoch << ", test F1 " << result.test_report.f1
            << "\n";
  return 0;
}

int run_eval(const std::string& cmdline, const std::string& model_path,
             const std::string& traces_path, const std::string& schema_path,
             const std::string& out_dir) {
  Timer timer;
  const DatasetSchema schema = schema_from(schema_path);
  Vocabulary vocab(schema);
  LoadedModel lm = load_model(model_path, vocab);
  auto finalized =
      finalize_all(traces_from(traces_path), lm.cfg.max_length);
  MetricsReport report = evaluate(*lm.model, finalized, vocab, lm.cfg);

  std::ostringstream metrics;
  write_metrics_csv(report, metrics);
  write_text_atomic(out_path(out_dir, "metrics.csv"), metrics.str());

  RunManifest rm;
  rm.command_line = cmdline;
  rm.config_json = json{{"model", lm.cfg.model_kind}}.dump();
  rm.add_input(model_path);
  rm.add_input(traces_path);
  rm.add_input(schema_path);
  rm.duration_seconds = timer.seconds();
  rm.outputs = {out_path(out_dir, "metrics.csv")};
  rm.write(out_path(out_dir, "eval.manifest.json"));

  std::cout << "eval: P " << report.precision << " R " << report.recall
            << " F1 " << report.f1 << " acc " << report.accuracy << "\n";
  return 0;
}

int run_eda(const std::string& cmdline, const std::string& tree_path,
            const std::string& traces_path, const std::string& schema_path,
            std::vector<double> edges, const std::string& out_dir) {
  Timer timer;
  const DatasetSchema schema = schema_from(schema_path);
  RunManifest rm;
  rm.command_line = cmdline;
  rm.add_input(schema_path);
  std::vector<std::string> outputs;

  if (!tree_path.empty()) {
    auto in = open_input(tree_path);
    ProvenanceTree tree = load_tree_dump(in);
    rm.add_input(tree_path);

    FrequencyMatrixPair pair = object_action_matrix(tree, schema);
    for (const auto& [name, m] :
         {std::pair<const char*, const FrequencyMatrix*>{
              "object_action_event_benign.csv", &pair.benign},
          {"object_action_event_malicious.csv", &pair.malicious}}) {
      std::ostringstream body;
      write_matrix_csv(*m, body);
      const std::string p = out_path(out_dir, name);
      write_text_atomic(p, body.str());
      outputs.push_back(p);
    }

    if (edges.empty()) edges = {0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0};
    DeltaHistogram h = time_delta_histogram(tree, edges);
    std::ostringstream hb;
    write_histogram_csv(h, hb);
    const std::string hp = out_path(out_dir, "delta_histogram.csv");
    write_text_atomic(hp, hb.str());
    outputs.push_back(hp);

    std::ostringstream mib;
    write_mi_csv(event_feature_mi(tree, schema), mib);
    const std::string mip = out_path(out_dir, "mi_events.csv");
    write_text_atomic(mip, mib.str());
    outputs.push_back(mip);
  }

  if (!traces_path.empty()) {
    std::vector<Trace> traces = traces_from(traces_path);
    rm.add_input(traces_path);

    FrequencyMatrixPair pair = object_action_matrix(traces, schema);
    for (const auto& [name, m] :
         {std::pair<const char*, const FrequencyMatrix*>{
              "object_action_trace_benign.csv", &pair.benign},
          {"object_action_trace_malicious.csv", &pair.malicious}}) {
      std::ostringstream body;
      write_matrix_csv(*m, body);
      const std::string p = out_path(out_dir, name);
      write_text_atomic(p, body.str());
      outputs.push_back(p);
    }

    std::ostringstream mib;
    write_mi_csv(trace_feature_mi(traces, schema), mib);
    const std::string mip = out_path(out_dir, "mi_traces.csv");
    write_text_atomic(mip, mib.str());
    outputs.push_back(mip);
  }

  if (outputs.empty()) {
    throw ContractError("eda requires --tree and/or --traces");
  }
  rm.duration_seconds = timer.seconds();
  rm.outputs = outputs;
  rm.write(out_path(out_dir, "eda.manifest.json"));
  std::cout << "eda: wrote " << outputs.size() << " files\n";
  return 0;
}

int run_sweep(const std::string& cmdline, TrainCli& t,
              const std::string& kind, std::vector<double>& fractions,
              std::vector<double>& multipliers,
              const std::vector<std::string>& kinds) {
  Timer timer;
  const DatasetSchema schema = schema_from(t.schema_path);
  Vocabulary vocab(schema);
  TrainConfig cfg = finish_config(t);
  std::vector<Trace> traces = traces_from(t.traces_path);

  std::vector<SweepRow> rows;
  if (kind == "data-size") {
    rows = data_size_sweep(traces, vocab, cfg, fractions, kinds);
  } else if (kind == "imbalance") {
    rows = imbalance_sweep(traces, vocab, cfg, multipliers);
  } else {
    throw ContractError("sweep kind must be data-size or imbalance");
  }
  std::ostringstream body;
  write_sweep_csv(rows, body);
  const std::string p = out_path(t.out_dir, "sweep.csv");
  write_text_atomic(p, body.str());

  RunManifest rm;
  rm.command_line = cmdline;
  json cfgj;
  cfgj["kind"] = kind;
  cfgj["fractions"] = fractions;
  cfgj["multipliers"] = multipliers;
  cfgj["epochs"] = cfg.epochs;
  rm.config_json = cfgj.dump();
  rm.add_input(t.traces_path);
  rm.add_input(t.schema_path);
  rm.seed = cfg.seed;
  rm.duration_seconds = timer.seconds();
  rm.outputs = {p};
  rm.write(out_path(t.out_dir, "sweep.manifest.json"));
  std::cout << "sweep: " << rows.size() << " rows\n";
  return 0;
}

int run_compare(const std::string& cmdline, const std::string& model_a,
                const std::string& model_b, const std::string& traces_path,
                const std::string& schema_path, const std::string& out_dir) {
  Timer timer;
  const DatasetSchema schema = schema_from(schema_path);
  Vocabulary vocab(schema);
  LoadedModel a = load_model(model_a, vocab);
  LoadedModel b = load_model(model_b, vocab);
  std::vector<Trace> raw = traces_from(traces_path);
  auto fa = finalize_all(raw, a.cfg.max_length);
  auto fb = finalize_all(raw, b.cfg.max_length);

  std::vector<bool> labels;
  for (const Trace& t : fa) labels.push_back(t.malicious);
  auto pa = predictions_for(*a.model, fa, vocab, a.cfg);
  auto pb = predictions_for(*b.model, fb, vocab, b.cfg);
  CrossReport cross = cross_classification_report(pa, pb, labels);

  std::ostringstream body;
  body << "metric,value\n";
  body << "a_kind," << a.cfg.model_kind << "\n";
  body << "b_kind," << b.cfg.model_kind << "\n";
  body << "a_correct_b_wrong," << cross.a_correct_b_wrong << "\n";
  body << "b_correct_a_wrong," << cross.b_correct_a_wrong << "\n";
  body << "both_correct," << cross.both_correct << "\n";
  body << "both_wrong," << cross.both_wrong << "\n";
  body << "total," << cross.total << "\n";
  const std::string p = out_path(out_dir, "compare.csv");
  write_text_atomic(p, body.str());

  RunManifest rm;
  rm.command_line = cmdline;
  rm.add_input(model_a);
  rm.add_input(model_b);
  rm.add_input(traces_path);
  rm.add_input(schema_path);
  rm.duration_seconds = timer.seconds();
  rm.outputs = {p};
  rm.write(out_path(out_dir, "compare.manifest.json"));
  std::cout << "compare: A-only-correct " << cross.a_correct_b_wrong
            << ", B-only-correct " << cross.b_correct_a_wrong << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cmdline = join_args(argc, argv);
  CLI::App app{"provenance-trace APT detection pipeline"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a labeled corpus");
  GeneratorConfig gc;
  std::string synth_out = ".";
  synth->add_option("--seed", gc.seed, "generator seed")->required();
  synth->add_option("--out-dir", synth_out, "output directory");
  synth->add_option("--hosts", gc.n_hosts, "hosts to simulate");
  synth->add_option("--trees", gc.benign_trees_per_host,
                    "benign trees per host");
  synth->add_option("--chains", gc.chains_per_host,
                    "attack chains per host");
  synth->add_option("--chain-min", gc.chain_min, "min chain length");
  synth->add_option("--chain-max", gc.chain_max, "max chain length");
  synth->add_option("--stealth", gc.stealth_fraction,
                    "fraction of chains with benign-looking actions");
  synth->add_option("--mu-benign", gc.mean_benign_delay,
                    "mean benign inter-event delay (s)");
  synth->add_option("--mu-malicious", gc.mean_malicious_delay,
                    "mean malicious inter-event delay (s)");
  synth->add_option("--branching-p", gc.branching_p,
                    "geometric branching parameter");
  synth->add_option("--depth-cap", gc.depth_cap, "max tree depth");
  synth->add_option("--max-tree-nodes", gc.max_tree_nodes,
                    "max nodes per tree");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "normalize and sort events");
  std::string in_events, in_schema, ingest_out = "events.normalized.jsonl";
  bool lenient = false;
  ingest->add_option("--events", in_events, "event JSONL")->required();
  ingest->add_option("--schema", in_schema, "schema JSON")->required();
  ingest->add_option("--out", ingest_out, "output file");
  ingest->add_flag("--lenient", lenient, "skip malformed lines");

  // graph
  auto* graph = app.add_subcommand("graph", "build the provenance forest");
  std::string g_events, g_schema, g_labels, g_out = "tree.jsonl";
  graph->add_option("--events", g_events, "event JSONL")->required();
  graph->add_option("--schema", g_schema, "schema JSON")->required();
  graph->add_option("--labels", g_labels, "malicious event id file");
  graph->add_option("--out", g_out, "tree dump output");

  // trace
  auto* trace = app.add_subcommand("trace", "emit event traces");
  std::string t_in, t_out = "traces.jsonl";
  TraceConfig tc;
  bool leaves_only = false;
  trace->add_option("--in", t_in, "tree dump input")->required();
  trace->add_option("--out", t_out, "trace output");
  trace->add_option("--max-len", tc.max_length, "padded trace length");
  trace->add_option("--min-len", tc.min_length, "shortest kept trace");
  trace->add_option("--seed", tc.seed, "draw seed")->required();
  trace->add_flag("--leaves-only", leaves_only,
                  "one trace per leaf instead of random starts");

  // encode
  auto* enc = app.add_subcommand("encode", "encode traces (debug dump)");
  std::string e_in, e_schema, e_out = "encoded.jsonl", e_vocab;
  EncodeConfig ec;
  std::uint64_t e_seed = 0;
  std::size_t e_maxlen = 32;
  bool e_no_temporal = false;
  enc->add_option("--in", e_in, "trace JSONL")->required();
  enc->add_option("--schema", e_schema, "schema JSON")->required();
  enc->add_option("--out", e_out, "encoded output");
  enc->add_option("--vocab-out", e_vocab, "also write the vocabulary");
  enc->add_option("--p-mask", ec.p_mask, "masking rate");
  enc->add_option("--window", ec.temporal.window_seconds, "slot window (s)");
  enc->add_option("--max-len", e_maxlen, "padded trace length");
  enc->add_option("--seed", e_seed, "masking seed")->required();
  enc->add_flag("--no-temporal", e_no_temporal, "zero the slot values");

  // train
  auto* train_cmd = app.add_subcommand("train", "train a classifier");
  TrainCli tcli;
  add_train_options(train_cmd, tcli);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ev_model, ev_traces, ev_schema, ev_out = ".";
  eval_cmd->add_option("--model-file", ev_model, "checkpoint")->required();
  eval_cmd->add_option("--traces", ev_traces, "trace JSONL")->required();
  eval_cmd->add_option("--schema", ev_schema, "schema JSON")->required();
  eval_cmd->add_option("--out-dir", ev_out, "output directory");

  // eda
  auto* eda_cmd = app.add_subcommand("eda", "exploratory data emitters");
  std::string d_tree, d_traces, d_schema, d_out = ".";
  std::vector<double> d_edges;
  eda_cmd->add_option("--tree", d_tree, "tree dump");
  eda_cmd->add_option("--traces", d_traces, "trace JSONL");
  eda_cmd->add_option("--schema", d_schema, "schema JSON")->required();
  eda_cmd->add_option("--bins", d_edges, "histogram bin edges");
  eda_cmd->add_option("--out-dir", d_out, "output directory");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "experiment grids");
  TrainCli scli;
  std::string sweep_kind = "data-size";
  std::vector<double> fractions{0.1, 0.25, 0.5, 1.0};
  std::vector<double> multipliers{1.0, 2.0, 4.0, 8.0};
  std::vector<std::string> sweep_models{"transformer", "lstm"};
  sweep_cmd->add_option("--kind", sweep_kind, "data-size | imbalance");
  sweep_cmd->add_option("--fractions", fractions, "training fractions");
  sweep_cmd->add_option("--multipliers", multipliers,
                        "benign-count multipliers");
  sweep_cmd->add_option("--models", sweep_models, "model kinds to sweep");
  add_train_options(sweep_cmd, scli);

  // compare
  auto* cmp = app.add_subcommand("compare", "cross-classification table");
  std::string c_a, c_b, c_traces, c_schema, c_out = ".";
  cmp->add_option("--model-a", c_a, "first checkpoint")->required();
  cmp->add_option("--model-b", c_b, "second checkpoint")->required();
  cmp->add_option("--traces", c_traces, "trace JSONL")->required();
  cmp->add_option("--schema", c_schema, "schema JSON")->required();
  cmp->add_option("--out-dir", c_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (synth->parsed()) return run_synth(cmdline, gc, synth_out);
    if (ingest->parsed()) {
      return run_ingest(cmdline, in_events, in_schema, lenient, ingest_out);
    }
    if (graph->parsed()) {
      return run_graph(cmdline, g_events, g_schema, g_labels, g_out);
    }
    if (trace->parsed()) {
      return run_trace(cmdline, t_in, tc, leaves_only, t_out);
    }
    if (enc->parsed()) {
      ec.use_temporal = !e_no_temporal;
      return run_encode(cmdline, e_in, e_schema, ec, e_seed, e_maxlen, e_out,
                        e_vocab);
    }
    if (train_cmd->parsed()) return run_train(cmdline, tcli);
    if (eval_cmd->parsed()) {
      return run_eval(cmdline, ev_model, ev_traces, ev_schema, ev_out);
    }
    if (eda_cmd->parsed()) {
      return run_eda(cmdline, d_tree, d_traces, d_schema, d_edges, d_out);
    }
    if (sweep_cmd->parsed()) {
      return run_sweep(cmdline, scli, sweep_kind, fractions, multipliers,
                       sweep_models);
    }
    if (cmp->parsed()) {
      return run_compare(cmdline, c_a, c_b, c_traces, c_schema, c_out);
    }
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
