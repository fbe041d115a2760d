#include "faithscan/cli.hpp"

#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "faithscan/attribution.hpp"
#include "faithscan/baseline.hpp"
#include "faithscan/checkpoint.hpp"
#include "faithscan/container.hpp"
#include "faithscan/io_util.hpp"
#include "faithscan/judge_client.hpp"
#include "faithscan/metrics.hpp"

namespace faithscan {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::judge_transport: return kExitJudge;
    case ErrorKind::non_finite: return kExitNumeric;
    default: return kExitInput;
  }
}

namespace {

void check_keys(const json& j, std::initializer_list<std::string_view> allowed,
                std::string_view where) {
  if (!j.is_object()) fail(ErrorKind::config, fmt::format("'{}' must be a JSON object", where));
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) fail(ErrorKind::config, fmt::format("unknown key '{}' in '{}'", key, where));
  }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

SynthSpec synth_from_json(const json& j) {
  check_keys(j,
             {"n_records", "positive_fraction", "d_h", "d_v", "d_align", "min_tokens", "max_tokens",
              "n_patches", "n_aligned", "margin", "noise", "split", "max_lengths", "task_seed"},
             "synth");
  SynthSpec s;
  read_opt(j, "n_records", s.n_records);
  read_opt(j, "positive_fraction", s.positive_fraction);
  read_opt(j, "d_h", s.d_h);
  read_opt(j, "d_v", s.d_v);
  read_opt(j, "d_align", s.d_align);
  read_opt(j, "min_tokens", s.min_tokens);
  read_opt(j, "max_tokens", s.max_tokens);
  read_opt(j, "n_patches", s.n_patches);
  read_opt(j, "n_aligned", s.n_aligned);
  read_opt(j, "margin", s.margin);
  read_opt(j, "noise", s.noise);
  read_opt(j, "task_seed", s.task_seed);
  if (j.contains("split")) s.split = split_from_string(j.at("split").get<std::string>());
  if (j.contains("max_lengths")) {
    const auto& m = j.at("max_lengths");
    check_keys(m, {"tokens", "patches", "aligned"}, "synth.max_lengths");
    read_opt(m, "tokens", s.max_lengths.tokens);
    read_opt(m, "patches", s.max_lengths.patches);
    read_opt(m, "aligned", s.max_lengths.aligned);
  }
  return s;
}

ModelOptions model_from_json(const json& j) {
  check_keys(j, {"encoder", "embed_dim", "attn_dim", "gated", "score_activation", "gate_activation"},
             "model");
  ModelOptions m;
  if (j.contains("encoder")) m.encoder = encoder_kind_from_string(j.at("encoder").get<std::string>());
  read_opt(j, "embed_dim", m.embed_dim);
  read_opt(j, "attn_dim", m.fusion.attn_dim);
  read_opt(j, "gated", m.fusion.gated);
  if (j.contains("score_activation")) {
    m.fusion.score_activation = activation_from_string(j.at("score_activation").get<std::string>());
  }
  if (j.contains("gate_activation")) {
    m.fusion.gate_activation = activation_from_string(j.at("gate_activation").get<std::string>());
  }
  return m;
}

WeightCombination lambdas_from_json(const json& j) {
  check_keys(j, {"lambda_nli", "lambda_stoch", "lambda_ref"}, "reliability");
  WeightCombination w;
  read_opt(j, "lambda_nli", w.lambda_nli);
  read_opt(j, "lambda_stoch", w.lambda_stoch);
  read_opt(j, "lambda_ref", w.lambda_ref);
  validate_weight_combination(w);
  return w;
}

JudgeSettings judge_from_json(const json& j) {
  check_keys(j, {"model", "temperature", "top_p", "rounds", "max_in_flight"}, "judge");
  JudgeSettings s;
  read_opt(j, "model", s.model);
  read_opt(j, "temperature", s.temperature);
  read_opt(j, "top_p", s.top_p);
  read_opt(j, "rounds", s.rounds);
  read_opt(j, "max_in_flight", s.max_in_flight);
  if (s.rounds == 0) fail(ErrorKind::config, "judge.rounds must be positive");
  if (s.max_in_flight == 0) fail(ErrorKind::config, "judge.max_in_flight must be positive");
  return s;
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
  check_keys(j, {"seed", "synth", "model", "train", "reliability", "judge"}, "config");
  RunConfig c;
  try {
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("synth")) c.synth = synth_from_json(j.at("synth"));
    if (j.contains("model")) c.model = model_from_json(j.at("model"));
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
    if (j.contains("reliability")) c.reliability = lambdas_from_json(j.at("reliability"));
    if (j.contains("judge")) c.judge = judge_from_json(j.at("judge"));
  } catch (const json::exception& e) {
    fail(ErrorKind::config, fmt::format("bad config value: {}", e.what()));
  }
  if (c.seed && !(j.contains("train") && j.at("train").contains("seed"))) c.train.seed = *c.seed;
  return c;
}

ModelSpec build_model_spec(const Schema& schema, const ModelOptions& options) {
  ModelSpec spec = default_model_spec(schema, options.embed_dim, options.encoder);
  spec.fusion = options.fusion;
  validate_model_spec(spec);
  return spec;
}

namespace {

struct Context {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool verbose = false;

  RunConfig load() const {
    RunConfig c;
    if (!config_path.empty()) {
      json j;
      try {
        j = json::parse(read_file(config_path));
      } catch (const json::parse_error& e) {
        fail(ErrorKind::config, fmt::format("config '{}' is not valid JSON: {}", config_path, e.what()));
      }
      c = run_config_from_json(j);
    }
    if (seed) {
      c.seed = seed;
      c.train.seed = *seed;
    }
    return c;
  }
};

void write_text(const fs::path& path, std::string_view text) { write_file_atomic(path, text); }

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void require_distinct(const fs::path& in, const fs::path& out) {
  std::error_code ec;
  if (fs::exists(out, ec) && fs::equivalent(in, out, ec)) {
    fail(ErrorKind::invalid_argument,
         fmt::format("refusing to overwrite the input '{}'; choose a new output path", in.string()));
  }
}

std::string require_meta(const FeatureRecord& r, const char* key) {
  const auto it = r.meta.find(key);
  if (it == r.meta.end() || it->second.empty()) {
    fail(ErrorKind::invalid_argument, fmt::format("record '{}' lacks meta \"{}\"", r.id, key));
  }
  return it->second;
}

std::vector<double> detector_scores(const Detector& model, const Dataset& ds) {
  std::vector<double> out;
  out.reserve(ds.records.size());
  for (const auto& r : ds.records) out.push_back(model.predict(r));
  return out;
}

void write_curves(const std::string& prefix, std::span<const double> values,
                  std::span<const int> labels, RejectionMode mode) {
  if (prefix.empty()) return;
  write_text(prefix + "_rejection.csv", rejection_curve_csv(values, labels, mode));
  write_text(prefix + "_roc.csv", roc_csv(values, labels));
  write_text(prefix + "_pr.csv", pr_csv(values, labels));
}

// --- subcommands -----------------------------------------------------------

struct SynthArgs {
  std::string out, sidecar, split;
  std::optional<std::size_t> n_records;
  std::optional<double> margin;
};

void cmd_synth(const Context& ctx, const SynthArgs& a) {
  const RunConfig cfg = ctx.load();
  SynthSpec spec = cfg.synth;
  if (a.n_records) spec.n_records = *a.n_records;
  if (a.margin) spec.margin = *a.margin;
  if (!a.split.empty()) spec.split = split_from_string(a.split);
  const Dataset ds = synth_generate(spec, cfg.seed.value_or(0));
  write_container(ds, a.out);
  if (!a.sidecar.empty()) write_sidecar(ds, a.sidecar);
  spdlog::info("wrote {} synthetic records to {}", ds.records.size(), a.out);
}

struct LabelArgs {
  std::string in, out, verdicts, judge = "http", mock_replies;
  std::optional<std::size_t> rounds, max_in_flight;
};

void cmd_label(const Context& ctx, const LabelArgs& a) {
  const RunConfig cfg = ctx.load();
  require_distinct(a.in, a.out);
  JudgeSettings settings = cfg.judge;
  if (a.rounds) settings.rounds = *a.rounds;
  if (a.max_in_flight) settings.max_in_flight = *a.max_in_flight;
  if (settings.rounds == 0) fail(ErrorKind::config, "--rounds must be positive");

  Dataset ds = read_container(a.in);
  std::vector<JudgeInstance> instances;
  for (const auto& r : ds.records) {
    if (!r.answer_text || r.answer_text->empty()) {
      fail(ErrorKind::invalid_argument, fmt::format("record '{}' has no answer_text", r.id));
    }
    instances.push_back({r.id, require_meta(r, "image"), require_meta(r, "question"),
                         require_meta(r, "reference"), *r.answer_text});
  }

  std::unique_ptr<JudgeClient> client;
  if (a.judge == "mock") {
    std::map<std::string, std::vector<std::string>> canned;
    if (!a.mock_replies.empty()) {
      try {
        canned = json::parse(read_file(a.mock_replies)).get<decltype(canned)>();
      } catch (const json::exception& e) {
        fail(ErrorKind::config, fmt::format("bad mock replies file: {}", e.what()));
      }
    }
    client = std::make_unique<MockJudgeClient>(std::move(canned));
  } else if (a.judge == "http") {
    client = HttpJudgeClient::from_environment();
  } else {
    fail(ErrorKind::config, fmt::format("unknown judge '{}'", a.judge));
  }

  const auto outcomes = judge_all(*client, instances, settings);
  std::vector<LabeledJudgment> judged;
  for (const auto& o : outcomes) {
    if (o.judgment) judged.push_back({o.id, *o.judgment});
  }
  apply_judgments(ds, judged);
  write_container(ds, a.out);
  if (!a.verdicts.empty()) write_text(a.verdicts, verdicts_jsonl(outcomes));
  spdlog::info("labeled {} of {} records", judged.size(), ds.records.size());
}

struct ReliabilityArgs {
  std::string in, out, signals, histogram;
  std::optional<double> lambda_nli, lambda_stoch, lambda_ref;
};

void cmd_reliability(const Context& ctx, const ReliabilityArgs& a) {
  const RunConfig cfg = ctx.load();
  require_distinct(a.in, a.out);
  WeightCombination lambdas = cfg.reliability;
  if (a.lambda_nli) lambdas.lambda_nli = *a.lambda_nli;
  if (a.lambda_stoch) lambdas.lambda_stoch = *a.lambda_stoch;
  if (a.lambda_ref) lambdas.lambda_ref = *a.lambda_ref;
  const Dataset ds = read_container(a.in);
  const auto inputs = parse_reliability_jsonl(read_file(a.signals));
  const Dataset out = apply_reliability(ds, inputs, lambdas);
  write_container(out, a.out);
  if (!a.histogram.empty()) write_text(a.histogram, reliability_histogram_csv(out));
}

struct TrainArgs {
  std::string in, val, out, history, encoder;
  std::optional<std::size_t> embed_dim, max_epochs;
  bool ungated = false;
};

void cmd_train(const Context& ctx, const TrainArgs& a) {
  RunConfig cfg = ctx.load();
  if (!a.encoder.empty()) cfg.model.encoder = encoder_kind_from_string(a.encoder);
  if (a.embed_dim) cfg.model.embed_dim = *a.embed_dim;
  if (a.ungated) cfg.model.fusion.gated = false;
  if (a.max_epochs) {
    cfg.train.max_epochs = *a.max_epochs;
    cfg.train.patience = std::min(cfg.train.patience, cfg.train.max_epochs);
  }
  const Dataset train_set = read_container(a.in);
  std::optional<Dataset> val_set;
  if (!a.val.empty()) {
    val_set = read_container(a.val);
    if (!(val_set->schema == train_set.schema)) {
      fail(ErrorKind::shape_mismatch, "training and validation containers have different schemas");
    }
  }
  const ModelSpec spec = build_model_spec(train_set.schema, cfg.model);
  const TrainResult result = train(train_set, val_set, spec, cfg.train);
  save_checkpoint(result.model, a.out);
  if (!a.history.empty()) {
    json h = to_json(result.history);
    h["config"] = to_json(cfg.train);
    write_json(a.history, h);
  }
}

struct EvalArgs {
  std::string in, checkpoint, out, mode = "supervised", curves;
};

void cmd_eval(const Context& ctx, const EvalArgs& a) {
  (void)ctx.load();
  const RejectionMode mode = rejection_mode_from_string(a.mode);
  const Dataset ds = read_container(a.in);
  const Detector model = load_checkpoint(a.checkpoint);
  for (const auto& r : ds.records) model.check_record(r);
  const std::vector<int> labels = labels_of(ds);
  const std::vector<double> scores = detector_scores(model, ds);
  json report = to_json(evaluate(scores, labels, mode));
  report["mode"] = to_string(mode);
  write_json(a.out, report);
  write_curves(a.curves, scores, labels, mode);
}

struct BaselineArgs {
  std::string in, test, out, report, mode = "score_based", curves;
};

void cmd_baseline(const Context& ctx, const BaselineArgs& a) {
  const RunConfig cfg = ctx.load();
  const RejectionMode mode = rejection_mode_from_string(a.mode);
  const Dataset train_set = read_container(a.in);
  const Dataset test_set = read_container(a.test);
  auto [fit_part, val_part] = split_dataset(train_set, 0.9, cfg.seed.value_or(0));
  const LrPipeline pipeline = fit_baseline(fit_part);
  save_pipeline(pipeline, a.out);

  json report;
  const std::vector<int> val_labels = labels_of(val_part);
  std::vector<double> val_scores;
  for (const auto& r : val_part.records) val_scores.push_back(lr_score(r, pipeline));
  const auto val_pos = std::count(val_labels.begin(), val_labels.end(), 1);
  if (val_pos > 0 && val_pos < static_cast<std::ptrdiff_t>(val_labels.size())) {
    report["val_auroc"] = auroc(val_scores, val_labels);
  } else {
    report["val_auroc"] = nullptr;
  }
  const std::vector<int> labels = labels_of(test_set);
  std::vector<double> scores;
  for (const auto& r : test_set.records) scores.push_back(lr_score(r, pipeline));
  report["test"] = to_json(evaluate(scores, labels, mode));
  report["mode"] = to_string(mode);
  report["iterations"] = pipeline.lr.iterations;
  if (!a.report.empty()) write_json(a.report, report);
  write_curves(a.curves, scores, labels, mode);
}

struct AttributeArgs {
  std::string in, checkpoint, out, heatmap;
  std::vector<std::string> ids;
  bool visual = false;
};

void cmd_attribute(const Context& ctx, const AttributeArgs& a) {
  (void)ctx.load();
  const Dataset ds = read_container(a.in);
  const Detector model = load_checkpoint(a.checkpoint);
  std::set<std::string> wanted(a.ids.begin(), a.ids.end());
  std::set<std::string> found;
  std::string jsonl, csv;
  bool first = true;
  for (const auto& r : ds.records) {
    if (!wanted.empty() && wanted.count(r.id) == 0) continue;
    found.insert(r.id);
    const AttributionMap map = grad_x_input(r, model, a.visual);
    jsonl += attribution_jsonl(r, map);
    csv += attribution_heatmap_csv(r, map, first);
    first = false;
  }
  for (const auto& id : wanted) {
    if (found.count(id) == 0) fail(ErrorKind::invalid_argument, fmt::format("no record '{}'", id));
  }
  write_text(a.out, jsonl);
  if (!a.heatmap.empty()) write_text(a.heatmap, csv);
}

void setup_logging(bool verbose) {
  auto logger = spdlog::get("faithscan");
  if (!logger) logger = spdlog::stderr_logger_mt("faithscan");
  logger->set_level(verbose ? spdlog::level::info : spdlog::level::warn);
  spdlog::set_default_logger(logger);
}

void report_error(std::string_view kind, const std::string& message, int code) {
  const json err{{"error", kind}, {"message", message}, {"exit_code", code}};
  std::cerr << err.dump() << std::endl;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"faithscan: hallucination detection from uncertainty signals"};
  app.require_subcommand(1);
  Context ctx;
  app.add_option("--config", ctx.config_path, "Run configuration JSON");
  app.add_option("--seed", ctx.seed, "Seed for every random choice");
  app.add_flag("-v,--verbose", ctx.verbose, "Log progress to stderr");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Write a seeded synthetic feature container");
  s->add_option("--out", synth.out)->required();
  s->add_option("--sidecar", synth.sidecar, "Also write JSONL metadata");
  s->add_option("--n-records", synth.n_records);
  s->add_option("--margin", synth.margin);
  s->add_option("--split", synth.split);

  LabelArgs label;
  auto* l = app.add_subcommand("label", "Judge answers and attach hallucination labels");
  l->add_option("--in", label.in)->required();
  l->add_option("--out", label.out)->required();
  l->add_option("--verdicts", label.verdicts, "Per-round verdicts as JSONL");
  l->add_option("--rounds", label.rounds);
  l->add_option("--max-in-flight", label.max_in_flight);
  l->add_option("--judge", label.judge, "http (endpoint from the environment) or mock")
      ->check(CLI::IsMember({"http", "mock"}));
  l->add_option("--mock-replies", label.mock_replies, "JSON object id -> list of replies");

  ReliabilityArgs rel;
  auto* r = app.add_subcommand("reliability", "Score label reliability and set sample weights");
  r->add_option("--in", rel.in)->required();
  r->add_option("--signals", rel.signals)->required();
  r->add_option("--out", rel.out)->required();
  r->add_option("--histogram", rel.histogram);
  r->add_option("--lambda-nli", rel.lambda_nli);
  r->add_option("--lambda-stoch", rel.lambda_stoch);
  r->add_option("--lambda-ref", rel.lambda_ref);

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train the detector");
  t->add_option("--in", tr.in)->required();
  t->add_option("--val", tr.val);
  t->add_option("--out", tr.out, "Checkpoint path")->required();
  t->add_option("--history", tr.history);
  t->add_option("--encoder", tr.encoder);
  t->add_option("--embed-dim", tr.embed_dim);
  t->add_option("--max-epochs", tr.max_epochs);
  t->add_flag("--ungated", tr.ungated);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint");
  e->add_option("--in", ev.in)->required();
  e->add_option("--checkpoint", ev.checkpoint)->required();
  e->add_option("--out", ev.out, "Report JSON")->required();
  e->add_option("--mode", ev.mode)->check(CLI::IsMember({"supervised", "score_based"}));
  e->add_option("--curves", ev.curves, "Prefix for rejection/ROC/PR CSVs");

  BaselineArgs bl;
  auto* b = app.add_subcommand("baseline", "Fit and evaluate the logistic-regression baseline");
  b->add_option("--in", bl.in)->required();
  b->add_option("--test", bl.test)->required();
  b->add_option("--out", bl.out, "Pipeline path")->required();
  b->add_option("--report", bl.report);
  b->add_option("--mode", bl.mode)->check(CLI::IsMember({"supervised", "score_based"}));
  b->add_option("--curves", bl.curves);

  AttributeArgs at;
  auto* a = app.add_subcommand("attribute", "Grad x input attributions");
  a->add_option("--in", at.in)->required();
  a->add_option("--checkpoint", at.checkpoint)->required();
  a->add_option("--out", at.out, "JSONL output")->required();
  a->add_option("--heatmap", at.heatmap, "CSV heatmap output");
  a->add_option("--ids", at.ids, "Record ids (default: all)")->delimiter(',');
  a->add_flag("--visual", at.visual, "Include visual channels");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& h) {
    return app.exit(h);
  } catch (const CLI::CallForAllHelp& h) {
    return app.exit(h);
  } catch (const CLI::ParseError& err) {
    report_error("usage", err.what(), kExitUsage);
    return kExitUsage;
  }

  setup_logging(ctx.verbose);
  try {
    if (*s) cmd_synth(ctx, synth);
    else if (*l) cmd_label(ctx, label);
    else if (*r) cmd_reliability(ctx, rel);
    else if (*t) cmd_train(ctx, tr);
    else if (*e) cmd_eval(ctx, ev);
    else if (*b) cmd_baseline(ctx, bl);
    else if (*a) cmd_attribute(ctx, at);
  } catch (const Error& err) {
    const int code = exit_code_for(err.kind());
    report_error(to_string(err.kind()), err.what(), code);
    return code;
  } catch (const std::exception& err) {
    report_error("io", err.what(), kExitInput);
    return kExitInput;
  }
  return kExitOk;
}

}  // namespace faithscan
