#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "sliver/errors.hpp"
#include "sliver/experiment.hpp"

namespace sliver {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

constexpr const char* kEvents = "events.jsonl";
constexpr const char* kProfiles = "profiles.jsonl";
constexpr const char* kTruth = "truth.json";

const fs::path& require_input(const RunOptions& options) {
  if (!options.input) throw ConfigError("--input is required");
  return *options.input;
}

void write_json(const fs::path& path, const ordered_json& doc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

std::string samples_file(const WindowPolicy& policy) {
  return "samples_" + std::string(paradigm_name(policy)) + ".csv";
}

std::vector<EncodedFeatures> encode_all(std::span<const ImpressionSession> sessions, const EncodingOptions& options) {
  const FeatureEncoding enc = FeatureEncoding::standard(options);
  std::vector<EncodedFeatures> out;
  out.reserve(sessions.size());
  for (const auto& s : sessions) out.push_back(encode(s, enc));
  return out;
}

StreamOptions stream_options(const ExperimentConfig& config) {
  StreamOptions o;
  o.horizon_end = kStreamEpoch + config.generator.horizon;
  o.threads = config.threads;
  return o;
}

// Samples for a paradigm: from the label directory when given, else labeled here.
std::vector<LabeledSample> samples_for(const ExperimentConfig& config, const RunOptions& options,
                                       const Dataset& data, const WindowPolicy& policy) {
  if (options.samples) return read_samples(*options.samples / samples_file(policy), data.sessions);
  return produce_stream(data.sessions, policy, stream_options(config));
}

ordered_json quantiles_json(const Quantiles& q) {
  return {{"count", q.count}, {"p50_ms", q.p50}, {"p90_ms", q.p90}, {"max_ms", q.max}};
}

ordered_json delay_json(const DelayStats& d) {
  ordered_json positive = ordered_json::object();
  for (Task task : kAllTasks) positive[std::string(to_string(task))] = quantiles_json(d.positive_delay[index_of(task)]);
  return {{"paradigm", d.paradigm},
          {"positive_delay", std::move(positive)},
          {"emit_after_impression", quantiles_json(d.emit_after_impression)},
          {"emit_after_request", quantiles_json(d.emit_after_request)}};
}

std::string fixed(const json& v, int digits) {
  if (v.is_null()) return "";
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v.get<double>();
  return os.str();
}

MultiTaskModel train_model(const ExperimentConfig& config, Architecture arch, std::uint64_t seed,
                           std::span<const ImpressionSession> sessions, std::span<const LabeledSample> stream,
                           std::vector<TraceRow>* trace) {
  ModelConfig model_config = config.model;
  model_config.architecture = arch;
  MultiTaskModel model(FeatureEncoding::standard(config.encoding), model_config, seed);
  const auto features = encode_all(sessions, config.encoding);
  auto rows = streaming_fit(model, stream, features, config.train);
  if (trace) *trace = std::move(rows);
  return model;
}

}  // namespace

Dataset load_dataset(const fs::path& input, const ExperimentConfig& config, const EventLogSchema& schema) {
  Dataset data;
  fs::path events_path = input;
  std::optional<ProfileTable> profiles;
  if (fs::is_directory(input)) {
    events_path = input / kEvents;
    if (fs::exists(input / kProfiles)) profiles = load_profiles(input / kProfiles);
    if (fs::exists(input / kTruth)) data.truth = load_truth(input / kTruth);
  }
  if (!fs::exists(events_path)) throw Error("no event log at " + events_path.string());
  const auto events = load_event_log(events_path, schema);
  SessionizeOptions opts;
  opts.session_timeout = config.session_timeout;
  opts.threads = config.threads;
  opts.profiles = profiles ? &*profiles : nullptr;
  data.sessions = sessionize(events, kStreamEpoch + config.generator.horizon, opts);
  data.eventual = data.truth ? data.truth->labels : eventual_labels_from_sessions(data.sessions);
  return data;
}

void run_generate(const ExperimentConfig& config, const RunOptions& options) {
  const GeneratedLog log = generate(config.generator);
  write_event_log(options.out / kEvents, log.events);
  write_profiles(options.out / kProfiles, log.profiles);
  write_truth(options.out / kTruth, log.truth);
  std::size_t impressions = 0;
  for (const auto& e : log.events) impressions += e.kind == BehaviorKind::kImpression;
  write_json(options.out / "summary.json", {{"events", log.events.size()},
                                            {"users", log.profiles.size()},
                                            {"rooms", log.truth.rooms.size()},
                                            {"requests", log.truth.labels.size()},
                                            {"impressions", impressions}});
}

void run_label(const ExperimentConfig& config, const RunOptions& options) {
  const Dataset data = load_dataset(require_input(options), config, options.schema);
  ordered_json delays = ordered_json::array();
  for (const auto& policy : config.paradigms) {
    const auto samples = produce_stream(data.sessions, policy, stream_options(config));
    write_samples(options.out / samples_file(policy), samples, data.sessions);
    delays.push_back(delay_json(delay_stats(samples, data.sessions, std::string(paradigm_name(policy)))));
  }
  write_json(options.out / "delay_stats.json", delays);
}

void run_audit(const ExperimentConfig& config, const RunOptions& options) {
  const Dataset data = load_dataset(require_input(options), config, options.schema);
  const auto curve = accuracy_curve(data.sessions, data.eventual, config.audit.curve_windows);
  for (const auto& policy : config.paradigms) {
    const auto samples = samples_for(config, options, data, policy);
    const auto report = audit_label_accuracy(samples, data.sessions, data.eventual, config.audit.bucket_edges);
    write_accuracy_report(options.out / ("accuracy_" + std::string(paradigm_name(policy)) + ".json"), report, curve);
  }
  std::ofstream out(options.out / "accuracy_curve.csv", std::ios::binary);
  out << "window_ms,task,labeled,accuracy,eventual_positive_accuracy,positive_precision,negative_precision\n";
  auto opt = [](const std::optional<double>& v) {
    std::ostringstream os;
    if (v) os << std::setprecision(17) << *v;
    return os.str();
  };
  for (const auto& point : curve) {
    for (Task task : kAllTasks) {
      const auto& a = point.tasks[index_of(task)];
      out << to_ms(point.window) << ',' << to_string(task) << ',' << a.labeled << ',' << opt(a.accuracy()) << ','
          << opt(a.eventual_positive_accuracy()) << ',' << opt(a.positive_precision()) << ','
          << opt(a.negative_precision()) << '\n';
    }
  }
}

void run_train(const ExperimentConfig& config, const RunOptions& options) {
  const Dataset data = load_dataset(require_input(options), config, options.schema);
  const WindowPolicy& policy = config.paradigms.front();
  const auto samples = samples_for(config, options, data, policy);
  std::vector<TraceRow> trace;
  const MultiTaskModel model =
      train_model(config, config.models.front(), config.seeds.front(), data.sessions, samples, &trace);
  save_checkpoint(options.out / "model.ckpt", model);
  write_trace(options.out / "trace.csv", trace);
}

void run_eval(const ExperimentConfig& config, const RunOptions& options) {
  const Dataset data = load_dataset(require_input(options), config, options.schema);
  const auto features = encode_all(data.sessions, config.encoding);
  EvalReport report;
  report.baseline = "one-hour";
  std::vector<std::vector<LabeledSample>> streams;
  for (const auto& policy : config.paradigms) {
    streams.push_back(samples_for(config, options, data, policy));
    report.delays.push_back(delay_stats(streams.back(), data.sessions, std::string(paradigm_name(policy))));
  }
  for (Architecture arch : config.models) {
    for (std::size_t p = 0; p < config.paradigms.size(); ++p) {
      report.cells.push_back(streaming_eval(data.sessions, features, streams[p],
                                            std::string(paradigm_name(config.paradigms[p])), config.eval_config(arch)));
    }
  }
  write_eval_csv(options.out / "eval.csv", report);
  write_eval_json(options.out / "eval.json", report);
}

void run_rereco(const ExperimentConfig& config, const RunOptions& options) {
  const Dataset data = load_dataset(require_input(options), config, options.schema);
  if (!data.truth) throw Error("rereco-sim needs the ground-truth sidecar (truth.json) in --input");
  std::optional<MultiTaskModel> model;
  if (options.checkpoint) {
    model.emplace(load_checkpoint(*options.checkpoint));
  } else {
    WindowPolicy policy = Sliding{};
    for (const auto& p : config.paradigms) {
      if (std::holds_alternative<Sliding>(p)) policy = p;
    }
    const auto stream = produce_stream(data.sessions, policy, stream_options(config));
    model.emplace(train_model(config, config.models.front(), config.rereco.model_seed, data.sessions, stream, nullptr));
  }
  const auto base = build_episodes(data.sessions, *data.truth);
  std::vector<ServingEpisode> off = base;
  simulate_serving(off, *model, RerecoPolicy{false, config.rereco.policy.period}, *data.truth, config.rereco.fusion);
  std::vector<ServingEpisode> on = off;
  if (config.rereco.policy.enabled) {
    on = base;
    simulate_serving(on, *model, config.rereco.policy, *data.truth, config.rereco.fusion);
  }
  write_episodes_csv(options.out / "episodes.csv", on, off, *data.truth);
  write_staleness_json(options.out / "staleness.json", staleness_report(on, off, *data.truth), config.rereco.policy);
}

void write_matrix(const fs::path& eval_json, const fs::path& out_dir) {
  std::ifstream in(eval_json);
  if (!in) throw Error("cannot open " + eval_json.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("eval report: ") + e.what());
  }
  std::ofstream csv(out_dir / "matrix.csv", std::ios::binary);
  std::ofstream md(out_dir / "matrix.md", std::ios::binary);
  if (!csv || !md) throw Error("cannot write matrix in " + out_dir.string());
  csv << "model,paradigm";
  md << "| model | paradigm |";
  for (Task task : kAllTasks) {
    csv << ',' << to_string(task) << "_auc," << to_string(task) << "_se," << to_string(task) << "_rela_impr";
    md << ' ' << to_string(task) << " AUC | " << to_string(task) << " RelaImpr |";
  }
  csv << '\n';
  md << "\n|---|---|";
  for (std::size_t t = 0; t < kNumTasks; ++t) md << "---|---|";
  md << '\n';
  try {
    for (const auto& cell : doc.at("cells")) {
      const auto model = cell.at("model").get<std::string>();
      const auto paradigm = cell.at("paradigm").get<std::string>();
      csv << model << ',' << paradigm;
      md << "| " << model << " | " << paradigm << " |";
      for (Task task : kAllTasks) {
        const auto& t = cell.at("tasks").at(std::string(to_string(task)));
        csv << ',' << fixed(t.at("mean_auc"), 6) << ',' << fixed(t.at("std_error"), 6) << ','
            << fixed(t.at("rela_impr"), 4);
        const std::string auc = fixed(t.at("mean_auc"), 4);
        const std::string se = fixed(t.at("std_error"), 4);
        const std::string ri = fixed(t.at("rela_impr"), 2);
        md << ' ' << (auc.empty() ? "n/a" : auc + " ± " + se) << " | " << (ri.empty() ? "" : ri + "%") << " |";
      }
      csv << '\n';
      md << '\n';
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("eval report: ") + e.what());
  }
}

void run_report(const ExperimentConfig&, const RunOptions& options) {
  const fs::path& input = require_input(options);
  write_matrix(fs::is_directory(input) ? input / "eval.json" : input, options.out);
}

void run_compare(const ExperimentConfig& config, const RunOptions& options) {
  RunOptions eval = options;
  if (!options.input) {
    RunOptions gen = options;
    gen.out = options.out / "data";
    fs::create_directories(gen.out);
    run_generate(config, gen);
    eval.input = gen.out;
  }
  run_eval(config, eval);
  write_matrix(options.out / "eval.json", options.out);
}

int run_subcommand(std::string_view name, const ExperimentConfig& config, const RunOptions& options, std::ostream& err) {
  using Runner = void (*)(const ExperimentConfig&, const RunOptions&);
  static const std::pair<std::string_view, Runner> kRunners[] = {
      {"generate", run_generate}, {"label", run_label},       {"audit", run_audit},   {"train", run_train},
      {"eval", run_eval},         {"rereco-sim", run_rereco}, {"report", run_report}, {"compare", run_compare},
  };
  Runner runner = nullptr;
  for (const auto& [n, r] : kRunners) {
    if (n == name) runner = r;
  }
  if (!runner) {
    err << "error: unknown subcommand '" << name << "'\n";
    return kExitUsage;
  }
  const fs::path marker = options.out / std::string(kIncompleteMarker);
  try {
    fs::create_directories(options.out);
    { std::ofstream(marker) << "run did not finish\n"; }
    {
      std::ofstream out(options.out / "config.json", std::ios::binary);
      out << dump_config(config);
    }
    runner(config, options);
    fs::remove(marker);
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace sliver
