#include <cstdlib>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "sliver/errors.hpp"
#include "sliver/experiment.hpp"

namespace {

namespace fs = std::filesystem;

struct Flags {
  std::optional<std::string> config;
  std::optional<std::string> out;
  std::optional<std::string> input;
  std::optional<std::string> samples;
  std::optional<std::string> checkpoint;
  std::optional<std::string> log_format;
  std::optional<std::string> paradigm;
  std::optional<std::int64_t> window_ms;
  std::optional<std::int64_t> t_uni_ms;
  std::optional<std::string> model;
  std::optional<std::string> seeds;
  std::optional<std::uint64_t> data_seed;
  std::optional<std::size_t> users;
  std::optional<std::size_t> lives;
  std::optional<std::int64_t> horizon_ms;
  std::optional<std::int64_t> shift_period_ms;
  std::optional<std::string> content_shifts;
  std::optional<std::size_t> batch_size;
  std::optional<double> lr;
  std::optional<std::size_t> threads;
  std::optional<std::string> rereco;
  std::optional<std::int64_t> rereco_period_ms;
  std::vector<std::string> set;
};

void add_flags(CLI::App& cmd, Flags& f) {
  cmd.add_option("--config", f.config, "Config file (JSON, comments allowed)");
  cmd.add_option("--out", f.out, "Output directory (default $SLIVER_OUTPUT_ROOT/<subcommand>)");
  cmd.add_option("--input", f.input, "Generator output directory or event-log file");
  cmd.add_option("--samples", f.samples, "Directory written by `label`");
  cmd.add_option("--checkpoint", f.checkpoint, "Model checkpoint for rereco-sim");
  cmd.add_option("--log-format", f.log_format, "Event-log format: jsonl, csv or tsv (default: by extension)")
      ->check(CLI::IsMember({"jsonl", "csv", "tsv"}));
  cmd.add_option("--paradigm", f.paradigm, "Labeling paradigm")
      ->check(CLI::IsMember({"one-hour", "five-minute", "sliver"}));
  cmd.add_option("--window-ms", f.window_ms, "Window size of --paradigm in ms");
  cmd.add_option("--t-uni-ms", f.t_uni_ms, "Sliding-window grid origin in ms");
  cmd.add_option("--model", f.model, "Architecture")->check(CLI::IsMember({"shared-bottom", "mmoe"}));
  cmd.add_option("--seeds", f.seeds, "Comma-separated model seeds");
  cmd.add_option("--data-seed", f.data_seed, "Generator seed");
  cmd.add_option("--users", f.users, "Number of synthetic users");
  cmd.add_option("--lives", f.lives, "Number of synthetic live rooms");
  cmd.add_option("--horizon-ms", f.horizon_ms, "Log horizon in ms");
  cmd.add_option("--shift-period-ms", f.shift_period_ms, "Mean time between content changes in ms");
  cmd.add_option("--content-shifts", f.content_shifts, "Non-stationary content")->check(CLI::IsMember({"on", "off"}));
  cmd.add_option("--batch-size", f.batch_size, "Training batch size");
  cmd.add_option("--lr", f.lr, "Adam learning rate");
  cmd.add_option("--threads", f.threads, "Worker threads");
  cmd.add_option("--rereco", f.rereco, "Re-request while unimpressed")->check(CLI::IsMember({"on", "off"}));
  cmd.add_option("--rereco-period-ms", f.rereco_period_ms, "Re-request period in ms");
  cmd.add_option("--set", f.set, "Override any config value: /json/pointer=value");
}

std::string seeds_json(const std::string& text) {
  std::ostringstream out;
  out << '[';
  std::stringstream ss(text);
  std::string item;
  bool first = true;
  while (std::getline(ss, item, ',')) {
    if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos) {
      throw sliver::ConfigError("--seeds expects comma-separated non-negative integers");
    }
    out << (first ? "" : ",") << item;
    first = false;
  }
  if (first) throw sliver::ConfigError("--seeds is empty");
  out << ']';
  return out.str();
}

std::vector<sliver::ConfigOverride> overrides_from(const Flags& f) {
  std::vector<sliver::ConfigOverride> o;
  auto put = [&](std::string pointer, std::string value) { o.push_back({std::move(pointer), std::move(value)}); };
  if (f.paradigm) {
    std::string p = R"({"name":")" + *f.paradigm + '"';
    if (f.window_ms) p += ",\"window_ms\":" + std::to_string(*f.window_ms);
    if (f.t_uni_ms) p += ",\"t_uni_ms\":" + std::to_string(*f.t_uni_ms);
    put("/paradigms", "[" + p + "}]");
  } else if (f.window_ms || f.t_uni_ms) {
    throw sliver::ConfigError("--window-ms and --t-uni-ms need --paradigm");
  }
  if (f.model) put("/models", "[\"" + *f.model + "\"]");
  if (f.seeds) put("/eval/seeds", seeds_json(*f.seeds));
  if (f.data_seed) put("/generator/seed", std::to_string(*f.data_seed));
  if (f.users) put("/generator/num_users", std::to_string(*f.users));
  if (f.lives) put("/generator/num_lives", std::to_string(*f.lives));
  if (f.horizon_ms) put("/generator/horizon_ms", std::to_string(*f.horizon_ms));
  if (f.shift_period_ms) put("/generator/content_shift_period_ms", std::to_string(*f.shift_period_ms));
  if (f.content_shifts) put("/generator/content_shifts", *f.content_shifts == "on" ? "true" : "false");
  if (f.batch_size) put("/train/batch_size", std::to_string(*f.batch_size));
  if (f.lr) {
    std::ostringstream v;
    v.precision(17);
    v << *f.lr;
    put("/train/learning_rate", v.str());
  }
  if (f.threads) put("/threads", std::to_string(*f.threads));
  if (f.rereco) put("/rereco/enabled", *f.rereco == "on" ? "true" : "false");
  if (f.rereco_period_ms) put("/rereco/period_ms", std::to_string(*f.rereco_period_ms));
  for (const auto& s : f.set) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || s.empty() || s.front() != '/') {
      throw sliver::ConfigError("--set expects /json/pointer=value, got '" + s + "'");
    }
    put(s.substr(0, eq), s.substr(eq + 1));
  }
  return o;
}

fs::path default_out(const std::string& subcommand) {
  const char* root = std::getenv("SLIVER_OUTPUT_ROOT");
  return fs::path(root && *root ? root : "sliver-out") / subcommand;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming labeling and training experiments for live-stream recommendation"};
  app.require_subcommand(1);
  Flags flags;
  const std::vector<std::pair<const char*, const char*>> commands = {
      {"generate", "Write a synthetic event log, profiles and ground truth"},
      {"label", "Turn an event log into labeled sample streams"},
      {"audit", "Score emitted labels against eventual outcomes"},
      {"train", "Train one model on one labeled stream"},
      {"eval", "Hour-by-hour streaming evaluation over paradigms and models"},
      {"rereco-sim", "Simulate serving with and without re-requests"},
      {"report", "Build the comparison matrix from an eval directory"},
      {"compare", "Generate (unless --input), evaluate and report in one go"},
      {"config", "Print the effective configuration"},
  };
  for (const auto& [name, help] : commands) add_flags(*app.add_subcommand(name, help), flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? sliver::kExitOk : sliver::kExitUsage;
  }
  const std::string name = app.get_subcommands().front()->get_name();

  sliver::ExperimentConfig config;
  try {
    config = sliver::load_config(flags.config ? std::optional<fs::path>(*flags.config) : std::nullopt,
                                 overrides_from(flags));
  } catch (const sliver::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return sliver::kExitUsage;
  }
  if (name == "config") {
    std::cout << sliver::dump_config(config);
    return sliver::kExitOk;
  }

  sliver::RunOptions options;
  options.out = flags.out ? fs::path(*flags.out) : default_out(name);
  if (flags.input) options.input = *flags.input;
  if (flags.samples) options.samples = *flags.samples;
  if (flags.checkpoint) options.checkpoint = *flags.checkpoint;
  if (flags.log_format) {
    options.schema.format = *flags.log_format == "jsonl" ? sliver::LogFormat::kJsonLines : sliver::LogFormat::kDelimited;
    if (*flags.log_format == "tsv") options.schema.delimiter = '\t';
  }
  const int code = sliver::run_subcommand(name, config, options, std::cerr);
  if (code == sliver::kExitOk) std::cout << name << ": wrote " << options.out.string() << '\n';
  return code;
}
