#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sliver/config.hpp"
#include "sliver/errors.hpp"

namespace sliver {

namespace {

using json = nlohmann::ordered_json;

const char* const kDefaultConfig = R"jsonc({
  // Synthetic log generator.
  "generator": {
    "seed": 42,
    "num_users": 20000,
    "num_lives": 60,
    "num_anchors": 200,
    "horizon_ms": 36000000,            // 10 hours
    "content_shifts": true,            // false: every room keeps one content state
    "content_shift_period_ms": 1800000, // mean time between content changes of a room
    "room_quality_sd": 0.4,            // static per-room log-odds offset
    "shift_effect_sd": 0.8,            // hidden log-odds offset redrawn at each change
    "requests_per_user_hour": 0.5,
    "unimpressed_fraction": 0.05,
    "candidates_per_request": 8,
    // Request -> impression delay: shift + lognormal(mu, sigma) in ms.
    "impression_delay": {"shift_ms": 1000, "mu": 10.7, "sigma": 1.1},
    // Behavior delays in ms, lognormal. Click and follow count from the
    // impression, like from the click.
    "delays": {
      "click": {"mu": 10.991058742415904, "sigma": 1.5},
      "follow": {"mu": 11.264943779921675, "sigma": 1.6},
      "like_after_click": {"mu": 11.17601822150123, "sigma": 1.2}
    },
    // Exponential watch time after the last behavior.
    "watch": {"engaged_mean_ms": 180000, "browse_mean_ms": 8000},
    // Probabilities per [segment][content state]; null keeps the built-in
    // 4 x 6 tables. Like is conditional on a click.
    "base_rates": null
  },

  // Labeling paradigms, also the comparison order of "compare".
  "paradigms": [
    {"name": "one-hour", "window_ms": 3600000},
    {"name": "five-minute", "window_ms": 300000},
    {"name": "sliver", "window_ms": 30000, "t_uni_ms": 0}
  ],

  // Architectures: "shared-bottom" and/or "mmoe".
  "models": ["shared-bottom", "mmoe"],

  "encoding": {
    "include_user_id": false,
    "id_width": 32,
    "side_width": 8,
    "hash_buckets": 65536,
    "fields": []                       // empty: all known fields
  },

  "model": {
    "bottom_hidden": [64, 32],
    "num_experts": 3,
    "expert_hidden": [64, 32],
    "tower_hidden": [32, 32, 16],
    "embedding_init_scale": 0.05
  },

  "train": {
    "batch_size": 16,
    "learning_rate": 0.001,
    "beta1": 0.9,
    "beta2": 0.999,
    "epsilon": 1e-8,
    "loss_weights": [1.0, 1.0, 1.0]    // click, follow, like
  },

  // Train on mu < start, then evaluate [start + k*step, start + (k+1)*step).
  "eval": {
    "start_ms": 18000000,
    "step_ms": 3600000,
    "windows": 5,
    "seeds": [1, 2, 3, 4, 5]
  },

  "rereco": {
    "enabled": true,
    "period_ms": 30000,
    "fusion_weights": [1.0, 1.0, 1.0],
    "model_seed": 1
  },

  "audit": {
    "bucket_edges_ms": [0, 30000, 60000, 120000, 300000, 600000, 1800000, 3600000],
    "curve_windows_ms": [60000, 120000, 300000, 600000, 1800000]
  },

  "session_timeout_ms": 86400000,
  "threads": 1
})jsonc";

const json& defaults() {
  static const json d = json::parse(kDefaultConfig, nullptr, true, true);
  return d;
}

// Object keys must exist in the defaults; nulls in the defaults accept anything.
void check_keys(const json& value, const json& reference, const std::string& path) {
  if (!value.is_object() || !reference.is_object()) return;
  for (const auto& [key, child] : value.items()) {
    if (!reference.contains(key)) throw ConfigError("unknown config key '" + path + "/" + key + "'");
    check_keys(child, reference.at(key), path + "/" + key);
  }
}

Duration ms(const json& v) { return Duration{v.get<std::int64_t>()}; }

std::vector<Duration> ms_list(const json& v) {
  std::vector<Duration> out;
  for (const auto& x : v) out.push_back(ms(x));
  return out;
}

TaskWeights weights(const json& v, const char* name) {
  const auto w = v.get<std::vector<double>>();
  if (w.size() != kNumTasks) throw ConfigError(std::string(name) + " needs three values (click, follow, like)");
  for (double x : w) {
    if (!(x >= 0.0)) throw ConfigError(std::string(name) + " must be non-negative");
  }
  return {w[0], w[1], w[2]};
}

LogNormal lognormal(const json& v) { return {v.at("mu").get<double>(), v.at("sigma").get<double>()}; }

ExperimentConfig from_json(const json& j) {
  ExperimentConfig c;
  const auto& g = j.at("generator");
  auto& gen = c.generator;
  gen.seed = g.at("seed").get<std::uint64_t>();
  gen.num_users = g.at("num_users").get<std::size_t>();
  gen.num_lives = g.at("num_lives").get<std::size_t>();
  gen.num_anchors = g.at("num_anchors").get<std::size_t>();
  gen.horizon = ms(g.at("horizon_ms"));
  gen.content_shifts = g.at("content_shifts").get<bool>();
  gen.content_shift_period = ms(g.at("content_shift_period_ms"));
  gen.room_quality_sd = g.at("room_quality_sd").get<double>();
  gen.shift_effect_sd = g.at("shift_effect_sd").get<double>();
  gen.requests_per_user_hour = g.at("requests_per_user_hour").get<double>();
  gen.unimpressed_fraction = g.at("unimpressed_fraction").get<double>();
  gen.candidates_per_request = g.at("candidates_per_request").get<std::size_t>();
  const auto& imp = g.at("impression_delay");
  gen.impression_delay = {imp.at("shift_ms").get<double>(), {imp.at("mu").get<double>(), imp.at("sigma").get<double>()}};
  const auto& d = g.at("delays");
  gen.delays.click = lognormal(d.at("click"));
  gen.delays.follow = lognormal(d.at("follow"));
  gen.delays.like_after_click = lognormal(d.at("like_after_click"));
  gen.watch.engaged_mean_ms = g.at("watch").at("engaged_mean_ms").get<double>();
  gen.watch.browse_mean_ms = g.at("watch").at("browse_mean_ms").get<double>();
  if (g.contains("base_rates") && !g.at("base_rates").is_null()) {
    const auto& br = g.at("base_rates");
    using Table = std::vector<std::vector<double>>;
    gen.base_rates.click = br.at("click").get<Table>();
    gen.base_rates.follow = br.at("follow").get<Table>();
    gen.base_rates.like = br.at("like").get<Table>();
  }
  gen.validate();

  for (const auto& p : j.at("paradigms")) {
    std::optional<Duration> window;
    std::optional<Timestamp> t_uni;
    if (p.contains("window_ms")) window = ms(p.at("window_ms"));
    if (p.contains("t_uni_ms")) t_uni = from_ms(p.at("t_uni_ms").get<std::int64_t>());
    for (const auto& [key, _] : p.items()) {
      if (key != "name" && key != "window_ms" && key != "t_uni_ms") throw ConfigError("unknown paradigm key '" + key + "'");
    }
    c.paradigms.push_back(policy_from_name(p.at("name").get<std::string>(), window, t_uni));
  }
  if (c.paradigms.empty()) throw ConfigError("at least one paradigm is required");
  for (const auto& m : j.at("models")) c.models.push_back(parse_architecture(m.get<std::string>()));
  if (c.models.empty()) throw ConfigError("at least one model is required");

  const auto& e = j.at("encoding");
  c.encoding.include_user_id = e.at("include_user_id").get<bool>();
  c.encoding.id_width = e.at("id_width").get<std::size_t>();
  c.encoding.side_width = e.at("side_width").get<std::size_t>();
  c.encoding.hash_buckets = e.at("hash_buckets").get<std::size_t>();
  c.encoding.fields = e.at("fields").get<std::vector<std::string>>();
  try {
    (void)FeatureEncoding::standard(c.encoding);
  } catch (const EncodingError& err) {
    throw ConfigError(err.what());
  }

  const auto& m = j.at("model");
  c.model.bottom_hidden = m.at("bottom_hidden").get<std::vector<std::size_t>>();
  c.model.num_experts = m.at("num_experts").get<std::size_t>();
  c.model.expert_hidden = m.at("expert_hidden").get<std::vector<std::size_t>>();
  c.model.tower_hidden = m.at("tower_hidden").get<std::vector<std::size_t>>();
  c.model.embedding_init_scale = m.at("embedding_init_scale").get<double>();
  for (const auto* layers : {&c.model.bottom_hidden, &c.model.expert_hidden, &c.model.tower_hidden}) {
    for (auto w : *layers) {
      if (w == 0) throw ConfigError("hidden layer widths must be positive");
    }
  }
  if (c.model.num_experts == 0) throw ConfigError("model.num_experts must be positive");

  const auto& t = j.at("train");
  c.train.batch_size = t.at("batch_size").get<std::size_t>();
  c.train.adam.learning_rate = t.at("learning_rate").get<double>();
  c.train.adam.beta1 = t.at("beta1").get<double>();
  c.train.adam.beta2 = t.at("beta2").get<double>();
  c.train.adam.epsilon = t.at("epsilon").get<double>();
  c.train.loss_weights = weights(t.at("loss_weights"), "train.loss_weights");
  if (c.train.batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (!(c.train.adam.learning_rate >= 0.0)) throw ConfigError("train.learning_rate must be non-negative");

  const auto& ev = j.at("eval");
  c.schedule.start = from_ms(ev.at("start_ms").get<std::int64_t>());
  c.schedule.step = ms(ev.at("step_ms"));
  c.schedule.windows = ev.at("windows").get<std::size_t>();
  c.seeds = ev.at("seeds").get<std::vector<std::uint64_t>>();
  if (c.seeds.empty()) throw ConfigError("eval.seeds must not be empty");
  if (c.schedule.step <= Duration::zero() || c.schedule.windows == 0) {
    throw ConfigError("eval needs a positive step and at least one window");
  }

  const auto& r = j.at("rereco");
  c.rereco.policy.enabled = r.at("enabled").get<bool>();
  c.rereco.policy.period = ms(r.at("period_ms"));
  c.rereco.fusion = weights(r.at("fusion_weights"), "rereco.fusion_weights");
  c.rereco.model_seed = r.at("model_seed").get<std::uint64_t>();
  if (c.rereco.policy.period <= Duration::zero()) throw ConfigError("rereco.period_ms must be positive");

  const auto& a = j.at("audit");
  c.audit.bucket_edges = ms_list(a.at("bucket_edges_ms"));
  c.audit.curve_windows = ms_list(a.at("curve_windows_ms"));
  if (c.audit.bucket_edges.empty() || c.audit.bucket_edges.front() != Duration::zero()) {
    throw ConfigError("audit.bucket_edges_ms must start at 0");
  }
  for (std::size_t i = 1; i < c.audit.bucket_edges.size(); ++i) {
    if (c.audit.bucket_edges[i] <= c.audit.bucket_edges[i - 1]) {
      throw ConfigError("audit.bucket_edges_ms must increase strictly");
    }
  }
  for (auto w : c.audit.curve_windows) {
    if (w <= Duration::zero()) throw ConfigError("audit.curve_windows_ms must be positive");
  }

  c.session_timeout = ms(j.at("session_timeout_ms"));
  if (c.session_timeout <= Duration::zero()) throw ConfigError("session_timeout_ms must be positive");
  c.threads = j.at("threads").get<std::size_t>();
  if (c.threads == 0) throw ConfigError("threads must be positive");
  return c;
}

json lognormal_json(const LogNormal& d) { return {{"mu", d.mu}, {"sigma", d.sigma}}; }

json to_json(const ExperimentConfig& c) {
  json j;
  const auto& gen = c.generator;
  j["generator"] = {
      {"seed", gen.seed},
      {"num_users", gen.num_users},
      {"num_lives", gen.num_lives},
      {"num_anchors", gen.num_anchors},
      {"horizon_ms", to_ms(gen.horizon)},
      {"content_shifts", gen.content_shifts},
      {"content_shift_period_ms", to_ms(gen.content_shift_period)},
      {"room_quality_sd", gen.room_quality_sd},
      {"shift_effect_sd", gen.shift_effect_sd},
      {"requests_per_user_hour", gen.requests_per_user_hour},
      {"unimpressed_fraction", gen.unimpressed_fraction},
      {"candidates_per_request", gen.candidates_per_request},
      {"impression_delay",
       {{"shift_ms", gen.impression_delay.shift_ms},
        {"mu", gen.impression_delay.body.mu},
        {"sigma", gen.impression_delay.body.sigma}}},
      {"delays",
       {{"click", lognormal_json(gen.delays.click)},
        {"follow", lognormal_json(gen.delays.follow)},
        {"like_after_click", lognormal_json(gen.delays.like_after_click)}}},
      {"watch", {{"engaged_mean_ms", gen.watch.engaged_mean_ms}, {"browse_mean_ms", gen.watch.browse_mean_ms}}},
      {"base_rates",
       {{"click", gen.base_rates.click}, {"follow", gen.base_rates.follow}, {"like", gen.base_rates.like}}},
  };
  json paradigms = json::array();
  for (const auto& p : c.paradigms) {
    json entry = {{"name", std::string(paradigm_name(p))}, {"window_ms", to_ms(std::visit([](const auto& x) { return x.w; }, p))}};
    if (const auto* s = std::get_if<Sliding>(&p)) entry["t_uni_ms"] = to_ms(s->t_uni);
    paradigms.push_back(std::move(entry));
  }
  j["paradigms"] = std::move(paradigms);
  json models = json::array();
  for (auto m : c.models) models.push_back(std::string(to_string(m)));
  j["models"] = std::move(models);
  j["encoding"] = {{"include_user_id", c.encoding.include_user_id},
                   {"id_width", c.encoding.id_width},
                   {"side_width", c.encoding.side_width},
                   {"hash_buckets", c.encoding.hash_buckets},
                   {"fields", c.encoding.fields}};
  j["model"] = {{"bottom_hidden", c.model.bottom_hidden},
                {"num_experts", c.model.num_experts},
                {"expert_hidden", c.model.expert_hidden},
                {"tower_hidden", c.model.tower_hidden},
                {"embedding_init_scale", c.model.embedding_init_scale}};
  j["train"] = {{"batch_size", c.train.batch_size},
                {"learning_rate", c.train.adam.learning_rate},
                {"beta1", c.train.adam.beta1},
                {"beta2", c.train.adam.beta2},
                {"epsilon", c.train.adam.epsilon},
                {"loss_weights", c.train.loss_weights}};
  j["eval"] = {{"start_ms", to_ms(c.schedule.start)},
               {"step_ms", to_ms(c.schedule.step)},
               {"windows", c.schedule.windows},
               {"seeds", c.seeds}};
  j["rereco"] = {{"enabled", c.rereco.policy.enabled},
                 {"period_ms", to_ms(c.rereco.policy.period)},
                 {"fusion_weights", c.rereco.fusion},
                 {"model_seed", c.rereco.model_seed}};
  std::vector<std::int64_t> edges, curve;
  for (auto d : c.audit.bucket_edges) edges.push_back(to_ms(d));
  for (auto d : c.audit.curve_windows) curve.push_back(to_ms(d));
  j["audit"] = {{"bucket_edges_ms", edges}, {"curve_windows_ms", curve}};
  j["session_timeout_ms"] = to_ms(c.session_timeout);
  j["threads"] = c.threads;
  return j;
}

}  // namespace

EvalConfig ExperimentConfig::eval_config(Architecture arch) const {
  EvalConfig e;
  e.schedule = schedule;
  e.seeds = seeds;
  e.model = model;
  e.model.architecture = arch;
  e.encoding = encoding;
  e.train = train;
  e.threads = threads;
  return e;
}

const std::string& default_config_text() {
  static const std::string text = kDefaultConfig;
  return text;
}

ExperimentConfig parse_config(std::string_view text, const std::vector<ConfigOverride>& overrides) {
  json merged = defaults();
  try {
    if (!text.empty()) {
      const json user = json::parse(text.begin(), text.end(), nullptr, true, true);
      if (!user.is_object()) throw ConfigError("config must be a JSON object");
      check_keys(user, defaults(), "");
      merged.merge_patch(user);
    }
    for (const auto& o : overrides) {
      const json::json_pointer ptr(o.pointer);
      json value;
      try {
        value = json::parse(o.value);
      } catch (const json::parse_error&) {
        value = o.value;  // bare strings
      }
      merged[ptr] = std::move(value);
    }
    check_keys(merged, defaults(), "");
    return from_json(merged);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

ExperimentConfig load_config(const std::optional<std::filesystem::path>& file,
                             const std::vector<ConfigOverride>& overrides) {
  std::string text;
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("cannot read config " + file->string());
    std::ostringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  return parse_config(text, overrides);
}

std::string dump_config(const ExperimentConfig& config) { return to_json(config).dump(2) + "\n"; }

}  // namespace sliver
