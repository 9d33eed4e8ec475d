#include <charconv>
#include <fstream>
#include <sstream>

#include "sliver/errors.hpp"
#include "sliver/windowing.hpp"

namespace sliver {

namespace {

constexpr std::string_view kHeader = "user_id,live_id,request_ts_ms,mu_ms,window_id,click,follow,like,snapshot_ts_ms";

std::optional<std::int64_t> parse_int(std::string_view text) {
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

void write_samples(std::ostream& out, std::span<const LabeledSample> samples,
                   std::span<const ImpressionSession> sessions) {
  out << kHeader << '\n';
  for (const auto& sample : samples) {
    if (sample.session >= sessions.size()) throw LookupError("sample references an unknown session");
    const auto& s = sessions[sample.session];
    out << s.user.user_id << ',' << s.live.live_id << ',' << to_ms(s.request_ts) << ',' << to_ms(sample.emit_ts) << ',';
    if (sample.window_id) out << *sample.window_id;
    for (TaskLabel label : sample.labels) out << ',' << to_string(label);
    out << ',' << to_ms(sample.snapshot_ts) << '\n';
  }
}

void write_samples(const std::filesystem::path& path, std::span<const LabeledSample> samples,
                   std::span<const ImpressionSession> sessions) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write samples " + path.string());
  write_samples(out, samples, sessions);
}

std::vector<LabeledSample> read_samples(std::istream& in, std::span<const ImpressionSession> sessions) {
  std::unordered_map<SessionKey, std::size_t, SessionKeyHash> index;
  for (std::size_t i = 0; i < sessions.size(); ++i) index.emplace(sessions[i].key(), i);

  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw SchemaError("samples: empty file");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kHeader) throw SchemaError("samples: unexpected header", {1});

  std::vector<LabeledSample> out;
  std::vector<std::size_t> bad;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != 9) {
      bad.push_back(line_no);
      continue;
    }
    auto request = parse_int(f[2]);
    auto mu = parse_int(f[3]);
    auto snapshot = parse_int(f[8]);
    std::optional<std::int64_t> window;
    if (!f[4].empty()) window = parse_int(f[4]);
    std::array<std::optional<TaskLabel>, kNumTasks> labels = {parse_task_label(f[5]), parse_task_label(f[6]),
                                                              parse_task_label(f[7])};
    if (!request || !mu || !snapshot || (!f[4].empty() && !window) || !labels[0] || !labels[1] || !labels[2]) {
      bad.push_back(line_no);
      continue;
    }
    auto it = index.find(SessionKey{f[0], f[1], from_ms(*request)});
    if (it == index.end()) {
      throw LookupError("samples line " + std::to_string(line_no) + ": no session for " + f[0] + "/" + f[1] + "@" +
                        f[2]);
    }
    LabeledSample sample;
    sample.session = it->second;
    sample.emit_ts = from_ms(*mu);
    sample.window_id = window;
    sample.snapshot_ts = from_ms(*snapshot);
    for (std::size_t t = 0; t < kNumTasks; ++t) sample.labels[t] = *labels[t];
    out.push_back(sample);
  }
  if (!bad.empty()) throw ValidationError("samples: malformed rows", bad);
  return out;
}

std::vector<LabeledSample> read_samples(const std::filesystem::path& path,
                                        std::span<const ImpressionSession> sessions) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open samples " + path.string());
  return read_samples(in, sessions);
}

}  // namespace sliver
