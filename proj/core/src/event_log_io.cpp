#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "sliver/errors.hpp"
#include "sliver/events.hpp"

namespace sliver {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

constexpr std::array<const char*, 5> kRequiredFields = {"kind", "user_id", "live_id", "anchor_id", "ts_ms"};
constexpr std::array<const char*, 6> kSideFields = {"gender",   "age_bucket",    "city",
                                                    "live_type", "anchor_gender", "anchor_type"};
constexpr std::size_t kMaxReportedLines = 20;

std::optional<std::string>* side_slot(EventAttributes& attrs, std::string_view field) {
  if (field == "gender") return &attrs.gender;
  if (field == "age_bucket") return &attrs.age_bucket;
  if (field == "city") return &attrs.city;
  if (field == "live_type") return &attrs.live_type;
  if (field == "anchor_gender") return &attrs.anchor_gender;
  if (field == "anchor_type") return &attrs.anchor_type;
  return nullptr;
}

std::string lines_message(const std::string& what, const std::vector<std::size_t>& lines) {
  std::ostringstream os;
  os << what << " at line";
  if (lines.size() > 1) os << 's';
  for (std::size_t i = 0; i < lines.size() && i < kMaxReportedLines; ++i) os << (i ? ", " : " ") << lines[i];
  if (lines.size() > kMaxReportedLines) os << ", ... (" << lines.size() << " total)";
  return os.str();
}

std::optional<std::int64_t> parse_int(std::string_view text) {
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

// Splits one delimited record. Double quotes group a field; "" is a literal quote.
std::vector<std::string> split_record(const std::string& line, char delim) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back().push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back().push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delim) {
      fields.emplace_back();
    } else if (c != '\r') {
      fields.back().push_back(c);
    }
  }
  return fields;
}

struct ParsedRow {
  InteractionEvent event;
  std::size_t line = 0;
};

struct RowErrors {
  std::vector<std::size_t> schema;
  std::vector<std::size_t> invalid;
};

// Fills `row` from a field accessor; records the line on failure.
template <typename Get>
bool build_event(const EventLogSchema& schema, Get&& get, std::size_t line, RowErrors& errors, ParsedRow& row) {
  std::array<std::optional<std::string>, kRequiredFields.size()> req;
  for (std::size_t i = 0; i < kRequiredFields.size(); ++i) {
    req[i] = get(schema.column(kRequiredFields[i]));
    if (!req[i]) {
      errors.schema.push_back(line);
      return false;
    }
  }
  auto kind = parse_behavior_kind(*req[0]);
  auto ts = parse_int(*req[4]);
  if (!kind || !ts || *ts < 0 || req[1]->empty() || req[2]->empty()) {
    errors.invalid.push_back(line);
    return false;
  }
  row.line = line;
  row.event.kind = *kind;
  row.event.user_id = std::move(*req[1]);
  row.event.live_id = std::move(*req[2]);
  row.event.anchor_id = std::move(*req[3]);
  row.event.ts = from_ms(*ts);
  for (const char* field : kSideFields) {
    if (auto v = get(schema.column(field))) *side_slot(row.event.attrs, field) = std::move(*v);
  }
  return true;
}

std::optional<std::string> json_scalar(const json& obj, const std::string& key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<std::int64_t>());
  if (it->is_number_unsigned()) return std::to_string(it->get<std::uint64_t>());
  return it->dump();
}

LogFormat detect_format(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".csv" || ext == ".tsv") return LogFormat::kDelimited;
  return LogFormat::kJsonLines;
}

}  // namespace

std::string EventLogSchema::column(const std::string& field) const {
  auto it = columns.find(field);
  return it == columns.end() ? field : it->second;
}

std::vector<InteractionEvent> parse_event_log(std::istream& in, const EventLogSchema& schema) {
  std::vector<ParsedRow> rows;
  RowErrors errors;
  std::string line;
  std::size_t line_no = 0;

  if (schema.format == LogFormat::kDelimited) {
    std::unordered_map<std::string, std::size_t> header;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty() || line == "\r") continue;
      const auto fields = split_record(line, schema.delimiter);
      if (header.empty()) {
        for (std::size_t i = 0; i < fields.size(); ++i) header.emplace(fields[i], i);
        for (const char* field : kRequiredFields) {
          if (!header.contains(schema.column(field))) {
            throw SchemaError("event log: missing column '" + schema.column(field) + "'", {line_no});
          }
        }
        continue;
      }
      auto get = [&](const std::string& col) -> std::optional<std::string> {
        auto it = header.find(col);
        if (it == header.end() || it->second >= fields.size()) return std::nullopt;
        return fields[it->second];
      };
      ParsedRow row;
      if (build_event(schema, get, line_no, errors, row)) rows.push_back(std::move(row));
    }
  } else {
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      json obj;
      try {
        obj = json::parse(line);
      } catch (const json::parse_error&) {
        errors.invalid.push_back(line_no);
        continue;
      }
      if (!obj.is_object()) {
        errors.invalid.push_back(line_no);
        continue;
      }
      auto get = [&](const std::string& col) { return json_scalar(obj, col); };
      ParsedRow row;
      if (build_event(schema, get, line_no, errors, row)) rows.push_back(std::move(row));
    }
  }

  if (!errors.schema.empty()) throw SchemaError(lines_message("event log: missing required field", errors.schema), errors.schema);
  if (!errors.invalid.empty()) throw ValidationError(lines_message("event log: malformed row", errors.invalid), errors.invalid);

  std::stable_sort(rows.begin(), rows.end(), [](const ParsedRow& a, const ParsedRow& b) { return a.event.ts < b.event.ts; });

  // Primary key: (kind, user, live, ts).
  std::vector<std::size_t> duplicates;
  {
    std::set<std::tuple<BehaviorKind, std::string_view, std::string_view>> seen;
    Timestamp current = kStreamEpoch;
    for (const auto& row : rows) {
      if (row.event.ts != current) {
        seen.clear();
        current = row.event.ts;
      }
      if (!seen.emplace(row.event.kind, row.event.user_id, row.event.live_id).second) duplicates.push_back(row.line);
    }
  }
  if (!duplicates.empty()) {
    std::sort(duplicates.begin(), duplicates.end());
    throw ValidationError(lines_message("event log: duplicate primary key (kind, user_id, live_id, ts_ms)", duplicates),
                          duplicates);
  }

  std::vector<InteractionEvent> events;
  events.reserve(rows.size());
  for (auto& row : rows) events.push_back(std::move(row.event));
  return events;
}

std::vector<InteractionEvent> load_event_log(const std::filesystem::path& path, const EventLogSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open event log " + path.string());
  EventLogSchema resolved = schema;
  if (resolved.format == LogFormat::kAuto) {
    resolved.format = detect_format(path);
    if (path.extension() == ".tsv") resolved.delimiter = '\t';
  }
  return parse_event_log(in, resolved);
}

void write_event_log(std::ostream& out, std::span<const InteractionEvent> events) {
  for (const auto& e : events) {
    ordered_json row;
    row["kind"] = std::string(to_string(e.kind));
    row["user_id"] = e.user_id;
    row["live_id"] = e.live_id;
    row["anchor_id"] = e.anchor_id;
    row["ts_ms"] = to_ms(e.ts);
    EventAttributes attrs = e.attrs;
    for (const char* field : kSideFields) {
      if (const auto& v = *side_slot(attrs, field)) row[field] = *v;
    }
    out << row.dump() << '\n';
  }
}

void write_event_log(const std::filesystem::path& path, std::span<const InteractionEvent> events) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write event log " + path.string());
  write_event_log(out, events);
}

ProfileTable load_profiles(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open profile sidecar " + path.string());
  ProfileTable table;
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::size_t> bad;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json obj = json::parse(line);
      UserProfile p;
      p.user_id = json_scalar(obj, "user_id").value();
      p.gender = json_scalar(obj, "gender").value_or("");
      p.age_bucket = json_scalar(obj, "age_bucket").value_or("");
      p.city = json_scalar(obj, "city").value_or("");
      table.insert_or_assign(p.user_id, std::move(p));
    } catch (const std::exception&) {
      bad.push_back(line_no);
    }
  }
  if (!bad.empty()) throw ValidationError(lines_message("profile sidecar: malformed row", bad), bad);
  return table;
}

void write_profiles(const std::filesystem::path& path, std::span<const UserProfile> profiles) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write profile sidecar " + path.string());
  for (const auto& p : profiles) {
    ordered_json row;
    row["user_id"] = p.user_id;
    row["gender"] = p.gender;
    row["age_bucket"] = p.age_bucket;
    row["city"] = p.city;
    out << row.dump() << '\n';
  }
}

}  // namespace sliver
