#include <algorithm>

#include "sliver/errors.hpp"
#include "sliver/features.hpp"
#include "sliver/simgen.hpp"

namespace sliver {

namespace {

struct KnownField {
  const char* name;
  FieldGroup group;
  FieldKind kind;
};

constexpr KnownField kKnown[] = {
    {"live_id", FieldGroup::kLive, FieldKind::kHashedId},
    {"live_type", FieldGroup::kLive, FieldKind::kCategorical},
    {"user_id", FieldGroup::kUser, FieldKind::kHashedId},
    {"gender", FieldGroup::kUser, FieldKind::kCategorical},
    {"age_bucket", FieldGroup::kUser, FieldKind::kCategorical},
    {"city", FieldGroup::kUser, FieldKind::kCategorical},
    {"click_anchor_history", FieldGroup::kUser, FieldKind::kHistory},
    {"anchor_id", FieldGroup::kAnchor, FieldKind::kHashedId},
    {"anchor_gender", FieldGroup::kAnchor, FieldKind::kCategorical},
    {"anchor_type", FieldGroup::kAnchor, FieldKind::kCategorical},
};

// FNV-1a; stable across platforms and runs.
std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

template <std::size_t N>
std::vector<std::string> to_vector(const std::array<std::string_view, N>& values) {
  return {values.begin(), values.end()};
}

std::string_view field_value(const UserProfile& user, const LiveRoomSnapshot& live, std::string_view name) {
  if (name == "live_id") return live.live_id;
  if (name == "live_type") return live.live_type;
  if (name == "user_id") return user.user_id;
  if (name == "gender") return user.gender;
  if (name == "age_bucket") return user.age_bucket;
  if (name == "city") return user.city;
  if (name == "anchor_id") return live.anchor_id;
  if (name == "anchor_gender") return live.anchor_gender;
  if (name == "anchor_type") return live.anchor_type;
  throw EncodingError("no value for field '" + std::string(name) + "'");
}

}  // namespace

const std::vector<std::string>& known_fields() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& f : kKnown) out.emplace_back(f.name);
    return out;
  }();
  return names;
}

FeatureEncoding FeatureEncoding::standard(const EncodingOptions& options) {
  const auto& fields = options.fields;
  const bool include_user_id = options.include_user_id;
  if (options.id_width == 0 || options.side_width == 0 || options.hash_buckets < 2) {
    throw EncodingError("embedding widths must be positive and hash buckets at least 2");
  }
  FeatureEncoding enc;
  enc.include_user_id = include_user_id;
  enc.id_width = options.id_width;
  enc.side_width = options.side_width;
  enc.hash_buckets = options.hash_buckets;
  std::vector<std::string> states;
  for (std::size_t s = 0; s < 8; ++s) states.push_back(content_state_name(s));
  enc.vocabularies = {
      {"live_type", states},
      {"gender", to_vector(kGenders)},
      {"age_bucket", to_vector(kAgeBuckets)},
      {"city", to_vector(kCities)},
      {"anchor_gender", to_vector(kGenders)},
      {"anchor_type", to_vector(kAnchorTypes)},
  };

  for (const auto& name : fields) {
    if (std::find(known_fields().begin(), known_fields().end(), name) == known_fields().end()) {
      throw EncodingError("unknown feature field '" + name + "'");
    }
  }
  auto wanted = [&](std::string_view name) {
    if (name == "user_id" && !include_user_id) return false;
    return fields.empty() || std::find(fields.begin(), fields.end(), name) != fields.end();
  };

  std::optional<std::size_t> anchor_table;
  auto anchor_table_index = [&] {
    if (!anchor_table) {
      anchor_table = enc.tables_.size();
      enc.tables_.push_back({"anchor_id", enc.hash_buckets, enc.id_width});
    }
    return *anchor_table;
  };
  for (const auto& known : kKnown) {
    if (!wanted(known.name)) continue;
    FieldSpec spec{known.name, known.group, known.kind, 0};
    if (known.kind == FieldKind::kHistory || spec.name == "anchor_id") {
      spec.table = anchor_table_index();
    } else {
      spec.table = enc.tables_.size();
      if (known.kind == FieldKind::kHashedId) {
        enc.tables_.push_back({spec.name, enc.hash_buckets, enc.id_width});
      } else {
        enc.tables_.push_back({spec.name, enc.vocabularies.at(spec.name).size() + 1, enc.side_width});
      }
    }
    enc.fields_.push_back(std::move(spec));
  }
  return enc;
}

std::size_t FeatureEncoding::field_width(const FieldSpec& field) const { return tables_.at(field.table).width; }

std::size_t FeatureEncoding::input_width() const {
  std::size_t w = 0;
  for (const auto& f : fields_) w += field_width(f);
  return w;
}

std::vector<std::size_t> FeatureEncoding::field_offsets() const {
  std::vector<std::size_t> out;
  std::size_t off = 0;
  for (const auto& f : fields_) {
    out.push_back(off);
    off += field_width(f);
  }
  return out;
}

std::size_t FeatureEncoding::num_lookup_fields() const {
  return static_cast<std::size_t>(
      std::count_if(fields_.begin(), fields_.end(), [](const FieldSpec& f) { return f.kind != FieldKind::kHistory; }));
}

std::uint32_t FeatureEncoding::hash_row(std::string_view value) const {
  if (value.empty() || hash_buckets < 2) return 0;
  return static_cast<std::uint32_t>(1 + fnv1a(value) % (hash_buckets - 1));
}

std::uint32_t FeatureEncoding::category_row(const std::string& field, std::string_view value) const {
  auto it = vocabularies.find(field);
  if (it == vocabularies.end()) throw EncodingError("no vocabulary for field '" + field + "'");
  auto pos = std::find(it->second.begin(), it->second.end(), value);
  return pos == it->second.end() ? 0 : static_cast<std::uint32_t>(pos - it->second.begin() + 1);
}

EncodedFeatures encode(const UserProfile& user, const LiveRoomSnapshot& live, const FeatureEncoding& encoding) {
  EncodedFeatures out;
  out.rows.reserve(encoding.num_lookup_fields());
  for (const auto& field : encoding.fields()) {
    switch (field.kind) {
      case FieldKind::kHashedId:
        out.rows.push_back(encoding.hash_row(field_value(user, live, field.name)));
        break;
      case FieldKind::kCategorical:
        out.rows.push_back(encoding.category_row(field.name, field_value(user, live, field.name)));
        break;
      case FieldKind::kHistory:
        for (const auto& anchor : user.click_anchor_history) out.history.push_back(encoding.hash_row(anchor));
        break;
    }
  }
  return out;
}

EncodedFeatures encode(const ImpressionSession& session, const FeatureEncoding& encoding) {
  return encode(session.user, session.live, encoding);
}

}  // namespace sliver
