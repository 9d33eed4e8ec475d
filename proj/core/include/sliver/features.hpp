#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "sliver/events.hpp"

namespace sliver {

enum class FieldGroup : std::uint8_t { kLive, kUser, kAnchor };

enum class FieldKind : std::uint8_t {
  kHashedId,    // hashed into a wide table
  kCategorical, // vocabulary lookup, index 0 reserved for out-of-vocabulary
  kHistory,     // mean of anchor_id embeddings
};

struct FieldSpec {
  std::string name;
  FieldGroup group = FieldGroup::kLive;
  FieldKind kind = FieldKind::kCategorical;
  /// Embedding table the field reads; the history shares the anchor_id table.
  std::size_t table = 0;
};

struct EmbeddingTableSpec {
  std::string name;
  std::size_t rows = 0;
  std::size_t width = 0;
};

/// Field names understood by the encoder.
const std::vector<std::string>& known_fields();

struct EncodingOptions {
  /// Empty: every known field.
  std::vector<std::string> fields;
  /// Offline runs ignore the user id.
  bool include_user_id = false;
  std::size_t id_width = 32;
  std::size_t side_width = 8;
  std::size_t hash_buckets = std::size_t{1} << 16;
};

struct FeatureEncoding {
  std::size_t id_width = 32;
  std::size_t side_width = 8;
  std::size_t hash_buckets = std::size_t{1} << 16;
  bool include_user_id = false;
  std::map<std::string, std::vector<std::string>> vocabularies;

  /// Encoder laid out as [live, user, anchor] with the generator's
  /// vocabularies. Throws EncodingError for unknown field names.
  static FeatureEncoding standard(const EncodingOptions& options = {});

  const std::vector<FieldSpec>& fields() const { return fields_; }
  const std::vector<EmbeddingTableSpec>& tables() const { return tables_; }
  /// Width of the concatenated input vector.
  std::size_t input_width() const;
  /// Offset of each field's slice in the input vector.
  std::vector<std::size_t> field_offsets() const;
  std::size_t field_width(const FieldSpec& field) const;
  /// Number of non-history fields (one row index each per sample).
  std::size_t num_lookup_fields() const;

  std::uint32_t hash_row(std::string_view value) const;
  std::uint32_t category_row(const std::string& field, std::string_view value) const;

 private:
  std::vector<FieldSpec> fields_;
  std::vector<EmbeddingTableSpec> tables_;
};

/// Table rows for one example: one per lookup field (layout order, history
/// excluded) and the pooled history rows.
struct EncodedFeatures {
  std::vector<std::uint32_t> rows;
  std::vector<std::uint32_t> history;

  bool operator==(const EncodedFeatures&) const = default;
};

/// Encodes the user profile against a room snapshot.
EncodedFeatures encode(const UserProfile& user, const LiveRoomSnapshot& live, const FeatureEncoding& encoding);
EncodedFeatures encode(const ImpressionSession& session, const FeatureEncoding& encoding);

}  // namespace sliver
