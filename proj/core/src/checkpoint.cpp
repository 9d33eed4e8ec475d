#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "sliver/errors.hpp"
#include "sliver/training.hpp"

namespace sliver {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

constexpr char kMagic[] = "SLIVERCKPT";
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) throw SchemaError("checkpoint truncated");
  return value;
}

void read_doubles(std::istream& in, double* data, std::size_t n) {
  if (!in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(double)))) {
    throw SchemaError("checkpoint truncated");
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const MultiTaskModel& model) {
  const auto& enc = model.encoding();
  const auto& cfg = model.config();
  ordered_json header;
  std::vector<std::string> fields;
  for (const auto& f : enc.fields()) fields.push_back(f.name);
  header["encoding"] = {{"id_width", enc.id_width},         {"side_width", enc.side_width},
                        {"hash_buckets", enc.hash_buckets}, {"include_user_id", enc.include_user_id},
                        {"fields", fields},                 {"vocabularies", enc.vocabularies}};
  header["model"] = {{"architecture", std::string(to_string(cfg.architecture))},
                     {"bottom_hidden", cfg.bottom_hidden},
                     {"num_experts", cfg.num_experts},
                     {"expert_hidden", cfg.expert_hidden},
                     {"tower_hidden", cfg.tower_hidden},
                     {"embedding_init_scale", cfg.embedding_init_scale}};
  ordered_json dense = ordered_json::array();
  for (std::size_t i = 0; i < model.dense().size(); ++i) {
    dense.push_back({model.dense_names()[i], model.dense()[i].rows(), model.dense()[i].cols()});
  }
  header["dense"] = std::move(dense);
  ordered_json tables = ordered_json::array();
  for (std::size_t i = 0; i < model.embeddings().size(); ++i) {
    tables.push_back({enc.tables()[i].name, model.embeddings()[i].rows(), model.embeddings()[i].cols()});
  }
  header["embeddings"] = std::move(tables);
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic) - 1);
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  // Dense matrices column-major, embedding tables row-major, as stored.
  for (const auto& m : model.dense()) {
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  }
  for (const auto& t : model.embeddings()) {
    out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

MultiTaskModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  char magic[sizeof(kMagic) - 1];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw SchemaError("not a checkpoint file: " + path.string());
  }
  if (get<std::uint32_t>(in) != kVersion) throw SchemaError("unsupported checkpoint version");
  const auto len = get<std::uint64_t>(in);
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw SchemaError("checkpoint truncated");

  json header;
  try {
    header = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("checkpoint header: ") + e.what());
  }
  try {
    const auto& e = header.at("encoding");
    EncodingOptions options;
    options.fields = e.at("fields").get<std::vector<std::string>>();
    options.include_user_id = e.at("include_user_id").get<bool>();
    options.id_width = e.at("id_width").get<std::size_t>();
    options.side_width = e.at("side_width").get<std::size_t>();
    options.hash_buckets = e.at("hash_buckets").get<std::size_t>();
    FeatureEncoding enc = FeatureEncoding::standard(options);
    enc.vocabularies = e.at("vocabularies").get<std::map<std::string, std::vector<std::string>>>();

    const auto& m = header.at("model");
    ModelConfig cfg;
    cfg.architecture = parse_architecture(m.at("architecture").get<std::string>());
    cfg.bottom_hidden = m.at("bottom_hidden").get<std::vector<std::size_t>>();
    cfg.num_experts = m.at("num_experts").get<std::size_t>();
    cfg.expert_hidden = m.at("expert_hidden").get<std::vector<std::size_t>>();
    cfg.tower_hidden = m.at("tower_hidden").get<std::vector<std::size_t>>();
    cfg.embedding_init_scale = m.at("embedding_init_scale").get<double>();

    MultiTaskModel model(std::move(enc), cfg, 0);
    const auto& dense = header.at("dense");
    if (dense.size() != model.dense().size()) throw SchemaError("checkpoint dense layout mismatch");
    for (std::size_t i = 0; i < dense.size(); ++i) {
      auto& p = model.dense()[i];
      if (dense[i].at(0).get<std::string>() != model.dense_names()[i] || dense[i].at(1).get<Eigen::Index>() != p.rows() ||
          dense[i].at(2).get<Eigen::Index>() != p.cols()) {
        throw SchemaError("checkpoint shape mismatch for " + model.dense_names()[i]);
      }
    }
    const auto& tables = header.at("embeddings");
    if (tables.size() != model.embeddings().size()) throw SchemaError("checkpoint embedding layout mismatch");
    for (std::size_t i = 0; i < tables.size(); ++i) {
      const auto& t = model.embeddings()[i];
      if (tables[i].at(1).get<Eigen::Index>() != t.rows() || tables[i].at(2).get<Eigen::Index>() != t.cols()) {
        throw SchemaError("checkpoint shape mismatch for embedding " + tables[i].at(0).get<std::string>());
      }
    }
    for (auto& p : model.dense()) read_doubles(in, p.data(), static_cast<std::size_t>(p.size()));
    for (auto& t : model.embeddings()) read_doubles(in, t.data(), static_cast<std::size_t>(t.size()));
    return model;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("checkpoint header: ") + e.what());
  }
}

}  // namespace sliver
