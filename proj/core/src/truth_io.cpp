#include <algorithm>
#include <fstream>
#include <tuple>

#include <json.hpp>

#include "sliver/errors.hpp"
#include "sliver/simgen.hpp"

namespace sliver {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

constexpr const char* kTruthFormat = "sliver-ground-truth";
constexpr int kTruthVersion = 1;

}  // namespace

void write_truth(const std::filesystem::path& path, const GroundTruth& truth) {
  ordered_json doc;
  doc["format"] = kTruthFormat;
  doc["version"] = kTruthVersion;
  doc["state_names"] = truth.state_names;
  doc["segment_shares"] = truth.segment_shares;
  doc["base_rates"] = {{"click", truth.base_rates.click},
                       {"follow", truth.base_rates.follow},
                       {"like", truth.base_rates.like}};
  ordered_json rooms = ordered_json::array();
  for (const auto& r : truth.rooms) {
    ordered_json segs = ordered_json::array();
    for (const auto& s : r.segments) segs.push_back({to_ms(s.start), s.state, s.offset});
    rooms.push_back({{"live_id", r.live_id},
                     {"anchor_id", r.anchor_id},
                     {"anchor_gender", r.anchor_gender},
                     {"anchor_type", r.anchor_type},
                     {"segments", std::move(segs)}});
  }
  doc["rooms"] = std::move(rooms);

  // Sessions in key order so the file is independent of hash-map iteration.
  std::vector<const SessionKey*> keys;
  keys.reserve(truth.labels.size());
  for (const auto& [key, labels] : truth.labels) keys.push_back(&key);
  std::sort(keys.begin(), keys.end(), [](const SessionKey* a, const SessionKey* b) {
    return std::tie(a->request_ts, a->user_id, a->live_id) < std::tie(b->request_ts, b->user_id, b->live_id);
  });
  ordered_json sessions = ordered_json::array();
  for (const SessionKey* key : keys) {
    const auto& labels = truth.labels.at(*key);
    ordered_json row = {key->user_id,          key->live_id,           to_ms(key->request_ts),
                        labels.positive[0],     labels.positive[1],     labels.positive[2]};
    auto cand = truth.candidates.find(*key);
    row.push_back(cand == truth.candidates.end() ? std::vector<std::uint32_t>{} : cand->second);
    sessions.push_back(std::move(row));
  }
  doc["sessions_columns"] = {"user_id", "live_id", "request_ts_ms", "click", "follow", "like", "candidates"};
  doc["sessions"] = std::move(sessions);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write ground truth " + path.string());
  out << doc.dump() << '\n';
}

GroundTruth load_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open ground truth " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("ground truth: ") + e.what());
  }
  if (doc.value("format", "") != kTruthFormat) throw SchemaError("ground truth: unexpected format tag");
  if (doc.value("version", 0) != kTruthVersion) throw SchemaError("ground truth: unsupported version");
  GroundTruth truth;
  try {
    truth.state_names = doc.at("state_names").get<std::vector<std::string>>();
    truth.segment_shares = doc.at("segment_shares").get<std::vector<double>>();
    const auto& rates = doc.at("base_rates");
    truth.base_rates.click = rates.at("click").get<std::vector<std::vector<double>>>();
    truth.base_rates.follow = rates.at("follow").get<std::vector<std::vector<double>>>();
    truth.base_rates.like = rates.at("like").get<std::vector<std::vector<double>>>();
    for (const auto& r : doc.at("rooms")) {
      RoomTrajectory room;
      room.live_id = r.at("live_id").get<std::string>();
      room.anchor_id = r.at("anchor_id").get<std::string>();
      room.anchor_gender = r.at("anchor_gender").get<std::string>();
      room.anchor_type = r.at("anchor_type").get<std::string>();
      for (const auto& s : r.at("segments")) {
        room.segments.push_back({from_ms(s.at(0).get<std::int64_t>()), s.at(1).get<std::uint32_t>(),
                                 s.at(2).get<double>()});
      }
      if (room.segments.empty()) throw SchemaError("ground truth: room without content segments");
      truth.rooms.push_back(std::move(room));
    }
    for (const auto& row : doc.at("sessions")) {
      SessionKey key{row.at(0).get<std::string>(), row.at(1).get<std::string>(), from_ms(row.at(2).get<std::int64_t>())};
      EventualLabels labels;
      labels.positive = {row.at(3).get<bool>(), row.at(4).get<bool>(), row.at(5).get<bool>()};
      truth.labels.emplace(key, labels);
      auto cands = row.at(6).get<std::vector<std::uint32_t>>();
      for (auto c : cands) {
        if (c >= truth.rooms.size()) throw SchemaError("ground truth: candidate index out of range");
      }
      truth.candidates.emplace(std::move(key), std::move(cands));
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("ground truth: ") + e.what());
  }
  truth.index();
  return truth;
}

}  // namespace sliver
