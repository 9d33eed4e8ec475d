#include <algorithm>
#include <cmath>
#include <fstream>

#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>

#include "sliver/errors.hpp"
#include "sliver/rereco.hpp"

namespace sliver {

namespace {

std::size_t best_candidate(const MultiTaskModel& model, const UserProfile& user,
                           std::span<const LiveRoomSnapshot> snapshots, const TaskWeights& alpha) {
  std::vector<EncodedFeatures> encoded;
  encoded.reserve(snapshots.size());
  for (const auto& snap : snapshots) encoded.push_back(encode(user, snap, model.encoding()));
  std::vector<const EncodedFeatures*> batch;
  for (const auto& e : encoded) batch.push_back(&e);
  const Predictions p = model.predict(batch);
  std::size_t best = 0;
  double best_score = 0.0;
  for (std::size_t i = 0; i < snapshots.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    const double s = fusion_score({p(0, col), p(1, col), p(2, col)}, alpha);
    if (i == 0 || s > best_score) {
      best = i;
      best_score = s;
    }
  }
  return best;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

std::vector<ServingEpisode> build_episodes(std::span<const ImpressionSession> sessions, const GroundTruth& truth) {
  std::vector<ServingEpisode> out;
  for (const auto& s : sessions) {
    if (!s.impression_ts) continue;
    auto it = truth.candidates.find(s.key());
    if (it == truth.candidates.end()) continue;
    ServingEpisode ep;
    ep.user = s.user;
    ep.request_ts = s.request_ts;
    ep.impression_ts = *s.impression_ts;
    for (auto room : it->second) ep.candidates.push_back(truth.snapshot(truth.rooms.at(room).live_id, s.request_ts));
    out.push_back(std::move(ep));
  }
  return out;
}

ServingSummary simulate_serving(std::vector<ServingEpisode>& episodes, const MultiTaskModel& model,
                                const RerecoPolicy& policy, const GroundTruth& clock, const TaskWeights& alpha) {
  if (policy.period <= Duration::zero()) throw ConfigError("re-reco period must be positive");
  ServingSummary summary;
  for (auto& ep : episodes) {
    ep.refresh_log.clear();
    if (ep.candidates.empty()) {
      ++summary.skipped;
      continue;
    }
    ++summary.simulated;
    ep.choice = best_candidate(model, ep.user, ep.candidates, alpha);
    ep.choice_snapshot_ts = ep.candidates[ep.choice].snapshot_ts;
    if (!policy.enabled) continue;
    std::vector<LiveRoomSnapshot> fresh(ep.candidates.size());
    for (Timestamp tick = ep.request_ts + policy.period; tick < ep.impression_ts; tick += policy.period) {
      for (std::size_t i = 0; i < ep.candidates.size(); ++i) fresh[i] = clock.snapshot(ep.candidates[i].live_id, tick);
      ep.choice = best_candidate(model, ep.user, fresh, alpha);
      ep.choice_snapshot_ts = tick;
      ep.refresh_log.push_back({tick, ep.candidates[ep.choice].live_id, tick});
    }
  }
  return summary;
}

StalenessReport staleness_report(std::span<const ServingEpisode> on, std::span<const ServingEpisode> off,
                                 const GroundTruth& truth) {
  if (on.size() != off.size()) throw ShapeError("paired episode lists differ in length");
  StalenessReport report;
  std::vector<double> st_on, st_off, ctr_on, ctr_off, diffs;
  for (std::size_t i = 0; i < on.size(); ++i) {
    if (on[i].candidates.empty()) continue;
    if (on[i].request_ts != off[i].request_ts || on[i].user.user_id != off[i].user.user_id) {
      throw ShapeError("episode lists are not paired");
    }
    st_on.push_back(static_cast<double>(to_ms(on[i].staleness())));
    st_off.push_back(static_cast<double>(to_ms(off[i].staleness())));
    ctr_on.push_back(true_ctr(truth, on[i].chosen_live(), on[i].impression_ts));
    ctr_off.push_back(true_ctr(truth, off[i].chosen_live(), off[i].impression_ts));
    diffs.push_back(ctr_on.back() - ctr_off.back());
    if (on[i].choice != off[i].choice) ++report.changed_choices;
  }
  report.episodes = diffs.size();
  report.mean_staleness_on_ms = mean_of(st_on);
  report.mean_staleness_off_ms = mean_of(st_off);
  report.staleness_on = summarize(std::move(st_on));
  report.staleness_off = summarize(std::move(st_off));
  report.mean_ctr_on = mean_of(ctr_on);
  report.mean_ctr_off = mean_of(ctr_off);
  report.mean_diff = mean_of(diffs);
  if (diffs.size() > 1) {
    double ss = 0.0;
    for (double d : diffs) ss += (d - report.mean_diff) * (d - report.mean_diff);
    const double n = static_cast<double>(diffs.size());
    report.diff_std_error = std::sqrt(ss / (n - 1.0) / n);
    if (report.diff_std_error > 0.0) {
      const double t = report.mean_diff / report.diff_std_error;
      report.t_statistic = t;
      boost::math::students_t dist(n - 1.0);
      report.p_value = boost::math::cdf(boost::math::complement(dist, t));
    }
  }
  return report;
}

void write_episodes_csv(const std::filesystem::path& path, std::span<const ServingEpisode> on,
                        std::span<const ServingEpisode> off, const GroundTruth& truth) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write episodes " + path.string());
  out.precision(17);
  out << "user_id,request_ts_ms,impression_ts_ms,policy,chosen_live_id,snapshot_ts_ms,staleness_ms,refreshes,true_ctr\n";
  auto row = [&](const ServingEpisode& ep, const char* policy) {
    if (ep.candidates.empty()) return;
    out << ep.user.user_id << ',' << to_ms(ep.request_ts) << ',' << to_ms(ep.impression_ts) << ',' << policy << ','
        << ep.chosen_live() << ',' << to_ms(ep.choice_snapshot_ts) << ',' << to_ms(ep.staleness()) << ','
        << ep.refresh_log.size() << ',' << true_ctr(truth, ep.chosen_live(), ep.impression_ts) << '\n';
  };
  for (std::size_t i = 0; i < on.size(); ++i) {
    row(on[i], "on");
    if (i < off.size()) row(off[i], "off");
  }
}

void write_staleness_json(const std::filesystem::path& path, const StalenessReport& r, const RerecoPolicy& policy) {
  using ordered_json = nlohmann::ordered_json;
  auto q = [](const Quantiles& x) {
    return ordered_json{{"count", x.count}, {"p50_ms", x.p50}, {"p90_ms", x.p90}, {"max_ms", x.max}};
  };
  ordered_json doc;
  doc["period_ms"] = to_ms(policy.period);
  doc["episodes"] = r.episodes;
  doc["staleness_on"] = q(r.staleness_on);
  doc["staleness_off"] = q(r.staleness_off);
  doc["mean_staleness_on_ms"] = r.mean_staleness_on_ms;
  doc["mean_staleness_off_ms"] = r.mean_staleness_off_ms;
  doc["mean_true_ctr_on"] = r.mean_ctr_on;
  doc["mean_true_ctr_off"] = r.mean_ctr_off;
  doc["mean_paired_diff"] = r.mean_diff;
  doc["diff_std_error"] = r.diff_std_error;
  doc["t_statistic"] = r.t_statistic ? ordered_json(*r.t_statistic) : ordered_json(nullptr);
  doc["p_value_one_sided"] = r.p_value;
  doc["changed_choices"] = r.changed_choices;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write staleness report " + path.string());
  out << doc.dump(2) << '\n';
}

}  // namespace sliver
