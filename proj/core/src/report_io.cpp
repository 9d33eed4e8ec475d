#include <charconv>
#include <fstream>

#include <json.hpp>

#include "sliver/errors.hpp"
#include "sliver/metrics.hpp"

namespace sliver {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string fmt(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

ordered_json jnum(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

ordered_json quantiles_json(const Quantiles& q) {
  return {{"count", q.count}, {"p50_ms", q.p50}, {"p90_ms", q.p90}, {"max_ms", q.max}};
}

}  // namespace

void write_eval_csv(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write report " + path.string());
  out << "paradigm,model,task,window_start_ms,window_end_ms,seed,auc,positives,negatives,std_error,rela_impr\n";
  for (const auto& cell : report.cells) {
    const std::string prefix = cell.paradigm + ',' + std::string(to_string(cell.architecture)) + ',';
    for (Task task : kAllTasks) {
      const std::size_t t = index_of(task);
      for (const auto& run : cell.runs) {
        for (const auto& win : run.windows) {
          out << prefix << to_string(task) << ',' << to_ms(win.start) << ',' << to_ms(win.end) << ',' << run.seed << ','
              << fmt(win.auc[t]) << ',' << win.positives[t] << ',' << win.negatives[t] << ",,\n";
        }
        out << prefix << to_string(task) << ",all,all," << run.seed << ',' << fmt(run.mean_auc[t]) << ",,,,\n";
      }
      out << prefix << to_string(task) << ",all,all,mean," << fmt(cell.mean_auc[t]) << ",,," << fmt(cell.std_error[t])
          << ',' << fmt(report.rela_impr_of(cell, task)) << '\n';
    }
  }
}

void write_eval_json(const std::filesystem::path& path, const EvalReport& report) {
  ordered_json doc;
  doc["baseline"] = report.baseline;
  ordered_json cells = ordered_json::array();
  for (const auto& cell : report.cells) {
    ordered_json c;
    c["paradigm"] = cell.paradigm;
    c["model"] = std::string(to_string(cell.architecture));
    ordered_json tasks = ordered_json::object();
    for (Task task : kAllTasks) {
      const std::size_t t = index_of(task);
      tasks[std::string(to_string(task))] = {{"mean_auc", jnum(cell.mean_auc[t])},
                                             {"std_error", jnum(cell.std_error[t])},
                                             {"rela_impr", jnum(report.rela_impr_of(cell, task))},
                                             {"undefined_windows", cell.undefined_windows[t]}};
    }
    c["tasks"] = std::move(tasks);
    ordered_json runs = ordered_json::array();
    for (const auto& run : cell.runs) {
      ordered_json r;
      r["seed"] = run.seed;
      r["trained_samples"] = run.trained_samples;
      r["max_trained_mu_ms"] = run.max_trained_mu ? ordered_json(to_ms(*run.max_trained_mu)) : ordered_json(nullptr);
      ordered_json mean = ordered_json::object();
      for (Task task : kAllTasks) mean[std::string(to_string(task))] = jnum(run.mean_auc[index_of(task)]);
      r["mean_auc"] = std::move(mean);
      ordered_json windows = ordered_json::array();
      for (const auto& win : run.windows) {
        ordered_json w;
        w["start_ms"] = to_ms(win.start);
        w["end_ms"] = to_ms(win.end);
        for (Task task : kAllTasks) {
          const std::size_t t = index_of(task);
          w[std::string(to_string(task))] = {
              {"auc", jnum(win.auc[t])}, {"positives", win.positives[t]}, {"negatives", win.negatives[t]}};
        }
        windows.push_back(std::move(w));
      }
      r["windows"] = std::move(windows);
      runs.push_back(std::move(r));
    }
    c["runs"] = std::move(runs);
    cells.push_back(std::move(c));
  }
  doc["cells"] = std::move(cells);
  ordered_json delays = ordered_json::array();
  for (const auto& d : report.delays) {
    ordered_json positive = ordered_json::object();
    for (Task task : kAllTasks) positive[std::string(to_string(task))] = quantiles_json(d.positive_delay[index_of(task)]);
    delays.push_back({{"paradigm", d.paradigm},
                      {"positive_delay", std::move(positive)},
                      {"emit_after_impression", quantiles_json(d.emit_after_impression)},
                      {"emit_after_request", quantiles_json(d.emit_after_request)}});
  }
  doc["delay_stats"] = std::move(delays);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write report " + path.string());
  out << doc.dump(2) << '\n';
}

}  // namespace sliver
