#include "jointcast/eval/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>

namespace jointcast {

namespace {

const Trajectory& truth_for(const GroundTruth& gt, const PredictionEntry& pred, std::size_t i) {
  auto it = gt.find(pred.agent_ids[i]);
  if (it == gt.end()) {
    throw ValidationError("scenario '" + pred.scenario_id + "': no ground truth for agent " +
                          std::to_string(pred.agent_ids[i]));
  }
  if (static_cast<int>(it->second.size()) != pred.horizon()) {
    throw ValidationError("scenario '" + pred.scenario_id + "': ground truth horizon differs from prediction");
  }
  return it->second;
}

double fde(const Trajectory& p, const Trajectory& g) { return (p.back() - g.back()).norm(); }

double ade(const Trajectory& p, const Trajectory& g) {
  double s = 0.0;
  for (std::size_t t = 0; t < p.size(); ++t) s += (p[t] - g[t]).norm();
  return s / static_cast<double>(p.size());
}

std::size_t most_probable(const std::vector<double>& pi) {
  return static_cast<std::size_t>(std::max_element(pi.begin(), pi.end()) - pi.begin());
}

std::string fmt(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

void multiworld_metrics(const PredictionEntry& pred, const GroundTruth& gt, const MetricOptions& opt,
                        ScenarioMetrics& out) {
  validate_prediction(pred);
  const std::size_t modes = pred.modes.size();
  const std::size_t agents = pred.agent_ids.size();
  std::vector<double> avg_fde(modes, 0.0), avg_ade(modes, 0.0);
  for (std::size_t k = 0; k < modes; ++k) {
    for (std::size_t i = 0; i < agents; ++i) {
      const Trajectory& g = truth_for(gt, pred, i);
      avg_fde[k] += fde(pred.modes[k][i], g);
      avg_ade[k] += ade(pred.modes[k][i], g);
    }
    avg_fde[k] /= static_cast<double>(agents);
    avg_ade[k] /= static_cast<double>(agents);
  }
  const std::size_t best = static_cast<std::size_t>(std::min_element(avg_fde.begin(), avg_fde.end()) - avg_fde.begin());
  const std::size_t top = most_probable(pred.pi);
  out.scenario_id = pred.scenario_id;
  out.num_agents = static_cast<int>(agents);
  out.best_world = static_cast<int>(best);
  out.avg_min_fde_k = avg_fde[best];
  out.avg_min_ade_k = avg_ade[best];
  out.avg_min_fde_1 = avg_fde[top];
  out.avg_min_ade_1 = avg_ade[top];
  const double miss = 1.0 - pred.pi[best];
  out.avg_brier_min_fde_k = avg_fde[best] + miss * miss;

  const auto& world = pred.modes[best];
  int missed = 0, collided = 0;
  for (std::size_t i = 0; i < agents; ++i) {
    if (fde(world[i], truth_for(gt, pred, i)) > opt.miss_threshold) ++missed;
    bool hit = false;
    for (std::size_t j = 0; j < agents && !hit; ++j) {
      if (j == i) continue;
      for (std::size_t t = 0; t < world[i].size() && !hit; ++t) hit = (world[i][t] - world[j][t]).norm() < opt.collision_radius;
    }
    if (hit) ++collided;
  }
  out.actor_mr_k = static_cast<double>(missed) / static_cast<double>(agents);
  out.actor_cr_k = static_cast<double>(collided) / static_cast<double>(agents);
}

void marginal_metrics(const PredictionEntry& pred, const GroundTruth& gt, const MetricOptions& opt,
                      ScenarioMetrics& out) {
  validate_prediction(pred);
  const std::size_t agents = pred.agent_ids.size();
  double sum_fde = 0.0, sum_ade = 0.0, sum_b = 0.0;
  int misses = 0;
  for (std::size_t i = 0; i < agents; ++i) {
    const Trajectory& g = truth_for(gt, pred, i);
    double best_fde = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t k = 0; k < pred.modes.size(); ++k) {
      const double f = fde(pred.modes[k][i], g);
      if (f < best_fde) {
        best_fde = f;
        arg = k;
      }
    }
    // ADE of the endpoint-selected mode, as in the multi-world definition.
    sum_fde += best_fde;
    sum_ade += ade(pred.modes[arg][i], g);
    sum_b += best_fde + (1.0 - pred.pi[arg]) * (1.0 - pred.pi[arg]);
    if (best_fde > opt.miss_threshold) ++misses;
  }
  const double n = static_cast<double>(agents);
  out.scenario_id = pred.scenario_id;
  out.num_agents = static_cast<int>(agents);
  out.min_fde_k = sum_fde / n;
  out.min_ade_k = sum_ade / n;
  out.mr_k = misses / n;
  out.b_min_fde_k = sum_b / n;
}

ScenarioMetrics scenario_metrics(const PredictionEntry& pred, const GroundTruth& gt, const MetricOptions& opt) {
  ScenarioMetrics m;
  multiworld_metrics(pred, gt, opt, m);
  marginal_metrics(pred, gt, opt, m);
  return m;
}

ScenarioMetrics aggregate_metrics(const std::vector<ScenarioMetrics>& rows) {
  ScenarioMetrics agg;
  agg.scenario_id = "aggregate";
  if (rows.empty()) return agg;
  double actors = 0.0;
  for (const auto& r : rows) {
    const double n = r.num_agents;
    actors += n;
    agg.num_agents += r.num_agents;
    agg.avg_min_fde_k += r.avg_min_fde_k;
    agg.avg_min_fde_1 += r.avg_min_fde_1;
    agg.avg_min_ade_k += r.avg_min_ade_k;
    agg.avg_min_ade_1 += r.avg_min_ade_1;
    agg.avg_brier_min_fde_k += r.avg_brier_min_fde_k;
    agg.actor_mr_k += r.actor_mr_k * n;
    agg.actor_cr_k += r.actor_cr_k * n;
    agg.min_fde_k += r.min_fde_k * n;
    agg.min_ade_k += r.min_ade_k * n;
    agg.mr_k += r.mr_k * n;
    agg.b_min_fde_k += r.b_min_fde_k * n;
  }
  const double s = static_cast<double>(rows.size());
  agg.avg_min_fde_k /= s;
  agg.avg_min_fde_1 /= s;
  agg.avg_min_ade_k /= s;
  agg.avg_min_ade_1 /= s;
  agg.avg_brier_min_fde_k /= s;
  agg.actor_mr_k /= actors;
  agg.actor_cr_k /= actors;
  agg.min_fde_k /= actors;
  agg.min_ade_k /= actors;
  agg.mr_k /= actors;
  agg.b_min_fde_k /= actors;
  return agg;
}

MetricReport evaluate(const std::vector<PredictionEntry>& preds, const std::map<std::string, GroundTruth>& gt,
                      const MetricOptions& opt) {
  std::map<std::string, const PredictionEntry*> by_id;
  for (const auto& p : preds) by_id[p.scenario_id] = &p;
  std::string missing;
  for (const auto& [id, _] : gt) {
    if (!by_id.count(id)) missing += (missing.empty() ? "" : ", ") + id;
  }
  if (!missing.empty()) throw ValidationError("scenarios without predictions: " + missing);
  MetricReport report;
  for (const auto& [id, truth] : gt) report.rows.push_back(scenario_metrics(*by_id[id], truth, opt));
  report.aggregate = aggregate_metrics(report.rows);
  return report;
}

std::string metrics_csv(const MetricReport& report) {
  std::string s =
      "scenario_id,avgMinFDE_K,avgMinFDE_1,avgMinADE_K,avgMinADE_1,actorMR_K,avgBrierMinFDE_K,actorCR_K,"
      "minFDE_K,minADE_K,MR_K,b-minFDE_K\n";
  auto row = [&s](const ScenarioMetrics& m) {
    // RFC 4180 quoting when the id carries a delimiter, quote or line break.
    if (m.scenario_id.find_first_of(",\"\r\n") == std::string::npos) {
      s += m.scenario_id;
    } else {
      s += '"';
      for (char c : m.scenario_id) s += c == '"' ? std::string("\"\"") : std::string(1, c);
      s += '"';
    }
    for (double v : {m.avg_min_fde_k, m.avg_min_fde_1, m.avg_min_ade_k, m.avg_min_ade_1, m.actor_mr_k,
                     m.avg_brier_min_fde_k, m.actor_cr_k, m.min_fde_k, m.min_ade_k, m.mr_k, m.b_min_fde_k}) {
      s += ',' + fmt(v);
    }
    s += '\n';
  };
  for (const auto& r : report.rows) row(r);
  row(report.aggregate);
  return s;
}

void write_metrics_csv(const MetricReport& report, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << metrics_csv(report);
  if (!os) throw IoError("failed writing " + path.string());
}

}  // namespace jointcast
