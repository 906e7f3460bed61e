#include "jointcast/eval/ensemble.hpp"

#include <cmath>
#include <limits>

#include "jointcast/core/random.hpp"

namespace jointcast {

namespace {

// Index drawn with probability proportional to mass; falls back to the last
// positive entry against rounding.
Index draw(const std::vector<double>& mass, Rng& rng) {
  double total = 0.0;
  for (double m : mass) total += m;
  double u = rng.uniform() * total;
  Index last = 0;
  for (std::size_t i = 0; i < mass.size(); ++i) {
    if (mass[i] <= 0.0) continue;
    last = static_cast<Index>(i);
    if (u < mass[i]) return last;
    u -= mass[i];
  }
  return last;
}

// Nearest centroid, ties to the smaller index.
int nearest(const Matrix<double>& centroids, const Eigen::Ref<const RowVector<double>>& x, double* dist = nullptr) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Index c = 0; c < centroids.rows(); ++c) {
    const double d = (centroids.row(c) - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  if (dist != nullptr) *dist = best_d;
  return best;
}

}  // namespace

double weighted_cost(const Matrix<double>& points, const std::vector<double>& weights,
                     const std::vector<int>& assignments, const Matrix<double>& centroids) {
  double cost = 0.0;
  for (Index i = 0; i < points.rows(); ++i) {
    cost += weights[static_cast<std::size_t>(i)] * (points.row(i) - centroids.row(assignments[static_cast<std::size_t>(i)])).squaredNorm();
  }
  return cost;
}

KMeansResult weighted_kmeans(const Matrix<double>& points, const std::vector<double>& weights, int k, int iters,
                             std::uint64_t seed) {
  const Index n = points.rows();
  if (k < 1 || n < k) throw InputError("weighted_kmeans: need at least K=" + std::to_string(k) + " points, got " + std::to_string(n));
  if (iters < 1) throw InputError("weighted_kmeans: iters must be >= 1");
  if (static_cast<Index>(weights.size()) != n) throw InputError("weighted_kmeans: one weight per point required");
  for (double w : weights) {
    if (!(w > 0.0)) throw InputError("weighted_kmeans: weights must be positive");
  }

  Rng rng(seed);
  KMeansResult r;
  r.centroids.resize(k, points.cols());
  r.centroids.row(0) = points.row(draw(weights, rng));
  // Greedy k-means++: each later seed is the best of a few w*d^2 draws by
  // the weighted potential it leaves.
  std::vector<double> closest(static_cast<std::size_t>(n)), mass(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) closest[static_cast<std::size_t>(i)] = (points.row(i) - r.centroids.row(0)).squaredNorm();
  const int candidates = 2 + static_cast<int>(std::log(static_cast<double>(k)));
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (Index i = 0; i < n; ++i) {
      mass[static_cast<std::size_t>(i)] = weights[static_cast<std::size_t>(i)] * closest[static_cast<std::size_t>(i)];
      total += mass[static_cast<std::size_t>(i)];
    }
    Index best = -1;
    double best_potential = std::numeric_limits<double>::infinity();
    for (int trial = 0; trial < candidates; ++trial) {
      const Index cand = draw(total > 0.0 ? mass : weights, rng);
      double potential = 0.0;
      for (Index i = 0; i < n; ++i) {
        potential += weights[static_cast<std::size_t>(i)] *
                     std::min(closest[static_cast<std::size_t>(i)], (points.row(i) - points.row(cand)).squaredNorm());
      }
      if (potential < best_potential) {
        best_potential = potential;
        best = cand;
      }
    }
    r.centroids.row(c) = points.row(best);
    for (Index i = 0; i < n; ++i) {
      closest[static_cast<std::size_t>(i)] =
          std::min(closest[static_cast<std::size_t>(i)], (points.row(i) - r.centroids.row(c)).squaredNorm());
    }
  }

  r.assignments.assign(static_cast<std::size_t>(n), -1);
  for (int it = 0; it < iters; ++it) {
    std::vector<int> next(static_cast<std::size_t>(n));
    std::vector<double> dist(static_cast<std::size_t>(n));
    std::vector<int> count(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < n; ++i) {
      next[static_cast<std::size_t>(i)] = nearest(r.centroids, points.row(i), &dist[static_cast<std::size_t>(i)]);
      ++count[static_cast<std::size_t>(next[static_cast<std::size_t>(i)])];
    }
    for (int c = 0; c < k; ++c) {
      if (count[static_cast<std::size_t>(c)] > 0) continue;
      Index far = -1;
      for (Index i = 0; i < n; ++i) {
        if (count[static_cast<std::size_t>(next[static_cast<std::size_t>(i)])] < 2) continue;
        if (far < 0 || dist[static_cast<std::size_t>(i)] > dist[static_cast<std::size_t>(far)]) far = i;
      }
      --count[static_cast<std::size_t>(next[static_cast<std::size_t>(far)])];
      next[static_cast<std::size_t>(far)] = c;
      dist[static_cast<std::size_t>(far)] = 0.0;
      count[static_cast<std::size_t>(c)] = 1;
    }
    const bool fixpoint = next == r.assignments;
    r.assignments = std::move(next);
    if (fixpoint) break;
    Matrix<double> sums = Matrix<double>::Zero(k, points.cols());
    std::vector<double> wsum(static_cast<std::size_t>(k), 0.0);
    for (Index i = 0; i < n; ++i) {
      const auto a = static_cast<std::size_t>(r.assignments[static_cast<std::size_t>(i)]);
      sums.row(static_cast<Index>(a)) += weights[static_cast<std::size_t>(i)] * points.row(i);
      wsum[a] += weights[static_cast<std::size_t>(i)];
    }
    for (int c = 0; c < k; ++c) r.centroids.row(c) = sums.row(c) / wsum[static_cast<std::size_t>(c)];
    r.cost_history.push_back(weighted_cost(points, weights, r.assignments, r.centroids));
    r.iterations = it + 1;
  }
  return r;
}

PredictionEntry ensemble_scene(const std::vector<PredictionEntry>& members, const EnsembleOptions& opt) {
  if (members.empty()) throw ValidationError("ensemble: no predictions");
  const PredictionEntry& ref = members.front();
  for (const auto& m : members) {
    validate_prediction(m);
    if (m.scenario_id != ref.scenario_id || m.agent_ids != ref.agent_ids || m.horizon() != ref.horizon()) {
      throw ValidationError("ensemble: members of scenario '" + ref.scenario_id + "' are not aligned");
    }
  }
  const std::size_t agents = ref.agent_ids.size();
  const int horizon = ref.horizon();
  std::vector<const std::vector<Trajectory>*> worlds;
  std::vector<double> weights;
  for (const auto& m : members) {
    for (std::size_t k = 0; k < m.modes.size(); ++k) {
      worlds.push_back(&m.modes[k]);
      // A zero score would drop out of the weighted means entirely.
      weights.push_back(std::max(m.pi[k], 1e-12));
    }
  }
  Matrix<double> endpoints(static_cast<Index>(worlds.size()), static_cast<Index>(2 * agents));
  for (std::size_t w = 0; w < worlds.size(); ++w) {
    for (std::size_t i = 0; i < agents; ++i) {
      endpoints(static_cast<Index>(w), static_cast<Index>(2 * i)) = (*worlds[w])[i].back().x();
      endpoints(static_cast<Index>(w), static_cast<Index>(2 * i + 1)) = (*worlds[w])[i].back().y();
    }
  }
  const KMeansResult km = weighted_kmeans(endpoints, weights, opt.modes, opt.iters, opt.seed);

  PredictionEntry out;
  out.scenario_id = ref.scenario_id;
  out.agent_ids = ref.agent_ids;
  out.modes.assign(static_cast<std::size_t>(opt.modes),
                   std::vector<Trajectory>(agents, Trajectory(static_cast<std::size_t>(horizon), Point2::Zero())));
  std::vector<double> mass(static_cast<std::size_t>(opt.modes), 0.0), norm(static_cast<std::size_t>(opt.modes), 0.0);
  double total = 0.0;
  for (std::size_t w = 0; w < worlds.size(); ++w) {
    const auto c = static_cast<std::size_t>(km.assignments[w]);
    const double a = opt.weighted_average ? weights[w] : 1.0;
    mass[c] += weights[w];
    norm[c] += a;
    total += weights[w];
    for (std::size_t i = 0; i < agents; ++i) {
      for (int t = 0; t < horizon; ++t) out.modes[c][i][static_cast<std::size_t>(t)] += a * (*worlds[w])[i][static_cast<std::size_t>(t)];
    }
  }
  for (std::size_t c = 0; c < out.modes.size(); ++c) {
    for (auto& traj : out.modes[c]) {
      for (auto& p : traj) p /= norm[c];
    }
    out.pi.push_back(mass[c] / total);
  }
  return out;
}

}  // namespace jointcast
