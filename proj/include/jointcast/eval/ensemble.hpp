#pragma once

#include <cstdint>
#include <vector>

#include "jointcast/core/array.hpp"
#include "jointcast/model/prediction.hpp"

namespace jointcast {

struct KMeansResult {
  std::vector<int> assignments;       // [N]
  Matrix<double> centroids;           // [K, P]
  std::vector<double> cost_history;   // weighted cost after each Lloyd update
  int iterations = 0;
};

/// Sum over points of w_i * ||x_i - c_{a_i}||^2.
double weighted_cost(const Matrix<double>& points, const std::vector<double>& weights,
                     const std::vector<int>& assignments, const Matrix<double>& centroids);

/// Weighted k-means with weight-proportional k-means++ seeding and Lloyd
/// updates. Stops after `iters` updates or when assignments stop changing.
/// A cluster left empty takes the point farthest from its centroid.
/// Throws InputError when N < K, iters < 1 or a weight is not positive.
KMeansResult weighted_kmeans(const Matrix<double>& points, const std::vector<double>& weights, int k, int iters,
                             std::uint64_t seed);

struct EnsembleOptions {
  int modes = 6;
  int iters = 50;
  std::uint64_t seed = 0;
  bool weighted_average = true;  // false: plain mean of cluster members
};

/// Clusters every world of every member on its joint endpoints, weighted by
/// the member's pi, and averages the trajectories within each cluster. Output
/// pi is each cluster's share of the total weight. Throws ValidationError
/// when members disagree on scenario, agents or horizon.
PredictionEntry ensemble_scene(const std::vector<PredictionEntry>& members, const EnsembleOptions& opt = {});

}  // namespace jointcast
