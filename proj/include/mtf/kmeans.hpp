#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mtf/core.hpp"

namespace mtf::curation {

enum class ClusterAlgorithm : std::uint8_t { Lloyd, MiniBatch };
enum class Exec : std::uint8_t { Serial, Parallel };

struct ClusterConfig {
    std::size_t k = 1;
    std::uint64_t seed = 0;
    std::size_t max_iters = 100;
    /// Stop once the relative objective improvement drops to this or below.
    double epsilon = 1e-6;
    ClusterAlgorithm algorithm = ClusterAlgorithm::Lloyd;
    std::size_t batch_size = 1024;  // mini-batch only
    Exec exec = Exec::Parallel;

    void validate() const;
};

struct ClusterResult {
    /// One point index per cluster, in cluster order; all distinct.
    std::vector<std::size_t> representatives;
    std::vector<std::uint32_t> labels;
    /// k x dim, row-major: the mean of each cluster's final members.
    std::vector<double> centroids;
    /// Objective after every assignment step.
    std::vector<double> objective_trace;
    /// Sum of squared distances from points to their final centroids.
    double objective = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
};

/// k-means (k-means++ seeding, then Lloyd or mini-batch updates) on an n x dim
/// row-major matrix, returning for each cluster the member nearest its
/// centroid (ties to the smallest index). Empty or duplicate centroids are
/// reseeded to the point farthest from the remaining centroids. A cluster
/// that still ends up empty is represented by the nearest point not already
/// chosen. Throws TooFewPoints (n < k) or NonFiniteEmbedding.
ClusterResult cluster_representatives(std::span<const double> points, std::size_t dim, const ClusterConfig& cfg);

/// Squared Euclidean distance.
double sq_distance(std::span<const double> a, std::span<const double> b);

}  // namespace mtf::curation
