#pragma once

// Data-parallel inner loops. Each kernel has a serial reference and an OpenMP
// version with identical results; the serial one is what tests compare
// against and what the benchmark uses as its baseline.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace mtf::kernels {

using Counts101 = std::array<std::uint64_t, 101>;

/// Dense score matrix: `rows` records by `cols` metrics, row-major, -1 = missing.
struct ScoreMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::int16_t> values;

    std::int16_t at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

/// Row passes when score >= threshold on column 0 (single), both columns
/// (conjunction) or either column (disjunction). Missing scores never pass.
enum class MaskRule : std::uint8_t { Single, All, Any };

struct AssignResult {
    double objective = 0.0;
    std::size_t changed = 0;
};

namespace serial {

/// Scores must already lie in [0,100].
Counts101 histogram(std::span<const std::int16_t> scores);

/// Nearest centroid per point (ties to the lowest cluster index); writes
/// labels and squared distances, returns the summed objective and how many
/// labels changed.
AssignResult assign(std::span<const double> points, std::size_t dim, std::span<const double> centroids,
                    std::span<std::uint32_t> labels, std::span<double> sq_dist);

/// Mean of each cluster's members, summed in point-index order. Empty
/// clusters keep their previous centroid. Returns member counts.
std::vector<std::uint64_t> update_centroids(std::span<const double> points, std::size_t dim,
                                            std::span<const std::uint32_t> labels, std::span<double> centroids);

void filter_mask(const ScoreMatrix& scores, std::span<const int> thresholds, MaskRule rule, std::span<std::uint8_t> keep);

}  // namespace serial

namespace omp {

Counts101 histogram(std::span<const std::int16_t> scores);

AssignResult assign(std::span<const double> points, std::size_t dim, std::span<const double> centroids,
                    std::span<std::uint32_t> labels, std::span<double> sq_dist);

/// Bit-identical to the serial version: members are bucketed by label first,
/// then each cluster is reduced in point-index order on its own thread.
std::vector<std::uint64_t> update_centroids(std::span<const double> points, std::size_t dim,
                                            std::span<const std::uint32_t> labels, std::span<double> centroids);

void filter_mask(const ScoreMatrix& scores, std::span<const int> thresholds, MaskRule rule, std::span<std::uint8_t> keep);

int max_threads();

}  // namespace omp

}  // namespace mtf::kernels
