#include <limits>

#include "mtf/kernels.hpp"

namespace mtf::kernels::serial {

Counts101 histogram(std::span<const std::int16_t> scores) {
    Counts101 counts{};
    for (auto s : scores) ++counts[static_cast<std::size_t>(s)];
    return counts;
}

AssignResult assign(std::span<const double> points, std::size_t dim, std::span<const double> centroids,
                    std::span<std::uint32_t> labels, std::span<double> sq_dist) {
    const std::size_t n = labels.size();
    const std::size_t k = centroids.size() / dim;
    AssignResult out;
    for (std::size_t i = 0; i < n; ++i) {
        const double* p = points.data() + i * dim;
        double best = std::numeric_limits<double>::infinity();
        std::uint32_t best_c = 0;
        for (std::size_t c = 0; c < k; ++c) {
            const double* q = centroids.data() + c * dim;
            double d2 = 0.0;
            for (std::size_t j = 0; j < dim; ++j) {
                const double diff = p[j] - q[j];
                d2 += diff * diff;
            }
            if (d2 < best) {
                best = d2;
                best_c = static_cast<std::uint32_t>(c);
            }
        }
        if (labels[i] != best_c) ++out.changed;
        labels[i] = best_c;
        sq_dist[i] = best;
        out.objective += best;
    }
    return out;
}

std::vector<std::uint64_t> update_centroids(std::span<const double> points, std::size_t dim,
                                            std::span<const std::uint32_t> labels, std::span<double> centroids) {
    const std::size_t k = centroids.size() / dim;
    std::vector<std::uint64_t> counts(k, 0);
    std::vector<double> sums(k * dim, 0.0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto c = labels[i];
        ++counts[c];
        for (std::size_t j = 0; j < dim; ++j) sums[c * dim + j] += points[i * dim + j];
    }
    for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] == 0) continue;
        for (std::size_t j = 0; j < dim; ++j) centroids[c * dim + j] = sums[c * dim + j] / static_cast<double>(counts[c]);
    }
    return counts;
}

void filter_mask(const ScoreMatrix& scores, std::span<const int> thresholds, MaskRule rule, std::span<std::uint8_t> keep) {
    for (std::size_t r = 0; r < scores.rows; ++r) {
        const auto a = scores.at(r, 0);
        const bool pass_a = a >= 0 && a >= thresholds[0];
        bool pass = pass_a;
        if (rule != MaskRule::Single) {
            const auto b = scores.at(r, 1);
            const bool pass_b = b >= 0 && b >= thresholds[1];
            pass = rule == MaskRule::All ? (pass_a && pass_b) : (pass_a || pass_b);
        }
        keep[r] = pass ? 1 : 0;
    }
}

}  // namespace mtf::kernels::serial
