#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "mtf/kernels.hpp"

namespace mtf::kernels::omp {

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

Counts101 histogram(std::span<const std::int16_t> scores) {
    Counts101 counts{};
    const auto n = static_cast<std::ptrdiff_t>(scores.size());
    const std::int16_t* s = scores.data();
#pragma omp parallel
    {
        Counts101 local{};
#pragma omp for nowait schedule(static)
        for (std::ptrdiff_t i = 0; i < n; ++i) ++local[static_cast<std::size_t>(s[i])];
#pragma omp critical(mtf_histogram_merge)
        for (std::size_t b = 0; b < local.size(); ++b) counts[b] += local[b];
    }
    return counts;
}

AssignResult assign(std::span<const double> points, std::size_t dim, std::span<const double> centroids,
                    std::span<std::uint32_t> labels, std::span<double> sq_dist) {
    const auto n = static_cast<std::ptrdiff_t>(labels.size());
    const std::size_t k = centroids.size() / dim;
    std::size_t changed = 0;

#pragma omp parallel for schedule(static) reduction(+ : changed)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const double* p = points.data() + static_cast<std::size_t>(i) * dim;
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
        if (labels[i] != best_c) ++changed;
        labels[i] = best_c;
        sq_dist[i] = best;
    }

    // Objective summed in index order so it matches the serial kernel exactly.
    AssignResult out;
    out.changed = changed;
    for (std::ptrdiff_t i = 0; i < n; ++i) out.objective += sq_dist[i];
    return out;
}

std::vector<std::uint64_t> update_centroids(std::span<const double> points, std::size_t dim,
                                            std::span<const std::uint32_t> labels, std::span<double> centroids) {
    const std::size_t k = centroids.size() / dim;
    const std::size_t n = labels.size();

    // Counting sort of point indices by label; within a cluster indices stay ascending.
    std::vector<std::uint64_t> counts(k, 0);
    for (auto c : labels) ++counts[c];
    std::vector<std::size_t> offsets(k + 1, 0);
    for (std::size_t c = 0; c < k; ++c) offsets[c + 1] = offsets[c] + counts[c];
    std::vector<std::size_t> members(n);
    {
        std::vector<std::size_t> cursor(offsets.begin(), offsets.end() - 1);
        for (std::size_t i = 0; i < n; ++i) members[cursor[labels[i]]++] = i;
    }

    const auto kk = static_cast<std::ptrdiff_t>(k);
#pragma omp parallel for schedule(dynamic, 4)
    for (std::ptrdiff_t c = 0; c < kk; ++c) {
        const auto cu = static_cast<std::size_t>(c);
        if (counts[cu] == 0) continue;
        std::vector<double> sum(dim, 0.0);
        for (std::size_t m = offsets[cu]; m < offsets[cu + 1]; ++m) {
            const double* p = points.data() + members[m] * dim;
            for (std::size_t j = 0; j < dim; ++j) sum[j] += p[j];
        }
        for (std::size_t j = 0; j < dim; ++j) centroids[cu * dim + j] = sum[j] / static_cast<double>(counts[cu]);
    }
    return counts;
}

void filter_mask(const ScoreMatrix& scores, std::span<const int> thresholds, MaskRule rule, std::span<std::uint8_t> keep) {
    const auto rows = static_cast<std::ptrdiff_t>(scores.rows);
    const int t0 = thresholds[0];
    const int t1 = rule == MaskRule::Single ? 0 : thresholds[1];
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t r = 0; r < rows; ++r) {
        const auto ru = static_cast<std::size_t>(r);
        const auto a = scores.at(ru, 0);
        const bool pass_a = a >= 0 && a >= t0;
        bool pass = pass_a;
        if (rule != MaskRule::Single) {
            const auto b = scores.at(ru, 1);
            const bool pass_b = b >= 0 && b >= t1;
            pass = rule == MaskRule::All ? (pass_a && pass_b) : (pass_a || pass_b);
        }
        keep[ru] = pass ? 1 : 0;
    }
}

}  // namespace mtf::kernels::omp
