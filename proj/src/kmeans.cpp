#include "mtf/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mtf/kernels.hpp"
#include "mtf/rng.hpp"

namespace mtf::curation {

namespace {

constexpr std::uint32_t kUnassigned = std::numeric_limits<std::uint32_t>::max();

struct Matrix {
    std::span<const double> data;
    std::size_t dim;

    std::size_t rows() const { return data.size() / dim; }
    std::span<const double> row(std::size_t i) const { return data.subspan(i * dim, dim); }
};

std::span<double> centroid(std::vector<double>& c, std::size_t i, std::size_t dim) {
    return std::span<double>(c).subspan(i * dim, dim);
}

kernels::AssignResult assign(const ClusterConfig& cfg, const Matrix& pts, const std::vector<double>& centroids,
                             std::vector<std::uint32_t>& labels, std::vector<double>& sq) {
    if (cfg.exec == Exec::Parallel) return kernels::omp::assign(pts.data, pts.dim, centroids, labels, sq);
    return kernels::serial::assign(pts.data, pts.dim, centroids, labels, sq);
}

std::vector<std::uint64_t> update(const ClusterConfig& cfg, const Matrix& pts, const std::vector<std::uint32_t>& labels,
                                  std::vector<double>& centroids) {
    if (cfg.exec == Exec::Parallel) return kernels::omp::update_centroids(pts.data, pts.dim, labels, centroids);
    return kernels::serial::update_centroids(pts.data, pts.dim, labels, centroids);
}

std::vector<double> seed_plus_plus(const Matrix& pts, std::size_t k, Rng& rng) {
    const std::size_t n = pts.rows();
    const std::size_t dim = pts.dim;
    std::vector<double> centroids(k * dim);
    std::vector<bool> chosen(n, false);
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());

    auto take = [&](std::size_t c, std::size_t idx) {
        chosen[idx] = true;
        std::copy_n(pts.row(idx).begin(), dim, centroid(centroids, c, dim).begin());
        for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_distance(pts.row(i), pts.row(idx)));
    };

    take(0, static_cast<std::size_t>(rng.below(n)));
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!chosen[i]) total += d2[i];
        }
        std::size_t pick = n;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (chosen[i] || d2[i] == 0.0) continue;
                acc += d2[i];
                pick = i;
                if (acc > target) break;
            }
        } else {
            // Every remaining point coincides with a center; fall back to index order.
            for (std::size_t i = 0; i < n && pick == n; ++i) {
                if (!chosen[i]) pick = i;
            }
        }
        take(c, pick);
    }
    return centroids;
}

// Moves empty clusters and exact-duplicate centroids onto far-away points.
// Returns how many centroids moved.
std::size_t reseed(const Matrix& pts, std::vector<double>& centroids, const std::vector<std::uint64_t>& counts) {
    const std::size_t k = counts.size();
    const std::size_t dim = pts.dim;
    std::vector<bool> bad(k, false);
    std::size_t n_bad = 0;
    for (std::size_t c = 0; c < k; ++c) {
        bool dup = false;
        for (std::size_t o = 0; o < c && !dup; ++o) {
            if (!bad[o] && std::equal(centroid(centroids, c, dim).begin(), centroid(centroids, c, dim).end(),
                                      centroid(centroids, o, dim).begin())) {
                dup = true;
            }
        }
        if (counts[c] == 0 || dup) {
            bad[c] = true;
            ++n_bad;
        }
    }
    if (n_bad == 0) return 0;

    const std::size_t n = pts.rows();
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    for (std::size_t c = 0; c < k; ++c) {
        if (bad[c]) continue;
        for (std::size_t i = 0; i < n; ++i) nearest[i] = std::min(nearest[i], sq_distance(pts.row(i), centroid(centroids, c, dim)));
    }
    std::vector<bool> used(n, false);
    for (std::size_t c = 0; c < k; ++c) {
        if (!bad[c]) continue;
        std::size_t pick = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (used[i]) continue;
            if (pick == n || nearest[i] > nearest[pick]) pick = i;
        }
        if (pick == n) break;
        used[pick] = true;
        std::copy_n(pts.row(pick).begin(), dim, centroid(centroids, c, dim).begin());
        for (std::size_t i = 0; i < n; ++i) nearest[i] = std::min(nearest[i], sq_distance(pts.row(i), pts.row(pick)));
    }
    return n_bad;
}

void run_lloyd(const ClusterConfig& cfg, const Matrix& pts, ClusterResult& res, std::vector<double>& sq) {
    auto a = assign(cfg, pts, res.centroids, res.labels, sq);
    res.objective_trace.push_back(a.objective);
    for (std::size_t iter = 1; iter <= cfg.max_iters; ++iter) {
        const double prev = a.objective;
        const auto counts = update(cfg, pts, res.labels, res.centroids);
        reseed(pts, res.centroids, counts);
        a = assign(cfg, pts, res.centroids, res.labels, sq);
        res.objective_trace.push_back(a.objective);
        res.iterations = iter;
        if (a.changed == 0 || prev <= 0.0 || (prev - a.objective) <= cfg.epsilon * prev) {
            res.converged = true;
            break;
        }
    }
}

void run_mini_batch(const ClusterConfig& cfg, const Matrix& pts, Rng& rng, ClusterResult& res, std::vector<double>& sq) {
    const std::size_t n = pts.rows();
    const std::size_t dim = pts.dim;
    const std::size_t k = cfg.k;
    std::vector<std::uint64_t> seen(k, 0);
    const std::size_t batch = std::min(cfg.batch_size, n);
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t iter = 1; iter <= cfg.max_iters; ++iter) {
        std::vector<std::size_t> idx(batch);
        for (auto& i : idx) i = static_cast<std::size_t>(rng.below(n));
        double batch_obj = 0.0;
        std::vector<std::uint32_t> nearest(batch);
        for (std::size_t b = 0; b < batch; ++b) {
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k; ++c) {
                const double d = sq_distance(pts.row(idx[b]), centroid(res.centroids, c, dim));
                if (d < best) {
                    best = d;
                    nearest[b] = static_cast<std::uint32_t>(c);
                }
            }
            batch_obj += best;
        }
        for (std::size_t b = 0; b < batch; ++b) {
            const auto c = nearest[b];
            const double eta = 1.0 / static_cast<double>(++seen[c]);
            auto cen = centroid(res.centroids, c, dim);
            const auto p = pts.row(idx[b]);
            for (std::size_t j = 0; j < dim; ++j) cen[j] = (1.0 - eta) * cen[j] + eta * p[j];
        }
        res.iterations = iter;
        const double mean_obj = batch_obj / static_cast<double>(batch);
        if (std::isfinite(prev) && std::abs(prev - mean_obj) <= cfg.epsilon * prev) {
            res.converged = true;
            break;
        }
        prev = mean_obj;
    }
    const auto a = assign(cfg, pts, res.centroids, res.labels, sq);
    res.objective_trace.push_back(a.objective);
}

}  // namespace

double sq_distance(std::span<const double> a, std::span<const double> b) {
    double d = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double diff = a[j] - b[j];
        d += diff * diff;
    }
    return d;
}

void ClusterConfig::validate() const {
    if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be positive");
    if (max_iters < 1) throw Error(ErrorCode::InvalidArgument, "max_iters must be at least 1");
    if (!(epsilon >= 0.0)) throw Error(ErrorCode::InvalidArgument, "epsilon must be nonnegative");
    if (algorithm == ClusterAlgorithm::MiniBatch && batch_size < 1) {
        throw Error(ErrorCode::InvalidArgument, "batch_size must be positive");
    }
}

ClusterResult cluster_representatives(std::span<const double> points, std::size_t dim, const ClusterConfig& cfg) {
    cfg.validate();
    if (dim == 0 || points.size() % dim != 0) throw Error(ErrorCode::DimensionMismatch, "point matrix is not n x dim");
    const Matrix pts{points, dim};
    const std::size_t n = pts.rows();
    if (n < cfg.k) {
        throw Error(ErrorCode::TooFewPoints, std::to_string(n) + " points cannot form " + std::to_string(cfg.k) + " clusters",
                    {{"n", n}, {"k", cfg.k}});
    }
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (!std::isfinite(points[i])) {
            throw Error(ErrorCode::NonFiniteEmbedding, "non-finite value in row " + std::to_string(i / dim), {{"row", i / dim}});
        }
    }

    Rng rng(cfg.seed);
    ClusterResult res;
    res.centroids = seed_plus_plus(pts, cfg.k, rng);
    res.labels.assign(n, kUnassigned);
    std::vector<double> sq(n, 0.0);

    if (cfg.algorithm == ClusterAlgorithm::Lloyd) {
        run_lloyd(cfg, pts, res, sq);
    } else {
        run_mini_batch(cfg, pts, rng, res, sq);
    }

    // Final centroids are the means of the final clusters.
    update(cfg, pts, res.labels, res.centroids);

    const std::size_t k = cfg.k;
    res.representatives.assign(k, n);
    std::vector<double> best(k, std::numeric_limits<double>::infinity());
    res.objective = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = res.labels[i];
        const double d = sq_distance(pts.row(i), centroid(res.centroids, c, dim));
        res.objective += d;
        if (d < best[c]) {
            best[c] = d;
            res.representatives[c] = i;
        }
    }
    std::vector<bool> taken(n, false);
    for (auto r : res.representatives) {
        if (r != n) taken[r] = true;
    }
    for (std::size_t c = 0; c < k; ++c) {
        if (res.representatives[c] != n) continue;
        std::size_t pick = n;
        double pick_d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            if (taken[i]) continue;
            const double d = sq_distance(pts.row(i), centroid(res.centroids, c, dim));
            if (d < pick_d) {
                pick_d = d;
                pick = i;
            }
        }
        res.representatives[c] = pick;
        taken[pick] = true;
    }
    return res;
}

}  // namespace mtf::curation
