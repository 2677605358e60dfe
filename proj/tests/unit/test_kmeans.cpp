#include "helpers.hpp"

#include <algorithm>
#include <random>
#include <set>

#include "mtf/kernels.hpp"
#include "mtf/kmeans.hpp"

using namespace mtf;
using namespace mtf::curation;

namespace {

std::vector<double> random_points(std::size_t n, std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> out(n * d);
    // A few loose blobs so clusters are not all alike.
    for (std::size_t i = 0; i < n; ++i) {
        const double shift = static_cast<double>(i % 5) * 3.0;
        for (std::size_t j = 0; j < d; ++j) out[i * d + j] = g(rng) + (j % 2 ? shift : -shift);
    }
    return out;
}

double sq(std::span<const double> a, std::span<const double> b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

// For every cluster: mean of its members, then the member nearest that mean.
std::vector<std::size_t> oracle_representatives(const std::vector<double>& pts, std::size_t d, const ClusterResult& r,
                                                std::size_t k) {
    const std::size_t n = pts.size() / d;
    std::vector<std::size_t> reps(k, SIZE_MAX);
    for (std::size_t c = 0; c < k; ++c) {
        std::vector<double> mean(d, 0.0);
        std::size_t count = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (r.labels[i] != c) continue;
            for (std::size_t j = 0; j < d; ++j) mean[j] += pts[i * d + j];
            ++count;
        }
        if (count == 0) continue;
        for (auto& x : mean) x /= static_cast<double>(count);
        double best = INFINITY;
        for (std::size_t i = 0; i < n; ++i) {
            if (r.labels[i] != c) continue;
            const double dist = sq(std::span<const double>(pts).subspan(i * d, d), mean);
            if (dist < best) {
                best = dist;
                reps[c] = i;
            }
        }
    }
    return reps;
}

}  // namespace

TEST_CASE("objective never increases") {
    const std::size_t d = 8;
    const auto pts = random_points(1000, d, 5);
    for (auto exec : {Exec::Serial, Exec::Parallel}) {
        ClusterConfig cfg;
        cfg.k = 16;
        cfg.seed = 17;
        cfg.exec = exec;
        const auto r = cluster_representatives(pts, d, cfg);
        REQUIRE(r.objective_trace.size() >= 2);
        for (std::size_t i = 1; i < r.objective_trace.size(); ++i) {
            CHECK(r.objective_trace[i] <= r.objective_trace[i - 1] * (1.0 + 1e-12));
        }
        CHECK(r.objective <= r.objective_trace.back() * (1.0 + 1e-12));
        CHECK(r.representatives.size() == 16);
        CHECK(std::set<std::size_t>(r.representatives.begin(), r.representatives.end()).size() == 16);
    }
}

TEST_CASE("representatives are the true nearest members") {
    const std::size_t d = 8;
    const auto pts = random_points(1000, d, 6);
    ClusterConfig cfg;
    cfg.k = 16;
    cfg.seed = 3;
    const auto r = cluster_representatives(pts, d, cfg);
    const auto oracle = oracle_representatives(pts, d, r, cfg.k);
    for (std::size_t c = 0; c < cfg.k; ++c) {
        CAPTURE(c);
        if (oracle[c] == SIZE_MAX) continue;
        CHECK(r.representatives[c] == oracle[c]);
    }
}

TEST_CASE("serial and parallel runs are identical") {
    const std::size_t d = 5;
    const auto pts = random_points(3000, d, 8);
    ClusterConfig cfg;
    cfg.k = 12;
    cfg.seed = 1;
    cfg.exec = Exec::Serial;
    const auto a = cluster_representatives(pts, d, cfg);
    cfg.exec = Exec::Parallel;
    const auto b = cluster_representatives(pts, d, cfg);
    CHECK(a.representatives == b.representatives);
    CHECK(a.labels == b.labels);
    CHECK(a.objective_trace == b.objective_trace);
    CHECK(a.centroids == b.centroids);
}

TEST_CASE("six points in two groups match exhaustive partitioning") {
    const std::vector<double> pts{0, 0, 1, 0, 0, 1.5, 10, 10, 11, 10.5, 9.5, 11};
    const std::size_t d = 2, n = 6;
    // Every split into two nonempty groups; keep the lowest within-group SSE.
    double best = INFINITY;
    std::set<std::size_t> best_reps;
    for (unsigned mask = 1; mask < (1u << n) - 1; ++mask) {
        double sse = 0;
        std::set<std::size_t> reps;
        for (unsigned side = 0; side < 2; ++side) {
            std::vector<std::size_t> members;
            for (std::size_t i = 0; i < n; ++i) {
                if (((mask >> i) & 1u) == side) members.push_back(i);
            }
            std::vector<double> mean(d, 0.0);
            for (auto i : members) {
                for (std::size_t j = 0; j < d; ++j) mean[j] += pts[i * d + j] / static_cast<double>(members.size());
            }
            double near = INFINITY;
            std::size_t rep = 0;
            for (auto i : members) {
                const double dist = sq(std::span<const double>(pts).subspan(i * d, d), mean);
                sse += dist;
                if (dist < near) {
                    near = dist;
                    rep = i;
                }
            }
            reps.insert(rep);
        }
        if (sse < best) {
            best = sse;
            best_reps = reps;
        }
    }
    CHECK(best_reps == std::set<std::size_t>{0, 3});
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        ClusterConfig cfg;
        cfg.k = 2;
        cfg.seed = seed;
        const auto r = cluster_representatives(pts, d, cfg);
        CHECK(std::set<std::size_t>(r.representatives.begin(), r.representatives.end()) == best_reps);
        CHECK(r.objective == doctest::Approx(best));
    }
}

TEST_CASE("degenerate inputs") {
    SUBCASE("k equals n") {
        const auto pts = random_points(7, 3, 1);
        ClusterConfig cfg;
        cfg.k = 7;
        const auto r = cluster_representatives(pts, 3, cfg);
        CHECK(std::set<std::size_t>(r.representatives.begin(), r.representatives.end()) ==
              std::set<std::size_t>{0, 1, 2, 3, 4, 5, 6});
    }
    SUBCASE("identical points") {
        const std::vector<double> pts(10 * 4, 2.5);
        ClusterConfig cfg;
        cfg.k = 2;
        const auto r = cluster_representatives(pts, 4, cfg);
        std::vector<std::size_t> reps = r.representatives;
        std::sort(reps.begin(), reps.end());
        CHECK(reps == std::vector<std::size_t>{0, 1});
        CHECK(r.objective == 0.0);
    }
    SUBCASE("errors") {
        const auto pts = random_points(3, 2, 1);
        ClusterConfig cfg;
        cfg.k = 4;
        CHECK_ERROR(cluster_representatives(pts, 2, cfg), ErrorCode::TooFewPoints);
        cfg.k = 0;
        CHECK_ERROR(cluster_representatives(pts, 2, cfg), ErrorCode::InvalidArgument);
        cfg.k = 2;
        CHECK_ERROR(cluster_representatives(std::vector<double>{1, 2, 3}, 2, cfg), ErrorCode::DimensionMismatch);
        auto bad = pts;
        bad[1] = NAN;
        CHECK_ERROR(cluster_representatives(bad, 2, cfg), ErrorCode::NonFiniteEmbedding);
    }
}

TEST_CASE("mini-batch variant returns valid representatives") {
    const std::size_t d = 4;
    const auto pts = random_points(2000, d, 12);
    ClusterConfig cfg;
    cfg.k = 10;
    cfg.seed = 4;
    cfg.algorithm = ClusterAlgorithm::MiniBatch;
    cfg.batch_size = 128;
    const auto a = cluster_representatives(pts, d, cfg);
    const auto b = cluster_representatives(pts, d, cfg);
    CHECK(a.representatives == b.representatives);
    CHECK(std::set<std::size_t>(a.representatives.begin(), a.representatives.end()).size() == 10);
    const auto oracle = oracle_representatives(pts, d, a, cfg.k);
    for (std::size_t c = 0; c < cfg.k; ++c) {
        if (oracle[c] != SIZE_MAX) CHECK(a.representatives[c] == oracle[c]);
    }
}

TEST_CASE("kernels: serial and OpenMP agree") {
    std::mt19937_64 rng(21);
    std::vector<std::int16_t> scores(100000);
    for (auto& s : scores) s = static_cast<std::int16_t>(rng() % 101);
    CHECK(kernels::serial::histogram(scores) == kernels::omp::histogram(scores));

    const std::size_t d = 6, n = 5000, k = 9;
    const auto pts = random_points(n, d, 2);
    std::vector<double> cents(pts.begin(), pts.begin() + static_cast<std::ptrdiff_t>(k * d));
    std::vector<std::uint32_t> la(n, UINT32_MAX), lb(n, UINT32_MAX);
    std::vector<double> da(n), db(n);
    const auto ra = kernels::serial::assign(pts, d, cents, la, da);
    const auto rb = kernels::omp::assign(pts, d, cents, lb, db);
    CHECK(la == lb);
    CHECK(da == db);
    CHECK(ra.objective == rb.objective);
    CHECK(ra.changed == rb.changed);

    auto ca = cents, cb = cents;
    CHECK(kernels::serial::update_centroids(pts, d, la, ca) == kernels::omp::update_centroids(pts, d, lb, cb));
    CHECK(ca == cb);

    kernels::ScoreMatrix m;
    m.rows = 20000;
    m.cols = 2;
    m.values.resize(m.rows * 2);
    for (auto& v : m.values) v = static_cast<std::int16_t>(static_cast<int>(rng() % 102) - 1);
    const std::vector<int> th{50, 70};
    for (auto rule : {kernels::MaskRule::Single, kernels::MaskRule::All, kernels::MaskRule::Any}) {
        std::vector<std::uint8_t> ka(m.rows), kb(m.rows);
        kernels::serial::filter_mask(m, th, rule, ka);
        kernels::omp::filter_mask(m, th, rule, kb);
        CHECK(ka == kb);
    }
}
