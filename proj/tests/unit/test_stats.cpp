#include "helpers.hpp"

#include <cmath>
#include <random>

#include "mtf/stats.hpp"

using namespace mtf;
using namespace mtf::stats;

namespace {

PairedSample sample(const std::vector<double>& x, const std::vector<double>& y) {
    PairedSample s;
    for (std::size_t i = 0; i < x.size(); ++i) s.add("i" + std::to_string(i), x[i], y[i]);
    return s;
}

// Textbook single-pass formula evaluated in extended precision.
double oracle_pearson(const std::vector<double>& x, const std::vector<double>& y) {
    long double n = static_cast<long double>(x.size()), sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const long double a = x[i], b = y[i];
        sx += a;
        sy += b;
        sxx += a * a;
        syy += b * b;
        sxy += a * b;
    }
    const long double num = n * sxy - sx * sy;
    const long double den = std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
    return static_cast<double>(num / den);
}

// Rank of v: 1 + number strictly below + half the other ties.
std::vector<double> oracle_ranks(const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        double below = 0, equal = 0;
        for (double w : v) {
            below += w < v[i];
            equal += w == v[i];
        }
        r[i] = 1.0 + below + (equal - 1.0) / 2.0;
    }
    return r;
}

}  // namespace

TEST_CASE("pearson examples") {
    CHECK(pearson(sample({1, 2, 3}, {2, 4, 6})).coefficient == doctest::Approx(1.0).epsilon(1e-15));
    const auto r = pearson(sample({1, 2, 3, 4}, {1, 3, 2, 4}));
    CHECK(std::fabs(r.coefficient - 0.8) < 1e-12);
    CHECK(r.n == 4);
    CHECK_ERROR(pearson(sample({1, 2, 3}, {5, 5, 5})), ErrorCode::ZeroVariance);
    CHECK_ERROR(pearson(sample({1, 2}, {1, 2})), ErrorCode::TooFewSamples);
    CHECK_ERROR(pearson(sample({1, 2, NAN}, {1, 2, 3})), ErrorCode::InvalidArgument);
    PairedSample dup;
    dup.add("a", 1, 1);
    dup.add("a", 2, 2);
    dup.add("b", 3, 1);
    CHECK_ERROR(pearson(dup), ErrorCode::InvalidArgument);
}

TEST_CASE("t-test p-values against closed forms") {
    // Two degrees of freedom: p = 1 - t / sqrt(2 + t^2), which is 0.2 at r = 0.8.
    CHECK(t_test_p_value(0.8, 4) == doctest::Approx(0.2).epsilon(1e-12));
    // One degree of freedom is Cauchy: p = 1 - 2 atan(t) / pi = 2/3 at r = 0.5.
    CHECK(t_test_p_value(0.5, 3) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(t_test_p_value(0.0, 50) == doctest::Approx(1.0));
    CHECK(t_test_p_value(1.0, 10) == 0.0);
    CHECK(t_test_p_value(-0.8, 4) == t_test_p_value(0.8, 4));
}

TEST_CASE("spearman examples") {
    CHECK(spearman(sample({1, 2, 3, 4, 5}, {2, 9, 10, 50, 51})).coefficient == doctest::Approx(1.0));
    const std::vector<double> x{1, 2, 3, 4}, y{10, 10, 20, 30};
    CHECK(average_ranks(y) == std::vector<double>{1.5, 1.5, 3, 4});
    CHECK(spearman(sample(x, y)).coefficient == doctest::Approx(oracle_pearson(oracle_ranks(x), oracle_ranks(y))).epsilon(1e-12));
    CHECK(spearman(sample(x, y)).coefficient == doctest::Approx(4.5 / std::sqrt(22.5)).epsilon(1e-12));
}

TEST_CASE("coefficients match the direct-definition oracle") {
    std::mt19937_64 rng(31337);
    std::uniform_int_distribution<int> score(0, 100);
    std::normal_distribution<double> noise(0.0, 15.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> x(100), y(100);
        for (int i = 0; i < 100; ++i) {
            x[static_cast<std::size_t>(i)] = score(rng);
            y[static_cast<std::size_t>(i)] = trial % 2 ? std::round(x[static_cast<std::size_t>(i)] + noise(rng)) : score(rng);
        }
        const auto s = sample(x, y);
        CHECK(std::fabs(pearson(s).coefficient - oracle_pearson(x, y)) < 1e-9);
        CHECK(std::fabs(spearman(s).coefficient - oracle_pearson(oracle_ranks(x), oracle_ranks(y))) < 1e-9);
    }
}

TEST_CASE("invariances") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> x(60), y(60);
    for (std::size_t i = 0; i < 60; ++i) {
        x[i] = g(rng);
        y[i] = 0.6 * x[i] + g(rng);
    }
    const double r = pearson(sample(x, y)).coefficient;
    const double rho = spearman(sample(x, y)).coefficient;
    std::vector<double> ax(x), ay(y), ey(y), neg(y);
    for (std::size_t i = 0; i < 60; ++i) {
        ax[i] = 3.0 * x[i] - 7.0;
        ay[i] = 0.25 * y[i] + 100.0;
        ey[i] = std::exp(y[i]);
        neg[i] = -2.0 * y[i];
    }
    CHECK(pearson(sample(ax, ay)).coefficient == doctest::Approx(r).epsilon(1e-12));
    CHECK(pearson(sample(x, neg)).coefficient == doctest::Approx(-r).epsilon(1e-12));
    CHECK(spearman(sample(x, ey)).coefficient == doctest::Approx(rho).epsilon(1e-12));
    CHECK(spearman(sample(ax, ay)).coefficient == doctest::Approx(rho).epsilon(1e-12));
    CHECK(pearson(sample(y, x)).coefficient == doctest::Approx(r).epsilon(1e-12));
}

TEST_CASE("permutation p-values") {
    std::vector<double> x(40), y(40);
    for (std::size_t i = 0; i < 40; ++i) {
        x[i] = static_cast<double>(i);
        y[i] = static_cast<double>(i) + (i % 3 ? 2.0 : -2.0);
    }
    const auto strong = permutation_p_value(sample(x, y), CorrelationKind::Pearson, 999, 1);
    CHECK(strong == doctest::Approx(1.0 / 1000.0));
    CHECK(permutation_p_value(sample(x, y), CorrelationKind::Spearman, 200, 4) ==
          permutation_p_value(sample(x, y), CorrelationKind::Spearman, 200, 4));
    std::mt19937_64 rng(8);
    for (auto& v : y) v = static_cast<double>(rng() % 100);
    const auto weak = permutation_p_value(sample(x, y), CorrelationKind::Pearson, 999, 1);
    CHECK(weak > 0.01);
    CHECK_ERROR(permutation_p_value(sample(x, y), CorrelationKind::Pearson, 0, 1), ErrorCode::InvalidArgument);
}

TEST_CASE("fraction sweep") {
    filter::Histogram101 uniform;
    for (auto& c : uniform.counts) c = 1;
    uniform.total = 101;
    const auto rows = fraction_sweep(uniform);
    REQUIRE(rows.size() == 5);
    for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].threshold <= rows[i - 1].threshold);
    const std::vector<double> just{0.3};
    const auto one = fraction_sweep(uniform, just);
    REQUIRE(one.size() == 1);
    CHECK(one[0].threshold == filter::compute_threshold(uniform, 0.3));
    CHECK(one[0].retained == 30);
    CHECK(sweep_csv(one) == "fraction,threshold,retained\n0.3,71,30\n");
    CHECK_ERROR(fraction_sweep(filter::Histogram101{}), ErrorCode::EmptyHistogram);

    std::mt19937_64 rng(3);
    filter::Histogram101 h;
    for (int i = 0; i < 777; ++i) h.add(QualityScore(static_cast<long long>(rng() % 60 + rng() % 41)));
    for (const auto& row : fraction_sweep(h)) {
        int best_t = 0;
        double best = INFINITY;
        for (int t = 0; t <= 101; ++t) {
            const double d = std::fabs(static_cast<double>(h.retained_at(t)) / 777.0 - row.fraction);
            if (d < best) {
                best = d;
                best_t = t;
            }
        }
        CHECK(row.threshold == best_t);
    }
}

TEST_CASE("distribution report") {
    const std::vector<QualityScore> s{QualityScore(50), QualityScore(50), QualityScore(80)};
    const auto rep = metric_report(s);
    CHECK(rep.buckets[5] == 2);
    CHECK(rep.buckets[8] == 1);
    CHECK(rep.mean == doctest::Approx(60.0));
    CHECK(rep.median == 50.0);
    CHECK(rep.retained_curve[0] == 1.0);
    CHECK(rep.retained_curve[51] == doctest::Approx(1.0 / 3.0));
    CHECK(rep.retained_curve[101] == 0.0);

    const auto empty = metric_report({});
    CHECK(empty.histogram.total == 0);
    CHECK(empty.mean == 0.0);
    for (auto b : empty.buckets) CHECK(b == 0);
    for (auto v : empty.retained_curve) CHECK(v == 0.0);

    std::mt19937_64 rng(4);
    std::vector<QualityScore> many;
    for (int i = 0; i < 1234; ++i) many.emplace_back(static_cast<long long>(rng() % 101));
    const auto big = metric_report(many);
    std::uint64_t sum = 0;
    for (auto b : big.buckets) sum += b;
    CHECK(sum == 1234);

    const auto dist = distribution_report({{Metric::ITM, s}, {Metric::SU, {}}});
    const auto j = dist.to_json();
    CHECK(j.at("itm").at("buckets")[5] == 2);
    CHECK(j.at("su").at("histogram").at("total") == 0);
    const auto csv = dist.to_csv();
    CHECK(csv.rfind("metric,kind,key,value\n", 0) == 0);
    CHECK(csv.find("itm,bucket,5,2\n") != std::string::npos);
    CHECK(csv.find("itm,stat,median,50.0\n") != std::string::npos);
}

TEST_CASE("human labels") {
    testutil::TempDir dir;
    testutil::write_file(dir / "h.csv", "id,human\na,3.5\nb,1\r\nc,4\n");
    const auto h = read_human_csv(dir / "h.csv");
    CHECK(h.size() == 3);
    CHECK(h.at("a") == 3.5);
    const auto s = join_scores(h, {{"a", 80}, {"c", 90}, {"z", 1}});
    CHECK(s.ids == std::vector<std::string>{"a", "c"});
    testutil::write_file(dir / "bad.csv", "id,score\na,1\n");
    CHECK_ERROR(read_human_csv(dir / "bad.csv"), ErrorCode::MalformedRow);
    testutil::write_file(dir / "dup.csv", "id,human\na,1\na,2\n");
    CHECK_ERROR(read_human_csv(dir / "dup.csv"), ErrorCode::MalformedRow);
    testutil::write_file(dir / "nan.csv", "id,human\na,x\n");
    CHECK_ERROR(read_human_csv(dir / "nan.csv"), ErrorCode::MalformedRow);
}
