#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mtf/core.hpp"
#include "mtf/filter.hpp"

namespace mtf::stats {

struct PairedSample {
    std::vector<std::string> ids;
    std::vector<double> human;
    std::vector<double> model;

    std::size_t size() const noexcept { return human.size(); }
    void add(std::string id, double h, double m);
    /// n >= 3, equal lengths, finite values, unique ids.
    void validate() const;
};

struct CorrelationResult {
    double coefficient = 0.0;
    double p_value = 1.0;
    std::size_t n = 0;
};

json to_json(const CorrelationResult& r);

/// Population-form Pearson r with a two-tailed t-test p-value (n-2 dof).
/// Throws TooFewSamples or ZeroVariance.
CorrelationResult pearson(const PairedSample& s);

/// Pearson on average ranks (ties share the mean rank), same p-value rule.
CorrelationResult spearman(const PairedSample& s);

/// 1-based ranks; tied values receive the mean of the ranks they span.
std::vector<double> average_ranks(std::span<const double> values);

/// Two-tailed p-value of r for n samples via t = r * sqrt((n-2)/(1-r^2)).
double t_test_p_value(double r, std::size_t n);

enum class CorrelationKind : std::uint8_t { Pearson, Spearman };

/// Share of seeded permutations of the model scores whose |coefficient| is at
/// least the observed one, with the usual +1 correction.
double permutation_p_value(const PairedSample& s, CorrelationKind kind, std::size_t permutations, std::uint64_t seed);

// ---------------------------------------------------------------------------

inline constexpr std::array<double, 5> kDefaultSweepFractions{0.2, 0.25, 0.3, 0.35, 0.4};

struct SweepRow {
    double fraction = 0.0;
    int threshold = 0;
    std::uint64_t retained = 0;
};

std::vector<SweepRow> fraction_sweep(const filter::Histogram101& h,
                                     std::span<const double> fractions = kDefaultSweepFractions);

std::string sweep_csv(std::span<const SweepRow> rows);

// ---------------------------------------------------------------------------

struct MetricReport {
    filter::Histogram101 histogram;
    std::array<std::uint64_t, 10> buckets{};
    double mean = 0.0;
    double median = 0.0;
    /// retained share at every threshold 0..101 (all zero for an empty metric).
    std::array<double, kScoreBins + 1> retained_curve{};
};

struct DistributionReport {
    std::map<Metric, MetricReport> metrics;

    json to_json() const;
    /// Long format: metric,kind,key,value.
    std::string to_csv() const;
};

DistributionReport distribution_report(const std::map<Metric, std::vector<QualityScore>>& scores);
MetricReport metric_report(std::span<const QualityScore> scores);

// ---------------------------------------------------------------------------

/// Reads "id,human" CSV (header required).
std::map<std::string, double> read_human_csv(const std::filesystem::path& path);

/// Pairs human labels with model scores by id (ascending id order); ids
/// without a model score are skipped.
PairedSample join_scores(const std::map<std::string, double>& human, const std::map<std::string, double>& model);

}  // namespace mtf::stats
