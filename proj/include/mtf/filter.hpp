#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mtf/core.hpp"
#include "mtf/kernels.hpp"

namespace mtf::filter {

/// Exact counts of integer scores 0..100. Partial histograms built on
/// separate workers combine with merge().
struct Histogram101 {
    std::array<std::uint64_t, kScoreBins> counts{};
    std::uint64_t total = 0;

    void add(QualityScore s) {
        ++counts[static_cast<std::size_t>(s.value())];
        ++total;
    }
    void merge(const Histogram101& other);

    /// Number of items with score >= t, for t in [0,101].
    std::uint64_t retained_at(int t) const;
    /// retained_at(t) / total.
    double retain(int t) const;

    friend bool operator==(const Histogram101&, const Histogram101&) = default;
};

void to_json(json& j, const Histogram101& h);
void from_json(const json& j, Histogram101& h);

Histogram101 build_histogram(std::span<const QualityScore> scores);
/// Same result, via the serial reference kernel.
Histogram101 build_histogram_serial(std::span<const QualityScore> scores);
/// Histogram of one metric across records; records lacking it are skipped.
Histogram101 build_histogram(std::span<const ScoreRecord> records, Metric m);

/// The t in 0..101 whose retained share is closest to `fraction`, smallest t
/// on ties. Throws EmptyHistogram or InvalidArgument (fraction outside (0,1]).
int compute_threshold(const Histogram101& h, double fraction);

using HistogramMap = std::map<Metric, Histogram101>;

/// Fills spec.thresholds from per-metric histograms. Throws MissingHistogram.
FilterSpec resolve_spec(FilterSpec spec, const HistogramMap& hists);

struct FilterOutcome {
    std::vector<std::string> retained_ids;
    std::uint64_t retained_count = 0;
    std::uint64_t total_count = 0;
    std::array<std::optional<int>, kMetricCount> thresholds{};
    /// Per-metric pass counts, so combined specs can report both retentions.
    std::array<std::optional<std::uint64_t>, kMetricCount> single_retained{};

    json summary(const FilterSpec& spec) const;
};

/// SINGLE keeps score >= t; AND needs both metrics; OR needs either.
/// Throws MissingScore for a record without a spec metric.
FilterOutcome apply_filter(std::span<const ScoreRecord> records, const FilterSpec& spec);
FilterOutcome apply_filter_serial(std::span<const ScoreRecord> records, const FilterSpec& spec);

/// Does one record pass? Same rule as apply_filter.
bool passes(const ScoreRecord& record, const FilterSpec& spec);

}  // namespace mtf::filter
