#include "mtf/filter.hpp"

#include <algorithm>

namespace mtf::filter {

void Histogram101::merge(const Histogram101& other) {
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
    total += other.total;
}

std::uint64_t Histogram101::retained_at(int t) const {
    if (t < 0) t = 0;
    std::uint64_t n = 0;
    for (int i = t; i < kScoreBins; ++i) n += counts[static_cast<std::size_t>(i)];
    return n;
}

double Histogram101::retain(int t) const {
    if (total == 0) throw Error(ErrorCode::EmptyHistogram, "histogram is empty");
    return static_cast<double>(retained_at(t)) / static_cast<double>(total);
}

void to_json(json& j, const Histogram101& h) { j = json{{"counts", h.counts}, {"total", h.total}}; }

void from_json(const json& j, Histogram101& h) {
    const auto& counts = j.at("counts");
    if (!counts.is_array() || counts.size() != kScoreBins) {
        throw Error(ErrorCode::InvalidArgument, "histogram needs exactly 101 counts");
    }
    std::uint64_t sum = 0;
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
        h.counts[i] = counts[i].get<std::uint64_t>();
        sum += h.counts[i];
    }
    h.total = j.at("total").get<std::uint64_t>();
    if (sum != h.total) throw Error(ErrorCode::InvalidArgument, "histogram counts do not sum to total");
}

namespace {

std::vector<std::int16_t> to_raw(std::span<const QualityScore> scores) {
    std::vector<std::int16_t> raw(scores.size());
    std::transform(scores.begin(), scores.end(), raw.begin(), [](QualityScore s) { return static_cast<std::int16_t>(s.value()); });
    return raw;
}

Histogram101 from_counts(const kernels::Counts101& counts, std::uint64_t total) {
    Histogram101 h;
    std::copy(counts.begin(), counts.end(), h.counts.begin());
    h.total = total;
    return h;
}

}  // namespace

Histogram101 build_histogram(std::span<const QualityScore> scores) {
    return from_counts(kernels::omp::histogram(to_raw(scores)), scores.size());
}

Histogram101 build_histogram_serial(std::span<const QualityScore> scores) {
    return from_counts(kernels::serial::histogram(to_raw(scores)), scores.size());
}

Histogram101 build_histogram(std::span<const ScoreRecord> records, Metric m) {
    std::vector<QualityScore> scores;
    scores.reserve(records.size());
    for (const auto& r : records) {
        if (const auto& s = r.get(m)) scores.push_back(*s);
    }
    return build_histogram(scores);
}

int compute_threshold(const Histogram101& h, double fraction) {
    if (h.total == 0) throw Error(ErrorCode::EmptyHistogram, "cannot threshold an empty histogram");
    if (!(fraction > 0.0 && fraction <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "fraction must be in (0,1]", {{"fraction", fraction}});
    }
    // Suffix sums: retained[t] = #{score >= t}, retained[101] = 0.
    std::array<std::uint64_t, kScoreBins + 1> retained{};
    for (int t = kMaxScore; t >= 0; --t) retained[t] = retained[t + 1] + h.counts[static_cast<std::size_t>(t)];

    const double total = static_cast<double>(h.total);
    auto share = [&](int t) { return static_cast<double>(retained[t]) / total; };

    // Retained share is nonincreasing in t and share(0) = 1 >= fraction, so the
    // optimum sits on one side of the crossing: the last t still at or above
    // the fraction, or the first t below it.
    int hi = 0;
    while (hi + 1 <= kRetainNothing && share(hi + 1) >= fraction) ++hi;
    int best = hi;
    if (hi + 1 <= kRetainNothing) {
        const double above = share(hi) - fraction;
        const double below = fraction - share(hi + 1);
        if (below < above) best = hi + 1;
    }
    // Lower thresholds with the same retained count are equally close; take the smallest.
    while (best > 0 && retained[best - 1] == retained[best]) --best;
    return best;
}

FilterSpec resolve_spec(FilterSpec spec, const HistogramMap& hists) {
    spec.validate();
    for (Metric m : spec.metrics) {
        auto it = hists.find(m);
        if (it == hists.end()) {
            throw Error(ErrorCode::MissingHistogram, "no histogram for metric " + std::string(to_string(m)),
                        {{"metric", std::string(to_string(m))}});
        }
        spec.thresholds[index_of(m)] = compute_threshold(it->second, spec.fraction_for(m));
    }
    return spec;
}

bool passes(const ScoreRecord& record, const FilterSpec& spec) {
    auto ok = [&](Metric m) {
        const auto& s = record.get(m);
        if (!s) {
            throw Error(ErrorCode::MissingScore,
                        "record '" + record.pair_id + "' has no " + std::string(to_string(m)) + " score",
                        {{"id", record.pair_id}, {"metric", std::string(to_string(m))}});
        }
        return s->value() >= spec.threshold(m);
    };
    switch (spec.combiner) {
        case Combiner::Single: return ok(spec.metrics[0]);
        case Combiner::And: {
            const bool a = ok(spec.metrics[0]);
            const bool b = ok(spec.metrics[1]);
            return a && b;
        }
        case Combiner::Or: {
            const bool a = ok(spec.metrics[0]);
            const bool b = ok(spec.metrics[1]);
            return a || b;
        }
    }
    return false;
}

namespace {

template <typename MaskFn>
FilterOutcome apply_with(std::span<const ScoreRecord> records, const FilterSpec& spec, MaskFn mask_fn) {
    spec.validate();
    if (!spec.resolved()) throw Error(ErrorCode::InvalidArgument, "filter spec thresholds are not resolved");

    kernels::ScoreMatrix matrix;
    matrix.rows = records.size();
    matrix.cols = spec.metrics.size();
    matrix.values.resize(matrix.rows * matrix.cols);
    for (std::size_t r = 0; r < records.size(); ++r) {
        for (std::size_t c = 0; c < matrix.cols; ++c) {
            const Metric m = spec.metrics[c];
            const auto& s = records[r].get(m);
            if (!s) {
                throw Error(ErrorCode::MissingScore,
                            "record '" + records[r].pair_id + "' has no " + std::string(to_string(m)) + " score",
                            {{"id", records[r].pair_id}, {"metric", std::string(to_string(m))}});
            }
            matrix.values[r * matrix.cols + c] = static_cast<std::int16_t>(s->value());
        }
    }
    std::vector<int> thresholds;
    for (Metric m : spec.metrics) thresholds.push_back(spec.threshold(m));

    const auto rule = spec.combiner == Combiner::Single ? kernels::MaskRule::Single
                      : spec.combiner == Combiner::And  ? kernels::MaskRule::All
                                                        : kernels::MaskRule::Any;
    std::vector<std::uint8_t> keep(matrix.rows);
    mask_fn(matrix, thresholds, rule, keep);

    FilterOutcome out;
    out.total_count = records.size();
    for (std::size_t r = 0; r < records.size(); ++r) {
        if (keep[r]) out.retained_ids.push_back(records[r].pair_id);
    }
    out.retained_count = out.retained_ids.size();
    for (std::size_t c = 0; c < matrix.cols; ++c) {
        const Metric m = spec.metrics[c];
        out.thresholds[index_of(m)] = thresholds[c];
        std::uint64_t n = 0;
        for (std::size_t r = 0; r < matrix.rows; ++r) n += matrix.values[r * matrix.cols + c] >= thresholds[c];
        out.single_retained[index_of(m)] = n;
    }
    return out;
}

}  // namespace

FilterOutcome apply_filter(std::span<const ScoreRecord> records, const FilterSpec& spec) {
    return apply_with(records, spec, [](auto&&... args) { kernels::omp::filter_mask(args...); });
}

FilterOutcome apply_filter_serial(std::span<const ScoreRecord> records, const FilterSpec& spec) {
    return apply_with(records, spec, [](auto&&... args) { kernels::serial::filter_mask(args...); });
}

json FilterOutcome::summary(const FilterSpec& spec) const {
    json thresholds_j = json::object();
    json single_j = json::object();
    for (Metric m : spec.metrics) {
        const auto key = std::string(to_string(m));
        if (const auto& t = thresholds[index_of(m)]) thresholds_j[key] = *t;
        if (const auto& n = single_retained[index_of(m)]) single_j[key] = *n;
    }
    json metrics = json::array();
    for (Metric m : spec.metrics) metrics.push_back(std::string(to_string(m)));
    return json{{"retained", retained_count},
                {"total", total_count},
                {"retained_fraction", total_count ? static_cast<double>(retained_count) / static_cast<double>(total_count) : 0.0},
                {"thresholds", thresholds_j},
                {"single_retained", single_j},
                {"metrics", metrics},
                {"combiner", std::string(to_string(spec.combiner))},
                {"fraction", json(spec)["fraction"]}};
}

}  // namespace mtf::filter
