#include "mtf/stats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "mtf/rng.hpp"

namespace mtf::stats {

void PairedSample::add(std::string id, double h, double m) {
    ids.push_back(std::move(id));
    human.push_back(h);
    model.push_back(m);
}

void PairedSample::validate() const {
    if (human.size() != model.size() || (!ids.empty() && ids.size() != human.size())) {
        throw Error(ErrorCode::InvalidArgument, "paired sample columns differ in length");
    }
    if (human.size() < 3) {
        throw Error(ErrorCode::TooFewSamples, "correlation needs at least 3 pairs, got " + std::to_string(human.size()),
                    {{"n", human.size()}});
    }
    for (std::size_t i = 0; i < human.size(); ++i) {
        if (!std::isfinite(human[i]) || !std::isfinite(model[i])) {
            throw Error(ErrorCode::InvalidArgument, "non-finite value in paired sample at position " + std::to_string(i));
        }
    }
    std::set<std::string_view> seen;
    for (const auto& id : ids) {
        if (!seen.insert(id).second) throw Error(ErrorCode::InvalidArgument, "duplicate id '" + id + "' in paired sample");
    }
}

json to_json(const CorrelationResult& r) { return json{{"coefficient", r.coefficient}, {"p_value", r.p_value}, {"n", r.n}}; }

namespace {

double correlation(std::span<const double> x, std::span<const double> y) {
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw Error(ErrorCode::ZeroVariance, "a variable has zero variance");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

CorrelationResult finish(double r, std::size_t n) { return {r, t_test_p_value(r, n), n}; }

}  // namespace

double t_test_p_value(double r, std::size_t n) {
    if (n < 3) throw Error(ErrorCode::TooFewSamples, "t-test needs n >= 3");
    const double one_minus = 1.0 - r * r;
    if (one_minus <= 0.0) return 0.0;
    const double dof = static_cast<double>(n - 2);
    const double t = std::abs(r) * std::sqrt(dof / one_minus);
    boost::math::students_t dist(dof);
    return std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, t)), 0.0, 1.0);
}

CorrelationResult pearson(const PairedSample& s) {
    s.validate();
    return finish(correlation(s.human, s.model), s.size());
}

std::vector<double> average_ranks(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        // Positions i..j (0-based) hold ranks i+1..j+1.
        const double rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t m = i; m <= j; ++m) ranks[order[m]] = rank;
        i = j + 1;
    }
    return ranks;
}

CorrelationResult spearman(const PairedSample& s) {
    s.validate();
    const auto rx = average_ranks(s.human);
    const auto ry = average_ranks(s.model);
    return finish(correlation(rx, ry), s.size());
}

double permutation_p_value(const PairedSample& s, CorrelationKind kind, std::size_t permutations, std::uint64_t seed) {
    s.validate();
    if (permutations == 0) throw Error(ErrorCode::InvalidArgument, "permutation count must be positive");
    std::vector<double> x = s.human;
    std::vector<double> y = s.model;
    if (kind == CorrelationKind::Spearman) {
        x = average_ranks(x);
        y = average_ranks(y);
    }
    const double observed = std::abs(correlation(x, y));
    Rng rng(seed);
    std::size_t extreme = 0;
    for (std::size_t p = 0; p < permutations; ++p) {
        rng.shuffle(std::span<double>(y));
        // Relative slack so the identity permutation counts as at-least-as-extreme.
        if (std::abs(correlation(x, y)) >= observed * (1.0 - 1e-12)) ++extreme;
    }
    return static_cast<double>(extreme + 1) / static_cast<double>(permutations + 1);
}

// ---------------------------------------------------------------------------

std::vector<SweepRow> fraction_sweep(const filter::Histogram101& h, std::span<const double> fractions) {
    if (h.total == 0) throw Error(ErrorCode::EmptyHistogram, "cannot sweep an empty histogram");
    std::vector<SweepRow> rows;
    rows.reserve(fractions.size());
    for (double f : fractions) {
        const int t = filter::compute_threshold(h, f);
        rows.push_back({f, t, h.retained_at(t)});
    }
    return rows;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
    std::ostringstream out;
    out << "fraction,threshold,retained\n";
    for (const auto& r : rows) out << json(r.fraction).dump() << ',' << r.threshold << ',' << r.retained << '\n';
    return out.str();
}

// ---------------------------------------------------------------------------

MetricReport metric_report(std::span<const QualityScore> scores) {
    MetricReport rep;
    rep.histogram = filter::build_histogram(scores);
    const auto& h = rep.histogram;
    for (int s = 0; s < kScoreBins; ++s) rep.buckets[static_cast<std::size_t>(std::min(s / 10, 9))] += h.counts[static_cast<std::size_t>(s)];
    if (h.total == 0) return rep;

    double sum = 0.0;
    for (int s = 0; s < kScoreBins; ++s) sum += static_cast<double>(s) * static_cast<double>(h.counts[static_cast<std::size_t>(s)]);
    rep.mean = sum / static_cast<double>(h.total);

    // Median from the histogram: value at 0-based rank k, averaging the two
    // middle ranks when the total is even.
    auto value_at = [&](std::uint64_t rank) {
        std::uint64_t acc = 0;
        for (int s = 0; s < kScoreBins; ++s) {
            acc += h.counts[static_cast<std::size_t>(s)];
            if (acc > rank) return s;
        }
        return kMaxScore;
    };
    const std::uint64_t n = h.total;
    rep.median = n % 2 == 1 ? value_at(n / 2) : (value_at(n / 2 - 1) + value_at(n / 2)) / 2.0;
    for (int t = 0; t <= kScoreBins; ++t) rep.retained_curve[static_cast<std::size_t>(t)] = h.retain(t);
    return rep;
}

DistributionReport distribution_report(const std::map<Metric, std::vector<QualityScore>>& scores) {
    DistributionReport rep;
    for (const auto& [m, values] : scores) rep.metrics[m] = metric_report(values);
    return rep;
}

json DistributionReport::to_json() const {
    json out = json::object();
    for (const auto& [m, r] : metrics) {
        out[std::string(to_string(m))] = json{{"histogram", r.histogram},
                                              {"buckets", r.buckets},
                                              {"mean", r.mean},
                                              {"median", r.median},
                                              {"retained_curve", r.retained_curve}};
    }
    return out;
}

std::string DistributionReport::to_csv() const {
    std::ostringstream out;
    out << "metric,kind,key,value\n";
    for (const auto& [m, r] : metrics) {
        const auto name = to_string(m);
        for (int s = 0; s < kScoreBins; ++s) out << name << ",count," << s << ',' << r.histogram.counts[static_cast<std::size_t>(s)] << '\n';
        for (std::size_t b = 0; b < r.buckets.size(); ++b) out << name << ",bucket," << b << ',' << r.buckets[b] << '\n';
        out << name << ",stat,total," << r.histogram.total << '\n';
        out << name << ",stat,mean," << json(r.mean).dump() << '\n';
        out << name << ",stat,median," << json(r.median).dump() << '\n';
        for (std::size_t t = 0; t < r.retained_curve.size(); ++t) out << name << ",retained," << t << ',' << json(r.retained_curve[t]).dump() << '\n';
    }
    return out.str();
}

// ---------------------------------------------------------------------------

std::map<std::string, double> read_human_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::MalformedRow, "human score CSV is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "id,human") throw Error(ErrorCode::MalformedRow, "human score CSV header must be 'id,human'");
    std::map<std::string, double> out;
    std::uint64_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.rfind(',');
        auto bad = [&](const std::string& why) {
            return Error(ErrorCode::MalformedRow, why + " on line " + std::to_string(line_no) + " of '" + path.string() + "'",
                         {{"shard", path.string()}, {"line", line_no}});
        };
        if (comma == std::string::npos || comma == 0) throw bad("expected 'id,human'");
        double value = 0.0;
        try {
            std::size_t used = 0;
            const std::string field = line.substr(comma + 1);
            value = std::stod(field, &used);
            if (used != field.size()) throw bad("trailing characters in score");
        } catch (const std::logic_error&) {
            throw bad("unparseable score");
        }
        if (!out.emplace(line.substr(0, comma), value).second) throw bad("duplicate id");
    }
    return out;
}

PairedSample join_scores(const std::map<std::string, double>& human, const std::map<std::string, double>& model) {
    PairedSample s;
    for (const auto& [id, h] : human) {
        auto it = model.find(id);
        if (it == model.end()) continue;
        s.add(id, h, it->second);
    }
    return s;
}

}  // namespace mtf::stats
