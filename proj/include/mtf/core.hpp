#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mtf/error.hpp"

namespace mtf {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// The four quality dimensions a pair can be scored on.
enum class Metric : std::uint8_t { ITM = 0, ODF = 1, CTQ = 2, SU = 3 };

inline constexpr std::array<Metric, 4> kAllMetrics{Metric::ITM, Metric::ODF, Metric::CTQ, Metric::SU};
inline constexpr std::size_t kMetricCount = kAllMetrics.size();

std::string_view to_string(Metric m);
constexpr std::size_t index_of(Metric m) { return static_cast<std::size_t>(m); }

/// Case-insensitive. Throws Error{UnknownMetric}.
Metric parse_metric(std::string_view name);

/// Parses a comma-separated list such as "itm,odf". Rejects duplicates.
std::vector<Metric> parse_metric_list(std::string_view csv);

// ---------------------------------------------------------------------------
// Scores
// ---------------------------------------------------------------------------

inline constexpr int kMinScore = 0;
inline constexpr int kMaxScore = 100;
inline constexpr int kScoreBins = kMaxScore + 1;

/// An integer quality score on the closed 0..100 scale.
class QualityScore {
public:
    /// Throws Error{InvalidScore} outside [0,100].
    explicit QualityScore(long long value);

    int value() const noexcept { return value_; }

    friend bool operator==(QualityScore, QualityScore) = default;
    friend auto operator<=>(QualityScore, QualityScore) = default;

private:
    int value_;
};

struct ScoreRecord {
    std::string pair_id;
    std::array<std::optional<QualityScore>, kMetricCount> scores{};
    std::string provenance;

    const std::optional<QualityScore>& get(Metric m) const { return scores[index_of(m)]; }
    void set(Metric m, QualityScore s) { scores[index_of(m)] = s; }
    bool has(Metric m) const { return scores[index_of(m)].has_value(); }

    friend bool operator==(const ScoreRecord&, const ScoreRecord&) = default;
};

// ---------------------------------------------------------------------------
// Pairs
// ---------------------------------------------------------------------------

struct ImageRef {
    enum class Kind : std::uint8_t { None, Path, Url, Base64 };

    Kind kind = Kind::None;
    std::string value;

    static ImageRef none() { return {}; }
    static ImageRef path(std::string v) { return {Kind::Path, std::move(v)}; }
    static ImageRef url(std::string v) { return {Kind::Url, std::move(v)}; }
    static ImageRef base64(std::string v) { return {Kind::Base64, std::move(v)}; }

    /// Guesses the kind of an untyped string: "" is none, http(s):// is a url,
    /// "b64:" / "data:" prefixes are base64 payloads, anything else a path.
    static ImageRef infer(std::string_view raw);

    friend bool operator==(const ImageRef&, const ImageRef&) = default;
};

std::string_view to_string(ImageRef::Kind k);
ImageRef::Kind parse_image_kind(std::string_view s);

struct ImageTextPair {
    std::string id;
    ImageRef image;
    std::string caption;
    std::optional<std::string> dense_caption;

    friend bool operator==(const ImageTextPair&, const ImageTextPair&) = default;
};

struct IngestConfig {
    bool allow_empty_caption = false;
};

/// Returns the pair unchanged or throws EmptyId / EmptyCaption.
const ImageTextPair& validate_pair(const ImageTextPair& p, const IngestConfig& cfg);

// ---------------------------------------------------------------------------
// Filter specification
// ---------------------------------------------------------------------------

enum class Combiner : std::uint8_t { Single, And, Or };

std::string_view to_string(Combiner c);
Combiner parse_combiner(std::string_view s);

inline constexpr double kDefaultFraction = 0.3;
inline constexpr int kRetainNothing = kScoreBins;  // threshold 101

struct FilterSpec {
    std::vector<Metric> metrics;
    double fraction = kDefaultFraction;
    /// Per-metric retention fractions; unset entries fall back to `fraction`.
    std::array<std::optional<double>, kMetricCount> fraction_overrides{};
    Combiner combiner = Combiner::Single;
    /// Indexed by metric; filled by resolve_spec.
    std::array<std::optional<int>, kMetricCount> thresholds{};

    /// SINGLE needs one metric, AND/OR two; fraction in (0,1]; thresholds in [0,101].
    void validate() const;
    bool resolved() const;
    double fraction_for(Metric m) const;
    int threshold(Metric m) const;
};

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

struct ShardEntry {
    std::string path;
    std::uint64_t count = 0;

    friend bool operator==(const ShardEntry&, const ShardEntry&) = default;
};

struct RunManifest {
    std::string run_id;
    std::vector<ShardEntry> shards;
    std::string config_digest;
    std::string progress_log;

    std::uint64_t total() const;
};

// ---------------------------------------------------------------------------
// Canonical JSON
// ---------------------------------------------------------------------------

void to_json(json& j, const ImageRef& r);
void from_json(const json& j, ImageRef& r);
void to_json(json& j, const ImageTextPair& p);
void from_json(const json& j, ImageTextPair& p);
void to_json(json& j, const ScoreRecord& r);
void from_json(const json& j, ScoreRecord& r);
void to_json(json& j, const FilterSpec& s);
void from_json(const json& j, FilterSpec& s);
void to_json(json& j, const RunManifest& m);
void from_json(const json& j, RunManifest& m);

/// Compact dump with lexicographically ordered keys.
std::string canonical_dump(const json& j);

/// Lowercase hex SHA-256 of the canonical form of `config`.
std::string config_digest(const json& config);

std::string sha256_hex(std::string_view bytes);

}  // namespace mtf
