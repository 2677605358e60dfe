#include "mtf/core.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>

#include <openssl/evp.h>

namespace mtf {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

bool starts_with_ci(std::string_view s, std::string_view prefix) {
    return s.size() >= prefix.size() && lower(s.substr(0, prefix.size())) == prefix;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::UnknownMetric: return "UnknownMetric";
        case ErrorCode::InvalidScore: return "InvalidScore";
        case ErrorCode::EmptyId: return "EmptyId";
        case ErrorCode::EmptyCaption: return "EmptyCaption";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::MalformedRow: return "MalformedRow";
        case ErrorCode::MissingDenseCaption: return "MissingDenseCaption";
        case ErrorCode::NoScoreFound: return "NoScoreFound";
        case ErrorCode::OutOfRange: return "OutOfRange";
        case ErrorCode::EndpointUnreachable: return "EndpointUnreachable";
        case ErrorCode::ScoreFailed: return "ScoreFailed";
        case ErrorCode::ProtocolError: return "ProtocolError";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::ZeroVector: return "ZeroVector";
        case ErrorCode::NonFiniteEmbedding: return "NonFiniteEmbedding";
        case ErrorCode::EmptyHistogram: return "EmptyHistogram";
        case ErrorCode::MissingHistogram: return "MissingHistogram";
        case ErrorCode::MissingScore: return "MissingScore";
        case ErrorCode::TooFewPoints: return "TooFewPoints";
        case ErrorCode::InsufficientPool: return "InsufficientPool";
        case ErrorCode::ZeroVariance: return "ZeroVariance";
        case ErrorCode::TooFewSamples: return "TooFewSamples";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::UsageError: return "UsageError";
    }
    return "Unknown";
}

json Error::to_json() const {
    json j{{"error", std::string(to_string(code_))}, {"message", what()}};
    if (!details_.empty()) j["details"] = details_;
    return j;
}

// ---------------------------------------------------------------------------

std::string_view to_string(Metric m) {
    switch (m) {
        case Metric::ITM: return "itm";
        case Metric::ODF: return "odf";
        case Metric::CTQ: return "ctq";
        case Metric::SU: return "su";
    }
    return "?";
}

Metric parse_metric(std::string_view name) {
    const std::string key = lower(trim(name));
    for (Metric m : kAllMetrics) {
        if (key == to_string(m)) return m;
    }
    throw Error(ErrorCode::UnknownMetric, "unknown metric '" + std::string(name) + "'",
                {{"metric", std::string(name)}});
}

std::vector<Metric> parse_metric_list(std::string_view csv) {
    std::vector<Metric> out;
    std::size_t start = 0;
    while (start <= csv.size()) {
        auto end = csv.find(',', start);
        if (end == std::string_view::npos) end = csv.size();
        auto token = trim(csv.substr(start, end - start));
        if (!token.empty()) {
            Metric m = parse_metric(token);
            if (std::find(out.begin(), out.end(), m) != out.end()) {
                throw Error(ErrorCode::InvalidArgument, "duplicate metric '" + std::string(token) + "'");
            }
            out.push_back(m);
        }
        start = end + 1;
    }
    if (out.empty()) throw Error(ErrorCode::InvalidArgument, "empty metric list");
    return out;
}

QualityScore::QualityScore(long long value) {
    if (value < kMinScore || value > kMaxScore) {
        throw Error(ErrorCode::InvalidScore, "score " + std::to_string(value) + " outside [0,100]",
                    {{"value", value}});
    }
    value_ = static_cast<int>(value);
}

// ---------------------------------------------------------------------------

std::string_view to_string(ImageRef::Kind k) {
    switch (k) {
        case ImageRef::Kind::None: return "none";
        case ImageRef::Kind::Path: return "path";
        case ImageRef::Kind::Url: return "url";
        case ImageRef::Kind::Base64: return "b64";
    }
    return "?";
}

ImageRef::Kind parse_image_kind(std::string_view s) {
    const std::string k = lower(s);
    if (k == "none") return ImageRef::Kind::None;
    if (k == "path") return ImageRef::Kind::Path;
    if (k == "url") return ImageRef::Kind::Url;
    if (k == "b64") return ImageRef::Kind::Base64;
    throw Error(ErrorCode::InvalidArgument, "unknown image kind '" + std::string(s) + "'");
}

ImageRef ImageRef::infer(std::string_view raw) {
    raw = trim(raw);
    if (raw.empty()) return none();
    if (starts_with_ci(raw, "http://") || starts_with_ci(raw, "https://")) return url(std::string(raw));
    if (starts_with_ci(raw, "b64:")) return base64(std::string(raw.substr(4)));
    if (starts_with_ci(raw, "data:")) return base64(std::string(raw));
    return path(std::string(raw));
}

const ImageTextPair& validate_pair(const ImageTextPair& p, const IngestConfig& cfg) {
    if (p.id.empty()) throw Error(ErrorCode::EmptyId, "pair id is empty");
    if (p.caption.empty() && !cfg.allow_empty_caption) {
        throw Error(ErrorCode::EmptyCaption, "pair '" + p.id + "' has an empty caption", {{"id", p.id}});
    }
    return p;
}

// ---------------------------------------------------------------------------

std::string_view to_string(Combiner c) {
    switch (c) {
        case Combiner::Single: return "SINGLE";
        case Combiner::And: return "AND";
        case Combiner::Or: return "OR";
    }
    return "?";
}

Combiner parse_combiner(std::string_view s) {
    const std::string k = lower(trim(s));
    if (k == "single") return Combiner::Single;
    if (k == "and") return Combiner::And;
    if (k == "or") return Combiner::Or;
    throw Error(ErrorCode::InvalidArgument, "unknown combiner '" + std::string(s) + "'");
}

namespace {

void check_fraction(double f) {
    if (!(f > 0.0 && f <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "fraction must be in (0,1], got " + std::to_string(f),
                    {{"fraction", f}});
    }
}

}  // namespace

void FilterSpec::validate() const {
    if (metrics.empty()) throw Error(ErrorCode::InvalidArgument, "filter spec needs at least one metric");
    const std::size_t need = combiner == Combiner::Single ? 1 : 2;
    if (metrics.size() != need) {
        throw Error(ErrorCode::InvalidArgument, std::string(to_string(combiner)) + " requires exactly " +
                                                    std::to_string(need) + " metric(s)");
    }
    if (metrics.size() == 2 && metrics[0] == metrics[1]) {
        throw Error(ErrorCode::InvalidArgument, "combined spec needs two distinct metrics");
    }
    check_fraction(fraction);
    for (const auto& f : fraction_overrides) {
        if (f) check_fraction(*f);
    }
    for (const auto& t : thresholds) {
        if (t && (*t < 0 || *t > kRetainNothing)) {
            throw Error(ErrorCode::InvalidArgument, "threshold outside [0,101]");
        }
    }
}

bool FilterSpec::resolved() const {
    return std::all_of(metrics.begin(), metrics.end(), [&](Metric m) { return thresholds[index_of(m)].has_value(); });
}

double FilterSpec::fraction_for(Metric m) const { return fraction_overrides[index_of(m)].value_or(fraction); }

int FilterSpec::threshold(Metric m) const {
    const auto& t = thresholds[index_of(m)];
    if (!t) throw Error(ErrorCode::InvalidArgument, "threshold for " + std::string(to_string(m)) + " not resolved");
    return *t;
}

std::uint64_t RunManifest::total() const {
    std::uint64_t n = 0;
    for (const auto& s : shards) n += s.count;
    return n;
}

// ---------------------------------------------------------------------------
// JSON encodings
// ---------------------------------------------------------------------------

void to_json(json& j, const ImageRef& r) {
    j = json{{"kind", std::string(to_string(r.kind))}};
    if (r.kind != ImageRef::Kind::None) j["value"] = r.value;
}

void from_json(const json& j, ImageRef& r) {
    if (j.is_null()) {
        r = ImageRef::none();
        return;
    }
    if (j.is_string()) {
        r = ImageRef::infer(j.get<std::string>());
        return;
    }
    r.kind = parse_image_kind(j.at("kind").get<std::string>());
    r.value = j.value("value", std::string{});
}

void to_json(json& j, const ImageTextPair& p) {
    j = json{{"id", p.id}, {"image", p.image}, {"caption", p.caption}};
    if (p.dense_caption) j["dense_caption"] = *p.dense_caption;
}

void from_json(const json& j, ImageTextPair& p) {
    p.id = j.at("id").get<std::string>();
    p.image = j.contains("image") ? j.at("image").get<ImageRef>() : ImageRef::none();
    p.caption = j.at("caption").get<std::string>();
    if (auto it = j.find("dense_caption"); it != j.end() && !it->is_null()) {
        p.dense_caption = it->get<std::string>();
    } else {
        p.dense_caption.reset();
    }
}

void to_json(json& j, const ScoreRecord& r) {
    json scores = json::object();
    for (Metric m : kAllMetrics) {
        if (const auto& s = r.get(m)) scores[std::string(to_string(m))] = s->value();
    }
    j = json{{"id", r.pair_id}, {"scores", std::move(scores)}, {"provenance", r.provenance}};
}

void from_json(const json& j, ScoreRecord& r) {
    r.pair_id = j.at("id").get<std::string>();
    r.scores = {};
    for (const auto& [key, value] : j.at("scores").items()) {
        if (value.is_null()) continue;
        if (!value.is_number_integer()) {
            throw Error(ErrorCode::InvalidScore, "score for '" + key + "' is not an integer");
        }
        r.set(parse_metric(key), QualityScore(value.get<long long>()));
    }
    r.provenance = j.value("provenance", std::string{});
}

void to_json(json& j, const FilterSpec& s) {
    json metrics = json::array();
    for (Metric m : s.metrics) metrics.push_back(std::string(to_string(m)));
    j = json{{"metrics", metrics}, {"combiner", std::string(to_string(s.combiner))}};
    bool overridden = std::any_of(s.fraction_overrides.begin(), s.fraction_overrides.end(),
                                  [](const auto& f) { return f.has_value(); });
    if (overridden) {
        json fractions = json::object();
        for (Metric m : s.metrics) fractions[std::string(to_string(m))] = s.fraction_for(m);
        j["fraction"] = fractions;
    } else {
        j["fraction"] = s.fraction;
    }
    json thresholds = json::object();
    for (Metric m : s.metrics) {
        if (const auto& t = s.thresholds[index_of(m)]) thresholds[std::string(to_string(m))] = *t;
    }
    if (!thresholds.empty()) j["thresholds"] = thresholds;
}

void from_json(const json& j, FilterSpec& s) {
    static const std::vector<std::string> allowed{"metrics", "fraction", "combiner", "thresholds"};
    for (const auto& [key, _] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw Error(ErrorCode::ConfigError, "unknown filter spec key '" + key + "'");
        }
    }
    s = FilterSpec{};
    const auto& metrics = j.at("metrics");
    if (metrics.is_string()) {
        s.metrics = parse_metric_list(metrics.get<std::string>());
    } else {
        for (const auto& m : metrics) s.metrics.push_back(parse_metric(m.get<std::string>()));
    }
    if (auto it = j.find("combiner"); it != j.end()) {
        s.combiner = parse_combiner(it->get<std::string>());
    } else {
        s.combiner = s.metrics.size() == 1 ? Combiner::Single : Combiner::And;
    }
    if (auto it = j.find("fraction"); it != j.end()) {
        if (it->is_object()) {
            for (const auto& [key, value] : it->items()) s.fraction_overrides[index_of(parse_metric(key))] = value.get<double>();
        } else {
            s.fraction = it->get<double>();
        }
    }
    if (auto it = j.find("thresholds"); it != j.end()) {
        for (const auto& [key, value] : it->items()) s.thresholds[index_of(parse_metric(key))] = value.get<int>();
    }
    s.validate();
}

void to_json(json& j, const RunManifest& m) {
    json shards = json::array();
    for (const auto& s : m.shards) shards.push_back(json{{"path", s.path}, {"count", s.count}});
    j = json{{"run_id", m.run_id},
             {"shards", shards},
             {"config_digest", m.config_digest},
             {"progress_log", m.progress_log}};
}

void from_json(const json& j, RunManifest& m) {
    m.run_id = j.at("run_id").get<std::string>();
    m.shards.clear();
    for (const auto& s : j.at("shards")) m.shards.push_back({s.at("path").get<std::string>(), s.at("count").get<std::uint64_t>()});
    m.config_digest = j.value("config_digest", std::string{});
    m.progress_log = j.value("progress_log", std::string{});
}

// ---------------------------------------------------------------------------

std::string canonical_dump(const json& j) {
    // nlohmann::json stores objects in a std::map, so keys already serialize sorted.
    return j.dump(-1, ' ', false, json::error_handler_t::strict);
}

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error(ErrorCode::IoError, "SHA-256 computation failed");
    }
    std::string hex;
    hex.reserve(len * 2);
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", digest[i]);
        hex += buf;
    }
    return hex;
}

std::string config_digest(const json& config) { return sha256_hex(canonical_dump(config)); }

}  // namespace mtf
