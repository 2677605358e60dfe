#include "mtf/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "mtf/curation.hpp"
#include "mtf/embedding.hpp"
#include "mtf/filter.hpp"
#include "mtf/ingest.hpp"
#include "mtf/kmeans.hpp"
#include "mtf/stats.hpp"

namespace mtf::cli {

namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// Flags and config
// ---------------------------------------------------------------------------

enum class Kind { String, Int, Double, Bool, List };

struct Flag {
    const char* name;
    const char* key;
    Kind kind;
    const char* help;
};

constexpr Flag kFlags[] = {
    {"--pairs", "pairs", Kind::List, "pair shards (comma-separated)"},
    {"--format", "format", Kind::String, "pair shard format: jsonl|tsv"},
    {"--scores", "scores", Kind::String, "score JSONL file"},
    {"--metrics", "metrics", Kind::List, "metrics, e.g. itm,odf"},
    {"--metric", "metric", Kind::String, "single metric"},
    {"--endpoint", "endpoint", Kind::String, "scorer: http URL, 'mock', or 'embed:<table>'"},
    {"--fraction", "fraction", Kind::Double, "retention fraction in (0,1]"},
    {"--combiner", "combiner", Kind::String, "SINGLE|AND|OR"},
    {"--spec", "spec", Kind::String, "filter spec as inline JSON or a file path"},
    {"--out", "out", Kind::String, "output path"},
    {"--seed", "seed", Kind::Int, "random seed"},
    {"--concurrency", "concurrency", Kind::Int, "max in-flight scorer requests"},
    {"--resume", "resume", Kind::Bool, "continue from the progress log"},
    {"--mode", "mode", Kind::String, "rationalization|cot"},
    {"--path", "path", Kind::String, "teacher path: vision|text_only"},
    {"--max-new-tokens", "max_new_tokens", Kind::Int, "generation cap per request"},
    {"--timeout-ms", "timeout_ms", Kind::Int, "request timeout"},
    {"--retries", "retries", Kind::Int, "max attempts per request"},
    {"--backoff-ms", "backoff_ms", Kind::List, "backoff schedule in ms"},
    {"--jitter", "jitter", Kind::Double, "relative backoff jitter"},
    {"--on-failure", "on_failure", Kind::String, "abort|quarantine"},
    {"--on-malformed", "on_malformed", Kind::String, "fail|skip"},
    {"--allow-empty-caption", "allow_empty_caption", Kind::Bool, "accept empty captions"},
    {"--progress-log", "progress_log", Kind::String, "progress log path"},
    {"--reject-log", "reject_log", Kind::String, "quarantine log path"},
    {"--embeddings", "embeddings", Kind::String, "MTEB embedding table"},
    {"--k", "k", Kind::Int, "number of clusters"},
    {"--max-iters", "max_iters", Kind::Int, "k-means iteration cap"},
    {"--epsilon", "epsilon", Kind::Double, "relative objective tolerance"},
    {"--mini-batch", "mini_batch", Kind::Bool, "mini-batch k-means"},
    {"--batch-size", "batch_size", Kind::Int, "mini-batch size"},
    {"--instructions", "instructions", Kind::String, "instruction JSONL"},
    {"--buckets", "buckets", Kind::Int, "10 or 100"},
    {"--target", "target", Kind::Int, "target sample size"},
    {"--threshold", "threshold", Kind::Int, "bucket downsample threshold"},
    {"--mixture", "mixture", Kind::String, "mixture spec JSON file"},
    {"--pools-dir", "pools_dir", Kind::String, "directory of <pool>.jsonl files"},
    {"--human", "human", Kind::String, "human score CSV (id,human)"},
    {"--method", "method", Kind::String, "pearson|spearman|both"},
    {"--permutations", "permutations", Kind::Int, "permutation-test draws (0 = t-test only)"},
    {"--fractions", "fractions", Kind::List, "fractions to sweep"},
};

const Flag& flag_for(std::string_view key) {
    for (const auto& f : kFlags) {
        if (key == f.key) return f;
    }
    throw std::logic_error("unknown flag key");
}

json convert(const Flag& f, const std::string& raw) {
    try {
        switch (f.kind) {
            case Kind::String: return raw;
            case Kind::Int: {
                std::size_t used = 0;
                const long long v = std::stoll(raw, &used);
                if (used != raw.size()) break;
                return v;
            }
            case Kind::Double: {
                std::size_t used = 0;
                const double v = std::stod(raw, &used);
                if (used != raw.size()) break;
                return v;
            }
            case Kind::Bool: return raw == "true" || raw == "1";
            case Kind::List: {
                json arr = json::array();
                std::stringstream ss(raw);
                std::string item;
                while (std::getline(ss, item, ',')) {
                    if (!item.empty()) arr.push_back(item);
                }
                return arr;
            }
        }
    } catch (const std::logic_error&) {
    }
    throw Error(ErrorCode::UsageError, std::string("bad value for ") + f.name + ": '" + raw + "'");
}

class Config {
public:
    explicit Config(json values) : values_(std::move(values)) {}

    const json& values() const { return values_; }
    bool has(const std::string& key) const { return values_.contains(key) && !values_.at(key).is_null(); }

    std::string str(const std::string& key) const {
        require(key);
        return values_.at(key).get<std::string>();
    }
    std::string str(const std::string& key, const std::string& def) const { return has(key) ? values_.at(key).get<std::string>() : def; }
    long long integer(const std::string& key, long long def) const { return has(key) ? values_.at(key).get<long long>() : def; }
    double real(const std::string& key, double def) const { return has(key) ? values_.at(key).get<double>() : def; }
    bool flag(const std::string& key) const { return has(key) && values_.at(key).get<bool>(); }

    /// Accepts an array or a comma-separated string.
    std::vector<std::string> list(const std::string& key) const {
        require(key);
        const auto& v = values_.at(key);
        if (v.is_string()) return convert(flag_for(key), v.get<std::string>()).get<std::vector<std::string>>();
        std::vector<std::string> out;
        for (const auto& item : v) out.push_back(item.is_string() ? item.get<std::string>() : item.dump());
        return out;
    }

    std::vector<Metric> metrics(const std::string& key = "metrics") const {
        std::vector<Metric> out;
        for (const auto& s : list(key)) {
            const Metric m = parse_metric(s);
            if (std::find(out.begin(), out.end(), m) != out.end()) {
                throw Error(ErrorCode::InvalidArgument, "duplicate metric '" + s + "'");
            }
            out.push_back(m);
        }
        if (out.empty()) throw Error(ErrorCode::UsageError, "no metrics given");
        return out;
    }

    void require(const std::string& key) const {
        if (!has(key)) throw Error(ErrorCode::UsageError, "missing required option --" + flag_name(key));
    }

private:
    static std::string flag_name(std::string key) {
        std::replace(key.begin(), key.end(), '_', '-');
        return key;
    }

    json values_;
};

json load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open config '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ConfigError, "config '" + path + "' is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw Error(ErrorCode::ConfigError, "config must be a JSON object");
    for (const auto& [key, _] : j.items()) {
        bool known = false;
        for (const auto& f : kFlags) known = known || key == f.key;
        if (!known) throw Error(ErrorCode::ConfigError, "unknown config key '" + key + "'", {{"key", key}});
    }
    return j;
}

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::trunc) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::out | std::ios::binary | mode);
    if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    auto out = open_out(path);
    out << text;
    if (!out) throw Error(ErrorCode::IoError, "failed writing '" + path.string() + "'");
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Writes to --out when given, otherwise to stdout.
void emit(const Config& cfg, std::ostream& out, const std::string& text) {
    if (cfg.has("out")) {
        write_text(cfg.str("out"), text);
    } else {
        out << text;
    }
}

ingest::PairSource pair_source(const Config& cfg) {
    ingest::PairSource src;
    for (const auto& p : cfg.list("pairs")) src.shards.emplace_back(p);
    src.format = ingest::parse_format(cfg.str("format", "jsonl"));
    const auto malformed = cfg.str("on_malformed", "fail");
    if (malformed == "skip") {
        src.on_malformed = ingest::MalformedPolicy::Skip;
    } else if (malformed != "fail") {
        throw Error(ErrorCode::UsageError, "--on-malformed must be fail or skip");
    }
    src.ingest.allow_empty_caption = cfg.flag("allow_empty_caption");
    return src;
}

std::uint64_t count_rows(const fs::path& shard, ingest::Format format) {
    std::ifstream in(shard, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open '" + shard.string() + "'");
    std::uint64_t n = 0;
    std::string line;
    bool header = format == ingest::Format::Tsv;
    while (std::getline(in, line)) {
        if (header) {
            header = false;
            continue;
        }
        if (line.find_first_not_of(" \t\r") != std::string::npos) ++n;
    }
    return n;
}

std::vector<ScoreRecord> load_scores(const Config& cfg) { return ingest::read_scores(cfg.str("scores")); }

filter::HistogramMap histograms_for(std::span<const ScoreRecord> records, std::span<const Metric> metrics) {
    // Metrics nobody scored are left out so resolve_spec can name them.
    filter::HistogramMap out;
    for (Metric m : metrics) {
        auto h = filter::build_histogram(records, m);
        if (h.total > 0) out[m] = h;
    }
    return out;
}

std::vector<QualityScore> metric_scores(std::span<const ScoreRecord> records, Metric m) {
    std::vector<QualityScore> out;
    for (const auto& r : records) {
        if (const auto& s = r.get(m)) out.push_back(*s);
    }
    return out;
}

scorer::RetryPolicy retry_policy(const Config& cfg) {
    scorer::RetryPolicy p;
    p.max_attempts = static_cast<int>(cfg.integer("retries", p.max_attempts));
    if (cfg.has("backoff_ms")) {
        p.backoff.clear();
        for (const auto& ms : cfg.list("backoff_ms")) p.backoff.emplace_back(std::stoll(ms));
    }
    p.jitter = cfg.real("jitter", p.jitter);
    return p;
}

// ---------------------------------------------------------------------------
// score
// ---------------------------------------------------------------------------

json cmd_score(const Config& cfg) {
    const auto src = pair_source(cfg);
    const auto metrics = cfg.metrics();
    const fs::path out_path = cfg.str("out");
    const fs::path log_path = cfg.str("progress_log", out_path.string() + ".progress");
    const bool resume = cfg.flag("resume");

    scorer::ScorerEndpoint endpoint;
    endpoint.base_url = cfg.str("endpoint");
    endpoint.concurrency = static_cast<std::size_t>(cfg.integer("concurrency", 8));
    endpoint.retry = retry_policy(cfg);
    endpoint.timeout = scorer::Millis{cfg.integer("timeout_ms", 30000)};
    if (const char* token = std::getenv("MTF_AUTH_TOKEN"); token && *token) endpoint.auth_token = token;
    auto backend = make_backend(endpoint.base_url, endpoint);

    scorer::BatchOptions opts;
    opts.metrics = metrics;
    opts.mode = scorer::parse_prompt_mode(cfg.str("mode", "rationalization"));
    opts.path = scorer::parse_teacher_path(cfg.str("path", "vision"));
    opts.max_new_tokens = static_cast<int>(cfg.integer("max_new_tokens", opts.mode == scorer::PromptMode::Cot ? 512 : 4));
    opts.concurrency = endpoint.concurrency;
    opts.retry = endpoint.retry;
    opts.timeout = endpoint.timeout;
    opts.on_failure = scorer::parse_failure_policy(cfg.str("on_failure", "abort"));

    // Bring the score file in line with the log: only records whose ids were
    // logged survive, so a crash between write and log never duplicates.
    std::uint64_t carried = 0;
    if (resume) {
        const auto done = ingest::ProgressLog::replay(log_path);
        std::string kept;
        if (fs::exists(out_path)) {
            std::set<std::string> seen;
            bool torn = false;
            ingest::for_each_score(
                out_path,
                [&](ScoreRecord r) {
                    if (done.contains(r.pair_id) && seen.insert(r.pair_id).second) {
                        kept += ingest::encode_score_line(r);
                        kept += '\n';
                        ++carried;
                    }
                },
                &torn);
        }
        write_text(out_path, kept);
    } else {
        std::error_code ec;
        fs::remove(log_path, ec);
        write_text(out_path, "");
    }

    auto reader = ingest::open_pair_stream(src);
    std::unique_ptr<ingest::ResumeFilter> filtered;
    ingest::PairReader* input = reader.get();
    if (resume) {
        filtered = ingest::resume_filter(*reader, log_path);
        input = filtered.get();
    }

    ingest::ProgressLog log(log_path, 64);
    auto out = open_out(out_path, std::ios::app);
    std::ofstream rejects;
    const fs::path reject_path = cfg.str("reject_log", out_path.string() + ".rejects.jsonl");

    // The log may only run ahead of nothing: flush scores before each log flush.
    std::uint64_t since_flush = 0;
    auto sink = [&](const ScoreRecord& r) {
        out << ingest::encode_score_line(r) << '\n';
        if (++since_flush >= 64) {
            out.flush();
            since_flush = 0;
        }
        if (!out) throw Error(ErrorCode::IoError, "failed writing '" + out_path.string() + "'");
    };
    auto quarantine = [&](const scorer::Quarantined& q) {
        if (!rejects.is_open()) rejects = open_out(reject_path, std::ios::app);
        rejects << canonical_dump(json{{"id", q.pair_id}, {"metric", std::string(to_string(q.metric))}, {"cause", q.cause}})
                << '\n';
    };

    scorer::BatchStats stats;
    try {
        stats = scorer::score_batch(*input, *backend, opts, sink, &log, quarantine);
    } catch (...) {
        out.flush();
        log.flush();
        throw;
    }
    out.flush();
    log.flush();

    RunManifest manifest;
    manifest.run_id = cfg.str("run_id", out_path.stem().string());
    manifest.config_digest = config_digest(cfg.values());
    manifest.progress_log = log_path.string();
    for (const auto& shard : src.shards) manifest.shards.push_back({shard.string(), count_rows(shard, src.format)});
    ingest::write_manifest(manifest, out_path.string() + ".manifest.json");

    json summary{{"scored", stats.scored + carried},
                 {"new", stats.scored},
                 {"carried_over", carried},
                 {"quarantined", stats.quarantined},
                 {"requests", stats.requests},
                 {"retries", stats.retries},
                 {"out", out_path.string()},
                 {"config_digest", manifest.config_digest}};
    if (auto* sr = dynamic_cast<ingest::ShardReader*>(reader.get())) summary["skipped_malformed"] = sr->skipped();
    return summary;
}

// ---------------------------------------------------------------------------
// threshold / filter / sweep / report / correlate
// ---------------------------------------------------------------------------

json cmd_threshold(const Config& cfg, std::ostream& out) {
    const auto records = load_scores(cfg);
    const auto metrics = cfg.metrics();
    const double fraction = cfg.real("fraction", kDefaultFraction);
    json thresholds = json::object();
    json retained = json::object();
    json totals = json::object();
    for (Metric m : metrics) {
        const auto h = filter::build_histogram(records, m);
        const int t = filter::compute_threshold(h, fraction);
        const auto key = std::string(to_string(m));
        thresholds[key] = t;
        retained[key] = h.retained_at(t);
        totals[key] = h.total;
    }
    json doc{{"fraction", fraction}, {"thresholds", thresholds}, {"retained", retained}, {"total", totals}};
    emit(cfg, out, doc.dump(2) + "\n");
    return doc;
}

FilterSpec spec_from(const Config& cfg) {
    if (cfg.has("spec")) {
        std::string text = cfg.str("spec");
        if (text.find('{') == std::string::npos) text = read_text(text);
        json j;
        try {
            j = json::parse(text);
        } catch (const json::exception& e) {
            throw Error(ErrorCode::UsageError, std::string("--spec is not valid JSON: ") + e.what());
        }
        return j.get<FilterSpec>();
    }
    FilterSpec spec;
    spec.metrics = cfg.metrics();
    spec.fraction = cfg.real("fraction", kDefaultFraction);
    spec.combiner = cfg.has("combiner") ? parse_combiner(cfg.str("combiner"))
                                        : (spec.metrics.size() == 1 ? Combiner::Single : Combiner::And);
    spec.validate();
    return spec;
}

json cmd_filter(const Config& cfg) {
    auto spec = spec_from(cfg);
    const auto records = load_scores(cfg);
    if (!spec.resolved()) spec = filter::resolve_spec(spec, histograms_for(records, spec.metrics));
    const auto outcome = filter::apply_filter(records, spec);

    const fs::path dir = cfg.str("out");
    fs::create_directories(dir);
    {
        auto ids = open_out(dir / "retained_ids.jsonl");
        for (const auto& id : outcome.retained_ids) ids << canonical_dump(json{{"id", id}}) << '\n';
    }
    if (cfg.has("pairs")) {
        std::set<std::string> keep(outcome.retained_ids.begin(), outcome.retained_ids.end());
        auto reader = ingest::open_pair_stream(pair_source(cfg));
        auto pairs_out = open_out(dir / "retained.jsonl");
        while (auto p = reader->next()) {
            if (keep.contains(p->id)) pairs_out << canonical_dump(json(*p)) << '\n';
        }
    }
    json summary = outcome.summary(spec);
    write_text(dir / "summary.json", summary.dump(2) + "\n");
    return summary;
}

json cmd_sweep(const Config& cfg, std::ostream& out) {
    const auto records = load_scores(cfg);
    const Metric m = cfg.has("metric") ? parse_metric(cfg.str("metric")) : cfg.metrics().front();
    const auto h = filter::build_histogram(records, m);
    std::vector<double> fractions(stats::kDefaultSweepFractions.begin(), stats::kDefaultSweepFractions.end());
    if (cfg.has("fractions")) {
        fractions.clear();
        for (const auto& f : cfg.list("fractions")) fractions.push_back(std::stod(f));
    }
    const auto rows = stats::fraction_sweep(h, fractions);
    emit(cfg, out, stats::sweep_csv(rows));
    json arr = json::array();
    for (const auto& r : rows) arr.push_back(json{{"fraction", r.fraction}, {"threshold", r.threshold}, {"retained", r.retained}});
    return json{{"metric", std::string(to_string(m))}, {"total", h.total}, {"rows", arr}};
}

json cmd_report(const Config& cfg, std::ostream& out) {
    const auto records = load_scores(cfg);
    std::vector<Metric> metrics;
    if (cfg.has("metrics")) {
        metrics = cfg.metrics();
    } else {
        for (Metric m : kAllMetrics) {
            if (std::any_of(records.begin(), records.end(), [&](const ScoreRecord& r) { return r.has(m); })) metrics.push_back(m);
        }
    }
    std::map<Metric, std::vector<QualityScore>> by_metric;
    for (Metric m : metrics) by_metric[m] = metric_scores(records, m);
    const auto report = stats::distribution_report(by_metric);
    const json doc = report.to_json();
    if (cfg.has("out")) {
        const std::string prefix = cfg.str("out");
        write_text(prefix + ".json", doc.dump(2) + "\n");
        write_text(prefix + ".csv", report.to_csv());
    } else {
        out << doc.dump(2) << "\n";
    }
    json summary = json::object();
    for (const auto& [m, r] : report.metrics) summary[std::string(to_string(m))] = json{{"total", r.histogram.total}, {"mean", r.mean}};
    return summary;
}

json cmd_correlate(const Config& cfg, std::ostream& out) {
    const auto human = stats::read_human_csv(cfg.str("human"));
    std::map<std::string, double> model;
    std::string source;
    if (cfg.has("embeddings")) {
        // Baseline correlation uses the unrounded 0..100 cosine.
        const auto table = scorer::EmbeddingTable::load(cfg.str("embeddings"));
        for (std::size_t i = 0; i < table.size(); ++i) model[table.ids()[i]] = scorer::scaled_cosine(table.image(i), table.text(i));
        source = "cosine";
    } else {
        const Metric m = parse_metric(cfg.str("metric", "itm"));
        for (const auto& r : load_scores(cfg)) {
            if (const auto& s = r.get(m)) model[r.pair_id] = s->value();
        }
        source = std::string(to_string(m));
    }
    const auto sample = stats::join_scores(human, model);
    const auto method = cfg.str("method", "both");
    if (method != "both" && method != "pearson" && method != "spearman") {
        throw Error(ErrorCode::UsageError, "--method must be pearson, spearman or both");
    }
    const auto permutations = static_cast<std::size_t>(cfg.integer("permutations", 0));
    const auto seed = static_cast<std::uint64_t>(cfg.integer("seed", 0));
    json doc{{"n", sample.size()}, {"model", source}, {"unmatched_human", human.size() - sample.size()}};
    auto add = [&](const char* name, stats::CorrelationKind kind) {
        auto r = kind == stats::CorrelationKind::Pearson ? stats::pearson(sample) : stats::spearman(sample);
        json j = stats::to_json(r);
        if (permutations > 0) j["permutation_p_value"] = stats::permutation_p_value(sample, kind, permutations, seed);
        doc[name] = j;
    };
    if (method != "spearman") add("pearson", stats::CorrelationKind::Pearson);
    if (method != "pearson") add("spearman", stats::CorrelationKind::Spearman);
    emit(cfg, out, doc.dump(2) + "\n");
    return doc;
}

// ---------------------------------------------------------------------------
// curate
// ---------------------------------------------------------------------------

json cmd_cluster(const Config& cfg, std::ostream& out) {
    const auto table = scorer::EmbeddingTable::load(cfg.str("embeddings"));
    curation::ClusterConfig cc;
    cc.k = static_cast<std::size_t>(cfg.integer("k", 0));
    cc.seed = static_cast<std::uint64_t>(cfg.integer("seed", 0));
    cc.max_iters = static_cast<std::size_t>(cfg.integer("max_iters", 100));
    cc.epsilon = cfg.real("epsilon", 1e-6);
    if (cfg.flag("mini_batch")) cc.algorithm = curation::ClusterAlgorithm::MiniBatch;
    cc.batch_size = static_cast<std::size_t>(cfg.integer("batch_size", 1024));
    const auto points = table.text_matrix();
    const auto res = curation::cluster_representatives(points, table.dim(), cc);
    json reps = json::array();
    for (auto i : res.representatives) reps.push_back(table.ids()[i]);
    json doc{{"k", cc.k}, {"iterations", res.iterations}, {"objective", res.objective}, {"representatives", reps}};
    emit(cfg, out, doc.dump(2) + "\n");
    return json{{"k", cc.k}, {"iterations", res.iterations}, {"objective", res.objective}, {"converged", res.converged}};
}

json cmd_jobs(const Config& cfg, std::ostream& out) {
    auto reader = ingest::open_pair_stream(pair_source(cfg));
    std::vector<Metric> metrics(kAllMetrics.begin(), kAllMetrics.end());
    if (cfg.has("metrics")) metrics = cfg.metrics();
    curation::JobOptions opts;
    opts.mode = scorer::parse_prompt_mode(cfg.str("mode", "rationalization"));
    opts.max_new_tokens = static_cast<int>(cfg.integer("max_new_tokens", 512));
    const auto jobs = curation::emit_teacher_jobs(*reader, metrics, scorer::parse_teacher_path(cfg.str("path", "vision")), opts);
    std::string text;
    std::size_t captions = 0;
    for (const auto& j : jobs) {
        text += canonical_dump(curation::to_json(j));
        text += '\n';
        captions += j.kind == curation::JobKind::DenseCaption;
    }
    emit(cfg, out, text);
    return json{{"jobs", jobs.size()}, {"dense_caption_jobs", captions}};
}

json cmd_sample(const Config& cfg, std::ostream& out) {
    auto records = curation::read_instructions(cfg.str("instructions"));
    if (cfg.has("metric")) {
        const Metric m = parse_metric(cfg.str("metric"));
        std::erase_if(records, [&](const curation::InstructionRecord& r) { return r.metric != m; });
    }
    std::vector<QualityScore> scores;
    for (const auto& r : records) {
        if (!r.score) throw Error(ErrorCode::InvalidArgument, "instruction without a score cannot be bucket-sampled");
        scores.push_back(*r.score);
    }
    curation::SamplerConfig sc;
    sc.bucket_count = static_cast<int>(cfg.integer("buckets", 10));
    sc.target_size = static_cast<std::size_t>(cfg.integer("target", 1000));
    sc.downsample_threshold = static_cast<std::size_t>(cfg.integer("threshold", 130));
    sc.seed = static_cast<std::uint64_t>(cfg.integer("seed", 0));
    curation::SampleReport report;
    const auto picks = curation::balanced_sample(scores, sc, &report);
    std::string text;
    for (auto i : picks) {
        text += canonical_dump(json(records[i]));
        text += '\n';
    }
    emit(cfg, out, text);
    json summary = report.to_json();
    summary["selected"] = picks.size();
    return summary;
}

json cmd_mixture(const Config& cfg, std::ostream& out) {
    curation::MixtureSpec spec = curation::MixtureSpec::defaults();
    fs::path base = cfg.str("pools_dir", ".");
    if (cfg.has("mixture")) {
        const fs::path spec_path = cfg.str("mixture");
        try {
            spec = json::parse(read_text(spec_path)).get<curation::MixtureSpec>();
        } catch (const json::exception& e) {
            throw Error(ErrorCode::UsageError, std::string("bad mixture spec: ") + e.what());
        }
        if (!cfg.has("pools_dir")) base = spec_path.parent_path();
    }
    curation::PoolMap pools;
    for (const auto& src : spec.sources) {
        fs::path file = src.pool;
        if (file.extension() != ".jsonl") file += ".jsonl";
        if (file.is_relative()) file = base / file;
        if (!fs::exists(file)) {
            throw Error(ErrorCode::InsufficientPool, "pool '" + src.pool + "' not found at '" + file.string() + "'",
                        {{"pool", src.pool}, {"have", 0}, {"need", src.target}});
        }
        pools[src.pool] = curation::read_instructions(file);
    }
    const auto mixed = curation::assemble_mixture(spec, pools, static_cast<std::uint64_t>(cfg.integer("seed", 0)));
    std::string text;
    for (const auto& r : mixed) {
        text += canonical_dump(json(r));
        text += '\n';
    }
    emit(cfg, out, text);
    json per_source = json::object();
    for (const auto& r : mixed) per_source[r.source] = per_source.value(r.source, 0) + 1;
    return json{{"total", mixed.size()}, {"per_source", per_source}};
}

// ---------------------------------------------------------------------------

struct Sub {
    CLI::App* app;
    std::vector<std::string> keys;
};

}  // namespace

std::unique_ptr<scorer::ScorerBackend> make_backend(const std::string& endpoint, const scorer::ScorerEndpoint& settings) {
    if (endpoint == "mock" || endpoint == "mock:") return std::make_unique<scorer::MockBackend>();
    if (endpoint.rfind("embed:", 0) == 0) {
        return std::make_unique<scorer::CosineBackend>(scorer::EmbeddingTable::load(endpoint.substr(6)));
    }
    auto s = settings;
    s.base_url = endpoint;
    return std::make_unique<scorer::HttpBackend>(s);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Quality scoring, thresholding and curation for image-text pair pools", "mtf"};
    app.require_subcommand(1);
    std::string config_path;

    std::map<std::string, std::string> raw;
    std::map<std::string, bool> bools;
    std::vector<Sub> subs;

    auto add_sub = [&](CLI::App* parent, const char* name, const char* desc, std::vector<std::string> keys) {
        auto* sub = parent->add_subcommand(name, desc);
        sub->add_option("--config", config_path, "JSON config file; flags override its values");
        for (const auto& key : keys) {
            const auto& f = flag_for(key);
            if (f.kind == Kind::Bool) {
                sub->add_flag(f.name, bools[key], f.help);
            } else {
                sub->add_option(f.name, raw[key], f.help);
            }
        }
        subs.push_back({sub, std::move(keys)});
        return sub;
    };

    const std::vector<std::string> score_keys{"pairs", "format", "metrics", "endpoint", "out", "concurrency", "resume",
                                              "mode", "path", "max_new_tokens", "timeout_ms", "retries", "backoff_ms",
                                              "jitter", "on_failure", "on_malformed", "allow_empty_caption",
                                              "progress_log", "reject_log", "seed"};
    auto* score = add_sub(&app, "score", "score pairs on metrics via a scorer endpoint", score_keys);
    auto* threshold = add_sub(&app, "threshold", "resolve fraction-based thresholds", {"scores", "metrics", "fraction", "out"});
    auto* filt = add_sub(&app, "filter", "apply a single or combined filter",
                         {"pairs", "format", "on_malformed", "allow_empty_caption", "scores", "spec", "metrics", "fraction",
                          "combiner", "out"});
    auto* curate = app.add_subcommand("curate", "build instruction-tuning data");
    curate->require_subcommand(1);
    auto* cluster = add_sub(curate, "cluster", "k-means representatives of text embeddings",
                            {"embeddings", "k", "seed", "max_iters", "epsilon", "mini_batch", "batch_size", "out"});
    auto* jobs = add_sub(curate, "jobs", "emit teacher jobs",
                         {"pairs", "format", "on_malformed", "allow_empty_caption", "metrics", "path", "mode",
                          "max_new_tokens", "out"});
    auto* sample = add_sub(curate, "sample", "bucket-balanced sampling of scored instructions",
                           {"instructions", "metric", "buckets", "target", "threshold", "seed", "out"});
    auto* mixture = add_sub(curate, "mixture", "assemble the multi-task instruction mixture",
                            {"mixture", "pools_dir", "seed", "out"});
    auto* correlate = add_sub(&app, "correlate", "correlate model scores with human labels",
                              {"scores", "human", "metric", "embeddings", "method", "permutations", "seed", "out"});
    auto* report = add_sub(&app, "report", "score distribution report", {"scores", "metrics", "out"});
    auto* sweep = add_sub(&app, "sweep", "thresholds across retention fractions", {"scores", "metric", "metrics", "fractions", "out"});

    std::vector<const char*> argv{"mtf"};
    for (const auto& a : args) argv.push_back(a.c_str());

    auto fail = [&](const Error& e, int code) {
        err << e.to_json().dump() << '\n';
        return code;
    };

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        return fail(Error(ErrorCode::UsageError, e.what()), kExitUsage);
    }

    try {
        const Sub* chosen = nullptr;
        for (const auto& s : subs) {
            if (s.app->parsed()) chosen = &s;
        }
        if (!chosen) throw Error(ErrorCode::UsageError, "no subcommand given");

        json values = config_path.empty() ? json::object() : load_config_file(config_path);
        for (const auto& key : chosen->keys) {
            const auto& f = flag_for(key);
            if (chosen->app->count(f.name) == 0) continue;
            values[key] = f.kind == Kind::Bool ? json(bools[key]) : convert(f, raw[key]);
        }
        const Config cfg(std::move(values));

        json summary;
        const auto* a = chosen->app;
        if (a == score) {
            summary = cmd_score(cfg);
        } else if (a == threshold) {
            summary = cmd_threshold(cfg, out);
        } else if (a == filt) {
            summary = cmd_filter(cfg);
        } else if (a == cluster) {
            summary = cmd_cluster(cfg, out);
        } else if (a == jobs) {
            summary = cmd_jobs(cfg, out);
        } else if (a == sample) {
            summary = cmd_sample(cfg, out);
        } else if (a == mixture) {
            summary = cmd_mixture(cfg, out);
        } else if (a == correlate) {
            summary = cmd_correlate(cfg, out);
        } else if (a == report) {
            summary = cmd_report(cfg, out);
        } else if (a == sweep) {
            summary = cmd_sweep(cfg, out);
        }
        // Commands that write their payload to --out report a summary on stdout.
        if (a == score || a == filt || (cfg.has("out") && !summary.is_null())) out << summary.dump() << '\n';
        return kExitOk;
    } catch (const Error& e) {
        const bool usage = e.code() == ErrorCode::UsageError || e.code() == ErrorCode::ConfigError;
        return fail(e, usage ? kExitUsage : kExitFailure);
    } catch (const json::exception& e) {
        return fail(Error(ErrorCode::ConfigError, std::string("bad value: ") + e.what()), kExitUsage);
    } catch (const std::exception& e) {
        return fail(Error(ErrorCode::IoError, e.what()), kExitFailure);
    }
}

}  // namespace mtf::cli
