#include "mtf/curation.hpp"

#include <algorithm>
#include <fstream>

#include "mtf/rng.hpp"

namespace mtf::curation {

// ---------------------------------------------------------------------------

void InstructionRecord::validate() const {
    if (metric.has_value() != score.has_value()) {
        throw Error(ErrorCode::InvalidArgument, "scoring instructions need both metric and score");
    }
}

std::string InstructionRecord::conversation() const { return scorer::format_instruction(prompt, output); }

void to_json(json& j, const InstructionRecord& r) {
    j = json{{"prompt", r.prompt}, {"output", r.output}, {"source", r.source}};
    if (r.metric) j["metric"] = std::string(to_string(*r.metric));
    if (r.score) j["score"] = r.score->value();
}

void from_json(const json& j, InstructionRecord& r) {
    r.prompt = j.at("prompt").get<std::string>();
    r.output = j.at("output").get<std::string>();
    r.source = j.value("source", std::string{});
    r.metric.reset();
    r.score.reset();
    if (auto it = j.find("metric"); it != j.end() && !it->is_null()) r.metric = parse_metric(it->get<std::string>());
    if (auto it = j.find("score"); it != j.end() && !it->is_null()) r.score = QualityScore(it->get<long long>());
    r.validate();
}

std::vector<InstructionRecord> read_instructions(const std::filesystem::path& path) {
    std::vector<InstructionRecord> out;
    ingest::for_each_jsonl(path, [&](const json& j, std::uint64_t line) {
        try {
            out.push_back(j.get<InstructionRecord>());
        } catch (const json::exception& e) {
            throw Error(ErrorCode::MalformedRow, "bad instruction on line " + std::to_string(line) + ": " + e.what(),
                        {{"shard", path.string()}, {"line", line}});
        }
    });
    return out;
}

void write_instructions(std::span<const InstructionRecord> records, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
    for (const auto& r : records) out << canonical_dump(json(r)) << '\n';
    if (!out) throw Error(ErrorCode::IoError, "failed writing '" + path.string() + "'");
}

InstructionRecord scoring_instruction(Metric metric, std::string prompt, std::string output, std::string source) {
    InstructionRecord r;
    r.score = scorer::parse_score(output, scorer::PromptMode::Rationalization);
    r.metric = metric;
    r.prompt = std::move(prompt);
    r.output = std::move(output);
    r.source = std::move(source);
    return r;
}

// ---------------------------------------------------------------------------

json to_json(const TeacherJob& job) {
    json j{{"id", job.pair_id},
           {"kind", job.kind == JobKind::DenseCaption ? "dense_caption" : "scoring"},
           {"path", std::string(scorer::to_string(job.path))},
           {"prompt", job.prompt},
           {"image", job.image},
           {"max_new_tokens", job.max_new_tokens},
           {"pending", job.pending_prerequisite}};
    if (job.metric) j["metric"] = std::string(to_string(*job.metric));
    return j;
}

std::vector<TeacherJob> emit_teacher_jobs(ingest::PairReader& pairs, std::span<const Metric> metrics,
                                          scorer::TeacherPath path, const JobOptions& opts) {
    std::vector<TeacherJob> jobs;
    while (auto pair = pairs.next()) {
        const bool needs_caption = path == scorer::TeacherPath::TextOnly && !pair->dense_caption;
        if (needs_caption) {
            TeacherJob caption;
            caption.pair_id = pair->id;
            caption.path = path;
            caption.kind = JobKind::DenseCaption;
            caption.prompt = std::string(scorer::dense_caption_prompt());
            caption.image = pair->image;
            caption.max_new_tokens = opts.max_new_tokens;
            jobs.push_back(std::move(caption));
        }
        for (Metric m : metrics) {
            TeacherJob job;
            job.pair_id = pair->id;
            job.path = path;
            job.kind = JobKind::Scoring;
            job.metric = m;
            // The text-only teacher never sees pixels; the dense caption stands in.
            if (path == scorer::TeacherPath::Vision) job.image = pair->image;
            job.max_new_tokens = opts.max_new_tokens;
            job.pending_prerequisite = needs_caption;
            if (!needs_caption) job.prompt = scorer::assemble_prompt(m, *pair, opts.mode, path);
            jobs.push_back(std::move(job));
        }
    }
    return jobs;
}

// ---------------------------------------------------------------------------

void SamplerConfig::validate() const {
    if (bucket_count != 10 && bucket_count != 100) {
        throw Error(ErrorCode::InvalidArgument, "bucket_count must be 10 or 100", {{"bucket_count", bucket_count}});
    }
    if (target_size == 0) throw Error(ErrorCode::InvalidArgument, "target_size must be positive");
    if (downsample_threshold == 0) throw Error(ErrorCode::InvalidArgument, "downsample threshold must be positive");
}

int bucket_of(QualityScore s, int bucket_count) {
    const int width = kScoreBins / bucket_count;  // 10 or 1
    return std::min(s.value() / width, bucket_count - 1);
}

json SampleReport::to_json() const {
    return json{{"bucket_sizes", bucket_sizes}, {"bucket_taken", bucket_taken}, {"kept_small", kept_small},
                {"large_buckets", large_buckets}, {"per_bucket", per_bucket},   {"shortfall", shortfall}};
}

std::vector<std::size_t> balanced_sample(std::span<const QualityScore> scores, const SamplerConfig& cfg,
                                         SampleReport* report) {
    cfg.validate();
    const auto nb = static_cast<std::size_t>(cfg.bucket_count);
    std::vector<std::vector<std::size_t>> buckets(nb);
    for (std::size_t i = 0; i < scores.size(); ++i) buckets[static_cast<std::size_t>(bucket_of(scores[i], cfg.bucket_count))].push_back(i);

    std::vector<std::size_t> out;
    std::vector<std::size_t> taken(nb, 0);
    std::size_t large = 0;
    for (std::size_t b = 0; b < nb; ++b) {
        if (buckets[b].size() < cfg.downsample_threshold) {
            out.insert(out.end(), buckets[b].begin(), buckets[b].end());
            taken[b] = buckets[b].size();
        } else {
            ++large;
        }
    }
    const std::size_t kept = out.size();
    std::size_t per_bucket = 0;
    if (large > 0 && kept < cfg.target_size) per_bucket = (cfg.target_size - kept) / large;

    Rng rng(cfg.seed);
    for (std::size_t b = 0; b < nb; ++b) {
        if (buckets[b].size() < cfg.downsample_threshold) continue;
        const auto& bucket = buckets[b];
        const auto picks = rng.sample_indices(bucket.size(), std::min(per_bucket, bucket.size()));
        for (auto p : picks) out.push_back(bucket[p]);
        taken[b] = picks.size();
    }

    if (out.size() > cfg.target_size) {
        // Truncation can only bite into the tail; recount what survived per bucket.
        out.resize(cfg.target_size);
        std::fill(taken.begin(), taken.end(), 0);
        for (auto i : out) ++taken[static_cast<std::size_t>(bucket_of(scores[i], cfg.bucket_count))];
    }

    if (report) {
        report->bucket_sizes.clear();
        for (const auto& b : buckets) report->bucket_sizes.push_back(b.size());
        report->bucket_taken = taken;
        report->kept_small = kept;
        report->large_buckets = large;
        report->per_bucket = per_bucket;
        report->shortfall = cfg.target_size > out.size() ? cfg.target_size - out.size() : 0;
    }
    return out;
}

// ---------------------------------------------------------------------------

void MixtureSpec::validate() const {
    if (sources.empty()) throw Error(ErrorCode::InvalidArgument, "mixture has no sources");
    std::size_t sum = 0;
    for (const auto& s : sources) {
        if (s.pool.empty()) throw Error(ErrorCode::InvalidArgument, "mixture source without a pool name");
        sum += s.target;
    }
    if (sum != total) {
        throw Error(ErrorCode::InvalidArgument,
                    "mixture targets sum to " + std::to_string(sum) + " but total is " + std::to_string(total),
                    {{"sum", sum}, {"total", total}});
    }
}

MixtureSpec MixtureSpec::defaults() {
    MixtureSpec s;
    s.sources = {
        {"visual_conversation", 5000},
        {"complex_reasoning", 16000},
        {"detail_description", 5000},
        {"sharegpt", 10000},
        {"vqav2", 2000},
        {"gqa", 3000},
        {"okvqa", 2000},
        {"ocrvqa", 1000},
        {"textcaps", 2000},
        {"itm_scoring", 1000},
        {"odf_scoring", 1000},
        {"ctq_scoring", 1000},
        {"su_scoring", 1000},
    };
    s.total = 50000;
    return s;
}

void to_json(json& j, const MixtureSpec& s) {
    json sources = json::array();
    for (const auto& src : s.sources) sources.push_back(json{{"pool", src.pool}, {"target", src.target}});
    j = json{{"sources", sources}, {"total", s.total}};
}

void from_json(const json& j, MixtureSpec& s) {
    s.sources.clear();
    std::size_t sum = 0;
    for (const auto& src : j.at("sources")) {
        s.sources.push_back({src.at("pool").get<std::string>(), src.at("target").get<std::size_t>()});
        sum += s.sources.back().target;
    }
    s.total = j.contains("total") ? j.at("total").get<std::size_t>() : sum;
    s.validate();
}

std::vector<InstructionRecord> assemble_mixture(const MixtureSpec& spec, const PoolMap& pools, std::uint64_t seed) {
    spec.validate();
    for (const auto& src : spec.sources) {
        auto it = pools.find(src.pool);
        const std::size_t have = it == pools.end() ? 0 : it->second.size();
        if (have < src.target) {
            throw Error(ErrorCode::InsufficientPool,
                        "pool '" + src.pool + "' has " + std::to_string(have) + " records, needs " + std::to_string(src.target),
                        {{"pool", src.pool}, {"have", have}, {"need", src.target}});
        }
    }
    Rng rng(seed);
    std::vector<InstructionRecord> out;
    out.reserve(spec.total);
    for (const auto& src : spec.sources) {
        const auto& pool = pools.at(src.pool);
        for (auto i : rng.sample_indices(pool.size(), src.target)) {
            out.push_back(pool[i]);
            out.back().source = src.pool;
        }
    }
    rng.shuffle(std::span<InstructionRecord>(out));
    return out;
}

}  // namespace mtf::curation
