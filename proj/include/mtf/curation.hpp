#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtf/core.hpp"
#include "mtf/ingest.hpp"
#include "mtf/prompts.hpp"

namespace mtf::curation {

// ---------------------------------------------------------------------------
// Instruction records

struct InstructionRecord {
    std::string prompt;
    std::string output;
    std::optional<Metric> metric;
    std::string source;
    std::optional<QualityScore> score;

    /// Scoring records must carry both metric and score.
    void validate() const;
    /// "User: {prompt} Assistant: {output}"
    std::string conversation() const;

    friend bool operator==(const InstructionRecord&, const InstructionRecord&) = default;
};

void to_json(json& j, const InstructionRecord& r);
void from_json(const json& j, InstructionRecord& r);

std::vector<InstructionRecord> read_instructions(const std::filesystem::path& path);
void write_instructions(std::span<const InstructionRecord> records, const std::filesystem::path& path);

/// Builds a scoring instruction from a teacher's generation. The score is
/// parsed with the rationalization rule.
InstructionRecord scoring_instruction(Metric metric, std::string prompt, std::string output, std::string source);

// ---------------------------------------------------------------------------
// Teacher jobs

enum class JobKind : std::uint8_t { DenseCaption, Scoring };

struct TeacherJob {
    std::string pair_id;
    scorer::TeacherPath path = scorer::TeacherPath::Vision;
    JobKind kind = JobKind::Scoring;
    std::optional<Metric> metric;
    /// Empty while a dense-caption prerequisite is pending.
    std::string prompt;
    ImageRef image;
    int max_new_tokens = 512;
    bool pending_prerequisite = false;
};

json to_json(const TeacherJob& job);

struct JobOptions {
    scorer::PromptMode mode = scorer::PromptMode::Rationalization;
    int max_new_tokens = 512;
};

/// One scoring job per (pair, metric). On the text-only path a pair without
/// a dense caption first gets a dense-caption job and its scoring jobs are
/// flagged pending.
std::vector<TeacherJob> emit_teacher_jobs(ingest::PairReader& pairs, std::span<const Metric> metrics,
                                          scorer::TeacherPath path, const JobOptions& opts = {});

// ---------------------------------------------------------------------------
// Bucket-balanced sampling

struct SamplerConfig {
    int bucket_count = 10;
    std::size_t target_size = 1000;
    std::size_t downsample_threshold = 130;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Bucket index of a score: 10 buckets of width 10 (100 folds into the
/// last), or 100 buckets of width 1 (100 folds into bucket 99).
int bucket_of(QualityScore s, int bucket_count);

struct SampleReport {
    std::vector<std::size_t> bucket_sizes;
    std::vector<std::size_t> bucket_taken;
    std::size_t kept_small = 0;
    std::size_t large_buckets = 0;
    std::size_t per_bucket = 0;
    /// target_size minus output size when the output falls short.
    std::size_t shortfall = 0;

    json to_json() const;
};

/// Buckets smaller than the threshold are kept whole; each bucket at or above
/// it contributes floor((target - kept) / #large) items drawn without
/// replacement (clamped to its size). Small buckets come first in bucket
/// order, then the large-bucket draws in bucket order; the result is cut to
/// target. Returns positions into `scores`.
std::vector<std::size_t> balanced_sample(std::span<const QualityScore> scores, const SamplerConfig& cfg,
                                         SampleReport* report = nullptr);

// ---------------------------------------------------------------------------
// Mixture

struct MixtureSource {
    std::string pool;
    std::size_t target = 0;
};

struct MixtureSpec {
    std::vector<MixtureSource> sources;
    std::size_t total = 0;

    void validate() const;
    /// 13 pools totalling 50000: the general-purpose instruction tasks plus
    /// 1000 records for each of the four scoring tasks.
    static MixtureSpec defaults();
};

void to_json(json& j, const MixtureSpec& s);
void from_json(const json& j, MixtureSpec& s);

using PoolMap = std::map<std::string, std::vector<InstructionRecord>>;

/// Draws each source's target count without replacement, then shuffles the
/// concatenation. Throws InsufficientPool.
std::vector<InstructionRecord> assemble_mixture(const MixtureSpec& spec, const PoolMap& pools, std::uint64_t seed);

}  // namespace mtf::curation
