#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "mtf/core.hpp"

namespace mtf::ingest {

namespace fs = std::filesystem;

enum class Format : std::uint8_t { Jsonl, Tsv };
Format parse_format(std::string_view s);

enum class MalformedPolicy : std::uint8_t { Fail, Skip };

/// Which keys (JSONL) or header columns (TSV) carry each pair field. An empty
/// `id` key means ids are synthesized as "shard{n}:{row}".
struct FieldMapping {
    std::string id = "id";
    std::string image = "image";
    std::string caption = "caption";
    std::string dense_caption = "dense_caption";
};

struct PairSource {
    Format format = Format::Jsonl;
    std::vector<fs::path> shards;
    FieldMapping mapping;
    MalformedPolicy on_malformed = MalformedPolicy::Fail;
    IngestConfig ingest;

    void validate() const;
};

/// Single-consumer pull stream of pairs.
class PairReader {
public:
    virtual ~PairReader() = default;
    virtual std::optional<ImageTextPair> next() = 0;
};

/// Reads shards in order, rows in order. Blank lines are ignored; other
/// unparseable rows either throw MalformedRow or are counted and skipped.
class ShardReader final : public PairReader {
public:
    explicit ShardReader(PairSource src);

    std::optional<ImageTextPair> next() override;

    std::uint64_t skipped() const noexcept { return skipped_; }
    std::uint64_t rows_read() const noexcept { return rows_; }

private:
    bool open_next_shard();
    std::optional<ImageTextPair> parse_line(const std::string& line);
    ImageTextPair parse_jsonl(const std::string& line) const;
    ImageTextPair parse_tsv(const std::string& line) const;

    PairSource src_;
    std::size_t shard_index_ = 0;
    bool shard_open_ = false;
    std::ifstream in_;
    std::uint64_t row_ = 0;  // data row within the current shard
    std::uint64_t line_no_ = 0;
    std::uint64_t skipped_ = 0;
    std::uint64_t rows_ = 0;
    std::vector<std::string> tsv_header_;
};

/// Serves pairs from memory.
class VectorReader final : public PairReader {
public:
    explicit VectorReader(std::vector<ImageTextPair> pairs) : pairs_(std::move(pairs)) {}
    std::optional<ImageTextPair> next() override;

private:
    std::vector<ImageTextPair> pairs_;
    std::size_t pos_ = 0;
};

std::unique_ptr<PairReader> open_pair_stream(const PairSource& src);

/// Convenience: open JSONL shards with default mapping and fail policy.
std::unique_ptr<PairReader> open_jsonl(std::vector<fs::path> shards);

std::vector<ImageTextPair> drain(PairReader& reader);

// ---------------------------------------------------------------------------

/// Append-only log of completed pair ids, one per line. Appends are buffered
/// and flushed every `flush_every` ids (and on destruction).
class ProgressLog {
public:
    explicit ProgressLog(fs::path path, std::size_t flush_every = 64);
    ~ProgressLog();

    ProgressLog(const ProgressLog&) = delete;
    ProgressLog& operator=(const ProgressLog&) = delete;

    bool contains(const std::string& id) const { return done_.contains(id); }
    std::size_t size() const noexcept { return done_.size(); }
    const fs::path& path() const noexcept { return path_; }

    /// No-op if the id is already logged.
    void append(const std::string& id);
    void flush();

    /// Reads a log into a set; a trailing partial line (torn write) is ignored.
    static std::unordered_set<std::string> replay(const fs::path& path);

private:
    fs::path path_;
    std::size_t flush_every_;
    std::unordered_set<std::string> done_;
    std::vector<std::string> pending_;
    std::ofstream out_;
};

/// Yields the upstream pairs whose ids are absent from `completed`, in order.
class ResumeFilter final : public PairReader {
public:
    ResumeFilter(PairReader& upstream, std::unordered_set<std::string> completed)
        : upstream_(upstream), completed_(std::move(completed)) {}

    std::optional<ImageTextPair> next() override;
    std::uint64_t skipped() const noexcept { return skipped_; }

private:
    PairReader& upstream_;
    std::unordered_set<std::string> completed_;
    std::uint64_t skipped_ = 0;
};

std::unique_ptr<ResumeFilter> resume_filter(PairReader& upstream, const fs::path& log_path);

// ---------------------------------------------------------------------------

struct WriteOptions {
    std::size_t shard_size = 10000;
    std::string run_id = "run";
    std::string config_digest;
    std::string progress_log;
    std::string shard_prefix = "pairs";
};

/// Writes ceil(N/shard_size) JSONL shards plus manifest.json into `out_dir`.
/// Shard paths in the manifest are relative to `out_dir`.
RunManifest write_pairs(PairReader& pairs, const fs::path& out_dir, const WriteOptions& opts);

RunManifest read_manifest(const fs::path& path);
void write_manifest(const RunManifest& manifest, const fs::path& path);

/// Opens the shards a manifest lists (relative to the manifest's directory).
std::unique_ptr<PairReader> open_manifest(const fs::path& manifest_path);

// ---------------------------------------------------------------------------
// Score JSONL

std::string encode_score_line(const ScoreRecord& r);
ScoreRecord decode_score_line(const std::string& line);

std::vector<ScoreRecord> read_scores(const fs::path& path);
void write_scores(const std::vector<ScoreRecord>& records, const fs::path& path);

/// Visits every score line and returns how many were visited. An unparseable
/// final line with no trailing newline is a torn write: it is skipped and
/// flagged via `torn_tail` when that is non-null, otherwise it throws
/// MalformedRow like any other bad line.
std::uint64_t for_each_score(const fs::path& path, const std::function<void(ScoreRecord)>& visit,
                             bool* torn_tail = nullptr);

/// Generic JSONL helpers.
void for_each_jsonl(const fs::path& path, const std::function<void(const json&, std::uint64_t line)>& visit);
void write_jsonl(const std::vector<json>& rows, const fs::path& path);

}  // namespace mtf::ingest
