#include "mtf/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <set>
#include <sstream>

namespace mtf::ingest {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool is_blank(const std::string& line) {
    return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

void strip_cr(std::string& line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        auto pos = line.find('\t', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

std::string synth_id(std::size_t shard, std::uint64_t row) {
    return "shard" + std::to_string(shard) + ":" + std::to_string(row);
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out | std::ios::trunc) {
    std::ofstream out(path, mode | std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "' for writing", {{"path", path.string()}});
    return out;
}

std::ifstream open_in(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "' for reading", {{"path", path.string()}});
    return in;
}

}  // namespace

Format parse_format(std::string_view s) {
    const auto k = lower(s);
    if (k == "jsonl") return Format::Jsonl;
    if (k == "tsv") return Format::Tsv;
    throw Error(ErrorCode::InvalidArgument, "unknown pair format '" + std::string(s) + "'");
}

void PairSource::validate() const {
    if (shards.empty()) throw Error(ErrorCode::InvalidArgument, "pair source lists no shards");
    std::set<std::string> names;
    std::size_t n = 0;
    for (const auto* name : {&mapping.id, &mapping.image, &mapping.caption, &mapping.dense_caption}) {
        if (name->empty()) continue;
        names.insert(*name);
        ++n;
    }
    if (names.size() != n) throw Error(ErrorCode::InvalidArgument, "field mapping names must be distinct");
    if (mapping.caption.empty()) throw Error(ErrorCode::InvalidArgument, "field mapping needs a caption key");
}

// ---------------------------------------------------------------------------

ShardReader::ShardReader(PairSource src) : src_(std::move(src)) { src_.validate(); }

bool ShardReader::open_next_shard() {
    if (shard_index_ >= src_.shards.size()) return false;
    const auto& path = src_.shards[shard_index_];
    in_ = open_in(path);
    shard_open_ = true;
    row_ = 0;
    line_no_ = 0;
    tsv_header_.clear();
    if (src_.format == Format::Tsv) {
        std::string header;
        if (std::getline(in_, header)) {
            ++line_no_;
            strip_cr(header);
            tsv_header_ = split_tabs(header);
        }
    }
    return true;
}

std::optional<ImageTextPair> ShardReader::next() {
    for (;;) {
        if (!shard_open_ && !open_next_shard()) return std::nullopt;
        std::string line;
        if (!std::getline(in_, line)) {
            if (in_.bad()) {
                throw Error(ErrorCode::IoError, "read failure on '" + src_.shards[shard_index_].string() + "'");
            }
            in_.close();
            shard_open_ = false;
            ++shard_index_;
            continue;
        }
        ++line_no_;
        strip_cr(line);
        if (is_blank(line)) continue;
        if (auto pair = parse_line(line)) return pair;
    }
}

std::optional<ImageTextPair> ShardReader::parse_line(const std::string& line) {
    const std::uint64_t row = row_++;
    ++rows_;
    try {
        ImageTextPair p = src_.format == Format::Jsonl ? parse_jsonl(line) : parse_tsv(line);
        if (p.id.empty() && src_.mapping.id.empty()) p.id = synth_id(shard_index_, row);
        validate_pair(p, src_.ingest);
        return p;
    } catch (const Error& e) {
        if (src_.on_malformed == MalformedPolicy::Skip) {
            ++skipped_;
            return std::nullopt;
        }
        if (e.code() == ErrorCode::EmptyId || e.code() == ErrorCode::EmptyCaption) throw;
        throw Error(ErrorCode::MalformedRow,
                    "malformed row " + std::to_string(row) + " in '" + src_.shards[shard_index_].string() + "': " + e.what(),
                    {{"shard", src_.shards[shard_index_].string()}, {"row", row}, {"line", line_no_}});
    } catch (const json::exception& e) {
        if (src_.on_malformed == MalformedPolicy::Skip) {
            ++skipped_;
            return std::nullopt;
        }
        throw Error(ErrorCode::MalformedRow,
                    "malformed row " + std::to_string(row) + " in '" + src_.shards[shard_index_].string() + "': " + e.what(),
                    {{"shard", src_.shards[shard_index_].string()}, {"row", row}, {"line", line_no_}});
    }
}

ImageTextPair ShardReader::parse_jsonl(const std::string& line) const {
    const json j = json::parse(line);
    if (!j.is_object()) throw Error(ErrorCode::MalformedRow, "row is not a JSON object");
    const auto& m = src_.mapping;
    ImageTextPair p;
    if (!m.id.empty()) {
        auto it = j.find(m.id);
        if (it == j.end() || it->is_null()) {
            p.id = synth_id(shard_index_, row_ - 1);
        } else if (it->is_string()) {
            p.id = it->get<std::string>();
        } else if (it->is_number_integer()) {
            p.id = it->dump();
        } else {
            throw Error(ErrorCode::MalformedRow, "id field has unsupported type");
        }
    }
    if (auto it = j.find(m.caption); it != j.end() && it->is_string()) {
        p.caption = it->get<std::string>();
    } else {
        throw Error(ErrorCode::MalformedRow, "missing caption field '" + m.caption + "'");
    }
    if (!m.image.empty()) {
        if (auto it = j.find(m.image); it != j.end()) p.image = it->get<ImageRef>();
    }
    if (!m.dense_caption.empty()) {
        if (auto it = j.find(m.dense_caption); it != j.end() && !it->is_null()) p.dense_caption = it->get<std::string>();
    }
    return p;
}

ImageTextPair ShardReader::parse_tsv(const std::string& line) const {
    const auto cells = split_tabs(line);
    if (cells.size() != tsv_header_.size()) {
        throw Error(ErrorCode::MalformedRow, "expected " + std::to_string(tsv_header_.size()) + " columns, got " +
                                                 std::to_string(cells.size()));
    }
    auto column = [&](const std::string& name) -> const std::string* {
        if (name.empty()) return nullptr;
        auto it = std::find(tsv_header_.begin(), tsv_header_.end(), name);
        if (it == tsv_header_.end()) return nullptr;
        return &cells[static_cast<std::size_t>(it - tsv_header_.begin())];
    };
    const auto& m = src_.mapping;
    ImageTextPair p;
    if (const auto* id = column(m.id); id && !id->empty()) {
        p.id = *id;
    } else {
        p.id = synth_id(shard_index_, row_ - 1);
    }
    const auto* caption = column(m.caption);
    if (!caption) throw Error(ErrorCode::MalformedRow, "missing caption column '" + m.caption + "'");
    p.caption = *caption;
    if (const auto* image = column(m.image)) p.image = ImageRef::infer(*image);
    if (const auto* dense = column(m.dense_caption); dense && !dense->empty()) p.dense_caption = *dense;
    return p;
}

std::optional<ImageTextPair> VectorReader::next() {
    if (pos_ >= pairs_.size()) return std::nullopt;
    return pairs_[pos_++];
}

std::unique_ptr<PairReader> open_pair_stream(const PairSource& src) { return std::make_unique<ShardReader>(src); }

std::unique_ptr<PairReader> open_jsonl(std::vector<fs::path> shards) {
    PairSource src;
    src.shards = std::move(shards);
    return open_pair_stream(src);
}

std::vector<ImageTextPair> drain(PairReader& reader) {
    std::vector<ImageTextPair> out;
    while (auto p = reader.next()) out.push_back(std::move(*p));
    return out;
}

// ---------------------------------------------------------------------------

ProgressLog::ProgressLog(fs::path path, std::size_t flush_every)
    : path_(std::move(path)), flush_every_(std::max<std::size_t>(1, flush_every)) {
    if (fs::exists(path_)) done_ = replay(path_);
    // Rewrite the log without a torn tail so appends start on a clean line.
    if (fs::exists(path_)) {
        std::string content;
        {
            auto in = open_in(path_);
            std::ostringstream ss;
            ss << in.rdbuf();
            content = ss.str();
        }
        if (!content.empty() && content.back() != '\n') {
            content.erase(content.rfind('\n') == std::string::npos ? 0 : content.rfind('\n') + 1);
            auto out = open_out(path_);
            out << content;
        }
    }
    out_ = open_out(path_, std::ios::out | std::ios::app);
}

ProgressLog::~ProgressLog() {
    try {
        flush();
    } catch (...) {
    }
}

void ProgressLog::append(const std::string& id) {
    if (!done_.insert(id).second) return;
    pending_.push_back(id);
    if (pending_.size() >= flush_every_) flush();
}

void ProgressLog::flush() {
    if (pending_.empty()) return;
    for (const auto& id : pending_) out_ << id << '\n';
    out_.flush();
    if (!out_) throw Error(ErrorCode::IoError, "failed writing progress log '" + path_.string() + "'");
    pending_.clear();
}

std::unordered_set<std::string> ProgressLog::replay(const fs::path& path) {
    std::unordered_set<std::string> ids;
    if (!fs::exists(path)) return ids;
    auto in = open_in(path);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::size_t start = 0;
    for (;;) {
        auto nl = content.find('\n', start);
        if (nl == std::string::npos) break;  // anything after the last newline is torn
        std::string id = content.substr(start, nl - start);
        strip_cr(id);
        if (!id.empty()) ids.insert(std::move(id));
        start = nl + 1;
    }
    return ids;
}

std::optional<ImageTextPair> ResumeFilter::next() {
    while (auto p = upstream_.next()) {
        if (completed_.contains(p->id)) {
            ++skipped_;
            continue;
        }
        return p;
    }
    return std::nullopt;
}

std::unique_ptr<ResumeFilter> resume_filter(PairReader& upstream, const fs::path& log_path) {
    return std::make_unique<ResumeFilter>(upstream, ProgressLog::replay(log_path));
}

// ---------------------------------------------------------------------------

RunManifest write_pairs(PairReader& pairs, const fs::path& out_dir, const WriteOptions& opts) {
    if (opts.shard_size == 0) throw Error(ErrorCode::InvalidArgument, "shard_size must be positive");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create '" + out_dir.string() + "': " + ec.message());

    RunManifest manifest;
    manifest.run_id = opts.run_id;
    manifest.config_digest = opts.config_digest;
    manifest.progress_log = opts.progress_log;

    std::ofstream out;
    std::uint64_t in_shard = 0;
    auto close_shard = [&] {
        if (!out.is_open()) return;
        out.flush();
        if (!out) throw Error(ErrorCode::IoError, "failed writing shard '" + manifest.shards.back().path + "'");
        out.close();
    };
    while (auto p = pairs.next()) {
        if (!out.is_open() || in_shard == opts.shard_size) {
            close_shard();
            char name[64];
            std::snprintf(name, sizeof name, "%s-%05zu.jsonl", opts.shard_prefix.c_str(), manifest.shards.size());
            manifest.shards.push_back({name, 0});
            out = open_out(out_dir / name);
            in_shard = 0;
        }
        out << canonical_dump(json(*p)) << '\n';
        ++in_shard;
        ++manifest.shards.back().count;
    }
    close_shard();
    write_manifest(manifest, out_dir / "manifest.json");
    return manifest;
}

RunManifest read_manifest(const fs::path& path) {
    auto in = open_in(path);
    try {
        return json::parse(in).get<RunManifest>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::IoError, "invalid manifest '" + path.string() + "': " + e.what());
    }
}

void write_manifest(const RunManifest& manifest, const fs::path& path) {
    auto out = open_out(path);
    out << json(manifest).dump(2) << '\n';
    if (!out) throw Error(ErrorCode::IoError, "failed writing manifest '" + path.string() + "'");
}

std::unique_ptr<PairReader> open_manifest(const fs::path& manifest_path) {
    const auto manifest = read_manifest(manifest_path);
    std::vector<fs::path> shards;
    for (const auto& s : manifest.shards) shards.push_back(manifest_path.parent_path() / s.path);
    if (shards.empty()) return std::make_unique<VectorReader>(std::vector<ImageTextPair>{});
    return open_jsonl(std::move(shards));
}

// ---------------------------------------------------------------------------

std::string encode_score_line(const ScoreRecord& r) { return canonical_dump(json(r)); }

ScoreRecord decode_score_line(const std::string& line) {
    try {
        return json::parse(line).get<ScoreRecord>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedRow, std::string("bad score line: ") + e.what());
    } catch (const Error& e) {
        throw Error(ErrorCode::MalformedRow, std::string("bad score line: ") + e.what(), e.to_json());
    }
}

std::uint64_t for_each_score(const fs::path& path, const std::function<void(ScoreRecord)>& visit, bool* torn_tail) {
    if (torn_tail) *torn_tail = false;
    auto in = open_in(path);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::uint64_t visited = 0;
    std::uint64_t line_no = 0;
    std::size_t start = 0;
    while (start < content.size()) {
        auto nl = content.find('\n', start);
        const bool last = nl == std::string::npos;
        std::string line = content.substr(start, last ? std::string::npos : nl - start);
        start = last ? content.size() : nl + 1;
        ++line_no;
        strip_cr(line);
        if (is_blank(line)) continue;
        ScoreRecord r;
        try {
            r = decode_score_line(line);
        } catch (const std::exception& e) {
            if (last && torn_tail) {
                *torn_tail = true;
                break;
            }
            throw Error(ErrorCode::MalformedRow,
                        "bad score line " + std::to_string(line_no) + " in '" + path.string() + "': " + e.what(),
                        {{"shard", path.string()}, {"line", line_no}});
        }
        visit(std::move(r));
        ++visited;
    }
    return visited;
}

std::vector<ScoreRecord> read_scores(const fs::path& path) {
    std::vector<ScoreRecord> out;
    for_each_score(path, [&](ScoreRecord r) { out.push_back(std::move(r)); });
    return out;
}

void write_scores(const std::vector<ScoreRecord>& records, const fs::path& path) {
    auto out = open_out(path);
    for (const auto& r : records) out << encode_score_line(r) << '\n';
    if (!out) throw Error(ErrorCode::IoError, "failed writing '" + path.string() + "'");
}

void for_each_jsonl(const fs::path& path, const std::function<void(const json&, std::uint64_t)>& visit) {
    auto in = open_in(path);
    std::string line;
    std::uint64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        strip_cr(line);
        if (is_blank(line)) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw Error(ErrorCode::MalformedRow, "bad JSON on line " + std::to_string(line_no) + " of '" + path.string() + "'",
                        {{"shard", path.string()}, {"line", line_no}});
        }
        visit(j, line_no);
    }
}

void write_jsonl(const std::vector<json>& rows, const fs::path& path) {
    auto out = open_out(path);
    for (const auto& r : rows) out << canonical_dump(r) << '\n';
    if (!out) throw Error(ErrorCode::IoError, "failed writing '" + path.string() + "'");
}

}  // namespace mtf::ingest
