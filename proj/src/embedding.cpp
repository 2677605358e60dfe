#include "mtf/embedding.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace mtf::scorer {

static_assert(std::endian::native == std::endian::little, "embedding table IO assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'M', 'T', 'E', 'B'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof value);
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
    T value{};
    if (!in.read(reinterpret_cast<char*>(&value), sizeof value)) {
        throw Error(ErrorCode::IoError, "truncated embedding table '" + path.string() + "'");
    }
    return value;
}

template <typename T>
double cosine_impl(std::span<const T> u, std::span<const T> v) {
    if (u.size() != v.size()) {
        throw Error(ErrorCode::DimensionMismatch,
                    "vector dimensions differ: " + std::to_string(u.size()) + " vs " + std::to_string(v.size()));
    }
    double dot = 0.0, uu = 0.0, vv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double a = u[i], b = v[i];
        dot += a * b;
        uu += a * a;
        vv += b * b;
    }
    if (uu == 0.0 || vv == 0.0) throw Error(ErrorCode::ZeroVector, "cosine of a zero vector is undefined");
    const double c = dot / (std::sqrt(uu) * std::sqrt(vv));
    return std::clamp(c, -1.0, 1.0);
}

QualityScore to_score(double cos) { return QualityScore(std::llround(100.0 * std::max(0.0, cos))); }

}  // namespace

void EmbeddingTable::add(std::string id, std::span<const float> image, std::span<const float> text) {
    if (ids_.empty() && dim_ == 0) dim_ = static_cast<std::uint32_t>(image.size());
    if (image.size() != dim_ || text.size() != dim_) {
        throw Error(ErrorCode::DimensionMismatch, "embedding for '" + id + "' does not have dimension " + std::to_string(dim_));
    }
    for (auto span : {image, text}) {
        for (float x : span) {
            if (!std::isfinite(x)) throw Error(ErrorCode::NonFiniteEmbedding, "non-finite embedding for '" + id + "'", {{"id", id}});
        }
    }
    if (id.size() > 0xFFFF) throw Error(ErrorCode::InvalidArgument, "id longer than 65535 bytes");
    if (index_.contains(id)) throw Error(ErrorCode::InvalidArgument, "duplicate embedding id '" + id + "'");
    index_.emplace(id, ids_.size());
    ids_.push_back(std::move(id));
    image_.insert(image_.end(), image.begin(), image.end());
    text_.insert(text_.end(), text.begin(), text.end());
}

std::span<const float> EmbeddingTable::image(std::size_t row) const {
    return std::span<const float>(image_).subspan(row * dim_, dim_);
}

std::span<const float> EmbeddingTable::text(std::size_t row) const {
    return std::span<const float>(text_).subspan(row * dim_, dim_);
}

std::ptrdiff_t EmbeddingTable::find(const std::string& id) const {
    auto it = index_.find(id);
    return it == index_.end() ? -1 : static_cast<std::ptrdiff_t>(it->second);
}

std::vector<double> EmbeddingTable::text_matrix() const { return {text_.begin(), text_.end()}; }

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open embedding table '" + path.string() + "'");
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
        throw Error(ErrorCode::IoError, "'" + path.string() + "' is not an MTEB embedding table");
    }
    const auto version = get<std::uint32_t>(in, path);
    if (version != kVersion) throw Error(ErrorCode::IoError, "unsupported embedding table version " + std::to_string(version));
    const auto dim = get<std::uint32_t>(in, path);
    const auto n = get<std::uint64_t>(in, path);
    EmbeddingTable table(dim);
    std::vector<float> image(dim), text(dim);
    for (std::uint64_t i = 0; i < n; ++i) {
        const auto len = get<std::uint16_t>(in, path);
        std::string id(len, '\0');
        if (!in.read(id.data(), len)) throw Error(ErrorCode::IoError, "truncated embedding table '" + path.string() + "'");
        const auto bytes = static_cast<std::streamsize>(dim * sizeof(float));
        if (!in.read(reinterpret_cast<char*>(image.data()), bytes) || !in.read(reinterpret_cast<char*>(text.data()), bytes)) {
            throw Error(ErrorCode::IoError, "truncated embedding table '" + path.string() + "'");
        }
        table.add(std::move(id), image, text);
    }
    return table;
}

void EmbeddingTable::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write embedding table '" + path.string() + "'");
    out.write(kMagic, 4);
    put<std::uint32_t>(out, kVersion);
    put<std::uint32_t>(out, dim_);
    put<std::uint64_t>(out, ids_.size());
    for (std::size_t row = 0; row < ids_.size(); ++row) {
        put<std::uint16_t>(out, static_cast<std::uint16_t>(ids_[row].size()));
        out.write(ids_[row].data(), static_cast<std::streamsize>(ids_[row].size()));
        out.write(reinterpret_cast<const char*>(image(row).data()), static_cast<std::streamsize>(dim_ * sizeof(float)));
        out.write(reinterpret_cast<const char*>(text(row).data()), static_cast<std::streamsize>(dim_ * sizeof(float)));
    }
    if (!out) throw Error(ErrorCode::IoError, "failed writing embedding table '" + path.string() + "'");
}

double cosine_similarity(std::span<const float> u, std::span<const float> v) { return cosine_impl(u, v); }
double cosine_similarity(std::span<const double> u, std::span<const double> v) { return cosine_impl(u, v); }

double scaled_cosine(std::span<const float> u, std::span<const float> v) {
    return 100.0 * std::max(0.0, cosine_impl(u, v));
}

QualityScore cosine_score(std::span<const float> u, std::span<const float> v) { return to_score(cosine_impl(u, v)); }
QualityScore cosine_score(std::span<const double> u, std::span<const double> v) { return to_score(cosine_impl(u, v)); }

std::vector<ScoreResult> CosineBackend::score(std::span<const ScoreRequest> batch) {
    std::vector<ScoreResult> out;
    out.reserve(batch.size());
    for (const auto& req : batch) {
        const auto row = table_.find(req.pair_id);
        if (row < 0) continue;  // missing result; the batch layer reports it
        const auto s = cosine_score(table_.image(static_cast<std::size_t>(row)), table_.text(static_cast<std::size_t>(row)));
        out.push_back({req.pair_id, req.metric, std::to_string(s.value()), "cosine-baseline"});
    }
    return out;
}

}  // namespace mtf::scorer
