#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mtf/core.hpp"
#include "mtf/scorer.hpp"

namespace mtf::scorer {

/// Precomputed (image, text) embedding pairs keyed by pair id. Rows are stored
/// contiguously; every vector has the same dimension.
///
/// On disk (little-endian): "MTEB", u32 version=1, u32 d, u64 n, then n
/// records of u16 id_len, id bytes, d float32 image, d float32 text.
class EmbeddingTable {
public:
    explicit EmbeddingTable(std::uint32_t dim = 0) : dim_(dim) {}

    std::uint32_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return ids_.size(); }
    const std::vector<std::string>& ids() const noexcept { return ids_; }

    /// Throws DimensionMismatch, NonFiniteEmbedding, or InvalidArgument (duplicate id).
    void add(std::string id, std::span<const float> image, std::span<const float> text);

    std::span<const float> image(std::size_t row) const;
    std::span<const float> text(std::size_t row) const;
    /// Row index of an id, or -1.
    std::ptrdiff_t find(const std::string& id) const;

    /// Row-major n x d matrix of the text vectors.
    std::vector<double> text_matrix() const;

    static EmbeddingTable load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

private:
    std::uint32_t dim_;
    std::vector<std::string> ids_;
    std::vector<float> image_;
    std::vector<float> text_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Plain cosine similarity. Throws DimensionMismatch or ZeroVector.
double cosine_similarity(std::span<const float> u, std::span<const float> v);
double cosine_similarity(std::span<const double> u, std::span<const double> v);

/// 100 * max(0, cos) before rounding; the baseline's real-valued score.
double scaled_cosine(std::span<const float> u, std::span<const float> v);

/// round(100 * max(0, cos(u, v))), half away from zero.
QualityScore cosine_score(std::span<const float> u, std::span<const float> v);
QualityScore cosine_score(std::span<const double> u, std::span<const double> v);

/// Embedding-cosine baseline behind the backend interface: every metric gets
/// the same image/text cosine score. Unknown ids get no result.
class CosineBackend final : public ScorerBackend {
public:
    explicit CosineBackend(EmbeddingTable table) : table_(std::move(table)) {}

    HealthInfo health() override { return {"ok", "cosine-baseline"}; }
    std::vector<ScoreResult> score(std::span<const ScoreRequest> batch) override;

private:
    EmbeddingTable table_;
};

}  // namespace mtf::scorer
