#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "wukong/matrix.hpp"

namespace wukong {

struct Grid {
    std::uint32_t h = 0;
    std::uint32_t w = 0;
    std::size_t cells() const { return std::size_t{h} * w; }
};

enum class EmbeddingKind : std::uint8_t { image, text };

// One item's token embeddings: an n_tokens x d matrix, a per-token
// eligibility mask, and (for image towers) the spatial grid shape. Grid cells
// occupy the first h*w rows; any extra rows (e.g. a classification token)
// follow.
template <typename T>
struct EmbeddingSet {
    Mat<T> data;
    std::optional<Grid> grid;
    std::vector<std::uint8_t> mask;
    EmbeddingKind kind = EmbeddingKind::image;

    std::size_t n_tokens() const { return data.rows(); }
    std::size_t dim() const { return data.cols(); }
    std::size_t eligible() const {
        std::size_t n = 0;
        for (auto m : mask) n += (m != 0);
        return n;
    }

    // Throws std::invalid_argument on mask/shape mismatch or grid overflow.
    void validate() const;

    template <typename U>
    EmbeddingSet<U> cast() const {
        return EmbeddingSet<U>{data.template cast<U>(), grid, mask, kind};
    }
};

// Binary embedding container: magic "WKEB", little-endian u32 header
// (version, n_items, n_tokens, dim, grid_h, grid_w), float32 payload of
// n_items*n_tokens*dim values, then n_items*n_tokens mask bytes. grid_h =
// grid_w = 0 means no spatial grid. Writing then reading then writing again
// is byte-identical; readers reject unknown versions.
struct WkebHeader {
    std::uint32_t version = 1;
    std::uint32_t n_items = 0;
    std::uint32_t n_tokens = 0;
    std::uint32_t dim = 0;
    std::uint32_t grid_h = 0;
    std::uint32_t grid_w = 0;
};

struct WkebFile {
    WkebHeader header;
    std::vector<float> data;          // n_items * n_tokens * dim
    std::vector<std::uint8_t> mask;   // n_items * n_tokens

    static WkebFile read(std::istream& in);
    static WkebFile read(const std::string& path);
    void write(std::ostream& out) const;
    void write(const std::string& path) const;

    // Throws std::invalid_argument when payload sizes disagree with the
    // header or a grid overflows n_tokens.
    void validate() const;

    std::size_t n_items() const { return header.n_items; }
    EmbeddingSet<float> item(std::size_t i, EmbeddingKind kind = EmbeddingKind::image) const;
};

extern template struct EmbeddingSet<float>;
extern template struct EmbeddingSet<double>;

}  // namespace wukong
