#include "wukong/embedding.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace wukong {

static_assert(sizeof(float) == 4, "WKEB stores 4-byte IEEE floats");
static_assert(std::endian::native == std::endian::little,
              "WKEB payloads are little-endian; add byte swapping before building elsewhere");

namespace {

constexpr char kMagic[4] = {'W', 'K', 'E', 'B'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t get_u32(std::istream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    if (!in) throw std::runtime_error("embedding file truncated in header");
    return v;
}

}  // namespace

template <typename T>
void EmbeddingSet<T>::validate() const {
    if (mask.size() != data.rows())
        throw std::invalid_argument("embedding set: mask length != token count");
    if (grid && grid->cells() > data.rows())
        throw std::invalid_argument("embedding set: grid cells exceed token count");
    if (data.cols() == 0) throw std::invalid_argument("embedding set: zero dimension");
}

template struct EmbeddingSet<float>;
template struct EmbeddingSet<double>;

void WkebFile::validate() const {
    const std::size_t want =
        std::size_t{header.n_items} * header.n_tokens * header.dim;
    if (data.size() != want)
        throw std::invalid_argument("embedding file: payload size mismatch");
    if (mask.size() != std::size_t{header.n_items} * header.n_tokens)
        throw std::invalid_argument("embedding file: mask size mismatch");
    const bool has_grid = header.grid_h != 0 || header.grid_w != 0;
    if (has_grid) {
        if (header.grid_h == 0 || header.grid_w == 0)
            throw std::invalid_argument("embedding file: degenerate grid");
        if (std::size_t{header.grid_h} * header.grid_w > header.n_tokens)
            throw std::invalid_argument("embedding file: grid cells exceed token count");
    }
}

WkebFile WkebFile::read(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("not an embedding file (bad magic)");
    WkebFile f;
    f.header.version = get_u32(in);
    if (f.header.version != kVersion)
        throw std::runtime_error("embedding file: unsupported version " +
                                 std::to_string(f.header.version));
    f.header.n_items = get_u32(in);
    f.header.n_tokens = get_u32(in);
    f.header.dim = get_u32(in);
    f.header.grid_h = get_u32(in);
    f.header.grid_w = get_u32(in);

    const std::size_t n =
        std::size_t{f.header.n_items} * f.header.n_tokens * f.header.dim;
    constexpr std::size_t kMaxElements = std::size_t{1} << 31;
    if (n > kMaxElements) throw std::runtime_error("embedding file: implausible size");
    f.data.resize(n);
    in.read(reinterpret_cast<char*>(f.data.data()), static_cast<std::streamsize>(n * 4));
    if (!in && n > 0) throw std::runtime_error("embedding file truncated in payload");
    f.mask.resize(std::size_t{f.header.n_items} * f.header.n_tokens);
    in.read(reinterpret_cast<char*>(f.mask.data()), static_cast<std::streamsize>(f.mask.size()));
    if (!in && !f.mask.empty()) throw std::runtime_error("embedding file truncated in mask");
    f.validate();
    return f;
}

WkebFile WkebFile::read(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open embedding file: " + path);
    try {
        return read(in);
    } catch (const std::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

void WkebFile::write(std::ostream& out) const {
    validate();
    out.write(kMagic, 4);
    put_u32(out, header.version);
    put_u32(out, header.n_items);
    put_u32(out, header.n_tokens);
    put_u32(out, header.dim);
    put_u32(out, header.grid_h);
    put_u32(out, header.grid_w);
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * 4));
    out.write(reinterpret_cast<const char*>(mask.data()),
              static_cast<std::streamsize>(mask.size()));
    if (!out) throw std::runtime_error("embedding file: write failed");
}

void WkebFile::write(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot create embedding file: " + path);
    write(out);
}

EmbeddingSet<float> WkebFile::item(std::size_t i, EmbeddingKind kind) const {
    if (i >= header.n_items) throw std::out_of_range("embedding file: item index out of range");
    EmbeddingSet<float> set;
    set.kind = kind;
    set.data = Mat<float>(header.n_tokens, header.dim);
    const std::size_t stride = std::size_t{header.n_tokens} * header.dim;
    std::memcpy(set.data.data(), data.data() + i * stride, stride * 4);
    set.mask.assign(mask.begin() + static_cast<std::ptrdiff_t>(i * header.n_tokens),
                    mask.begin() + static_cast<std::ptrdiff_t>((i + 1) * header.n_tokens));
    if (header.grid_h != 0 || header.grid_w != 0) set.grid = Grid{header.grid_h, header.grid_w};
    return set;
}

}  // namespace wukong
