#include "wukong/model.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace wukong::model {

void ModelConfig::validate() const {
    text.validate();
    if (image_dim == 0 || embed_dim == 0)
        throw std::invalid_argument("model config: zero image_dim/embed_dim");
    if (mode == align::SimilarityMode::reduced && reduced_tokens == 0)
        throw std::invalid_argument("model config: reduced mode needs reduced_tokens > 0");
}

std::vector<std::uint8_t> text_content_mask(const tokenizer::TokenSequence& seq) {
    std::vector<std::uint8_t> m(seq.ids.size(), 0);
    for (std::size_t p = seq.cls_pos + 1; p < seq.sep_pos; ++p) m[p] = 1;
    return m;
}

template <typename T>
void ModelParams<T>::init(const ModelConfig& config, std::mt19937_64& rng) {
    config.validate();
    cfg = config;
    text.init(cfg.text, rng);
    text_head.init(cfg.text.width, cfg.embed_dim, rng);
    image_head.init(cfg.image_dim, cfg.embed_dim, rng);
    if (cfg.mode == align::SimilarityMode::reduced)
        reducer.init(cfg.image_dim, cfg.reducer_mid_dim(), cfg.reduced_tokens, rng);
    log_tau = Mat<T>(1, 1, static_cast<T>(std::log(loss::kInitialTemperature)));
    g_log_tau = Mat<T>(1, 1);
}

template <typename T>
void ModelParams<T>::zero_grads() {
    text.zero_grads();
    text_head.zero_grad();
    image_head.zero_grad();
    reducer.zero_grad();
    g_log_tau.zero();
}

template <typename T>
void ModelParams<T>::clamp_tau() {
    const T lo = static_cast<T>(std::log(loss::kTauMin));
    const T hi = static_cast<T>(std::log(loss::kTauMax));
    T& v = log_tau[0][0];
    if (v < lo) v = lo;
    if (v > hi) v = hi;
}

template <typename T>
void ModelParams<T>::visit_params(const ParamVisitor& fn) {
    text.visit_params(fn, "text.");
    fn("text_head.weight", &text_head.weight, &text_head.grad, true);
    fn("image_head.weight", &image_head.weight, &image_head.grad, true);
    if (cfg.mode == align::SimilarityMode::reduced) {
        fn("reducer.conv1.weight", &reducer.conv1_w, &reducer.g_conv1_w, true);
        fn("reducer.conv1.bias", &reducer.conv1_b, &reducer.g_conv1_b, false);
        fn("reducer.conv2.weight", &reducer.conv2_w, &reducer.g_conv2_w, true);
        fn("reducer.conv2.bias", &reducer.conv2_b, &reducer.g_conv2_b, false);
    }
    fn("temperature.log_tau", &log_tau, &g_log_tau, false);
}

template <typename T>
TextForward<T> ModelParams<T>::text_forward(const tokenizer::TokenSequence& seq,
                                            bool want_grad) const {
    TextForward<T> out;
    out.seq = seq;
    out.encoded = text.forward(seq, want_grad ? &out.enc_cache : nullptr);
    EmbeddingSet<T> pre = out.encoded;
    if (cfg.mode == align::SimilarityMode::global) {
        std::vector<std::uint8_t> m(seq.ids.size(), 0);
        m[seq.sep_pos] = 1;
        pre.mask = std::move(m);
    } else {
        pre.mask = text_content_mask(seq);
    }
    out.projected = align::l2_project(pre, text_head, &out.proj_cache);
    return out;
}

template <typename T>
ImageForward<T> ModelParams<T>::image_forward(const EmbeddingSet<T>& raw) const {
    ImageForward<T> out;
    switch (cfg.mode) {
        case align::SimilarityMode::global: {
            EmbeddingSet<T> one;
            one.data = align::image_global_row(raw);
            one.mask = {1};
            one.kind = EmbeddingKind::image;
            out.pre_projection = std::move(one);
            break;
        }
        case align::SimilarityMode::tokenwise:
            out.pre_projection = raw;
            break;
        case align::SimilarityMode::reduced:
            out.pre_projection = align::token_reduce(raw, reducer, &out.reduce_cache);
            break;
    }
    out.projected = align::l2_project(out.pre_projection, image_head, &out.proj_cache);
    return out;
}

template <typename T>
Mat<T> ModelParams<T>::global_text_feature(const tokenizer::TokenSequence& seq) const {
    EmbeddingSet<T> enc = text.forward(seq);
    std::vector<std::uint8_t> m(seq.ids.size(), 0);
    m[seq.sep_pos] = 1;
    enc.mask = std::move(m);
    const EmbeddingSet<T> proj = align::l2_project(enc, text_head);
    Mat<T> row(1, cfg.embed_dim);
    for (std::size_t j = 0; j < cfg.embed_dim; ++j) row[0][j] = proj.data[seq.sep_pos][j];
    return row;
}

template <typename T>
Mat<T> ModelParams<T>::global_image_feature(const EmbeddingSet<T>& raw) const {
    EmbeddingSet<T> one;
    one.data = align::image_global_row(raw);
    one.mask = {1};
    one.kind = EmbeddingKind::image;
    return align::l2_project(one, image_head).data;
}

template <typename T>
void ModelParams<T>::text_backward(TextForward<T>& fwd, const Mat<T>& d_projected) {
    Mat<T> d_enc = align::l2_project_backward(fwd.proj_cache, text_head, d_projected);
    text.backward(fwd.seq, fwd.enc_cache, d_enc);
}

template <typename T>
void ModelParams<T>::image_backward(ImageForward<T>& fwd, const Mat<T>& d_projected) {
    Mat<T> d_pre = align::l2_project_backward(fwd.proj_cache, image_head, d_projected);
    // The image tower is frozen, so the gradient stops at the reducer input.
    if (cfg.mode == align::SimilarityMode::reduced)
        align::token_reduce_backward(fwd.reduce_cache, reducer, d_pre);
}

template <typename T>
loss::BatchSimilarities<T> batch_similarities(const std::vector<EmbeddingSet<T>>& img,
                                              const std::vector<EmbeddingSet<T>>& txt,
                                              align::SimilarityMode /*mode*/,
                                              std::vector<align::TokenwiseCache<T>>* caches) {
    // Projected global features are single-row sets, for which the
    // late-interaction score degenerates to the plain inner product, so one
    // kernel serves every mode here.
    loss::BatchSimilarities<T> out;
    out.s_image = Mat<T>(img.size(), txt.size());
    out.s_text = Mat<T>(txt.size(), img.size());
    if (caches) caches->assign(img.size() * txt.size(), align::TokenwiseCache<T>{});
    for (std::size_t i = 0; i < img.size(); ++i) {
        for (std::size_t j = 0; j < txt.size(); ++j) {
            align::TokenwiseCache<T>* cache = caches ? &(*caches)[i * txt.size() + j] : nullptr;
            const auto ps = align::tokenwise_similarity(img[i], txt[j], cache);
            out.s_image[i][j] = ps.s_image;
            out.s_text[j][i] = ps.s_text;
        }
    }
    return out;
}

// --- checkpointing --------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'W', 'K', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kMaxNameLen = 4096;
constexpr std::size_t kMaxElements = std::size_t{1} << 31;

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
    put_u32(out, static_cast<std::uint32_t>(v));
    put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

void put_u8(std::ostream& out, std::uint8_t v) {
    out.write(reinterpret_cast<const char*>(&v), 1);
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) |
           (std::uint32_t{b[3]} << 24);
}

std::uint64_t get_u64(std::istream& in) {
    const std::uint64_t lo = get_u32(in);
    const std::uint64_t hi = get_u32(in);
    return lo | (hi << 32);
}

std::uint8_t get_u8(std::istream& in) {
    char c;
    in.read(&c, 1);
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    return static_cast<std::uint8_t>(c);
}

void put_tensor(std::ostream& out, const std::string& name, const Mat<float>& m) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<std::uint32_t>(m.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.cols()));
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(m.size() * sizeof(float)));
}

struct RawTensor {
    std::string name;
    Mat<float> value;
};

RawTensor get_tensor(std::istream& in) {
    RawTensor t;
    const std::uint32_t name_len = get_u32(in);
    if (name_len == 0 || name_len > kMaxNameLen)
        throw std::runtime_error("checkpoint: bad tensor name length");
    t.name.resize(name_len);
    in.read(t.name.data(), name_len);
    const std::uint32_t rows = get_u32(in);
    const std::uint32_t cols = get_u32(in);
    if (std::size_t{rows} * cols > kMaxElements)
        throw std::runtime_error("checkpoint: tensor too large");
    t.value = Mat<float>(rows, cols);
    in.read(reinterpret_cast<char*>(t.value.data()),
            static_cast<std::streamsize>(t.value.size() * sizeof(float)));
    if (!in) throw std::runtime_error("checkpoint: truncated tensor payload");
    return t;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams<float>& params,
                     const OptState* opt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot open for writing: " + path);

    out.write(kMagic, 4);
    put_u32(out, kVersion);
    const ModelConfig& c = params.cfg;
    put_u32(out, static_cast<std::uint32_t>(c.text.n_layers));
    put_u32(out, static_cast<std::uint32_t>(c.text.n_heads));
    put_u32(out, static_cast<std::uint32_t>(c.text.width));
    put_u32(out, static_cast<std::uint32_t>(c.text.max_len));
    put_u32(out, static_cast<std::uint32_t>(c.text.vocab_size));
    put_u8(out, c.text.final_layer_norm ? 1 : 0);
    put_u32(out, static_cast<std::uint32_t>(c.image_dim));
    put_u32(out, static_cast<std::uint32_t>(c.embed_dim));
    put_u8(out, static_cast<std::uint8_t>(c.mode));
    put_u32(out, static_cast<std::uint32_t>(c.reduced_tokens));
    put_u32(out, static_cast<std::uint32_t>(c.reducer_mid));

    put_u8(out, opt ? 1 : 0);
    if (opt) put_u64(out, opt->step);

    std::vector<std::pair<std::string, const Mat<float>*>> tensors;
    auto& mutable_params = const_cast<ModelParams<float>&>(params);
    mutable_params.visit_params([&](const std::string& name, Mat<float>* value, Mat<float>*, bool) {
        tensors.emplace_back(name, value);
    });
    std::size_t n = tensors.size() + (opt ? opt->tensors.size() : 0);
    put_u32(out, static_cast<std::uint32_t>(n));
    for (const auto& [name, value] : tensors) put_tensor(out, name, *value);
    if (opt)
        for (const auto& [name, value] : opt->tensors) put_tensor(out, name, value);

    if (!out) throw std::runtime_error("checkpoint: write failed: " + path);
}

ModelParams<float> load_checkpoint(const std::string& path, OptState* opt) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open: " + path);

    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("checkpoint: bad magic");
    const std::uint32_t version = get_u32(in);
    if (version != kVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));

    ModelConfig c;
    c.text.n_layers = get_u32(in);
    c.text.n_heads = get_u32(in);
    c.text.width = get_u32(in);
    c.text.max_len = get_u32(in);
    c.text.vocab_size = get_u32(in);
    c.text.final_layer_norm = get_u8(in) != 0;
    c.image_dim = get_u32(in);
    c.embed_dim = get_u32(in);
    const std::uint8_t mode = get_u8(in);
    if (mode > 2) throw std::runtime_error("checkpoint: bad similarity mode");
    c.mode = static_cast<align::SimilarityMode>(mode);
    c.reduced_tokens = get_u32(in);
    c.reducer_mid = get_u32(in);

    const bool has_opt = get_u8(in) != 0;
    std::uint64_t step = 0;
    if (has_opt) step = get_u64(in);

    ModelParams<float> params;
    std::mt19937_64 rng(0);
    params.init(c, rng);

    std::unordered_map<std::string, Mat<float>*> slots;
    params.visit_params([&](const std::string& name, Mat<float>* value, Mat<float>*, bool) {
        slots.emplace(name, value);
    });

    std::unordered_set<std::string> seen;
    const std::uint32_t n_tensors = get_u32(in);
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
        RawTensor t = get_tensor(in);
        if (t.name.rfind("opt.", 0) == 0) {
            if (opt && has_opt) opt->tensors.emplace_back(t.name, std::move(t.value));
            continue;
        }
        auto it = slots.find(t.name);
        if (it == slots.end()) throw std::runtime_error("checkpoint: unknown tensor " + t.name);
        if (!seen.insert(t.name).second)
            throw std::runtime_error("checkpoint: duplicate tensor " + t.name);
        if (it->second->rows() != t.value.rows() || it->second->cols() != t.value.cols())
            throw std::runtime_error("checkpoint: shape mismatch for " + t.name);
        *it->second = std::move(t.value);
    }
    for (const auto& [name, value] : slots) {
        (void)value;
        if (!seen.count(name)) throw std::runtime_error("checkpoint: missing tensor " + name);
    }
    if (opt) opt->step = has_opt ? step : 0;
    return params;
}

template struct ModelParams<float>;
template struct ModelParams<double>;

template loss::BatchSimilarities<float> batch_similarities(
    const std::vector<EmbeddingSet<float>>&, const std::vector<EmbeddingSet<float>>&,
    align::SimilarityMode, std::vector<align::TokenwiseCache<float>>*);
template loss::BatchSimilarities<double> batch_similarities(
    const std::vector<EmbeddingSet<double>>&, const std::vector<EmbeddingSet<double>>&,
    align::SimilarityMode, std::vector<align::TokenwiseCache<double>>*);

}  // namespace wukong::model
