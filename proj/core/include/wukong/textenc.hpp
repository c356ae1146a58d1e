#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "wukong/embedding.hpp"
#include "wukong/matrix.hpp"
#include "wukong/tokenizer.hpp"

namespace wukong::textenc {

using wukong::EmbeddingSet;
using wukong::Mat;

// Defaults are the published full-scale text tower (12 layers, 8 heads, width
// 512); desk-scale runs shrink them freely. final_layer_norm exists so tests
// can drive the degenerate embeddings-only configuration.
struct TextEncoderConfig {
    std::size_t n_layers = 12;
    std::size_t n_heads = 8;
    std::size_t width = 512;
    std::size_t max_len = 32;
    std::size_t vocab_size = 21128;
    bool final_layer_norm = true;

    std::size_t head_dim() const { return width / n_heads; }
    std::size_t mlp_dim() const { return 4 * width; }
    void validate() const;  // throws std::invalid_argument
};

template <typename T>
struct Linear {
    Mat<T> w;  // d_in x d_out
    Mat<T> b;  // 1 x d_out
    Mat<T> gw, gb;

    void init(std::size_t d_in, std::size_t d_out, std::mt19937_64& rng, T stddev = T(0.02));
    void zero_grad();
};

template <typename T>
struct LayerNorm {
    Mat<T> gamma, beta;    // 1 x width
    Mat<T> ggamma, gbeta;

    void init(std::size_t width);
    void zero_grad();
};

template <typename T>
struct Block {
    LayerNorm<T> ln1, ln2;
    Linear<T> wq, wk, wv, wo;  // width x width each
    Linear<T> fc1;             // width x 4*width
    Linear<T> fc2;             // 4*width x width
};

template <typename T>
struct BlockCache {
    Mat<T> x_in;      // residual stream entering the block
    Mat<T> ln1_out;
    Mat<T> q, k, v;
    Mat<T> probs;     // (n_heads * L) x L attention rows
    Mat<T> ctx;       // concatenated head outputs
    Mat<T> x_mid;     // after attention residual
    Mat<T> ln2_out;
    Mat<T> fc1_pre;   // before GELU
    Mat<T> fc1_act;
};

template <typename T>
struct ForwardCache {
    std::size_t len = 0;
    Mat<T> h0;
    std::vector<BlockCache<T>> blocks;
    Mat<T> pre_final;  // input to the final layer norm
};

// Pre-norm decoder-only transformer: embeddings + positions, n_layers of
// causal masked self-attention and GELU MLP blocks, optional final layer
// norm. Padded positions are masked out of attention and zeroed in the
// output; the sequence-level text feature is the row at sep_pos.
template <typename T>
class TextEncoder {
public:
    TextEncoderConfig cfg;
    Mat<T> token_embedding;       // vocab_size x width
    Mat<T> positional_embedding;  // max_len x width
    Mat<T> g_token_embedding, g_positional_embedding;
    std::vector<Block<T>> blocks;
    LayerNorm<T> ln_final;

    void init(const TextEncoderConfig& config, std::mt19937_64& rng);

    // Throws std::invalid_argument on sequence-length or token-id violations.
    EmbeddingSet<T> forward(const tokenizer::TokenSequence& seq,
                            ForwardCache<T>* cache = nullptr) const;

    // Accumulates parameter gradients from upstream (len x width, already in
    // output coordinates; masked rows are ignored).
    void backward(const tokenizer::TokenSequence& seq, const ForwardCache<T>& cache,
                  const Mat<T>& upstream);

    void zero_grads();

    using ParamVisitor = std::function<void(const std::string& name, Mat<T>* value, Mat<T>* grad,
                                            bool weight_decay)>;
    void visit_params(const ParamVisitor& fn, const std::string& prefix = "");

    template <typename U>
    TextEncoder<U> cast() const;
};

extern template class TextEncoder<float>;
extern template class TextEncoder<double>;
extern template TextEncoder<double> TextEncoder<float>::cast<double>() const;
extern template TextEncoder<float> TextEncoder<double>::cast<float>() const;

}  // namespace wukong::textenc
