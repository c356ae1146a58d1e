#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "wukong/align.hpp"
#include "wukong/embedding.hpp"
#include "wukong/loss.hpp"
#include "wukong/matrix.hpp"
#include "wukong/textenc.hpp"
#include "wukong/tokenizer.hpp"

namespace wukong::model {

using wukong::EmbeddingSet;
using wukong::Mat;

struct ModelConfig {
    textenc::TextEncoderConfig text;
    std::size_t image_dim = 512;  // width of the frozen image-tower embeddings
    std::size_t embed_dim = 256;  // shared space width
    align::SimilarityMode mode = align::SimilarityMode::global;
    std::size_t reduced_tokens = align::kReducedTokensBase;  // reduced mode only
    std::size_t reducer_mid = 0;                             // 0 means image_dim

    std::size_t reducer_mid_dim() const { return reducer_mid ? reducer_mid : image_dim; }
    void validate() const;  // throws std::invalid_argument
};

// Positions 1..sep_pos-1: real pieces, excluding the start and separator
// control tokens and all padding.
std::vector<std::uint8_t> text_content_mask(const tokenizer::TokenSequence& seq);

template <typename T>
struct TextForward {
    tokenizer::TokenSequence seq;
    textenc::ForwardCache<T> enc_cache;  // filled only when grads were requested
    EmbeddingSet<T> encoded;             // len x text width
    align::L2ProjectCache<T> proj_cache;
    EmbeddingSet<T> projected;  // len x embed_dim; global mode keeps only the separator row
};

template <typename T>
struct ImageForward {
    EmbeddingSet<T> pre_projection;  // global row / raw tokens / reduced tokens
    align::TokenReduceCache<T> reduce_cache;  // reduced mode only
    align::L2ProjectCache<T> proj_cache;
    EmbeddingSet<T> projected;
};

// The trainable half of the pipeline: text tower, both projection heads, the
// token-reduction layer, and the learnable temperature. Image embeddings
// arrive precomputed and stay frozen.
template <typename T>
struct ModelParams {
    ModelConfig cfg;
    textenc::TextEncoder<T> text;
    align::ProjectionHead<T> text_head;   // text width -> embed_dim
    align::ProjectionHead<T> image_head;  // image_dim -> embed_dim
    align::TokenReducer<T> reducer;       // reduced mode only
    Mat<T> log_tau;                       // 1 x 1
    Mat<T> g_log_tau;

    void init(const ModelConfig& config, std::mt19937_64& rng);
    void zero_grads();

    T tau() const { return std::exp(log_tau[0][0]); }
    void clamp_tau();  // keeps tau inside [loss::kTauMin, loss::kTauMax]

    using ParamVisitor = typename textenc::TextEncoder<T>::ParamVisitor;
    void visit_params(const ParamVisitor& fn);

    // Runs the text tower and projects into the shared space. Global mode
    // projects only the separator row; the late-interaction modes project the
    // content tokens.
    TextForward<T> text_forward(const tokenizer::TokenSequence& seq, bool want_grad) const;

    // Projects a frozen image embedding set according to the similarity mode.
    ImageForward<T> image_forward(const EmbeddingSet<T>& raw) const;

    // Sequence-level features regardless of the similarity mode (used by
    // zero-shot classification): the projected, unit-norm separator row / the
    // projected, unit-norm global image row. Each returns a 1 x embed_dim row.
    Mat<T> global_text_feature(const tokenizer::TokenSequence& seq) const;
    Mat<T> global_image_feature(const EmbeddingSet<T>& raw) const;

    // Pushes upstream gradients (w.r.t. the projected rows) back into the
    // text tower / heads / reducer. d_projected shape must match .projected.
    void text_backward(TextForward<T>& fwd, const Mat<T>& d_projected);
    void image_backward(ImageForward<T>& fwd, const Mat<T>& d_projected);
};

// Directed score matrices between projected sets: s_image is n_img x n_txt,
// s_text is n_txt x n_img. In global mode both are plain inner products; the
// late-interaction modes aggregate per-token maxima in each direction. When
// given, `caches` receives the per-pair argmax records (row-major over
// img x txt) for the backward pass.
template <typename T>
loss::BatchSimilarities<T> batch_similarities(const std::vector<EmbeddingSet<T>>& img,
                                              const std::vector<EmbeddingSet<T>>& txt,
                                              align::SimilarityMode mode,
                                              std::vector<align::TokenwiseCache<T>>* caches = nullptr);

// --- checkpointing --------------------------------------------------------

// Optimizer slots riding along inside a checkpoint, keyed by parameter name.
struct OptState {
    std::uint64_t step = 0;
    std::vector<std::pair<std::string, Mat<float>>> tensors;
};

// Binary format: magic "WKCK", little-endian u32 version, the model config,
// then named float32 tensors. Round-trips bit-exactly; readers reject unknown
// versions and unexpected or missing tensors.
void save_checkpoint(const std::string& path, const ModelParams<float>& params,
                     const OptState* opt = nullptr);
ModelParams<float> load_checkpoint(const std::string& path, OptState* opt = nullptr);

extern template struct ModelParams<float>;
extern template struct ModelParams<double>;

}  // namespace wukong::model
