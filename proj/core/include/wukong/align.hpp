#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "wukong/embedding.hpp"
#include "wukong/matrix.hpp"

namespace wukong::align {

using wukong::EmbeddingSet;
using wukong::Grid;
using wukong::Mat;

enum class SimilarityMode { global, tokenwise, reduced };

const char* to_string(SimilarityMode m);
SimilarityMode similarity_mode_from_string(const std::string& s);  // throws on unknown

// --- projection to the shared space ------------------------------------------

// Bias-free linear map d_in -> d_out followed by row L2 normalization.
template <typename T>
struct ProjectionHead {
    Mat<T> weight;  // d_in x d_out
    Mat<T> grad;

    void init(std::size_t d_in, std::size_t d_out, std::mt19937_64& rng, T stddev = T(0.02));
    void zero_grad() { grad.zero(); }
};

template <typename T>
struct L2ProjectCache {
    Mat<T> input;              // rows as given
    Mat<T> u;                  // input * W, pre-normalization
    std::vector<T> inv_norm;   // 1/||u_row||, 0 for masked rows
    std::vector<std::uint8_t> mask;
};

// Projects every unmasked row and L2-normalizes it; masked rows come out
// zero. Throws std::invalid_argument on dimension mismatch and
// std::domain_error when an unmasked row projects to (near) zero norm.
template <typename T>
EmbeddingSet<T> l2_project(const EmbeddingSet<T>& set, const ProjectionHead<T>& head,
                           L2ProjectCache<T>* cache = nullptr);

// Accumulates the weight gradient into head.grad and returns the gradient
// with respect to the input rows.
template <typename T>
Mat<T> l2_project_backward(const L2ProjectCache<T>& cache, ProjectionHead<T>& head,
                           const Mat<T>& upstream);

// --- similarities -------------------------------------------------------------

// S[i][j] = <img_row_i, txt_row_j> for batchwise global features.
template <typename T>
Mat<T> global_similarity(const Mat<T>& img, const Mat<T>& txt);

template <typename T>
void global_similarity_backward(const Mat<T>& img, const Mat<T>& txt, const Mat<T>& upstream,
                                Mat<T>& d_img, Mat<T>& d_txt);

// Directed late-interaction scores for one image-text pair.
template <typename T>
struct PairSimilarity {
    T s_image;  // average over image tokens of best text match
    T s_text;   // average over text tokens of best image match
};

template <typename T>
struct TokenwiseCache {
    std::vector<std::uint32_t> img_rows, txt_rows;  // eligible row indices
    std::vector<std::uint32_t> img_best, txt_best;  // argmax partner row (absolute)
};

// Eligibility comes from each set's mask: callers exclude control and padding
// tokens on the text side by zeroing their mask bits. Throws
// std::invalid_argument when either side has no eligible token or dimensions
// differ. Ties in the max take the lowest partner row index.
template <typename T>
PairSimilarity<T> tokenwise_similarity(const EmbeddingSet<T>& img, const EmbeddingSet<T>& txt,
                                       TokenwiseCache<T>* cache = nullptr);

template <typename T>
void tokenwise_similarity_backward(const EmbeddingSet<T>& img, const EmbeddingSet<T>& txt,
                                   const TokenwiseCache<T>& cache, T g_s_image, T g_s_text,
                                   Mat<T>& d_img, Mat<T>& d_txt);

// --- token reduction ----------------------------------------------------------

// Compresses the h x w image token grid to n_out tokens: a 3x3 convolution
// (d_in -> d_mid) with exact-erf GELU, a 1x1 convolution (d_mid -> n_out),
// sigmoid gating of the original tokens per output slot, and spatial
// averaging. One weight set serves all n_out slots via the 1x1 convolution's
// output channels.
template <typename T>
struct TokenReducer {
    std::size_t d_in = 0, d_mid = 0, n_out = 0;
    Mat<T> conv1_w;  // (3*3*d_in) x d_mid, kernel-major rows: (dy,dx,channel)
    Mat<T> conv1_b;  // 1 x d_mid
    Mat<T> conv2_w;  // d_mid x n_out
    Mat<T> conv2_b;  // 1 x n_out
    Mat<T> g_conv1_w, g_conv1_b, g_conv2_w, g_conv2_b;

    void init(std::size_t d_in, std::size_t d_mid, std::size_t n_out, std::mt19937_64& rng,
              T stddev = T(0.02));
    void zero_grad();
};

// Published reduced-token counts of the full-scale configurations.
inline constexpr std::size_t kReducedTokensBase = 12;   // ViT-B/32 and Swin-L towers
inline constexpr std::size_t kReducedTokensLarge = 24;  // ViT-L/14 tower

template <typename T>
struct TokenReduceCache {
    Mat<T> spatial;  // (h*w) x d_in input rows
    std::size_t h = 0, w = 0;
    Mat<T> pre_act;  // (h*w) x d_mid, before GELU
    Mat<T> act;      // (h*w) x d_mid
    Mat<T> logits;   // (h*w) x n_out
    Mat<T> alpha;    // sigmoid(logits)
};

// Consumes the grid rows of `img` (mask ignored: grid cells are always
// valid); returns n_out tokens with no grid and full mask. Requires a grid.
template <typename T>
EmbeddingSet<T> token_reduce(const EmbeddingSet<T>& img, const TokenReducer<T>& reducer,
                             TokenReduceCache<T>* cache = nullptr);

// Accumulates parameter gradients into the reducer and returns the gradient
// with respect to the spatial input rows ((h*w) x d_in).
template <typename T>
Mat<T> token_reduce_backward(const TokenReduceCache<T>& cache, TokenReducer<T>& reducer,
                             const Mat<T>& upstream);

// token_reduce + projection/normalization on the image side, then the
// token-wise score. Pass head = nullptr to plain-normalize reduced tokens
// instead of projecting them.
template <typename T>
PairSimilarity<T> reduced_tokenwise_similarity(const EmbeddingSet<T>& img,
                                               const EmbeddingSet<T>& txt,
                                               const TokenReducer<T>& reducer,
                                               const ProjectionHead<T>* head = nullptr);

// L2-normalizes unmasked rows in place (identity projection).
template <typename T>
EmbeddingSet<T> normalize_rows(const EmbeddingSet<T>& set);

// --- global feature extraction ------------------------------------------------

// The sequence-level image feature: the row after the grid cells when one
// exists (a classification token), otherwise the mean of the grid rows; sets
// without grids must be single-row. Result is not normalized.
template <typename T>
Mat<T> image_global_row(const EmbeddingSet<T>& set);

// --- word-patch alignment -----------------------------------------------------

// For each grid cell of `img`, the index of its best-matching eligible text
// position, counted with the sequence-start token as position 0. Ties take
// the lowest text position.
template <typename T>
Mat<std::int32_t> word_patch_alignment(const EmbeddingSet<T>& img, const EmbeddingSet<T>& txt);

}  // namespace wukong::align
