#include "wukong/align.hpp"

#include <stdexcept>

#include "wukong/scalar_ops.hpp"

namespace wukong::align {

namespace {
// Rows with a smaller norm than this cannot be meaningfully normalized.
constexpr double kMinNorm = 1e-12;
}

const char* to_string(SimilarityMode m) {
    switch (m) {
        case SimilarityMode::global: return "global";
        case SimilarityMode::tokenwise: return "tokenwise";
        case SimilarityMode::reduced: return "reduced";
    }
    return "unknown";
}

SimilarityMode similarity_mode_from_string(const std::string& s) {
    if (s == "global") return SimilarityMode::global;
    if (s == "tokenwise") return SimilarityMode::tokenwise;
    if (s == "reduced") return SimilarityMode::reduced;
    throw std::invalid_argument("unknown similarity mode: " + s);
}

template <typename T>
void ProjectionHead<T>::init(std::size_t d_in, std::size_t d_out, std::mt19937_64& rng, T stddev) {
    weight = Mat<T>(d_in, d_out);
    grad = Mat<T>(d_in, d_out);
    std::normal_distribution<double> dist(0.0, static_cast<double>(stddev));
    for (std::size_t i = 0; i < weight.size(); ++i) weight.data()[i] = static_cast<T>(dist(rng));
}

template <typename T>
EmbeddingSet<T> l2_project(const EmbeddingSet<T>& set, const ProjectionHead<T>& head,
                           L2ProjectCache<T>* cache) {
    set.validate();
    if (set.dim() != head.weight.rows())
        throw std::invalid_argument("l2_project: head input dimension mismatch");
    const std::size_t n = set.n_tokens();
    const std::size_t d_out = head.weight.cols();

    Mat<T> u(n, d_out);
    EmbeddingSet<T> out;
    out.data = Mat<T>(n, d_out);
    out.grid = set.grid;
    out.mask = set.mask;
    out.kind = set.kind;
    std::vector<T> inv_norm(n, T(0));

    for (std::size_t i = 0; i < n; ++i) {
        if (!set.mask[i]) continue;
        const T* row = set.data[i];
        T* ui = u[i];
        for (std::size_t j = 0; j < set.dim(); ++j) {
            const T rij = row[j];
            if (rij == T(0)) continue;
            const T* wj = head.weight[j];
            for (std::size_t k = 0; k < d_out; ++k) ui[k] += rij * wj[k];
        }
        const T norm = l2_norm(ui, d_out);
        if (!(norm > T(kMinNorm)))
            throw std::domain_error("l2_project: projected row has (near) zero norm");
        inv_norm[i] = T(1) / norm;
        T* oi = out.data[i];
        for (std::size_t k = 0; k < d_out; ++k) oi[k] = ui[k] * inv_norm[i];
    }

    if (cache) {
        cache->input = set.data;
        cache->u = std::move(u);
        cache->inv_norm = std::move(inv_norm);
        cache->mask = set.mask;
    }
    return out;
}

template <typename T>
Mat<T> l2_project_backward(const L2ProjectCache<T>& cache, ProjectionHead<T>& head,
                           const Mat<T>& upstream) {
    const std::size_t n = cache.input.rows();
    const std::size_t d_in = cache.input.cols();
    const std::size_t d_out = head.weight.cols();
    if (upstream.rows() != n || upstream.cols() != d_out)
        throw std::invalid_argument("l2_project_backward: upstream shape mismatch");

    Mat<T> du(n, d_out);
    for (std::size_t i = 0; i < n; ++i) {
        if (!cache.mask[i]) continue;
        const T inv = cache.inv_norm[i];
        const T* ui = cache.u[i];
        const T* gi = upstream[i];
        // y = u/|u|; du = (g - y (y.g)) / |u|
        T ydotg = T(0);
        for (std::size_t k = 0; k < d_out; ++k) ydotg += ui[k] * inv * gi[k];
        T* di = du[i];
        for (std::size_t k = 0; k < d_out; ++k) di[k] = (gi[k] - ui[k] * inv * ydotg) * inv;
    }

    Mat<T> d_input(n, d_in);
    for (std::size_t i = 0; i < n; ++i) {
        if (!cache.mask[i]) continue;
        const T* xi = cache.input[i];
        const T* di = du[i];
        T* gx = d_input[i];
        for (std::size_t j = 0; j < d_in; ++j) {
            T* gw = head.grad[j];
            const T xij = xi[j];
            T acc = T(0);
            const T* wj = head.weight[j];
            for (std::size_t k = 0; k < d_out; ++k) {
                gw[k] += xij * di[k];
                acc += wj[k] * di[k];
            }
            gx[j] = acc;
        }
    }
    return d_input;
}

template <typename T>
Mat<T> global_similarity(const Mat<T>& img, const Mat<T>& txt) {
    if (img.cols() != txt.cols())
        throw std::invalid_argument("global_similarity: dimension mismatch");
    Mat<T> s(img.rows(), txt.rows());
    for (std::size_t i = 0; i < img.rows(); ++i)
        for (std::size_t j = 0; j < txt.rows(); ++j) s[i][j] = dot(img[i], txt[j], img.cols());
    return s;
}

template <typename T>
void global_similarity_backward(const Mat<T>& img, const Mat<T>& txt, const Mat<T>& upstream,
                                Mat<T>& d_img, Mat<T>& d_txt) {
    if (upstream.rows() != img.rows() || upstream.cols() != txt.rows())
        throw std::invalid_argument("global_similarity_backward: upstream shape mismatch");
    if (!d_img.same_shape(img)) d_img = Mat<T>(img.rows(), img.cols());
    if (!d_txt.same_shape(txt)) d_txt = Mat<T>(txt.rows(), txt.cols());
    for (std::size_t i = 0; i < img.rows(); ++i) {
        for (std::size_t j = 0; j < txt.rows(); ++j) {
            const T g = upstream[i][j];
            if (g == T(0)) continue;
            for (std::size_t k = 0; k < img.cols(); ++k) {
                d_img[i][k] += g * txt[j][k];
                d_txt[j][k] += g * img[i][k];
            }
        }
    }
}

namespace {

std::vector<std::uint32_t> eligible_rows(const std::vector<std::uint8_t>& mask) {
    std::vector<std::uint32_t> rows;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) rows.push_back(static_cast<std::uint32_t>(i));
    return rows;
}

}  // namespace

template <typename T>
PairSimilarity<T> tokenwise_similarity(const EmbeddingSet<T>& img, const EmbeddingSet<T>& txt,
                                       TokenwiseCache<T>* cache) {
    img.validate();
    txt.validate();
    if (img.dim() != txt.dim())
        throw std::invalid_argument("tokenwise_similarity: dimension mismatch");
    auto img_rows = eligible_rows(img.mask);
    auto txt_rows = eligible_rows(txt.mask);
    if (img_rows.empty()) throw std::invalid_argument("tokenwise_similarity: no eligible image tokens");
    if (txt_rows.empty()) throw std::invalid_argument("tokenwise_similarity: no eligible text tokens");

    const std::size_t d = img.dim();
    std::vector<std::uint32_t> img_best(img_rows.size()), txt_best(txt_rows.size());

    T s_image = T(0);
    for (std::size_t a = 0; a < img_rows.size(); ++a) {
        T best = T(0);
        std::uint32_t best_row = txt_rows[0];
        bool first = true;
        for (std::uint32_t r : txt_rows) {
            const T v = dot(img.data[img_rows[a]], txt.data[r], d);
            if (first || v > best) {
                best = v;
                best_row = r;
                first = false;
            }
        }
        img_best[a] = best_row;
        s_image += best;
    }
    s_image /= static_cast<T>(img_rows.size());

    T s_text = T(0);
    for (std::size_t a = 0; a < txt_rows.size(); ++a) {
        T best = T(0);
        std::uint32_t best_row = img_rows[0];
        bool first = true;
        for (std::uint32_t r : img_rows) {
            const T v = dot(txt.data[txt_rows[a]], img.data[r], d);
            if (first || v > best) {
                best = v;
                best_row = r;
                first = false;
            }
        }
        txt_best[a] = best_row;
        s_text += best;
    }
    s_text /= static_cast<T>(txt_rows.size());

    if (cache) {
        cache->img_rows = std::move(img_rows);
        cache->txt_rows = std::move(txt_rows);
        cache->img_best = std::move(img_best);
        cache->txt_best = std::move(txt_best);
    }
    return {s_image, s_text};
}

template <typename T>
void tokenwise_similarity_backward(const EmbeddingSet<T>& img, const EmbeddingSet<T>& txt,
                                   const TokenwiseCache<T>& cache, T g_s_image, T g_s_text,
                                   Mat<T>& d_img, Mat<T>& d_txt) {
    const std::size_t d = img.dim();
    if (!d_img.same_shape(img.data)) d_img = Mat<T>(img.n_tokens(), d);
    if (!d_txt.same_shape(txt.data)) d_txt = Mat<T>(txt.n_tokens(), d);

    if (g_s_image != T(0)) {
        const T scale = g_s_image / static_cast<T>(cache.img_rows.size());
        for (std::size_t a = 0; a < cache.img_rows.size(); ++a) {
            const std::uint32_t k = cache.img_rows[a];
            const std::uint32_t r = cache.img_best[a];
            for (std::size_t c = 0; c < d; ++c) {
                d_img[k][c] += scale * txt.data[r][c];
                d_txt[r][c] += scale * img.data[k][c];
            }
        }
    }
    if (g_s_text != T(0)) {
        const T scale = g_s_text / static_cast<T>(cache.txt_rows.size());
        for (std::size_t a = 0; a < cache.txt_rows.size(); ++a) {
            const std::uint32_t k = cache.txt_rows[a];
            const std::uint32_t r = cache.txt_best[a];
            for (std::size_t c = 0; c < d; ++c) {
                d_txt[k][c] += scale * img.data[r][c];
                d_img[r][c] += scale * txt.data[k][c];
            }
        }
    }
}

template <typename T>
void TokenReducer<T>::init(std::size_t d_in_, std::size_t d_mid_, std::size_t n_out_,
                           std::mt19937_64& rng, T stddev) {
    if (n_out_ == 0) throw std::invalid_argument("token reducer: n_out must be at least 1");
    d_in = d_in_;
    d_mid = d_mid_;
    n_out = n_out_;
    conv1_w = Mat<T>(9 * d_in, d_mid);
    conv1_b = Mat<T>(1, d_mid);
    conv2_w = Mat<T>(d_mid, n_out);
    conv2_b = Mat<T>(1, n_out);
    g_conv1_w = Mat<T>(9 * d_in, d_mid);
    g_conv1_b = Mat<T>(1, d_mid);
    g_conv2_w = Mat<T>(d_mid, n_out);
    g_conv2_b = Mat<T>(1, n_out);
    std::normal_distribution<double> dist(0.0, static_cast<double>(stddev));
    for (std::size_t i = 0; i < conv1_w.size(); ++i) conv1_w.data()[i] = static_cast<T>(dist(rng));
    for (std::size_t i = 0; i < conv2_w.size(); ++i) conv2_w.data()[i] = static_cast<T>(dist(rng));
}

template <typename T>
void TokenReducer<T>::zero_grad() {
    g_conv1_w.zero();
    g_conv1_b.zero();
    g_conv2_w.zero();
    g_conv2_b.zero();
}

template <typename T>
EmbeddingSet<T> token_reduce(const EmbeddingSet<T>& img, const TokenReducer<T>& reducer,
                             TokenReduceCache<T>* cache) {
    img.validate();
    if (!img.grid) throw std::invalid_argument("token_reduce: input has no spatial grid");
    const std::size_t h = img.grid->h, w = img.grid->w;
    if (h * w == 0) throw std::invalid_argument("token_reduce: empty grid");
    if (img.dim() != reducer.d_in) throw std::invalid_argument("token_reduce: channel mismatch");

    const std::size_t cells = h * w;
    const std::size_t d = reducer.d_in, dm = reducer.d_mid, n_out = reducer.n_out;

    Mat<T> spatial(cells, d);
    for (std::size_t i = 0; i < cells; ++i)
        for (std::size_t c = 0; c < d; ++c) spatial[i][c] = img.data[i][c];

    // 3x3 same-padding convolution over the grid.
    Mat<T> pre(cells, dm);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            T* out = pre[y * w + x];
            for (std::size_t m = 0; m < dm; ++m) out[m] = reducer.conv1_b[0][m];
            for (int dy = -1; dy <= 1; ++dy) {
                const std::ptrdiff_t ny = static_cast<std::ptrdiff_t>(y) + dy;
                if (ny < 0 || ny >= static_cast<std::ptrdiff_t>(h)) continue;
                for (int dx = -1; dx <= 1; ++dx) {
                    const std::ptrdiff_t nx = static_cast<std::ptrdiff_t>(x) + dx;
                    if (nx < 0 || nx >= static_cast<std::ptrdiff_t>(w)) continue;
                    const T* z = spatial[static_cast<std::size_t>(ny) * w + static_cast<std::size_t>(nx)];
                    const std::size_t kbase = static_cast<std::size_t>((dy + 1) * 3 + (dx + 1)) * d;
                    for (std::size_t c = 0; c < d; ++c) {
                        const T zc = z[c];
                        if (zc == T(0)) continue;
                        const T* wrow = reducer.conv1_w[kbase + c];
                        for (std::size_t m = 0; m < dm; ++m) out[m] += zc * wrow[m];
                    }
                }
            }
        }
    }

    Mat<T> act(cells, dm);
    for (std::size_t i = 0; i < cells; ++i)
        for (std::size_t m = 0; m < dm; ++m) act[i][m] = gelu(pre[i][m]);

    Mat<T> logits(cells, n_out);
    for (std::size_t i = 0; i < cells; ++i) {
        T* li = logits[i];
        for (std::size_t k = 0; k < n_out; ++k) li[k] = reducer.conv2_b[0][k];
        const T* ai = act[i];
        for (std::size_t m = 0; m < dm; ++m) {
            const T am = ai[m];
            if (am == T(0)) continue;
            const T* wm = reducer.conv2_w[m];
            for (std::size_t k = 0; k < n_out; ++k) li[k] += am * wm[k];
        }
    }

    Mat<T> alpha(cells, n_out);
    for (std::size_t i = 0; i < cells; ++i)
        for (std::size_t k = 0; k < n_out; ++k) alpha[i][k] = sigmoid(logits[i][k]);

    EmbeddingSet<T> out;
    out.data = Mat<T>(n_out, d);
    out.mask.assign(n_out, 1);
    out.kind = EmbeddingKind::image;
    const T inv_cells = T(1) / static_cast<T>(cells);
    for (std::size_t k = 0; k < n_out; ++k) {
        T* zk = out.data[k];
        for (std::size_t i = 0; i < cells; ++i) {
            const T a = alpha[i][k];
            const T* z = spatial[i];
            for (std::size_t c = 0; c < d; ++c) zk[c] += a * z[c];
        }
        for (std::size_t c = 0; c < d; ++c) zk[c] *= inv_cells;
    }

    if (cache) {
        cache->spatial = std::move(spatial);
        cache->h = h;
        cache->w = w;
        cache->pre_act = std::move(pre);
        cache->act = std::move(act);
        cache->logits = std::move(logits);
        cache->alpha = std::move(alpha);
    }
    return out;
}

template <typename T>
Mat<T> token_reduce_backward(const TokenReduceCache<T>& cache, TokenReducer<T>& reducer,
                             const Mat<T>& upstream) {
    const std::size_t h = cache.h, w = cache.w, cells = h * w;
    const std::size_t d = reducer.d_in, dm = reducer.d_mid, n_out = reducer.n_out;
    if (upstream.rows() != n_out || upstream.cols() != d)
        throw std::invalid_argument("token_reduce_backward: upstream shape mismatch");

    const T inv_cells = T(1) / static_cast<T>(cells);
    Mat<T> d_spatial(cells, d);
    Mat<T> d_alpha(cells, n_out);
    for (std::size_t i = 0; i < cells; ++i) {
        const T* z = cache.spatial[i];
        T* da = d_alpha[i];
        T* dz = d_spatial[i];
        for (std::size_t k = 0; k < n_out; ++k) {
            const T* gk = upstream[k];
            const T a = cache.alpha[i][k];
            T acc = T(0);
            for (std::size_t c = 0; c < d; ++c) {
                acc += gk[c] * z[c];
                dz[c] += inv_cells * gk[c] * a;
            }
            da[k] = inv_cells * acc;
        }
    }

    Mat<T> d_logits(cells, n_out);
    for (std::size_t i = 0; i < cells; ++i)
        for (std::size_t k = 0; k < n_out; ++k)
            d_logits[i][k] = d_alpha[i][k] * sigmoid_grad_from_value(cache.alpha[i][k]);

    Mat<T> d_act(cells, dm);
    for (std::size_t i = 0; i < cells; ++i) {
        const T* dl = d_logits[i];
        const T* ai = cache.act[i];
        T* da = d_act[i];
        for (std::size_t m = 0; m < dm; ++m) {
            const T* wm = reducer.conv2_w[m];
            T acc = T(0);
            for (std::size_t k = 0; k < n_out; ++k) {
                acc += wm[k] * dl[k];
                reducer.g_conv2_w[m][k] += ai[m] * dl[k];
            }
            da[m] = acc;
        }
        for (std::size_t k = 0; k < n_out; ++k) reducer.g_conv2_b[0][k] += dl[k];
    }

    Mat<T> d_pre(cells, dm);
    for (std::size_t i = 0; i < cells; ++i)
        for (std::size_t m = 0; m < dm; ++m)
            d_pre[i][m] = d_act[i][m] * gelu_grad(cache.pre_act[i][m]);

    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const T* dp = d_pre[y * w + x];
            for (std::size_t m = 0; m < dm; ++m) reducer.g_conv1_b[0][m] += dp[m];
            for (int dy = -1; dy <= 1; ++dy) {
                const std::ptrdiff_t ny = static_cast<std::ptrdiff_t>(y) + dy;
                if (ny < 0 || ny >= static_cast<std::ptrdiff_t>(h)) continue;
                for (int dx = -1; dx <= 1; ++dx) {
                    const std::ptrdiff_t nx = static_cast<std::ptrdiff_t>(x) + dx;
                    if (nx < 0 || nx >= static_cast<std::ptrdiff_t>(w)) continue;
                    const std::size_t ni = static_cast<std::size_t>(ny) * w + static_cast<std::size_t>(nx);
                    const T* z = cache.spatial[ni];
                    T* dz = d_spatial[ni];
                    const std::size_t kbase = static_cast<std::size_t>((dy + 1) * 3 + (dx + 1)) * d;
                    for (std::size_t c = 0; c < d; ++c) {
                        T* gw = reducer.g_conv1_w[kbase + c];
                        const T* wrow = reducer.conv1_w[kbase + c];
                        const T zc = z[c];
                        T acc = T(0);
                        for (std::size_t m = 0; m < dm; ++m) {
                            gw[m] += zc * dp[m];
                            acc += wrow[m] * dp[m];
                        }
                        dz[c] += acc;
                    }
                }
            }
        }
    }
    return d_spatial;
}

template <typename T>
EmbeddingSet<T> normalize_rows(const EmbeddingSet<T>& set) {
    set.validate();
    EmbeddingSet<T> out = set;
    for (std::size_t i = 0; i < out.n_tokens(); ++i) {
        T* row = out.data[i];
        if (!out.mask[i]) {
            for (std::size_t c = 0; c < out.dim(); ++c) row[c] = T(0);
            continue;
        }
        const T norm = l2_norm(row, out.dim());
        if (!(norm > T(kMinNorm)))
            throw std::domain_error("normalize_rows: row has (near) zero norm");
        for (std::size_t c = 0; c < out.dim(); ++c) row[c] /= norm;
    }
    return out;
}

template <typename T>
PairSimilarity<T> reduced_tokenwise_similarity(const EmbeddingSet<T>& img,
                                               const EmbeddingSet<T>& txt,
                                               const TokenReducer<T>& reducer,
                                               const ProjectionHead<T>* head) {
    EmbeddingSet<T> reduced = token_reduce(img, reducer);
    EmbeddingSet<T> ready = head ? l2_project(reduced, *head) : normalize_rows(reduced);
    return tokenwise_similarity(ready, txt);
}

template <typename T>
Mat<T> image_global_row(const EmbeddingSet<T>& set) {
    set.validate();
    const std::size_t d = set.dim();
    Mat<T> out(1, d);
    if (set.grid) {
        const std::size_t cells = set.grid->cells();
        if (set.n_tokens() > cells) {
            // The row after the grid holds the sequence-level token.
            for (std::size_t c = 0; c < d; ++c) out[0][c] = set.data[cells][c];
            return out;
        }
        for (std::size_t i = 0; i < cells; ++i)
            for (std::size_t c = 0; c < d; ++c) out[0][c] += set.data[i][c];
        for (std::size_t c = 0; c < d; ++c) out[0][c] /= static_cast<T>(cells);
        return out;
    }
    if (set.n_tokens() == 1) {
        for (std::size_t c = 0; c < d; ++c) out[0][c] = set.data[0][c];
        return out;
    }
    std::size_t n = 0;
    for (std::size_t i = 0; i < set.n_tokens(); ++i) {
        if (!set.mask[i]) continue;
        ++n;
        for (std::size_t c = 0; c < d; ++c) out[0][c] += set.data[i][c];
    }
    if (n == 0) throw std::invalid_argument("image_global_row: no eligible tokens");
    for (std::size_t c = 0; c < d; ++c) out[0][c] /= static_cast<T>(n);
    return out;
}

template <typename T>
Mat<std::int32_t> word_patch_alignment(const EmbeddingSet<T>& img, const EmbeddingSet<T>& txt) {
    img.validate();
    txt.validate();
    if (!img.grid) throw std::invalid_argument("word_patch_alignment: image has no grid");
    if (img.dim() != txt.dim())
        throw std::invalid_argument("word_patch_alignment: dimension mismatch");
    auto txt_rows = eligible_rows(txt.mask);
    if (txt_rows.empty())
        throw std::invalid_argument("word_patch_alignment: no eligible text tokens");

    const std::size_t h = img.grid->h, w = img.grid->w;
    Mat<std::int32_t> out(h, w);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const T* patch = img.data[y * w + x];
            T best = T(0);
            std::uint32_t best_row = txt_rows[0];
            bool first = true;
            for (std::uint32_t r : txt_rows) {
                const T v = dot(patch, txt.data[r], img.dim());
                if (first || v > best) {
                    best = v;
                    best_row = r;
                    first = false;
                }
            }
            out[y][x] = static_cast<std::int32_t>(best_row);
        }
    }
    return out;
}

#define WUKONG_INSTANTIATE_ALIGN(T)                                                               \
    template struct ProjectionHead<T>;                                                            \
    template struct TokenReducer<T>;                                                              \
    template EmbeddingSet<T> l2_project<T>(const EmbeddingSet<T>&, const ProjectionHead<T>&,      \
                                           L2ProjectCache<T>*);                                   \
    template Mat<T> l2_project_backward<T>(const L2ProjectCache<T>&, ProjectionHead<T>&,          \
                                           const Mat<T>&);                                        \
    template Mat<T> global_similarity<T>(const Mat<T>&, const Mat<T>&);                           \
    template void global_similarity_backward<T>(const Mat<T>&, const Mat<T>&, const Mat<T>&,      \
                                                Mat<T>&, Mat<T>&);                                \
    template PairSimilarity<T> tokenwise_similarity<T>(const EmbeddingSet<T>&,                    \
                                                       const EmbeddingSet<T>&,                    \
                                                       TokenwiseCache<T>*);                       \
    template void tokenwise_similarity_backward<T>(const EmbeddingSet<T>&, const EmbeddingSet<T>&,\
                                                   const TokenwiseCache<T>&, T, T, Mat<T>&,       \
                                                   Mat<T>&);                                      \
    template EmbeddingSet<T> token_reduce<T>(const EmbeddingSet<T>&, const TokenReducer<T>&,      \
                                             TokenReduceCache<T>*);                               \
    template Mat<T> token_reduce_backward<T>(const TokenReduceCache<T>&, TokenReducer<T>&,        \
                                             const Mat<T>&);                                      \
    template EmbeddingSet<T> normalize_rows<T>(const EmbeddingSet<T>&);                           \
    template PairSimilarity<T> reduced_tokenwise_similarity<T>(                                   \
        const EmbeddingSet<T>&, const EmbeddingSet<T>&, const TokenReducer<T>&,                   \
        const ProjectionHead<T>*);                                                                \
    template Mat<T> image_global_row<T>(const EmbeddingSet<T>&);                                  \
    template Mat<std::int32_t> word_patch_alignment<T>(const EmbeddingSet<T>&,                    \
                                                       const EmbeddingSet<T>&);

WUKONG_INSTANTIATE_ALIGN(float)
WUKONG_INSTANTIATE_ALIGN(double)

#undef WUKONG_INSTANTIATE_ALIGN

}  // namespace wukong::align
