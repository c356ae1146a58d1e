#include "wukong/textenc.hpp"

#include <cmath>
#include <stdexcept>

#include "wukong/scalar_ops.hpp"

namespace wukong::textenc {

namespace {
constexpr double kLnEps = 1e-5;
}

void TextEncoderConfig::validate() const {
    if (n_heads == 0 || width == 0 || vocab_size == 0)
        throw std::invalid_argument("text encoder config: zero n_heads/width/vocab_size");
    if (width % n_heads != 0)
        throw std::invalid_argument("text encoder config: width not divisible by n_heads");
    if (max_len < 3) throw std::invalid_argument("text encoder config: max_len must be >= 3");
}

template <typename T>
void Linear<T>::init(std::size_t d_in, std::size_t d_out, std::mt19937_64& rng, T stddev) {
    w = Mat<T>(d_in, d_out);
    b = Mat<T>(1, d_out);
    gw = Mat<T>(d_in, d_out);
    gb = Mat<T>(1, d_out);
    std::normal_distribution<double> dist(0.0, static_cast<double>(stddev));
    for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = static_cast<T>(dist(rng));
}

template <typename T>
void Linear<T>::zero_grad() {
    gw.zero();
    gb.zero();
}

template <typename T>
void LayerNorm<T>::init(std::size_t width) {
    gamma = Mat<T>(1, width, T(1));
    beta = Mat<T>(1, width);
    ggamma = Mat<T>(1, width);
    gbeta = Mat<T>(1, width);
}

template <typename T>
void LayerNorm<T>::zero_grad() {
    ggamma.zero();
    gbeta.zero();
}

namespace {

// y = x*W + b, row-wise.
template <typename T>
Mat<T> linear_forward(const Mat<T>& x, const Linear<T>& lin) {
    Mat<T> y(x.rows(), lin.w.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        T* yi = y[i];
        for (std::size_t k = 0; k < lin.w.cols(); ++k) yi[k] = lin.b[0][k];
        const T* xi = x[i];
        for (std::size_t j = 0; j < x.cols(); ++j) {
            const T xij = xi[j];
            if (xij == T(0)) continue;
            const T* wj = lin.w[j];
            for (std::size_t k = 0; k < lin.w.cols(); ++k) yi[k] += xij * wj[k];
        }
    }
    return y;
}

// Accumulates gw/gb and returns dx.
template <typename T>
Mat<T> linear_backward(const Mat<T>& x, Linear<T>& lin, const Mat<T>& dy) {
    Mat<T> dx(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const T* xi = x[i];
        const T* gi = dy[i];
        T* dxi = dx[i];
        for (std::size_t k = 0; k < lin.w.cols(); ++k) lin.gb[0][k] += gi[k];
        for (std::size_t j = 0; j < x.cols(); ++j) {
            T* gwj = lin.gw[j];
            const T* wj = lin.w[j];
            const T xij = xi[j];
            T acc = T(0);
            for (std::size_t k = 0; k < lin.w.cols(); ++k) {
                gwj[k] += xij * gi[k];
                acc += wj[k] * gi[k];
            }
            dxi[j] = acc;
        }
    }
    return dx;
}

template <typename T>
Mat<T> layernorm_forward(const Mat<T>& x, const LayerNorm<T>& ln) {
    const std::size_t n = x.cols();
    Mat<T> y(x.rows(), n);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const T* xi = x[i];
        T mu = T(0);
        for (std::size_t j = 0; j < n; ++j) mu += xi[j];
        mu /= static_cast<T>(n);
        T var = T(0);
        for (std::size_t j = 0; j < n; ++j) {
            const T d = xi[j] - mu;
            var += d * d;
        }
        var /= static_cast<T>(n);
        const T r = T(1) / std::sqrt(var + T(kLnEps));
        T* yi = y[i];
        for (std::size_t j = 0; j < n; ++j) yi[j] = ln.gamma[0][j] * (xi[j] - mu) * r + ln.beta[0][j];
    }
    return y;
}

// Standard layer-norm VJP; recomputes row statistics from the cached input.
template <typename T>
Mat<T> layernorm_backward(const Mat<T>& x, LayerNorm<T>& ln, const Mat<T>& dy) {
    const std::size_t n = x.cols();
    Mat<T> dx(x.rows(), n);
    std::vector<T> xhat(n), dxhat(n);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const T* xi = x[i];
        const T* gi = dy[i];
        T mu = T(0);
        for (std::size_t j = 0; j < n; ++j) mu += xi[j];
        mu /= static_cast<T>(n);
        T var = T(0);
        for (std::size_t j = 0; j < n; ++j) {
            const T d = xi[j] - mu;
            var += d * d;
        }
        var /= static_cast<T>(n);
        const T r = T(1) / std::sqrt(var + T(kLnEps));

        T mean_dxhat = T(0), mean_dxhat_xhat = T(0);
        for (std::size_t j = 0; j < n; ++j) {
            xhat[j] = (xi[j] - mu) * r;
            dxhat[j] = gi[j] * ln.gamma[0][j];
            ln.ggamma[0][j] += gi[j] * xhat[j];
            ln.gbeta[0][j] += gi[j];
            mean_dxhat += dxhat[j];
            mean_dxhat_xhat += dxhat[j] * xhat[j];
        }
        mean_dxhat /= static_cast<T>(n);
        mean_dxhat_xhat /= static_cast<T>(n);
        T* dxi = dx[i];
        for (std::size_t j = 0; j < n; ++j)
            dxi[j] = r * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
    }
    return dx;
}

}  // namespace

template <typename T>
void TextEncoder<T>::init(const TextEncoderConfig& config, std::mt19937_64& rng) {
    config.validate();
    cfg = config;
    token_embedding = Mat<T>(cfg.vocab_size, cfg.width);
    positional_embedding = Mat<T>(cfg.max_len, cfg.width);
    g_token_embedding = Mat<T>(cfg.vocab_size, cfg.width);
    g_positional_embedding = Mat<T>(cfg.max_len, cfg.width);
    std::normal_distribution<double> dist(0.0, 0.02);
    for (std::size_t i = 0; i < token_embedding.size(); ++i)
        token_embedding.data()[i] = static_cast<T>(dist(rng));
    for (std::size_t i = 0; i < positional_embedding.size(); ++i)
        positional_embedding.data()[i] = static_cast<T>(dist(rng));

    blocks.assign(cfg.n_layers, Block<T>{});
    for (auto& blk : blocks) {
        blk.ln1.init(cfg.width);
        blk.ln2.init(cfg.width);
        blk.wq.init(cfg.width, cfg.width, rng);
        blk.wk.init(cfg.width, cfg.width, rng);
        blk.wv.init(cfg.width, cfg.width, rng);
        blk.wo.init(cfg.width, cfg.width, rng);
        blk.fc1.init(cfg.width, cfg.mlp_dim(), rng);
        blk.fc2.init(cfg.mlp_dim(), cfg.width, rng);
    }
    ln_final.init(cfg.width);
}

template <typename T>
EmbeddingSet<T> TextEncoder<T>::forward(const tokenizer::TokenSequence& seq,
                                        ForwardCache<T>* cache) const {
    const std::size_t len = seq.ids.size();
    if (len == 0 || len > cfg.max_len)
        throw std::invalid_argument("text_forward: sequence length out of range");
    if (seq.mask.size() != len) throw std::invalid_argument("text_forward: mask length mismatch");
    for (auto id : seq.ids)
        if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size)
            throw std::invalid_argument("text_forward: token id out of range");

    const std::size_t W = cfg.width, H = cfg.n_heads, Dh = cfg.head_dim();
    const T scale = T(1) / std::sqrt(static_cast<T>(Dh));

    Mat<T> x(len, W);
    for (std::size_t p = 0; p < len; ++p) {
        const T* emb = token_embedding[static_cast<std::size_t>(seq.ids[p])];
        const T* pos = positional_embedding[p];
        T* xp = x[p];
        for (std::size_t j = 0; j < W; ++j) xp[j] = emb[j] + pos[j];
    }
    if (cache) {
        cache->len = len;
        cache->h0 = x;
        cache->blocks.assign(cfg.n_layers, BlockCache<T>{});
    }

    std::vector<T> logits(len);
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        const Block<T>& blk = blocks[l];
        BlockCache<T>* bc = cache ? &cache->blocks[l] : nullptr;
        if (bc) bc->x_in = x;

        Mat<T> a = layernorm_forward(x, blk.ln1);
        Mat<T> q = linear_forward(a, blk.wq);
        Mat<T> k = linear_forward(a, blk.wk);
        Mat<T> v = linear_forward(a, blk.wv);

        Mat<T> probs(H * len, len);
        Mat<T> ctx(len, W);
        for (std::size_t h = 0; h < H; ++h) {
            const std::size_t off = h * Dh;
            for (std::size_t i = 0; i < len; ++i) {
                // Causal + padding mask: keys j <= i with mask[j] == 1.
                T mx = T(0);
                bool any = false;
                for (std::size_t j = 0; j <= i; ++j) {
                    if (!seq.mask[j]) continue;
                    logits[j] = dot(q[i] + off, k[j] + off, Dh) * scale;
                    if (!any || logits[j] > mx) mx = logits[j];
                    any = true;
                }
                if (!any) continue;  // row stays zero; cannot happen when mask[0] == 1
                T denom = T(0);
                for (std::size_t j = 0; j <= i; ++j) {
                    if (!seq.mask[j]) continue;
                    logits[j] = std::exp(logits[j] - mx);
                    denom += logits[j];
                }
                T* prow = probs[h * len + i];
                T* ci = ctx[i];
                for (std::size_t j = 0; j <= i; ++j) {
                    if (!seq.mask[j]) continue;
                    const T p = logits[j] / denom;
                    prow[j] = p;
                    const T* vj = v[j] + off;
                    for (std::size_t c = 0; c < Dh; ++c) ci[off + c] += p * vj[c];
                }
            }
        }

        Mat<T> attn_out = linear_forward(ctx, blk.wo);
        Mat<T> x_mid(len, W);
        for (std::size_t i = 0; i < len; ++i)
            for (std::size_t j = 0; j < W; ++j) x_mid[i][j] = x[i][j] + attn_out[i][j];

        Mat<T> m = layernorm_forward(x_mid, blk.ln2);
        Mat<T> f1 = linear_forward(m, blk.fc1);
        Mat<T> act(len, cfg.mlp_dim());
        for (std::size_t i = 0; i < len; ++i)
            for (std::size_t j = 0; j < cfg.mlp_dim(); ++j) act[i][j] = gelu(f1[i][j]);
        Mat<T> f2 = linear_forward(act, blk.fc2);

        Mat<T> x_out(len, W);
        for (std::size_t i = 0; i < len; ++i)
            for (std::size_t j = 0; j < W; ++j) x_out[i][j] = x_mid[i][j] + f2[i][j];

        if (bc) {
            bc->ln1_out = std::move(a);
            bc->q = std::move(q);
            bc->k = std::move(k);
            bc->v = std::move(v);
            bc->probs = std::move(probs);
            bc->ctx = std::move(ctx);
            bc->x_mid = std::move(x_mid);
            bc->ln2_out = std::move(m);
            bc->fc1_pre = std::move(f1);
            bc->fc1_act = std::move(act);
        }
        x = std::move(x_out);
    }

    if (cache) cache->pre_final = x;
    Mat<T> y = cfg.final_layer_norm ? layernorm_forward(x, ln_final) : std::move(x);
    for (std::size_t p = 0; p < len; ++p) {
        if (seq.mask[p]) continue;
        T* yp = y[p];
        for (std::size_t j = 0; j < cfg.width; ++j) yp[j] = T(0);
    }

    EmbeddingSet<T> out;
    out.data = std::move(y);
    out.mask = seq.mask;
    out.kind = EmbeddingKind::text;
    return out;
}

template <typename T>
void TextEncoder<T>::backward(const tokenizer::TokenSequence& seq, const ForwardCache<T>& cache,
                              const Mat<T>& upstream) {
    const std::size_t len = cache.len;
    if (len == 0) throw std::invalid_argument("text_backward: missing forward cache");
    if (upstream.rows() != len || upstream.cols() != cfg.width)
        throw std::invalid_argument("text_backward: upstream shape mismatch");
    if (cache.blocks.size() != cfg.n_layers)
        throw std::invalid_argument("text_backward: cache depth mismatch");

    const std::size_t W = cfg.width, H = cfg.n_heads, Dh = cfg.head_dim();
    const T scale = T(1) / std::sqrt(static_cast<T>(Dh));

    Mat<T> dy = upstream;
    for (std::size_t p = 0; p < len; ++p) {
        if (seq.mask[p]) continue;
        for (std::size_t j = 0; j < W; ++j) dy[p][j] = T(0);
    }

    Mat<T> dx = cfg.final_layer_norm ? layernorm_backward(cache.pre_final, ln_final, dy)
                                     : std::move(dy);

    for (std::size_t l = cfg.n_layers; l-- > 0;) {
        Block<T>& blk = blocks[l];
        const BlockCache<T>& bc = cache.blocks[l];

        // MLP half: x_out = x_mid + fc2(gelu(fc1(ln2(x_mid))))
        Mat<T> d_act = linear_backward(bc.fc1_act, blk.fc2, dx);
        Mat<T> d_f1(len, cfg.mlp_dim());
        for (std::size_t i = 0; i < len; ++i)
            for (std::size_t j = 0; j < cfg.mlp_dim(); ++j)
                d_f1[i][j] = d_act[i][j] * gelu_grad(bc.fc1_pre[i][j]);
        Mat<T> d_m = linear_backward(bc.ln2_out, blk.fc1, d_f1);
        Mat<T> d_x_mid = layernorm_backward(bc.x_mid, blk.ln2, d_m);
        for (std::size_t i = 0; i < len; ++i)
            for (std::size_t j = 0; j < W; ++j) d_x_mid[i][j] += dx[i][j];

        // Attention half: x_mid = x_in + wo(ctx)
        Mat<T> d_ctx = linear_backward(bc.ctx, blk.wo, d_x_mid);
        Mat<T> dq(len, W), dk(len, W), dv(len, W);
        std::vector<T> dprobs(len);
        for (std::size_t h = 0; h < H; ++h) {
            const std::size_t off = h * Dh;
            for (std::size_t i = 0; i < len; ++i) {
                const T* prow = bc.probs[h * len + i];
                const T* dci = d_ctx[i] + off;
                T dot_pd = T(0);
                for (std::size_t j = 0; j <= i; ++j) {
                    if (!seq.mask[j]) continue;
                    dprobs[j] = dot(dci, bc.v[j] + off, Dh);
                    dot_pd += prow[j] * dprobs[j];
                    T* dvj = dv[j] + off;
                    const T p = prow[j];
                    for (std::size_t c = 0; c < Dh; ++c) dvj[c] += p * dci[c];
                }
                T* dqi = dq[i] + off;
                for (std::size_t j = 0; j <= i; ++j) {
                    if (!seq.mask[j]) continue;
                    const T dlogit = prow[j] * (dprobs[j] - dot_pd) * scale;
                    if (dlogit == T(0)) continue;
                    const T* kj = bc.k[j] + off;
                    const T* qi = bc.q[i] + off;
                    T* dkj = dk[j] + off;
                    for (std::size_t c = 0; c < Dh; ++c) {
                        dqi[c] += dlogit * kj[c];
                        dkj[c] += dlogit * qi[c];
                    }
                }
            }
        }

        Mat<T> d_a = linear_backward(bc.ln1_out, blk.wq, dq);
        {
            Mat<T> tmp = linear_backward(bc.ln1_out, blk.wk, dk);
            for (std::size_t i = 0; i < d_a.size(); ++i) d_a.data()[i] += tmp.data()[i];
            tmp = linear_backward(bc.ln1_out, blk.wv, dv);
            for (std::size_t i = 0; i < d_a.size(); ++i) d_a.data()[i] += tmp.data()[i];
        }
        Mat<T> d_x_in = layernorm_backward(bc.x_in, blk.ln1, d_a);
        for (std::size_t i = 0; i < len; ++i)
            for (std::size_t j = 0; j < W; ++j) d_x_in[i][j] += d_x_mid[i][j];
        dx = std::move(d_x_in);
    }

    for (std::size_t p = 0; p < len; ++p) {
        if (!seq.mask[p]) continue;  // padded rows carry exact zeros; skip the no-op
        const T* g = dx[p];
        T* gtok = g_token_embedding[static_cast<std::size_t>(seq.ids[p])];
        T* gpos = g_positional_embedding[p];
        for (std::size_t j = 0; j < W; ++j) {
            gtok[j] += g[j];
            gpos[j] += g[j];
        }
    }
}

template <typename T>
void TextEncoder<T>::zero_grads() {
    g_token_embedding.zero();
    g_positional_embedding.zero();
    for (auto& blk : blocks) {
        blk.ln1.zero_grad();
        blk.ln2.zero_grad();
        blk.wq.zero_grad();
        blk.wk.zero_grad();
        blk.wv.zero_grad();
        blk.wo.zero_grad();
        blk.fc1.zero_grad();
        blk.fc2.zero_grad();
    }
    ln_final.zero_grad();
}

template <typename T>
void TextEncoder<T>::visit_params(const ParamVisitor& fn, const std::string& prefix) {
    fn(prefix + "token_embedding", &token_embedding, &g_token_embedding, false);
    fn(prefix + "positional_embedding", &positional_embedding, &g_positional_embedding, false);
    for (std::size_t l = 0; l < blocks.size(); ++l) {
        Block<T>& blk = blocks[l];
        const std::string base = prefix + "layers." + std::to_string(l) + ".";
        fn(base + "ln1.gamma", &blk.ln1.gamma, &blk.ln1.ggamma, false);
        fn(base + "ln1.beta", &blk.ln1.beta, &blk.ln1.gbeta, false);
        auto lin = [&](const std::string& name, Linear<T>& x) {
            fn(base + name + ".weight", &x.w, &x.gw, true);
            fn(base + name + ".bias", &x.b, &x.gb, false);
        };
        lin("attn.q", blk.wq);
        lin("attn.k", blk.wk);
        lin("attn.v", blk.wv);
        lin("attn.out", blk.wo);
        fn(base + "ln2.gamma", &blk.ln2.gamma, &blk.ln2.ggamma, false);
        fn(base + "ln2.beta", &blk.ln2.beta, &blk.ln2.gbeta, false);
        lin("mlp.fc1", blk.fc1);
        lin("mlp.fc2", blk.fc2);
    }
    fn(prefix + "ln_final.gamma", &ln_final.gamma, &ln_final.ggamma, false);
    fn(prefix + "ln_final.beta", &ln_final.beta, &ln_final.gbeta, false);
}

template <typename T>
template <typename U>
TextEncoder<U> TextEncoder<T>::cast() const {
    TextEncoder<U> out;
    out.cfg = cfg;
    out.token_embedding = token_embedding.template cast<U>();
    out.positional_embedding = positional_embedding.template cast<U>();
    out.g_token_embedding = Mat<U>(cfg.vocab_size, cfg.width);
    out.g_positional_embedding = Mat<U>(cfg.max_len, cfg.width);
    out.blocks.resize(blocks.size());
    auto cast_lin = [](const Linear<T>& a) {
        Linear<U> r;
        r.w = a.w.template cast<U>();
        r.b = a.b.template cast<U>();
        r.gw = Mat<U>(a.w.rows(), a.w.cols());
        r.gb = Mat<U>(a.b.rows(), a.b.cols());
        return r;
    };
    auto cast_ln = [](const LayerNorm<T>& a) {
        LayerNorm<U> r;
        r.gamma = a.gamma.template cast<U>();
        r.beta = a.beta.template cast<U>();
        r.ggamma = Mat<U>(a.gamma.rows(), a.gamma.cols());
        r.gbeta = Mat<U>(a.beta.rows(), a.beta.cols());
        return r;
    };
    for (std::size_t l = 0; l < blocks.size(); ++l) {
        out.blocks[l].ln1 = cast_ln(blocks[l].ln1);
        out.blocks[l].ln2 = cast_ln(blocks[l].ln2);
        out.blocks[l].wq = cast_lin(blocks[l].wq);
        out.blocks[l].wk = cast_lin(blocks[l].wk);
        out.blocks[l].wv = cast_lin(blocks[l].wv);
        out.blocks[l].wo = cast_lin(blocks[l].wo);
        out.blocks[l].fc1 = cast_lin(blocks[l].fc1);
        out.blocks[l].fc2 = cast_lin(blocks[l].fc2);
    }
    out.ln_final = cast_ln(ln_final);
    return out;
}

template struct Linear<float>;
template struct Linear<double>;
template struct LayerNorm<float>;
template struct LayerNorm<double>;
template class TextEncoder<float>;
template class TextEncoder<double>;
template TextEncoder<double> TextEncoder<float>::cast<double>() const;
template TextEncoder<float> TextEncoder<double>::cast<float>() const;

}  // namespace wukong::textenc
