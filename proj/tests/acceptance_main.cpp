// Release gate: one self-contained check per acceptance criterion.  Each
// criterion prints a single [PASS]/[FAIL] line with its wall-clock time and
// the binary exits 0 only when every line passed.  Checks compare library
// output against independent brute-force references, closed forms, and
// committed golden files -- never against the library itself.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "oracles.hpp"
#include "test_util.hpp"
#include "wukong/align.hpp"
#include "wukong/corpus.hpp"
#include "wukong/embedding.hpp"
#include "wukong/evalkit.hpp"
#include "wukong/loss.hpp"
#include "wukong/matrix.hpp"
#include "wukong/model.hpp"
#include "wukong/textenc.hpp"
#include "wukong/tokenizer.hpp"
#include "wukong/train.hpp"
#include "wukong/unicode.hpp"

namespace {

using wukong::EmbeddingSet;
using wukong::Grid;
using wukong::Mat;

// Accumulates the first failure of a criterion so the summary line can say
// what went wrong without aborting the whole gate.
struct Gate {
    bool ok = true;
    std::string why;

    void expect(bool cond, const std::string& msg) {
        if (ok && !cond) {
            ok = false;
            why = msg;
        }
    }
};

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

double max_abs_diff(const Mat<double>& a, const Mat<double>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        return std::numeric_limits<double>::infinity();
    double m = 0.0;
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) m = std::max(m, std::abs(a[r][c] - b[r][c]));
    return m;
}

bool same_cells(const Mat<std::int32_t>& a, const Mat<std::int32_t>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c)
            if (a[r][c] != b[r][c]) return false;
    return true;
}

// ---------------------------------------------------------------------------
// 1. Report arithmetic reproduces the published benchmark rows.
// ---------------------------------------------------------------------------

bool crit_report_rows(Gate& g) {
    // Mean recall over the three retrieval recalls of one benchmark row.
    const double mr = wukong::evalkit::report_average({37.3, 64.2, 73.9});
    g.expect(wukong::evalkit::format_fixed(mr, 1) == "58.5",
             "mean recall printed as " + wukong::evalkit::format_fixed(mr, 1));

    // Mean recall over a six-entry row (both directions, three cutoffs).
    const double mr6 = wukong::evalkit::report_average({13.4, 31.2, 40.7, 8.0, 20.7, 29.5});
    g.expect(wukong::evalkit::format_fixed(mr6, 1) == "23.9",
             "six-entry mean recall printed as " + wukong::evalkit::format_fixed(mr6, 1));

    // Average top-1 accuracy over a ten-dataset classification row.
    const double avg = wukong::evalkit::report_average(
        {72.3, 35.9, 72.0, 58.0, 18.8, 83.6, 18.4, 28.4, 25.5, 24.3});
    g.expect(std::abs(avg - 43.72) < 1e-12, "ten-entry average = " + fmt(avg));
    g.expect(wukong::evalkit::format_fixed(avg, 2) == "43.72",
             "ten-entry average printed as " + wukong::evalkit::format_fixed(avg, 2));

    // The first row must also fall out of the ranking code itself: plant score
    // matrices whose per-query ranks hit the three recall levels exactly.
    const std::size_t n = 1000, cands = 12;
    Mat<float> s_img(n, cands), s_txt(cands, n);
    std::vector<std::vector<std::uint32_t>> pos(n);
    for (std::size_t q = 0; q < n; ++q) {
        const std::size_t rank = q < 373 ? 0 : q < 642 ? 1 : q < 739 ? 5 : 11;
        const std::size_t p = q % cands;
        pos[q] = {static_cast<std::uint32_t>(p)};
        s_img[q][p] = 1.0F;
        std::size_t placed = 0;
        for (std::size_t c = 0; c < cands && placed < rank; ++c) {
            if (c == p) continue;
            s_img[q][c] = 2.0F;
            ++placed;
        }
    }
    wukong::evalkit::RetrievalGroundTruth gt;
    gt.i2t = wukong::evalkit::DirectionGt{pos};
    const auto rep = wukong::evalkit::retrieval_from_scores(s_img, s_txt, gt,
                                                            wukong::evalkit::kDefaultKs);
    g.expect(rep.i2t.size() == 3 && rep.i2t[0] == 37.3 && rep.i2t[1] == 64.2 &&
                 rep.i2t[2] == 73.9,
             "planted ranks gave recalls " +
                 (rep.i2t.size() == 3 ? fmt(rep.i2t[0]) + "," + fmt(rep.i2t[1]) + "," +
                                            fmt(rep.i2t[2])
                                      : std::string("of the wrong arity")));
    g.expect(wukong::evalkit::format_fixed(rep.mean_recall, 1) == "58.5",
             "planted mean recall printed as " +
                 wukong::evalkit::format_fixed(rep.mean_recall, 1));
    return g.ok;
}

// ---------------------------------------------------------------------------
// 2. Similarity kernels match brute-force references on random instances.
// ---------------------------------------------------------------------------

Mat<double> ref_normalize_rows(const Mat<double>& m) {
    Mat<double> out(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double n = std::sqrt(oracle::ref_dot(m[r], m[r], m.cols()));
        for (std::size_t c = 0; c < m.cols(); ++c) out[r][c] = n == 0.0 ? 0.0 : m[r][c] / n;
    }
    return out;
}

// Quantized coordinates force exact score ties so the argmax tie rule is
// actually exercised, not just reachable in theory.
double draw_coord(std::mt19937_64& rng, bool quantized) {
    if (quantized) {
        std::uniform_int_distribution<int> q(-1, 1);
        return 0.5 * q(rng);
    }
    std::normal_distribution<double> n(0.0, 1.0);
    return n(rng);
}

bool crit_similarity_oracles(Gate& g) {
    namespace align = wukong::align;
    std::mt19937_64 rng(0xA11CE5);
    std::uniform_int_distribution<std::size_t> dim(1, 16);
    std::uniform_int_distribution<std::size_t> count(1, 32);
    std::uniform_int_distribution<std::size_t> side(1, 5);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    for (int trial = 0; trial < 1000 && g.ok; ++trial) {
        const bool quantized = trial % 4 == 0;
        const std::size_t d = dim(rng);
        const std::size_t n1 = count(rng);
        const std::size_t n2 = count(rng);

        // Global kernel: plain pairwise dot products.
        Mat<double> ga(n1, d), gb(n2, d);
        for (std::size_t r = 0; r < n1; ++r)
            for (std::size_t c = 0; c < d; ++c) ga[r][c] = draw_coord(rng, quantized);
        for (std::size_t r = 0; r < n2; ++r)
            for (std::size_t c = 0; c < d; ++c) gb[r][c] = draw_coord(rng, quantized);
        const auto gs = align::global_similarity(ga, gb);
        const auto gr = oracle::ref_global_similarity(ga, gb);
        g.expect(max_abs_diff(gs, gr) < 1e-6,
                 "global kernel differs by " + fmt(max_abs_diff(gs, gr)));

        // Token-wise kernel with masks: scores and both argmax caches.
        EmbeddingSet<double> img, txt;
        img.data = Mat<double>(n1, d);
        txt.data = Mat<double>(n2, d);
        img.mask.assign(n1, 0);
        txt.mask.assign(n2, 0);
        for (std::size_t r = 0; r < n1; ++r) {
            img.mask[r] = r == 0 || unit(rng) < 0.8 ? 1 : 0;
            for (std::size_t c = 0; c < d; ++c) img.data[r][c] = draw_coord(rng, quantized);
        }
        for (std::size_t r = 0; r < n2; ++r) {
            txt.mask[r] = r == 0 || unit(rng) < 0.8 ? 1 : 0;
            for (std::size_t c = 0; c < d; ++c) txt.data[r][c] = draw_coord(rng, quantized);
        }
        align::TokenwiseCache<double> cache;
        const auto tw = align::tokenwise_similarity(img, txt, &cache);
        const auto tr = oracle::ref_tokenwise(img, txt);
        g.expect(std::abs(tw.s_image - tr.s_image) < 1e-6 &&
                     std::abs(tw.s_text - tr.s_text) < 1e-6,
                 "token-wise scores differ: " + fmt(tw.s_image) + " vs " + fmt(tr.s_image));
        g.expect(cache.img_best == tr.img_best && cache.txt_best == tr.txt_best,
                 "token-wise argmax partners differ from reference");

        // Word-patch alignment map (grid input, exact argmax with tie rule).
        const std::size_t h = side(rng), w = side(rng);
        EmbeddingSet<double> grid;
        grid.data = Mat<double>(h * w, d);
        grid.mask.assign(h * w, 1);
        grid.grid = Grid{static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(w)};
        for (std::size_t r = 0; r < h * w; ++r)
            for (std::size_t c = 0; c < d; ++c) grid.data[r][c] = draw_coord(rng, quantized);
        const auto amap = align::word_patch_alignment(grid, txt);
        const auto aref = oracle::ref_word_patch_alignment(grid, txt);
        g.expect(same_cells(amap, aref), "alignment map differs from reference");

        // Reduced-token chain: conv reduction, re-normalization, token-wise.
        const std::size_t d_mid = 1 + d % 4;
        const std::size_t n_out = 1 + trial % 3;
        align::TokenReducer<double> red;
        red.init(d, d_mid, n_out, rng);
        for (std::size_t c = 0; c < d_mid; ++c) red.conv1_b[0][c] = draw_coord(rng, false) * 0.3;
        for (std::size_t c = 0; c < n_out; ++c) red.conv2_b[0][c] = draw_coord(rng, false) * 0.3;
        const auto z = align::token_reduce(grid, red);
        const auto zr = oracle::ref_token_reduce(grid.data, h, w, red.conv1_w, red.conv1_b,
                                                 red.conv2_w, red.conv2_b);
        g.expect(max_abs_diff(z.data, zr) < 1e-6,
                 "token reduction differs by " + fmt(max_abs_diff(z.data, zr)));

        const auto rsim = align::reduced_tokenwise_similarity(grid, txt, red);
        EmbeddingSet<double> zref;
        zref.data = ref_normalize_rows(zr);
        zref.mask.assign(zr.rows(), 1);
        const auto rref = oracle::ref_tokenwise(zref, txt);
        g.expect(std::abs(rsim.s_image - rref.s_image) < 1e-6 &&
                     std::abs(rsim.s_text - rref.s_text) < 1e-6,
                 "reduced-token scores differ: " + fmt(rsim.s_image) + " vs " +
                     fmt(rref.s_image));
    }
    return g.ok;
}

// ---------------------------------------------------------------------------
// 3. Analytic gradients match central finite differences.
// ---------------------------------------------------------------------------

bool fd_matches(double analytic, double numeric) {
    return oracle::rel_err(analytic, numeric) < 1e-4;
}

bool crit_gradients(Gate& g) {
    namespace align = wukong::align;
    std::mt19937_64 rng(0xFD0);
    std::normal_distribution<double> nd(0.0, 1.0);

    // Contrastive loss: both score matrices plus the temperature parameter.
    for (int inst = 0; inst < 50 && g.ok; ++inst) {
        const std::size_t b = 2 + inst % 4;
        wukong::loss::BatchSimilarities<double> sims;
        sims.s_image = testutil::random_mat<double>(rng, b, b);
        sims.s_text = testutil::random_mat<double>(rng, b, b);
        double log_tau = std::log(0.2 + 0.05 * (inst % 10));
        auto current = [&] {
            return wukong::loss::contrastive_loss(
                       sims, wukong::loss::Temperature<double>{log_tau})
                .value;
        };
        const auto res = wukong::loss::contrastive_loss(
            sims, wukong::loss::Temperature<double>{log_tau});
        for (int k = 0; k < 4 && g.ok; ++k) {
            const std::size_t r = rng() % b, c = rng() % b;
            double* cell = k % 2 == 0 ? &sims.s_image[r][c] : &sims.s_text[r][c];
            const double ana = k % 2 == 0 ? res.grad_s_image[r][c] : res.grad_s_text[r][c];
            const double num = oracle::central_diff(current, cell);
            g.expect(fd_matches(ana, num), "contrastive score gradient: analytic " +
                                               fmt(ana) + " vs numeric " + fmt(num));
        }
        const double num_tau = oracle::central_diff(current, &log_tau);
        g.expect(fd_matches(res.grad_log_tau, num_tau),
                 "temperature gradient: analytic " + fmt(res.grad_log_tau) +
                     " vs numeric " + fmt(num_tau));
    }

    // Normalized projection head: input and weight gradients.
    for (int inst = 0; inst < 50 && g.ok; ++inst) {
        const std::size_t n = 1 + inst % 5, d_in = 2 + inst % 5, d_out = 1 + inst % 4;
        auto set = testutil::random_set<double>(rng, n, d_in);
        align::ProjectionHead<double> head;
        head.init(d_in, d_out, rng, 0.5);
        const Mat<double> coef = testutil::random_mat<double>(rng, n, d_out);
        auto value = [&] {
            const auto out = align::l2_project(set, head);
            double s = 0.0;
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t c = 0; c < d_out; ++c) s += coef[r][c] * out.data[r][c];
            return s;
        };
        align::L2ProjectCache<double> cache;
        align::l2_project(set, head, &cache);
        head.zero_grad();
        const auto d_input = align::l2_project_backward(cache, head, coef);
        for (int k = 0; k < 3 && g.ok; ++k) {
            const std::size_t r = rng() % d_in, c = rng() % d_out;
            const double num = oracle::central_diff(value, &head.weight[r][c]);
            g.expect(fd_matches(head.grad[r][c], num),
                     "projection weight gradient: analytic " + fmt(head.grad[r][c]) +
                         " vs numeric " + fmt(num));
        }
        for (int k = 0; k < 3 && g.ok; ++k) {
            std::size_t r = rng() % n;
            while (set.mask[r] == 0) r = (r + 1) % n;
            const std::size_t c = rng() % d_in;
            const double num = oracle::central_diff(value, &set.data[r][c]);
            g.expect(fd_matches(d_input[r][c], num),
                     "projection input gradient: analytic " + fmt(d_input[r][c]) +
                         " vs numeric " + fmt(num));
        }
    }

    // Token reducer: all four parameter tensors plus the spatial input.
    for (int inst = 0; inst < 50 && g.ok; ++inst) {
        const std::size_t h = 1 + inst % 3, w = 1 + (inst / 3) % 3;
        const std::size_t d_in = 2 + inst % 3, d_mid = 1 + inst % 3, n_out = 1 + inst % 2;
        EmbeddingSet<double> grid;
        grid.data = testutil::random_mat<double>(rng, h * w, d_in);
        grid.mask.assign(h * w, 1);
        grid.grid = Grid{static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(w)};
        align::TokenReducer<double> red;
        red.init(d_in, d_mid, n_out, rng, 0.5);
        for (std::size_t c = 0; c < d_mid; ++c) red.conv1_b[0][c] = 0.3 * nd(rng);
        for (std::size_t c = 0; c < n_out; ++c) red.conv2_b[0][c] = 0.3 * nd(rng);
        const Mat<double> coef = testutil::random_mat<double>(rng, n_out, d_in);
        auto value = [&] {
            const auto z = align::token_reduce(grid, red);
            double s = 0.0;
            for (std::size_t r = 0; r < n_out; ++r)
                for (std::size_t c = 0; c < d_in; ++c) s += coef[r][c] * z.data[r][c];
            return s;
        };
        align::TokenReduceCache<double> cache;
        align::token_reduce(grid, red, &cache);
        red.zero_grad();
        const auto d_spatial = align::token_reduce_backward(cache, red, coef);

        const std::size_t i1r = rng() % red.conv1_w.rows(), i1c = rng() % d_mid;
        const std::size_t i2c = rng() % d_mid;
        const std::size_t i3r = rng() % d_mid, i3c = rng() % n_out;
        const std::size_t i4c = rng() % n_out;
        const std::pair<double*, double> probes[] = {
            {&red.conv1_w[i1r][i1c], red.g_conv1_w[i1r][i1c]},
            {&red.conv1_b[0][i2c], red.g_conv1_b[0][i2c]},
            {&red.conv2_w[i3r][i3c], red.g_conv2_w[i3r][i3c]},
            {&red.conv2_b[0][i4c], red.g_conv2_b[0][i4c]},
        };
        for (const auto& [param, analytic] : probes) {
            if (!g.ok) break;
            const double num = oracle::central_diff(value, param);
            g.expect(fd_matches(analytic, num), "reducer parameter gradient: analytic " +
                                                    fmt(analytic) + " vs numeric " + fmt(num));
        }
        for (int k = 0; k < 2 && g.ok; ++k) {
            const std::size_t r = rng() % (h * w), c = rng() % d_in;
            const double num = oracle::central_diff(value, &grid.data[r][c]);
            g.expect(fd_matches(d_spatial[r][c], num),
                     "reducer input gradient: analytic " + fmt(d_spatial[r][c]) +
                         " vs numeric " + fmt(num));
        }
    }

    // One-block width-8 text encoder: sampled parameter gradients.
    for (int inst = 0; inst < 50 && g.ok; ++inst) {
        wukong::textenc::TextEncoderConfig cfg;
        cfg.n_layers = 1;
        cfg.n_heads = 2;
        cfg.width = 8;
        cfg.max_len = 6;
        cfg.vocab_size = 12;
        wukong::textenc::TextEncoder<double> enc;
        enc.init(cfg, rng);

        wukong::tokenizer::TokenSequence seq;
        seq.ids.assign(cfg.max_len, 0);
        seq.mask.assign(cfg.max_len, 0);
        const std::size_t content = 1 + inst % 3;
        seq.ids[0] = 2;
        seq.mask[0] = 1;
        for (std::size_t i = 1; i <= content; ++i) {
            seq.ids[i] = 4 + static_cast<std::int32_t>(rng() % 8);
            seq.mask[i] = 1;
        }
        seq.ids[content + 1] = 3;
        seq.mask[content + 1] = 1;
        seq.cls_pos = 0;
        seq.sep_pos = content + 1;

        const Mat<double> coef = testutil::random_mat<double>(rng, cfg.max_len, cfg.width);
        auto value = [&] {
            const auto out = enc.forward(seq);
            double s = 0.0;
            for (std::size_t r = 0; r < out.data.rows(); ++r) {
                if (out.mask[r] == 0) continue;
                for (std::size_t c = 0; c < cfg.width; ++c) s += coef[r][c] * out.data[r][c];
            }
            return s;
        };
        wukong::textenc::ForwardCache<double> cache;
        const auto out = enc.forward(seq, &cache);
        enc.zero_grads();
        Mat<double> upstream(cfg.max_len, cfg.width);
        for (std::size_t r = 0; r < cfg.max_len; ++r)
            for (std::size_t c = 0; c < cfg.width; ++c)
                upstream[r][c] = out.mask[r] ? coef[r][c] : 0.0;
        enc.backward(seq, cache, upstream);

        std::vector<std::pair<Mat<double>*, Mat<double>*>> tensors;
        enc.visit_params([&](const std::string&, Mat<double>* v, Mat<double>* gr, bool) {
            tensors.emplace_back(v, gr);
        });
        for (int k = 0; k < 4 && g.ok; ++k) {
            auto& [v, gr] = tensors[(inst + k * 3) % tensors.size()];
            const std::size_t r = rng() % v->rows(), c = rng() % v->cols();
            const double num = oracle::central_diff(value, &(*v)[r][c]);
            g.expect(fd_matches((*gr)[r][c], num),
                     "text encoder gradient: analytic " + fmt((*gr)[r][c]) +
                         " vs numeric " + fmt(num));
        }
    }
    return g.ok;
}

// ---------------------------------------------------------------------------
// 4. Contrastive loss closed forms and permutation invariance.
// ---------------------------------------------------------------------------

bool crit_loss_closed_forms(Gate& g) {
    std::mt19937_64 rng(0xC10C);

    // A single pair has nothing to contrast against: the loss is exactly zero.
    for (int k = 0; k < 10 && g.ok; ++k) {
        wukong::loss::BatchSimilarities<double> sims;
        sims.s_image = testutil::random_mat<double>(rng, 1, 1, 3.0);
        sims.s_text = testutil::random_mat<double>(rng, 1, 1, 3.0);
        const auto res = wukong::loss::contrastive_loss(
            sims, wukong::loss::Temperature<double>::init(0.05 + 0.2 * k));
        g.expect(res.value == 0.0, "single-pair loss = " + fmt(res.value));
        g.expect(res.grad_s_image[0][0] == 0.0 && res.grad_s_text[0][0] == 0.0 &&
                     res.grad_log_tau == 0.0,
                 "single-pair gradients not exactly zero");
    }

    // Two pairs with identity scores at unit temperature.
    {
        wukong::loss::BatchSimilarities<double> sims;
        sims.s_image = Mat<double>(2, 2);
        sims.s_text = Mat<double>(2, 2);
        sims.s_image[0][0] = sims.s_image[1][1] = 1.0;
        sims.s_text[0][0] = sims.s_text[1][1] = 1.0;
        const auto res = wukong::loss::contrastive_loss(
            sims, wukong::loss::Temperature<double>::init(1.0));
        const double want = std::log(1.0 + std::exp(-1.0));
        g.expect(std::abs(res.value - want) < 1e-9,
                 "identity loss " + fmt(res.value) + " vs " + fmt(want));
    }

    // Relabeling the batch jointly must not change the loss at all: the
    // internal reductions sum in a value-ordered sequence.
    int perms = 0;
    for (int base = 0; base < 10 && g.ok; ++base) {
        const std::size_t b = 2 + base % 7;
        wukong::loss::BatchSimilarities<double> sims;
        sims.s_image = testutil::random_mat<double>(rng, b, b, 2.0);
        sims.s_text = testutil::random_mat<double>(rng, b, b, 2.0);
        const double tau = 0.05 + 0.1 * (base % 5);
        const double v0 =
            wukong::loss::contrastive_loss(sims, wukong::loss::Temperature<double>::init(tau))
                .value;
        std::vector<std::size_t> sigma(b);
        std::iota(sigma.begin(), sigma.end(), 0);
        for (int p = 0; p < 10 && g.ok; ++p) {
            std::shuffle(sigma.begin(), sigma.end(), rng);
            wukong::loss::BatchSimilarities<double> perm;
            perm.s_image = Mat<double>(b, b);
            perm.s_text = Mat<double>(b, b);
            for (std::size_t i = 0; i < b; ++i)
                for (std::size_t j = 0; j < b; ++j) {
                    perm.s_image[i][j] = sims.s_image[sigma[i]][sigma[j]];
                    perm.s_text[i][j] = sims.s_text[sigma[i]][sigma[j]];
                }
            const double v1 = wukong::loss::contrastive_loss(
                                  perm, wukong::loss::Temperature<double>::init(tau))
                                  .value;
            g.expect(v1 == v0, "permuted loss " + fmt(v1) + " != " + fmt(v0));
            ++perms;
        }
    }
    g.expect(perms == 100, "ran " + std::to_string(perms) + " permutations");
    return g.ok;
}

// ---------------------------------------------------------------------------
// 5. Filter golden partition, idempotence, and shard-merge invariance.
// ---------------------------------------------------------------------------

std::string make_record(const std::string& id, const std::string& caption, int w, int h,
                        const std::string& keyword) {
    nlohmann::json j;
    j["id"] = id;
    j["caption"] = caption;
    j["width"] = w;
    j["height"] = h;
    j["url"] = "https://example.test/" + id + ".jpg";
    if (!keyword.empty()) j["keyword"] = keyword;
    return j.dump();
}

std::vector<std::string> synthetic_corpus(std::size_t n, std::uint64_t seed) {
    static const std::vector<std::string> captions = {
        "蓝天白云",         "山水相连",     "查看源网页", "000.jpg",
        "今天天气很好",     "赌博网站广告", "张伟在海边", "一二三四五六七",
        "hello world",      "城市夜景真美", "云",         "甲乙丙丁戊己庚辛壬癸子丑",
    };
    static const std::vector<std::pair<int, int>> dims = {
        {640, 480}, {300, 900}, {150, 600}, {201, 201}, {1000, 320}, {250, 800},
    };
    std::mt19937_64 rng(seed);
    std::vector<std::string> lines;
    lines.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& cap = captions[rng() % captions.size()];
        const auto& [w, h] = dims[rng() % dims.size()];
        const std::string kw = rng() % 10 < 7 ? "k" + std::to_string(rng() % 7) : "";
        lines.push_back(make_record("s" + std::to_string(i), cap, w, h, kw));
    }
    return lines;
}

struct PipelineOutput {
    std::string kept;
    std::string rejects;
    wukong::corpus::PipelineStats stats;
};

PipelineOutput run_filter(const std::vector<std::string>& lines,
                          const wukong::corpus::FilterConfig& cfg,
                          const wukong::corpus::Lexicon& sensitive,
                          const wukong::corpus::Lexicon& names,
                          const wukong::corpus::FrequencyTable& freq) {
    std::string joined;
    for (const auto& l : lines) joined += l + "\n";
    std::istringstream in(joined);
    std::ostringstream kept, rejects;
    PipelineOutput out;
    out.stats = wukong::corpus::run_pipeline(in, kept, rejects, cfg, sensitive, names, freq);
    out.kept = kept.str();
    out.rejects = rejects.str();
    return out;
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

bool crit_filter_pipeline(Gate& g) {
    using namespace wukong::corpus;

    // Committed 12-record fixture: every rejection stage fires at least once
    // and the outputs must match the golden files byte for byte.
    {
        const std::string input = testutil::read_file(testutil::data_path("filter_input.jsonl"));
        FilterConfig cfg;
        cfg.max_text_frequency = 2;
        cfg.keyword_cap = 2;
        const auto sensitive = Lexicon::load(testutil::data_path("sensitive.txt"));
        const auto names = Lexicon::load(testutil::data_path("names.txt"));
        std::istringstream freq_in(input);
        const auto freq = frequency_pass(freq_in);
        const auto out = run_filter(split_lines(input), cfg, sensitive, names, freq);
        g.expect(out.kept == testutil::read_file(testutil::data_path("filter_expected_kept.jsonl")),
                 "kept output differs from golden file");
        g.expect(out.rejects ==
                     testutil::read_file(testutil::data_path("filter_expected_rejects.jsonl")),
                 "reject log differs from golden file");
        g.expect(out.stats.input == 12 && out.stats.kept == 3 && out.stats.rejected == 9 &&
                     out.stats.parse_errors == 0,
                 "golden stats were " + std::to_string(out.stats.kept) + " kept / " +
                     std::to_string(out.stats.rejected) + " rejected");
    }

    // Frequency boundary at the default threshold: a caption repeated eleven
    // times (one past the default limit of ten) is dropped everywhere, while
    // ten copies all pass.
    {
        std::vector<std::string> lines;
        for (int i = 0; i < 11; ++i)
            lines.push_back(make_record("d" + std::to_string(i), "重复的测试标题", 640, 480, ""));
        lines.push_back(make_record("d11", "独一无二的标题", 640, 480, ""));
        const FilterConfig cfg;
        const Lexicon none;
        const auto freq = frequency_pass(lines);
        const auto out = run_filter(lines, cfg, none, none, freq);
        g.expect(out.stats.kept == 1 && out.stats.rejected == 11,
                 "default-threshold run kept " + std::to_string(out.stats.kept));
        for (const auto& line : split_lines(out.rejects)) {
            const auto j = nlohmann::json::parse(line);
            g.expect(j.at("stage") == "frequency",
                     "unexpected rejection stage " + j.at("stage").get<std::string>());
            if (!g.ok) break;
        }
        std::vector<std::string> ten(lines.begin(), lines.begin() + 10);
        const auto out10 = run_filter(ten, cfg, none, none, frequency_pass(ten));
        g.expect(out10.stats.kept == 10,
                 "ten duplicates kept " + std::to_string(out10.stats.kept));
    }

    // 10k synthetic records: conservation, idempotence, shard-merge.
    {
        const auto lines = synthetic_corpus(10000, 77);
        FilterConfig cfg;
        cfg.max_text_frequency = 2000;
        cfg.keyword_cap = 400;
        const auto sensitive = Lexicon::parse("赌博\n");
        const auto names = Lexicon::parse("张伟\n");

        const auto freq_all = frequency_pass(lines);
        const auto first = run_filter(lines, cfg, sensitive, names, freq_all);
        g.expect(first.stats.input == 10000 &&
                     first.stats.kept + first.stats.rejected == first.stats.input &&
                     first.stats.parse_errors == 0,
                 "synthetic stats do not add up");
        g.expect(first.stats.kept > 1000 && first.stats.rejected > 1000,
                 "synthetic corpus is not a meaningful mix: kept " +
                     std::to_string(first.stats.kept));

        // Idempotence: re-filtering the kept stream keeps everything.
        const auto kept_lines = split_lines(first.kept);
        const auto second =
            run_filter(kept_lines, cfg, sensitive, names, frequency_pass(kept_lines));
        g.expect(second.kept == first.kept, "second pass changed the kept stream");
        g.expect(second.stats.rejected == 0,
                 "second pass rejected " + std::to_string(second.stats.rejected));

        // Shard-merge invariance: counting in three shards and merging gives
        // the same table, and the same pipeline output, as one pass.
        FrequencyTable merged;
        for (std::size_t shard = 0; shard < 3; ++shard) {
            std::vector<std::string> part;
            for (std::size_t i = shard; i < lines.size(); i += 3) part.push_back(lines[i]);
            merged.merge(frequency_pass(part));
        }
        g.expect(merged == freq_all, "merged shard counts differ from single pass");
        const auto sharded = run_filter(lines, cfg, sensitive, names, merged);
        g.expect(sharded.kept == first.kept && sharded.rejects == first.rejects,
                 "sharded frequency table changed the pipeline output");
    }
    return g.ok;
}

// ---------------------------------------------------------------------------
// 6. Character-grained tokenization and greedy longest-match conformance.
// ---------------------------------------------------------------------------

bool crit_tokenizer(Gate& g) {
    namespace tok = wukong::tokenizer;
    const auto vocab = tok::Vocab::load(testutil::data_path("toy_vocab.txt"));
    std::mt19937_64 rng(0x70C);

    static const std::vector<std::string> units = {
        "山", "一", "二", "三", "水", "天", "云", "子", "丑", "寅",
        "龘",  // not in the vocabulary
        "hello", "world", "abc", "ab", "a", ",", "。", "！", " ",
    };
    std::size_t checked_cjk = 0;
    for (int trial = 0; trial < 5000 && g.ok; ++trial) {
        std::string caption;
        const std::size_t parts = 1 + rng() % 10;
        for (std::size_t p = 0; p < parts; ++p) caption += units[rng() % units.size()];
        const auto words = tok::pretokenize(caption, tok::Granularity::character);
        for (const auto& word : words) {
            const auto cps = wukong::uni::decode_utf8(word);
            bool has_cjk = false;
            for (const char32_t cp : cps) has_cjk = has_cjk || wukong::uni::is_cjk(cp);
            if (!has_cjk) continue;
            g.expect(cps.size() == 1, "character-grain word '" + word + "' holds " +
                                          std::to_string(cps.size()) + " code points");
            if (const auto id = vocab.lookup(word)) {
                const auto pieces = tok::wordpiece_tokenize(word, vocab);
                g.expect(pieces.size() == 1 && pieces[0] == *id,
                         "in-vocabulary character '" + word + "' did not map to its own id");
                ++checked_cjk;
            }
            if (!g.ok) break;
        }
    }
    g.expect(checked_cjk > 1000, "too few in-vocabulary characters exercised: " +
                                     std::to_string(checked_cjk));

    // Greedy longest-match-first against an independent reference.
    const std::map<std::string, std::int32_t> index(vocab.index.begin(), vocab.index.end());
    for (int trial = 0; trial < 1000 && g.ok; ++trial) {
        std::string word;
        const std::size_t len = 1 + rng() % 10;
        for (std::size_t i = 0; i < len; ++i) word += static_cast<char>('a' + rng() % 4);
        const auto got = tok::wordpiece_tokenize(word, vocab);
        const auto want = oracle::ref_greedy_wordpiece(word, index, vocab.unk_id);
        g.expect(got == want, "greedy split of '" + word + "' differs from reference");
    }
    return g.ok;
}

// ---------------------------------------------------------------------------
// 7. Contrastive tuning over frozen image embeddings solves a retrieval task.
// ---------------------------------------------------------------------------

wukong::WkebFile smoke_images(std::size_t n, std::size_t dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> nd(0.0F, 1.0F);
    const std::size_t tokens = 4;
    wukong::WkebFile file;
    file.header.n_items = static_cast<std::uint32_t>(n);
    file.header.n_tokens = static_cast<std::uint32_t>(tokens);
    file.header.dim = static_cast<std::uint32_t>(dim);
    file.header.grid_h = 2;
    file.header.grid_w = 2;
    file.data.resize(n * tokens * dim);
    file.mask.assign(n * tokens, 1);
    for (std::size_t row = 0; row < n * tokens; ++row) {
        float* p = file.data.data() + row * dim;
        double norm = 0.0;
        for (std::size_t c = 0; c < dim; ++c) {
            p[c] = nd(rng);
            norm += static_cast<double>(p[c]) * p[c];
        }
        const float inv = norm > 0 ? static_cast<float>(1.0 / std::sqrt(norm)) : 0.0F;
        for (std::size_t c = 0; c < dim; ++c) p[c] *= inv;
    }
    return file;
}

bool crit_lit_smoke(Gate& g) {
    namespace align = wukong::align;
    const auto vocab = wukong::tokenizer::Vocab::load(testutil::data_path("toy_vocab.txt"));
    const auto captions =
        wukong::train::load_captions(testutil::data_path("smoke_captions.jsonl"));
    g.expect(captions.size() == 32, "expected 32 smoke captions");
    if (!g.ok) return false;

    testutil::TempDir dir;
    const std::string image_path = dir.file("smoke.wkeb");
    smoke_images(32, 32, 0xBEEF).write(image_path);
    const std::string before_bytes = testutil::read_file(image_path);
    const std::uint64_t before_hash = testutil::fnv1a(before_bytes);
    const auto images = wukong::WkebFile::read(image_path);

    for (const auto mode : {align::SimilarityMode::global, align::SimilarityMode::tokenwise,
                            align::SimilarityMode::reduced}) {
        wukong::model::ModelConfig mc;
        mc.text.n_layers = 2;
        mc.text.n_heads = 4;
        mc.text.width = 64;
        mc.text.max_len = 8;
        mc.text.vocab_size = vocab.size();
        mc.image_dim = 32;
        mc.embed_dim = 32;
        mc.mode = mode;
        mc.reduced_tokens = 4;
        mc.reducer_mid = 8;

        std::mt19937_64 rng(0x5EED + static_cast<std::uint64_t>(mode));
        wukong::model::ModelParams<float> params;
        params.init(mc, rng);

        wukong::train::TrainConfig tc;
        tc.batch_size = 32;
        tc.max_steps = 500;
        tc.warmup_steps = 25;
        tc.peak_lr = 2e-2;
        tc.similarity_mode = mode;
        tc.n_prime = 4;
        tc.seed = 17;
        tc.validate_every = 1000;  // final validation only

        wukong::train::LambState<float> opt;
        const auto res = wukong::train::lit_train(images, captions, vocab, tc, params, opt);
        const std::string label = align::to_string(mode);
        g.expect(res.steps == 500, label + ": ran " + std::to_string(res.steps) + " steps");
        g.expect(res.final_validation.r_at_1 >= 0.9,
                 label + ": top-1 retrieval " + fmt(res.final_validation.r_at_1) + " < 0.9");
        g.expect(res.log.back().loss < res.log.front().loss,
                 label + ": loss did not decrease (" + fmt(res.log.front().loss) + " -> " +
                     fmt(res.log.back().loss) + ")");
        if (!g.ok) return false;
    }

    // The image tower is frozen: the embedding file must be untouched.
    const std::string after_bytes = testutil::read_file(image_path);
    g.expect(testutil::fnv1a(after_bytes) == before_hash && after_bytes == before_bytes,
             "image embedding file changed during training");
    return g.ok;
}

// ---------------------------------------------------------------------------
// 8. Bitwise-deterministic training and exact schedule endpoints.
// ---------------------------------------------------------------------------

bool crit_determinism(Gate& g) {
    // Schedule endpoints are exact, not approximate.
    g.expect(wukong::train::lr_schedule(0, 10, 100, 0.37) == 0.0, "warmup start not 0");
    g.expect(wukong::train::lr_schedule(10, 10, 100, 0.37) == 0.37, "warmup end not peak");
    g.expect(wukong::train::lr_schedule(100, 10, 100, 0.37) == 0.0, "final step not 0");
    g.expect(wukong::train::lr_schedule(0, 0, 50, 0.25) == 0.25,
             "no-warmup schedule does not start at peak");

    // Two identical command-line training runs must produce byte-identical
    // checkpoints.
    g.expect(!testutil::cli_path().empty(), "WUKONG_CLI is not set");
    if (!g.ok) return false;

    testutil::TempDir dir;
    const std::string image_path = dir.file("det.wkeb");
    smoke_images(8, 8, 0xD1CE).write(image_path);
    const std::string caption_path = dir.file("det_captions.jsonl");
    {
        static const char* glyphs[] = {"一", "二", "三", "四", "五", "六", "七", "八"};
        std::string text;
        for (int i = 0; i < 8; ++i) {
            nlohmann::json j;
            j["id"] = "p0" + std::to_string(i);
            j["caption"] = glyphs[i];
            text += j.dump() + "\n";
        }
        testutil::write_file(caption_path, text);
    }
    const std::string common =
        " --images '" + image_path + "' --captions '" + caption_path + "' --vocab '" +
        testutil::data_path("toy_vocab.txt") +
        "' --layers 1 --heads 2 --width 8 --max-len 6 --embed-dim 8 --image-dim 8"
        " --batch 8 --steps 6 --peak-lr 0.01 --seed 21";
    const std::string ck_a = dir.file("a.ckpt");
    const std::string ck_b = dir.file("b.ckpt");
    const int rc_a = testutil::run_cli("train" + common + " --out '" + ck_a + "'",
                                       dir.file("out_a.json"), dir.file("err_a.txt"));
    const int rc_b = testutil::run_cli("train" + common + " --out '" + ck_b + "'",
                                       dir.file("out_b.json"), dir.file("err_b.txt"));
    g.expect(rc_a == 0 && rc_b == 0, "training run exited with " + std::to_string(rc_a) +
                                         "/" + std::to_string(rc_b));
    if (!g.ok) return false;
    const std::string bytes_a = testutil::read_file(ck_a);
    const std::string bytes_b = testutil::read_file(ck_b);
    g.expect(testutil::fnv1a(bytes_a) == testutil::fnv1a(bytes_b) && bytes_a == bytes_b,
             "repeat run produced a different checkpoint");
    return g.ok;
}

struct Criterion {
    const char* description;
    std::function<bool(Gate&)> run;
    long budget_ms;  // 0 = no explicit budget
};

}  // namespace

int main() {
    const std::vector<Criterion> gate = {
        {"report arithmetic reproduces the published benchmark rows", crit_report_rows, 1000},
        {"similarity kernels match brute-force references on 1000 random instances",
         crit_similarity_oracles, 30000},
        {"analytic gradients match central finite differences (loss, projection, "
         "reducer, text encoder)",
         crit_gradients, 0},
        {"contrastive loss closed forms hold and batch relabeling is bit-exact",
         crit_loss_closed_forms, 0},
        {"filter golden partition, idempotence, and shard-merge invariance",
         crit_filter_pipeline, 10000},
        {"character-grained tokenization and greedy longest-match conformance",
         crit_tokenizer, 0},
        {"contrastive tuning reaches top-1 >= 0.9 in all three modes with frozen images",
         crit_lit_smoke, 300000},
        {"training is bitwise deterministic and schedule endpoints are exact",
         crit_determinism, 0},
    };

    int failures = 0;
    for (std::size_t i = 0; i < gate.size(); ++i) {
        Gate g;
        const auto start = std::chrono::steady_clock::now();
        try {
            gate[i].run(g);
        } catch (const std::exception& e) {
            g.expect(false, std::string("unexpected exception: ") + e.what());
        }
        const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                            std::chrono::steady_clock::now() - start)
                            .count();
        if (g.ok && gate[i].budget_ms > 0 && ms > gate[i].budget_ms) {
            g.ok = false;
            g.why = "exceeded time budget of " + std::to_string(gate[i].budget_ms) + " ms";
        }
        if (g.ok) {
            std::cout << "[PASS] " << i + 1 << ". " << gate[i].description << " (" << ms
                      << " ms)\n";
        } else {
            std::cout << "[FAIL] " << i + 1 << ". " << gate[i].description << " (" << ms
                      << " ms): " << g.why << "\n";
            ++failures;
        }
    }
    if (failures > 0) {
        std::cout << failures << " of " << gate.size() << " acceptance criteria failed\n";
        return 1;
    }
    std::cout << "all " << gate.size() << " acceptance criteria passed\n";
    return 0;
}
