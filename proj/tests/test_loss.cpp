#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "test_util.hpp"
#include "wukong/loss.hpp"

using namespace wukong;
using loss::BatchSimilarities;
using loss::Temperature;

namespace {

template <typename T>
BatchSimilarities<T> random_sims(std::mt19937_64& rng, std::size_t b, double scale = 1.0) {
    BatchSimilarities<T> s;
    s.s_image = testutil::random_mat<T>(rng, b, b, scale);
    s.s_text = testutil::random_mat<T>(rng, b, b, scale);
    return s;
}

template <typename T>
BatchSimilarities<T> permuted(const BatchSimilarities<T>& s, const std::vector<std::size_t>& p) {
    const std::size_t b = p.size();
    BatchSimilarities<T> out;
    out.s_image = Mat<T>(b, b);
    out.s_text = Mat<T>(b, b);
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < b; ++j) {
            out.s_image[i][j] = s.s_image[p[i]][p[j]];
            out.s_text[i][j] = s.s_text[p[i]][p[j]];
        }
    return out;
}

}  // namespace

TEST_CASE("temperature stores tau on the log scale and clamps after steps") {
    auto t = Temperature<double>::init();
    CHECK(t.tau() == doctest::Approx(0.07).epsilon(1e-12));
    CHECK(loss::kInitialTemperature == doctest::Approx(0.07));

    auto low = Temperature<double>{std::log(0.001)};
    low.clamp();
    CHECK(low.tau() == doctest::Approx(loss::kTauMin).epsilon(1e-12));

    auto high = Temperature<double>{std::log(500.0)};
    high.clamp();
    CHECK(high.tau() == doctest::Approx(loss::kTauMax).epsilon(1e-12));

    auto mid = Temperature<double>{std::log(0.5)};
    mid.clamp();
    CHECK(mid.tau() == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("a single pair has exactly zero loss") {
    BatchSimilarities<double> s;
    s.s_image = Mat<double>(1, 1);
    s.s_text = Mat<double>(1, 1);
    s.s_image[0][0] = 0.37;
    s.s_text[0][0] = -2.0;
    const auto res = loss::contrastive_loss(s, Temperature<double>::init());
    CHECK(res.value == 0.0);
    CHECK(res.grad_s_image[0][0] == 0.0);
    CHECK(res.grad_s_text[0][0] == 0.0);
    CHECK(res.grad_log_tau == 0.0);
}

TEST_CASE("the two-pair identity batch hits the closed form") {
    // s = I, tau = 1: each row's CE is log(1 + e^-1), so the mean equals it.
    BatchSimilarities<double> s;
    s.s_image = Mat<double>(2, 2);
    s.s_text = Mat<double>(2, 2);
    s.s_image[0][0] = s.s_image[1][1] = 1.0;
    s.s_text[0][0] = s.s_text[1][1] = 1.0;
    const Temperature<double> unit{0.0};
    const auto res = loss::contrastive_loss(s, unit);
    const double want = std::log(1.0 + std::exp(-1.0));
    CHECK(std::abs(res.value - want) < 1e-9);
}

TEST_CASE("joint batch permutations reproduce the loss bit for bit") {
    std::mt19937_64 rng(21);
    for (int round = 0; round < 4; ++round) {
        const std::size_t b = 2 + round * 3;
        const auto base_f = random_sims<float>(rng, b);
        const auto base_d = random_sims<double>(rng, b);
        const Temperature<float> tf{std::log(0.11f)};
        const Temperature<double> td{std::log(0.11)};
        const float vf = loss::contrastive_loss(base_f, tf).value;
        const double vd = loss::contrastive_loss(base_d, td).value;

        std::vector<std::size_t> p(b);
        std::iota(p.begin(), p.end(), 0);
        for (int trial = 0; trial < 25; ++trial) {
            std::shuffle(p.begin(), p.end(), rng);
            CHECK(loss::contrastive_loss(permuted(base_f, p), tf).value == vf);
            CHECK(loss::contrastive_loss(permuted(base_d, p), td).value == vd);
        }
    }
}

TEST_CASE("gradients match finite differences") {
    std::mt19937_64 rng(22);
    int checked = 0;
    for (int trial = 0; trial < 6; ++trial) {
        const std::size_t b = 2 + trial % 4;
        auto s = random_sims<double>(rng, b, 0.8);
        Temperature<double> temp{std::log(0.3)};

        auto value = [&] { return loss::contrastive_loss(s, temp).value; };
        const auto res = loss::contrastive_loss(s, temp);

        for (std::size_t i = 0; i < s.s_image.size(); ++i) {
            const double fd = oracle::central_diff(value, s.s_image.data() + i);
            CHECK(oracle::rel_err(res.grad_s_image.data()[i], fd) < 1e-4);
            ++checked;
        }
        for (std::size_t i = 0; i < s.s_text.size(); ++i) {
            const double fd = oracle::central_diff(value, s.s_text.data() + i);
            CHECK(oracle::rel_err(res.grad_s_text.data()[i], fd) < 1e-4);
            ++checked;
        }
        const double fd_lt = oracle::central_diff(value, &temp.log_tau);
        CHECK(oracle::rel_err(res.grad_log_tau, fd_lt) < 1e-4);
        ++checked;
    }
    CHECK(checked >= 50);
}

TEST_CASE("adding a constant to every score leaves the loss nearly unchanged") {
    std::mt19937_64 rng(23);
    auto s = random_sims<double>(rng, 6);
    const Temperature<double> temp{std::log(0.2)};
    const double base = loss::contrastive_loss(s, temp).value;

    BatchSimilarities<double> shifted = s;
    for (std::size_t i = 0; i < shifted.s_image.size(); ++i) shifted.s_image.data()[i] += 3.5;
    for (std::size_t i = 0; i < shifted.s_text.size(); ++i) shifted.s_text.data()[i] += 3.5;
    CHECK(std::abs(loss::contrastive_loss(shifted, temp).value - base) < 1e-9);
}

TEST_CASE("stronger diagonals lower the loss and flip the gradient sign") {
    std::mt19937_64 rng(24);
    auto s = random_sims<double>(rng, 5, 0.3);
    const Temperature<double> temp{std::log(0.5)};
    const auto base = loss::contrastive_loss(s, temp);

    auto better = s;
    for (std::size_t k = 0; k < 5; ++k) {
        better.s_image[k][k] += 2.0;
        better.s_text[k][k] += 2.0;
    }
    CHECK(loss::contrastive_loss(better, temp).value < base.value);

    // Raising a diagonal score reduces the loss; raising an off-diagonal
    // score increases it.
    for (std::size_t k = 0; k < 5; ++k) {
        CHECK(base.grad_s_image[k][k] < 0.0);
        CHECK(base.grad_s_text[k][k] < 0.0);
    }
    for (std::size_t k = 0; k < 5; ++k)
        for (std::size_t j = 0; j < 5; ++j)
            if (j != k) {
                CHECK(base.grad_s_image[k][j] > 0.0);
                CHECK(base.grad_s_text[k][j] > 0.0);
            }
}

TEST_CASE("large logits stay finite through the max-subtraction") {
    BatchSimilarities<double> s;
    s.s_image = Mat<double>(2, 2);
    s.s_text = Mat<double>(2, 2);
    s.s_image[0][0] = 900.0;
    s.s_image[1][1] = 900.0;
    s.s_text[0][0] = 900.0;
    s.s_text[1][1] = 900.0;
    const Temperature<double> temp{std::log(0.01)};  // logits around 90000
    const auto res = loss::contrastive_loss(s, temp);
    CHECK(std::isfinite(res.value));
    CHECK(res.value >= 0.0);
    CHECK(res.value < 1e-6);  // the positives dominate completely
}

TEST_CASE("shape and finiteness violations throw") {
    const Temperature<double> temp{0.0};
    BatchSimilarities<double> empty;
    CHECK_THROWS_AS(loss::contrastive_loss(empty, temp), std::invalid_argument);

    BatchSimilarities<double> rect;
    rect.s_image = Mat<double>(2, 3);
    rect.s_text = Mat<double>(2, 3);
    CHECK_THROWS_AS(loss::contrastive_loss(rect, temp), std::invalid_argument);

    BatchSimilarities<double> mismatch;
    mismatch.s_image = Mat<double>(2, 2);
    mismatch.s_text = Mat<double>(3, 3);
    CHECK_THROWS_AS(loss::contrastive_loss(mismatch, temp), std::invalid_argument);

    BatchSimilarities<double> poisoned;
    poisoned.s_image = Mat<double>(2, 2);
    poisoned.s_text = Mat<double>(2, 2);
    poisoned.s_text[1][0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(loss::contrastive_loss(poisoned, temp), std::invalid_argument);

    BatchSimilarities<double> inf_side;
    inf_side.s_image = Mat<double>(2, 2);
    inf_side.s_text = Mat<double>(2, 2);
    inf_side.s_image[0][1] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(loss::contrastive_loss(inf_side, temp), std::invalid_argument);
}

TEST_CASE("loss value agrees with a direct reference computation") {
    std::mt19937_64 rng(25);
    for (int trial = 0; trial < 200; ++trial) {
        std::uniform_int_distribution<std::size_t> bd(1, 9);
        const std::size_t b = bd(rng);
        const auto s = random_sims<double>(rng, b, 0.9);
        std::uniform_real_distribution<double> taud(0.05, 2.0);
        const double tau = taud(rng);

        double want = 0.0;
        auto ce = [&](const Mat<double>& m, std::size_t k) {
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < b; ++j) mx = std::max(mx, m[k][j] / tau);
            double denom = 0.0;
            for (std::size_t j = 0; j < b; ++j) denom += std::exp(m[k][j] / tau - mx);
            return std::log(denom) - (m[k][k] / tau - mx);
        };
        for (std::size_t k = 0; k < b; ++k) want += ce(s.s_image, k) + ce(s.s_text, k);
        want /= 2.0 * static_cast<double>(b);

        const auto res = loss::contrastive_loss(s, Temperature<double>{std::log(tau)});
        CHECK(std::abs(res.value - want) < 1e-12);
        CHECK(res.value >= -1e-15);
    }
}
