#include "wukong/loss.hpp"

#include <algorithm>
#include <stdexcept>
#include <vector>

namespace wukong::loss {

namespace {

// Sums in ascending order so the result depends only on the multiset of
// addends, not their arrangement.
template <typename T>
T ordered_sum(std::vector<T>& v) {
    std::sort(v.begin(), v.end());
    T acc = T(0);
    for (T x : v) acc += x;
    return acc;
}

}  // namespace

template <typename T>
void Temperature<T>::clamp() {
    const T lo = std::log(T(kTauMin));
    const T hi = std::log(T(kTauMax));
    if (log_tau < lo) log_tau = lo;
    if (log_tau > hi) log_tau = hi;
}

template struct Temperature<float>;
template struct Temperature<double>;

template <typename T>
ContrastiveResult<T> contrastive_loss(const BatchSimilarities<T>& sims,
                                      const Temperature<T>& temp) {
    const Mat<T>& si = sims.s_image;
    const Mat<T>& st = sims.s_text;
    if (si.rows() == 0 || si.rows() != si.cols())
        throw std::invalid_argument("contrastive_loss: s_image must be square and non-empty");
    if (st.rows() != si.rows() || st.cols() != si.cols())
        throw std::invalid_argument("contrastive_loss: s_text shape mismatch");
    for (std::size_t i = 0; i < si.size(); ++i)
        if (!std::isfinite(si.data()[i]) || !std::isfinite(st.data()[i]))
            throw std::invalid_argument("contrastive_loss: non-finite similarity");

    const std::size_t b = si.rows();
    const T tau = temp.tau();
    if (!(tau > T(0)) || !std::isfinite(tau))
        throw std::invalid_argument("contrastive_loss: invalid temperature");
    const T inv_tau = T(1) / tau;
    const T scale = T(1) / (T(2) * static_cast<T>(b));

    ContrastiveResult<T> res;
    res.grad_s_image = Mat<T>(b, b);
    res.grad_s_text = Mat<T>(b, b);

    std::vector<T> ce_terms;
    ce_terms.reserve(2 * b);
    std::vector<T> exps(b);

    // One matrix at a time; grad targets the passed matrix directly.
    auto process = [&](const Mat<T>& s, Mat<T>& grad) {
        for (std::size_t k = 0; k < b; ++k) {
            const T* row = s[k];
            T mx = row[0] * inv_tau;
            for (std::size_t j = 1; j < b; ++j) mx = std::max(mx, row[j] * inv_tau);
            for (std::size_t j = 0; j < b; ++j) exps[j] = std::exp(row[j] * inv_tau - mx);
            std::vector<T> addends(exps.begin(), exps.end());
            const T denom = ordered_sum(addends);
            const T ce = std::log(denom) - (row[k] * inv_tau - mx);
            ce_terms.push_back(ce);

            // dCE/dx_j = p_j - [j == k]; x_j = s[k][j]/tau.
            T* g = grad[k];
            T glt_row = T(0);
            for (std::size_t j = 0; j < b; ++j) {
                const T p = exps[j] / denom;
                const T dce_dx = p - (j == k ? T(1) : T(0));
                g[j] += scale * dce_dx * inv_tau;
                // x_j depends on log_tau through x_j = s/exp(lt): dx_j/dlt = -x_j.
                glt_row += dce_dx * (row[j] * inv_tau);
            }
            res.grad_log_tau -= scale * glt_row;
        }
    };
    process(si, res.grad_s_image);
    process(st, res.grad_s_text);

    res.value = scale * ordered_sum(ce_terms);
    return res;
}

template ContrastiveResult<float> contrastive_loss<float>(const BatchSimilarities<float>&,
                                                          const Temperature<float>&);
template ContrastiveResult<double> contrastive_loss<double>(const BatchSimilarities<double>&,
                                                            const Temperature<double>&);

}  // namespace wukong::loss
