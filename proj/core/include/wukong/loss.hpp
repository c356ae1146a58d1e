#pragma once

#include <cmath>

#include "wukong/matrix.hpp"

namespace wukong::loss {

using wukong::Mat;

// Directed in-batch similarity matrices: s_image[k][j] scores image k against
// text j, s_text[k][j] scores text k against image j. For the global kernel
// one is the transpose of the other; for late-interaction kernels they are
// separate functions. Diagonals are the positive pairs.
template <typename T>
struct BatchSimilarities {
    Mat<T> s_image;  // b x b
    Mat<T> s_text;   // b x b
};

// Learnable softmax temperature stored on the log scale so gradient steps
// keep tau positive. The published runs initialize tau to 0.07.
inline constexpr double kInitialTemperature = 0.07;
inline constexpr double kTauMin = 0.01;
inline constexpr double kTauMax = 100.0;

template <typename T>
struct Temperature {
    T log_tau;

    static Temperature init(T tau0 = T(kInitialTemperature)) { return {std::log(tau0)}; }
    T tau() const { return std::exp(log_tau); }
    // Projects tau back into [kTauMin, kTauMax] after an optimizer step.
    void clamp();
};

template <typename T>
struct ContrastiveResult {
    T value = T(0);
    Mat<T> grad_s_image;  // dL/d s_image
    Mat<T> grad_s_text;   // dL/d s_text
    T grad_log_tau = T(0);
};

// Symmetric temperature-scaled cross entropy:
//   L = (1/(2b)) sum_k [ CE(softmax(s_image[k]/tau), k) + CE(softmax(s_text[k]/tau), k) ].
// All reductions sum in ascending value order, so jointly permuting batch
// indices of both matrices reproduces the loss bit-for-bit. Throws
// std::invalid_argument on non-square/mismatched shapes or non-finite inputs.
template <typename T>
ContrastiveResult<T> contrastive_loss(const BatchSimilarities<T>& sims, const Temperature<T>& temp);

}  // namespace wukong::loss
