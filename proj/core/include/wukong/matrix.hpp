#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <vector>

namespace wukong {

// Dense row-major matrix with contiguous storage. A 1xN instance doubles as a
// vector; flat element access through data()/size() serves optimizers and
// serialization.
template <typename T>
class Mat {
public:
    Mat() = default;
    Mat(std::size_t rows, std::size_t cols, T fill = T{})
        : rows_(rows), cols_(cols), v_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return v_.size(); }
    bool empty() const { return v_.empty(); }

    T* operator[](std::size_t r) {
        assert(r < rows_);
        return v_.data() + r * cols_;
    }
    const T* operator[](std::size_t r) const {
        assert(r < rows_);
        return v_.data() + r * cols_;
    }
    T& at(std::size_t r, std::size_t c) {
        assert(r < rows_ && c < cols_);
        return v_[r * cols_ + c];
    }
    const T& at(std::size_t r, std::size_t c) const {
        assert(r < rows_ && c < cols_);
        return v_[r * cols_ + c];
    }

    T* data() { return v_.data(); }
    const T* data() const { return v_.data(); }

    void fill(T x) { v_.assign(v_.size(), x); }
    void zero() { fill(T{}); }

    bool same_shape(const Mat& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    template <typename U>
    Mat<U> cast() const {
        Mat<U> out(rows_, cols_);
        for (std::size_t i = 0; i < v_.size(); ++i) out.data()[i] = static_cast<U>(v_[i]);
        return out;
    }

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<T> v_;
};

template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
    T acc{};
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

template <typename T>
T l2_norm(const T* a, std::size_t n) {
    return std::sqrt(dot(a, a, n));
}

// y (m x k) = a (m x n) * b (n x k)
template <typename T>
Mat<T> matmul(const Mat<T>& a, const Mat<T>& b) {
    assert(a.cols() == b.rows());
    Mat<T> y(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const T* ai = a[i];
        T* yi = y[i];
        for (std::size_t j = 0; j < a.cols(); ++j) {
            const T aij = ai[j];
            if (aij == T{}) continue;
            const T* bj = b[j];
            for (std::size_t k = 0; k < b.cols(); ++k) yi[k] += aij * bj[k];
        }
    }
    return y;
}

}  // namespace wukong
