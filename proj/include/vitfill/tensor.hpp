#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "vitfill/common.hpp"

namespace vitfill {

// Dense row-major tensor. The pipeline instantiates T = float; gradient
// verification instantiates T = double so finite differences are meaningful.
template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (numel_of(shape) != static_cast<std::int64_t>(data.size()))
            throw DimensionError("tensor: data length " + std::to_string(data.size()) +
                                 " does not match shape " + shape_string());
    }

    static std::int64_t numel_of(const std::vector<int>& s) {
        std::int64_t n = 1;
        for (int d : s) {
            if (d <= 0) throw DimensionError("tensor: non-positive dimension " + std::to_string(d));
            n *= d;
        }
        return n;
    }

    static Tensor zeros(std::vector<int> s) {
        const auto n = numel_of(s);
        return Tensor(std::move(s), std::vector<T>(static_cast<std::size_t>(n), T(0)));
    }

    static Tensor full(std::vector<int> s, T v) {
        const auto n = numel_of(s);
        return Tensor(std::move(s), std::vector<T>(static_cast<std::size_t>(n), v));
    }

    static Tensor scalar(T v) { return Tensor({1}, {v}); }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    // 2-D accessors (rows x cols); the hot paths index data directly.
    T& at(int i, int j) { return data[static_cast<std::size_t>(i) * shape[1] + j]; }
    T at(int i, int j) const { return data[static_cast<std::size_t>(i) * shape[1] + j]; }

    std::string shape_string() const {
        std::ostringstream os;
        os << '[';
        for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
        os << ']';
        return os.str();
    }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) out[i] = static_cast<U>(data[i]);
        return Tensor<U>(shape, std::move(out));
    }
};

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (!a.same_shape(b))
        throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                             b.shape_string());
}

template <typename T>
void require_finite(const Tensor<T>& t, const char* where) {
    if (!t.all_finite()) throw ValidationError(std::string(where) + ": non-finite values");
}

// ---------------------------------------------------------------------------
// GEMM kernels. Fixed accumulation order, single-threaded, no FMA contraction
// (disabled project-wide), so results are reproducible run to run.
// ---------------------------------------------------------------------------

// c[MxN] += a[MxK] * b[KxN]
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const T* arow = a + static_cast<std::size_t>(i) * k;
        T* crow = c + static_cast<std::size_t>(i) * n;
        for (int kk = 0; kk < k; ++kk) {
            const T av = arow[kk];
            const T* brow = b + static_cast<std::size_t>(kk) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// c[MxN] += a[MxK] * b[NxK]^T   (rows of b dotted against rows of a)
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const T* arow = a + static_cast<std::size_t>(i) * k;
        T* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const T* brow = b + static_cast<std::size_t>(j) * k;
            T s0 = T(0), s1 = T(0), s2 = T(0), s3 = T(0);
            int kk = 0;
            for (; kk + 4 <= k; kk += 4) {
                s0 += arow[kk] * brow[kk];
                s1 += arow[kk + 1] * brow[kk + 1];
                s2 += arow[kk + 2] * brow[kk + 2];
                s3 += arow[kk + 3] * brow[kk + 3];
            }
            for (; kk < k; ++kk) s0 += arow[kk] * brow[kk];
            crow[j] += ((s0 + s1) + (s2 + s3));
        }
    }
}

// c[KxN] += a[MxK]^T * b[MxN]
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const T* arow = a + static_cast<std::size_t>(i) * k;
        const T* brow = b + static_cast<std::size_t>(i) * n;
        for (int kk = 0; kk < k; ++kk) {
            const T av = arow[kk];
            T* crow = c + static_cast<std::size_t>(kk) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

} // namespace vitfill
