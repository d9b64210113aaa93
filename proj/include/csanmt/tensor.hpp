#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "csanmt/errors.hpp"

namespace csanmt {

// Dense row-major tensor of doubles. Everything in this codebase is either a
// matrix [rows, cols], a vector [n], or a scalar [1]; higher ranks are not
// needed because batches are packed into the row dimension.
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int64_t> s, double fill = 0.0)
        : shape(std::move(s)),
          data(static_cast<size_t>(count(shape)), fill) {}

    static Tensor scalar(double v) {
        Tensor t({1});
        t.data[0] = v;
        return t;
    }
    static Tensor from(std::vector<double> v) {
        Tensor t;
        t.shape = {static_cast<int64_t>(v.size())};
        t.data = std::move(v);
        return t;
    }

    static int64_t count(const std::vector<int64_t>& s) {
        int64_t n = 1;
        for (int64_t d : s) {
            if (d < 0) throw DimError("negative dimension");
            n *= d;
        }
        return n;
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }

    // Matrix view: last dimension is the column count, everything before it
    // is flattened into rows. Vectors are a single row.
    int64_t cols() const { return shape.empty() ? 1 : shape.back(); }
    int64_t rows() const { return cols() == 0 ? 0 : numel() / cols(); }

    double& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols() + c)]; }
    double at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols() + c)]; }
    double& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw DimError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

inline double dot(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "dot");
    double s = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
    return s;
}

inline double l2_norm(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data) s += v * v;
    return std::sqrt(s);
}

inline double l2_distance(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "l2_distance");
    double s = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

// Cosine similarity with a fixed epsilon guard on each norm. Exact zero-norm
// input is a degeneracy the caller must not silence.
inline constexpr double kCosineEps = 1e-12;

inline double cosine(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "cosine");
    double na = l2_norm(a), nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) throw NumericError("cosine: zero-norm vector");
    return dot(a, b) / ((na + kCosineEps) * (nb + kCosineEps));
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor out = a;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += b[i];
    return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    Tensor out = a;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] -= b[i];
    return out;
}

inline Tensor hadamard(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "hadamard");
    Tensor out = a;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b[i];
    return out;
}

inline Tensor scale(const Tensor& a, double s) {
    Tensor out = a;
    for (double& v : out.data) v *= s;
    return out;
}

inline bool all_finite(const Tensor& a) {
    for (double v : a.data)
        if (!std::isfinite(v)) return false;
    return true;
}

namespace detail {

// C (+)= A[m,k] * B[k,n]; ikj order so the inner loop is a contiguous axpy.
inline void mm_nn(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n,
                  bool accumulate) {
    if (!accumulate)
        for (int64_t i = 0; i < m * n; ++i) C[i] = 0.0;
    for (int64_t i = 0; i < m; ++i) {
        const double* a = A + i * k;
        double* c = C + i * n;
        for (int64_t p = 0; p < k; ++p) {
            double av = a[p];
            if (av == 0.0) continue;
            const double* b = B + p * n;
            for (int64_t j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

// C += A[m,k] * B^T with B stored [n,k].
inline void mm_nt_acc(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* a = A + i * k;
        double* c = C + i * n;
        for (int64_t j = 0; j < n; ++j) {
            const double* b = B + j * k;
            double s = 0.0;
            for (int64_t p = 0; p < k; ++p) s += a[p] * b[p];
            c[j] += s;
        }
    }
}

// C += A^T * B with A stored [m,k], B [m,n], C [k,n].
inline void mm_tn_acc(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* a = A + i * k;
        const double* b = B + i * n;
        for (int64_t p = 0; p < k; ++p) {
            double av = a[p];
            if (av == 0.0) continue;
            double* c = C + p * n;
            for (int64_t j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

} // namespace detail

} // namespace csanmt
