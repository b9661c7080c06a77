#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedpac {

/// Dense row-major matrix of doubles. Vectors are n x 1 matrices.
class Matrix {
public:
    Matrix() = default;

    Matrix(int rows, int cols) : rows_(rows), cols_(cols), d_(size_t(rows) * cols, 0.0) {
        if (rows < 0 || cols < 0) {
            throw std::invalid_argument("Matrix: negative dimension");
        }
    }

    Matrix(int rows, int cols, std::vector<double> data)
        : rows_(rows), cols_(cols), d_(std::move(data)) {
        if (d_.size() != size_t(rows) * size_t(cols)) {
            throw std::invalid_argument("Matrix: data length != rows*cols");
        }
    }

    Matrix(std::initializer_list<std::initializer_list<double>> init) {
        rows_ = int(init.size());
        cols_ = rows_ > 0 ? int(init.begin()->size()) : 0;
        d_.reserve(size_t(rows_) * cols_);
        for (const auto& row : init) {
            if (int(row.size()) != cols_) {
                throw std::invalid_argument("Matrix: ragged initializer");
            }
            d_.insert(d_.end(), row.begin(), row.end());
        }
    }

    static Matrix zeros(int rows, int cols) { return Matrix(rows, cols); }

    static Matrix identity(int n) {
        Matrix I(n, n);
        for (int i = 0; i < n; ++i) I(i, i) = 1.0;
        return I;
    }

    static Matrix column(std::vector<double> v) {
        const int n = int(v.size());
        return Matrix(n, 1, std::move(v));
    }

    static Matrix diag(const std::vector<double>& v) {
        const int n = int(v.size());
        Matrix D(n, n);
        for (int i = 0; i < n; ++i) D(i, i) = v[i];
        return D;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    size_t size() const { return d_.size(); }
    bool empty() const { return d_.empty(); }

    double& operator()(int r, int c) { return d_[size_t(r) * cols_ + c]; }
    double operator()(int r, int c) const { return d_[size_t(r) * cols_ + c]; }
    double& operator[](size_t i) { return d_[i]; }
    double operator[](size_t i) const { return d_[i]; }

    const std::vector<double>& data() const { return d_; }
    std::vector<double>& data() { return d_; }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    bool all_finite() const {
        for (double v : d_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    Matrix& operator+=(const Matrix& o) {
        check_shape(o, "+=");
        for (size_t i = 0; i < d_.size(); ++i) d_[i] += o.d_[i];
        return *this;
    }

    Matrix& operator-=(const Matrix& o) {
        check_shape(o, "-=");
        for (size_t i = 0; i < d_.size(); ++i) d_[i] -= o.d_[i];
        return *this;
    }

    Matrix& operator*=(double s) {
        for (double& v : d_) v *= s;
        return *this;
    }

    friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
    friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
    friend Matrix operator*(Matrix a, double s) { return a *= s; }
    friend Matrix operator*(double s, Matrix a) { return a *= s; }

    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.d_ == b.d_;
    }

private:
    void check_shape(const Matrix& o, const char* op) const {
        if (!same_shape(o)) {
            throw std::invalid_argument(std::string("Matrix: shape mismatch in ") + op);
        }
    }

    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> d_;
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: inner dimensions differ");
    }
    Matrix c(a.rows(), b.cols());
    const int m = a.rows(), k = a.cols(), n = b.cols();
    for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
            const double aip = a(i, p);
            if (aip == 0.0) continue;
            for (int j = 0; j < n; ++j) {
                c(i, j) += aip * b(p, j);
            }
        }
    }
    return c;
}

inline Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

/// A * A^T without forming the transpose.
inline Matrix gram_left(const Matrix& a) {
    Matrix g(a.rows(), a.rows());
    for (int i = 0; i < a.rows(); ++i) {
        for (int j = i; j < a.rows(); ++j) {
            double s = 0.0;
            for (int p = 0; p < a.cols(); ++p) s += a(i, p) * a(j, p);
            g(i, j) = s;
            g(j, i) = s;
        }
    }
    return g;
}

/// A^T * A.
inline Matrix gram_right(const Matrix& a) {
    Matrix g(a.cols(), a.cols());
    for (int i = 0; i < a.cols(); ++i) {
        for (int j = i; j < a.cols(); ++j) {
            double s = 0.0;
            for (int p = 0; p < a.rows(); ++p) s += a(p, i) * a(p, j);
            g(i, j) = s;
            g(j, i) = s;
        }
    }
    return g;
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("hadamard: shape mismatch");
    Matrix c = a;
    for (size_t i = 0; i < c.size(); ++i) c[i] *= b[i];
    return c;
}

inline double frobenius_norm(const Matrix& a) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * a[i];
    return std::sqrt(s);
}

inline double frobenius_norm_sq(const Matrix& a) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * a[i];
    return s;
}

inline double dot(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("dot: shape mismatch");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double max_abs(const Matrix& a) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s = std::max(s, std::abs(a[i]));
    return s;
}

/// Extract column j as an n x 1 matrix.
inline Matrix column_of(const Matrix& a, int j) {
    Matrix c(a.rows(), 1);
    for (int i = 0; i < a.rows(); ++i) c(i, 0) = a(i, j);
    return c;
}

inline void set_column(Matrix& a, int j, const Matrix& col) {
    for (int i = 0; i < a.rows(); ++i) a(i, j) = col(i, 0);
}

// ---- layer-list (ModelParams-shaped) helpers ----

using MatrixList = std::vector<Matrix>;

inline bool same_shapes(const MatrixList& a, const MatrixList& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i)
        if (!a[i].same_shape(b[i])) return false;
    return true;
}

inline MatrixList zeros_like(const MatrixList& a) {
    MatrixList z;
    z.reserve(a.size());
    for (const auto& m : a) z.emplace_back(m.rows(), m.cols());
    return z;
}

inline void axpy(MatrixList& y, double alpha, const MatrixList& x) {
    if (!same_shapes(y, x)) throw std::invalid_argument("axpy: shape mismatch");
    for (size_t l = 0; l < y.size(); ++l)
        for (size_t i = 0; i < y[l].size(); ++i) y[l][i] += alpha * x[l][i];
}

inline void scale(MatrixList& y, double alpha) {
    for (auto& m : y) m *= alpha;
}

inline double norm2(const MatrixList& a) {
    double s = 0.0;
    for (const auto& m : a) s += frobenius_norm_sq(m);
    return std::sqrt(s);
}

inline bool all_finite(const MatrixList& a) {
    for (const auto& m : a)
        if (!m.all_finite()) return false;
    return true;
}

inline size_t total_entries(const MatrixList& a) {
    size_t n = 0;
    for (const auto& m : a) n += m.size();
    return n;
}

}  // namespace fedpac
