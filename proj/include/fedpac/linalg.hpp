#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "fedpac/matrix.hpp"
#include "fedpac/rng.hpp"

namespace fedpac::linalg {

enum class NsVariant {
    Quintic,  // X <- aX + (bA + cA^2)X, A = XX^T
    Classic,  // X <- (3X - AX)/2, A = XX^T
};

// Coefficients of the quintic orthogonalization polynomial.
inline constexpr double kNsA = 3.4445;
inline constexpr double kNsB = -4.7750;
inline constexpr double kNsC = 2.0315;

/// Newton-Schulz orthogonalization of a nonzero matrix. Normalizes by the
/// Frobenius norm plus eps, transposes when rows > cols and transposes back.
/// The quintic variant drives singular values into a band around 1 quickly;
/// the classic half-step recurrence converges to the exact polar factor.
inline Matrix newton_schulz(const Matrix& g, int steps = 5, double eps = 1e-7,
                            NsVariant variant = NsVariant::Quintic) {
    if (!g.all_finite()) throw std::invalid_argument("newton_schulz: non-finite input");
    const double fro = frobenius_norm(g);
    if (fro == 0.0) throw std::invalid_argument("newton_schulz: degenerate input");
    if (steps < 1) throw std::invalid_argument("newton_schulz: steps < 1");

    const bool flip = g.rows() > g.cols();
    Matrix x = flip ? transpose(g) : g;
    x *= 1.0 / (fro + eps);

    for (int j = 0; j < steps; ++j) {
        const Matrix a = gram_left(x);
        if (variant == NsVariant::Quintic) {
            Matrix b = matmul(a, a);
            b *= kNsC;
            b += kNsB * a;
            x = kNsA * x + matmul(b, x);
        } else {
            Matrix ax = matmul(a, x);
            x = 1.5 * x - 0.5 * ax;
        }
    }
    return flip ? transpose(x) : x;
}

/// Thin Householder QR. Returns (Q, R) with Q m x k, R k x n, k = min(m, n).
/// R's diagonal is normalized nonnegative so the factorization is unique
/// (hence deterministic) for full-rank inputs.
inline std::pair<Matrix, Matrix> qr_decompose(const Matrix& a) {
    const int m = a.rows(), n = a.cols();
    const int k = std::min(m, n);
    Matrix r = a;
    std::vector<std::vector<double>> vs;  // Householder vectors
    vs.reserve(k);

    for (int j = 0; j < k; ++j) {
        double norm = 0.0;
        for (int i = j; i < m; ++i) norm += r(i, j) * r(i, j);
        norm = std::sqrt(norm);
        std::vector<double> v(m - j, 0.0);
        if (norm > 0.0) {
            const double alpha = r(j, j) >= 0.0 ? -norm : norm;
            for (int i = j; i < m; ++i) v[i - j] = r(i, j);
            v[0] -= alpha;
            double vnorm = 0.0;
            for (double t : v) vnorm += t * t;
            vnorm = std::sqrt(vnorm);
            if (vnorm > 0.0) {
                for (double& t : v) t /= vnorm;
                // apply reflector to remaining columns
                for (int c = j; c < n; ++c) {
                    double s = 0.0;
                    for (int i = j; i < m; ++i) s += v[i - j] * r(i, c);
                    s *= 2.0;
                    for (int i = j; i < m; ++i) r(i, c) -= s * v[i - j];
                }
            }
        }
        vs.push_back(std::move(v));
    }

    // accumulate thin Q by applying reflectors to the first k identity columns
    Matrix q(m, k);
    for (int j = 0; j < k; ++j) q(j, j) = 1.0;
    for (int j = k - 1; j >= 0; --j) {
        const auto& v = vs[j];
        double vnorm = 0.0;
        for (double t : v) vnorm += t * t;
        if (vnorm == 0.0) continue;
        for (int c = 0; c < k; ++c) {
            double s = 0.0;
            for (int i = j; i < m; ++i) s += v[i - j] * q(i, c);
            s *= 2.0;
            for (int i = j; i < m; ++i) q(i, c) -= s * v[i - j];
        }
    }

    Matrix rr(k, n);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < n; ++j) rr(i, j) = r(i, j);

    // sign normalization: force nonnegative diagonal of R
    for (int i = 0; i < k; ++i) {
        if (rr(i, i) < 0.0) {
            for (int j = 0; j < n; ++j) rr(i, j) = -rr(i, j);
            for (int row = 0; row < m; ++row) q(row, i) = -q(row, i);
        }
    }
    return {std::move(q), std::move(rr)};
}

/// One subspace-iteration refinement of the eigenvector estimate Q for a
/// symmetric PSD matrix P: orthonormalize the columns of P*Q.
inline Matrix qr_eigenvectors(const Matrix& p, const Matrix& q) {
    if (p.rows() != p.cols()) throw std::invalid_argument("qr_eigenvectors: P not square");
    if (q.rows() != p.rows() || q.cols() != p.cols()) {
        throw std::invalid_argument("qr_eigenvectors: dimension mismatch");
    }
    auto [qn, r] = qr_decompose(matmul(p, q));
    // rank-deficient P leaves trailing reflectors degenerate; Householder
    // still returns orthonormal columns, which is all callers rely on
    return std::move(qn);
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns (eigenvalues desc, eigenvector matrix with matching columns).
inline std::pair<std::vector<double>, Matrix> jacobi_symmetric_eig(const Matrix& s,
                                                                   int max_sweeps = 60,
                                                                   double tol = 1e-14) {
    if (s.rows() != s.cols()) throw std::invalid_argument("jacobi_symmetric_eig: not square");
    const int n = s.rows();
    Matrix a = s;
    Matrix v = Matrix::identity(n);

    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
        double diag = 0.0;
        for (int i = 0; i < n; ++i) diag += a(i, i) * a(i, i);
        if (off <= tol * tol * std::max(diag, 1e-300)) break;

        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double app = a(p, p), aqq = a(q, q);
                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double sn = t * c;
                for (int i = 0; i < n; ++i) {
                    const double aip = a(i, p), aiq = a(i, q);
                    a(i, p) = c * aip - sn * aiq;
                    a(i, q) = sn * aip + c * aiq;
                }
                for (int j = 0; j < n; ++j) {
                    const double apj = a(p, j), aqj = a(q, j);
                    a(p, j) = c * apj - sn * aqj;
                    a(q, j) = sn * apj + c * aqj;
                }
                for (int i = 0; i < n; ++i) {
                    const double vip = v(i, p), viq = v(i, q);
                    v(i, p) = c * vip - sn * viq;
                    v(i, q) = sn * vip + c * viq;
                }
            }
        }
    }

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> lam(n);
    for (int i = 0; i < n; ++i) lam[i] = a(i, i);
    std::stable_sort(order.begin(), order.end(),
                     [&](int x, int y) { return lam[x] > lam[y]; });

    std::vector<double> sorted(n);
    Matrix vs(n, n);
    for (int j = 0; j < n; ++j) {
        sorted[j] = lam[order[j]];
        // deterministic sign: largest-magnitude component positive
        int arg = 0;
        double best = 0.0;
        for (int i = 0; i < n; ++i) {
            if (std::abs(v(i, order[j])) > best) {
                best = std::abs(v(i, order[j]));
                arg = i;
            }
        }
        const double sgn = v(arg, order[j]) >= 0.0 ? 1.0 : -1.0;
        for (int i = 0; i < n; ++i) vs(i, j) = sgn * v(i, order[j]);
    }
    return {std::move(sorted), std::move(vs)};
}

struct TruncatedSvd {
    Matrix u;               // rows x rank, orthonormal columns
    std::vector<double> s;  // nonincreasing, nonnegative
    Matrix v;               // cols x rank, orthonormal columns
};

/// Rank-k SVD by randomized subspace iteration (deterministic seeded start,
/// two warm power passes, then orthogonal iteration with Rayleigh-Ritz until
/// the singular values stabilize).
inline TruncatedSvd truncated_svd(const Matrix& a, int rank, double tol = 1e-6,
                                  int max_iters = 300) {
    const int m = a.rows(), n = a.cols();
    const int minmn = std::min(m, n);
    if (rank < 1 || rank > minmn) throw std::invalid_argument("truncated_svd: rank out of range");

    const int block = std::min(rank + 4, minmn);
    Rng rng(0x5D3A9F4B2C6E8701ULL ^ (uint64_t(m) << 32) ^ (uint64_t(n) << 16) ^ uint64_t(rank));
    Matrix z(n, block);
    for (size_t i = 0; i < z.size(); ++i) z[i] = rng.normal();
    z = qr_decompose(z).first;

    std::vector<double> prev(block, 0.0);
    Matrix w;  // Ritz rotation
    std::vector<double> lam;

    const int warm = 2;
    for (int it = 0; it < warm + max_iters; ++it) {
        const Matrix y = matmul(a, z);          // m x block
        Matrix zn = Matrix(n, block);
        // z' = A^T y
        for (int i = 0; i < n; ++i)
            for (int b = 0; b < block; ++b) {
                double s = 0.0;
                for (int r = 0; r < m; ++r) s += a(r, i) * y(r, b);
                zn(i, b) = s;
            }
        z = qr_decompose(zn).first;
        if (it < warm) continue;

        const Matrix az = matmul(a, z);
        const Matrix t = gram_right(az);  // block x block, = Z^T A^T A Z
        auto eig = jacobi_symmetric_eig(t);
        lam = std::move(eig.first);
        w = std::move(eig.second);

        double num = 0.0, den = 0.0;
        for (int i = 0; i < block; ++i) {
            const double si = std::sqrt(std::max(lam[i], 0.0));
            num += (si - prev[i]) * (si - prev[i]);
            den += si * si;
            prev[i] = si;
        }
        if (block == minmn) break;  // full subspace: Rayleigh-Ritz is exact
        if (std::sqrt(num) <= tol * std::max(std::sqrt(den), 1e-300)) break;
    }

    const Matrix vb = matmul(z, w);  // n x block, orthonormal
    TruncatedSvd out;
    out.s.resize(rank);
    out.u = Matrix(m, rank);
    out.v = Matrix(n, rank);
    for (int j = 0; j < rank; ++j) {
        out.s[j] = std::sqrt(std::max(lam[j], 0.0));
        for (int i = 0; i < n; ++i) out.v(i, j) = vb(i, j);
    }
    // left vectors: u_j = A v_j / s_j; orthonormal completion for null columns
    for (int j = 0; j < rank; ++j) {
        Matrix av = matmul(a, column_of(out.v, j));
        const double sj = out.s[j];
        if (sj > 1e-12 * std::max(out.s[0], 1.0)) {
            av *= 1.0 / sj;
            set_column(out.u, j, av);
        } else {
            out.s[j] = 0.0;
            // pick the identity column least represented by previous u's
            Matrix cand(m, 1);
            for (int basis = 0; basis < m; ++basis) {
                for (int i = 0; i < m; ++i) cand(i, 0) = (i == basis) ? 1.0 : 0.0;
                for (int jj = 0; jj < j; ++jj) {
                    double proj = 0.0;
                    for (int i = 0; i < m; ++i) proj += out.u(i, jj) * cand(i, 0);
                    for (int i = 0; i < m; ++i) cand(i, 0) -= proj * out.u(i, jj);
                }
                const double nrm = frobenius_norm(cand);
                if (nrm > 0.5) {
                    cand *= 1.0 / nrm;
                    break;
                }
            }
            set_column(out.u, j, cand);
        }
    }
    return out;
}

/// Largest singular value via power iteration on A^T A with a deterministic
/// seeded start vector. Zero matrices return 0.
inline double spectral_norm(const Matrix& a, int iters = 500, double tol = 1e-6) {
    if (!a.all_finite()) throw std::invalid_argument("spectral_norm: non-finite input");
    const int m = a.rows(), n = a.cols();
    if (m == 0 || n == 0) return 0.0;
    if (frobenius_norm(a) == 0.0) return 0.0;
    if (n == 1 || m == 1) return frobenius_norm(a);  // rank-1 shape: exact

    Rng rng(0xC0FFEE1234ABCDEFULL ^ (uint64_t(m) * 0x9E3779B97F4A7C15ULL) ^ uint64_t(n));
    Matrix v(n, 1);
    for (int i = 0; i < n; ++i) v(i, 0) = rng.normal();
    double nv = frobenius_norm(v);
    v *= 1.0 / nv;

    double sigma = 0.0;
    for (int it = 0; it < iters; ++it) {
        Matrix av = matmul(a, v);  // m x 1
        const double s = frobenius_norm(av);
        if (s == 0.0) return 0.0;
        // v <- A^T (A v), renormalized
        Matrix w(n, 1);
        for (int i = 0; i < n; ++i) {
            double acc = 0.0;
            for (int r = 0; r < m; ++r) acc += a(r, i) * av(r, 0);
            w(i, 0) = acc;
        }
        const double nw = frobenius_norm(w);
        if (nw == 0.0) return s;
        w *= 1.0 / nw;
        v = std::move(w);
        if (std::abs(s - sigma) <= tol * std::max(s, 1e-300)) {
            sigma = s;
            break;
        }
        sigma = s;
    }
    return sigma;
}

}  // namespace fedpac::linalg
