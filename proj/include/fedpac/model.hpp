#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "fedpac/matrix.hpp"
#include "fedpac/rng.hpp"

namespace fedpac {

/// Ordered list of layer tensors (weight matrices and 1-column biases).
using ModelParams = MatrixList;

/// One mini-batch. For classification, labels holds class ids per row of
/// inputs; for the quadratic task labels is all zeros and ignored.
struct Batch {
    Matrix inputs;            // batch x features
    std::vector<int> labels;  // size = batch rows

    int size() const { return inputs.rows(); }
    int features() const { return inputs.cols(); }
};

struct LossGradReport {
    double loss = 0.0;
    MatrixList grads;
    int correct_count = 0;
};

// f(x; xi) = 1/2 sum_j curvature_j * (x_j - xi_j)^2, Hessian = diag(curvature)
struct QuadraticSpec {
    int dim = 0;
    std::vector<double> curvature;  // size dim, entries > 0
};

// softmax cross-entropy on logits X*W + b; layers = [W (F x C), b (C x 1)]
struct LogisticSpec {
    int n_features = 0;
    int n_classes = 0;
};

// two-layer tanh MLP; layers = [W1 (F x H), b1, W2 (H x C), b2]
struct MlpSpec {
    int n_features = 0;
    int hidden = 0;
    int n_classes = 0;
};

using ModelSpec = std::variant<QuadraticSpec, LogisticSpec, MlpSpec>;

inline bool is_classification(const ModelSpec& spec) {
    return !std::holds_alternative<QuadraticSpec>(spec);
}

inline std::vector<std::pair<int, int>> layer_shapes(const ModelSpec& spec) {
    if (const auto* q = std::get_if<QuadraticSpec>(&spec)) {
        return {{q->dim, 1}};
    }
    if (const auto* l = std::get_if<LogisticSpec>(&spec)) {
        return {{l->n_features, l->n_classes}, {l->n_classes, 1}};
    }
    const auto& m = std::get<MlpSpec>(spec);
    return {{m.n_features, m.hidden}, {m.hidden, 1}, {m.hidden, m.n_classes}, {m.n_classes, 1}};
}

/// Xavier-uniform weights, zero biases; quadratic starting point ~ N(0, 1).
inline ModelParams init_params(const ModelSpec& spec, Rng rng) {
    ModelParams params;
    if (std::holds_alternative<QuadraticSpec>(spec)) {
        const auto& q = std::get<QuadraticSpec>(spec);
        Matrix x(q.dim, 1);
        for (int i = 0; i < q.dim; ++i) x(i, 0) = rng.normal();
        params.push_back(std::move(x));
        return params;
    }
    for (auto [r, c] : layer_shapes(spec)) {
        Matrix w(r, c);
        if (c > 1) {
            const double limit = std::sqrt(6.0 / double(r + c));
            for (size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-limit, limit);
        }
        params.push_back(std::move(w));
    }
    return params;
}

namespace detail {

inline void check_params(const ModelSpec& spec, const ModelParams& params) {
    const auto shapes = layer_shapes(spec);
    if (params.size() != shapes.size()) throw std::invalid_argument("model: wrong layer count");
    for (size_t i = 0; i < shapes.size(); ++i) {
        if (params[i].rows() != shapes[i].first || params[i].cols() != shapes[i].second) {
            throw std::invalid_argument("model: layer shape mismatch");
        }
    }
}

// softmax rows of Z in place, returns per-row log-sum-exp for loss use
inline std::vector<double> softmax_rows(Matrix& z) {
    std::vector<double> lse(z.rows());
    for (int i = 0; i < z.rows(); ++i) {
        double mx = z(i, 0);
        for (int j = 1; j < z.cols(); ++j) mx = std::max(mx, z(i, j));
        double sum = 0.0;
        for (int j = 0; j < z.cols(); ++j) sum += std::exp(z(i, j) - mx);
        lse[i] = mx + std::log(sum);
        for (int j = 0; j < z.cols(); ++j) z(i, j) = std::exp(z(i, j) - lse[i]);
    }
    return lse;
}

inline int argmax_row(const Matrix& z, int row) {
    int arg = 0;
    for (int j = 1; j < z.cols(); ++j) {
        if (z(row, j) > z(row, arg)) arg = j;  // ties keep lowest index
    }
    return arg;
}

// logits = X*W + 1*b^T
inline Matrix affine(const Matrix& x, const Matrix& w, const Matrix& b) {
    Matrix z = matmul(x, w);
    for (int i = 0; i < z.rows(); ++i)
        for (int j = 0; j < z.cols(); ++j) z(i, j) += b(j, 0);
    return z;
}

}  // namespace detail

/// Mean loss, exact analytic gradient, and top-1 correct count on a batch.
inline LossGradReport loss_grad(const ModelSpec& spec, const ModelParams& params,
                                const Batch& batch) {
    detail::check_params(spec, params);
    if (batch.size() < 1) throw std::invalid_argument("loss_grad: empty batch");
    LossGradReport rep;
    const int bsz = batch.size();
    const double inv_b = 1.0 / double(bsz);

    if (const auto* q = std::get_if<QuadraticSpec>(&spec)) {
        if (batch.inputs.cols() != q->dim) throw std::invalid_argument("loss_grad: feature dim");
        const Matrix& x = params[0];
        Matrix grad(q->dim, 1);
        double loss = 0.0;
        for (int b = 0; b < bsz; ++b) {
            for (int j = 0; j < q->dim; ++j) {
                const double d = x(j, 0) - batch.inputs(b, j);
                loss += 0.5 * q->curvature[j] * d * d;
                grad(j, 0) += q->curvature[j] * d;
            }
        }
        rep.loss = loss * inv_b;
        grad *= inv_b;
        rep.grads.push_back(std::move(grad));
        return rep;
    }

    if (const auto* l = std::get_if<LogisticSpec>(&spec)) {
        if (batch.inputs.cols() != l->n_features) throw std::invalid_argument("loss_grad: feature dim");
        Matrix p = detail::affine(batch.inputs, params[0], params[1]);
        const Matrix logits = p;
        detail::softmax_rows(p);
        double loss = 0.0;
        for (int b = 0; b < bsz; ++b) {
            const int y = batch.labels[b];
            if (y < 0 || y >= l->n_classes) throw std::invalid_argument("loss_grad: label range");
            loss -= std::log(std::max(p(b, y), 1e-300));
            if (detail::argmax_row(logits, b) == y) rep.correct_count++;
            p(b, y) -= 1.0;  // P - Y
        }
        rep.loss = loss * inv_b;
        Matrix gw(l->n_features, l->n_classes);
        for (int f = 0; f < l->n_features; ++f)
            for (int c = 0; c < l->n_classes; ++c) {
                double s = 0.0;
                for (int b = 0; b < bsz; ++b) s += batch.inputs(b, f) * p(b, c);
                gw(f, c) = s * inv_b;
            }
        Matrix gb(l->n_classes, 1);
        for (int c = 0; c < l->n_classes; ++c) {
            double s = 0.0;
            for (int b = 0; b < bsz; ++b) s += p(b, c);
            gb(c, 0) = s * inv_b;
        }
        rep.grads.push_back(std::move(gw));
        rep.grads.push_back(std::move(gb));
        return rep;
    }

    const auto& m = std::get<MlpSpec>(spec);
    if (batch.inputs.cols() != m.n_features) throw std::invalid_argument("loss_grad: feature dim");
    Matrix h = detail::affine(batch.inputs, params[0], params[1]);
    for (size_t i = 0; i < h.size(); ++i) h[i] = std::tanh(h[i]);
    Matrix p = detail::affine(h, params[2], params[3]);
    const Matrix logits = p;
    detail::softmax_rows(p);
    double loss = 0.0;
    for (int b = 0; b < bsz; ++b) {
        const int y = batch.labels[b];
        if (y < 0 || y >= m.n_classes) throw std::invalid_argument("loss_grad: label range");
        loss -= std::log(std::max(p(b, y), 1e-300));
        if (detail::argmax_row(logits, b) == y) rep.correct_count++;
        p(b, y) -= 1.0;
    }
    rep.loss = loss * inv_b;
    p *= inv_b;  // dZ
    Matrix gw2 = matmul(transpose(h), p);
    Matrix gb2(m.n_classes, 1);
    for (int c = 0; c < m.n_classes; ++c) {
        double s = 0.0;
        for (int b = 0; b < bsz; ++b) s += p(b, c);
        gb2(c, 0) = s;
    }
    Matrix dh = matmul(p, transpose(params[2]));
    for (size_t i = 0; i < dh.size(); ++i) dh[i] *= (1.0 - h[i] * h[i]);  // tanh'
    Matrix gw1 = matmul(transpose(batch.inputs), dh);
    Matrix gb1(m.hidden, 1);
    for (int c = 0; c < m.hidden; ++c) {
        double s = 0.0;
        for (int b = 0; b < bsz; ++b) s += dh(b, c);
        gb1(c, 0) = s;
    }
    rep.grads = {std::move(gw1), std::move(gb1), std::move(gw2), std::move(gb2)};
    return rep;
}

/// Hessian-vector product. Exact for quadratic and logistic regression;
/// central finite differences of the gradient for the MLP.
inline MatrixList hvp(const ModelSpec& spec, const ModelParams& params, const Batch& batch,
                      const MatrixList& v) {
    detail::check_params(spec, params);
    if (!same_shapes(params, v)) throw std::invalid_argument("hvp: v shape mismatch");

    if (const auto* q = std::get_if<QuadraticSpec>(&spec)) {
        Matrix out(q->dim, 1);
        for (int j = 0; j < q->dim; ++j) out(j, 0) = q->curvature[j] * v[0](j, 0);
        return {std::move(out)};
    }

    if (const auto* l = std::get_if<LogisticSpec>(&spec)) {
        const int bsz = batch.size();
        const double inv_b = 1.0 / double(bsz);
        Matrix p = detail::affine(batch.inputs, params[0], params[1]);
        detail::softmax_rows(p);
        Matrix dz = detail::affine(batch.inputs, v[0], v[1]);
        // dP_b = P_b (dZ_b - <P_b, dZ_b>)
        for (int b = 0; b < bsz; ++b) {
            double mean = 0.0;
            for (int c = 0; c < l->n_classes; ++c) mean += p(b, c) * dz(b, c);
            for (int c = 0; c < l->n_classes; ++c) dz(b, c) = p(b, c) * (dz(b, c) - mean);
        }
        Matrix hw = matmul(transpose(batch.inputs), dz);
        hw *= inv_b;
        Matrix hb(l->n_classes, 1);
        for (int c = 0; c < l->n_classes; ++c) {
            double s = 0.0;
            for (int b = 0; b < bsz; ++b) s += dz(b, c);
            hb(c, 0) = s * inv_b;
        }
        return {std::move(hw), std::move(hb)};
    }

    // MLP: symmetric difference of gradients along v
    const double vnorm = norm2(v);
    if (vnorm == 0.0) return zeros_like(v);
    double xnorm = norm2(params);
    const double eps = 1e-4 * (1.0 + xnorm);

    ModelParams plus = params, minus = params;
    for (size_t layer = 0; layer < params.size(); ++layer) {
        for (size_t i = 0; i < params[layer].size(); ++i) {
            const double step = eps * v[layer][i] / vnorm;
            plus[layer][i] += step;
            minus[layer][i] -= step;
        }
    }
    const auto gp = loss_grad(spec, plus, batch);
    const auto gm = loss_grad(spec, minus, batch);
    MatrixList out = gp.grads;
    for (size_t layer = 0; layer < out.size(); ++layer) {
        for (size_t i = 0; i < out[layer].size(); ++i) {
            out[layer][i] = (out[layer][i] - gm.grads[layer][i]) * vnorm / (2.0 * eps);
        }
    }
    return out;
}

/// Full-dataset mean loss and top-1 accuracy (accuracy 0 for the quadratic).
inline std::pair<double, double> evaluate(const ModelSpec& spec, const ModelParams& params,
                                          const Batch& dataset) {
    if (dataset.size() < 1) throw std::invalid_argument("evaluate: empty dataset");
    const auto rep = loss_grad(spec, params, dataset);
    const double acc =
        is_classification(spec) ? double(rep.correct_count) / double(dataset.size()) : 0.0;
    return {rep.loss, acc};
}

}  // namespace fedpac
