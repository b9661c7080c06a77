#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedpac/linalg.hpp"
#include "fedpac/matrix.hpp"
#include "fedpac/rng.hpp"

namespace fedpac {

enum class Variant : uint8_t { Sgd = 0, Sophia = 1, Muon = 2, Soap = 3 };

inline const char* variant_name(Variant v) {
    switch (v) {
        case Variant::Sgd: return "sgd";
        case Variant::Sophia: return "sophia";
        case Variant::Muon: return "muon";
        case Variant::Soap: return "soap";
    }
    return "?";
}

inline Variant variant_from_name(const std::string& s) {
    if (s == "sgd") return Variant::Sgd;
    if (s == "sophia") return Variant::Sophia;
    if (s == "muon") return Variant::Muon;
    if (s == "soap") return Variant::Soap;
    throw std::invalid_argument("unknown optimizer variant: " + s);
}

struct OptimizerHyper {
    double beta1 = 0.9;
    double beta2 = 0.99;
    double eps = 1e-8;
    double clip_rho = 1.0;     // Sophia
    int precond_freq = 5;      // SOAP eigenvector refresh period f
    int hessian_freq = 5;      // Sophia diag-Hessian period f_h
    int ns_steps = 5;          // Muon
    bool dim_scaling = true;   // Muon gamma(m, n) = sqrt(m/n)
    bool ns_classic = false;   // Muon: classic half-step recurrence instead of quintic
    bool bias_correction = false;  // off to match the update rules verbatim

    static OptimizerHyper defaults_for(Variant v) {
        OptimizerHyper h;
        switch (v) {
            case Variant::Sophia:
                h.beta1 = 0.9;
                h.beta2 = 0.99;
                break;
            case Variant::Muon:
                h.beta1 = 0.9;
                h.beta2 = 0.95;
                break;
            case Variant::Soap:
                h.beta1 = 0.95;
                h.beta2 = 0.95;
                break;
            case Variant::Sgd:
                break;
        }
        return h;
    }
};

struct SophiaState {
    Matrix m;  // momentum
    Matrix h;  // diag-Hessian EMA, entries >= 0
    uint64_t step_count = 0;
};

struct MuonState {
    Matrix m;  // momentum
};

struct SoapState {
    Matrix l;    // left factor, PSD
    Matrix r;    // right factor, PSD
    Matrix q_l;  // orthonormal
    Matrix q_r;  // orthonormal
    Matrix m;    // rotated momentum
    Matrix v;    // rotated second moment, entries >= 0
    uint64_t step_count = 0;
};

/// Per-layer optimizer state for one variant, plus its hyperparameters.
struct PreconditionerState {
    Variant variant = Variant::Sgd;
    OptimizerHyper hyper;
    std::vector<std::pair<int, int>> shapes;  // owning layer shapes
    std::vector<SophiaState> sophia;
    std::vector<MuonState> muon;
    std::vector<SoapState> soap;

    size_t layer_count() const { return shapes.size(); }
};

using HvpOracle = std::function<MatrixList(const MatrixList&)>;

inline PreconditionerState zero_state(Variant variant,
                                      const std::vector<std::pair<int, int>>& shapes,
                                      const OptimizerHyper& hyper) {
    PreconditionerState st;
    st.variant = variant;
    st.hyper = hyper;
    st.shapes = shapes;
    for (auto [m, n] : shapes) {
        switch (variant) {
            case Variant::Sgd:
                break;
            case Variant::Sophia:
                st.sophia.push_back({Matrix(m, n), Matrix(m, n), 0});
                break;
            case Variant::Muon:
                st.muon.push_back({Matrix(m, n)});
                break;
            case Variant::Soap:
                st.soap.push_back({Matrix(m, m), Matrix(n, n), Matrix::identity(m),
                                   Matrix::identity(n), Matrix(m, n), Matrix(m, n), 0});
                break;
        }
    }
    return st;
}

namespace detail {

/// All stored tensors of a state in a fixed order (layer-major).
inline std::vector<const Matrix*> collect_tensors(const PreconditionerState& s) {
    std::vector<const Matrix*> out;
    switch (s.variant) {
        case Variant::Sgd:
            break;
        case Variant::Sophia:
            for (const auto& l : s.sophia) {
                out.push_back(&l.m);
                out.push_back(&l.h);
            }
            break;
        case Variant::Muon:
            for (const auto& l : s.muon) out.push_back(&l.m);
            break;
        case Variant::Soap:
            for (const auto& l : s.soap) {
                out.push_back(&l.l);
                out.push_back(&l.r);
                out.push_back(&l.q_l);
                out.push_back(&l.q_r);
                out.push_back(&l.m);
                out.push_back(&l.v);
            }
            break;
    }
    return out;
}

inline std::vector<Matrix*> collect_tensors(PreconditionerState& s) {
    std::vector<Matrix*> out;
    for (const Matrix* p : collect_tensors(const_cast<const PreconditionerState&>(s))) {
        out.push_back(const_cast<Matrix*>(p));
    }
    return out;
}

inline void check_homogeneous(const PreconditionerState& a, const PreconditionerState& b) {
    if (a.variant != b.variant) throw std::invalid_argument("preconditioner: variant mismatch");
    if (a.shapes != b.shapes) throw std::invalid_argument("preconditioner: shape mismatch");
}

inline void check_grads(const PreconditionerState& s, const MatrixList& grads) {
    if (grads.size() != s.shapes.size()) throw std::invalid_argument("preconditioner: layer count");
    for (size_t i = 0; i < grads.size(); ++i) {
        if (grads[i].rows() != s.shapes[i].first || grads[i].cols() != s.shapes[i].second) {
            throw std::invalid_argument("preconditioner: gradient shape mismatch");
        }
    }
}

}  // namespace detail

/// Total floats held by the state (used for communication accounting).
inline size_t state_num_floats(const PreconditionerState& s) {
    size_t n = 0;
    for (const Matrix* t : detail::collect_tensors(s)) n += t->size();
    return n;
}

/// One optimizer-state transition given this step's gradients. Sophia draws
/// Rademacher probes from rng and needs hvp_oracle on its Hessian-refresh
/// steps; SOAP refreshes its eigenvector bases every precond_freq steps.
inline PreconditionerState update_state(const PreconditionerState& state, const MatrixList& grads,
                                        const HvpOracle& hvp_oracle, Rng& rng) {
    detail::check_grads(state, grads);
    PreconditionerState s = state;
    const auto& hp = s.hyper;

    switch (s.variant) {
        case Variant::Sgd:
            break;

        case Variant::Muon: {
            for (size_t i = 0; i < s.muon.size(); ++i) {
                auto& m = s.muon[i].m;
                for (size_t k = 0; k < m.size(); ++k) {
                    m[k] = hp.beta1 * m[k] + (1.0 - hp.beta1) * grads[i][k];
                }
            }
            break;
        }

        case Variant::Sophia: {
            const bool refresh = (s.sophia.empty() ? false
                                                   : s.sophia[0].step_count % uint64_t(hp.hessian_freq) == 0);
            MatrixList probe, hv;
            if (refresh) {
                if (!hvp_oracle) {
                    throw std::invalid_argument("update_state: Sophia needs hvp_oracle at refresh step");
                }
                probe.reserve(grads.size());
                for (const auto& g : grads) {
                    Matrix u(g.rows(), g.cols());
                    for (size_t k = 0; k < u.size(); ++k) u[k] = rng.rademacher();
                    probe.push_back(std::move(u));
                }
                hv = hvp_oracle(probe);
                if (!same_shapes(hv, grads)) {
                    throw std::invalid_argument("update_state: hvp_oracle shape mismatch");
                }
            }
            for (size_t i = 0; i < s.sophia.size(); ++i) {
                auto& layer = s.sophia[i];
                for (size_t k = 0; k < layer.m.size(); ++k) {
                    layer.m[k] = hp.beta1 * layer.m[k] + (1.0 - hp.beta1) * grads[i][k];
                }
                if (refresh) {
                    for (size_t k = 0; k < layer.h.size(); ++k) {
                        const double est = probe[i][k] * hv[i][k];  // u .* (H u)
                        layer.h[k] = hp.beta2 * layer.h[k] + (1.0 - hp.beta2) * std::max(est, 0.0);
                    }
                }
                layer.step_count++;
            }
            break;
        }

        case Variant::Soap: {
            for (size_t i = 0; i < s.soap.size(); ++i) {
                auto& layer = s.soap[i];
                const Matrix& g = grads[i];
                const Matrix ggt = gram_left(g);
                const Matrix gtg = gram_right(g);
                for (size_t k = 0; k < layer.l.size(); ++k) {
                    layer.l[k] = hp.beta2 * layer.l[k] + (1.0 - hp.beta2) * ggt[k];
                }
                for (size_t k = 0; k < layer.r.size(); ++k) {
                    layer.r[k] = hp.beta2 * layer.r[k] + (1.0 - hp.beta2) * gtg[k];
                }
                if (layer.step_count % uint64_t(hp.precond_freq) == 0) {
                    layer.q_l = linalg::qr_eigenvectors(layer.l, layer.q_l);
                    layer.q_r = linalg::qr_eigenvectors(layer.r, layer.q_r);
                }
                const Matrix g_rot = matmul(matmul(transpose(layer.q_l), g), layer.q_r);
                for (size_t k = 0; k < layer.m.size(); ++k) {
                    layer.m[k] = hp.beta1 * layer.m[k] + (1.0 - hp.beta1) * g_rot[k];
                    layer.v[k] = hp.beta2 * layer.v[k] + (1.0 - hp.beta2) * g_rot[k] * g_rot[k];
                }
                layer.step_count++;
            }
            break;
        }
    }
    return s;
}

/// The preconditioned mapping: turns this step's gradients into an update
/// direction using the state already advanced by update_state.
inline MatrixList apply_precond(const PreconditionerState& state, const MatrixList& grads) {
    detail::check_grads(state, grads);
    const auto& hp = state.hyper;
    MatrixList out;
    out.reserve(grads.size());

    switch (state.variant) {
        case Variant::Sgd:
            return grads;

        case Variant::Sophia: {
            if (state.sophia.size() != grads.size()) {
                throw std::invalid_argument("apply_precond: uninitialized state");
            }
            for (size_t i = 0; i < grads.size(); ++i) {
                const auto& layer = state.sophia[i];
                Matrix d(layer.m.rows(), layer.m.cols());
                for (size_t k = 0; k < d.size(); ++k) {
                    const double raw = layer.m[k] / (layer.h[k] + hp.eps);
                    d[k] = std::clamp(raw, -hp.clip_rho, hp.clip_rho);
                }
                out.push_back(std::move(d));
            }
            return out;
        }

        case Variant::Muon: {
            if (state.muon.size() != grads.size()) {
                throw std::invalid_argument("apply_precond: uninitialized state");
            }
            for (size_t i = 0; i < grads.size(); ++i) {
                const Matrix& m = state.muon[i].m;
                const bool is_matrix = m.rows() > 1 && m.cols() > 1;
                if (!is_matrix || frobenius_norm(m) == 0.0) {
                    out.push_back(m);  // vector layers (and zero momentum) fall back to momentum SGD
                    continue;
                }
                Matrix u = linalg::newton_schulz(m, hp.ns_steps, hp.eps,
                                                 hp.ns_classic ? linalg::NsVariant::Classic
                                                               : linalg::NsVariant::Quintic);
                if (hp.dim_scaling) {
                    u *= std::sqrt(double(m.rows()) / double(m.cols()));
                }
                out.push_back(std::move(u));
            }
            return out;
        }

        case Variant::Soap: {
            if (state.soap.size() != grads.size()) {
                throw std::invalid_argument("apply_precond: uninitialized state");
            }
            for (size_t i = 0; i < grads.size(); ++i) {
                const auto& layer = state.soap[i];
                Matrix n(layer.m.rows(), layer.m.cols());
                for (size_t k = 0; k < n.size(); ++k) {
                    n[k] = layer.m[k] / (std::sqrt(layer.v[k]) + hp.eps);
                }
                out.push_back(matmul(matmul(layer.q_l, n), transpose(layer.q_r)));
            }
            return out;
        }
    }
    throw std::logic_error("apply_precond: unreachable");
}

/// Entrywise mean of homogeneous states. SOAP's orthonormal bases are
/// recomputed from the averaged factors (seeded with the first state's
/// basis) instead of averaged, which would break orthonormality.
inline PreconditionerState state_average(const std::vector<PreconditionerState>& states) {
    if (states.empty()) throw std::invalid_argument("state_average: empty input");
    for (size_t i = 1; i < states.size(); ++i) detail::check_homogeneous(states[0], states[i]);

    PreconditionerState avg = states[0];
    auto dst = detail::collect_tensors(avg);
    const double inv = 1.0 / double(states.size());
    for (size_t i = 1; i < states.size(); ++i) {
        auto src = detail::collect_tensors(states[i]);
        for (size_t t = 0; t < dst.size(); ++t) *dst[t] += *src[t];
    }
    for (Matrix* t : dst) *t *= inv;

    if (avg.variant == Variant::Soap) {
        for (size_t i = 0; i < avg.soap.size(); ++i) {
            avg.soap[i].q_l = linalg::qr_eigenvectors(avg.soap[i].l, states[0].soap[i].q_l);
            avg.soap[i].q_r = linalg::qr_eigenvectors(avg.soap[i].r, states[0].soap[i].q_r);
        }
    }

    // step_count = max over clients
    for (size_t i = 1; i < states.size(); ++i) {
        for (size_t l = 0; l < avg.sophia.size(); ++l) {
            avg.sophia[l].step_count =
                std::max(avg.sophia[l].step_count, states[i].sophia[l].step_count);
        }
        for (size_t l = 0; l < avg.soap.size(); ++l) {
            avg.soap[l].step_count =
                std::max(avg.soap[l].step_count, states[i].soap[l].step_count);
        }
    }
    return avg;
}

enum class DistanceMode { Frobenius, SpectralLayerwise };

/// Frobenius mode: squared Frobenius norm of the concatenated differences of
/// every state tensor (one number). Spectral mode: per layer, spectral norms
/// of the differences of the curvature-carrying tensors.
inline std::vector<double> state_distance(const PreconditionerState& a,
                                          const PreconditionerState& b, DistanceMode mode) {
    detail::check_homogeneous(a, b);

    if (mode == DistanceMode::Frobenius) {
        auto ta = detail::collect_tensors(a);
        auto tb = detail::collect_tensors(b);
        double sum = 0.0;
        for (size_t t = 0; t < ta.size(); ++t) {
            for (size_t k = 0; k < ta[t]->size(); ++k) {
                const double d = (*ta[t])[k] - (*tb[t])[k];
                sum += d * d;
            }
        }
        return {sum};
    }

    std::vector<double> per_layer;
    for (size_t l = 0; l < a.layer_count(); ++l) {
        switch (a.variant) {
            case Variant::Sgd:
                per_layer.push_back(0.0);
                break;
            case Variant::Sophia:
                per_layer.push_back(linalg::spectral_norm(a.sophia[l].h - b.sophia[l].h));
                break;
            case Variant::Muon:
                per_layer.push_back(linalg::spectral_norm(a.muon[l].m - b.muon[l].m));
                break;
            case Variant::Soap:
                per_layer.push_back(linalg::spectral_norm(a.soap[l].l - b.soap[l].l));
                per_layer.push_back(linalg::spectral_norm(a.soap[l].r - b.soap[l].r));
                break;
        }
    }
    return per_layer;
}

// ---------------------------------------------------------------------------
// SVD compression of state tensors (light upload variant)
// ---------------------------------------------------------------------------

struct CompressedTensor {
    int rows = 0;
    int cols = 0;
    Matrix u;
    std::vector<double> s;
    Matrix v;
};

struct CompressedState {
    Variant variant = Variant::Sgd;
    OptimizerHyper hyper;
    std::vector<std::pair<int, int>> shapes;
    std::vector<CompressedTensor> tensors;  // same fixed order as collect_tensors
    std::vector<uint64_t> step_counts;      // per layer, where applicable
};

/// Replace every state tensor by its rank-ceil(rf * min(m, n)) SVD factors.
/// Returns the compressed form and the transmitted float count times 8.
inline std::pair<CompressedState, size_t> compress_state(const PreconditionerState& state,
                                                         double rank_fraction) {
    if (!(rank_fraction > 0.0) || rank_fraction > 1.0) {
        throw std::invalid_argument("compress_state: rank_fraction out of (0, 1]");
    }
    CompressedState cs;
    cs.variant = state.variant;
    cs.hyper = state.hyper;
    cs.shapes = state.shapes;
    for (const auto& l : state.sophia) cs.step_counts.push_back(l.step_count);
    for (const auto& l : state.soap) cs.step_counts.push_back(l.step_count);

    size_t floats = 0;
    for (const Matrix* t : detail::collect_tensors(state)) {
        const int minmn = std::min(t->rows(), t->cols());
        const int rank = std::max(1, int(std::ceil(rank_fraction * minmn)));
        auto svd = linalg::truncated_svd(*t, rank);
        floats += size_t(t->rows()) * rank + rank + size_t(t->cols()) * rank;
        cs.tensors.push_back({t->rows(), t->cols(), std::move(svd.u), std::move(svd.s),
                              std::move(svd.v)});
    }
    return {std::move(cs), floats * 8};
}

inline PreconditionerState decompress_state(const CompressedState& cs) {
    PreconditionerState st = zero_state(cs.variant, cs.shapes, cs.hyper);
    auto dst = detail::collect_tensors(st);
    if (dst.size() != cs.tensors.size()) throw std::invalid_argument("decompress_state: tensor count");
    for (size_t t = 0; t < dst.size(); ++t) {
        const auto& ct = cs.tensors[t];
        Matrix rec(ct.rows, ct.cols);
        const int rank = int(ct.s.size());
        for (int i = 0; i < ct.rows; ++i) {
            for (int j = 0; j < ct.cols; ++j) {
                double acc = 0.0;
                for (int k = 0; k < rank; ++k) acc += ct.u(i, k) * ct.s[k] * ct.v(j, k);
                rec(i, j) = acc;
            }
        }
        *dst[t] = std::move(rec);
    }
    size_t li = 0;
    for (auto& l : st.sophia) l.step_count = cs.step_counts[li++];
    li = 0;
    for (auto& l : st.soap) l.step_count = cs.step_counts[li++];
    return st;
}

// ---------------------------------------------------------------------------
// Binary serialization: little-endian, header with variant tag, layer count
// and per-layer shapes, then hyperparameters and the state tensors.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u8(std::vector<uint8_t>& b, uint8_t v) { b.push_back(v); }

inline void put_u32(std::vector<uint8_t>& b, uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(uint8_t(v >> (8 * i)));
}

inline void put_u64(std::vector<uint8_t>& b, uint64_t v) {
    for (int i = 0; i < 8; ++i) b.push_back(uint8_t(v >> (8 * i)));
}

inline void put_f64(std::vector<uint8_t>& b, double v) {
    uint64_t u;
    std::memcpy(&u, &v, 8);
    put_u64(b, u);
}

struct Reader {
    const std::vector<uint8_t>& b;
    size_t pos = 0;

    uint8_t u8() {
        if (pos + 1 > b.size()) throw std::runtime_error("state deserialize: truncated");
        return b[pos++];
    }
    uint32_t u32() {
        if (pos + 4 > b.size()) throw std::runtime_error("state deserialize: truncated");
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(b[pos++]) << (8 * i);
        return v;
    }
    uint64_t u64() {
        if (pos + 8 > b.size()) throw std::runtime_error("state deserialize: truncated");
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= uint64_t(b[pos++]) << (8 * i);
        return v;
    }
    double f64() {
        const uint64_t u = u64();
        double v;
        std::memcpy(&v, &u, 8);
        return v;
    }
};

}  // namespace detail

inline std::vector<uint8_t> serialize_state(const PreconditionerState& s) {
    std::vector<uint8_t> b;
    b.reserve(64 + state_num_floats(s) * 8);
    detail::put_u32(b, 0x54535046u);  // "FPST"
    detail::put_u32(b, 1u);           // version
    detail::put_u8(b, uint8_t(s.variant));
    detail::put_u32(b, uint32_t(s.shapes.size()));
    for (auto [r, c] : s.shapes) {
        detail::put_u32(b, uint32_t(r));
        detail::put_u32(b, uint32_t(c));
    }
    const auto& h = s.hyper;
    detail::put_f64(b, h.beta1);
    detail::put_f64(b, h.beta2);
    detail::put_f64(b, h.eps);
    detail::put_f64(b, h.clip_rho);
    detail::put_u32(b, uint32_t(h.precond_freq));
    detail::put_u32(b, uint32_t(h.hessian_freq));
    detail::put_u32(b, uint32_t(h.ns_steps));
    detail::put_u8(b, h.dim_scaling ? 1 : 0);
    detail::put_u8(b, h.ns_classic ? 1 : 0);
    detail::put_u8(b, h.bias_correction ? 1 : 0);

    for (const auto& l : s.sophia) detail::put_u64(b, l.step_count);
    for (const auto& l : s.soap) detail::put_u64(b, l.step_count);
    for (const Matrix* t : detail::collect_tensors(s)) {
        for (size_t k = 0; k < t->size(); ++k) detail::put_f64(b, (*t)[k]);
    }
    return b;
}

inline PreconditionerState deserialize_state(const std::vector<uint8_t>& bytes) {
    detail::Reader r{bytes};
    if (r.u32() != 0x54535046u) throw std::runtime_error("state deserialize: bad magic");
    if (r.u32() != 1u) throw std::runtime_error("state deserialize: unsupported version");
    const Variant variant = Variant(r.u8());
    const uint32_t layers = r.u32();
    std::vector<std::pair<int, int>> shapes(layers);
    for (auto& sh : shapes) {
        sh.first = int(r.u32());
        sh.second = int(r.u32());
    }
    OptimizerHyper h;
    h.beta1 = r.f64();
    h.beta2 = r.f64();
    h.eps = r.f64();
    h.clip_rho = r.f64();
    h.precond_freq = int(r.u32());
    h.hessian_freq = int(r.u32());
    h.ns_steps = int(r.u32());
    h.dim_scaling = r.u8() != 0;
    h.ns_classic = r.u8() != 0;
    h.bias_correction = r.u8() != 0;

    PreconditionerState s = zero_state(variant, shapes, h);
    for (auto& l : s.sophia) l.step_count = r.u64();
    for (auto& l : s.soap) l.step_count = r.u64();
    for (Matrix* t : detail::collect_tensors(s)) {
        for (size_t k = 0; k < t->size(); ++k) (*t)[k] = r.f64();
    }
    return s;
}

}  // namespace fedpac
