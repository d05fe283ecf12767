#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <unordered_map>
#include <vector>

#include "cgcd/errors.hpp"
#include "cgcd/matrix.hpp"
#include "cgcd/rng.hpp"

namespace cgcd {

// Linear projection from input features to the embedding space (no bias).
struct ProjectionHead {
    Matrix weight;  // d_emb x d_in

    std::size_t in_dim() const noexcept { return weight.cols(); }
    std::size_t out_dim() const noexcept { return weight.rows(); }

    static ProjectionHead random(std::size_t d_in, std::size_t d_emb, Rng& rng) {
        if (d_in == 0 || d_emb == 0) throw ConfigError("projection head dimensions must be positive");
        ProjectionHead h{Matrix(d_emb, d_in)};
        std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(d_in)));
        for (double& w : h.weight.data()) w = normal(rng);
        return h;
    }

    friend bool operator==(const ProjectionHead&, const ProjectionHead&) = default;
};

// One proxy anchor per known class.
struct ProxyBank {
    Matrix proxies;             // C x d_emb
    std::vector<int> class_ids; // dense class per row

    std::size_t size() const noexcept { return proxies.rows(); }
    std::size_t dim() const noexcept { return proxies.cols(); }

    void validate() const {
        if (proxies.rows() == 0) throw DataError("proxy bank is empty");
        if (class_ids.size() != proxies.rows()) throw DataError("proxy bank class_ids/rows mismatch");
        if (!proxies.all_finite()) throw NumericalError("proxy bank has non-finite entries");
        std::vector<int> sorted = class_ids;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
            throw DataError("proxy bank class_ids are not unique");
        }
    }

    std::unordered_map<int, std::size_t> row_of() const {
        std::unordered_map<int, std::size_t> m;
        for (std::size_t r = 0; r < class_ids.size(); ++r) m.emplace(class_ids[r], r);
        return m;
    }

    friend bool operator==(const ProxyBank&, const ProxyBank&) = default;
};

struct PaHyperparams {
    double alpha = 32.0;
    double delta = 0.1;
    double lr_model = 1e-4;
    double lr_proxy = 1e-2;
    double weight_decay = 1e-4;
    int epochs = 60;
    double lr_decay_factor = 0.5;
    int lr_decay_every = 5;
    std::size_t batch_size = 120;
    std::size_t d_emb = 128;

    void validate() const {
        if (!(alpha > 0) || !(delta > 0)) throw ConfigError("alpha and delta must be positive");
        if (!(lr_model > 0) || !(lr_proxy > 0)) throw ConfigError("learning rates must be positive");
        if (weight_decay < 0) throw ConfigError("weight_decay must be non-negative");
        if (epochs < 0) throw ConfigError("epochs must be non-negative");
        if (!(lr_decay_factor > 0) || lr_decay_every <= 0) throw ConfigError("invalid learning-rate schedule");
        if (batch_size == 0 || d_emb == 0) throw ConfigError("batch_size and d_emb must be positive");
    }

    // Step decay: multiply by lr_decay_factor every lr_decay_every epochs.
    double schedule(int epoch) const { return std::pow(lr_decay_factor, epoch / lr_decay_every); }
};

// ---------------------------------------------------------------------------
// Embedding

inline void canonical_unit(std::span<double> z) {
    std::fill(z.begin(), z.end(), 0.0);
    if (!z.empty()) z[0] = 1.0;
}

inline std::vector<double> embed(const ProjectionHead& head, std::span<const double> x) {
    if (x.size() != head.in_dim()) throw DataError("embed: input has dimension " + std::to_string(x.size()) +
                                                   ", head expects " + std::to_string(head.in_dim()));
    std::vector<double> z(head.out_dim());
    for (std::size_t r = 0; r < z.size(); ++r) z[r] = dot(head.weight.row(r), x);
    const double len = norm2(z);
    if (len == 0.0 || !std::isfinite(len)) {
        canonical_unit(z);
    } else {
        for (double& v : z) v /= len;
    }
    return z;
}

// Forward pass over a batch, keeping what the backward pass needs.
struct EmbedBatch {
    Matrix z;                   // B x d_emb, unit rows
    std::vector<double> norms;  // ||W x|| per row (0 -> canonical output, no gradient)
};

inline EmbedBatch embed_batch(const ProjectionHead& head, const Matrix& x) {
    if (x.cols() != head.in_dim()) throw DataError("embed: input dimension mismatch");
    EmbedBatch out{Matrix(x.rows(), head.out_dim()), std::vector<double>(x.rows())};
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto z = out.z.row(i);
        auto xi = x.row(i);
        for (std::size_t r = 0; r < z.size(); ++r) z[r] = dot(head.weight.row(r), xi);
        const double len = norm2(z);
        out.norms[i] = std::isfinite(len) ? len : 0.0;
        if (out.norms[i] == 0.0) {
            canonical_unit(z);
        } else {
            for (double& v : z) v /= len;
        }
    }
    return out;
}

inline Matrix embed_all(const ProjectionHead& head, const Matrix& x) { return embed_batch(head, x).z; }

// Accumulate dL/dW given dL/dz for a batch embedded with `embed_batch`.
// Through z = y/|y|:  dL/dy = (dL/dz - z (z . dL/dz)) / |y|.
inline void embed_backward(const EmbedBatch& fwd, const Matrix& x, const Matrix& grad_z, Matrix& grad_w) {
    std::vector<double> gy(grad_w.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        if (fwd.norms[i] == 0.0) continue;
        auto z = fwd.z.row(i);
        auto gz = grad_z.row(i);
        const double proj = dot(z, gz);
        for (std::size_t r = 0; r < gy.size(); ++r) gy[r] = (gz[r] - z[r] * proj) / fwd.norms[i];
        auto xi = x.row(i);
        for (std::size_t r = 0; r < gy.size(); ++r) {
            if (gy[r] == 0.0) continue;
            auto gw = grad_w.row(r);
            for (std::size_t c = 0; c < xi.size(); ++c) gw[c] += gy[r] * xi[c];
        }
    }
}

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DataError("cosine_similarity: dimension mismatch");
    const double na = norm2(a);
    const double nb = norm2(b);
    if (na == 0.0 || nb == 0.0) throw NumericalError("cosine_similarity: zero vector");
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Proxy-anchor loss

struct PaLoss {
    double loss = 0.0;
    Matrix grad_z;        // B x d
    Matrix grad_proxies;  // C x d
};

namespace detail {

// log(1 + sum_i exp(x_i)) with max shift; writes d/dx_i into `weights`.
inline double log1p_sum_exp(std::span<const double> x, std::span<double> weights) {
    double m = 0.0;
    for (double v : x) m = std::max(m, v);
    double tail = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        weights[i] = std::exp(x[i] - m);
        tail += weights[i];
    }
    const double denom = std::exp(-m) + tail;
    for (double& w : weights) w /= denom;
    // m == 0: log1p keeps precision for tiny sums
    return m == 0.0 ? std::log1p(tail) : m + std::log(denom);
}

inline std::vector<double> unit_rows(const Matrix& m, Matrix& unit, const char* what) {
    unit = Matrix(m.rows(), m.cols());
    std::vector<double> norms(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        norms[i] = norm2(m.row(i));
        if (norms[i] == 0.0 || !std::isfinite(norms[i])) {
            throw NumericalError(std::string("pa_loss: zero or non-finite ") + what + " row");
        }
        auto src = m.row(i);
        auto dst = unit.row(i);
        for (std::size_t k = 0; k < src.size(); ++k) dst[k] = src[k] / norms[i];
    }
    return norms;
}

}  // namespace detail

// Proxy-anchor loss over a batch: positives pulled to their own proxy (averaged
// over proxies present in the batch), negatives pushed from every proxy
// (averaged over the whole bank). Exact gradients through cosine similarity.
inline PaLoss pa_loss(const Matrix& batch_z, std::span<const int> labels, const ProxyBank& bank, const PaHyperparams& hp) {
    const std::size_t b = batch_z.rows();
    const std::size_t c = bank.size();
    if (b == 0) throw DataError("pa_loss: empty batch");
    if (labels.size() != b) throw DataError("pa_loss: labels/batch length mismatch");
    if (batch_z.cols() != bank.dim()) throw DataError("pa_loss: embedding/proxy dimension mismatch");
    if (c == 0) throw DataError("pa_loss: empty proxy bank");

    const auto rows = bank.row_of();
    std::vector<std::size_t> target(b);
    for (std::size_t i = 0; i < b; ++i) {
        auto it = rows.find(labels[i]);
        if (it == rows.end()) throw DataError("pa_loss: label " + std::to_string(labels[i]) + " has no proxy");
        target[i] = it->second;
    }

    Matrix zu, pu;
    const auto zn = detail::unit_rows(batch_z, zu, "embedding");
    const auto pn = detail::unit_rows(bank.proxies, pu, "proxy");

    constexpr double kClamp = 1.0 - 1e-7;
    Matrix sim(b, c);
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < c; ++j) sim(i, j) = dot(zu.row(i), pu.row(j));
    }

    std::vector<std::vector<std::size_t>> pos(c);
    for (std::size_t i = 0; i < b; ++i) pos[target[i]].push_back(i);
    std::size_t n_pos_proxies = 0;
    for (const auto& p : pos) n_pos_proxies += p.empty() ? 0 : 1;

    Matrix dsim(b, c);
    double pos_term = 0.0;
    double neg_term = 0.0;
    std::vector<double> x, w;
    std::vector<std::size_t> members;
    for (std::size_t j = 0; j < c; ++j) {
        if (!pos[j].empty()) {
            x.resize(pos[j].size());
            w.resize(pos[j].size());
            for (std::size_t k = 0; k < pos[j].size(); ++k) {
                const double s = std::clamp(sim(pos[j][k], j), -kClamp, kClamp);
                x[k] = -hp.alpha * (s - hp.delta);
            }
            pos_term += detail::log1p_sum_exp(x, w);
            for (std::size_t k = 0; k < pos[j].size(); ++k) {
                dsim(pos[j][k], j) += -hp.alpha * w[k] / static_cast<double>(n_pos_proxies);
            }
        }
        members.clear();
        for (std::size_t i = 0; i < b; ++i) {
            if (target[i] != j) members.push_back(i);
        }
        if (members.empty()) continue;
        x.resize(members.size());
        w.resize(members.size());
        for (std::size_t k = 0; k < members.size(); ++k) {
            const double s = std::clamp(sim(members[k], j), -kClamp, kClamp);
            x[k] = hp.alpha * (s + hp.delta);
        }
        neg_term += detail::log1p_sum_exp(x, w);
        for (std::size_t k = 0; k < members.size(); ++k) {
            dsim(members[k], j) += hp.alpha * w[k] / static_cast<double>(c);
        }
    }

    PaLoss out;
    out.loss = pos_term / static_cast<double>(n_pos_proxies) + neg_term / static_cast<double>(c);
    out.grad_z = Matrix(b, batch_z.cols());
    out.grad_proxies = Matrix(c, bank.dim());
    // ds/dz = (p_hat - s z_hat)/|z|,  ds/dp = (z_hat - s p_hat)/|p|
    for (std::size_t i = 0; i < b; ++i) {
        auto gz = out.grad_z.row(i);
        for (std::size_t j = 0; j < c; ++j) {
            const double g = dsim(i, j);
            if (g == 0.0) continue;
            const double s = sim(i, j);
            auto gp = out.grad_proxies.row(j);
            auto zi = zu.row(i);
            auto pj = pu.row(j);
            for (std::size_t k = 0; k < gz.size(); ++k) {
                gz[k] += g * (pj[k] - s * zi[k]) / zn[i];
                gp[k] += g * (zi[k] - s * pj[k]) / pn[j];
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// AdamW

struct AdamWState {
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    explicit AdamWState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}

    friend bool operator==(const AdamWState&, const AdamWState&) = default;
};

// Decoupled weight decay: p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p).
inline void adamw_step(std::span<double> params, std::span<const double> grads, AdamWState& st, double lr, double wd) {
    if (params.size() != grads.size() || st.m.size() != params.size() || st.v.size() != params.size()) {
        throw DataError("adamw_step: parameter/gradient/state shapes differ");
    }
    for (double g : grads) {
        if (std::isnan(g)) throw NumericalError("adamw_step: NaN gradient");
    }
    ++st.step;
    const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * grads[i];
        st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * grads[i] * grads[i];
        const double m_hat = st.m[i] / bc1;
        const double v_hat = st.v[i] / bc2;
        params[i] -= lr * (m_hat / (std::sqrt(v_hat) + st.eps) + wd * params[i]);
    }
}

// ---------------------------------------------------------------------------
// Prediction

// Index into `bank` of the most similar proxy; ties go to the lowest class id.
inline std::size_t nearest_proxy(std::span<const double> z, const ProxyBank& bank) {
    std::size_t best = 0;
    double best_s = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < bank.size(); ++j) {
        const double s = cosine_similarity(z, bank.proxies.row(j));
        if (s > best_s || (s == best_s && bank.class_ids[j] < bank.class_ids[best])) {
            best = j;
            best_s = s;
        }
    }
    return best;
}

inline std::vector<int> predict(const ProjectionHead& head, const ProxyBank& bank, const Matrix& x) {
    const Matrix z = embed_all(head, x);
    std::vector<int> out(z.rows());
    for (std::size_t i = 0; i < z.rows(); ++i) out[i] = bank.class_ids[nearest_proxy(z.row(i), bank)];
    return out;
}

}  // namespace cgcd
