#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "cgcd/errors.hpp"
#include "cgcd/matrix.hpp"
#include "cgcd/metric_head.hpp"
#include "cgcd/rng.hpp"

namespace cgcd {

// Per-class Gaussian feature generator N(center, diag(sigma^2)) in embedding space.
struct Exemplar {
    std::vector<int> class_ids;
    Matrix centers;  // K x d_emb; unit-normalized trained proxies
    Matrix sigma;    // K x d_emb; per-dimension std of the class embeddings

    std::size_t size() const noexcept { return class_ids.size(); }

    friend bool operator==(const Exemplar&, const Exemplar&) = default;
};

enum class ReplayMode {
    proxy,      // centers are the trained proxies
    data_mean,  // ablation: centers are class embedding means
    none,       // no replay
};

namespace detail {

inline std::vector<double> column_std(const Matrix& m, std::span<const std::size_t> rows) {
    std::vector<double> mean(m.cols(), 0.0), var(m.cols(), 0.0);
    if (rows.size() < 2) return var;
    for (std::size_t r : rows) {
        auto x = m.row(r);
        for (std::size_t k = 0; k < x.size(); ++k) mean[k] += x[k];
    }
    for (double& v : mean) v /= static_cast<double>(rows.size());
    for (std::size_t r : rows) {
        auto x = m.row(r);
        for (std::size_t k = 0; k < x.size(); ++k) var[k] += (x[k] - mean[k]) * (x[k] - mean[k]);
    }
    for (double& v : var) v = std::sqrt(v / static_cast<double>(rows.size() - 1));
    return var;
}

inline std::vector<double> column_mean(const Matrix& m, std::span<const std::size_t> rows) {
    std::vector<double> mean(m.cols(), 0.0);
    for (std::size_t r : rows) {
        auto x = m.row(r);
        for (std::size_t k = 0; k < x.size(); ++k) mean[k] += x[k];
    }
    for (double& v : mean) v /= static_cast<double>(std::max<std::size_t>(rows.size(), 1));
    return mean;
}

inline void normalize(std::span<double> v) {
    const double len = norm2(v);
    if (len == 0.0) {
        canonical_unit(v);
    } else {
        for (double& x : v) x /= len;
    }
}

}  // namespace detail

// Builds the exemplar for every class of `bank`. When `previous` is given,
// classes without samples keep their previous sigma; otherwise they are an error.
inline Exemplar build_exemplar(const ProxyBank& bank, const Matrix& embeddings, std::span<const int> labels,
                               ReplayMode mode = ReplayMode::proxy, const Exemplar* previous = nullptr) {
    if (labels.size() != embeddings.rows()) throw DataError("build_exemplar: labels/embeddings length mismatch");
    if (embeddings.rows() > 0 && embeddings.cols() != bank.dim()) {
        throw DataError("build_exemplar: embedding/proxy dimension mismatch");
    }
    std::map<int, std::vector<std::size_t>> rows;
    for (std::size_t i = 0; i < labels.size(); ++i) rows[labels[i]].push_back(i);

    std::vector<std::size_t> all(embeddings.rows());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const auto global_sigma = detail::column_std(embeddings, all);

    std::map<int, std::size_t> prev_row;
    if (previous) {
        for (std::size_t k = 0; k < previous->size(); ++k) prev_row.emplace(previous->class_ids[k], k);
    }

    Exemplar ex;
    ex.class_ids = bank.class_ids;
    ex.centers = Matrix(bank.size(), bank.dim());
    ex.sigma = Matrix(bank.size(), bank.dim());
    for (std::size_t j = 0; j < bank.size(); ++j) {
        const int cls = bank.class_ids[j];
        auto it = rows.find(cls);
        auto center = ex.centers.row(j);
        auto sigma = ex.sigma.row(j);
        if (it == rows.end()) {
            auto pit = prev_row.find(cls);
            if (pit == prev_row.end()) {
                throw DataError("build_exemplar: class " + std::to_string(cls) + " has no embeddings");
            }
            auto ps = previous->sigma.row(pit->second);
            std::copy(ps.begin(), ps.end(), sigma.begin());
            auto pc = mode == ReplayMode::data_mean ? previous->centers.row(pit->second) : bank.proxies.row(j);
            std::copy(pc.begin(), pc.end(), center.begin());
            detail::normalize(center);
            continue;
        }
        const auto s = it->second.size() >= 2 ? detail::column_std(embeddings, it->second) : global_sigma;
        std::copy(s.begin(), s.end(), sigma.begin());
        if (mode == ReplayMode::data_mean) {
            const auto mu = detail::column_mean(embeddings, it->second);
            std::copy(mu.begin(), mu.end(), center.begin());
        } else {
            auto p = bank.proxies.row(j);
            std::copy(p.begin(), p.end(), center.begin());
        }
        detail::normalize(center);
    }
    return ex;
}

struct ReplayBatch {
    Matrix z;  // count x d_emb
    std::vector<int> labels;
};

// Draws z = center_c + sigma_c * eta with classes visited round-robin. The
// cursor persists across calls so every class gets an equal share over a run.
class ReplayGenerator {
public:
    ReplayGenerator(const Exemplar& ex, std::uint64_t seed) : ex_(&ex), rng_(seed) {}

    ReplayBatch draw(std::size_t count) {
        ReplayBatch out{Matrix(count, ex_->centers.cols()), std::vector<int>(count)};
        if (count == 0 || ex_->size() == 0) {
            out.z = Matrix(0, ex_->centers.cols());
            out.labels.clear();
            return out;
        }
        std::normal_distribution<double> normal(0.0, 1.0);
        for (std::size_t i = 0; i < count; ++i) {
            const std::size_t c = cursor_++ % ex_->size();
            auto z = out.z.row(i);
            auto mu = ex_->centers.row(c);
            auto sd = ex_->sigma.row(c);
            for (std::size_t k = 0; k < z.size(); ++k) z[k] = mu[k] + sd[k] * normal(rng_);
            out.labels[i] = ex_->class_ids[c];
        }
        return out;
    }

private:
    const Exemplar* ex_;
    Rng rng_;
    std::size_t cursor_ = 0;
};

inline ReplayBatch generate_replay(const Exemplar& ex, std::size_t count, std::uint64_t seed) {
    ReplayGenerator gen(ex, seed);
    return gen.draw(count);
}

// ---------------------------------------------------------------------------
// Embedding distillation

struct KdLoss {
    double loss = 0.0;
    Matrix grad_w;  // same shape as the current head's weight
};

// Mean L2 distance between frozen target embeddings and the current head's
// embeddings of the same inputs. `fwd` is the current head's forward pass.
inline KdLoss kd_loss_from_targets(const EmbedBatch& fwd, const Matrix& inputs, const Matrix& targets, std::size_t w_rows,
                                   std::size_t w_cols) {
    KdLoss out{0.0, Matrix(w_rows, w_cols)};
    const std::size_t k = inputs.rows();
    if (k == 0) return out;
    if (targets.rows() != k || targets.cols() != fwd.z.cols()) throw DataError("kd_loss: target shape mismatch");

    Matrix grad_z(k, fwd.z.cols());
    for (std::size_t i = 0; i < k; ++i) {
        auto z1 = fwd.z.row(i);
        auto z0 = targets.row(i);
        double d2 = 0.0;
        for (std::size_t c = 0; c < z1.size(); ++c) d2 += (z1[c] - z0[c]) * (z1[c] - z0[c]);
        const double dist = std::sqrt(d2);
        out.loss += dist;
        if (dist == 0.0) continue;  // subgradient 0 at coincidence
        auto g = grad_z.row(i);
        for (std::size_t c = 0; c < z1.size(); ++c) g[c] = (z1[c] - z0[c]) / (dist * static_cast<double>(k));
    }
    out.loss /= static_cast<double>(k);
    embed_backward(fwd, inputs, grad_z, out.grad_w);
    return out;
}

inline KdLoss kd_loss(const ProjectionHead& cur, const ProjectionHead& prev, const Matrix& old_inputs) {
    if (cur.in_dim() != prev.in_dim() || cur.out_dim() != prev.out_dim()) {
        throw DataError("kd_loss: current and previous heads have different shapes");
    }
    if (old_inputs.rows() == 0) return {0.0, Matrix(cur.out_dim(), cur.in_dim())};
    const auto fwd = embed_batch(cur, old_inputs);
    const Matrix targets = embed_all(prev, old_inputs);
    return kd_loss_from_targets(fwd, old_inputs, targets, cur.out_dim(), cur.in_dim());
}

}  // namespace cgcd
