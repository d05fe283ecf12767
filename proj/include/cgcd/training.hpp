#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <set>
#include <vector>

#include "cgcd/dataset.hpp"
#include "cgcd/errors.hpp"
#include "cgcd/metric_head.hpp"
#include "cgcd/pseudo_label.hpp"
#include "cgcd/replay_distill.hpp"
#include "cgcd/rng.hpp"

namespace cgcd {

struct EpochLog {
    int epoch = 0;
    double loss = 0.0;  // mean over batches of the total loss
    double pa = 0.0;
    double ex = 0.0;
    double kd = 0.0;
};

// Everything a checkpoint needs to resume training.
struct ModelState {
    ProjectionHead head;
    ProxyBank bank;
    AdamWState head_opt;
    AdamWState proxy_opt;

    friend bool operator==(const ModelState&, const ModelState&) = default;
};

struct TrainResult {
    ModelState state;
    std::vector<EpochLog> log;
};

namespace detail {

inline void check_finite_or_throw(const ModelState& s, const char* where) {
    if (!s.head.weight.all_finite() || !s.bank.proxies.all_finite()) {
        throw NumericalError(std::string(where) + ": parameters became non-finite");
    }
}

inline void apply_updates(ModelState& s, const Matrix& grad_w, const Matrix& grad_p, const PaHyperparams& hp, int epoch) {
    const double scale = hp.schedule(epoch);
    adamw_step(s.head.weight.data(), grad_w.data(), s.head_opt, hp.lr_model * scale, hp.weight_decay);
    adamw_step(s.bank.proxies.data(), grad_p.data(), s.proxy_opt, hp.lr_proxy * scale, hp.weight_decay);
}

inline void add_into(Matrix& dst, const Matrix& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst.data()[i] += src.data()[i];
}

}  // namespace detail

// Fresh head and one Gaussian(0, 0.01) proxy per labeled class, trained with
// the proxy-anchor loss.
inline TrainResult train_initial(const EmbeddingDataset& labeled, const PaHyperparams& hp, std::uint64_t seed) {
    hp.validate();
    labeled.validate();
    if (!labeled.labels) throw DataError("train_initial: initial step must be labeled");
    const std::set<int> classes(labeled.labels->begin(), labeled.labels->end());
    if (classes.size() < 2) throw DataError("train_initial: need at least 2 classes");

    auto init_rng = make_rng(seed, "init");
    TrainResult res;
    ModelState& s = res.state;
    s.head = ProjectionHead::random(labeled.dim(), hp.d_emb, init_rng);
    s.bank.proxies = Matrix(classes.size(), hp.d_emb);
    std::normal_distribution<double> normal(0.0, 0.01);
    for (double& v : s.bank.proxies.data()) v = normal(init_rng);
    s.bank.class_ids.assign(classes.begin(), classes.end());
    s.head_opt = AdamWState(s.head.weight.size());
    s.proxy_opt = AdamWState(s.bank.proxies.size());

    auto shuffle_rng = make_rng(seed, "shuffle");
    std::vector<std::size_t> order(labeled.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (int epoch = 0; epoch < hp.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double total = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += hp.batch_size) {
            const std::size_t end = std::min(order.size(), start + hp.batch_size);
            const std::span<const std::size_t> idx(order.data() + start, end - start);
            const Matrix x = gather_rows(labeled.features, idx);
            std::vector<int> y;
            y.reserve(idx.size());
            for (std::size_t r : idx) y.push_back((*labeled.labels)[r]);

            const auto fwd = embed_batch(s.head, x);
            const auto pa = pa_loss(fwd.z, y, s.bank, hp);
            Matrix grad_w(s.head.weight.rows(), s.head.weight.cols());
            embed_backward(fwd, x, pa.grad_z, grad_w);
            detail::apply_updates(s, grad_w, pa.grad_proxies, hp, epoch);
            total += pa.loss;
            ++batches;
        }
        detail::check_finite_or_throw(s, "train_initial");
        const double mean = total / static_cast<double>(batches);
        res.log.push_back({epoch, mean, mean, 0.0, 0.0});
    }
    return res;
}

struct IncrementalOptions {
    bool distill = true;
};

// Per batch: proxy-anchor loss on the pseudo-labeled samples, the same loss on
// replayed features (one per newly discovered sample in the batch), and
// embedding distillation against `prev_head` on the old-split samples.
// `start.bank` must already contain the new proxies. `exemplar == nullptr`
// disables replay.
inline TrainResult train_incremental(ModelState start, const Matrix& inputs, const PseudoLabeledSet& data,
                                     const Exemplar* exemplar, const ProjectionHead& prev_head, const PaHyperparams& hp,
                                     std::uint64_t seed, IncrementalOptions opts = {}) {
    hp.validate();
    if (data.entries.empty()) throw DataError("train_incremental: empty pseudo-labeled set");
    if (prev_head.in_dim() != start.head.in_dim() || prev_head.out_dim() != start.head.out_dim()) {
        throw DataError("train_incremental: previous head shape differs");
    }
    start.bank.validate();

    TrainResult res;
    res.state = std::move(start);
    ModelState& s = res.state;
    s.head_opt = AdamWState(s.head.weight.size());
    s.proxy_opt = AdamWState(s.bank.proxies.size());

    std::vector<std::size_t> rows;
    rows.reserve(data.entries.size());
    for (const auto& e : data.entries) rows.push_back(e.row);
    const Matrix x_all = gather_rows(inputs, rows);
    const Matrix targets = embed_all(prev_head, x_all);

    std::optional<ReplayGenerator> replay;
    if (exemplar && exemplar->size() > 0) replay.emplace(*exemplar, stream_seed(seed, "replay"));

    auto shuffle_rng = make_rng(seed, "shuffle");
    std::vector<std::size_t> order(data.entries.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (int epoch = 0; epoch < hp.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        EpochLog log{epoch};
        std::size_t batches = 0;
        for (std::size_t start_i = 0; start_i < order.size(); start_i += hp.batch_size) {
            const std::size_t end = std::min(order.size(), start_i + hp.batch_size);
            const std::span<const std::size_t> idx(order.data() + start_i, end - start_i);
            const Matrix x = gather_rows(x_all, idx);
            std::vector<int> y;
            std::vector<std::size_t> old_local;
            std::size_t n_new = 0;
            for (std::size_t k = 0; k < idx.size(); ++k) {
                const auto& e = data.entries[idx[k]];
                y.push_back(e.label);
                if (e.provenance == Provenance::cluster) {
                    ++n_new;
                } else {
                    old_local.push_back(k);
                }
            }

            const auto fwd = embed_batch(s.head, x);
            const auto pa = pa_loss(fwd.z, y, s.bank, hp);
            Matrix grad_w(s.head.weight.rows(), s.head.weight.cols());
            embed_backward(fwd, x, pa.grad_z, grad_w);
            Matrix grad_p = pa.grad_proxies;

            double ex_loss = 0.0;
            if (replay && n_new > 0) {
                const auto rb = replay->draw(n_new);
                const auto ex = pa_loss(rb.z, rb.labels, s.bank, hp);
                ex_loss = ex.loss;
                detail::add_into(grad_p, ex.grad_proxies);
            }

            double kd = 0.0;
            if (opts.distill && !old_local.empty()) {
                EmbedBatch sub{gather_rows(fwd.z, old_local), {}};
                for (std::size_t k : old_local) sub.norms.push_back(fwd.norms[k]);
                std::vector<std::size_t> old_global;
                for (std::size_t k : old_local) old_global.push_back(idx[k]);
                const auto kl = kd_loss_from_targets(sub, gather_rows(x, old_local), gather_rows(targets, old_global),
                                                     s.head.weight.rows(), s.head.weight.cols());
                kd = kl.loss;
                detail::add_into(grad_w, kl.grad_w);
            }

            detail::apply_updates(s, grad_w, grad_p, hp, epoch);
            log.pa += pa.loss;
            log.ex += ex_loss;
            log.kd += kd;
            ++batches;
        }
        detail::check_finite_or_throw(s, "train_incremental");
        const auto nb = static_cast<double>(batches);
        log.pa /= nb;
        log.ex /= nb;
        log.kd /= nb;
        log.loss = log.pa + log.ex + log.kd;
        res.log.push_back(log);
    }
    return res;
}

}  // namespace cgcd
