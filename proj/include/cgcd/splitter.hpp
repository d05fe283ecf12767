#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "cgcd/errors.hpp"
#include "cgcd/matrix.hpp"
#include "cgcd/metric_head.hpp"
#include "cgcd/rng.hpp"

namespace cgcd {

inline constexpr int kOld = 0;
inline constexpr int kNew = 1;

struct SplitDecision {
    std::int64_t sample_id = 0;
    double initial_score = 0.0;  // max cosine similarity to any old proxy
    int initial_label = kOld;
    double fine_prob = std::numeric_limits<double>::quiet_NaN();      // m(z) = P(new); NaN until fine split
    double gmm_posterior = std::numeric_limits<double>::quiet_NaN();  // P(old-like component | score)
    int final_label = kOld;
};

struct SplitConfig {
    double epsilon = 0.0;
    int epochs = 3;
    double lr = 1e-4;
    double weight_decay = 1e-4;
    std::size_t batch_size = 64;
    std::size_t hidden = 0;  // 0 -> max(64, d_emb / 2)
    double clean_threshold = 0.95;
    int gmm_iters = 100;
    double gmm_tol = 1e-6;
    double bn_momentum = 0.9;
    double bn_eps = 1e-5;

    void validate() const {
        if (epochs < 0) throw ConfigError("split epochs must be non-negative");
        if (!(lr > 0)) throw ConfigError("split lr must be positive");
        if (batch_size < 2) throw ConfigError("split batch_size must be at least 2");
        if (!(clean_threshold > 0.5 && clean_threshold <= 1.0)) throw ConfigError("clean_threshold must be in (0.5,1]");
        if (gmm_iters <= 0) throw ConfigError("gmm_iters must be positive");
    }
};

// ---------------------------------------------------------------------------
// Initial split

inline std::vector<SplitDecision> initial_split(const Matrix& embeddings, std::span<const std::int64_t> ids,
                                                const ProxyBank& bank, double epsilon = 0.0) {
    if (embeddings.rows() == 0) throw DataError("initial_split: empty input");
    if (ids.size() != embeddings.rows()) throw DataError("initial_split: ids/embeddings length mismatch");
    bank.validate();
    std::vector<SplitDecision> out(embeddings.rows());
    for (std::size_t i = 0; i < embeddings.rows(); ++i) {
        double best = -1.0;
        for (std::size_t j = 0; j < bank.size(); ++j) {
            best = std::max(best, cosine_similarity(embeddings.row(i), bank.proxies.row(j)));
        }
        out[i].sample_id = ids[i];
        out[i].initial_score = best;
        out[i].initial_label = best >= epsilon ? kOld : kNew;
        out[i].final_label = out[i].initial_label;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Two-component 1-D Gaussian mixture

struct Gmm1D {
    std::array<double, 2> weight{0.5, 0.5};
    std::array<double, 2> mean{0.0, 0.0};  // ascending
    std::array<double, 2> var{1.0, 1.0};
    std::vector<double> loglik_trace;
    int iterations = 0;
    bool converged = false;

    static constexpr double kMinVar = 1e-8;

    // Posterior of the high-mean component; the low-mean one is 1 minus this.
    double posterior_high(double x) const {
        const double l0 = log_component(0, x);
        const double l1 = log_component(1, x);
        return 1.0 / (1.0 + std::exp(l0 - l1));
    }

    std::array<double, 2> responsibilities(double x) const {
        const double high = posterior_high(x);
        return {1.0 - high, high};
    }

    double log_component(int k, double x) const {
        const double d = x - mean[k];
        return std::log(weight[k]) - 0.5 * std::log(2.0 * M_PI * var[k]) - 0.5 * d * d / var[k];
    }

    double log_likelihood(std::span<const double> xs) const {
        double ll = 0.0;
        for (double x : xs) {
            const double a = log_component(0, x);
            const double b = log_component(1, x);
            const double m = std::max(a, b);
            ll += m + std::log(std::exp(a - m) + std::exp(b - m));
        }
        return ll;
    }
};

namespace detail {
inline double quantile_sorted(const std::vector<double>& s, double q) {
    const double pos = q * static_cast<double>(s.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, s.size() - 1);
    return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
}
}  // namespace detail

// EM from quartile initialization; stops when the log-likelihood gain drops
// below `tol` or after `iters` iterations. Components are ordered by mean.
inline Gmm1D fit_gmm1d(std::span<const double> xs, int iters = 100, double tol = 1e-6) {
    if (xs.size() < 4) throw DataError("fit_gmm1d: need at least 4 values");
    for (double x : xs) {
        if (!std::isfinite(x)) throw NumericalError("fit_gmm1d: non-finite value");
    }
    std::vector<double> sorted(xs.begin(), xs.end());
    std::sort(sorted.begin(), sorted.end());
    if (sorted.front() == sorted.back()) throw NumericalError("fit_gmm1d: all values equal, single-point fit");

    Gmm1D g;
    g.mean = {detail::quantile_sorted(sorted, 0.25), detail::quantile_sorted(sorted, 0.75)};
    if (g.mean[0] == g.mean[1]) g.mean = {sorted.front(), sorted.back()};
    double pooled = 0.0;
    for (double x : xs) {
        const double d0 = x - g.mean[0];
        const double d1 = x - g.mean[1];
        pooled += std::min(d0 * d0, d1 * d1);
    }
    pooled = std::max(pooled / static_cast<double>(xs.size()), Gmm1D::kMinVar);
    g.var = {pooled, pooled};

    const auto n = static_cast<double>(xs.size());
    std::vector<double> r_high(xs.size());
    double prev = -std::numeric_limits<double>::infinity();
    for (int it = 0; it < iters; ++it) {
        // E-step; the log-likelihood of the current parameters is recorded here
        double ll = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double a = g.log_component(0, xs[i]);
            const double b = g.log_component(1, xs[i]);
            const double m = std::max(a, b);
            ll += m + std::log(std::exp(a - m) + std::exp(b - m));
            r_high[i] = 1.0 / (1.0 + std::exp(a - b));
        }
        g.loglik_trace.push_back(ll);
        g.iterations = it + 1;
        if (it > 0 && ll - prev < tol) {
            g.converged = true;
            break;
        }
        prev = ll;

        // M-step
        std::array<double, 2> nk{0.0, 0.0}, mu{0.0, 0.0}, var{0.0, 0.0};
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double r1 = r_high[i];
            const double r0 = 1.0 - r1;
            nk[0] += r0;
            nk[1] += r1;
            mu[0] += r0 * xs[i];
            mu[1] += r1 * xs[i];
        }
        for (int k = 0; k < 2; ++k) {
            nk[k] = std::max(nk[k], 1e-12);
            mu[k] /= nk[k];
        }
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double r1 = r_high[i];
            const double d0 = xs[i] - mu[0];
            const double d1 = xs[i] - mu[1];
            var[0] += (1.0 - r1) * d0 * d0;
            var[1] += r1 * d1 * d1;
        }
        for (int k = 0; k < 2; ++k) {
            g.weight[k] = nk[k] / n;
            g.mean[k] = mu[k];
            g.var[k] = std::max(var[k] / nk[k], Gmm1D::kMinVar);
        }
        const double wsum = g.weight[0] + g.weight[1];
        g.weight = {g.weight[0] / wsum, g.weight[1] / wsum};
    }
    if (g.mean[0] > g.mean[1]) {
        std::swap(g.mean[0], g.mean[1]);
        std::swap(g.var[0], g.var[1]);
        std::swap(g.weight[0], g.weight[1]);
    }
    return g;
}

// ---------------------------------------------------------------------------
// Clean-sample selection

// Signals that a score distribution cannot be separated; callers fall back
// to the initial split.
class InseparableError : public DataError {
public:
    using DataError::DataError;
};

struct CleanSets {
    std::vector<std::size_t> old_rows;
    std::vector<std::size_t> new_rows;
};

// Rows whose posterior for the old-like component is >= threshold are clean
// old; rows with posterior <= 1 - threshold are clean new. For similarity
// scores the old-like component is the high-mean one; for P(new) it is the
// low-mean one.
inline CleanSets select_clean(std::span<const double> values, const Gmm1D& gmm, bool old_is_high = true,
                              double threshold = 0.95) {
    CleanSets out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double high = gmm.posterior_high(values[i]);
        const double p_old = old_is_high ? high : 1.0 - high;
        if (p_old >= threshold) {
            out.old_rows.push_back(i);
        } else if (p_old <= 1.0 - threshold) {
            out.new_rows.push_back(i);
        }
    }
    if (out.old_rows.empty() || out.new_rows.empty()) {
        throw InseparableError("select_clean: a clean set is empty (scores are not separable)");
    }
    return out;
}

inline CleanSets select_clean(std::span<const SplitDecision> decisions, const Gmm1D& gmm, double threshold = 0.95) {
    std::vector<double> scores(decisions.size());
    for (std::size_t i = 0; i < decisions.size(); ++i) scores[i] = decisions[i].initial_score;
    return select_clean(scores, gmm, true, threshold);
}

// ---------------------------------------------------------------------------
// Split network: FC - BN - sigmoid - FC - BN - sigmoid - FC, sigmoid output = P(new)

struct BatchNormParams {
    std::vector<double> gamma, beta, running_mean, running_var;
    std::int64_t updates = 0;  // the first training batch seeds the running statistics

    explicit BatchNormParams(std::size_t n = 0) : gamma(n, 1.0), beta(n, 0.0), running_mean(n, 0.0), running_var(n, 1.0) {}
    friend bool operator==(const BatchNormParams&, const BatchNormParams&) = default;
};

struct SplitNetParams {
    Matrix w1;  // h x d
    std::vector<double> b1;
    BatchNormParams bn1;
    Matrix w2;  // h x h
    std::vector<double> b2;
    BatchNormParams bn2;
    std::vector<double> w3;  // h
    std::vector<double> b3;  // 1

    std::size_t in_dim() const noexcept { return w1.cols(); }
    std::size_t hidden() const noexcept { return w1.rows(); }

    static SplitNetParams init(std::size_t d, std::size_t h, Rng& rng) {
        SplitNetParams p;
        auto uniform_fill = [&rng](std::span<double> v, std::size_t fan_in) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
            std::uniform_real_distribution<double> u(-bound, bound);
            for (double& x : v) x = u(rng);
        };
        p.w1 = Matrix(h, d);
        p.b1.assign(h, 0.0);
        p.w2 = Matrix(h, h);
        p.b2.assign(h, 0.0);
        p.w3.assign(h, 0.0);
        p.b3.assign(1, 0.0);
        uniform_fill(p.w1.data(), d);
        uniform_fill(p.b1, d);
        uniform_fill(p.w2.data(), h);
        uniform_fill(p.b2, h);
        uniform_fill(p.w3, h);
        uniform_fill(p.b3, h);
        p.bn1 = BatchNormParams(h);
        p.bn2 = BatchNormParams(h);
        return p;
    }

    std::vector<std::span<double>> trainable() {
        return {w1.data(), b1, bn1.gamma, bn1.beta, w2.data(), b2, bn2.gamma, bn2.beta, w3, b3};
    }

    bool all_finite() const {
        auto ok = [](const std::vector<double>& v) {
            return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
        };
        return w1.all_finite() && w2.all_finite() && ok(b1) && ok(b2) && ok(w3) && ok(b3) && ok(bn1.gamma) &&
               ok(bn1.beta) && ok(bn2.gamma) && ok(bn2.beta) && ok(bn1.running_var) && ok(bn2.running_var);
    }

    friend bool operator==(const SplitNetParams&, const SplitNetParams&) = default;
};

inline double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// Binary cross-entropy of one prediction; 0 * log(0) is taken as 0.
inline double bce_term(double prob, int label) {
    constexpr double kTiny = 1e-12;
    if (label == kNew) return prob >= 1.0 ? 0.0 : -std::log(std::max(prob, kTiny));
    return prob <= 0.0 ? 0.0 : -std::log(std::max(1.0 - prob, kTiny));
}

namespace detail {

struct DenseCache {
    Matrix pre;    // FC output
    Matrix xhat;   // normalized
    std::vector<double> inv_std;
    Matrix act;    // sigmoid(bn output)
};

inline void dense_forward(const Matrix& in, const Matrix& w, const std::vector<double>& b, Matrix& out) {
    out = Matrix(in.rows(), w.rows());
    for (std::size_t i = 0; i < in.rows(); ++i) {
        auto x = in.row(i);
        for (std::size_t r = 0; r < w.rows(); ++r) out(i, r) = dot(w.row(r), x) + b[r];
    }
}

inline void bn_sigmoid_forward(DenseCache& c, BatchNormParams& bn, bool training, double momentum, double eps) {
    const std::size_t n = c.pre.rows();
    const std::size_t h = c.pre.cols();
    c.xhat = Matrix(n, h);
    c.act = Matrix(n, h);
    c.inv_std.assign(h, 0.0);
    for (std::size_t k = 0; k < h; ++k) {
        double mean, var;
        if (training) {
            mean = 0.0;
            for (std::size_t i = 0; i < n; ++i) mean += c.pre(i, k);
            mean /= static_cast<double>(n);
            var = 0.0;
            for (std::size_t i = 0; i < n; ++i) var += (c.pre(i, k) - mean) * (c.pre(i, k) - mean);
            var /= static_cast<double>(n);
            const double unbiased = n > 1 ? var * static_cast<double>(n) / static_cast<double>(n - 1) : var;
            const double keep = bn.updates == 0 ? 0.0 : momentum;
            bn.running_mean[k] = keep * bn.running_mean[k] + (1.0 - keep) * mean;
            bn.running_var[k] = keep * bn.running_var[k] + (1.0 - keep) * unbiased;
        } else {
            mean = bn.running_mean[k];
            var = bn.running_var[k];
        }
        c.inv_std[k] = 1.0 / std::sqrt(var + eps);
        for (std::size_t i = 0; i < n; ++i) {
            c.xhat(i, k) = (c.pre(i, k) - mean) * c.inv_std[k];
            c.act(i, k) = sigmoid(bn.gamma[k] * c.xhat(i, k) + bn.beta[k]);
        }
    }
    if (training) ++bn.updates;
}

// Backward through sigmoid, batch norm (batch statistics) and the dense layer.
// Returns dL/d(input). Parameter gradients are accumulated into the g* outputs.
inline Matrix dense_bn_backward(const Matrix& in, const Matrix& w, const BatchNormParams& bn, const DenseCache& c,
                                const Matrix& d_act, Matrix& gw, std::vector<double>& gb, std::vector<double>& ggamma,
                                std::vector<double>& gbeta) {
    const std::size_t n = c.pre.rows();
    const std::size_t h = c.pre.cols();
    Matrix d_pre(n, h);
    for (std::size_t k = 0; k < h; ++k) {
        double sum_dy = 0.0;
        double sum_dy_xhat = 0.0;
        std::vector<double> dy(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double a = c.act(i, k);
            const double d_bn = d_act(i, k) * a * (1.0 - a);
            ggamma[k] += d_bn * c.xhat(i, k);
            gbeta[k] += d_bn;
            dy[i] = d_bn * bn.gamma[k];
            sum_dy += dy[i];
            sum_dy_xhat += dy[i] * c.xhat(i, k);
        }
        const auto nn = static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            d_pre(i, k) = c.inv_std[k] / nn * (nn * dy[i] - sum_dy - c.xhat(i, k) * sum_dy_xhat);
        }
    }
    Matrix d_in(n, in.cols());
    for (std::size_t i = 0; i < n; ++i) {
        auto x = in.row(i);
        auto dx = d_in.row(i);
        for (std::size_t r = 0; r < h; ++r) {
            const double g = d_pre(i, r);
            gb[r] += g;
            auto gwr = gw.row(r);
            auto wr = w.row(r);
            for (std::size_t k = 0; k < x.size(); ++k) {
                gwr[k] += g * x[k];
                dx[k] += g * wr[k];
            }
        }
    }
    return d_in;
}

}  // namespace detail

// P(new) for each row, using batch-norm running statistics.
inline std::vector<double> split_net_predict(SplitNetParams net, const Matrix& z, const SplitConfig& cfg = {}) {
    detail::DenseCache c1, c2;
    detail::dense_forward(z, net.w1, net.b1, c1.pre);
    detail::bn_sigmoid_forward(c1, net.bn1, false, cfg.bn_momentum, cfg.bn_eps);
    detail::dense_forward(c1.act, net.w2, net.b2, c2.pre);
    detail::bn_sigmoid_forward(c2, net.bn2, false, cfg.bn_momentum, cfg.bn_eps);
    std::vector<double> out(z.rows());
    for (std::size_t i = 0; i < z.rows(); ++i) out[i] = sigmoid(dot(net.w3, c2.act.row(i)) + net.b3[0]);
    return out;
}

// One optimization step on a labeled batch (training-mode batch norm).
// Returns the mean BCE over the batch.
inline double split_net_train_batch(SplitNetParams& net, std::vector<AdamWState>& opt, const Matrix& z,
                                    std::span<const int> y, const SplitConfig& cfg) {
    const std::size_t n = z.rows();
    detail::DenseCache c1, c2;
    detail::dense_forward(z, net.w1, net.b1, c1.pre);
    detail::bn_sigmoid_forward(c1, net.bn1, true, cfg.bn_momentum, cfg.bn_eps);
    detail::dense_forward(c1.act, net.w2, net.b2, c2.pre);
    detail::bn_sigmoid_forward(c2, net.bn2, true, cfg.bn_momentum, cfg.bn_eps);

    const std::size_t h = net.hidden();
    std::vector<double> gw3(h, 0.0), gb3(1, 0.0);
    Matrix d_act2(n, h);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double prob = sigmoid(dot(net.w3, c2.act.row(i)) + net.b3[0]);
        loss += bce_term(prob, y[i]);
        const double dl = (prob - static_cast<double>(y[i])) / static_cast<double>(n);
        gb3[0] += dl;
        auto a = c2.act.row(i);
        for (std::size_t k = 0; k < h; ++k) {
            gw3[k] += dl * a[k];
            d_act2(i, k) = dl * net.w3[k];
        }
    }

    Matrix gw2(h, h), gw1(h, net.in_dim());
    std::vector<double> gb2(h, 0.0), gg2(h, 0.0), gbe2(h, 0.0), gb1(h, 0.0), gg1(h, 0.0), gbe1(h, 0.0);
    const Matrix d_act1 = detail::dense_bn_backward(c1.act, net.w2, net.bn2, c2, d_act2, gw2, gb2, gg2, gbe2);
    detail::dense_bn_backward(z, net.w1, net.bn1, c1, d_act1, gw1, gb1, gg1, gbe1);

    auto params = net.trainable();
    const std::vector<std::span<const double>> grads{gw1.data(), gb1, gg1, gbe1, gw2.data(), gb2, gg2, gbe2, gw3, gb3};
    for (std::size_t t = 0; t < params.size(); ++t) adamw_step(params[t], grads[t], opt[t], cfg.lr, cfg.weight_decay);
    return loss / static_cast<double>(n);
}

struct SplitTrainResult {
    SplitNetParams net;
    CleanSets clean;               // sets used in the last epoch
    std::vector<double> epoch_loss;
    std::vector<Gmm1D> refits;     // GMMs fitted on P(new) before epochs 2..n
};

// Epoch 1 trains on `initial`; before each later epoch P(new) over all rows is
// re-fit with a GMM and the clean sets are re-selected (kept if inseparable).
inline SplitTrainResult train_split_net(const Matrix& embeddings, const CleanSets& initial, const SplitConfig& cfg,
                                        std::uint64_t seed) {
    cfg.validate();
    if (initial.old_rows.empty() || initial.new_rows.empty()) throw DataError("train_split_net: empty clean set");
    auto init_rng = make_rng(seed, "split-init");
    auto shuffle_rng = make_rng(seed, "split-shuffle");
    const std::size_t h = cfg.hidden ? cfg.hidden : std::max<std::size_t>(64, embeddings.cols() / 2);

    SplitTrainResult res{SplitNetParams::init(embeddings.cols(), h, init_rng), initial, {}, {}};
    std::vector<AdamWState> opt;
    for (auto p : res.net.trainable()) opt.emplace_back(p.size());

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (epoch > 0) {
            const auto probs = split_net_predict(res.net, embeddings, cfg);
            try {
                auto g = fit_gmm1d(probs, cfg.gmm_iters, cfg.gmm_tol);
                res.clean = select_clean(probs, g, false, cfg.clean_threshold);
                res.refits.push_back(std::move(g));
            } catch (const DataError&) {
            } catch (const NumericalError&) {
            }
        }
        std::vector<std::pair<std::size_t, int>> rows;
        for (std::size_t r : res.clean.old_rows) rows.emplace_back(r, kOld);
        for (std::size_t r : res.clean.new_rows) rows.emplace_back(r, kNew);
        std::shuffle(rows.begin(), rows.end(), shuffle_rng);

        double total = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < rows.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(rows.size(), start + cfg.batch_size);
            if (end - start < 2) continue;  // batch statistics need two samples
            std::vector<std::size_t> idx;
            std::vector<int> y;
            for (std::size_t k = start; k < end; ++k) {
                idx.push_back(rows[k].first);
                y.push_back(rows[k].second);
            }
            total += split_net_train_batch(res.net, opt, gather_rows(embeddings, idx), y, cfg);
            ++batches;
        }
        res.epoch_loss.push_back(batches ? total / static_cast<double>(batches) : 0.0);
        if (!res.net.all_finite()) throw NumericalError("train_split_net: non-finite parameters");
    }
    return res;
}

struct FineSplitResult {
    std::vector<SplitDecision> decisions;
    bool fell_back = false;
    std::string warning;
};

// initial split -> GMM on scores -> clean selection -> split network -> final
// label = [P(new) >= 0.5]. Degenerate cases fall back to the initial split.
inline FineSplitResult fine_split(const Matrix& embeddings, std::span<const std::int64_t> ids, const ProxyBank& bank,
                                  const SplitConfig& cfg, std::uint64_t seed) {
    FineSplitResult out;
    out.decisions = initial_split(embeddings, ids, bank, cfg.epsilon);
    std::vector<double> scores(out.decisions.size());
    for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = out.decisions[i].initial_score;

    auto fallback = [&out](const std::string& why) {
        out.fell_back = true;
        out.warning = why;
        for (auto& d : out.decisions) d.final_label = d.initial_label;
        return out;
    };

    Gmm1D gmm;
    CleanSets clean;
    try {
        gmm = fit_gmm1d(scores, cfg.gmm_iters, cfg.gmm_tol);
        for (std::size_t i = 0; i < scores.size(); ++i) {
            out.decisions[i].gmm_posterior = gmm.posterior_high(scores[i]);
        }
        clean = select_clean(scores, gmm, true, cfg.clean_threshold);
    } catch (const DataError& e) {
        return fallback(e.what());
    } catch (const NumericalError& e) {
        return fallback(e.what());
    }
    if (cfg.epochs == 0) return fallback("fine split disabled (0 epochs)");

    const auto trained = train_split_net(embeddings, clean, cfg, seed);
    const auto probs = split_net_predict(trained.net, embeddings, cfg);
    for (std::size_t i = 0; i < probs.size(); ++i) {
        out.decisions[i].fine_prob = probs[i];
        out.decisions[i].final_label = probs[i] >= 0.5 ? kNew : kOld;
    }
    return out;
}

// CSV histogram export. `truth` (1 = sample from a new class) is written only
// when provided by the evaluation harness.
inline void write_split_csv(std::ostream& os, std::span<const SplitDecision> decisions,
                            std::span<const int> truth = {}) {
    const bool with_truth = !truth.empty();
    if (with_truth && truth.size() != decisions.size()) throw DataError("split csv: truth length mismatch");
    os << "sample_id,initial_score,fine_prob,gmm_posterior,initial_label,final_label";
    if (with_truth) os << ",hidden_truth";
    os << '\n';
    auto num = [&os](double v) {
        if (std::isnan(v)) return;
        os << v;
    };
    const auto old_precision = os.precision(17);
    for (std::size_t i = 0; i < decisions.size(); ++i) {
        const auto& d = decisions[i];
        os << d.sample_id << ',';
        num(d.initial_score);
        os << ',';
        num(d.fine_prob);
        os << ',';
        num(d.gmm_posterior);
        os << ',' << d.initial_label << ',' << d.final_label;
        if (with_truth) os << ',' << truth[i];
        os << '\n';
    }
    os.precision(old_precision);
}

}  // namespace cgcd
