#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cgcd/errors.hpp"
#include "cgcd/matrix.hpp"
#include "cgcd/rng.hpp"

namespace cgcd {

struct EmbeddingDataset {
    Matrix features;                         // N x d_in
    std::optional<std::vector<int>> labels;  // ground truth; evaluation-only for unlabeled steps
    std::vector<std::int64_t> ids;           // unique per sample

    std::size_t size() const noexcept { return features.rows(); }
    std::size_t dim() const noexcept { return features.cols(); }
    bool has_labels() const noexcept { return labels.has_value(); }

    void validate() const {
        if (!features.all_finite()) throw DataError("dataset contains non-finite features");
        if (ids.size() != size()) throw DataError("dataset ids/rows length mismatch");
        std::set<std::int64_t> seen(ids.begin(), ids.end());
        if (seen.size() != ids.size()) throw DataError("dataset ids are not unique");
        if (labels) {
            if (labels->size() != size()) throw DataError("dataset labels/rows length mismatch");
            for (int y : *labels) {
                if (y < 0) throw DataError("dataset labels must be non-negative");
            }
        }
    }

    static std::vector<std::int64_t> sequential_ids(std::size_t n) {
        std::vector<std::int64_t> ids(n);
        std::iota(ids.begin(), ids.end(), std::int64_t{0});
        return ids;
    }
};

inline EmbeddingDataset subset(const EmbeddingDataset& ds, std::span<const std::size_t> rows, bool keep_labels = true) {
    EmbeddingDataset out;
    out.features = gather_rows(ds.features, rows);
    out.ids.reserve(rows.size());
    for (std::size_t r : rows) out.ids.push_back(ds.ids[r]);
    if (keep_labels && ds.labels) {
        std::vector<int> y;
        y.reserve(rows.size());
        for (std::size_t r : rows) y.push_back((*ds.labels)[r]);
        out.labels = std::move(y);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic data

// Class means: random directions scaled so the closest pair sits exactly
// `separation` apart.
inline Matrix synthetic_means(int n_classes, int d_in, double separation, std::uint64_t seed) {
    if (n_classes < 2 || d_in < 1) throw ConfigError("synthetic data needs n_classes >= 2 and d_in >= 1");
    if (!(separation > 0.0) || !std::isfinite(separation)) throw ConfigError("separation must be positive and finite");

    auto rng = make_rng(seed, "synthetic-means");
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto n = static_cast<std::size_t>(n_classes);
    const auto d = static_cast<std::size_t>(d_in);

    if (n <= d) {
        // orthonormal directions (Gram-Schmidt), every pair exactly `separation` apart
        const double radius = separation / std::sqrt(2.0) * (1.0 + 1e-6);
        for (int attempt = 0; attempt < 64; ++attempt) {
            Matrix dirs(n, d);
            bool ok = true;
            for (std::size_t c = 0; c < n && ok; ++c) {
                auto r = dirs.row(c);
                for (double& v : r) v = normal(rng);
                for (std::size_t p = 0; p < c; ++p) {
                    const double proj = dot(r, dirs.row(p));
                    auto q = dirs.row(p);
                    for (std::size_t k = 0; k < d; ++k) r[k] -= proj * q[k];
                }
                const double len = norm2(r);
                ok = len > 1e-6;
                if (ok) for (double& v : r) v /= len;
            }
            if (!ok) continue;
            for (double& v : dirs.data()) v *= radius;
            return dirs;
        }
    }

    // Low dimension with many classes: evenly spaced on the first axis.
    Matrix line(n, d);
    for (std::size_t c = 0; c < n; ++c) line(c, 0) = separation * (static_cast<double>(c) - 0.5 * (n - 1.0));
    return line;
}

// Unit-variance isotropic Gaussian blobs around `synthetic_means`. Values are
// rounded to float32 so the dataset survives an EMB1 round trip unchanged.
inline EmbeddingDataset generate_synthetic(int n_classes, int per_class, int d_in, double separation, std::uint64_t seed) {
    if (per_class < 2) throw ConfigError("synthetic data needs per_class >= 2");
    const Matrix means = synthetic_means(n_classes, d_in, separation, seed);
    auto rng = make_rng(seed, "synthetic-samples");
    std::normal_distribution<double> normal(0.0, 1.0);

    const auto n = static_cast<std::size_t>(n_classes) * static_cast<std::size_t>(per_class);
    EmbeddingDataset ds;
    ds.features = Matrix(n, static_cast<std::size_t>(d_in));
    std::vector<int> labels(n);
    std::size_t row = 0;
    for (int c = 0; c < n_classes; ++c) {
        for (int i = 0; i < per_class; ++i, ++row) {
            auto x = ds.features.row(row);
            auto mu = means.row(static_cast<std::size_t>(c));
            for (std::size_t k = 0; k < x.size(); ++k) {
                x[k] = static_cast<double>(static_cast<float>(mu[k] + normal(rng)));
            }
            labels[row] = c;
        }
    }
    ds.labels = std::move(labels);
    ds.ids = EmbeddingDataset::sequential_ids(n);
    return ds;
}

// ---------------------------------------------------------------------------
// Scenario construction

struct ScenarioConfig {
    double old_class_fraction = 0.8;
    double old_sample_carryover = 0.2;
    std::vector<double> step_class_fractions{0.2};
    double validation_fraction = 0.2;  // per-class holdout carved before partitioning
    std::uint64_t seed = 0;

    std::size_t incremental_steps() const noexcept { return step_class_fractions.size(); }

    void validate() const {
        auto in_open_unit = [](double f) { return f > 0.0 && f < 1.0; };
        if (!in_open_unit(old_class_fraction)) throw ConfigError("old_class_fraction must be in (0,1)");
        if (!(old_sample_carryover >= 0.0 && old_sample_carryover < 1.0)) {
            throw ConfigError("old_sample_carryover must be in [0,1)");
        }
        if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
            throw ConfigError("validation_fraction must be in [0,1)");
        }
        if (step_class_fractions.empty()) throw ConfigError("at least one incremental step is required");
        double total = old_class_fraction;
        for (double f : step_class_fractions) {
            if (!in_open_unit(f)) throw ConfigError("step class fractions must be in (0,1)");
            total += f;
        }
        if (std::abs(total - 1.0) > 1e-6) throw ConfigError("class fractions must sum to 1");
    }
};

struct StepDataset {
    int step_index = 0;
    EmbeddingDataset train;             // labels only at step 0
    std::vector<int> holdout_truth;     // hidden truth for `train`, evaluation harness only
    EmbeddingDataset validation;        // all classes known through this step, labeled
    std::vector<int> new_classes;       // dense classes introduced at this step
};

struct Scenario {
    std::vector<StepDataset> steps;
    std::vector<int> dense_to_original;  // dense class id -> label in the source
    std::vector<std::vector<int>> step_classes;
};

inline long round_half_up(double x) { return static_cast<long>(std::floor(x + 0.5 + 1e-9)); }

// Old classes take floor(f0 * C); intermediate steps round half up; the last
// step takes the remainder. Reproduces 160/40, 53/14, 96/24 and 80/20.
inline std::vector<std::size_t> class_counts(std::size_t n_classes, const ScenarioConfig& cfg) {
    const double total = static_cast<double>(n_classes);
    std::vector<std::size_t> counts;
    const auto old = static_cast<long>(std::floor(cfg.old_class_fraction * total + 1e-9));
    counts.push_back(static_cast<std::size_t>(std::max(0L, old)));
    long used = old;
    for (std::size_t s = 0; s + 1 < cfg.step_class_fractions.size(); ++s) {
        const long c = round_half_up(cfg.step_class_fractions[s] * total);
        counts.push_back(static_cast<std::size_t>(std::max(0L, c)));
        used += c;
    }
    const long rest = static_cast<long>(n_classes) - used;
    counts.push_back(static_cast<std::size_t>(std::max(0L, rest)));
    for (std::size_t c : counts) {
        if (c == 0) throw ConfigError("class fractions leave a step without classes");
    }
    if (used >= static_cast<long>(n_classes)) throw ConfigError("class fractions leave the last step without classes");
    return counts;
}

namespace detail {

// Densify labels 0..C-1 in ascending order of the original label.
inline std::vector<int> densify(const std::vector<int>& labels, std::vector<int>& dense_to_original) {
    std::map<int, int> to_dense;
    for (int y : labels) to_dense.emplace(y, 0);
    dense_to_original.clear();
    for (auto& [orig, dense] : to_dense) {
        dense = static_cast<int>(dense_to_original.size());
        dense_to_original.push_back(orig);
    }
    std::vector<int> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) out[i] = to_dense.at(labels[i]);
    return out;
}

inline std::vector<std::vector<std::size_t>> rows_by_class(const std::vector<int>& dense, std::size_t n_classes) {
    std::vector<std::vector<std::size_t>> out(n_classes);
    for (std::size_t i = 0; i < dense.size(); ++i) out[static_cast<std::size_t>(dense[i])].push_back(i);
    return out;
}

}  // namespace detail

// Partition `pool` into steps and attach per-step validation sets drawn from
// `holdout`. Both must carry labels. Labels are densified jointly.
inline Scenario build_scenario(const EmbeddingDataset& pool, const EmbeddingDataset& holdout, const ScenarioConfig& cfg) {
    cfg.validate();
    pool.validate();
    holdout.validate();
    if (!pool.labels || !holdout.labels) throw DataError("scenario construction needs labeled data");
    if (pool.dim() != holdout.dim()) throw DataError("pool and holdout dimensions differ");

    Scenario sc;
    std::vector<int> all_labels = *pool.labels;
    all_labels.insert(all_labels.end(), holdout.labels->begin(), holdout.labels->end());
    const std::vector<int> dense_all = detail::densify(all_labels, sc.dense_to_original);
    const std::vector<int> pool_dense(dense_all.begin(), dense_all.begin() + static_cast<std::ptrdiff_t>(pool.size()));
    const std::vector<int> hold_dense(dense_all.begin() + static_cast<std::ptrdiff_t>(pool.size()), dense_all.end());
    const std::size_t n_classes = sc.dense_to_original.size();

    auto rng = make_rng(cfg.seed, "scenario");

    std::vector<int> class_order(n_classes);
    std::iota(class_order.begin(), class_order.end(), 0);
    std::shuffle(class_order.begin(), class_order.end(), rng);

    const auto counts = class_counts(n_classes, cfg);
    const std::size_t last_step = counts.size() - 1;
    sc.step_classes.resize(counts.size());
    std::vector<std::size_t> intro_step(n_classes);
    {
        std::size_t k = 0;
        for (std::size_t s = 0; s < counts.size(); ++s) {
            for (std::size_t i = 0; i < counts[s]; ++i, ++k) {
                sc.step_classes[s].push_back(class_order[k]);
                intro_step[static_cast<std::size_t>(class_order[k])] = s;
            }
            std::sort(sc.step_classes[s].begin(), sc.step_classes[s].end());
        }
    }

    auto pool_rows = detail::rows_by_class(pool_dense, n_classes);
    std::vector<std::vector<std::size_t>> step_rows(counts.size());
    for (std::size_t c = 0; c < n_classes; ++c) {
        auto rows = pool_rows[c];
        const std::size_t s0 = intro_step[c];
        if (s0 == last_step || cfg.old_sample_carryover == 0.0) {
            step_rows[s0].insert(step_rows[s0].end(), rows.begin(), rows.end());
            continue;
        }
        std::shuffle(rows.begin(), rows.end(), rng);
        const auto n = static_cast<long>(rows.size());
        const long carry = round_half_up(cfg.old_sample_carryover * static_cast<double>(n));
        const long later_steps = static_cast<long>(last_step - s0);
        if (carry < later_steps || n - carry < 1) {
            throw DataError("class " + std::to_string(sc.dense_to_original[c]) + " has too few samples (" +
                            std::to_string(n) + ") for the carryover split");
        }
        std::size_t pos = 0;
        const auto keep = static_cast<std::size_t>(n - carry);
        step_rows[s0].insert(step_rows[s0].end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(keep));
        pos = keep;
        for (long j = 0; j < later_steps; ++j) {
            // equal shares, earlier steps take the remainder
            const long share = carry / later_steps + (j < carry % later_steps ? 1 : 0);
            auto& dst = step_rows[s0 + 1 + static_cast<std::size_t>(j)];
            dst.insert(dst.end(), rows.begin() + static_cast<std::ptrdiff_t>(pos),
                       rows.begin() + static_cast<std::ptrdiff_t>(pos + static_cast<std::size_t>(share)));
            pos += static_cast<std::size_t>(share);
        }
    }

    std::set<int> known;
    for (std::size_t s = 0; s < counts.size(); ++s) {
        auto& rows = step_rows[s];
        std::sort(rows.begin(), rows.end());
        if (s > 0) std::shuffle(rows.begin(), rows.end(), rng);

        StepDataset step;
        step.step_index = static_cast<int>(s);
        step.train = subset(pool, rows, false);
        step.holdout_truth.reserve(rows.size());
        for (std::size_t r : rows) step.holdout_truth.push_back(pool_dense[r]);
        if (s == 0) step.train.labels = step.holdout_truth;
        step.new_classes = sc.step_classes[s];

        known.insert(sc.step_classes[s].begin(), sc.step_classes[s].end());
        std::vector<std::size_t> vrows;
        for (std::size_t r = 0; r < holdout.size(); ++r) {
            if (known.count(hold_dense[r])) vrows.push_back(r);
        }
        step.validation = subset(holdout, vrows, false);
        std::vector<int> vy;
        vy.reserve(vrows.size());
        for (std::size_t r : vrows) vy.push_back(hold_dense[r]);
        step.validation.labels = std::move(vy);
        sc.steps.push_back(std::move(step));
    }
    return sc;
}

// Carve a fixed per-class validation holdout from `src`, then partition the rest.
inline Scenario build_scenario(const EmbeddingDataset& src, const ScenarioConfig& cfg) {
    cfg.validate();
    src.validate();
    if (!src.labels) throw DataError("scenario construction needs labeled data");

    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < src.size(); ++i) by_class[(*src.labels)[i]].push_back(i);

    auto rng = make_rng(cfg.seed, "validation-holdout");
    std::vector<std::size_t> pool_rows;
    std::vector<std::size_t> hold_rows;
    for (auto& [label, rows] : by_class) {
        if (rows.size() < 2) {
            throw DataError("class " + std::to_string(label) + " has fewer than 2 samples");
        }
        std::shuffle(rows.begin(), rows.end(), rng);
        long n_hold = round_half_up(cfg.validation_fraction * static_cast<double>(rows.size()));
        if (cfg.validation_fraction > 0.0) n_hold = std::max(1L, n_hold);
        n_hold = std::min<long>(n_hold, static_cast<long>(rows.size()) - 1);
        hold_rows.insert(hold_rows.end(), rows.begin(), rows.begin() + n_hold);
        pool_rows.insert(pool_rows.end(), rows.begin() + n_hold, rows.end());
    }
    std::sort(pool_rows.begin(), pool_rows.end());
    std::sort(hold_rows.begin(), hold_rows.end());
    return build_scenario(subset(src, pool_rows), subset(src, hold_rows), cfg);
}

}  // namespace cgcd
