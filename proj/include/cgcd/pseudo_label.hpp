#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "cgcd/errors.hpp"
#include "cgcd/matrix.hpp"
#include "cgcd/metric_head.hpp"

namespace cgcd {

enum class Provenance { old_pred, cluster };

struct PseudoLabel {
    std::int64_t sample_id = 0;
    std::size_t row = 0;  // row in the step's training matrix
    int label = 0;
    Provenance provenance = Provenance::old_pred;

    friend bool operator==(const PseudoLabel&, const PseudoLabel&) = default;
};

struct PseudoLabeledSet {
    std::vector<PseudoLabel> entries;
    std::size_t novel_class_count = 0;
    Matrix cluster_centroids;  // novel_class_count x d_emb, unit rows
};

struct ApConfig {
    double damping = 0.9;
    int max_iter = 500;
    int convergence_window = 30;
    std::optional<double> preference;  // nullopt -> median of off-diagonal similarities

    void validate() const {
        if (!(damping > 0.5 && damping < 1.0)) throw ConfigError("AP damping must be in (0.5,1)");
        if (max_iter <= 0 || convergence_window <= 0) throw ConfigError("AP iteration counts must be positive");
    }
};

struct ApResult {
    std::vector<std::size_t> exemplars;   // point indices, ascending
    std::vector<std::size_t> assignment;  // per point: index into `exemplars`
    bool converged = false;
    int iterations = 0;
};

inline double median(std::vector<double> v) {
    if (v.empty()) throw DataError("median of empty set");
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

// Negative squared Euclidean distance.
inline Matrix ap_similarity(const Matrix& points) {
    const std::size_t m = points.rows();
    Matrix s(m, m);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t k = i + 1; k < m; ++k) {
            double d2 = 0.0;
            auto a = points.row(i);
            auto b = points.row(k);
            for (std::size_t c = 0; c < a.size(); ++c) d2 += (a[c] - b[c]) * (a[c] - b[c]);
            s(i, k) = -d2;
            s(k, i) = -d2;
        }
    }
    return s;
}

// Affinity propagation on a similarity matrix whose diagonal is ignored and
// replaced by the preference. Damped responsibility/availability sweeps;
// stops once the exemplar set is unchanged for `convergence_window` sweeps.
inline ApResult affinity_propagation_similarity(Matrix s, const ApConfig& cfg) {
    cfg.validate();
    const std::size_t m = s.rows();
    if (m < 1 || s.cols() != m) throw DataError("affinity_propagation: need a non-empty square similarity matrix");

    ApResult res;
    if (m == 1) {
        res.exemplars = {0};
        res.assignment = {0};
        res.converged = true;
        return res;
    }

    std::vector<double> off;
    off.reserve(m * (m - 1));
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t k = 0; k < m; ++k) {
            if (i != k) off.push_back(s(i, k));
        }
    }
    const double pref = cfg.preference ? *cfg.preference : median(off);
    for (std::size_t i = 0; i < m; ++i) s(i, i) = pref;

    Matrix r(m, m), a(m, m);
    const double lam = cfg.damping;
    std::vector<char> is_ex(m, 0), prev_ex(m, 0);
    int stable = 0;
    bool have_prev = false;
    std::vector<double> col_pos(m);

    for (int it = 0; it < cfg.max_iter; ++it) {
        // responsibilities
        for (std::size_t i = 0; i < m; ++i) {
            double best = -std::numeric_limits<double>::infinity();
            double second = best;
            std::size_t arg = 0;
            for (std::size_t k = 0; k < m; ++k) {
                const double v = a(i, k) + s(i, k);
                if (v > best) {
                    second = best;
                    best = v;
                    arg = k;
                } else if (v > second) {
                    second = v;
                }
            }
            for (std::size_t k = 0; k < m; ++k) {
                const double fresh = s(i, k) - (k == arg ? second : best);
                r(i, k) = lam * r(i, k) + (1.0 - lam) * fresh;
            }
        }
        // availabilities
        for (std::size_t k = 0; k < m; ++k) {
            double sum_pos = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                if (i != k) sum_pos += std::max(0.0, r(i, k));
            }
            col_pos[k] = sum_pos;
        }
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t k = 0; k < m; ++k) {
                double fresh;
                if (i == k) {
                    fresh = col_pos[k];
                } else {
                    fresh = std::min(0.0, r(k, k) + col_pos[k] - std::max(0.0, r(i, k)));
                }
                a(i, k) = lam * a(i, k) + (1.0 - lam) * fresh;
            }
        }

        bool any = false;
        for (std::size_t k = 0; k < m; ++k) {
            is_ex[k] = (r(k, k) + a(k, k)) > 0.0 ? 1 : 0;
            any = any || is_ex[k];
        }
        res.iterations = it + 1;
        if (have_prev && is_ex == prev_ex) {
            ++stable;
        } else {
            stable = 0;
        }
        prev_ex = is_ex;
        have_prev = true;
        if (any && stable >= cfg.convergence_window) {
            res.converged = true;
            break;
        }
    }

    for (std::size_t k = 0; k < m; ++k) {
        if (is_ex[k]) res.exemplars.push_back(k);
    }
    if (res.exemplars.empty()) {
        // No positive self-evidence anywhere: keep the single strongest candidate.
        std::size_t best = 0;
        for (std::size_t k = 1; k < m; ++k) {
            if (r(k, k) + a(k, k) > r(best, best) + a(best, best)) best = k;
        }
        res.exemplars.push_back(best);
    }

    res.assignment.assign(m, 0);
    for (std::size_t i = 0; i < m; ++i) {
        std::size_t best = 0;
        for (std::size_t e = 0; e < res.exemplars.size(); ++e) {
            if (res.exemplars[e] == i) {
                best = e;
                break;
            }
            if (s(i, res.exemplars[e]) > s(i, res.exemplars[best])) best = e;
        }
        res.assignment[i] = best;
    }
    return res;
}

inline ApResult affinity_propagation(const Matrix& points, const ApConfig& cfg) {
    if (points.rows() < 1) throw DataError("affinity_propagation: no points");
    return affinity_propagation_similarity(ap_similarity(points), cfg);
}

// ---------------------------------------------------------------------------
// Pseudo-labels

// Nearest previous proxy for each old-split sample, using the previous head.
inline std::vector<PseudoLabel> label_old(std::span<const std::size_t> rows, std::span<const std::int64_t> ids,
                                          const Matrix& inputs, const ProjectionHead& prev_head,
                                          const ProxyBank& prev_bank) {
    prev_bank.validate();
    std::vector<PseudoLabel> out;
    out.reserve(rows.size());
    for (std::size_t r : rows) {
        const auto z = embed(prev_head, inputs.row(r));
        const std::size_t j = nearest_proxy(z, prev_bank);
        out.push_back({ids[r], r, prev_bank.class_ids[j], Provenance::old_pred});
    }
    return out;
}

struct NewLabels {
    std::vector<PseudoLabel> entries;
    std::size_t novel_class_count = 0;
    Matrix centroids;
    ApResult clustering;
};

// Cluster the new split (unit embeddings) and give cluster k the id
// existing_class_count + k. Centroids are member means renormalized.
inline NewLabels label_new(std::span<const std::size_t> rows, std::span<const std::int64_t> ids,
                           const Matrix& embeddings, const ApConfig& cfg, int existing_class_count) {
    if (rows.empty()) throw DataError("label_new: empty new split");
    const Matrix pts = gather_rows(embeddings, rows);
    NewLabels out;
    out.clustering = affinity_propagation(pts, cfg);
    const std::size_t k = out.clustering.exemplars.size();
    out.novel_class_count = k;
    out.centroids = Matrix(k, embeddings.cols());
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::size_t c = out.clustering.assignment[i];
        auto dst = out.centroids.row(c);
        auto src = pts.row(i);
        for (std::size_t d = 0; d < dst.size(); ++d) dst[d] += src[d];
        ++counts[c];
        out.entries.push_back({ids[rows[i]], rows[i], existing_class_count + static_cast<int>(c), Provenance::cluster});
    }
    for (std::size_t c = 0; c < k; ++c) {
        auto v = out.centroids.row(c);
        const double len = norm2(v);
        if (len == 0.0) {
            // antipodal members cancel out; fall back to the exemplar point itself
            auto ex = pts.row(out.clustering.exemplars[c]);
            std::copy(ex.begin(), ex.end(), v.begin());
            const double ex_len = norm2(v);
            if (ex_len == 0.0) throw NumericalError("label_new: zero centroid");
            for (double& x : v) x /= ex_len;
        } else {
            for (double& x : v) x /= len;
        }
    }
    return out;
}

inline ProxyBank grow_bank(const ProxyBank& bank, const Matrix& centroids) {
    if (centroids.rows() == 0) throw DataError("grow_bank: no centroids");
    if (centroids.cols() != bank.dim()) throw DataError("grow_bank: centroid dimension mismatch");
    ProxyBank out = bank;
    int next = bank.class_ids.empty() ? 0 : *std::max_element(bank.class_ids.begin(), bank.class_ids.end()) + 1;
    for (std::size_t c = 0; c < centroids.rows(); ++c) {
        out.proxies.append_row(centroids.row(c));
        out.class_ids.push_back(next++);
    }
    return out;
}

inline nlohmann::json cluster_report(const NewLabels& nl) {
    std::vector<std::size_t> sizes(nl.novel_class_count, 0);
    for (std::size_t a : nl.clustering.assignment) ++sizes[a];
    std::vector<std::int64_t> exemplar_ids;
    for (std::size_t e : nl.clustering.exemplars) exemplar_ids.push_back(nl.entries[e].sample_id);
    return {{"novel_class_count", nl.novel_class_count},
            {"exemplar_sample_ids", exemplar_ids},
            {"cluster_sizes", sizes},
            {"converged", nl.clustering.converged},
            {"iterations", nl.clustering.iterations}};
}

}  // namespace cgcd
