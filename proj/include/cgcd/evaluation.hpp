#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cgcd/errors.hpp"
#include "cgcd/matrix.hpp"

namespace cgcd {

struct Assignment {
    std::vector<int> row_to_col;  // -1 when a row is matched to a padding column
    double cost = 0.0;            // total over real (row, col) pairs
};

// Minimum-cost one-to-one assignment (Kuhn-Munkres with potentials, O(n^3)).
// Rectangular inputs are padded to square with zero-cost dummies.
inline Assignment hungarian(const Matrix& cost) {
    const std::size_t rows = cost.rows();
    const std::size_t cols = cost.cols();
    if (rows == 0 || cols == 0) throw DataError("hungarian: empty cost matrix");
    if (!cost.all_finite()) throw DataError("hungarian: non-finite cost");
    const std::size_t n = std::max(rows, cols);
    auto c = [&](std::size_t i, std::size_t j) { return (i < rows && j < cols) ? cost(i, j) : 0.0; };

    constexpr double kInf = std::numeric_limits<double>::infinity();
    // 1-based arrays; p[j] = row matched to column j
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, kInf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            double delta = kInf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = c(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    Assignment out;
    out.row_to_col.assign(rows, -1);
    for (std::size_t j = 1; j <= n; ++j) {
        const std::size_t i = p[j] - 1;
        if (i < rows && j - 1 < cols) {
            out.row_to_col[i] = static_cast<int>(j - 1);
            out.cost += cost(i, j - 1);
        }
    }
    return out;
}

struct ClusterAccuracy {
    double accuracy = 0.0;
    std::map<int, int> assignment;  // predicted cluster id -> ground-truth class id
};

// Cluster accuracy under the optimal one-to-one cluster-to-class matching.
inline ClusterAccuracy cluster_accuracy(std::span<const int> pred, std::span<const int> truth) {
    if (pred.size() != truth.size()) {
        throw DataError("cluster_accuracy: " + std::to_string(pred.size()) + " predictions vs " +
                        std::to_string(truth.size()) + " labels");
    }
    if (pred.empty()) throw DataError("cluster_accuracy: no samples");

    std::map<int, std::size_t> pidx, tidx;
    for (int p : pred) pidx.emplace(p, 0);
    for (int t : truth) tidx.emplace(t, 0);
    std::vector<int> pval, tval;
    for (auto& [k, v] : pidx) {
        v = pval.size();
        pval.push_back(k);
    }
    for (auto& [k, v] : tidx) {
        v = tval.size();
        tval.push_back(k);
    }

    Matrix counts(pval.size(), tval.size());
    for (std::size_t i = 0; i < pred.size(); ++i) counts(pidx[pred[i]], tidx[truth[i]]) += 1.0;
    Matrix neg = counts;
    for (double& x : neg.data()) x = -x;
    const auto match = hungarian(neg);

    ClusterAccuracy out;
    double matched = 0.0;
    for (std::size_t r = 0; r < pval.size(); ++r) {
        const int col = match.row_to_col[r];
        if (col < 0) continue;
        out.assignment[pval[r]] = tval[static_cast<std::size_t>(col)];
        matched += counts(r, static_cast<std::size_t>(col));
    }
    out.accuracy = matched / static_cast<double>(pred.size());
    return out;
}

// ---------------------------------------------------------------------------
// Continual metrics

struct StepReport {
    int step_index = 0;
    double m_all = 0.0;
    std::optional<double> m_old;
    std::optional<double> m_new;
    std::optional<double> m_f;  // absent at step 0
    std::optional<double> m_d;  // absent at step 0
    std::size_t novel_class_count_estimate = 0;
    std::map<int, int> assignment;

    friend bool operator==(const StepReport&, const StepReport&) = default;
};

// max over incremental steps t of (old accuracy at step 0 - old accuracy at t)
inline double max_forgetting(double initial_old, std::span<const double> later_old) {
    if (later_old.empty()) throw DataError("max_forgetting: no incremental steps");
    double best = -std::numeric_limits<double>::infinity();
    for (double m : later_old) best = std::max(best, initial_old - m);
    return best;
}

inline double mean_discovery(std::span<const double> new_acc) {
    if (new_acc.empty()) throw DataError("mean_discovery: no incremental steps");
    double sum = 0.0;
    for (double m : new_acc) sum += m;
    return sum / static_cast<double>(new_acc.size());
}

// Subset accuracies reuse the single global assignment. `new_classes`
// defaults to every truth class outside `old_classes`.
inline StepReport step_metrics(std::span<const int> pred, std::span<const int> truth, const std::set<int>& old_classes,
                               std::span<const StepReport> prior, const std::optional<std::set<int>>& new_classes = {}) {
    const auto ca = cluster_accuracy(pred, truth);
    StepReport rep;
    rep.step_index = static_cast<int>(prior.size());
    rep.m_all = ca.accuracy;
    rep.assignment = ca.assignment;

    std::size_t n_old = 0, hit_old = 0, n_new = 0, hit_new = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        auto it = ca.assignment.find(pred[i]);
        const bool hit = it != ca.assignment.end() && it->second == truth[i];
        if (old_classes.count(truth[i])) {
            ++n_old;
            hit_old += hit ? 1 : 0;
        } else if (!new_classes || new_classes->count(truth[i])) {
            ++n_new;
            hit_new += hit ? 1 : 0;
        }
    }
    if (n_old) rep.m_old = static_cast<double>(hit_old) / static_cast<double>(n_old);
    if (n_new) rep.m_new = static_cast<double>(hit_new) / static_cast<double>(n_new);

    if (rep.step_index > 0) {
        std::vector<double> olds, news;
        for (std::size_t t = 1; t < prior.size(); ++t) {
            if (prior[t].m_old) olds.push_back(*prior[t].m_old);
            if (prior[t].m_new) news.push_back(*prior[t].m_new);
        }
        if (rep.m_old) olds.push_back(*rep.m_old);
        if (rep.m_new) news.push_back(*rep.m_new);
        if (prior[0].m_old && !olds.empty()) rep.m_f = max_forgetting(*prior[0].m_old, olds);
        if (!news.empty()) rep.m_d = mean_discovery(news);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Output

inline nlohmann::json to_json(const StepReport& r) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    nlohmann::json assignment = nlohmann::json::object();
    for (const auto& [pred, cls] : r.assignment) assignment[std::to_string(pred)] = cls;
    return {{"step_index", r.step_index},
            {"m_all", r.m_all},
            {"m_old", opt(r.m_old)},
            {"m_new", opt(r.m_new)},
            {"m_f", opt(r.m_f)},
            {"m_d", opt(r.m_d)},
            {"novel_class_count_estimate", r.novel_class_count_estimate},
            {"assignment", assignment}};
}

inline StepReport step_report_from_json(const nlohmann::json& j) {
    auto opt = [&j](const char* key) -> std::optional<double> {
        if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
        return j.at(key).get<double>();
    };
    StepReport r;
    try {
        r.step_index = j.at("step_index").get<int>();
        r.m_all = j.at("m_all").get<double>();
        r.m_old = opt("m_old");
        r.m_new = opt("m_new");
        r.m_f = opt("m_f");
        r.m_d = opt("m_d");
        r.novel_class_count_estimate = j.value("novel_class_count_estimate", std::size_t{0});
        if (j.contains("assignment")) {
            for (const auto& [k, v] : j.at("assignment").items()) r.assignment[std::stoi(k)] = v.get<int>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("step report: ") + e.what());
    }
    return r;
}

// Percentage with two decimals; "-" for absent values.
inline std::string percent(const std::optional<double>& v) {
    if (!v) return "-";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", *v * 100.0);
    return buf;
}

inline void write_table_csv(std::ostream& os, std::span<const StepReport> reports) {
    os << "step,M_all,M_o,M_f,M_d,M_n,novel_classes\n";
    for (const auto& r : reports) {
        os << r.step_index << ',' << percent(r.m_all) << ',' << percent(r.m_old) << ',' << percent(r.m_f) << ','
           << percent(r.m_d) << ',' << percent(r.m_new) << ',' << r.novel_class_count_estimate << '\n';
    }
}

inline void write_table_markdown(std::ostream& os, std::span<const StepReport> reports) {
    os << "| Step | M_all | M_o | M_f | M_d | M_n | Novel classes |\n";
    os << "|---:|---:|---:|---:|---:|---:|---:|\n";
    for (const auto& r : reports) {
        os << "| " << r.step_index << " | " << percent(r.m_all) << " | " << percent(r.m_old) << " | " << percent(r.m_f)
           << " | " << percent(r.m_d) << " | " << percent(r.m_new) << " | " << r.novel_class_count_estimate << " |\n";
    }
}

}  // namespace cgcd
