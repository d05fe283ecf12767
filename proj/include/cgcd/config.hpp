#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "cgcd/dataset.hpp"
#include "cgcd/errors.hpp"
#include "cgcd/metric_head.hpp"
#include "cgcd/pseudo_label.hpp"
#include "cgcd/replay_distill.hpp"
#include "cgcd/splitter.hpp"

namespace cgcd {

struct SyntheticSpec {
    int n_classes = 13;
    int per_class = 100;
    int d_in = 32;
    double separation = 10.0;
    std::uint64_t seed = 0;
    int validation_per_class = 0;  // > 0: separate validation draw instead of a carved holdout
};

struct DataSource {
    std::optional<SyntheticSpec> synthetic;
    std::string emb1;             // labeled source file
    std::string validation_emb1;  // optional separate validation source
};

struct RunConfig {
    DataSource data;
    ScenarioConfig scenario;
    PaHyperparams pa;
    ApConfig ap;
    SplitConfig split;
    bool fine_split = true;
    ReplayMode replay = ReplayMode::proxy;
    bool distill = true;
    std::uint64_t seed = 0;
    std::string out_dir;

    // Checks values and that referenced files exist. Relative paths resolve
    // against `base`.
    void validate(const std::filesystem::path& base = {}) const {
        scenario.validate();
        pa.validate();
        ap.validate();
        split.validate();
        if (!data.synthetic && data.emb1.empty()) throw ConfigError("config: data needs 'synthetic' or 'emb1'");
        if (data.synthetic) {
            const auto& s = *data.synthetic;
            if (s.n_classes < 2 || s.per_class < 2 || s.d_in < 1 || !(s.separation > 0) || s.validation_per_class < 0) {
                throw ConfigError("config: invalid synthetic data parameters");
            }
        }
        for (const auto& p : {data.emb1, data.validation_emb1}) {
            if (!p.empty() && !std::filesystem::exists(resolve(base, p))) {
                throw ConfigError("config: data file not found: " + p);
            }
        }
    }

    static std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
        std::filesystem::path path(p);
        return path.is_relative() && !base.empty() ? base / path : path;
    }
};

inline std::string to_string(ReplayMode m) {
    switch (m) {
        case ReplayMode::proxy: return "proxy";
        case ReplayMode::data_mean: return "data_mean";
        case ReplayMode::none: return "none";
    }
    return "proxy";
}

inline ReplayMode replay_mode_from_string(const std::string& s) {
    if (s == "proxy") return ReplayMode::proxy;
    if (s == "data_mean") return ReplayMode::data_mean;
    if (s == "none") return ReplayMode::none;
    throw ConfigError("config: unknown replay mode '" + s + "'");
}

inline nlohmann::json to_json(const PaHyperparams& p) {
    return {{"alpha", p.alpha},       {"delta", p.delta},           {"lr_model", p.lr_model},
            {"lr_proxy", p.lr_proxy}, {"weight_decay", p.weight_decay}, {"epochs", p.epochs},
            {"lr_decay_factor", p.lr_decay_factor}, {"lr_decay_every", p.lr_decay_every},
            {"batch_size", p.batch_size}, {"d_emb", p.d_emb}};
}

inline nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json data = nlohmann::json::object();
    if (c.data.synthetic) {
        const auto& s = *c.data.synthetic;
        data["synthetic"] = {{"n_classes", s.n_classes}, {"per_class", s.per_class}, {"d_in", s.d_in},
                             {"separation", s.separation}, {"seed", s.seed},
                             {"validation_per_class", s.validation_per_class}};
    }
    if (!c.data.emb1.empty()) data["emb1"] = c.data.emb1;
    if (!c.data.validation_emb1.empty()) data["validation_emb1"] = c.data.validation_emb1;
    nlohmann::json ap{{"damping", c.ap.damping}, {"max_iter", c.ap.max_iter},
                      {"convergence_window", c.ap.convergence_window}};
    ap["preference"] = c.ap.preference ? nlohmann::json(*c.ap.preference) : nlohmann::json("median");
    return {{"data", data},
            {"scenario",
             {{"old_class_fraction", c.scenario.old_class_fraction},
              {"old_sample_carryover", c.scenario.old_sample_carryover},
              {"step_class_fractions", c.scenario.step_class_fractions},
              {"validation_fraction", c.scenario.validation_fraction},
              {"seed", c.scenario.seed}}},
            {"proxy_anchor", to_json(c.pa)},
            {"affinity_propagation", ap},
            {"splitter",
             {{"enabled", c.fine_split},
              {"epsilon", c.split.epsilon},
              {"epochs", c.split.epochs},
              {"lr", c.split.lr},
              {"weight_decay", c.split.weight_decay},
              {"batch_size", c.split.batch_size},
              {"hidden", c.split.hidden},
              {"clean_threshold", c.split.clean_threshold},
              {"gmm_iters", c.split.gmm_iters},
              {"gmm_tol", c.split.gmm_tol}}},
            {"replay", to_string(c.replay)},
            {"distill", c.distill},
            {"seed", c.seed},
            {"out_dir", c.out_dir}};
}

namespace detail {
template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& dst) {
    if (j.contains(key)) dst = j.at(key).get<T>();
}
}  // namespace detail

// Every field is optional; absent fields keep their defaults.
inline RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig c;
    using detail::read_opt;
    try {
        if (j.contains("data")) {
            const auto& d = j.at("data");
            if (d.contains("synthetic")) {
                SyntheticSpec s;
                const auto& js = d.at("synthetic");
                read_opt(js, "n_classes", s.n_classes);
                read_opt(js, "per_class", s.per_class);
                read_opt(js, "d_in", s.d_in);
                read_opt(js, "separation", s.separation);
                read_opt(js, "seed", s.seed);
                read_opt(js, "validation_per_class", s.validation_per_class);
                c.data.synthetic = s;
            }
            read_opt(d, "emb1", c.data.emb1);
            read_opt(d, "validation_emb1", c.data.validation_emb1);
        }
        if (j.contains("scenario")) {
            const auto& s = j.at("scenario");
            read_opt(s, "old_class_fraction", c.scenario.old_class_fraction);
            read_opt(s, "old_sample_carryover", c.scenario.old_sample_carryover);
            read_opt(s, "step_class_fractions", c.scenario.step_class_fractions);
            read_opt(s, "validation_fraction", c.scenario.validation_fraction);
            read_opt(s, "seed", c.scenario.seed);
        }
        if (j.contains("proxy_anchor")) {
            const auto& p = j.at("proxy_anchor");
            read_opt(p, "alpha", c.pa.alpha);
            read_opt(p, "delta", c.pa.delta);
            read_opt(p, "lr_model", c.pa.lr_model);
            read_opt(p, "lr_proxy", c.pa.lr_proxy);
            read_opt(p, "weight_decay", c.pa.weight_decay);
            read_opt(p, "epochs", c.pa.epochs);
            read_opt(p, "lr_decay_factor", c.pa.lr_decay_factor);
            read_opt(p, "lr_decay_every", c.pa.lr_decay_every);
            read_opt(p, "batch_size", c.pa.batch_size);
            read_opt(p, "d_emb", c.pa.d_emb);
        }
        if (j.contains("affinity_propagation")) {
            const auto& a = j.at("affinity_propagation");
            read_opt(a, "damping", c.ap.damping);
            read_opt(a, "max_iter", c.ap.max_iter);
            read_opt(a, "convergence_window", c.ap.convergence_window);
            if (a.contains("preference")) {
                const auto& p = a.at("preference");
                if (p.is_string()) {
                    if (p.get<std::string>() != "median") throw ConfigError("config: preference must be 'median' or a number");
                    c.ap.preference.reset();
                } else {
                    c.ap.preference = p.get<double>();
                }
            }
        }
        if (j.contains("splitter")) {
            const auto& s = j.at("splitter");
            read_opt(s, "enabled", c.fine_split);
            read_opt(s, "epsilon", c.split.epsilon);
            read_opt(s, "epochs", c.split.epochs);
            read_opt(s, "lr", c.split.lr);
            read_opt(s, "weight_decay", c.split.weight_decay);
            read_opt(s, "batch_size", c.split.batch_size);
            read_opt(s, "hidden", c.split.hidden);
            read_opt(s, "clean_threshold", c.split.clean_threshold);
            read_opt(s, "gmm_iters", c.split.gmm_iters);
            read_opt(s, "gmm_tol", c.split.gmm_tol);
        }
        if (j.contains("replay")) c.replay = replay_mode_from_string(j.at("replay").get<std::string>());
        read_opt(j, "distill", c.distill);
        read_opt(j, "seed", c.seed);
        read_opt(j, "out_dir", c.out_dir);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return c;
}

inline RunConfig read_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    try {
        return run_config_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

}  // namespace cgcd
