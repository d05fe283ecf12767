#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cgcd/checkpoint.hpp"
#include "cgcd/config.hpp"
#include "cgcd/dataset.hpp"
#include "cgcd/emb1.hpp"
#include "cgcd/errors.hpp"
#include "cgcd/evaluation.hpp"
#include "cgcd/metric_head.hpp"
#include "cgcd/pseudo_label.hpp"
#include "cgcd/replay_distill.hpp"
#include "cgcd/splitter.hpp"
#include "cgcd/training.hpp"

namespace cgcd {

namespace fs = std::filesystem;

// Per-step artifacts, kept in memory for tests and written when an output
// directory is set.
struct StepArtifacts {
    int step_index = 0;
    ModelState model;
    Exemplar exemplar;
    std::vector<EpochLog> train_log;
    std::vector<SplitDecision> split;  // empty at step 0
    bool split_fell_back = false;
    std::string split_warning;
    PseudoLabeledSet pseudo;
    std::optional<nlohmann::json> cluster_report;
};

struct PipelineResult {
    std::vector<StepReport> reports;
    std::vector<StepArtifacts> steps;
};

struct RunOptions {
    fs::path out_dir;                     // empty: keep everything in memory
    std::optional<Checkpoint> resume;     // continue after resume->step_index
    std::optional<int> stop_after_step;   // stop once this step is finished
    bool verbose = false;
};

namespace detail {

template <typename F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const ConfigError& e) {
        throw StageError(name, StageError::Kind::config, e.what());
    } catch (const NumericalError& e) {
        throw StageError(name, StageError::Kind::numerical, e.what());
    } catch (const DataError& e) {
        throw StageError(name, StageError::Kind::data, e.what());
    }
}

inline void write_json(const fs::path& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

inline void write_train_log(const fs::path& path, const std::vector<EpochLog>& log) {
    std::ofstream out(path);
    out.precision(17);
    out << "epoch,loss,pa,ex,kd\n";
    for (const auto& e : log) out << e.epoch << ',' << e.loss << ',' << e.pa << ',' << e.ex << ',' << e.kd << '\n';
}

inline std::string step_file(int step, const std::string& suffix) { return "step_" + std::to_string(step) + suffix; }

}  // namespace detail

inline Scenario load_scenario(const RunConfig& cfg, const fs::path& base = {}) {
    return detail::stage("dataset", [&] {
        ScenarioConfig sc = cfg.scenario;
        if (cfg.data.synthetic) {
            const auto& s = *cfg.data.synthetic;
            const int total = s.per_class + s.validation_per_class;
            const auto src = generate_synthetic(s.n_classes, total, s.d_in, s.separation, s.seed);
            if (s.validation_per_class == 0) return build_scenario(src, sc);
            std::vector<std::size_t> pool, holdout;
            for (std::size_t r = 0; r < src.size(); ++r) {
                (static_cast<int>(r % static_cast<std::size_t>(total)) < s.per_class ? pool : holdout).push_back(r);
            }
            return build_scenario(subset(src, pool), subset(src, holdout), sc);
        }
        const auto src = read_emb1(RunConfig::resolve(base, cfg.data.emb1));
        if (!cfg.data.validation_emb1.empty()) {
            return build_scenario(src, read_emb1(RunConfig::resolve(base, cfg.data.validation_emb1)), sc);
        }
        return build_scenario(src, sc);
    });
}

inline void write_scenario_files(const Scenario& sc, const fs::path& dir) {
    fs::create_directories(dir);
    Manifest m;
    m.dense_to_original = sc.dense_to_original;
    for (const auto& st : sc.steps) {
        const auto train = detail::step_file(st.step_index, "_train.emb1");
        const auto val = detail::step_file(st.step_index, "_validation.emb1");
        write_emb1(st.train, dir / train);
        write_emb1(st.validation, dir / val);
        m.files.push_back({train, st.step_index == 0 ? "labeled_train" : "unlabeled_train", st.step_index});
        m.files.push_back({val, "validation", st.step_index});
    }
    write_manifest(m, dir / "manifest.json");
}

inline Checkpoint make_checkpoint(const StepArtifacts& a, const std::vector<StepReport>& reports, const RunConfig& cfg) {
    return {a.step_index, a.model, a.exemplar, reports, to_json(cfg.pa)};
}

// Runs the initial step and every incremental step of `sc`. Hidden labels of
// unlabeled steps are only read by the evaluation calls at the end of each step.
inline PipelineResult run_scenario(const Scenario& sc, const RunConfig& cfg, const RunOptions& opts = {}) {
    detail::stage("config", [&] {
        cfg.pa.validate();
        cfg.ap.validate();
        cfg.split.validate();
        return 0;
    });
    if (sc.steps.size() < 2) throw StageError("config", StageError::Kind::config, "scenario needs an incremental step");
    if (!opts.out_dir.empty()) fs::create_directories(opts.out_dir);

    PipelineResult res;
    const std::set<int> initial_classes(sc.step_classes[0].begin(), sc.step_classes[0].end());
    auto log = [&](const std::string& msg) {
        if (opts.verbose) std::clog << "[cgcd] " << msg << '\n';
    };

    auto finish_step = [&](StepArtifacts&& art, const StepDataset& st, std::size_t novel) {
        const auto& val = st.validation;
        const auto pred = predict(art.model.head, art.model.bank, val.features);
        const std::set<int> new_set(st.new_classes.begin(), st.new_classes.end());
        std::optional<std::set<int>> new_classes = new_set;
        if (st.step_index == 0) new_classes = std::set<int>{};
        StepReport rep = detail::stage("evaluation", [&] {
            return step_metrics(pred, *val.labels, initial_classes, res.reports, new_classes);
        });
        rep.novel_class_count_estimate = novel;
        res.reports.push_back(rep);
        log("step " + std::to_string(st.step_index) + ": M_all " + percent(rep.m_all) + " M_o " + percent(rep.m_old) +
            " M_n " + percent(rep.m_new) + " novel " + std::to_string(novel));

        if (!opts.out_dir.empty()) {
            const auto& dir = opts.out_dir;
            write_checkpoint(make_checkpoint(art, res.reports, cfg), dir / detail::step_file(art.step_index, ".ckpt"));
            detail::write_json(dir / detail::step_file(art.step_index, "_report.json"), to_json(rep));
            detail::write_train_log(dir / detail::step_file(art.step_index, "_train_log.csv"), art.train_log);
            if (!art.split.empty()) {
                std::vector<int> truth_new(st.holdout_truth.size());
                for (std::size_t i = 0; i < truth_new.size(); ++i) {
                    truth_new[i] = initial_classes.count(st.holdout_truth[i]) ? kOld : kNew;
                }
                std::ofstream csv(dir / detail::step_file(art.step_index, "_split.csv"));
                write_split_csv(csv, art.split, truth_new);
            }
            if (art.cluster_report) {
                detail::write_json(dir / detail::step_file(art.step_index, "_clusters.json"), *art.cluster_report);
            }
        }
        res.steps.push_back(std::move(art));
    };

    std::size_t first_step = 1;
    if (opts.resume) {
        const auto& ck = *opts.resume;
        if (ck.step_index < 0 || static_cast<std::size_t>(ck.step_index) >= sc.steps.size()) {
            throw StageError("resume", StageError::Kind::data, "checkpoint step is outside the scenario");
        }
        res.reports = ck.reports;
        StepArtifacts art;
        art.step_index = ck.step_index;
        art.model = ck.model;
        art.exemplar = ck.exemplar;
        res.steps.push_back(std::move(art));
        first_step = static_cast<std::size_t>(ck.step_index) + 1;
        log("resuming after step " + std::to_string(ck.step_index));
    } else {
        const auto& st0 = sc.steps[0];
        StepArtifacts art;
        art.step_index = 0;
        auto trained = detail::stage("initial training", [&] {
            return train_initial(st0.train, cfg.pa, stream_seed(cfg.seed, "train", 0));
        });
        art.model = std::move(trained.state);
        round_to_checkpoint_precision(art.model);
        art.train_log = std::move(trained.log);
        art.exemplar = detail::stage("exemplar", [&] {
            const Matrix z = embed_all(art.model.head, st0.train.features);
            return build_exemplar(art.model.bank, z, *st0.train.labels,
                                  cfg.replay == ReplayMode::data_mean ? ReplayMode::data_mean : ReplayMode::proxy);
        });
        round_to_checkpoint_precision(art.exemplar);
        finish_step(std::move(art), st0, 0);
    }
    if (opts.stop_after_step && static_cast<std::size_t>(*opts.stop_after_step) < first_step) return res;

    for (std::size_t t = first_step; t < sc.steps.size(); ++t) {
        const auto& st = sc.steps[t];
        const StepArtifacts& prev = res.steps.back();
        const auto& x = st.train.features;
        const auto step_u = static_cast<std::uint64_t>(t);
        StepArtifacts art;
        art.step_index = static_cast<int>(t);

        const Matrix z = embed_all(prev.model.head, x);
        auto split = detail::stage("split", [&] {
            if (cfg.fine_split) return fine_split(z, st.train.ids, prev.model.bank, cfg.split, stream_seed(cfg.seed, "split", step_u));
            FineSplitResult r;
            r.decisions = initial_split(z, st.train.ids, prev.model.bank, cfg.split.epsilon);
            return r;
        });
        if (split.fell_back) log("fine split fell back to the initial split: " + split.warning);
        art.split = std::move(split.decisions);
        art.split_fell_back = split.fell_back;
        art.split_warning = split.warning;

        std::vector<std::size_t> old_rows, new_rows;
        for (std::size_t i = 0; i < art.split.size(); ++i) {
            (art.split[i].final_label == kOld ? old_rows : new_rows).push_back(i);
        }

        ProxyBank grown = prev.model.bank;
        detail::stage("pseudo-labeling", [&] {
            art.pseudo.entries = label_old(old_rows, st.train.ids, x, prev.model.head, prev.model.bank);
            if (!new_rows.empty()) {
                const ApConfig& ap = cfg.ap;
                const auto& ids = prev.model.bank.class_ids;
                const int next_id = ids.empty() ? 0 : *std::max_element(ids.begin(), ids.end()) + 1;
                auto nl = label_new(new_rows, st.train.ids, z, ap, next_id);
                art.pseudo.novel_class_count = nl.novel_class_count;
                art.pseudo.cluster_centroids = nl.centroids;
                art.cluster_report = cluster_report(nl);
                art.pseudo.entries.insert(art.pseudo.entries.end(), nl.entries.begin(), nl.entries.end());
                grown = grow_bank(prev.model.bank, nl.centroids);
            }
            return 0;
        });

        const Exemplar* replay = cfg.replay == ReplayMode::none ? nullptr : &prev.exemplar;
        auto trained = detail::stage("incremental training", [&] {
            ModelState start;
            start.head = prev.model.head;
            start.bank = grown;
            return train_incremental(std::move(start), x, art.pseudo, replay, prev.model.head, cfg.pa,
                                     stream_seed(cfg.seed, "train", step_u), {cfg.distill});
        });
        art.model = std::move(trained.state);
        round_to_checkpoint_precision(art.model);
        art.train_log = std::move(trained.log);

        art.exemplar = detail::stage("exemplar", [&] {
            std::vector<std::size_t> rows;
            std::vector<int> labels;
            for (const auto& e : art.pseudo.entries) {
                rows.push_back(e.row);
                labels.push_back(e.label);
            }
            const Matrix zp = embed_all(art.model.head, gather_rows(x, rows));
            const ReplayMode mode = cfg.replay == ReplayMode::data_mean ? ReplayMode::data_mean : ReplayMode::proxy;
            return build_exemplar(art.model.bank, zp, labels, mode, &prev.exemplar);
        });
        round_to_checkpoint_precision(art.exemplar);
        const std::size_t novel = art.pseudo.novel_class_count;
        finish_step(std::move(art), st, novel);
        if (opts.stop_after_step && static_cast<std::size_t>(*opts.stop_after_step) <= t) break;
    }

    if (!opts.out_dir.empty()) {
        nlohmann::json all = nlohmann::json::array();
        for (const auto& r : res.reports) all.push_back(to_json(r));
        const auto& last = res.reports.back();
        nlohmann::json summary{{"steps", res.reports.size()}, {"final_m_all", last.m_all}};
        summary["final_m_f"] = last.m_f ? nlohmann::json(*last.m_f) : nlohmann::json(nullptr);
        summary["final_m_d"] = last.m_d ? nlohmann::json(*last.m_d) : nlohmann::json(nullptr);
        detail::write_json(opts.out_dir / "reports.json", {{"reports", all}, {"summary", summary}});
        std::ofstream csv(opts.out_dir / "table.csv");
        write_table_csv(csv, res.reports);
        std::ofstream md(opts.out_dir / "table.md");
        write_table_markdown(md, res.reports);
    }
    return res;
}

// Load data, build the scenario, run every step.
inline PipelineResult run_pipeline(const RunConfig& cfg, RunOptions opts = {}, const fs::path& base = {}) {
    detail::stage("config", [&] {
        cfg.validate(base);
        return 0;
    });
    const Scenario sc = load_scenario(cfg, base);
    if (!opts.out_dir.empty()) {
        write_scenario_files(sc, opts.out_dir / "scenario");
        detail::write_json(opts.out_dir / "config.json", to_json(cfg));
    }
    return run_scenario(sc, cfg, opts);
}

}  // namespace cgcd
