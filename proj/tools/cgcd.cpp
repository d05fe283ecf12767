#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cgcd/cgcd.hpp"

namespace fs = std::filesystem;
using namespace cgcd;

namespace {

enum Exit { kOk = 0, kConfig = 2, kData = 3, kNumerical = 4 };

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    bool verbose = false;
};

RunConfig load_config(const Globals& g) {
    RunConfig cfg;
    if (!g.config.empty()) cfg = read_run_config(g.config);
    if (g.seed) {
        cfg.seed = *g.seed;
        cfg.scenario.seed = *g.seed;
        if (cfg.data.synthetic) cfg.data.synthetic->seed = *g.seed;
    }
    if (!g.out.empty()) cfg.out_dir = g.out;
    if (cfg.out_dir.empty()) cfg.out_dir = "out";
    return cfg;
}

fs::path config_base(const Globals& g) { return g.config.empty() ? fs::path{} : fs::path(g.config).parent_path(); }

std::vector<int> read_ints(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::vector<int> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            const auto b = tok.find_first_not_of(" \t\r");
            if (b == std::string::npos) continue;
            try {
                std::size_t used = 0;
                out.push_back(std::stoi(tok.substr(b), &used));
            } catch (const std::exception&) {
                throw DataError(path.string() + ":" + std::to_string(lineno) + ": not an integer: " + tok);
            }
        }
    }
    return out;
}

std::set<int> parse_class_list(const std::string& s) {
    std::set<int> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        try {
            out.insert(std::stoi(tok));
        } catch (const std::exception&) {
            throw ConfigError("bad class id '" + tok + "'");
        }
    }
    return out;
}

std::optional<double> parse_preference(const std::string& s) {
    if (s.empty() || s == "median") return std::nullopt;
    try {
        return std::stod(s);
    } catch (const std::exception&) {
        throw ConfigError("preference must be 'median' or a number");
    }
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
}

int cmd_synth(const Globals& g) {
    RunConfig cfg = load_config(g);
    const SyntheticSpec s = cfg.data.synthetic.value_or(SyntheticSpec{});
    RunConfig check = cfg;
    check.data = {s, "", ""};
    check.validate();

    const int total = s.per_class + s.validation_per_class;
    const auto all = generate_synthetic(s.n_classes, total, s.d_in, s.separation, s.seed);
    std::vector<std::size_t> pool, holdout;
    for (std::size_t r = 0; r < all.size(); ++r) {
        (static_cast<int>(r % static_cast<std::size_t>(total)) < s.per_class ? pool : holdout).push_back(r);
    }
    const fs::path dir = cfg.out_dir;
    fs::create_directories(dir);
    Manifest m;
    for (int c = 0; c < s.n_classes; ++c) m.dense_to_original.push_back(c);
    write_emb1(subset(all, pool), dir / "source.emb1");
    m.files.push_back({"source.emb1", "source", -1});
    if (!holdout.empty()) {
        write_emb1(subset(all, holdout), dir / "validation.emb1");
        m.files.push_back({"validation.emb1", "validation", -1});
    }
    write_manifest(m, dir / "manifest.json");
    if (g.verbose) std::clog << "wrote " << pool.size() << " + " << holdout.size() << " samples to " << dir << '\n';
    return kOk;
}

int cmd_run(const Globals& g, const std::string& resume, int stop_after) {
    RunConfig cfg = load_config(g);
    RunOptions opts;
    opts.out_dir = cfg.out_dir;
    opts.verbose = g.verbose;
    if (!resume.empty()) opts.resume = read_checkpoint(resume);
    if (stop_after >= 0) opts.stop_after_step = stop_after;
    const auto res = run_pipeline(cfg, opts, config_base(g));
    write_table_markdown(std::cout, res.reports);
    return kOk;
}

int cmd_split(const Globals& g, const std::string& ckpt_path, const std::string& data_path, bool initial_only) {
    RunConfig cfg = load_config(g);
    cfg.split.validate();
    const auto ck = read_checkpoint(ckpt_path);
    const auto data = read_emb1(data_path);
    if (data.dim() != ck.model.head.in_dim()) throw DataError("split: data dimension does not match the checkpoint head");
    const Matrix z = embed_all(ck.model.head, data.features);

    FineSplitResult res;
    if (initial_only) {
        res.decisions = initial_split(z, data.ids, ck.model.bank, cfg.split.epsilon);
        for (auto& d : res.decisions) d.final_label = d.initial_label;
    } else {
        res = fine_split(z, data.ids, ck.model.bank, cfg.split, stream_seed(cfg.seed, "split", ck.step_index + 1));
        if (res.fell_back) std::cerr << "warning: fine split fell back to the initial split: " << res.warning << '\n';
    }
    std::ostringstream csv;
    write_split_csv(csv, res.decisions);
    write_text(fs::path(cfg.out_dir) / "split.csv", csv.str());
    std::size_t n_new = 0;
    for (const auto& d : res.decisions) n_new += d.final_label == kNew ? 1 : 0;
    std::cout << "old " << res.decisions.size() - n_new << " new " << n_new << '\n';
    return kOk;
}

int cmd_cluster(const Globals& g, const std::string& data_path, const std::string& ckpt_path, const std::string& pref) {
    RunConfig cfg = load_config(g);
    if (!pref.empty()) cfg.ap.preference = parse_preference(pref);
    cfg.ap.validate();
    const auto data = read_emb1(data_path);
    Matrix z;
    if (!ckpt_path.empty()) {
        const auto ck = read_checkpoint(ckpt_path);
        if (data.dim() != ck.model.head.in_dim()) throw DataError("cluster: data dimension does not match the checkpoint head");
        z = embed_all(ck.model.head, data.features);
    } else {
        z = data.features;
        for (std::size_t r = 0; r < z.rows(); ++r) {
            auto row = z.row(r);
            const double len = norm2(row);
            if (len == 0.0) throw DataError("cluster: zero embedding at row " + std::to_string(r));
            for (double& v : row) v /= len;
        }
    }
    std::vector<std::size_t> rows(z.rows());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    const auto nl = label_new(rows, data.ids, z, cfg.ap, 0);
    auto report = cluster_report(nl);
    nlohmann::json assignment = nlohmann::json::array();
    for (const auto& e : nl.entries) assignment.push_back({{"sample_id", e.sample_id}, {"cluster", e.label}});
    report["assignment"] = assignment;
    write_text(fs::path(cfg.out_dir) / "clusters.json", report.dump(2) + "\n");
    std::cout << "clusters " << nl.novel_class_count << '\n';
    return kOk;
}

int cmd_eval(const Globals& g, const std::string& pred_path, const std::string& truth_path, const std::string& old_list,
             const std::string& new_list) {
    const auto pred = read_ints(pred_path);
    const auto truth = read_ints(truth_path);
    if (pred.size() != truth.size()) {
        throw DataError("eval: " + std::to_string(pred.size()) + " predictions but " + std::to_string(truth.size()) +
                        " truth labels");
    }
    const std::set<int> old_classes = old_list.empty() ? std::set<int>(truth.begin(), truth.end()) : parse_class_list(old_list);
    std::optional<std::set<int>> new_classes;
    if (!new_list.empty()) new_classes = parse_class_list(new_list);
    const auto rep = step_metrics(pred, truth, old_classes, {}, new_classes);
    const std::string text = to_json(rep).dump(2) + "\n";
    std::cout << text;
    if (!g.out.empty()) write_text(fs::path(g.out) / "eval.json", text);
    return kOk;
}

int cmd_report(const Globals& g, const std::vector<std::string>& inputs) {
    std::vector<StepReport> reports;
    for (const auto& p : inputs) {
        std::ifstream in(p);
        if (!in) throw DataError("cannot open " + p);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::parse_error& e) {
            throw DataError(p + ": " + e.what());
        }
        if (j.is_object() && j.contains("reports")) j = j.at("reports");
        if (j.is_array()) {
            for (const auto& r : j) reports.push_back(step_report_from_json(r));
        } else {
            reports.push_back(step_report_from_json(j));
        }
    }
    std::sort(reports.begin(), reports.end(), [](const auto& a, const auto& b) { return a.step_index < b.step_index; });
    std::ostringstream md, csv;
    write_table_markdown(md, reports);
    write_table_csv(csv, reports);
    if (!g.out.empty()) {
        write_text(fs::path(g.out) / "table.md", md.str());
        write_text(fs::path(g.out) / "table.csv", csv.str());
    }
    std::cout << md.str();
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Continual generalized category discovery on precomputed embeddings"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config, "JSON run configuration");
    app.add_option("--seed", g.seed, "Base seed for every random stream");
    app.add_option("--out", g.out, "Output directory");
    app.add_flag("--verbose,-v", g.verbose, "Progress on stderr");

    auto* synth = app.add_subcommand("synth", "Write a synthetic EMB1 dataset and manifest");

    auto* run = app.add_subcommand("run", "Run the full pipeline");
    std::string resume;
    int stop_after = -1;
    run->add_option("--resume", resume, "Continue from a step checkpoint")->check(CLI::ExistingFile);
    run->add_option("--stop-after", stop_after, "Stop after this step");

    auto* split = app.add_subcommand("split", "Old/new split of an unlabeled set, with histogram CSV");
    std::string split_ckpt, split_data;
    bool initial_only = false;
    split->add_option("--checkpoint", split_ckpt, "Step checkpoint")->required()->check(CLI::ExistingFile);
    split->add_option("--data", split_data, "EMB1 file to split")->required()->check(CLI::ExistingFile);
    split->add_flag("--initial-only", initial_only, "Skip the fine split");

    auto* cluster = app.add_subcommand("cluster", "Affinity propagation on embeddings");
    std::string cl_data, cl_ckpt, cl_pref;
    cluster->add_option("--data", cl_data, "EMB1 file")->required()->check(CLI::ExistingFile);
    cluster->add_option("--checkpoint", cl_ckpt, "Embed with this checkpoint's head first")->check(CLI::ExistingFile);
    cluster->add_option("--preference", cl_pref, "'median' or a number");

    auto* eval = app.add_subcommand("eval", "Cluster accuracy of predictions against labels");
    std::string ev_pred, ev_truth, ev_old, ev_new;
    eval->add_option("--pred", ev_pred, "Predicted ids, one per line")->required()->check(CLI::ExistingFile);
    eval->add_option("--truth", ev_truth, "Ground-truth ids, one per line")->required()->check(CLI::ExistingFile);
    eval->add_option("--old-classes", ev_old, "Comma-separated old class ids");
    eval->add_option("--new-classes", ev_new, "Comma-separated new class ids");

    auto* report = app.add_subcommand("report", "Render step reports as CSV and markdown tables");
    std::vector<std::string> rep_inputs;
    report->add_option("reports", rep_inputs, "reports.json or step report files")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return kConfig;
    }

    try {
        if (*synth) return cmd_synth(g);
        if (*run) return cmd_run(g, resume, stop_after);
        if (*split) return cmd_split(g, split_ckpt, split_data, initial_only);
        if (*cluster) return cmd_cluster(g, cl_data, cl_ckpt, cl_pref);
        if (*eval) return cmd_eval(g, ev_pred, ev_truth, ev_old, ev_new);
        if (*report) return cmd_report(g, rep_inputs);
    } catch (const StageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        switch (e.kind()) {
            case StageError::Kind::config: return kConfig;
            case StageError::Kind::data: return kData;
            case StageError::Kind::numerical: return kNumerical;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return kNumerical;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    }
    return kOk;
}
