// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cgcd/cgcd.hpp"
#include "../test_support.hpp"

using namespace cgcd;
using namespace cgcd::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

int failures = 0;

void verdict(bool ok, const std::string& name, const std::string& detail) {
    std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
    failures += ok ? 0 : 1;
}

// Runs `body`; an escaping exception is a failure of that criterion.
void criterion(const std::string& name, const std::function<void()>& body) {
    try {
        body();
    } catch (const std::exception& e) {
        verdict(false, name, std::string("exception: ") + e.what());
    }
}

RunConfig packaged(const char* file, std::uint64_t seed) {
    auto cfg = read_run_config(std::filesystem::path(CGCD_CONFIG_DIR) / file);
    cfg.seed = seed;
    cfg.scenario.seed = seed;
    if (cfg.data.synthetic) cfg.data.synthetic->seed = seed;
    return cfg;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void gradient_correctness() {
    const auto t0 = Clock::now();
    auto rng = make_rng(1, "acceptance-gradients");
    double worst_pa = 0.0, worst_kd = 0.0;
    for (int i = 0; i < 100; ++i) {
        auto in = random_pa_instance(rng, 8, 5, 16);
        worst_pa = std::max(worst_pa, pa_gradient_error(in));
        worst_kd = std::max(worst_kd, kd_gradient_error(rng, 8, 16, 16));
    }
    const double secs = seconds_since(t0);
    verdict(worst_pa <= 1e-4 && worst_kd <= 1e-4 && secs < 10.0, "gradient-correctness",
            "100 proxy-anchor + 100 distillation instances, worst rel err " + fmt("%.2e", worst_pa) + " / " +
                fmt("%.2e", worst_kd) + ", " + fmt("%.2f", secs) + " s");
}

void assignment_optimality() {
    const auto t0 = Clock::now();
    auto rng = make_rng(2, "acceptance-hungarian");
    std::uniform_int_distribution<int> size(1, 7), value(0, 99);
    int exact = 0;
    for (int i = 0; i < 200; ++i) {
        const auto n = static_cast<std::size_t>(size(rng));
        Matrix c(n, n);
        for (double& v : c.data()) v = value(rng);
        const auto a = hungarian(c);
        double total = 0.0;
        for (std::size_t r = 0; r < n; ++r) total += c(r, static_cast<std::size_t>(a.row_to_col[r]));
        exact += (total == a.cost && a.cost == brute_force_assignment_cost(c)) ? 1 : 0;
    }
    const double secs = seconds_since(t0);
    verdict(exact == 200 && secs < 5.0, "assignment-optimality",
            std::to_string(exact) + "/200 equal to brute force, " + fmt("%.2f", secs) + " s");
}

void em_soundness() {
    auto rng = make_rng(3, "acceptance-em");
    int monotone = 0;
    for (int i = 0; i < 100; ++i) {
        std::uniform_real_distribution<double> u(-1.0, 1.0), s(0.05, 0.5);
        std::normal_distribution<double> a(u(rng), s(rng)), b(u(rng), s(rng));
        std::vector<double> xs(20 + i * 3);
        for (std::size_t k = 0; k < xs.size(); ++k) xs[k] = k % 2 ? a(rng) : b(rng);
        const auto g = fit_gmm1d(xs, 200, 0.0);
        bool ok = true;
        for (std::size_t k = 1; k < g.loglik_trace.size(); ++k) ok = ok && g.loglik_trace[k] >= g.loglik_trace[k - 1] - 1e-9;
        monotone += ok ? 1 : 0;
    }
    std::normal_distribution<double> lo(-0.5, 0.1), hi(0.5, 0.1);
    std::vector<double> xs(1000);
    for (std::size_t k = 0; k < xs.size(); ++k) xs[k] = k % 2 ? hi(rng) : lo(rng);
    const auto g = fit_gmm1d(xs);
    const bool recovered = std::abs(g.mean[0] + 0.5) <= 0.05 && std::abs(g.mean[1] - 0.5) <= 0.05 &&
                           std::abs(g.weight[0] - 0.5) <= 0.05 && std::abs(g.weight[1] - 0.5) <= 0.05;
    verdict(monotone == 100 && recovered, "em-soundness",
            std::to_string(monotone) + "/100 monotone; bimodal means " + fmt("%.3f", g.mean[0]) + ", " +
                fmt("%.3f", g.mean[1]) + " weights " + fmt("%.3f", g.weight[0]) + ", " + fmt("%.3f", g.weight[1]));
}

void clustering_recovery() {
    int ok = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto rng = make_rng(seed, "acceptance-blobs");
        const auto [pts, truth] = three_blobs(rng, 20, 2, 20.0, 1.0);
        const auto r = affinity_propagation(pts, ApConfig{});
        ok += (r.exemplars.size() == 3 && purity(r.assignment, truth) == 1.0) ? 1 : 0;
    }
    verdict(ok == 20, "clustering-recovery", std::to_string(ok) + "/20 seeds with 3 exemplars and purity 1.0");
}

void metric_arithmetic() {
    StepReport s0;
    s0.m_old = 0.7427;
    // 10000 old and 10000 new samples; misses go to pure junk clusters of 1000
    std::vector<int> pred, truth;
    for (int i = 0; i < 10000; ++i) {
        truth.push_back(0);
        pred.push_back(i < 5880 ? 0 : 100 + i / 1000);
    }
    for (int i = 0; i < 10000; ++i) {
        truth.push_back(1);
        pred.push_back(i < 4090 ? 1 : 200 + i / 1000);
    }
    const std::vector<StepReport> prior{s0};
    const auto r = step_metrics(pred, truth, {0}, prior);
    const bool ok = r.m_old && *r.m_old == 0.5880 && r.m_f && std::abs(*r.m_f - 0.1547) <= 1e-12 &&
                    percent(r.m_f) == "15.47" && r.m_d && *r.m_d == 0.4090 && percent(r.m_d) == "40.90";
    verdict(ok, "metric-arithmetic",
            "M_f " + percent(r.m_f) + " (" + fmt("%.17g", r.m_f.value_or(-1)) + "), M_d " + percent(r.m_d));
}

void end_to_end() {
    const auto t0 = Clock::now();
    int ok = 0;
    std::string detail;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto res = run_pipeline(packaged("synthetic.json", seed));
        const auto& r = res.reports.back();
        const bool pass = r.m_all >= 0.90 && r.m_f && *r.m_f <= 0.05 && r.m_d && *r.m_d >= 0.85 &&
                          r.novel_class_count_estimate == 3;
        ok += pass ? 1 : 0;
        detail += " [seed " + std::to_string(seed) + ": M_all " + percent(r.m_all) + " M_f " + percent(r.m_f) +
                  " M_d " + percent(r.m_d) + " novel " + std::to_string(r.novel_class_count_estimate) + "]";
    }
    const double secs = seconds_since(t0);
    verdict(ok >= 4 && secs < 120.0, "end-to-end-synthetic",
            std::to_string(ok) + "/5 seeds meet all thresholds, " + fmt("%.1f", secs) + " s;" + detail);
}

// Old/new accuracy of the initial and the final split labels of step 1.
std::pair<double, double> split_accuracies(const PipelineResult& res, const Scenario& sc) {
    const auto& st = sc.steps[1];
    const std::set<int> old(sc.step_classes[0].begin(), sc.step_classes[0].end());
    const auto& d = res.steps[1].split;
    std::size_t init_hit = 0, final_hit = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        const int truth = old.count(st.holdout_truth[i]) ? kOld : kNew;
        init_hit += d[i].initial_label == truth ? 1 : 0;
        final_hit += d[i].final_label == truth ? 1 : 0;
    }
    const auto n = static_cast<double>(d.size());
    return {init_hit / n, final_hit / n};
}

// Seeds where the fine split is at least as accurate as the initial split.
int fine_split_wins(double separation, int& fell_back, std::string& detail) {
    int ok = 0;
    fell_back = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto cfg = packaged("synthetic.json", seed);
        cfg.data.synthetic->separation = separation;
        const Scenario sc = load_scenario(cfg);
        const auto res = run_scenario(sc, cfg);
        const auto [initial, fine] = split_accuracies(res, sc);
        ok += fine >= initial ? 1 : 0;
        fell_back += res.steps[1].split_fell_back ? 1 : 0;
        detail += " [seed " + std::to_string(seed) + ": initial " + fmt("%.3f", initial) + " fine " + fmt("%.3f", fine) +
                  (res.steps[1].split_fell_back ? " (fell back)" : "") + "]";
    }
    return ok;
}

void fine_split_ablation() {
    int fell_back = 0;
    std::string detail;
    const int ok = fine_split_wins(4.0, fell_back, detail);
    verdict(ok >= 4, "fine-split-ablation",
            std::to_string(ok) + "/5 seeds with fine >= initial at separation 4, " + std::to_string(fell_back) +
                "/5 fell back to the initial split;" + detail);
    std::string info;
    const int ok10 = fine_split_wins(10.0, fell_back, info);
    std::cout << "INFO fine-split-ablation at separation 10: " << ok10 << "/5 seeds with fine >= initial, " << fell_back
              << "/5 fell back;" << info << std::endl;
}

// M_f of the last step with and without replay, per seed.
int replay_wins(double separation, std::string& detail) {
    int ok = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto cfg = packaged("synthetic.json", seed);
        cfg.data.synthetic->separation = separation;
        const Scenario sc = load_scenario(cfg);
        const auto with = run_scenario(sc, cfg).reports.back();
        cfg.replay = ReplayMode::none;
        const auto without = run_scenario(sc, cfg).reports.back();
        const double mf_with = with.m_f.value_or(0.0), mf_without = without.m_f.value_or(0.0);
        ok += mf_without > mf_with ? 1 : 0;
        detail += " [seed " + std::to_string(seed) + ": with " + percent(mf_with) + " without " + percent(mf_without) + "]";
    }
    return ok;
}

void replay_ablation() {
    std::string detail;
    const int ok = replay_wins(8.0, detail);
    verdict(ok >= 4, "replay-ablation",
            std::to_string(ok) + "/5 seeds with higher M_f without replay at separation 8;" + detail);
    std::string info;
    const int ok10 = replay_wins(10.0, info);
    std::cout << "INFO replay-ablation at separation 10: " << ok10 << "/5 seeds with higher M_f without replay;" << info
              << std::endl;
}

void two_step_mode() {
    const auto res = run_pipeline(packaged("synthetic_two_step.json", 0));
    const auto& r = res.reports;
    bool ok = r.size() == 3;
    std::string detail = std::to_string(r.size()) + " reports";
    if (ok) {
        ok = r[1].m_new && r[2].m_new && r[2].m_d && *r[2].m_d == (*r[1].m_new + *r[2].m_new) / 2.0;
        detail += "; M_n " + percent(r[1].m_new) + ", " + percent(r[2].m_new) + ", M_d " + percent(r[2].m_d);
    }
    verdict(ok, "two-step-mode", detail);
}

void determinism() {
    // both runs write to the same path so the echoed config matches too
    TempDir dir("acceptance_det");
    const auto out = dir.path() / "run";
    const std::string cmd = std::string(CGCD_CLI) + " --config " + CGCD_CONFIG_DIR + "/synthetic.json --out " +
                            out.string() + " run > /dev/null 2>&1";
    for (const char* keep : {"first", "second"}) {
        if (std::system(cmd.c_str()) != 0) {
            verdict(false, "determinism", std::string("run failed: ") + cmd);
            return;
        }
        std::filesystem::rename(out, dir.path() / keep);
    }
    std::size_t compared = 0, identical = 0;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dir.path() / "first")) {
        if (!entry.is_regular_file()) continue;
        const auto rel = std::filesystem::relative(entry.path(), dir.path() / "first");
        ++compared;
        identical += slurp(entry.path()) == slurp(dir.path() / "second" / rel) ? 1 : 0;
    }
    verdict(compared > 0 && identical == compared, "determinism",
            std::to_string(identical) + "/" + std::to_string(compared) +
                " output files (reports, tables, checkpoints, logs) byte-identical across two runs");
}

}  // namespace

int main() {
    criterion("gradient-correctness", gradient_correctness);
    criterion("assignment-optimality", assignment_optimality);
    criterion("em-soundness", em_soundness);
    criterion("clustering-recovery", clustering_recovery);
    criterion("metric-arithmetic", metric_arithmetic);
    criterion("end-to-end-synthetic", end_to_end);
    criterion("fine-split-ablation", fine_split_ablation);
    criterion("replay-ablation", replay_ablation);
    criterion("two-step-mode", two_step_mode);
    criterion("determinism", determinism);
    return failures == 0 ? 0 : 1;
}
