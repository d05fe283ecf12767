#include <gtest/gtest.h>

#include <sstream>

#include "cgcd/evaluation.hpp"
#include "test_support.hpp"

using namespace cgcd;
using namespace cgcd::testing;

namespace {

// Old class 0 and new class 1, `n` samples each; `old_hits` / `new_hits` are
// predicted correctly, misses go to junk clusters smaller than either hit count.
void recorded_accuracies(int n, int old_hits, int new_hits, std::vector<int>& pred, std::vector<int>& truth) {
    const int group = std::max(1, std::min(old_hits, new_hits) / 4);
    int misses = 0;
    for (int i = 0; i < n; ++i) {
        truth.push_back(0);
        pred.push_back(i < old_hits ? 0 : 1000 + misses++ / group);
    }
    misses = (misses + group - 1) / group * group;  // new-class misses start a fresh cluster
    for (int i = 0; i < n; ++i) {
        truth.push_back(1);
        pred.push_back(i < new_hits ? 1 : 1000 + misses++ / group);
    }
}

}  // namespace

TEST(Hungarian, IdentityFavoringCost) {
    Matrix c(4, 4, 1.0);
    for (std::size_t i = 0; i < 4; ++i) c(i, i) = 0.0;
    const auto a = hungarian(c);
    EXPECT_EQ(a.row_to_col, (std::vector<int>{0, 1, 2, 3}));
    EXPECT_EQ(a.cost, 0.0);
}

TEST(Hungarian, ThreeByThreeExample) {
    const Matrix c(3, 3, std::vector<double>{4, 1, 3, 2, 0, 5, 3, 2, 2});
    const auto a = hungarian(c);
    EXPECT_EQ(a.row_to_col, (std::vector<int>{1, 0, 2}));
    EXPECT_EQ(a.cost, 5.0);
    EXPECT_EQ(brute_force_assignment_cost(c), 5.0);
}

TEST(Hungarian, MatchesBruteForceOnRandomMatrices) {
    auto rng = make_rng(1, "hungarian");
    std::uniform_int_distribution<int> size(1, 7), value(0, 20);
    for (int t = 0; t < 50; ++t) {
        const auto n = static_cast<std::size_t>(size(rng));
        Matrix c(n, n);
        for (double& v : c.data()) v = value(rng);
        const auto a = hungarian(c);
        double total = 0.0;
        std::set<int> cols;
        for (std::size_t i = 0; i < n; ++i) {
            total += c(i, static_cast<std::size_t>(a.row_to_col[i]));
            cols.insert(a.row_to_col[i]);
        }
        EXPECT_EQ(cols.size(), n);
        EXPECT_EQ(total, a.cost);
        EXPECT_EQ(a.cost, brute_force_assignment_cost(c)) << "matrix " << t;
    }
}

TEST(Hungarian, RectangularPadsWithDummies) {
    const Matrix c(3, 2, std::vector<double>{5, 1, 1, 5, 0, 0});
    const auto a = hungarian(c);
    EXPECT_EQ(a.cost, 1.0);
    EXPECT_EQ(std::count(a.row_to_col.begin(), a.row_to_col.end(), -1), 1);
}

TEST(ClusterAccuracy, IdentityAndRelabeling) {
    const std::vector<int> truth{0, 0, 1, 1, 2, 2};
    EXPECT_EQ(cluster_accuracy(truth, truth).accuracy, 1.0);
    const std::vector<int> relabeled{7, 7, 3, 3, 5, 5};
    const auto r = cluster_accuracy(relabeled, truth);
    EXPECT_EQ(r.accuracy, 1.0);
    EXPECT_EQ(r.assignment.at(7), 0);
    EXPECT_EQ(r.assignment.at(3), 1);
}

TEST(ClusterAccuracy, HandEnumeratedExample) {
    const std::vector<int> pred{0, 0, 1, 1, 2, 2};
    const std::vector<int> truth{1, 1, 1, 0, 0, 2};
    EXPECT_DOUBLE_EQ(cluster_accuracy(pred, truth).accuracy, 4.0 / 6.0);
}

TEST(ClusterAccuracy, LengthMismatchThrows) {
    EXPECT_THROW(cluster_accuracy(std::vector<int>{1, 2}, std::vector<int>{1}), DataError);
    EXPECT_THROW(cluster_accuracy(std::vector<int>{}, std::vector<int>{}), DataError);
}

TEST(Forgetting, RecordedAccuracies) {
    const std::vector<double> later{0.5880};
    EXPECT_NEAR(max_forgetting(0.7427, later), 0.1547, 1e-12);
    EXPECT_EQ(percent(max_forgetting(0.7427, later)), "15.47");
    const std::vector<double> same{0.7, 0.7};
    EXPECT_EQ(max_forgetting(0.7, same), 0.0);
    const std::vector<double> two{0.6, 0.5, 0.65};
    EXPECT_DOUBLE_EQ(max_forgetting(0.7, two), 0.7 - 0.5);
}

TEST(Discovery, MeanOfNewAccuracies) {
    const std::vector<double> one{0.4090};
    EXPECT_EQ(mean_discovery(one), 0.4090);
    const std::vector<double> two{0.5, 0.8};
    EXPECT_DOUBLE_EQ(mean_discovery(two), 0.65);
    EXPECT_THROW(mean_discovery(std::vector<double>{}), DataError);
}

TEST(StepMetrics, FoldsRecordedAccuracies) {
    StepReport step0;
    step0.m_old = 0.7427;
    std::vector<int> pred, truth;
    recorded_accuracies(10000, 5880, 4090, pred, truth);
    const std::vector<StepReport> prior{step0};
    const auto r = step_metrics(pred, truth, {0}, prior);
    EXPECT_EQ(r.step_index, 1);
    EXPECT_EQ(*r.m_old, 0.5880);
    EXPECT_EQ(*r.m_new, 0.4090);
    EXPECT_NEAR(*r.m_f, 0.1547, 1e-12);
    EXPECT_EQ(*r.m_d, 0.4090);
    EXPECT_DOUBLE_EQ(r.m_all, (5880.0 + 4090.0) / 20000.0);
}

TEST(StepMetrics, StepZeroHasNoContinualMetrics) {
    const std::vector<int> y{0, 1, 1};
    const auto r = step_metrics(y, y, {0, 1}, {});
    EXPECT_EQ(r.step_index, 0);
    EXPECT_FALSE(r.m_f.has_value());
    EXPECT_FALSE(r.m_d.has_value());
    EXPECT_FALSE(r.m_new.has_value());
    EXPECT_EQ(*r.m_old, 1.0);
}

TEST(StepMetrics, TwoIncrementalStepsFoldDiscovery) {
    StepReport s0;
    s0.m_old = 0.9;
    std::vector<int> p1, t1, p2, t2;
    recorded_accuracies(100, 80, 50, p1, t1);
    recorded_accuracies(100, 70, 90, p2, t2);
    const std::vector<StepReport> prior1{s0};
    const auto r1 = step_metrics(p1, t1, {0}, prior1);
    const std::vector<StepReport> prior2{s0, r1};
    const auto r2 = step_metrics(p2, t2, {0}, prior2);
    EXPECT_EQ(r2.step_index, 2);
    EXPECT_DOUBLE_EQ(*r2.m_d, (0.5 + 0.9) / 2.0);
    EXPECT_DOUBLE_EQ(*r2.m_f, 0.9 - 0.7);
}

TEST(StepMetrics, NewClassesRestrictTheNewSubset) {
    // class 2 is neither old nor new at this step: it counts toward m_all only
    const std::vector<int> truth{0, 1, 2};
    const std::vector<int> pred{0, 1, 2};
    const auto r = step_metrics(pred, truth, {0}, std::vector<StepReport>{StepReport{}}, std::set<int>{1});
    EXPECT_EQ(*r.m_new, 1.0);
}

TEST(Report, JsonRoundTrip) {
    StepReport r;
    r.step_index = 1;
    r.m_all = 0.5;
    r.m_old = 0.25;
    r.m_f = 0.125;
    r.novel_class_count_estimate = 3;
    r.assignment = {{0, 4}, {7, 1}};
    EXPECT_EQ(step_report_from_json(to_json(r)), r);
    EXPECT_TRUE(to_json(r).at("m_new").is_null());
}

TEST(Report, TablesFormatPercentages) {
    StepReport a;
    a.m_all = 1.0;
    a.m_old = 1.0;
    StepReport b;
    b.step_index = 1;
    b.m_all = 0.5;
    b.m_old = 0.25;
    b.m_new = 0.75;
    b.m_f = 0.75;
    b.m_d = 0.75;
    b.novel_class_count_estimate = 2;
    const std::vector<StepReport> reports{a, b};
    std::ostringstream csv, md;
    write_table_csv(csv, reports);
    write_table_markdown(md, reports);
    EXPECT_EQ(csv.str(), "step,M_all,M_o,M_f,M_d,M_n,novel_classes\n0,100.00,100.00,-,-,-,0\n1,50.00,25.00,75.00,75.00,75.00,2\n");
    EXPECT_NE(md.str().find("| 1 | 50.00 | 25.00 | 75.00 | 75.00 | 75.00 | 2 |"), std::string::npos);
}
