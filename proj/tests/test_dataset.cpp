#include <gtest/gtest.h>

#include <map>
#include <set>

#include "cgcd/dataset.hpp"

using namespace cgcd;

namespace {

ScenarioConfig one_step(double old_fraction, double carryover = 0.2) {
    ScenarioConfig c;
    c.old_class_fraction = old_fraction;
    c.step_class_fractions = {1.0 - old_fraction};
    c.old_sample_carryover = carryover;
    return c;
}

// Label each point with its nearest generated mean.
double nearest_mean_accuracy(const EmbeddingDataset& ds, const Matrix& means) {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        std::size_t best = 0;
        double best_d = 1e300;
        for (std::size_t c = 0; c < means.rows(); ++c) {
            double d = 0.0;
            for (std::size_t k = 0; k < ds.dim(); ++k) {
                const double diff = ds.features(i, k) - means(c, k);
                d += diff * diff;
            }
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        hit += static_cast<int>(best) == (*ds.labels)[i] ? 1 : 0;
    }
    return static_cast<double>(hit) / static_cast<double>(ds.size());
}

}  // namespace

TEST(ClassCounts, OldAndNovelSplits) {
    EXPECT_EQ(class_counts(200, one_step(0.8)), (std::vector<std::size_t>{160, 40}));
    EXPECT_EQ(class_counts(100, one_step(0.8)), (std::vector<std::size_t>{80, 20}));
    EXPECT_EQ(class_counts(120, one_step(0.8)), (std::vector<std::size_t>{96, 24}));
    EXPECT_EQ(class_counts(67, one_step(0.8)), (std::vector<std::size_t>{53, 14}));
}

TEST(ClassCounts, TwoStepEightOneOne) {
    ScenarioConfig c;
    c.old_class_fraction = 0.8;
    c.step_class_fractions = {0.1, 0.1};
    EXPECT_EQ(class_counts(20, c), (std::vector<std::size_t>{16, 2, 2}));
}

TEST(ClassCounts, EmptyStepRejected) {
    ScenarioConfig c;
    c.old_class_fraction = 0.9;
    c.step_class_fractions = {0.05, 0.05};
    EXPECT_THROW(class_counts(5, c), ConfigError);
}

TEST(ScenarioConfig, FractionsMustSumToOne) {
    ScenarioConfig c;
    c.old_class_fraction = 0.8;
    c.step_class_fractions = {0.3};
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Scenario, CarryoverStepSize) {
    // 10 classes x 30 samples, no holdout: old classes leave 6 samples each
    // for step 1, novel classes bring all 30.
    auto ds = generate_synthetic(10, 30, 4, 10.0, 1);
    auto cfg = one_step(0.8, 0.2);
    cfg.validation_fraction = 0.0;
    const auto sc = build_scenario(ds, cfg);
    ASSERT_EQ(sc.steps.size(), 2u);
    const auto& s1 = sc.steps[1];
    EXPECT_EQ(s1.train.size(), 108u);

    std::map<int, int> per_class;
    for (int y : s1.holdout_truth) ++per_class[y];
    const std::set<int> novel(s1.new_classes.begin(), s1.new_classes.end());
    for (const auto& [cls, n] : per_class) EXPECT_EQ(n, novel.count(cls) ? 30 : 6) << "class " << cls;
    EXPECT_EQ(sc.steps[0].train.size(), 8u * 24u);
}

TEST(Scenario, ZeroCarryoverLeavesOnlyNovelSamples) {
    auto ds = generate_synthetic(10, 20, 4, 10.0, 2);
    const auto sc = build_scenario(ds, one_step(0.8, 0.0));
    const std::set<int> novel(sc.steps[1].new_classes.begin(), sc.steps[1].new_classes.end());
    for (int y : sc.steps[1].holdout_truth) EXPECT_TRUE(novel.count(y));
}

TEST(Scenario, UnlabeledStepsHideLabels) {
    auto ds = generate_synthetic(10, 20, 4, 10.0, 3);
    const auto sc = build_scenario(ds, one_step(0.8));
    EXPECT_TRUE(sc.steps[0].train.has_labels());
    EXPECT_FALSE(sc.steps[1].train.has_labels());
    EXPECT_EQ(sc.steps[1].holdout_truth.size(), sc.steps[1].train.size());
}

TEST(Scenario, PartitionIsDisjointAndCoversPool) {
    auto ds = generate_synthetic(10, 25, 4, 10.0, 4);
    const auto sc = build_scenario(ds, one_step(0.8));
    std::set<std::int64_t> seen;
    std::size_t total = 0;
    for (const auto& st : sc.steps) {
        total += st.train.size();
        seen.insert(st.train.ids.begin(), st.train.ids.end());
    }
    for (auto id : sc.steps.back().validation.ids) {
        EXPECT_FALSE(seen.count(id)) << "validation sample " << id << " also used for training";
        seen.insert(id);
    }
    EXPECT_EQ(seen.size(), ds.size());
    EXPECT_EQ(seen.size(), total + sc.steps.back().validation.size());
}

TEST(Scenario, ValidationGrowsWithKnownClasses) {
    auto ds = generate_synthetic(10, 20, 4, 10.0, 5);
    const auto sc = build_scenario(ds, one_step(0.8));
    const std::set<int> old(sc.step_classes[0].begin(), sc.step_classes[0].end());
    for (int y : *sc.steps[0].validation.labels) EXPECT_TRUE(old.count(y));
    std::set<int> all(sc.steps[1].validation.labels->begin(), sc.steps[1].validation.labels->end());
    EXPECT_EQ(all.size(), 10u);
}

TEST(Scenario, TooFewSamplesForCarryover) {
    auto ds = generate_synthetic(10, 2, 4, 10.0, 6);
    auto cfg = one_step(0.8, 0.2);
    cfg.validation_fraction = 0.0;
    EXPECT_THROW(build_scenario(ds, cfg), DataError);
}

TEST(Scenario, RequiresLabels) {
    auto ds = generate_synthetic(4, 10, 4, 10.0, 7);
    ds.labels.reset();
    EXPECT_THROW(build_scenario(ds, one_step(0.5)), DataError);
}

TEST(Synthetic, MeansAreAtLeastSeparationApart) {
    for (int n : {3, 13, 40}) {
        const Matrix m = synthetic_means(n, 32, 10.0, 11);
        double closest = 1e300;
        for (std::size_t a = 0; a < m.rows(); ++a) {
            for (std::size_t b = a + 1; b < m.rows(); ++b) {
                double d = 0.0;
                for (std::size_t k = 0; k < m.cols(); ++k) d += (m(a, k) - m(b, k)) * (m(a, k) - m(b, k));
                closest = std::min(closest, std::sqrt(d));
            }
        }
        EXPECT_GE(closest, 10.0) << n << " classes";
        EXPECT_NEAR(closest, 10.0, 1e-4) << n << " classes";
    }
}

TEST(Synthetic, FixedSeedIsBitIdentical) {
    const auto a = generate_synthetic(3, 50, 8, 12.0, 7);
    const auto b = generate_synthetic(3, 50, 8, 12.0, 7);
    EXPECT_EQ(a.features, b.features);
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_NE(a.features, generate_synthetic(3, 50, 8, 12.0, 8).features);
}

TEST(Synthetic, NearestMeanAccuracy) {
    const auto ds = generate_synthetic(5, 40, 16, 10.0, 0);
    EXPECT_GE(nearest_mean_accuracy(ds, synthetic_means(5, 16, 10.0, 0)), 0.99);
}

TEST(Synthetic, FarApartMeansAreRecoveredExactly) {
    const auto ds = generate_synthetic(4, 30, 6, 1e5, 9);
    EXPECT_EQ(nearest_mean_accuracy(ds, synthetic_means(4, 6, 1e5, 9)), 1.0);
}

TEST(Synthetic, RejectsBadParameters) {
    EXPECT_THROW(generate_synthetic(1, 10, 4, 10.0, 0), ConfigError);
    EXPECT_THROW(generate_synthetic(3, 1, 4, 10.0, 0), ConfigError);
    EXPECT_THROW(generate_synthetic(3, 10, 4, -1.0, 0), ConfigError);
}

TEST(Dataset, ValidateCatchesDuplicatesAndNegatives) {
    auto ds = generate_synthetic(2, 3, 2, 5.0, 0);
    ds.validate();
    auto dup = ds;
    dup.ids[1] = dup.ids[0];
    EXPECT_THROW(dup.validate(), DataError);
    auto neg = ds;
    (*neg.labels)[0] = -1;
    EXPECT_THROW(neg.validate(), DataError);
}
