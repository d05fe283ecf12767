#include <gtest/gtest.h>

#include <fstream>

#include "cgcd/config.hpp"
#include "test_support.hpp"

using namespace cgcd;
using cgcd::testing::TempDir;

TEST(Config, EmptyObjectKeepsDefaults) {
    const auto c = run_config_from_json(nlohmann::json::object());
    EXPECT_EQ(c.pa.alpha, 32.0);
    EXPECT_EQ(c.pa.delta, 0.1);
    EXPECT_EQ(c.pa.epochs, 60);
    EXPECT_EQ(c.pa.batch_size, 120u);
    EXPECT_EQ(c.pa.d_emb, 128u);
    EXPECT_EQ(c.ap.damping, 0.9);
    EXPECT_FALSE(c.ap.preference.has_value());
    EXPECT_EQ(c.split.epochs, 3);
    EXPECT_EQ(c.split.epsilon, 0.0);
    EXPECT_EQ(c.replay, ReplayMode::proxy);
    EXPECT_TRUE(c.distill);
    EXPECT_TRUE(c.fine_split);
}

TEST(Config, JsonRoundTrip) {
    RunConfig c;
    c.data.synthetic = SyntheticSpec{};
    c.data.synthetic->validation_per_class = 12;
    c.pa.delta = 0.2;
    c.ap.preference = -16.0;
    c.split.lr = 0.01;
    c.fine_split = false;
    c.replay = ReplayMode::none;
    c.scenario.step_class_fractions = {0.1, 0.1};
    c.seed = 42;
    const auto back = run_config_from_json(to_json(c));
    EXPECT_EQ(to_json(back), to_json(c));
    EXPECT_EQ(back.data.synthetic->validation_per_class, 12);
    EXPECT_EQ(*back.ap.preference, -16.0);
    EXPECT_EQ(back.replay, ReplayMode::none);
}

TEST(Config, MedianPreferenceString) {
    const auto c = run_config_from_json({{"affinity_propagation", {{"preference", "median"}}}});
    EXPECT_FALSE(c.ap.preference.has_value());
    EXPECT_THROW(run_config_from_json({{"affinity_propagation", {{"preference", "mean"}}}}), ConfigError);
}

TEST(Config, WrongTypesAreConfigErrors) {
    EXPECT_THROW(run_config_from_json({{"proxy_anchor", {{"alpha", "big"}}}}), ConfigError);
    EXPECT_THROW(run_config_from_json({{"replay", "sometimes"}}), ConfigError);
}

TEST(Config, ValidationRejectsBadValues) {
    RunConfig c;
    EXPECT_THROW(c.validate(), ConfigError);  // no data source
    c.data.synthetic = SyntheticSpec{};
    c.validate();
    auto bad = c;
    bad.pa.alpha = 0.0;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = c;
    bad.data.synthetic->n_classes = 1;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = c;
    bad.split.clean_threshold = 0.4;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = c;
    bad.data.synthetic.reset();
    bad.data.emb1 = "missing.emb1";
    EXPECT_THROW(bad.validate("/nonexistent"), ConfigError);
}

TEST(Config, ReadFromFile) {
    TempDir dir("config");
    {
        std::ofstream out(dir.path() / "c.json");
        out << R"({"seed": 9, "proxy_anchor": {"epochs": 4}})";
    }
    const auto c = read_run_config(dir.path() / "c.json");
    EXPECT_EQ(c.seed, 9u);
    EXPECT_EQ(c.pa.epochs, 4);
    {
        std::ofstream out(dir.path() / "bad.json");
        out << "{ not json";
    }
    EXPECT_THROW(read_run_config(dir.path() / "bad.json"), ConfigError);
    EXPECT_THROW(read_run_config(dir.path() / "absent.json"), ConfigError);
}

TEST(Config, PackagedConfigsParseAndValidate) {
    for (const char* name : {"synthetic.json", "synthetic_two_step.json"}) {
        const auto c = read_run_config(std::filesystem::path(CGCD_CONFIG_DIR) / name);
        EXPECT_NO_THROW(c.validate()) << name;
    }
}
