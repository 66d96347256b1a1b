#include <gtest/gtest.h>

#include <filesystem>

#include "overflow/errors.hpp"
#include "overflow/io.hpp"
#include "overflow/presets.hpp"
#include "support.hpp"

using namespace overflow;
using testing_support::three_pool;

namespace {

std::filesystem::path scratch() {
    auto dir = std::filesystem::temp_directory_path() / "overflow-io-test";
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST(SystemJson, RoundTripsEveryPreset) {
    for (const auto& name : preset_names()) {
        auto cfg = make_preset(name).system;
        const std::string text = system_to_json(cfg);
        auto back = parse_system(text);
        EXPECT_EQ(system_to_json(back), text) << name;
        EXPECT_EQ(back.arrivals, cfg.arrivals);
        EXPECT_EQ(back.discharge_cdf, cfg.discharge_cdf);
    }
}

TEST(SystemJson, CheckedInPresetsMatch) {
    const std::filesystem::path dir = OVERFLOW_PRESET_DIR;
    for (const auto& name : preset_names()) {
        const auto file = dir / (name + ".json");
        ASSERT_TRUE(std::filesystem::exists(file)) << file;
        EXPECT_EQ(read_text(file), system_to_json(make_preset(name).system)) << name;
    }
}

TEST(SystemJson, Errors) {
    EXPECT_THROW(parse_system("{not json"), ConfigError);
    EXPECT_THROW(parse_system(R"({"pools": 2})"), ConfigError);
    EXPECT_THROW(parse_system(R"({"schema": 99, "pools": 2})"), ConfigError);
    std::string text = system_to_json(three_pool(2));
    auto cut = text.find("\"servers\"");
    ASSERT_NE(cut, std::string::npos);
    std::string missing = text;
    missing.replace(cut, 9, "\"srvrs\"");
    try {
        parse_system(missing);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("servers"), std::string::npos);
    }
    EXPECT_THROW(load_system(scratch() / "does-not-exist.json"), std::exception);
}

TEST(WeightsJson, RoundTripIsExact) {
    auto cfg = three_pool(4);
    NetworkParams net(NetStructure::FullySeparate, 3, 4, {5, 3});
    Rng rng(8);
    std::normal_distribution<double> normal;
    for (double& v : net.values) v = normal(rng) * 1e-3 + 1.0 / 3.0;
    auto path = scratch() / "w.json";
    save_weights(net, path);
    auto back = load_weights(path);
    EXPECT_EQ(back.structure(), net.structure());
    EXPECT_EQ(back.hidden(), net.hidden());
    EXPECT_EQ(back.values, net.values);
    EXPECT_NO_THROW(check_weights(back, cfg));
    EXPECT_THROW(check_weights(back, make_preset("twopool-8epoch").system), ConfigError);
}

TEST(WeightsJson, WrongLengthIsRejected) {
    NetworkParams net(NetStructure::PartiallyShared, 2, 1, {3});
    std::string text = weights_to_json(net);
    auto pos = text.find("\"values\":[");
    ASSERT_NE(pos, std::string::npos);
    text.insert(pos + 10, "1.0,");
    EXPECT_THROW(parse_weights(text), ConfigError);
}

TEST(PolicyJson, RoundTrips) {
    auto cfg = make_preset("twopool-8epoch").system;
    for (PolicySpec p : {PolicySpec{NoOverflow{}}, PolicySpec{CompleteOverflow{}}, PolicySpec{MidnightOverflow{}},
                         PolicySpec{EmpiricalOverflow{{0, 7}}}, PolicySpec{RandomizedOverflow{0.25}}}) {
        auto back = parse_policy(policy_to_json(p), cfg);
        EXPECT_EQ(back.index(), p.index());
        EXPECT_EQ(policy_to_json(back), policy_to_json(p));
    }
    NetworkParams net(NetStructure::PartiallyShared, 2, 8, {4});
    auto dir = scratch();
    save_weights(net, dir / "net.json");
    auto pol = parse_policy(R"({"type": "network", "weights": "net.json"})", cfg, dir);
    ASSERT_TRUE(std::holds_alternative<NetworkPolicy>(pol));
    EXPECT_EQ(std::get<NetworkPolicy>(pol).params->values, net.values);
}

TEST(PolicyJson, Errors) {
    auto cfg = make_preset("twopool-8epoch").system;
    EXPECT_THROW(parse_policy(R"({"type": "bogus"})", cfg), ConfigError);
    EXPECT_THROW(parse_policy(R"({"type": "randomized", "probability": 1.5})", cfg), ConfigError);
    EXPECT_THROW(parse_policy(R"({"type": "empirical", "night_epochs": [8]})", cfg), ConfigError);
    EXPECT_THROW(parse_policy(R"({"type": "network", "weights": "/nonexistent/w.json"})", cfg), std::exception);
}

TEST(PolicyNames, ShortForms) {
    auto cfg = make_preset("twopool-8epoch").system;
    EXPECT_TRUE(std::holds_alternative<NoOverflow>(policy_from_name("no-overflow", cfg)));
    EXPECT_TRUE(std::holds_alternative<CompleteOverflow>(policy_from_name("complete", cfg)));
    auto emp = policy_from_name("empirical", cfg);
    EXPECT_EQ(std::get<EmpiricalOverflow>(emp).night_epochs, (std::vector<int>{0, 1, 7}));
    EXPECT_EQ(std::get<RandomizedOverflow>(policy_from_name("randomized:0.3", cfg)).probability, 0.3);
    EXPECT_THROW(policy_from_name("randomized:x", cfg), ConfigError);
    EXPECT_THROW(policy_from_name("no-such-policy", cfg), ConfigError);
}

TEST(TrainConfigJson, OverridesKeepBase) {
    TrainConfig base;
    base.iterations = 7;
    base.seed = 99;
    auto c = parse_train_config(R"({"actors": 3, "clip": {"later": 0.1}, "mode": "sequential"})", base);
    EXPECT_EQ(c.iterations, 7);
    EXPECT_EQ(c.seed, 99u);
    EXPECT_EQ(c.actors, 3);
    EXPECT_EQ(c.clip.later, 0.1);
    EXPECT_EQ(c.clip.initial, 0.5);
    EXPECT_EQ(c.mode, DecisionMode::Sequential);
    auto again = parse_train_config(train_config_to_json(c));
    EXPECT_EQ(train_config_to_json(again), train_config_to_json(c));
    EXPECT_THROW(parse_train_config(R"({"actors": "three"})"), ConfigError);
    EXPECT_THROW(parse_train_config(R"({"mode": "parallel"})"), ConfigError);
}

TEST(Checkpoint, RoundTripIsExact) {
    NetworkParams net(NetStructure::PartiallyShared, 2, 8, {4});
    Rng rng(2);
    net.initialize(rng);
    TrainConfig cfg;
    cfg.seed = 12345;
    auto st = initial_train_state(net, cfg);
    st.iteration = 3;
    st.initial_eval = 1.0 / 7.0;
    st.last_train_cost = 2.0 / 3.0;
    st.optimizer.m.assign(net.size(), 1.0 / 9.0);
    st.optimizer.step = 17;
    IterationReport rep;
    rep.iteration = 3;
    rep.eval_cost = 0.1 + 0.2;
    st.reports.push_back(rep);
    st.snapshots.push_back({2, net.values});
    auto path = scratch() / "ckpt.json";
    save_checkpoint(st, cfg, path);
    TrainConfig loaded_cfg;
    auto back = load_checkpoint(path, &loaded_cfg);
    EXPECT_EQ(back.params.values, st.params.values);
    EXPECT_EQ(back.optimizer.m, st.optimizer.m);
    EXPECT_EQ(back.optimizer.step, 17);
    EXPECT_EQ(back.iteration, 3);
    EXPECT_EQ(back.initial_eval, st.initial_eval);
    EXPECT_EQ(back.last_train_cost, st.last_train_cost);
    ASSERT_EQ(back.reports.size(), 1u);
    EXPECT_EQ(back.reports[0].eval_cost, rep.eval_cost);
    ASSERT_EQ(back.snapshots.size(), 1u);
    EXPECT_EQ(back.snapshots[0].second, net.values);
    EXPECT_EQ(loaded_cfg.seed, 12345u);
}

TEST(Reports, JsonLineHasFields) {
    IterationReport rep;
    rep.iteration = 4;
    rep.eval_cost = 12.5;
    const std::string line = report_to_json_line(rep);
    EXPECT_EQ(line.find('\n'), std::string::npos);
    EXPECT_NE(line.find("\"eval_cost\":12.5"), std::string::npos);
    auto path = scratch() / "reports.csv";
    write_reports_csv({rep}, path);
    auto csv = read_text(path);
    EXPECT_EQ(csv.rfind("iteration,train_cost,eval_cost", 0), 0u);
}
