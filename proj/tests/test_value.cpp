#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "overflow/errors.hpp"
#include "overflow/oracle.hpp"
#include "overflow/pool_model.hpp"
#include "overflow/trainer.hpp"
#include "overflow/value_model.hpp"
#include "support.hpp"

using namespace overflow;
using testing_support::affine_fit;
using testing_support::random_state;
using testing_support::three_pool;
using testing_support::two_pool;

namespace {

std::vector<PoolModel> pool_models(const SystemConfig& cfg, const KbarEstimate& kbar) {
    std::vector<PoolModel> out;
    for (int j = 0; j < cfg.num_pools; ++j) out.push_back(build_pool_model(cfg, j, kbar));
    return out;
}

KbarEstimate randomized_kbar(const SystemConfig& cfg, double p, int days, std::uint64_t seed) {
    std::vector<Trajectory> data{rollout(RandomizedOverflow{p}, cfg, days, seed, 20, DecisionMode::Batched, false)};
    return estimate_kbar(data, cfg);
}

}  // namespace

TEST(PoolModel, PoissonResidualsVanish) {
    for (auto cfg : {three_pool(4), make_preset("twopool-8epoch").system, three_pool(1)}) {
        auto kbar = randomized_kbar(cfg, 0.5, 300, 3);
        for (int j = 0; j < cfg.num_pools; ++j) {
            auto model = build_pool_model(cfg, j, kbar);
            auto res = pool_model_residuals(cfg, kbar, model);
            double worst = 0.0;
            for (double r : res) worst = std::max(worst, std::abs(r));
            EXPECT_LE(worst, 1e-8) << cfg.name << " pool " << j;
            EXPECT_LE(model.residual, 1e-8);
        }
    }
}

TEST(PoolModel, PoolWithoutArrivalsCostsNothing) {
    auto cfg = two_pool(4);
    cfg.arrivals[1].assign(4, 0.0);
    auto kbar = KbarEstimate::wait_only(cfg, {});
    auto model = build_pool_model(cfg, 1, kbar);
    EXPECT_NEAR(model.gamma, 0.0, 1e-9);
    EXPECT_NEAR(model.value(0, 0, 0), 0.0, 1e-9);
    // Queued customers cost until they are served, so values grow with the queue.
    EXPECT_GT(model.value(cfg.servers[1] + 5, 0, 0), model.value(cfg.servers[1], 0, 0));
    EXPECT_NEAR(model.value(cfg.servers[1] - 3, 0, 0), 0.0, 1e-9);
}

TEST(PoolModel, TruncationBelowCapacityIsRejected) {
    auto cfg = two_pool(1);
    auto kbar = KbarEstimate::wait_only(cfg, {{10, 0}, {10, 0}});
    EXPECT_THROW(build_pool_model(cfg, 0, kbar), ConfigError);
}

// With everyone waiting the pools decouple, so the summed pool values are the
// exact relative values of the no-overflow system up to a constant.
TEST(PoolModel, WaitOnlyMatchesExactNoOverflowEvaluation) {
    auto cfg = make_preset("twopool-midnight").system;
    auto kbar = KbarEstimate::wait_only(cfg, {{100, 0}, {100, 0}});
    auto pools = pool_models(cfg, kbar);
    TruncatedMDP mdp(cfg, 100);
    auto exact = exact_policy_eval(PolicySpec{NoOverflow{}}, mdp);
    EXPECT_NEAR(pools[0].gamma + pools[1].gamma, exact.gamma, 1e-4 * exact.gamma);

    auto traj = rollout(NoOverflow{}, cfg, 5000, 8, 50, DecisionMode::Batched, false);
    std::map<std::vector<int>, int> visits;
    for (const auto& st : traj.steps) ++visits[st.state.x];
    std::vector<std::pair<int, std::vector<int>>> ranked;
    for (const auto& [x, n] : visits) ranked.push_back({n, x});
    std::sort(ranked.rbegin(), ranked.rend());
    ranked.resize(std::max<std::size_t>(1, ranked.size() / 4));
    std::vector<double> vd, ve;
    for (const auto& [n, x] : ranked) {
        vd.push_back(pools[0].value(x[0], 0, 0) + pools[1].value(x[1], 0, 0));
        ve.push_back(exact.v[mdp.index(x)]);
    }
    auto fit = affine_fit(vd, ve);
    EXPECT_GE(fit.r2, 0.999);
    EXPECT_NEAR(fit.slope, 1.0, 1e-3);
}

TEST(Kbar, WaitOnlyRates) {
    auto cfg = three_pool(2);
    auto kbar = KbarEstimate::wait_only(cfg, {});
    auto r = kbar.rates(1, 9, 2, 1);
    EXPECT_EQ(r.out, (std::vector<double>{0.0, 1.0, 0.0}));
    EXPECT_EQ(r.in, (std::vector<double>{0.0, 0.0, 0.0}));
}

TEST(Kbar, BucketAveragesAndFallbacks) {
    auto cfg = three_pool(1);
    KbarEstimate kbar(cfg, {});
    State s = State::empty(3);
    s.x = {8, 2, 3};  // class 0 queued
    AtomicDistribution k1 = AtomicDistribution::identity(3), k2 = AtomicDistribution::identity(3);
    k1(0, 0) = 0.5;
    k1(0, 1) = 0.5;
    k2(0, 0) = 0.7;
    k2(0, 2) = 0.3;
    kbar.add(s, k1, cfg);
    kbar.add(s, k2, cfg);
    EXPECT_EQ(kbar.visits(0, 8, 0, 0), 2.0);

    auto out = kbar.rates(0, 8, 0, 0);
    EXPECT_NEAR(out.out[1], 0.25, 1e-15);
    EXPECT_NEAR(out.out[2], 0.15, 1e-15);
    EXPECT_NEAR(out.out[0], 0.6, 1e-15);

    auto in1 = kbar.rates(1, 2, 0, 0);
    EXPECT_NEAR(in1.in[0], 0.25, 1e-15);
    EXPECT_NEAR(in1.out[1], 1.0, 1e-15);

    // Unseen bucket: falls back to the epoch marginal.
    auto fallback = kbar.rates(0, 12, 0, 0);
    EXPECT_NEAR(fallback.out[1], 0.25, 1e-15);

    // A pool-0 bucket that never had a queue borrows the marginal outflow only.
    State t = State::empty(3);
    t.x = {3, 2, 3};
    kbar.add(t, AtomicDistribution::identity(3), cfg);
    auto quiet = kbar.rates(0, 3, 0, 0);
    EXPECT_NEAR(quiet.out[1], 0.25, 1e-15);
    EXPECT_EQ(quiet.in[1], 0.0);
}

TEST(Kbar, RowsAreDistributions) {
    auto cfg = three_pool(4);
    auto kbar = randomized_kbar(cfg, 0.7, 200, 9);
    Rng rng(4);
    for (int t = 0; t < 500; ++t) {
        State s = random_state(cfg, rng, 10);
        for (int j = 0; j < 3; ++j) {
            auto r = kbar.rates(j, s.x[j], s.y[j], s.epoch);
            double total = 0.0;
            for (double v : r.out) {
                EXPECT_GE(v, 0.0);
                total += v;
            }
            EXPECT_NEAR(total, 1.0, 1e-12);
            for (double v : r.in) EXPECT_GE(v, 0.0);
        }
    }
}

TEST(Features, LayoutAndExamples) {
    auto cfg = three_pool(4);
    State s = State::empty(3, 2);
    s.x = {5, 9, 0};
    s.y = {2, 3, 0};
    auto phi = features(s, {}, cfg);
    ASSERT_EQ(phi.size(), feature_count(cfg, {}));
    EXPECT_EQ(phi.size(), 1u + 15);
    EXPECT_EQ(phi, (std::vector<double>{1, 5, 25, 2, 4, 10, 9, 81, 3, 9, 27, 0, 0, 0, 0, 0}));

    auto pools = pool_models(cfg, KbarEstimate::wait_only(cfg, {}));
    auto with = features(s, pools, cfg);
    ASSERT_EQ(with.size(), 2u + 5 * 3);
    double vd = 0.0;
    for (int j = 0; j < 3; ++j) vd += pools[j].value(s.x[j], s.y[j], 2);
    EXPECT_EQ(with[1], vd);
}

// Exact one-step feature expectations against simulation, 4 standard errors.
TEST(Features, ExpectationMatchesMonteCarlo) {
    struct Case {
        SystemConfig cfg;
        State s;
    };
    auto eight = make_preset("twopool-8epoch").system;
    auto midnight = make_preset("twopool-midnight").system;
    std::vector<Case> cases;
    for (int h : {0, 3, 5, 7}) {
        State s = State::empty(2, h);
        s.x = {31, 22};
        s.y = {h == 0 ? 0 : 8, h == 0 ? 0 : 5};
        cases.push_back({eight, s});
    }
    State sm = State::empty(2);
    sm.x = {33, 20};
    cases.push_back({midnight, sm});

    for (auto& c : cases) {
        auto pools = pool_models(c.cfg, randomized_kbar(c.cfg, 0.5, 100, 2));
        SystemAction f = complete_overflow_action(c.s, c.cfg);
        auto exact = expected_features(c.s, f, c.cfg, pools);
        const State post = apply_action(c.s, f, c.cfg);
        Rng rng(12);
        const int n = 100000;
        std::vector<double> sum(exact.size()), sum2(exact.size());
        for (int t = 0; t < n; ++t) {
            State next = advance(post, sample_exogenous(c.cfg, post, rng), c.cfg);
            auto phi = features(next, pools, c.cfg);
            for (std::size_t k = 0; k < phi.size(); ++k) {
                sum[k] += phi[k];
                sum2[k] += phi[k] * phi[k];
            }
        }
        for (std::size_t k = 0; k < exact.size(); ++k) {
            const double mean = sum[k] / n;
            const double se = std::sqrt(std::max(0.0, sum2[k] / n - mean * mean) / n);
            EXPECT_LE(std::abs(mean - exact[k]), 4.0 * se + 1e-9 * std::abs(exact[k]))
                << c.cfg.name << " epoch " << c.s.epoch << " feature " << k;
        }
    }
}

namespace {

// AR(1) chain z' = rho z + eps with cost z^2 + offset(h); the relative value is
// z^2 / (1 - rho^2) plus an epoch constant.
std::vector<FitSegment> ar1_segments(int epochs, int n, double rho, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> eps;
    FitSegment seg;
    double z = 0.0;
    for (int t = 0; t < n; ++t) {
        const int h = t % epochs;
        seg.push_back({{1.0, z, z * z}, z * z + 5.0 * h, h});
        z = rho * z + eps(rng);
    }
    return {seg};
}

}  // namespace

TEST(Lstd, RecoversQuadraticValue) {
    const double rho = 0.8;
    for (int m : {1, 2}) {
        auto segs = ar1_segments(m, 400000, rho, 5);
        auto model = fit_epoch_models(segs, m);
        for (int h = 0; h < m; ++h) {
            EXPECT_NEAR(model.beta[h][2], 1.0 / (1.0 - rho * rho), 0.05) << "epoch " << h;
            EXPECT_NEAR(model.beta[h][1], 0.0, 0.05);
        }
        EXPECT_NEAR(model.gamma, 1.0 / (1.0 - rho * rho) + 2.5 * (m - 1), 0.05);
    }
}

TEST(Lstd, DuplicatedDataGivesSameFit) {
    auto segs = ar1_segments(2, 5000, 0.6, 7);
    auto once = fit_epoch_models(segs, 2);
    segs.push_back(segs.front());
    auto twice = fit_epoch_models(segs, 2);
    for (int h = 0; h < 2; ++h)
        for (int k = 0; k < 3; ++k) EXPECT_NEAR(once.beta[h][k], twice.beta[h][k], 1e-9 * (1.0 + std::abs(once.beta[h][k])));
}

TEST(Lstd, RejectsDegenerateInput) {
    std::vector<FitSegment> none{{{{1.0}, 0.0, 0}}};
    EXPECT_THROW(fit_epoch_models(none, 1), std::invalid_argument);
    std::vector<FitSegment> ragged{{{{1.0}, 0.0, 0}, {{1.0, 2.0}, 0.0, 0}}};
    EXPECT_THROW(fit_epoch_models(ragged, 1), std::invalid_argument);
}

TEST(Advantage, PerEpochCentering) {
    Rng rng(3);
    std::normal_distribution<double> normal(2.0, 5.0);
    std::vector<double> adv(1000);
    std::vector<int> epochs(1000);
    for (std::size_t t = 0; t < adv.size(); ++t) {
        epochs[t] = static_cast<int>(rng() % 4);
        adv[t] = normal(rng) + epochs[t];
    }
    auto before = adv;
    auto offsets = normalize_advantages(adv, epochs, 4);
    std::vector<double> mean(4), count(4);
    for (std::size_t t = 0; t < adv.size(); ++t) {
        mean[epochs[t]] += adv[t];
        count[epochs[t]] += 1;
        EXPECT_NEAR(before[t] - adv[t], offsets[epochs[t]], 1e-12);
    }
    for (int h = 0; h < 4; ++h) EXPECT_NEAR(mean[h] / count[h], 0.0, 1e-12);
}

TEST(Advantage, Definition) {
    EpochValueModel model;
    model.epochs = 2;
    model.dim = 2;
    model.gamma = 3.0;
    model.beta = {{1.0, 2.0}, {0.5, -1.0}};
    // g - gamma + v^1(E phi') - v^0(phi)
    const double a = advantage(10.0, {1.0, 4.0}, {1.0, 2.0}, 0, model);
    EXPECT_DOUBLE_EQ(a, 10.0 - 3.0 + (0.5 - 2.0) - (1.0 + 8.0));
    const double wrap = advantage(0.0, {1.0, 1.0}, {1.0, 1.0}, 1, model);
    EXPECT_DOUBLE_EQ(wrap, -3.0 + 3.0 + 0.5);
}
