#include "overflow/presets.hpp"

#include <numeric>

#include "overflow/errors.hpp"

namespace overflow {

std::vector<double> default_arrival_shape() {
    return {0.03, 0.03, 0.08, 0.20, 0.20, 0.17, 0.17, 0.12};
}

std::vector<double> default_discharge_cdf() {
    // Masses by epoch: 0, 0, 0, .06, .35, .35, .14, .10. Nothing leaves out of the midnight epoch.
    return {0.0, 0.0, 0.0, 0.0, 0.06, 0.41, 0.76, 0.90, 1.0};
}

namespace {

constexpr double kMu = 0.25;

// Five-pool route table, 0-based: class -> (preferred, secondary, secondary).
constexpr int kPreferred[5] = {4, 2, 1, 1, 0};
constexpr int kSecondary[5][2] = {{1, 2}, {3, 4}, {0, 4}, {0, 2}, {1, 2}};

SystemConfig base_system(const std::string& name, const std::vector<int>& servers, int m) {
    SystemConfig cfg;
    cfg.name = name;
    cfg.num_pools = static_cast<int>(servers.size());
    cfg.epochs_per_day = m;
    cfg.servers = servers;
    cfg.discharge_prob.assign(cfg.num_pools, kMu);
    cfg.routes.assign(cfg.num_pools, {});
    cfg.holding_cost.assign(cfg.num_pools, 0.0);
    cfg.arrivals.assign(cfg.num_pools, std::vector<double>(m, 0.0));
    cfg.discharge_cdf.assign(cfg.num_pools, m == 8 ? default_discharge_cdf() : std::vector<double>{0.0, 1.0});
    return cfg;
}

void set_daily_rate(SystemConfig& cfg, int j, double daily) {
    if (cfg.epochs_per_day == 8) {
        auto shape = default_arrival_shape();
        for (int h = 0; h < 8; ++h) cfg.arrivals[j][h] = daily * shape[h];
    } else {
        for (int h = 0; h < cfg.epochs_per_day; ++h) cfg.arrivals[j][h] = daily / cfg.epochs_per_day;
    }
}

// Splits a department's daily rate over pools [first, first+count) proportionally to N.
void split_rate(SystemConfig& cfg, int first, int count, double total) {
    double beds = 0.0;
    for (int j = first; j < first + count; ++j) beds += cfg.servers[j];
    for (int j = first; j < first + count; ++j) set_daily_rate(cfg, j, total * cfg.servers[j] / beds);
}

// Within-department routes of the five-pool layout placed at pool offset `base`.
void add_department_routes(SystemConfig& cfg, int base, double b1, double b2) {
    for (int i = 0; i < 5; ++i) {
        auto& r = cfg.routes[base + i];
        r.push_back({base + kPreferred[i], b1});
        r.push_back({base + kSecondary[i][0], b2});
        r.push_back({base + kSecondary[i][1], b2});
    }
}

// VIP (pools base..base+4) to regular (base+5..base+9): counterpart and counterpart-preferred
// at b3, counterpart-secondaries at b4.
void add_vip_routes(SystemConfig& cfg, int base, double b3, double b4) {
    for (int i = 0; i < 5; ++i) {
        auto& r = cfg.routes[base + i];
        r.push_back({base + 5 + i, b3});
        r.push_back({base + 5 + kPreferred[i], b3});
        r.push_back({base + 5 + kSecondary[i][0], b4});
        r.push_back({base + 5 + kSecondary[i][1], b4});
    }
}

SystemConfig ten_pool_block(SystemConfig cfg, int base, double vip_rate, double regular_rate, double b1, double b2,
                            double b3, double b4) {
    split_rate(cfg, base, 5, vip_rate);
    split_rate(cfg, base + 5, 5, regular_rate);
    for (int i = 0; i < 5; ++i) {
        cfg.holding_cost[base + i] = 7.0;
        cfg.holding_cost[base + 5 + i] = 6.0;
    }
    add_department_routes(cfg, base, b1, b2);
    add_department_routes(cfg, base + 5, b1, b2);
    add_vip_routes(cfg, base, b3, b4);
    return cfg;
}

TrainConfig quick_profile(int days, int iterations) {
    TrainConfig t;
    t.days_per_actor = days;
    t.actors = 4;
    t.iterations = iterations;
    t.evaluation_days = 2000;
    return t;
}

Preset twopool_midnight() {
    Preset p;
    p.name = "twopool-midnight";
    p.description = "Two pools, one midnight decision per day; small enough for exact value iteration.";
    p.system = base_system(p.name, {28, 32}, 1);
    for (int j = 0; j < 2; ++j) {
        set_daily_rate(p.system, j, 6.25);
        p.system.holding_cost[j] = 24.0;
    }
    p.system.routes[0] = {{1, 90.0}};
    p.system.routes[1] = {{0, 90.0}};
    p.train = quick_profile(10000, 15);
    p.train.actors = 10;
    p.quick = quick_profile(500, 15);
    p.quick.evaluation_days = 10000;
    p.hidden = {16};
    p.initial_policy = "";
    return p;
}

Preset twopool_8epoch() {
    Preset p;
    p.name = "twopool-8epoch";
    p.description = "Two pools, eight decision epochs per day, synthetic time-of-day shapes.";
    p.system = base_system(p.name, {28, 32}, 8);
    for (int j = 0; j < 2; ++j) {
        set_daily_rate(p.system, j, 6.25);
        p.system.holding_cost[j] = 3.0;
    }
    p.system.routes[0] = {{1, 12.0}};
    p.system.routes[1] = {{0, 12.0}};
    p.train = quick_profile(10000, 15);
    p.train.actors = 10;
    p.quick = quick_profile(500, 10);
    p.hidden = {16};
    p.initial_policy = "no-overflow";
    return p;
}

Preset fivepool(bool balanced) {
    Preset p;
    p.name = balanced ? "fivepool-balanced" : "fivepool-unbalanced";
    p.description = balanced ? "Five pools with 63 beds each, 70 arrivals per day."
                             : "Five pools with N=(60,64,67,62,62), 70 arrivals per day.";
    p.system = base_system(p.name, balanced ? std::vector<int>{63, 63, 63, 63, 63}
                                            : std::vector<int>{60, 64, 67, 62, 62}, 8);
    split_rate(p.system, 0, 5, 70.0);
    for (int j = 0; j < 5; ++j) p.system.holding_cost[j] = 6.0;
    add_department_routes(p.system, 0, 30.0, 35.0);
    p.train = quick_profile(10000, 15);
    p.train.actors = 10;
    p.quick = quick_profile(1000, 10);
    p.hidden = {24};
    p.initial_policy = "complete";
    return p;
}

Preset tenpool() {
    Preset p;
    p.name = "tenpool";
    p.description = "VIP and regular departments of five pools each; VIP may overflow to regular.";
    p.system = base_system(p.name, {39, 43, 46, 41, 41, 81, 85, 88, 83, 83}, 8);
    p.system = ten_pool_block(p.system, 0, 50.0, 90.0, 25.0, 30.0, 35.0, 40.0);
    p.train = quick_profile(10000, 15);
    p.train.actors = 10;
    p.quick = quick_profile(1000, 10);
    p.hidden = {34};
    p.initial_policy = "complete";
    return p;
}

Preset twentypool(double b4) {
    Preset p;
    p.name = b4 == 49.0 ? "twentypool" : "twentypool-b40";
    p.description = "Two ten-pool hospitals; patients may also overflow to the other hospital.";
    p.system = base_system(p.name, {32, 36, 39, 34, 34, 74, 78, 81, 76, 76,
                                    46, 50, 53, 48, 48, 88, 92, 95, 90, 90}, 8);
    const double b5 = 40.0, b6 = 45.0, b7 = 50.0, b8 = 55.0;
    for (int base : {0, 10}) p.system = ten_pool_block(p.system, base, 50.0, 90.0, 25.0, 30.0, 35.0, b4);
    // Cross-hospital routes mirror the class's own ladder in the other hospital:
    // counterpart pool, counterpart-preferred, counterpart-secondaries, and for VIP the counterpart regular pool.
    for (int base : {0, 10}) {
        const int other = 10 - base;
        for (int dept : {0, 5}) {
            for (int i = 0; i < 5; ++i) {
                auto& r = p.system.routes[base + dept + i];
                r.push_back({other + dept + i, b5});
                r.push_back({other + dept + kPreferred[i], b6});
                r.push_back({other + dept + kSecondary[i][0], b7});
                r.push_back({other + dept + kSecondary[i][1], b7});
                if (dept == 0) r.push_back({other + 5 + i, b8});
            }
        }
    }
    p.train = quick_profile(10000, 15);
    p.train.actors = 10;
    p.quick = quick_profile(1000, 10);
    p.hidden = {68};
    p.initial_policy = "complete";
    return p;
}

}  // namespace

std::vector<std::string> preset_names() {
    return {"twopool-midnight", "twopool-8epoch", "fivepool-balanced", "fivepool-unbalanced",
            "tenpool",          "twentypool",     "twentypool-b40"};
}

Preset make_preset(const std::string& name) {
    if (name == "twopool-midnight") return twopool_midnight();
    if (name == "twopool-8epoch") return twopool_8epoch();
    if (name == "fivepool-balanced") return fivepool(true);
    if (name == "fivepool-unbalanced") return fivepool(false);
    if (name == "tenpool") return tenpool();
    if (name == "twentypool") return twentypool(49.0);
    if (name == "twentypool-b40") return twentypool(40.0);
    throw ConfigError("unknown preset '" + name + "'");
}

}  // namespace overflow
