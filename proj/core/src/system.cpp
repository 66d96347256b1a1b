#include "overflow/system.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "overflow/errors.hpp"

namespace overflow {

double SystemConfig::daily_arrivals(int j) const {
    double total = 0.0;
    for (double v : arrivals[j]) total += v;
    return total;
}

double SystemConfig::route_cost(int i, int j) const {
    for (const Route& r : routes[i]) {
        if (r.to == j) return r.cost;
    }
    return -1.0;
}

std::vector<Violation> validate_config(const SystemConfig& cfg) {
    std::vector<Violation> out;
    auto add = [&](std::string path, std::string msg) { out.push_back({std::move(path), std::move(msg)}); };
    const int J = cfg.num_pools;
    const int m = cfg.epochs_per_day;
    if (J < 1) add("num_pools", "must be >= 1");
    if (m < 1) add("epochs_per_day", "must be >= 1");
    if (!out.empty()) return out;

    auto check_size = [&](const std::string& path, std::size_t got) {
        if (got != static_cast<std::size_t>(J)) {
            add(path, "expected " + std::to_string(J) + " entries, got " + std::to_string(got));
            return false;
        }
        return true;
    };
    if (check_size("servers", cfg.servers.size())) {
        for (int j = 0; j < J; ++j)
            if (cfg.servers[j] < 1) add("servers[" + std::to_string(j) + "]", "must be an integer >= 1");
    }
    if (check_size("arrivals", cfg.arrivals.size())) {
        for (int j = 0; j < J; ++j) {
            const std::string p = "arrivals[" + std::to_string(j) + "]";
            if (cfg.arrivals[j].size() != static_cast<std::size_t>(m)) {
                add(p, "expected " + std::to_string(m) + " epoch means");
                continue;
            }
            for (int h = 0; h < m; ++h) {
                double v = cfg.arrivals[j][h];
                if (!std::isfinite(v) || v < 0.0)
                    add(p + "[" + std::to_string(h) + "]", "must be finite and >= 0");
            }
        }
    }
    if (check_size("discharge_prob", cfg.discharge_prob.size())) {
        for (int j = 0; j < J; ++j) {
            double mu = cfg.discharge_prob[j];
            if (!(mu >= 0.0 && mu <= 1.0))
                add("discharge_prob[" + std::to_string(j) + "]", "must lie in [0,1]");
        }
    }
    if (check_size("discharge_cdf", cfg.discharge_cdf.size())) {
        for (int j = 0; j < J; ++j) {
            const std::string p = "discharge_cdf[" + std::to_string(j) + "]";
            const auto& F = cfg.discharge_cdf[j];
            if (F.size() != static_cast<std::size_t>(m + 1)) {
                add(p, "expected " + std::to_string(m + 1) + " boundary values");
                continue;
            }
            if (F[0] != 0.0) add(p + "[0]", "F(0) must be 0");
            for (int k = 0; k <= m; ++k) {
                if (!(F[k] >= 0.0 && F[k] <= 1.0)) add(p + "[" + std::to_string(k) + "]", "must lie in [0,1]");
                if (k > 0 && F[k] < F[k - 1])
                    add(p + "[" + std::to_string(k) + "]", "pool " + std::to_string(j) + " CDF decreases at epoch " +
                                                              std::to_string(k));
            }
            if (std::abs(F[m] - 1.0) > 1e-12) add(p + "[" + std::to_string(m) + "]", "F at the final boundary must be 1");
        }
    }
    if (check_size("routes", cfg.routes.size())) {
        for (int i = 0; i < J; ++i) {
            for (std::size_t r = 0; r < cfg.routes[i].size(); ++r) {
                const Route& route = cfg.routes[i][r];
                const std::string p = "routes[" + std::to_string(i) + "][" + std::to_string(r) + "]";
                if (route.to < 0 || route.to >= J) {
                    add(p + ".to", "pool index out of range");
                    continue;
                }
                if (route.to == i) add(p + ".to", "a class cannot overflow to its own primary pool");
                if (!std::isfinite(route.cost) || route.cost < 0.0) add(p + ".cost", "must be finite and >= 0");
                for (std::size_t r2 = 0; r2 < r; ++r2)
                    if (cfg.routes[i][r2].to == route.to) add(p + ".to", "duplicate route");
            }
        }
    }
    if (check_size("holding_cost", cfg.holding_cost.size())) {
        for (int j = 0; j < J; ++j)
            if (!std::isfinite(cfg.holding_cost[j]) || cfg.holding_cost[j] < 0.0)
                add("holding_cost[" + std::to_string(j) + "]", "must be finite and >= 0");
    }
    return out;
}

void require_valid(const SystemConfig& cfg) {
    auto v = validate_config(cfg);
    if (v.empty()) return;
    std::ostringstream os;
    os << "invalid config:";
    for (const auto& e : v) os << " " << e.path << ": " << e.message << ";";
    throw ConfigError(os.str());
}

State State::empty(int pools, int epoch) {
    State s;
    s.x.assign(pools, 0);
    s.y.assign(pools, 0);
    s.epoch = epoch;
    return s;
}

SystemAction SystemAction::all_wait(const State& s, const SystemConfig& cfg) {
    SystemAction f(cfg.num_pools);
    for (int i = 0; i < cfg.num_pools; ++i) f(i, i) = queue_length(s, cfg, i);
    return f;
}

bool is_valid_state(const State& s, const SystemConfig& cfg) {
    const int J = cfg.num_pools;
    if (static_cast<int>(s.x.size()) != J || static_cast<int>(s.y.size()) != J) return false;
    if (s.epoch < 0 || s.epoch >= cfg.epochs_per_day) return false;
    for (int j = 0; j < J; ++j) {
        if (s.x[j] < 0 || s.y[j] < 0) return false;
        if (s.y[j] > std::min(s.x[j], cfg.servers[j])) return false;
    }
    return true;
}

std::string feasibility_violation(const State& s, const SystemAction& f, const SystemConfig& cfg) {
    const int J = cfg.num_pools;
    if (f.pools() != J) return "action has wrong dimension";
    for (int i = 0; i < J; ++i) {
        int row = 0;
        for (int j = 0; j < J; ++j) {
            int v = f(i, j);
            if (v < 0) return "negative count f(" + std::to_string(i) + "," + std::to_string(j) + ")";
            if (j != i && v > 0 && !cfg.has_route(i, j))
                return "f(" + std::to_string(i) + "," + std::to_string(j) + ") uses a route not allowed for class " +
                       std::to_string(i);
            row += v;
        }
        if (row != queue_length(s, cfg, i))
            return "row " + std::to_string(i) + " assigns " + std::to_string(row) + " customers but queue length is " +
                   std::to_string(queue_length(s, cfg, i));
    }
    for (int j = 0; j < J; ++j) {
        int inflow = 0;
        for (int l = 0; l < J; ++l)
            if (l != j) inflow += f(l, j);
        if (inflow > idle_beds(s, cfg, j))
            return "inflow " + std::to_string(inflow) + " to pool " + std::to_string(j) + " exceeds " +
                   std::to_string(idle_beds(s, cfg, j)) + " idle beds";
    }
    return {};
}

void require_feasible(const State& s, const SystemAction& f, const SystemConfig& cfg) {
    std::string why = feasibility_violation(s, f, cfg);
    if (!why.empty()) throw InfeasibleActionError(why);
}

double discharge_prob(const SystemConfig& cfg, int j, int h) {
    if (h == 0) throw std::invalid_argument("midnight has no departures");
    if (h < 0 || h >= cfg.epochs_per_day) throw std::out_of_range("epoch index out of range");
    const auto& F = cfg.discharge_cdf[j];
    double remaining = 1.0 - F[h];
    if (remaining <= 0.0) return 0.0;
    double p = (F[h + 1] - F[h]) / remaining;
    return std::clamp(p, 0.0, 1.0);
}

namespace {

int draw_poisson(double mean, Rng& rng) {
    if (mean <= 0.0) return 0;
    std::poisson_distribution<int> dist(mean);
    return dist(rng);
}

int draw_binomial(int n, double p, Rng& rng) {
    if (n <= 0 || p <= 0.0) return 0;
    if (p >= 1.0) return n;
    std::binomial_distribution<int> dist(n, p);
    return dist(rng);
}

}  // namespace

ExogenousDraw sample_exogenous(const SystemConfig& cfg, const State& post, Rng& rng) {
    const int J = cfg.num_pools;
    ExogenousDraw draw;
    draw.a.assign(J, 0);
    draw.d.assign(J, 0);
    draw.b.assign(J, 0);
    const int h = post.epoch;
    for (int j = 0; j < J; ++j) {
        draw.a[j] = draw_poisson(cfg.arrivals[j][h], rng);
        if (h == 0) {
            draw.b[j] = draw_binomial(std::min(post.x[j], cfg.servers[j]), cfg.discharge_prob[j], rng);
        } else {
            draw.d[j] = draw_binomial(post.y[j], discharge_prob(cfg, j, h), rng);
        }
    }
    return draw;
}

State apply_action(const State& s, const SystemAction& f, const SystemConfig& cfg) {
    require_feasible(s, f, cfg);
    State out = s;
    const int J = cfg.num_pools;
    for (int i = 0; i < J; ++i) {
        for (int j = 0; j < J; ++j) {
            if (i == j) continue;
            out.x[i] -= f(i, j);
            out.x[j] += f(i, j);
        }
    }
    return out;
}

State advance(const State& post, const ExogenousDraw& draw, const SystemConfig& cfg) {
    const int J = cfg.num_pools;
    const int m = cfg.epochs_per_day;
    State next = post;
    next.epoch = (post.epoch + 1) % m;
    for (int j = 0; j < J; ++j) {
        if (draw.a[j] < 0) throw std::invalid_argument("negative arrival count");
        if (post.epoch == 0) {
            if (draw.b[j] < 0 || draw.b[j] > std::min(post.x[j], cfg.servers[j]))
                throw std::invalid_argument("corrupt draw: b exceeds in-service count at pool " + std::to_string(j));
            if (m == 1) {
                next.x[j] = post.x[j] + draw.a[j] - draw.b[j];
                next.y[j] = 0;
            } else {
                next.x[j] = post.x[j] + draw.a[j];
                next.y[j] = draw.b[j];
            }
        } else {
            if (draw.d[j] < 0 || draw.d[j] > post.y[j])
                throw std::invalid_argument("corrupt draw: d exceeds to-depart count at pool " + std::to_string(j));
            next.x[j] = post.x[j] + draw.a[j] - draw.d[j];
            next.y[j] = post.y[j] - draw.d[j];
        }
    }
    return next;
}

double cost(const State& s, const SystemAction& f, const SystemConfig& cfg) {
    require_feasible(s, f, cfg);
    const int J = cfg.num_pools;
    double total = 0.0;
    for (int i = 0; i < J; ++i) {
        total += cfg.holding_cost[i] * f(i, i);
        for (const Route& r : cfg.routes[i]) total += r.cost * f(i, r.to);
    }
    return total;
}

std::vector<int> feasible_pools(const State& s, int i, const SystemConfig& cfg) {
    std::vector<int> out{i};
    for (const Route& r : cfg.routes[i])
        if (s.x[r.to] < cfg.servers[r.to]) out.push_back(r.to);
    return out;
}

}  // namespace overflow
