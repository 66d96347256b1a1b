#include "overflow/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "overflow/distributions.hpp"
#include "overflow/errors.hpp"

namespace overflow {

namespace {

void enumerate_class(const State& s, const SystemConfig& cfg, int i, std::vector<int>& remaining, SystemAction& f,
                     std::vector<SystemAction>& out);

void enumerate_route(const State& s, const SystemConfig& cfg, int i, std::size_t r, int left,
                     std::vector<int>& remaining, SystemAction& f, std::vector<SystemAction>& out) {
    const auto& routes = cfg.routes[i];
    if (r == routes.size()) {
        f(i, i) = left;
        enumerate_class(s, cfg, i + 1, remaining, f, out);
        f(i, i) = 0;
        return;
    }
    const int to = routes[r].to;
    const int cap = std::min(left, remaining[to]);
    for (int n = 0; n <= cap; ++n) {
        f(i, to) = n;
        remaining[to] -= n;
        enumerate_route(s, cfg, i, r + 1, left - n, remaining, f, out);
        remaining[to] += n;
    }
    f(i, to) = 0;
}

void enumerate_class(const State& s, const SystemConfig& cfg, int i, std::vector<int>& remaining, SystemAction& f,
                     std::vector<SystemAction>& out) {
    if (i == cfg.num_pools) {
        out.push_back(f);
        return;
    }
    enumerate_route(s, cfg, i, 0, queue_length(s, cfg, i), remaining, f, out);
}

double brute_force_rec(const AtomicDistribution& kappa, const std::vector<int>& classes, std::size_t n,
                       std::vector<int>& counts, const SystemAction& f, int J) {
    if (n == classes.size()) {
        for (int k = 0; k < J * J; ++k)
            if (counts[k] != f.data()[k]) return 0.0;
        return 1.0;
    }
    const int i = classes[n];
    double total = 0.0;
    for (int j = 0; j < J; ++j) {
        double p = kappa(i, j);
        if (p == 0.0) continue;
        counts[i * J + j] += 1;
        if (counts[i * J + j] <= f(i, j)) total += p * brute_force_rec(kappa, classes, n + 1, counts, f, J);
        counts[i * J + j] -= 1;
    }
    return total;
}

}  // namespace

std::vector<SystemAction> enumerate_feasible_actions(const State& s, const SystemConfig& cfg) {
    const int J = cfg.num_pools;
    int total = 0;
    for (int i = 0; i < J; ++i) total += queue_length(s, cfg, i);
    if (J > 3 || total > 12) throw std::invalid_argument("enumeration guard exceeded (J <= 3, total queue <= 12)");
    std::vector<int> remaining(J);
    for (int j = 0; j < J; ++j) remaining[j] = idle_beds(s, cfg, j);
    SystemAction f(J);
    std::vector<SystemAction> out;
    enumerate_class(s, cfg, 0, remaining, f, out);
    return out;
}

double brute_force_action_prob(const AtomicDistribution& kappa, const State& s, const SystemAction& f,
                               const SystemConfig& cfg) {
    const int J = cfg.num_pools;
    std::vector<int> classes;
    for (int i = 0; i < J; ++i)
        for (int n = 0; n < queue_length(s, cfg, i); ++n) classes.push_back(i);
    if (classes.size() > 8) throw std::invalid_argument("brute-force guard exceeded (total queue <= 8)");
    std::vector<int> counts(static_cast<std::size_t>(J) * J, 0);
    return brute_force_rec(kappa, classes, 0, counts, f, J);
}

TruncatedMDP::TruncatedMDP(const SystemConfig& cfg, int x_max) : cfg_(cfg), x_max_(x_max) {
    require_valid(cfg);
    if (cfg.num_pools > 2 || cfg.epochs_per_day != 1)
        throw ConfigError("truncated MDP supports J <= 2 pools with one epoch per day");
    for (int j = 0; j < cfg.num_pools; ++j)
        if (x_max < cfg.servers[j]) throw ConfigError("x_max must be at least the pool capacity");
    const int S = x_max + 1;
    num_states_ = cfg.num_pools == 1 ? S : S * S;
    for (int j = 0; j < cfg.num_pools; ++j) {
        std::vector<double> P(static_cast<std::size_t>(S) * S, 0.0);
        const double lam = cfg.arrivals[j][0];
        const int amax = std::max(poisson_support(lam), x_max);
        auto pa = poisson_pmf(lam, amax);
        for (int xp = 0; xp <= x_max; ++xp) {
            auto pb = binomial_pmf(std::min(xp, cfg.servers[j]), cfg.discharge_prob[j]);
            double* row = P.data() + static_cast<std::size_t>(xp) * S;
            double inside = 0.0;
            for (std::size_t b = 0; b < pb.size(); ++b) {
                if (pb[b] == 0.0) continue;
                const int base = xp - static_cast<int>(b);
                for (int a = 0; base + a < x_max; ++a) {
                    double p = pb[b] * pa[a];
                    row[base + a] += p;
                    inside += p;
                }
            }
            row[x_max] = std::max(0.0, 1.0 - inside);
        }
        kernels_.push_back(std::move(P));
    }
}

int TruncatedMDP::index(const std::vector<int>& x) const {
    for (int v : x)
        if (v < 0 || v > x_max_) throw std::out_of_range("state outside truncation");
    return cfg_.num_pools == 1 ? x[0] : x[0] * (x_max_ + 1) + x[1];
}

State TruncatedMDP::state(int idx) const {
    State s = State::empty(cfg_.num_pools);
    if (cfg_.num_pools == 1) {
        s.x[0] = idx;
    } else {
        s.x[0] = idx / (x_max_ + 1);
        s.x[1] = idx % (x_max_ + 1);
    }
    return s;
}

std::vector<SystemAction> TruncatedMDP::actions(int idx) const {
    const State s = state(idx);
    const int J = cfg_.num_pools;
    SystemAction wait = SystemAction::all_wait(s, cfg_);
    std::vector<SystemAction> out{wait};
    if (J == 1) return out;
    for (int i = 0; i < 2; ++i) {
        const int j = 1 - i;
        if (!cfg_.has_route(i, j)) continue;
        const int cap = std::min(queue_length(s, cfg_, i), idle_beds(s, cfg_, j));
        for (int n = 1; n <= cap; ++n) {
            SystemAction f = wait;
            f(i, i) -= n;
            f(i, j) += n;
            out.push_back(f);
        }
    }
    return out;
}

void TruncatedMDP::expected_next(const std::vector<double>& v, std::vector<double>& out) const {
    const int S = x_max_ + 1;
    out.assign(num_states_, 0.0);
    if (cfg_.num_pools == 1) {
        const auto& P = kernels_[0];
        for (int a = 0; a < S; ++a) {
            double acc = 0.0;
            const double* row = P.data() + static_cast<std::size_t>(a) * S;
            for (int x = 0; x < S; ++x) acc += row[x] * v[x];
            out[a] = acc;
        }
        return;
    }
    const auto& P1 = kernels_[0];
    const auto& P2 = kernels_[1];
    std::vector<double> T(static_cast<std::size_t>(S) * S, 0.0);
    for (int a = 0; a < S; ++a) {
        const double* row = P1.data() + static_cast<std::size_t>(a) * S;
        double* t = T.data() + static_cast<std::size_t>(a) * S;
        for (int x1 = 0; x1 < S; ++x1) {
            const double p = row[x1];
            if (p == 0.0) continue;
            const double* vr = v.data() + static_cast<std::size_t>(x1) * S;
            for (int x2 = 0; x2 < S; ++x2) t[x2] += p * vr[x2];
        }
    }
    for (int a = 0; a < S; ++a) {
        const double* t = T.data() + static_cast<std::size_t>(a) * S;
        for (int b = 0; b < S; ++b) {
            const double* row = P2.data() + static_cast<std::size_t>(b) * S;
            double acc = 0.0;
            for (int x2 = 0; x2 < S; ++x2) acc += row[x2] * t[x2];
            out[static_cast<std::size_t>(a) * S + b] = acc;
        }
    }
}

namespace {

struct Choice {
    int post = 0;
    double cost = 0.0;
    double prob = 1.0;
};

int post_index(const TruncatedMDP& mdp, const State& s, const SystemAction& f) {
    return mdp.index(apply_action(s, f, mdp.config()).x);
}

}  // namespace

MidnightSolution value_iteration_midnight(const SystemConfig& cfg, int x_max, double tol, int max_iterations) {
    if (cfg.num_pools != 2 || cfg.epochs_per_day != 1)
        throw ConfigError("value iteration needs the two-pool one-epoch model");
    TruncatedMDP mdp(cfg, x_max);
    const int S = mdp.num_states();
    std::vector<std::vector<Choice>> choices(S);
    std::vector<std::vector<SystemAction>> acts(S);
    for (int s = 0; s < S; ++s) {
        State st = mdp.state(s);
        acts[s] = mdp.actions(s);
        for (const auto& f : acts[s]) choices[s].push_back({post_index(mdp, st, f), cost(st, f, cfg), 1.0});
    }
    std::vector<double> v(S, 0.0), w(S), W;
    MidnightSolution sol;
    for (int it = 1; it <= max_iterations; ++it) {
        mdp.expected_next(v, W);
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (int s = 0; s < S; ++s) {
            double best = std::numeric_limits<double>::infinity();
            for (const Choice& c : choices[s]) best = std::min(best, c.cost + W[c.post]);
            w[s] = best;
            lo = std::min(lo, best - v[s]);
            hi = std::max(hi, best - v[s]);
        }
        const double ref = w[0];
        for (int s = 0; s < S; ++s) v[s] = w[s] - ref;
        sol.iterations = it;
        sol.span = hi - lo;
        sol.gamma = 0.5 * (hi + lo);
        if (hi - lo < tol) break;
        if (it == max_iterations)
            throw NumericalError("value iteration did not converge: span " + std::to_string(hi - lo));
    }
    mdp.expected_next(v, W);
    sol.policy.resize(S);
    for (int s = 0; s < S; ++s) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < choices[s].size(); ++k) {
            double val = choices[s][k].cost + W[choices[s][k].post];
            if (val < best - 1e-12) {
                best = val;
                sol.policy[s] = acts[s][k];
            }
        }
    }
    sol.v = std::move(v);
    return sol;
}

ActionDistribution sampling_distribution(const PolicySpec& policy, const State& s, const SystemConfig& cfg) {
    if (cfg.num_pools > 2) throw std::invalid_argument("sampling_distribution supports J <= 2");
    const bool stochastic =
        std::holds_alternative<RandomizedOverflow>(policy) || std::holds_alternative<NetworkPolicy>(policy);
    if (!stochastic) {
        Rng unused(0);
        return {{sample_action(policy, s, cfg, unused).action, 1.0}};
    }
    const AtomicDistribution kappa = atomic_distribution(policy, s, cfg);
    SystemAction wait = SystemAction::all_wait(s, cfg);
    if (cfg.num_pools == 1) return {{wait, 1.0}};
    for (int i = 0; i < 2; ++i) {
        const int j = 1 - i;
        const int q = queue_length(s, cfg, i);
        const int idle = idle_beds(s, cfg, j);
        if (q == 0 || idle == 0 || kappa(i, j) == 0.0) continue;
        // Customers draw independently until pool j runs out of idle beds.
        auto pmf = binomial_pmf(q, kappa(i, j));
        ActionDistribution out;
        const int cap = std::min(q, idle);
        for (int n = 0; n <= cap; ++n) {
            double p = 0.0;
            if (n < cap) {
                p = pmf[n];
            } else {
                for (int k = cap; k <= q; ++k) p += pmf[k];
            }
            SystemAction f = wait;
            f(i, i) -= n;
            f(i, j) += n;
            out.push_back({f, p});
        }
        return out;
    }
    return {{wait, 1.0}};
}

PolicyEvaluation exact_policy_eval(const StochasticPolicy& policy, const TruncatedMDP& mdp, double tol,
                                   int max_iterations) {
    const SystemConfig& cfg = mdp.config();
    const int S = mdp.num_states();
    std::vector<std::vector<Choice>> choices(S);
    std::vector<double> g(S, 0.0);
    for (int s = 0; s < S; ++s) {
        State st = mdp.state(s);
        for (const auto& [f, p] : policy(st)) {
            if (p <= 0.0) continue;
            double c = cost(st, f, cfg);
            choices[s].push_back({post_index(mdp, st, f), c, p});
            g[s] += p * c;
        }
    }

    // Every state must be able to reach the empty state: follow the most
    // downward transition (no arrivals, all in-service customers leave).
    const int J = mdp.pools();
    const int S1 = mdp.x_max() + 1;
    auto lowest_next = [&](int post) {
        State p = mdp.state(post);
        std::vector<int> x(J);
        for (int j = 0; j < J; ++j) {
            const double* row = mdp.kernel(j).data() + static_cast<std::size_t>(p.x[j]) * S1;
            int k = 0;
            while (row[k] == 0.0) ++k;
            x[j] = k;
        }
        return mdp.index(x);
    };
    std::vector<char> reaches(S, 0);
    reaches[0] = 1;
    for (bool changed = true; changed;) {
        changed = false;
        for (int s = 0; s < S; ++s) {
            if (reaches[s]) continue;
            for (const Choice& c : choices[s]) {
                if (reaches[lowest_next(c.post)]) {
                    reaches[s] = 1;
                    changed = true;
                    break;
                }
            }
        }
    }
    for (int s = 0; s < S; ++s)
        if (!reaches[s]) throw NumericalError("chain is not irreducible on the truncation");

    PolicyEvaluation out;
    std::vector<double> v(S, 0.0), w(S), W;
    for (int it = 1; it <= max_iterations; ++it) {
        mdp.expected_next(v, W);
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (int s = 0; s < S; ++s) {
            double val = g[s];
            for (const Choice& c : choices[s]) val += c.prob * W[c.post];
            w[s] = val;
            lo = std::min(lo, val - v[s]);
            hi = std::max(hi, val - v[s]);
        }
        const double ref = w[0];
        for (int s = 0; s < S; ++s) v[s] = w[s] - ref;
        out.iterations = it;
        out.gamma = 0.5 * (hi + lo);
        if (hi - lo < tol) break;
        if (it == max_iterations)
            throw NumericalError("policy evaluation did not converge: span " + std::to_string(hi - lo));
    }
    mdp.expected_next(v, W);
    double res = 0.0;
    for (int s = 0; s < S; ++s) {
        double val = g[s] - out.gamma - v[s];
        for (const Choice& c : choices[s]) val += c.prob * W[c.post];
        res = std::max(res, std::abs(val));
    }
    out.residual = res;
    out.v = std::move(v);
    return out;
}

PolicyEvaluation exact_policy_eval(const PolicySpec& policy, const TruncatedMDP& mdp, double tol,
                                   int max_iterations) {
    StochasticPolicy fn = [&](const State& s) { return sampling_distribution(policy, s, mdp.config()); };
    return exact_policy_eval(fn, mdp, tol, max_iterations);
}

}  // namespace overflow
