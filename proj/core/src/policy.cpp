#include "overflow/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "overflow/network.hpp"

namespace overflow {

AtomicDistribution AtomicDistribution::identity(int pools) {
    AtomicDistribution k(pools);
    for (int i = 0; i < pools; ++i) k(i, i) = 1.0;
    return k;
}

std::string policy_name(const PolicySpec& policy) {
    struct Visitor {
        std::string operator()(const NoOverflow&) const { return "no-overflow"; }
        std::string operator()(const CompleteOverflow&) const { return "complete-overflow"; }
        std::string operator()(const MidnightOverflow&) const { return "midnight"; }
        std::string operator()(const EmpiricalOverflow&) const { return "empirical"; }
        std::string operator()(const RandomizedOverflow&) const { return "randomized"; }
        std::string operator()(const NetworkPolicy&) const { return "network"; }
    };
    return std::visit(Visitor{}, policy);
}

std::vector<int> default_night_epochs(int epochs_per_day) {
    if (epochs_per_day == 8) return {0, 1, 7};
    // Generic grid: epochs whose start hour lies in [19:00, 07:00).
    std::vector<int> out;
    for (int h = 0; h < epochs_per_day; ++h) {
        double start = 24.0 * h / epochs_per_day;
        if (start < 7.0 || start >= 19.0) out.push_back(h);
    }
    return out;
}

SystemAction complete_overflow_action(const State& s, const SystemConfig& cfg) {
    const int J = cfg.num_pools;
    SystemAction f(J);
    std::vector<int> remaining(J);
    for (int j = 0; j < J; ++j) remaining[j] = idle_beds(s, cfg, j);
    for (int i = 0; i < J; ++i) {
        int q = queue_length(s, cfg, i);
        for (const Route& r : cfg.routes[i]) {
            if (q == 0) break;
            int n = std::min(q, remaining[r.to]);
            f(i, r.to) += n;
            remaining[r.to] -= n;
            q -= n;
        }
        f(i, i) = q;
    }
    return f;
}

namespace {

bool overflow_allowed(const PolicySpec& policy, int epoch) {
    if (std::holds_alternative<CompleteOverflow>(policy)) return true;
    if (std::holds_alternative<MidnightOverflow>(policy)) return epoch == 0;
    if (const auto* e = std::get_if<EmpiricalOverflow>(&policy))
        return std::find(e->night_epochs.begin(), e->night_epochs.end(), epoch) != e->night_epochs.end();
    return false;
}

bool is_deterministic(const PolicySpec& policy) {
    return std::holds_alternative<NoOverflow>(policy) || std::holds_alternative<CompleteOverflow>(policy) ||
           std::holds_alternative<MidnightOverflow>(policy) || std::holds_alternative<EmpiricalOverflow>(policy);
}

AtomicDistribution fractions(const SystemAction& f, const State& s, const SystemConfig& cfg) {
    const int J = cfg.num_pools;
    AtomicDistribution k(J);
    for (int i = 0; i < J; ++i) {
        int q = queue_length(s, cfg, i);
        if (q == 0) {
            k(i, i) = 1.0;
            continue;
        }
        for (int j = 0; j < J; ++j) k(i, j) = static_cast<double>(f(i, j)) / q;
    }
    return k;
}

int draw_index(const std::vector<double>& w, int fallback, Rng& rng) {
    double total = 0.0;
    for (double v : w) total += v;
    if (!(total > 0.0)) return fallback;
    double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng) * total;
    int last = fallback;
    for (std::size_t j = 0; j < w.size(); ++j) {
        if (w[j] <= 0.0) continue;
        last = static_cast<int>(j);
        if (u < w[j]) return last;
        u -= w[j];
    }
    return last;
}

}  // namespace

AtomicDistribution atomic_distribution(const PolicySpec& policy, const State& s, const SystemConfig& cfg) {
    const int J = cfg.num_pools;
    if (const auto* net = std::get_if<NetworkPolicy>(&policy)) return forward(*net->params, s, cfg);
    if (const auto* rnd = std::get_if<RandomizedOverflow>(&policy)) {
        AtomicDistribution k(J);
        for (int i = 0; i < J; ++i) {
            auto pools = feasible_pools(s, i, cfg);
            if (pools.size() == 1) {
                k(i, i) = 1.0;
                continue;
            }
            k(i, i) = 1.0 - rnd->probability;
            double share = rnd->probability / static_cast<double>(pools.size() - 1);
            for (std::size_t n = 1; n < pools.size(); ++n) k(i, pools[n]) = share;
        }
        return k;
    }
    if (overflow_allowed(policy, s.epoch)) return fractions(complete_overflow_action(s, cfg), s, cfg);
    return AtomicDistribution::identity(J);
}

SystemAction sample_batched(const AtomicDistribution& kappa, const State& s, const SystemConfig& cfg, Rng& rng) {
    const int J = cfg.num_pools;
    SystemAction f(J);
    std::vector<int> remaining(J);
    for (int j = 0; j < J; ++j) remaining[j] = idle_beds(s, cfg, j);
    std::vector<double> w(J);
    for (int i = 0; i < J; ++i) {
        int q = queue_length(s, cfg, i);
        if (q == 0) continue;
        for (int j = 0; j < J; ++j) w[j] = (j == i || remaining[j] > 0) ? kappa(i, j) : 0.0;
        for (int n = 0; n < q; ++n) {
            int j = draw_index(w, i, rng);
            f(i, j) += 1;
            if (j != i && --remaining[j] == 0) w[j] = 0.0;
        }
    }
    return f;
}

SampledAction sample_action(const PolicySpec& policy, const State& s, const SystemConfig& cfg, Rng& rng,
                            DecisionMode mode) {
    SampledAction out;
    if (is_deterministic(policy)) {
        out.action = overflow_allowed(policy, s.epoch) ? complete_overflow_action(s, cfg)
                                                       : SystemAction::all_wait(s, cfg);
        out.kappa = fractions(out.action, s, cfg);
        return out;
    }
    out.kappa = atomic_distribution(policy, s, cfg);
    const auto* net = std::get_if<NetworkPolicy>(&policy);
    if (mode == DecisionMode::Batched || net == nullptr) {
        out.action = sample_batched(out.kappa, s, cfg, rng);
        return out;
    }
    const int J = cfg.num_pools;
    out.action = SystemAction(J);
    State cur = s;
    std::vector<double> w(J);
    for (int i = 0; i < J; ++i) {
        const int q = queue_length(s, cfg, i);
        for (int n = 0; n < q; ++n) {
            AtomicDistribution k = (cur == s) ? out.kappa : forward(*net->params, cur, cfg);
            for (int j = 0; j < J; ++j) w[j] = k(i, j);
            int j = draw_index(w, i, rng);
            out.steps.push_back({cur.x, i, j, k(i, j)});
            out.action(i, j) += 1;
            if (j != i) {
                cur.x[i] -= 1;
                cur.x[j] += 1;
            }
        }
    }
    return out;
}

double action_log_prob(const AtomicDistribution& kappa, const State& s, const SystemAction& f,
                       const SystemConfig& cfg, std::string* diagnostic) {
    require_feasible(s, f, cfg);
    const int J = cfg.num_pools;
    double logp = 0.0;
    for (int i = 0; i < J; ++i) {
        int q = queue_length(s, cfg, i);
        if (q == 0) continue;
        logp += std::lgamma(q + 1.0);
        for (int j = 0; j < J; ++j) {
            int n = f(i, j);
            if (n == 0) continue;
            double k = kappa(i, j);
            if (!(k > 0.0)) {
                if (diagnostic)
                    *diagnostic = "f(" + std::to_string(i) + "," + std::to_string(j) + ")=" + std::to_string(n) +
                                  " has zero probability";
                return -std::numeric_limits<double>::infinity();
            }
            logp += n * std::log(k) - std::lgamma(n + 1.0);
        }
    }
    return logp;
}

double prob_ratio(const AtomicDistribution& kappa_new, const AtomicDistribution& kappa_old, const State& s,
                  const SystemAction& f, const SystemConfig& cfg) {
    require_feasible(s, f, cfg);
    const int J = cfg.num_pools;
    double lr = 0.0;
    for (int i = 0; i < J; ++i) {
        for (int j = 0; j < J; ++j) {
            int n = f(i, j);
            if (n == 0) continue;
            if (!(kappa_old(i, j) > 0.0)) throw std::domain_error("ratio undefined: old probability is zero");
            if (!(kappa_new(i, j) > 0.0)) return 0.0;
            lr += n * (std::log(kappa_new(i, j)) - std::log(kappa_old(i, j)));
        }
    }
    return std::exp(lr);
}

}  // namespace overflow
