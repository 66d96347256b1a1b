#include "overflow/pool_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "overflow/distributions.hpp"
#include "overflow/errors.hpp"

namespace overflow {

PoolBounds default_pool_bounds(const SystemConfig& cfg, int j) {
    const int N = cfg.servers[j];
    const double mu = cfg.discharge_prob[j];
    const double lam = cfg.daily_arrivals(j);
    PoolBounds b;
    const double spread = mu > 0.0 ? std::sqrt(lam / mu) : std::sqrt(lam);
    b.x_max = N + static_cast<int>(std::ceil(6.0 * spread)) + 20;
    if (cfg.epochs_per_day == 1) {
        b.y_max = 0;
    } else {
        const double mean = N * mu;
        b.y_max = std::min(N, static_cast<int>(std::ceil(mean + 6.0 * std::sqrt(mean * (1.0 - mu)))) + 5);
    }
    return b;
}

std::vector<PoolBounds> default_pool_bounds(const SystemConfig& cfg) {
    std::vector<PoolBounds> out;
    for (int j = 0; j < cfg.num_pools; ++j) out.push_back(default_pool_bounds(cfg, j));
    return out;
}

KbarEstimate::KbarEstimate(const SystemConfig& cfg, std::vector<PoolBounds> bounds)
    : pools_(cfg.num_pools), epochs_(cfg.epochs_per_day), bounds_(std::move(bounds)) {
    if (bounds_.empty()) bounds_ = default_pool_bounds(cfg);
    if (static_cast<int>(bounds_.size()) != pools_) throw std::invalid_argument("kbar bounds size mismatch");
    buckets_.resize(pools_);
    marginal_.assign(pools_, std::vector<Accum>(epochs_));
}

KbarEstimate KbarEstimate::wait_only(const SystemConfig& cfg, std::vector<PoolBounds> bounds) {
    return KbarEstimate(cfg, std::move(bounds));
}

long KbarEstimate::key(int j, int x, int y, int h) const {
    const PoolBounds& b = bounds_[j];
    x = std::clamp(x, 0, b.x_max);
    y = std::clamp(y, 0, b.y_max);
    return (static_cast<long>(h) * (b.x_max + 1) + x) * (b.y_max + 1) + y;
}

void KbarEstimate::accumulate(Accum& a, int j, const State& s, const AtomicDistribution& kappa,
                              const SystemConfig& cfg) const {
    if (a.out.empty()) {
        a.out.assign(pools_, 0.0);
        a.in.assign(pools_ + 1, 0.0);  // last slot counts visits with a class-j queue
    }
    a.visits += 1.0;
    if (queue_length(s, cfg, j) > 0) {
        for (int k = 0; k < pools_; ++k) a.out[k] += kappa(j, k);
        a.in[pools_] += 1.0;
    }
    for (int i = 0; i < pools_; ++i)
        if (i != j && queue_length(s, cfg, i) > 0) a.in[i] += kappa(i, j);
}

void KbarEstimate::add(const State& s, const AtomicDistribution& kappa, const SystemConfig& cfg) {
    for (int j = 0; j < pools_; ++j) {
        accumulate(buckets_[j][key(j, s.x[j], s.y[j], s.epoch)], j, s, kappa, cfg);
        accumulate(marginal_[j][s.epoch], j, s, kappa, cfg);
    }
}

KbarRates KbarEstimate::average(const Accum& a) const {
    KbarRates r;
    r.out.assign(pools_, 0.0);
    r.in.assign(pools_, 0.0);
    const double queued = a.in.empty() ? 0.0 : a.in[pools_];
    if (queued > 0.0) {
        for (int k = 0; k < pools_; ++k) r.out[k] = a.out[k] / queued;
    }
    if (a.visits > 0.0) {
        for (int i = 0; i < pools_; ++i) r.in[i] = a.in[i] / a.visits;
    }
    return r;
}

KbarRates KbarEstimate::rates(int j, int x, int y, int h) const {
    KbarRates r;
    const Accum* src = nullptr;
    if (!buckets_.empty()) {
        auto it = buckets_[j].find(key(j, x, y, h));
        if (it != buckets_[j].end() && it->second.visits > 0.0) src = &it->second;
    }
    if (!src && !marginal_.empty() && marginal_[j][h].visits > 0.0) src = &marginal_[j][h];
    if (src) {
        r = average(*src);
        // A bucket that never saw a class-j queue borrows the epoch marginal for outflow.
        if (src->in[pools_] == 0.0 && src != &marginal_[j][h] && marginal_[j][h].visits > 0.0)
            r.out = average(marginal_[j][h]).out;
    } else {
        r.out.assign(pools_, 0.0);
        r.in.assign(pools_, 0.0);
    }
    double moved = 0.0;
    for (int k = 0; k < pools_; ++k)
        if (k != j) moved += r.out[k];
    r.out[j] = std::max(0.0, 1.0 - moved);
    return r;
}

double KbarEstimate::visits(int j, int x, int y, int h) const {
    auto it = buckets_[j].find(key(j, x, y, h));
    return it == buckets_[j].end() ? 0.0 : it->second.visits;
}

KbarEstimate estimate_kbar(std::span<const Trajectory> data, const SystemConfig& cfg, std::vector<PoolBounds> bounds) {
    std::size_t n = 0;
    for (const auto& t : data) n += t.steps.size();
    if (n == 0) throw std::invalid_argument("estimate_kbar: empty data");
    KbarEstimate est(cfg, std::move(bounds));
    for (const auto& t : data)
        for (const auto& rec : t.steps) est.add(rec.state, rec.kappa, cfg);
    return est;
}

double PoolModel::value(int x, int y, int h) const {
    x = std::clamp(x, 0, bounds.x_max);
    y = std::clamp(y, 0, std::min({x, servers, bounds.y_max}));
    return values[index(h, x, y)];
}

double PoolModel::expected_next_value(int x, int y, int h) const {
    x = std::clamp(x, 0, bounds.x_max);
    y = std::clamp(y, 0, std::min({x, servers, bounds.y_max}));
    return expected_next[index(h, x, y)];
}

namespace {

// Exogenous step and routing adjustment operators of one pool.
class PoolOperators {
public:
    PoolOperators(const SystemConfig& cfg, int j, const KbarEstimate& kbar, PoolBounds b)
        : m_(cfg.epochs_per_day), N_(std::min(cfg.servers[j], b.x_max)), X_(b.x_max), Y_(b.y_max),
          C_(cfg.holding_cost[j]) {
        const int S = (X_ + 1) * (Y_ + 1);
        stride_ = S;
        for (int h = 0; h < m_; ++h) {
            const double lam = cfg.arrivals[j][h];
            arrivals_.push_back(poisson_pmf(lam, X_ + 1));
            std::vector<double> surv(X_ + 2, 0.0);
            double tail = 1.0;
            for (int k = 0; k <= X_ + 1; ++k) {
                surv[k] = std::max(0.0, tail);
                tail -= arrivals_.back()[k];
            }
            survival_.push_back(std::move(surv));
            amax_.push_back(std::min(X_, poisson_support(lam)));
            std::vector<std::vector<double>> dep;
            if (h > 0) {
                const double p = discharge_prob(cfg, j, h);
                for (int y = 0; y <= Y_; ++y) dep.push_back(binomial_pmf(y, p));
            }
            departures_.push_back(std::move(dep));
        }
        for (int z = 0; z <= N_; ++z) midnight_.push_back(binomial_pmf(z, cfg.discharge_prob[j]));

        // Routing adjustment at each pre-action state (x, y, h).
        adj_.resize(static_cast<std::size_t>(m_) * S);
        for (int h = 0; h < m_; ++h) {
            const int prev = (h - 1 + m_) % m_;
            for (int x = 0; x <= X_; ++x) {
                for (int y = 0; y <= std::min({x, N_, Y_}); ++y) {
                    Adjust& a = adj_[static_cast<std::size_t>(h) * S + x * (Y_ + 1) + y];
                    a.begin = a.end = entries_.size();
                    KbarRates r = kbar.rates(j, x, y, h);
                    double rate = 0.0;
                    double weighted_cost = 0.0;
                    int cap = 0;
                    int sign = 0;
                    if (x > cfg.servers[j]) {
                        for (int k = 0; k < cfg.num_pools; ++k) {
                            if (k == j || r.out[k] <= 0.0) continue;
                            double rk = cfg.arrivals[j][prev] * r.out[k];
                            rate += rk;
                            weighted_cost += rk * std::max(0.0, cfg.route_cost(j, k));
                        }
                        cap = x - cfg.servers[j];
                        sign = -1;
                    } else if (x < cfg.servers[j]) {
                        for (int i = 0; i < cfg.num_pools; ++i)
                            if (i != j) rate += cfg.arrivals[i][prev] * r.in[i];
                        cap = std::min(cfg.servers[j], X_) - x;
                        sign = 1;
                    }
                    if (rate <= 0.0 || cap <= 0) continue;
                    auto pmf = poisson_pmf(rate, cap);
                    double mass = 0.0;
                    double mean = 0.0;
                    for (int n = 0; n < cap; ++n) {
                        if (pmf[n] > 0.0) entries_.push_back({x + sign * n, pmf[n]});
                        mass += pmf[n];
                        mean += n * pmf[n];
                    }
                    double last = std::max(0.0, 1.0 - mass);
                    entries_.push_back({x + sign * cap, last});
                    mean += cap * last;
                    a.end = entries_.size();
                    if (sign < 0) a.outcost = weighted_cost / rate * mean;
                }
            }
        }
    }

    int stride() const { return stride_; }
    std::size_t cell(int x, int y) const { return static_cast<std::size_t>(x) * (Y_ + 1) + y; }
    int y_cap(int x) const { return std::min({x, N_, Y_}); }
    double holding(int x) const { return x > N_ ? C_ * (x - N_) : 0.0; }

    // G(x, y) = expected routing cost + E[v(x after routing, y)] at epoch h.
    void adjust(int h, const double* v, double* G) const {
        const std::size_t base = static_cast<std::size_t>(h) * stride_;
        for (int x = 0; x <= X_; ++x) {
            for (int y = 0; y <= y_cap(x); ++y) {
                const Adjust& a = adj_[base + cell(x, y)];
                if (a.begin == a.end) {
                    G[cell(x, y)] = v[cell(x, y)];
                    continue;
                }
                double acc = a.outcost;
                for (std::size_t e = a.begin; e < a.end; ++e) {
                    const int xx = entries_[e].x;
                    acc += entries_[e].p * v[cell(xx, std::min(y, y_cap(xx)))];
                }
                G[cell(x, y)] = acc;
            }
        }
    }

    // out(x, y) = E[G(x', y')] for a post-action state at epoch h, G living at epoch h + 1.
    void exogenous(int h, const double* G, double* out) const {
        const auto& pa = arrivals_[h];
        const auto& surv = survival_[h];
        const int amax = amax_[h];
        U_.assign(stride_, 0.0);
        for (int z = 0; z <= X_; ++z) {
            const int lim = std::min(amax, X_ - z - 1);
            const double tail = surv[std::max(0, std::min(X_ - z, lim + 1))];
            for (int y = 0; y <= std::min(z, Y_); ++y) {
                double acc = 0.0;
                for (int a = 0; a <= lim; ++a) acc += pa[a] * G[cell(z + a, y)];
                acc += tail * G[cell(std::min(X_, z + lim + 1), y)];
                U_[cell(z, y)] = acc;
            }
        }
        if (m_ == 1) {
            for (int x = 0; x <= X_; ++x) {
                const auto& pb = midnight_[std::min(x, N_)];
                double acc = 0.0;
                for (std::size_t b = 0; b < pb.size(); ++b) acc += pb[b] * U_[cell(x - static_cast<int>(b), 0)];
                out[cell(x, 0)] = acc;
            }
            return;
        }
        if (h == 0) {
            for (int x = 0; x <= X_; ++x) {
                const auto& pb = midnight_[std::min(x, N_)];
                double acc = 0.0;
                for (std::size_t b = 0; b < pb.size(); ++b)
                    acc += pb[b] * U_[cell(x, std::min(static_cast<int>(b), Y_))];
                for (int y = 0; y <= y_cap(x); ++y) out[cell(x, y)] = acc;
            }
            return;
        }
        const auto& dep = departures_[h];
        for (int x = 0; x <= X_; ++x) {
            for (int y = 0; y <= y_cap(x); ++y) {
                const auto& pd = dep[y];
                double acc = 0.0;
                for (int d = 0; d <= y; ++d) acc += pd[d] * U_[cell(x - d, y - d)];
                out[cell(x, y)] = acc;
            }
        }
    }

private:
    struct Adjust {
        std::size_t begin = 0;
        std::size_t end = 0;
        double outcost = 0.0;
    };
    struct Entry {
        int x;
        double p;
    };
    int m_, N_, X_, Y_;
    double C_;
    int stride_ = 0;
    std::vector<std::vector<double>> arrivals_;
    std::vector<std::vector<double>> survival_;
    std::vector<int> amax_;
    std::vector<std::vector<std::vector<double>>> departures_;
    std::vector<std::vector<double>> midnight_;
    std::vector<Adjust> adj_;
    std::vector<Entry> entries_;
    mutable std::vector<double> U_;
};

}  // namespace

PoolModel build_pool_model(const SystemConfig& cfg, int j, const KbarEstimate& kbar, const PoolModelOptions& options) {
    PoolModel model;
    model.pool = j;
    model.epochs = cfg.epochs_per_day;
    model.servers = cfg.servers[j];
    model.bounds = kbar.bounds().empty() ? default_pool_bounds(cfg, j) : kbar.bounds()[j];
    if (model.bounds.x_max < cfg.servers[j]) throw ConfigError("pool truncation below capacity");
    const int m = cfg.epochs_per_day;
    PoolOperators ops(cfg, j, kbar, model.bounds);
    const int S = ops.stride();
    const int X = model.bounds.x_max;

    std::vector<double> v(static_cast<std::size_t>(m) * S, 0.0);
    if (options.warm_start && options.warm_start->size() == v.size()) v = *options.warm_start;
    std::vector<double> w(v.size(), 0.0), G(S, 0.0);

    auto sweep = [&](const std::vector<double>& start, std::vector<double>& out) {
        const double* next = start.data();  // epoch-0 values close the day
        for (int h = m - 1; h >= 0; --h) {
            ops.adjust((h + 1) % m, next, G.data());
            double* dst = out.data() + static_cast<std::size_t>(h) * S;
            ops.exogenous(h, G.data(), dst);
            for (int x = 0; x <= X; ++x)
                for (int y = 0; y <= ops.y_cap(x); ++y) dst[ops.cell(x, y)] += ops.holding(x);
            next = dst;
        }
    };

    double span = std::numeric_limits<double>::infinity();
    int it = 0;
    for (it = 1; it <= options.max_days; ++it) {
        sweep(v, w);
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (int x = 0; x <= X; ++x) {
            for (int y = 0; y <= ops.y_cap(x); ++y) {
                double d = w[ops.cell(x, y)] - v[ops.cell(x, y)];
                lo = std::min(lo, d);
                hi = std::max(hi, d);
            }
        }
        const double ref = w[0];
        const double g = ref / m;
        for (int h = 0; h < m; ++h) {
            double* dst = w.data() + static_cast<std::size_t>(h) * S;
            for (int x = 0; x <= X; ++x)
                for (int y = 0; y <= ops.y_cap(x); ++y) dst[ops.cell(x, y)] += -ref + h * g;
        }
        std::swap(v, w);
        model.gamma = g;
        span = hi - lo;
        if (span < options.tol) break;
    }
    model.iterations = std::min(it, options.max_days);
    model.values = std::move(v);

    // Residuals of the per-epoch equation.
    double res = 0.0;
    std::vector<double> next_exp(S);
    model.expected_next.assign(model.values.size(), 0.0);
    for (int h = 0; h < m; ++h) {
        const double* vnext = model.values.data() + static_cast<std::size_t>((h + 1) % m) * S;
        ops.adjust((h + 1) % m, vnext, G.data());
        ops.exogenous(h, G.data(), next_exp.data());
        const double* vh = model.values.data() + static_cast<std::size_t>(h) * S;
        for (int x = 0; x <= X; ++x) {
            for (int y = 0; y <= ops.y_cap(x); ++y) {
                const std::size_t c = ops.cell(x, y);
                res = std::max(res, std::abs(ops.holding(x) - model.gamma + next_exp[c] - vh[c]));
            }
        }
        ops.exogenous(h, vnext, model.expected_next.data() + static_cast<std::size_t>(h) * S);
    }
    model.residual = res;
    if (span >= options.tol && res > 1e-8)
        throw NumericalError("pool " + std::to_string(j) + " solve did not converge: residual " + std::to_string(res));
    return model;
}

std::vector<double> pool_model_residuals(const SystemConfig& cfg, const KbarEstimate& kbar, const PoolModel& model) {
    const int m = cfg.epochs_per_day;
    PoolOperators ops(cfg, model.pool, kbar, model.bounds);
    const int S = ops.stride();
    std::vector<double> G(S), next_exp(S), out;
    for (int h = 0; h < m; ++h) {
        const double* vnext = model.values.data() + static_cast<std::size_t>((h + 1) % m) * S;
        ops.adjust((h + 1) % m, vnext, G.data());
        ops.exogenous(h, G.data(), next_exp.data());
        for (int x = 0; x <= model.bounds.x_max; ++x) {
            for (int y = 0; y <= ops.y_cap(x); ++y) {
                const std::size_t c = ops.cell(x, y);
                out.push_back(ops.holding(x) - model.gamma + next_exp[c] - model.values[model.index(h, x, y)]);
            }
        }
    }
    return out;
}

}  // namespace overflow
