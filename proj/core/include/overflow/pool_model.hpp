#pragma once

#include <cstddef>
#include <span>
#include <unordered_map>
#include <vector>

#include "overflow/system.hpp"
#include "overflow/trajectory.hpp"

namespace overflow {

struct PoolBounds {
    int x_max = 0;
    int y_max = 0;
};

// x_max = N + ceil(6 sqrt(Lambda/mu)) + 20; y_max covers N mu + 6 sd of the
// midnight to-depart draw (capped at N).
PoolBounds default_pool_bounds(const SystemConfig& cfg, int j);
std::vector<PoolBounds> default_pool_bounds(const SystemConfig& cfg);

// Averaged routing rows seen from one pool's local state.
struct KbarRates {
    std::vector<double> out;  // kappa(k|s,j) for class j, k = 0..J-1 (entry j is waiting)
    std::vector<double> in;   // kappa(j|s,i) * 1[q_i > 0] for classes i != j (entry j unused)
};

class KbarEstimate {
public:
    KbarEstimate() = default;
    KbarEstimate(const SystemConfig& cfg, std::vector<PoolBounds> bounds);

    // Everything waits, nothing flows in.
    static KbarEstimate wait_only(const SystemConfig& cfg, std::vector<PoolBounds> bounds);

    void add(const State& s, const AtomicDistribution& kappa, const SystemConfig& cfg);

    // Bucket average, falling back to the epoch marginal, then to waiting.
    KbarRates rates(int j, int x, int y, int h) const;
    double visits(int j, int x, int y, int h) const;
    const std::vector<PoolBounds>& bounds() const { return bounds_; }
    int pools() const { return pools_; }

private:
    struct Accum {
        double visits = 0.0;
        std::vector<double> out;
        std::vector<double> in;
    };
    long key(int j, int x, int y, int h) const;
    void accumulate(Accum& a, int j, const State& s, const AtomicDistribution& kappa, const SystemConfig& cfg) const;
    KbarRates average(const Accum& a) const;

    int pools_ = 0;
    int epochs_ = 0;
    std::vector<PoolBounds> bounds_;
    std::vector<std::unordered_map<long, Accum>> buckets_;
    std::vector<std::vector<Accum>> marginal_;
};

KbarEstimate estimate_kbar(std::span<const Trajectory> data, const SystemConfig& cfg,
                           std::vector<PoolBounds> bounds = {});

struct PoolModelOptions {
    double tol = 1e-9;          // span of the daily value change
    int max_days = 100000;      // iteration cap (one sweep = one day)
    const std::vector<double>* warm_start = nullptr;  // previous values table, same bounds
};

// Post-action single-pool model. Tables are indexed [h][x][y] with y <= min(x, N, y_max).
class PoolModel {
public:
    int pool = 0;
    int epochs = 1;
    int servers = 1;
    PoolBounds bounds;
    double gamma = 0.0;      // per-epoch average cost of the pool system
    double residual = 0.0;   // max |Poisson-equation residual|
    int iterations = 0;
    std::vector<double> values;         // v_j(x, y, h)
    std::vector<double> expected_next;  // E[v_j(s') | s+ = (x, y, h)], no routing adjustment

    std::size_t index(int h, int x, int y) const {
        return (static_cast<std::size_t>(h) * (bounds.x_max + 1) + x) * (bounds.y_max + 1) + y;
    }
    // Lookups clamp to the truncation box.
    double value(int x, int y, int h) const;
    double expected_next_value(int x, int y, int h) const;
};

PoolModel build_pool_model(const SystemConfig& cfg, int j, const KbarEstimate& kbar,
                           const PoolModelOptions& options = {});

// Poisson-equation residuals at every state of the truncation (for tests).
std::vector<double> pool_model_residuals(const SystemConfig& cfg, const KbarEstimate& kbar, const PoolModel& model);

}  // namespace overflow
