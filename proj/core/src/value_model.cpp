#include "overflow/value_model.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "overflow/errors.hpp"

namespace overflow {

std::size_t feature_count(const SystemConfig& cfg, std::span<const PoolModel> pools) {
    return (pools.empty() ? 1 : 2) + 5 * static_cast<std::size_t>(cfg.num_pools);
}

std::vector<double> features(const State& s, std::span<const PoolModel> pools, const SystemConfig& cfg) {
    std::vector<double> phi;
    phi.reserve(feature_count(cfg, pools));
    phi.push_back(1.0);
    if (!pools.empty()) {
        double vd = 0.0;
        for (int j = 0; j < cfg.num_pools; ++j) vd += pools[j].value(s.x[j], s.y[j], s.epoch);
        phi.push_back(vd);
    }
    for (int j = 0; j < cfg.num_pools; ++j) {
        const double x = s.x[j];
        const double y = s.y[j];
        phi.insert(phi.end(), {x, x * x, y, y * y, x * y});
    }
    return phi;
}

std::vector<double> expected_features(const State& s, const SystemAction& f, const SystemConfig& cfg,
                                      std::span<const PoolModel> pools) {
    const State post = apply_action(s, f, cfg);
    const int h = post.epoch;
    const int m = cfg.epochs_per_day;
    std::vector<double> phi;
    phi.reserve(feature_count(cfg, pools));
    phi.push_back(1.0);
    if (!pools.empty()) {
        double vd = 0.0;
        for (int j = 0; j < cfg.num_pools; ++j) vd += pools[j].expected_next_value(post.x[j], post.y[j], h);
        phi.push_back(vd);
    }
    for (int j = 0; j < cfg.num_pools; ++j) {
        const double x = post.x[j];
        const double y = post.y[j];
        const double lam = cfg.arrivals[j][h];
        double ex, ex2, ey, ey2, exy;
        if (h == 0) {
            const double z = std::min(post.x[j], cfg.servers[j]);
            const double mu = cfg.discharge_prob[j];
            const double eb = z * mu;
            const double vb = z * mu * (1.0 - mu);
            if (m == 1) {
                ex = x + lam - eb;
                ex2 = lam + vb + ex * ex;
                ey = ey2 = exy = 0.0;
            } else {
                ex = x + lam;
                ex2 = lam + ex * ex;
                ey = eb;
                ey2 = vb + eb * eb;
                exy = ex * eb;
            }
        } else {
            const double p = discharge_prob(cfg, j, h);
            const double ed = y * p;
            const double vd = y * p * (1.0 - p);
            const double ed2 = vd + ed * ed;
            ex = x + lam - ed;
            ex2 = lam + vd + ex * ex;
            ey = y - ed;
            ey2 = vd + ey * ey;
            exy = (x + lam) * (y - ed) - (y * ed - ed2);
        }
        phi.insert(phi.end(), {ex, ex2, ey, ey2, exy});
    }
    return phi;
}

double EpochValueModel::value(int epoch, const std::vector<double>& phi) const {
    const auto& b = beta[epoch];
    double acc = 0.0;
    for (int k = 0; k < dim; ++k) acc += b[k] * phi[k];
    return acc;
}

EpochValueModel fit_epoch_models(std::span<const FitSegment> segments, int epochs, double ridge) {
    std::size_t n = 0;
    std::size_t pairs = 0;
    int K = -1;
    double cost_sum = 0.0;
    for (const auto& seg : segments) {
        for (const auto& smp : seg) {
            if (K < 0) K = static_cast<int>(smp.phi.size());
            if (static_cast<int>(smp.phi.size()) != K) throw std::invalid_argument("inconsistent feature sizes");
            if (smp.epoch < 0 || smp.epoch >= epochs) throw std::invalid_argument("epoch out of range");
            cost_sum += smp.cost;
            ++n;
        }
        if (seg.size() > 1) pairs += seg.size() - 1;
    }
    if (pairs == 0) throw std::invalid_argument("fit_epoch_models: need at least one transition");

    EpochValueModel model;
    model.epochs = epochs;
    model.dim = K;
    model.gamma = cost_sum / static_cast<double>(n);
    model.advantage_offset.assign(epochs, 0.0);

    // Column scales for conditioning.
    std::vector<double> scale(K, 0.0);
    for (const auto& seg : segments)
        for (const auto& smp : seg)
            for (int k = 0; k < K; ++k) scale[k] += smp.phi[k] * smp.phi[k];
    for (int k = 0; k < K; ++k) {
        scale[k] = std::sqrt(scale[k] / static_cast<double>(n));
        if (!(scale[k] > 0.0)) scale[k] = 1.0;
    }

    const int D = epochs * K;
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(D, D);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(D);
    Eigen::VectorXd cur(K), nxt(K);
    for (const auto& seg : segments) {
        for (std::size_t t = 0; t + 1 < seg.size(); ++t) {
            const FitSample& a = seg[t];
            const FitSample& c = seg[t + 1];
            for (int k = 0; k < K; ++k) {
                cur[k] = a.phi[k] / scale[k];
                nxt[k] = c.phi[k] / scale[k];
            }
            const int r0 = a.epoch * K;
            const int c0 = c.epoch * K;
            M.block(r0, r0, K, K).noalias() += cur * cur.transpose();
            M.block(r0, c0, K, K).noalias() -= cur * nxt.transpose();
            b.segment(r0, K) += cur * (a.cost - model.gamma);
        }
    }
    M /= static_cast<double>(pairs);
    b /= static_cast<double>(pairs);
    M.diagonal().array() += ridge;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(M);
    Eigen::VectorXd beta = lu.solve(b);
    if (!beta.allFinite())
        throw NumericalError("value fit: singular system after regularization");

    model.beta.assign(epochs, std::vector<double>(K, 0.0));
    for (int h = 0; h < epochs; ++h)
        for (int k = 0; k < K; ++k) model.beta[h][k] = beta[h * K + k] / scale[k];
    return model;
}

double advantage(double cost, const std::vector<double>& phi, const std::vector<double>& expected_phi_next, int epoch,
                 const EpochValueModel& model) {
    const int next = (epoch + 1) % model.epochs;
    return cost - model.gamma + model.value(next, expected_phi_next) - model.value(epoch, phi);
}

std::vector<double> normalize_advantages(std::vector<double>& adv, const std::vector<int>& epochs, int num_epochs) {
    std::vector<double> sum(num_epochs, 0.0), count(num_epochs, 0.0);
    for (std::size_t t = 0; t < adv.size(); ++t) {
        sum[epochs[t]] += adv[t];
        count[epochs[t]] += 1.0;
    }
    std::vector<double> offset(num_epochs, 0.0);
    for (int h = 0; h < num_epochs; ++h)
        if (count[h] > 0.0) offset[h] = sum[h] / count[h];
    for (std::size_t t = 0; t < adv.size(); ++t) adv[t] -= offset[epochs[t]];
    return offset;
}

}  // namespace overflow
