#include "overflow/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include "overflow/errors.hpp"

namespace overflow {

std::string structure_name(NetStructure s) {
    switch (s) {
        case NetStructure::FullyConnected: return "fully-connected";
        case NetStructure::FullySeparate: return "fully-separate";
        case NetStructure::PartiallyShared: return "partially-shared";
    }
    return "unknown";
}

NetStructure parse_structure(const std::string& name) {
    if (name == "fully-connected") return NetStructure::FullyConnected;
    if (name == "fully-separate") return NetStructure::FullySeparate;
    if (name == "partially-shared") return NetStructure::PartiallyShared;
    throw ConfigError("unknown network structure '" + name + "'");
}

NetworkParams::NetworkParams(NetStructure structure, int pools, int epochs, std::vector<int> hidden)
    : structure_(structure), pools_(pools), epochs_(epochs), hidden_(std::move(hidden)) {
    if (pools < 1 || epochs < 1) throw ConfigError("network needs pools >= 1 and epochs >= 1");
    for (int w : hidden_)
        if (w < 1) throw ConfigError("hidden layer widths must be >= 1");
    if (structure_ == NetStructure::PartiallyShared && hidden_.empty())
        throw ConfigError("partially-shared network needs at least one hidden layer");

    std::size_t offset = 0;
    auto make_stack = [&](int in, const std::vector<int>& widths) {
        std::vector<Layer> layers;
        for (int w : widths) {
            Layer l{in, w, offset};
            offset += l.size();
            layers.push_back(l);
            in = w;
        }
        return layers;
    };
    const int in = input_size();
    const int out = output_size();
    std::vector<int> full = hidden_;
    full.push_back(out);
    switch (structure_) {
        case NetStructure::FullyConnected: {
            auto stack = make_stack(in, full);
            paths_.assign(epochs_, stack);
            break;
        }
        case NetStructure::FullySeparate:
            for (int h = 0; h < epochs_; ++h) paths_.push_back(make_stack(in, full));
            break;
        case NetStructure::PartiallyShared: {
            auto trunk = make_stack(in, hidden_);
            for (int h = 0; h < epochs_; ++h) {
                auto path = trunk;
                auto head = make_stack(hidden_.back(), {out});
                path.push_back(head.front());
                paths_.push_back(path);
            }
            break;
        }
    }
    values.assign(offset, 0.0);
}

int NetworkParams::input_size() const {
    return structure_ == NetStructure::FullyConnected ? 2 * pools_ + epochs_ : 2 * pools_;
}

bool NetworkParams::is_output_layer(const Layer& l) const {
    for (const auto& p : paths_)
        if (p.back().offset == l.offset) return true;
    return false;
}

void NetworkParams::initialize(Rng& rng) {
    std::fill(values.begin(), values.end(), 0.0);
    std::set<std::size_t> done;
    for (const auto& p : paths_) {
        for (const Layer& l : p) {
            if (!done.insert(l.offset).second) continue;
            if (is_output_layer(l)) continue;
            double bound = 1.0 / std::sqrt(static_cast<double>(l.in));
            std::uniform_real_distribution<double> dist(-bound, bound);
            for (int r = 0; r < l.out; ++r)
                for (int c = 0; c < l.in; ++c) values[l.weight(r, c)] = dist(rng);
        }
    }
}

std::vector<double> input_encoding(const State& s, NetStructure structure, const SystemConfig& cfg) {
    const int J = cfg.num_pools;
    std::vector<double> in;
    in.reserve(2 * J + cfg.epochs_per_day);
    for (int j = 0; j < J; ++j) in.push_back(static_cast<double>(s.x[j]) / cfg.servers[j]);
    for (int j = 0; j < J; ++j) in.push_back(static_cast<double>(s.y[j]) / cfg.servers[j]);
    if (structure == NetStructure::FullyConnected) {
        for (int h = 0; h < cfg.epochs_per_day; ++h) in.push_back(h == s.epoch ? 1.0 : 0.0);
    }
    return in;
}

std::vector<double> network_logits(const NetworkParams& params, const std::vector<double>& input, int epoch,
                                   ForwardCache* cache) {
    if (static_cast<int>(input.size()) != params.input_size())
        throw std::invalid_argument("network input has wrong dimension");
    if (epoch < 0 || epoch >= params.epochs()) throw std::invalid_argument("epoch out of range for network");
    const auto& path = params.path(epoch);
    const double* w = params.values.data();
    std::vector<double> a = input;
    if (cache) {
        cache->epoch = epoch;
        cache->activations.clear();
        cache->activations.push_back(a);
    }
    for (std::size_t li = 0; li < path.size(); ++li) {
        const Layer& l = path[li];
        std::vector<double> z(l.out);
        for (int r = 0; r < l.out; ++r) {
            double acc = w[l.bias(r)];
            const double* row = w + l.weight(r, 0);
            for (int c = 0; c < l.in; ++c) acc += row[c] * a[c];
            z[r] = (li + 1 < path.size()) ? std::tanh(acc) : acc;
        }
        a = std::move(z);
        if (cache) cache->activations.push_back(a);
    }
    return a;
}

void backprop_logits(const NetworkParams& params, const ForwardCache& cache, const std::vector<double>& dlogits,
                     std::vector<double>& grad) {
    const auto& path = params.path(cache.epoch);
    const double* w = params.values.data();
    std::vector<double> delta = dlogits;
    for (std::size_t li = path.size(); li-- > 0;) {
        const Layer& l = path[li];
        const std::vector<double>& a = cache.activations[li];
        for (int r = 0; r < l.out; ++r) {
            double d = delta[r];
            if (d == 0.0) continue;
            grad[l.bias(r)] += d;
            double* g = grad.data() + l.weight(r, 0);
            for (int c = 0; c < l.in; ++c) g[c] += d * a[c];
        }
        if (li == 0) break;
        std::vector<double> prev(l.in, 0.0);
        for (int r = 0; r < l.out; ++r) {
            double d = delta[r];
            if (d == 0.0) continue;
            const double* row = w + l.weight(r, 0);
            for (int c = 0; c < l.in; ++c) prev[c] += row[c] * d;
        }
        for (int c = 0; c < l.in; ++c) prev[c] *= 1.0 - a[c] * a[c];
        delta = std::move(prev);
    }
}

std::vector<double> masked_log_softmax(const std::vector<double>& logits, const State& s, const SystemConfig& cfg) {
    const int J = cfg.num_pools;
    std::vector<double> out(static_cast<std::size_t>(J) * J, -std::numeric_limits<double>::infinity());
    for (int i = 0; i < J; ++i) {
        auto pools = feasible_pools(s, i, cfg);
        double mx = -std::numeric_limits<double>::infinity();
        for (int j : pools) mx = std::max(mx, logits[i * J + j]);
        double sum = 0.0;
        for (int j : pools) sum += std::exp(logits[i * J + j] - mx);
        double lse = mx + std::log(sum);
        for (int j : pools) out[i * J + j] = logits[i * J + j] - lse;
    }
    return out;
}

AtomicDistribution forward(const NetworkParams& params, const State& s, const SystemConfig& cfg) {
    if (params.pools() != cfg.num_pools || params.epochs() != cfg.epochs_per_day)
        throw std::invalid_argument("network dimensions do not match the system");
    auto logits = network_logits(params, input_encoding(s, params.structure(), cfg), s.epoch);
    auto lsm = masked_log_softmax(logits, s, cfg);
    const int J = cfg.num_pools;
    AtomicDistribution k(J);
    for (int i = 0; i < J; ++i)
        for (int j = 0; j < J; ++j) k(i, j) = std::exp(lsm[i * J + j]);
    return k;
}

std::vector<DecisionContext> batched_contexts(const State& s, const SystemAction& f, const AtomicDistribution& kappa) {
    DecisionContext ctx;
    ctx.state = s;
    const int J = f.pools();
    for (int i = 0; i < J; ++i)
        for (int j = 0; j < J; ++j)
            if (f(i, j) > 0) ctx.terms.push_back({i, j, f(i, j), kappa(i, j)});
    return {std::move(ctx)};
}

std::vector<DecisionContext> sequential_contexts(const State& s, const std::vector<AtomicStep>& steps) {
    std::vector<DecisionContext> out;
    out.reserve(steps.size());
    for (const AtomicStep& st : steps) {
        DecisionContext ctx;
        ctx.state = s;
        ctx.state.x = st.x;
        ctx.terms.push_back({st.cls, st.pool, 1, st.kappa});
        out.push_back(std::move(ctx));
    }
    return out;
}

namespace {

double context_log_ratio(const NetworkParams& params, const DecisionContext& ctx, const SystemConfig& cfg,
                         ForwardCache* cache, std::vector<double>* lsm_out) {
    auto logits = network_logits(params, input_encoding(ctx.state, params.structure(), cfg), ctx.state.epoch, cache);
    auto lsm = masked_log_softmax(logits, ctx.state, cfg);
    const int J = cfg.num_pools;
    double lr = 0.0;
    for (const auto& t : ctx.terms) lr += t.count * (lsm[t.cls * J + t.pool] - std::log(t.kappa_old));
    if (lsm_out) *lsm_out = std::move(lsm);
    return lr;
}

double ppo_impl(const NetworkParams& params, std::span<const PpoSample> batch, double eps, const SystemConfig& cfg,
                std::vector<double>* grad) {
    if (batch.empty()) return 0.0;
    if (grad) grad->assign(params.size(), 0.0);
    const int J = cfg.num_pools;
    const double n = static_cast<double>(batch.size());
    double total = 0.0;
    std::vector<ForwardCache> caches;
    std::vector<std::vector<double>> lsms;
    for (std::size_t si = 0; si < batch.size(); ++si) {
        const PpoSample& sample = batch[si];
        const double A = sample.advantage;
        const std::size_t nc = sample.contexts.size();
        caches.resize(nc);
        lsms.resize(nc);
        double lr = 0.0;
        for (std::size_t c = 0; c < nc; ++c)
            lr += context_log_ratio(params, sample.contexts[c], cfg, grad ? &caches[c] : nullptr,
                                    grad ? &lsms[c] : nullptr);
        if (A == 0.0) continue;
        const double r = std::exp(lr);
        const double clipped = std::clamp(r, 1.0 - eps, 1.0 + eps);
        const double unc = r * A;
        const double clp = clipped * A;
        const double term = std::max(unc, clp);
        if (!std::isfinite(term) || std::isnan(lr))
            throw NumericalError("non-finite probability ratio at sample " + std::to_string(si));
        total += term;
        if (!grad || unc < clp) continue;
        // d term / d log r = A r on the unclipped branch.
        const double coef = A * r / n;
        std::vector<double> dlogits(static_cast<std::size_t>(J) * J);
        for (std::size_t c = 0; c < nc; ++c) {
            const DecisionContext& ctx = sample.contexts[c];
            std::fill(dlogits.begin(), dlogits.end(), 0.0);
            for (const auto& t : ctx.terms) {
                const int i = t.cls;
                for (int k = 0; k < J; ++k) {
                    double lp = lsms[c][i * J + k];
                    if (!std::isfinite(lp)) continue;
                    dlogits[i * J + k] += coef * t.count * ((k == t.pool ? 1.0 : 0.0) - std::exp(lp));
                }
            }
            backprop_logits(params, caches[c], dlogits, *grad);
        }
    }
    return total / n;
}

}  // namespace

double log_ratio(const NetworkParams& params, std::span<const DecisionContext> contexts, const SystemConfig& cfg) {
    double lr = 0.0;
    for (const auto& ctx : contexts) lr += context_log_ratio(params, ctx, cfg, nullptr, nullptr);
    return lr;
}

double ppo_loss(const NetworkParams& params, std::span<const PpoSample> batch, double eps, const SystemConfig& cfg) {
    return ppo_impl(params, batch, eps, cfg, nullptr);
}

double ppo_loss_grad(const NetworkParams& params, std::span<const PpoSample> batch, double eps,
                     const SystemConfig& cfg, std::vector<double>& grad) {
    return ppo_impl(params, batch, eps, cfg, &grad);
}

double imitation_loss_grad(const NetworkParams& params, std::span<const ImitationSample> batch,
                           const SystemConfig& cfg, std::vector<double>* grad) {
    if (grad) grad->assign(params.size(), 0.0);
    if (batch.empty()) return 0.0;
    const int J = cfg.num_pools;
    const double n = static_cast<double>(batch.size());
    double total = 0.0;
    ForwardCache cache;
    std::vector<double> dlogits(static_cast<std::size_t>(J) * J);
    for (const ImitationSample& smp : batch) {
        auto logits = network_logits(params, input_encoding(smp.state, params.structure(), cfg), smp.state.epoch,
                                     grad ? &cache : nullptr);
        auto lsm = masked_log_softmax(logits, smp.state, cfg);
        std::fill(dlogits.begin(), dlogits.end(), 0.0);
        for (int i = 0; i < J; ++i) {
            if (queue_length(smp.state, cfg, i) == 0) continue;
            double mass = 0.0;
            for (int j = 0; j < J; ++j) {
                double t = smp.target(i, j);
                if (t <= 0.0 || !std::isfinite(lsm[i * J + j])) continue;
                total -= t * lsm[i * J + j];
                mass += t;
            }
            for (int k = 0; k < J; ++k) {
                if (!std::isfinite(lsm[i * J + k])) continue;
                dlogits[i * J + k] = (mass * std::exp(lsm[i * J + k]) - smp.target(i, k)) / n;
            }
        }
        if (grad) backprop_logits(params, cache, dlogits, *grad);
    }
    return total / n;
}

OptimizerState OptimizerState::for_params(const NetworkParams& params, double lr) {
    OptimizerState opt;
    opt.m.assign(params.size(), 0.0);
    opt.v.assign(params.size(), 0.0);
    opt.lr = lr;
    return opt;
}

void adam_step(std::vector<double>& params, const std::vector<double>& grad, OptimizerState& opt) {
    if (grad.size() != params.size() || opt.m.size() != params.size() || opt.v.size() != params.size())
        throw std::invalid_argument("adam_step: shape mismatch");
    opt.step += 1;
    const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
    const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        opt.m[k] = opt.beta1 * opt.m[k] + (1.0 - opt.beta1) * grad[k];
        opt.v[k] = opt.beta2 * opt.v[k] + (1.0 - opt.beta2) * grad[k] * grad[k];
        double mhat = opt.m[k] / c1;
        double vhat = opt.v[k] / c2;
        params[k] -= opt.lr * mhat / (std::sqrt(vhat) + opt.epsilon);
    }
}

double ClipSchedule::at(int iteration) const {
    if (constant || iteration <= switch_after) return initial;
    return later;
}

}  // namespace overflow
