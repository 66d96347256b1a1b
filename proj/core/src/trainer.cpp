#include "overflow/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <thread>

#include "overflow/errors.hpp"
#include "overflow/pool_model.hpp"
#include "overflow/value_model.hpp"

namespace overflow {

std::vector<std::string> validate_train_config(const TrainConfig& cfg) {
    std::vector<std::string> out;
    if (cfg.iterations < 0) out.push_back("iterations must be >= 0");
    if (cfg.days_per_actor < 1) out.push_back("days_per_actor must be >= 1");
    if (cfg.actors < 1) out.push_back("actors must be >= 1");
    if (cfg.epochs < 1) out.push_back("epochs must be >= 1");
    if (cfg.reuse < 0) out.push_back("reuse must be >= 0");
    if (!(cfg.tolerance > 0.0)) out.push_back("tolerance must be > 0");
    if (!(cfg.clip.initial > 0.0) || !(cfg.clip.later > 0.0)) out.push_back("clip sizes must be > 0");
    if (cfg.burn_in_days < 0) out.push_back("burn_in_days must be >= 0");
    if (cfg.evaluation_days < 20) out.push_back("evaluation_days must be >= 20");
    if (cfg.minibatch < 1) out.push_back("minibatch must be >= 1");
    if (!(cfg.learning_rate > 0.0)) out.push_back("learning_rate must be > 0");
    return out;
}

namespace {

struct StepInfo {
    const State* state;
    const SampledAction* sampled;
    double cost;
    int day;
    const ExogenousDraw* draw;
};

template <class Fn>
void simulate(const PolicySpec& policy, const SystemConfig& cfg, int days, std::uint64_t seed, int burn_in_days,
              DecisionMode mode, Fn&& on_step) {
    Rng rng(seed);
    const int m = cfg.epochs_per_day;
    State s = State::empty(cfg.num_pools);
    for (int day = -burn_in_days; day < days; ++day) {
        for (int h = 0; h < m; ++h) {
            SampledAction sa = sample_action(policy, s, cfg, rng, mode);
            const double g = cost(s, sa.action, cfg);
            State post = apply_action(s, sa.action, cfg);
            ExogenousDraw draw = sample_exogenous(cfg, post, rng);
            if (day >= 0) on_step(StepInfo{&s, &sa, g, day, &draw});
            s = advance(post, draw, cfg);
        }
    }
}

}  // namespace

Trajectory rollout(const PolicySpec& policy, const SystemConfig& cfg, int days, std::uint64_t seed, int burn_in_days,
                   DecisionMode mode, bool record_contexts) {
    Trajectory t;
    t.seed = seed;
    t.steps.reserve(static_cast<std::size_t>(days) * cfg.epochs_per_day);
    simulate(policy, cfg, days, seed, burn_in_days, mode, [&](const StepInfo& info) {
        StepRecord rec;
        rec.state = *info.state;
        rec.action = info.sampled->action;
        rec.cost = info.cost;
        rec.kappa = info.sampled->kappa;
        rec.day = info.day;
        if (record_contexts) {
            rec.contexts = info.sampled->steps.empty() || mode == DecisionMode::Batched
                               ? batched_contexts(rec.state, rec.action, rec.kappa)
                               : sequential_contexts(rec.state, info.sampled->steps);
        }
        t.steps.push_back(std::move(rec));
    });
    return t;
}

std::vector<Trajectory> parallel_rollouts(const PolicySpec& policy, const SystemConfig& cfg, int days, int actors,
                                          std::uint64_t base_seed, int burn_in_days, DecisionMode mode, int threads) {
    std::vector<Trajectory> out(actors);
    int workers = threads > 0 ? threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    workers = std::min(workers, actors);
    auto run = [&](int k) {
        out[k] = rollout(policy, cfg, days, derive_seed(base_seed, static_cast<std::uint64_t>(k)), burn_in_days, mode);
        out[k].actor = k;
    };
    if (workers <= 1) {
        for (int k = 0; k < actors; ++k) run(k);
        return out;
    }
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (int k = w; k < actors; k += workers) run(k);
        });
    }
    for (auto& th : pool) th.join();
    return out;
}

Evaluation evaluate(const PolicySpec& policy, const SystemConfig& cfg, int days, std::uint64_t seed,
                    int burn_in_days) {
    constexpr int kBatches = 20;
    if (days < kBatches) throw std::invalid_argument("evaluate: need at least 20 days for batch means");
    std::vector<double> daily(days, 0.0);
    double overflowed = 0.0;
    double arrivals = 0.0;
    double queue = 0.0;
    long epochs = 0;
    const int J = cfg.num_pools;
    simulate(policy, cfg, days, seed, burn_in_days, DecisionMode::Batched, [&](const StepInfo& info) {
        daily[info.day] += info.cost;
        for (int i = 0; i < J; ++i) {
            queue += queue_length(*info.state, cfg, i);
            arrivals += info.draw->a[i];
            for (int j = 0; j < J; ++j)
                if (j != i) overflowed += info.sampled->action(i, j);
        }
        ++epochs;
    });
    Evaluation ev;
    ev.days = days;
    // Batch means over 20 equal batches (trailing days that do not fill a batch are dropped).
    const int per = days / kBatches;
    std::vector<double> means(kBatches, 0.0);
    for (int b = 0; b < kBatches; ++b) {
        for (int d = b * per; d < (b + 1) * per; ++d) means[b] += daily[d];
        means[b] /= per;
    }
    ev.mean = std::accumulate(means.begin(), means.end(), 0.0) / kBatches;
    double var = 0.0;
    for (double x : means) var += (x - ev.mean) * (x - ev.mean);
    var /= (kBatches - 1);
    ev.half_width = 1.96 * std::sqrt(var) / std::sqrt(static_cast<double>(kBatches));
    ev.overflow_fraction = arrivals > 0.0 ? overflowed / arrivals : 0.0;
    ev.mean_queue = epochs > 0 ? queue / epochs : 0.0;
    return ev;
}

void warm_start_network(NetworkParams& net, const PolicySpec& target, const SystemConfig& cfg, int days,
                        std::uint64_t seed, int passes, double lr) {
    Trajectory t = rollout(target, cfg, days, seed, 50, DecisionMode::Batched, false);
    std::vector<ImitationSample> samples;
    for (const auto& rec : t.steps) {
        bool queued = false;
        for (int i = 0; i < cfg.num_pools; ++i)
            if (queue_length(rec.state, cfg, i) > 0 && feasible_pools(rec.state, i, cfg).size() > 1) queued = true;
        if (queued) samples.push_back({rec.state, rec.kappa});
    }
    if (samples.empty()) return;
    OptimizerState opt = OptimizerState::for_params(net, lr);
    Rng rng(derive_seed(seed, 0x1A11));
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<ImitationSample> batch;
    std::vector<double> grad;
    const std::size_t mb = 512;
    for (int p = 0; p < passes; ++p) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += mb) {
            batch.clear();
            for (std::size_t k = start; k < std::min(order.size(), start + mb); ++k) batch.push_back(samples[order[k]]);
            imitation_loss_grad(net, batch, cfg, &grad);
            adam_step(net.values, grad, opt);
        }
    }
}

TrainState initial_train_state(const NetworkParams& net, const TrainConfig& cfg) {
    TrainState st;
    st.params = net;
    st.optimizer = OptimizerState::for_params(net, cfg.learning_rate);
    return st;
}

namespace {

std::uint64_t iteration_seed(const TrainConfig& cfg, int iteration) {
    return derive_seed(cfg.seed, 0x100000ULL + static_cast<std::uint64_t>(iteration));
}

std::uint64_t evaluation_seed(const TrainConfig& cfg) { return derive_seed(cfg.seed, 0xE7A1ULL); }

std::vector<Trajectory> collect(const TrainConfig& cfg, const SystemConfig& system, const std::vector<double>& values,
                                const NetworkParams& layout, int iteration) {
    auto params = std::make_shared<NetworkParams>(layout);
    params->values = values;
    PolicySpec policy = NetworkPolicy{params};
    auto data = parallel_rollouts(policy, system, cfg.days_per_actor, cfg.actors, iteration_seed(cfg, iteration),
                                  cfg.burn_in_days, cfg.mode, cfg.threads);
    for (auto& t : data) t.iteration = iteration;
    return data;
}

double mean_daily_cost(const std::vector<Trajectory>& data, int m) {
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& t : data) {
        for (const auto& rec : t.steps) total += rec.cost;
        n += t.steps.size();
    }
    return n == 0 ? 0.0 : total / static_cast<double>(n) * m;
}

}  // namespace

TrainState train(const TrainConfig& cfg, const SystemConfig& system, TrainState state,
                 const ReportCallback& on_iteration) {
    auto problems = validate_train_config(cfg);
    if (!problems.empty()) throw ConfigError("invalid train config: " + problems.front());
    require_valid(system);
    const int m = system.epochs_per_day;
    const std::uint64_t eval_seed = evaluation_seed(cfg);

    if (state.iteration == 0 && state.reports.empty()) {
        auto snapshot = std::make_shared<NetworkParams>(state.params);
        auto t0 = std::chrono::steady_clock::now();
        Evaluation ev = evaluate(NetworkPolicy{snapshot}, system, cfg.evaluation_days, eval_seed, cfg.burn_in_days);
        IterationReport rep;
        rep.iteration = 0;
        rep.eval_cost = ev.mean;
        rep.eval_half_width = ev.half_width;
        rep.learning_rate = state.optimizer.lr;
        rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        state.initial_eval = ev.mean;
        state.reports.push_back(rep);
        if (on_iteration) on_iteration(rep, state);
    }

    // Regenerate data from earlier iterations that is still inside the reuse window.
    std::map<int, std::vector<Trajectory>> window;
    for (const auto& [it, values] : state.snapshots) window[it] = collect(cfg, system, values, state.params, it);

    const auto bounds = default_pool_bounds(system);
    while (state.iteration < cfg.iterations && !state.converged) {
        const int r = state.iteration + 1;
        auto t0 = std::chrono::steady_clock::now();
        IterationReport rep;
        rep.iteration = r;
        rep.clip = cfg.clip.at(r);

        // (1) rollouts under the frozen parameters.
        window[r] = collect(cfg, system, state.params.values, state.params, r);
        state.snapshots.push_back({r, state.params.values});
        while (!window.empty() && window.begin()->first < r - cfg.reuse) window.erase(window.begin());
        while (!state.snapshots.empty() && state.snapshots.front().first < r - cfg.reuse)
            state.snapshots.erase(state.snapshots.begin());
        rep.train_cost = mean_daily_cost(window[r], m);

        // (2) merged data.
        std::vector<const Trajectory*> data;
        for (const auto& [it, trajs] : window)
            for (const auto& t : trajs) data.push_back(&t);

        // (3) policy evaluation.
        std::vector<PoolModel> pools;
        if (cfg.use_vd_basis) {
            KbarEstimate kbar(system, bounds);
            for (const Trajectory* t : data)
                for (const auto& rec : t->steps) kbar.add(rec.state, rec.kappa, system);
            for (int j = 0; j < system.num_pools; ++j) pools.push_back(build_pool_model(system, j, kbar));
        }
        std::vector<FitSegment> segments;
        segments.reserve(data.size());
        for (const Trajectory* t : data) {
            FitSegment seg;
            seg.reserve(t->steps.size());
            for (const auto& rec : t->steps) seg.push_back({features(rec.state, pools, system), rec.cost, rec.state.epoch});
            segments.push_back(std::move(seg));
        }
        EpochValueModel model = fit_epoch_models(segments, m);
        rep.value_gamma = model.gamma;

        // (4) advantages, normalized per epoch.
        std::vector<double> adv;
        std::vector<int> epochs;
        std::vector<PpoSample> samples;
        std::size_t si = 0;
        for (const Trajectory* t : data) {
            const FitSegment& seg = segments[si++];
            for (std::size_t k = 0; k < t->steps.size(); ++k) {
                const StepRecord& rec = t->steps[k];
                auto next = expected_features(rec.state, rec.action, system, pools);
                adv.push_back(advantage(rec.cost, seg[k].phi, next, rec.state.epoch, model));
                epochs.push_back(rec.state.epoch);
                samples.push_back({std::span<const DecisionContext>(rec.contexts), 0.0});
            }
        }
        segments.clear();
        segments.shrink_to_fit();
        model.advantage_offset = normalize_advantages(adv, epochs, m);
        for (std::size_t k = 0; k < samples.size(); ++k) samples[k].advantage = adv[k];
        rep.samples = static_cast<int>(samples.size());

        // (5) surrogate minimization with the halving safeguard.
        const double eps = rep.clip;
        double lr = cfg.learning_rate;
        double current = ppo_loss(state.params, samples, eps, system);
        rep.loss_before = current;
        Rng shuffle_rng(derive_seed(cfg.seed, 0x5000000ULL + static_cast<std::uint64_t>(r)));
        std::vector<std::size_t> order(samples.size());
        std::iota(order.begin(), order.end(), 0);
        std::vector<PpoSample> batch;
        std::vector<double> grad;
        int halvings = 0;
        for (int pass = 0; pass < cfg.epochs && halvings <= cfg.max_halvings; ++pass) {
            std::shuffle(order.begin(), order.end(), shuffle_rng);
            while (true) {
                std::vector<double> saved = state.params.values;
                OptimizerState saved_opt = state.optimizer;
                state.optimizer.lr = lr;
                for (std::size_t start = 0; start < order.size(); start += cfg.minibatch) {
                    batch.clear();
                    const std::size_t end = std::min(order.size(), start + cfg.minibatch);
                    for (std::size_t k = start; k < end; ++k) batch.push_back(samples[order[k]]);
                    ppo_loss_grad(state.params, batch, eps, system, grad);
                    adam_step(state.params.values, grad, state.optimizer);
                }
                double after = ppo_loss(state.params, samples, eps, system);
                if (after <= current) {
                    current = after;
                    break;
                }
                state.params.values = std::move(saved);
                state.optimizer = std::move(saved_opt);
                lr *= 0.5;
                if (++halvings > cfg.max_halvings) break;
            }
        }
        state.optimizer.lr = cfg.learning_rate;
        rep.loss_after = current;
        rep.learning_rate = lr;

        // (6) evaluation and stopping rules.
        auto snapshot = std::make_shared<NetworkParams>(state.params);
        Evaluation ev = evaluate(NetworkPolicy{snapshot}, system, cfg.evaluation_days, eval_seed, cfg.burn_in_days);
        rep.eval_cost = ev.mean;
        rep.eval_half_width = ev.half_width;
        rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        state.iteration = r;
        state.reports.push_back(rep);
        if (state.initial_eval > 0.0 && ev.mean > cfg.divergence_factor * state.initial_eval)
            throw NumericalError("training diverged at iteration " + std::to_string(r) + ": evaluated cost " +
                                 std::to_string(ev.mean) + " vs initial " + std::to_string(state.initial_eval));
        if (state.last_train_cost && std::abs(rep.train_cost - *state.last_train_cost) < cfg.tolerance)
            state.converged = true;
        state.last_train_cost = rep.train_cost;
        if (on_iteration) on_iteration(rep, state);
    }
    return state;
}

}  // namespace overflow
