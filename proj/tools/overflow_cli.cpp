// Command-line front end: simulate, train, evaluate, compare, oracle, inspect-policy,
// export-preset, validate.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "overflow/errors.hpp"
#include "overflow/io.hpp"
#include "overflow/oracle.hpp"
#include "overflow/presets.hpp"
#include "overflow/trainer.hpp"

namespace fs = std::filesystem;
using namespace overflow;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitGeneric = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

void diagnose(const std::string& kind, const std::string& message, const json& extra = json::object()) {
    json d{{"level", "error"}, {"kind", kind}, {"message", message}};
    for (auto it = extra.begin(); it != extra.end(); ++it) d[it.key()] = it.value();
    std::cerr << d.dump() << '\n';
}

struct Source {
    std::string preset;
    std::string config;
    bool quick = false;
};

// Resolves --preset/--config. Config files get the ten-pool network defaults.
Preset resolve(const Source& src) {
    if (!src.preset.empty() && !src.config.empty()) throw ConfigError("give either --preset or --config, not both");
    Preset p;
    if (!src.config.empty()) {
        p.system = load_system(src.config);
        p.name = p.system.name.empty() ? fs::path(src.config).stem().string() : p.system.name;
        p.quick.days_per_actor = 1000;
        p.quick.iterations = 10;
        p.hidden = {34};
        p.initial_policy = "complete";
    } else if (!src.preset.empty()) {
        p = make_preset(src.preset);
    } else {
        throw ConfigError("one of --preset or --config is required");
    }
    auto violations = validate_config(p.system);
    if (!violations.empty()) {
        json list = json::array();
        for (const auto& v : violations) list.push_back({{"path", v.path}, {"message", v.message}});
        diagnose("config_invalid", std::to_string(violations.size()) + " config violation(s)",
                 {{"violations", list}});
        throw ConfigError("config invalid");
    }
    return p;
}

void add_source(CLI::App* cmd, Source& src) {
    cmd->add_option("--preset", src.preset, "Preset name")->check(CLI::IsMember(preset_names()));
    cmd->add_option("--config", src.config, "System config JSON file")->check(CLI::ExistingFile);
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.precision(10);
    return out;
}

std::string eval_line(const std::string& label, const Evaluation& ev) {
    std::ostringstream s;
    s.precision(6);
    s << label << ": mean daily cost " << ev.mean << " +/- " << ev.half_width << " (overflow fraction "
      << ev.overflow_fraction << ", " << ev.days << " days)";
    return s.str();
}

// ---- simulate ---------------------------------------------------------------

struct SimulateOpts {
    Source src;
    std::string policy = "empirical";
    int days = 2000;
    int burn_in = 50;
    std::uint64_t seed = 1;
    std::string out = "simulate";
};

int cmd_simulate(const SimulateOpts& o) {
    Preset p = resolve(o.src);
    const SystemConfig& cfg = p.system;
    PolicySpec policy = policy_from_name(o.policy, cfg);
    Trajectory t = rollout(policy, cfg, o.days, o.seed, o.burn_in, DecisionMode::Batched, false);

    const int J = cfg.num_pools;
    auto series = open_out(fs::path(o.out) / "series.csv");
    series << "day,epoch";
    for (int j = 0; j < J; ++j) series << ",x" << j << ",y" << j << ",q" << j;
    series << ",overflows,cost\n";
    double total_cost = 0.0, overflowed = 0.0, queued = 0.0;
    for (const auto& rec : t.steps) {
        series << rec.day << ',' << rec.state.epoch;
        int moved = 0;
        for (int j = 0; j < J; ++j) {
            series << ',' << rec.state.x[j] << ',' << rec.state.y[j] << ',' << queue_length(rec.state, cfg, j);
            queued += queue_length(rec.state, cfg, j);
            for (int k = 0; k < J; ++k)
                if (k != j) moved += rec.action(j, k);
        }
        overflowed += moved;
        total_cost += rec.cost;
        series << ',' << moved << ',' << rec.cost << '\n';
    }
    Evaluation ev = evaluate(policy, cfg, o.days, o.seed, o.burn_in);
    auto summary = open_out(fs::path(o.out) / "summary.csv");
    summary << "preset,policy,days,seed,mean_daily_cost,half_width,overflow_fraction,mean_queue\n";
    summary << p.name << ',' << policy_name(policy) << ',' << o.days << ',' << o.seed << ',' << ev.mean << ','
            << ev.half_width << ',' << ev.overflow_fraction << ',' << ev.mean_queue << '\n';
    std::cout << eval_line(p.name + " / " + policy_name(policy), ev) << '\n';
    return kExitOk;
}

// ---- evaluate / compare -----------------------------------------------------

struct CompareOpts {
    Source src;
    std::vector<std::string> policies{"complete", "midnight", "empirical"};
    int days = 2000;
    std::uint64_t seed = 1;
    std::string out;
};

int cmd_compare(const CompareOpts& o, bool single) {
    Preset p = resolve(o.src);
    struct Row {
        std::string label;
        Evaluation ev;
    };
    std::vector<Row> rows;
    for (const auto& name : o.policies) {
        PolicySpec policy = policy_from_name(name, p.system);
        rows.push_back({name, evaluate(policy, p.system, o.days, o.seed)});
        std::cout << eval_line(name, rows.back().ev) << '\n';
    }
    if (single) return kExitOk;
    std::size_t best = 0;
    for (std::size_t k = 1; k < rows.size(); ++k)
        if (rows[k].ev.mean < rows[best].ev.mean) best = k;
    std::ostringstream csv;
    csv.precision(10);
    csv << "policy,mean_daily_cost,half_width,overflow_fraction,mean_queue,is_min\n";
    for (std::size_t k = 0; k < rows.size(); ++k)
        csv << rows[k].label << ',' << rows[k].ev.mean << ',' << rows[k].ev.half_width << ','
            << rows[k].ev.overflow_fraction << ',' << rows[k].ev.mean_queue << ',' << (k == best ? 1 : 0) << '\n';
    if (o.out.empty())
        std::cout << csv.str();
    else
        write_text(o.out, csv.str());
    return kExitOk;
}

// ---- train ------------------------------------------------------------------

struct TrainOpts {
    Source src;
    std::string out = "train";
    std::string train_config;
    std::string initial_policy = "preset";
    std::string structure;
    std::vector<int> hidden;
    std::optional<std::uint64_t> seed;
    std::optional<int> days, actors, iterations, epochs, reuse, eval_days, threads;
    std::optional<double> clip, tolerance, lr;
    bool polynomial = false;
    bool sequential = false;
    bool resume = false;
};

int cmd_train(const TrainOpts& o) {
    Preset p = resolve(o.src);
    const SystemConfig& cfg = p.system;
    const fs::path out(o.out);
    fs::create_directories(out);
    const fs::path checkpoint = out / "checkpoint.json";

    TrainConfig t = o.src.quick ? p.quick : p.train;
    TrainState state;
    bool resumed = false;
    if (o.resume && fs::exists(checkpoint)) {
        state = load_checkpoint(checkpoint, &t);
        check_weights(state.params, cfg);
        resumed = true;
    } else if (!o.train_config.empty()) {
        t = parse_train_config(read_text(o.train_config), t);
    }
    // Flags override the saved or preset profile; on resume only the horizon and threads should change.
    if (o.seed) t.seed = *o.seed;
    if (o.days) t.days_per_actor = *o.days;
    if (o.actors) t.actors = *o.actors;
    if (o.iterations) t.iterations = *o.iterations;
    if (o.epochs) t.epochs = *o.epochs;
    if (o.reuse) t.reuse = *o.reuse;
    if (o.eval_days) t.evaluation_days = *o.eval_days;
    if (o.threads) t.threads = *o.threads;
    if (o.tolerance) t.tolerance = *o.tolerance;
    if (o.lr) t.learning_rate = *o.lr;
    if (o.clip) {
        t.clip.initial = t.clip.later = *o.clip;
        t.clip.constant = true;
    }
    if (o.polynomial) t.use_vd_basis = false;
    if (o.sequential) t.mode = DecisionMode::Sequential;
    auto problems = validate_train_config(t);
    if (!problems.empty()) {
        diagnose("config_invalid", "invalid training config", {{"violations", problems}});
        return kExitConfig;
    }

    if (!resumed) {
        NetStructure structure = o.structure.empty() ? p.structure : parse_structure(o.structure);
        NetworkParams net(structure, cfg.num_pools, cfg.epochs_per_day, o.hidden.empty() ? p.hidden : o.hidden);
        Rng init(derive_seed(t.seed, 0x1217));
        net.initialize(init);
        const std::string preset_initial = o.src.quick ? p.quick_initial_policy : p.initial_policy;
        const std::string initial = o.initial_policy == "preset" ? preset_initial : o.initial_policy;
        if (!initial.empty() && initial != "uniform") {
            std::cerr << "warm-starting network to " << initial << '\n';
            warm_start_network(net, policy_from_name(initial, cfg), cfg, 300, derive_seed(t.seed, 0x3A3A));
        }
        state = initial_train_state(net, t);
    }
    write_text(out / "train_config.json", train_config_to_json(t));
    save_system(cfg, out / "system.json");

    auto on_iteration = [&](const IterationReport& rep, const TrainState& st) {
        std::string lines;
        for (const auto& r : st.reports) lines += report_to_json_line(r) + "\n";
        write_text(out / "reports.jsonl", lines);
        save_weights(st.params, out / "weights.json");
        save_checkpoint(st, t, checkpoint);
        std::cout << report_to_json_line(rep) << std::endl;
    };
    state = train(t, cfg, std::move(state), on_iteration);
    if (state.reports.empty()) on_iteration(IterationReport{}, state);
    write_reports_csv(state.reports, out / "reports.csv");
    const auto& last = state.reports.back();
    std::cout << "final evaluated cost " << last.eval_cost << " +/- " << last.eval_half_width << " after "
              << state.iteration << " iteration(s)" << (state.converged ? " (converged)" : "") << '\n';
    return kExitOk;
}

// ---- oracle -----------------------------------------------------------------

struct OracleOpts {
    Source src;
    double tol = 1e-9;
    int x_max = 60;
    std::string out;
};

int cmd_oracle(const OracleOpts& o) {
    Preset p = resolve(o.src);
    const SystemConfig& cfg = p.system;
    if (cfg.num_pools != 2 || cfg.epochs_per_day != 1)
        throw ConfigError("oracle needs a two-pool midnight instance (J=2, m=1), got J=" +
                          std::to_string(cfg.num_pools) + ", m=" + std::to_string(cfg.epochs_per_day));
    MidnightSolution sol = value_iteration_midnight(cfg, o.x_max, o.tol);
    std::cout.precision(12);
    std::cout << "gamma* " << sol.gamma << " (iterations " << sol.iterations << ", span " << sol.span << ")\n";
    if (!o.out.empty()) {
        TruncatedMDP mdp(cfg, o.x_max);
        std::ostringstream csv;
        csv.precision(12);
        csv << "x1,x2,v,f11,f12,f21,f22\n";
        for (int k = 0; k < mdp.num_states(); ++k) {
            State s = mdp.state(k);
            const auto& f = sol.policy[k];
            csv << s.x[0] << ',' << s.x[1] << ',' << sol.v[k] << ',' << f(0, 0) << ',' << f(0, 1) << ','
                << f(1, 0) << ',' << f(1, 1) << '\n';
        }
        write_text(o.out, csv.str());
    }
    return kExitOk;
}

// ---- inspect-policy ---------------------------------------------------------

struct InspectOpts {
    Source src;
    std::string weights;
    int epoch = 0;
    int cls = 0;
    int pool = 1;
    std::string grid = "0:60,0:60";
    std::string out;
};

int cmd_inspect(const InspectOpts& o) {
    Preset p = resolve(o.src);
    const SystemConfig& cfg = p.system;
    auto params = std::make_shared<NetworkParams>(load_weights(o.weights));
    check_weights(*params, cfg);
    const int J = cfg.num_pools;
    if (o.cls < 0 || o.cls >= J || o.pool < 0 || o.pool >= J) throw ConfigError("class/pool index out of range");
    if (o.epoch < 0 || o.epoch >= cfg.epochs_per_day) throw ConfigError("epoch out of range");
    int a0, a1, b0, b1;
    char c1, c2, c3;
    std::istringstream g(o.grid);
    if (!(g >> a0 >> c1 >> a1 >> c2 >> b0 >> c3 >> b1) || c1 != ':' || c2 != ',' || c3 != ':' || a0 < 0 || b0 < 0 ||
        a1 < a0 || b1 < b0)
        throw ConfigError("grid must look like lo:hi,lo:hi with 0 <= lo <= hi");
    const int limit_i = cfg.servers[o.cls] * 3, limit_j = cfg.servers[o.pool] * 3;
    if (a1 > limit_i || b1 > limit_j) throw ConfigError("grid reaches beyond three times the pool capacity");
    // Other pools sit at their capacity minus one idle bed, nothing scheduled to leave.
    State s = State::empty(J, o.epoch);
    for (int j = 0; j < J; ++j) s.x[j] = std::max(0, cfg.servers[j] - 1);
    std::ostringstream csv;
    csv.precision(10);
    csv << "x_class,x_pool,kappa\n";
    for (int xi = a0; xi <= a1; ++xi) {
        for (int xj = b0; xj <= b1; ++xj) {
            s.x[o.cls] = xi;
            if (o.pool != o.cls) s.x[o.pool] = xj;
            AtomicDistribution k = forward(*params, s, cfg);
            csv << xi << ',' << xj << ',' << k(o.cls, o.pool) << '\n';
        }
    }
    if (o.out.empty())
        std::cout << csv.str();
    else
        write_text(o.out, csv.str());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Overflow routing simulator and trainer"};
    app.require_subcommand(1);

    SimulateOpts sim;
    auto* c_sim = app.add_subcommand("simulate", "Simulate a policy and write per-epoch series and a summary");
    add_source(c_sim, sim.src);
    c_sim->add_option("--policy", sim.policy, "no-overflow|complete|midnight|empirical|randomized[:p]|weights.json");
    c_sim->add_option("--days", sim.days)->check(CLI::PositiveNumber);
    c_sim->add_option("--burn-in", sim.burn_in)->check(CLI::NonNegativeNumber);
    c_sim->add_option("--seed", sim.seed);
    c_sim->add_option("--out", sim.out, "Output directory");

    CompareOpts cmp;
    auto* c_cmp = app.add_subcommand("compare", "Evaluate several policies on common random numbers");
    add_source(c_cmp, cmp.src);
    c_cmp->add_option("--policies", cmp.policies)->delimiter(',');
    c_cmp->add_option("--days", cmp.days)->check(CLI::Range(20, 100000000));
    c_cmp->add_option("--seed", cmp.seed);
    c_cmp->add_option("--out", cmp.out, "CSV path (stdout if omitted)");

    CompareOpts ev;
    std::string ev_policy = "empirical";
    auto* c_ev = app.add_subcommand("evaluate", "Mean daily cost with a batch-means interval");
    add_source(c_ev, ev.src);
    c_ev->add_option("--policy", ev_policy);
    c_ev->add_option("--days", ev.days)->check(CLI::Range(20, 100000000));
    c_ev->add_option("--seed", ev.seed);

    TrainOpts tr;
    auto* c_tr = app.add_subcommand("train", "Run PPO training with checkpoints and reports");
    add_source(c_tr, tr.src);
    c_tr->add_flag("--quick", tr.src.quick, "Desk-scale profile");
    c_tr->add_option("--out", tr.out, "Output directory");
    c_tr->add_option("--train-config", tr.train_config, "JSON overrides for the training config");
    c_tr->add_option("--initial-policy", tr.initial_policy, "Benchmark to warm-start from, or 'uniform'");
    c_tr->add_option("--structure", tr.structure, "fully-connected|fully-separate|partially-shared");
    c_tr->add_option("--hidden", tr.hidden, "Hidden layer widths")->delimiter(',');
    c_tr->add_option("--seed", tr.seed);
    c_tr->add_option("--days", tr.days, "Days per actor");
    c_tr->add_option("--actors", tr.actors);
    c_tr->add_option("--iterations", tr.iterations);
    c_tr->add_option("--epochs", tr.epochs, "Passes over the data per iteration");
    c_tr->add_option("--reuse", tr.reuse, "Earlier iterations whose data is reused");
    c_tr->add_option("--clip", tr.clip, "Constant clip size (default: 0.5 then 0.2)");
    c_tr->add_option("--tolerance", tr.tolerance);
    c_tr->add_option("--learning-rate", tr.lr);
    c_tr->add_option("--eval-days", tr.eval_days);
    c_tr->add_option("--threads", tr.threads);
    c_tr->add_flag("--polynomial-basis", tr.polynomial, "Drop the pool-decomposed value feature");
    c_tr->add_flag("--sequential", tr.sequential, "Per-customer decisions instead of batched");
    c_tr->add_flag("--resume", tr.resume, "Continue from OUT/checkpoint.json if present");

    OracleOpts orc;
    auto* c_orc = app.add_subcommand("oracle", "Exact value iteration for the two-pool midnight instance");
    add_source(c_orc, orc.src);
    c_orc->add_option("--tol", orc.tol)->check(CLI::PositiveNumber);
    c_orc->add_option("--x-max", orc.x_max)->check(CLI::PositiveNumber);
    c_orc->add_option("--out", orc.out, "CSV of v* and the optimal action per state");

    InspectOpts ins;
    auto* c_ins = app.add_subcommand("inspect-policy", "Grid of kappa(pool | s, class) over a 2-D state slice");
    add_source(c_ins, ins.src);
    c_ins->add_option("--weights", ins.weights)->required()->check(CLI::ExistingFile);
    c_ins->add_option("--epoch", ins.epoch);
    c_ins->add_option("--class", ins.cls);
    c_ins->add_option("--pool", ins.pool);
    c_ins->add_option("--grid", ins.grid, "lo:hi,lo:hi for x_class and x_pool");
    c_ins->add_option("--out", ins.out);

    std::string ex_preset, ex_out;
    auto* c_ex = app.add_subcommand("export-preset", "Write a preset's system config as JSON");
    c_ex->add_option("--preset", ex_preset)->required()->check(CLI::IsMember(preset_names()));
    c_ex->add_option("--out", ex_out);

    Source val;
    auto* c_val = app.add_subcommand("validate", "Check a config and list violations");
    add_source(c_val, val);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*c_sim) return cmd_simulate(sim);
        if (*c_cmp) return cmd_compare(cmp, false);
        if (*c_ev) {
            ev.policies = {ev_policy};
            return cmd_compare(ev, true);
        }
        if (*c_tr) return cmd_train(tr);
        if (*c_orc) return cmd_oracle(orc);
        if (*c_ins) return cmd_inspect(ins);
        if (*c_ex) {
            std::string text = system_to_json(make_preset(ex_preset).system);
            if (ex_out.empty())
                std::cout << text;
            else
                write_text(ex_out, text);
            return kExitOk;
        }
        if (*c_val) {
            resolve(val);
            std::cout << "ok\n";
            return kExitOk;
        }
    } catch (const ConfigError& e) {
        if (std::string(e.what()) != "config invalid") diagnose("config_invalid", e.what());
        return kExitConfig;
    } catch (const InfeasibleActionError& e) {
        diagnose("infeasible_action", e.what());
        return kExitConfig;
    } catch (const NumericalError& e) {
        diagnose("numerical_failure", e.what());
        return kExitNumerical;
    } catch (const std::exception& e) {
        diagnose("error", e.what());
        return kExitGeneric;
    }
    return kExitGeneric;
}
