#include "overflow/io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "overflow/errors.hpp"

namespace overflow {

using nlohmann::json;

namespace {

json parse_document(const std::string& text, const char* what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string(what) + ": malformed JSON: " + e.what());
    }
}

void check_schema(const json& doc, const char* what) {
    if (!doc.is_object()) throw ConfigError(std::string(what) + ": document must be an object");
    if (!doc.contains("schema")) throw ConfigError(std::string(what) + ": missing \"schema\"");
    if (!doc["schema"].is_number_integer() || doc["schema"].get<int>() != kSchemaVersion)
        throw ConfigError(std::string(what) + ": unsupported schema " + doc["schema"].dump());
}

template <class T>
T field(const json& doc, const std::string& key, const char* what) {
    if (!doc.contains(key)) throw ConfigError(std::string(what) + ": missing field \"" + key + "\"");
    try {
        return doc.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string(what) + ": field \"" + key + "\" has the wrong type: " + e.what());
    }
}

template <class T>
void maybe(const json& doc, const std::string& key, T& out) {
    if (!doc.contains(key)) return;
    try {
        out = doc.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("train config: field \"" + key + "\" has the wrong type: " + e.what());
    }
}

json weights_json(const NetworkParams& p) {
    return json{{"schema", kSchemaVersion},
                {"structure", structure_name(p.structure())},
                {"pools", p.pools()},
                {"epochs", p.epochs()},
                {"hidden", p.hidden()},
                {"values", p.values}};
}

NetworkParams weights_from(const json& doc) {
    check_schema(doc, "weights");
    NetworkParams p(parse_structure(field<std::string>(doc, "structure", "weights")),
                    field<int>(doc, "pools", "weights"), field<int>(doc, "epochs", "weights"),
                    field<std::vector<int>>(doc, "hidden", "weights"));
    auto values = field<std::vector<double>>(doc, "values", "weights");
    if (values.size() != p.size())
        throw ConfigError("weights: expected " + std::to_string(p.size()) + " values, found " +
                          std::to_string(values.size()));
    p.values = std::move(values);
    return p;
}

json train_json(const TrainConfig& c) {
    return json{{"iterations", c.iterations},
                {"days_per_actor", c.days_per_actor},
                {"actors", c.actors},
                {"epochs", c.epochs},
                {"clip", {{"initial", c.clip.initial},
                          {"later", c.clip.later},
                          {"switch_after", c.clip.switch_after},
                          {"constant", c.clip.constant}}},
                {"tolerance", c.tolerance},
                {"reuse", c.reuse},
                {"burn_in_days", c.burn_in_days},
                {"seed", c.seed},
                {"evaluation_days", c.evaluation_days},
                {"minibatch", c.minibatch},
                {"learning_rate", c.learning_rate},
                {"max_halvings", c.max_halvings},
                {"use_vd_basis", c.use_vd_basis},
                {"mode", c.mode == DecisionMode::Batched ? "batched" : "sequential"},
                {"divergence_factor", c.divergence_factor}};
}

TrainConfig train_from(const json& doc, TrainConfig c) {
    if (!doc.is_object()) throw ConfigError("train config: document must be an object");
    maybe(doc, "iterations", c.iterations);
    maybe(doc, "days_per_actor", c.days_per_actor);
    maybe(doc, "actors", c.actors);
    maybe(doc, "epochs", c.epochs);
    if (doc.contains("clip")) {
        const json& clip = doc["clip"];
        if (clip.is_number()) {
            c.clip.initial = c.clip.later = clip.get<double>();
            c.clip.constant = true;
        } else {
            maybe(clip, "initial", c.clip.initial);
            maybe(clip, "later", c.clip.later);
            maybe(clip, "switch_after", c.clip.switch_after);
            maybe(clip, "constant", c.clip.constant);
        }
    }
    maybe(doc, "tolerance", c.tolerance);
    maybe(doc, "reuse", c.reuse);
    maybe(doc, "burn_in_days", c.burn_in_days);
    maybe(doc, "seed", c.seed);
    maybe(doc, "evaluation_days", c.evaluation_days);
    maybe(doc, "minibatch", c.minibatch);
    maybe(doc, "learning_rate", c.learning_rate);
    maybe(doc, "max_halvings", c.max_halvings);
    maybe(doc, "use_vd_basis", c.use_vd_basis);
    maybe(doc, "divergence_factor", c.divergence_factor);
    if (doc.contains("mode")) {
        auto mode = field<std::string>(doc, "mode", "train config");
        if (mode == "batched")
            c.mode = DecisionMode::Batched;
        else if (mode == "sequential")
            c.mode = DecisionMode::Sequential;
        else
            throw ConfigError("train config: unknown mode '" + mode + "'");
    }
    return c;
}

json report_json(const IterationReport& r) {
    return json{{"iteration", r.iteration},       {"train_cost", r.train_cost}, {"eval_cost", r.eval_cost},
                {"eval_half_width", r.eval_half_width}, {"loss_before", r.loss_before},
                {"loss_after", r.loss_after},     {"clip", r.clip},             {"learning_rate", r.learning_rate},
                {"seconds", r.seconds},           {"value_gamma", r.value_gamma}, {"samples", r.samples}};
}

IterationReport report_from(const json& j) {
    IterationReport r;
    r.iteration = j.at("iteration").get<int>();
    r.train_cost = j.at("train_cost").get<double>();
    r.eval_cost = j.at("eval_cost").get<double>();
    r.eval_half_width = j.at("eval_half_width").get<double>();
    r.loss_before = j.at("loss_before").get<double>();
    r.loss_after = j.at("loss_after").get<double>();
    r.clip = j.at("clip").get<double>();
    r.learning_rate = j.at("learning_rate").get<double>();
    r.seconds = j.at("seconds").get<double>();
    r.value_gamma = j.at("value_gamma").get<double>();
    r.samples = j.at("samples").get<int>();
    return r;
}

}  // namespace

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

SystemConfig parse_system(const std::string& json_text) {
    const json doc = parse_document(json_text, "config");
    check_schema(doc, "config");
    const char* what = "config";
    SystemConfig cfg;
    cfg.name = doc.value("name", std::string{});
    cfg.num_pools = field<int>(doc, "pools", what);
    cfg.epochs_per_day = field<int>(doc, "epochs_per_day", what);
    cfg.servers = field<std::vector<int>>(doc, "servers", what);
    cfg.arrivals = field<std::vector<std::vector<double>>>(doc, "arrivals", what);
    cfg.discharge_prob = field<std::vector<double>>(doc, "discharge_prob", what);
    cfg.discharge_cdf = field<std::vector<std::vector<double>>>(doc, "discharge_cdf", what);
    cfg.holding_cost = field<std::vector<double>>(doc, "holding_cost", what);
    const json routes = field<json>(doc, "routes", what);
    if (!routes.is_array()) throw ConfigError("config: \"routes\" must be an array per class");
    for (std::size_t i = 0; i < routes.size(); ++i) {
        if (!routes[i].is_array()) throw ConfigError("config: routes[" + std::to_string(i) + "] must be an array");
        std::vector<Route> row;
        for (const auto& r : routes[i]) {
            const std::string where = "config: routes[" + std::to_string(i) + "]";
            if (!r.is_object() || !r.contains("to") || !r.contains("cost"))
                throw ConfigError(where + " entries need \"to\" and \"cost\"");
            row.push_back({r["to"].get<int>(), r["cost"].get<double>()});
        }
        cfg.routes.push_back(std::move(row));
    }
    return cfg;
}

SystemConfig load_system(const std::filesystem::path& path) { return parse_system(read_text(path)); }

std::string system_to_json(const SystemConfig& cfg) {
    json routes = json::array();
    for (const auto& row : cfg.routes) {
        json r = json::array();
        for (const auto& route : row) r.push_back({{"to", route.to}, {"cost", route.cost}});
        routes.push_back(r);
    }
    json doc{{"schema", kSchemaVersion},
             {"name", cfg.name},
             {"pools", cfg.num_pools},
             {"epochs_per_day", cfg.epochs_per_day},
             {"servers", cfg.servers},
             {"arrivals", cfg.arrivals},
             {"discharge_prob", cfg.discharge_prob},
             {"discharge_cdf", cfg.discharge_cdf},
             {"routes", routes},
             {"holding_cost", cfg.holding_cost}};
    return doc.dump(2) + "\n";
}

void save_system(const SystemConfig& cfg, const std::filesystem::path& path) {
    write_text(path, system_to_json(cfg));
}

std::string weights_to_json(const NetworkParams& params) { return weights_json(params).dump() + "\n"; }

NetworkParams parse_weights(const std::string& json_text) {
    return weights_from(parse_document(json_text, "weights"));
}

NetworkParams load_weights(const std::filesystem::path& path) { return parse_weights(read_text(path)); }

void save_weights(const NetworkParams& params, const std::filesystem::path& path) {
    write_text(path, weights_to_json(params));
}

void check_weights(const NetworkParams& params, const SystemConfig& cfg) {
    if (params.pools() != cfg.num_pools || params.epochs() != cfg.epochs_per_day)
        throw ConfigError("weights: network is for J=" + std::to_string(params.pools()) +
                          ", m=" + std::to_string(params.epochs()) + " but the config has J=" +
                          std::to_string(cfg.num_pools) + ", m=" + std::to_string(cfg.epochs_per_day));
    for (double v : params.values)
        if (!std::isfinite(v)) throw ConfigError("weights: non-finite parameter");
}

PolicySpec parse_policy(const std::string& json_text, const SystemConfig& cfg, const std::filesystem::path& base_dir) {
    const json doc = parse_document(json_text, "policy");
    if (!doc.is_object()) throw ConfigError("policy: document must be an object");
    const auto type = field<std::string>(doc, "type", "policy");
    if (type == "no-overflow") return NoOverflow{};
    if (type == "complete-overflow") return CompleteOverflow{};
    if (type == "midnight") return MidnightOverflow{};
    if (type == "empirical") {
        EmpiricalOverflow e{default_night_epochs(cfg.epochs_per_day)};
        if (doc.contains("night_epochs")) e.night_epochs = field<std::vector<int>>(doc, "night_epochs", "policy");
        for (int h : e.night_epochs)
            if (h < 0 || h >= cfg.epochs_per_day)
                throw ConfigError("policy: night epoch " + std::to_string(h) + " outside the day");
        return e;
    }
    if (type == "randomized") {
        RandomizedOverflow r;
        if (doc.contains("probability")) r.probability = field<double>(doc, "probability", "policy");
        if (!(r.probability >= 0.0 && r.probability <= 1.0)) throw ConfigError("policy: probability outside [0,1]");
        return r;
    }
    if (type == "network") {
        std::filesystem::path w = field<std::string>(doc, "weights", "policy");
        if (w.is_relative() && !base_dir.empty()) w = base_dir / w;
        auto params = std::make_shared<NetworkParams>(load_weights(w));
        check_weights(*params, cfg);
        return NetworkPolicy{params};
    }
    throw ConfigError("policy: unknown type '" + type + "'");
}

std::string policy_to_json(const PolicySpec& policy, const std::string& weights_path) {
    json doc{{"type", policy_name(policy)}};
    if (const auto* e = std::get_if<EmpiricalOverflow>(&policy)) doc["night_epochs"] = e->night_epochs;
    if (const auto* r = std::get_if<RandomizedOverflow>(&policy)) doc["probability"] = r->probability;
    if (std::holds_alternative<NetworkPolicy>(policy)) doc["weights"] = weights_path;
    return doc.dump();
}

PolicySpec policy_from_name(const std::string& name, const SystemConfig& cfg) {
    if (name == "no-overflow" || name == "none") return NoOverflow{};
    if (name == "complete" || name == "complete-overflow") return CompleteOverflow{};
    if (name == "midnight") return MidnightOverflow{};
    if (name == "empirical") return EmpiricalOverflow{default_night_epochs(cfg.epochs_per_day)};
    if (name.rfind("randomized", 0) == 0) {
        RandomizedOverflow r;
        if (auto colon = name.find(':'); colon != std::string::npos) {
            try {
                r.probability = std::stod(name.substr(colon + 1));
            } catch (const std::exception&) {
                throw ConfigError("policy: bad probability in '" + name + "'");
            }
        }
        if (!(r.probability >= 0.0 && r.probability <= 1.0)) throw ConfigError("policy: probability outside [0,1]");
        return r;
    }
    if (!std::filesystem::exists(name)) throw ConfigError("policy: unknown policy or missing weights file '" + name + "'");
    auto params = std::make_shared<NetworkParams>(load_weights(name));
    check_weights(*params, cfg);
    return NetworkPolicy{params};
}

TrainConfig parse_train_config(const std::string& json_text, const TrainConfig& base) {
    return train_from(parse_document(json_text, "train config"), base);
}

std::string train_config_to_json(const TrainConfig& cfg) { return train_json(cfg).dump(2) + "\n"; }

std::string report_to_json_line(const IterationReport& rep) { return report_json(rep).dump(); }

void write_reports_csv(const std::vector<IterationReport>& reports, const std::filesystem::path& path) {
    std::ostringstream out;
    out.precision(10);
    out << "iteration,train_cost,eval_cost,eval_half_width,loss_before,loss_after,clip,learning_rate,seconds\n";
    for (const auto& r : reports)
        out << r.iteration << ',' << r.train_cost << ',' << r.eval_cost << ',' << r.eval_half_width << ','
            << r.loss_before << ',' << r.loss_after << ',' << r.clip << ',' << r.learning_rate << ',' << r.seconds
            << '\n';
    write_text(path, out.str());
}

void save_checkpoint(const TrainState& state, const TrainConfig& cfg, const std::filesystem::path& path) {
    json snaps = json::array();
    for (const auto& [it, values] : state.snapshots) snaps.push_back({{"iteration", it}, {"values", values}});
    json reports = json::array();
    for (const auto& r : state.reports) reports.push_back(report_json(r));
    json doc{{"schema", kSchemaVersion},
             {"train_config", train_json(cfg)},
             {"weights", weights_json(state.params)},
             {"optimizer", {{"m", state.optimizer.m},
                            {"v", state.optimizer.v},
                            {"step", state.optimizer.step},
                            {"lr", state.optimizer.lr},
                            {"beta1", state.optimizer.beta1},
                            {"beta2", state.optimizer.beta2},
                            {"epsilon", state.optimizer.epsilon}}},
             {"iteration", state.iteration},
             {"initial_eval", state.initial_eval},
             {"last_train_cost", state.last_train_cost ? json(*state.last_train_cost) : json(nullptr)},
             {"converged", state.converged},
             {"snapshots", snaps},
             {"reports", reports}};
    // Write then rename so an interrupted save never leaves a truncated checkpoint.
    auto tmp = path;
    tmp += ".tmp";
    write_text(tmp, doc.dump() + "\n");
    std::filesystem::rename(tmp, path);
}

TrainState load_checkpoint(const std::filesystem::path& path, TrainConfig* cfg) {
    const json doc = parse_document(read_text(path), "checkpoint");
    check_schema(doc, "checkpoint");
    try {
        TrainState st;
        st.params = weights_from(doc.at("weights"));
        const json& opt = doc.at("optimizer");
        st.optimizer.m = opt.at("m").get<std::vector<double>>();
        st.optimizer.v = opt.at("v").get<std::vector<double>>();
        st.optimizer.step = opt.at("step").get<long>();
        st.optimizer.lr = opt.at("lr").get<double>();
        st.optimizer.beta1 = opt.at("beta1").get<double>();
        st.optimizer.beta2 = opt.at("beta2").get<double>();
        st.optimizer.epsilon = opt.at("epsilon").get<double>();
        st.iteration = doc.at("iteration").get<int>();
        st.initial_eval = doc.at("initial_eval").get<double>();
        if (!doc.at("last_train_cost").is_null()) st.last_train_cost = doc.at("last_train_cost").get<double>();
        st.converged = doc.at("converged").get<bool>();
        for (const auto& s : doc.at("snapshots"))
            st.snapshots.emplace_back(s.at("iteration").get<int>(), s.at("values").get<std::vector<double>>());
        for (const auto& r : doc.at("reports")) st.reports.push_back(report_from(r));
        if (cfg) *cfg = train_from(doc.at("train_config"), TrainConfig{});
        return st;
    } catch (const json::exception& e) {
        throw ConfigError("checkpoint: " + std::string(e.what()));
    }
}

void save_value_model(const EpochValueModel& model, std::span<const PoolModel> pools,
                      const std::filesystem::path& json_path) {
    auto sidecar = json_path;
    sidecar.replace_extension(".bin");
    json pool_meta = json::array();
    std::ofstream bin(sidecar, std::ios::binary);
    if (!bin) throw std::runtime_error("cannot write " + sidecar.string());
    std::size_t offset = 0;
    for (const auto& p : pools) {
        pool_meta.push_back({{"pool", p.pool},
                             {"epochs", p.epochs},
                             {"servers", p.servers},
                             {"x_max", p.bounds.x_max},
                             {"y_max", p.bounds.y_max},
                             {"gamma", p.gamma},
                             {"residual", p.residual},
                             {"iterations", p.iterations},
                             {"offset", offset},
                             {"count", p.values.size()}});
        bin.write(reinterpret_cast<const char*>(p.values.data()),
                  static_cast<std::streamsize>(p.values.size() * sizeof(double)));
        offset += p.values.size();
    }
    json doc{{"schema", kSchemaVersion},
             {"epochs", model.epochs},
             {"dim", model.dim},
             {"beta", model.beta},
             {"gamma", model.gamma},
             {"advantage_offset", model.advantage_offset},
             {"pool_models", pool_meta},
             {"tables", sidecar.filename().string()}};
    write_text(json_path, doc.dump(2) + "\n");
}

}  // namespace overflow
