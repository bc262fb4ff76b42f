#include "wpvc/config.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"
#include "wpvc/errors.hpp"

namespace wpvc::io {

using nlohmann::json;

RunConfig default_config() { return RunConfig{}; }

namespace {

void read_training(const json& j, vlstm::TrainingConfig& t) {
    if (j.contains("epochs")) t.epochs = j["epochs"].get<int>();
    if (j.contains("batch_size")) t.batch_size = j["batch_size"].get<int>();
    if (j.contains("learning_rate")) t.learning_rate = j["learning_rate"].get<double>();
    if (j.contains("seed")) t.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("checkpoint_every")) t.checkpoint_every = j["checkpoint_every"].get<int>();
    if (j.contains("loss_threshold")) t.loss_threshold = j["loss_threshold"].get<double>();
    if (j.contains("refresh_interval")) t.refresh_interval = j["refresh_interval"].get<int>();
    if (j.contains("ablation")) t.ablation = vlstm::ablation_from_name(j["ablation"].get<std::string>());
    if (j.contains("window")) t.window = j["window"].get<int>();
    if (j.contains("grad_clip")) t.grad_clip = j["grad_clip"].get<double>();
    if (j.contains("max_windows_per_epoch"))
        t.max_windows_per_epoch = j["max_windows_per_epoch"].get<int>();
    if (j.contains("hidden_dim")) t.dims.d_h = j["hidden_dim"].get<int>();
    if (j.contains("latent_dim")) t.dims.d_z = j["latent_dim"].get<int>();
    if (j.contains("feature_dim")) t.dims.d_feat = j["feature_dim"].get<int>();
}

} // namespace

RunConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path);
    json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }

    RunConfig cfg;
    if (j.contains("data")) {
        const auto& d = j["data"];
        if (d.contains("prices")) cfg.prices_path = d["prices"].get<std::string>();
        if (d.contains("returns")) cfg.returns_path = d["returns"].get<std::string>();
        if (d.contains("alignment")) cfg.alignment = d["alignment"].get<std::string>();
    }
    if (j.contains("split")) {
        const auto& s = j["split"];
        if (s.contains("train_end")) cfg.train_end = s["train_end"].get<std::string>();
        if (s.contains("validation_start"))
            cfg.validation_start = s["validation_start"].get<std::string>();
    }
    if (j.contains("training")) read_training(j["training"], cfg.training);
    if (j.contains("vine")) {
        const auto& v = j["vine"];
        if (v.contains("rho_trun")) cfg.training.rho_trun = v["rho_trun"].get<double>();
        if (v.contains("weights_file")) cfg.weights_file = v["weights_file"].get<std::string>();
        if (v.contains("families")) {
            cfg.training.copula_candidates.clear();
            for (const auto& name : v["families"])
                cfg.training.copula_candidates.push_back(
                    copula::family_from_name(name.get<std::string>()));
        }
        if (v.contains("latent_copula")) {
            cfg.latent_copula = v["latent_copula"].get<std::string>();
            cfg.training.latent_copula = vlstm::latent_copula_from_name(cfg.latent_copula);
        }
        if (v.contains("latent_copula_window"))
            cfg.training.latent_copula_window = v["latent_copula_window"].get<int>();
    }
    if (j.contains("var_levels")) cfg.var_levels = j["var_levels"].get<std::vector<double>>();
    if (j.contains("portfolio_weights"))
        cfg.portfolio_weights = j["portfolio_weights"].get<std::vector<double>>();
    if (j.contains("periods_per_year")) cfg.periods_per_year = j["periods_per_year"].get<double>();
    if (j.contains("strategy")) cfg.strategy = j["strategy"].get<std::string>();
    if (j.contains("out_dir")) cfg.out_dir = j["out_dir"].get<std::string>();
    if (j.contains("seed")) cfg.training.seed = j["seed"].get<std::uint64_t>();
    validate(cfg);
    return cfg;
}

void validate(const RunConfig& cfg) {
    for (double lv : cfg.var_levels)
        if (!(lv > 0.0 && lv < 1.0)) throw ConfigError("VaR level must lie inside (0,1)");
    if (!cfg.portfolio_weights.empty()) {
        double s = 0.0;
        for (double w : cfg.portfolio_weights) s += w;
        if (std::fabs(s - 1.0) > 1e-12)
            throw ConfigError("portfolio weights must sum to 1");
    }
    if (cfg.strategy != "long_short" && cfg.strategy != "long_flat")
        throw ConfigError("strategy must be long_short or long_flat");
    if (cfg.alignment != "intersection" && cfg.alignment != "forward_fill")
        throw ConfigError("alignment must be intersection or forward_fill");
    if (!(cfg.periods_per_year > 0.0)) throw ConfigError("periods_per_year must be positive");
    if (cfg.training.epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(cfg.training.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (cfg.training.rho_trun < 0.0 || cfg.training.rho_trun > 1.0)
        throw ConfigError("rho_trun must lie in [0,1]");
    if (!cfg.train_end.empty() && !cfg.validation_start.empty() &&
        cfg.validation_start <= cfg.train_end)
        throw ConfigError("validation_start must come after train_end");
}

vine::EdgeWeightMatrix load_edge_weights(const std::string& path, int n) {
    vine::EdgeWeightMatrix w = vine::EdgeWeightMatrix::uniform(n);
    if (path.empty()) return w;
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open weights file " + path);
    json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("weights file parse error: ") + e.what());
    }
    if (j.contains("default")) {
        const double d = j["default"].get<double>();
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b)
                if (a != b) w.set(a, b, d);
    }
    if (j.contains("pairs")) {
        for (const auto& p : j["pairs"]) {
            const int a = p["a"].get<int>();
            const int b = p["b"].get<int>();
            if (a < 0 || b < 0 || a >= n || b >= n || a == b)
                throw ConfigError("weights file: bad pair index");
            w.set(a, b, p["w"].get<double>());
        }
    }
    return w;
}

} // namespace wpvc::io
