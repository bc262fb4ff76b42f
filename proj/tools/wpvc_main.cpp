// wpvc: weighted partial regular vine copula variational LSTM toolkit.
//
// Subcommands: returns, train, forecast, backtest, vine-fit, report.
// Exit codes: 0 success, 2 configuration error, 3 data error,
// 4 numerical divergence.
#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "wpvc/errors.hpp"
#include "wpvc/pipeline.hpp"

namespace {

struct GlobalArgs {
    std::string config_path;
    std::string out_dir;
    std::string ablation;
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool verbose = false;
};

wpvc::io::RunConfig resolve_config(const GlobalArgs& g) {
    wpvc::io::RunConfig cfg =
        g.config_path.empty() ? wpvc::io::default_config() : wpvc::io::load_config(g.config_path);
    if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
    if (!g.ablation.empty()) cfg.training.ablation = wpvc::vlstm::ablation_from_name(g.ablation);
    if (g.seed_set) cfg.training.seed = g.seed;
    cfg.verbose = g.verbose;
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"weighted partial regular vine copula variational LSTM"};
    app.require_subcommand(1);

    GlobalArgs g;
    app.add_option("--config", g.config_path, "JSON configuration file");
    app.add_option("--out-dir", g.out_dir, "output directory (overrides config)");
    app.add_option("--ablation", g.ablation, "wpvc | mean_field | plain_lstm")
        ->check(CLI::IsMember({"wpvc", "mean_field", "plain_lstm"}));
    auto* seed_opt = app.add_option("--seed", g.seed, "random seed (overrides config)");
    app.add_flag("--verbose", g.verbose, "log progress to stderr");

    std::string prices, returns_file, alignment;
    auto* cmd_returns = app.add_subcommand("returns", "compute log returns from a price CSV");
    cmd_returns->add_option("--prices", prices, "price CSV (date,<name>,...)");
    cmd_returns->add_option("--alignment", alignment, "intersection | forward_fill")
        ->check(CLI::IsMember({"intersection", "forward_fill"}));

    auto* cmd_train = app.add_subcommand("train", "train the model on the training split");
    cmd_train->add_option("--returns", returns_file, "returns CSV (overrides config)");
    cmd_train->add_option("--prices", prices, "price CSV (overrides config)");

    std::string checkpoint, from_date, to_date;
    auto* cmd_forecast = app.add_subcommand("forecast", "one-step-ahead forecasts from a checkpoint");
    cmd_forecast->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    cmd_forecast->add_option("--returns", returns_file, "returns CSV (overrides config)");
    cmd_forecast->add_option("--prices", prices, "price CSV (overrides config)");
    cmd_forecast->add_option("--from", from_date, "first forecast date (default: validation split)");
    cmd_forecast->add_option("--to", to_date, "last forecast date (default: end of data)");

    std::string forecast_file;
    auto* cmd_backtest = app.add_subcommand("backtest", "strategy metrics and VaR coverage tests");
    cmd_backtest->add_option("--forecast", forecast_file, "forecast CSV")->required();
    cmd_backtest->add_option("--returns", returns_file, "returns CSV (overrides config)");
    cmd_backtest->add_option("--prices", prices, "price CSV (overrides config)");

    auto* cmd_vine = app.add_subcommand("vine-fit", "fit the vine directly on observed returns");
    cmd_vine->add_option("--returns", returns_file, "returns CSV (overrides config)");
    cmd_vine->add_option("--prices", prices, "price CSV (overrides config)");

    std::string backtest_json;
    auto* cmd_report = app.add_subcommand("report", "render a backtest JSON as a text table");
    cmd_report->add_option("--backtest", backtest_json, "backtest JSON file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        g.seed_set = seed_opt->count() > 0;
        wpvc::io::RunConfig cfg = resolve_config(g);
        if (!prices.empty()) {
            cfg.prices_path = prices;
            cfg.returns_path.clear();
        }
        if (!returns_file.empty()) cfg.returns_path = returns_file;
        if (!alignment.empty()) cfg.alignment = alignment;
        wpvc::io::validate(cfg);

        if (cmd_returns->parsed()) {
            const std::string path = wpvc::pipeline::run_returns(cfg);
            std::cout << path << "\n";
        } else if (cmd_train->parsed()) {
            auto out = wpvc::pipeline::run_train(cfg);
            std::cout << out.checkpoint_path << "\n" << out.trace_path << "\n";
            if (!out.vine_path.empty()) std::cout << out.vine_path << "\n";
        } else if (cmd_forecast->parsed()) {
            const std::string path = wpvc::pipeline::run_forecast(cfg, checkpoint, from_date, to_date);
            std::cout << path << "\n";
        } else if (cmd_backtest->parsed()) {
            auto out = wpvc::pipeline::run_backtest(cfg, forecast_file);
            std::cout << wpvc::risk::report_to_table(out.report);
            if (cfg.verbose) std::cerr << "wrote " << out.json_path << "\n";
        } else if (cmd_vine->parsed()) {
            auto out = wpvc::pipeline::run_vine_fit(cfg);
            std::cout << out.vine_path << "\n" << out.diagnostics_path << "\n";
        } else if (cmd_report->parsed()) {
            std::cout << wpvc::pipeline::run_report(backtest_json);
        }
        return 0;
    } catch (const wpvc::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const wpvc::RangeError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const wpvc::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const wpvc::DivergenceError& e) {
        std::cerr << "numerical divergence: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
