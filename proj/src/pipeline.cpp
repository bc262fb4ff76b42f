#include "wpvc/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "wpvc/depstats.hpp"
#include "wpvc/errors.hpp"
#include "wpvc/vine.hpp"

namespace wpvc::pipeline {

namespace fs = std::filesystem;
using io::ReturnsPanel;
using io::RunConfig;

namespace {

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

void ensure_out_dir(const RunConfig& cfg) { fs::create_directories(cfg.out_dir); }

std::string out_path(const RunConfig& cfg, const std::string& name) {
    return (fs::path(cfg.out_dir) / name).string();
}

Matrix panel_rows(const ReturnsPanel& panel, int begin, int end) {
    Matrix m(end - begin, panel.returns.cols);
    for (int r = begin; r < end; ++r)
        for (int c = 0; c < panel.returns.cols; ++c) m.at(r - begin, c) = panel.returns.at(r, c);
    return m;
}

std::vector<double> portfolio_weights_for(const RunConfig& cfg, int n) {
    if (cfg.portfolio_weights.empty())
        return std::vector<double>(n, 1.0 / static_cast<double>(n));
    if (static_cast<int>(cfg.portfolio_weights.size()) != n)
        throw ConfigError("portfolio weights count does not match instrument count");
    return cfg.portfolio_weights;
}

// A fully truncated placeholder vine over the latent dimensions, written when
// the model carries no fitted vine (mean-field / plain LSTM states).
vine::VineStructure truncated_placeholder(int d_z) {
    stats::CorrelationMatrix corr(d_z);
    auto v = vine::build_candidate_vine(corr, d_z - 1, vine::EdgeWeightMatrix::uniform(d_z));
    return vine::truncate(std::move(v), 1.0);
}

} // namespace

void append_log(const RunConfig& cfg, const std::string& message) {
    ensure_out_dir(cfg);
    std::ofstream log(out_path(cfg, "run.log"), std::ios::app);
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", std::gmtime(&t));
    log << buf << "Z " << message << "\n";
}

ReturnsPanel load_input_returns(const RunConfig& cfg) {
    if (!cfg.returns_path.empty()) return io::load_returns(cfg.returns_path);
    if (!cfg.prices_path.empty()) {
        auto prices = io::load_prices(cfg.prices_path);
        return io::to_log_returns(prices, cfg.alignment);
    }
    throw ConfigError("no input data: set data.returns or data.prices");
}

std::string run_returns(const RunConfig& cfg) {
    if (cfg.prices_path.empty()) throw ConfigError("returns: data.prices is required");
    ensure_out_dir(cfg);
    auto prices = io::load_prices(cfg.prices_path);
    auto returns = io::to_log_returns(prices, cfg.alignment);
    const std::string path = out_path(cfg, "returns.csv");
    io::save_returns(returns, path);
    append_log(cfg, "returns: wrote " + path);
    return path;
}

TrainOutputs run_train(const RunConfig& cfg) {
    ensure_out_dir(cfg);
    ReturnsPanel panel = load_input_returns(cfg);
    auto [begin, end] = io::date_range(panel.dates, "", cfg.train_end);
    if (end - begin < 2 * cfg.training.window)
        throw DataError("train: training range has too few rows");
    Matrix data = panel_rows(panel, begin, end);

    TrainOutputs out;
    out.checkpoint_path = out_path(cfg, "checkpoint.bin");
    out.trace_path = out_path(cfg, "loss_trace.csv");
    out.vine_path = out_path(cfg, "vine.txt");

    vlstm::TrainingConfig tcfg = cfg.training;
    auto result = vlstm::train(data, tcfg, [&](int epoch, const vlstm::Model& m) {
        vlstm::save_checkpoint(out.checkpoint_path, m, tcfg, epoch);
    });
    out.diverged = result.diverged;
    out.converged = result.converged;

    std::ofstream trace(out.trace_path, std::ios::trunc);
    trace << "epoch,L_P,neg_L_VAE,total\n";
    for (const auto& row : result.trace)
        trace << row.epoch << "," << fmt(row.pred_loss) << "," << fmt(row.neg_elbo) << ","
              << fmt(row.total) << "\n";

    if (result.model.has_vine || result.model.dims.d_z >= 2) {
        const vine::VineStructure v = result.model.has_vine
                                          ? result.model.latent_vine
                                          : truncated_placeholder(result.model.dims.d_z);
        std::ofstream vf(out.vine_path, std::ios::trunc);
        vf << vine::to_text(v);
    }

    append_log(cfg, "train: " + std::to_string(result.epochs_run) + " epochs, diverged=" +
                        (out.diverged ? "yes" : "no"));
    if (out.diverged)
        throw DivergenceError("training diverged; last good checkpoint at " + out.checkpoint_path);
    return out;
}

std::string run_forecast(const RunConfig& cfg, const std::string& checkpoint_path,
                         const std::string& from_date, const std::string& to_date) {
    ensure_out_dir(cfg);
    auto ckpt = vlstm::load_checkpoint(checkpoint_path);
    ReturnsPanel panel = load_input_returns(cfg);
    if (static_cast<int>(panel.instruments.size()) != ckpt.model.dims.d_x)
        throw DataError("forecast: instrument count differs from the checkpoint");

    const std::string from = !from_date.empty() ? from_date : cfg.validation_start;
    auto [begin, end] = io::date_range(panel.dates, from, to_date);

    auto steps = vlstm::forecast(ckpt.model, panel.returns, begin, end, ckpt.config.window);

    const auto weights = portfolio_weights_for(cfg, panel.returns.cols);
    const std::string path = out_path(cfg, "forecast.csv");
    std::ofstream f(path, std::ios::trunc);
    f << "date";
    for (const auto& name : panel.instruments)
        f << "," << name << "_mu," << name << "_sigma," << name << "_up";
    f << ",portfolio_mu\n";
    for (std::size_t k = 0; k < steps.size(); ++k) {
        f << panel.dates[begin + static_cast<int>(k)];
        double pmu = 0.0;
        for (int i = 0; i < panel.returns.cols; ++i) {
            f << "," << fmt(steps[k].mu[i]) << "," << fmt(steps[k].sigma[i]) << ","
              << fmt(steps[k].up_prob[i]);
            pmu += weights[i] * steps[k].mu[i];
        }
        f << "," << fmt(pmu) << "\n";
    }
    append_log(cfg, "forecast: wrote " + path);
    return path;
}

namespace {

struct ForecastFile {
    std::vector<std::string> dates;
    std::vector<std::string> instruments;
    Matrix mu, sigma, up;
};

ForecastFile load_forecast(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open forecast file " + path);
    std::string line;
    if (!std::getline(f, line)) throw DataError(path + ": empty forecast file");
    std::vector<std::string> header;
    {
        std::string field;
        std::istringstream hs(line);
        while (std::getline(hs, field, ',')) header.push_back(field);
    }
    if (header.size() < 5 || header[0] != "date" || header.back() != "portfolio_mu")
        throw DataError(path + ": unexpected forecast header");
    ForecastFile out;
    for (std::size_t i = 1; i + 1 < header.size(); i += 3) {
        const std::string& h = header[i];
        if (h.size() < 3 || h.substr(h.size() - 3) != "_mu")
            throw DataError(path + ": unexpected column " + h);
        out.instruments.push_back(h.substr(0, h.size() - 3));
    }
    std::vector<std::vector<double>> rows;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::string field;
        std::istringstream ls(line);
        while (std::getline(ls, field, ',')) fields.push_back(field);
        if (fields.size() != header.size()) throw DataError(path + ": ragged forecast row");
        out.dates.push_back(fields[0]);
        std::vector<double> row;
        for (std::size_t i = 1; i < fields.size(); ++i) row.push_back(std::stod(fields[i]));
        rows.push_back(std::move(row));
    }
    const int n = static_cast<int>(out.instruments.size());
    const int T = static_cast<int>(rows.size());
    out.mu = Matrix(T, n);
    out.sigma = Matrix(T, n);
    out.up = Matrix(T, n);
    for (int t = 0; t < T; ++t)
        for (int i = 0; i < n; ++i) {
            out.mu.at(t, i) = rows[t][3 * i];
            out.sigma.at(t, i) = rows[t][3 * i + 1];
            out.up.at(t, i) = rows[t][3 * i + 2];
        }
    return out;
}

} // namespace

BacktestOutputs run_backtest(const RunConfig& cfg, const std::string& forecast_csv) {
    ensure_out_dir(cfg);
    ForecastFile fc = load_forecast(forecast_csv);
    ReturnsPanel panel = load_input_returns(cfg);
    if (fc.instruments != panel.instruments)
        throw DataError("backtest: forecast and returns list different instruments");

    // Align by date; every forecast row must have a realized return.
    std::vector<int> row_of;
    std::string missing;
    {
        std::size_t p = 0;
        for (const auto& date : fc.dates) {
            while (p < panel.dates.size() && panel.dates[p] < date) ++p;
            if (p >= panel.dates.size() || panel.dates[p] != date) missing += date + " ";
            else row_of.push_back(static_cast<int>(p));
        }
    }
    if (!missing.empty())
        throw DataError("backtest: forecast dates missing from returns: " + missing);

    const int T = static_cast<int>(fc.dates.size());
    const int n = static_cast<int>(fc.instruments.size());
    if (T == 0) throw DataError("backtest: empty forecast file");
    const auto weights = portfolio_weights_for(cfg, n);
    const bool long_short = cfg.strategy == "long_short";

    // Pooled per-instrument series for the technical metrics.
    std::vector<double> actual, predicted;
    std::vector<int> actual_up, predicted_up;
    std::vector<double> strat_ret(T, 0.0), strat_mu(T, 0.0), strat_sigma(T, 0.0);
    for (int t = 0; t < T; ++t) {
        double var_acc = 0.0;
        for (int i = 0; i < n; ++i) {
            const double a = panel.returns.at(row_of[t], i);
            const double mu = fc.mu.at(t, i);
            const double sg = fc.sigma.at(t, i);
            actual.push_back(a);
            predicted.push_back(mu);
            actual_up.push_back(a > 0.0 ? 1 : 0);
            const bool up = fc.up.at(t, i) > 0.5;
            predicted_up.push_back(up ? 1 : 0);
            const double dir = up ? 1.0 : (long_short ? -1.0 : 0.0);
            strat_ret[t] += weights[i] * dir * a;
            strat_mu[t] += weights[i] * dir * mu;
            var_acc += weights[i] * weights[i] * sg * sg * (dir == 0.0 ? 0.0 : 1.0);
        }
        strat_sigma[t] = std::max(std::sqrt(var_acc), 1e-12);
    }

    risk::BacktestReport report;
    auto reg = risk::regression_metrics(actual, predicted);
    auto cls = risk::classification_metrics(actual_up, predicted_up);
    report.metrics.mape = reg.mape;
    report.metrics.rae = reg.rae;
    report.metrics.rse = reg.rse;
    report.metrics.mape_excluded = reg.mape_excluded;
    report.metrics.precision = cls.precision;
    report.metrics.recall = cls.recall;
    report.metrics.accuracy = cls.accuracy;
    report.metrics.diagnostics = cls.diagnostics;

    report.arr_periods = static_cast<double>(T) / cfg.periods_per_year;
    report.arr = risk::arr(strat_ret, report.arr_periods);

    for (double level : cfg.var_levels) {
        auto var = risk::var_forecast(strat_mu, strat_sigma, level);
        auto exc = risk::exceedances(strat_ret, var);
        auto cov = risk::coverage_tests(exc.indicators, level);
        report.levels.push_back(cov);
    }

    BacktestOutputs out;
    out.report = report;
    out.json_path = out_path(cfg, "backtest.json");
    out.table_path = out_path(cfg, "backtest.txt");
    {
        std::ofstream jf(out.json_path, std::ios::trunc);
        jf << risk::report_to_json(report);
        std::ofstream tf(out.table_path, std::ios::trunc);
        tf << risk::report_to_table(report);
    }
    append_log(cfg, "backtest: wrote " + out.json_path);
    return out;
}

VineFitOutputs run_vine_fit(const RunConfig& cfg) {
    ensure_out_dir(cfg);
    ReturnsPanel panel = load_input_returns(cfg);
    const int n = panel.returns.cols;
    if (n < 2) throw DataError("vine-fit: need at least 2 instruments");

    auto pobs = stats::pit_transform(panel.returns);
    auto corr = stats::estimate_pairwise(pobs);
    auto weights = io::load_edge_weights(cfg.weights_file, n);

    vine::SelectionDiagnostics diag;
    auto v = vine::select_structure(corr, weights, &diag);
    v = vine::truncate(std::move(v), cfg.training.rho_trun);
    v = vine::assign_copulas(std::move(v), pobs, cfg.training.copula_candidates);

    VineFitOutputs out;
    out.vine_path = out_path(cfg, "vine_fit.txt");
    out.diagnostics_path = out_path(cfg, "vine_fit_diagnostics.json");
    {
        std::ofstream vf(out.vine_path, std::ios::trunc);
        vf << vine::to_text(v);
    }
    nlohmann::json j;
    j["n"] = n;
    j["selected_l"] = v.inverse_indicator;
    j["score"] = v.score;
    j["rho_trun"] = cfg.training.rho_trun;
    j["psd_repaired"] = corr.psd_repaired;
    j["candidates"] = nlohmann::json::array();
    for (auto& [l, score] : diag.candidate_scores)
        j["candidates"].push_back({{"l", l}, {"R", score}});
    int truncated = 0;
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& tree : v.trees)
        for (const auto& e : tree.edges) {
            truncated += e.truncated ? 1 : 0;
            nlohmann::json je;
            je["tree"] = tree.level;
            je["a"] = e.a;
            je["b"] = e.b;
            je["family"] = copula::family_name(e.pair_copula.family);
            je["params"] = e.pair_copula.params;
            je["tau"] = e.pair_copula.fitted_tau;
            je["rho"] = e.partial_rho;
            je["truncated"] = e.truncated;
            edges.push_back(je);
        }
    j["truncated_edges"] = truncated;
    j["edges"] = edges;
    {
        std::ofstream df(out.diagnostics_path, std::ios::trunc);
        df << j.dump(2) << "\n";
    }
    append_log(cfg, "vine-fit: wrote " + out.vine_path);
    return out;
}

std::string run_report(const std::string& backtest_json_path) {
    std::ifstream f(backtest_json_path);
    if (!f) throw DataError("cannot open " + backtest_json_path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw DataError(std::string("backtest JSON parse error: ") + e.what());
    }
    risk::BacktestReport report;
    for (const auto& lv : j["levels"]) {
        risk::CoverageResult c;
        c.level = lv["level"].get<double>();
        c.count = lv["count"].get<int>();
        c.rate = lv["rate"].get<double>();
        c.lr_uc = lv["lr_uc"].get<double>();
        c.p_uc = lv["p_uc"].get<double>();
        if (!lv["lr_it"].is_null()) c.lr_it = lv["lr_it"].get<double>();
        if (!lv["p_it"].is_null()) c.p_it = lv["p_it"].get<double>();
        if (!lv["lr_cc"].is_null()) c.lr_cc = lv["lr_cc"].get<double>();
        if (!lv["p_cc"].is_null()) c.p_cc = lv["p_cc"].get<double>();
        report.levels.push_back(c);
    }
    const auto& m = j["metrics"];
    report.metrics.mape = m["mape"].get<double>();
    report.metrics.rae = m["rae"].get<double>();
    report.metrics.rse = m["rse"].get<double>();
    if (!m["precision"].is_null()) report.metrics.precision = m["precision"].get<double>();
    if (!m["recall"].is_null()) report.metrics.recall = m["recall"].get<double>();
    report.metrics.accuracy = m["accuracy"].get<double>();
    report.arr = j["arr"].get<double>();
    return risk::report_to_table(report);
}

} // namespace wpvc::pipeline
