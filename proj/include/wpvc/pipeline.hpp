// Batch pipeline behind the CLI subcommands: prices -> returns, training,
// forecasting, backtesting and standalone vine fitting. All outputs are
// deterministic given the inputs and seed; wall-clock timestamps go to a
// sidecar run.log only.
#pragma once

#include <string>

#include "wpvc/config.hpp"
#include "wpvc/data.hpp"
#include "wpvc/riskeval.hpp"
#include "wpvc/vlstm.hpp"

namespace wpvc::pipeline {

// prices CSV -> returns CSV (out_dir/returns.csv). Returns the output path.
std::string run_returns(const io::RunConfig& cfg);

struct TrainOutputs {
    std::string checkpoint_path;
    std::string trace_path;
    std::string vine_path;
    bool diverged = false;
    bool converged = false;
};

// Trains on the rows up to cfg.train_end and writes the checkpoint, the loss
// trace CSV (epoch, L_P, -L_VAE, total) and the fitted latent vine file.
TrainOutputs run_train(const io::RunConfig& cfg);

// One-step-ahead forecasts over [from, to] (dates, empty = validation split /
// data bounds). Writes out_dir/forecast.csv.
std::string run_forecast(const io::RunConfig& cfg, const std::string& checkpoint_path,
                         const std::string& from_date, const std::string& to_date);

struct BacktestOutputs {
    std::string json_path;
    std::string table_path;
    risk::BacktestReport report;
};

// Applies the long/short (or long/flat) strategy implied by the forecasts,
// computes the forecasting metric set, VaR exceedances and coverage tests.
BacktestOutputs run_backtest(const io::RunConfig& cfg, const std::string& forecast_csv);

struct VineFitOutputs {
    std::string vine_path;
    std::string diagnostics_path;
};

// Fits the weighted partial regular vine directly on the observed returns
// (no network) and writes the structure file plus per-candidate diagnostics.
VineFitOutputs run_vine_fit(const io::RunConfig& cfg);

// Renders an existing backtest JSON as the plain-text table.
std::string run_report(const std::string& backtest_json_path);

// Loads returns from cfg (returns_path preferred, else prices_path).
io::ReturnsPanel load_input_returns(const io::RunConfig& cfg);

void append_log(const io::RunConfig& cfg, const std::string& message);

} // namespace wpvc::pipeline
