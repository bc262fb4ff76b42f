// Evaluation machinery for the forecasting harness: regression and
// confusion-matrix metrics, portfolio returns, ARR, parametric VaR,
// exceedance sequences, and the unconditional/independence/conditional
// coverage backtests with chi-square p-values.
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace wpvc::risk {

struct MetricReport {
    double mape = 0.0;
    double rae = 0.0;
    double rse = 0.0; // root relative squared error (root taken)
    std::optional<double> precision;
    std::optional<double> recall;
    double accuracy = 0.0;
    int mape_excluded = 0; // zero actuals skipped, recorded not hidden
    std::string diagnostics;
};

struct RegressionMetrics {
    double mape = 0.0;
    double rae = 0.0;
    double rse = 0.0;
    int mape_excluded = 0;
};

struct ClassificationMetrics {
    std::optional<double> precision;
    std::optional<double> recall;
    double accuracy = 0.0;
    std::string diagnostics;
};

struct VarSeries {
    double level = 0.0;            // confidence level 1 - alpha
    std::vector<double> values;    // return-space thresholds, one per step
    std::vector<int> indicators;   // filled by exceedances()
};

struct Exceedances {
    std::vector<int> indicators;
    int count = 0;
    double rate = 0.0;
};

struct CoverageResult {
    double level = 0.0;
    int count = 0;
    double rate = 0.0;
    double lr_uc = 0.0;
    double p_uc = 1.0;
    std::optional<double> lr_it;
    std::optional<double> p_it;
    std::optional<double> lr_cc;
    std::optional<double> p_cc;
    bool pass_uc = false;
    bool pass_it = false;
    bool pass_cc = false;
    std::string diagnostics;
};

struct BacktestReport {
    std::vector<CoverageResult> levels;
    MetricReport metrics;
    double arr = 0.0;
    double arr_periods = 1.0;
};

inline constexpr double kUcCritical = 3.841; // chi-square(1), 5%
inline constexpr double kCcCritical = 5.991; // chi-square(2), 5%

// MAPE / RAE / RRSE. Zero actuals are excluded from MAPE with a count;
// all-constant actuals throw UndefinedStatisticError.
RegressionMetrics regression_metrics(std::span<const double> actual,
                                     std::span<const double> predicted);

// Confusion-matrix ratios with "up" as the positive class. Precision (or
// recall) is reported absent when its denominator is empty.
ClassificationMetrics classification_metrics(std::span<const int> actual_up,
                                             std::span<const int> predicted_up);

// gamma_p = sum_i w_i gamma_i per step; weights must sum to 1 +- 1e-12.
std::vector<double> portfolio_return(const std::vector<std::vector<double>>& asset_returns,
                                     std::span<const double> weights);

// ARR = (sum of period returns) / periods, exactly the printed formula.
double arr(std::span<const double> portfolio_returns, double periods);

// Parametric Gaussian VaR threshold mu - z_{level} sigma per step.
VarSeries var_forecast(std::span<const double> mu, std::span<const double> sigma, double level);

// I_{t} = 1 iff realized return < threshold.
Exceedances exceedances(std::span<const double> portfolio_returns, const VarSeries& var);

// Kupiec unconditional coverage, Christoffersen independence and the
// combined conditional coverage test with chi-square p-values.
CoverageResult coverage_tests(std::span<const int> indicators, double level);

// Fixed-field JSON / text renderings of the full report.
std::string report_to_json(const BacktestReport& report);
std::string report_to_table(const BacktestReport& report);

} // namespace wpvc::risk
