#include "wpvc/riskeval.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"
#include "wpvc/errors.hpp"
#include "wpvc/special.hpp"

namespace wpvc::risk {

RegressionMetrics regression_metrics(std::span<const double> actual,
                                     std::span<const double> predicted) {
    if (actual.size() != predicted.size() || actual.size() < 2)
        throw UndefinedStatisticError("regression_metrics: need two equal series of length >= 2");
    const std::size_t n = actual.size();

    double mean = 0.0;
    for (double a : actual) mean += a;
    mean /= static_cast<double>(n);

    double abs_err = 0.0, abs_dev = 0.0, sq_err = 0.0, sq_dev = 0.0;
    double ape = 0.0;
    int ape_n = 0, excluded = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = actual[i] - predicted[i];
        abs_err += std::fabs(e);
        sq_err += e * e;
        abs_dev += std::fabs(actual[i] - mean);
        sq_dev += (actual[i] - mean) * (actual[i] - mean);
        if (actual[i] != 0.0) {
            ape += std::fabs(e / actual[i]);
            ++ape_n;
        } else {
            ++excluded;
        }
    }
    if (abs_dev == 0.0 || sq_dev == 0.0)
        throw UndefinedStatisticError("regression_metrics: constant actuals, relative baselines undefined");

    RegressionMetrics out;
    out.mape = ape_n > 0 ? ape / ape_n : 0.0;
    out.rae = abs_err / abs_dev;
    out.rse = std::sqrt(sq_err / sq_dev);
    out.mape_excluded = excluded;
    return out;
}

ClassificationMetrics classification_metrics(std::span<const int> actual_up,
                                             std::span<const int> predicted_up) {
    if (actual_up.size() != predicted_up.size())
        throw UndefinedStatisticError("classification_metrics: length mismatch");
    long tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t i = 0; i < actual_up.size(); ++i) {
        const bool a = actual_up[i] != 0, p = predicted_up[i] != 0;
        if (a && p) ++tp;
        else if (!a && p) ++fp;
        else if (a && !p) ++fn;
        else ++tn;
    }
    ClassificationMetrics out;
    const long total = tp + fp + fn + tn;
    out.accuracy = total > 0 ? static_cast<double>(tp + tn) / total : 0.0;
    if (tp + fp > 0) out.precision = static_cast<double>(tp) / (tp + fp);
    else out.diagnostics += "precision undefined: no positive predictions; ";
    if (tp + fn > 0) out.recall = static_cast<double>(tp) / (tp + fn);
    else out.diagnostics += "recall undefined: no positive actuals; ";
    return out;
}

std::vector<double> portfolio_return(const std::vector<std::vector<double>>& asset_returns,
                                     std::span<const double> weights) {
    if (asset_returns.empty()) throw ConfigError("portfolio_return: no assets");
    if (asset_returns.size() != weights.size())
        throw ConfigError("portfolio_return: weight count does not match asset count");
    double wsum = 0.0;
    for (double w : weights) wsum += w;
    if (std::fabs(wsum - 1.0) > 1e-12)
        throw ConfigError("portfolio_return: weights must sum to 1");
    const std::size_t T = asset_returns[0].size();
    for (const auto& a : asset_returns)
        if (a.size() != T) throw ConfigError("portfolio_return: assets not aligned in time");

    std::vector<double> out(T, 0.0);
    for (std::size_t i = 0; i < asset_returns.size(); ++i)
        for (std::size_t t = 0; t < T; ++t) out[t] += weights[i] * asset_returns[i][t];
    return out;
}

double arr(std::span<const double> portfolio_returns, double periods) {
    if (portfolio_returns.empty()) throw ConfigError("arr: empty return series");
    if (!(periods > 0.0)) throw ConfigError("arr: periods must be positive");
    double s = 0.0;
    for (double r : portfolio_returns) s += r;
    return s / periods;
}

VarSeries var_forecast(std::span<const double> mu, std::span<const double> sigma, double level) {
    if (!(level > 0.5 && level < 1.0))
        throw ConfigError("var_forecast: confidence level must lie in (0.5, 1)");
    if (mu.size() != sigma.size()) throw ConfigError("var_forecast: mu/sigma length mismatch");
    const double z = special::normal_quantile(level);
    VarSeries out;
    out.level = level;
    out.values.resize(mu.size());
    for (std::size_t t = 0; t < mu.size(); ++t) {
        if (!(sigma[t] > 0.0)) throw ConfigError("var_forecast: sigma must be positive");
        out.values[t] = mu[t] - z * sigma[t];
    }
    return out;
}

Exceedances exceedances(std::span<const double> portfolio_returns, const VarSeries& var) {
    if (portfolio_returns.size() != var.values.size())
        throw DataError("exceedances: return and VaR series are misaligned");
    Exceedances out;
    out.indicators.resize(portfolio_returns.size());
    for (std::size_t t = 0; t < portfolio_returns.size(); ++t) {
        out.indicators[t] = portfolio_returns[t] < var.values[t] ? 1 : 0;
        out.count += out.indicators[t];
    }
    out.rate = portfolio_returns.empty()
                   ? 0.0
                   : static_cast<double>(out.count) / static_cast<double>(portfolio_returns.size());
    return out;
}

namespace {

double xlogy(double x, double y) {
    // 0 log 0 = 0 convention for the Bernoulli likelihoods.
    if (x == 0.0) return 0.0;
    return x * std::log(y);
}

} // namespace

CoverageResult coverage_tests(std::span<const int> indicators, double level) {
    if (indicators.size() < 2)
        throw UndefinedStatisticError("coverage_tests: need at least 2 indicators");
    CoverageResult out;
    out.level = level;
    const double q = 1.0 - level; // expected exceedance probability
    const double T = static_cast<double>(indicators.size());
    double x = 0.0;
    for (int i : indicators) x += i != 0 ? 1.0 : 0.0;
    out.count = static_cast<int>(x);
    out.rate = x / T;

    const double pi_hat = x / T;
    const double ll_q = xlogy(T - x, 1.0 - q) + xlogy(x, q);
    const double ll_pi = xlogy(T - x, 1.0 - pi_hat) + xlogy(x, pi_hat);
    out.lr_uc = std::max(0.0, -2.0 * (ll_q - ll_pi));
    out.p_uc = special::chi_square_sf(out.lr_uc, 1.0);
    out.pass_uc = out.lr_uc < kUcCritical;

    // First-order Markov transition counts.
    double n00 = 0, n01 = 0, n10 = 0, n11 = 0;
    for (std::size_t t = 0; t + 1 < indicators.size(); ++t) {
        const bool a = indicators[t] != 0, b = indicators[t + 1] != 0;
        if (!a && !b) ++n00;
        else if (!a && b) ++n01;
        else if (a && !b) ++n10;
        else ++n11;
    }
    const double from0 = n00 + n01, from1 = n10 + n11;
    if (from0 == 0.0 || from1 == 0.0) {
        out.diagnostics = "independence test undefined: a transition state never occurs";
        return out;
    }
    const double pi01 = n01 / from0;
    const double pi11 = n11 / from1;
    const double pi2 = (n01 + n11) / (from0 + from1);
    const double ll_indep = xlogy(n00 + n10, 1.0 - pi2) + xlogy(n01 + n11, pi2);
    const double ll_markov = xlogy(n00, 1.0 - pi01) + xlogy(n01, pi01) +
                             xlogy(n10, 1.0 - pi11) + xlogy(n11, pi11);
    out.lr_it = std::max(0.0, -2.0 * (ll_indep - ll_markov));
    out.p_it = special::chi_square_sf(*out.lr_it, 1.0);
    out.pass_it = *out.lr_it < kUcCritical;

    out.lr_cc = out.lr_uc + *out.lr_it; // exactly, same accumulation order as reported
    out.p_cc = special::chi_square_sf(*out.lr_cc, 2.0);
    out.pass_cc = *out.lr_cc < kCcCritical;
    return out;
}

std::string report_to_json(const BacktestReport& report) {
    nlohmann::json j;
    j["levels"] = nlohmann::json::array();
    for (const auto& lv : report.levels) {
        nlohmann::json e;
        e["level"] = lv.level;
        e["count"] = lv.count;
        e["rate"] = lv.rate;
        e["lr_uc"] = lv.lr_uc;
        e["p_uc"] = lv.p_uc;
        e["lr_it"] = lv.lr_it ? nlohmann::json(*lv.lr_it) : nlohmann::json(nullptr);
        e["p_it"] = lv.p_it ? nlohmann::json(*lv.p_it) : nlohmann::json(nullptr);
        e["lr_cc"] = lv.lr_cc ? nlohmann::json(*lv.lr_cc) : nlohmann::json(nullptr);
        e["p_cc"] = lv.p_cc ? nlohmann::json(*lv.p_cc) : nlohmann::json(nullptr);
        e["pass"] = {{"uc", lv.pass_uc}, {"it", lv.pass_it}, {"cc", lv.pass_cc}};
        if (!lv.diagnostics.empty()) e["diagnostics"] = lv.diagnostics;
        j["levels"].push_back(e);
    }
    nlohmann::json m;
    m["mape"] = report.metrics.mape;
    m["rae"] = report.metrics.rae;
    m["rse"] = report.metrics.rse;
    m["precision"] =
        report.metrics.precision ? nlohmann::json(*report.metrics.precision) : nlohmann::json(nullptr);
    m["recall"] =
        report.metrics.recall ? nlohmann::json(*report.metrics.recall) : nlohmann::json(nullptr);
    m["accuracy"] = report.metrics.accuracy;
    if (report.metrics.mape_excluded > 0) m["mape_excluded"] = report.metrics.mape_excluded;
    if (!report.metrics.diagnostics.empty()) m["diagnostics"] = report.metrics.diagnostics;
    j["metrics"] = m;
    j["arr"] = report.arr;
    j["arr_periods"] = report.arr_periods;
    return j.dump(2) + "\n";
}

namespace {

std::string pct(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * x);
    return buf;
}

std::string num(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", x);
    return buf;
}

std::string opt_num(const std::optional<double>& x) { return x ? num(*x) : std::string("-"); }

} // namespace

std::string report_to_table(const BacktestReport& report) {
    std::ostringstream os;
    os << "metric          value\n";
    os << "MAPE            " << pct(report.metrics.mape) << "\n";
    os << "RAE             " << num(report.metrics.rae) << "\n";
    os << "RSE             " << num(report.metrics.rse) << "\n";
    os << "precision       "
       << (report.metrics.precision ? pct(*report.metrics.precision) : std::string("-")) << "\n";
    os << "recall          " << (report.metrics.recall ? pct(*report.metrics.recall) : std::string("-"))
       << "\n";
    os << "accuracy        " << pct(report.metrics.accuracy) << "\n";
    os << "ARR             " << pct(report.arr) << "\n";
    os << "\n";
    os << "            1-alpha   POF(count)  POF(rate)  LR_UC (p)        LR_IT (p)        LR_CC (p)\n";
    for (const auto& lv : report.levels) {
        os << "VaR         " << pct(lv.level) << "    " << lv.count << "           " << pct(lv.rate)
           << "      " << num(lv.lr_uc) << " (" << num(lv.p_uc) << ")";
        os << "    " << opt_num(lv.lr_it) << " (" << opt_num(lv.p_it) << ")";
        os << "    " << opt_num(lv.lr_cc) << " (" << opt_num(lv.p_cc) << ")\n";
    }
    return os.str();
}

} // namespace wpvc::risk
