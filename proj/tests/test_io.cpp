#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "wpvc/config.hpp"
#include "wpvc/data.hpp"
#include "wpvc/errors.hpp"
#include "wpvc/pipeline.hpp"
#include "wpvc/rng.hpp"

using namespace wpvc;
using namespace wpvc::io;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name, const std::string& content)
        : path((std::filesystem::temp_directory_path() / name).string()) {
        std::ofstream f(path, std::ios::trunc);
        f << content;
    }
    ~TempFile() { std::remove(path.c_str()); }
};

std::string read_file(const std::string& path) {
    std::ifstream f(path);
    std::string s((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return s;
}

} // namespace

TEST_CASE("load_prices parses well-formed files and rejects malformed ones") {
    TempFile ok("wpvc_ok.csv",
                "date,aaa,bbb\n2021-01-04,100,50\n2021-01-05,101,51\n2021-01-06,99,49\n");
    auto panel = load_prices(ok.path);
    CHECK(panel.dates.size() == 3);
    CHECK(panel.instruments == std::vector<std::string>{"aaa", "bbb"});
    CHECK(panel.prices.at(1, 0) == doctest::Approx(101.0));

    TempFile dup("wpvc_dup.csv", "date,aaa\n2021-01-04,100\n2021-01-04,101\n");
    try {
        load_prices(dup.path);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("duplicate date") != std::string::npos);
        CHECK(std::string(e.what()).find("2021-01-04") != std::string::npos);
    }

    TempFile bad_num("wpvc_badnum.csv", "date,aaa\n2021-01-04,abc\n");
    try {
        load_prices(bad_num.path);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
        CHECK(std::string(e.what()).find("aaa") != std::string::npos);
    }

    TempFile bad_date("wpvc_baddate.csv", "date,aaa\n2021-13-04,100\n");
    CHECK_THROWS_AS(load_prices(bad_date.path), DataError);

    // Blank cell: a recorded missing value, not an error.
    TempFile blank("wpvc_blank.csv", "date,aaa,bbb\n2021-01-04,100,\n2021-01-05,101,51\n");
    auto with_missing = load_prices(blank.path);
    CHECK(with_missing.missing(0, 1));
    CHECK_FALSE(with_missing.missing(0, 0));
}

TEST_CASE("to_log_returns: arithmetic, constants, and alignment policies") {
    TempFile f("wpvc_ret.csv", "date,aaa\n2021-01-04,100\n2021-01-05,110\n");
    auto panel = load_prices(f.path);
    auto ret = to_log_returns(panel, "intersection");
    CHECK(ret.returns.at(0, 0) == doctest::Approx(std::log(1.1)));
    CHECK(ret.returns.at(0, 0) == doctest::Approx(0.09531).epsilon(1e-4));

    TempFile c("wpvc_const.csv", "date,aaa\n2021-01-04,42\n2021-01-05,42\n2021-01-06,42\n");
    auto cret = to_log_returns(load_prices(c.path), "intersection");
    for (int t = 0; t < cret.returns.rows; ++t) CHECK(cret.returns.at(t, 0) == 0.0);

    // Disjoint holidays under intersection: only common dates survive.
    TempFile h("wpvc_holiday.csv",
               "date,aaa,bbb\n"
               "2021-01-04,100,50\n"
               "2021-01-05,,51\n"
               "2021-01-06,102,\n"
               "2021-01-07,103,53\n"
               "2021-01-08,104,54\n");
    auto hpanel = load_prices(h.path);
    auto hret = to_log_returns(hpanel, "intersection");
    // Common dates: 04, 07, 08 -> two returns.
    CHECK(hret.returns.rows == 2);
    CHECK(hret.dates == std::vector<std::string>{"2021-01-07", "2021-01-08"});

    // Forward fill carries the last observation across the gaps.
    auto ffret = to_log_returns(hpanel, "forward_fill");
    CHECK(ffret.returns.rows == 4);
    CHECK(ffret.returns.at(0, 0) == doctest::Approx(0.0)); // aaa filled at 01-05

    TempFile tiny("wpvc_tiny.csv", "date,aaa\n2021-01-04,100\n");
    CHECK_THROWS_AS(to_log_returns(load_prices(tiny.path), "intersection"), DataError);
}

TEST_CASE("price and returns files round-trip losslessly") {
    Rng rng(99);
    PricePanel panel;
    panel.instruments = {"x", "y"};
    panel.prices = Matrix(5, 2);
    const char* days[] = {"2021-02-01", "2021-02-02", "2021-02-03", "2021-02-04", "2021-02-05"};
    for (int t = 0; t < 5; ++t) {
        panel.dates.push_back(days[t]);
        panel.prices.at(t, 0) = 100.0 * std::exp(0.01 * rng.normal());
        panel.prices.at(t, 1) = 50.0 * std::exp(0.01 * rng.normal());
    }
    const std::string path = (std::filesystem::temp_directory_path() / "wpvc_rt.csv").string();
    save_prices(panel, path);
    auto back = load_prices(path);
    CHECK(back.dates == panel.dates);
    CHECK(back.instruments == panel.instruments);
    for (int t = 0; t < 5; ++t)
        for (int c = 0; c < 2; ++c) CHECK(back.prices.at(t, c) == panel.prices.at(t, c));

    // And byte-identical when saved again.
    const std::string path2 = (std::filesystem::temp_directory_path() / "wpvc_rt2.csv").string();
    save_prices(back, path2);
    CHECK(read_file(path) == read_file(path2));
    std::remove(path.c_str());
    std::remove(path2.c_str());
}

TEST_CASE("config loading applies the documented schema and validation") {
    TempFile cfgf("wpvc_cfg.json", R"({
        "data": {"prices": "p.csv", "alignment": "forward_fill"},
        "split": {"train_end": "2018-12-28", "validation_start": "2019-01-07"},
        "training": {"epochs": 5, "learning_rate": 0.001, "seed": 9,
                      "hidden_dim": 12, "latent_dim": 3, "window": 8,
                      "ablation": "mean_field"},
        "vine": {"rho_trun": 0.1, "families": ["independence", "gaussian"]},
        "var_levels": [0.9, 0.95],
        "periods_per_year": 252,
        "out_dir": "results"
    })");
    auto cfg = load_config(cfgf.path);
    CHECK(cfg.prices_path == "p.csv");
    CHECK(cfg.alignment == "forward_fill");
    CHECK(cfg.train_end == "2018-12-28");
    CHECK(cfg.training.epochs == 5);
    CHECK(cfg.training.seed == 9);
    CHECK(cfg.training.dims.d_h == 12);
    CHECK(cfg.training.dims.d_z == 3);
    CHECK(cfg.training.rho_trun == doctest::Approx(0.1));
    CHECK(cfg.training.ablation == vlstm::Ablation::MeanField);
    CHECK(cfg.training.copula_candidates.size() == 2);
    CHECK(cfg.var_levels.size() == 2);
    CHECK(cfg.out_dir == "results");

    // Defaults mirror the reference hyperparameters.
    auto def = default_config();
    CHECK(def.training.epochs == 500);
    CHECK(def.training.learning_rate == doctest::Approx(5e-4));
    CHECK(def.training.dims.d_h == 100);
    CHECK(def.training.dims.d_z == 10);
    CHECK(def.training.dims.d_feat == 10);
    CHECK(def.training.checkpoint_every == 10);
    CHECK(def.training.rho_trun == doctest::Approx(0.05));

    TempFile bad("wpvc_badcfg.json", R"({"var_levels": [1.5]})");
    CHECK_THROWS_AS(load_config(bad.path), ConfigError);

    TempFile bad2("wpvc_badcfg2.json", R"({"split": {"train_end": "2020-01-05",
                                                      "validation_start": "2020-01-02"}})");
    CHECK_THROWS_AS(load_config(bad2.path), ConfigError);
}

TEST_CASE("edge weight files override the uniform default") {
    TempFile wf("wpvc_weights.json", R"({"default": 0.5, "pairs": [{"a":0,"b":2,"w":2.0}]})");
    auto w = load_edge_weights(wf.path, 3);
    CHECK(w.at(0, 1) == doctest::Approx(0.5));
    CHECK(w.at(0, 2) == doctest::Approx(2.0));
    CHECK(w.at(2, 0) == doctest::Approx(2.0));
    auto uniform = load_edge_weights("", 3);
    CHECK(uniform.at(0, 1) == doctest::Approx(1.0));
}

TEST_CASE("pipeline: backtest on perfect and coin-flip forecasts") {
    namespace fs = std::filesystem;
    const std::string dir = "io_backtest_test";
    fs::remove_all(dir);
    fs::create_directories(dir);

    // Synthetic symmetric returns, 2 instruments.
    Rng rng(2468);
    const int T = 400;
    ReturnsPanel panel;
    panel.instruments = {"a", "b"};
    panel.returns = Matrix(T, 2);
    {
        int y = 2020, m = 1, d = 1;
        for (int t = 0; t < T; ++t) {
            char buf[40];
            std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", y, m, d);
            panel.dates.push_back(buf);
            if (++d > 28) { d = 1; if (++m > 12) { m = 1; ++y; } }
            panel.returns.at(t, 0) = 0.01 * rng.normal();
            panel.returns.at(t, 1) = 0.01 * rng.normal();
        }
    }
    const std::string returns_csv = dir + "/returns.csv";
    save_returns(panel, returns_csv);

    RunConfig cfg = default_config();
    cfg.returns_path = returns_csv;
    cfg.out_dir = dir;

    auto write_forecast = [&](bool perfect, int flips_seed) {
        Rng coin(flips_seed);
        std::ofstream f(dir + "/fc.csv", std::ios::trunc);
        f << "date,a_mu,a_sigma,a_up,b_mu,b_sigma,b_up,portfolio_mu\n";
        for (int t = 0; t < T; ++t) {
            f << panel.dates[t];
            for (int c = 0; c < 2; ++c) {
                const double a = panel.returns.at(t, c);
                const double mu = perfect ? a : 0.0;
                const double up = perfect ? (a > 0 ? 1.0 : 0.0) : (coin.uniform() < 0.5 ? 0.9 : 0.1);
                f << "," << mu << ",0.01," << up;
            }
            f << ",0\n";
        }
    };

    write_forecast(true, 0);
    auto perfect = pipeline::run_backtest(cfg, dir + "/fc.csv");
    CHECK(perfect.report.metrics.mape == doctest::Approx(0.0));
    CHECK(perfect.report.metrics.accuracy == doctest::Approx(1.0));

    write_forecast(false, 97531);
    auto coin = pipeline::run_backtest(cfg, dir + "/fc.csv");
    CHECK(coin.report.metrics.accuracy == doctest::Approx(0.5).epsilon(0.1));
    CHECK(std::fabs(coin.report.metrics.accuracy - 0.5) <= 0.05);

    // Misaligned forecast dates are rejected with the offenders named.
    {
        std::ofstream f(dir + "/fc_bad.csv", std::ios::trunc);
        f << "date,a_mu,a_sigma,a_up,b_mu,b_sigma,b_up,portfolio_mu\n";
        f << "1999-01-01,0,0.01,0.5,0,0.01,0.5,0\n";
        f.close();
        try {
            pipeline::run_backtest(cfg, dir + "/fc_bad.csv");
            FAIL("expected DataError");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("1999-01-01") != std::string::npos);
        }
    }
    fs::remove_all(dir);
}

TEST_CASE("pipeline: forecast ranges produce the documented row counts") {
    namespace fs = std::filesystem;
    const std::string dir = "io_forecast_test";
    fs::remove_all(dir);
    fs::create_directories(dir);

    Rng rng(13);
    const int T = 60;
    ReturnsPanel panel;
    panel.instruments = {"a", "b"};
    panel.returns = Matrix(T, 2);
    {
        int d = 0;
        for (int t = 0; t < T; ++t) {
            char buf[40];
            std::snprintf(buf, sizeof buf, "2022-%02d-%02d", 1 + d / 28, 1 + d % 28);
            ++d;
            panel.dates.push_back(buf);
            panel.returns.at(t, 0) = 0.5 * rng.normal();
            panel.returns.at(t, 1) = 0.5 * rng.normal();
        }
    }
    save_returns(panel, dir + "/returns.csv");

    RunConfig cfg = default_config();
    cfg.returns_path = dir + "/returns.csv";
    cfg.out_dir = dir;
    cfg.training.epochs = 2;
    cfg.training.batch_size = 4;
    cfg.training.window = 8;
    cfg.training.dims = vlstm::Dimensions{0, 4, 2, 3};
    cfg.training.max_windows_per_epoch = 8;
    cfg.training.checkpoint_every = 1;
    auto train_out = pipeline::run_train(cfg);

    auto count_rows = [&](const std::string& path) {
        std::ifstream f(path);
        std::string line;
        int rows = -1; // skip header
        while (std::getline(f, line))
            if (!line.empty()) ++rows;
        return rows;
    };

    // Empty range: header-only file.
    const std::string p1 = pipeline::run_forecast(cfg, train_out.checkpoint_path, "2030-01-01", "");
    CHECK(count_rows(p1) == 0);

    // Range of length 1: exactly one data row.
    const std::string p2 =
        pipeline::run_forecast(cfg, train_out.checkpoint_path, panel.dates[30], panel.dates[30]);
    CHECK(count_rows(p2) == 1);

    // Repeated invocations are byte-identical (prior-mean mode).
    const std::string p3 = pipeline::run_forecast(cfg, train_out.checkpoint_path, panel.dates[10],
                                                  panel.dates[40]);
    const std::string content = read_file(p3);
    const std::string p4 = pipeline::run_forecast(cfg, train_out.checkpoint_path, panel.dates[10],
                                                  panel.dates[40]);
    CHECK(read_file(p4) == content);
    fs::remove_all(dir);
}

TEST_CASE("pipeline: vine-fit diagnostics list one candidate per inverse level") {
    namespace fs = std::filesystem;
    const std::string dir = "io_vinefit_test";
    fs::remove_all(dir);
    fs::create_directories(dir);

    Rng rng(6006);
    const int T = 300, n = 6;
    ReturnsPanel panel;
    panel.returns = Matrix(T, n);
    for (int c = 0; c < n; ++c) panel.instruments.push_back(std::string(1, 'a' + c));
    {
        int d = 0;
        for (int t = 0; t < T; ++t) {
            char buf[40];
            std::snprintf(buf, sizeof buf, "20%02d-%02d-%02d", 20 + d / 336, 1 + (d / 28) % 12,
                          1 + d % 28);
            ++d;
            panel.dates.push_back(buf);
            const double f = rng.normal();
            for (int c = 0; c < n; ++c) panel.returns.at(t, c) = 0.6 * f + rng.normal();
        }
    }
    save_returns(panel, dir + "/returns.csv");

    RunConfig cfg = default_config();
    cfg.returns_path = dir + "/returns.csv";
    cfg.out_dir = dir;
    cfg.training.copula_candidates = {copula::CopulaFamily::Independence,
                                      copula::CopulaFamily::Gaussian};
    auto out = pipeline::run_vine_fit(cfg);

    std::ifstream jf(out.diagnostics_path);
    std::string json((std::istreambuf_iterator<char>(jf)), std::istreambuf_iterator<char>());
    // ceil(6/2) = 3 candidate structures, l in {5,4,3}.
    CHECK(json.find("\"candidates\"") != std::string::npos);
    int count = 0;
    for (std::size_t p = json.find("\"l\""); p != std::string::npos; p = json.find("\"l\"", p + 1))
        ++count;
    CHECK(count == 3);
    fs::remove_all(dir);
}

TEST_CASE("date_range selects inclusive bounds") {
    std::vector<std::string> dates = {"2021-01-04", "2021-01-05", "2021-01-06", "2021-01-07"};
    auto [b1, e1] = date_range(dates, "", "");
    CHECK(b1 == 0);
    CHECK(e1 == 4);
    auto [b2, e2] = date_range(dates, "2021-01-05", "2021-01-06");
    CHECK(b2 == 1);
    CHECK(e2 == 3);
    auto [b3, e3] = date_range(dates, "2021-01-05", "2021-01-05");
    CHECK(e3 - b3 == 1);
}
