#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "evq/riskfactors.hpp"
#include "evq/synth.hpp"
#include "test_util.hpp"

using namespace evq;
using evq_test::TempDir;

namespace {

// Independent OLS oracle: solve (X'X) b = X'y by Gauss-Jordan with partial
// pivoting, also returning (X'X)^-1 for standard errors. No Eigen anywhere.
struct OracleFit {
    std::vector<double> beta;
    std::vector<std::vector<double>> xtx_inv;
};

OracleFit normal_equations_ols(const std::vector<std::vector<double>>& X,
                               const std::vector<double>& y) {
    const size_t n = X.size(), p = X[0].size();
    std::vector<std::vector<double>> a(p, std::vector<double>(2 * p, 0.0));
    std::vector<double> xty(p, 0.0);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < p; ++j) {
            xty[j] += X[i][j] * y[i];
            for (size_t k = 0; k < p; ++k) a[j][k] += X[i][j] * X[i][k];
        }
    for (size_t j = 0; j < p; ++j) a[j][p + j] = 1.0;
    for (size_t col = 0; col < p; ++col) {
        size_t pivot = col;
        for (size_t r = col + 1; r < p; ++r)
            if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
        std::swap(a[col], a[pivot]);
        REQUIRE(std::abs(a[col][col]) > 1e-12);
        double inv = 1.0 / a[col][col];
        for (size_t k = 0; k < 2 * p; ++k) a[col][k] *= inv;
        for (size_t r = 0; r < p; ++r) {
            if (r == col) continue;
            double f = a[r][col];
            for (size_t k = 0; k < 2 * p; ++k) a[r][k] -= f * a[col][k];
        }
    }
    OracleFit fit;
    fit.xtx_inv.assign(p, std::vector<double>(p));
    for (size_t j = 0; j < p; ++j)
        for (size_t k = 0; k < p; ++k) fit.xtx_inv[j][k] = a[j][p + k];
    fit.beta.assign(p, 0.0);
    for (size_t j = 0; j < p; ++j)
        for (size_t k = 0; k < p; ++k) fit.beta[j] += fit.xtx_inv[j][k] * xty[k];
    return fit;
}

ExposurePanel make_panel(int n, int n_industries, std::mt19937_64& rng) {
    ExposurePanel panel;
    panel.date = "2022-06-01";
    for (int k = 0; k < n_industries; ++k) panel.industries.push_back("IND" + std::to_string(k));
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int i = 0; i < n; ++i) {
        ExposureRow row;
        row.ticker = "S" + std::to_string(i);
        for (int j = 0; j < kNumStyles; ++j) row.styles[j] = gauss(rng);
        row.industry = i % n_industries;
        panel.rows.push_back(std::move(row));
    }
    return panel;
}

std::vector<double> responses_from(const ExposurePanel& panel, const std::vector<double>& lambda,
                                   double noise, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> y;
    for (const auto& row : panel.rows) {
        auto x = panel.design_row(row);
        double v = 0;
        for (size_t j = 0; j < x.size(); ++j) v += x[j] * lambda[j];
        if (noise > 0) v += noise * gauss(rng);
        y.push_back(v);
    }
    return y;
}

} // namespace

TEST_CASE("raw styles: degenerate series") {
    StockSeries s;
    s.ticker = "C";
    for (int d = 0; d < 140; ++d) {
        PriceBar bar;
        bar.day = d;
        bar.open = bar.close = 10.0; // constant price
        bar.volume = 500;
        bar.shares_outstanding = 1e6;
        s.bars.push_back(bar);
    }
    s.finalize();
    auto raw = compute_raw_styles(s, 139);
    REQUIRE(raw.has_value());
    CHECK((*raw)[2] == 0.0); // volatility
    CHECK((*raw)[3] == 0.0); // momentum
    CHECK((*raw)[4] == 0.0); // reversal
    CHECK((*raw)[0] == Catch::Approx(std::log(10.0 * 1e6)));
    CHECK((*raw)[1] == Catch::Approx(500.0 / 1e6));
}

TEST_CASE("raw styles: too little history or missing shares") {
    StockSeries s;
    s.ticker = "X";
    for (int d = 0; d < 50; ++d) {
        PriceBar bar;
        bar.day = d;
        bar.open = bar.close = 10.0;
        bar.volume = 1;
        bar.shares_outstanding = 1e6;
        s.bars.push_back(bar);
    }
    s.finalize();
    CHECK_FALSE(compute_raw_styles(s, 49).has_value()); // needs 126 bars by default
    StyleConfig small;
    small.momentum_window = 20;
    small.momentum_skip = 2;
    CHECK(compute_raw_styles(s, 49, small).has_value());
}

TEST_CASE("identical histories standardize to zero z-scores") {
    // Three clones: every style column is constant across the cross-section,
    // so z-scores all collapse to zero.
    std::map<std::string, StockSeries> stocks;
    MetadataTable meta;
    for (const std::string ticker : {"A", "B", "C"}) {
        StockSeries s;
        s.ticker = ticker;
        double close = 20.0;
        for (int d = 0; d < 140; ++d) {
            close *= 1.0 + 0.001 * ((d % 7) - 3);
            PriceBar bar;
            bar.day = d;
            bar.open = bar.close = close;
            bar.volume = 1000 + d;
            bar.shares_outstanding = 1e6;
            s.bars.push_back(bar);
        }
        s.finalize();
        stocks.emplace(ticker, std::move(s));
        meta.emplace(ticker, StockMeta{"IND0", "BENCH"});
    }
    std::vector<int> serials;
    for (int d = 0; d < 140; ++d) serials.push_back(parse_date("2022-01-03") + d);
    BenchmarkSeries bench;
    bench.index_id = "BENCH";
    for (int d = 0; d < 140; ++d) {
        bench.days.push_back(d);
        bench.closes.push_back(100.0 + d);
    }
    bench.finalize();
    std::map<std::string, BenchmarkSeries> benchmarks;
    benchmarks.emplace("BENCH", std::move(bench));
    PriceTable table(TradingCalendar::from_serials(serials), std::move(stocks),
                     std::move(benchmarks));

    ExposurePanel panel = compute_style_exposures(table, meta, 139);
    REQUIRE(panel.rows.size() == 3);
    for (const auto& row : panel.rows)
        for (double z : row.styles) CHECK(z == 0.0);
}

TEST_CASE("cross-section of fewer than 3 stocks is rejected") {
    SynthSpec spec;
    spec.n_stocks = 2;
    spec.n_days = 140;
    spec.seed = 5;
    auto r = synth_universe(spec);
    CHECK_THROWS_WITH(compute_style_exposures(r.prices, r.metadata, 139),
                      Catch::Matchers::ContainsSubstring("too thin"));
}

TEST_CASE("momentum z-scores preserve trailing-return ordering") {
    // Five stocks with distinct drift; bigger drift => bigger momentum.
    std::map<std::string, StockSeries> stocks;
    MetadataTable meta;
    std::vector<std::string> tickers = {"S0", "S1", "S2", "S3", "S4"};
    for (int i = 0; i < 5; ++i) {
        StockSeries s;
        s.ticker = tickers[i];
        double close = 30.0;
        for (int d = 0; d < 140; ++d) {
            close *= 1.0 + 0.0005 * i; // drift grows with i
            PriceBar bar;
            bar.day = d;
            bar.open = bar.close = close;
            bar.volume = 1e5;
            bar.shares_outstanding = 1e7;
            s.bars.push_back(bar);
        }
        s.finalize();
        stocks.emplace(tickers[i], std::move(s));
        meta.emplace(tickers[i], StockMeta{"IND0", "BENCH"});
    }
    std::vector<int> serials;
    for (int d = 0; d < 140; ++d) serials.push_back(parse_date("2022-01-03") + d);
    BenchmarkSeries bench;
    bench.index_id = "BENCH";
    for (int d = 0; d < 140; ++d) {
        bench.days.push_back(d);
        bench.closes.push_back(100.0);
    }
    bench.finalize();
    std::map<std::string, BenchmarkSeries> benchmarks;
    benchmarks.emplace("BENCH", std::move(bench));
    PriceTable table(TradingCalendar::from_serials(serials), std::move(stocks),
                     std::move(benchmarks));

    ExposurePanel panel = compute_style_exposures(table, meta, 139);
    REQUIRE(panel.rows.size() == 5);
    // Brute-force trailing returns over the momentum window for comparison.
    std::map<std::string, double> trailing;
    for (const auto& t : tickers) {
        const auto& bars = table.stock(t).bars;
        trailing[t] = bars[139 - 5].close / bars[139 - 125].close - 1.0;
    }
    for (size_t a = 0; a < panel.rows.size(); ++a)
        for (size_t b = 0; b < panel.rows.size(); ++b) {
            if (trailing[panel.rows[a].ticker] < trailing[panel.rows[b].ticker])
                CHECK(panel.rows[a].styles[3] < panel.rows[b].styles[3]);
        }
}

TEST_CASE("standardization is idempotent when nothing clips") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> unif(-2.0, 2.0); // bounded: no winsor clipping
    std::vector<double> v(200);
    for (auto& x : v) x = unif(rng);
    detail::winsorize_zscore(v, 3.0);
    std::vector<double> again = v;
    detail::winsorize_zscore(again, 3.0);
    for (size_t i = 0; i < v.size(); ++i) CHECK(std::abs(again[i] - v[i]) < 1e-9);
}

TEST_CASE("panel standardization yields mean 0 / std 1 per style") {
    SynthSpec spec;
    spec.n_stocks = 40;
    spec.n_days = 150;
    spec.noise_scale = 0.01;
    spec.seed = 23;
    auto r = synth_universe(spec);
    ExposurePanel panel = compute_style_exposures(r.prices, r.metadata, 149);
    REQUIRE(panel.rows.size() == 40);
    for (int j = 0; j < kNumStyles; ++j) {
        double mean = 0;
        for (const auto& row : panel.rows) mean += row.styles[j];
        mean /= panel.rows.size();
        double var = 0;
        for (const auto& row : panel.rows) var += (row.styles[j] - mean) * (row.styles[j] - mean);
        double sd = std::sqrt(var / panel.rows.size());
        CHECK(std::abs(mean) < 1e-9);
        CHECK(std::abs(sd - 1.0) < 1e-9);
    }
}

TEST_CASE("premia fit: noiseless exact recovery") {
    std::mt19937_64 rng(31);
    ExposurePanel panel = make_panel(60, 4, rng);
    std::vector<double> lambda = {0.001, -0.002, 0, 0, 0, 0.0005, -0.0005, 0.001, 0.0};
    auto y = responses_from(panel, lambda, 0.0, rng);
    DailyPremia fit = fit_daily_premia(panel, y);
    REQUIRE(fit.premia.size() == lambda.size());
    for (size_t j = 0; j < lambda.size(); ++j)
        CHECK(fit.premia[j] == Catch::Approx(lambda[j]).margin(1e-10));
    CHECK(fit.dropped.empty());
    CHECK(fit.r_squared == Catch::Approx(1.0).margin(1e-10));
}

TEST_CASE("premia fit: all-zero responses give zero premia") {
    std::mt19937_64 rng(37);
    ExposurePanel panel = make_panel(30, 3, rng);
    std::vector<double> y(panel.rows.size(), 0.0);
    DailyPremia fit = fit_daily_premia(panel, y);
    for (double v : fit.premia) CHECK(std::abs(v) < 1e-14);
}

TEST_CASE("premia fit: noisy recovery within 3 standard errors of the oracle") {
    std::mt19937_64 rng(41);
    ExposurePanel panel = make_panel(500, 5, rng);
    std::vector<double> lambda = {0.002, -0.001, 0.0005, 0.0, -0.0015,
                                  0.001, -0.001, 0.0005, -0.0005, 0.0};
    const double noise = 0.01;
    auto y = responses_from(panel, lambda, noise, rng);
    DailyPremia fit = fit_daily_premia(panel, y);

    // Oracle: independent normal-equations solve plus standard errors.
    std::vector<std::vector<double>> X;
    for (const auto& row : panel.rows) X.push_back(panel.design_row(row));
    OracleFit oracle = normal_equations_ols(X, y);
    const size_t n = X.size(), p = lambda.size();
    double ss = 0;
    for (size_t i = 0; i < n; ++i) {
        double fitted = 0;
        for (size_t j = 0; j < p; ++j) fitted += X[i][j] * oracle.beta[j];
        ss += (y[i] - fitted) * (y[i] - fitted);
    }
    double s2 = ss / (n - p);
    for (size_t j = 0; j < p; ++j) {
        CHECK(fit.premia[j] == Catch::Approx(oracle.beta[j]).margin(1e-10));
        double se = std::sqrt(s2 * oracle.xtx_inv[j][j]);
        CHECK(std::abs(fit.premia[j] - lambda[j]) < 3.0 * se);
    }
}

TEST_CASE("premia fit: residuals orthogonal to the design") {
    std::mt19937_64 rng(43);
    ExposurePanel panel = make_panel(200, 4, rng);
    std::vector<double> lambda(panel.design_dim(), 0.0);
    lambda[0] = 0.003;
    auto y = responses_from(panel, lambda, 0.02, rng);
    DailyPremia fit = fit_daily_premia(panel, y);

    std::vector<double> resid;
    double y_norm = 0;
    for (size_t i = 0; i < panel.rows.size(); ++i) {
        auto x = panel.design_row(panel.rows[i]);
        resid.push_back(y[i] - fit.dot(x));
        y_norm += y[i] * y[i];
    }
    for (int j = 0; j < panel.design_dim(); ++j) {
        double dot = 0;
        for (size_t i = 0; i < panel.rows.size(); ++i)
            dot += panel.design_row(panel.rows[i])[j] * resid[i];
        CHECK(std::abs(dot) < 1e-8 * std::max(1.0, std::sqrt(y_norm)));
    }

    // The fit never increases variance.
    double var_resid = 0, var_y = 0;
    for (size_t i = 0; i < resid.size(); ++i) {
        var_resid += resid[i] * resid[i];
        var_y += y[i] * y[i];
    }
    CHECK(var_resid <= var_y + 1e-15);
}

TEST_CASE("premia fit: dropping a column never decreases the residual sum of squares") {
    std::mt19937_64 rng(47);
    ExposurePanel full = make_panel(120, 3, rng);
    std::vector<double> lambda(full.design_dim(), 0.0005);
    auto y = responses_from(full, lambda, 0.01, rng);

    auto rss = [&](const ExposurePanel& panel, const std::vector<double>& resp) {
        DailyPremia fit = fit_daily_premia(panel, resp);
        double ss = 0;
        for (size_t i = 0; i < panel.rows.size(); ++i) {
            double r = resp[i] - fit.dot(panel.design_row(panel.rows[i]));
            ss += r * r;
        }
        return ss;
    };

    double rss_full = rss(full, y);
    // Nested model: zero out one style column (drops its explanatory power).
    ExposurePanel reduced = full;
    for (auto& row : reduced.rows) row.styles[1] = 0.0;
    double rss_reduced = rss(reduced, y);
    CHECK(rss_reduced >= rss_full - 1e-12);
}

TEST_CASE("premia fit: rank-deficient design reports dropped columns") {
    std::mt19937_64 rng(53);
    ExposurePanel panel = make_panel(50, 3, rng);
    // Make style 1 an exact copy of style 0: collinear pair.
    for (auto& row : panel.rows) row.styles[1] = row.styles[0];
    std::vector<double> lambda(panel.design_dim(), 0.0);
    lambda[0] = 0.002;
    auto y = responses_from(panel, lambda, 0.0, rng);
    DailyPremia fit = fit_daily_premia(panel, y);
    CHECK(fit.dropped.size() == 1);
    // Fitted values are still exact even with the collinearity resolved.
    for (size_t i = 0; i < panel.rows.size(); ++i)
        CHECK(fit.dot(panel.design_row(panel.rows[i])) == Catch::Approx(y[i]).margin(1e-10));
}

TEST_CASE("premia fit: too few observations is an error") {
    std::mt19937_64 rng(59);
    ExposurePanel panel = make_panel(8, 3, rng); // 8 rows vs 8 factors
    std::vector<double> y(8, 0.0);
    CHECK_THROWS_WITH(fit_daily_premia(panel, y),
                      Catch::Matchers::ContainsSubstring("observations"));
}

TEST_CASE("exposures files round-trip") {
    std::mt19937_64 rng(61);
    std::map<std::string, ExposurePanel> panels;
    panels.emplace("2022-03-01", make_panel(10, 2, rng));
    panels.emplace("2022-03-02", make_panel(10, 2, rng));

    TempDir tmp;
    write_exposures(panels, tmp.file("exposures.csv"));
    auto loaded = read_exposures(tmp.file("exposures.csv"));
    REQUIRE(loaded.size() == 2);
    for (const auto& [date, panel] : panels) {
        const auto& got = loaded.at(date);
        REQUIRE(got.rows.size() == panel.rows.size());
        for (size_t i = 0; i < panel.rows.size(); ++i) {
            CHECK(got.rows[i].ticker == panel.rows[i].ticker);
            CHECK(got.rows[i].styles == panel.rows[i].styles);
            CHECK(got.industries[got.rows[i].industry] ==
                  panel.industries[panel.rows[i].industry]);
        }
    }
}
