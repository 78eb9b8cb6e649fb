#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "evq/csv.hpp"
#include "evq/marketdata.hpp"

// Barra-style risk model pieces: price/volume-derived style exposures plus
// industry dummies, and the daily cross-sectional OLS that turns a panel of
// market-adjusted abnormal returns into factor premia.
//
// Style definitions (raw values, before winsorization and z-scoring):
//   size       = log(close * shares_outstanding)
//   liquidity  = mean(volume / shares_outstanding) over the trailing window
//   volatility = std of daily returns over the trailing window
//   momentum   = trailing return over the momentum window, skipping the most
//                recent bars (close[t-skip] / close[t-skip-window] - 1)
//   reversal   = trailing short-horizon return (close[t] / close[t-window] - 1)
//
// Everything here is pure: distinct days can be fitted concurrently.

namespace evq {

inline constexpr int kNumStyles = 5;
inline const std::array<std::string, kNumStyles> kStyleNames = {"size", "liquidity", "volatility",
                                                                "momentum", "reversal"};

struct StyleConfig {
    int liquidity_window = 20;
    int volatility_window = 20;
    int momentum_window = 120;
    int momentum_skip = 5;
    int reversal_window = 5;
    double winsor_sigma = 3.0; // clamp raw values at mean +/- sigma * std
};

struct ExposureRow {
    std::string ticker;
    std::array<double, kNumStyles> styles{};
    int industry = 0; // index into ExposurePanel::industries
};

// One day's standardized cross-section.
struct ExposurePanel {
    std::string date;
    std::vector<ExposureRow> rows;
    std::vector<std::string> industries;

    int design_dim() const { return kNumStyles + static_cast<int>(industries.size()); }

    std::vector<std::string> factor_names() const {
        std::vector<std::string> names(kStyleNames.begin(), kStyleNames.end());
        for (const auto& ind : industries) names.push_back("industry:" + ind);
        return names;
    }

    // Styles followed by the industry one-hot block (no global intercept).
    std::vector<double> design_row(const ExposureRow& row) const {
        std::vector<double> x(design_dim(), 0.0);
        for (int j = 0; j < kNumStyles; ++j) x[j] = row.styles[j];
        x[kNumStyles + row.industry] = 1.0;
        return x;
    }

    const ExposureRow* find(const std::string& ticker) const {
        for (const auto& r : rows)
            if (r.ticker == ticker) return &r;
        return nullptr;
    }
};

namespace detail {

// Winsorize at +/- sigma cross-sectional std, then z-score. Population std
// throughout; a zero-spread cross-section standardizes to all zeros.
inline void winsorize_zscore(std::vector<double>& v, double sigma) {
    const size_t n = v.size();
    if (n == 0) return;
    double mean = 0;
    for (double x : v) mean += x;
    mean /= n;
    double var = 0;
    for (double x : v) var += (x - mean) * (x - mean);
    double sd = std::sqrt(var / n);
    if (sd > 0) {
        const double lo = mean - sigma * sd, hi = mean + sigma * sd;
        for (double& x : v) x = std::clamp(x, lo, hi);
    }
    mean = 0;
    for (double x : v) mean += x;
    mean /= n;
    var = 0;
    for (double x : v) var += (x - mean) * (x - mean);
    sd = std::sqrt(var / n);
    for (double& x : v) x = sd > 0 ? (x - mean) / sd : 0.0;
}

} // namespace detail

// Raw (unstandardized) styles for one stock as of `day`, or nullopt when the
// history is too short or shares outstanding are unavailable.
inline std::optional<std::array<double, kNumStyles>>
compute_raw_styles(const StockSeries& s, int day, const StyleConfig& cfg = {}) {
    auto posOpt = s.position_of_day(day);
    if (!posOpt) return std::nullopt;
    const int pos = *posOpt;
    const int need = std::max({cfg.liquidity_window, cfg.volatility_window,
                               cfg.momentum_window + cfg.momentum_skip, cfg.reversal_window});
    if (pos < need) return std::nullopt;
    const auto& bars = s.bars;
    if (!bars[pos].shares_outstanding) return std::nullopt;

    std::array<double, kNumStyles> out{};
    out[0] = std::log(bars[pos].close * *bars[pos].shares_outstanding);

    double liq = 0;
    for (int i = pos - cfg.liquidity_window + 1; i <= pos; ++i) {
        if (!bars[i].shares_outstanding) return std::nullopt;
        liq += bars[i].volume / *bars[i].shares_outstanding;
    }
    out[1] = liq / cfg.liquidity_window;

    double mean = 0;
    for (int i = pos - cfg.volatility_window + 1; i <= pos; ++i)
        mean += bars[i].close / bars[i - 1].close - 1.0;
    mean /= cfg.volatility_window;
    double var = 0;
    for (int i = pos - cfg.volatility_window + 1; i <= pos; ++i) {
        double r = bars[i].close / bars[i - 1].close - 1.0;
        var += (r - mean) * (r - mean);
    }
    out[2] = std::sqrt(var / cfg.volatility_window);

    out[3] = bars[pos - cfg.momentum_skip].close / bars[pos - cfg.momentum_skip - cfg.momentum_window].close - 1.0;
    out[4] = bars[pos].close / bars[pos - cfg.reversal_window].close - 1.0;
    return out;
}

// Standardized cross-section for one day. Stocks lacking a bar on `day`,
// shares outstanding, metadata, or enough history are left out.
inline ExposurePanel compute_style_exposures(const PriceTable& prices, const MetadataTable& meta,
                                             int day, const StyleConfig& cfg = {}) {
    ExposurePanel panel;
    panel.date = prices.calendar().date(day);
    std::map<std::string, int> industry_index;
    for (const auto& [ticker, series] : prices.stocks()) {
        auto mit = meta.find(ticker);
        if (mit == meta.end()) continue;
        auto raw = compute_raw_styles(series, day, cfg);
        if (!raw) continue;
        ExposureRow row;
        row.ticker = ticker;
        row.styles = *raw;
        auto [iit, inserted] = industry_index.emplace(mit->second.industry,
                                                      static_cast<int>(panel.industries.size()));
        if (inserted) panel.industries.push_back(mit->second.industry);
        row.industry = iit->second;
        panel.rows.push_back(std::move(row));
    }
    require(panel.rows.size() >= 3, "cross-section too thin to standardize on ",
            panel.date, " (", panel.rows.size(), " eligible stocks)");
    for (int j = 0; j < kNumStyles; ++j) {
        std::vector<double> col(panel.rows.size());
        for (size_t i = 0; i < panel.rows.size(); ++i) col[i] = panel.rows[i].styles[j];
        detail::winsorize_zscore(col, cfg.winsor_sigma);
        for (size_t i = 0; i < panel.rows.size(); ++i) panel.rows[i].styles[j] = col[i];
    }
    return panel;
}

struct DailyPremia {
    std::string date;
    std::vector<std::string> factor_names;
    std::vector<double> premia;          // zero for dropped columns
    std::vector<std::string> dropped;    // rank-deficient columns, reported
    double r_squared = 0.0;
    int n_obs = 0;

    double dot(const std::vector<double>& design_row) const {
        double acc = 0;
        for (size_t j = 0; j < premia.size(); ++j) acc += premia[j] * design_row[j];
        return acc;
    }
};

// Cross-sectional OLS of the day's responses on the exposure design. Rank
// deficiency is resolved by dropping the non-pivot columns (reported by name,
// coefficient fixed at zero); residuals stay orthogonal to the full design.
inline DailyPremia fit_daily_premia(const ExposurePanel& panel, const std::vector<double>& responses) {
    const int n = static_cast<int>(panel.rows.size());
    const int p = panel.design_dim();
    require(static_cast<int>(responses.size()) == n, "fit_daily_premia: ", responses.size(),
            " responses for ", n, " exposure rows");
    require(n > p, "fit_daily_premia on ", panel.date, ": ", n, " observations for ", p,
            " factors (need > ", p, ")");

    Eigen::MatrixXd X(n, p);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        auto xr = panel.design_row(panel.rows[i]);
        for (int j = 0; j < p; ++j) X(i, j) = xr[j];
        y(i) = responses[i];
    }

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    const int rank = static_cast<int>(qr.rank());
    DailyPremia out;
    out.date = panel.date;
    out.factor_names = panel.factor_names();
    out.premia.assign(p, 0.0);
    out.n_obs = n;

    const auto& perm = qr.colsPermutation().indices();
    if (rank == p) {
        Eigen::VectorXd beta = qr.solve(y);
        for (int j = 0; j < p; ++j) out.premia[j] = beta(j);
    } else {
        std::vector<int> kept(perm.data(), perm.data() + rank);
        for (int j = rank; j < p; ++j) out.dropped.push_back(out.factor_names[perm(j)]);
        Eigen::MatrixXd Xk(n, rank);
        for (int j = 0; j < rank; ++j) Xk.col(j) = X.col(kept[j]);
        Eigen::VectorXd beta = Xk.colPivHouseholderQr().solve(y);
        for (int j = 0; j < rank; ++j) out.premia[kept[j]] = beta(j);
    }

    Eigen::VectorXd fitted = Eigen::VectorXd::Zero(n);
    for (int j = 0; j < p; ++j)
        if (out.premia[j] != 0.0) fitted += out.premia[j] * X.col(j);
    const double ss_res = (y - fitted).squaredNorm();
    const double ss_tot = y.squaredNorm();
    out.r_squared = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
    return out;
}

// ---------------------------------------------------------------------------
// Exposure / premia files (for inspection and replay)
// ---------------------------------------------------------------------------

inline const std::vector<std::string> kExposuresHeader = {
    "ticker", "date", "size", "liquidity", "volatility", "momentum", "reversal", "industry"};
inline const std::vector<std::string> kPremiaHeader = {"date", "factor", "value"};
inline const std::vector<std::string> kPremiaFitHeader = {"date", "r_squared", "n_obs", "dropped"};

inline void write_exposures(const std::map<std::string, ExposurePanel>& panels,
                            const std::string& path) {
    CsvWriter out(path, kExposuresHeader);
    for (const auto& [date, panel] : panels)
        for (const auto& row : panel.rows) {
            std::vector<std::string> f{row.ticker, date};
            for (double s : row.styles) f.push_back(format_double(s));
            f.push_back(panel.industries[row.industry]);
            out.row(f);
        }
}

inline std::map<std::string, ExposurePanel> read_exposures(const std::string& path) {
    std::map<std::string, ExposurePanel> panels;
    std::map<std::string, std::map<std::string, int>> industry_index;
    CsvReader in(path, kExposuresHeader);
    std::vector<std::string> f;
    while (in.next(f)) {
        auto& panel = panels[f[1]];
        panel.date = f[1];
        ExposureRow row;
        row.ticker = f[0];
        for (int j = 0; j < kNumStyles; ++j)
            row.styles[j] = parse_double(f[2 + j], kStyleNames[j].c_str(), in.line());
        auto& idx = industry_index[f[1]];
        auto [iit, inserted] = idx.emplace(f[7], static_cast<int>(panel.industries.size()));
        if (inserted) panel.industries.push_back(f[7]);
        row.industry = iit->second;
        panel.rows.push_back(std::move(row));
    }
    return panels;
}

inline void write_premia(const std::map<std::string, DailyPremia>& premia, const std::string& path,
                         const std::string& fit_path) {
    CsvWriter out(path, kPremiaHeader);
    for (const auto& [date, dp] : premia)
        for (size_t j = 0; j < dp.premia.size(); ++j)
            out.row({date, dp.factor_names[j], format_double(dp.premia[j])});
    CsvWriter fit(fit_path, kPremiaFitHeader);
    for (const auto& [date, dp] : premia) {
        std::string dropped;
        for (size_t i = 0; i < dp.dropped.size(); ++i)
            dropped += (i ? ";" : "") + dp.dropped[i];
        fit.row({date, format_double(dp.r_squared), std::to_string(dp.n_obs), dropped});
    }
}

inline std::map<std::string, DailyPremia> read_premia(const std::string& path) {
    std::map<std::string, DailyPremia> premia;
    CsvReader in(path, kPremiaHeader);
    std::vector<std::string> f;
    while (in.next(f)) {
        auto& dp = premia[f[0]];
        dp.date = f[0];
        dp.factor_names.push_back(f[1]);
        dp.premia.push_back(parse_double(f[2], "value", in.line()));
    }
    return premia;
}

} // namespace evq
