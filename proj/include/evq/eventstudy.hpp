#pragma once

#include <cmath>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "evq/marketdata.hpp"
#include "evq/riskfactors.hpp"

// Event-study engine: estimation/event window resolution, market-model OLS,
// market-adjusted abnormal returns, factor neutralization against daily
// cross-sectional premia, and the cumulative abnormal return.
//
// Window layout in trading days, anchored at the event's signal day s with
// offsets [start, end]: event days are s+start .. s+end; the estimation
// window of `estimation_days` days ends exactly `lag_days` trading days
// before the event window opens.
//
// Per-event computation is pure and safe to run concurrently over disjoint
// events against shared read-only data.

namespace evq {

struct WindowSpec {
    int estimation_days = 120;
    int lag_days = 5;
    int window_start = -1;
    int window_end = 2;
    int min_observations = 60;         // market-model fits below this are skipped
    double max_missing_fraction = 0.5; // skip the event above this share of missing window days

    int window_length() const { return window_end - window_start + 1; }

    void validate() const {
        require(estimation_days >= min_observations, "estimation window (", estimation_days,
                ") shorter than min observations (", min_observations, ")");
        require(lag_days >= 0, "lag must be >= 0");
        require(window_start <= window_end, "event window start must be <= end");
        require(min_observations >= 2, "min observations must be >= 2");
    }
};

struct EventWindows {
    std::vector<int> estimation_days; // calendar indices, ascending
    std::vector<int> event_days;      // calendar indices, ascending
};

// Index arithmetic on the trading calendar. Throws when the estimation window
// would underflow the available history (the first estimation day must still
// have a prior close for return computation) or the event window would run
// past the calendar end.
inline EventWindows resolve_event_windows_at(int signal_day, const TradingCalendar& cal,
                                             const WindowSpec& spec) {
    spec.validate();
    const int ev_start = signal_day + spec.window_start;
    const int ev_end = signal_day + spec.window_end;
    const int est_end = ev_start - spec.lag_days - 1;
    const int est_start = est_end - spec.estimation_days + 1;
    if (est_start < 1)
        fail("insufficient history: estimation window would start at day index ", est_start,
             " for signal day ", signal_day);
    if (ev_end >= cal.size())
        fail("event window extends past calendar end (day index ", ev_end, " of ", cal.size(), ")");
    EventWindows w;
    for (int d = est_start; d <= est_end; ++d) w.estimation_days.push_back(d);
    for (int d = ev_start; d <= ev_end; ++d) w.event_days.push_back(d);
    return w;
}

inline EventWindows resolve_event_windows(const RawEvent& event, const TradingCalendar& cal,
                                          const WindowSpec& spec) {
    return resolve_event_windows_at(cal.assign_signal_day(event.t0), cal, spec);
}

struct MarketModelFit {
    double alpha = 0.0;
    double beta = 0.0;
    double residual_std = 0.0;
    int n_obs = 0;
};

// Single-factor OLS of stock returns on benchmark returns.
inline MarketModelFit fit_market_model_ols(std::span<const double> stock_returns,
                                           std::span<const double> benchmark_returns,
                                           int min_observations = 2) {
    const int n = static_cast<int>(stock_returns.size());
    require(static_cast<int>(benchmark_returns.size()) == n,
            "market model: mismatched series lengths");
    require(n >= min_observations, "market model: ", n, " paired observations, need >= ",
            min_observations);
    double mx = 0, my = 0;
    for (int i = 0; i < n; ++i) {
        mx += benchmark_returns[i];
        my += stock_returns[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0;
    for (int i = 0; i < n; ++i) {
        sxx += (benchmark_returns[i] - mx) * (benchmark_returns[i] - mx);
        sxy += (benchmark_returns[i] - mx) * (stock_returns[i] - my);
    }
    // Scaled threshold: a genuinely constant series leaves only rounding dust
    // of order n * (eps * mean)^2.
    require(sxx > n * 1e-28, "market model: benchmark variance is zero");
    MarketModelFit fit;
    fit.beta = sxy / sxx;
    fit.alpha = my - fit.beta * mx;
    fit.n_obs = n;
    double ss = 0;
    for (int i = 0; i < n; ++i) {
        double resid = stock_returns[i] - fit.alpha - fit.beta * benchmark_returns[i];
        ss += resid * resid;
    }
    fit.residual_std = n > 2 ? std::sqrt(ss / (n - 2)) : 0.0;
    return fit;
}

// Collects the stock/benchmark return pairs available on `days`. A day is
// included only when both returns exist.
inline void collect_paired_returns(const StockSeries& stock, const BenchmarkSeries& bench,
                                   const std::vector<int>& days, std::vector<double>& stock_out,
                                   std::vector<double>& bench_out) {
    stock_out.clear();
    bench_out.clear();
    for (int d : days) {
        auto rs = stock.return_on_day(d);
        auto rb = bench.return_on(d);
        if (rs && rb) {
            stock_out.push_back(*rs);
            bench_out.push_back(*rb);
        }
    }
}

inline MarketModelFit fit_market_model(const PriceTable& prices, const std::string& ticker,
                                       const std::string& benchmark_id,
                                       const std::vector<int>& estimation_days,
                                       int min_observations) {
    std::vector<double> rs, rb;
    collect_paired_returns(prices.stock(ticker), prices.benchmark(benchmark_id), estimation_days,
                           rs, rb);
    return fit_market_model_ols(rs, rb, min_observations);
}

// AR^MR_t = r_t - (alpha + beta * r_m,t), elementwise over aligned series.
inline std::vector<double> market_abnormal_returns(const MarketModelFit& fit,
                                                   std::span<const double> stock_returns,
                                                   std::span<const double> benchmark_returns) {
    require(stock_returns.size() == benchmark_returns.size(),
            "abnormal returns: mismatched series lengths");
    require(!stock_returns.empty(), "abnormal returns: empty series");
    std::vector<double> ar(stock_returns.size());
    for (size_t i = 0; i < ar.size(); ++i)
        ar[i] = stock_returns[i] - (fit.alpha + fit.beta * benchmark_returns[i]);
    return ar;
}

// AR_t = AR^MR_t - x_t' lambda_t, one design row and premia fit per day.
inline std::vector<double>
neutralize_abnormal_returns(std::span<const double> ar_market,
                            const std::vector<std::vector<double>>& design_rows,
                            const std::vector<const DailyPremia*>& premia) {
    require(design_rows.size() == ar_market.size() && premia.size() == ar_market.size(),
            "neutralize: mismatched inputs");
    std::vector<double> ar(ar_market.size());
    for (size_t i = 0; i < ar.size(); ++i) {
        require(premia[i] != nullptr, "neutralize: missing premia for a window day");
        require(premia[i]->premia.size() == design_rows[i].size(),
                "neutralize: design/premia dimension mismatch on ", premia[i]->date);
        ar[i] = ar_market[i] - premia[i]->dot(design_rows[i]);
    }
    return ar;
}

inline double cumulative_abnormal_return(std::span<const double> abnormal_returns) {
    require(!abnormal_returns.empty(), "CAR of an empty series");
    double car = 0;
    for (double v : abnormal_returns) car += v;
    return car;
}

// Daily cross-sectional state needed to neutralize events: exposure panels
// and fitted premia keyed by calendar day index.
struct RiskData {
    std::map<int, ExposurePanel> panels;
    std::map<int, DailyPremia> premia;
};

// Builds the AR^MR panel for one day: every stock in the exposure panel with
// a valid rolling market-model fit and a return on `day` contributes one
// response. The estimation window is anchored at `day` with the same spec as
// event windows. Tickers in `exclude` (stocks inside their own event windows)
// are left out so the cross-section stays event-free.
inline void fit_premia_for_day(RiskData& risk, const PriceTable& prices, const MetadataTable& meta,
                               int day, const WindowSpec& spec, const ExposurePanel& exposures,
                               const std::set<std::string>& exclude) {
    const int est_end = day - spec.lag_days - 1;
    const int est_start = est_end - spec.estimation_days + 1;
    require(est_start >= 1, "premia fit on day index ", day, ": insufficient history");
    std::vector<int> est_days;
    for (int d = est_start; d <= est_end; ++d) est_days.push_back(d);

    ExposurePanel used;
    used.date = exposures.date;
    used.industries = exposures.industries;
    std::vector<double> responses;
    std::vector<double> rs, rb;
    for (const auto& row : exposures.rows) {
        if (exclude.count(row.ticker)) continue;
        auto mit = meta.find(row.ticker);
        if (mit == meta.end() || !prices.has_ticker(row.ticker)) continue;
        if (!prices.has_benchmark(mit->second.cap_segment)) continue;
        const auto& stock = prices.stock(row.ticker);
        const auto& bench = prices.benchmark(mit->second.cap_segment);
        auto ret = stock.return_on_day(day);
        auto bret = bench.return_on(day);
        if (!ret || !bret) continue;
        collect_paired_returns(stock, bench, est_days, rs, rb);
        if (static_cast<int>(rs.size()) < spec.min_observations) continue;
        MarketModelFit fit = fit_market_model_ols(rs, rb, spec.min_observations);
        used.rows.push_back(row);
        responses.push_back(*ret - (fit.alpha + fit.beta * *bret));
    }
    DailyPremia dp = fit_daily_premia(used, responses);
    risk.panels.emplace(day, exposures);
    risk.premia.emplace(day, std::move(dp));
}

// Fits premia for every requested day. `exposures_by_day` must cover all of
// them; `exclude_by_day` lists tickers to keep out of each day's fit.
inline RiskData build_risk_data(const PriceTable& prices, const MetadataTable& meta,
                                const std::set<int>& days, const WindowSpec& spec,
                                const std::map<int, ExposurePanel>& exposures_by_day,
                                const std::map<int, std::set<std::string>>& exclude_by_day = {}) {
    RiskData risk;
    static const std::set<std::string> kNone;
    for (int day : days) {
        auto eit = exposures_by_day.find(day);
        require(eit != exposures_by_day.end(), "no exposure panel for day ",
                prices.calendar().date(day));
        auto xit = exclude_by_day.find(day);
        fit_premia_for_day(risk, prices, meta, day, spec, eit->second,
                           xit == exclude_by_day.end() ? kNone : xit->second);
    }
    return risk;
}

struct EventCarResult {
    std::string event_id;
    std::string ticker;
    Timestamp t0;
    bool skipped = false;
    std::string skip_reason;
    double car = 0.0;        // factor-neutral CAR (Sum of AR over the window)
    double car_market = 0.0; // market-adjusted-only CAR, for diagnostics
    int signal_day = -1;
    int window_start_day = -1;
    int window_end_day = -1;
    int missing_days = 0;
    MarketModelFit fit;
    std::vector<int> days;              // window days actually used
    std::vector<double> ar_market;      // AR^MR per used day
    std::vector<double> ar_neutral;     // AR per used day
};

// Full chain for one event: resolve windows, fit the market model, compute
// AR^MR over the window, neutralize with the daily premia, and sum into CAR.
// Policy outcomes (too little history, too few observations, too many missing
// window days) come back as skipped results with a reason; structural
// problems (unknown ticker/benchmark, missing premia) throw with the event id.
inline EventCarResult compute_event_car(const RawEvent& event, const PriceTable& prices,
                                        const MetadataTable& meta, const RiskData& risk,
                                        const WindowSpec& spec) {
    EventCarResult res;
    res.event_id = event.event_id;
    res.ticker = event.ticker;
    res.t0 = event.t0;

    auto mit = meta.find(event.ticker);
    if (mit == meta.end()) fail("event ", event.event_id, ": no metadata for ticker ", event.ticker);
    const std::string& bench_id = mit->second.cap_segment;
    if (!prices.has_benchmark(bench_id))
        fail("event ", event.event_id, ": unknown benchmark '", bench_id, "' for ticker ",
             event.ticker);

    const auto& cal = prices.calendar();
    res.signal_day = cal.assign_signal_day(event.t0);

    EventWindows windows;
    try {
        windows = resolve_event_windows_at(res.signal_day, cal, spec);
    } catch (const Error& e) {
        res.skipped = true;
        res.skip_reason = e.what();
        return res;
    }
    res.window_start_day = windows.event_days.front();
    res.window_end_day = windows.event_days.back();

    const auto& stock = prices.stock(event.ticker);
    const auto& bench = prices.benchmark(bench_id);

    std::vector<double> rs, rb;
    collect_paired_returns(stock, bench, windows.estimation_days, rs, rb);
    if (static_cast<int>(rs.size()) < spec.min_observations) {
        res.skipped = true;
        res.skip_reason = "too few estimation observations (" + std::to_string(rs.size()) + ")";
        return res;
    }
    try {
        res.fit = fit_market_model_ols(rs, rb, spec.min_observations);
    } catch (const Error& e) {
        fail("event ", event.event_id, ": ", e.what());
    }

    std::vector<double> win_rs, win_rb;
    for (int d : windows.event_days) {
        auto r = stock.return_on_day(d);
        auto b = bench.return_on(d);
        if (r && b) {
            res.days.push_back(d);
            win_rs.push_back(*r);
            win_rb.push_back(*b);
        } else {
            ++res.missing_days;
        }
    }
    const int wlen = spec.window_length();
    if (res.missing_days > spec.max_missing_fraction * wlen) {
        res.skipped = true;
        res.skip_reason = "missing " + std::to_string(res.missing_days) + " of " +
                          std::to_string(wlen) + " window days";
        return res;
    }

    res.ar_market = market_abnormal_returns(res.fit, win_rs, win_rb);

    std::vector<std::vector<double>> design_rows;
    std::vector<const DailyPremia*> premia;
    for (int d : res.days) {
        auto pit = risk.premia.find(d);
        auto xit = risk.panels.find(d);
        if (pit == risk.premia.end() || xit == risk.panels.end())
            fail("event ", event.event_id, ": missing premia for window day ", cal.date(d));
        const ExposureRow* row = xit->second.find(event.ticker);
        if (!row)
            fail("event ", event.event_id, ": no exposures for ", event.ticker, " on ",
                 cal.date(d));
        design_rows.push_back(xit->second.design_row(*row));
        premia.push_back(&pit->second);
    }
    res.ar_neutral = neutralize_abnormal_returns(res.ar_market, design_rows, premia);
    res.car = cumulative_abnormal_return(res.ar_neutral);
    res.car_market = cumulative_abnormal_return(res.ar_market);
    return res;
}

inline const std::vector<std::string> kCarResultsHeader = {
    "event_id", "ticker",     "t0",           "car",   "window_start",
    "window_end", "missing_days", "alpha", "beta"};

inline void write_car_results(const std::vector<EventCarResult>& results,
                              const TradingCalendar& cal, const std::string& path) {
    CsvWriter out(path, kCarResultsHeader);
    for (const auto& r : results) {
        if (r.skipped) continue;
        out.row({r.event_id, r.ticker, format_timestamp(r.t0), format_double(r.car),
                 cal.date(r.window_start_day), cal.date(r.window_end_day),
                 std::to_string(r.missing_days), format_double(r.fit.alpha),
                 format_double(r.fit.beta)});
    }
}

} // namespace evq
