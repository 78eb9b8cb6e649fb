#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "evq/backtest.hpp"
#include "evq/eventstudy.hpp"
#include "evq/hgrm.hpp"
#include "evq/labeling.hpp"
#include "evq/marketdata.hpp"
#include "evq/policylab.hpp"
#include "evq/riskfactors.hpp"
#include "evq/synth.hpp"

// Pipeline orchestration behind the CLI subcommands: exposure acquisition,
// the per-event CAR run, labeled-dataset assembly, the sensitivity sweep, and
// the structured report files. Nothing here writes timestamps, so identical
// configs produce byte-identical output directories.

namespace evq {

// Loads stock bars only; the calendar is the union of stock dates. Used when
// no benchmark file is needed (backtesting).
inline PriceTable load_prices_only(const std::string& prices_path) {
    std::set<int> serials;
    {
        CsvReader in(prices_path, kPricesHeader);
        std::vector<std::string> f;
        while (in.next(f)) {
            int serial;
            if (!try_parse_date(f[1], serial))
                fail(prices_path, ": line ", in.line(), ": bad date '", f[1], "'");
            serials.insert(serial);
        }
    }
    require(!serials.empty(), prices_path, ": no rows");
    TradingCalendar cal =
        TradingCalendar::from_serials(std::vector<int>(serials.begin(), serials.end()));

    std::map<std::string, StockSeries> stocks;
    CsvReader in(prices_path, kPricesHeader);
    std::vector<std::string> f;
    std::set<std::pair<std::string, int>> seen;
    while (in.next(f)) {
        PriceBar bar;
        bar.day = *cal.index_of_date(f[1]);
        bar.open = parse_double(f[2], "open", in.line());
        bar.close = parse_double(f[3], "close", in.line());
        bar.volume = parse_double(f[4], "volume", in.line());
        if (!f[5].empty()) bar.shares_outstanding = parse_double(f[5], "shares_outstanding", in.line());
        require(bar.open > 0 && bar.close > 0, prices_path, ": line ", in.line(),
                ": prices must be > 0");
        if (!seen.insert({f[0], bar.day}).second)
            fail(prices_path, ": line ", in.line(), ": duplicate (ticker,date)");
        auto& s = stocks[f[0]];
        s.ticker = f[0];
        s.bars.push_back(bar);
    }
    for (auto& [t, s] : stocks) s.finalize();
    return PriceTable(std::move(cal), std::move(stocks), {});
}

struct CarPipelineConfig {
    WindowSpec window;
    StyleConfig styles;
    bool exclude_event_stocks = true; // keep event stocks out of their own premia fits
};

struct CarPipelineResult {
    std::vector<EventCarResult> results;
    RiskData risk;
    int skipped = 0;
};

// Exposure panels for the given days computed from price history.
inline std::map<int, ExposurePanel> compute_exposures_for_days(const PriceTable& prices,
                                                               const MetadataTable& meta,
                                                               const std::set<int>& days,
                                                               const StyleConfig& cfg) {
    std::map<int, ExposurePanel> panels;
    for (int day : days) panels.emplace(day, compute_style_exposures(prices, meta, day, cfg));
    return panels;
}

// Resolves every event's windows, fits premia for the union of window days
// (event stocks excluded from their own windows' fits), then chains the CAR
// computation per event. Per-event failures become skipped results.
inline CarPipelineResult run_car_pipeline(const PriceTable& prices, const MetadataTable& meta,
                                          const std::vector<RawEvent>& events,
                                          const std::map<int, ExposurePanel>* exposures,
                                          const CarPipelineConfig& cfg) {
    cfg.window.validate();
    const auto& cal = prices.calendar();

    std::set<int> needed_days;
    std::map<int, std::set<std::string>> exclusions;
    for (const auto& ev : events) {
        int s;
        try {
            s = cal.assign_signal_day(ev.t0);
            resolve_event_windows_at(s, cal, cfg.window);
        } catch (const Error&) {
            continue; // recorded as skipped below
        }
        for (int off = cfg.window.window_start; off <= cfg.window.window_end; ++off) {
            needed_days.insert(s + off);
            if (cfg.exclude_event_stocks) exclusions[s + off].insert(ev.ticker);
        }
    }

    std::map<int, ExposurePanel> computed;
    if (!exposures) {
        computed = compute_exposures_for_days(prices, meta, needed_days, cfg.styles);
        exposures = &computed;
    }
    CarPipelineResult out;
    out.risk = build_risk_data(prices, meta, needed_days, cfg.window, *exposures,
                               cfg.exclude_event_stocks ? exclusions
                                                        : std::map<int, std::set<std::string>>{});
    out.results.reserve(events.size());
    for (const auto& ev : events) {
        EventCarResult res;
        try {
            res = compute_event_car(ev, prices, meta, out.risk, cfg.window);
        } catch (const Error& e) {
            res.event_id = ev.event_id;
            res.ticker = ev.ticker;
            res.t0 = ev.t0;
            res.skipped = true;
            res.skip_reason = e.what();
        }
        if (res.skipped) ++out.skipped;
        out.results.push_back(std::move(res));
    }
    return out;
}

// Joins raw events to their CAR results and derives the dataset records.
inline std::vector<LabeledEvent> build_dataset(const std::vector<RawEvent>& events,
                                               const std::vector<EventCarResult>& results,
                                               const LabelConfig& cfg) {
    std::map<std::string, const EventCarResult*> by_id;
    for (const auto& r : results) by_id[r.event_id] = &r;
    std::vector<LabeledEvent> records;
    for (const auto& ev : events) {
        auto it = by_id.find(ev.event_id);
        if (it == by_id.end() || it->second->skipped) continue;
        records.push_back(build_labeled_record(ev, *it->second, cfg));
    }
    return records;
}

// Oracle signal feed straight from the synth ledger: direction from the sign
// of the planted effect, strength by threshold, car_hat equal to the effect.
inline std::vector<Signal> foresight_signals(const SynthLedger& ledger, double tau) {
    std::vector<Signal> signals;
    signals.reserve(ledger.events.size());
    for (const auto& ev : ledger.events) {
        Signal sig;
        sig.event_id = ev.event_id;
        sig.ticker = ev.ticker;
        sig.t0 = ev.t0;
        sig.signal_day = ev.signal_day;
        sig.side = ev.effect > 0   ? SignalSide::go_long
                   : ev.effect < 0 ? SignalSide::go_short
                                   : SignalSide::hold;
        sig.strength = std::abs(ev.effect) > tau ? Strength::strong : Strength::weak;
        sig.event_type = ev.type;
        sig.car_hat = ev.effect;
        signals.push_back(std::move(sig));
    }
    return signals;
}

// Ledger-derived dataset records (planted effect as the CAR label), for runs
// that skip the estimation pipeline.
inline std::vector<LabeledEvent> ledger_dataset(const SynthLedger& ledger, const LabelConfig& cfg) {
    std::vector<LabeledEvent> records;
    records.reserve(ledger.events.size());
    for (const auto& ev : ledger.events) {
        LabeledEvent rec;
        rec.news_ref = ev.event_id;
        rec.t0 = ev.t0;
        rec.ticker = ev.ticker;
        rec.event_type = ev.type;
        rec.car = ev.effect;
        Label label = derive_label(ev.effect, cfg.tau, cfg.neutral_band);
        rec.direction = label.direction;
        rec.strength = label.strength;
        records.push_back(std::move(rec));
    }
    return records;
}

inline void write_metrics_json(const MetricsReport& m, const std::string& path) {
    auto maybe = [](double v) {
        return std::isnan(v) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(v);
    };
    nlohmann::ordered_json j;
    j["mae"] = maybe(m.mae);
    j["rmse"] = maybe(m.rmse);
    j["da"] = maybe(m.da);
    j["eta"] = maybe(m.eta);
    j["sharpe_daily"] = maybe(m.sharpe_daily);
    j["sharpe_annualized"] = maybe(m.sharpe_annualized);
    j["sr_defined"] = m.sr_defined;
    j["mdd"] = m.mdd;
    j["total_return"] = m.total_return;
    j["n_pairs"] = m.n_pairs;
    j["n_car_pairs"] = m.n_car_pairs;
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("cannot write file: ", path);
    out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Sensitivity sweeps
// ---------------------------------------------------------------------------

struct SweepRow {
    std::string parameter;
    std::string value;
    double total_return = 0.0;
    double sharpe = 0.0; // annualized; NaN when undefined
    double mdd = 0.0;
};

inline const std::vector<std::string> kSweepHeader = {"parameter", "value", "total_return",
                                                      "sharpe", "mdd"};

inline std::vector<SweepRow> run_sensitivity(const std::vector<Signal>& signals,
                                             const PriceTable& prices,
                                             const std::vector<LabeledEvent>& records,
                                             const BacktestConfig& base,
                                             const std::string& parameter,
                                             const std::vector<std::string>& values) {
    std::vector<SweepRow> rows;
    for (const auto& value : values) {
        BacktestConfig cfg = base;
        if (parameter == "holding") {
            cfg.holding_days = static_cast<int>(parse_long(value, "holding"));
        } else if (parameter == "max-position-ratio") {
            cfg.max_position_ratio = value == "inf" ? std::numeric_limits<double>::infinity()
                                                    : parse_double(value, "max-position-ratio");
        } else if (parameter == "cost") {
            cfg.cost = parse_double(value, "cost");
        } else {
            fail("unknown sweep parameter '", parameter,
                 "' (expected holding, max-position-ratio, or cost)");
        }
        BacktestResult res = run_backtest(signals, prices, records, cfg);
        rows.push_back({parameter, value, res.metrics.total_return, res.metrics.sharpe_annualized,
                        res.metrics.mdd});
    }
    return rows;
}

inline void write_sweep(const std::vector<SweepRow>& rows, const std::string& path) {
    CsvWriter out(path, kSweepHeader);
    for (const auto& r : rows)
        out.row({r.parameter, r.value, format_double(r.total_return), format_double(r.sharpe),
                 format_double(r.mdd)});
}

inline void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) fail("cannot create directory ", dir, ": ", ec.message());
}

inline std::string path_join(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

} // namespace evq
