#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "evq/labeling.hpp"
#include "evq/marketdata.hpp"

// Long-short event-driven backtester. Signals carry a direction for their
// signal day t; trades enter at the next day's open, exit at the close
// H-1 trading days after entry (the last close within the H subsequent
// trading days after t), pay cost kappa per side on entry notional, and are
// capped so total open notional stays within k_max * NAV. The daily budget is
// allocated across event types by weight and split evenly within each type.
//
// Type weights are re-estimated on a cadence from historical records; a
// record becomes usable only once its own CAR window has completed, so day-t
// plans never depend on information realized after day t's close.
//
// The day loop is strictly sequential; metric computation over finished runs
// is pure.

namespace evq {

enum class SignalSide : int { go_long = 0, go_short = 1, hold = 2 };

inline const std::string& to_string(SignalSide s) {
    static const std::array<std::string, 3> names = {"long", "short", "hold"};
    return names[static_cast<int>(s)];
}

inline SignalSide parse_signal_side(std::string_view s) {
    if (s == "long") return SignalSide::go_long;
    if (s == "short") return SignalSide::go_short;
    if (s == "hold") return SignalSide::hold;
    fail("unknown signal direction '", std::string(s), "'");
}

struct Signal {
    std::string event_id;
    std::string ticker;
    Timestamp t0;
    int signal_day = -1; // filled from the calendar when < 0
    SignalSide side = SignalSide::hold;
    Strength strength = Strength::weak;
    EventType event_type = EventType::absent;
    std::optional<double> car_hat;
};

inline const std::vector<std::string> kSignalsHeader = {
    "event_id", "ticker", "timestamp", "direction", "strength", "event_type", "car_hat"};

inline std::vector<Signal> load_signals(const std::string& path, const TradingCalendar& cal) {
    std::vector<Signal> signals;
    CsvReader in(path, kSignalsHeader);
    std::vector<std::string> f;
    while (in.next(f)) {
        Signal sig;
        sig.event_id = f[0];
        sig.ticker = f[1];
        if (!try_parse_timestamp(f[2], sig.t0))
            fail(path, ": line ", in.line(), ": bad timestamp '", f[2], "'");
        try {
            sig.side = parse_signal_side(f[3]);
            sig.strength = parse_strength(f[4]);
            sig.event_type = parse_event_type_or_absent(f[5]);
            sig.signal_day = cal.assign_signal_day(sig.t0);
        } catch (const Error& e) {
            fail(path, ": line ", in.line(), ": ", e.what());
        }
        if (!f[6].empty()) sig.car_hat = parse_double(f[6], "car_hat", in.line());
        signals.push_back(std::move(sig));
    }
    return signals;
}

inline void write_signals(const std::vector<Signal>& signals, const std::string& path) {
    CsvWriter out(path, kSignalsHeader);
    for (const auto& s : signals)
        out.row({s.event_id, s.ticker, format_timestamp(s.t0), to_string(s.side),
                 to_string(s.strength), to_string(s.event_type),
                 s.car_hat ? format_double(*s.car_hat) : ""});
}

struct TypeWeights {
    std::array<double, kNumEventTypes> weights{};
    bool from_history = false; // false: uniform fallback, no usable records
    int as_of_day = -1;
};

// w_k proportional to mean |CAR| of type k over records whose signal day lies
// in (as_of - window, as_of] and whose CAR window has fully realized
// (signal day + car_window_end_offset <= as_of). With no usable history the
// weights fall back to uniform.
inline TypeWeights estimate_type_weights(const std::vector<LabeledEvent>& records, int as_of_day,
                                         int window_days, const TradingCalendar& cal,
                                         int car_window_end_offset) {
    require(window_days > 0, "estimate_type_weights: window must be > 0");
    TypeWeights tw;
    tw.as_of_day = as_of_day;
    std::array<double, kNumEventTypes> sum_abs{};
    std::array<int, kNumEventTypes> count{};
    for (const auto& rec : records) {
        int s;
        try {
            s = cal.assign_signal_day(rec.t0);
        } catch (const Error&) {
            continue; // outside the calendar, unusable
        }
        if (s + car_window_end_offset > as_of_day) continue; // window not realized yet
        if (s <= as_of_day - window_days) continue;
        int k = static_cast<int>(rec.event_type);
        sum_abs[k] += std::abs(rec.car);
        ++count[k];
    }
    double total = 0;
    std::array<double, kNumEventTypes> means{};
    for (int k = 0; k < kNumEventTypes; ++k) {
        if (count[k] > 0) means[k] = sum_abs[k] / count[k];
        total += means[k];
    }
    if (total <= 0) {
        tw.weights.fill(1.0 / kNumEventTypes);
        tw.from_history = false;
        return tw;
    }
    for (int k = 0; k < kNumEventTypes; ++k) tw.weights[k] = means[k] / total;
    tw.from_history = true;
    return tw;
}

enum class PositionSide : int { long_side = 0, short_side = 1 };

struct PlannedTrade {
    std::string event_id;
    std::string ticker;
    PositionSide side = PositionSide::long_side;
    double notional = 0.0;
    EventType event_type = EventType::absent;
    Timestamp t0;

    bool operator==(const PlannedTrade&) const = default;
};

struct Position {
    std::string event_id;
    std::string ticker;
    PositionSide side = PositionSide::long_side;
    double notional = 0.0; // entry notional, the exposure measure
    int entry_day = -1;
    double entry_price = 0.0;
    int exit_day = -1; // scheduled; pushed forward when the bar is missing
    EventType event_type = EventType::absent;
};

struct ClosedTrade {
    std::string event_id;
    std::string ticker;
    PositionSide side = PositionSide::long_side;
    double notional = 0.0;
    int entry_day = -1;
    double entry_price = 0.0;
    int exit_day = -1;
    double exit_price = 0.0;
    double pnl = 0.0;   // net of costs
    double costs = 0.0; // total fees paid
    EventType event_type = EventType::absent;
};

struct PortfolioState {
    double cash = 0.0;
    std::vector<Position> open_positions;
    std::vector<double> nav;
    std::vector<int> nav_days;
    std::vector<ClosedTrade> trades;
    std::map<int, std::vector<PlannedTrade>> plans; // by planning day
    std::vector<std::string> notes;

    double open_notional() const {
        double total = 0;
        for (const auto& p : open_positions) total += p.notional;
        return total;
    }

    double last_nav() const { return nav.empty() ? cash : nav.back(); }
};

enum class WeightMode { type_weighted, equal_weighted };

struct BacktestConfig {
    int holding_days = 2;                                            // H
    double max_position_ratio = std::numeric_limits<double>::infinity(); // k_max
    double cost = 0.003;                                             // kappa, per side
    double budget_fraction = 0.10;   // of current NAV per day
    std::optional<double> fixed_budget; // overrides the fraction when set
    WeightMode weight_mode = WeightMode::type_weighted;
    int weight_relearn_every = 20; // trading days
    int weight_window = 250;       // rolling window for weight estimation
    int car_window_end_offset = 2; // window end offset used for record eligibility
    double initial_capital = 1e6;
    bool no_leverage = false;
    int start_day = -1; // calendar index; -1 = first day
    int end_day = -1;   // calendar index; -1 = last day

    void validate() const {
        require(holding_days >= 1, "backtest config: holding period must be >= 1");
        require(max_position_ratio > 0, "backtest config: max position ratio must be > 0");
        require(cost >= 0, "backtest config: cost must be >= 0");
        require(fixed_budget ? *fixed_budget > 0 : budget_fraction > 0,
                "backtest config: budget must be > 0");
        require(weight_relearn_every >= 1, "backtest config: weight cadence must be >= 1");
        require(weight_window >= 1, "backtest config: weight window must be >= 1");
        require(initial_capital > 0, "backtest config: initial capital must be > 0");
    }
};

struct PlannedDay {
    std::vector<PlannedTrade> trades;
    int dropped_by_cap = 0;
};

// Budget per type = w_k * daily budget, split evenly across that day's
// actionable (long/short and strong) signals of the type. Hold, weak, and
// untyped signals get nothing. When the cap binds, whole trades are dropped
// lowest priority first (ascending type weight, then latest timestamp).
inline PlannedDay aggregate_daily_signals(const std::vector<Signal>& day_signals,
                                          const TypeWeights& weights, double budget,
                                          double open_notional, double nav, double k_max) {
    require(budget > 0, "aggregate_daily_signals: budget must be > 0");
    PlannedDay plan;
    std::array<int, kNumEventTypes> counts{};
    for (const auto& sig : day_signals)
        if (sig.side != SignalSide::hold && sig.strength == Strength::strong &&
            sig.event_type != EventType::absent)
            ++counts[static_cast<int>(sig.event_type)];
    for (const auto& sig : day_signals) {
        if (sig.side == SignalSide::hold || sig.strength != Strength::strong ||
            sig.event_type == EventType::absent)
            continue;
        int k = static_cast<int>(sig.event_type);
        double notional = weights.weights[k] * budget / counts[k];
        if (notional <= 0) continue;
        PlannedTrade trade;
        trade.event_id = sig.event_id;
        trade.ticker = sig.ticker;
        trade.side = sig.side == SignalSide::go_long ? PositionSide::long_side
                                                     : PositionSide::short_side;
        trade.notional = notional;
        trade.event_type = sig.event_type;
        trade.t0 = sig.t0;
        plan.trades.push_back(std::move(trade));
    }
    if (std::isfinite(k_max)) {
        std::stable_sort(plan.trades.begin(), plan.trades.end(),
                         [&](const PlannedTrade& a, const PlannedTrade& b) {
                             double wa = weights.weights[static_cast<int>(a.event_type)];
                             double wb = weights.weights[static_cast<int>(b.event_type)];
                             if (wa != wb) return wa > wb;
                             return a.t0 < b.t0;
                         });
        double capacity = k_max * nav - open_notional;
        std::vector<PlannedTrade> kept;
        double used = 0;
        for (auto& trade : plan.trades) {
            if (used + trade.notional <= capacity + 1e-12) {
                used += trade.notional;
                kept.push_back(std::move(trade));
            } else {
                ++plan.dropped_by_cap;
            }
        }
        plan.trades = std::move(kept);
    }
    return plan;
}

namespace detail {

inline double marked_value(const Position& p, double close) {
    if (p.side == PositionSide::long_side) return p.notional * close / p.entry_price;
    return p.notional * (p.entry_price - close) / p.entry_price;
}

} // namespace detail

// One trading day: execute planned entries at the open, close positions whose
// scheduled exit has arrived at the close (postponed while the ticker has no
// bar), then mark NAV = cash + marked positions at the close.
inline void step_day(PortfolioState& pf, int day, const PriceTable& prices,
                     const std::vector<PlannedTrade>& entries, const BacktestConfig& cfg) {
    const auto& cal = prices.calendar();
    for (const auto& trade : entries) {
        const auto& stock = prices.stock(trade.ticker);
        auto pos = stock.position_of_day(day);
        if (!pos) {
            pf.notes.push_back("skip entry " + trade.event_id + " on " + cal.date(day) + ": " +
                               trade.ticker + " has no bar");
            continue;
        }
        double price = stock.bars[*pos].open;
        double fee = cfg.cost * trade.notional;
        double cash_needed = fee + (trade.side == PositionSide::long_side ? trade.notional : 0.0);
        if (cfg.no_leverage && pf.cash < cash_needed) {
            pf.notes.push_back("skip entry " + trade.event_id + " on " + cal.date(day) +
                               ": insufficient cash");
            continue;
        }
        pf.cash -= cash_needed;
        Position p;
        p.event_id = trade.event_id;
        p.ticker = trade.ticker;
        p.side = trade.side;
        p.notional = trade.notional;
        p.entry_day = day;
        p.entry_price = price;
        p.exit_day = day + cfg.holding_days - 1;
        p.event_type = trade.event_type;
        pf.open_positions.push_back(std::move(p));
    }

    for (auto it = pf.open_positions.begin(); it != pf.open_positions.end();) {
        if (it->exit_day > day) {
            ++it;
            continue;
        }
        const auto& stock = prices.stock(it->ticker);
        auto pos = stock.position_of_day(day);
        if (!pos) {
            if (it->exit_day == day)
                pf.notes.push_back("postpone exit " + it->event_id + ": no bar on " +
                                   cal.date(day));
            ++it;
            continue;
        }
        double price = stock.bars[*pos].close;
        double fee = cfg.cost * it->notional;
        double proceeds = it->side == PositionSide::long_side
                              ? it->notional * price / it->entry_price
                              : it->notional * (it->entry_price - price) / it->entry_price;
        pf.cash += proceeds - fee;
        ClosedTrade done;
        done.event_id = it->event_id;
        done.ticker = it->ticker;
        done.side = it->side;
        done.notional = it->notional;
        done.entry_day = it->entry_day;
        done.entry_price = it->entry_price;
        done.exit_day = day;
        done.exit_price = price;
        done.costs = 2 * cfg.cost * it->notional;
        done.pnl = (it->side == PositionSide::long_side
                        ? it->notional * (price / it->entry_price - 1.0)
                        : it->notional * (it->entry_price - price) / it->entry_price) -
                   done.costs;
        pf.trades.push_back(std::move(done));
        it = pf.open_positions.erase(it);
    }

    double nav = pf.cash;
    for (const auto& p : pf.open_positions) {
        auto close = prices.stock(p.ticker).close_at_or_before(day);
        require(close.has_value(), "no close to mark ", p.ticker, " on ", cal.date(day));
        nav += detail::marked_value(p, *close);
    }
    pf.nav.push_back(nav);
    pf.nav_days.push_back(day);
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct PredTruthPair {
    std::optional<double> car_hat;
    Direction dir_hat = Direction::neutral;
    EventType type_hat = EventType::absent;
    double car = 0.0;
    Direction dir = Direction::neutral;
    EventType type = EventType::absent;
};

struct MetricsConfig {
    double annualization_days = 252.0;
};

// When the NAV return std is zero the Sharpe ratio is undefined: sr_defined
// is false and both sharpe fields are NaN (the JSON report writes null).
struct MetricsReport {
    double mae = std::nan("");
    double rmse = std::nan("");
    double da = std::nan("");
    double eta = std::nan("");
    double sharpe_daily = std::nan("");
    double sharpe_annualized = std::nan("");
    bool sr_defined = false;
    double mdd = 0.0;
    double total_return = 0.0;
    int n_pairs = 0;
    int n_car_pairs = 0;
};

inline double max_drawdown(const std::vector<double>& nav) {
    double peak = -std::numeric_limits<double>::infinity();
    double mdd = 0.0;
    for (double v : nav) {
        peak = std::max(peak, v);
        if (peak > 0) mdd = std::max(mdd, (peak - v) / peak);
    }
    return mdd;
}

inline MetricsReport compute_metrics(const std::vector<PredTruthPair>& pairs,
                                     const std::vector<double>& nav,
                                     const MetricsConfig& cfg = {}) {
    MetricsReport m;
    m.n_pairs = static_cast<int>(pairs.size());
    if (!pairs.empty()) {
        double abs_sum = 0, sq_sum = 0;
        int dir_hits = 0, type_hits = 0;
        for (const auto& p : pairs) {
            if (p.car_hat) {
                double err = *p.car_hat - p.car;
                abs_sum += std::abs(err);
                sq_sum += err * err;
                ++m.n_car_pairs;
            }
            if (p.dir_hat == p.dir) ++dir_hits;
            if (p.type_hat == p.type) ++type_hits;
        }
        if (m.n_car_pairs > 0) {
            m.mae = abs_sum / m.n_car_pairs;
            m.rmse = std::sqrt(sq_sum / m.n_car_pairs);
        }
        m.da = static_cast<double>(dir_hits) / pairs.size();
        m.eta = static_cast<double>(type_hits) / pairs.size();
    }
    if (nav.size() >= 2) {
        m.total_return = nav.back() / nav.front() - 1.0;
        m.mdd = max_drawdown(nav);
        std::vector<double> rets(nav.size() - 1);
        for (size_t i = 1; i < nav.size(); ++i) rets[i - 1] = nav[i] / nav[i - 1] - 1.0;
        double mean = 0;
        for (double r : rets) mean += r;
        mean /= rets.size();
        double var = 0;
        for (double r : rets) var += (r - mean) * (r - mean);
        double sd = rets.size() > 1 ? std::sqrt(var / (rets.size() - 1)) : 0.0;
        if (sd > 0) {
            m.sr_defined = true;
            m.sharpe_daily = mean / sd;
            m.sharpe_annualized = m.sharpe_daily * std::sqrt(cfg.annualization_days);
        }
    }
    return m;
}

// ---------------------------------------------------------------------------
// Full run
// ---------------------------------------------------------------------------

struct BacktestResult {
    PortfolioState portfolio;
    MetricsReport metrics;
    std::map<int, TypeWeights> weights_by_day; // at re-estimation points
};

// Joins signals to labeled records by (ticker, t0); duplicates pair up in
// input order. Signals with no matching record are left out of the decision
// metrics.
inline std::vector<PredTruthPair> join_signals_to_records(const std::vector<Signal>& signals,
                                                          const std::vector<LabeledEvent>& records) {
    std::map<std::pair<std::string, Timestamp>, std::vector<size_t>> by_key;
    for (size_t i = 0; i < records.size(); ++i)
        by_key[{records[i].ticker, records[i].t0}].push_back(i);
    std::map<std::pair<std::string, Timestamp>, size_t> consumed;
    std::vector<PredTruthPair> pairs;
    for (const auto& sig : signals) {
        auto key = std::make_pair(sig.ticker, sig.t0);
        auto it = by_key.find(key);
        if (it == by_key.end()) continue;
        size_t& used = consumed[key];
        if (used >= it->second.size()) continue;
        const auto& rec = records[it->second[used++]];
        PredTruthPair p;
        p.car_hat = sig.car_hat;
        p.dir_hat = sig.side == SignalSide::go_long    ? Direction::positive
                    : sig.side == SignalSide::go_short ? Direction::negative
                                                       : Direction::neutral;
        p.type_hat = sig.event_type;
        p.car = rec.car;
        p.dir = rec.direction;
        p.type = rec.event_type;
        pairs.push_back(p);
    }
    return pairs;
}

inline BacktestResult run_backtest(const std::vector<Signal>& signals, const PriceTable& prices,
                                   const std::vector<LabeledEvent>& records,
                                   const BacktestConfig& cfg) {
    cfg.validate();
    const auto& cal = prices.calendar();
    const int start = cfg.start_day < 0 ? 0 : cfg.start_day;
    const int end = cfg.end_day < 0 ? cal.size() - 1 : cfg.end_day;
    require(start <= end && end < cal.size(), "backtest day range out of bounds");

    std::map<int, std::vector<Signal>> by_day;
    for (const auto& sig : signals) {
        int day = sig.signal_day >= 0 ? sig.signal_day : cal.assign_signal_day(sig.t0);
        Signal s = sig;
        s.signal_day = day;
        by_day[day].push_back(std::move(s));
    }

    BacktestResult result;
    PortfolioState& pf = result.portfolio;
    pf.cash = cfg.initial_capital;
    TypeWeights current_weights;
    bool have_weights = false;

    static const std::vector<Signal> kNoSignals;
    static const std::vector<PlannedTrade> kNoTrades;
    for (int day = start; day <= end; ++day) {
        auto prev = pf.plans.find(day - 1);
        step_day(pf, day, prices, prev == pf.plans.end() ? kNoTrades : prev->second, cfg);

        if (cfg.weight_mode == WeightMode::type_weighted &&
            (!have_weights || (day - start) % cfg.weight_relearn_every == 0)) {
            current_weights = estimate_type_weights(records, day, cfg.weight_window, cal,
                                                    cfg.car_window_end_offset);
            result.weights_by_day.emplace(day, current_weights);
            have_weights = true;
        }

        auto sit = by_day.find(day);
        const auto& day_signals = sit == by_day.end() ? kNoSignals : sit->second;
        TypeWeights weights = current_weights;
        if (cfg.weight_mode == WeightMode::equal_weighted) {
            // Type-blind: every actionable signal gets budget / n_actionable.
            weights = TypeWeights{};
            weights.as_of_day = day;
            int total = 0;
            std::array<int, kNumEventTypes> counts{};
            for (const auto& sig : day_signals)
                if (sig.side != SignalSide::hold && sig.strength == Strength::strong &&
                    sig.event_type != EventType::absent) {
                    ++counts[static_cast<int>(sig.event_type)];
                    ++total;
                }
            if (total > 0)
                for (int k = 0; k < kNumEventTypes; ++k)
                    weights.weights[k] = static_cast<double>(counts[k]) / total;
        }

        if (!day_signals.empty()) {
            double nav = pf.last_nav();
            double budget = cfg.fixed_budget ? *cfg.fixed_budget : cfg.budget_fraction * nav;
            if (budget > 0) {
                PlannedDay plan = aggregate_daily_signals(day_signals, weights, budget,
                                                          pf.open_notional(), nav,
                                                          cfg.max_position_ratio);
                if (plan.dropped_by_cap > 0)
                    pf.notes.push_back("cap dropped " + std::to_string(plan.dropped_by_cap) +
                                       " trades on " + cal.date(day));
                pf.plans.emplace(day, std::move(plan.trades));
            }
        }
    }

    result.metrics = compute_metrics(join_signals_to_records(signals, records), pf.nav);
    return result;
}

// ---------------------------------------------------------------------------
// Output files
// ---------------------------------------------------------------------------

inline const std::vector<std::string> kNavHeader = {"date", "nav"};
inline const std::vector<std::string> kTradesHeader = {
    "event_id", "ticker",     "side",     "notional",   "entry_date", "entry_price",
    "exit_date", "exit_price", "pnl",      "costs",      "event_type"};
inline const std::vector<std::string> kWeightsHeader = {"date", "event_type", "weight"};

inline void write_nav(const PortfolioState& pf, const TradingCalendar& cal,
                      const std::string& path) {
    CsvWriter out(path, kNavHeader);
    for (size_t i = 0; i < pf.nav.size(); ++i)
        out.row({cal.date(pf.nav_days[i]), format_double(pf.nav[i])});
}

inline void write_trades(const PortfolioState& pf, const TradingCalendar& cal,
                         const std::string& path) {
    CsvWriter out(path, kTradesHeader);
    for (const auto& t : pf.trades)
        out.row({t.event_id, t.ticker, t.side == PositionSide::long_side ? "long" : "short",
                 format_double(t.notional), cal.date(t.entry_day), format_double(t.entry_price),
                 cal.date(t.exit_day), format_double(t.exit_price), format_double(t.pnl),
                 format_double(t.costs), to_string(t.event_type)});
}

inline void write_weights(const std::map<int, TypeWeights>& weights, const TradingCalendar& cal,
                          const std::string& path) {
    CsvWriter out(path, kWeightsHeader);
    for (const auto& [day, tw] : weights)
        for (int k = 0; k < kNumEventTypes; ++k)
            out.row({cal.date(day), to_string(static_cast<EventType>(k)),
                     format_double(tw.weights[k])});
}

} // namespace evq
