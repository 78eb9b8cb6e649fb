#pragma once

#include <array>
#include <cstdio>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "evq/eventstudy.hpp"
#include "evq/labeling.hpp"
#include "evq/marketdata.hpp"
#include "evq/riskfactors.hpp"

// Synthetic universe with planted ground truth, the oracle for everything
// downstream. Daily stock returns are built as
//
//   r[i,t] = alpha[i] + beta[i] * r_m[t] + x[i]' lambda[t] + effect[i,t] + eps
//
// with every planted quantity (per-stock alpha/beta, exposures, the premia
// schedule, per-event effects and their per-day split) recorded in the ledger.
// Prices are gapless: open[t] = close[t-1], so entry-at-open arithmetic on the
// planted effects is exact. Identical seeds give identical output.

namespace evq {

struct SynthEventSpec {
    EventType type = EventType::risk_warning;
    double magnitude = 0.03; // signed total CAR effect
    int count = 0;
    bool alternate_sign = false; // flip the sign on every other instance
};

struct SynthSpec {
    int n_stocks = 100;
    int n_days = 320;
    uint64_t seed = 42;

    double noise_scale = 0.0;    // idiosyncratic daily return std
    double benchmark_vol = 0.01; // benchmark daily return std
    double benchmark_drift = 0.0;

    double alpha_base = 0.0;
    double alpha_jitter = 0.0; // per-stock alpha = base + jitter * N(0,1)
    double beta_base = 1.0;
    double beta_jitter = 0.0;

    int n_industries = 5;
    double premia_scale = 0.0; // per-day per-factor premia std

    std::vector<SynthEventSpec> events;
    // Fraction of each event's effect landing on each window day; must align
    // with the window offsets and sum to 1.
    std::vector<double> window_profile = {0.2, 0.2, 0.3, 0.3};
    WindowSpec window;
    int trailing_margin = 12; // trading days kept free after the last event window

    std::string start_date = "2022-01-03";
    std::string benchmark_id = "BENCH";
    double base_price = 20.0;

    void validate() const {
        require(n_stocks > 0 && n_days > 0, "synth spec: counts must be positive");
        require(noise_scale >= 0, "synth spec: noise scale must be >= 0");
        require(benchmark_vol >= 0, "synth spec: benchmark vol must be >= 0");
        require(n_industries > 0, "synth spec: need at least one industry");
        require(premia_scale >= 0, "synth spec: premia scale must be >= 0");
        window.validate();
        require(static_cast<int>(window_profile.size()) == window.window_length(),
                "synth spec: window profile length ", window_profile.size(),
                " does not match event window length ", window.window_length());
        double sum = 0;
        for (double p : window_profile) sum += p;
        require(std::abs(sum - 1.0) < 1e-12, "synth spec: window profile must sum to 1");
        int total = 0;
        for (const auto& ev : events) {
            require(ev.count >= 0, "synth spec: event count must be >= 0");
            total += ev.count;
        }
        require(total <= n_stocks, "synth spec: ", total, " events for ", n_stocks,
                " stocks (one event per stock)");
    }
};

struct SynthLedgerEvent {
    std::string event_id;
    std::string ticker;
    int stock_index = 0;
    Timestamp t0;
    int signal_day = 0;
    EventType type = EventType::risk_warning;
    double effect = 0.0;               // planted total CAR
    std::map<int, double> day_effects; // calendar day -> planted abnormal return
};

struct SynthLedger {
    std::vector<std::string> tickers;
    std::vector<double> alphas;
    std::vector<double> betas;
    std::vector<std::array<double, kNumStyles>> styles; // standardized, constant over time
    std::vector<int> industry;
    std::vector<std::string> industries;
    std::map<int, std::vector<double>> premia; // day -> lambda (styles then industries)
    std::vector<SynthLedgerEvent> events;

    ExposurePanel exposure_panel(int day, const TradingCalendar& cal) const {
        ExposurePanel panel;
        panel.date = cal.date(day);
        panel.industries = industries;
        panel.rows.reserve(tickers.size());
        for (size_t i = 0; i < tickers.size(); ++i) {
            ExposureRow row;
            row.ticker = tickers[i];
            row.styles = styles[i];
            row.industry = industry[i];
            panel.rows.push_back(std::move(row));
        }
        return panel;
    }

    std::map<int, ExposurePanel> exposure_panels(const std::set<int>& days,
                                                 const TradingCalendar& cal) const {
        std::map<int, ExposurePanel> out;
        for (int d : days) out.emplace(d, exposure_panel(d, cal));
        return out;
    }

    // Tickers inside their own event window per day, for event-free premia fits.
    std::map<int, std::set<std::string>> event_window_exclusions(const WindowSpec& spec) const {
        std::map<int, std::set<std::string>> out;
        for (const auto& ev : events)
            for (int off = spec.window_start; off <= spec.window_end; ++off)
                out[ev.signal_day + off].insert(ev.ticker);
        return out;
    }
};

struct SynthResult {
    PriceTable prices;
    MetadataTable metadata;
    std::vector<RawEvent> events;
    SynthLedger ledger;
};

namespace detail {

inline std::string zero_padded(const char* prefix, int value, int width) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%0*d", prefix, width, value);
    return buf;
}

} // namespace detail

inline SynthResult synth_universe(const SynthSpec& spec) {
    spec.validate();
    const int n = spec.n_stocks;
    const int days = spec.n_days;

    // Calendar: consecutive weekdays from the start date.
    std::vector<int> serials;
    serials.reserve(days);
    int serial = parse_date(spec.start_date);
    while (static_cast<int>(serials.size()) < days) {
        if (!is_weekend(serial)) serials.push_back(serial);
        ++serial;
    }
    TradingCalendar cal = TradingCalendar::from_serials(std::move(serials));

    // Independent deterministic streams drawn in a fixed order.
    std::mt19937_64 master(spec.seed);
    std::mt19937_64 rng_bench(master()), rng_params(master()), rng_styles(master()),
        rng_premia(master()), rng_volume(master()), rng_noise(master());
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    std::vector<double> bench_ret(days, 0.0); // bench_ret[0] unused
    for (int t = 1; t < days; ++t)
        bench_ret[t] = spec.benchmark_drift + spec.benchmark_vol * gauss(rng_bench);

    SynthLedger ledger;
    ledger.tickers.reserve(n);
    for (int i = 0; i < n; ++i) ledger.tickers.push_back(detail::zero_padded("S", i, 4));
    for (int k = 0; k < spec.n_industries; ++k)
        ledger.industries.push_back(detail::zero_padded("IND", k, 2));
    ledger.alphas.resize(n);
    ledger.betas.resize(n);
    ledger.industry.resize(n);
    for (int i = 0; i < n; ++i) {
        ledger.alphas[i] = spec.alpha_base + spec.alpha_jitter * gauss(rng_params);
        ledger.betas[i] = spec.beta_base + spec.beta_jitter * gauss(rng_params);
        ledger.industry[i] = i % spec.n_industries;
    }

    // Styles: N(0,1) draws standardized cross-sectionally to exact mean 0 / std 1.
    ledger.styles.assign(n, {});
    for (int j = 0; j < kNumStyles; ++j) {
        std::vector<double> col(n);
        for (int i = 0; i < n; ++i) col[i] = gauss(rng_styles);
        detail::winsorize_zscore(col, 1e12); // no clipping, pure standardization
        for (int i = 0; i < n; ++i) ledger.styles[i][j] = col[i];
    }

    const int n_factors = kNumStyles + spec.n_industries;
    for (int t = 1; t < days; ++t) {
        std::vector<double> lambda(n_factors, 0.0);
        if (spec.premia_scale > 0)
            for (int f = 0; f < n_factors; ++f) lambda[f] = spec.premia_scale * gauss(rng_premia);
        ledger.premia.emplace(t, std::move(lambda));
    }

    // Event placement: waves of one instance per spec entry, evenly spaced
    // over the feasible signal-day range, one event per stock.
    int max_count = 0, total_events = 0;
    for (const auto& ev : spec.events) {
        max_count = std::max(max_count, ev.count);
        total_events += ev.count;
    }
    std::map<int, std::map<int, double>> planted; // stock -> day -> effect
    if (total_events > 0) {
        const int s_min = 1 + spec.window.estimation_days + spec.window.lag_days -
                          spec.window.window_start;
        const int s_max = days - 1 - spec.window.window_end - spec.trailing_margin;
        require(s_max >= s_min, "synth spec: day count ", days,
                " too small for the event window layout (need signal days ", s_min, "..", s_max,
                ")");
        const int stride = max_count > 1 ? std::max(1, (s_max - s_min) / (max_count - 1)) : 1;
        int event_seq = 0;
        for (int wave = 0; wave < max_count; ++wave) {
            const int s = std::min(s_min + wave * stride, s_max);
            for (const auto& evspec : spec.events) {
                if (wave >= evspec.count) continue;
                SynthLedgerEvent ev;
                ev.stock_index = event_seq;
                ev.event_id = detail::zero_padded("EV", event_seq, 4);
                ev.ticker = ledger.tickers[ev.stock_index];
                ev.signal_day = s;
                ev.t0 = Timestamp{cal.serial(s), 10 * 3600};
                ev.type = evspec.type;
                ev.effect = evspec.magnitude * ((evspec.alternate_sign && wave % 2 == 1) ? -1 : 1);
                for (int k = 0; k < spec.window.window_length(); ++k) {
                    int d = s + spec.window.window_start + k;
                    double portion = ev.effect * spec.window_profile[k];
                    ev.day_effects[d] = portion;
                    planted[ev.stock_index][d] += portion;
                }
                ledger.events.push_back(std::move(ev));
                ++event_seq;
            }
        }
    }

    // Price paths.
    std::map<std::string, BenchmarkSeries> benchmarks;
    {
        BenchmarkSeries bench;
        bench.index_id = spec.benchmark_id;
        double close = 100.0;
        for (int t = 0; t < days; ++t) {
            if (t > 0) close *= 1.0 + bench_ret[t];
            bench.days.push_back(t);
            bench.closes.push_back(close);
        }
        bench.finalize();
        benchmarks.emplace(spec.benchmark_id, std::move(bench));
    }

    std::map<std::string, StockSeries> stocks;
    MetadataTable metadata;
    for (int i = 0; i < n; ++i) {
        StockSeries s;
        s.ticker = ledger.tickers[i];
        s.bars.reserve(days);
        const auto pit = planted.find(i);
        double close = spec.base_price * (1.0 + 0.01 * (i % 37));
        for (int t = 0; t < days; ++t) {
            double prev_close = close;
            if (t > 0) {
                double r = ledger.alphas[i] + ledger.betas[i] * bench_ret[t];
                const auto& lambda = ledger.premia.at(t);
                for (int j = 0; j < kNumStyles; ++j) r += ledger.styles[i][j] * lambda[j];
                r += lambda[kNumStyles + ledger.industry[i]];
                if (pit != planted.end()) {
                    auto eit = pit->second.find(t);
                    if (eit != pit->second.end()) r += eit->second;
                }
                if (spec.noise_scale > 0) r += spec.noise_scale * gauss(rng_noise);
                close = prev_close * (1.0 + r);
            }
            PriceBar bar;
            bar.day = t;
            bar.open = t > 0 ? prev_close : close;
            bar.close = close;
            bar.volume = 1e6 * (1.0 + 0.5 * unif(rng_volume));
            bar.shares_outstanding = 1e8;
            s.bars.push_back(bar);
        }
        s.finalize();
        stocks.emplace(s.ticker, std::move(s));
        metadata.emplace(ledger.tickers[i],
                         StockMeta{ledger.industries[ledger.industry[i]], spec.benchmark_id});
    }

    SynthResult result{PriceTable(cal, std::move(stocks), std::move(benchmarks)),
                       std::move(metadata),
                       {},
                       std::move(ledger)};
    result.events.reserve(result.ledger.events.size());
    for (const auto& ev : result.ledger.events) {
        RawEvent raw;
        raw.event_id = ev.event_id;
        raw.ticker = ev.ticker;
        raw.t0 = ev.t0;
        raw.event_type = to_string(ev.type);
        raw.text_ref = ev.event_id;
        result.events.push_back(std::move(raw));
    }
    return result;
}

// ---------------------------------------------------------------------------
// Ledger files
// ---------------------------------------------------------------------------

inline const std::vector<std::string> kLedgerStocksHeader = {"ticker", "alpha", "beta"};
inline const std::vector<std::string> kLedgerEventsHeader = {
    "event_id", "ticker", "t0", "event_type", "effect", "signal_day"};

inline void write_ledger(const SynthLedger& ledger, const TradingCalendar& cal,
                         const std::string& stocks_path, const std::string& events_path,
                         const std::string& premia_path) {
    {
        CsvWriter out(stocks_path, kLedgerStocksHeader);
        for (size_t i = 0; i < ledger.tickers.size(); ++i)
            out.row({ledger.tickers[i], format_double(ledger.alphas[i]),
                     format_double(ledger.betas[i])});
    }
    {
        CsvWriter out(events_path, kLedgerEventsHeader);
        for (const auto& ev : ledger.events)
            out.row({ev.event_id, ev.ticker, format_timestamp(ev.t0), to_string(ev.type),
                     format_double(ev.effect), cal.date(ev.signal_day)});
    }
    {
        CsvWriter out(premia_path, kPremiaHeader);
        std::vector<std::string> names(kStyleNames.begin(), kStyleNames.end());
        for (const auto& ind : ledger.industries) names.push_back("industry:" + ind);
        for (const auto& [day, lambda] : ledger.premia)
            for (size_t j = 0; j < lambda.size(); ++j)
                out.row({cal.date(day), names[j], format_double(lambda[j])});
    }
}

} // namespace evq
