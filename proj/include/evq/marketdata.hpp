#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "evq/csv.hpp"
#include "evq/dates.hpp"
#include "evq/error.hpp"

// Market-data substrate: daily bars per stock, benchmark index series, the
// trading calendar derived from them, and the raw news-event records.
//
// File formats (ISO dates, comma-delimited, fixed headers):
//   prices:   ticker,date,open,close,volume,shares_outstanding
//   indices:  index_id,date,close
//   events:   event_id,ticker,timestamp,event_type,text_ref
//   metadata: ticker,industry,cap_segment
// The cap_segment value names the benchmark index series the stock is
// regressed against (it must match an index_id in the indices file).
//
// All tables are immutable after construction and safe for concurrent reads.

namespace evq {

struct PriceBar {
    int day = 0; // calendar index
    double open = 0.0;
    double close = 0.0;
    double volume = 0.0;
    std::optional<double> shares_outstanding;
};

class TradingCalendar {
public:
    static TradingCalendar from_serials(std::vector<int> serials) {
        TradingCalendar cal;
        std::sort(serials.begin(), serials.end());
        serials.erase(std::unique(serials.begin(), serials.end()), serials.end());
        require(!serials.empty(), "trading calendar is empty");
        cal.serials_ = std::move(serials);
        cal.dates_.reserve(cal.serials_.size());
        for (size_t i = 0; i < cal.serials_.size(); ++i) {
            cal.dates_.push_back(format_date(cal.serials_[i]));
            cal.index_by_serial_[cal.serials_[i]] = static_cast<int>(i);
        }
        return cal;
    }

    int size() const { return static_cast<int>(serials_.size()); }
    const std::string& date(int i) const { return dates_.at(i); }
    int serial(int i) const { return serials_.at(i); }

    std::optional<int> index_of_serial(int serial) const {
        auto it = index_by_serial_.find(serial);
        if (it == index_by_serial_.end()) return std::nullopt;
        return it->second;
    }

    std::optional<int> index_of_date(const std::string& date) const {
        int serial;
        if (!try_parse_date(date, serial)) return std::nullopt;
        return index_of_serial(serial);
    }

    // News released in [open(t), open(t+1)) carries signal day t: the last
    // trading day whose open precedes or equals the timestamp. Total over
    // [open(first), end of last calendar date] and monotone in the timestamp.
    int assign_signal_day(const Timestamp& ts) const {
        Timestamp first_open{serials_.front(), kMarketOpenSec};
        if (ts < first_open)
            fail("timestamp ", format_timestamp(ts), " precedes first market open ",
                 dates_.front());
        if (ts.day_serial > serials_.back())
            fail("timestamp ", format_timestamp(ts), " is after calendar end ", dates_.back());
        // Last day with (serial, open) <= ts.
        auto cmp = [](const Timestamp& t, int serial) {
            return t < Timestamp{serial, kMarketOpenSec};
        };
        auto it = std::upper_bound(serials_.begin(), serials_.end(), ts, cmp);
        return static_cast<int>(it - serials_.begin()) - 1;
    }

private:
    std::vector<int> serials_;
    std::vector<std::string> dates_;
    std::unordered_map<int, int> index_by_serial_;
};

struct StockSeries {
    std::string ticker;
    std::vector<PriceBar> bars; // sorted by day, unique days

    std::optional<int> position_of_day(int day) const {
        auto it = pos_by_day_.find(day);
        if (it == pos_by_day_.end()) return std::nullopt;
        return it->second;
    }

    // Close-to-close simple return against the previous available bar.
    std::optional<double> return_at_position(int pos) const {
        if (pos <= 0 || pos >= static_cast<int>(bars.size())) return std::nullopt;
        return bars[pos].close / bars[pos - 1].close - 1.0;
    }

    std::optional<double> return_on_day(int day) const {
        auto pos = position_of_day(day);
        if (!pos) return std::nullopt;
        return return_at_position(*pos);
    }

    // Last close at or before `day`; nullopt when the series starts later.
    std::optional<double> close_at_or_before(int day) const {
        auto it = std::upper_bound(bars.begin(), bars.end(), day,
                                   [](int d, const PriceBar& b) { return d < b.day; });
        if (it == bars.begin()) return std::nullopt;
        return std::prev(it)->close;
    }

    void finalize() {
        std::sort(bars.begin(), bars.end(),
                  [](const PriceBar& a, const PriceBar& b) { return a.day < b.day; });
        pos_by_day_.clear();
        for (size_t i = 0; i < bars.size(); ++i) pos_by_day_[bars[i].day] = static_cast<int>(i);
    }

private:
    std::unordered_map<int, int> pos_by_day_;
};

struct BenchmarkSeries {
    std::string index_id;
    std::vector<int> days;
    std::vector<double> closes;

    std::optional<double> close_on(int day) const {
        auto it = pos_by_day_.find(day);
        if (it == pos_by_day_.end()) return std::nullopt;
        return closes[it->second];
    }

    std::optional<double> return_on(int day) const {
        auto it = pos_by_day_.find(day);
        if (it == pos_by_day_.end() || it->second == 0) return std::nullopt;
        return closes[it->second] / closes[it->second - 1] - 1.0;
    }

    void finalize() {
        std::vector<size_t> order(days.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return days[a] < days[b]; });
        std::vector<int> d(days.size());
        std::vector<double> c(closes.size());
        for (size_t i = 0; i < order.size(); ++i) {
            d[i] = days[order[i]];
            c[i] = closes[order[i]];
        }
        days = std::move(d);
        closes = std::move(c);
        pos_by_day_.clear();
        for (size_t i = 0; i < days.size(); ++i) pos_by_day_[days[i]] = static_cast<int>(i);
    }

private:
    std::unordered_map<int, int> pos_by_day_;
};

class PriceTable {
public:
    PriceTable(TradingCalendar cal, std::map<std::string, StockSeries> stocks,
               std::map<std::string, BenchmarkSeries> benchmarks)
        : cal_(std::move(cal)), stocks_(std::move(stocks)), benchmarks_(std::move(benchmarks)) {}

    const TradingCalendar& calendar() const { return cal_; }

    bool has_ticker(const std::string& t) const { return stocks_.count(t) > 0; }

    const StockSeries& stock(const std::string& t) const {
        auto it = stocks_.find(t);
        if (it == stocks_.end()) fail("unknown ticker: ", t);
        return it->second;
    }

    const BenchmarkSeries& benchmark(const std::string& id) const {
        auto it = benchmarks_.find(id);
        if (it == benchmarks_.end()) fail("unknown benchmark index: ", id);
        return it->second;
    }

    bool has_benchmark(const std::string& id) const { return benchmarks_.count(id) > 0; }

    const std::map<std::string, StockSeries>& stocks() const { return stocks_; }
    const std::map<std::string, BenchmarkSeries>& benchmarks() const { return benchmarks_; }

private:
    TradingCalendar cal_;
    std::map<std::string, StockSeries> stocks_;
    std::map<std::string, BenchmarkSeries> benchmarks_;
};

struct StockMeta {
    std::string industry;
    std::string cap_segment; // names the benchmark index for this stock
};

using MetadataTable = std::map<std::string, StockMeta>;

struct RawEvent {
    std::string event_id;
    std::string ticker;
    Timestamp t0;
    std::string event_type; // taxonomy label, may be empty at ingestion
    std::string text_ref;   // opaque reference to the source news
};

inline const std::vector<std::string> kPricesHeader = {"ticker", "date",   "open",
                                                       "close",  "volume", "shares_outstanding"};
inline const std::vector<std::string> kIndicesHeader = {"index_id", "date", "close"};
inline const std::vector<std::string> kEventsHeader = {"event_id", "ticker", "timestamp",
                                                       "event_type", "text_ref"};
inline const std::vector<std::string> kMetadataHeader = {"ticker", "industry", "cap_segment"};

// Loads benchmark series and stock bars. The trading calendar is the union of
// all dates present in the benchmark series; stock rows must fall on calendar
// days (missing days are suspensions, never interpolated).
inline PriceTable load_price_table(const std::string& prices_path, const std::string& indices_path) {
    std::map<std::string, BenchmarkSeries> benchmarks;
    std::set<int> serials;
    {
        CsvReader in(indices_path, kIndicesHeader);
        std::vector<std::string> f;
        std::set<std::pair<std::string, int>> seen;
        while (in.next(f)) {
            int serial;
            if (!try_parse_date(f[1], serial))
                fail(indices_path, ": line ", in.line(), ": bad date '", f[1], "'");
            double close = parse_double(f[2], "close", in.line());
            require(close > 0, indices_path, ": line ", in.line(), ": close must be > 0");
            if (!seen.insert({f[0], serial}).second)
                fail(indices_path, ": line ", in.line(), ": duplicate (index,date) (", f[0], ",",
                     f[1], ")");
            auto& b = benchmarks[f[0]];
            b.index_id = f[0];
            b.days.push_back(serial); // temporarily serials; remapped below
            b.closes.push_back(close);
            serials.insert(serial);
        }
    }
    require(!benchmarks.empty(), indices_path, ": no benchmark rows");
    TradingCalendar cal =
        TradingCalendar::from_serials(std::vector<int>(serials.begin(), serials.end()));
    for (auto& [id, b] : benchmarks) {
        for (auto& d : b.days) d = *cal.index_of_serial(d);
        b.finalize();
    }

    std::map<std::string, StockSeries> stocks;
    {
        CsvReader in(prices_path, kPricesHeader);
        std::vector<std::string> f;
        std::set<std::pair<std::string, int>> seen;
        while (in.next(f)) {
            int serial;
            if (!try_parse_date(f[1], serial))
                fail(prices_path, ": line ", in.line(), ": bad date '", f[1], "'");
            auto day = cal.index_of_serial(serial);
            if (!day)
                fail(prices_path, ": line ", in.line(), ": date ", f[1],
                     " is not a trading day in the benchmark calendar");
            PriceBar bar;
            bar.day = *day;
            bar.open = parse_double(f[2], "open", in.line());
            bar.close = parse_double(f[3], "close", in.line());
            bar.volume = parse_double(f[4], "volume", in.line());
            if (!f[5].empty()) bar.shares_outstanding = parse_double(f[5], "shares_outstanding", in.line());
            require(bar.open > 0, prices_path, ": line ", in.line(), ": open must be > 0");
            require(bar.close > 0, prices_path, ": line ", in.line(), ": close must be > 0");
            require(bar.volume >= 0, prices_path, ": line ", in.line(), ": volume must be >= 0");
            if (bar.shares_outstanding)
                require(*bar.shares_outstanding > 0, prices_path, ": line ", in.line(),
                        ": shares_outstanding must be > 0");
            if (!seen.insert({f[0], *day}).second)
                fail(prices_path, ": line ", in.line(), ": duplicate (ticker,date) (", f[0], ",",
                     f[1], ")");
            auto& s = stocks[f[0]];
            s.ticker = f[0];
            s.bars.push_back(bar);
        }
    }
    for (auto& [t, s] : stocks) s.finalize();
    return PriceTable(std::move(cal), std::move(stocks), std::move(benchmarks));
}

inline MetadataTable load_metadata(const std::string& path) {
    MetadataTable meta;
    CsvReader in(path, kMetadataHeader);
    std::vector<std::string> f;
    while (in.next(f)) {
        if (!meta.emplace(f[0], StockMeta{f[1], f[2]}).second)
            fail(path, ": line ", in.line(), ": duplicate ticker ", f[0]);
    }
    return meta;
}

// Events are validated against the table: the ticker must exist and the
// timestamp must map to a signal day.
inline std::vector<RawEvent> load_events(const std::string& path, const PriceTable& prices) {
    std::vector<RawEvent> events;
    CsvReader in(path, kEventsHeader);
    std::vector<std::string> f;
    std::set<std::string> ids;
    while (in.next(f)) {
        RawEvent ev;
        ev.event_id = f[0];
        ev.ticker = f[1];
        if (!try_parse_timestamp(f[2], ev.t0))
            fail(path, ": line ", in.line(), ": bad timestamp '", f[2], "'");
        ev.event_type = f[3];
        ev.text_ref = f[4];
        require(!ev.event_id.empty(), path, ": line ", in.line(), ": empty event_id");
        if (!ids.insert(ev.event_id).second)
            fail(path, ": line ", in.line(), ": duplicate event_id ", ev.event_id);
        if (!prices.has_ticker(ev.ticker))
            fail(path, ": line ", in.line(), ": ticker ", ev.ticker, " not in price table");
        try {
            prices.calendar().assign_signal_day(ev.t0);
        } catch (const Error& e) {
            fail(path, ": line ", in.line(), ": ", e.what());
        }
        events.push_back(std::move(ev));
    }
    return events;
}

inline void write_price_table(const PriceTable& table, const std::string& prices_path,
                              const std::string& indices_path) {
    const auto& cal = table.calendar();
    {
        CsvWriter out(prices_path, kPricesHeader);
        for (const auto& [ticker, s] : table.stocks())
            for (const auto& bar : s.bars)
                out.row({ticker, cal.date(bar.day), format_double(bar.open),
                         format_double(bar.close), format_double(bar.volume),
                         bar.shares_outstanding ? format_double(*bar.shares_outstanding) : ""});
    }
    {
        CsvWriter out(indices_path, kIndicesHeader);
        for (const auto& [id, b] : table.benchmarks())
            for (size_t i = 0; i < b.days.size(); ++i)
                out.row({id, cal.date(b.days[i]), format_double(b.closes[i])});
    }
}

inline void write_events(const std::vector<RawEvent>& events, const std::string& path) {
    CsvWriter out(path, kEventsHeader);
    for (const auto& ev : events)
        out.row({ev.event_id, ev.ticker, format_timestamp(ev.t0), ev.event_type, ev.text_ref});
}

inline void write_metadata(const MetadataTable& meta, const std::string& path) {
    CsvWriter out(path, kMetadataHeader);
    for (const auto& [ticker, m] : meta) out.row({ticker, m.industry, m.cap_segment});
}

} // namespace evq
