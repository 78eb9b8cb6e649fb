#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "evq/csv.hpp"
#include "evq/dates.hpp"
#include "evq/eventstudy.hpp"

// Label derivation and the event dataset: direction from the sign of CAR
// (with an optional neutral band), strength from a threshold tau with strict
// inequality at the boundary, the closed 10-type event taxonomy, per-type
// statistics, and line-delimited dataset persistence.
//
// Dataset file columns: news_ref,t0,ticker,event_type,direction,strength,car

namespace evq {

inline constexpr int kNumEventTypes = 10;

enum class EventType : int {
    personal_behavior = 0,
    equity_change,
    asset_change,
    dividend,
    risk_warning,
    financing,
    financial_status,
    violation,
    industry,
    rating_adjustment,
    absent, // missing prediction marker; never a ground-truth label
};

inline const std::array<std::string, kNumEventTypes> kEventTypeNames = {
    "personal_behavior", "equity_change", "asset_change", "dividend",  "risk_warning",
    "financing",         "financial_status", "violation", "industry", "rating_adjustment"};

inline const std::string& to_string(EventType t) {
    static const std::string absent = "absent";
    int i = static_cast<int>(t);
    return i >= 0 && i < kNumEventTypes ? kEventTypeNames[i] : absent;
}

// Closed set: anything outside the taxonomy is rejected.
inline EventType parse_event_type(std::string_view s) {
    for (int i = 0; i < kNumEventTypes; ++i)
        if (kEventTypeNames[i] == s) return static_cast<EventType>(i);
    fail("unknown event_type label '", std::string(s), "'");
}

// Prediction-side parser: an empty field is the absent marker.
inline EventType parse_event_type_or_absent(std::string_view s) {
    if (s.empty() || s == "absent") return EventType::absent;
    return parse_event_type(s);
}

enum class Direction : int { positive = 0, negative = 1, neutral = 2 };
enum class Strength : int { strong = 0, weak = 1 };

inline const std::string& to_string(Direction d) {
    static const std::array<std::string, 3> names = {"positive", "negative", "neutral"};
    return names[static_cast<int>(d)];
}

inline Direction parse_direction(std::string_view s) {
    if (s == "positive") return Direction::positive;
    if (s == "negative") return Direction::negative;
    if (s == "neutral") return Direction::neutral;
    fail("unknown direction label '", std::string(s), "'");
}

inline const std::string& to_string(Strength s) {
    static const std::array<std::string, 2> names = {"strong", "weak"};
    return names[static_cast<int>(s)];
}

inline Strength parse_strength(std::string_view s) {
    if (s == "strong") return Strength::strong;
    if (s == "weak") return Strength::weak;
    fail("unknown strength label '", std::string(s), "'");
}

inline Direction sign_direction(double value, double neutral_band = 0.0) {
    if (value > neutral_band) return Direction::positive;
    if (value < -neutral_band) return Direction::negative;
    return Direction::neutral;
}

struct Label {
    Direction direction;
    Strength strength;

    bool operator==(const Label&) const = default;
};

// direction = sign of CAR outside the neutral band; strength = strong iff
// |CAR| > tau (strictly: |CAR| == tau is weak).
inline Label derive_label(double car, double tau, double neutral_band = 0.0) {
    require(std::isfinite(car), "derive_label: CAR is not finite");
    require(tau > 0, "derive_label: tau must be > 0");
    require(neutral_band >= 0, "derive_label: neutral band must be >= 0");
    return {sign_direction(car, neutral_band),
            std::abs(car) > tau ? Strength::strong : Strength::weak};
}

struct LabeledEvent {
    std::string news_ref;
    Timestamp t0;
    std::string ticker;
    EventType event_type = EventType::absent;
    Direction direction = Direction::neutral;
    Strength strength = Strength::weak;
    double car = 0.0;

    bool operator==(const LabeledEvent&) const = default;
};

struct LabelConfig {
    double tau = 0.01;
    double neutral_band = 0.0;
};

// Assembles the dataset record for one event. The event must carry a taxonomy
// annotation (or one must be supplied); skipped CAR results are rejected.
inline LabeledEvent build_labeled_record(const RawEvent& event, const EventCarResult& car_result,
                                         const LabelConfig& cfg,
                                         std::optional<EventType> annotation = std::nullopt) {
    require(event.event_id == car_result.event_id, "build_labeled_record: CAR result ",
            car_result.event_id, " does not belong to event ", event.event_id);
    require(!car_result.skipped, "event ", event.event_id,
            ": cannot label a skipped CAR result (", car_result.skip_reason, ")");
    LabeledEvent rec;
    rec.news_ref = event.text_ref.empty() ? event.event_id : event.text_ref;
    rec.t0 = event.t0;
    rec.ticker = event.ticker;
    if (annotation) {
        rec.event_type = *annotation;
    } else {
        require(!event.event_type.empty(), "event ", event.event_id,
                ": event_type missing and no annotation provided");
        rec.event_type = parse_event_type(event.event_type);
    }
    rec.car = car_result.car;
    Label label = derive_label(rec.car, cfg.tau, cfg.neutral_band);
    rec.direction = label.direction;
    rec.strength = label.strength;
    return rec;
}

struct TypeStatsRow {
    EventType type;
    int count = 0;
    double mean_abs_car = 0.0;
    std::array<double, 5> quantiles{}; // 5/25/50/75/95% of signed CAR
};

struct TypeStats {
    std::string window_start;
    std::string window_end;
    std::array<TypeStatsRow, kNumEventTypes> rows;
    int total = 0;
};

namespace detail {

// Linear-interpolated quantile of a sorted sample at fraction p.
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) return 0.0;
    if (sorted.size() == 1) return sorted[0];
    double h = p * (sorted.size() - 1);
    size_t lo = static_cast<size_t>(h);
    if (lo + 1 >= sorted.size()) return sorted.back();
    double frac = h - lo;
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

} // namespace detail

// Per-type mean |CAR| and CAR quantiles over records whose t0 date falls in
// [window_start, window_end] (inclusive, ISO dates). Types with no records in
// the window are reported with count 0.
inline TypeStats event_type_stats(const std::vector<LabeledEvent>& records,
                                  const std::string& window_start, const std::string& window_end) {
    const int lo = parse_date(window_start);
    const int hi = parse_date(window_end);
    require(lo <= hi, "event_type_stats: window start after end");
    TypeStats stats;
    stats.window_start = window_start;
    stats.window_end = window_end;
    std::array<std::vector<double>, kNumEventTypes> cars;
    for (const auto& rec : records) {
        if (rec.t0.day_serial < lo || rec.t0.day_serial > hi) continue;
        cars[static_cast<int>(rec.event_type)].push_back(rec.car);
    }
    static constexpr std::array<double, 5> kQuantiles = {0.05, 0.25, 0.50, 0.75, 0.95};
    for (int k = 0; k < kNumEventTypes; ++k) {
        auto& row = stats.rows[k];
        row.type = static_cast<EventType>(k);
        row.count = static_cast<int>(cars[k].size());
        stats.total += row.count;
        if (cars[k].empty()) continue;
        double sum_abs = 0;
        for (double c : cars[k]) sum_abs += std::abs(c);
        row.mean_abs_car = sum_abs / cars[k].size();
        std::sort(cars[k].begin(), cars[k].end());
        for (size_t q = 0; q < kQuantiles.size(); ++q)
            row.quantiles[q] = detail::quantile_sorted(cars[k], kQuantiles[q]);
    }
    return stats;
}

inline const std::vector<std::string> kDatasetHeader = {
    "news_ref", "t0", "ticker", "event_type", "direction", "strength", "car"};

inline void write_dataset(const std::vector<LabeledEvent>& records, const std::string& path) {
    CsvWriter out(path, kDatasetHeader);
    for (const auto& rec : records)
        out.row({rec.news_ref, format_timestamp(rec.t0), rec.ticker, to_string(rec.event_type),
                 to_string(rec.direction), to_string(rec.strength), format_double(rec.car)});
}

inline std::vector<LabeledEvent> read_dataset(const std::string& path) {
    std::vector<LabeledEvent> records;
    CsvReader in(path, kDatasetHeader);
    std::vector<std::string> f;
    while (in.next(f)) {
        LabeledEvent rec;
        rec.news_ref = f[0];
        if (!try_parse_timestamp(f[1], rec.t0))
            fail(path, ": line ", in.line(), ": bad timestamp '", f[1], "'");
        rec.ticker = f[2];
        try {
            rec.event_type = parse_event_type(f[3]);
            rec.direction = parse_direction(f[4]);
            rec.strength = parse_strength(f[5]);
        } catch (const Error& e) {
            fail(path, ": line ", in.line(), ": ", e.what());
        }
        rec.car = parse_double(f[6], "car", in.line());
        records.push_back(std::move(rec));
    }
    return records;
}

inline const std::vector<std::string> kTypeStatsHeader = {
    "event_type", "count", "mean_abs_car", "q05", "q25", "q50", "q75", "q95"};

inline void write_type_stats(const TypeStats& stats, const std::string& path) {
    CsvWriter out(path, kTypeStatsHeader);
    for (const auto& row : stats.rows) {
        std::vector<std::string> f{to_string(row.type), std::to_string(row.count),
                                   format_double(row.mean_abs_car)};
        for (double q : row.quantiles) f.push_back(format_double(q));
        out.row(f);
    }
}

} // namespace evq
