#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <random>

#include "evq/labeling.hpp"
#include "test_util.hpp"

using namespace evq;
using evq_test::TempDir;
using evq_test::read_file;
using evq_test::write_file;

namespace {

LabeledEvent make_record(const std::string& ref, const std::string& ts, EventType type,
                         double car, double tau = 0.01) {
    LabeledEvent rec;
    rec.news_ref = ref;
    rec.t0 = parse_timestamp(ts);
    rec.ticker = "S" + ref;
    rec.event_type = type;
    rec.car = car;
    Label label = derive_label(car, tau);
    rec.direction = label.direction;
    rec.strength = label.strength;
    return rec;
}

} // namespace

TEST_CASE("event type taxonomy is closed") {
    CHECK(parse_event_type("risk_warning") == EventType::risk_warning);
    CHECK(parse_event_type("rating_adjustment") == EventType::rating_adjustment);
    CHECK_THROWS_WITH(parse_event_type("merger"),
                      Catch::Matchers::ContainsSubstring("merger"));
    CHECK_THROWS_WITH(parse_event_type(""), Catch::Matchers::ContainsSubstring("unknown"));
    CHECK(parse_event_type_or_absent("") == EventType::absent);
    for (int i = 0; i < kNumEventTypes; ++i) {
        EventType t = static_cast<EventType>(i);
        CHECK(parse_event_type(to_string(t)) == t);
    }
}

TEST_CASE("derive_label cases") {
    CHECK(derive_label(0.05, 0.01) == Label{Direction::positive, Strength::strong});
    CHECK(derive_label(0.0, 0.01) == Label{Direction::neutral, Strength::weak});
    CHECK(derive_label(-0.008, 0.01) == Label{Direction::negative, Strength::weak});
    // Strict inequality at the threshold.
    CHECK(derive_label(0.01, 0.01) == Label{Direction::positive, Strength::weak});
    CHECK(derive_label(-0.01, 0.01) == Label{Direction::negative, Strength::weak});
    // Neutral band swallows small moves.
    CHECK(derive_label(0.004, 0.01, 0.005) == Label{Direction::neutral, Strength::weak});
    CHECK(derive_label(0.006, 0.01, 0.005) == Label{Direction::positive, Strength::weak});
    CHECK_THROWS(derive_label(std::nan(""), 0.01));
    CHECK_THROWS(derive_label(0.05, 0.0));
}

TEST_CASE("strength is monotone in |car|") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> unif(0.0, 0.1);
    for (int i = 0; i < 200; ++i) {
        double a = unif(rng), b = unif(rng);
        double lo = std::min(a, b), hi = std::max(a, b);
        Label l_lo = derive_label(lo, 0.02);
        Label l_hi = derive_label(hi, 0.02);
        if (l_lo.strength == Strength::strong) CHECK(l_hi.strength == Strength::strong);
    }
}

TEST_CASE("build_labeled_record assembles the dataset row") {
    RawEvent ev;
    ev.event_id = "E7";
    ev.ticker = "S0007";
    ev.t0 = parse_timestamp("2022-05-10T14:00:00");
    ev.event_type = "risk_warning";
    ev.text_ref = "news-77";
    EventCarResult car;
    car.event_id = "E7";
    car.ticker = "S0007";
    car.t0 = ev.t0;
    car.car = -0.04;

    LabeledEvent rec = build_labeled_record(ev, car, LabelConfig{0.01, 0.0});
    CHECK(rec.news_ref == "news-77");
    CHECK(rec.event_type == EventType::risk_warning);
    CHECK(rec.direction == Direction::negative);
    CHECK(rec.strength == Strength::strong);
    CHECK(rec.car == -0.04);

    SECTION("missing annotation is an error, explicit annotation fills it") {
        ev.event_type = "";
        CHECK_THROWS_WITH(build_labeled_record(ev, car, LabelConfig{}),
                          Catch::Matchers::ContainsSubstring("annotation"));
        LabeledEvent rec2 = build_labeled_record(ev, car, LabelConfig{}, EventType::dividend);
        CHECK(rec2.event_type == EventType::dividend);
    }
    SECTION("skipped CAR results are rejected") {
        car.skipped = true;
        car.skip_reason = "missing days";
        CHECK_THROWS(build_labeled_record(ev, car, LabelConfig{}));
    }
    SECTION("mismatched event id is rejected") {
        car.event_id = "OTHER";
        CHECK_THROWS(build_labeled_record(ev, car, LabelConfig{}));
    }
    SECTION("empty text_ref falls back to the event id") {
        ev.text_ref = "";
        LabeledEvent rec3 = build_labeled_record(ev, car, LabelConfig{});
        CHECK(rec3.news_ref == "E7");
    }
}

TEST_CASE("event_type_stats means and counts") {
    std::vector<LabeledEvent> records;
    records.push_back(make_record("1", "2022-03-01T10:00:00", EventType::risk_warning, 0.04));
    records.push_back(make_record("2", "2022-03-02T10:00:00", EventType::risk_warning, -0.06));
    records.push_back(make_record("3", "2022-03-03T10:00:00", EventType::dividend, 0.02));

    TypeStats stats = event_type_stats(records, "2022-03-01", "2022-03-31");
    CHECK(stats.total == 3);
    const auto& rw = stats.rows[static_cast<int>(EventType::risk_warning)];
    CHECK(rw.count == 2);
    CHECK(rw.mean_abs_car == Catch::Approx(0.05).margin(1e-15));
    const auto& dv = stats.rows[static_cast<int>(EventType::dividend)];
    CHECK(dv.count == 1);
    CHECK(dv.mean_abs_car == Catch::Approx(0.02));
    CHECK(dv.quantiles[2] == Catch::Approx(0.02)); // single point: all quantiles equal
    // Types with no records report zero count.
    CHECK(stats.rows[static_cast<int>(EventType::financing)].count == 0);
    CHECK(stats.rows[static_cast<int>(EventType::financing)].mean_abs_car == 0.0);

    // Window filtering by t0 date.
    TypeStats clipped = event_type_stats(records, "2022-03-02", "2022-03-31");
    CHECK(clipped.total == 2);
}

TEST_CASE("event_type_stats matches a brute-force group-by on 1000 records") {
    std::mt19937_64 rng(59);
    std::uniform_int_distribution<int> type(0, kNumEventTypes - 1);
    std::normal_distribution<double> car(0.0, 0.05);
    std::uniform_int_distribution<int> day_offset(0, 59);

    std::vector<LabeledEvent> records;
    std::array<std::vector<double>, kNumEventTypes> groups;
    int base = parse_date("2022-01-03");
    for (int i = 0; i < 1000; ++i) {
        int k = type(rng);
        double c = car(rng);
        LabeledEvent rec = make_record(std::to_string(i),
                                       format_date(base + day_offset(rng)) + "T10:00:00",
                                       static_cast<EventType>(k), c);
        records.push_back(rec);
        groups[k].push_back(std::abs(c));
    }
    TypeStats stats = event_type_stats(records, "2022-01-03", "2022-03-03");
    CHECK(stats.total == 1000);
    for (int k = 0; k < kNumEventTypes; ++k) {
        double mean = 0;
        for (double v : groups[k]) mean += v;
        if (!groups[k].empty()) mean /= groups[k].size();
        CHECK(stats.rows[k].count == static_cast<int>(groups[k].size()));
        CHECK(stats.rows[k].mean_abs_car == Catch::Approx(mean).margin(1e-12));
    }
}

TEST_CASE("stats over a window equal the count-weighted merge of a partition") {
    std::mt19937_64 rng(61);
    std::normal_distribution<double> car(0.0, 0.03);
    std::vector<LabeledEvent> records;
    int base = parse_date("2022-02-01");
    for (int i = 0; i < 300; ++i)
        records.push_back(make_record(std::to_string(i),
                                      format_date(base + i % 28) + "T11:00:00",
                                      static_cast<EventType>(i % kNumEventTypes), car(rng)));

    TypeStats whole = event_type_stats(records, "2022-02-01", "2022-02-28");
    TypeStats first = event_type_stats(records, "2022-02-01", "2022-02-14");
    TypeStats second = event_type_stats(records, "2022-02-15", "2022-02-28");
    for (int k = 0; k < kNumEventTypes; ++k) {
        int n1 = first.rows[k].count, n2 = second.rows[k].count;
        CHECK(whole.rows[k].count == n1 + n2);
        if (n1 + n2 > 0) {
            double merged = (n1 * first.rows[k].mean_abs_car + n2 * second.rows[k].mean_abs_car) /
                            (n1 + n2);
            CHECK(whole.rows[k].mean_abs_car == Catch::Approx(merged).margin(1e-12));
        }
    }
}

TEST_CASE("dataset file round-trips") {
    TempDir tmp;

    SECTION("empty list round-trips through an empty file") {
        write_dataset({}, tmp.file("empty.csv"));
        auto loaded = read_dataset(tmp.file("empty.csv"));
        CHECK(loaded.empty());
    }

    SECTION("records round-trip exactly") {
        std::vector<LabeledEvent> records = {
            make_record("n1", "2022-03-01T10:00:00", EventType::violation, -0.0123456789),
            make_record("n2", "2022-03-02T15:30:00", EventType::industry, 0.0),
            make_record("n3", "2022-03-03T09:29:00", EventType::equity_change, 0.2),
        };
        write_dataset(records, tmp.file("ds.csv"));
        auto loaded = read_dataset(tmp.file("ds.csv"));
        REQUIRE(loaded.size() == records.size());
        for (size_t i = 0; i < records.size(); ++i) CHECK(loaded[i] == records[i]);
        // write(read(file)) is byte-identical.
        write_dataset(loaded, tmp.file("ds2.csv"));
        CHECK(read_file(tmp.file("ds.csv")) == read_file(tmp.file("ds2.csv")));
    }

    SECTION("unknown event type names the label") {
        write_file(tmp.file("bad.csv"),
                   "news_ref,t0,ticker,event_type,direction,strength,car\n"
                   "n1,2022-03-01T10:00:00,S1,ipo_rumor,positive,strong,0.02\n");
        CHECK_THROWS_WITH(read_dataset(tmp.file("bad.csv")),
                          Catch::Matchers::ContainsSubstring("ipo_rumor") &&
                              Catch::Matchers::ContainsSubstring("line 2"));
    }
}
