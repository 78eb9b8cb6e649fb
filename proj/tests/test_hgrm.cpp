#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "evq/hgrm.hpp"
#include "test_util.hpp"

using namespace evq;
using evq_test::TempDir;
using evq_test::read_file;
using evq_test::write_file;

namespace {

// Direct re-implementation of the whole reward procedure, written straight
// from the composition rule with independent control flow. Only used as a
// test oracle.
double oracle_reward(const Prediction& pred, double car, EventType truth_type,
                     const RewardConfig& c) {
    double car_hat = pred.car_hat.value_or(0.0);
    bool has_car = pred.car_hat.has_value();
    Direction d_hat;
    if (pred.direction_hat) {
        d_hat = *pred.direction_hat;
    } else {
        d_hat = car_hat > 0 ? Direction::positive
                            : (car_hat < 0 ? Direction::negative : Direction::neutral);
    }
    Strength s_hat;
    if (pred.strength_hat) {
        s_hat = *pred.strength_hat;
    } else {
        s_hat = (has_car && std::abs(car_hat) > c.tau) ? Strength::strong : Strength::weak;
    }
    Direction d = car > 0 ? Direction::positive
                          : (car < 0 ? Direction::negative : Direction::neutral);
    Strength s = std::abs(car) > c.tau ? Strength::strong : Strength::weak;

    double s_dir;
    if (d_hat == d)
        s_dir = 1.0;
    else if ((d_hat == Direction::positive && d == Direction::negative) ||
             (d_hat == Direction::negative && d == Direction::positive))
        s_dir = -c.lambda_dir;
    else
        s_dir = 0.0;
    int g = s_dir >= 0 ? 1 : 0;

    double s_evt, m_evt;
    if (pred.event_type_hat == truth_type) {
        s_evt = 1.0;
        m_evt = 1.0;
    } else if (pred.event_type_hat == EventType::absent) {
        s_evt = -c.lambda_miss;
        m_evt = c.alpha_discount;
    } else {
        s_evt = -c.lambda_evt;
        m_evt = c.alpha_discount;
    }

    double pnl = 0;
    if (d_hat == Direction::positive) pnl = car - c.kappa;
    if (d_hat == Direction::negative) pnl = -car - c.kappa;

    double r_pnl = 0;
    if (g == 1 && s_hat == Strength::strong) {
        r_pnl = m_evt * pnl;
        if (r_pnl > c.rho) r_pnl = c.rho;
        if (r_pnl < -c.rho) r_pnl = -c.rho;
    }
    double r_mag = (g == 1 && has_car) ? std::exp(-std::abs(car_hat - car) / c.sigma) : 0.0;
    double r_proc = 0;
    if (g == 1 && pred.response_doc) {
        double presence = 1.0;
        if (!c.required_sections.empty()) {
            int present = 0;
            for (const auto& name : c.required_sections)
                if (pred.response_doc->sections.count(name)) ++present;
            presence = double(present) / c.required_sections.size();
        }
        long chars = 0;
        for (const auto& [k, v] : pred.response_doc->sections) chars += v;
        double score = presence - 0.1 * std::max(0.0, double(chars) / c.length_cap - 1.0) -
                       0.05 * pred.response_doc->question_count;
        r_proc = std::min(1.0, std::max(0.0, score));
    }
    double r_str = 0;
    if (g == 1 && s_hat != s) r_str = s_hat == Strength::strong ? -c.p_false_strong : -c.p_false_weak;

    return c.w_dir * s_dir + g * (c.w_evt * s_evt + c.w_pnl * r_pnl + c.w_mag * r_mag +
                                  c.w_proc * r_proc + c.w_str * r_str);
}

} // namespace

TEST_CASE("normalize_prediction fills missing fields from car_hat") {
    RewardConfig cfg;

    Prediction p1;
    p1.car_hat = 0.02;
    auto n1 = normalize_prediction(p1, cfg);
    CHECK(n1.direction == Direction::positive);
    CHECK(n1.strength == Strength::strong);

    Prediction p2;
    p2.car_hat = -0.005;
    p2.direction_hat = Direction::positive; // explicit wins over sign(car_hat)
    auto n2 = normalize_prediction(p2, cfg);
    CHECK(n2.direction == Direction::positive);
    CHECK(n2.strength == Strength::weak);

    Prediction p3;
    p3.car_hat = 0.0;
    auto n3 = normalize_prediction(p3, cfg);
    CHECK(n3.direction == Direction::neutral);
    CHECK(n3.strength == Strength::weak);

    Prediction p4; // direction only, no car_hat: strength defaults to weak
    p4.direction_hat = Direction::negative;
    auto n4 = normalize_prediction(p4, cfg);
    CHECK(n4.strength == Strength::weak);
    CHECK_FALSE(n4.car_hat.has_value());

    Prediction p5; // neither car_hat nor direction
    CHECK_THROWS_WITH(normalize_prediction(p5, cfg),
                      Catch::Matchers::ContainsSubstring("neither"));
}

TEST_CASE("direction score table") {
    const double lam = 2.0;
    CHECK(direction_score(Direction::positive, Direction::positive, lam) == 1.0);
    CHECK(direction_score(Direction::neutral, Direction::neutral, lam) == 1.0);
    CHECK(direction_score(Direction::positive, Direction::negative, lam) == -2.0);
    CHECK(direction_score(Direction::negative, Direction::positive, lam) == -2.0);
    CHECK(direction_score(Direction::neutral, Direction::positive, lam) == 0.0);
    CHECK(direction_score(Direction::positive, Direction::neutral, lam) == 0.0);
    CHECK(direction_score(Direction::negative, Direction::neutral, lam) == 0.0);
}

TEST_CASE("event type score and discount") {
    RewardConfig cfg;
    auto match = event_type_score(EventType::risk_warning, EventType::risk_warning, cfg);
    CHECK(match.s_evt == 1.0);
    CHECK(match.m_evt == 1.0);
    auto wrong = event_type_score(EventType::dividend, EventType::risk_warning, cfg);
    CHECK(wrong.s_evt == -cfg.lambda_evt);
    CHECK(wrong.m_evt == cfg.alpha_discount);
    auto missing = event_type_score(EventType::absent, EventType::risk_warning, cfg);
    CHECK(missing.s_evt == -cfg.lambda_miss);
    CHECK(missing.m_evt == cfg.alpha_discount);
}

TEST_CASE("trade payoff substitution") {
    CHECK(trade_payoff(Direction::positive, 0.05, 0.003) == Catch::Approx(0.047));
    CHECK(trade_payoff(Direction::negative, 0.05, 0.003) == Catch::Approx(-0.053));
    CHECK(trade_payoff(Direction::neutral, 0.05, 0.003) == 0.0);
    CHECK(trade_payoff(Direction::neutral, -0.2, 0.1) == 0.0);
}

TEST_CASE("clipped pnl reward") {
    CHECK(clipped_pnl_reward(0.08, 0.5, Strength::strong, true, 0.03) == Catch::Approx(0.03));
    CHECK(clipped_pnl_reward(0.08, 0.5, Strength::weak, true, 0.03) == 0.0);
    CHECK(clipped_pnl_reward(0.02, 1.0, Strength::strong, false, 0.03) == 0.0);
    CHECK(clipped_pnl_reward(-0.5, 1.0, Strength::strong, true, 0.05) == Catch::Approx(-0.05));
    // Clip bound holds across a sweep.
    for (double payoff = -1.0; payoff <= 1.0; payoff += 0.01)
        CHECK(std::abs(clipped_pnl_reward(payoff, 0.7, Strength::strong, true, 0.04)) <=
              0.04 + 1e-15);
}

TEST_CASE("strength regularizer asymmetry") {
    CHECK(strength_regularizer(Strength::strong, Strength::strong, 0.5, 0.2) == 0.0);
    CHECK(strength_regularizer(Strength::weak, Strength::weak, 0.5, 0.2) == 0.0);
    CHECK(strength_regularizer(Strength::strong, Strength::weak, 0.5, 0.2) == -0.5);
    CHECK(strength_regularizer(Strength::weak, Strength::strong, 0.5, 0.2) == -0.2);
}

TEST_CASE("magnitude reward shape") {
    CHECK(magnitude_reward(0.03, 0.03, 0.02, true) == 1.0);
    CHECK(magnitude_reward(0.05, 0.03, 0.02, true) == Catch::Approx(std::exp(-1.0)));
    CHECK(magnitude_reward(0.05, 0.03, 0.02, false) == 0.0);
    CHECK(magnitude_reward(std::nullopt, 0.03, 0.02, true) == 0.0);

    // Strictly decreasing in |car_hat - car| while the gate is open.
    double prev = 2.0;
    for (double err = 0.0; err <= 0.2; err += 0.005) {
        double v = magnitude_reward(0.03 + err, 0.03, 0.02, true);
        CHECK(v > 0.0);
        CHECK(v <= 1.0);
        CHECK(v < prev);
        prev = v;
    }
}

TEST_CASE("process reward scoring") {
    RewardConfig cfg; // required: event_analysis, market_impact, decision; cap 2000

    ResponseDoc full;
    full.sections = {{"event_analysis", 500}, {"market_impact", 600}, {"decision", 300}};
    full.question_count = 0;
    CHECK(process_reward(full, true, cfg) == 1.0);

    ResponseDoc none;
    none.sections = {{"preamble", 100}};
    CHECK(process_reward(none, true, cfg) == 0.0);

    // All sections present but 3x over the length cap: 1 - 0.1 * (3 - 1) = 0.8.
    ResponseDoc longdoc;
    longdoc.sections = {{"event_analysis", 2000}, {"market_impact", 2000}, {"decision", 2000}};
    CHECK(process_reward(longdoc, true, cfg) == Catch::Approx(0.8));

    // Self-questioning penalty: 1 - 0.05 * 4 = 0.8.
    ResponseDoc asks = full;
    asks.question_count = 4;
    CHECK(process_reward(asks, true, cfg) == Catch::Approx(0.8));

    CHECK(process_reward(full, false, cfg) == 0.0);
    CHECK(process_reward(std::nullopt, true, cfg) == 0.0);

    // Clipped to [0, 1] no matter how heavy the penalties.
    ResponseDoc terrible;
    terrible.sections = {{"x", 100000}};
    terrible.question_count = 50;
    CHECK(process_reward(terrible, true, cfg) == 0.0);
}

TEST_CASE("compose_reward: gate dominance on opposite directions") {
    RewardConfig cfg;
    Prediction pred;
    pred.car_hat = 0.05;
    pred.direction_hat = Direction::positive;
    pred.strength_hat = Strength::strong;
    pred.event_type_hat = EventType::risk_warning;
    TruthRecord truth{-0.04, EventType::risk_warning};

    RewardBreakdown b = compose_reward(pred, truth, cfg);
    CHECK(b.s_dir == -cfg.lambda_dir);
    CHECK_FALSE(b.gate_open);
    CHECK(b.r_pnl == 0.0);
    CHECK(b.r_mag == 0.0);
    CHECK(b.r_proc == 0.0);
    CHECK(b.r_str == 0.0);
    CHECK(b.total == cfg.w_dir * -cfg.lambda_dir); // exactly, nothing else leaks through
}

TEST_CASE("compose_reward: perfect prediction composes every term") {
    RewardConfig cfg;
    const double car = 0.04;
    Prediction pred;
    pred.car_hat = car;
    pred.direction_hat = Direction::positive;
    pred.strength_hat = Strength::strong;
    pred.event_type_hat = EventType::financing;
    TruthRecord truth{car, EventType::financing};

    RewardBreakdown b = compose_reward(pred, truth, cfg);
    CHECK(b.gate_open);
    double payoff = car - cfg.kappa; // within the clip bound
    CHECK(b.total == Catch::Approx(cfg.w_dir + cfg.w_evt + cfg.w_pnl * payoff + cfg.w_mag * 1.0)
                         .margin(1e-12));
    CHECK(b.r_str == 0.0);
    CHECK(b.r_proc == 0.0); // no response doc attached
}

TEST_CASE("compose_reward: neutral truth with neutral prediction") {
    RewardConfig cfg;
    Prediction pred;
    pred.car_hat = 0.0;
    pred.event_type_hat = EventType::industry;
    TruthRecord truth{0.0, EventType::industry};
    RewardBreakdown b = compose_reward(pred, truth, cfg);
    CHECK(b.s_dir == 1.0);
    CHECK(b.gate_open);
    CHECK(b.raw_pnl == 0.0); // neutral payoff is zero by construction
    CHECK(b.r_pnl == 0.0);
    CHECK(b.total == Catch::Approx(cfg.w_dir + cfg.w_evt * 1.0 + cfg.w_mag * 1.0).margin(1e-12));
}

TEST_CASE("compose_reward matches the brute-force oracle over the full case table") {
    RewardConfig cfg;
    cfg.w_proc = 0.2; // give the process term weight so doc cases matter

    // Truth CARs cover (direction x strength) reachable combos; tau = 0.01.
    const std::vector<double> truth_cars = {0.05, 0.005, -0.05, -0.005, 0.0};
    const std::vector<std::optional<Direction>> dir_hats = {
        Direction::positive, Direction::negative, Direction::neutral, std::nullopt};
    const std::vector<std::optional<Strength>> str_hats = {Strength::strong, Strength::weak,
                                                           std::nullopt};
    const std::vector<std::optional<double>> car_hats = {0.02, -0.03, 0.0, std::nullopt};
    const std::vector<EventType> type_hats = {EventType::risk_warning, EventType::dividend,
                                              EventType::absent};
    ResponseDoc doc;
    doc.sections = {{"event_analysis", 900}, {"market_impact", 900}, {"decision", 900}};
    doc.question_count = 1;

    int cases = 0;
    for (double car : truth_cars)
        for (const auto& dh : dir_hats)
            for (const auto& sh : str_hats)
                for (const auto& ch : car_hats)
                    for (EventType eh : type_hats)
                        for (bool with_doc : {false, true}) {
                            if (!dh && !ch) continue; // invalid prediction by invariant
                            Prediction pred;
                            pred.car_hat = ch;
                            pred.direction_hat = dh;
                            pred.strength_hat = sh;
                            pred.event_type_hat = eh;
                            if (with_doc) pred.response_doc = doc;
                            TruthRecord truth{car, EventType::risk_warning};
                            RewardBreakdown b = compose_reward(pred, truth, cfg);
                            double expect = oracle_reward(pred, car, EventType::risk_warning, cfg);
                            CHECK(b.total == Catch::Approx(expect).margin(1e-12));
                            CHECK(std::abs(b.r_pnl) <= cfg.rho + 1e-15);
                            if (b.s_dir < 0)
                                CHECK(b.total == Catch::Approx(cfg.w_dir * b.s_dir).margin(1e-15));
                            ++cases;
                        }
    CHECK(cases >= 36);
}

TEST_CASE("compose_reward is deterministic and order-independent") {
    RewardConfig cfg;
    Prediction pred;
    pred.car_hat = 0.013;
    pred.event_type_hat = EventType::asset_change;
    TruthRecord truth{0.017, EventType::asset_change};
    RewardBreakdown a = compose_reward(pred, truth, cfg);
    RewardBreakdown b = compose_reward(pred, truth, cfg);
    CHECK(a.total == b.total);
    CHECK(a.r_pnl == b.r_pnl);
    CHECK(a.r_mag == b.r_mag);
}

TEST_CASE("pnl reward is non-decreasing in the payoff (gate open, strong)") {
    RewardConfig cfg;
    double prev = -1e9;
    for (double payoff = -0.2; payoff <= 0.2; payoff += 0.001) {
        double v = clipped_pnl_reward(payoff, 0.5, Strength::strong, true, cfg.rho);
        CHECK(v >= prev - 1e-15);
        prev = v;
    }
}

TEST_CASE("event discount never increases the pnl magnitude") {
    RewardConfig cfg;
    for (double payoff : {-0.08, -0.02, 0.0, 0.02, 0.08}) {
        double matched = clipped_pnl_reward(payoff, 1.0, Strength::strong, true, cfg.rho);
        double mismatched =
            clipped_pnl_reward(payoff, cfg.alpha_discount, Strength::strong, true, cfg.rho);
        CHECK(std::abs(mismatched) <= std::abs(matched) + 1e-15);
    }
}

TEST_CASE("reward config validation") {
    RewardConfig cfg;
    cfg.lambda_dir = 1.0; // must be > 1
    CHECK_THROWS(cfg.validate());
    cfg = RewardConfig{};
    cfg.alpha_discount = 1.0; // must be < 1
    CHECK_THROWS(cfg.validate());
    cfg = RewardConfig{};
    cfg.rho = 0.0;
    CHECK_THROWS(cfg.validate());
    CHECK_NOTHROW(RewardConfig{}.validate());
}

TEST_CASE("reward file scoring round-trips the documented format") {
    TempDir tmp;
    write_file(tmp.file("pairs.csv"),
               "car_hat,direction_hat,strength_hat,event_type_hat,car,event_type,doc_sections,"
               "doc_questions\n"
               "0.02,,,risk_warning,0.03,risk_warning,event_analysis:500|market_impact:400|"
               "decision:200,0\n"
               "-0.04,positive,strong,dividend,0.05,risk_warning,,\n"
               ",neutral,,,0.0,industry,,\n");
    score_reward_file(tmp.file("pairs.csv"), tmp.file("out.csv"), RewardConfig{});
    auto content = read_file(tmp.file("out.csv"));
    CHECK_THAT(content, Catch::Matchers::ContainsSubstring(
                            "s_dir,g_dir,s_evt,m_evt,raw_pnl,r_pnl,r_mag,r_proc,r_str,total"));
    // Three data rows.
    CHECK(std::count(content.begin(), content.end(), '\n') == 4);

    // Row 2 is an explicit positive call against a positive truth: gate open.
    CsvReader in(tmp.file("out.csv"), kRewardBreakdownHeader);
    std::vector<std::string> f;
    REQUIRE(in.next(f));
    CHECK(f[1] == "1"); // row 1 gate open (sign match)
    REQUIRE(in.next(f));
    CHECK(f[1] == "1");
    CHECK(parse_double(f[2], "s_evt") == -0.5); // mismatched type
    REQUIRE(in.next(f));
    CHECK(f[1] == "1"); // neutral vs neutral: match
}
