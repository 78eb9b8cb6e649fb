#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "evq/labeling.hpp"

// Hierarchical-gated reward model. A prediction (car_hat, direction, strength,
// event type, optional response document) is scored against the realized
// (car, event type) truth:
//
//   - hard gate: direction score 1 / -lambda_dir / 0 for match / opposite /
//     neutral-mismatch; a negative score closes the gate and zeroes every
//     subordinate term,
//   - soft gate: event-type score with a multiplicative discount alpha on the
//     trading payoff when the predicted type is wrong or absent,
//   - trading reward: cost-adjusted payoff keyed to the predicted direction,
//     active only for strong predictions, discounted and clipped to [-rho, rho],
//   - strength regularizer: asymmetric penalties for false-strong and
//     false-weak calls,
//   - magnitude shaping: exp(-|car_hat - car| / sigma),
//   - process reward: required-section presence minus length and
//     self-questioning penalties, clipped to [0, 1].
//
// Scoring is a pure function of (prediction, truth, config); batch scoring is
// order-independent and safe to run concurrently.

namespace evq {

// Structured response document: section name -> character count.
struct ResponseDoc {
    std::map<std::string, long> sections;
    int question_count = 0;

    long total_chars() const {
        long total = 0;
        for (const auto& [name, chars] : sections) total += chars;
        return total;
    }
};

struct Prediction {
    std::optional<double> car_hat;
    std::optional<Direction> direction_hat;
    std::optional<Strength> strength_hat;
    EventType event_type_hat = EventType::absent;
    std::optional<ResponseDoc> response_doc;
};

struct RewardConfig {
    double lambda_dir = 2.0;  // opposite-direction penalty, > 1
    double lambda_evt = 0.5;  // wrong-event-type penalty, > 0
    double lambda_miss = 1.0; // missing-event-type penalty, > 0
    double alpha_discount = 0.5; // event-type soft-gate discount, in (0,1)
    double kappa = 0.003;     // transaction cost (return units)
    double rho = 0.05;        // symmetric clip bound on the PnL reward, > 0
    double sigma = 0.02;      // magnitude shaping tolerance, > 0
    double tau = 0.01;        // strength threshold on |CAR|, > 0

    double w_dir = 1.0;
    double w_evt = 0.3;
    double w_pnl = 2.0;
    double w_mag = 0.5;
    double w_proc = 0.1;
    double w_str = 0.3;

    double p_false_strong = 0.5; // predicted strong, truth weak
    double p_false_weak = 0.2;   // predicted weak, truth strong

    std::vector<std::string> required_sections = {"event_analysis", "market_impact", "decision"};
    long length_cap = 2000;

    void validate() const {
        require(lambda_dir > 1, "reward config: lambda_dir must be > 1");
        require(lambda_evt > 0, "reward config: lambda_evt must be > 0");
        require(lambda_miss > 0, "reward config: lambda_miss must be > 0");
        require(alpha_discount > 0 && alpha_discount < 1,
                "reward config: alpha_discount must be in (0,1)");
        require(kappa >= 0, "reward config: kappa must be >= 0");
        require(rho > 0, "reward config: rho must be > 0");
        require(sigma > 0, "reward config: sigma must be > 0");
        require(tau > 0, "reward config: tau must be > 0");
        for (double w : {w_dir, w_evt, w_pnl, w_mag, w_proc, w_str})
            require(w >= 0, "reward config: weights must be >= 0");
        require(p_false_strong >= 0 && p_false_weak >= 0,
                "reward config: strength penalties must be >= 0");
        require(length_cap > 0, "reward config: length_cap must be > 0");
    }
};

struct NormalizedPrediction {
    std::optional<double> car_hat;
    Direction direction = Direction::neutral;
    Strength strength = Strength::weak;
    EventType event_type = EventType::absent;
};

// Fills missing direction as sign(car_hat) and missing strength as
// |car_hat| > tau; explicit values are never overwritten. With no car_hat,
// a missing strength defaults to weak (no magnitude evidence for a trade).
inline NormalizedPrediction normalize_prediction(const Prediction& pred, const RewardConfig& cfg) {
    require(pred.car_hat.has_value() || pred.direction_hat.has_value(),
            "prediction has neither car_hat nor direction");
    if (pred.car_hat) require(std::isfinite(*pred.car_hat), "prediction car_hat is not finite");
    NormalizedPrediction norm;
    norm.car_hat = pred.car_hat;
    norm.direction = pred.direction_hat ? *pred.direction_hat : sign_direction(*pred.car_hat);
    if (pred.strength_hat)
        norm.strength = *pred.strength_hat;
    else
        norm.strength = (pred.car_hat && std::abs(*pred.car_hat) > cfg.tau) ? Strength::strong
                                                                            : Strength::weak;
    norm.event_type = pred.event_type_hat;
    return norm;
}

// 1 for a match, -lambda_dir for strictly opposite polarity, 0 for any other
// pairing (mismatches involving neutral).
inline double direction_score(Direction d_hat, Direction d, double lambda_dir) {
    if (d_hat == d) return 1.0;
    if ((d_hat == Direction::positive && d == Direction::negative) ||
        (d_hat == Direction::negative && d == Direction::positive))
        return -lambda_dir;
    return 0.0;
}

struct EventTypeScore {
    double s_evt;
    double m_evt;
};

inline EventTypeScore event_type_score(EventType e_hat, EventType e, const RewardConfig& cfg) {
    if (e_hat == e) return {1.0, 1.0};
    if (e_hat == EventType::absent) return {-cfg.lambda_miss, cfg.alpha_discount};
    return {-cfg.lambda_evt, cfg.alpha_discount};
}

// Cost-aware single-event payoff keyed to the predicted direction.
inline double trade_payoff(Direction d_hat, double car, double kappa) {
    require(std::isfinite(car), "trade_payoff: CAR is not finite");
    require(kappa >= 0, "trade_payoff: kappa must be >= 0");
    switch (d_hat) {
        case Direction::positive: return car - kappa;
        case Direction::negative: return -car - kappa;
        case Direction::neutral: return 0.0;
    }
    return 0.0;
}

// Zero unless the gate is open and the predicted strength is strong;
// otherwise the discounted payoff clipped to [-rho, rho].
inline double clipped_pnl_reward(double payoff, double m_evt, Strength s_hat, bool gate_open,
                                 double rho) {
    require(rho > 0, "clipped_pnl_reward: rho must be > 0");
    if (!gate_open || s_hat == Strength::weak) return 0.0;
    return std::clamp(m_evt * payoff, -rho, rho);
}

// 0 on a match; asymmetric penalties otherwise.
inline double strength_regularizer(Strength s_hat, Strength s, double p_false_strong,
                                   double p_false_weak) {
    require(p_false_strong >= 0 && p_false_weak >= 0,
            "strength_regularizer: penalties must be >= 0");
    if (s_hat == s) return 0.0;
    return s_hat == Strength::strong ? -p_false_strong : -p_false_weak;
}

// exp(-|car_hat - car| / sigma) in (0, 1] while the gate is open; zero when
// the gate is closed or no car_hat was produced (nothing to shape).
inline double magnitude_reward(std::optional<double> car_hat, double car, double sigma,
                               bool gate_open) {
    require(sigma > 0, "magnitude_reward: sigma must be > 0");
    if (!gate_open || !car_hat) return 0.0;
    return std::exp(-std::abs(*car_hat - car) / sigma);
}

// Section-presence score minus length and self-questioning penalties, clipped
// to [0, 1]. An absent document scores 0; an empty requirement list grants
// full presence credit.
inline double process_reward(const std::optional<ResponseDoc>& doc, bool gate_open,
                             const RewardConfig& cfg) {
    if (!gate_open || !doc) return 0.0;
    double presence = 1.0;
    if (!cfg.required_sections.empty()) {
        int present = 0;
        for (const auto& name : cfg.required_sections)
            if (doc->sections.count(name)) ++present;
        presence = static_cast<double>(present) / cfg.required_sections.size();
    }
    double length_ratio = static_cast<double>(doc->total_chars()) / cfg.length_cap;
    double score = presence - 0.1 * std::max(0.0, length_ratio - 1.0) - 0.05 * doc->question_count;
    return std::clamp(score, 0.0, 1.0);
}

struct RewardBreakdown {
    NormalizedPrediction used;
    Direction truth_direction = Direction::neutral;
    Strength truth_strength = Strength::weak;
    double s_dir = 0.0;
    bool gate_open = false; // g_dir
    double s_evt = 0.0;
    double m_evt = 1.0;
    double raw_pnl = 0.0; // payoff before discount and clip
    double r_pnl = 0.0;
    double r_mag = 0.0;
    double r_proc = 0.0;
    double r_str = 0.0;
    double total = 0.0;
    bool magnitude_skipped = false; // car_hat absent, nothing to shape
};

struct TruthRecord {
    double car = 0.0;
    EventType event_type = EventType::absent;
};

// Full hierarchy: R = w_dir*s_dir + g_dir * (w_evt*s_evt + w_pnl*r_pnl +
// w_mag*r_mag + w_proc*r_proc + w_str*r_str), with g_dir = 1(s_dir >= 0).
// Truth direction is sign(car); truth strength is |car| > tau.
inline RewardBreakdown compose_reward(const Prediction& pred, const TruthRecord& truth,
                                      const RewardConfig& cfg) {
    cfg.validate();
    require(std::isfinite(truth.car), "compose_reward: truth CAR is not finite");
    require(truth.event_type != EventType::absent, "compose_reward: truth event type is absent");

    RewardBreakdown b;
    b.used = normalize_prediction(pred, cfg);
    b.truth_direction = sign_direction(truth.car);
    b.truth_strength = std::abs(truth.car) > cfg.tau ? Strength::strong : Strength::weak;

    b.s_dir = direction_score(b.used.direction, b.truth_direction, cfg.lambda_dir);
    b.gate_open = b.s_dir >= 0;

    auto evt = event_type_score(b.used.event_type, truth.event_type, cfg);
    b.s_evt = evt.s_evt;
    b.m_evt = evt.m_evt;

    b.raw_pnl = trade_payoff(b.used.direction, truth.car, cfg.kappa);
    b.r_pnl = clipped_pnl_reward(b.raw_pnl, b.m_evt, b.used.strength, b.gate_open, cfg.rho);
    b.r_mag = magnitude_reward(b.used.car_hat, truth.car, cfg.sigma, b.gate_open);
    b.magnitude_skipped = b.gate_open && !b.used.car_hat;
    b.r_proc = process_reward(pred.response_doc, b.gate_open, cfg);
    b.r_str = b.gate_open ? strength_regularizer(b.used.strength, b.truth_strength,
                                                 cfg.p_false_strong, cfg.p_false_weak)
                          : 0.0;

    b.total = cfg.w_dir * b.s_dir;
    if (b.gate_open)
        b.total += cfg.w_evt * b.s_evt + cfg.w_pnl * b.r_pnl + cfg.w_mag * b.r_mag +
                   cfg.w_proc * b.r_proc + cfg.w_str * b.r_str;
    return b;
}

// ---------------------------------------------------------------------------
// Line-delimited scoring interface (the `reward` subcommand)
// ---------------------------------------------------------------------------
//
// Input columns: car_hat,direction_hat,strength_hat,event_type_hat,car,
//                event_type,doc_sections,doc_questions
// Empty fields mean "absent". doc_sections encodes "name:chars|name:chars".

inline const std::vector<std::string> kRewardPairsHeader = {
    "car_hat", "direction_hat", "strength_hat", "event_type_hat",
    "car",     "event_type",    "doc_sections", "doc_questions"};

inline const std::vector<std::string> kRewardBreakdownHeader = {
    "s_dir", "g_dir", "s_evt", "m_evt", "raw_pnl", "r_pnl", "r_mag", "r_proc", "r_str", "total"};

struct RewardPair {
    Prediction prediction;
    TruthRecord truth;
};

inline RewardPair parse_reward_pair(const std::vector<std::string>& f, int line) {
    RewardPair pair;
    if (!f[0].empty()) pair.prediction.car_hat = parse_double(f[0], "car_hat", line);
    if (!f[1].empty()) pair.prediction.direction_hat = parse_direction(f[1]);
    if (!f[2].empty()) pair.prediction.strength_hat = parse_strength(f[2]);
    pair.prediction.event_type_hat = parse_event_type_or_absent(f[3]);
    pair.truth.car = parse_double(f[4], "car", line);
    pair.truth.event_type = parse_event_type(f[5]);
    if (!f[6].empty() || !f[7].empty()) {
        ResponseDoc doc;
        if (!f[6].empty()) {
            for (const auto& part : split_fields(f[6], '|')) {
                auto sep = part.find(':');
                if (sep == std::string::npos)
                    fail("line ", line, ": bad doc_sections entry '", part, "'");
                doc.sections[part.substr(0, sep)] =
                    parse_long(part.substr(sep + 1), "section chars", line);
            }
        }
        if (!f[7].empty())
            doc.question_count = static_cast<int>(parse_long(f[7], "doc_questions", line));
        pair.prediction.response_doc = std::move(doc);
    }
    return pair;
}

inline std::vector<std::string> breakdown_row(const RewardBreakdown& b) {
    return {format_double(b.s_dir),   b.gate_open ? "1" : "0",  format_double(b.s_evt),
            format_double(b.m_evt),   format_double(b.raw_pnl), format_double(b.r_pnl),
            format_double(b.r_mag),   format_double(b.r_proc),  format_double(b.r_str),
            format_double(b.total)};
}

inline void score_reward_file(const std::string& pairs_path, const std::string& out_path,
                              const RewardConfig& cfg) {
    CsvReader in(pairs_path, kRewardPairsHeader);
    CsvWriter out(out_path, kRewardBreakdownHeader);
    std::vector<std::string> f;
    while (in.next(f)) {
        RewardPair pair = parse_reward_pair(f, in.line());
        out.row(breakdown_row(compose_reward(pair.prediction, pair.truth, cfg)));
    }
}

} // namespace evq
