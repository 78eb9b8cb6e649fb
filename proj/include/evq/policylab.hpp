#pragma once

#include <array>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "evq/hgrm.hpp"

// Reward-guided optimization on a toy parametric policy: group sampling,
// std-normalized group-relative advantages, a KL penalty against a frozen
// reference snapshot, and gradient-norm clipping. The policy has four
// independent heads over an event feature vector (event-type one-hot plus a
// noisy magnitude cue, bias appended):
//
//   event type  ~ softmax(W_e phi)      direction ~ softmax(W_d phi)
//   strength    ~ Bernoulli(sigmoid(w_s phi))
//   car_hat     ~ Normal(w_c phi, car_std^2)
//
// Log-probabilities, gradients, and head KLs are closed-form, so the analytic
// gradient can be checked against central finite differences. Rewards come
// from hgrm::compose_reward, the same code path the rest of the toolkit uses.

namespace evq {

inline constexpr int kToyFeatureDim = kNumEventTypes + 1; // one-hot + magnitude cue

struct ToyEvent {
    std::array<double, kToyFeatureDim> features{};
    double car = 0.0;
    EventType type = EventType::risk_warning;
};

struct ToyEnvConfig {
    int train_events = 512;
    int eval_events = 256;
    uint64_t seed = 7;
    double car_noise = 0.0; // sampled around the per-type base effect
    double cue_noise = 0.0; // noise on the magnitude cue (CAR units, pre-scaling)
    double cue_scale = 50.0; // cue feature = cue_scale * (car + noise): tolerance units
    std::array<double, kNumEventTypes> type_car = {0.03,  -0.02, 0.015, -0.025, 0.005,
                                                   -0.004, 0.02,  -0.03, 0.008, -0.015};
};

struct ToyEnvironment {
    ToyEnvConfig config;
    std::vector<ToyEvent> train;
    std::vector<ToyEvent> eval;

    static ToyEnvironment generate(const ToyEnvConfig& cfg) {
        require(cfg.train_events > 0 && cfg.eval_events > 0, "toy env: counts must be positive");
        ToyEnvironment env;
        env.config = cfg;
        std::mt19937_64 rng(cfg.seed);
        std::normal_distribution<double> gauss(0.0, 1.0);
        std::uniform_int_distribution<int> pick(0, kNumEventTypes - 1);
        auto make = [&]() {
            ToyEvent ev;
            int k = pick(rng);
            ev.type = static_cast<EventType>(k);
            ev.car = cfg.type_car[k] + cfg.car_noise * gauss(rng);
            ev.features[k] = 1.0;
            ev.features[kNumEventTypes] = cfg.cue_scale * (ev.car + cfg.cue_noise * gauss(rng));
            return ev;
        };
        for (int i = 0; i < cfg.train_events; ++i) env.train.push_back(make());
        for (int i = 0; i < cfg.eval_events; ++i) env.eval.push_back(make());
        return env;
    }
};

struct ToyAction {
    int event_type = 0; // 0..9
    int direction = 0;  // 0 positive, 1 negative, 2 neutral
    int strong = 0;     // 1 strong, 0 weak
    double car = 0.0;
};

class ToyPolicy {
public:
    static constexpr int kInputDim = kToyFeatureDim + 1; // bias appended
    static constexpr int kEventOffset = 0;
    static constexpr int kDirOffset = kNumEventTypes * kInputDim;
    static constexpr int kStrengthOffset = kDirOffset + 3 * kInputDim;
    static constexpr int kCarOffset = kStrengthOffset + kInputDim;
    static constexpr int kParamCount = kCarOffset + kInputDim;

    ToyPolicy() : params_(kParamCount, 0.0), reference_(params_) {}

    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }
    const std::vector<double>& reference() const { return reference_; }
    void snapshot_reference() { reference_ = params_; }

    double car_std() const { return car_std_; }
    void set_car_std(double s) {
        require(s > 0, "toy policy: car_std must be > 0");
        car_std_ = s;
    }

    static std::array<double, kInputDim> augment(const std::array<double, kToyFeatureDim>& f) {
        std::array<double, kInputDim> phi{};
        for (int j = 0; j < kToyFeatureDim; ++j) phi[j] = f[j];
        phi[kToyFeatureDim] = 1.0;
        return phi;
    }

    std::array<double, kNumEventTypes> event_probs(const std::array<double, kToyFeatureDim>& f) const {
        return softmax<kNumEventTypes>(params_, kEventOffset, augment(f));
    }

    std::array<double, 3> dir_probs(const std::array<double, kToyFeatureDim>& f) const {
        return softmax<3>(params_, kDirOffset, augment(f));
    }

    double strong_prob(const std::array<double, kToyFeatureDim>& f) const {
        return sigmoid(dot(params_, kStrengthOffset, augment(f)));
    }

    // The car head's mean is parameterized in car_std units, keeping its
    // score-function gradients on the same scale as the logit heads.
    double car_mean(const std::array<double, kToyFeatureDim>& f) const {
        return car_std_ * dot(params_, kCarOffset, augment(f));
    }

    ToyAction sample(const std::array<double, kToyFeatureDim>& f, std::mt19937_64& rng) const {
        auto phi = augment(f);
        ToyAction a;
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        a.event_type = sample_categorical(softmax<kNumEventTypes>(params_, kEventOffset, phi), unif(rng));
        a.direction = sample_categorical(softmax<3>(params_, kDirOffset, phi), unif(rng));
        a.strong = unif(rng) < sigmoid(dot(params_, kStrengthOffset, phi)) ? 1 : 0;
        std::normal_distribution<double> gauss(car_std_ * dot(params_, kCarOffset, phi), car_std_);
        a.car = gauss(rng);
        return a;
    }

    ToyAction greedy(const std::array<double, kToyFeatureDim>& f) const {
        auto phi = augment(f);
        ToyAction a;
        a.event_type = argmax(softmax<kNumEventTypes>(params_, kEventOffset, phi));
        a.direction = argmax(softmax<3>(params_, kDirOffset, phi));
        a.strong = sigmoid(dot(params_, kStrengthOffset, phi)) >= 0.5 ? 1 : 0;
        a.car = car_std_ * dot(params_, kCarOffset, phi);
        return a;
    }

    double log_prob(const std::array<double, kToyFeatureDim>& f, const ToyAction& a) const {
        auto phi = augment(f);
        auto pe = softmax<kNumEventTypes>(params_, kEventOffset, phi);
        auto pd = softmax<3>(params_, kDirOffset, phi);
        double ps = sigmoid(dot(params_, kStrengthOffset, phi));
        double mu = car_std_ * dot(params_, kCarOffset, phi);
        double lp = std::log(clamp_prob(pe[a.event_type])) + std::log(clamp_prob(pd[a.direction]));
        lp += std::log(clamp_prob(a.strong ? ps : 1.0 - ps));
        double z = (a.car - mu) / car_std_;
        lp += -0.5 * z * z - std::log(car_std_) - 0.5 * std::log(2.0 * M_PI);
        return lp;
    }

    // grad += scale * d log pi(a | f) / d params
    void accumulate_grad_log_prob(const std::array<double, kToyFeatureDim>& f, const ToyAction& a,
                                  double scale, std::vector<double>& grad) const {
        auto phi = augment(f);
        auto pe = softmax<kNumEventTypes>(params_, kEventOffset, phi);
        for (int k = 0; k < kNumEventTypes; ++k) {
            double coef = scale * ((k == a.event_type ? 1.0 : 0.0) - pe[k]);
            axpy(grad, kEventOffset + k * kInputDim, coef, phi);
        }
        auto pd = softmax<3>(params_, kDirOffset, phi);
        for (int k = 0; k < 3; ++k) {
            double coef = scale * ((k == a.direction ? 1.0 : 0.0) - pd[k]);
            axpy(grad, kDirOffset + k * kInputDim, coef, phi);
        }
        double ps = sigmoid(dot(params_, kStrengthOffset, phi));
        axpy(grad, kStrengthOffset, scale * (a.strong - ps), phi);
        double mu = car_std_ * dot(params_, kCarOffset, phi);
        axpy(grad, kCarOffset, scale * (a.car - mu) / car_std_, phi);
    }

    // KL(pi_theta(.|f) || pi_ref(.|f)), summed over the four heads.
    double kl_to_reference(const std::array<double, kToyFeatureDim>& f) const {
        auto phi = augment(f);
        double kl = categorical_kl(softmax<kNumEventTypes>(params_, kEventOffset, phi),
                                   softmax<kNumEventTypes>(reference_, kEventOffset, phi));
        kl += categorical_kl(softmax<3>(params_, kDirOffset, phi),
                             softmax<3>(reference_, kDirOffset, phi));
        double p = clamp_prob(sigmoid(dot(params_, kStrengthOffset, phi)));
        double q = clamp_prob(sigmoid(dot(reference_, kStrengthOffset, phi)));
        kl += p * std::log(p / q) + (1 - p) * std::log((1 - p) / (1 - q));
        double dmu = car_std_ * (dot(params_, kCarOffset, phi) - dot(reference_, kCarOffset, phi));
        kl += dmu * dmu / (2.0 * car_std_ * car_std_);
        return kl;
    }

    // grad += scale * d KL / d params
    void accumulate_kl_grad(const std::array<double, kToyFeatureDim>& f, double scale,
                            std::vector<double>& grad) const {
        auto phi = augment(f);
        accumulate_categorical_kl_grad<kNumEventTypes>(kEventOffset, phi, scale, grad);
        accumulate_categorical_kl_grad<3>(kDirOffset, phi, scale, grad);
        double p = clamp_prob(sigmoid(dot(params_, kStrengthOffset, phi)));
        double q = clamp_prob(sigmoid(dot(reference_, kStrengthOffset, phi)));
        double dkl_dz = p * (1 - p) * (std::log(p / q) - std::log((1 - p) / (1 - q)));
        axpy(grad, kStrengthOffset, scale * dkl_dz, phi);
        double dmu = car_std_ * (dot(params_, kCarOffset, phi) - dot(reference_, kCarOffset, phi));
        axpy(grad, kCarOffset, scale * dmu / car_std_, phi);
    }

    Prediction to_prediction(const ToyAction& a) const {
        Prediction pred;
        pred.car_hat = a.car;
        pred.direction_hat = static_cast<Direction>(a.direction);
        pred.strength_hat = a.strong ? Strength::strong : Strength::weak;
        pred.event_type_hat = static_cast<EventType>(a.event_type);
        return pred;
    }

    static const char* head_name(size_t param_index) {
        if (param_index < static_cast<size_t>(kDirOffset)) return "event-type";
        if (param_index < static_cast<size_t>(kStrengthOffset)) return "direction";
        if (param_index < static_cast<size_t>(kCarOffset)) return "strength";
        return "car";
    }

private:
    static double clamp_prob(double p) { return std::clamp(p, 1e-12, 1.0 - 1e-12); }

    static double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

    static double dot(const std::vector<double>& params, int offset,
                      const std::array<double, kInputDim>& phi) {
        double acc = 0;
        for (int j = 0; j < kInputDim; ++j) acc += params[offset + j] * phi[j];
        return acc;
    }

    static void axpy(std::vector<double>& grad, int offset, double coef,
                     const std::array<double, kInputDim>& phi) {
        for (int j = 0; j < kInputDim; ++j) grad[offset + j] += coef * phi[j];
    }

    template <size_t K>
    static std::array<double, K> softmax(const std::vector<double>& params, int offset,
                                         const std::array<double, kInputDim>& phi) {
        std::array<double, K> logits{};
        for (size_t k = 0; k < K; ++k) {
            double acc = 0;
            for (int j = 0; j < kInputDim; ++j) acc += params[offset + k * kInputDim + j] * phi[j];
            logits[k] = acc;
        }
        double mx = logits[0];
        for (double v : logits) mx = std::max(mx, v);
        double sum = 0;
        for (size_t k = 0; k < K; ++k) {
            logits[k] = std::exp(logits[k] - mx);
            sum += logits[k];
        }
        for (size_t k = 0; k < K; ++k) logits[k] /= sum;
        return logits;
    }

    template <size_t K>
    static int sample_categorical(const std::array<double, K>& probs, double u) {
        double acc = 0;
        for (size_t k = 0; k < K; ++k) {
            acc += probs[k];
            if (u < acc) return k;
        }
        return K - 1;
    }

    template <size_t K>
    static int argmax(const std::array<double, K>& probs) {
        int best = 0;
        for (size_t k = 1; k < K; ++k)
            if (probs[k] > probs[best]) best = k;
        return best;
    }

    template <size_t K>
    static double categorical_kl(const std::array<double, K>& p, const std::array<double, K>& q) {
        double kl = 0;
        for (size_t k = 0; k < K; ++k) {
            double pk = clamp_prob(p[k]), qk = clamp_prob(q[k]);
            kl += pk * std::log(pk / qk);
        }
        return kl;
    }

    // dKL/dlogit_k = p_k * (log(p_k/q_k) - KL)
    template <size_t K>
    void accumulate_categorical_kl_grad(int offset, const std::array<double, kInputDim>& phi,
                                        double scale, std::vector<double>& grad) const {
        auto p = softmax<K>(params_, offset, phi);
        auto q = softmax<K>(reference_, offset, phi);
        double kl = categorical_kl<K>(p, q);
        for (size_t k = 0; k < K; ++k) {
            double coef = p[k] * (std::log(clamp_prob(p[k]) / clamp_prob(q[k])) - kl);
            axpy(grad, offset + k * kInputDim, scale * coef, phi);
        }
    }

    std::vector<double> params_;
    std::vector<double> reference_;
    double car_std_ = 0.02;
};

struct GroupRollout {
    std::array<double, kToyFeatureDim> features{};
    TruthRecord truth;
    std::vector<ToyAction> actions;
    std::vector<Prediction> predictions;
    std::vector<RewardBreakdown> rewards;
    std::vector<double> log_probs;

    std::vector<double> totals() const {
        std::vector<double> out;
        out.reserve(rewards.size());
        for (const auto& r : rewards) out.push_back(r.total);
        return out;
    }
};

// G independent samples for one event, scored with hgrm::compose_reward.
// Deterministic under the seed.
inline GroupRollout sample_group(const ToyPolicy& policy, const ToyEvent& event, int group_size,
                                 uint64_t seed, const RewardConfig& reward_cfg) {
    require(group_size >= 2, "sample_group: group size must be >= 2");
    GroupRollout roll;
    roll.features = event.features;
    roll.truth = TruthRecord{event.car, event.type};
    std::mt19937_64 rng(seed);
    for (int g = 0; g < group_size; ++g) {
        ToyAction a = policy.sample(event.features, rng);
        Prediction pred = policy.to_prediction(a);
        roll.actions.push_back(a);
        roll.rewards.push_back(compose_reward(pred, roll.truth, reward_cfg));
        roll.predictions.push_back(std::move(pred));
        roll.log_probs.push_back(policy.log_prob(event.features, a));
    }
    return roll;
}

// Center within the group; optionally divide by max(population std, floor).
// Advantages always sum to zero.
inline std::vector<double> group_advantages(const std::vector<double>& rewards,
                                            bool normalize_by_std, double std_floor) {
    require(rewards.size() >= 2, "group_advantages: need at least 2 rewards");
    require(std_floor > 0, "group_advantages: std floor must be > 0");
    const size_t n = rewards.size();
    double mean = 0;
    for (double r : rewards) mean += r;
    mean /= n;
    std::vector<double> adv(n);
    for (size_t i = 0; i < n; ++i) adv[i] = rewards[i] - mean;
    if (normalize_by_std) {
        double var = 0;
        for (double a : adv) var += a * a;
        double denom = std::max(std::sqrt(var / n), std_floor);
        for (double& a : adv) a /= denom;
    }
    return adv;
}

// Surrogate objective the step ascends: mean over samples of advantage *
// log-prob, minus kl_coeff times the mean per-event KL to the reference.
// Advantages are treated as constants.
inline double pg_objective(const ToyPolicy& policy, const std::vector<GroupRollout>& rollouts,
                           const std::vector<std::vector<double>>& advantages, double kl_coeff) {
    require(rollouts.size() == advantages.size(), "pg_objective: rollout/advantage mismatch");
    double obj = 0;
    size_t n_samples = 0;
    for (size_t r = 0; r < rollouts.size(); ++r) {
        require(advantages[r].size() == rollouts[r].actions.size(),
                "pg_objective: advantage size mismatch");
        for (size_t i = 0; i < rollouts[r].actions.size(); ++i)
            obj += advantages[r][i] * policy.log_prob(rollouts[r].features, rollouts[r].actions[i]);
        n_samples += rollouts[r].actions.size();
    }
    obj /= std::max<size_t>(n_samples, 1);
    double kl = 0;
    for (const auto& roll : rollouts) kl += policy.kl_to_reference(roll.features);
    kl /= std::max<size_t>(rollouts.size(), 1);
    return obj - kl_coeff * kl;
}

inline void compute_gradient(const ToyPolicy& policy, const std::vector<GroupRollout>& rollouts,
                             const std::vector<std::vector<double>>& advantages, double kl_coeff,
                             std::vector<double>& grad) {
    grad.assign(ToyPolicy::kParamCount, 0.0);
    size_t n_samples = 0;
    for (const auto& roll : rollouts) n_samples += roll.actions.size();
    const double inv_n = 1.0 / std::max<size_t>(n_samples, 1);
    for (size_t r = 0; r < rollouts.size(); ++r)
        for (size_t i = 0; i < rollouts[r].actions.size(); ++i)
            policy.accumulate_grad_log_prob(rollouts[r].features, rollouts[r].actions[i],
                                            advantages[r][i] * inv_n, grad);
    const double kl_scale = -kl_coeff / std::max<size_t>(rollouts.size(), 1);
    for (const auto& roll : rollouts) policy.accumulate_kl_grad(roll.features, kl_scale, grad);
}

struct StepConfig {
    double learning_rate = 0.3;
    double kl_coeff = 0.05;
    double max_grad_norm = 5.0;
};

struct StepDiagnostics {
    double grad_norm_pre = 0.0;
    double grad_norm_post = 0.0;
    double mean_kl = 0.0;
};

// One ascent step on the surrogate, with global gradient-norm clipping.
inline StepDiagnostics policy_gradient_step(ToyPolicy& policy,
                                            const std::vector<GroupRollout>& rollouts,
                                            const std::vector<std::vector<double>>& advantages,
                                            const StepConfig& cfg) {
    require(!rollouts.empty(), "policy_gradient_step: no rollouts");
    require(cfg.max_grad_norm > 0, "policy_gradient_step: max grad norm must be > 0");
    std::vector<double> grad;
    compute_gradient(policy, rollouts, advantages, cfg.kl_coeff, grad);
    for (size_t j = 0; j < grad.size(); ++j)
        if (!std::isfinite(grad[j]))
            fail("non-finite gradient in ", ToyPolicy::head_name(j), " head");
    StepDiagnostics diag;
    double norm2 = 0;
    for (double g : grad) norm2 += g * g;
    diag.grad_norm_pre = std::sqrt(norm2);
    double scale = 1.0;
    if (diag.grad_norm_pre > cfg.max_grad_norm) scale = cfg.max_grad_norm / diag.grad_norm_pre;
    diag.grad_norm_post = diag.grad_norm_pre * scale;
    auto& params = policy.params();
    for (size_t j = 0; j < params.size(); ++j) params[j] += cfg.learning_rate * scale * grad[j];
    double kl = 0;
    for (const auto& roll : rollouts) kl += policy.kl_to_reference(roll.features);
    diag.mean_kl = kl / rollouts.size();
    return diag;
}

struct TrainSchedule {
    int iterations = 500;
    int group_size = 8;
    int events_per_iter = 32;
    StepConfig step;
    bool normalize_by_std = true;
    double std_floor = 1e-6;
    uint64_t seed = 13;
    RewardConfig reward;
};

struct TraceRow {
    int iteration = 0;
    double mean_reward = 0.0;
    double da = 0.0;
    double eta = 0.0;
    double kl = 0.0;
};

struct EvalResult {
    double da = 0.0;
    double eta = 0.0;
};

// Greedy decoding accuracy on a held-out set: direction vs sign(car) and
// event type vs truth.
inline EvalResult evaluate_policy(const ToyPolicy& policy, const std::vector<ToyEvent>& events) {
    require(!events.empty(), "evaluate_policy: empty event set");
    int dir_hits = 0, type_hits = 0;
    for (const auto& ev : events) {
        ToyAction a = policy.greedy(ev.features);
        if (static_cast<Direction>(a.direction) == sign_direction(ev.car)) ++dir_hits;
        if (static_cast<EventType>(a.event_type) == ev.type) ++type_hits;
    }
    return {static_cast<double>(dir_hits) / events.size(),
            static_cast<double>(type_hits) / events.size()};
}

inline std::vector<TraceRow> train(const ToyEnvironment& env, ToyPolicy& policy,
                                   const TrainSchedule& schedule) {
    require(schedule.iterations > 0 && schedule.events_per_iter > 0,
            "train: schedule must define iterations and events per iteration");
    schedule.reward.validate();
    policy.snapshot_reference();
    std::mt19937_64 master(schedule.seed);
    std::uniform_int_distribution<size_t> pick(0, env.train.size() - 1);
    std::vector<TraceRow> trace;
    trace.reserve(schedule.iterations);
    for (int iter = 0; iter < schedule.iterations; ++iter) {
        std::vector<GroupRollout> rollouts;
        std::vector<std::vector<double>> advantages;
        double reward_sum = 0;
        size_t n_samples = 0;
        for (int b = 0; b < schedule.events_per_iter; ++b) {
            const ToyEvent& ev = env.train[pick(master)];
            uint64_t rollout_seed = master();
            rollouts.push_back(
                sample_group(policy, ev, schedule.group_size, rollout_seed, schedule.reward));
            auto totals = rollouts.back().totals();
            for (double t : totals) reward_sum += t;
            n_samples += totals.size();
            advantages.push_back(
                group_advantages(totals, schedule.normalize_by_std, schedule.std_floor));
        }
        StepDiagnostics diag = policy_gradient_step(policy, rollouts, advantages, schedule.step);
        EvalResult eval = evaluate_policy(policy, env.eval);
        trace.push_back({iter, reward_sum / n_samples, eval.da, eval.eta, diag.mean_kl});
    }
    return trace;
}

inline const std::vector<std::string> kTraceHeader = {"iteration", "mean_reward", "da", "eta",
                                                      "kl"};

inline void write_trace(const std::vector<TraceRow>& trace, const std::string& path) {
    CsvWriter out(path, kTraceHeader);
    for (const auto& row : trace)
        out.row({std::to_string(row.iteration), format_double(row.mean_reward),
                 format_double(row.da), format_double(row.eta), format_double(row.kl)});
}

} // namespace evq
