// evq — event-driven trading research CLI.
//
// Subcommands: synth, compute-car, label, stats, reward, train-toy, backtest,
// sensitivity. Every subcommand accepts a config file whose keys mirror its
// flags; command-line flags override file values, and directory-producing
// commands echo the effective configuration into the output directory.

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "evq/pipeline.hpp"

namespace {

using namespace evq;

void echo_config(CLI::App* sub, const std::string& out_dir) {
    std::ofstream out(path_join(out_dir, "config_echo.ini"), std::ios::binary);
    out << sub->config_to_str(true, false);
}

std::vector<SynthEventSpec> parse_event_specs(const std::vector<std::string>& entries) {
    std::vector<SynthEventSpec> specs;
    for (const auto& entry : entries) {
        auto parts = split_fields(entry, ':');
        require(parts.size() == 3 || parts.size() == 4, "bad --event entry '", entry,
                "' (expected type:magnitude:count[:alt])");
        SynthEventSpec spec;
        spec.type = parse_event_type(parts[0]);
        spec.magnitude = parse_double(parts[1], "event magnitude");
        spec.count = static_cast<int>(parse_long(parts[2], "event count"));
        if (parts.size() == 4) {
            require(parts[3] == "alt", "bad --event entry '", entry, "': trailing '", parts[3],
                    "' (only 'alt' is recognized)");
            spec.alternate_sign = true;
        }
        specs.push_back(spec);
    }
    return specs;
}

double parse_ratio(const std::string& s) {
    if (s == "inf") return std::numeric_limits<double>::infinity();
    return parse_double(s, "max-position-ratio");
}

struct WindowFlags {
    WindowSpec spec;

    void attach(CLI::App* sub) {
        sub->add_option("--est-window", spec.estimation_days, "Estimation window length (trading days)")
            ->capture_default_str();
        sub->add_option("--lag", spec.lag_days, "Gap between estimation end and event window start")
            ->capture_default_str();
        sub->add_option("--window-start", spec.window_start, "Event window start offset vs signal day")
            ->capture_default_str();
        sub->add_option("--window-end", spec.window_end, "Event window end offset vs signal day")
            ->capture_default_str();
        sub->add_option("--min-obs", spec.min_observations, "Minimum estimation observations")
            ->capture_default_str();
        sub->add_option("--max-missing-fraction", spec.max_missing_fraction,
                        "Skip events with more missing window days than this share")
            ->capture_default_str();
    }
};

struct RewardFlags {
    RewardConfig cfg;
    std::string sections = "event_analysis,market_impact,decision";

    void attach(CLI::App* sub) {
        sub->add_option("--lambda-dir", cfg.lambda_dir, "Opposite-direction penalty")->capture_default_str();
        sub->add_option("--lambda-evt", cfg.lambda_evt, "Wrong-event-type penalty")->capture_default_str();
        sub->add_option("--lambda-miss", cfg.lambda_miss, "Missing-event-type penalty")->capture_default_str();
        sub->add_option("--alpha", cfg.alpha_discount, "Event-type soft-gate discount")->capture_default_str();
        sub->add_option("--kappa", cfg.kappa, "Transaction cost (return units)")->capture_default_str();
        sub->add_option("--rho", cfg.rho, "Symmetric PnL clip bound")->capture_default_str();
        sub->add_option("--sigma", cfg.sigma, "Magnitude shaping tolerance")->capture_default_str();
        sub->add_option("--tau", cfg.tau, "Strength threshold on |CAR|")->capture_default_str();
        sub->add_option("--w-dir", cfg.w_dir, "Direction weight")->capture_default_str();
        sub->add_option("--w-evt", cfg.w_evt, "Event-type weight")->capture_default_str();
        sub->add_option("--w-pnl", cfg.w_pnl, "PnL weight")->capture_default_str();
        sub->add_option("--w-mag", cfg.w_mag, "Magnitude weight")->capture_default_str();
        sub->add_option("--w-proc", cfg.w_proc, "Process weight")->capture_default_str();
        sub->add_option("--w-str", cfg.w_str, "Strength regularizer weight")->capture_default_str();
        sub->add_option("--p-false-strong", cfg.p_false_strong, "False-strong penalty")->capture_default_str();
        sub->add_option("--p-false-weak", cfg.p_false_weak, "False-weak penalty")->capture_default_str();
        sub->add_option("--length-cap", cfg.length_cap, "Response length cap (chars)")->capture_default_str();
        sub->add_option("--required-sections", sections, "Comma-separated required section names")
            ->capture_default_str();
    }

    RewardConfig resolve() const {
        RewardConfig out = cfg;
        out.required_sections.clear();
        if (!sections.empty())
            for (auto& name : split_fields(sections, ','))
                if (!name.empty()) out.required_sections.push_back(name);
        out.validate();
        return out;
    }
};

struct BacktestFlags {
    std::string signals_path, prices_path, indices_path, dataset_path;
    std::string ratio = "inf";
    std::string weight_mode = "type";
    std::string start_date, end_date;
    BacktestConfig cfg;

    void attach(CLI::App* sub) {
        sub->add_option("--signals", signals_path, "Signal feed file")->required();
        sub->add_option("--prices", prices_path, "Prices file")->required();
        sub->add_option("--events", dataset_path, "Labeled dataset file (truth records)")->required();
        sub->add_option("--indices", indices_path, "Benchmark index file (optional; calendar source)");
        sub->add_option("--holding", cfg.holding_days, "Holding period H (trading days)")
            ->capture_default_str();
        sub->add_option("--max-position-ratio", ratio, "Open-notional cap as multiple of NAV (or 'inf')")
            ->capture_default_str();
        sub->add_option("--cost", cfg.cost, "Transaction cost per side on notional")->capture_default_str();
        sub->add_option("--budget-fraction", cfg.budget_fraction, "Daily budget as fraction of NAV")
            ->capture_default_str();
        sub->add_option("--weight-mode", weight_mode, "Signal aggregation: type or equal")
            ->check(CLI::IsMember({"type", "equal"}))
            ->capture_default_str();
        sub->add_option("--weight-relearn-every", cfg.weight_relearn_every,
                        "Weight re-estimation cadence (trading days)")
            ->capture_default_str();
        sub->add_option("--weight-window", cfg.weight_window, "Rolling window for weight estimation")
            ->capture_default_str();
        sub->add_option("--car-window-end", cfg.car_window_end_offset,
                        "CAR window end offset used for record eligibility")
            ->capture_default_str();
        sub->add_option("--initial-capital", cfg.initial_capital, "Starting cash")->capture_default_str();
        sub->add_flag("--no-leverage", cfg.no_leverage, "Skip entries that would drive cash negative");
        sub->add_option("--start-date", start_date, "First backtest day (default: calendar start)");
        sub->add_option("--end-date", end_date, "Last backtest day (default: calendar end)");
    }

    struct Loaded {
        PriceTable prices;
        std::vector<Signal> signals;
        std::vector<LabeledEvent> records;
        BacktestConfig cfg;
    };

    Loaded load() const {
        PriceTable prices = indices_path.empty() ? load_prices_only(prices_path)
                                                 : load_price_table(prices_path, indices_path);
        BacktestConfig out = cfg;
        out.max_position_ratio = parse_ratio(ratio);
        out.weight_mode =
            weight_mode == "equal" ? WeightMode::equal_weighted : WeightMode::type_weighted;
        const auto& cal = prices.calendar();
        if (!start_date.empty()) {
            auto idx = cal.index_of_date(start_date);
            require(idx.has_value(), "--start-date ", start_date, " is not a trading day");
            out.start_day = *idx;
        }
        if (!end_date.empty()) {
            auto idx = cal.index_of_date(end_date);
            require(idx.has_value(), "--end-date ", end_date, " is not a trading day");
            out.end_day = *idx;
        }
        return Loaded{std::move(prices), load_signals(signals_path, prices.calendar()),
                      read_dataset(dataset_path), out};
    }
};

void write_notes(const std::vector<std::string>& notes, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    for (const auto& n : notes) out << n << '\n';
}

int run(int argc, char** argv) {
    CLI::App app{"event-driven trading research toolkit"};
    app.require_subcommand(1);

    // ---- synth ----
    auto* synth = app.add_subcommand("synth", "Generate a synthetic universe with planted truth");
    SynthSpec synth_spec;
    std::string synth_out;
    std::string synth_profile = "0.2,0.2,0.3,0.3";
    std::vector<std::string> synth_events;
    double synth_tau = 0.01;
    synth->set_config("--spec", "", "Config file with synth parameters");
    synth->allow_config_extras(false);
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth->add_option("--seed", synth_spec.seed, "RNG seed")->capture_default_str();
    synth->add_option("--stocks", synth_spec.n_stocks, "Universe size")->capture_default_str();
    synth->add_option("--days", synth_spec.n_days, "Trading day count")->capture_default_str();
    synth->add_option("--noise", synth_spec.noise_scale, "Idiosyncratic return std")->capture_default_str();
    synth->add_option("--benchmark-vol", synth_spec.benchmark_vol, "Benchmark return std")
        ->capture_default_str();
    synth->add_option("--benchmark-drift", synth_spec.benchmark_drift, "Benchmark mean return")
        ->capture_default_str();
    synth->add_option("--alpha-base", synth_spec.alpha_base, "Per-stock alpha base")->capture_default_str();
    synth->add_option("--alpha-jitter", synth_spec.alpha_jitter, "Per-stock alpha spread")
        ->capture_default_str();
    synth->add_option("--beta-base", synth_spec.beta_base, "Per-stock beta base")->capture_default_str();
    synth->add_option("--beta-jitter", synth_spec.beta_jitter, "Per-stock beta spread")
        ->capture_default_str();
    synth->add_option("--industries", synth_spec.n_industries, "Industry count")->capture_default_str();
    synth->add_option("--premia-scale", synth_spec.premia_scale, "Daily factor premia std")
        ->capture_default_str();
    synth->add_option("--start-date", synth_spec.start_date, "First calendar date")->capture_default_str();
    synth->add_option("--base-price", synth_spec.base_price, "Base price level")->capture_default_str();
    synth->add_option("--trailing-margin", synth_spec.trailing_margin,
                      "Trading days kept free after the last event window")
        ->capture_default_str();
    synth->add_option("--profile", synth_profile, "Comma-separated per-window-day effect fractions")
        ->capture_default_str();
    synth->add_option("--event", synth_events,
                      "Planted events as type:magnitude:count[:alt]; repeatable");
    synth->add_option("--tau", synth_tau, "Strength threshold for the foresight signals")
        ->capture_default_str();
    WindowFlags synth_window;
    synth_window.attach(synth);

    // ---- compute-car ----
    auto* car = app.add_subcommand("compute-car", "Compute factor-neutral CAR per event");
    std::string car_prices, car_indices, car_events, car_metadata, car_exposures, car_out;
    bool car_keep_event_stocks = false;
    car->set_config("--config", "", "Config file");
    car->allow_config_extras(false);
    car->add_option("--prices", car_prices, "Prices file")->required();
    car->add_option("--indices", car_indices, "Benchmark index file")->required();
    car->add_option("--events", car_events, "Raw events file")->required();
    car->add_option("--metadata", car_metadata, "Stock metadata file")->required();
    car->add_option("--exposures", car_exposures,
                    "Exposure panel file (computed from prices when omitted)");
    car->add_option("--out", car_out, "Output directory")->required();
    car->add_flag("--keep-event-stocks-in-fits", car_keep_event_stocks,
                  "Keep event-window stocks in their own premia fits");
    WindowFlags car_window;
    car_window.attach(car);

    // ---- label ----
    auto* label = app.add_subcommand("label", "Derive direction/strength labels into a dataset");
    std::string label_events, label_car, label_out;
    LabelConfig label_cfg;
    label->set_config("--config", "", "Config file");
    label->allow_config_extras(false);
    label->add_option("--events", label_events, "Raw events file")->required();
    label->add_option("--car", label_car, "CAR results file")->required();
    label->add_option("--out", label_out, "Dataset output file")->required();
    label->add_option("--tau", label_cfg.tau, "Strength threshold on |CAR|")->capture_default_str();
    label->add_option("--neutral-band", label_cfg.neutral_band, "Neutral band on CAR sign")
        ->capture_default_str();

    // ---- stats ----
    auto* stats = app.add_subcommand("stats", "Per-type event statistics over a rolling window");
    std::string stats_dataset, stats_out, stats_as_of;
    int stats_window = 250;
    stats->set_config("--config", "", "Config file");
    stats->allow_config_extras(false);
    stats->add_option("--dataset", stats_dataset, "Dataset file")->required();
    stats->add_option("--window", stats_window, "Window length in calendar days")->capture_default_str();
    stats->add_option("--as-of", stats_as_of, "Window end date (default: latest record)");
    stats->add_option("--out", stats_out, "Output file")->required();

    // ---- reward ----
    auto* reward = app.add_subcommand("reward", "Score prediction/truth pairs with the reward model");
    std::string reward_pairs, reward_out;
    RewardFlags reward_flags;
    reward->set_config("--config", "", "Config file");
    reward->allow_config_extras(false);
    reward->add_option("--pairs", reward_pairs, "Prediction/truth pairs file")->required();
    reward->add_option("--out", reward_out, "Breakdown output file")->required();
    reward_flags.attach(reward);

    // ---- train-toy ----
    auto* train_cmd = app.add_subcommand("train-toy", "Reward-guided training of the toy policy");
    std::string train_out;
    TrainSchedule schedule;
    ToyEnvConfig env_cfg;
    double train_car_std = 0.02;
    bool raw_advantages = false;
    RewardFlags train_reward;
    train_cmd->set_config("--config", "", "Config file");
    train_cmd->allow_config_extras(false);
    train_cmd->add_option("--out", train_out, "Output directory")->required();
    train_cmd->add_option("--iterations", schedule.iterations, "Training iterations")->capture_default_str();
    train_cmd->add_option("--group-size", schedule.group_size, "Samples per event")->capture_default_str();
    train_cmd->add_option("--events-per-iter", schedule.events_per_iter, "Events per iteration")
        ->capture_default_str();
    train_cmd->add_option("--lr", schedule.step.learning_rate, "Learning rate")->capture_default_str();
    train_cmd->add_option("--kl-coeff", schedule.step.kl_coeff, "KL penalty coefficient")
        ->capture_default_str();
    train_cmd->add_option("--max-grad-norm", schedule.step.max_grad_norm, "Gradient norm clip")
        ->capture_default_str();
    train_cmd->add_flag("--raw-advantages", raw_advantages, "Skip std normalization of advantages");
    train_cmd->add_option("--std-floor", schedule.std_floor, "Advantage std floor")->capture_default_str();
    train_cmd->add_option("--seed", schedule.seed, "Training seed")->capture_default_str();
    train_cmd->add_option("--env-seed", env_cfg.seed, "Environment seed")->capture_default_str();
    train_cmd->add_option("--train-events", env_cfg.train_events, "Training event count")
        ->capture_default_str();
    train_cmd->add_option("--eval-events", env_cfg.eval_events, "Held-out event count")
        ->capture_default_str();
    train_cmd->add_option("--car-noise", env_cfg.car_noise, "Noise on the per-type CAR")
        ->capture_default_str();
    train_cmd->add_option("--cue-noise", env_cfg.cue_noise, "Noise on the magnitude cue feature")
        ->capture_default_str();
    train_cmd->add_option("--car-std", train_car_std, "Policy CAR head sampling std")->capture_default_str();
    train_reward.attach(train_cmd);

    // ---- backtest ----
    auto* backtest = app.add_subcommand("backtest", "Run the long-short event-driven backtest");
    BacktestFlags bt;
    std::string bt_out;
    backtest->set_config("--config", "", "Config file");
    backtest->allow_config_extras(false);
    bt.attach(backtest);
    backtest->add_option("--out", bt_out, "Output directory")->required();

    // ---- sensitivity ----
    auto* sens = app.add_subcommand("sensitivity", "Sweep one backtest parameter");
    BacktestFlags sens_bt;
    std::string sens_out, sens_param = "holding";
    std::vector<std::string> sens_values;
    sens->set_config("--config", "", "Config file");
    sens->allow_config_extras(false);
    sens_bt.attach(sens);
    sens->add_option("--out", sens_out, "Output directory")->required();
    sens->add_option("--sweep", sens_param, "Parameter: holding, max-position-ratio, or cost")
        ->capture_default_str();
    sens->add_option("--values", sens_values, "Comma-separated sweep values")
        ->delimiter(',')
        ->required();

    CLI11_PARSE(app, argc, argv);

    if (synth->parsed()) {
        synth_spec.events = parse_event_specs(synth_events);
        synth_spec.window = synth_window.spec;
        synth_spec.window_profile.clear();
        for (const auto& part : split_fields(synth_profile, ','))
            synth_spec.window_profile.push_back(parse_double(part, "profile"));
        SynthResult result = synth_universe(synth_spec);
        ensure_dir(synth_out);
        const auto& cal = result.prices.calendar();
        write_price_table(result.prices, path_join(synth_out, "prices.csv"),
                          path_join(synth_out, "indices.csv"));
        write_events(result.events, path_join(synth_out, "events.csv"));
        write_metadata(result.metadata, path_join(synth_out, "metadata.csv"));
        std::set<int> all_days;
        for (int d = 0; d < cal.size(); ++d) all_days.insert(d);
        std::map<std::string, ExposurePanel> panels;
        for (const auto& [day, panel] : result.ledger.exposure_panels(all_days, cal))
            panels.emplace(cal.date(day), panel);
        write_exposures(panels, path_join(synth_out, "exposures.csv"));
        write_ledger(result.ledger, cal, path_join(synth_out, "ledger_stocks.csv"),
                     path_join(synth_out, "ledger_events.csv"),
                     path_join(synth_out, "ledger_premia.csv"));
        write_signals(foresight_signals(result.ledger, synth_tau),
                      path_join(synth_out, "signals_foresight.csv"));
        write_dataset(ledger_dataset(result.ledger, LabelConfig{synth_tau, 0.0}),
                      path_join(synth_out, "dataset_ledger.csv"));
        echo_config(synth, synth_out);
        std::cout << "synth: " << result.ledger.tickers.size() << " stocks, " << cal.size()
                  << " days, " << result.ledger.events.size() << " events -> " << synth_out
                  << "\n";
        return 0;
    }

    if (car->parsed()) {
        PriceTable prices = load_price_table(car_prices, car_indices);
        MetadataTable meta = load_metadata(car_metadata);
        std::vector<RawEvent> events = load_events(car_events, prices);
        CarPipelineConfig cfg;
        cfg.window = car_window.spec;
        cfg.exclude_event_stocks = !car_keep_event_stocks;
        std::map<int, ExposurePanel> panels;
        const std::map<int, ExposurePanel>* panels_ptr = nullptr;
        if (!car_exposures.empty()) {
            for (const auto& [date, panel] : read_exposures(car_exposures)) {
                auto day = prices.calendar().index_of_date(date);
                require(day.has_value(), "exposures date ", date, " is not a trading day");
                panels.emplace(*day, panel);
            }
            panels_ptr = &panels;
        }
        CarPipelineResult result = run_car_pipeline(prices, meta, events, panels_ptr, cfg);
        ensure_dir(car_out);
        write_car_results(result.results, prices.calendar(), path_join(car_out, "car_results.csv"));
        {
            std::map<std::string, DailyPremia> by_date;
            for (const auto& [day, dp] : result.risk.premia) by_date.emplace(dp.date, dp);
            write_premia(by_date, path_join(car_out, "premia.csv"),
                         path_join(car_out, "premia_fit.csv"));
        }
        {
            CsvWriter skips(path_join(car_out, "car_skips.csv"), {"event_id", "reason"});
            for (const auto& r : result.results)
                if (r.skipped) skips.row({r.event_id, r.skip_reason});
        }
        echo_config(car, car_out);
        std::cout << "compute-car: " << result.results.size() - result.skipped << " events, "
                  << result.skipped << " skipped -> " << car_out << "\n";
        return 0;
    }

    if (label->parsed()) {
        // CAR results join back to raw events by event_id; rows are written in
        // event-file order for deterministic output.
        std::map<std::string, EventCarResult> results;
        {
            CsvReader in(label_car, kCarResultsHeader);
            std::vector<std::string> f;
            while (in.next(f)) {
                EventCarResult r;
                r.event_id = f[0];
                r.ticker = f[1];
                r.t0 = parse_timestamp(f[2]);
                r.car = parse_double(f[3], "car", in.line());
                r.missing_days = static_cast<int>(parse_long(f[6], "missing_days", in.line()));
                results.emplace(r.event_id, std::move(r));
            }
        }
        std::vector<LabeledEvent> records;
        {
            // Only the event fields are needed; tolerate events without price data.
            CsvReader in(label_events, kEventsHeader);
            std::vector<std::string> f;
            while (in.next(f)) {
                auto rit = results.find(f[0]);
                if (rit == results.end()) continue;
                RawEvent ev;
                ev.event_id = f[0];
                ev.ticker = f[1];
                ev.t0 = parse_timestamp(f[2]);
                ev.event_type = f[3];
                ev.text_ref = f[4];
                records.push_back(build_labeled_record(ev, rit->second, label_cfg));
            }
        }
        write_dataset(records, label_out);
        std::cout << "label: " << records.size() << " records -> " << label_out << "\n";
        return 0;
    }

    if (stats->parsed()) {
        std::vector<LabeledEvent> records = read_dataset(stats_dataset);
        require(!records.empty(), stats_dataset, ": no records");
        int as_of;
        if (!stats_as_of.empty()) {
            as_of = parse_date(stats_as_of);
        } else {
            as_of = records.front().t0.day_serial;
            for (const auto& r : records) as_of = std::max(as_of, r.t0.day_serial);
        }
        require(stats_window >= 1, "--window must be >= 1");
        TypeStats ts = event_type_stats(records, format_date(as_of - stats_window + 1),
                                        format_date(as_of));
        write_type_stats(ts, stats_out);
        std::cout << "stats: " << ts.total << " records in window -> " << stats_out << "\n";
        return 0;
    }

    if (reward->parsed()) {
        score_reward_file(reward_pairs, reward_out, reward_flags.resolve());
        std::cout << "reward: breakdowns -> " << reward_out << "\n";
        return 0;
    }

    if (train_cmd->parsed()) {
        schedule.normalize_by_std = !raw_advantages;
        schedule.reward = train_reward.resolve();
        ToyEnvironment env = ToyEnvironment::generate(env_cfg);
        ToyPolicy policy;
        policy.set_car_std(train_car_std);
        std::vector<TraceRow> trace = train(env, policy, schedule);
        ensure_dir(train_out);
        write_trace(trace, path_join(train_out, "trace.csv"));
        echo_config(train_cmd, train_out);
        const TraceRow& last = trace.back();
        std::cout << "train-toy: " << trace.size() << " iterations, final da=" << last.da
                  << " eta=" << last.eta << " -> " << train_out << "\n";
        return 0;
    }

    if (backtest->parsed()) {
        auto loaded = bt.load();
        BacktestResult result = run_backtest(loaded.signals, loaded.prices, loaded.records,
                                             loaded.cfg);
        ensure_dir(bt_out);
        const auto& cal = loaded.prices.calendar();
        write_nav(result.portfolio, cal, path_join(bt_out, "nav.csv"));
        write_trades(result.portfolio, cal, path_join(bt_out, "trades.csv"));
        write_weights(result.weights_by_day, cal, path_join(bt_out, "weights.csv"));
        write_metrics_json(result.metrics, path_join(bt_out, "metrics.json"));
        write_notes(result.portfolio.notes, path_join(bt_out, "notes.txt"));
        echo_config(backtest, bt_out);
        std::cout << "backtest: " << result.portfolio.trades.size() << " trades, total_return="
                  << result.metrics.total_return << " -> " << bt_out << "\n";
        return 0;
    }

    if (sens->parsed()) {
        auto loaded = sens_bt.load();
        std::vector<SweepRow> rows = run_sensitivity(loaded.signals, loaded.prices, loaded.records,
                                                     loaded.cfg, sens_param, sens_values);
        ensure_dir(sens_out);
        write_sweep(rows, path_join(sens_out, "sweep.csv"));
        echo_config(sens, sens_out);
        std::cout << "sensitivity: " << rows.size() << " rows -> " << sens_out << "\n";
        return 0;
    }

    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const evq::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
