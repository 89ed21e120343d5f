#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nextact/baselines.hpp"
#include "nextact/dataset.hpp"
#include "nextact/errors.hpp"
#include "nextact/evaluation.hpp"
#include "nextact/games.hpp"
#include "nextact/lstm.hpp"
#include "nextact/predictors.hpp"

namespace nextact {

inline constexpr const char* kToolVersion = "0.1.0";

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    return splitmix64(base ^ splitmix64(stream + 1));
}

// ---------------------------------------------------------------------------
// File plumbing
// ---------------------------------------------------------------------------

// Temp file + rename, so an interrupted run never leaves a partial file.
inline void atomic_write_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("cannot write file: " + tmp.string());
        out << content;
        if (!out) throw DataError("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline nlohmann::json dataset_manifest_json(const Dataset& ds, const std::vector<std::string>& source_files, std::uint64_t seed) {
    return {{"game_kind", to_string(ds.game_kind)},
            {"n_trajectories", ds.size()},
            {"horizon", ds.horizon},
            {"alphabet", ds.alphabet},
            {"source_files", source_files},
            {"seed", seed}};
}

// Per-run provenance: command, full config, seed, input hashes, version.
// Deliberately no timestamps, so reruns stay byte-identical.
inline void write_run_manifest(const std::filesystem::path& out_dir, const std::string& command,
                               const nlohmann::json& config, std::uint64_t seed,
                               const std::vector<std::string>& input_files,
                               const std::vector<std::string>& output_files) {
    nlohmann::json inputs = nlohmann::json::object();
    for (const auto& path : input_files) inputs[path] = hash_hex(fnv1a64(read_file(path)));
    nlohmann::json j = {{"tool", "nextact"},  {"tool_version", kToolVersion}, {"command", command},
                        {"config", config},   {"seed", seed},                 {"inputs", inputs},
                        {"outputs", output_files}};
    atomic_write_file(out_dir / "run_manifest.json", j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct PolicyMix {
    std::vector<SynthPolicy> policies;
    std::vector<double> weights;
};

// Mix entries: name[@noise][:weight], comma separated, e.g.
// "tit_for_tat:1,grim_trigger:1,always_defect@0.2:1".
inline PolicyMix parse_policy_mix(const std::string& text) {
    PolicyMix mix;
    std::stringstream ss(text);
    std::string entry;
    while (std::getline(ss, entry, ',')) {
        if (entry.empty()) continue;
        double weight = 1.0;
        std::string body = entry;
        if (const auto colon = body.rfind(':'); colon != std::string::npos) {
            weight = detail::parse_num(body.substr(colon + 1), "mix weight in '" + entry + "'");
            body = body.substr(0, colon);
        }
        double noise = 0.0;
        if (const auto at = body.rfind('@'); at != std::string::npos) {
            noise = detail::parse_num(body.substr(at + 1), "mix noise in '" + entry + "'");
            body = body.substr(0, at);
        }
        if (weight <= 0.0) throw UsageError("mix weight must be positive in '" + entry + "'");
        if (noise < 0.0 || noise > 1.0) throw UsageError("mix noise must be in [0,1] in '" + entry + "'");
        SynthPolicy p = parse_policy(body);
        p.noise = noise;
        mix.policies.push_back(p);
        mix.weights.push_back(weight);
    }
    if (mix.policies.empty()) throw UsageError("empty policy mix: '" + text + "'");
    return mix;
}

inline SynthPolicy sample_policy(const PolicyMix& mix, Rng& rng) {
    double total = 0.0;
    for (double w : mix.weights) total += w;
    double u = rng.uniform() * total;
    for (std::size_t i = 0; i < mix.policies.size(); ++i) {
        u -= mix.weights[i];
        if (u < 0.0) return mix.policies[i];
    }
    return mix.policies.back();
}

struct SimulateConfig {
    std::string game;  // "igt" or "ipd"
    std::string out_dir;
    std::uint64_t seed = 0;
    int n = 1;
    // IGT
    int scheme = 1;
    std::string policy = "random";
    double epsilon = 0.1;
    int trials = 95;
    // IPD
    std::string p1 = "tit_for_tat";
    std::string p2 = "tit_for_tat";
    double noise1 = 0.0;
    double noise2 = 0.0;
    std::string population;  // when set, overrides p1/p2
    int rounds = 9;
    double temptation = 5.0, reward = 3.0, penalty = 1.0, sucker = 0.0;

    nlohmann::json to_json() const {
        return {{"game", game},   {"out", out_dir},   {"seed", seed},       {"n", n},
                {"scheme", scheme}, {"policy", policy}, {"epsilon", epsilon}, {"trials", trials},
                {"p1", p1},       {"p2", p2},         {"noise1", noise1},   {"noise2", noise2},
                {"population", population}, {"rounds", rounds},
                {"T", temptation}, {"R", reward},     {"P", penalty},       {"S", sucker}};
    }
};

inline Dataset simulate_igt_population(const SynthPolicy& policy, const IGTScheme& scheme, int trials, int n, std::uint64_t seed) {
    Dataset ds;
    ds.game_kind = GameKind::IGT;
    ds.alphabet = kIgtAlphabet;
    ds.horizon = trials;
    for (int i = 0; i < n; ++i) {
        Trajectory traj = simulate_igt(policy, scheme, trials, derive_seed(seed, static_cast<std::uint64_t>(i) + 1));
        traj.source = "subj_" + std::to_string(i + 1);
        ds.trajectories.push_back(std::move(traj));
    }
    return ds;
}

inline std::string padded_traj_id(int i, int n) {
    int width = 1;
    for (int v = n; v >= 10; v /= 10) width += 1;
    std::string num = std::to_string(i);
    return "traj_" + std::string(static_cast<std::size_t>(width) - num.size(), '0') + num;
}

inline Dataset simulate_ipd_population(const PolicyMix& mix1, const PolicyMix& mix2, const GameSpec& spec,
                                       int rounds, int n, std::uint64_t seed) {
    require_valid_spec(spec);
    Dataset ds;
    ds.game_kind = GameKind::IPD;
    ds.alphabet = kIpdAlphabet;
    ds.horizon = rounds;
    Rng pick(derive_seed(seed, 0));
    for (int i = 0; i < n; ++i) {
        const SynthPolicy p1 = sample_policy(mix1, pick);
        const SynthPolicy p2 = sample_policy(mix2, pick);
        Trajectory traj = simulate_ipd(p1, p2, spec, rounds, derive_seed(seed, static_cast<std::uint64_t>(i) + 1));
        traj.source = padded_traj_id(i + 1, n);
        ds.trajectories.push_back(std::move(traj));
    }
    return ds;
}

inline void cmd_simulate(const SimulateConfig& config) {
    if (config.n < 1) throw UsageError("simulate: --n must be >= 1");
    const std::filesystem::path out_dir(config.out_dir.empty() ? "." : config.out_dir);
    std::vector<std::string> outputs;
    Dataset ds;
    if (config.game == "igt") {
        SynthPolicy policy = parse_policy(config.policy);
        policy.epsilon = config.epsilon;
        ds = simulate_igt_population(policy, igt_scheme(config.scheme), config.trials, config.n, config.seed);
        atomic_write_file(out_dir / "choices.csv", igt_choices_csv(ds));
        atomic_write_file(out_dir / "wins.csv", igt_matrix_csv(ds, true));
        atomic_write_file(out_dir / "losses.csv", igt_matrix_csv(ds, false));
        outputs = {"choices.csv", "wins.csv", "losses.csv"};
    } else if (config.game == "ipd") {
        GameSpec spec;
        spec.temptation = config.temptation;
        spec.reward = config.reward;
        spec.penalty = config.penalty;
        spec.sucker = config.sucker;
        spec.horizon = config.rounds;
        PolicyMix mix1, mix2;
        if (!config.population.empty()) {
            mix1 = parse_policy_mix(config.population);
            mix2 = mix1;
        } else {
            SynthPolicy p1 = parse_policy(config.p1);
            p1.noise = config.noise1;
            SynthPolicy p2 = parse_policy(config.p2);
            p2.noise = config.noise2;
            mix1 = {{p1}, {1.0}};
            mix2 = {{p2}, {1.0}};
        }
        ds = simulate_ipd_population(mix1, mix2, spec, config.rounds, config.n, config.seed);
        atomic_write_file(out_dir / "ipd.csv", ipd_csv(ds));
        outputs = {"ipd.csv"};
    } else {
        throw UsageError("simulate: --game must be igt or ipd");
    }
    atomic_write_file(out_dir / "dataset_manifest.json", dataset_manifest_json(ds, outputs, config.seed).dump(2) + "\n");
    outputs.push_back("dataset_manifest.json");
    write_run_manifest(out_dir, "simulate", config.to_json(), config.seed, {}, outputs);
    std::cout << "simulate: wrote " << ds.size() << " " << to_string(ds.game_kind) << " trajectories of length "
              << ds.horizon << " to " << out_dir.string() << "\n";
}

// ---------------------------------------------------------------------------
// Shared dataset loading for train/eval
// ---------------------------------------------------------------------------

struct DataArgs {
    std::vector<std::string> data;  // IGT: one or more choices files; IPD: one canonical CSV
    std::string wins;
    std::string losses;
    int truncate = 0;  // IGT pooling target; 0 = require uniform lengths

    nlohmann::json to_json() const {
        return {{"data", data}, {"wins", wins}, {"losses", losses}, {"truncate", truncate}};
    }
};

inline Dataset load_cli_dataset(GameKind game, const DataArgs& args) {
    if (args.data.empty()) throw UsageError("no --data file given");
    if (game == GameKind::IGT) {
        std::vector<Dataset> parts;
        if (!args.wins.empty() && args.data.size() != 1)
            throw UsageError("win/loss matrices are only supported with a single choices file");
        for (const auto& path : args.data) parts.push_back(load_igt(path, args.wins, args.losses));
        Dataset ds;
        if (args.truncate > 0) {
            ds = pool_and_truncate(parts, args.truncate);
        } else if (parts.size() == 1) {
            ds = std::move(parts[0]);
            if (ds.horizon == 0) throw DataError("IGT trajectories have mixed lengths; pass --truncate to pool them");
        } else {
            int shortest = -1;
            for (const auto& p : parts)
                for (const auto& t : p.trajectories)
                    if (shortest < 0 || static_cast<int>(t.length()) < shortest) shortest = static_cast<int>(t.length());
            ds = pool_and_truncate(parts, shortest);
        }
        return ds;
    }
    if (args.data.size() != 1) throw UsageError("IPD loading takes exactly one canonical CSV");
    IpdLoadStats stats;
    Dataset ds = load_ipd(args.data[0], &stats);
    if (stats.dropped_wrong_length > 0)
        std::cerr << "load_ipd: dropped " << stats.dropped_wrong_length << " trajectories without the full "
                  << kIpdCanonicalRounds << "-round history\n";
    if (ds.size() == 0) throw DataError("IPD dataset is empty after the length filter");
    return ds;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

inline constexpr int kVarLagCandidates[] = {1, 2, 3, 4, 8};

// Picks the VAR lag by held-out MSE over the candidate lags (ties go to the
// smaller lag). Groups stay together the same way train/test splits work.
inline int select_var_lag(const std::vector<SupervisedSequence>& sequences, std::uint64_t seed) {
    std::map<std::size_t, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < sequences.size(); ++i) groups[sequences[i].traj_index].push_back(i);
    std::vector<std::vector<std::size_t>> group_list;
    for (auto& [id, members] : groups) group_list.push_back(members);
    const auto order = detail::shuffled_indices(group_list.size(), derive_seed(seed, 77));
    const std::size_t n_val = std::max<std::size_t>(1, group_list.size() / 5);
    std::vector<SupervisedSequence> fit_seqs, val_seqs;
    for (std::size_t gi = 0; gi < order.size(); ++gi)
        for (std::size_t si : group_list[order[gi]])
            (gi < n_val ? val_seqs : fit_seqs).push_back(sequences[si]);
    if (fit_seqs.empty() || val_seqs.empty()) return 1;

    const int max_lag = static_cast<int>(fit_seqs.front().inputs.size());
    int best_lag = 1;
    double best_mse = std::numeric_limits<double>::infinity();
    for (int lag : kVarLagCandidates) {
        if (lag > max_lag) continue;
        Model candidate;
        candidate.impl = fit_var(fit_seqs, lag);
        candidate.game_kind = val_seqs.front().inputs.front().size() == 4 && val_seqs.front().targets.front().size() == 2
                                  ? GameKind::IPD
                                  : GameKind::IGT;
        std::vector<std::vector<Vec>> preds, targets;
        for (const auto& s : val_seqs) {
            preds.push_back(predict_sequence(candidate, s));
            targets.push_back(s.targets);
        }
        const double mse = mean(mse_per_step(preds, targets));
        if (mse < best_mse - 1e-12) {
            best_mse = mse;
            best_lag = lag;
        }
    }
    return best_lag;
}

struct TrainCliConfig {
    std::string game;   // igt | ipd
    std::string model;  // lstm | var | logistic
    DataArgs data_args;
    double ratio = 0.8;  // train fraction; 1.0 trains on everything
    std::uint64_t seed = 0;
    std::string out_dir;
    TrainConfig train;
    int lag = 1;  // VAR; 0 = select by validation
    double l2 = 1e-4;

    nlohmann::json to_json() const {
        return {{"game", game},     {"model", model},   {"data", data_args.to_json()},
                {"ratio", ratio},   {"seed", seed},     {"out", out_dir},
                {"epochs", train.epochs}, {"learning_rate", train.learning_rate},
                {"batch_size", train.batch_size}, {"gradient_clip_norm", train.gradient_clip_norm},
                {"validation_fraction", train.validation_fraction}, {"patience", train.early_stop_patience},
                {"hidden", train.hidden}, {"layers", train.n_layers}, {"lag", lag}, {"l2", l2}};
    }
};

inline std::vector<std::size_t> all_indices(const Dataset& ds) {
    std::vector<std::size_t> idx(ds.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return idx;
}

// Fits one model of the given kind on the chosen trajectories. Shared by
// cmd_train and the per-fold retraining in cmd_eval.
inline std::pair<Model, std::vector<EpochStats>> train_model_on(const Dataset& ds, const std::vector<std::size_t>& train_idx,
                                                                ModelKind kind, const TrainConfig& train_config,
                                                                int lag, double l2, std::uint64_t seed) {
    if (train_idx.empty()) throw UsageError("training side of the split is empty");
    const auto seqs = sequences_for(ds, train_idx);
    Model model;
    model.game_kind = ds.game_kind;
    model.seed = seed;
    model.train_config = train_config;
    std::vector<EpochStats> history;
    if (kind == ModelKind::Lstm) {
        TrainConfig cfg = train_config;
        cfg.seed = seed;
        TrainResult result = train_lstm(seqs, cfg);
        model.impl = std::move(result.params);
        history = std::move(result.history);
    } else if (kind == ModelKind::Var) {
        const int chosen = lag > 0 ? lag : select_var_lag(seqs, seed);
        model.impl = fit_var(seqs, chosen);
    } else {
        if (ds.game_kind != GameKind::IPD) throw UsageError("logistic models train on IPD data only");
        model.impl = fit_logistic(logistic_rows(seqs), l2);
    }
    return {std::move(model), std::move(history)};
}

inline std::string history_csv(const std::vector<EpochStats>& history) {
    std::ostringstream out;
    out << "epoch,train_ce,val_ce\n";
    for (const auto& e : history) {
        out << e.epoch << "," << detail::fmt_num(e.train_ce) << ",";
        if (std::isfinite(e.val_ce)) out << detail::fmt_num(e.val_ce);
        out << "\n";
    }
    return out.str();
}

inline void cmd_train(const TrainCliConfig& config) {
    const ModelKind kind = parse_model_kind(config.model);
    const GameKind game = config.game == "igt" ? GameKind::IGT : config.game == "ipd" ? GameKind::IPD
                                               : throw UsageError("train: --game must be igt or ipd");
    Dataset ds = load_cli_dataset(game, config.data_args);
    if (ds.size() == 0) throw DataError("train: dataset is empty");

    std::vector<std::size_t> train_idx;
    if (config.ratio >= 1.0) {
        train_idx = all_indices(ds);
    } else {
        const Split split = split_train_test(ds, config.ratio, config.seed);
        train_idx = split.train;
    }
    std::cout << "train: " << train_idx.size() << "/" << ds.size() << " trajectories, split seed " << config.seed << "\n";

    auto [model, history] = train_model_on(ds, train_idx, kind, config.train, config.lag, config.l2, config.seed);
    model.split_seed = config.seed;
    model.logistic_l2 = config.l2;

    const std::filesystem::path out_dir(config.out_dir.empty() ? "." : config.out_dir);
    atomic_write_file(out_dir / "checkpoint.json", checkpoint_json(model).dump(2) + "\n");
    atomic_write_file(out_dir / "history.csv", history_csv(history));
    atomic_write_file(out_dir / "dataset_manifest.json",
                      dataset_manifest_json(ds, config.data_args.data, config.seed).dump(2) + "\n");
    std::vector<std::string> inputs = config.data_args.data;
    if (!config.data_args.wins.empty()) inputs.push_back(config.data_args.wins);
    if (!config.data_args.losses.empty()) inputs.push_back(config.data_args.losses);
    write_run_manifest(out_dir, "train", config.to_json(), config.seed, inputs,
                       {"checkpoint.json", "history.csv", "dataset_manifest.json"});
    if (const auto* var = std::get_if<VarModel>(&model.impl))
        std::cout << "train: var lag " << var->lag << "\n";
    std::cout << "train: wrote checkpoint to " << (out_dir / "checkpoint.json").string() << "\n";
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalCliConfig {
    std::string checkpoint;
    DataArgs data_args;
    double ratio = 0.8;  // train fraction; 0 evaluates on the whole dataset
    bool seed_given = false;
    std::uint64_t seed = 0;
    int folds = 0;
    std::string out_dir;
    int window = 5;
    bool argmax_curves = false;

    nlohmann::json to_json() const {
        return {{"checkpoint", checkpoint}, {"data", data_args.to_json()}, {"ratio", ratio},
                {"seed", seed},             {"folds", folds},              {"out", out_dir},
                {"window", window},         {"argmax_curves", argmax_curves}};
    }
};

inline void cmd_eval(const EvalCliConfig& config) {
    Model model = load_checkpoint(config.checkpoint);
    if (config.data_args.data.empty()) throw UsageError("no --data file given");
    const GameKind data_kind = detect_game_kind(config.data_args.data.front());
    if (data_kind != model.game_kind)
        throw UsageError("checkpoint was trained on " + to_string(model.game_kind) + " data, dataset is " + to_string(data_kind));
    Dataset ds = load_cli_dataset(model.game_kind, config.data_args);
    require_compatible(model, ds);
    const std::uint64_t seed = config.seed_given ? config.seed : model.split_seed;
    const std::filesystem::path out_dir(config.out_dir.empty() ? "." : config.out_dir);
    EvalOptions options;
    options.smoothing_window = config.window;
    options.argmax_curves = config.argmax_curves;

    std::vector<std::string> outputs;
    if (config.folds >= 2) {
        const auto folds = make_folds(ds, config.folds, seed);
        Vec fold_mse;
        for (const auto& fold : folds) {
            auto [fold_model, history] = train_model_on(ds, fold.train, model.kind(), model.train_config,
                                                        std::get_if<VarModel>(&model.impl) ? std::get<VarModel>(model.impl).lag : 0,
                                                        model.logistic_l2, derive_seed(seed, static_cast<std::uint64_t>(fold.fold_id)));
            fold_model.split_seed = seed;
            const EvalReport report = build_report(fold_model, ds, fold, options);
            const std::string sub = "fold_" + std::to_string(fold.fold_id + 1);
            atomic_write_file(out_dir / sub / "report.json", report_json(report).dump(2) + "\n");
            atomic_write_file(out_dir / sub / "curve.csv", curve_csv(report));
            outputs.push_back(sub + "/report.json");
            outputs.push_back(sub + "/curve.csv");
            fold_mse.push_back(report.avg_mse);
            std::cout << "eval: fold " << (fold.fold_id + 1) << " avg_mse " << report.avg_mse << "\n";
        }
        nlohmann::json aggregate = {{"model", to_string(model.kind())}, {"folds", config.folds},
                                    {"avg_mse", mean(fold_mse)},        {"fold_avg_mse", fold_mse},
                                    {"seed", seed}};
        atomic_write_file(out_dir / "aggregate.json", aggregate.dump(2) + "\n");
        outputs.push_back("aggregate.json");
        std::cout << "eval: aggregate avg_mse " << mean(fold_mse) << "\n";
    } else {
        Split split;
        split.seed = seed;
        if (config.ratio <= 0.0) {
            split.test = all_indices(ds);
        } else {
            split = split_train_test(ds, config.ratio, seed);
        }
        const EvalReport report = build_report(model, ds, split, options);
        atomic_write_file(out_dir / "report.json", report_json(report).dump(2) + "\n");
        atomic_write_file(out_dir / "curve.csv", curve_csv(report));
        outputs = {"report.json", "curve.csv"};
        std::cout << "eval: avg_mse " << report.avg_mse << " over " << report.n_test << " test sequences\n";
    }

    std::vector<std::string> inputs = config.data_args.data;
    inputs.push_back(config.checkpoint);
    write_run_manifest(out_dir, "eval", config.to_json(), seed, inputs, outputs);
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

struct GradcheckConfig {
    std::uint64_t seed = 1;
    bool corrupt = false;  // test hook: inject a broken gradient entry

    nlohmann::json to_json() const { return {{"seed", seed}, {"corrupt", corrupt}}; }
};

inline constexpr double kGradcheckTolerance = 1e-4;

// Runs the BPTT-vs-finite-difference comparison at three seeds; returns the
// worst relative error seen.
inline double cmd_gradcheck(const GradcheckConfig& config) {
    double worst = 0.0;
    for (int k = 0; k < 3; ++k) {
        const std::uint64_t seed = config.seed + static_cast<std::uint64_t>(k);
        const double err = lstm_gradcheck(seed, config.corrupt);
        std::cout << "gradcheck seed " << seed << ": max_rel_err = " << err << "\n";
        worst = std::max(worst, err);
    }
    std::cout << "max_rel_err " << (worst < kGradcheckTolerance ? "< " : ">= ") << kGradcheckTolerance << ": "
              << (worst < kGradcheckTolerance ? "PASS" : "FAIL") << "\n";
    return worst;
}

}  // namespace nextact
