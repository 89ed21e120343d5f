#pragma once

#include <chrono>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nextact/dataset.hpp"
#include "nextact/errors.hpp"
#include "nextact/predictors.hpp"

namespace nextact {

// Per-step MSE across sequences: at step t, the squared error is averaged
// over every test sequence and every component of the action vector, so the
// value is bounded by 1 regardless of alphabet size.
inline Vec mse_per_step(const std::vector<std::vector<Vec>>& predictions, const std::vector<std::vector<Vec>>& targets) {
    if (predictions.size() != targets.size()) throw DimensionError("mse_per_step: sequence count mismatch");
    if (predictions.empty()) throw DimensionError("mse_per_step: no sequences");
    const std::size_t steps = predictions[0].size();
    Vec out(steps, 0.0);
    for (std::size_t s = 0; s < predictions.size(); ++s) {
        if (predictions[s].size() != steps || targets[s].size() != steps)
            throw DimensionError("mse_per_step: sequence " + std::to_string(s) + " has mismatched length");
        for (std::size_t t = 0; t < steps; ++t) {
            const Vec& p = predictions[s][t];
            const Vec& y = targets[s][t];
            if (p.size() != y.size()) throw DimensionError("mse_per_step: component mismatch at step " + std::to_string(t));
            double acc = 0.0;
            for (std::size_t a = 0; a < p.size(); ++a) {
                const double d = p[a] - y[a];
                acc += d * d;
            }
            out[t] += acc / static_cast<double>(p.size());
        }
    }
    for (double& v : out) v /= static_cast<double>(predictions.size());
    return out;
}

inline double mean(const Vec& v) {
    double acc = 0.0;
    for (double x : v) acc += x;
    return v.empty() ? 0.0 : acc / static_cast<double>(v.size());
}

namespace detail {
inline Vec moving_average(const Vec& raw, int window) {
    if (window <= 1) return raw;
    Vec out(raw.size(), 0.0);
    const int half = window / 2;
    for (std::size_t t = 0; t < raw.size(); ++t) {
        const std::size_t lo = t >= static_cast<std::size_t>(half) ? t - static_cast<std::size_t>(half) : 0;
        const std::size_t hi = std::min(raw.size() - 1, t + static_cast<std::size_t>(half));
        double acc = 0.0;
        for (std::size_t k = lo; k <= hi; ++k) acc += raw[k];
        out[t] = acc / static_cast<double>(hi - lo + 1);
    }
    return out;
}
}  // namespace detail

// Fraction of choices landing on the better decks (C or D) per trial,
// smoothed with a centered moving average. window=1 returns the raw rates.
inline Vec better_action_rate(const std::vector<std::vector<Action>>& action_sequences, int window = 5) {
    if (action_sequences.empty()) throw UsageError("better_action_rate: no sequences");
    const std::size_t steps = action_sequences[0].size();
    Vec raw(steps, 0.0);
    for (const auto& seq : action_sequences) {
        if (seq.size() != steps) throw DimensionError("better_action_rate: ragged sequences");
        for (std::size_t t = 0; t < steps; ++t) {
            if (seq[t] < 0 || seq[t] >= kIgtAlphabet) throw UsageError("better_action_rate: IGT actions only");
            if (seq[t] == 2 || seq[t] == 3) raw[t] += 1.0;
        }
    }
    for (double& v : raw) v /= static_cast<double>(action_sequences.size());
    return detail::moving_average(raw, window);
}

// Same curve from predicted distributions: expected probability mass on the
// better decks per step.
inline Vec better_action_rate_probs(const std::vector<std::vector<Vec>>& predictions, int window = 5) {
    if (predictions.empty()) throw UsageError("better_action_rate_probs: no sequences");
    const std::size_t steps = predictions[0].size();
    Vec raw(steps, 0.0);
    for (const auto& seq : predictions) {
        if (seq.size() != steps) throw DimensionError("better_action_rate_probs: ragged sequences");
        for (std::size_t t = 0; t < steps; ++t) {
            if (seq[t].size() != kIgtAlphabet) throw UsageError("better_action_rate_probs: IGT predictions only");
            raw[t] += seq[t][2] + seq[t][3];
        }
    }
    for (double& v : raw) v /= static_cast<double>(predictions.size());
    return detail::moving_average(raw, window);
}

// Fraction of focal-agent actions equal to Cooperate per round.
inline Vec cooperation_rate(const std::vector<std::vector<Action>>& action_sequences) {
    if (action_sequences.empty()) throw UsageError("cooperation_rate: no sequences");
    const std::size_t steps = action_sequences[0].size();
    Vec out(steps, 0.0);
    for (const auto& seq : action_sequences) {
        if (seq.size() != steps) throw DimensionError("cooperation_rate: ragged sequences");
        for (std::size_t t = 0; t < steps; ++t) {
            if (seq[t] != kDefect && seq[t] != kCooperate) throw UsageError("cooperation_rate: IPD actions only");
            if (seq[t] == kCooperate) out[t] += 1.0;
        }
    }
    for (double& v : out) v /= static_cast<double>(action_sequences.size());
    return out;
}

// Expected cooperation per round under the predicted distributions.
inline Vec cooperation_rate_probs(const std::vector<std::vector<Vec>>& predictions) {
    if (predictions.empty()) throw UsageError("cooperation_rate_probs: no sequences");
    const std::size_t steps = predictions[0].size();
    Vec out(steps, 0.0);
    for (const auto& seq : predictions) {
        if (seq.size() != steps) throw DimensionError("cooperation_rate_probs: ragged sequences");
        for (std::size_t t = 0; t < steps; ++t) {
            if (seq[t].size() != kIpdAlphabet) throw UsageError("cooperation_rate_probs: IPD predictions only");
            out[t] += seq[t][kCooperate];
        }
    }
    for (double& v : out) v /= static_cast<double>(predictions.size());
    return out;
}

struct EvalReport {
    std::string model_kind;
    std::string dataset_hash;
    Vec mse_per_step;
    double avg_mse = 0.0;
    Vec truth_curve;
    Vec pred_curve;
    std::size_t n_test = 0;
    std::uint64_t seed = 0;
    double wall_time_s = 0.0;
};

struct EvalOptions {
    int smoothing_window = 5;   // IGT learning-curve smoothing
    bool argmax_curves = false; // population curves from argmax instead of probabilities
};

// Predict the test side of the split, compute per-step MSE and the
// population curve (better-deck rate for IGT, cooperation rate for IPD)
// for both truth and prediction. Curves cover predicted steps 2..horizon.
inline EvalReport build_report(const Model& model, const Dataset& ds, const Split& split,
                               const EvalOptions& options = {}, const FeatureConfig& features = {}) {
    if (split.test.empty()) throw UsageError("build_report: empty test set");
    require_compatible(model, ds);
    const auto t0 = std::chrono::steady_clock::now();

    const auto test_seqs = sequences_for(ds, split.test, features);
    std::vector<std::vector<Vec>> predictions, targets;
    std::vector<std::vector<Action>> truth_actions;
    for (const auto& seq : test_seqs) {
        predictions.push_back(predict_sequence(model, seq));
        targets.push_back(seq.targets);
        std::vector<Action> acts;
        for (const Vec& y : seq.targets) acts.push_back(decode_one_hot(y));
        truth_actions.push_back(std::move(acts));
    }

    EvalReport report;
    report.model_kind = to_string(model.kind());
    report.dataset_hash = dataset_hash(ds);
    report.mse_per_step = mse_per_step(predictions, targets);
    report.avg_mse = mean(report.mse_per_step);
    report.n_test = test_seqs.size();
    report.seed = split.seed;

    std::vector<std::vector<Vec>> curve_source = predictions;
    if (options.argmax_curves)
        for (auto& seq : curve_source)
            for (Vec& p : seq) p = encode_one_hot(decode_one_hot(p), static_cast<int>(p.size()));

    if (ds.game_kind == GameKind::IGT) {
        report.truth_curve = better_action_rate(truth_actions, options.smoothing_window);
        report.pred_curve = better_action_rate_probs(curve_source, options.smoothing_window);
    } else {
        report.truth_curve = cooperation_rate(truth_actions);
        report.pred_curve = cooperation_rate_probs(curve_source);
    }

    report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

inline nlohmann::json report_json(const EvalReport& r) {
    return {{"model", r.model_kind},
            {"dataset_hash", r.dataset_hash},
            {"avg_mse", r.avg_mse},
            {"mse_per_step", r.mse_per_step},
            {"truth_curve", r.truth_curve},
            {"pred_curve", r.pred_curve},
            {"n_test", r.n_test},
            {"seed", r.seed},
            {"wall_time_s", r.wall_time_s}};
}

// step,truth,prediction rows, one per predicted step (step is the 1-based
// round being predicted, so it starts at 2).
inline std::string curve_csv(const EvalReport& r) {
    std::ostringstream out;
    out << "step,truth,prediction\n";
    for (std::size_t t = 0; t < r.truth_curve.size(); ++t)
        out << (t + 2) << "," << detail::fmt_num(r.truth_curve[t]) << "," << detail::fmt_num(r.pred_curve[t]) << "\n";
    return out.str();
}

}  // namespace nextact
