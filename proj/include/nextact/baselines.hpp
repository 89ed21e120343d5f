#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "nextact/dataset.hpp"
#include "nextact/errors.hpp"
#include "nextact/numerics.hpp"

namespace nextact {

// ---------------------------------------------------------------------------
// Vector autoregression over one-hot feature vectors
// ---------------------------------------------------------------------------

struct VarModel {
    int lag = 1;
    int feature_dim = 0;
    int alphabet = 0;
    std::vector<Mat> coef;  // coef[k] is alphabet x feature_dim for x_{t-k}
    Vec intercept;
};

// Stacks one (window -> next one-hot) row per step across all sequences and
// solves the whole thing as a single ridge-damped least-squares problem.
// Lags reaching before the start of a sequence are zero-padded.
inline VarModel fit_var(const std::vector<SupervisedSequence>& sequences, int lag) {
    if (lag < 1) throw UsageError("fit_var: lag must be >= 1");
    std::size_t n_rows = 0;
    for (const auto& s : sequences) n_rows += s.targets.size();
    if (n_rows == 0) throw DataError("fit_var: no training rows");
    const auto feature_dim = static_cast<std::size_t>(sequences.front().inputs.at(0).size());
    const auto alphabet = static_cast<std::size_t>(sequences.front().targets.at(0).size());
    const std::size_t width = static_cast<std::size_t>(lag) * feature_dim + 1;

    Mat design(n_rows, width);
    Mat targets(n_rows, alphabet);
    std::size_t row = 0;
    for (const auto& s : sequences) {
        for (std::size_t t = 0; t < s.targets.size(); ++t) {
            for (int k = 0; k < lag; ++k) {
                const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) - k;
                if (src < 0) continue;  // zero padding
                const Vec& x = s.inputs[static_cast<std::size_t>(src)];
                if (x.size() != feature_dim) throw DimensionError("fit_var: inconsistent feature size in '" + s.source + "'");
                for (std::size_t j = 0; j < feature_dim; ++j)
                    design(row, static_cast<std::size_t>(k) * feature_dim + j) = x[j];
            }
            design(row, width - 1) = 1.0;
            const Vec& y = s.targets[t];
            if (y.size() != alphabet) throw DimensionError("fit_var: inconsistent target size in '" + s.source + "'");
            for (std::size_t j = 0; j < alphabet; ++j) targets(row, j) = y[j];
            row += 1;
        }
    }

    const Mat coef = solve_ols(design, targets);
    VarModel model;
    model.lag = lag;
    model.feature_dim = static_cast<int>(feature_dim);
    model.alphabet = static_cast<int>(alphabet);
    model.intercept.resize(alphabet);
    for (int k = 0; k < lag; ++k) {
        Mat a(alphabet, feature_dim);
        for (std::size_t out = 0; out < alphabet; ++out)
            for (std::size_t j = 0; j < feature_dim; ++j)
                a(out, j) = coef(static_cast<std::size_t>(k) * feature_dim + j, out);
        model.coef.push_back(std::move(a));
    }
    for (std::size_t out = 0; out < alphabet; ++out) model.intercept[out] = coef(width - 1, out);
    return model;
}

// y_hat = c + sum_k A_k x_{t+1-k}, entries clipped to [0,1] and deliberately
// not renormalized: the baseline stays a plain linear model.
inline Vec var_predict(const VarModel& model, const std::vector<Vec>& history) {
    Vec y = model.intercept;
    for (int k = 0; k < model.lag; ++k) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(history.size()) - 1 - k;
        if (src < 0) continue;
        const Vec& x = history[static_cast<std::size_t>(src)];
        if (x.size() != static_cast<std::size_t>(model.feature_dim)) throw DimensionError("var_predict: history feature size mismatch");
        axpy(1.0, matvec(model.coef[static_cast<std::size_t>(k)], x), y);
    }
    for (double& v : y) v = std::clamp(v, 0.0, 1.0);
    return y;
}

// ---------------------------------------------------------------------------
// Logistic regression on handcrafted round features (IPD only)
// ---------------------------------------------------------------------------

inline constexpr int kLrFeatureDim = 9;

// Feature layout, in order: one-hot of the focal agent's last action,
// one-hot of the opponent's last action, both-cooperated and both-defected
// indicators, round index t / horizon, then (R-P)/(T-S) and (T-R)/(T-S)
// when a payoff spec is known (zeros otherwise). t is the 1-based index of
// the last observed round.
inline Vec build_lr_features(const Trajectory& traj, int focal, int t, const GameSpec* spec) {
    if (t < 1) throw UsageError("build_lr_features: t must be >= 1 (no history at t=0)");
    if (traj.game_kind != GameKind::IPD) throw UsageError("build_lr_features: IPD trajectories only");
    if (static_cast<std::size_t>(t) > traj.length()) throw UsageError("build_lr_features: t beyond trajectory length");
    const Action own = traj.actions[static_cast<std::size_t>(focal)][static_cast<std::size_t>(t - 1)];
    const Action opp = traj.actions[static_cast<std::size_t>(1 - focal)][static_cast<std::size_t>(t - 1)];
    Vec f;
    f.reserve(kLrFeatureDim);
    const Vec own_hot = encode_one_hot(own, kIpdAlphabet);
    const Vec opp_hot = encode_one_hot(opp, kIpdAlphabet);
    f.insert(f.end(), own_hot.begin(), own_hot.end());
    f.insert(f.end(), opp_hot.begin(), opp_hot.end());
    f.push_back(own == kCooperate && opp == kCooperate ? 1.0 : 0.0);
    f.push_back(own == kDefect && opp == kDefect ? 1.0 : 0.0);
    f.push_back(static_cast<double>(t) / static_cast<double>(traj.length()));
    if (spec) {
        const double span = spec->temptation - spec->sucker;
        f.push_back((spec->reward - spec->penalty) / span);
        f.push_back((spec->temptation - spec->reward) / span);
    } else {
        f.push_back(0.0);
        f.push_back(0.0);
    }
    return f;
}

// Same features assembled from a supervised step: inputs[i] holds the two
// one-hots, i+1 is the 1-based round index. Kept in lockstep with
// build_lr_features (tested against it).
inline Vec lr_features_from_step(const SupervisedSequence& seq, std::size_t i) {
    const Vec& in = seq.inputs.at(i);
    if (in.size() != 4) throw DimensionError("lr_features_from_step: expected 4 input features (IPD one-hots), got " + std::to_string(in.size()));
    Vec f;
    f.reserve(kLrFeatureDim);
    f.insert(f.end(), in.begin(), in.end());
    f.push_back(in[1] * in[3]);
    f.push_back(in[0] * in[2]);
    f.push_back(static_cast<double>(i + 1) / static_cast<double>(seq.horizon));
    f.push_back(seq.payoff_features.size() == 2 ? seq.payoff_features[0] : 0.0);
    f.push_back(seq.payoff_features.size() == 2 ? seq.payoff_features[1] : 0.0);
    return f;
}

struct LogisticModel {
    Vec weights;
    double bias = 0.0;

    double predict(const Vec& features) const {
        if (features.size() != weights.size()) throw DimensionError("logistic predict: feature size mismatch");
        return sigmoid(dot(weights, features) + bias);
    }
};

struct LogisticRow {
    Vec features;
    int cooperated;  // 0/1 label
};

// Full-batch Adam on the L2-penalized mean negative log-likelihood (bias
// unpenalized), run to gradient norm < 1e-6 or 5000 iterations. The step
// size holds at 0.1 long enough to cover the slowly receding optimum of
// near-separable data, then decays geometrically so the iterate settles
// instead of orbiting.
inline LogisticModel fit_logistic(const std::vector<LogisticRow>& rows, double l2) {
    if (rows.empty()) throw DataError("fit_logistic: no training rows");
    if (l2 < 0.0) throw UsageError("fit_logistic: l2 must be >= 0");
    const std::size_t dim = rows.front().features.size();
    for (const auto& r : rows)
        if (r.features.size() != dim) throw DimensionError("fit_logistic: inconsistent feature sizes");

    const double inv_n = 1.0 / static_cast<double>(rows.size());
    Vec theta(dim + 1, 0.0);  // weights then bias
    Mat theta_mat(1, dim + 1);
    AdamState adam = AdamState::for_param(theta_mat);

    for (int iter = 0; iter < 5000; ++iter) {
        Vec grad(dim + 1, 0.0);
        for (const auto& r : rows) {
            double z = theta[dim];
            for (std::size_t j = 0; j < dim; ++j) z += theta[j] * r.features[j];
            const double delta = (sigmoid(z) - static_cast<double>(r.cooperated)) * inv_n;
            for (std::size_t j = 0; j < dim; ++j) grad[j] += delta * r.features[j];
            grad[dim] += delta;
        }
        for (std::size_t j = 0; j < dim; ++j) grad[j] += 2.0 * l2 * theta[j];
        if (norm2(grad) < 1e-6) break;

        adam.learning_rate = iter < 2500 ? 0.1 : 0.1 * std::pow(10.0, -5.0 * (iter - 2500) / 2500.0);
        Mat grad_mat(1, dim + 1);
        grad_mat.v = grad;
        theta_mat.v = theta;
        auto [next_theta, next_state] = adam_step(theta_mat, grad_mat, adam);
        theta = next_theta.v;
        adam = std::move(next_state);
    }

    LogisticModel model;
    model.weights.assign(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(dim));
    model.bias = theta[dim];
    return model;
}

// Training rows for a set of IPD supervised sequences: features at step i,
// label = focal agent cooperated at step i+1.
inline std::vector<LogisticRow> logistic_rows(const std::vector<SupervisedSequence>& sequences) {
    std::vector<LogisticRow> rows;
    for (const auto& seq : sequences)
        for (std::size_t i = 0; i < seq.targets.size(); ++i) {
            if (seq.targets[i].size() != 2) throw DimensionError("logistic_rows: IPD sequences only");
            rows.push_back({lr_features_from_step(seq, i), seq.targets[i][kCooperate] > 0.5 ? 1 : 0});
        }
    return rows;
}

}  // namespace nextact
