#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "nextact/baselines.hpp"
#include "nextact/evaluation.hpp"
#include "nextact/predictors.hpp"

using namespace nextact;
using Catch::Matchers::WithinAbs;

namespace {

SupervisedSequence alternating_ipd(int steps, Action first) {
    // focal alternates C,D,...; opponent mirrors with one step of delay
    SupervisedSequence seq;
    seq.source = "alt";
    seq.horizon = steps + 1;
    seq.payoff_features = {0.4, 0.4};
    Action own = first;
    for (int t = 0; t < steps; ++t) {
        Vec input = encode_one_hot(own, 2);
        const Vec opp = encode_one_hot(1 - own, 2);
        input.insert(input.end(), opp.begin(), opp.end());
        seq.inputs.push_back(input);
        own = 1 - own;
        seq.targets.push_back(encode_one_hot(own, 2));
    }
    return seq;
}

SupervisedSequence constant_ipd(int steps, Action value) {
    SupervisedSequence seq;
    seq.source = "const";
    seq.horizon = steps + 1;
    seq.payoff_features = {0.4, 0.4};
    for (int t = 0; t < steps; ++t) {
        Vec input = encode_one_hot(value, 2);
        const Vec opp = encode_one_hot(value, 2);
        input.insert(input.end(), opp.begin(), opp.end());
        seq.inputs.push_back(input);
        seq.targets.push_back(encode_one_hot(value, 2));
    }
    return seq;
}

// Hand-rolled normal-equations solver by Gauss-Jordan inversion; a separate
// route from solve_ols, including its own row stacking and zero padding.
Mat var_oracle_coef(const std::vector<SupervisedSequence>& seqs, int lag, double ridge = 1e-8) {
    const std::size_t f = seqs[0].inputs[0].size();
    const std::size_t a = seqs[0].targets[0].size();
    const std::size_t width = static_cast<std::size_t>(lag) * f + 1;
    std::vector<Vec> rows;
    std::vector<Vec> ys;
    for (const auto& s : seqs)
        for (std::size_t t = 0; t < s.targets.size(); ++t) {
            Vec row(width, 0.0);
            for (int k = 0; k < lag; ++k) {
                const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) - k;
                if (src < 0) continue;
                for (std::size_t j = 0; j < f; ++j) row[static_cast<std::size_t>(k) * f + j] = s.inputs[static_cast<std::size_t>(src)][j];
            }
            row[width - 1] = 1.0;
            rows.push_back(row);
            ys.push_back(s.targets[t]);
        }

    // G = X^T X + ridge I, inverted by Gauss-Jordan
    Mat g(width, width);
    for (const Vec& row : rows)
        for (std::size_t i = 0; i < width; ++i)
            for (std::size_t j = 0; j < width; ++j) g(i, j) += row[i] * row[j];
    for (std::size_t i = 0; i < width; ++i) g(i, i) += ridge;

    Mat inv = Mat::identity(width);
    for (std::size_t col = 0; col < width; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < width; ++r)
            if (std::fabs(g(r, col)) > std::fabs(g(piv, col))) piv = r;
        for (std::size_t c = 0; c < width; ++c) {
            std::swap(g(col, c), g(piv, c));
            std::swap(inv(col, c), inv(piv, c));
        }
        const double d = g(col, col);
        for (std::size_t c = 0; c < width; ++c) {
            g(col, c) /= d;
            inv(col, c) /= d;
        }
        for (std::size_t r = 0; r < width; ++r) {
            if (r == col) continue;
            const double fct = g(r, col);
            if (fct == 0.0) continue;
            for (std::size_t c = 0; c < width; ++c) {
                g(r, c) -= fct * g(col, c);
                inv(r, c) -= fct * inv(col, c);
            }
        }
    }

    Mat coef(width, a);
    for (std::size_t i = 0; i < width; ++i)
        for (std::size_t out = 0; out < a; ++out) {
            double rhs = 0.0;
            for (std::size_t r = 0; r < rows.size(); ++r) {
                double xi = 0.0;
                for (std::size_t j = 0; j < width; ++j) xi += inv(i, j) * rows[r][j];
                rhs += xi * ys[r][out];
            }
            coef(i, out) = rhs;
        }
    return coef;
}

}  // namespace

TEST_CASE("var learns an exact linear recurrence") {
    std::vector<SupervisedSequence> train;
    for (int i = 0; i < 4; ++i) {
        SupervisedSequence s = alternating_ipd(8, i % 2);
        s.traj_index = static_cast<std::size_t>(i);
        train.push_back(s);
    }
    const VarModel model = fit_var(train, 1);

    Model wrapped;
    wrapped.impl = model;
    wrapped.game_kind = GameKind::IPD;
    const SupervisedSequence held_out = alternating_ipd(8, kDefect);
    const auto preds = predict_sequence(wrapped, held_out);
    const Vec mse = mse_per_step({preds}, {held_out.targets});
    for (double v : mse) REQUIRE(v < 1e-6);
}

TEST_CASE("var reproduces a constant sequence") {
    std::vector<SupervisedSequence> train = {constant_ipd(8, kCooperate)};
    const VarModel model = fit_var(train, 1);
    const Vec pred = var_predict(model, train[0].inputs);
    REQUIRE_THAT(pred[kCooperate], WithinAbs(1.0, 1e-6));
    REQUIRE_THAT(pred[kDefect], WithinAbs(0.0, 1e-6));
}

TEST_CASE("var coefficients match the normal-equations oracle") {
    // full-rank real-valued features keep the damped system well conditioned,
    // so the two routes must agree at coefficient level; the rank-deficient
    // one-hot case is covered by the pseudo-inverse residual oracle
    Rng rng(21);
    std::vector<SupervisedSequence> train;
    for (int i = 0; i < 6; ++i) {
        SupervisedSequence s;
        s.source = "r" + std::to_string(i);
        s.traj_index = static_cast<std::size_t>(i);
        s.horizon = 9;
        s.payoff_features = {0.4, 0.4};
        for (int t = 0; t < 8; ++t) {
            Vec input(4);
            for (double& v : input) v = 2.0 * rng.uniform() - 1.0;
            s.inputs.push_back(input);
            s.targets.push_back(encode_one_hot(static_cast<Action>(rng.below(2)), 2));
        }
        train.push_back(std::move(s));
    }
    for (int lag : {1, 2, 3}) {
        const VarModel model = fit_var(train, lag);
        const Mat oracle = var_oracle_coef(train, lag);
        const std::size_t f = 4;
        for (int k = 0; k < lag; ++k)
            for (std::size_t out = 0; out < 2; ++out)
                for (std::size_t j = 0; j < f; ++j)
                    REQUIRE_THAT(model.coef[static_cast<std::size_t>(k)](out, j),
                                 WithinAbs(oracle(static_cast<std::size_t>(k) * f + j, out), 1e-8));
        for (std::size_t out = 0; out < 2; ++out)
            REQUIRE_THAT(model.intercept[out], WithinAbs(oracle(static_cast<std::size_t>(lag) * f, out), 1e-8));
    }
}

TEST_CASE("fit_var is invariant to sequence order") {
    Rng rng(61);
    std::vector<SupervisedSequence> train;
    for (int i = 0; i < 5; ++i) {
        SupervisedSequence s;
        s.source = "o" + std::to_string(i);
        s.traj_index = static_cast<std::size_t>(i);
        s.horizon = 9;
        s.payoff_features = {0.4, 0.4};
        for (int t = 0; t < 8; ++t) {
            Vec input = encode_one_hot(static_cast<Action>(rng.below(2)), 2);
            const Vec opp = encode_one_hot(static_cast<Action>(rng.below(2)), 2);
            input.insert(input.end(), opp.begin(), opp.end());
            s.inputs.push_back(input);
            s.targets.push_back(encode_one_hot(static_cast<Action>(rng.below(2)), 2));
        }
        train.push_back(std::move(s));
    }
    std::vector<SupervisedSequence> reversed(train.rbegin(), train.rend());
    const VarModel a = fit_var(train, 2);
    const VarModel b = fit_var(reversed, 2);
    // stacking order only reorders floating-point sums
    for (int k = 0; k < 2; ++k)
        for (std::size_t i = 0; i < a.coef[static_cast<std::size_t>(k)].v.size(); ++i)
            REQUIRE_THAT(a.coef[static_cast<std::size_t>(k)].v[i],
                         WithinAbs(b.coef[static_cast<std::size_t>(k)].v[i], 1e-10));
    for (std::size_t i = 0; i < a.intercept.size(); ++i)
        REQUIRE_THAT(a.intercept[i], WithinAbs(b.intercept[i], 1e-10));
}

TEST_CASE("var_predict clips and zero-pads") {
    VarModel model;
    model.lag = 1;
    model.feature_dim = 2;
    model.alphabet = 2;
    model.intercept = {1.2, -0.3};
    Mat a(2, 2);
    a.v = {0.0, 0.0, 0.0, 0.0};
    model.coef = {a};
    const Vec clipped = var_predict(model, {Vec{1.0, 0.0}});
    REQUIRE(clipped[0] == 1.0);  // 1.2 clipped down
    REQUIRE(clipped[1] == 0.0);  // -0.3 clipped up

    VarModel real;
    real.lag = 3;
    real.feature_dim = 2;
    real.alphabet = 2;
    real.intercept = {0.25, 0.5};
    Mat b(2, 2);
    b.v = {0.1, 0.2, 0.3, 0.4};
    real.coef = {b, b, b};
    const Vec no_history = var_predict(real, {});
    const Vec padded = var_predict(real, std::vector<Vec>(3, Vec{0.0, 0.0}));
    REQUIRE(no_history == padded);
}

TEST_CASE("build_lr_features assembles the documented layout") {
    Trajectory traj;
    traj.game_kind = GameKind::IPD;
    traj.source = "t";
    traj.actions = {{kCooperate, kDefect, kCooperate, kDefect, kCooperate, kDefect, kCooperate, kDefect, kCooperate},
                    {kCooperate, kCooperate, kDefect, kDefect, kCooperate, kCooperate, kDefect, kDefect, kCooperate}};
    GameSpec spec;  // T=5 R=3 P=1 S=0

    const Vec f1 = build_lr_features(traj, 0, 1, &spec);
    REQUIRE(f1.size() == 9);
    REQUIRE(f1 == Vec{0, 1, 0, 1, 1, 0, 1.0 / 9.0, 0.4, 0.4});

    // (D,D) at t=4 sets the both-defected indicator
    const Vec f4 = build_lr_features(traj, 0, 4, &spec);
    REQUIRE(f4[5] == 1.0);
    REQUIRE(f4[4] == 0.0);
    REQUIRE(f4.size() == f1.size());

    const Vec no_spec = build_lr_features(traj, 0, 2, nullptr);
    REQUIRE(no_spec[7] == 0.0);
    REQUIRE(no_spec[8] == 0.0);

    REQUIRE_THROWS_AS(build_lr_features(traj, 0, 0, &spec), UsageError);
}

TEST_CASE("lr features from supervised steps agree with build_lr_features") {
    GameSpec spec;
    SynthPolicy tft{PolicyKind::TitForTat};
    SynthPolicy noisy{PolicyKind::AlwaysDefect};
    noisy.noise = 0.3;
    const Trajectory traj = simulate_ipd(tft, noisy, spec, 9, 17);
    const auto seqs = to_supervised(traj);
    for (const auto& seq : seqs)
        for (std::size_t i = 0; i < seq.targets.size(); ++i) {
            const Vec direct = build_lr_features(traj, seq.focal_agent, static_cast<int>(i) + 1, &*traj.spec);
            const Vec derived = lr_features_from_step(seq, i);
            for (std::size_t j = 0; j < direct.size(); ++j) REQUIRE_THAT(derived[j], WithinAbs(direct[j], 1e-15));
        }
}

TEST_CASE("logistic fit separates separable data") {
    Rng rng(31);
    std::vector<LogisticRow> rows;
    for (int i = 0; i < 60; ++i) {
        const double x = 2.0 * rng.uniform() - 1.0;
        rows.push_back({Vec{x, rng.uniform()}, x > 0.0 ? 1 : 0});
    }
    const LogisticModel model = fit_logistic(rows, 1e-4);
    for (const auto& row : rows) REQUIRE((model.predict(row.features) > 0.5) == (row.cooperated == 1));

    // stop rule: the penalized mean-NLL gradient is tiny at the returned point
    Vec grad(3, 0.0);
    for (const auto& row : rows) {
        const double delta = (model.predict(row.features) - row.cooperated) / static_cast<double>(rows.size());
        grad[0] += delta * row.features[0];
        grad[1] += delta * row.features[1];
        grad[2] += delta;
    }
    grad[0] += 2.0 * 1e-4 * model.weights[0];
    grad[1] += 2.0 * 1e-4 * model.weights[1];
    REQUIRE(norm2(grad) < 1e-6);
}

TEST_CASE("logistic degenerate labels saturate") {
    std::vector<LogisticRow> rows;
    Rng rng(41);
    for (int i = 0; i < 40; ++i) rows.push_back({Vec{rng.uniform(), rng.uniform()}, 1});
    const LogisticModel model = fit_logistic(rows, 1e-6);
    for (const auto& row : rows) REQUIRE(model.predict(row.features) > 0.99);
}

TEST_CASE("predict_sequence is aligned and causal for every model kind") {
    GameSpec spec;
    SynthPolicy tft{PolicyKind::TitForTat};
    SynthPolicy wsls{PolicyKind::WinStayLoseShift};
    wsls.noise = 0.25;
    std::vector<SupervisedSequence> train;
    Dataset ds;
    ds.game_kind = GameKind::IPD;
    ds.alphabet = 2;
    ds.horizon = 9;
    for (int i = 0; i < 20; ++i) {
        Trajectory t = simulate_ipd(tft, wsls, spec, 9, 100 + static_cast<std::uint64_t>(i));
        t.source = "m" + std::to_string(i);
        ds.trajectories.push_back(t);
    }
    std::vector<std::size_t> every(ds.size());
    for (std::size_t i = 0; i < every.size(); ++i) every[i] = i;
    train = sequences_for(ds, every);

    TrainConfig config;
    config.epochs = 5;
    config.seed = 3;
    Model lstm;
    lstm.impl = train_lstm(train, config).params;
    lstm.game_kind = GameKind::IPD;
    Model var;
    var.impl = fit_var(train, 2);
    var.game_kind = GameKind::IPD;
    Model logistic;
    logistic.impl = fit_logistic(logistic_rows(train), 1e-4);
    logistic.game_kind = GameKind::IPD;

    const SupervisedSequence& probe = train.front();
    for (const Model* model : {&lstm, &var, &logistic}) {
        const auto full = predict_sequence(*model, probe);
        REQUIRE(full.size() == probe.targets.size());

        // truncating after the cut must not move earlier predictions
        SupervisedSequence truncated = probe;
        truncated.inputs.resize(5);
        truncated.targets.resize(5);
        const auto head = predict_sequence(*model, truncated);
        for (std::size_t t = 0; t < 5; ++t) REQUIRE(head[t] == full[t]);

        // neither must flipping every action in the suffix
        SupervisedSequence perturbed = probe;
        for (std::size_t t = 5; t < perturbed.inputs.size(); ++t)
            for (double& v : perturbed.inputs[t]) v = 1.0 - v;
        const auto mangled = predict_sequence(*model, perturbed);
        for (std::size_t t = 0; t < 5; ++t) REQUIRE(mangled[t] == full[t]);
    }
}
