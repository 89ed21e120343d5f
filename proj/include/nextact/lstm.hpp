#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "nextact/dataset.hpp"
#include "nextact/errors.hpp"
#include "nextact/numerics.hpp"
#include "nextact/rng.hpp"

namespace nextact {

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

struct LstmLayerParams {
    Mat Wi, Wf, Wo, Wg;  // input weights, hidden x in
    Mat Ui, Uf, Uo, Ug;  // recurrent weights, hidden x hidden
    Vec bi, bf, bo, bg;  // biases
};

struct LstmParams {
    int feature_dim = 0;
    int hidden = 0;
    int alphabet = 0;
    std::vector<LstmLayerParams> layers;
    Mat Wy;  // alphabet x hidden
    Vec by;

    int n_layers() const { return static_cast<int>(layers.size()); }
};

// Uniform +-1/sqrt(fan_in) weights; forget-gate biases start at 1 so early
// training does not wipe the cell state, all other biases at 0.
inline LstmParams init_lstm(int feature_dim, int alphabet, std::uint64_t seed, int hidden = 10, int n_layers = 2) {
    if (feature_dim < 1 || alphabet < 1 || hidden < 1 || n_layers < 1) throw UsageError("init_lstm: dims must be >= 1");
    Rng rng(seed);
    auto uniform_mat = [&](std::size_t rows, std::size_t cols) {
        Mat m(rows, cols);
        const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
        for (double& x : m.v) x = (2.0 * rng.uniform() - 1.0) * bound;
        return m;
    };
    LstmParams p;
    p.feature_dim = feature_dim;
    p.hidden = hidden;
    p.alphabet = alphabet;
    const auto h = static_cast<std::size_t>(hidden);
    for (int l = 0; l < n_layers; ++l) {
        const auto in = static_cast<std::size_t>(l == 0 ? feature_dim : hidden);
        LstmLayerParams lp;
        lp.Wi = uniform_mat(h, in);
        lp.Wf = uniform_mat(h, in);
        lp.Wo = uniform_mat(h, in);
        lp.Wg = uniform_mat(h, in);
        lp.Ui = uniform_mat(h, h);
        lp.Uf = uniform_mat(h, h);
        lp.Uo = uniform_mat(h, h);
        lp.Ug = uniform_mat(h, h);
        lp.bi = Vec(h, 0.0);
        lp.bf = Vec(h, 1.0);
        lp.bo = Vec(h, 0.0);
        lp.bg = Vec(h, 0.0);
        p.layers.push_back(std::move(lp));
    }
    p.Wy = uniform_mat(static_cast<std::size_t>(alphabet), h);
    p.by = Vec(static_cast<std::size_t>(alphabet), 0.0);
    return p;
}

// Flat parameter order: per layer Wi,Wf,Wo,Wg,Ui,Uf,Uo,Ug,bi,bf,bo,bg,
// then Wy,by. Checkpoints, Adam state and finite differences all share it.
inline void for_each_tensor(LstmParams& p, const std::function<void(Vec&)>& fn) {
    for (auto& l : p.layers) {
        fn(l.Wi.v); fn(l.Wf.v); fn(l.Wo.v); fn(l.Wg.v);
        fn(l.Ui.v); fn(l.Uf.v); fn(l.Uo.v); fn(l.Ug.v);
        fn(l.bi); fn(l.bf); fn(l.bo); fn(l.bg);
    }
    fn(p.Wy.v);
    fn(p.by);
}

inline void for_each_tensor(const LstmParams& p, const std::function<void(const Vec&)>& fn) {
    for (const auto& l : p.layers) {
        fn(l.Wi.v); fn(l.Wf.v); fn(l.Wo.v); fn(l.Wg.v);
        fn(l.Ui.v); fn(l.Uf.v); fn(l.Uo.v); fn(l.Ug.v);
        fn(l.bi); fn(l.bf); fn(l.bo); fn(l.bg);
    }
    fn(p.Wy.v);
    fn(p.by);
}

inline Vec lstm_to_flat(const LstmParams& params) {
    Vec flat;
    for_each_tensor(params, [&](const Vec& t) { flat.insert(flat.end(), t.begin(), t.end()); });
    return flat;
}

inline LstmParams lstm_from_flat(const LstmParams& shape, const Vec& flat) {
    LstmParams out = shape;
    std::size_t pos = 0;
    for_each_tensor(out, [&](Vec& t) {
        if (pos + t.size() > flat.size()) throw DimensionError("lstm_from_flat: flat vector too short");
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(pos), flat.begin() + static_cast<std::ptrdiff_t>(pos + t.size()), t.begin());
        pos += t.size();
    });
    if (pos != flat.size()) throw DimensionError("lstm_from_flat: flat vector has " + std::to_string(flat.size()) + " entries, expected " + std::to_string(pos));
    return out;
}

inline std::size_t lstm_param_count(const LstmParams& params) {
    std::size_t n = 0;
    for_each_tensor(params, [&](const Vec& t) { n += t.size(); });
    return n;
}

// Grad containers reuse the parameter layout.
inline LstmParams zeros_like(const LstmParams& p) {
    LstmParams z = p;
    for_each_tensor(z, [](Vec& t) { std::fill(t.begin(), t.end(), 0.0); });
    return z;
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

struct LstmState {
    std::vector<Vec> h;  // per layer
    std::vector<Vec> c;
};

inline LstmState zero_state(const LstmParams& p) {
    LstmState s;
    s.h.assign(static_cast<std::size_t>(p.n_layers()), Vec(static_cast<std::size_t>(p.hidden), 0.0));
    s.c = s.h;
    return s;
}

struct CellOutput {
    Vec h, c;
    Vec i, f, o, g, tanh_c;  // kept for backprop
};

// One step of one layer: i,f,o = sigma(Wx + Uh + b), g = tanh(...),
// c' = f.c + i.g, h' = o.tanh(c').
inline CellOutput lstm_cell(const LstmLayerParams& lp, const Vec& x, const Vec& h_prev, const Vec& c_prev) {
    if (x.size() != lp.Wi.cols) throw DimensionError("lstm_cell: input has size " + std::to_string(x.size()) + ", expected " + std::to_string(lp.Wi.cols));
    if (h_prev.size() != lp.Ui.cols || c_prev.size() != lp.Ui.cols) throw DimensionError("lstm_cell: state size mismatch");
    const std::size_t H = lp.bi.size();
    CellOutput out;
    out.i = matvec(lp.Wi, x); out.f = matvec(lp.Wf, x); out.o = matvec(lp.Wo, x); out.g = matvec(lp.Wg, x);
    const Vec ui = matvec(lp.Ui, h_prev), uf = matvec(lp.Uf, h_prev), uo = matvec(lp.Uo, h_prev), ug = matvec(lp.Ug, h_prev);
    out.c.resize(H);
    out.h.resize(H);
    out.tanh_c.resize(H);
    for (std::size_t k = 0; k < H; ++k) {
        out.i[k] = sigmoid(out.i[k] + ui[k] + lp.bi[k]);
        out.f[k] = sigmoid(out.f[k] + uf[k] + lp.bf[k]);
        out.o[k] = sigmoid(out.o[k] + uo[k] + lp.bo[k]);
        out.g[k] = std::tanh(out.g[k] + ug[k] + lp.bg[k]);
        out.c[k] = out.f[k] * c_prev[k] + out.i[k] * out.g[k];
        out.tanh_c[k] = std::tanh(out.c[k]);
        out.h[k] = out.o[k] * out.tanh_c[k];
    }
    return out;
}

namespace detail {

// Everything the backward pass needs, laid out [layer][time].
struct ForwardTrace {
    std::vector<std::vector<CellOutput>> cells;
    std::vector<std::vector<Vec>> layer_inputs;
    std::vector<Vec> logits;
    std::vector<Vec> probs;
};

inline ForwardTrace lstm_forward_trace(const LstmParams& p, const std::vector<Vec>& inputs) {
    const auto L = static_cast<std::size_t>(p.n_layers());
    ForwardTrace tr;
    tr.cells.resize(L);
    tr.layer_inputs.resize(L);
    LstmState state = zero_state(p);
    for (const Vec& x : inputs) {
        Vec cur = x;
        for (std::size_t l = 0; l < L; ++l) {
            tr.layer_inputs[l].push_back(cur);
            CellOutput cell = lstm_cell(p.layers[l], cur, state.h[l], state.c[l]);
            state.h[l] = cell.h;
            state.c[l] = cell.c;
            cur = cell.h;
            tr.cells[l].push_back(std::move(cell));
        }
        Vec logits = matvec(p.Wy, cur);
        axpy(1.0, p.by, logits);
        tr.probs.push_back(softmax(logits));
        tr.logits.push_back(std::move(logits));
    }
    return tr;
}

}  // namespace detail

// Runs the stacked network from zero state over the whole sequence.
// probs[t] is the next-action distribution after consuming inputs[0..t].
inline std::pair<std::vector<Vec>, LstmState> lstm_forward(const LstmParams& p, const std::vector<Vec>& inputs) {
    LstmState state = zero_state(p);
    std::vector<Vec> probs;
    probs.reserve(inputs.size());
    for (const Vec& x : inputs) {
        Vec cur = x;
        for (std::size_t l = 0; l < state.h.size(); ++l) {
            CellOutput cell = lstm_cell(p.layers[l], cur, state.h[l], state.c[l]);
            state.h[l] = cell.h;
            state.c[l] = cell.c;
            cur = std::move(cell.h);
        }
        Vec logits = matvec(p.Wy, cur);
        axpy(1.0, p.by, logits);
        probs.push_back(softmax(logits));
    }
    return {std::move(probs), std::move(state)};
}

// ---------------------------------------------------------------------------
// Loss and backpropagation through time
// ---------------------------------------------------------------------------

// Mean cross-entropy of the sequence under the current parameters.
inline double lstm_loss(const LstmParams& p, const SupervisedSequence& seq) {
    if (seq.targets.empty()) throw DataError("lstm_loss: sequence '" + seq.source + "' has no targets");
    const auto [probs, state] = lstm_forward(p, seq.inputs);
    (void)state;
    double total = 0.0;
    for (std::size_t t = 0; t < seq.targets.size(); ++t) {
        double ce = 0.0;
        for (std::size_t a = 0; a < seq.targets[t].size(); ++a)
            if (seq.targets[t][a] != 0.0) ce -= seq.targets[t][a] * std::log(std::max(probs[t][a], 1e-300));
        if (!std::isfinite(ce)) throw NumericError("lstm_loss: non-finite loss at step " + std::to_string(t));
        total += ce;
    }
    return total / static_cast<double>(seq.targets.size());
}

// Exact gradients of the mean cross-entropy via full BPTT. Grads come back
// shaped exactly like the parameters.
inline std::pair<LstmParams, double> lstm_bptt(const LstmParams& p, const SupervisedSequence& seq) {
    if (seq.targets.empty() || seq.inputs.empty())
        throw DataError("lstm_bptt: degenerate sequence '" + seq.source + "'");
    if (seq.inputs.size() != seq.targets.size())
        throw DimensionError("lstm_bptt: inputs/targets length mismatch in '" + seq.source + "'");
    const auto T = seq.inputs.size();
    const auto L = static_cast<std::size_t>(p.n_layers());
    const auto H = static_cast<std::size_t>(p.hidden);
    const double inv_t = 1.0 / static_cast<double>(T);

    const detail::ForwardTrace tr = detail::lstm_forward_trace(p, seq.inputs);

    LstmParams grads = zeros_like(p);
    double loss = 0.0;

    // Output head first; collect dL/dh for the top layer at every step.
    std::vector<Vec> dh_above(T, Vec(H, 0.0));
    for (std::size_t t = 0; t < T; ++t) {
        const Vec& y = seq.targets[t];
        if (y.size() != static_cast<std::size_t>(p.alphabet)) throw DimensionError("lstm_bptt: target size mismatch at step " + std::to_string(t));
        double ce = log_sum_exp(tr.logits[t]);
        for (std::size_t a = 0; a < y.size(); ++a) ce -= y[a] * tr.logits[t][a];
        if (!std::isfinite(ce)) throw NumericError("lstm_bptt: non-finite loss at step " + std::to_string(t));
        loss += ce * inv_t;

        Vec dlogits(y.size());
        for (std::size_t a = 0; a < y.size(); ++a) dlogits[a] = (tr.probs[t][a] - y[a]) * inv_t;
        add_outer(grads.Wy, dlogits, tr.cells[L - 1][t].h);
        axpy(1.0, dlogits, grads.by);
        const Vec back = matvec_t(p.Wy, dlogits);
        axpy(1.0, back, dh_above[t]);
    }

    // Walk layers top-down; within a layer, time runs backwards.
    const Vec zeros(H, 0.0);
    for (std::size_t l = L; l-- > 0;) {
        const LstmLayerParams& lp = p.layers[l];
        LstmLayerParams& gl = grads.layers[l];
        std::vector<Vec> dx(T);
        Vec dh_next(H, 0.0), dc_next(H, 0.0);
        for (std::size_t t = T; t-- > 0;) {
            const CellOutput& cell = tr.cells[l][t];
            const Vec& h_prev = t > 0 ? tr.cells[l][t - 1].h : zeros;
            const Vec& c_prev = t > 0 ? tr.cells[l][t - 1].c : zeros;

            Vec dh = dh_above[t];
            axpy(1.0, dh_next, dh);

            Vec da_i(H), da_f(H), da_o(H), da_g(H), dc(H);
            for (std::size_t k = 0; k < H; ++k) {
                dc[k] = dc_next[k] + dh[k] * cell.o[k] * (1.0 - cell.tanh_c[k] * cell.tanh_c[k]);
                const double do_ = dh[k] * cell.tanh_c[k];
                da_o[k] = do_ * cell.o[k] * (1.0 - cell.o[k]);
                da_i[k] = dc[k] * cell.g[k] * cell.i[k] * (1.0 - cell.i[k]);
                da_f[k] = dc[k] * c_prev[k] * cell.f[k] * (1.0 - cell.f[k]);
                da_g[k] = dc[k] * cell.i[k] * (1.0 - cell.g[k] * cell.g[k]);
            }

            const Vec& x = tr.layer_inputs[l][t];
            add_outer(gl.Wi, da_i, x); add_outer(gl.Wf, da_f, x); add_outer(gl.Wo, da_o, x); add_outer(gl.Wg, da_g, x);
            add_outer(gl.Ui, da_i, h_prev); add_outer(gl.Uf, da_f, h_prev); add_outer(gl.Uo, da_o, h_prev); add_outer(gl.Ug, da_g, h_prev);
            axpy(1.0, da_i, gl.bi); axpy(1.0, da_f, gl.bf); axpy(1.0, da_o, gl.bo); axpy(1.0, da_g, gl.bg);

            dh_next = matvec_t(lp.Ui, da_i);
            axpy(1.0, matvec_t(lp.Uf, da_f), dh_next);
            axpy(1.0, matvec_t(lp.Uo, da_o), dh_next);
            axpy(1.0, matvec_t(lp.Ug, da_g), dh_next);
            for (std::size_t k = 0; k < H; ++k) dc_next[k] = dc[k] * cell.f[k];

            dx[t] = matvec_t(lp.Wi, da_i);
            axpy(1.0, matvec_t(lp.Wf, da_f), dx[t]);
            axpy(1.0, matvec_t(lp.Wo, da_o), dx[t]);
            axpy(1.0, matvec_t(lp.Wg, da_g), dx[t]);
        }
        if (l > 0)
            for (std::size_t t = 0; t < T; ++t) dh_above[t] = dx[t];
    }
    return {std::move(grads), loss};
}

// Sum of per-sequence BPTT gradients (flat layout) and losses; linear in
// the batch by construction.
inline std::pair<Vec, double> accumulate_bptt(const LstmParams& p, const std::vector<SupervisedSequence>& batch) {
    Vec total(lstm_param_count(p), 0.0);
    double loss = 0.0;
    for (const auto& seq : batch) {
        auto [g, l] = lstm_bptt(p, seq);
        axpy(1.0, lstm_to_flat(g), total);
        loss += l;
    }
    return {std::move(total), loss};
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
    int epochs = 200;
    double learning_rate = 0.01;
    int batch_size = 32;
    std::uint64_t seed = 0;
    double gradient_clip_norm = 5.0;
    double validation_fraction = 0.1;
    int early_stop_patience = 20;
    int hidden = 10;
    int n_layers = 2;

    void validate() const {
        if (epochs < 1 || learning_rate <= 0.0 || batch_size < 1 || gradient_clip_norm <= 0.0 || early_stop_patience < 1 || hidden < 1 || n_layers < 1)
            throw UsageError("train config: epochs, learning rate, batch size, clip norm, patience and dims must be positive");
        if (validation_fraction < 0.0 || validation_fraction > 0.5)
            throw UsageError("train config: validation_fraction must be in [0, 0.5]");
    }
};

struct EpochStats {
    int epoch;
    double train_ce;
    double val_ce;  // NaN when no validation split
};

struct TrainResult {
    LstmParams params;
    std::vector<EpochStats> history;
    int best_epoch = -1;
    double best_val_ce = std::numeric_limits<double>::quiet_NaN();
};

// Mini-batch Adam over summed-and-averaged BPTT gradients with global-norm
// clipping. A trajectory-grouped slice of the training sequences is held out
// for early stopping; the parameters returned are the best-validation ones.
inline TrainResult train_lstm(const std::vector<SupervisedSequence>& sequences, const TrainConfig& config) {
    config.validate();
    if (sequences.empty()) throw UsageError("train_lstm: no training sequences");
    const auto feature_dim = static_cast<int>(sequences[0].inputs.at(0).size());
    const auto alphabet = static_cast<int>(sequences[0].targets.at(0).size());

    // Group by source trajectory so IPD perspective pairs stay together.
    std::map<std::size_t, std::size_t> group_index;
    std::vector<std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < sequences.size(); ++i) {
        auto [it, inserted] = group_index.try_emplace(sequences[i].traj_index, groups.size());
        if (inserted) groups.push_back({});
        groups[it->second].push_back(i);
    }

    std::vector<std::size_t> train_idx, val_idx;
    const auto n_val_groups = static_cast<std::size_t>(std::llround(config.validation_fraction * static_cast<double>(groups.size())));
    if (n_val_groups > 0) {
        auto order = detail::shuffled_indices(groups.size(), config.seed ^ 0xda3e39cb94b95bdbULL);
        for (std::size_t gi = 0; gi < order.size(); ++gi)
            for (std::size_t si : groups[order[gi]])
                (gi < n_val_groups ? val_idx : train_idx).push_back(si);
        std::sort(train_idx.begin(), train_idx.end());
        std::sort(val_idx.begin(), val_idx.end());
    } else {
        for (std::size_t i = 0; i < sequences.size(); ++i) train_idx.push_back(i);
    }
    if (train_idx.empty()) throw UsageError("train_lstm: validation split left no training sequences");

    LstmParams params = init_lstm(feature_dim, alphabet, config.seed, config.hidden, config.n_layers);
    Vec flat = lstm_to_flat(params);
    Mat flat_mat(1, flat.size());
    flat_mat.v = flat;
    AdamState adam = AdamState::for_param(flat_mat, config.learning_rate);

    Rng shuffle_rng(config.seed ^ 0x5deece66d1234567ULL);
    TrainResult result;
    Vec best_flat = flat_mat.v;
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = -1;
    int since_best = 0;

    auto mean_loss = [&](const std::vector<std::size_t>& idx) {
        double acc = 0.0;
        for (std::size_t i : idx) acc += lstm_loss(params, sequences[i]);
        return acc / static_cast<double>(idx.size());
    };

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<std::size_t> order = train_idx;
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            Vec grad_flat(flat_mat.v.size(), 0.0);
            double batch_loss = 0.0;
            for (std::size_t bi = start; bi < stop; ++bi) {
                auto [g, l] = lstm_bptt(params, sequences[order[bi]]);
                axpy(1.0, lstm_to_flat(g), grad_flat);
                batch_loss += l;
            }
            const double inv_b = 1.0 / static_cast<double>(stop - start);
            for (double& x : grad_flat) x *= inv_b;
            if (!std::isfinite(batch_loss)) throw NumericError("train_lstm: divergence at epoch " + std::to_string(epoch));
            epoch_loss += batch_loss;

            const double gnorm = norm2(grad_flat);
            if (gnorm > config.gradient_clip_norm)
                for (double& x : grad_flat) x *= config.gradient_clip_norm / gnorm;

            Mat grad_mat(1, grad_flat.size());
            grad_mat.v = grad_flat;
            auto [new_flat, new_state] = adam_step(flat_mat, grad_mat, adam);
            flat_mat = std::move(new_flat);
            adam = std::move(new_state);
            params = lstm_from_flat(params, flat_mat.v);
        }
        epoch_loss /= static_cast<double>(order.size());

        EpochStats stats{epoch, epoch_loss, std::numeric_limits<double>::quiet_NaN()};
        if (!val_idx.empty()) {
            stats.val_ce = mean_loss(val_idx);
            if (stats.val_ce < best_val) {
                best_val = stats.val_ce;
                best_flat = flat_mat.v;
                best_epoch = epoch;
                since_best = 0;
            } else {
                since_best += 1;
            }
        }
        result.history.push_back(stats);
        if (!val_idx.empty() && since_best >= config.early_stop_patience) break;
    }

    if (!val_idx.empty()) {
        result.params = lstm_from_flat(params, best_flat);
        result.best_epoch = best_epoch;
        result.best_val_ce = best_val;
    } else {
        result.params = params;
    }
    return result;
}

// ---------------------------------------------------------------------------
// Gradient verification harness
// ---------------------------------------------------------------------------

// Max relative error between BPTT and central finite differences on a small
// random instance (3 steps). corrupt injects a deliberate error so the
// failure path of the check itself can be exercised.
inline double lstm_gradcheck(std::uint64_t seed, bool corrupt = false, double h = 1e-5) {
    Rng rng(seed);
    const int feature_dim = 4, alphabet = 4;
    LstmParams params = init_lstm(feature_dim, alphabet, seed, 10, 2);
    SupervisedSequence seq;
    seq.source = "gradcheck";
    for (int t = 0; t < 3; ++t) {
        seq.inputs.push_back(encode_one_hot(static_cast<Action>(rng.below(4)), feature_dim));
        seq.targets.push_back(encode_one_hot(static_cast<Action>(rng.below(4)), alphabet));
    }

    auto [grads, loss] = lstm_bptt(params, seq);
    (void)loss;
    Vec analytic = lstm_to_flat(grads);
    if (corrupt && !analytic.empty()) analytic[analytic.size() / 2] += 1e-3;

    const Vec flat = lstm_to_flat(params);
    const Vec numeric = finite_diff_grad(
        [&](const Vec& theta) { return lstm_loss(lstm_from_flat(params, theta), seq); }, flat, h);

    double max_rel = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric[i]), 1e-6});
        max_rel = std::max(max_rel, std::fabs(analytic[i] - numeric[i]) / denom);
    }
    return max_rel;
}

}  // namespace nextact
