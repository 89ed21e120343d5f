#pragma once

#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "nextact/baselines.hpp"
#include "nextact/dataset.hpp"
#include "nextact/errors.hpp"
#include "nextact/lstm.hpp"

namespace nextact {

enum class ModelKind { Lstm, Var, Logistic };

inline std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::Lstm: return "lstm";
        case ModelKind::Var: return "var";
        case ModelKind::Logistic: return "logistic";
    }
    return "?";
}

inline ModelKind parse_model_kind(const std::string& s) {
    if (s == "lstm") return ModelKind::Lstm;
    if (s == "var") return ModelKind::Var;
    if (s == "logistic") return ModelKind::Logistic;
    throw UsageError("unknown model kind: " + s);
}

struct Model {
    std::variant<LstmParams, VarModel, LogisticModel> impl;
    GameKind game_kind = GameKind::IGT;
    std::uint64_t seed = 0;
    std::uint64_t split_seed = 0;
    TrainConfig train_config;  // meaningful for LSTM; recorded for provenance otherwise
    double logistic_l2 = 1e-4;

    ModelKind kind() const {
        if (std::holds_alternative<LstmParams>(impl)) return ModelKind::Lstm;
        if (std::holds_alternative<VarModel>(impl)) return ModelKind::Var;
        return ModelKind::Logistic;
    }
};

// Teacher-forced one-step-ahead prediction: every output conditions on the
// observed history only, never on the model's own predictions. Output t is
// the distribution over the focal agent's action at step t+1.
inline std::vector<Vec> predict_sequence(const Model& model, const SupervisedSequence& seq) {
    std::vector<Vec> out;
    out.reserve(seq.targets.size());
    if (const auto* lstm = std::get_if<LstmParams>(&model.impl)) {
        auto [probs, state] = lstm_forward(*lstm, seq.inputs);
        (void)state;
        return probs;
    }
    if (const auto* var = std::get_if<VarModel>(&model.impl)) {
        std::vector<Vec> history;
        for (std::size_t t = 0; t < seq.inputs.size(); ++t) {
            history.push_back(seq.inputs[t]);
            out.push_back(var_predict(*var, history));
        }
        return out;
    }
    const auto& logistic = std::get<LogisticModel>(model.impl);
    for (std::size_t t = 0; t < seq.inputs.size(); ++t) {
        const double p = logistic.predict(lr_features_from_step(seq, t));
        out.push_back(Vec{1.0 - p, p});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoints: versioned JSON, weights as full-precision decimals
// ---------------------------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline nlohmann::json train_config_json(const TrainConfig& c) {
    return {{"epochs", c.epochs},
            {"learning_rate", c.learning_rate},
            {"batch_size", c.batch_size},
            {"seed", c.seed},
            {"gradient_clip_norm", c.gradient_clip_norm},
            {"validation_fraction", c.validation_fraction},
            {"early_stop_patience", c.early_stop_patience},
            {"hidden", c.hidden},
            {"n_layers", c.n_layers}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.epochs = j.at("epochs").get<int>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.batch_size = j.at("batch_size").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.gradient_clip_norm = j.at("gradient_clip_norm").get<double>();
    c.validation_fraction = j.at("validation_fraction").get<double>();
    c.early_stop_patience = j.at("early_stop_patience").get<int>();
    c.hidden = j.at("hidden").get<int>();
    c.n_layers = j.at("n_layers").get<int>();
    return c;
}

}  // namespace detail

inline nlohmann::json checkpoint_json(const Model& model) {
    nlohmann::json j;
    j["format_version"] = kCheckpointVersion;
    j["kind"] = to_string(model.kind());
    j["game_kind"] = to_string(model.game_kind);
    j["seed"] = model.seed;
    j["split_seed"] = model.split_seed;
    j["train_config"] = detail::train_config_json(model.train_config);
    j["logistic_l2"] = model.logistic_l2;
    if (const auto* lstm = std::get_if<LstmParams>(&model.impl)) {
        j["dims"] = {{"feature_dim", lstm->feature_dim},
                     {"hidden", lstm->hidden},
                     {"n_layers", lstm->n_layers()},
                     {"alphabet", lstm->alphabet}};
        j["weights"] = lstm_to_flat(*lstm);
    } else if (const auto* var = std::get_if<VarModel>(&model.impl)) {
        j["dims"] = {{"feature_dim", var->feature_dim}, {"alphabet", var->alphabet}, {"lag", var->lag}};
        Vec flat;
        for (const Mat& a : var->coef) flat.insert(flat.end(), a.v.begin(), a.v.end());
        flat.insert(flat.end(), var->intercept.begin(), var->intercept.end());
        j["weights"] = flat;
    } else {
        const auto& logistic = std::get<LogisticModel>(model.impl);
        j["dims"] = {{"feature_dim", static_cast<int>(logistic.weights.size())}};
        Vec flat = logistic.weights;
        flat.push_back(logistic.bias);
        j["weights"] = flat;
    }
    return j;
}

inline Model model_from_json(const nlohmann::json& j) {
    if (j.at("format_version").get<int>() != kCheckpointVersion)
        throw DataError("checkpoint: unsupported format_version");
    Model model;
    model.game_kind = j.at("game_kind").get<std::string>() == "igt" ? GameKind::IGT : GameKind::IPD;
    model.seed = j.at("seed").get<std::uint64_t>();
    model.split_seed = j.at("split_seed").get<std::uint64_t>();
    model.train_config = detail::train_config_from_json(j.at("train_config"));
    model.logistic_l2 = j.at("logistic_l2").get<double>();
    const ModelKind kind = parse_model_kind(j.at("kind").get<std::string>());
    const Vec weights = j.at("weights").get<Vec>();
    const auto& dims = j.at("dims");
    if (kind == ModelKind::Lstm) {
        LstmParams shape = init_lstm(dims.at("feature_dim").get<int>(), dims.at("alphabet").get<int>(), 0,
                                     dims.at("hidden").get<int>(), dims.at("n_layers").get<int>());
        model.impl = lstm_from_flat(shape, weights);
    } else if (kind == ModelKind::Var) {
        VarModel var;
        var.feature_dim = dims.at("feature_dim").get<int>();
        var.alphabet = dims.at("alphabet").get<int>();
        var.lag = dims.at("lag").get<int>();
        const auto f = static_cast<std::size_t>(var.feature_dim);
        const auto a = static_cast<std::size_t>(var.alphabet);
        const std::size_t expect = static_cast<std::size_t>(var.lag) * a * f + a;
        if (weights.size() != expect) throw DataError("checkpoint: var weight count mismatch");
        std::size_t pos = 0;
        for (int k = 0; k < var.lag; ++k) {
            Mat m(a, f);
            std::copy(weights.begin() + static_cast<std::ptrdiff_t>(pos), weights.begin() + static_cast<std::ptrdiff_t>(pos + a * f), m.v.begin());
            pos += a * f;
            var.coef.push_back(std::move(m));
        }
        var.intercept.assign(weights.begin() + static_cast<std::ptrdiff_t>(pos), weights.end());
        model.impl = std::move(var);
    } else {
        LogisticModel logistic;
        const auto f = static_cast<std::size_t>(dims.at("feature_dim").get<int>());
        if (weights.size() != f + 1) throw DataError("checkpoint: logistic weight count mismatch");
        logistic.weights.assign(weights.begin(), weights.begin() + static_cast<std::ptrdiff_t>(f));
        logistic.bias = weights.back();
        model.impl = std::move(logistic);
    }
    return model;
}

inline Model load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint parse error in " + path + ": " + e.what());
    }
    try {
        return model_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint field error in " + path + ": " + e.what());
    }
}

// Feature/alphabet dimensions a dataset presents to a model.
inline std::pair<int, int> dataset_dims(const Dataset& ds) {
    return ds.game_kind == GameKind::IGT ? std::pair<int, int>{kIgtAlphabet, kIgtAlphabet}
                                         : std::pair<int, int>{2 * kIpdAlphabet, kIpdAlphabet};
}

inline void require_compatible(const Model& model, const Dataset& ds) {
    const auto [feature_dim, alphabet] = dataset_dims(ds);
    if (model.game_kind != ds.game_kind)
        throw UsageError("checkpoint was trained on " + to_string(model.game_kind) + " data, dataset is " + to_string(ds.game_kind));
    if (const auto* lstm = std::get_if<LstmParams>(&model.impl)) {
        if (lstm->feature_dim != feature_dim || lstm->alphabet != alphabet)
            throw UsageError("checkpoint dims do not match dataset (feature " + std::to_string(lstm->feature_dim) + " vs " + std::to_string(feature_dim) + ")");
    } else if (const auto* var = std::get_if<VarModel>(&model.impl)) {
        if (var->feature_dim != feature_dim || var->alphabet != alphabet)
            throw UsageError("checkpoint dims do not match dataset");
    } else {
        if (ds.game_kind != GameKind::IPD) throw UsageError("logistic models evaluate on IPD data only");
    }
}

}  // namespace nextact
