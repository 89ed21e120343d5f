#pragma once

#include <algorithm>
#include <array>
#include <optional>
#include <string>
#include <vector>

#include "nextact/errors.hpp"
#include "nextact/numerics.hpp"
#include "nextact/rng.hpp"

namespace nextact {

enum class GameKind { IGT, IPD };

inline std::string to_string(GameKind k) { return k == GameKind::IGT ? "igt" : "ipd"; }

// Fixed action encodings: IGT decks A,B,C,D -> 0,1,2,3; IPD Defect -> 0,
// Cooperate -> 1. File formats and reports all rely on this convention.
using Action = int;

inline constexpr Action kDefect = 0;
inline constexpr Action kCooperate = 1;
inline constexpr int kIgtAlphabet = 4;
inline constexpr int kIpdAlphabet = 2;

// ---------------------------------------------------------------------------
// Iowa Gambling Task payoff schemes
// ---------------------------------------------------------------------------

struct LossEvent {
    double amount;       // <= 0
    double probability;  // in (0, 1]
};

struct DeckPayoff {
    double win_per_card;
    std::vector<LossEvent> losses;  // probabilities sum to <= 1; rest is no loss
};

struct IGTScheme {
    int scheme_id;
    std::array<DeckPayoff, 4> decks;  // A, B, C, D
};

// The two published deck tables. Decks A, B and D are identical across the
// schemes; deck C's losses are spread over three events in scheme 1 and a
// single even-odds event in scheme 2.
inline IGTScheme igt_scheme(int scheme_id) {
    if (scheme_id != 1 && scheme_id != 2) throw UsageError("igt_scheme: unknown scheme " + std::to_string(scheme_id));
    IGTScheme s;
    s.scheme_id = scheme_id;
    s.decks[0] = {100.0, {{-150.0, 0.1}, {-200.0, 0.1}, {-250.0, 0.1}, {-300.0, 0.1}, {-350.0, 0.1}}};
    s.decks[1] = {100.0, {{-1250.0, 0.1}}};
    if (scheme_id == 1) {
        s.decks[2] = {50.0, {{-25.0, 0.1}, {-75.0, 0.1}, {-50.0, 0.3}}};
    } else {
        s.decks[2] = {50.0, {{-50.0, 0.5}}};
    }
    s.decks[3] = {50.0, {{-250.0, 0.1}}};
    return s;
}

// Recomputed, never stored: win + sum(loss * p). Comes out as exactly -25
// for decks A,B and +25 for C,D in both schemes.
inline double igt_expected_value(const IGTScheme& scheme, Action deck) {
    if (deck < 0 || deck >= kIgtAlphabet) throw UsageError("igt_expected_value: deck out of range");
    const DeckPayoff& d = scheme.decks[static_cast<std::size_t>(deck)];
    double ev = d.win_per_card;
    for (const LossEvent& e : d.losses) ev += e.amount * e.probability;
    return ev;
}

struct DrawOutcome {
    double win;
    double loss;      // <= 0
    double combined;  // win + loss
};

// One card draw: the win is fixed per deck, the loss is sampled i.i.d.
// from the deck's loss table (no loss with the remaining mass).
inline DrawOutcome igt_draw(const IGTScheme& scheme, Action deck, Rng& rng) {
    if (deck < 0 || deck >= kIgtAlphabet) throw UsageError("igt_draw: deck out of range");
    const DeckPayoff& d = scheme.decks[static_cast<std::size_t>(deck)];
    const double u = rng.uniform();
    double cum = 0.0;
    double loss = 0.0;
    for (const LossEvent& e : d.losses) {
        cum += e.probability;
        if (u < cum) {
            loss = e.amount;
            break;
        }
    }
    return {d.win_per_card, loss, d.win_per_card + loss};
}

// ---------------------------------------------------------------------------
// Iterated Prisoner's Dilemma
// ---------------------------------------------------------------------------

struct GameSpec {
    double reward = 3.0;      // R
    double sucker = 0.0;      // S
    double temptation = 5.0;  // T
    double penalty = 1.0;     // P
    int horizon = 9;
    int n_agents = 2;
};

inline std::vector<std::string> validate_spec(const GameSpec& spec) {
    std::vector<std::string> violations;
    if (!(spec.temptation > spec.reward)) violations.push_back("T > R");
    if (!(spec.reward > spec.penalty)) violations.push_back("R > P");
    if (!(spec.penalty > spec.sucker)) violations.push_back("P > S");
    if (!(2.0 * spec.reward > spec.temptation + spec.sucker)) violations.push_back("2R > T + S");
    return violations;
}

inline void require_valid_spec(const GameSpec& spec) {
    const auto violations = validate_spec(spec);
    if (violations.empty()) return;
    std::string msg = "invalid game spec, violated:";
    for (const auto& v : violations) msg += " [" + v + "]";
    throw UsageError(msg);
}

inline std::pair<double, double> ipd_payoff(const GameSpec& spec, Action a1, Action a2) {
    require_valid_spec(spec);
    if (a1 == kCooperate && a2 == kCooperate) return {spec.reward, spec.reward};
    if (a1 == kDefect && a2 == kDefect) return {spec.penalty, spec.penalty};
    if (a1 == kCooperate) return {spec.sucker, spec.temptation};
    return {spec.temptation, spec.sucker};
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

struct Trajectory {
    GameKind game_kind = GameKind::IGT;
    std::vector<std::vector<Action>> actions;   // one list per agent
    std::vector<std::vector<double>> rewards;   // combined reward per agent; may be empty
    std::vector<double> igt_wins;               // IGT only, optional
    std::vector<double> igt_losses;             // IGT only, optional
    std::optional<GameSpec> spec;               // IPD only
    std::string source;                         // study / subject / trajectory id

    std::size_t length() const { return actions.empty() ? 0 : actions[0].size(); }
    std::size_t n_agents() const { return actions.size(); }
};

inline Vec encode_one_hot(Action action, int alphabet) {
    if (action < 0 || action >= alphabet) throw UsageError("encode_one_hot: action " + std::to_string(action) + " out of range for alphabet " + std::to_string(alphabet));
    Vec v(static_cast<std::size_t>(alphabet), 0.0);
    v[static_cast<std::size_t>(action)] = 1.0;
    return v;
}

inline Action decode_one_hot(const Vec& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return static_cast<Action>(best);
}

// ---------------------------------------------------------------------------
// Synthetic policies
// ---------------------------------------------------------------------------

enum class PolicyKind {
    Random,
    TitForTat,
    AlwaysDefect,
    GrimTrigger,
    WinStayLoseShift,
    EpsilonGreedyIgt,
};

struct SynthPolicy {
    PolicyKind kind = PolicyKind::Random;
    double epsilon = 0.1;  // exploration rate for EpsilonGreedyIgt
    double noise = 0.0;    // action flip probability (IPD policies)
    int alphabet = kIpdAlphabet;  // action count for Random; simulators set it
};

inline SynthPolicy parse_policy(const std::string& name) {
    SynthPolicy p;
    if (name == "random") p.kind = PolicyKind::Random;
    else if (name == "tit_for_tat") p.kind = PolicyKind::TitForTat;
    else if (name == "always_defect") p.kind = PolicyKind::AlwaysDefect;
    else if (name == "grim_trigger") p.kind = PolicyKind::GrimTrigger;
    else if (name == "win_stay_lose_shift") p.kind = PolicyKind::WinStayLoseShift;
    else if (name == "epsilon_greedy_igt") p.kind = PolicyKind::EpsilonGreedyIgt;
    else throw UsageError("unknown policy: " + name);
    return p;
}

inline std::string to_string(PolicyKind k) {
    switch (k) {
        case PolicyKind::Random: return "random";
        case PolicyKind::TitForTat: return "tit_for_tat";
        case PolicyKind::AlwaysDefect: return "always_defect";
        case PolicyKind::GrimTrigger: return "grim_trigger";
        case PolicyKind::WinStayLoseShift: return "win_stay_lose_shift";
        case PolicyKind::EpsilonGreedyIgt: return "epsilon_greedy_igt";
    }
    return "?";
}

// Next action under a synthetic policy.
//   tit_for_tat        copies the opponent's last action, cooperates first.
//   grim_trigger       cooperates until the opponent ever defects.
//   win_stay_lose_shift repeats its last action iff the last payoff was T or
//                      R (equivalently: the opponent cooperated); starts C.
//   epsilon_greedy_igt tries each unvisited deck once (lowest index first),
//                      then exploits the best running mean combined reward
//                      with probability 1-epsilon, ties to the lowest index.
// own_rewards is consulted only by epsilon_greedy_igt.
inline Action synth_step(const SynthPolicy& policy, const std::vector<Action>& own_history,
                         const std::vector<Action>& opp_history, const std::vector<double>& own_rewards,
                         Rng& rng) {
    auto with_noise = [&](Action a) -> Action {
        if (policy.noise > 0.0 && rng.bernoulli(policy.noise)) return a == kDefect ? kCooperate : kDefect;
        return a;
    };
    switch (policy.kind) {
        case PolicyKind::Random:
            return static_cast<Action>(rng.below(static_cast<std::size_t>(policy.alphabet)));
        case PolicyKind::TitForTat:
            return with_noise(opp_history.empty() ? kCooperate : opp_history.back());
        case PolicyKind::AlwaysDefect:
            return with_noise(kDefect);
        case PolicyKind::GrimTrigger: {
            const bool triggered = std::find(opp_history.begin(), opp_history.end(), kDefect) != opp_history.end();
            return with_noise(triggered ? kDefect : kCooperate);
        }
        case PolicyKind::WinStayLoseShift: {
            if (own_history.empty()) return with_noise(kCooperate);
            if (opp_history.size() != own_history.size())
                throw DimensionError("synth_step: win_stay_lose_shift needs equal-length histories");
            const bool won = opp_history.back() == kCooperate;
            const Action last = own_history.back();
            return with_noise(won ? last : (last == kDefect ? kCooperate : kDefect));
        }
        case PolicyKind::EpsilonGreedyIgt: {
            if (own_rewards.size() != own_history.size()) throw DimensionError("synth_step: rewards and actions out of step");
            std::array<double, 4> sum{0, 0, 0, 0};
            std::array<int, 4> count{0, 0, 0, 0};
            for (std::size_t t = 0; t < own_history.size(); ++t) {
                const auto deck = static_cast<std::size_t>(own_history[t]);
                sum[deck] += own_rewards[t];
                count[deck] += 1;
            }
            for (int deck = 0; deck < kIgtAlphabet; ++deck)
                if (count[static_cast<std::size_t>(deck)] == 0) return deck;
            if (policy.epsilon > 0.0 && rng.bernoulli(policy.epsilon)) return static_cast<Action>(rng.below(kIgtAlphabet));
            int best = 0;
            for (int deck = 1; deck < kIgtAlphabet; ++deck) {
                const auto d = static_cast<std::size_t>(deck);
                const auto b = static_cast<std::size_t>(best);
                if (sum[d] / count[d] > sum[b] / count[b]) best = deck;
            }
            return best;
        }
    }
    throw UsageError("synth_step: unhandled policy kind");
}

// Overload for IPD policies, which never look at rewards.
inline Action synth_step(const SynthPolicy& policy, const std::vector<Action>& own_history,
                         const std::vector<Action>& opp_history, Rng& rng) {
    static const std::vector<double> no_rewards;
    return synth_step(policy, own_history, opp_history, no_rewards, rng);
}

// ---------------------------------------------------------------------------
// Simulators
// ---------------------------------------------------------------------------

inline Trajectory simulate_igt(const SynthPolicy& policy, const IGTScheme& scheme, int horizon, std::uint64_t seed) {
    if (horizon < 1) throw UsageError("simulate_igt: horizon must be >= 1");
    Rng rng(seed);
    SynthPolicy pol = policy;
    pol.alphabet = kIgtAlphabet;
    Trajectory traj;
    traj.game_kind = GameKind::IGT;
    traj.actions.resize(1);
    traj.rewards.resize(1);
    for (int t = 0; t < horizon; ++t) {
        const Action a = synth_step(pol, traj.actions[0], {}, traj.rewards[0], rng);
        const DrawOutcome out = igt_draw(scheme, a, rng);
        traj.actions[0].push_back(a);
        traj.rewards[0].push_back(out.combined);
        traj.igt_wins.push_back(out.win);
        traj.igt_losses.push_back(out.loss);
    }
    return traj;
}

inline Trajectory simulate_ipd(const SynthPolicy& p1, const SynthPolicy& p2, const GameSpec& spec, int horizon, std::uint64_t seed) {
    if (horizon < 1) throw UsageError("simulate_ipd: horizon must be >= 1");
    require_valid_spec(spec);
    Rng rng(seed);
    SynthPolicy pol1 = p1, pol2 = p2;
    pol1.alphabet = kIpdAlphabet;
    pol2.alphabet = kIpdAlphabet;
    Trajectory traj;
    traj.game_kind = GameKind::IPD;
    traj.spec = spec;
    traj.actions.resize(2);
    traj.rewards.resize(2);
    for (int t = 0; t < horizon; ++t) {
        const Action a1 = synth_step(pol1, traj.actions[0], traj.actions[1], rng);
        const Action a2 = synth_step(pol2, traj.actions[1], traj.actions[0], rng);
        const auto [r1, r2] = ipd_payoff(spec, a1, a2);
        traj.actions[0].push_back(a1);
        traj.actions[1].push_back(a2);
        traj.rewards[0].push_back(r1);
        traj.rewards[1].push_back(r2);
    }
    return traj;
}

}  // namespace nextact
