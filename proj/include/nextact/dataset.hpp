#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nextact/errors.hpp"
#include "nextact/games.hpp"
#include "nextact/rng.hpp"

namespace nextact {

struct Dataset {
    GameKind game_kind = GameKind::IGT;
    std::vector<Trajectory> trajectories;
    int alphabet = kIgtAlphabet;
    int horizon = 0;  // common trajectory length; 0 while lengths are mixed

    std::size_t size() const { return trajectories.size(); }
};

inline bool operator==(const GameSpec& a, const GameSpec& b) {
    return a.reward == b.reward && a.sucker == b.sucker && a.temptation == b.temptation &&
           a.penalty == b.penalty && a.horizon == b.horizon && a.n_agents == b.n_agents;
}

inline bool operator==(const Trajectory& a, const Trajectory& b) {
    return a.game_kind == b.game_kind && a.actions == b.actions && a.rewards == b.rewards &&
           a.igt_wins == b.igt_wins && a.igt_losses == b.igt_losses && a.spec == b.spec &&
           a.source == b.source;
}

inline bool operator==(const Dataset& a, const Dataset& b) {
    return a.game_kind == b.game_kind && a.alphabet == b.alphabet && a.horizon == b.horizon &&
           a.trajectories == b.trajectories;
}

// ---------------------------------------------------------------------------
// Small CSV + formatting helpers
// ---------------------------------------------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    out.push_back(trim(cur));
    return out;
}

inline std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
    return lines;
}

// Shortest decimal form that round-trips a double. Integral values print
// without a fraction so the canonical CSVs stay easy to eyeball.
inline std::string fmt_num(double x) {
    if (x == static_cast<long long>(x) && std::fabs(x) < 1e15) return std::to_string(static_cast<long long>(x));
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    double back = std::strtod(buf, nullptr);
    if (back == x) {
        for (int prec = 1; prec < 17; ++prec) {
            char shorter[32];
            std::snprintf(shorter, sizeof(shorter), "%.*g", prec, x);
            if (std::strtod(shorter, nullptr) == x) return shorter;
        }
    }
    return buf;
}

inline double parse_num(const std::string& s, const std::string& context) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') throw DataError("cannot parse number '" + s + "' (" + context + ")");
    return v;
}

}  // namespace detail

inline std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------
// IGT matrix files: header row, one row per subject, integer cells 1..4.
// Optional win / loss matrices share the same shape (wins >= 0, losses <= 0).
// ---------------------------------------------------------------------------

inline Dataset load_igt(const std::string& choices_path, const std::string& wins_path = "",
                        const std::string& losses_path = "") {
    const auto lines = detail::read_lines(choices_path);
    if (lines.size() < 2) throw DataError("IGT file has no data rows: " + choices_path);

    Dataset ds;
    ds.game_kind = GameKind::IGT;
    ds.alphabet = kIgtAlphabet;

    for (std::size_t r = 1; r < lines.size(); ++r) {
        if (detail::trim(lines[r]).empty()) continue;
        const auto cells = detail::split_csv_line(lines[r]);
        Trajectory traj;
        traj.game_kind = GameKind::IGT;
        traj.actions.resize(1);
        traj.source = "subj_" + std::to_string(r);
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const std::string& cell = cells[c];
            char* end = nullptr;
            const long v = std::strtol(cell.c_str(), &end, 10);
            const bool numeric = end != cell.c_str() && *end == '\0';
            if (!numeric || v < 1 || v > 4)
                throw DataError("IGT parse error: cell '" + cell + "' at row " + std::to_string(r) + ", col " + std::to_string(c + 1) + " (expected 1..4) in " + choices_path);
            traj.actions[0].push_back(static_cast<Action>(v - 1));
        }
        ds.trajectories.push_back(std::move(traj));
    }

    auto read_matrix = [](const std::string& path) {
        const auto mlines = detail::read_lines(path);
        std::vector<std::vector<double>> rows;
        for (std::size_t r = 1; r < mlines.size(); ++r) {
            if (detail::trim(mlines[r]).empty()) continue;
            const auto cells = detail::split_csv_line(mlines[r]);
            std::vector<double> row;
            for (std::size_t c = 0; c < cells.size(); ++c)
                row.push_back(detail::parse_num(cells[c], path + " row " + std::to_string(r) + ", col " + std::to_string(c + 1)));
            rows.push_back(std::move(row));
        }
        return rows;
    };

    if (!wins_path.empty() || !losses_path.empty()) {
        if (wins_path.empty() || losses_path.empty()) throw UsageError("load_igt: wins and losses files must be given together");
        const auto wins = read_matrix(wins_path);
        const auto losses = read_matrix(losses_path);
        if (wins.size() != ds.size() || losses.size() != ds.size())
            throw DataError("load_igt: win/loss row count does not match choices (" + std::to_string(ds.size()) + " subjects)");
        for (std::size_t i = 0; i < ds.size(); ++i) {
            Trajectory& traj = ds.trajectories[i];
            if (wins[i].size() != traj.length() || losses[i].size() != traj.length())
                throw DataError("load_igt: win/loss length mismatch for " + traj.source);
            traj.igt_wins = wins[i];
            traj.igt_losses = losses[i];
            traj.rewards.resize(1);
            for (std::size_t t = 0; t < traj.length(); ++t) {
                if (wins[i][t] < 0.0) throw DataError("load_igt: negative win for " + traj.source + " at trial " + std::to_string(t + 1));
                if (losses[i][t] > 0.0) throw DataError("load_igt: positive loss for " + traj.source + " at trial " + std::to_string(t + 1) + " (losses must be <= 0)");
                traj.rewards[0].push_back(wins[i][t] + losses[i][t]);
            }
        }
    }

    bool uniform = true;
    for (const auto& t : ds.trajectories)
        if (t.length() != ds.trajectories[0].length()) uniform = false;
    ds.horizon = uniform ? static_cast<int>(ds.trajectories[0].length()) : 0;
    return ds;
}

// Concatenates datasets and keeps the first target_len actions of every
// trajectory. Each input trajectory must be at least that long.
inline Dataset pool_and_truncate(const std::vector<Dataset>& datasets, int target_len) {
    if (datasets.empty()) throw UsageError("pool_and_truncate: no datasets");
    if (target_len < 1) throw UsageError("pool_and_truncate: target length must be >= 1");
    Dataset out;
    out.game_kind = datasets[0].game_kind;
    out.alphabet = datasets[0].alphabet;
    out.horizon = target_len;
    for (const Dataset& ds : datasets) {
        if (ds.game_kind != out.game_kind) throw UsageError("pool_and_truncate: mixed game kinds");
        for (const Trajectory& t : ds.trajectories) {
            if (t.length() < static_cast<std::size_t>(target_len))
                throw DataError("pool_and_truncate: trajectory " + t.source + " has length " + std::to_string(t.length()) + " < target " + std::to_string(target_len));
            Trajectory cut = t;
            const auto n = static_cast<std::size_t>(target_len);
            for (auto& a : cut.actions) a.resize(n);
            for (auto& r : cut.rewards) r.resize(n);
            if (!cut.igt_wins.empty()) cut.igt_wins.resize(n);
            if (!cut.igt_losses.empty()) cut.igt_losses.resize(n);
            out.trajectories.push_back(std::move(cut));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// IPD canonical CSV: header traj_id,round,a1,a2[,R,S,T,P], rounds 1-based
// and contiguous, actions "C"/"D" (preferred) or 1/0 with 1 = Cooperate.
// Only trajectories with the full 9-round history are retained.
// ---------------------------------------------------------------------------

struct IpdLoadStats {
    std::size_t kept = 0;
    std::size_t dropped_wrong_length = 0;
};

inline constexpr int kIpdCanonicalRounds = 9;

inline Dataset load_ipd(const std::string& path, IpdLoadStats* stats = nullptr) {
    const auto lines = detail::read_lines(path);
    if (lines.empty()) throw DataError("IPD file is empty: " + path);
    const auto header = detail::split_csv_line(lines[0]);
    if (header.size() < 4 || header[0] != "traj_id" || header[1] != "round" || header[2] != "a1" || header[3] != "a2")
        throw DataError("IPD header must start with traj_id,round,a1,a2 in " + path);
    const bool has_payoffs = header.size() >= 8;
    if (has_payoffs && (header[4] != "R" || header[5] != "S" || header[6] != "T" || header[7] != "P"))
        throw DataError("IPD payoff columns must be named R,S,T,P in " + path);

    enum class Enc { Unknown, Letter, Numeric };
    Enc enc = Enc::Unknown;
    auto parse_action = [&](const std::string& s, std::size_t line_no) -> Action {
        Enc this_enc;
        Action a;
        if (s == "C") { this_enc = Enc::Letter; a = kCooperate; }
        else if (s == "D") { this_enc = Enc::Letter; a = kDefect; }
        else if (s == "1") { this_enc = Enc::Numeric; a = kCooperate; }
        else if (s == "0") { this_enc = Enc::Numeric; a = kDefect; }
        else throw DataError("IPD parse error: action '" + s + "' at line " + std::to_string(line_no) + " in " + path);
        if (enc == Enc::Unknown) enc = this_enc;
        else if (enc != this_enc) throw DataError("IPD parse error: mixed C/D and 1/0 action encodings in " + path);
        return a;
    };

    struct Row {
        int round;
        Action a1, a2;
        std::optional<GameSpec> spec;
    };
    std::map<std::string, std::vector<Row>> by_id;

    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (detail::trim(lines[i]).empty()) continue;
        const auto cells = detail::split_csv_line(lines[i]);
        if (cells.size() < 4 || (has_payoffs && cells.size() < 8))
            throw DataError("IPD parse error: line " + std::to_string(i + 1) + " has too few columns in " + path);
        Row row;
        row.round = static_cast<int>(detail::parse_num(cells[1], "round at line " + std::to_string(i + 1)));
        row.a1 = parse_action(cells[2], i + 1);
        row.a2 = parse_action(cells[3], i + 1);
        if (has_payoffs) {
            GameSpec spec;
            spec.reward = detail::parse_num(cells[4], "R at line " + std::to_string(i + 1));
            spec.sucker = detail::parse_num(cells[5], "S at line " + std::to_string(i + 1));
            spec.temptation = detail::parse_num(cells[6], "T at line " + std::to_string(i + 1));
            spec.penalty = detail::parse_num(cells[7], "P at line " + std::to_string(i + 1));
            row.spec = spec;
        }
        by_id[cells[0]].push_back(row);
    }

    Dataset ds;
    ds.game_kind = GameKind::IPD;
    ds.alphabet = kIpdAlphabet;
    ds.horizon = kIpdCanonicalRounds;
    IpdLoadStats local;

    for (auto& [id, rows] : by_id) {
        std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.round < b.round; });
        for (std::size_t k = 0; k < rows.size(); ++k)
            if (rows[k].round != static_cast<int>(k) + 1)
                throw DataError("IPD trajectory '" + id + "' has a gap: expected round " + std::to_string(k + 1) + ", found " + std::to_string(rows[k].round) + " in " + path);
        if (rows.size() != static_cast<std::size_t>(kIpdCanonicalRounds)) {
            local.dropped_wrong_length += 1;
            continue;
        }
        Trajectory traj;
        traj.game_kind = GameKind::IPD;
        traj.actions.resize(2);
        traj.source = id;
        for (const Row& row : rows) {
            traj.actions[0].push_back(row.a1);
            traj.actions[1].push_back(row.a2);
        }
        if (rows[0].spec.has_value()) {
            GameSpec spec = *rows[0].spec;
            spec.horizon = kIpdCanonicalRounds;
            for (const Row& row : rows)
                if (!(row.spec.has_value() && GameSpec{row.spec->reward, row.spec->sucker, row.spec->temptation, row.spec->penalty, kIpdCanonicalRounds, 2} == spec))
                    throw DataError("IPD trajectory '" + id + "' mixes payoff parameters in " + path);
            const auto violations = validate_spec(spec);
            if (!violations.empty()) {
                std::string msg = "IPD trajectory '" + id + "' has an invalid payoff spec, violated:";
                for (const auto& v : violations) msg += " [" + v + "]";
                throw DataError(msg);
            }
            traj.spec = spec;
        } else {
            traj.spec = GameSpec{};
        }
        traj.rewards.resize(2);
        for (std::size_t t = 0; t < traj.length(); ++t) {
            const auto [r1, r2] = ipd_payoff(*traj.spec, traj.actions[0][t], traj.actions[1][t]);
            traj.rewards[0].push_back(r1);
            traj.rewards[1].push_back(r2);
        }
        ds.trajectories.push_back(std::move(traj));
        local.kept += 1;
    }
    if (stats) *stats = local;
    return ds;
}

// ---------------------------------------------------------------------------
// Canonical writers (the loaders above read these back bit-for-bit)
// ---------------------------------------------------------------------------

inline std::string igt_choices_csv(const Dataset& ds) {
    std::size_t width = 0;
    for (const auto& t : ds.trajectories) width = std::max(width, t.length());
    std::ostringstream out;
    for (std::size_t c = 0; c < width; ++c) out << (c ? "," : "") << "choice_" << (c + 1);
    out << "\n";
    for (const auto& t : ds.trajectories) {
        for (std::size_t c = 0; c < t.length(); ++c) out << (c ? "," : "") << (t.actions[0][c] + 1);
        out << "\n";
    }
    return out.str();
}

inline std::string igt_matrix_csv(const Dataset& ds, bool wins) {
    std::size_t width = 0;
    for (const auto& t : ds.trajectories) width = std::max(width, t.length());
    std::ostringstream out;
    const char* prefix = wins ? "win_" : "loss_";
    for (std::size_t c = 0; c < width; ++c) out << (c ? "," : "") << prefix << (c + 1);
    out << "\n";
    for (const auto& t : ds.trajectories) {
        const auto& vals = wins ? t.igt_wins : t.igt_losses;
        for (std::size_t c = 0; c < vals.size(); ++c) out << (c ? "," : "") << detail::fmt_num(vals[c]);
        out << "\n";
    }
    return out.str();
}

inline std::string ipd_csv(const Dataset& ds) {
    bool any_spec = false;
    for (const auto& t : ds.trajectories)
        if (t.spec.has_value()) any_spec = true;
    std::ostringstream out;
    out << "traj_id,round,a1,a2";
    if (any_spec) out << ",R,S,T,P";
    out << "\n";
    for (const auto& t : ds.trajectories) {
        for (std::size_t r = 0; r < t.length(); ++r) {
            out << t.source << "," << (r + 1) << "," << (t.actions[0][r] == kCooperate ? "C" : "D") << ","
                << (t.actions[1][r] == kCooperate ? "C" : "D");
            if (any_spec) {
                const GameSpec spec = t.spec.value_or(GameSpec{});
                out << "," << detail::fmt_num(spec.reward) << "," << detail::fmt_num(spec.sucker) << ","
                    << detail::fmt_num(spec.temptation) << "," << detail::fmt_num(spec.penalty);
            }
            out << "\n";
        }
    }
    return out.str();
}

// The canonical formats are distinguishable by header: IPD files start with
// traj_id,round,... while IGT matrices have per-trial columns.
inline GameKind detect_game_kind(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    std::string header;
    std::getline(in, header);
    const auto cells = detail::split_csv_line(header);
    if (cells.size() >= 4 && cells[0] == "traj_id" && cells[1] == "round") return GameKind::IPD;
    return GameKind::IGT;
}

// Content hash used to tie eval reports to the exact dataset they saw.
inline std::string dataset_hash(const Dataset& ds) {
    std::string bytes = to_string(ds.game_kind);
    bytes += ds.game_kind == GameKind::IGT ? igt_choices_csv(ds) : ipd_csv(ds);
    if (ds.game_kind == GameKind::IGT) bytes += igt_matrix_csv(ds, true) + igt_matrix_csv(ds, false);
    return hash_hex(fnv1a64(bytes));
}

// ---------------------------------------------------------------------------
// Supervised next-action view
// ---------------------------------------------------------------------------

struct FeatureConfig {
    bool include_rewards = false;  // append the focal agent's combined reward
};

struct SupervisedSequence {
    std::vector<Vec> inputs;
    std::vector<Vec> targets;
    int focal_agent = 0;
    std::string source;
    std::size_t traj_index = 0;  // position in the owning dataset
    int horizon = 0;             // full trajectory length
    Vec payoff_features;         // IPD: {(R-P)/(T-S), (T-R)/(T-S)}, else zeros
};

inline std::vector<SupervisedSequence> to_supervised(const Trajectory& traj, const FeatureConfig& config = {}) {
    const std::size_t len = traj.length();
    if (len < 2) throw DataError("to_supervised: degenerate trajectory '" + traj.source + "' of length " + std::to_string(len));

    std::vector<SupervisedSequence> out;
    const int n_focal = traj.game_kind == GameKind::IGT ? 1 : 2;
    for (int focal = 0; focal < n_focal; ++focal) {
        SupervisedSequence seq;
        seq.focal_agent = focal;
        seq.source = traj.source + "#p" + std::to_string(focal);
        seq.horizon = static_cast<int>(len);
        seq.payoff_features = {0.0, 0.0};
        if (traj.game_kind == GameKind::IPD && traj.spec.has_value()) {
            const GameSpec& s = *traj.spec;
            const double span = s.temptation - s.sucker;
            seq.payoff_features = {(s.reward - s.penalty) / span, (s.temptation - s.reward) / span};
        }
        const auto& own = traj.actions[static_cast<std::size_t>(focal)];
        for (std::size_t t = 0; t + 1 < len; ++t) {
            Vec input;
            if (traj.game_kind == GameKind::IGT) {
                input = encode_one_hot(own[t], kIgtAlphabet);
            } else {
                const auto& opp = traj.actions[static_cast<std::size_t>(1 - focal)];
                input = encode_one_hot(own[t], kIpdAlphabet);
                const Vec opp_hot = encode_one_hot(opp[t], kIpdAlphabet);
                input.insert(input.end(), opp_hot.begin(), opp_hot.end());
            }
            if (config.include_rewards) {
                const double r = traj.rewards.empty() || traj.rewards[static_cast<std::size_t>(focal)].empty()
                                     ? 0.0
                                     : traj.rewards[static_cast<std::size_t>(focal)][t];
                input.push_back(r);
            }
            seq.inputs.push_back(std::move(input));
            seq.targets.push_back(encode_one_hot(own[t + 1], traj.game_kind == GameKind::IGT ? kIgtAlphabet : kIpdAlphabet));
        }
        out.push_back(std::move(seq));
    }
    return out;
}

// All supervised sequences for the given trajectory indices, tagged with
// their trajectory of origin. Both IPD perspectives of a trajectory stay on
// the same side of any split by construction.
inline std::vector<SupervisedSequence> sequences_for(const Dataset& ds, const std::vector<std::size_t>& traj_indices,
                                                     const FeatureConfig& config = {}) {
    std::vector<SupervisedSequence> out;
    for (std::size_t idx : traj_indices) {
        auto seqs = to_supervised(ds.trajectories.at(idx), config);
        for (auto& s : seqs) {
            s.traj_index = idx;
            out.push_back(std::move(s));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Splits and folds (trajectory-level, so perspective pairs never leak)
// ---------------------------------------------------------------------------

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
    std::uint64_t seed = 0;
    int fold_id = -1;
};

namespace detail {
inline std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng(seed);
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    return idx;
}
}  // namespace detail

inline Split split_train_test(const Dataset& ds, double ratio, std::uint64_t seed) {
    if (ds.size() == 0) throw UsageError("split_train_test: empty dataset");
    if (ratio <= 0.0 || ratio >= 1.0) throw UsageError("split_train_test: ratio must be in (0,1)");
    const auto idx = detail::shuffled_indices(ds.size(), seed);
    const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(ds.size()) * (1.0 - ratio)));
    Split split;
    split.seed = seed;
    split.test.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
    split.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
    std::sort(split.test.begin(), split.test.end());
    std::sort(split.train.begin(), split.train.end());
    return split;
}

inline std::vector<Split> make_folds(const Dataset& ds, int k, std::uint64_t seed) {
    if (k < 2 || static_cast<std::size_t>(k) > ds.size())
        throw UsageError("make_folds: k must be in [2, " + std::to_string(ds.size()) + "], got " + std::to_string(k));
    const auto idx = detail::shuffled_indices(ds.size(), seed);
    std::vector<Split> folds(static_cast<std::size_t>(k));
    for (int f = 0; f < k; ++f) {
        folds[static_cast<std::size_t>(f)].seed = seed;
        folds[static_cast<std::size_t>(f)].fold_id = f;
    }
    for (std::size_t i = 0; i < idx.size(); ++i)
        folds[i % static_cast<std::size_t>(k)].test.push_back(idx[i]);
    for (auto& fold : folds) {
        std::sort(fold.test.begin(), fold.test.end());
        for (std::size_t i = 0; i < ds.size(); ++i)
            if (!std::binary_search(fold.test.begin(), fold.test.end(), i)) fold.train.push_back(i);
    }
    return folds;
}

}  // namespace nextact
