#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "nextact/cli.hpp"

namespace {

// Exit codes: 0 ok, 2 usage/config, 3 data, 4 numeric failure.
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"nextact: behavioral next-action forecasting for IGT and IPD trajectories"};
    app.require_subcommand(1);
    app.set_config("--config", "", "key=value config file; command-line flags take precedence");
    app.set_version_flag("--version", nextact::kToolVersion);

    nextact::SimulateConfig sim;
    CLI::App* simulate = app.add_subcommand("simulate", "generate synthetic trajectories");
    simulate->add_option("--game", sim.game, "igt or ipd")->required();
    simulate->add_option("--seed", sim.seed, "rng seed")->required();
    simulate->add_option("--out", sim.out_dir, "output directory")->required();
    simulate->add_option("--n", sim.n, "number of trajectories");
    simulate->add_option("--scheme", sim.scheme, "IGT payoff scheme (1 or 2)");
    simulate->add_option("--policy", sim.policy, "IGT policy");
    simulate->add_option("--epsilon", sim.epsilon, "exploration rate for epsilon_greedy_igt");
    simulate->add_option("--trials", sim.trials, "IGT trials per trajectory");
    simulate->add_option("--p1", sim.p1, "IPD policy for player 1");
    simulate->add_option("--p2", sim.p2, "IPD policy for player 2");
    simulate->add_option("--noise1", sim.noise1, "action flip probability for player 1");
    simulate->add_option("--noise2", sim.noise2, "action flip probability for player 2");
    simulate->add_option("--population", sim.population, "policy mix, e.g. tit_for_tat:1,always_defect@0.2:1");
    simulate->add_option("--rounds", sim.rounds, "IPD rounds per trajectory");
    simulate->add_option("--T", sim.temptation, "temptation payoff");
    simulate->add_option("--R", sim.reward, "reward payoff");
    simulate->add_option("--P", sim.penalty, "penalty payoff");
    simulate->add_option("--S", sim.sucker, "sucker payoff");

    nextact::TrainCliConfig tr;
    CLI::App* train = app.add_subcommand("train", "fit a predictor on the training side of a split");
    train->add_option("--game", tr.game, "igt or ipd")->required();
    train->add_option("--model", tr.model, "lstm, var or logistic")->required();
    train->add_option("--data", tr.data_args.data, "dataset CSV (repeatable for IGT pooling)")->required();
    train->add_option("--wins", tr.data_args.wins, "IGT wins matrix");
    train->add_option("--losses", tr.data_args.losses, "IGT losses matrix");
    train->add_option("--truncate", tr.data_args.truncate, "IGT pooling length");
    train->add_option("--ratio", tr.ratio, "train fraction (1.0 trains on everything)");
    train->add_option("--seed", tr.seed, "split + training seed")->required();
    train->add_option("--out", tr.out_dir, "output directory")->required();
    train->add_option("--epochs", tr.train.epochs, "LSTM epochs");
    train->add_option("--lr", tr.train.learning_rate, "LSTM learning rate");
    train->add_option("--batch", tr.train.batch_size, "LSTM batch size");
    train->add_option("--clip", tr.train.gradient_clip_norm, "gradient norm clip");
    train->add_option("--val-fraction", tr.train.validation_fraction, "early-stopping validation fraction");
    train->add_option("--patience", tr.train.early_stop_patience, "early-stopping patience");
    train->add_option("--hidden", tr.train.hidden, "LSTM hidden size");
    train->add_option("--layers", tr.train.n_layers, "LSTM layer count");
    train->add_option("--lag", tr.lag, "VAR lag (0 selects by validation)");
    train->add_option("--l2", tr.l2, "logistic L2 penalty");

    nextact::EvalCliConfig ev;
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint and write reports");
    eval_cmd->add_option("--checkpoint", ev.checkpoint, "checkpoint JSON")->required();
    eval_cmd->add_option("--data", ev.data_args.data, "dataset CSV (repeatable for IGT pooling)")->required();
    eval_cmd->add_option("--wins", ev.data_args.wins, "IGT wins matrix");
    eval_cmd->add_option("--losses", ev.data_args.losses, "IGT losses matrix");
    eval_cmd->add_option("--truncate", ev.data_args.truncate, "IGT pooling length");
    eval_cmd->add_option("--ratio", ev.ratio, "train fraction of the split (0 evaluates on everything)");
    CLI::Option* seed_opt = eval_cmd->add_option("--seed", ev.seed, "split seed (default: the checkpoint's)");
    eval_cmd->add_option("--folds", ev.folds, "cross-validate with k folds (retrains per fold)");
    eval_cmd->add_option("--out", ev.out_dir, "output directory")->required();
    eval_cmd->add_option("--window", ev.window, "IGT curve smoothing window");
    eval_cmd->add_flag("--argmax-curves", ev.argmax_curves, "population curves from argmax predictions");

    nextact::GradcheckConfig gc;
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "verify BPTT gradients against finite differences");
    gradcheck->add_option("--seed", gc.seed, "base seed");
    gradcheck->add_flag("--corrupt", gc.corrupt, "deliberately corrupt one gradient entry (negative control)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*simulate) nextact::cmd_simulate(sim);
        if (*train) nextact::cmd_train(tr);
        if (*eval_cmd) {
            ev.seed_given = seed_opt->count() > 0;
            nextact::cmd_eval(ev);
        }
        if (*gradcheck) {
            const double worst = nextact::cmd_gradcheck(gc);
            if (worst >= nextact::kGradcheckTolerance) return kExitNumeric;
        }
    } catch (const nextact::UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const nextact::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const nextact::NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
