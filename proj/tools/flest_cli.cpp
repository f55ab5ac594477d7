#include <exception>
#include <iostream>
#include <stdexcept>

#include "CLI11.hpp"

#include "flest/commands.hpp"
#include "flest/config.hpp"

namespace {

// Experiment options live on the root app: CLI11 reads --config files only
// there, and subcommands reach these flags through fallthrough().
void add_config_options(CLI::App* cmd, flest::ExperimentConfig& cfg) {
    cmd->set_config("--config", "", "Read options from a key=value file; flags override");

    cmd->add_option("--dataset", cfg.dataset, "Triples file, head<TAB>relation<TAB>tail per line");
    cmd->add_option("--synthetic-entities", cfg.synthetic_entities,
                    "Entity count of the built-in synthetic KG");
    cmd->add_option("--synthetic-relations", cfg.synthetic_relations,
                    "Relation count of the synthetic KG");
    cmd->add_option("--synthetic-triples", cfg.synthetic_triples,
                    "Triple count of the synthetic KG; > 0 selects the synthetic source");
    cmd->add_option("--synthetic-rank", cfg.synthetic_rank, "Planted rank of the synthetic KG");
    cmd->add_option("--synthetic-seed", cfg.synthetic_seed, "Seed of the synthetic KG");

    cmd->add_option("--num-clients", cfg.num_clients, "Number of federated clients");
    cmd->add_option("--rank", cfg.rank, "Embedding rank r");
    cmd->add_option("--s", cfg.s, "Sparsity factor, ceiling of the triple probability");
    cmd->add_option("--alpha", cfg.alpha, "Dictionary orthogonality weight");
    cmd->add_option("--beta", cfg.beta, "Loading L1 weight");
    cmd->add_option("--lr", cfg.lr, "Adam learning rate");
    cmd->add_option("--dropout", cfg.dropout, "Dropout rate on the composite vectors");
    cmd->add_option("--batch-size", cfg.batch_size, "(head, relation) pairs per batch");
    cmd->add_option("--local-epochs", cfg.local_epochs, "Local epochs per round");
    cmd->add_option("--rounds-max", cfg.rounds_max, "Maximum communication rounds");
    cmd->add_option("--patience", cfg.patience,
                    "Stop after this many rounds without validation MRR improvement; 0 disables");
    cmd->add_option("--eval-every", cfg.eval_every,
                    "Validation cadence in rounds; 0 disables validation");
    cmd->add_option("--partition-seed", cfg.partition_seed, "Seed of the client partition");
    cmd->add_option("--init-seed", cfg.init_seed, "Seed of parameter initialization");
    cmd->add_option("--shuffle-seed", cfg.shuffle_seed, "Seed of batch shuffles and dropout");
    cmd->add_option("--mode", cfg.mode, "federated or local_only")
        ->check(CLI::IsMember({"federated", "local_only"}));
    cmd->add_option("--train-ratio", cfg.train_ratio, "Training split fraction");
    cmd->add_option("--valid-ratio", cfg.valid_ratio, "Validation split fraction");
    cmd->add_option("--test-ratio", cfg.test_ratio, "Test split fraction");

    cmd->add_option("--output-dir", cfg.output_dir, "Artifact directory")
        ->envname("FLEST_OUTPUT_DIR");
    cmd->add_option("--threads", cfg.threads, "Concurrent client updates per round");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"FLEST: federated knowledge-graph embedding by tensor factorization"};
    app.require_subcommand(1);

    flest::ExperimentConfig cfg;
    add_config_options(&app, cfg);

    CLI::App* partition =
        app.add_subcommand("partition", "Split a dataset across clients")->fallthrough();

    CLI::App* train = app.add_subcommand("train", "Run federated training")->fallthrough();

    CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint")->fallthrough();
    flest::EvalArgs eval_args;
    eval->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint file")->required();
    eval->add_option("--split", eval_args.split, "train, valid, or test")
        ->check(CLI::IsMember({"train", "valid", "test"}));
    eval->add_flag("--raw", eval_args.raw, "Rank against the unfiltered candidate set");

    CLI::App* gradcheck =
        app.add_subcommand("gradcheck", "Finite-difference check of the analytic gradients")
            ->fallthrough();
    flest::GradcheckArgs gradcheck_args;
    gradcheck->add_option("--instances", gradcheck_args.instances, "Random instances to test");
    gradcheck->add_option("--seed", gradcheck_args.seed, "Base seed of the instance grid");
    gradcheck->add_flag("--corrupt", gradcheck_args.corrupt)->group("");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (partition->parsed()) return flest::cmd_partition(cfg);
        if (train->parsed()) return flest::cmd_train(cfg);
        if (eval->parsed()) return flest::cmd_eval(cfg, eval_args);
        if (gradcheck->parsed()) return flest::cmd_gradcheck(gradcheck_args);
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
