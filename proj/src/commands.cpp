#include "flest/commands.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include "flest/checkpoint.hpp"
#include "flest/federation.hpp"
#include "flest/metrics_log.hpp"
#include "flest/model.hpp"
#include "flest/synthetic.hpp"

namespace fs = std::filesystem;

namespace flest {

namespace {

std::string fmt(double x) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return {buf, res.ptr};
}

std::vector<ClientShard> make_shards(const ExperimentConfig& cfg,
                                     const std::vector<RawTriple>& triples) {
    return partition(triples, cfg.num_clients, cfg.partition_seed, cfg.ratios());
}

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    out.close();
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

void print_report_table(std::ostream& os, const std::vector<EvalReport>& clients,
                        const EvalReport& aggregate) {
    os << "client\tqueries\tmrr\thits@1\thits@3\thits@10\n";
    auto row = [&](const std::string& name, const EvalReport& r) {
        os << name << '\t' << r.num_queries << '\t' << fmt(r.mrr);
        for (int k : kHitKs) os << '\t' << fmt(r.hits.at(k));
        os << '\n';
    };
    for (std::size_t c = 0; c < clients.size(); ++c) row(std::to_string(c), clients[c]);
    row("all", aggregate);
}

}  // namespace

std::vector<RawTriple> load_dataset(const ExperimentConfig& cfg) {
    if (!cfg.dataset.empty()) return load_triples_file(cfg.dataset);
    SyntheticSpec spec;
    spec.num_entities = cfg.synthetic_entities;
    spec.num_relations = cfg.synthetic_relations;
    spec.num_triples = cfg.synthetic_triples;
    spec.planted_rank = cfg.synthetic_rank;
    spec.seed = cfg.synthetic_seed;
    return generate_synthetic_kg(spec);
}

int cmd_partition(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::vector<RawTriple> triples = load_dataset(cfg);
    const std::vector<ClientShard> shards = make_shards(cfg, triples);
    fs::create_directories(cfg.output_dir);

    nlohmann::ordered_json summary;
    summary["num_clients"] = cfg.num_clients;
    summary["partition_seed"] = cfg.partition_seed;
    summary["num_triples"] = triples.size();
    summary["clients"] = nlohmann::ordered_json::array();

    for (const ClientShard& shard : shards) {
        // manifest: the 0-based input line index of each of the shard's
        // triples, one per line
        const std::string name = "client_" + std::to_string(shard.client_id) + ".lines";
        std::ofstream out(fs::path(cfg.output_dir) / name, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write manifest " + name);
        for (std::size_t line : shard.source_lines) out << line << '\n';
        out.close();
        if (!out) throw std::runtime_error("failed writing manifest " + name);

        nlohmann::ordered_json c;
        c["client_id"] = shard.client_id;
        c["manifest"] = name;
        c["num_triples"] = shard.triples.size();
        c["train"] = shard.train.size();
        c["valid"] = shard.valid.size();
        c["test"] = shard.test.size();
        c["num_entities"] = shard.vocab.num_entities();
        c["num_relations"] = shard.vocab.num_relations();
        summary["clients"].push_back(c);
    }
    write_text_file(fs::path(cfg.output_dir) / "partition_summary.json", summary.dump(2) + "\n");

    std::cout << "partitioned " << triples.size() << " triples across " << cfg.num_clients
              << " clients\n";
    for (const auto& c : summary["clients"]) {
        std::cout << "  client " << c["client_id"] << ": " << c["num_triples"] << " triples, "
                  << c["num_entities"] << " entities, " << c["num_relations"] << " relations\n";
    }
    return 0;
}

int cmd_train(const ExperimentConfig& cfg) {
    cfg.validate();
    std::cout << "resolved config:\n" << resolved_text(cfg) << std::flush;

    fs::create_directories(cfg.output_dir);
    const fs::path out_dir(cfg.output_dir);
    write_text_file(out_dir / "config.resolved", resolved_text(cfg));

    const std::vector<RawTriple> triples = load_dataset(cfg);
    std::vector<ClientShard> shards = make_shards(cfg, triples);
    const RunConfig rc = cfg.run_config();
    const std::uint64_t hash = config_hash(cfg);

    std::ofstream metrics(out_dir / "metrics.jsonl", std::ios::binary);
    if (!metrics) throw std::runtime_error("cannot write metrics.jsonl");

    double best_mrr = 0.0;
    int best_round = 0;
    const RoundObserver observer = [&](const RoundRecord& rec, const ServerState& server,
                                       const std::vector<ClientState>& clients) {
        metrics << round_to_json(rec).dump() << '\n';
        metrics.flush();
        std::cout << "round " << rec.round << " train_loss " << fmt(rec.mean_train_loss);
        if (rec.has_eval) {
            std::cout << " valid_mrr " << fmt(rec.mean_client_mrr);
            if (best_round == 0 || rec.mean_client_mrr > best_mrr) {
                best_mrr = rec.mean_client_mrr;
                best_round = rec.round;
                save_checkpoint((out_dir / "best.ckpt").string(),
                                checkpoint_of(hash, server, clients));
                std::cout << " *";
            }
        }
        std::cout << '\n';
    };

    const TrainResult res = run_training(rc, std::move(shards), observer);
    metrics.close();
    if (!metrics) throw std::runtime_error("failed writing metrics.jsonl");

    save_checkpoint((out_dir / "final.ckpt").string(),
                    checkpoint_of(hash, res.server, res.clients));

    nlohmann::ordered_json summary;
    summary["rounds_run"] = res.server.round;
    summary["final_train_loss"] = res.server.history.back().mean_train_loss;
    summary["best_round"] = res.best_round;
    summary["best_valid_mrr"] = res.best_mrr;
    write_text_file(out_dir / "summary.json", summary.dump(2) + "\n");

    std::cout << "finished after " << res.server.round << " rounds";
    if (res.best_round > 0) {
        std::cout << "; best valid mrr " << fmt(res.best_mrr) << " at round " << res.best_round;
    }
    std::cout << '\n';
    return 0;
}

int cmd_eval(const ExperimentConfig& cfg, const EvalArgs& args) {
    cfg.validate();
    if (args.checkpoint.empty()) throw std::invalid_argument("eval: --checkpoint is required");
    if (args.split != "train" && args.split != "valid" && args.split != "test") {
        throw std::invalid_argument("eval: split must be train, valid, or test");
    }

    const CheckpointData ckpt = load_checkpoint(args.checkpoint);
    if (ckpt.config_hash != config_hash(cfg)) {
        throw std::invalid_argument("eval: checkpoint was produced by a different config");
    }

    const std::vector<RawTriple> triples = load_dataset(cfg);
    std::vector<ClientShard> shards = make_shards(cfg, triples);
    const RunConfig rc = cfg.run_config();
    std::vector<ClientState> clients = setup_clients(rc, std::move(shards), ckpt.global);
    restore_clients(ckpt, clients);

    const EvalOptions opts{.filtered = !args.raw};
    std::vector<EvalReport> reports;
    reports.reserve(clients.size());
    for (const ClientState& c : clients) {
        const std::vector<Triple>& split = args.split == "train"  ? c.shard.train
                                           : args.split == "valid" ? c.shard.valid
                                                                   : c.shard.test;
        reports.push_back(split.empty() ? empty_report() : evaluate_client(c, split, opts));
    }
    const EvalReport aggregate = aggregate_reports(reports);
    if (aggregate.num_queries == 0) {
        throw std::invalid_argument("eval: split '" + args.split + "' is empty for every client");
    }

    print_report_table(std::cout, reports, aggregate);

    nlohmann::ordered_json j;
    j["split"] = args.split;
    j["filtered"] = opts.filtered;
    j["clients"] = nlohmann::ordered_json::array();
    for (const EvalReport& r : reports) j["clients"].push_back(report_to_json(r));
    j["aggregate"] = report_to_json(aggregate);
    fs::create_directories(cfg.output_dir);
    const std::string name = "eval_" + args.split + (args.raw ? "_raw" : "") + ".json";
    write_text_file(fs::path(cfg.output_dir) / name, j.dump(2) + "\n");
    return 0;
}

int cmd_gradcheck(const GradcheckArgs& args) {
    if (args.instances < 1) throw std::invalid_argument("gradcheck: instances must be >= 1");
    constexpr double kStep = 1e-5;
    constexpr double kTol = 1e-4;

    std::array<double, kParamNames.size()> max_err{};

    for (int i = 0; i < args.instances; ++i) {
        const std::uint64_t si = mix_seed(args.seed, static_cast<std::uint64_t>(i));
        const std::size_t r = 2 + static_cast<std::size_t>(i % 3);
        const std::size_t ne = 4 + static_cast<std::size_t>(i % 5);
        const std::size_t nr = 1 + static_cast<std::size_t>(i % 3);
        Hyper hy;
        hy.alpha = (i % 2 == 1) ? 0.1 : 0.0;
        hy.beta = ((i / 2) % 2 == 1) ? 0.1 : 0.0;
        hy.dropout_rate = 0.0;

        ModelParams p = init_params(si, r, ne, nr, 0.5);
        Rng noise(mix_seed(si, 0x0115e));
        for (Matrix* m : param_list(p)) {
            for (double& x : m->data()) x += 0.1 * noise.gaussian();
        }
        // keep every coordinate away from the |x| kink so central
        // differences see a smooth function
        auto debias = [](Matrix& m) {
            for (double& x : m.data()) {
                if (std::abs(x) < 1e-3) x = (x < 0.0 ? -1.0 : 1.0) * (1e-3 + std::abs(x));
            }
        };
        debias(p.e_loading);
        debias(p.r_loading);

        DenseBatch batch;
        batch.num_entities = ne;
        Rng brng(mix_seed(si, 0xba7));
        const std::size_t num_pairs = 2 + static_cast<std::size_t>(i % 3);
        for (std::size_t pi = 0; pi < num_pairs; ++pi) {
            batch.pairs.emplace_back(static_cast<std::int32_t>(brng.bounded(ne)),
                                     static_cast<std::int32_t>(brng.bounded(nr)));
            std::vector<double> row(ne);
            for (double& a : row) {
                a = (i % 4 == 3) ? (brng.bernoulli(0.3) ? 1.0 : 0.0) : brng.uniform();
            }
            batch.labels.push_back(std::move(row));
        }

        GradSet grads = grad_all(p, batch, hy);
        if (args.corrupt && i == 0) grads.w1(0, 0) += 0.05;

        auto ps = param_list(p);
        auto gs = grad_list(grads);
        for (std::size_t m = 0; m < ps.size(); ++m) {
            auto data = ps[m]->data();
            for (std::size_t idx = 0; idx < data.size(); ++idx) {
                const double x0 = data[idx];
                data[idx] = x0 + kStep;
                const double lp = total_loss(p, batch, hy);
                data[idx] = x0 - kStep;
                const double lm = total_loss(p, batch, hy);
                data[idx] = x0;
                const double fd = (lp - lm) / (2.0 * kStep);
                const double a = gs[m]->data()[idx];
                const double rel =
                    std::abs(a - fd) / std::max({1e-6, std::abs(a), std::abs(fd)});
                max_err[m] = std::max(max_err[m], rel);
            }
        }
    }

    // stationary probe: labels equal to the model's own probabilities make
    // the likelihood gradient vanish
    double stationary_max = 0.0;
    {
        const std::uint64_t si = mix_seed(args.seed, 0x57a7);
        ModelParams p = init_params(si, 3, 5, 2, 0.5);
        Rng noise(mix_seed(si, 0x0115e));
        for (Matrix* m : param_list(p)) {
            for (double& x : m->data()) x += 0.1 * noise.gaussian();
        }
        Hyper hy;
        hy.alpha = 0.0;
        hy.beta = 0.0;
        hy.dropout_rate = 0.0;
        DenseBatch batch;
        batch.num_entities = 5;
        Rng brng(mix_seed(si, 0xba7));
        for (int pi = 0; pi < 2; ++pi) {
            const auto h = static_cast<std::int32_t>(brng.bounded(5));
            const auto rel = static_cast<std::int32_t>(brng.bounded(2));
            batch.pairs.emplace_back(h, rel);
            std::vector<double> row(5);
            for (std::size_t t = 0; t < row.size(); ++t) {
                row[t] = prob_from_score(score_triple(p, h, rel, static_cast<std::int32_t>(t)),
                                         p.s);
            }
            batch.labels.push_back(std::move(row));
        }
        const GradSet grads = grad_all(p, batch, hy);
        for (const Matrix* m : grad_list(grads)) {
            for (double x : m->data()) stationary_max = std::max(stationary_max, std::abs(x));
        }
    }

    std::cout << "gradcheck: " << args.instances << " instances, step " << fmt(kStep)
              << ", tolerance " << fmt(kTol) << "\n";
    bool pass = true;
    for (std::size_t m = 0; m < kParamNames.size(); ++m) {
        const bool ok = max_err[m] < kTol;
        pass = pass && ok;
        std::cout << "  " << kParamNames[m] << " max rel err " << fmt(max_err[m])
                  << (ok ? "" : "  <-- FAIL") << "\n";
    }
    const bool stationary_ok = stationary_max < 1e-8;
    pass = pass && stationary_ok;
    std::cout << "  stationary gradient max |entry| " << fmt(stationary_max)
              << (stationary_ok ? "" : "  <-- FAIL") << "\n";
    std::cout << (pass ? "gradcheck PASS" : "gradcheck FAIL") << std::endl;
    return pass ? 0 : 3;
}

}  // namespace flest
