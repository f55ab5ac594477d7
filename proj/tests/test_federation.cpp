#include "doctest.h"

#include <bit>
#include <cstdint>
#include <cstring>
#include <vector>

#include "flest/federation.hpp"
#include "flest/kg_data.hpp"
#include "flest/model.hpp"
#include "flest/rng.hpp"
#include "flest/synthetic.hpp"

using namespace flest;

namespace {

bool bits_equal(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::bit_cast<std::uint64_t>(a.data()[i]) !=
            std::bit_cast<std::uint64_t>(b.data()[i])) {
            return false;
        }
    }
    return true;
}

bool shared_bits_equal(const SharedParams& a, const SharedParams& b) {
    return bits_equal(a.e_dic, b.e_dic) && bits_equal(a.r_dic, b.r_dic) &&
           bits_equal(a.w1, b.w1) && bits_equal(a.w2, b.w2) && bits_equal(a.w3, b.w3);
}

bool params_bits_equal(const ModelParams& a, const ModelParams& b) {
    const auto la = param_list(a);
    const auto lb = param_list(b);
    for (std::size_t i = 0; i < la.size(); ++i) {
        if (!bits_equal(*la[i], *lb[i])) return false;
    }
    return true;
}

std::vector<ClientShard> toy_shards(int num_clients, std::uint64_t seed,
                                    std::size_t num_entities = 20,
                                    std::size_t num_triples = 120) {
    SyntheticSpec spec;
    spec.num_entities = num_entities;
    spec.num_relations = 3;
    spec.num_triples = num_triples;
    spec.planted_rank = 4;
    spec.seed = seed;
    return partition(generate_synthetic_kg(spec), num_clients, seed);
}

RunConfig toy_config(int num_clients, int rounds_max) {
    RunConfig cfg;
    cfg.num_clients = num_clients;
    cfg.rounds_max = rounds_max;
    cfg.rank = 4;
    cfg.s = 0.5;
    cfg.hyper.alpha = 0.1;
    cfg.hyper.beta = 1e-4;
    cfg.hyper.lr = 0.01;
    cfg.hyper.dropout_rate = 0.0;
    cfg.hyper.local_epochs = 1;
    cfg.hyper.batch_size = 16;
    cfg.init_seed = 5;
    cfg.shuffle_seed = 6;
    cfg.eval_every = 0;
    cfg.patience = 0;
    return cfg;
}

}  // namespace

TEST_CASE("shared_of and install_shared") {
    const ModelParams p = init_params(3, 4, 6, 2, 0.5);
    const SharedParams s = shared_of(p, 7);
    CHECK(s.round == 7);
    CHECK(s.rank() == 4);
    CHECK(bits_equal(s.e_dic, p.e_dic));
    CHECK(bits_equal(s.w3, p.w3));

    ModelParams q = init_params(4, 4, 6, 2, 0.5);
    const Matrix saved_loading = q.e_loading;
    install_shared(q, s);
    CHECK(bits_equal(q.e_dic, p.e_dic));
    CHECK(bits_equal(q.w1, p.w1));
    CHECK(bits_equal(q.e_loading, saved_loading));  // private side untouched

    ModelParams wrong = init_params(5, 3, 6, 2, 0.5);
    CHECK_THROWS_AS(install_shared(wrong, s), ProtocolError);
}

TEST_CASE("client_local_update with zero epochs is a passthrough") {
    RunConfig cfg = toy_config(1, 1);
    const SharedParams global = initial_shared(cfg.init_seed, cfg.rank, cfg.s);
    std::vector<ClientState> clients = setup_clients(cfg, toy_shards(1, 11), global);
    REQUIRE(clients.size() == 1);

    Hyper hyper = cfg.hyper;
    hyper.local_epochs = 0;
    const Matrix loadings_before = clients[0].params.e_loading;
    const SharedParams incoming = shared_of(init_params(99, cfg.rank, 1, 1, cfg.s), 3);
    const SharedParams out = client_local_update(clients[0], incoming, hyper);
    CHECK(out.round == 3);
    CHECK(shared_bits_equal(out, incoming));
    CHECK(bits_equal(clients[0].params.e_loading, loadings_before));
    CHECK(clients[0].epoch == 0);
}

TEST_CASE("client_local_update matches the direct trainer bitwise") {
    RunConfig cfg = toy_config(1, 1);
    const SharedParams global = initial_shared(cfg.init_seed, cfg.rank, cfg.s);
    std::vector<ClientState> a = setup_clients(cfg, toy_shards(1, 12), global);
    std::vector<ClientState> b = a;  // value copy, identical state

    Hyper hyper = cfg.hyper;
    hyper.local_epochs = 1;
    const SharedParams upload = client_local_update(a[0], global, hyper);

    install_shared(b[0].params, global);
    train_client_epochs(b[0], hyper, 1);
    CHECK(params_bits_equal(a[0].params, b[0].params));
    CHECK(shared_bits_equal(upload, shared_of(b[0].params, global.round)));
    CHECK(a[0].epoch == 1);
}

TEST_CASE("identical shards and seeds give identical uploads") {
    RunConfig cfg = toy_config(1, 1);
    const SharedParams global = initial_shared(cfg.init_seed, cfg.rank, cfg.s);
    std::vector<ClientState> clients = setup_clients(cfg, toy_shards(1, 13), global);

    ClientState twin = clients[0];
    twin.client_id = 1;  // id is not a randomness source
    const SharedParams u0 = client_local_update(clients[0], global, cfg.hyper);
    const SharedParams u1 = client_local_update(twin, global, cfg.hyper);
    CHECK(shared_bits_equal(u0, u1));
    CHECK(params_bits_equal(clients[0].params, twin.params));
}

TEST_CASE("aggregate") {
    const ModelParams p = init_params(21, 3, 1, 1, 0.5);
    const SharedParams solo = shared_of(p, 4);
    const SharedParams one = aggregate(std::vector<SharedParams>{solo});
    CHECK(one.round == 5);
    CHECK(shared_bits_equal(one, solo));

    SharedParams lo = solo, hi = solo;
    for (Matrix* m : {&lo.e_dic, &lo.r_dic, &lo.w1, &lo.w2, &lo.w3}) {
        for (double& x : m->data()) x = 1.0;
    }
    for (Matrix* m : {&hi.e_dic, &hi.r_dic, &hi.w1, &hi.w2, &hi.w3}) {
        for (double& x : m->data()) x = 3.0;
    }
    const SharedParams mid = aggregate(std::vector<SharedParams>{lo, hi});
    for (const Matrix* m : {&mid.e_dic, &mid.r_dic, &mid.w1, &mid.w2, &mid.w3}) {
        for (double x : m->data()) CHECK(x == 2.0);
    }

    // five random uploads against a scalar mean
    std::vector<SharedParams> uploads;
    for (int i = 0; i < 5; ++i) uploads.push_back(shared_of(init_params(30 + static_cast<std::uint64_t>(i), 3, 1, 1, 0.5), 9));
    const SharedParams mean = aggregate(uploads);
    CHECK(mean.round == 10);
    for (std::size_t i = 0; i < 9; ++i) {
        double s = 0.0;
        for (const SharedParams& u : uploads) s += u.w2.data()[i];
        CHECK(std::abs(mean.w2.data()[i] - s / 5.0) <= 1e-12);
    }

    CHECK_THROWS_AS(aggregate(std::vector<SharedParams>{}), ProtocolError);
    SharedParams small = shared_of(init_params(1, 2, 1, 1, 0.5), 9);
    CHECK_THROWS_AS(aggregate(std::vector<SharedParams>{solo, small}), ProtocolError);
    SharedParams late = solo;
    late.round = 8;
    CHECK_THROWS_AS(aggregate(std::vector<SharedParams>{solo, late}), ProtocolError);
}

TEST_CASE("run_round with one client publishes that client's upload") {
    RunConfig cfg = toy_config(1, 1);
    ServerState server;
    server.global = initial_shared(cfg.init_seed, cfg.rank, cfg.s);
    std::vector<ClientState> clients = setup_clients(cfg, toy_shards(1, 14), server.global);

    run_round(server, clients, cfg);
    CHECK(server.round == 1);
    CHECK(server.global.round == 1);
    CHECK(shared_bits_equal(server.global, shared_of(clients[0].params, 1)));
    REQUIRE(server.history.size() == 1);
    CHECK(server.history[0].client_losses.size() == 1);
}

TEST_CASE("local_only keeps the server global frozen") {
    RunConfig cfg = toy_config(2, 1);
    cfg.mode = RunMode::local_only;
    ServerState server;
    server.global = initial_shared(cfg.init_seed, cfg.rank, cfg.s);
    const SharedParams before = server.global;
    std::vector<ClientState> clients = setup_clients(cfg, toy_shards(2, 15), server.global);

    run_round(server, clients, cfg);
    run_round(server, clients, cfg);
    CHECK(shared_bits_equal(server.global, before));
    CHECK(server.global.round == before.round);
    CHECK(server.round == 2);
    // clients trained away from the frozen global
    CHECK_FALSE(shared_bits_equal(shared_of(clients[0].params, 0), before));
    // and away from each other
    CHECK_FALSE(bits_equal(clients[0].params.e_dic, clients[1].params.e_dic));
}

TEST_CASE("broadcast aligns shared subsets, private params stay distinct") {
    RunConfig cfg = toy_config(3, 1);
    ServerState server;
    server.global = initial_shared(cfg.init_seed, cfg.rank, cfg.s);
    std::vector<ClientState> clients = setup_clients(cfg, toy_shards(3, 16, 24, 150), server.global);

    // initial distribution already aligned them
    CHECK(shared_bits_equal(shared_of(clients[0].params, 0), shared_of(clients[1].params, 0)));

    run_round(server, clients, cfg);
    // after training, shared subsets have diverged
    CHECK_FALSE(bits_equal(clients[0].params.e_dic, clients[1].params.e_dic));

    // the next broadcast realigns every client with the new global
    for (ClientState& c : clients) install_shared(c.params, server.global);
    for (std::size_t c = 1; c < clients.size(); ++c) {
        CHECK(shared_bits_equal(shared_of(clients[0].params, 1),
                                shared_of(clients[c].params, 1)));
    }
    CHECK_FALSE(bits_equal(clients[0].params.e_loading, clients[1].params.e_loading));
}

TEST_CASE("run_training basics") {
    RunConfig cfg = toy_config(2, 1);
    const TrainResult one = run_training(cfg, toy_shards(2, 17));
    CHECK(one.server.history.size() == 1);
    CHECK(one.server.round == 1);

    // reruns are bit-identical
    cfg = toy_config(2, 6);
    const TrainResult a = run_training(cfg, toy_shards(2, 18));
    const TrainResult b = run_training(cfg, toy_shards(2, 18));
    REQUIRE(a.server.history.size() == b.server.history.size());
    for (std::size_t i = 0; i < a.server.history.size(); ++i) {
        CHECK(std::bit_cast<std::uint64_t>(a.server.history[i].mean_train_loss) ==
              std::bit_cast<std::uint64_t>(b.server.history[i].mean_train_loss));
        CHECK(a.server.history[i].client_losses == b.server.history[i].client_losses);
    }
    REQUIRE(a.clients.size() == b.clients.size());
    for (std::size_t c = 0; c < a.clients.size(); ++c) {
        CHECK(params_bits_equal(a.clients[c].params, b.clients[c].params));
    }
    CHECK(shared_bits_equal(a.server.global, b.server.global));

    // concurrency must not change results
    RunConfig threaded = cfg;
    threaded.threads = 3;
    const TrainResult t = run_training(threaded, toy_shards(2, 18));
    REQUIRE(t.server.history.size() == a.server.history.size());
    for (std::size_t i = 0; i < a.server.history.size(); ++i) {
        CHECK(t.server.history[i].client_losses == a.server.history[i].client_losses);
    }
    CHECK(shared_bits_equal(t.server.global, a.server.global));
}

TEST_CASE("training loss decreases on a toy run") {
    RunConfig cfg = toy_config(2, 50);
    const TrainResult r = run_training(cfg, toy_shards(2, 19));
    REQUIRE(r.server.history.size() == 50);
    CHECK(r.server.history.back().mean_train_loss < r.server.history.front().mean_train_loss);
}

TEST_CASE("validation cadence and early stopping") {
    RunConfig cfg = toy_config(2, 5);
    cfg.eval_every = 2;
    cfg.patience = 0;
    const TrainResult r = run_training(cfg, toy_shards(2, 20, 40, 400));
    REQUIRE(r.server.history.size() == 5);
    CHECK_FALSE(r.server.history[0].has_eval);
    CHECK(r.server.history[1].has_eval);
    CHECK_FALSE(r.server.history[2].has_eval);
    CHECK(r.server.history[3].has_eval);
    CHECK(r.server.history[4].has_eval);  // final round always evaluates
    CHECK(r.server.history[1].client_valid.size() == 2);
    CHECK(r.server.history[1].valid_aggregate.num_queries > 0);

    // a model frozen by a vanishing learning rate stops early
    RunConfig frozen = toy_config(2, 60);
    frozen.hyper.lr = 1e-15;
    frozen.eval_every = 5;
    frozen.patience = 15;
    const TrainResult stopped = run_training(frozen, toy_shards(2, 20, 40, 400));
    CHECK(stopped.server.history.size() < 60);
    CHECK(stopped.server.history.back().has_eval);
    const int last_round = stopped.server.history.back().round;
    CHECK(last_round - stopped.best_round >= frozen.patience);

    // observer sees every completed round
    int seen = 0;
    RunConfig obs_cfg = toy_config(1, 4);
    run_training(obs_cfg, toy_shards(1, 21),
                 [&seen](const RoundRecord& rec, const ServerState&, const std::vector<ClientState>&) {
                     CHECK(rec.round == seen + 1);
                     ++seen;
                 });
    CHECK(seen == 4);
}

TEST_CASE("round messages carry exactly the shared subset") {
    const ModelParams p = init_params(77, 3, 5, 2, 0.5);
    const SharedParams s = shared_of(p, 12);
    const std::vector<std::uint8_t> bytes = serialize_round_message(s);
    CHECK(bytes.size() == 17 + 40 * 3 * 3);  // header + round + rank + 5 r*r doubles
    CHECK(std::memcmp(bytes.data(), "FLESTMSG1", 9) == 0);

    const SharedParams back = parse_round_message(bytes);
    CHECK(back.round == 12);
    CHECK(back.rank() == 3);
    CHECK(shared_bits_equal(back, s));

    std::vector<std::uint8_t> truncated(bytes.begin(), bytes.end() - 1);
    CHECK_THROWS_AS(parse_round_message(truncated), ProtocolError);
    std::vector<std::uint8_t> bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(parse_round_message(bad), ProtocolError);

    // privacy audit: no message for any rank has room for a loading matrix
    for (std::size_t r = 1; r <= 8; ++r) {
        const SharedParams g = initial_shared(1, r, 0.5);
        CHECK(serialize_round_message(g).size() == 17 + 40 * r * r);
    }
}

TEST_CASE("RunConfig validation") {
    RunConfig cfg = toy_config(1, 1);
    CHECK_NOTHROW(cfg.validate());
    cfg.num_clients = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = toy_config(1, 0);
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = toy_config(1, 1);
    cfg.rank = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = toy_config(1, 1);
    cfg.s = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = toy_config(1, 1);
    cfg.s = 1.5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = toy_config(1, 1);
    cfg.threads = -1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
