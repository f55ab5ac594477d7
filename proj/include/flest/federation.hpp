#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "flest/evaluation.hpp"
#include "flest/kg_data.hpp"
#include "flest/model.hpp"

namespace flest {

struct ProtocolError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Exactly what crosses the client/server boundary: the two dictionaries
/// and the three fusion weights. Loading matrices must never be added here.
struct SharedParams {
    Matrix e_dic, r_dic, w1, w2, w3;
    std::uint32_t round = 0;

    std::size_t rank() const { return e_dic.rows(); }
};

/// Copy of the shared subset of a client's parameters.
SharedParams shared_of(const ModelParams& p, std::uint32_t round);

/// Overwrite the shared subset; private loadings untouched. ProtocolError
/// on rank mismatch.
void install_shared(ModelParams& p, const SharedParams& s);

struct ClientState {
    int client_id = 0;
    ClientShard shard;
    ModelParams params;
    AdamState opt;
    std::uint64_t seed = 0;        // keys batch shuffles and dropout masks
    std::uint64_t epoch = 0;       // lifetime epochs completed, continues across rounds
    double last_train_loss = 0.0;  // mean batch loss of the latest local update
};

struct RoundRecord {
    int round = 0;
    double mean_train_loss = 0.0;       // mean over clients
    std::vector<double> client_losses;  // by client id
    bool has_eval = false;
    std::vector<EvalReport> client_valid;  // by client id; zero-query when no valid data
    EvalReport valid_aggregate;            // query-count-weighted
    double mean_client_mrr = 0.0;          // unweighted over clients with valid queries
};

struct ServerState {
    SharedParams global;
    std::uint32_t round = 0;  // rounds executed; equals global.round in federated mode
    std::vector<RoundRecord> history;
};

enum class RunMode { federated, local_only };

struct RunConfig {
    int num_clients = 1;
    int rounds_max = 300;
    Hyper hyper;
    std::size_t rank = 200;
    double s = 0.5;
    std::uint64_t init_seed = 1;
    std::uint64_t shuffle_seed = 1;
    RunMode mode = RunMode::federated;
    int eval_every = 5;  // validation cadence in rounds; 0 disables validation
    int patience = 15;   // stop after this many rounds without MRR improvement; 0 disables
    int threads = 1;     // concurrent client updates per round

    void validate() const;
};

/// Run `epochs` local epochs of mini-batch Adam on the client's training
/// split. Batches and dropout masks are keyed by (seed, lifetime epoch), so
/// consecutive calls continue the same stream. Returns the mean batch loss
/// (0 when there were no batches).
double train_client_epochs(ClientState& client, const Hyper& hyper, int epochs);

/// One client's round: install the incoming shared subset, train
/// hyper.local_epochs epochs, return the new shared subset (round echoed
/// from the incoming message). Loadings never leave the client.
SharedParams client_local_update(ClientState& client, const SharedParams& incoming,
                                 const Hyper& hyper);

/// Entrywise mean in ascending client-id order; round incremented.
/// ProtocolError on empty input or mismatched shapes/rounds.
SharedParams aggregate(std::span<const SharedParams> uploads);

/// Server-side initial shared parameters; a pure function of (seed, rank).
SharedParams initial_shared(std::uint64_t init_seed, std::size_t rank, double s);

/// Per-client states: seeded private init, then the global shared subset
/// installed (the initial distribution, both modes).
std::vector<ClientState> setup_clients(const RunConfig& cfg, std::vector<ClientShard> shards,
                                       const SharedParams& global);

/// Federated: broadcast, per-client local update (concurrently if
/// cfg.threads > 1; results independent of scheduling), aggregate.
/// local_only: per-client local update only. Appends a RoundRecord with the
/// train losses to server.history.
void run_round(ServerState& server, std::vector<ClientState>& clients, const RunConfig& cfg);

inline EvalReport evaluate_client(const ClientState& client, std::span<const Triple> split,
                                  const EvalOptions& opts = {}) {
    return evaluate_shard(client.params, client.shard, split, opts);
}

using RoundObserver =
    std::function<void(const RoundRecord&, const ServerState&, const std::vector<ClientState>&)>;

struct TrainResult {
    ServerState server;
    std::vector<ClientState> clients;
    int best_round = 0;     // 0 when validation never ran
    double best_mrr = 0.0;  // mean client MRR at best_round
};

/// Up to cfg.rounds_max rounds with periodic validation (every
/// cfg.eval_every rounds and on the final round) and early stopping on the
/// unweighted mean of client validation MRRs. The observer, when set, sees
/// every completed round.
TrainResult run_training(const RunConfig& cfg, std::vector<ClientShard> shards,
                         const RoundObserver& observer = {});

/// Wire form of one shared-parameter message: "FLESTMSG1", little-endian
/// u32 round, u32 rank, then E_dic, R_dic, W1, W2, W3 as row-major
/// little-endian f64 blocks. 17 + 40 r^2 bytes total.
std::vector<std::uint8_t> serialize_round_message(const SharedParams& s);
SharedParams parse_round_message(std::span<const std::uint8_t> bytes);

}  // namespace flest
