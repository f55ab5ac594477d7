#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flest/federation.hpp"
#include "flest/model.hpp"

namespace flest {

struct ClientCheckpoint {
    int client_id = 0;
    std::uint64_t seed = 0;
    std::uint64_t epoch = 0;
    ModelParams params;
    AdamState opt;
};

/// Everything needed to resume or re-score a run except the data itself;
/// shards are rebuilt from the config the hash identifies.
struct CheckpointData {
    std::uint64_t config_hash = 0;
    std::uint32_t round = 0;
    SharedParams global;
    std::vector<ClientCheckpoint> clients;
};

CheckpointData checkpoint_of(std::uint64_t config_hash, const ServerState& server,
                             const std::vector<ClientState>& clients);

/// Binary format: magic "FLESTCKPT1", then little-endian fields; matrices
/// carry their own shape headers, row-major f64. Bit-exact round trip.
void save_checkpoint(const std::string& path, const CheckpointData& data);

/// std::runtime_error on unreadable, truncated, or shape-inconsistent files.
CheckpointData load_checkpoint(const std::string& path);

/// Install checkpointed params/optimizer/counters into freshly set-up
/// clients; ids, ordering, and vocab sizes must match.
void restore_clients(const CheckpointData& data, std::vector<ClientState>& clients);

}  // namespace flest
