#include "flest/federation.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cstring>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <utility>

namespace flest {

namespace {

std::array<const Matrix*, 5> shared_list(const SharedParams& s) {
    return {&s.e_dic, &s.r_dic, &s.w1, &s.w2, &s.w3};
}
std::array<Matrix*, 5> shared_list(SharedParams& s) {
    return {&s.e_dic, &s.r_dic, &s.w1, &s.w2, &s.w3};
}

void check_shared_shapes(const SharedParams& s) {
    const std::size_t r = s.rank();
    for (const Matrix* m : shared_list(s)) {
        if (m->rows() != r || m->cols() != r) {
            throw ProtocolError("shared params not uniformly " + std::to_string(r) + "x" +
                                std::to_string(r) + ": found " + m->shape_str());
        }
    }
}

void append_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void append_f64(std::vector<std::uint8_t>& out, double d) {
    const auto bits = std::bit_cast<std::uint64_t>(d);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

std::uint32_t read_u32(std::span<const std::uint8_t> b, std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[off + static_cast<std::size_t>(i)]) << (8 * i);
    return v;
}

double read_f64(std::span<const std::uint8_t> b, std::size_t off) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[off + static_cast<std::size_t>(i)]) << (8 * i);
    return std::bit_cast<double>(v);
}

constexpr char kMsgMagic[] = "FLESTMSG1";
constexpr std::size_t kMsgMagicLen = 9;

}  // namespace

SharedParams shared_of(const ModelParams& p, std::uint32_t round) {
    SharedParams s;
    s.e_dic = p.e_dic;
    s.r_dic = p.r_dic;
    s.w1 = p.w1;
    s.w2 = p.w2;
    s.w3 = p.w3;
    s.round = round;
    return s;
}

void install_shared(ModelParams& p, const SharedParams& s) {
    check_shared_shapes(s);
    if (s.rank() != p.rank) {
        throw ProtocolError("install_shared: message rank " + std::to_string(s.rank()) +
                            " != client rank " + std::to_string(p.rank));
    }
    p.e_dic = s.e_dic;
    p.r_dic = s.r_dic;
    p.w1 = s.w1;
    p.w2 = s.w2;
    p.w3 = s.w3;
}

void RunConfig::validate() const {
    if (num_clients < 1) throw std::invalid_argument("RunConfig: num_clients must be >= 1");
    if (rounds_max < 1) throw std::invalid_argument("RunConfig: rounds_max must be >= 1");
    if (rank < 1) throw std::invalid_argument("RunConfig: rank must be >= 1");
    if (!(s > 0.0 && s <= 1.0)) throw std::invalid_argument("RunConfig: s must be in (0,1]");
    if (eval_every < 0) throw std::invalid_argument("RunConfig: eval_every must be >= 0");
    if (patience < 0) throw std::invalid_argument("RunConfig: patience must be >= 0");
    if (threads < 0) throw std::invalid_argument("RunConfig: threads must be >= 0");
    hyper.validate();
}

double train_client_epochs(ClientState& client, const Hyper& hyper, int epochs) {
    hyper.validate();
    if (epochs < 0) throw std::invalid_argument("train_client_epochs: epochs must be >= 0");
    double loss_sum = 0.0;
    std::size_t num_batches = 0;
    const std::uint64_t dropout_stream = mix_seed(client.seed, 0xd409);
    for (int e = 0; e < epochs; ++e) {
        const std::vector<Batch> batches =
            make_batches(client.shard, hyper.batch_size, client.seed, client.epoch);
        for (std::size_t bi = 0; bi < batches.size(); ++bi) {
            const BatchDropout drop{hyper.dropout_rate,
                                    mix_seed(dropout_stream, client.epoch, bi)};
            const LossGrad lg = loss_and_grad(client.params, batches[bi], hyper, &drop);
            adam_step(client.opt, client.params, lg.grads, hyper.lr);
            loss_sum += lg.loss;
            ++num_batches;
        }
        client.epoch += 1;
    }
    client.last_train_loss = num_batches == 0 ? 0.0 : loss_sum / static_cast<double>(num_batches);
    return client.last_train_loss;
}

SharedParams client_local_update(ClientState& client, const SharedParams& incoming,
                                 const Hyper& hyper) {
    install_shared(client.params, incoming);
    train_client_epochs(client, hyper, hyper.local_epochs);
    return shared_of(client.params, incoming.round);
}

SharedParams aggregate(std::span<const SharedParams> uploads) {
    if (uploads.empty()) throw ProtocolError("aggregate: no uploads");
    for (const SharedParams& u : uploads) check_shared_shapes(u);
    const SharedParams& first = uploads.front();
    for (const SharedParams& u : uploads) {
        if (u.rank() != first.rank()) {
            throw ProtocolError("aggregate: rank mismatch, " + std::to_string(u.rank()) +
                                " vs " + std::to_string(first.rank()));
        }
        if (u.round != first.round) {
            throw ProtocolError("aggregate: round mismatch, " + std::to_string(u.round) + " vs " +
                                std::to_string(first.round));
        }
    }
    // Copy the first upload, then add the rest in client-id order: the sum
    // order is fixed, and a single upload passes through bit-identically.
    SharedParams out = first;
    out.round = first.round + 1;
    auto outs = shared_list(out);
    for (std::size_t c = 1; c < uploads.size(); ++c) {
        auto ins = shared_list(uploads[c]);
        for (std::size_t m = 0; m < outs.size(); ++m) {
            auto od = outs[m]->data();
            auto id = ins[m]->data();
            for (std::size_t i = 0; i < od.size(); ++i) od[i] += id[i];
        }
    }
    const double inv = 1.0 / static_cast<double>(uploads.size());
    if (uploads.size() > 1) {
        for (Matrix* m : outs) {
            for (double& x : m->data()) x *= inv;
        }
    }
    return out;
}

SharedParams initial_shared(std::uint64_t init_seed, std::size_t rank, double s) {
    // The dictionary and fusion-weight streams of init_params depend only on
    // (seed, rank), so a 1-entity instance yields the server's shared set.
    return shared_of(init_params(init_seed, rank, 1, 1, s), 0);
}

std::vector<ClientState> setup_clients(const RunConfig& cfg, std::vector<ClientShard> shards,
                                       const SharedParams& global) {
    cfg.validate();
    if (shards.size() != static_cast<std::size_t>(cfg.num_clients)) {
        throw std::invalid_argument("setup_clients: " + std::to_string(shards.size()) +
                                    " shards for " + std::to_string(cfg.num_clients) + " clients");
    }
    std::vector<ClientState> clients;
    clients.reserve(shards.size());
    for (std::size_t c = 0; c < shards.size(); ++c) {
        ClientState st;
        st.client_id = shards[c].client_id;
        st.shard = std::move(shards[c]);
        st.params = init_params(mix_seed(cfg.init_seed, 0xc11e + c), cfg.rank,
                                st.shard.vocab.num_entities(), st.shard.vocab.num_relations(),
                                cfg.s);
        install_shared(st.params, global);
        st.opt = AdamState::init(st.params);
        st.seed = mix_seed(cfg.shuffle_seed, 0x5eed + c);
        clients.push_back(std::move(st));
    }
    return clients;
}

namespace {

// Run fn(c) for every client index, on up to `threads` workers. Each index
// is processed exactly once; client states are disjoint, so scheduling
// cannot affect results.
void for_each_client(std::size_t count, int threads, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers =
        std::min<std::size_t>(count, threads <= 1 ? 1 : static_cast<std::size_t>(threads));
    if (workers <= 1) {
        for (std::size_t c = 0; c < count; ++c) fn(c);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    auto body = [&] {
        while (true) {
            const std::size_t c = next.fetch_add(1);
            if (c >= count) return;
            try {
                fn(c);
            } catch (...) {
                const std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(body);
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace

void run_round(ServerState& server, std::vector<ClientState>& clients, const RunConfig& cfg) {
    if (clients.empty()) throw std::invalid_argument("run_round: no clients");
    RoundRecord rec;
    rec.round = static_cast<int>(server.round) + 1;
    rec.client_losses.resize(clients.size(), 0.0);

    if (cfg.mode == RunMode::federated) {
        std::vector<SharedParams> uploads(clients.size());
        for_each_client(clients.size(), cfg.threads, [&](std::size_t c) {
            uploads[c] = client_local_update(clients[c], server.global, cfg.hyper);
            rec.client_losses[c] = clients[c].last_train_loss;
        });
        server.global = aggregate(uploads);
    } else {
        for_each_client(clients.size(), cfg.threads, [&](std::size_t c) {
            rec.client_losses[c] = train_client_epochs(clients[c], cfg.hyper, cfg.hyper.local_epochs);
        });
    }

    double loss_sum = 0.0;
    for (double l : rec.client_losses) loss_sum += l;
    rec.mean_train_loss = loss_sum / static_cast<double>(clients.size());

    server.round += 1;
    server.history.push_back(std::move(rec));
}

TrainResult run_training(const RunConfig& cfg, std::vector<ClientShard> shards,
                         const RoundObserver& observer) {
    cfg.validate();
    TrainResult res;
    res.server.global = initial_shared(cfg.init_seed, cfg.rank, cfg.s);
    res.clients = setup_clients(cfg, std::move(shards), res.server.global);

    bool any_valid = false;
    for (const ClientState& c : res.clients) any_valid = any_valid || !c.shard.valid.empty();
    const bool eval_enabled = cfg.eval_every > 0 && any_valid;

    for (int round = 1; round <= cfg.rounds_max; ++round) {
        run_round(res.server, res.clients, cfg);
        RoundRecord& rec = res.server.history.back();

        bool stop = false;
        if (eval_enabled && (round % cfg.eval_every == 0 || round == cfg.rounds_max)) {
            rec.has_eval = true;
            rec.client_valid.reserve(res.clients.size());
            double mrr_sum = 0.0;
            std::size_t mrr_count = 0;
            for (const ClientState& c : res.clients) {
                if (c.shard.valid.empty()) {
                    rec.client_valid.push_back(empty_report());
                    continue;
                }
                rec.client_valid.push_back(evaluate_client(c, c.shard.valid));
                mrr_sum += rec.client_valid.back().mrr;
                ++mrr_count;
            }
            rec.valid_aggregate = aggregate_reports(rec.client_valid);
            rec.mean_client_mrr = mrr_sum / static_cast<double>(mrr_count);
            if (res.best_round == 0 || rec.mean_client_mrr > res.best_mrr) {
                res.best_mrr = rec.mean_client_mrr;
                res.best_round = round;
            }
            // stop decisions only where validation evidence arrives, so a
            // stopped run always ends on an evaluated round
            stop = cfg.patience > 0 && round - res.best_round >= cfg.patience;
        }

        if (observer) observer(rec, res.server, res.clients);
        if (stop) break;
    }
    return res;
}

std::vector<std::uint8_t> serialize_round_message(const SharedParams& s) {
    check_shared_shapes(s);
    const std::size_t r = s.rank();
    std::vector<std::uint8_t> out;
    out.reserve(kMsgMagicLen + 8 + 5 * 8 * r * r);
    out.insert(out.end(), kMsgMagic, kMsgMagic + kMsgMagicLen);
    append_u32(out, s.round);
    append_u32(out, static_cast<std::uint32_t>(r));
    for (const Matrix* m : shared_list(s)) {
        for (double x : m->data()) append_f64(out, x);
    }
    return out;
}

SharedParams parse_round_message(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kMsgMagicLen + 8 ||
        std::memcmp(bytes.data(), kMsgMagic, kMsgMagicLen) != 0) {
        throw ProtocolError("round message: bad header");
    }
    SharedParams s;
    s.round = read_u32(bytes, kMsgMagicLen);
    const std::uint32_t r = read_u32(bytes, kMsgMagicLen + 4);
    const std::size_t expect = kMsgMagicLen + 8 + 5ull * 8ull * r * r;
    if (bytes.size() != expect) {
        throw ProtocolError("round message: " + std::to_string(bytes.size()) + " bytes, expected " +
                            std::to_string(expect) + " for rank " + std::to_string(r));
    }
    std::size_t off = kMsgMagicLen + 8;
    for (Matrix* m : shared_list(s)) {
        *m = Matrix(r, r);
        for (double& x : m->data()) {
            x = read_f64(bytes, off);
            off += 8;
        }
    }
    return s;
}

}  // namespace flest
