#include "flest/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace flest {

namespace {

constexpr char kMagic[] = "FLESTCKPT1";
constexpr std::size_t kMagicLen = 10;

[[noreturn]] void corrupt(const std::string& why) {
    throw std::runtime_error("corrupt checkpoint: " + why);
}

class Writer {
  public:
    explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    }
    void u32(std::uint32_t v) {
        char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<char>(v >> (8 * i));
        out_.write(b, 4);
    }
    void u64(std::uint64_t v) {
        char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<char>(v >> (8 * i));
        out_.write(b, 8);
    }
    void f64(double d) { u64(std::bit_cast<std::uint64_t>(d)); }
    void bytes(const char* p, std::size_t n) { out_.write(p, static_cast<std::streamsize>(n)); }
    void matrix(const Matrix& m) {
        u32(static_cast<std::uint32_t>(m.rows()));
        u32(static_cast<std::uint32_t>(m.cols()));
        for (double x : m.data()) f64(x);
    }
    void close(const std::string& path) {
        out_.close();
        if (!out_) throw std::runtime_error("failed writing checkpoint: " + path);
    }

  private:
    std::ofstream out_;
};

class Reader {
  public:
    explicit Reader(const std::string& path) : in_(path, std::ios::binary) {
        if (!in_) throw std::runtime_error("cannot open checkpoint: " + path);
    }
    std::uint32_t u32() {
        unsigned char b[4];
        get(b, 4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        unsigned char b[8];
        get(b, 8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    void bytes(char* p, std::size_t n) { get(reinterpret_cast<unsigned char*>(p), n); }
    Matrix matrix() {
        const std::uint32_t rows = u32();
        const std::uint32_t cols = u32();
        if (static_cast<std::uint64_t>(rows) * cols > (1ull << 32)) corrupt("absurd matrix shape");
        Matrix m(rows, cols);
        for (double& x : m.data()) x = f64();
        return m;
    }
    void expect_eof() {
        in_.peek();
        if (!in_.eof()) corrupt("trailing bytes");
    }

  private:
    void get(unsigned char* p, std::size_t n) {
        in_.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n));
        if (in_.gcount() != static_cast<std::streamsize>(n)) corrupt("truncated file");
    }
    std::ifstream in_;
};

void write_params(Writer& w, const ModelParams& p) {
    w.u32(static_cast<std::uint32_t>(p.rank));
    w.f64(p.s);
    w.u32(static_cast<std::uint32_t>(p.num_entities()));
    w.u32(static_cast<std::uint32_t>(p.num_relations()));
    for (const Matrix* m : param_list(p)) w.matrix(*m);
}

ModelParams read_params(Reader& r) {
    ModelParams p;
    p.rank = r.u32();
    p.s = r.f64();
    const std::uint32_t ne = r.u32();
    const std::uint32_t nr = r.u32();
    for (Matrix* m : param_list(p)) *m = r.matrix();
    const bool shapes_ok = p.e_dic.rows() == p.rank && p.e_dic.cols() == p.rank &&
                           p.r_dic.same_shape(p.e_dic) && p.w1.same_shape(p.e_dic) &&
                           p.w2.same_shape(p.e_dic) && p.w3.same_shape(p.e_dic) &&
                           p.e_loading.rows() == p.rank && p.e_loading.cols() == ne &&
                           p.r_loading.rows() == p.rank && p.r_loading.cols() == nr;
    if (!shapes_ok) corrupt("parameter shapes inconsistent with declared sizes");
    return p;
}

void write_gradset(Writer& w, const GradSet& g) {
    for (const Matrix* m : grad_list(g)) w.matrix(*m);
}

GradSet read_gradset(Reader& r, const ModelParams& shapes) {
    GradSet g;
    auto gs = grad_list(g);
    auto ps = param_list(shapes);
    for (std::size_t i = 0; i < gs.size(); ++i) {
        *gs[i] = r.matrix();
        if (!gs[i]->same_shape(*ps[i])) corrupt("optimizer moment shape mismatch");
    }
    return g;
}

}  // namespace

CheckpointData checkpoint_of(std::uint64_t config_hash, const ServerState& server,
                             const std::vector<ClientState>& clients) {
    CheckpointData d;
    d.config_hash = config_hash;
    d.round = server.round;
    d.global = server.global;
    d.clients.reserve(clients.size());
    for (const ClientState& c : clients) {
        d.clients.push_back({c.client_id, c.seed, c.epoch, c.params, c.opt});
    }
    return d;
}

void save_checkpoint(const std::string& path, const CheckpointData& data) {
    Writer w(path);
    w.bytes(kMagic, kMagicLen);
    w.u64(data.config_hash);
    w.u32(data.round);
    w.u32(static_cast<std::uint32_t>(data.clients.size()));
    w.u32(data.global.round);
    w.u32(static_cast<std::uint32_t>(data.global.rank()));
    w.matrix(data.global.e_dic);
    w.matrix(data.global.r_dic);
    w.matrix(data.global.w1);
    w.matrix(data.global.w2);
    w.matrix(data.global.w3);
    for (const ClientCheckpoint& c : data.clients) {
        w.u32(static_cast<std::uint32_t>(c.client_id));
        w.u64(c.seed);
        w.u64(c.epoch);
        write_params(w, c.params);
        w.u64(static_cast<std::uint64_t>(c.opt.step));
        write_gradset(w, c.opt.m);
        write_gradset(w, c.opt.v);
    }
    w.close(path);
}

CheckpointData load_checkpoint(const std::string& path) {
    Reader r(path);
    char magic[kMagicLen];
    r.bytes(magic, kMagicLen);
    if (std::memcmp(magic, kMagic, kMagicLen) != 0) corrupt("bad magic");
    CheckpointData d;
    d.config_hash = r.u64();
    d.round = r.u32();
    const std::uint32_t num_clients = r.u32();
    d.global.round = r.u32();
    const std::uint32_t rank = r.u32();
    d.global.e_dic = r.matrix();
    d.global.r_dic = r.matrix();
    d.global.w1 = r.matrix();
    d.global.w2 = r.matrix();
    d.global.w3 = r.matrix();
    if (d.global.rank() != rank) corrupt("global shape mismatch");
    d.clients.reserve(num_clients);
    for (std::uint32_t i = 0; i < num_clients; ++i) {
        ClientCheckpoint c;
        c.client_id = static_cast<int>(r.u32());
        c.seed = r.u64();
        c.epoch = r.u64();
        c.params = read_params(r);
        c.opt.step = static_cast<long>(r.u64());
        c.opt.m = read_gradset(r, c.params);
        c.opt.v = read_gradset(r, c.params);
        d.clients.push_back(std::move(c));
    }
    r.expect_eof();
    return d;
}

void restore_clients(const CheckpointData& data, std::vector<ClientState>& clients) {
    if (data.clients.size() != clients.size()) {
        throw std::runtime_error("checkpoint has " + std::to_string(data.clients.size()) +
                                 " clients, run has " + std::to_string(clients.size()));
    }
    for (std::size_t i = 0; i < clients.size(); ++i) {
        const ClientCheckpoint& c = data.clients[i];
        ClientState& st = clients[i];
        if (c.client_id != st.client_id) {
            throw std::runtime_error("checkpoint client id " + std::to_string(c.client_id) +
                                     " != expected " + std::to_string(st.client_id));
        }
        if (c.params.num_entities() != st.shard.vocab.num_entities() ||
            c.params.num_relations() != st.shard.vocab.num_relations()) {
            throw std::runtime_error("checkpoint params do not match client " +
                                     std::to_string(st.client_id) + "'s vocabulary");
        }
        st.params = c.params;
        st.opt = c.opt;
        st.seed = c.seed;
        st.epoch = c.epoch;
    }
}

}  // namespace flest
