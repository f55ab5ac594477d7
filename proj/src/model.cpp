#include "flest/model.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>

namespace flest {

namespace {

constexpr double kLogClamp = 1e-12;

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double cell_nll(double theta, double label, double s) {
    const double p = s * sigmoid(theta);
    const double lp = std::log(std::max(p, kLogClamp));
    const double lq = std::log(std::max(1.0 - p, kLogClamp));
    return -(label * lp + (1.0 - label) * lq);
}

// d(cell_nll)/d(theta)
double cell_dnll(double theta, double label, double s) {
    const double sig = sigmoid(theta);
    const double p = s * sig;
    const double denom = std::max(1.0 - p, kLogClamp);
    return -label * (1.0 - sig) + (1.0 - label) * s * sig * (1.0 - sig) / denom;
}

void check_entity(const ModelParams& p, std::int32_t id, const char* what) {
    if (id < 0 || static_cast<std::size_t>(id) >= p.num_entities()) {
        throw std::out_of_range(std::string(what) + " id " + std::to_string(id) +
                                " out of range [0," + std::to_string(p.num_entities()) + ")");
    }
}

void check_relation(const ModelParams& p, std::int32_t id) {
    if (id < 0 || static_cast<std::size_t>(id) >= p.num_relations()) {
        throw std::out_of_range("relation id " + std::to_string(id) + " out of range [0," +
                                std::to_string(p.num_relations()) + ")");
    }
}

void hadamard_into(std::vector<double>& a, std::span<const double> b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] *= b[i];
}

// m += u v^T
void outer_add(Matrix& m, std::span<const double> u, std::span<const double> v) {
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double ui = u[i];
        for (std::size_t j = 0; j < v.size(); ++j) m(i, j) += ui * v[j];
    }
}

}  // namespace

bool ModelParams::all_finite() const {
    for (const Matrix* m : param_list(*this)) {
        if (!m->all_finite()) return false;
    }
    return true;
}

void Hyper::validate() const {
    if (alpha < 0.0) throw std::invalid_argument("Hyper: alpha must be >= 0");
    if (beta < 0.0) throw std::invalid_argument("Hyper: beta must be >= 0");
    if (!(lr > 0.0)) throw std::invalid_argument("Hyper: lr must be > 0");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
        throw std::invalid_argument("Hyper: dropout_rate must be in [0,1)");
    }
    if (local_epochs < 0) throw std::invalid_argument("Hyper: local_epochs must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("Hyper: batch_size must be >= 1");
}

GradSet GradSet::zeros_like(const ModelParams& p) {
    GradSet g;
    g.e_dic = Matrix::zeros(p.e_dic.rows(), p.e_dic.cols());
    g.r_dic = Matrix::zeros(p.r_dic.rows(), p.r_dic.cols());
    g.w1 = Matrix::zeros(p.w1.rows(), p.w1.cols());
    g.w2 = Matrix::zeros(p.w2.rows(), p.w2.cols());
    g.w3 = Matrix::zeros(p.w3.rows(), p.w3.cols());
    g.e_loading = Matrix::zeros(p.e_loading.rows(), p.e_loading.cols());
    g.r_loading = Matrix::zeros(p.r_loading.rows(), p.r_loading.cols());
    return g;
}

AdamState AdamState::init(const ModelParams& p) {
    AdamState st;
    st.m = GradSet::zeros_like(p);
    st.v = GradSet::zeros_like(p);
    st.step = 0;
    return st;
}

namespace {

// Orthonormalize columns in place (modified Gram-Schmidt).
void orthonormalize_columns(Matrix& m) {
    const std::size_t n = m.rows();
    for (std::size_t j = 0; j < m.cols(); ++j) {
        for (std::size_t k = 0; k < j; ++k) {
            double proj = 0.0;
            for (std::size_t i = 0; i < n; ++i) proj += m(i, k) * m(i, j);
            for (std::size_t i = 0; i < n; ++i) m(i, j) -= proj * m(i, k);
        }
        double norm = 0.0;
        for (std::size_t i = 0; i < n; ++i) norm += m(i, j) * m(i, j);
        norm = std::sqrt(norm);
        if (norm < 1e-12) {
            // degenerate draw; fall back to a basis vector
            for (std::size_t i = 0; i < n; ++i) m(i, j) = (i == j % n) ? 1.0 : 0.0;
        } else {
            for (std::size_t i = 0; i < n; ++i) m(i, j) /= norm;
        }
    }
}

Matrix random_orthogonal(std::size_t r, Rng& rng) {
    Matrix m(r, r);
    for (double& x : m.data()) x = rng.gaussian();
    orthonormalize_columns(m);
    return m;
}

}  // namespace

ModelParams init_params(std::uint64_t seed, std::size_t rank, std::size_t num_entities,
                        std::size_t num_relations, double s) {
    if (rank < 1) throw std::invalid_argument("init_params: rank must be >= 1");
    if (!(s > 0.0 && s <= 1.0)) throw std::invalid_argument("init_params: s must be in (0,1]");
    ModelParams p;
    p.rank = rank;
    p.s = s;

    Rng dic_rng(mix_seed(seed, 0xd1c));
    p.e_dic = random_orthogonal(rank, dic_rng);
    p.r_dic = random_orthogonal(rank, dic_rng);

    Rng w_rng(mix_seed(seed, 0xf05e));
    auto noisy_identity = [&]() {
        Matrix m = Matrix::identity(rank);
        for (double& x : m.data()) x += 0.01 * w_rng.gaussian();
        return m;
    };
    p.w1 = noisy_identity();
    p.w2 = noisy_identity();
    p.w3 = noisy_identity();

    const double scale = 1.0 / std::sqrt(static_cast<double>(rank));
    Rng load_rng(mix_seed(seed, 0x10ad));
    p.e_loading = Matrix(rank, num_entities);
    for (double& x : p.e_loading.data()) x = scale * load_rng.gaussian();
    p.r_loading = Matrix(rank, num_relations);
    for (double& x : p.r_loading.data()) x = scale * load_rng.gaussian();
    return p;
}

std::vector<double> composite_entity(const ModelParams& p, std::int32_t id) {
    check_entity(p, id, "entity");
    return matvec(p.w1, matvec(p.e_dic, p.e_loading.col(static_cast<std::size_t>(id))));
}

std::vector<double> composite_relation(const ModelParams& p, std::int32_t id) {
    check_relation(p, id);
    return matvec(p.w2, matvec(p.r_dic, p.r_loading.col(static_cast<std::size_t>(id))));
}

std::vector<double> composite_tail(const ModelParams& p, std::int32_t id) {
    check_entity(p, id, "entity");
    return matvec(p.w3, matvec(p.e_dic, p.e_loading.col(static_cast<std::size_t>(id))));
}

double score_triple(const ModelParams& p, std::int32_t h, std::int32_t rel, std::int32_t t) {
    std::vector<double> z = composite_entity(p, h);
    hadamard_into(z, composite_relation(p, rel));
    const std::vector<double> w = composite_tail(p, t);
    return dot(z, w);
}

std::vector<double> score_all_tails(const ModelParams& p, std::int32_t h, std::int32_t rel) {
    std::vector<double> z = composite_entity(p, h);
    hadamard_into(z, composite_relation(p, rel));
    // E_dic * E_loading composed once; column t of the product is bit-equal
    // to matvec(E_dic, E_loading[:,t]).
    const Matrix ce = matmul(p.e_dic, p.e_loading);
    std::vector<double> out(p.num_entities());
    for (std::size_t t = 0; t < out.size(); ++t) {
        out[t] = dot(z, matvec(p.w3, ce.col(t)));
    }
    return out;
}

std::vector<double> score_all_heads(const ModelParams& p, std::int32_t rel, std::int32_t t) {
    // Replays score_triple's exact operation sequence per candidate,
    // including the (u.*v) grouping; u.*(v.*w) would not be bit-identical.
    const std::vector<double> v = composite_relation(p, rel);
    const std::vector<double> w = composite_tail(p, t);
    const Matrix ce = matmul(p.e_dic, p.e_loading);
    std::vector<double> out(p.num_entities());
    for (std::size_t h = 0; h < out.size(); ++h) {
        std::vector<double> z = matvec(p.w1, ce.col(h));
        hadamard_into(z, v);
        out[h] = dot(z, w);
    }
    return out;
}

double prob_from_score(double theta, double s) {
    if (!(s > 0.0 && s <= 1.0)) throw std::invalid_argument("prob_from_score: s must be in (0,1]");
    return s * sigmoid(theta);
}

double nll_loss(std::span<const double> scores, std::span<const double> labels, double s) {
    if (scores.size() != labels.size()) {
        throw std::invalid_argument("nll_loss: scores length " + std::to_string(scores.size()) +
                                    " != labels length " + std::to_string(labels.size()));
    }
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) total += cell_nll(scores[i], labels[i], s);
    return total;
}

double dictionary_penalty(const Matrix& e_dic, const Matrix& r_dic) {
    if (e_dic.rows() != e_dic.cols() || r_dic.rows() != r_dic.cols() ||
        e_dic.rows() != r_dic.rows()) {
        throw_shape_error("dictionary_penalty", e_dic.shape_str(), r_dic.shape_str());
    }
    auto gram_residual = [](const Matrix& m) {
        Matrix g = matmul(transpose(m), m);
        for (std::size_t i = 0; i < g.rows(); ++i) g(i, i) -= 1.0;
        return frobenius_norm_sq(g);
    };
    return gram_residual(e_dic) + gram_residual(r_dic);
}

double loading_penalty(const Matrix& e_loading, const Matrix& r_loading) {
    double total = 0.0;
    for (double x : e_loading.data()) total += std::abs(x);
    for (double x : r_loading.data()) total += std::abs(x);
    return total;
}

DenseBatch to_dense(const Batch& b) {
    DenseBatch d;
    d.pairs = b.pairs;
    d.num_entities = b.num_entities;
    d.labels.reserve(b.pairs.size());
    for (std::size_t i = 0; i < b.pairs.size(); ++i) d.labels.push_back(b.label_vector(i));
    return d;
}

namespace {

struct PairMasks {
    std::vector<double> u, v, w;  // inverted-dropout masks, pre-scaled
};

// Core forward/backward over one batch. `labels(i)` yields the dense label
// row for pair i. The NLL term is divided by the number of pairs; the 1/P
// factor is folded into the per-cell dL/dtheta values (the T tensor of the
// likelihood gradient).
LossGrad batch_eval(const ModelParams& p, std::span<const std::pair<std::int32_t, std::int32_t>> pairs,
                    const std::function<std::span<const double>(std::size_t)>& labels,
                    const Hyper& hy, const BatchDropout* dropout, bool want_grad) {
    const std::size_t r = p.rank;
    const std::size_t ne = p.num_entities();

    LossGrad out;
    if (want_grad) out.grads = GradSet::zeros_like(p);

    const bool use_dropout = dropout != nullptr && dropout->rate > 0.0;
    Rng mask_rng(use_dropout ? dropout->seed : 0);
    const std::vector<double> ones(r, 1.0);

    if (!pairs.empty()) {
        // tail composite of every entity, precomposed once per batch
        const Matrix wt = matmul(matmul(p.w3, p.e_dic), p.e_loading);  // r x |E|
        const double inv_pairs = 1.0 / static_cast<double>(pairs.size());

        std::vector<double> theta(ne), tcell(ne);
        double nll_sum = 0.0;

        for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
            const auto [h, rel] = pairs[pi];
            check_entity(p, h, "head");
            check_relation(p, rel);

            PairMasks masks;
            if (use_dropout) {
                masks.u = apply_dropout(ones, dropout->rate, mask_rng);
                masks.v = apply_dropout(ones, dropout->rate, mask_rng);
                masks.w = apply_dropout(ones, dropout->rate, mask_rng);
            }

            const std::vector<double> eh = p.e_loading.col(static_cast<std::size_t>(h));
            const std::vector<double> c = matvec(p.e_dic, eh);
            std::vector<double> u = matvec(p.w1, c);
            const std::vector<double> q = p.r_loading.col(static_cast<std::size_t>(rel));
            const std::vector<double> d = matvec(p.r_dic, q);
            std::vector<double> v = matvec(p.w2, d);

            std::vector<double> u2 = u, v2 = v;
            if (use_dropout) {
                hadamard_into(u2, masks.u);
                hadamard_into(v2, masks.v);
            }
            std::vector<double> z(r);
            for (std::size_t k = 0; k < r; ++k) z[k] = u2[k] * v2[k];
            std::vector<double> zw = z;
            if (use_dropout) hadamard_into(zw, masks.w);

            const std::span<const double> a = labels(pi);
            for (std::size_t j = 0; j < ne; ++j) {
                double th = 0.0;
                for (std::size_t k = 0; k < r; ++k) th += zw[k] * wt(k, j);
                theta[j] = th;
                nll_sum += cell_nll(th, a[j], p.s);
                if (want_grad) tcell[j] = cell_dnll(th, a[j], p.s) * inv_pairs;
            }

            if (!want_grad) continue;
            GradSet& g = out.grads;

            // y = E_loading * t ; ds = dL/d(zw) = W3 E_dic y
            const std::vector<double> y = matvec(p.e_loading, tcell);
            const std::vector<double> ey = matvec(p.e_dic, y);
            const std::vector<double> ds = matvec(p.w3, ey);

            std::vector<double> dz = ds;
            if (use_dropout) hadamard_into(dz, masks.w);
            std::vector<double> du(r), dv(r);
            for (std::size_t k = 0; k < r; ++k) {
                du[k] = v2[k] * dz[k];
                dv[k] = u2[k] * dz[k];
            }
            if (use_dropout) {
                hadamard_into(du, masks.u);
                hadamard_into(dv, masks.v);
            }

            // head path
            outer_add(g.w1, du, c);
            const std::vector<double> h1 = matvec_t(p.w1, du);
            outer_add(g.e_dic, h1, eh);
            const std::vector<double> gh = matvec_t(p.e_dic, h1);
            for (std::size_t k = 0; k < r; ++k) g.e_loading(k, static_cast<std::size_t>(h)) += gh[k];

            // relation path
            outer_add(g.w2, dv, d);
            const std::vector<double> h2 = matvec_t(p.w2, dv);
            outer_add(g.r_dic, h2, q);
            const std::vector<double> gr = matvec_t(p.r_dic, h2);
            for (std::size_t k = 0; k < r; ++k) g.r_loading(k, static_cast<std::size_t>(rel)) += gr[k];

            // tail path, through every candidate entity
            outer_add(g.w3, zw, ey);
            const std::vector<double> wz = matvec_t(p.w3, zw);
            outer_add(g.e_dic, wz, y);
            const std::vector<double> gt = matvec_t(p.e_dic, wz);
            outer_add(g.e_loading, gt, tcell);
        }
        out.loss = nll_sum * inv_pairs;
    }

    out.loss += hy.alpha * dictionary_penalty(p.e_dic, p.r_dic);
    out.loss += hy.beta * loading_penalty(p.e_loading, p.r_loading);

    if (want_grad) {
        GradSet& g = out.grads;
        if (hy.alpha != 0.0) {
            auto add_dic_grad = [&](const Matrix& dic, Matrix& grad) {
                // 4 alpha (D D^T D - D), the gradient of ||D^T D - I||_F^2
                const Matrix gram = matmul(transpose(dic), dic);
                const Matrix ddd = matmul(dic, gram);
                for (std::size_t i = 0; i < grad.size(); ++i) {
                    grad.data()[i] += 4.0 * hy.alpha * (ddd.data()[i] - dic.data()[i]);
                }
            };
            add_dic_grad(p.e_dic, g.e_dic);
            add_dic_grad(p.r_dic, g.r_dic);
        }
        if (hy.beta != 0.0) {
            auto add_sgn = [&](const Matrix& m, Matrix& grad) {
                for (std::size_t i = 0; i < m.size(); ++i) {
                    const double x = m.data()[i];
                    if (x > 0.0) grad.data()[i] += hy.beta;
                    else if (x < 0.0) grad.data()[i] -= hy.beta;
                }
            };
            add_sgn(p.e_loading, g.e_loading);
            add_sgn(p.r_loading, g.r_loading);
        }
    }
    return out;
}

LossGrad eval_batch_sparse(const ModelParams& p, const Batch& b, const Hyper& hy,
                           const BatchDropout* dropout, bool want_grad) {
    if (!b.pairs.empty() && b.num_entities != p.num_entities()) {
        throw std::invalid_argument("batch num_entities " + std::to_string(b.num_entities) +
                                    " != model num_entities " + std::to_string(p.num_entities()));
    }
    std::vector<double> scratch(p.num_entities(), 0.0);
    std::size_t prev = b.pairs.size();  // sentinel: nothing to clear yet
    auto labels = [&](std::size_t i) -> std::span<const double> {
        if (prev < b.pairs.size()) {
            for (std::int32_t t : b.tails[prev]) scratch[static_cast<std::size_t>(t)] = 0.0;
        }
        for (std::int32_t t : b.tails[i]) scratch[static_cast<std::size_t>(t)] = 1.0;
        prev = i;
        return scratch;
    };
    return batch_eval(p, b.pairs, labels, hy, dropout, want_grad);
}

LossGrad eval_batch_dense(const ModelParams& p, const DenseBatch& b, const Hyper& hy,
                          bool want_grad) {
    if (!b.pairs.empty() && b.num_entities != p.num_entities()) {
        throw std::invalid_argument("batch num_entities " + std::to_string(b.num_entities) +
                                    " != model num_entities " + std::to_string(p.num_entities()));
    }
    if (b.labels.size() != b.pairs.size()) {
        throw std::invalid_argument("dense batch has " + std::to_string(b.labels.size()) +
                                    " label rows for " + std::to_string(b.pairs.size()) + " pairs");
    }
    for (const auto& row : b.labels) {
        if (row.size() != b.num_entities) {
            throw std::invalid_argument("dense batch label row length " +
                                        std::to_string(row.size()) + " != num_entities " +
                                        std::to_string(b.num_entities));
        }
    }
    auto labels = [&](std::size_t i) -> std::span<const double> { return b.labels[i]; };
    return batch_eval(p, b.pairs, labels, hy, nullptr, want_grad);
}

}  // namespace

double total_loss(const ModelParams& p, const Batch& b, const Hyper& h) {
    return eval_batch_sparse(p, b, h, nullptr, false).loss;
}

double total_loss(const ModelParams& p, const DenseBatch& b, const Hyper& h) {
    return eval_batch_dense(p, b, h, false).loss;
}

GradSet grad_all(const ModelParams& p, const Batch& b, const Hyper& h) {
    return eval_batch_sparse(p, b, h, nullptr, true).grads;
}

GradSet grad_all(const ModelParams& p, const DenseBatch& b, const Hyper& h) {
    return eval_batch_dense(p, b, h, true).grads;
}

LossGrad loss_and_grad(const ModelParams& p, const Batch& b, const Hyper& h,
                       const BatchDropout* dropout) {
    return eval_batch_sparse(p, b, h, dropout, true);
}

void adam_step(AdamState& state, ModelParams& params, const GradSet& grads, double lr) {
    auto ps = param_list(params);
    auto gs = grad_list(grads);
    auto ms = grad_list(state.m);
    auto vs = grad_list(state.v);
    for (std::size_t k = 0; k < ps.size(); ++k) {
        if (!ps[k]->same_shape(*gs[k])) {
            throw_shape_error(std::string("adam_step(") + kParamNames[k] + ")",
                              ps[k]->shape_str(), gs[k]->shape_str());
        }
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(AdamState::beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(AdamState::beta2, static_cast<double>(state.step));
    for (std::size_t k = 0; k < ps.size(); ++k) {
        auto pd = ps[k]->data();
        auto gd = gs[k]->data();
        auto md = ms[k]->data();
        auto vd = vs[k]->data();
        for (std::size_t i = 0; i < pd.size(); ++i) {
            md[i] = AdamState::beta1 * md[i] + (1.0 - AdamState::beta1) * gd[i];
            vd[i] = AdamState::beta2 * vd[i] + (1.0 - AdamState::beta2) * gd[i] * gd[i];
            const double mhat = md[i] / bc1;
            const double vhat = vd[i] / bc2;
            pd[i] -= lr * mhat / (std::sqrt(vhat) + AdamState::eps);
        }
    }
}

std::vector<double> apply_dropout(std::span<const double> v, double rate, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) {
        throw std::invalid_argument("apply_dropout: rate must be in [0,1)");
    }
    std::vector<double> out(v.begin(), v.end());
    if (rate == 0.0) return out;
    const double scale = 1.0 / (1.0 - rate);
    for (double& x : out) x = rng.uniform() < rate ? 0.0 : x * scale;
    return out;
}

}  // namespace flest
