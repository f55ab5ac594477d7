#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "flest/kg_data.hpp"
#include "flest/matrix.hpp"
#include "flest/rng.hpp"

namespace flest {

/// One client's full parameter set. The shared part (e_dic, r_dic, w1, w2,
/// w3) is what federation uploads; the loading matrices are client-private.
/// The rank-r superdiagonal core tensor is implicit and never stored.
struct ModelParams {
    std::size_t rank = 0;
    double s = 0.5;  // sparsity factor, ceiling of the triple probability
    Matrix e_dic;    // r x r entity dictionary
    Matrix r_dic;    // r x r relation dictionary
    Matrix w1, w2, w3;  // r x r fusion weights (CP factors of the core)
    Matrix e_loading;   // r x |E|
    Matrix r_loading;   // r x |R|

    std::size_t num_entities() const { return e_loading.cols(); }
    std::size_t num_relations() const { return r_loading.cols(); }
    bool all_finite() const;
};

struct Hyper {
    double alpha = 0.1;         // dictionary orthogonality weight
    double beta = 1e-4;         // loading sparsity weight
    double lr = 0.0005;
    double dropout_rate = 0.3;
    int local_epochs = 3;
    std::size_t batch_size = 128;

    void validate() const;  // throws std::invalid_argument on bad ranges
};

/// One matrix per parameter of ModelParams, same shapes.
struct GradSet {
    Matrix e_dic, r_dic, w1, w2, w3, e_loading, r_loading;

    static GradSet zeros_like(const ModelParams& p);
};

inline std::array<Matrix*, 7> param_list(ModelParams& p) {
    return {&p.e_dic, &p.r_dic, &p.w1, &p.w2, &p.w3, &p.e_loading, &p.r_loading};
}
inline std::array<const Matrix*, 7> param_list(const ModelParams& p) {
    return {&p.e_dic, &p.r_dic, &p.w1, &p.w2, &p.w3, &p.e_loading, &p.r_loading};
}
inline std::array<Matrix*, 7> grad_list(GradSet& g) {
    return {&g.e_dic, &g.r_dic, &g.w1, &g.w2, &g.w3, &g.e_loading, &g.r_loading};
}
inline std::array<const Matrix*, 7> grad_list(const GradSet& g) {
    return {&g.e_dic, &g.r_dic, &g.w1, &g.w2, &g.w3, &g.e_loading, &g.r_loading};
}
inline constexpr std::array<const char*, 7> kParamNames = {
    "E_dic", "R_dic", "W1", "W2", "W3", "E_loading", "R_loading"};

struct AdamState {
    GradSet m;  // first moments
    GradSet v;  // second moments
    long step = 0;
    static constexpr double beta1 = 0.9;
    static constexpr double beta2 = 0.999;
    static constexpr double eps = 1e-8;

    static AdamState init(const ModelParams& p);
};

/// Seeded initialization: dictionaries are random orthogonal (Gram-Schmidt of
/// a Gaussian draw), fusion weights identity plus 0.01-scale noise, loadings
/// Gaussian of scale 1/sqrt(r).
ModelParams init_params(std::uint64_t seed, std::size_t rank, std::size_t num_entities,
                        std::size_t num_relations, double s);

/// Head composite W1 * E_dic * E_loading[:,id].
std::vector<double> composite_entity(const ModelParams& p, std::int32_t id);
/// Relation composite W2 * R_dic * R_loading[:,id].
std::vector<double> composite_relation(const ModelParams& p, std::int32_t id);
/// Tail composite W3 * E_dic * E_loading[:,id].
std::vector<double> composite_tail(const ModelParams& p, std::int32_t id);

/// theta(h, rel, t) = sum_k u_k v_k w_k over the three composites.
double score_triple(const ModelParams& p, std::int32_t h, std::int32_t rel, std::int32_t t);

/// Vectorized 1-N forms; entry j equals score_triple with the corresponding
/// id substituted, bit-exactly.
std::vector<double> score_all_tails(const ModelParams& p, std::int32_t h, std::int32_t rel);
std::vector<double> score_all_heads(const ModelParams& p, std::int32_t rel, std::int32_t t);

/// p = s * sigma(theta), in (0, s). Numerically stable for large |theta|.
double prob_from_score(double theta, double s);

/// Bernoulli negative log-likelihood with p = s*sigma(theta), summed over
/// entries. Labels may be soft (any value in [0,1]); batches produce 0/1.
/// Log arguments are clamped at 1e-12.
double nll_loss(std::span<const double> scores, std::span<const double> labels, double s);

/// ||E^T E - I||_F^2 + ||R^T R - I||_F^2 (squared form, consistent with the
/// analytic gradient 4(E E^T E - E)).
double dictionary_penalty(const Matrix& e_dic, const Matrix& r_dic);

/// L1 norm of all loading entries.
double loading_penalty(const Matrix& e_loading, const Matrix& r_loading);

/// Batch with explicit per-pair label vectors; the general form of Batch
/// used by gradient tests that need soft labels.
struct DenseBatch {
    std::vector<std::pair<std::int32_t, std::int32_t>> pairs;
    std::vector<std::vector<double>> labels;
    std::size_t num_entities = 0;
};

DenseBatch to_dense(const Batch& b);

/// Per-batch dropout context for training. Masks are inverted-dropout draws
/// (0 or 1/(1-rate)) applied to the three composite vectors of each pair; a
/// pair's tail-side mask is shared across all candidate entities. Mask draws
/// are a pure function of the seed.
struct BatchDropout {
    double rate = 0.0;
    std::uint64_t seed = 0;
};

/// Total loss of Eq.-style form: mean-per-pair Bernoulli NLL over the batch
/// plus alpha * dictionary_penalty plus beta * loading_penalty. The NLL term
/// is (sum over pairs and entities of the cell NLL) / num_pairs.
double total_loss(const ModelParams& p, const Batch& b, const Hyper& h);
double total_loss(const ModelParams& p, const DenseBatch& b, const Hyper& h);

/// Analytic gradients of total_loss w.r.t. every parameter, restricted to
/// the batch's cells; sgn(0) = 0 for the L1 subgradient.
GradSet grad_all(const ModelParams& p, const Batch& b, const Hyper& h);
GradSet grad_all(const ModelParams& p, const DenseBatch& b, const Hyper& h);

struct LossGrad {
    double loss = 0.0;
    GradSet grads;
};

/// One-pass loss + gradients, optionally under dropout. total_loss/grad_all
/// are the dropout-free specializations of this path.
LossGrad loss_and_grad(const ModelParams& p, const Batch& b, const Hyper& h,
                       const BatchDropout* dropout = nullptr);

/// Standard Adam update with bias correction, in place. The params/state
/// pair is owned by a single worker; deterministic.
void adam_step(AdamState& state, ModelParams& params, const GradSet& grads, double lr);

/// Inverted dropout: each entry is zeroed with probability rate, otherwise
/// scaled by 1/(1-rate). rate 0 returns the input unchanged.
std::vector<double> apply_dropout(std::span<const double> v, double rate, Rng& rng);

}  // namespace flest
