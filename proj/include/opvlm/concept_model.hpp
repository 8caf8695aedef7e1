#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "opvlm/hypgeom.hpp"
#include "opvlm/matrix.hpp"
#include "opvlm/nn.hpp"

namespace opvlm {

struct ModelConfig {
    std::size_t d_feat = 128;
    std::size_t d_model = 64;
    std::size_t d_ball = 32;
    std::size_t k = 8;
    std::size_t hidden_mult = 4;  // embedder hidden width = hidden_mult * d_feat
    double curvature = 1.0;       // 0 selects the Euclidean-limit baseline
    double margin = 1.0;
    double lambda = 1.0;
    double eps_in = 1e-5;
    double eps_ball = 1e-5;
    bool use_instance_norm = true;

    double default_tau() const { return margin / 2.0; }
};

struct ConceptEmbedding {
    std::string concept_id;
    Matrix tokens;  // k x d_model
};

struct EmbedderParams {
    Mlp mlp;  // d_feat -> hidden -> k * d_model
};

struct DiscriminatorParams {
    DenseLayer query_head;    // d_feat -> d_ball
    DenseLayer concept_head;  // d_model -> d_ball
    Curvature curvature;
    double margin = 1.0;
};

struct SurrogateHeadParams {
    DenseLayer scorer;  // (d_model + d_feat) -> 1
};

struct ModelParams {
    ModelConfig config;
    EmbedderParams embedder;
    DiscriminatorParams disc;
    SurrogateHeadParams head;
};

ModelParams init_model(const ModelConfig& config, std::uint64_t seed);
ModelParams zeros_like(const ModelParams& p);

std::size_t param_count(const ModelParams& p);
Vec flatten(const ModelParams& p);
void unflatten(const Vec& flat, ModelParams& p);

// 64-bit digest of the embedder parameters (the memory bank's model fingerprint).
std::uint64_t embedder_fingerprint(const EmbedderParams& e);

// Normalizes each token's feature vector (statistics across channels).
// The channel-axis composition would zero out the pooled embedder input,
// so the embedder normalizes along the feature axis instead.
Matrix feature_norm(const Matrix& F, double eps);

// instance-norm + mean-pool + token-pool collapse feeding the embedder MLP.
Vec embed_input(const std::vector<Matrix>& ref_maps, const ModelConfig& config);

ConceptEmbedding embed_concept(const std::vector<Matrix>& ref_maps, const EmbedderParams& e,
                               const ModelConfig& config, std::string concept_id);

Vec concept_summary(const ConceptEmbedding& z);  // mean over the k token rows

BallPoint project_query(const Matrix& t, const DiscriminatorParams& d, const ModelConfig& config);
BallPoint project_concept(const ConceptEmbedding& z, const DiscriminatorParams& d,
                          const ModelConfig& config);

// Poincare distance for c > 0, the 2|u-v| Euclidean limit for c = 0.
double disc_distance(const BallPoint& p, const BallPoint& q);

double disc_pair_loss(const BallPoint& p, const BallPoint& q, int label, double margin);

double surrogate_ans_loss(const Matrix& query, const std::vector<ConceptEmbedding>& candidates,
                          std::size_t true_index, const SurrogateHeadParams& head);

bool identify(const Matrix& query, const ConceptEmbedding& z, const DiscriminatorParams& d,
              const ModelConfig& config, double tau);

// A training batch over precomputed embedder inputs and pooled query features.
struct LossBatch {
    std::vector<Vec> concept_inputs;  // embed_input per concept
    std::vector<Vec> query_pooled;    // token_pool per query

    struct Pair {
        std::size_t query;
        std::size_t concept_idx;
        int label;  // 1 same concept, 0 different
    };
    std::vector<Pair> pairs;

    // Candidate set is every concept in the batch.
    struct Cls {
        std::size_t query;
        std::size_t true_concept;
    };
    std::vector<Cls> cls;
};

struct LossValue {
    double ans = 0.0;
    double disc = 0.0;
    double joint = 0.0;
};

// Joint objective: ans + lambda * disc. When `grads` is non-null, accumulates
// exact reverse-mode gradients; the embedder receives contributions from both
// terms, the discriminator heads from the disc term only.
LossValue joint_loss(const ModelParams& params, const LossBatch& batch,
                     ModelParams* grads = nullptr);

}  // namespace opvlm
