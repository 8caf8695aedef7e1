#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "opvlm/concept_model.hpp"
#include "opvlm/dataset.hpp"

namespace opvlm {

struct divergence_error : std::runtime_error {
    explicit divergence_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct TrainConfig {
    ModelConfig model;
    double lr = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.0;
    std::size_t epochs = 6;
    std::size_t batch_size = 64;
    double pos_neg_ratio = 1.0;  // positives : negatives
    std::uint64_t seed = 1;
    double divergence_limit = 1e6;
};

struct SampledPair {
    std::size_t query_index;    // index into the world's query list
    std::size_t concept_index;  // index into the world's concept list
    int label;
};

// Positives pair a query with its own concept, negatives with a uniformly
// drawn other concept from `concept_indices`. `pool` holds indices of
// present-labeled queries whose concepts all lie in `concept_indices`.
std::vector<SampledPair> sample_pairs(const ConceptWorld& world,
                                      const std::vector<std::size_t>& concept_indices,
                                      const std::vector<std::size_t>& pool,
                                      std::size_t batch_size, double pos_neg_ratio,
                                      std::mt19937_64& rng);

struct EpochMetrics {
    std::size_t epoch;
    double loss_ans;
    double loss_disc;
    double loss_joint;
    double val_accuracy;
};

struct Checkpoint {
    ModelParams params;
    OptimizerState opt;
    TrainConfig config;
    std::size_t epoch = 0;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<EpochMetrics> log;
};

// Joint training over the given concepts; validation accuracy is measured on
// `val_queries` at tau = margin / 2. Deterministic given the config seed.
TrainResult train(const ConceptWorld& world, const std::vector<std::size_t>& concept_indices,
                  const std::vector<std::size_t>& train_queries,
                  const std::vector<std::size_t>& val_queries, const TrainConfig& config);

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct GradcheckComponent {
    std::string name;
    double max_rel_err;
    bool skipped;
};

struct GradcheckReport {
    std::vector<GradcheckComponent> components;
    double tolerance;
    double h;
    bool passed() const;
};

// Finite-difference verification of every differentiable component and the
// full joint loss. Use small dims (d_feat <= 16, k <= 4) to keep it tractable.
GradcheckReport gradcheck_all(const ModelConfig& config, double h = 1e-6, double tol = 1e-4,
                              std::uint64_t seed = 7);

}  // namespace opvlm
