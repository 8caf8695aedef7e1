#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "opvlm/dataset.hpp"
#include "opvlm/memory_bank.hpp"
#include "opvlm/trainer.hpp"

namespace opvlm {

struct EvalReport {
    std::string protocol;
    double accuracy = 0.0;
    // per-difficulty breakdown keyed by distractor-fraction bucket
    std::map<std::string, double> difficulty_accuracy;
    std::map<std::string, std::size_t> difficulty_counts;
    // candidate-classification accuracy of the surrogate head (not a VLM metric)
    double surrogate_accuracy = 0.0;
    double tau = 0.0;
    std::uint64_t seed = 0;
    std::string config_hash;
    std::size_t n_queries = 0;
};

nlohmann::json report_json(const EvalReport& r);

EvalReport eval_identification(const ModelParams& params, const ConceptBank& bank,
                               const ConceptWorld& world,
                               const std::vector<std::size_t>& query_indices, double tau);

// Parsing-mode protocol on unseen concepts: builds a fresh bank for the test
// concepts (no parameter updates) and evaluates their queries.
EvalReport eval_novel(const ModelParams& params, const ConceptWorld& world, const Split& split,
                      double tau);

EvalReport eval_cached(const ModelParams& params, const ConceptWorld& world,
                       const CachedSplit& split, double tau);

// Threshold maximizing balanced accuracy over the given queries.
double tune_tau(const ModelParams& params, const ConceptBank& bank, const ConceptWorld& world,
                const std::vector<std::size_t>& query_indices);

// Synthesize, train, and evaluate one configuration (cached protocol).
EvalReport run_cached_benchmark(const TrainConfig& config, const SyntheticSpec& spec);

enum class SweepParam { k, curvature };

struct SweepReport {
    SweepParam param;
    std::vector<double> values;                   // strictly increasing
    std::vector<std::uint64_t> seeds;
    std::vector<std::vector<double>> accuracy;    // [value][seed]
    std::vector<double> mean;
    std::vector<double> stddev;

    std::string csv() const;
    nlohmann::json json() const;
};

SweepReport sweep(SweepParam param, const std::vector<double>& values,
                  const std::vector<std::uint64_t>& seeds, const TrainConfig& base_config,
                  const SyntheticSpec& base_spec);

// Table-4 style incremental configuration matrix plus the two full-model
// toggles used for trend assertions.
struct AblationRow {
    std::string name;
    std::vector<double> accuracy;  // per seed
    double mean = 0.0;
};

struct AblationReport {
    std::vector<std::uint64_t> seeds;
    std::vector<AblationRow> rows;

    const AblationRow& row(const std::string& name) const;
    std::string csv() const;
    nlohmann::json json() const;
};

AblationReport ablation_matrix(const TrainConfig& base_config, const SyntheticSpec& base_spec,
                               const std::vector<std::uint64_t>& seeds);

}  // namespace opvlm
