#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "opvlm/matrix.hpp"

namespace opvlm {

enum class Hierarchy { flat, tree };

struct SyntheticSpec {
    std::size_t num_concepts = 64;
    std::size_t images_per_concept = 4;  // reference images per concept
    std::size_t queries_per_concept = 12;
    std::size_t tokens = 16;  // T
    std::size_t d_feat = 128;
    double intra_noise = 0.3;  // sigma_in
    double prototype_scale = 1.0;
    Hierarchy hierarchy = Hierarchy::flat;
    std::size_t tree_branching = 4;
    std::size_t tree_depth = 3;
    double negative_fraction = 0.25;
    // per-query distractor-token fraction is drawn from these levels
    std::vector<double> distractor_levels = {0.0, 0.2, 0.4};
    // per-image multiplicative gain g in [1/gain_jitter, gain_jitter]
    double gain_jitter = 2.0;
    std::uint64_t seed = 1;
};

struct Concept {
    std::string id;  // "<sks_i>" style identifier
    Vec prototype;
    std::vector<Matrix> references;
};

struct FeatureQuery {
    Matrix features;
    std::size_t concept_index;
    bool present;
    double distractor_fraction;
};

struct ConceptWorld {
    SyntheticSpec spec;
    std::vector<Concept> concepts;
    std::vector<FeatureQuery> queries;

    std::vector<std::size_t> queries_of(std::size_t concept_index) const;
};

// Pure function of the spec (including its seed).
ConceptWorld generate(const SyntheticSpec& spec);

// Concept-disjoint split for the novel-concept protocol.
struct Split {
    std::vector<std::size_t> train_concepts;
    std::vector<std::size_t> test_concepts;
};
Split split_novel(const ConceptWorld& world, double fraction, std::uint64_t seed);

// Per-concept disjoint query split for the cached-concept protocol.
struct CachedSplit {
    std::vector<std::size_t> train_queries;
    std::vector<std::size_t> test_queries;
};
CachedSplit split_cached(const ConceptWorld& world, std::uint64_t seed);

// Nearest-centroid baseline on pooled raw features (the separability oracle).
double nearest_centroid_accuracy(const ConceptWorld& world,
                                 const std::vector<std::size_t>& query_indices);

}  // namespace opvlm
