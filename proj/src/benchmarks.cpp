#include "opvlm/benchmarks.hpp"

namespace opvlm {

TrainConfig benchmark64_config() {
    TrainConfig cfg;
    cfg.model = ModelConfig{};  // d_feat 128, d_model 64, d_ball 32, k 8, c 1.0
    cfg.model.margin = 4.0;     // room for the hinge to release once clusters separate
    cfg.lr = 2e-3;              // the conservative 1e-5 default moves this tiny
                                // model too little in 5 epochs
    cfg.epochs = 5;
    cfg.batch_size = 32;
    cfg.seed = 1;
    return cfg;
}

SyntheticSpec benchmark64_spec() {
    SyntheticSpec spec;
    spec.num_concepts = 64;
    spec.images_per_concept = 4;
    spec.queries_per_concept = 64;
    spec.tokens = 16;
    spec.d_feat = 128;
    spec.intra_noise = 0.3;
    spec.prototype_scale = 1.0;
    spec.hierarchy = Hierarchy::flat;
    spec.negative_fraction = 0.25;
    spec.distractor_levels = {0.0, 0.1, 0.2};
    spec.gain_jitter = 2.0;
    spec.seed = 1;
    return spec;
}

TrainConfig sweep_config() {
    TrainConfig cfg;
    cfg.model.d_feat = 48;
    cfg.model.d_model = 32;
    cfg.model.d_ball = 16;
    cfg.model.k = 4;
    cfg.model.hidden_mult = 2;
    cfg.model.margin = 4.0;
    cfg.lr = 3e-3;
    cfg.epochs = 4;
    cfg.batch_size = 32;
    cfg.seed = 1;
    return cfg;
}

TrainConfig curvature_sweep_config() {
    TrainConfig cfg = sweep_config();
    cfg.model.d_ball = 4;  // tight ball: the packing regime where geometry matters
    return cfg;
}

SyntheticSpec sweep_flat_spec() {
    SyntheticSpec spec;
    spec.num_concepts = 32;
    spec.images_per_concept = 4;
    spec.queries_per_concept = 32;
    spec.tokens = 8;
    spec.d_feat = 48;
    spec.intra_noise = 0.3;
    spec.prototype_scale = 1.0;
    spec.hierarchy = Hierarchy::flat;
    spec.negative_fraction = 0.25;
    spec.distractor_levels = {0.0, 0.1, 0.2};
    spec.gain_jitter = 3.0;
    spec.seed = 1;
    return spec;
}

SyntheticSpec sweep_tree_spec() {
    SyntheticSpec spec = sweep_flat_spec();
    spec.hierarchy = Hierarchy::tree;
    spec.tree_branching = 2;
    spec.tree_depth = 5;  // 32 leaf concepts
    spec.intra_noise = 0.15;
    return spec;
}

std::vector<std::uint64_t> benchmark_seeds() { return {1, 2, 3, 4, 5}; }

}  // namespace opvlm
