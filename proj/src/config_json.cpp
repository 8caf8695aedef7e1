#include "opvlm/config_json.hpp"

#include "opvlm/io.hpp"

namespace opvlm {

using nlohmann::json;

void to_json(json& j, const ModelConfig& c) {
    j = json{{"d_feat", c.d_feat},
             {"d_model", c.d_model},
             {"d_ball", c.d_ball},
             {"k", c.k},
             {"hidden_mult", c.hidden_mult},
             {"curvature", c.curvature},
             {"margin", c.margin},
             {"lambda", c.lambda},
             {"eps_in", c.eps_in},
             {"eps_ball", c.eps_ball},
             {"use_instance_norm", c.use_instance_norm}};
}

void from_json(const json& j, ModelConfig& c) {
    c = ModelConfig{};
    c.d_feat = j.value("d_feat", c.d_feat);
    c.d_model = j.value("d_model", c.d_model);
    c.d_ball = j.value("d_ball", c.d_ball);
    c.k = j.value("k", c.k);
    c.hidden_mult = j.value("hidden_mult", c.hidden_mult);
    c.curvature = j.value("curvature", c.curvature);
    c.margin = j.value("margin", c.margin);
    c.lambda = j.value("lambda", c.lambda);
    c.eps_in = j.value("eps_in", c.eps_in);
    c.eps_ball = j.value("eps_ball", c.eps_ball);
    c.use_instance_norm = j.value("use_instance_norm", c.use_instance_norm);
}

void to_json(json& j, const TrainConfig& c) {
    j = json{{"model", c.model},
             {"lr", c.lr},
             {"beta1", c.beta1},
             {"beta2", c.beta2},
             {"adam_eps", c.adam_eps},
             {"weight_decay", c.weight_decay},
             {"epochs", c.epochs},
             {"batch_size", c.batch_size},
             {"pos_neg_ratio", c.pos_neg_ratio},
             {"seed", c.seed},
             {"divergence_limit", c.divergence_limit}};
}

void from_json(const json& j, TrainConfig& c) {
    c = TrainConfig{};
    if (j.contains("model")) c.model = j.at("model").get<ModelConfig>();
    c.lr = j.value("lr", c.lr);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.pos_neg_ratio = j.value("pos_neg_ratio", c.pos_neg_ratio);
    c.seed = j.value("seed", c.seed);
    c.divergence_limit = j.value("divergence_limit", c.divergence_limit);
}

void to_json(json& j, const SyntheticSpec& s) {
    j = json{{"num_concepts", s.num_concepts},
             {"images_per_concept", s.images_per_concept},
             {"queries_per_concept", s.queries_per_concept},
             {"tokens", s.tokens},
             {"d_feat", s.d_feat},
             {"intra_noise", s.intra_noise},
             {"prototype_scale", s.prototype_scale},
             {"hierarchy", s.hierarchy == Hierarchy::tree ? "tree" : "flat"},
             {"tree_branching", s.tree_branching},
             {"tree_depth", s.tree_depth},
             {"negative_fraction", s.negative_fraction},
             {"distractor_levels", s.distractor_levels},
             {"gain_jitter", s.gain_jitter},
             {"seed", s.seed}};
}

void from_json(const json& j, SyntheticSpec& s) {
    s = SyntheticSpec{};
    s.num_concepts = j.value("num_concepts", s.num_concepts);
    s.images_per_concept = j.value("images_per_concept", s.images_per_concept);
    s.queries_per_concept = j.value("queries_per_concept", s.queries_per_concept);
    s.tokens = j.value("tokens", s.tokens);
    s.d_feat = j.value("d_feat", s.d_feat);
    s.intra_noise = j.value("intra_noise", s.intra_noise);
    s.prototype_scale = j.value("prototype_scale", s.prototype_scale);
    if (j.contains("hierarchy")) {
        const std::string h = j.at("hierarchy").get<std::string>();
        if (h == "tree")
            s.hierarchy = Hierarchy::tree;
        else if (h == "flat")
            s.hierarchy = Hierarchy::flat;
        else
            throw std::invalid_argument("unknown hierarchy: " + h);
    }
    s.tree_branching = j.value("tree_branching", s.tree_branching);
    s.tree_depth = j.value("tree_depth", s.tree_depth);
    s.negative_fraction = j.value("negative_fraction", s.negative_fraction);
    if (j.contains("distractor_levels"))
        s.distractor_levels = j.at("distractor_levels").get<std::vector<double>>();
    s.gain_jitter = j.value("gain_jitter", s.gain_jitter);
    s.seed = j.value("seed", s.seed);
}

std::string config_hash(const json& j) {
    const std::string dump = j.dump();
    const std::uint64_t h =
        fnv1a64(reinterpret_cast<const std::uint8_t*>(dump.data()), dump.size());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace opvlm
