// Command-line front end: synth / train / embed / lookup / eval / ablate / gradcheck.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "opvlm/benchmarks.hpp"
#include "opvlm/config_json.hpp"
#include "opvlm/eval.hpp"
#include "opvlm/io.hpp"
#include "opvlm/memory_bank.hpp"
#include "opvlm/trainer.hpp"
#include "opvlm/world_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace opvlm;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitAcceptance = 3;

struct CliConfig {
    TrainConfig train;
    SyntheticSpec spec;
};

// The config file is flat: model, optimizer, and world keys side by side.
CliConfig load_cli_config(const std::optional<std::string>& path) {
    CliConfig cfg;
    cfg.train = benchmark64_config();
    cfg.spec = benchmark64_spec();
    if (!path) return cfg;
    std::ifstream in(*path);
    if (!in) throw format_error("cannot open config file: " + *path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw format_error(std::string("config file is not valid JSON: ") + e.what());
    }

    ModelConfig& m = cfg.train.model;
    m.d_feat = j.value("d_feat", m.d_feat);
    m.d_model = j.value("d_model", m.d_model);
    m.d_ball = j.value("d_ball", m.d_ball);
    m.k = j.value("k", m.k);
    m.hidden_mult = j.value("hidden_mult", m.hidden_mult);
    m.curvature = j.value("curvature", m.curvature);
    m.margin = j.value("margin", m.margin);
    m.lambda = j.value("lambda", m.lambda);
    m.eps_in = j.value("eps_in", m.eps_in);
    m.eps_ball = j.value("eps_ball", m.eps_ball);
    m.use_instance_norm = j.value("use_instance_norm", m.use_instance_norm);

    TrainConfig& t = cfg.train;
    t.lr = j.value("lr", t.lr);
    t.beta1 = j.value("beta1", t.beta1);
    t.beta2 = j.value("beta2", t.beta2);
    t.adam_eps = j.value("adam_eps", t.adam_eps);
    t.weight_decay = j.value("weight_decay", t.weight_decay);
    t.epochs = j.value("epochs", t.epochs);
    t.batch_size = j.value("batch_size", t.batch_size);
    t.pos_neg_ratio = j.value("pos_neg_ratio", t.pos_neg_ratio);
    t.seed = j.value("seed", t.seed);
    t.divergence_limit = j.value("divergence_limit", t.divergence_limit);

    SyntheticSpec& s = cfg.spec;
    s.num_concepts = j.value("num_concepts", s.num_concepts);
    s.images_per_concept = j.value("images_per_concept", s.images_per_concept);
    s.queries_per_concept = j.value("queries_per_concept", s.queries_per_concept);
    s.tokens = j.value("tokens", s.tokens);
    s.intra_noise = j.value("intra_noise", s.intra_noise);
    s.prototype_scale = j.value("prototype_scale", s.prototype_scale);
    if (j.contains("hierarchy")) {
        const std::string h = j.at("hierarchy").get<std::string>();
        if (h == "tree")
            s.hierarchy = Hierarchy::tree;
        else if (h == "flat")
            s.hierarchy = Hierarchy::flat;
        else
            throw format_error("config: unknown hierarchy " + h);
    }
    s.tree_branching = j.value("tree_branching", s.tree_branching);
    s.tree_depth = j.value("tree_depth", s.tree_depth);
    s.negative_fraction = j.value("negative_fraction", s.negative_fraction);
    if (j.contains("distractor_levels"))
        s.distractor_levels = j.at("distractor_levels").get<std::vector<double>>();
    s.gain_jitter = j.value("gain_jitter", s.gain_jitter);

    s.d_feat = m.d_feat;
    s.seed = t.seed;
    return cfg;
}

struct SharedFlags {
    std::optional<std::string> config;
    std::optional<std::uint64_t> seed;
    std::optional<double> tau;
    std::optional<double> lambda;
    std::optional<double> curvature;
    std::optional<std::uint32_t> k;

    void add_to(CLI::App* app, bool with_model_flags = true) {
        app->add_option("--config", config, "JSON config file (flat keys)");
        app->add_option("--seed", seed, "RNG seed override");
        if (with_model_flags) {
            app->add_option("--tau", tau, "identification threshold (default margin/2)");
            app->add_option("--lambda", lambda, "discriminative loss weight");
            app->add_option("--curvature", curvature, "Poincare ball curvature (0 = Euclidean)");
            app->add_option("--k", k, "embedding token count");
        }
    }

    CliConfig resolve() const {
        CliConfig cfg = load_cli_config(config);
        if (seed) {
            cfg.train.seed = *seed;
            cfg.spec.seed = *seed;
        }
        if (lambda) cfg.train.model.lambda = *lambda;
        if (curvature) cfg.train.model.curvature = *curvature;
        if (k) cfg.train.model.k = *k;
        return cfg;
    }
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw format_error("cannot write " + path.string());
    out << text;
}

void write_report(const EvalReport& report, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    write_text(out_dir / "report.json", report_json(report).dump(2) + "\n");
    std::string csv = "metric,value\naccuracy," + json(report.accuracy).dump() +
                      "\nsurrogate_accuracy," + json(report.surrogate_accuracy).dump() + "\n";
    for (const auto& [bucket, acc] : report.difficulty_accuracy)
        csv += "difficulty[" + bucket + "]," + json(acc).dump() + "\n";
    write_text(out_dir / "report.csv", csv);
    std::cout << "protocol=" << report.protocol << " accuracy=" << report.accuracy
              << " tau=" << report.tau << " n=" << report.n_queries << "\n";
}

std::vector<std::size_t> all_query_indices(const ConceptWorld& world) {
    std::vector<std::size_t> idx(world.queries.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return idx;
}

std::vector<std::size_t> all_concept_indices(const ConceptWorld& world) {
    std::vector<std::size_t> idx(world.concepts.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return idx;
}

int run(int argc, char** argv) {
    CLI::App app{"Online concept-learning engine: hyperbolic discriminator, "
                 "omni concept embedder, and train-free concept memory bank"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic concept world");
    SharedFlags synth_flags;
    synth_flags.add_to(synth, false);
    std::string synth_out;
    synth->add_option("--out", synth_out, "output directory")->required();

    // train
    auto* train_cmd = app.add_subcommand("train", "train embedder + discriminator jointly");
    SharedFlags train_flags;
    train_flags.add_to(train_cmd);
    std::string train_out;
    std::optional<std::string> train_world;
    train_cmd->add_option("--out", train_out, "output directory")->required();
    train_cmd->add_option("--world", train_world, "world directory (default: synthesize)");

    // embed (parsing mode)
    auto* embed_cmd = app.add_subcommand("embed", "parse reference features into the bank");
    std::string embed_ckpt, embed_bank, embed_id;
    std::vector<std::string> embed_refs;
    bool embed_overwrite = false;
    embed_cmd->add_option("--ckpt", embed_ckpt, "checkpoint file")->required();
    embed_cmd->add_option("--bank", embed_bank, "bank file (created if missing)")->required();
    embed_cmd->add_option("--id", embed_id, "concept identifier")->required();
    embed_cmd->add_option("--refs", embed_refs, "reference feature files")->required();
    embed_cmd->add_flag("--overwrite", embed_overwrite, "replace an existing entry");

    // lookup (retrieval mode)
    auto* lookup_cmd = app.add_subcommand("lookup", "retrieve a cached concept embedding");
    std::string lookup_bank, lookup_id;
    std::optional<std::string> lookup_out;
    lookup_cmd->add_option("--bank", lookup_bank, "bank file")->required();
    lookup_cmd->add_option("--id", lookup_id, "concept identifier")->required();
    lookup_cmd->add_option("--out", lookup_out, "write the embedding as a feature file");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate identification accuracy");
    SharedFlags eval_flags;
    eval_flags.add_to(eval_cmd);
    std::string eval_ckpt, eval_protocol = "cached", eval_out;
    std::optional<std::string> eval_world, eval_bank;
    bool eval_tune_tau = false;
    eval_cmd->add_option("--ckpt", eval_ckpt, "checkpoint file")->required();
    eval_cmd->add_option("--protocol", eval_protocol, "novel | cached")
        ->check(CLI::IsMember({"novel", "cached"}));
    eval_cmd->add_option("--world", eval_world, "world directory (default: synthesize)");
    eval_cmd->add_option("--bank", eval_bank, "evaluate against an existing bank");
    eval_cmd->add_option("--out", eval_out, "output directory")->required();
    eval_cmd->add_flag("--tune-tau", eval_tune_tau,
                       "pick tau maximizing balanced accuracy on the training split");

    // ablate
    auto* ablate_cmd = app.add_subcommand("ablate", "sweep k or curvature");
    SharedFlags ablate_flags;
    ablate_flags.add_to(ablate_cmd);
    std::string ablate_param, ablate_out;
    std::vector<double> ablate_values;
    std::vector<std::uint64_t> ablate_seeds;
    ablate_cmd->add_option("--param", ablate_param, "k | curvature")
        ->required()
        ->check(CLI::IsMember({"k", "curvature"}));
    ablate_cmd->add_option("--values", ablate_values, "swept values")->required();
    ablate_cmd->add_option("--seeds", ablate_seeds, "seeds (default 1..5)");
    ablate_cmd->add_option("--out", ablate_out, "output directory")->required();

    // gradcheck
    auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    SharedFlags grad_flags;
    grad_flags.add_to(grad_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    if (synth->parsed()) {
        CliConfig cfg = synth_flags.resolve();
        save_world(generate(cfg.spec), synth_out);
        std::cout << "world written to " << synth_out << "\n";
        return kExitOk;
    }

    if (train_cmd->parsed()) {
        CliConfig cfg = train_flags.resolve();
        const ConceptWorld world = train_world ? load_world(*train_world) : generate(cfg.spec);
        const CachedSplit split = split_cached(world, cfg.train.seed);
        const TrainResult result = train(world, all_concept_indices(world), split.train_queries,
                                         split.test_queries, cfg.train);
        fs::create_directories(train_out);
        save_checkpoint(result.checkpoint, fs::path(train_out) / "checkpoint.opck");
        json log = json::array();
        for (const EpochMetrics& m : result.log)
            log.push_back({{"epoch", m.epoch},
                           {"loss_ans", m.loss_ans},
                           {"loss_disc", m.loss_disc},
                           {"loss_joint", m.loss_joint},
                           {"val_accuracy", m.val_accuracy}});
        json metrics;
        metrics["config_hash"] = config_hash(json(cfg.train));
        metrics["seed"] = cfg.train.seed;
        metrics["epochs"] = log;
        write_text(fs::path(train_out) / "metrics.json", metrics.dump(2) + "\n");
        std::cout << "checkpoint written to " << train_out
                  << " (final val accuracy " << result.log.back().val_accuracy << ")\n";
        return kExitOk;
    }

    if (embed_cmd->parsed()) {
        const Checkpoint ckpt = load_checkpoint(embed_ckpt);
        const std::uint64_t fp = embedder_fingerprint(ckpt.params.embedder);
        ConceptBank bank = fs::exists(embed_bank) ? ConceptBank::load(embed_bank, fp)
                                                  : ConceptBank(fp);
        std::vector<Matrix> refs;
        for (const std::string& p : embed_refs) refs.push_back(load_features(p));
        bank.parse(embed_id, refs, ckpt.params.embedder, ckpt.params.config, embed_overwrite);
        bank.save(embed_bank);
        std::cout << "cached " << embed_id << " (" << bank.size() << " entries)\n";
        return kExitOk;
    }

    if (lookup_cmd->parsed()) {
        const ConceptBank bank = ConceptBank::load(lookup_bank);
        const ConceptEmbedding* z = bank.retrieve(lookup_id);
        if (!z) {
            std::cout << "not-found " << lookup_id << "\n";
            return kExitOk;  // absence is a normal outcome
        }
        if (lookup_out) store_features(z->tokens, *lookup_out);
        std::cout << "found " << lookup_id << " k=" << z->tokens.rows
                  << " d_model=" << z->tokens.cols << "\n";
        return kExitOk;
    }

    if (eval_cmd->parsed()) {
        CliConfig cfg = eval_flags.resolve();
        const Checkpoint ckpt = load_checkpoint(eval_ckpt);
        const ConceptWorld world = eval_world ? load_world(*eval_world) : generate(cfg.spec);
        double tau = eval_flags.tau.value_or(ckpt.params.config.default_tau());

        EvalReport report;
        if (eval_bank) {
            const ConceptBank bank = ConceptBank::load(*eval_bank);
            report = eval_identification(ckpt.params, bank, world, all_query_indices(world), tau);
        } else if (eval_protocol == "novel") {
            const Split split = split_novel(world, 0.5, cfg.train.seed);
            report = eval_novel(ckpt.params, world, split, tau);
        } else {
            const CachedSplit split = split_cached(world, cfg.train.seed);
            if (eval_tune_tau && !eval_flags.tau) {
                ConceptBank bank(embedder_fingerprint(ckpt.params.embedder));
                for (const Concept& c : world.concepts)
                    bank.parse(c.id, c.references, ckpt.params.embedder, ckpt.params.config);
                tau = tune_tau(ckpt.params, bank, world, split.train_queries);
            }
            report = eval_cached(ckpt.params, world, split, tau);
        }
        report.seed = cfg.train.seed;
        json meta;
        meta["train"] = cfg.train;
        meta["spec"] = cfg.spec;
        report.config_hash = config_hash(meta);
        write_report(report, eval_out);
        return kExitOk;
    }

    if (ablate_cmd->parsed()) {
        CliConfig cfg = ablate_flags.resolve();
        if (ablate_seeds.empty()) ablate_seeds = benchmark_seeds();
        const SweepParam param = ablate_param == "k" ? SweepParam::k : SweepParam::curvature;
        const SweepReport report = sweep(param, ablate_values, ablate_seeds, cfg.train, cfg.spec);
        fs::create_directories(ablate_out);
        write_text(fs::path(ablate_out) / "sweep.csv", report.csv());
        write_text(fs::path(ablate_out) / "sweep.json", report.json().dump(2) + "\n");
        for (std::size_t i = 0; i < report.values.size(); ++i)
            std::cout << ablate_param << "=" << report.values[i] << " mean=" << report.mean[i]
                      << " std=" << report.stddev[i] << "\n";
        return kExitOk;
    }

    if (grad_cmd->parsed()) {
        ModelConfig small;
        small.d_feat = 12;
        small.d_model = 6;
        small.d_ball = 4;
        small.k = 3;
        small.hidden_mult = 2;
        CliConfig cfg = grad_flags.resolve();
        small.lambda = cfg.train.model.lambda;
        small.curvature = cfg.train.model.curvature;
        small.margin = cfg.train.model.margin;
        const GradcheckReport report = gradcheck_all(small);
        for (const auto& c : report.components) {
            if (c.skipped)
                std::cout << c.name << ": skipped (lambda = 0)\n";
            else
                std::cout << c.name << ": max rel err " << c.max_rel_err
                          << (c.max_rel_err < report.tolerance ? "  ok" : "  FAIL") << "\n";
        }
        if (!report.passed()) {
            std::cerr << "gradient check exceeded tolerance " << report.tolerance << "\n";
            return kExitAcceptance;
        }
        return kExitOk;
    }

    return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const format_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
}
