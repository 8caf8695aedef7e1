#include "opvlm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "opvlm/config_json.hpp"

namespace opvlm {

using nlohmann::json;

namespace {

std::string difficulty_bucket(double frac) {
    if (frac <= 0.0) return "0";
    if (frac <= 0.3) return "<=0.3";
    if (frac <= 0.6) return "<=0.6";
    return ">0.6";
}

double fmt_round(double x) { return x; }

}  // namespace

json report_json(const EvalReport& r) {
    json j;
    j["protocol"] = r.protocol;
    j["accuracy"] = fmt_round(r.accuracy);
    j["difficulty_accuracy"] = r.difficulty_accuracy;
    j["difficulty_counts"] = r.difficulty_counts;
    j["surrogate_accuracy"] = r.surrogate_accuracy;
    j["surrogate_note"] = "candidate-classification accuracy; stands in for VLM QA accuracy";
    j["tau"] = r.tau;
    j["seed"] = r.seed;
    j["config_hash"] = r.config_hash;
    j["n_queries"] = r.n_queries;
    return j;
}

EvalReport eval_identification(const ModelParams& params, const ConceptBank& bank,
                               const ConceptWorld& world,
                               const std::vector<std::size_t>& query_indices, double tau) {
    require(!query_indices.empty(), "eval_identification: empty query set");
    require(tau > 0.0, "eval_identification: tau must be positive");
    if (bank.fingerprint() != embedder_fingerprint(params.embedder))
        throw std::invalid_argument("eval_identification: bank fingerprint mismatch");

    const ModelConfig& cfg = params.config;

    // project every banked concept once
    std::vector<const ConceptEmbedding*> embeddings(world.concepts.size(), nullptr);
    std::vector<BallPoint> cpoints(world.concepts.size());
    std::vector<Vec> csummaries(world.concepts.size());
    for (std::size_t ci = 0; ci < world.concepts.size(); ++ci) {
        const ConceptEmbedding* z = bank.retrieve(world.concepts[ci].id);
        if (!z) continue;
        embeddings[ci] = z;
        cpoints[ci] = project_concept(*z, params.disc, cfg);
        csummaries[ci] = concept_summary(*z);
    }

    EvalReport r;
    r.protocol = "identification";
    r.tau = tau;
    std::map<std::string, std::size_t> bucket_correct;
    std::size_t correct = 0;
    std::size_t surrogate_correct = 0, surrogate_total = 0;
    const Vec& ws = params.head.scorer.W.data;
    const std::size_t dm = cfg.d_model;

    for (std::size_t qi : query_indices) {
        const FeatureQuery& q = world.queries[qi];
        require(embeddings[q.concept_index] != nullptr,
                "eval_identification: concept missing from bank");
        const BallPoint qp = project_query(q.features, params.disc, cfg);
        const double d = disc_distance(qp, cpoints[q.concept_index]);
        const bool present = d < tau;
        const bool ok = present == q.present;
        const std::string bucket = difficulty_bucket(q.distractor_fraction);
        r.difficulty_counts[bucket] += 1;
        if (ok) {
            ++correct;
            bucket_correct[bucket] += 1;
        }

        if (q.present) {
            // surrogate candidate classification over all banked concepts
            const Vec pooled = token_pool(q.features);
            double best = -std::numeric_limits<double>::infinity();
            std::size_t best_ci = 0;
            bool any = false;
            for (std::size_t ci = 0; ci < world.concepts.size(); ++ci) {
                if (!embeddings[ci]) continue;
                double s = params.head.scorer.b[0];
                for (std::size_t rr = 0; rr < dm; ++rr) s += ws[rr] * csummaries[ci][rr];
                for (std::size_t rr = 0; rr < pooled.size(); ++rr)
                    s += ws[dm + rr] * pooled[rr];
                if (!any || s > best) {
                    best = s;
                    best_ci = ci;
                    any = true;
                }
            }
            if (any) {
                ++surrogate_total;
                if (best_ci == q.concept_index) ++surrogate_correct;
            }
        }
    }

    r.n_queries = query_indices.size();
    r.accuracy = static_cast<double>(correct) / static_cast<double>(query_indices.size());
    for (const auto& [bucket, count] : r.difficulty_counts)
        r.difficulty_accuracy[bucket] =
            static_cast<double>(bucket_correct[bucket]) / static_cast<double>(count);
    r.surrogate_accuracy =
        surrogate_total ? static_cast<double>(surrogate_correct) / surrogate_total : 0.0;
    return r;
}

EvalReport eval_novel(const ModelParams& params, const ConceptWorld& world, const Split& split,
                      double tau) {
    require(!split.test_concepts.empty(), "eval_novel: empty test split");
    std::set<std::size_t> train_set(split.train_concepts.begin(), split.train_concepts.end());
    for (std::size_t ci : split.test_concepts)
        require(!train_set.count(ci), "eval_novel: split sides overlap");

    const std::uint64_t hash_before = embedder_fingerprint(params.embedder);
    ConceptBank bank(hash_before);
    std::vector<std::size_t> queries;
    for (std::size_t ci : split.test_concepts) {
        bank.parse(world.concepts[ci].id, world.concepts[ci].references, params.embedder,
                   params.config);
        const auto q = world.queries_of(ci);
        queries.insert(queries.end(), q.begin(), q.end());
    }
    require(embedder_fingerprint(params.embedder) == hash_before,
            "eval_novel: embedder parameters changed during parsing");

    EvalReport r = eval_identification(params, bank, world, queries, tau);
    r.protocol = "novel";
    return r;
}

EvalReport eval_cached(const ModelParams& params, const ConceptWorld& world,
                       const CachedSplit& split, double tau) {
    ConceptBank bank(embedder_fingerprint(params.embedder));
    for (const Concept& c : world.concepts)
        bank.parse(c.id, c.references, params.embedder, params.config);
    EvalReport r = eval_identification(params, bank, world, split.test_queries, tau);
    r.protocol = "cached";
    return r;
}

double tune_tau(const ModelParams& params, const ConceptBank& bank, const ConceptWorld& world,
                const std::vector<std::size_t>& query_indices) {
    require(!query_indices.empty(), "tune_tau: empty query set");
    const ModelConfig& cfg = params.config;
    std::vector<std::pair<double, bool>> dist_label;
    for (std::size_t qi : query_indices) {
        const FeatureQuery& q = world.queries[qi];
        const ConceptEmbedding* z = bank.retrieve(world.concepts[q.concept_index].id);
        require(z != nullptr, "tune_tau: concept missing from bank");
        const double d = disc_distance(project_query(q.features, params.disc, cfg),
                                       project_concept(*z, params.disc, cfg));
        dist_label.emplace_back(d, q.present);
    }
    std::sort(dist_label.begin(), dist_label.end());
    const double n_pos = static_cast<double>(
        std::count_if(dist_label.begin(), dist_label.end(), [](auto& p) { return p.second; }));
    const double n_neg = static_cast<double>(dist_label.size()) - n_pos;
    double best_tau = cfg.default_tau(), best_score = -1.0;
    double tp = 0.0;
    for (std::size_t i = 0; i < dist_label.size(); ++i) {
        if (dist_label[i].second) tp += 1.0;
        const double fp = static_cast<double>(i + 1) - tp;
        const double tpr = n_pos > 0 ? tp / n_pos : 0.0;
        const double tnr = n_neg > 0 ? (n_neg - fp) / n_neg : 0.0;
        const double balanced = 0.5 * (tpr + tnr);
        if (balanced > best_score) {
            best_score = balanced;
            const double next = i + 1 < dist_label.size() ? dist_label[i + 1].first
                                                          : dist_label[i].first + 1e-6;
            best_tau = 0.5 * (dist_label[i].first + next);
        }
    }
    return best_tau > 0.0 ? best_tau : cfg.default_tau();
}

EvalReport run_cached_benchmark(const TrainConfig& config, const SyntheticSpec& spec) {
    const ConceptWorld world = generate(spec);
    const CachedSplit split = split_cached(world, config.seed);
    std::vector<std::size_t> all_concepts(world.concepts.size());
    for (std::size_t i = 0; i < all_concepts.size(); ++i) all_concepts[i] = i;
    const TrainResult tr =
        train(world, all_concepts, split.train_queries, split.test_queries, config);
    EvalReport r = eval_cached(tr.checkpoint.params, world, split,
                               config.model.default_tau());
    r.seed = config.seed;
    json meta;
    meta["train"] = config;
    meta["spec"] = spec;
    r.config_hash = config_hash(meta);
    return r;
}

std::string SweepReport::csv() const {
    std::ostringstream out;
    out << "param,value,seed,accuracy\n";
    const char* name = param == SweepParam::k ? "k" : "curvature";
    for (std::size_t vi = 0; vi < values.size(); ++vi)
        for (std::size_t si = 0; si < seeds.size(); ++si)
            out << name << ',' << nlohmann::json(values[vi]).dump() << ',' << seeds[si] << ','
                << nlohmann::json(accuracy[vi][si]).dump() << '\n';
    return out.str();
}

json SweepReport::json() const {
    nlohmann::json j;
    j["param"] = param == SweepParam::k ? "k" : "curvature";
    j["values"] = values;
    j["seeds"] = seeds;
    j["accuracy"] = accuracy;
    j["mean"] = mean;
    j["stddev"] = stddev;
    return j;
}

SweepReport sweep(SweepParam param, const std::vector<double>& values,
                  const std::vector<std::uint64_t>& seeds, const TrainConfig& base_config,
                  const SyntheticSpec& base_spec) {
    require(values.size() >= 2, "sweep: need at least 2 values");
    require(!seeds.empty(), "sweep: need at least 1 seed");
    for (std::size_t i = 1; i < values.size(); ++i)
        require(values[i] > values[i - 1], "sweep: values must be strictly increasing");

    SweepReport r;
    r.param = param;
    r.values = values;
    r.seeds = seeds;
    for (double v : values) {
        std::vector<double> accs;
        for (std::uint64_t seed : seeds) {
            TrainConfig cfg = base_config;
            SyntheticSpec spec = base_spec;
            cfg.seed = seed;
            spec.seed = seed;
            if (param == SweepParam::k) {
                cfg.model.k = static_cast<std::size_t>(v);
                require(static_cast<double>(cfg.model.k) == v, "sweep: k values must be integral");
            } else {
                cfg.model.curvature = v;
            }
            accs.push_back(run_cached_benchmark(cfg, spec).accuracy);
        }
        double m = 0.0;
        for (double a : accs) m += a;
        m /= static_cast<double>(accs.size());
        double var = 0.0;
        for (double a : accs) var += (a - m) * (a - m);
        var /= static_cast<double>(accs.size());
        r.accuracy.push_back(std::move(accs));
        r.mean.push_back(m);
        r.stddev.push_back(std::sqrt(var));
    }
    return r;
}

const AblationRow& AblationReport::row(const std::string& name) const {
    for (const auto& r : rows)
        if (r.name == name) return r;
    throw std::invalid_argument("ablation_matrix: unknown row " + name);
}

std::string AblationReport::csv() const {
    std::ostringstream out;
    out << "config,seed,accuracy\n";
    for (const auto& r : rows)
        for (std::size_t si = 0; si < seeds.size(); ++si)
            out << r.name << ',' << seeds[si] << ','
                << nlohmann::json(r.accuracy[si]).dump() << '\n';
    return out.str();
}

json AblationReport::json() const {
    nlohmann::json j;
    j["seeds"] = seeds;
    nlohmann::json rows_j = nlohmann::json::array();
    for (const auto& r : rows)
        rows_j.push_back({{"config", r.name}, {"accuracy", r.accuracy}, {"mean", r.mean}});
    j["rows"] = rows_j;
    return j;
}

AblationReport ablation_matrix(const TrainConfig& base_config, const SyntheticSpec& base_spec,
                               const std::vector<std::uint64_t>& seeds) {
    require(!seeds.empty(), "ablation_matrix: need at least 1 seed");
    struct RowSpec {
        const char* name;
        bool use_in;
        double lambda;
        bool hyperbolic;  // base curvature when set, 0 (Euclidean) otherwise
    };
    // incremental order: instance norm -> discriminative loss -> hyperbolic
    // representation, plus the two full-model single-toggle rows
    const RowSpec specs[] = {
        {"base", false, 0.0, false},
        {"+instance_norm", true, 0.0, false},
        {"+discriminative", true, 1.0, false},
        {"+hyperbolic", true, 1.0, true},
        {"full_no_instance_norm", false, 1.0, true},
        {"full_no_discriminative", true, 0.0, true},
    };
    AblationReport report;
    report.seeds = seeds;
    for (const RowSpec& rs : specs) {
        AblationRow row;
        row.name = rs.name;
        for (std::uint64_t seed : seeds) {
            TrainConfig cfg = base_config;
            SyntheticSpec spec = base_spec;
            cfg.seed = seed;
            spec.seed = seed;
            cfg.model.use_instance_norm = rs.use_in;
            cfg.model.lambda = rs.lambda;
            cfg.model.curvature = rs.hyperbolic ? base_config.model.curvature : 0.0;
            row.accuracy.push_back(run_cached_benchmark(cfg, spec).accuracy);
        }
        for (double a : row.accuracy) row.mean += a;
        row.mean /= static_cast<double>(row.accuracy.size());
        report.rows.push_back(std::move(row));
    }
    return report;
}

}  // namespace opvlm
