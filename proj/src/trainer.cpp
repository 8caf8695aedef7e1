#include "opvlm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <unordered_map>

#include "opvlm/config_json.hpp"
#include "opvlm/io.hpp"

namespace opvlm {

std::vector<SampledPair> sample_pairs(const ConceptWorld& world,
                                      const std::vector<std::size_t>& concept_indices,
                                      const std::vector<std::size_t>& pool,
                                      std::size_t batch_size, double pos_neg_ratio,
                                      std::mt19937_64& rng) {
    require(!pool.empty(), "sample_pairs: empty query pool");
    require(concept_indices.size() >= 2, "sample_pairs: cannot form negatives with one concept");
    require(batch_size >= 2, "sample_pairs: batch_size must be >= 2");
    require(pos_neg_ratio > 0.0, "sample_pairs: ratio must be positive");
    std::unordered_map<std::size_t, std::size_t> slot_of;
    for (std::size_t li = 0; li < concept_indices.size(); ++li)
        slot_of[concept_indices[li]] = li;
    const std::size_t n_pos = static_cast<std::size_t>(
        std::llround(static_cast<double>(batch_size) * pos_neg_ratio / (1.0 + pos_neg_ratio)));
    std::uniform_int_distribution<std::size_t> pick_query(0, pool.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_other(0, concept_indices.size() - 2);
    std::vector<SampledPair> out;
    out.reserve(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) {
        const std::size_t qi = pool[pick_query(rng)];
        const std::size_t own = world.queries[qi].concept_index;
        const auto own_slot = slot_of.find(own);
        require(own_slot != slot_of.end(), "sample_pairs: query outside the concept set");
        if (i < n_pos) {
            out.push_back({qi, own, 1});
        } else {
            std::size_t other = pick_other(rng);
            if (other >= own_slot->second) ++other;
            out.push_back({qi, concept_indices[other], 0});
        }
    }
    return out;
}

namespace {

struct LocalIndex {
    std::unordered_map<std::size_t, std::size_t> map;  // world index -> local slot
    std::size_t get(std::size_t world_index) const {
        auto it = map.find(world_index);
        require(it != map.end(), "train: index outside the trained set");
        return it->second;
    }
};

double validation_accuracy(const ModelParams& params, const ConceptWorld& world,
                           const std::vector<std::size_t>& concept_indices,
                           const std::vector<Vec>& concept_inputs,
                           const std::vector<std::size_t>& val_queries, double tau) {
    if (val_queries.empty()) return 0.0;
    const ModelConfig& cfg = params.config;
    LocalIndex local;
    std::vector<BallPoint> cpoints;
    for (std::size_t li = 0; li < concept_indices.size(); ++li) {
        local.map[concept_indices[li]] = li;
        const Vec u = mlp_forward(params.embedder.mlp, concept_inputs[li]);
        ConceptEmbedding z;
        z.tokens = Matrix(cfg.k, cfg.d_model);
        z.tokens.data = u;
        cpoints.push_back(project_concept(z, params.disc, cfg));
    }
    std::size_t correct = 0;
    for (std::size_t qi : val_queries) {
        const FeatureQuery& q = world.queries[qi];
        const BallPoint qp = project_query(q.features, params.disc, cfg);
        const double d = disc_distance(qp, cpoints[local.get(q.concept_index)]);
        const bool present = d < tau;
        if (present == q.present) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(val_queries.size());
}

}  // namespace

TrainResult train(const ConceptWorld& world, const std::vector<std::size_t>& concept_indices,
                  const std::vector<std::size_t>& train_queries,
                  const std::vector<std::size_t>& val_queries, const TrainConfig& config) {
    require(concept_indices.size() >= 2, "train: need at least 2 concepts");
    require(!train_queries.empty(), "train: empty training query set");

    TrainResult result;
    ModelParams params = init_model(config.model, config.seed);
    const ModelConfig& cfg = params.config;

    // fixed per-run data: embedder inputs per concept, pooled query features
    std::vector<Vec> concept_inputs;
    LocalIndex concept_local;
    for (std::size_t li = 0; li < concept_indices.size(); ++li) {
        concept_local.map[concept_indices[li]] = li;
        concept_inputs.push_back(embed_input(world.concepts[concept_indices[li]].references, cfg));
    }
    std::unordered_map<std::size_t, Vec> pooled;
    std::vector<std::size_t> pos_pool;
    for (std::size_t qi : train_queries) {
        pooled.emplace(qi, token_pool(world.queries[qi].features));
        if (world.queries[qi].present) pos_pool.push_back(qi);
    }
    require(!pos_pool.empty(), "train: no present-labeled training queries");

    const std::size_t n_pos_per_batch = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(static_cast<double>(config.batch_size) *
                                                 config.pos_neg_ratio /
                                                 (1.0 + config.pos_neg_ratio))));
    const std::size_t steps_per_epoch =
        std::max<std::size_t>(1, pos_pool.size() / n_pos_per_batch);

    Vec flat = flatten(params);
    OptimizerState opt;
    opt.lr = config.lr;
    opt.beta1 = config.beta1;
    opt.beta2 = config.beta2;
    opt.eps = config.adam_eps;
    opt.weight_decay = config.weight_decay;
    opt.init(flat.size());

    std::mt19937_64 rng(config.seed ^ 0x9E3779B97F4A7C15ull);
    const double tau = cfg.default_tau();

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        double sum_ans = 0.0, sum_disc = 0.0, sum_joint = 0.0;
        for (std::size_t step = 0; step < steps_per_epoch; ++step) {
            const auto sampled = sample_pairs(world, concept_indices, pos_pool,
                                              config.batch_size, config.pos_neg_ratio, rng);

            LossBatch batch;
            batch.concept_inputs = concept_inputs;
            std::unordered_map<std::size_t, std::size_t> qslot;
            for (const SampledPair& p : sampled) {
                auto [it, inserted] = qslot.try_emplace(p.query_index, batch.query_pooled.size());
                if (inserted) batch.query_pooled.push_back(pooled.at(p.query_index));
                const std::size_t cl = concept_local.get(p.concept_index);
                batch.pairs.push_back({it->second, cl, p.label});
                if (p.label == 1) batch.cls.push_back({it->second, cl});
            }

            ModelParams grads = zeros_like(params);
            const LossValue loss = joint_loss(params, batch, &grads);
            if (!std::isfinite(loss.joint) || loss.joint > config.divergence_limit)
                throw divergence_error("train: loss diverged at epoch " + std::to_string(epoch) +
                                       " (joint = " + std::to_string(loss.joint) + ")");
            sum_ans += loss.ans;
            sum_disc += loss.disc;
            sum_joint += loss.joint;

            const Vec g = flatten(grads);
            optimizer_step(opt, flat, g);
            unflatten(flat, params);
        }
        const double inv = 1.0 / static_cast<double>(steps_per_epoch);
        EpochMetrics m;
        m.epoch = epoch;
        m.loss_ans = sum_ans * inv;
        m.loss_disc = sum_disc * inv;
        m.loss_joint = sum_joint * inv;
        m.val_accuracy =
            validation_accuracy(params, world, concept_indices, concept_inputs, val_queries, tau);
        result.log.push_back(m);
    }

    result.checkpoint.params = std::move(params);
    result.checkpoint.opt = std::move(opt);
    result.checkpoint.config = config;
    result.checkpoint.epoch = config.epochs;
    return result;
}

namespace {

constexpr char kCheckpointMagic[4] = {'O', 'P', 'C', 'K'};

struct NamedTensor {
    std::string name;
    const Matrix* matrix = nullptr;
    const Vec* vec = nullptr;
};

template <typename Fn>
void visit_tensors(const ModelParams& p, Fn&& fn) {
    for (std::size_t i = 0; i < p.embedder.mlp.layers.size(); ++i) {
        const auto& l = p.embedder.mlp.layers[i];
        fn("embedder.l" + std::to_string(i) + ".W", l.W.rows, l.W.cols, l.W.data);
        fn("embedder.l" + std::to_string(i) + ".b", std::size_t{1}, l.b.size(), l.b);
    }
    fn("disc.query.W", p.disc.query_head.W.rows, p.disc.query_head.W.cols,
       p.disc.query_head.W.data);
    fn("disc.query.b", std::size_t{1}, p.disc.query_head.b.size(), p.disc.query_head.b);
    fn("disc.concept.W", p.disc.concept_head.W.rows, p.disc.concept_head.W.cols,
       p.disc.concept_head.W.data);
    fn("disc.concept.b", std::size_t{1}, p.disc.concept_head.b.size(), p.disc.concept_head.b);
    fn("head.scorer.W", p.head.scorer.W.rows, p.head.scorer.W.cols, p.head.scorer.W.data);
    fn("head.scorer.b", std::size_t{1}, p.head.scorer.b.size(), p.head.scorer.b);
}

std::vector<double>* tensor_slot(ModelParams& p, const std::string& name, std::size_t rows,
                                 std::size_t cols) {
    auto check = [&](Matrix& m) -> std::vector<double>* {
        if (m.rows != rows || m.cols != cols) throw format_error("checkpoint tensor shape mismatch: " + name);
        return &m.data;
    };
    auto check_vec = [&](Vec& v) -> std::vector<double>* {
        if (rows != 1 || v.size() != cols) throw format_error("checkpoint tensor shape mismatch: " + name);
        return &v;
    };
    for (std::size_t i = 0; i < p.embedder.mlp.layers.size(); ++i) {
        if (name == "embedder.l" + std::to_string(i) + ".W")
            return check(p.embedder.mlp.layers[i].W);
        if (name == "embedder.l" + std::to_string(i) + ".b")
            return check_vec(p.embedder.mlp.layers[i].b);
    }
    if (name == "disc.query.W") return check(p.disc.query_head.W);
    if (name == "disc.query.b") return check_vec(p.disc.query_head.b);
    if (name == "disc.concept.W") return check(p.disc.concept_head.W);
    if (name == "disc.concept.b") return check_vec(p.disc.concept_head.b);
    if (name == "head.scorer.W") return check(p.head.scorer.W);
    if (name == "head.scorer.b") return check_vec(p.head.scorer.b);
    return nullptr;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    nlohmann::json meta;
    meta["train"] = ckpt.config;
    meta["epoch"] = ckpt.epoch;
    meta["opt_step"] = ckpt.opt.step;
    meta["config_hash"] = config_hash(nlohmann::json(ckpt.config));
    const std::string blob = meta.dump();

    ByteWriter w;
    w.bytes(kCheckpointMagic, 4);
    w.u32(kCheckpointFormatVersion);
    w.u32(static_cast<std::uint32_t>(blob.size()));
    w.str(blob);
    auto write_tensor = [&w](const std::string& name, std::size_t rows, std::size_t cols,
                             const std::vector<double>& data) {
        w.u16(static_cast<std::uint16_t>(name.size()));
        w.str(name);
        w.u32(static_cast<std::uint32_t>(rows));
        w.u32(static_cast<std::uint32_t>(cols));
        for (double x : data) w.f64(x);
    };
    visit_tensors(ckpt.params, write_tensor);
    write_tensor("opt.m", 1, ckpt.opt.m.size(), ckpt.opt.m);
    write_tensor("opt.v", 1, ckpt.opt.v.size(), ckpt.opt.v);
    const std::uint32_t crc = crc32(w.buffer().data() + 4, w.size() - 4);
    w.u32(crc);
    write_file(path, w.buffer());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    auto bytes = read_file(path);
    if (bytes.size() < 16) throw format_error("checkpoint truncated");
    if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
        throw format_error("bad magic in checkpoint");
    std::uint32_t stored;
    {
        ByteReader tail(bytes.data() + bytes.size() - 4, 4);
        stored = tail.u32();
    }
    if (stored != crc32(bytes.data() + 4, bytes.size() - 8))
        throw format_error("checkpoint CRC mismatch");

    ByteReader r(bytes.data() + 4, bytes.size() - 8);
    const std::uint32_t version = r.u32();
    if (version != kCheckpointFormatVersion) throw format_error("unsupported checkpoint version");
    const std::uint32_t blob_len = r.u32();
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(r.str(blob_len));
    } catch (const nlohmann::json::exception&) {
        throw format_error("checkpoint config blob is not valid JSON");
    }

    Checkpoint ckpt;
    ckpt.config = meta.at("train").get<TrainConfig>();
    ckpt.epoch = meta.at("epoch").get<std::size_t>();
    ckpt.params = init_model(ckpt.config.model, 0);
    ckpt.opt.lr = ckpt.config.lr;
    ckpt.opt.beta1 = ckpt.config.beta1;
    ckpt.opt.beta2 = ckpt.config.beta2;
    ckpt.opt.eps = ckpt.config.adam_eps;
    ckpt.opt.weight_decay = ckpt.config.weight_decay;
    ckpt.opt.init(param_count(ckpt.params));
    ckpt.opt.step = meta.at("opt_step").get<std::uint64_t>();

    while (r.remaining() > 0) {
        const std::uint16_t name_len = r.u16();
        const std::string name = r.str(name_len);
        const std::uint32_t rows = r.u32();
        const std::uint32_t cols = r.u32();
        std::vector<double>* slot;
        if (name == "opt.m") {
            if (rows != 1 || cols != ckpt.opt.m.size())
                throw format_error("checkpoint tensor shape mismatch: opt.m");
            slot = &ckpt.opt.m;
        } else if (name == "opt.v") {
            if (rows != 1 || cols != ckpt.opt.v.size())
                throw format_error("checkpoint tensor shape mismatch: opt.v");
            slot = &ckpt.opt.v;
        } else {
            slot = tensor_slot(ckpt.params, name, rows, cols);
            if (!slot) throw format_error("unknown tensor in checkpoint: " + name);
        }
        for (double& x : *slot) x = r.f64();
    }
    return ckpt;
}

bool GradcheckReport::passed() const {
    for (const auto& c : components)
        if (!c.skipped && !(c.max_rel_err < tolerance)) return false;
    return true;
}

namespace {

Vec flatten_mlp(const Mlp& m) {
    Vec out;
    for (const auto& l : m.layers) {
        out.insert(out.end(), l.W.data.begin(), l.W.data.end());
        out.insert(out.end(), l.b.begin(), l.b.end());
    }
    return out;
}

void unflatten_mlp(const Vec& flat, Mlp& m) {
    std::size_t pos = 0;
    for (auto& l : m.layers) {
        std::copy(flat.begin() + pos, flat.begin() + pos + l.W.size(), l.W.data.begin());
        pos += l.W.size();
        std::copy(flat.begin() + pos, flat.begin() + pos + l.b.size(), l.b.begin());
        pos += l.b.size();
    }
}

LossBatch make_gradcheck_batch(const ModelConfig& cfg, std::mt19937_64& rng) {
    std::normal_distribution<double> feat(0.0, 1.0);
    LossBatch batch;
    const std::size_t n_concepts = 3, n_queries = 4;
    for (std::size_t i = 0; i < n_concepts; ++i) {
        Vec x(cfg.d_feat);
        for (double& v : x) v = feat(rng);
        batch.concept_inputs.push_back(std::move(x));
    }
    for (std::size_t i = 0; i < n_queries; ++i) {
        Vec x(cfg.d_feat);
        for (double& v : x) v = feat(rng);
        batch.query_pooled.push_back(std::move(x));
    }
    batch.pairs = {{0, 0, 1}, {1, 1, 1}, {2, 2, 0}, {3, 0, 0}, {1, 2, 0}, {2, 1, 1}};
    batch.cls = {{0, 0}, {1, 1}, {2, 2}, {3, 1}};
    return batch;
}

}  // namespace

GradcheckReport gradcheck_all(const ModelConfig& config, double h, double tol,
                              std::uint64_t seed) {
    GradcheckReport report;
    report.tolerance = tol;
    report.h = h;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> unit(0.0, 1.0);
    const bool disc_active = config.lambda > 0.0;

    auto add = [&report](std::string name, double err, bool skipped = false) {
        report.components.push_back({std::move(name), err, skipped});
    };

    // instance_norm: weighted-sum loss over the normalized matrix, inputs as params
    {
        const std::size_t T = 5, d = 4;
        Matrix F(T, d), W(T, d);
        for (double& x : F.data) x = unit(rng);
        for (double& x : W.data) x = unit(rng);
        const double eps = 1e-5;
        auto loss = [&](const Vec& p) {
            Matrix f(T, d);
            f.data = p;
            const Matrix out = instance_norm(f, eps);
            double s = 0.0;
            for (std::size_t i = 0; i < out.size(); ++i) s += W.data[i] * out.data[i];
            return s;
        };
        const Matrix grad = instance_norm_backward(F, eps, W);
        add("instance_norm", gradient_check(loss, grad.data, F.data, h));
    }

    // mlp forward/backward
    {
        Mlp mlp;
        mlp.layers.push_back(make_dense(6, 10, Activation::gelu, rng));
        mlp.layers.push_back(make_dense(10, 4, Activation::identity, rng));
        Vec x(6), w(4);
        for (double& v : x) v = unit(rng);
        for (double& v : w) v = unit(rng);
        auto loss = [&](const Vec& p) {
            Mlp m = mlp;
            unflatten_mlp(p, m);
            const Vec y = mlp_forward(m, x);
            return dot(w, y);
        };
        MlpTape tape;
        mlp_forward(mlp, x, &tape);
        MlpGrads grads = zeros_like(mlp);
        mlp_backward(mlp, tape, w, grads);
        Mlp gm = mlp;
        for (std::size_t i = 0; i < gm.layers.size(); ++i) {
            gm.layers[i].W = grads.dW[i];
            gm.layers[i].b = grads.db[i];
        }
        add("mlp", gradient_check(loss, flatten_mlp(gm), flatten_mlp(mlp), h));
    }

    // exponential map at the origin (away from the clip boundary)
    {
        const Curvature c(config.curvature > 0.0 ? config.curvature : 1.0);
        Vec v(5), w(5);
        for (double& x : v) x = 0.3 * unit(rng);
        for (double& x : w) x = unit(rng);
        auto loss = [&](const Vec& p) {
            const BallPoint b = exp_map_origin(p, c);
            return dot(w, b.coords);
        };
        const Vec grad = exp_map_origin_backward(v, c, w);
        add("exp_map_origin", gradient_check(loss, grad, v, h), !disc_active);
    }

    // hyperbolic distance
    {
        const Curvature c(config.curvature > 0.0 ? config.curvature : 1.0);
        Vec u(4), v(4);
        for (double& x : u) x = 0.2 * unit(rng);
        for (double& x : v) x = 0.2 * unit(rng);
        auto loss = [&](const Vec& p) {
            BallPoint a{Vec(p.begin(), p.begin() + 4), c};
            BallPoint b{Vec(p.begin() + 4, p.end()), c};
            return poincare_distance(a, b);
        };
        const DistanceGrad dg = distance_gradient(BallPoint{u, c}, BallPoint{v, c});
        Vec params = u;
        params.insert(params.end(), v.begin(), v.end());
        Vec grad = dg.grad_u;
        grad.insert(grad.end(), dg.grad_v.begin(), dg.grad_v.end());
        add("poincare_distance", gradient_check(loss, grad, params, h), !disc_active);
    }

    // margin loss through the projection chain (both label branches)
    {
        const Curvature c(config.curvature > 0.0 ? config.curvature : 1.0);
        const double margin = config.margin;
        Vec a(4), b(4);
        for (double& x : a) x = 0.3 * unit(rng);
        for (double& x : b) x = 0.3 * unit(rng);
        auto loss = [&](const Vec& p) {
            const BallPoint pu = exp_map_origin(Vec(p.begin(), p.begin() + 4), c);
            const BallPoint pv = exp_map_origin(Vec(p.begin() + 4, p.end()), c);
            return disc_pair_loss(pu, pv, 1, margin) + disc_pair_loss(pu, pv, 0, margin);
        };
        const BallPoint pu = exp_map_origin(a, c);
        const BallPoint pv = exp_map_origin(b, c);
        const double d = poincare_distance(pu, pv);
        const double gap = margin - d;
        const double dd = 2.0 * d + (gap > 0.0 ? -2.0 * gap : 0.0);
        const DistanceGrad dg = distance_gradient(pu, pv);
        Vec gu(4), gv(4);
        for (std::size_t i = 0; i < 4; ++i) {
            gu[i] = dd * dg.grad_u[i];
            gv[i] = dd * dg.grad_v[i];
        }
        const Vec da = exp_map_origin_backward(a, c, gu);
        const Vec db = exp_map_origin_backward(b, c, gv);
        Vec params = a;
        params.insert(params.end(), b.begin(), b.end());
        Vec grad = da;
        grad.insert(grad.end(), db.begin(), db.end());
        add("margin_loss", gradient_check(loss, grad, params, h), !disc_active);
    }

    // surrogate loss and full joint loss over the whole parameter vector
    {
        ModelParams params = init_model(config, seed);
        const LossBatch full = make_gradcheck_batch(config, rng);

        LossBatch cls_only = full;
        cls_only.pairs.clear();
        auto run = [&params](const LossBatch& batch, const char* which) {
            return [&params, &batch, which](const Vec& p) {
                ModelParams m = params;
                unflatten(p, m);
                const LossValue l = joint_loss(m, batch);
                return std::string(which) == "ans" ? l.ans : l.joint;
            };
        };
        {
            ModelParams grads = zeros_like(params);
            joint_loss(params, cls_only, &grads);
            add("surrogate_loss",
                gradient_check(run(cls_only, "ans"), flatten(grads), flatten(params), h));
        }
        {
            ModelParams grads = zeros_like(params);
            joint_loss(params, full, &grads);
            add("joint_loss",
                gradient_check(run(full, "joint"), flatten(grads), flatten(params), h));
        }
    }

    return report;
}

}  // namespace opvlm
