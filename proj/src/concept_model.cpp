#include "opvlm/concept_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <optional>

namespace opvlm {

namespace {

Matrix transpose(const Matrix& m) {
    Matrix t(m.cols, m.rows);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) t.at(j, i) = m.at(i, j);
    return t;
}

void append(Vec& out, const Matrix& m) { out.insert(out.end(), m.data.begin(), m.data.end()); }
void append(Vec& out, const Vec& v) { out.insert(out.end(), v.begin(), v.end()); }

void take(const Vec& flat, std::size_t& pos, Matrix& m) {
    std::copy(flat.begin() + pos, flat.begin() + pos + m.size(), m.data.begin());
    pos += m.size();
}

void take(const Vec& flat, std::size_t& pos, Vec& v) {
    std::copy(flat.begin() + pos, flat.begin() + pos + v.size(), v.begin());
    pos += v.size();
}

}  // namespace

ModelParams init_model(const ModelConfig& config, std::uint64_t seed) {
    require(config.d_feat >= 1 && config.d_model >= 1 && config.d_ball >= 1 && config.k >= 1,
            "init_model: dimensions must be positive");
    require(config.margin > 0.0, "init_model: margin must be positive");
    require(config.lambda >= 0.0, "init_model: lambda must be non-negative");
    std::mt19937_64 rng(seed);
    ModelParams p;
    p.config = config;
    const std::size_t hidden = config.hidden_mult * config.d_feat;
    p.embedder.mlp.layers.push_back(make_dense(config.d_feat, hidden, Activation::gelu, rng));
    p.embedder.mlp.layers.push_back(
        make_dense(hidden, config.k * config.d_model, Activation::identity, rng));
    // keep the variance of the k-row mean (the concept summary) independent of k
    const double ks = std::sqrt(static_cast<double>(config.k));
    for (double& w : p.embedder.mlp.layers.back().W.data) w *= ks;
    p.disc.query_head = make_dense(config.d_feat, config.d_ball, Activation::identity, rng);
    p.disc.concept_head = make_dense(config.d_model, config.d_ball, Activation::identity, rng);
    // start the projections near the ball origin: tangent vectors with norm
    // O(1) land at the boundary clip, where distances and gradients blow up
    for (DenseLayer* l : {&p.disc.query_head, &p.disc.concept_head})
        for (double& w : l->W.data) w *= 0.05;
    p.disc.curvature = Curvature(config.curvature);
    p.disc.margin = config.margin;
    p.head.scorer =
        make_dense(config.d_model + config.d_feat, 1, Activation::identity, rng);
    return p;
}

ModelParams zeros_like(const ModelParams& p) {
    ModelParams z = p;
    for (auto& l : z.embedder.mlp.layers) {
        std::fill(l.W.data.begin(), l.W.data.end(), 0.0);
        std::fill(l.b.begin(), l.b.end(), 0.0);
    }
    for (DenseLayer* l : {&z.disc.query_head, &z.disc.concept_head, &z.head.scorer}) {
        std::fill(l->W.data.begin(), l->W.data.end(), 0.0);
        std::fill(l->b.begin(), l->b.end(), 0.0);
    }
    return z;
}

std::size_t param_count(const ModelParams& p) {
    std::size_t n = 0;
    for (const auto& l : p.embedder.mlp.layers) n += l.W.size() + l.b.size();
    for (const DenseLayer* l : {&p.disc.query_head, &p.disc.concept_head, &p.head.scorer})
        n += l->W.size() + l->b.size();
    return n;
}

Vec flatten(const ModelParams& p) {
    Vec out;
    out.reserve(param_count(p));
    for (const auto& l : p.embedder.mlp.layers) {
        append(out, l.W);
        append(out, l.b);
    }
    for (const DenseLayer* l : {&p.disc.query_head, &p.disc.concept_head, &p.head.scorer}) {
        append(out, l->W);
        append(out, l->b);
    }
    return out;
}

void unflatten(const Vec& flat, ModelParams& p) {
    require(flat.size() == param_count(p), "unflatten: size mismatch");
    std::size_t pos = 0;
    for (auto& l : p.embedder.mlp.layers) {
        take(flat, pos, l.W);
        take(flat, pos, l.b);
    }
    for (DenseLayer* l : {&p.disc.query_head, &p.disc.concept_head, &p.head.scorer}) {
        take(flat, pos, l->W);
        take(flat, pos, l->b);
    }
}

std::uint64_t embedder_fingerprint(const EmbedderParams& e) {
    // FNV-1a over the raw little-endian bytes of every tensor in layer order.
    std::uint64_t h = 14695981039346656037ull;
    auto hash_span = [&h](const double* data, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
            std::uint64_t bits;
            std::memcpy(&bits, &data[i], sizeof(bits));
            for (int b = 0; b < 8; ++b) {
                h ^= (bits >> (8 * b)) & 0xFF;
                h *= 1099511628211ull;
            }
        }
    };
    for (const auto& l : e.mlp.layers) {
        hash_span(l.W.data.data(), l.W.size());
        hash_span(l.b.data(), l.b.size());
    }
    return h;
}

Matrix feature_norm(const Matrix& F, double eps) {
    return transpose(instance_norm(transpose(F), eps));
}

Vec embed_input(const std::vector<Matrix>& ref_maps, const ModelConfig& config) {
    require(!ref_maps.empty(), "embed_input: empty reference set");
    std::vector<Matrix> normed;
    normed.reserve(ref_maps.size());
    for (const Matrix& f : ref_maps) {
        require(f.cols == config.d_feat, "embed_input: feature dimension mismatch");
        normed.push_back(config.use_instance_norm ? feature_norm(f, config.eps_in) : f);
    }
    return token_pool(mean_pool(normed));
}

ConceptEmbedding embed_concept(const std::vector<Matrix>& ref_maps, const EmbedderParams& e,
                               const ModelConfig& config, std::string concept_id) {
    const Vec x = embed_input(ref_maps, config);
    const Vec y = mlp_forward(e.mlp, x);
    require(y.size() == config.k * config.d_model, "embed_concept: embedder output shape mismatch");
    ConceptEmbedding z;
    z.concept_id = std::move(concept_id);
    z.tokens = Matrix(config.k, config.d_model);
    z.tokens.data = y;
    return z;
}

Vec concept_summary(const ConceptEmbedding& z) { return token_pool(z.tokens); }

namespace {

BallPoint project_vec(const Vec& head_out, Curvature c, double eps) {
    if (c.euclidean()) return BallPoint{head_out, c};
    return exp_map_origin(head_out, c, eps);
}

// VJP through exp-map + clip given the tangent input of the forward call.
Vec project_tangent_backward(const Vec& a, Curvature c, double eps, const Vec& dpoint) {
    if (c.euclidean()) return dpoint;
    // recompute the unclipped exp-map output for the clip VJP
    const double sqrtc = std::sqrt(c.c);
    const double r = norm(a);
    Vec unclipped(a.size(), 0.0);
    if (r > 0.0) {
        const double w = sqrtc * r;
        const double scale = w < 1e-8 ? 1.0 - w * w / 3.0 : std::tanh(w) / w;
        for (std::size_t i = 0; i < a.size(); ++i) unclipped[i] = scale * a[i];
    }
    Vec de = clip_to_ball_backward(unclipped, c, eps, dpoint);
    return exp_map_origin_backward(a, c, de);
}

}  // namespace

BallPoint project_query(const Matrix& t, const DiscriminatorParams& d,
                        const ModelConfig& config) {
    require(t.cols == config.d_feat, "project_query: feature dimension mismatch");
    const Vec pooled = token_pool(t);
    const Vec a = dense_forward(d.query_head, pooled);
    return project_vec(a, d.curvature, config.eps_ball);
}

BallPoint project_concept(const ConceptEmbedding& z, const DiscriminatorParams& d,
                          const ModelConfig& config) {
    require(z.tokens.cols == config.d_model, "project_concept: embedding dimension mismatch");
    const Vec a = dense_forward(d.concept_head, concept_summary(z));
    return project_vec(a, d.curvature, config.eps_ball);
}

double disc_distance(const BallPoint& p, const BallPoint& q) {
    require(p.curvature.c == q.curvature.c, "disc_distance: curvature mismatch");
    if (p.curvature.euclidean()) return euclidean_limit_distance(p.coords, q.coords);
    return poincare_distance(p, q);
}

double disc_pair_loss(const BallPoint& p, const BallPoint& q, int label, double margin) {
    require(label == 0 || label == 1, "disc_pair_loss: label must be 0 or 1");
    require(margin > 0.0, "disc_pair_loss: margin must be positive");
    const double d = disc_distance(p, q);
    if (label == 1) return d * d;
    const double gap = margin - d;
    return gap > 0.0 ? gap * gap : 0.0;
}

double surrogate_ans_loss(const Matrix& query, const std::vector<ConceptEmbedding>& candidates,
                          std::size_t true_index, const SurrogateHeadParams& head) {
    require(candidates.size() >= 2, "surrogate_ans_loss: need at least 2 candidates");
    require(true_index < candidates.size(), "surrogate_ans_loss: true_index out of range");
    const Vec q = token_pool(query);
    Vec scores(candidates.size());
    for (std::size_t j = 0; j < candidates.size(); ++j) {
        Vec in = concept_summary(candidates[j]);
        append(in, q);
        scores[j] = dense_forward(head.scorer, in)[0];
    }
    const double mx = *std::max_element(scores.begin(), scores.end());
    double lse = 0.0;
    for (double s : scores) lse += std::exp(s - mx);
    lse = mx + std::log(lse);
    return lse - scores[true_index];
}

bool identify(const Matrix& query, const ConceptEmbedding& z, const DiscriminatorParams& d,
              const ModelConfig& config, double tau) {
    require(tau > 0.0, "identify: tau must be positive");
    const double dist =
        disc_distance(project_query(query, d, config), project_concept(z, d, config));
    return dist < tau;
}

LossValue joint_loss(const ModelParams& params, const LossBatch& batch, ModelParams* grads) {
    const ModelConfig& cfg = params.config;
    const std::size_t n_concepts = batch.concept_inputs.size();
    const std::size_t dm = cfg.d_model;
    const Curvature curv = params.disc.curvature;

    // embed every concept in the batch
    std::vector<MlpTape> tapes(n_concepts);
    std::vector<Vec> zbar(n_concepts, Vec(dm, 0.0));
    for (std::size_t i = 0; i < n_concepts; ++i) {
        const Vec u = mlp_forward(params.embedder.mlp, batch.concept_inputs[i], &tapes[i]);
        for (std::size_t b = 0; b < cfg.k; ++b)
            for (std::size_t j = 0; j < dm; ++j) zbar[i][j] += u[b * dm + j];
        for (double& x : zbar[i]) x /= static_cast<double>(cfg.k);
    }

    LossValue out;
    std::vector<Vec> dzbar(n_concepts, Vec(dm, 0.0));
    bool any_dzbar = false;

    // surrogate classification loss over all batch concepts as candidates
    std::vector<double> ds_scratch;
    if (!batch.cls.empty()) {
        require(n_concepts >= 2, "joint_loss: need at least 2 candidate concepts");
        const double inv_n = 1.0 / static_cast<double>(batch.cls.size());
        const Vec& wz = params.head.scorer.W.data;  // (dm + d_feat) x 1, column vector
        for (const auto& ex : batch.cls) {
            const Vec& q = batch.query_pooled[ex.query];
            Vec scores(n_concepts);
            for (std::size_t j = 0; j < n_concepts; ++j) {
                double s = params.head.scorer.b[0];
                for (std::size_t r = 0; r < dm; ++r) s += wz[r] * zbar[j][r];
                for (std::size_t r = 0; r < q.size(); ++r) s += wz[dm + r] * q[r];
                scores[j] = s;
            }
            const double mx = *std::max_element(scores.begin(), scores.end());
            double z = 0.0;
            for (double s : scores) z += std::exp(s - mx);
            const double lse = mx + std::log(z);
            out.ans += (lse - scores[ex.true_concept]) * inv_n;
            if (grads) {
                ds_scratch.resize(n_concepts);
                for (std::size_t j = 0; j < n_concepts; ++j) {
                    double p = std::exp(scores[j] - lse);
                    if (j == ex.true_concept) p -= 1.0;
                    ds_scratch[j] = p * inv_n;
                }
                Matrix& dWs = grads->head.scorer.W;
                Vec& dbs = grads->head.scorer.b;
                for (std::size_t j = 0; j < n_concepts; ++j) {
                    const double ds = ds_scratch[j];
                    if (ds == 0.0) continue;
                    for (std::size_t r = 0; r < dm; ++r) {
                        dWs.data[r] += ds * zbar[j][r];
                        dzbar[j][r] += ds * wz[r];
                    }
                    for (std::size_t r = 0; r < q.size(); ++r) dWs.data[dm + r] += ds * q[r];
                    dbs[0] += ds;
                    any_dzbar = true;
                }
            }
        }
    }

    // discriminative margin loss
    if (!batch.pairs.empty()) {
        const double inv_n = 1.0 / static_cast<double>(batch.pairs.size());
        const double lam = cfg.lambda;

        // lazily project queries and concepts used by pairs
        std::vector<std::optional<std::pair<Vec, Vec>>> qproj(batch.query_pooled.size());
        std::vector<std::optional<std::pair<Vec, Vec>>> cproj(n_concepts);
        auto query_point = [&](std::size_t qi) -> const std::pair<Vec, Vec>& {
            if (!qproj[qi]) {
                Vec a = dense_forward(params.disc.query_head, batch.query_pooled[qi]);
                Vec pt = project_vec(a, curv, cfg.eps_ball).coords;
                qproj[qi] = std::make_pair(std::move(a), std::move(pt));
            }
            return *qproj[qi];
        };
        auto concept_point = [&](std::size_t ci) -> const std::pair<Vec, Vec>& {
            if (!cproj[ci]) {
                Vec a = dense_forward(params.disc.concept_head, zbar[ci]);
                Vec pt = project_vec(a, curv, cfg.eps_ball).coords;
                cproj[ci] = std::make_pair(std::move(a), std::move(pt));
            }
            return *cproj[ci];
        };

        std::vector<Vec> dhead_q(batch.query_pooled.size());
        std::vector<Vec> dhead_c(n_concepts);
        for (const auto& pr : batch.pairs) {
            const auto& qp = query_point(pr.query);
            const auto& cp = concept_point(pr.concept_idx);
            const BallPoint u{qp.second, curv};
            const BallPoint v{cp.second, curv};
            const double d = disc_distance(u, v);
            double pair_loss, dd;
            if (pr.label == 1) {
                pair_loss = d * d;
                dd = 2.0 * d;
            } else {
                const double gap = params.disc.margin - d;
                pair_loss = gap > 0.0 ? gap * gap : 0.0;
                dd = gap > 0.0 ? -2.0 * gap : 0.0;
            }
            out.disc += pair_loss * inv_n;
            if (!grads || lam == 0.0 || dd == 0.0) continue;
            if (d < 1e-12) continue;  // zero subgradient at coincidence
            const DistanceGrad dg = curv.euclidean()
                                        ? euclidean_limit_distance_gradient(u.coords, v.coords)
                                        : distance_gradient(u, v);
            const double w = dd * inv_n * lam;
            auto accum = [&](Vec& slot, const Vec& g) {
                if (slot.empty()) slot.assign(g.size(), 0.0);
                for (std::size_t i = 0; i < g.size(); ++i) slot[i] += w * g[i];
            };
            accum(dhead_q[pr.query], dg.grad_u);
            accum(dhead_c[pr.concept_idx], dg.grad_v);
        }

        if (grads && lam > 0.0) {
            for (std::size_t qi = 0; qi < dhead_q.size(); ++qi) {
                if (dhead_q[qi].empty()) continue;
                const auto& qp = *qproj[qi];
                Vec da = project_tangent_backward(qp.first, curv, cfg.eps_ball, dhead_q[qi]);
                dense_backward(params.disc.query_head, batch.query_pooled[qi], qp.first, da,
                               grads->disc.query_head.W, grads->disc.query_head.b);
            }
            for (std::size_t ci = 0; ci < n_concepts; ++ci) {
                if (dhead_c[ci].empty()) continue;
                const auto& cp = *cproj[ci];
                Vec da = project_tangent_backward(cp.first, curv, cfg.eps_ball, dhead_c[ci]);
                Vec dz = dense_backward(params.disc.concept_head, zbar[ci], cp.first, da,
                                        grads->disc.concept_head.W, grads->disc.concept_head.b);
                for (std::size_t j = 0; j < dm; ++j) dzbar[ci][j] += dz[j];
                any_dzbar = true;
            }
        }
    }

    // backpropagate accumulated embedding gradients into the embedder
    if (grads && any_dzbar) {
        MlpGrads eg = zeros_like(params.embedder.mlp);
        const double inv_k = 1.0 / static_cast<double>(cfg.k);
        for (std::size_t i = 0; i < n_concepts; ++i) {
            bool nonzero = false;
            for (double g : dzbar[i])
                if (g != 0.0) {
                    nonzero = true;
                    break;
                }
            if (!nonzero) continue;
            Vec du(cfg.k * dm);
            for (std::size_t b = 0; b < cfg.k; ++b)
                for (std::size_t j = 0; j < dm; ++j) du[b * dm + j] = dzbar[i][j] * inv_k;
            mlp_backward(params.embedder.mlp, tapes[i], du, eg);
        }
        for (std::size_t li = 0; li < eg.dW.size(); ++li) {
            Matrix& W = grads->embedder.mlp.layers[li].W;
            Vec& b = grads->embedder.mlp.layers[li].b;
            for (std::size_t i = 0; i < W.size(); ++i) W.data[i] += eg.dW[li].data[i];
            for (std::size_t i = 0; i < b.size(); ++i) b[i] += eg.db[li][i];
        }
    }

    out.joint = out.ans + cfg.lambda * out.disc;
    return out;
}

}  // namespace opvlm
