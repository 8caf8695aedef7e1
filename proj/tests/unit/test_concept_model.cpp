#include <cmath>
#include <random>

#include <doctest.h>

#include "opvlm/concept_model.hpp"

using namespace opvlm;

namespace {

ModelConfig small_config() {
    ModelConfig c;
    c.d_feat = 8;
    c.d_model = 6;
    c.d_ball = 4;
    c.k = 3;
    c.hidden_mult = 2;
    return c;
}

Matrix random_map(std::size_t t, std::size_t d, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    Matrix m(t, d);
    for (double& x : m.data) x = g(rng);
    return m;
}

}  // namespace

TEST_CASE("feature norm normalizes each token row") {
    std::mt19937_64 rng(3);
    const Matrix f = random_map(5, 8, rng);
    const Matrix out = feature_norm(f, 0.0);
    REQUIRE(out.rows == 5);
    REQUIRE(out.cols == 8);
    for (std::size_t i = 0; i < out.rows; ++i) {
        double mean = 0.0, var = 0.0;
        for (std::size_t j = 0; j < out.cols; ++j) mean += out.at(i, j);
        mean /= double(out.cols);
        for (std::size_t j = 0; j < out.cols; ++j) {
            const double d = out.at(i, j) - mean;
            var += d * d;
        }
        var /= double(out.cols);
        CHECK(std::abs(mean) < 1e-12);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("embed input is invariant to duplicated references") {
    const ModelConfig cfg = small_config();
    std::mt19937_64 rng(7);
    const Matrix a = random_map(4, cfg.d_feat, rng);
    const Vec one = embed_input({a}, cfg);
    const Vec two = embed_input({a, a}, cfg);
    CHECK(one == two);  // bitwise
}

TEST_CASE("embed concept shape and determinism") {
    const ModelConfig cfg = small_config();
    const ModelParams p = init_model(cfg, 11);
    std::mt19937_64 rng(13);
    const Matrix a = random_map(4, cfg.d_feat, rng);
    const Matrix b = random_map(4, cfg.d_feat, rng);

    const ConceptEmbedding z = embed_concept({a, b}, p.embedder, cfg, "<sks_0>");
    CHECK(z.concept_id == "<sks_0>");
    CHECK(z.tokens.rows == cfg.k);
    CHECK(z.tokens.cols == cfg.d_model);
    CHECK(all_finite(z.tokens));

    const ConceptEmbedding z2 = embed_concept({a, b}, p.embedder, cfg, "<sks_0>");
    CHECK(z.tokens.data == z2.tokens.data);  // bitwise repeatable

    const Vec s = concept_summary(z);
    REQUIRE(s.size() == cfg.d_model);
    for (std::size_t j = 0; j < cfg.d_model; ++j) {
        double m = 0.0;
        for (std::size_t i = 0; i < cfg.k; ++i) m += z.tokens.at(i, j);
        CHECK(s[j] == doctest::Approx(m / double(cfg.k)).epsilon(1e-15));
    }
}

TEST_CASE("zero head projects to the origin") {
    const ModelConfig cfg = small_config();
    ModelParams p = init_model(cfg, 1);
    for (double& w : p.disc.query_head.W.data) w = 0.0;
    for (double& b : p.disc.query_head.b) b = 0.0;
    std::mt19937_64 rng(17);
    const BallPoint q = project_query(random_map(4, cfg.d_feat, rng), p.disc, cfg);
    CHECK(norm(q.coords) == 0.0);
}

TEST_CASE("projection stays inside the ball on huge inputs") {
    const ModelConfig cfg = small_config();
    const ModelParams p = init_model(cfg, 1);
    std::mt19937_64 rng(19);
    const Matrix big = random_map(4, cfg.d_feat, rng, 1e8);
    const BallPoint q = project_query(big, p.disc, cfg);
    CHECK(all_finite(q.coords));
    CHECK(norm(q.coords) < 1.0 / std::sqrt(cfg.curvature));
}

TEST_CASE("disc pair loss values") {
    const Curvature c1(1.0);
    const BallPoint origin{{0.0, 0.0}, c1};
    // positive pair at zero distance
    CHECK(disc_pair_loss(origin, origin, 1, 1.0) == 0.0);

    // radial point at norm tanh(0.2): d(0, q) = 0.4
    const BallPoint q{{std::tanh(0.2), 0.0}, c1};
    CHECK(disc_pair_loss(origin, q, 0, 1.0) == doctest::Approx(0.36).epsilon(1e-12));
    CHECK(disc_pair_loss(origin, q, 1, 1.0) == doctest::Approx(0.16).epsilon(1e-12));

    // negatives beyond the margin cost nothing
    const BallPoint far{{std::tanh(2.0), 0.0}, c1};
    CHECK(disc_pair_loss(origin, far, 0, 1.0) == 0.0);

    CHECK_THROWS_AS(disc_pair_loss(origin, q, 2, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(disc_pair_loss(origin, q, 0, 0.0), std::invalid_argument);
}

TEST_CASE("disc distance dispatches on curvature") {
    const BallPoint u{{0.25, 0.0}, Curvature(0.0)};
    const BallPoint v{{0.0, 0.0}, Curvature(0.0)};
    CHECK(disc_distance(u, v) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK_THROWS_AS(disc_distance(u, BallPoint{{0.0, 0.0}, Curvature(1.0)}),
                    std::invalid_argument);
}

TEST_CASE("surrogate loss with a zero scorer is uniform") {
    const ModelConfig cfg = small_config();
    ModelParams p = init_model(cfg, 1);
    for (double& w : p.head.scorer.W.data) w = 0.0;
    for (double& b : p.head.scorer.b) b = 0.0;
    std::mt19937_64 rng(23);
    const Matrix query = random_map(4, cfg.d_feat, rng);
    std::vector<ConceptEmbedding> cands;
    for (int i = 0; i < 2; ++i)
        cands.push_back(embed_concept({random_map(4, cfg.d_feat, rng)}, p.embedder, cfg,
                                      "<sks_" + std::to_string(i) + ">"));
    CHECK(surrogate_ans_loss(query, cands, 0, p.head) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK_THROWS_AS(surrogate_ans_loss(query, {cands[0]}, 0, p.head), std::invalid_argument);
}

TEST_CASE("flatten round trip and param count") {
    const ModelConfig cfg = small_config();
    const ModelParams p = init_model(cfg, 29);
    const Vec flat = flatten(p);
    CHECK(flat.size() == param_count(p));

    ModelParams q = zeros_like(p);
    CHECK(flatten(q) == Vec(flat.size(), 0.0));
    unflatten(flat, q);
    CHECK(flatten(q) == flat);  // bitwise
}

TEST_CASE("embedder fingerprint is parameter sensitive") {
    const ModelConfig cfg = small_config();
    ModelParams p = init_model(cfg, 31);
    const std::uint64_t fp = embedder_fingerprint(p.embedder);
    CHECK(fp == embedder_fingerprint(p.embedder));  // stable
    p.embedder.mlp.layers[0].b[0] += 1e-12;
    CHECK(embedder_fingerprint(p.embedder) != fp);
}

TEST_CASE("lambda zero reduces the joint loss to the answer loss") {
    ModelConfig cfg = small_config();
    cfg.lambda = 0.0;
    const ModelParams p = init_model(cfg, 37);
    std::mt19937_64 rng(41);

    LossBatch batch;
    for (int i = 0; i < 3; ++i)
        batch.concept_inputs.push_back(embed_input({random_map(4, cfg.d_feat, rng)}, cfg));
    for (int i = 0; i < 4; ++i)
        batch.query_pooled.push_back(token_pool(random_map(4, cfg.d_feat, rng)));
    batch.pairs = {{0, 0, 1}, {1, 1, 1}, {2, 0, 0}, {3, 2, 0}};
    batch.cls = {{0, 0}, {1, 1}};

    ModelParams grads = zeros_like(p);
    const LossValue v = joint_loss(p, batch, &grads);
    CHECK(v.joint == v.ans);  // bitwise: lambda = 0 contributes nothing
    CHECK(v.disc >= 0.0);
    for (double g : grads.disc.query_head.W.data) CHECK(g == 0.0);
    for (double g : grads.disc.concept_head.W.data) CHECK(g == 0.0);

    // with the discriminator active the joint objective is the weighted sum
    ModelConfig cfg2 = cfg;
    cfg2.lambda = 0.5;
    ModelParams p2 = init_model(cfg2, 37);
    const LossValue v2 = joint_loss(p2, batch, nullptr);
    CHECK(v2.joint == doctest::Approx(v2.ans + 0.5 * v2.disc).epsilon(1e-15));
}

TEST_CASE("identify thresholds the projected distance") {
    const ModelConfig cfg = small_config();
    ModelParams p = init_model(cfg, 43);
    std::mt19937_64 rng(47);
    const Matrix query = random_map(4, cfg.d_feat, rng);
    const ConceptEmbedding z = embed_concept({query}, p.embedder, cfg, "<sks_0>");
    const double d = disc_distance(project_query(query, p.disc, cfg),
                                   project_concept(z, p.disc, cfg));
    CHECK(identify(query, z, p.disc, cfg, d * 2.0));
    CHECK_FALSE(identify(query, z, p.disc, cfg, d * 0.5));
    CHECK_THROWS_AS(identify(query, z, p.disc, cfg, 0.0), std::invalid_argument);
}

TEST_CASE("init model is seed deterministic") {
    const ModelConfig cfg = small_config();
    CHECK(flatten(init_model(cfg, 5)) == flatten(init_model(cfg, 5)));
    CHECK(flatten(init_model(cfg, 5)) != flatten(init_model(cfg, 6)));
}
