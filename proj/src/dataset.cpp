#include "opvlm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "opvlm/nn.hpp"

namespace opvlm {

namespace {

Vec gaussian_vec(std::size_t n, double sigma, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, sigma);
    Vec v(n);
    for (double& x : v) x = dist(rng);
    return v;
}

// tokens around `primary`, with the first n_distract tokens around `distract`;
// `jitter` applies a per-image multiplicative gain (reference images only:
// the capture-gain nuisance the embedder's normalization has to absorb)
Matrix make_map(const Vec& primary, const Vec* distract, std::size_t n_distract,
                const SyntheticSpec& spec, bool jitter, std::mt19937_64& rng) {
    std::normal_distribution<double> noise(0.0, spec.intra_noise);
    std::uniform_real_distribution<double> logg(-std::log(spec.gain_jitter),
                                                std::log(spec.gain_jitter));
    const double gain = jitter && spec.gain_jitter > 1.0 ? std::exp(logg(rng)) : 1.0;
    Matrix m(spec.tokens, spec.d_feat);
    for (std::size_t t = 0; t < spec.tokens; ++t) {
        const Vec& proto = (distract && t < n_distract) ? *distract : primary;
        for (std::size_t j = 0; j < spec.d_feat; ++j)
            m.at(t, j) = gain * (proto[j] + noise(rng));
    }
    return m;
}

}  // namespace

std::vector<std::size_t> ConceptWorld::queries_of(std::size_t concept_index) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < queries.size(); ++i)
        if (queries[i].concept_index == concept_index) out.push_back(i);
    return out;
}

ConceptWorld generate(const SyntheticSpec& spec) {
    require(spec.num_concepts >= 1 && spec.images_per_concept >= 1 &&
                spec.queries_per_concept >= 1 && spec.tokens >= 1 && spec.d_feat >= 1,
            "generate: counts must be >= 1");
    require(spec.intra_noise > 0.0, "generate: intra_noise must be positive");
    require(spec.negative_fraction >= 0.0 && spec.negative_fraction < 1.0,
            "generate: negative_fraction must be in [0, 1)");
    require(!spec.distractor_levels.empty(), "generate: distractor_levels empty");

    std::mt19937_64 rng(spec.seed);
    ConceptWorld world;
    world.spec = spec;

    // concept prototypes
    std::vector<Vec> prototypes;
    if (spec.hierarchy == Hierarchy::flat) {
        for (std::size_t i = 0; i < spec.num_concepts; ++i)
            prototypes.push_back(gaussian_vec(spec.d_feat, spec.prototype_scale, rng));
    } else {
        std::size_t leaves = 1;
        for (std::size_t l = 0; l < spec.tree_depth; ++l) leaves *= spec.tree_branching;
        require(leaves >= spec.num_concepts,
                "generate: tree_branching^tree_depth must cover num_concepts");
        std::vector<Vec> level{Vec(spec.d_feat, 0.0)};
        double scale = spec.prototype_scale;
        for (std::size_t l = 0; l < spec.tree_depth; ++l) {
            std::vector<Vec> next;
            for (const Vec& parent : level) {
                for (std::size_t b = 0; b < spec.tree_branching; ++b) {
                    Vec child = gaussian_vec(spec.d_feat, scale, rng);
                    for (std::size_t j = 0; j < spec.d_feat; ++j) child[j] += parent[j];
                    next.push_back(std::move(child));
                }
            }
            level = std::move(next);
            scale *= 0.5;
        }
        prototypes.assign(level.begin(), level.begin() + spec.num_concepts);
    }

    // held-out prototypes backing negative (concept-absent) queries
    const std::size_t n_held = std::max<std::size_t>(8, spec.num_concepts / 4);
    std::vector<Vec> held_out;
    for (std::size_t i = 0; i < n_held; ++i)
        held_out.push_back(gaussian_vec(spec.d_feat, spec.prototype_scale, rng));

    std::uniform_int_distribution<std::size_t> pick_level(0, spec.distractor_levels.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_held(0, n_held - 1);

    for (std::size_t i = 0; i < spec.num_concepts; ++i) {
        Concept c;
        c.id = "<sks_" + std::to_string(i) + ">";
        c.prototype = prototypes[i];
        for (std::size_t r = 0; r < spec.images_per_concept; ++r)
            c.references.push_back(make_map(c.prototype, nullptr, 0, spec, true, rng));
        world.concepts.push_back(std::move(c));
    }

    const std::size_t n_neg = static_cast<std::size_t>(
        std::llround(spec.negative_fraction * static_cast<double>(spec.queries_per_concept)));
    for (std::size_t i = 0; i < spec.num_concepts; ++i) {
        for (std::size_t qi = 0; qi < spec.queries_per_concept; ++qi) {
            const bool present = qi < spec.queries_per_concept - n_neg;
            const double frac = spec.distractor_levels[pick_level(rng)];
            const std::size_t n_distract = static_cast<std::size_t>(
                std::llround(frac * static_cast<double>(spec.tokens)));
            FeatureQuery q;
            q.concept_index = i;
            q.present = present;
            q.distractor_fraction = frac;
            if (present) {
                const Vec* distract = nullptr;
                if (n_distract > 0 && spec.num_concepts > 1) {
                    std::uniform_int_distribution<std::size_t> other(0, spec.num_concepts - 2);
                    std::size_t oi = other(rng);
                    if (oi >= i) ++oi;
                    distract = &prototypes[oi];
                }
                q.features =
                    make_map(prototypes[i], distract, distract ? n_distract : 0, spec, false, rng);
            } else {
                const Vec& primary = held_out[pick_held(rng)];
                const Vec* distract = n_distract > 0 ? &held_out[pick_held(rng)] : nullptr;
                q.features =
                    make_map(primary, distract, distract ? n_distract : 0, spec, false, rng);
            }
            world.queries.push_back(std::move(q));
        }
    }
    return world;
}

Split split_novel(const ConceptWorld& world, double fraction, std::uint64_t seed) {
    require(fraction > 0.0 && fraction < 1.0, "split_novel: fraction must be in (0, 1)");
    const std::size_t n = world.concepts.size();
    require(n >= 2, "split_novel: need at least 2 concepts");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t n_train = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
    Split s;
    s.train_concepts.assign(order.begin(), order.begin() + n_train);
    s.test_concepts.assign(order.begin() + n_train, order.end());
    std::sort(s.train_concepts.begin(), s.train_concepts.end());
    std::sort(s.test_concepts.begin(), s.test_concepts.end());
    return s;
}

CachedSplit split_cached(const ConceptWorld& world, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    CachedSplit s;
    for (std::size_t i = 0; i < world.concepts.size(); ++i) {
        std::vector<std::size_t> q = world.queries_of(i);
        require(q.size() >= 2, "split_cached: concept with fewer than 2 queries");
        std::shuffle(q.begin(), q.end(), rng);
        const std::size_t half = q.size() / 2;
        s.train_queries.insert(s.train_queries.end(), q.begin(), q.begin() + half);
        s.test_queries.insert(s.test_queries.end(), q.begin() + half, q.end());
    }
    std::sort(s.train_queries.begin(), s.train_queries.end());
    std::sort(s.test_queries.begin(), s.test_queries.end());
    return s;
}

double nearest_centroid_accuracy(const ConceptWorld& world,
                                 const std::vector<std::size_t>& query_indices) {
    std::vector<Vec> centroids;
    for (const Concept& c : world.concepts)
        centroids.push_back(token_pool(mean_pool(c.references)));
    std::size_t correct = 0, total = 0;
    for (std::size_t qi : query_indices) {
        const FeatureQuery& q = world.queries[qi];
        if (!q.present) continue;
        const Vec pooled = token_pool(q.features);
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < centroids.size(); ++i) {
            const double d = norm2(sub(pooled, centroids[i]));
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        correct += best == q.concept_index ? 1 : 0;
        ++total;
    }
    require(total > 0, "nearest_centroid_accuracy: no present queries");
    return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace opvlm
