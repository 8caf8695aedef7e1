#include <cmath>
#include <random>

#include <doctest.h>

#include "opvlm/nn.hpp"

using namespace opvlm;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix m(r, c);
    for (double& x : m.data) x = g(rng);
    return m;
}

Vec random_vec(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    Vec v(n);
    for (double& x : v) x = g(rng);
    return v;
}

Vec flatten_mlp(const Mlp& p) {
    Vec out;
    for (const DenseLayer& l : p.layers) {
        out.insert(out.end(), l.W.data.begin(), l.W.data.end());
        out.insert(out.end(), l.b.begin(), l.b.end());
    }
    return out;
}

void unflatten_mlp(Mlp& p, const Vec& flat) {
    std::size_t pos = 0;
    for (DenseLayer& l : p.layers) {
        std::copy(flat.begin() + pos, flat.begin() + pos + l.W.size(), l.W.data.begin());
        pos += l.W.size();
        std::copy(flat.begin() + pos, flat.begin() + pos + l.b.size(), l.b.begin());
        pos += l.b.size();
    }
}

}  // namespace

TEST_CASE("instance norm two-token column") {
    Matrix f(2, 1);
    f.at(0, 0) = 1.0;
    f.at(1, 0) = 3.0;
    // mean 2, population var 1: (x - 2)/sqrt(1 + eps)
    const Matrix out = instance_norm(f, 1e-5);
    CHECK(out.at(0, 0) == doctest::Approx(-0.9999950000374997).epsilon(1e-14));
    CHECK(out.at(1, 0) == doctest::Approx(0.9999950000374997).epsilon(1e-14));
    const Matrix exact = instance_norm(f, 0.0);
    CHECK(exact.at(0, 0) == -1.0);
    CHECK(exact.at(1, 0) == 1.0);
}

TEST_CASE("instance norm output statistics") {
    std::mt19937_64 rng(5);
    const Matrix f = random_matrix(16, 6, rng);
    const Matrix out = instance_norm(f, 1e-5);
    for (std::size_t j = 0; j < out.cols; ++j) {
        double mean = 0.0, var = 0.0;
        for (std::size_t i = 0; i < out.rows; ++i) mean += out.at(i, j);
        mean /= double(out.rows);
        for (std::size_t i = 0; i < out.rows; ++i) {
            const double d = out.at(i, j) - mean;
            var += d * d;
        }
        var /= double(out.rows);
        CHECK(std::abs(mean) < 1e-12);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
    }
}

TEST_CASE("instance norm single token") {
    Matrix f(1, 3);
    f.at(0, 0) = 4.0;
    f.at(0, 1) = -2.0;
    f.at(0, 2) = 7.0;
    const Matrix out = instance_norm(f, 1e-5);
    for (double x : out.data) CHECK(x == 0.0);
}

TEST_CASE("instance norm backward matches finite differences") {
    std::mt19937_64 rng(9);
    const Matrix f = random_matrix(4, 3, rng);
    const Matrix w = random_matrix(4, 3, rng);
    Matrix go(4, 3);
    go.data = w.data;
    const Matrix grad = instance_norm_backward(f, 1e-5, go);
    auto loss = [&](const Vec& p) {
        Matrix m(4, 3);
        m.data = p;
        const Matrix out = instance_norm(m, 1e-5);
        double s = 0.0;
        for (std::size_t i = 0; i < out.data.size(); ++i) s += out.data[i] * w.data[i];
        return s;
    };
    CHECK(gradient_check(loss, grad.data, f.data, 1e-6) < 1e-4);
}

TEST_CASE("pooling") {
    Matrix a(2, 2);
    a.data = {1.0, 2.0, 3.0, 4.0};
    Matrix b(2, 2);
    b.data = {5.0, 6.0, 7.0, 8.0};
    const Matrix m = mean_pool({a, b});
    CHECK(m.data == Vec{3.0, 4.0, 5.0, 6.0});

    const Vec t = token_pool(a);
    CHECK(t == Vec{2.0, 3.0});
}

TEST_CASE("identity dense layer") {
    DenseLayer l;
    l.W = Matrix(3, 3);
    for (std::size_t i = 0; i < 3; ++i) l.W.at(i, i) = 1.0;
    l.b = Vec(3, 0.0);
    l.act = Activation::identity;
    const Vec x{0.5, -1.25, 2.0};
    CHECK(dense_forward(l, x) == x);
}

TEST_CASE("gelu") {
    CHECK(gelu(0.0) == 0.0);
    CHECK(gelu(10.0) == doctest::Approx(10.0).epsilon(1e-6));
    CHECK(gelu(-10.0) == doctest::Approx(0.0).epsilon(1e-6));
    for (double x : {-2.0, -0.5, 0.3, 1.7}) {
        const double h = 1e-6;
        const double num = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
        CHECK(gelu_grad(x) == doctest::Approx(num).epsilon(1e-5));
    }
}

TEST_CASE("mlp backward matches finite differences") {
    std::mt19937_64 rng(13);
    Mlp p;
    p.layers.push_back(make_dense(4, 6, Activation::gelu, rng));
    p.layers.push_back(make_dense(6, 3, Activation::identity, rng));
    const Vec x = random_vec(4, rng);
    const Vec w = random_vec(3, rng);

    MlpTape tape;
    const Vec y = mlp_forward(p, x, &tape);
    REQUIRE(y.size() == 3);
    MlpGrads grads = zeros_like(p);
    const Vec dx = mlp_backward(p, tape, w, grads);

    // parameter gradients
    Vec flat_grads;
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
        flat_grads.insert(flat_grads.end(), grads.dW[i].data.begin(), grads.dW[i].data.end());
        flat_grads.insert(flat_grads.end(), grads.db[i].begin(), grads.db[i].end());
    }
    auto param_loss = [&](const Vec& flat) {
        Mlp q = p;
        unflatten_mlp(q, flat);
        return dot(w, mlp_forward(q, x));
    };
    CHECK(gradient_check(param_loss, flat_grads, flatten_mlp(p), 1e-6) < 1e-4);

    // input gradient
    auto input_loss = [&](const Vec& xin) { return dot(w, mlp_forward(p, xin)); };
    CHECK(gradient_check(input_loss, dx, x, 1e-6) < 1e-4);
}

TEST_CASE("dense backward matches finite differences") {
    std::mt19937_64 rng(17);
    DenseLayer l = make_dense(3, 2, Activation::gelu, rng);
    const Vec x = random_vec(3, rng);
    const Vec w = random_vec(2, rng);

    Vec pre;
    dense_forward(l, x, &pre);
    Matrix dW(3, 2);
    Vec db(2, 0.0);
    const Vec dx = dense_backward(l, x, pre, w, dW, db);

    auto input_loss = [&](const Vec& xin) { return dot(w, dense_forward(l, xin)); };
    CHECK(gradient_check(input_loss, dx, x, 1e-6) < 1e-4);

    Vec flat(l.W.data);
    flat.insert(flat.end(), l.b.begin(), l.b.end());
    Vec grad(dW.data);
    grad.insert(grad.end(), db.begin(), db.end());
    auto param_loss = [&](const Vec& p) {
        DenseLayer q = l;
        std::copy(p.begin(), p.begin() + 6, q.W.data.begin());
        std::copy(p.begin() + 6, p.end(), q.b.begin());
        return dot(w, dense_forward(q, x));
    };
    CHECK(gradient_check(param_loss, grad, flat, 1e-6) < 1e-4);
}

TEST_CASE("optimizer matches the scalar reference trajectory") {
    OptimizerState st;
    st.lr = 0.1;
    st.beta1 = 0.9;
    st.beta2 = 0.999;
    st.eps = 1e-8;
    st.weight_decay = 0.01;
    st.init(1);
    Vec p{1.0};
    const double grads[] = {0.5, -0.3, 0.2};
    const double want[] = {0.8990000019999999, 0.8789511989397751, 0.8433294795899422};
    for (int i = 0; i < 3; ++i) {
        optimizer_step(st, p, Vec{grads[i]});
        CHECK(p[0] == doctest::Approx(want[i]).epsilon(1e-12));
    }
    CHECK(st.step == 3);
}

TEST_CASE("optimizer decoupled weight decay") {
    OptimizerState st;
    st.lr = 0.05;
    st.weight_decay = 0.1;
    st.init(1);
    Vec p{2.0};
    optimizer_step(st, p, Vec{0.0});
    // zero gradient: only the decay term moves the parameter
    CHECK(p[0] == doctest::Approx(2.0 - 0.05 * 0.1 * 2.0).epsilon(1e-12));
}

TEST_CASE("optimizer first step magnitude") {
    OptimizerState st;
    st.lr = 1e-3;
    st.weight_decay = 0.0;
    st.init(1);
    Vec p{0.0};
    optimizer_step(st, p, Vec{0.7});
    // bias-corrected first step is ~lr regardless of gradient scale
    CHECK(std::abs(p[0]) == doctest::Approx(1e-3).epsilon(1e-6));
}

TEST_CASE("gradient check rejects non-deterministic losses") {
    int calls = 0;
    auto loss = [&](const Vec& v) { return v[0] + 0.001 * double(calls++); };
    CHECK_THROWS_AS(gradient_check(loss, Vec{1.0}, Vec{0.5}, 1e-6), std::exception);
}

TEST_CASE("make_dense is deterministic per seed") {
    std::mt19937_64 a(99), b(99);
    const DenseLayer la = make_dense(5, 7, Activation::gelu, a);
    const DenseLayer lb = make_dense(5, 7, Activation::gelu, b);
    CHECK(la.W.data == lb.W.data);
    CHECK(la.b == lb.b);
    CHECK(la.W.rows == 5);
    CHECK(la.W.cols == 7);
}
