#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "opvlm/matrix.hpp"

namespace opvlm {

enum class Activation { identity, gelu };

// W is [in x out]; y = act(x W + b).
struct DenseLayer {
    Matrix W;
    Vec b;
    Activation act = Activation::identity;
};

struct Mlp {
    std::vector<DenseLayer> layers;
};

DenseLayer make_dense(std::size_t in, std::size_t out, Activation act, std::mt19937_64& rng);

// Per-channel normalization over the token axis (population variance, no affine).
Matrix instance_norm(const Matrix& F, double eps);
Matrix instance_norm_backward(const Matrix& F, double eps, const Matrix& grad_out);

Matrix mean_pool(const std::vector<Matrix>& maps);
Vec token_pool(const Matrix& F);

struct MlpTape {
    Vec input;
    std::vector<Vec> pre;   // pre-activation per layer
    std::vector<Vec> post;  // activation output per layer
};

Vec mlp_forward(const Mlp& p, const Vec& x, MlpTape* tape = nullptr);

struct MlpGrads {
    std::vector<Matrix> dW;
    std::vector<Vec> db;
};

MlpGrads zeros_like(const Mlp& p);

// Returns dL/dx; accumulates parameter gradients into `grads`.
Vec mlp_backward(const Mlp& p, const MlpTape& tape, const Vec& dy, MlpGrads& grads);

// Single dense layer helpers (the discriminator heads and the surrogate scorer).
Vec dense_forward(const DenseLayer& l, const Vec& x, Vec* pre = nullptr);
Vec dense_backward(const DenseLayer& l, const Vec& x, const Vec& pre, const Vec& dy,
                   Matrix& dW, Vec& db);

double gelu(double x);
double gelu_grad(double x);

// Adaptive-moment optimizer with decoupled weight decay over a flat
// parameter vector. Bitwise deterministic given identical inputs.
struct OptimizerState {
    double lr = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    std::uint64_t step = 0;
    Vec m;
    Vec v;

    void init(std::size_t n) {
        m.assign(n, 0.0);
        v.assign(n, 0.0);
        step = 0;
    }
};

void optimizer_step(OptimizerState& state, Vec& params, const Vec& grads);

// Max over coordinates of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8),
// numeric = central differences with step h. Evaluates loss_fn twice at the base
// point and throws if the results differ (non-deterministic loss).
double gradient_check(const std::function<double(const Vec&)>& loss_fn,
                      const Vec& analytic_grad, const Vec& params, double h);

}  // namespace opvlm
