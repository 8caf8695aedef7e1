#include "opvlm/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace opvlm {

DenseLayer make_dense(std::size_t in, std::size_t out, Activation act, std::mt19937_64& rng) {
    DenseLayer l;
    l.W = Matrix(in, out);
    l.b.assign(out, 0.0);
    l.act = act;
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
    for (double& w : l.W.data) w = dist(rng);
    return l;
}

Matrix instance_norm(const Matrix& F, double eps) {
    require(F.rows >= 1 && F.cols >= 1, "instance_norm: empty matrix");
    require(eps >= 0.0, "instance_norm: negative eps");
    require(all_finite(F), "instance_norm: non-finite input");
    const double T = static_cast<double>(F.rows);
    Matrix out(F.rows, F.cols);
    for (std::size_t j = 0; j < F.cols; ++j) {
        double mu = 0.0;
        for (std::size_t t = 0; t < F.rows; ++t) mu += F.at(t, j);
        mu /= T;
        double var = 0.0;
        for (std::size_t t = 0; t < F.rows; ++t) {
            const double d = F.at(t, j) - mu;
            var += d * d;
        }
        var /= T;
        const double inv = 1.0 / std::sqrt(var + eps);
        for (std::size_t t = 0; t < F.rows; ++t) out.at(t, j) = (F.at(t, j) - mu) * inv;
    }
    return out;
}

Matrix instance_norm_backward(const Matrix& F, double eps, const Matrix& grad_out) {
    require(F.same_shape(grad_out), "instance_norm_backward: shape mismatch");
    const double T = static_cast<double>(F.rows);
    Matrix grad_in(F.rows, F.cols);
    for (std::size_t j = 0; j < F.cols; ++j) {
        double mu = 0.0;
        for (std::size_t t = 0; t < F.rows; ++t) mu += F.at(t, j);
        mu /= T;
        double var = 0.0;
        for (std::size_t t = 0; t < F.rows; ++t) {
            const double d = F.at(t, j) - mu;
            var += d * d;
        }
        var /= T;
        const double inv = 1.0 / std::sqrt(var + eps);
        double g_mean = 0.0, gx_mean = 0.0;
        for (std::size_t t = 0; t < F.rows; ++t) {
            const double xhat = (F.at(t, j) - mu) * inv;
            g_mean += grad_out.at(t, j);
            gx_mean += grad_out.at(t, j) * xhat;
        }
        g_mean /= T;
        gx_mean /= T;
        for (std::size_t t = 0; t < F.rows; ++t) {
            const double xhat = (F.at(t, j) - mu) * inv;
            grad_in.at(t, j) = inv * (grad_out.at(t, j) - g_mean - xhat * gx_mean);
        }
    }
    return grad_in;
}

Matrix mean_pool(const std::vector<Matrix>& maps) {
    require(!maps.empty(), "mean_pool: empty list");
    Matrix out(maps[0].rows, maps[0].cols);
    for (const Matrix& m : maps) {
        require(m.same_shape(out), "mean_pool: shape mismatch");
        for (std::size_t i = 0; i < m.size(); ++i) out.data[i] += m.data[i];
    }
    const double inv = 1.0 / static_cast<double>(maps.size());
    for (double& x : out.data) x *= inv;
    return out;
}

Vec token_pool(const Matrix& F) {
    require(F.rows >= 1, "token_pool: empty matrix");
    Vec out(F.cols, 0.0);
    for (std::size_t t = 0; t < F.rows; ++t)
        for (std::size_t j = 0; j < F.cols; ++j) out[j] += F.at(t, j);
    const double inv = 1.0 / static_cast<double>(F.rows);
    for (double& x : out) x *= inv;
    return out;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

double gelu_grad(double x) {
    static const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    static const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * std::acos(-1.0));
    return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) + x * inv_sqrt2pi * std::exp(-0.5 * x * x);
}

namespace {

double apply_act(Activation a, double x) { return a == Activation::gelu ? gelu(x) : x; }
double act_grad(Activation a, double x) { return a == Activation::gelu ? gelu_grad(x) : 1.0; }

}  // namespace

Vec dense_forward(const DenseLayer& l, const Vec& x, Vec* pre_out) {
    require(x.size() == l.W.rows, "dense_forward: input dimension mismatch");
    Vec pre = l.b;
    for (std::size_t i = 0; i < l.W.rows; ++i) {
        const double xi = x[i];
        const double* wrow = &l.W.data[i * l.W.cols];
        for (std::size_t j = 0; j < l.W.cols; ++j) pre[j] += xi * wrow[j];
    }
    if (pre_out) *pre_out = pre;
    if (l.act == Activation::identity) return pre;
    Vec y(pre.size());
    for (std::size_t j = 0; j < pre.size(); ++j) y[j] = apply_act(l.act, pre[j]);
    return y;
}

Vec dense_backward(const DenseLayer& l, const Vec& x, const Vec& pre, const Vec& dy,
                   Matrix& dW, Vec& db) {
    require(dy.size() == l.W.cols, "dense_backward: upstream dimension mismatch");
    require(dW.rows == l.W.rows && dW.cols == l.W.cols && db.size() == l.b.size(),
            "dense_backward: gradient accumulator shape mismatch");
    Vec dpre(dy.size());
    for (std::size_t j = 0; j < dy.size(); ++j) dpre[j] = dy[j] * act_grad(l.act, pre[j]);
    for (std::size_t j = 0; j < dpre.size(); ++j) db[j] += dpre[j];
    Vec dx(x.size(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double xi = x[i];
        double* dwrow = &dW.data[i * dW.cols];
        const double* wrow = &l.W.data[i * l.W.cols];
        double acc = 0.0;
        for (std::size_t j = 0; j < dpre.size(); ++j) {
            dwrow[j] += xi * dpre[j];
            acc += wrow[j] * dpre[j];
        }
        dx[i] = acc;
    }
    return dx;
}

Vec mlp_forward(const Mlp& p, const Vec& x, MlpTape* tape) {
    require(!p.layers.empty(), "mlp_forward: empty MLP");
    if (tape) {
        tape->input = x;
        tape->pre.clear();
        tape->post.clear();
    }
    Vec cur = x;
    for (const DenseLayer& l : p.layers) {
        Vec pre;
        Vec y = dense_forward(l, cur, &pre);
        if (tape) {
            tape->pre.push_back(std::move(pre));
            tape->post.push_back(y);
        }
        cur = std::move(y);
    }
    return cur;
}

MlpGrads zeros_like(const Mlp& p) {
    MlpGrads g;
    for (const DenseLayer& l : p.layers) {
        g.dW.emplace_back(l.W.rows, l.W.cols);
        g.db.emplace_back(l.b.size(), 0.0);
    }
    return g;
}

Vec mlp_backward(const Mlp& p, const MlpTape& tape, const Vec& dy, MlpGrads& grads) {
    require(tape.pre.size() == p.layers.size(), "mlp_backward: stale tape");
    require(grads.dW.size() == p.layers.size(), "mlp_backward: gradient shape mismatch");
    Vec cur = dy;
    for (std::size_t li = p.layers.size(); li-- > 0;) {
        const Vec& x = li == 0 ? tape.input : tape.post[li - 1];
        cur = dense_backward(p.layers[li], x, tape.pre[li], cur, grads.dW[li], grads.db[li]);
    }
    return cur;
}

void optimizer_step(OptimizerState& state, Vec& params, const Vec& grads) {
    require(params.size() == grads.size(), "optimizer_step: shape mismatch");
    require(state.m.size() == params.size() && state.v.size() == params.size(),
            "optimizer_step: state not initialized for these parameters");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params[i] -= state.lr * (mhat / (std::sqrt(vhat) + state.eps) +
                                 state.weight_decay * params[i]);
    }
}

double gradient_check(const std::function<double(const Vec&)>& loss_fn,
                      const Vec& analytic_grad, const Vec& params, double h) {
    require(h > 0.0, "gradient_check: h must be positive");
    require(analytic_grad.size() == params.size(), "gradient_check: shape mismatch");
    const double base1 = loss_fn(params);
    const double base2 = loss_fn(params);
    if (base1 != base2)
        throw std::runtime_error("gradient_check: loss_fn is non-deterministic");
    double max_rel = 0.0;
    Vec p = params;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double orig = p[i];
        p[i] = orig + h;
        const double fp = loss_fn(p);
        p[i] = orig - h;
        const double fm = loss_fn(p);
        p[i] = orig;
        const double numeric = (fp - fm) / (2.0 * h);
        const double a = analytic_grad[i];
        // central differences carry ~eps/h cancellation noise, so differences
        // below that scale are indistinguishable from an exact match
        if (std::abs(a - numeric) < 1e-2 * h) continue;
        const double rel = std::abs(a - numeric) /
                           std::max({std::abs(a), std::abs(numeric), 1e-8});
        if (rel > max_rel) max_rel = rel;
    }
    return max_rel;
}

}  // namespace opvlm
