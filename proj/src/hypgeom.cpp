#include "opvlm/hypgeom.hpp"

#include <cmath>

namespace opvlm {

namespace {

void check_pair(const BallPoint& u, const BallPoint& v) {
    require(u.coords.size() == v.coords.size(), "poincare_distance: dimension mismatch");
    require(u.curvature.c == v.curvature.c, "poincare_distance: curvature mismatch");
    require(u.curvature.c > 0.0,
            "poincare_distance: c <= 0; use euclidean_limit_distance for the c = 0 baseline");
    require(all_finite(u.coords) && all_finite(v.coords), "poincare_distance: non-finite point");
}

}  // namespace

double poincare_distance(const BallPoint& u, const BallPoint& v) {
    check_pair(u, v);
    const double c = u.curvature.c;
    const double alpha = 1.0 - c * norm2(u.coords);
    const double beta = 1.0 - c * norm2(v.coords);
    require(alpha > 0.0 && beta > 0.0, "poincare_distance: point outside the ball");
    const double diff2 = norm2(sub(u.coords, v.coords));
    const double gamma = 1.0 + 2.0 * c * diff2 / (alpha * beta);
    return std::acosh(gamma) / std::sqrt(c);
}

double euclidean_limit_distance(const Vec& u, const Vec& v) {
    require(u.size() == v.size(), "euclidean_limit_distance: dimension mismatch");
    return 2.0 * norm(sub(u, v));
}

Vec clip_to_ball(Vec x, Curvature c, double eps) {
    require(c.c > 0.0, "clip_to_ball: c must be positive");
    require(eps > 0.0 && eps < 1.0, "clip_to_ball: eps out of range");
    const double sqrtc = std::sqrt(c.c);
    const double r = norm(x);
    if (sqrtc * r > 1.0 - eps) {
        const double scale = (1.0 - eps) / (sqrtc * r);
        for (double& xi : x) xi *= scale;
    }
    return x;
}

BallPoint exp_map_origin(const Vec& v, Curvature c, double eps) {
    require(c.c > 0.0, "exp_map_origin: c must be positive");
    require(all_finite(v), "exp_map_origin: non-finite tangent vector");
    const double sqrtc = std::sqrt(c.c);
    const double r = norm(v);
    Vec out(v.size(), 0.0);
    if (r > 0.0) {
        const double w = sqrtc * r;
        // scale = tanh(w)/w, series-expanded near zero
        const double scale = w < 1e-8 ? 1.0 - w * w / 3.0 : std::tanh(w) / w;
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = scale * v[i];
    }
    return BallPoint{clip_to_ball(std::move(out), c, eps), c};
}

DistanceGrad distance_gradient(const BallPoint& u, const BallPoint& v) {
    check_pair(u, v);
    const double c = u.curvature.c;
    const double alpha = 1.0 - c * norm2(u.coords);
    const double beta = 1.0 - c * norm2(v.coords);
    require(alpha > 0.0 && beta > 0.0, "distance_gradient: point outside the ball");
    const Vec diff = sub(u.coords, v.coords);
    const double diff2 = norm2(diff);
    const double gamma = 1.0 + 2.0 * c * diff2 / (alpha * beta);
    const double denom_sq = gamma * gamma - 1.0;
    if (!(denom_sq > 0.0)) throw gradient_singularity();
    // d = acosh(gamma)/sqrt(c);  dd/dgamma = 1/(sqrt(c) sqrt(gamma^2-1))
    const double dd_dgamma = 1.0 / (std::sqrt(c) * std::sqrt(denom_sq));

    const std::size_t n = diff.size();
    DistanceGrad g{Vec(n), Vec(n)};
    const double a = 4.0 * c / (alpha * beta);
    const double bu = 4.0 * c * c * diff2 / (alpha * alpha * beta);
    const double bv = 4.0 * c * c * diff2 / (alpha * beta * beta);
    for (std::size_t i = 0; i < n; ++i) {
        g.grad_u[i] = dd_dgamma * (a * diff[i] + bu * u.coords[i]);
        g.grad_v[i] = dd_dgamma * (-a * diff[i] + bv * v.coords[i]);
    }
    return g;
}

DistanceGrad euclidean_limit_distance_gradient(const Vec& u, const Vec& v) {
    require(u.size() == v.size(), "euclidean_limit_distance_gradient: dimension mismatch");
    const Vec diff = sub(u, v);
    const double r = norm(diff);
    if (!(r > 0.0)) throw gradient_singularity();
    DistanceGrad g{Vec(u.size()), Vec(u.size())};
    for (std::size_t i = 0; i < u.size(); ++i) {
        g.grad_u[i] = 2.0 * diff[i] / r;
        g.grad_v[i] = -2.0 * diff[i] / r;
    }
    return g;
}

Vec exp_map_origin_backward(const Vec& v, Curvature c, const Vec& grad_out) {
    require(v.size() == grad_out.size(), "exp_map_origin_backward: dimension mismatch");
    require(c.c > 0.0, "exp_map_origin_backward: c must be positive");
    const double sqrtc = std::sqrt(c.c);
    const double r = norm(v);
    const double w = sqrtc * r;
    double scale, dscale_over_r;  // s(r) and s'(r)/r
    if (w < 1e-4) {
        scale = 1.0 - w * w / 3.0;
        dscale_over_r = -2.0 * c.c / 3.0;
    } else {
        const double th = std::tanh(w);
        const double sech2 = 1.0 - th * th;
        scale = th / w;
        // s'(r) = sqrt(c) (w sech^2 w - tanh w) / w^2 ; divide by r
        dscale_over_r = c.c * (w * sech2 - th) / (w * w * w);
    }
    const double proj = dot(v, grad_out);
    Vec grad_in(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        grad_in[i] = scale * grad_out[i] + dscale_over_r * proj * v[i];
    return grad_in;
}

Vec clip_to_ball_backward(const Vec& x, Curvature c, double eps, const Vec& grad_out) {
    require(x.size() == grad_out.size(), "clip_to_ball_backward: dimension mismatch");
    const double sqrtc = std::sqrt(c.c);
    const double r = norm(x);
    if (sqrtc * r <= 1.0 - eps) return grad_out;
    const double scale = (1.0 - eps) / (sqrtc * r);
    const double proj = dot(x, grad_out) / (r * r);
    Vec grad_in(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        grad_in[i] = scale * (grad_out[i] - proj * x[i]);
    return grad_in;
}

}  // namespace opvlm
