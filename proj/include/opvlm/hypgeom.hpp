#pragma once

#include <stdexcept>

#include "opvlm/matrix.hpp"

namespace opvlm {

// Thrown where the metric gradient is undefined (coincident points).
struct gradient_singularity : std::runtime_error {
    gradient_singularity() : std::runtime_error("poincare distance gradient is singular at u = v") {}
};

struct Curvature {
    double c = 1.0;

    Curvature() = default;
    explicit Curvature(double value) : c(value) {
        require(std::isfinite(value) && value >= 0.0, "Curvature: c must be finite and >= 0");
    }
    bool euclidean() const { return c == 0.0; }
};

inline constexpr double kDefaultBallEps = 1e-5;

// Point strictly inside the radius-1/sqrt(c) Poincare ball.
struct BallPoint {
    Vec coords;
    Curvature curvature;
};

// (1/sqrt(c)) * arcosh(1 + 2c|u-v|^2 / ((1-c|u|^2)(1-c|v|^2))); requires c > 0.
double poincare_distance(const BallPoint& u, const BallPoint& v);

// 2|u-v|, the analytic limit of poincare_distance as c -> 0+.
double euclidean_limit_distance(const Vec& u, const Vec& v);

// Rescale to norm (1-eps)/sqrt(c) when outside; identity otherwise.
Vec clip_to_ball(Vec x, Curvature c, double eps);

// tanh(sqrt(c)|v|) * v / (sqrt(c)|v|), clipped; total on finite input.
BallPoint exp_map_origin(const Vec& v, Curvature c, double eps = kDefaultBallEps);

struct DistanceGrad {
    Vec grad_u;
    Vec grad_v;
};

// Analytic partials of poincare_distance; throws gradient_singularity at u = v.
DistanceGrad distance_gradient(const BallPoint& u, const BallPoint& v);

// Euclidean-limit counterpart: partials of 2|u-v|.
DistanceGrad euclidean_limit_distance_gradient(const Vec& u, const Vec& v);

// VJPs for the projection chain (used by the model backward pass).
// Both take the *input* of the respective forward call.
Vec exp_map_origin_backward(const Vec& v, Curvature c, const Vec& grad_out);
Vec clip_to_ball_backward(const Vec& x, Curvature c, double eps, const Vec& grad_out);

}  // namespace opvlm
