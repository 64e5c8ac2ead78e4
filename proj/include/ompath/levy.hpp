#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "ompath/error.hpp"
#include "ompath/rng.hpp"

namespace ompath {

/// Coefficients (c+, c-) of the Levy density
/// nu(dx) = c+ x^{-1-alpha} 1{x>0} dx + c- |x|^{-1-alpha} 1{x<0} dx.
struct StableCoefficients {
    double c_plus = 0.0;
    double c_minus = 0.0;
};

/// Maps S_alpha(sigma, beta, .) with alpha in (0,1) to its Levy density.
///
/// Uses c+ + c- = sigma^alpha * alpha (1 - alpha) / (Gamma(2 - alpha) cos(pi alpha / 2))
/// and c+- = (c+ + c-) (1 +- beta) / 2, which reproduces the characteristic
/// function exp(-sigma^alpha |t|^alpha (1 - i beta sgn(t) tan(pi alpha / 2)))
/// with no compensating drift.
inline StableCoefficients stable_coeffs(double alpha, double sigma, double beta) {
    if (!(alpha > 0.0)) {
        throw Error(ErrorCode::invalid_parameter, "alpha must be positive");
    }
    if (alpha >= 1.0) {
        throw Error(ErrorCode::bounded_variation, "bounded variation requires alpha < 1");
    }
    if (!(sigma > 0.0)) {
        throw Error(ErrorCode::invalid_parameter, "sigma must be positive");
    }
    if (!(beta >= -1.0 && beta <= 1.0)) {
        throw Error(ErrorCode::invalid_parameter, "beta must lie in [-1, 1]");
    }
    const double total = std::pow(sigma, alpha) * alpha * (1.0 - alpha) /
                         (std::tgamma(2.0 - alpha) * std::cos(std::numbers::pi * alpha / 2.0));
    return {total * (1.0 + beta) / 2.0, total * (1.0 - beta) / 2.0};
}

/// One coordinate of the jump noise: an alpha-stable Levy process, or nothing.
struct StableComponent {
    double alpha = 0.0;
    double sigma = 0.0;
    double beta = 0.0;
    double mu = 0.0;
    /// NaN when alpha >= 1 (no bounded-variation density convention).
    double c_plus = 0.0;
    double c_minus = 0.0;
    bool is_null = true;

    static StableComponent none() { return {}; }

    /// alpha in (0, 2], alpha != 1. Components with alpha >= 1 can be built
    /// (so they can be reported by validation) but fail the bounded-variation gate.
    static StableComponent stable(double alpha, double sigma, double beta, double mu = 0.0) {
        if (!(alpha > 0.0 && alpha <= 2.0)) {
            throw Error(ErrorCode::invalid_parameter, "alpha must lie in (0, 2]");
        }
        if (alpha == 1.0) {
            throw Error(ErrorCode::invalid_parameter, "alpha = 1 is not supported");
        }
        if (!(sigma > 0.0)) {
            throw Error(ErrorCode::invalid_parameter, "sigma must be positive");
        }
        if (!(beta >= -1.0 && beta <= 1.0)) {
            throw Error(ErrorCode::invalid_parameter, "beta must lie in [-1, 1]");
        }
        if (!std::isfinite(mu)) {
            throw Error(ErrorCode::invalid_parameter, "mu must be finite");
        }
        StableComponent c;
        c.alpha = alpha;
        c.sigma = sigma;
        c.beta = beta;
        c.mu = mu;
        c.is_null = false;
        if (alpha < 1.0) {
            const auto coeffs = stable_coeffs(alpha, sigma, beta);
            c.c_plus = coeffs.c_plus;
            c.c_minus = coeffs.c_minus;
        } else {
            c.c_plus = std::numeric_limits<double>::quiet_NaN();
            c.c_minus = std::numeric_limits<double>::quiet_NaN();
        }
        return c;
    }

    /// Density given directly by its coefficients; beta is derived from them.
    static StableComponent from_density(double alpha, double c_plus, double c_minus) {
        if (!(alpha > 0.0 && alpha < 1.0)) {
            throw Error(ErrorCode::bounded_variation, "bounded variation requires alpha < 1");
        }
        if (!(c_plus >= 0.0 && c_minus >= 0.0) || c_plus + c_minus <= 0.0) {
            throw Error(ErrorCode::invalid_parameter, "density coefficients must be non-negative and not both zero");
        }
        const double total = c_plus + c_minus;
        const double unit = alpha * (1.0 - alpha) /
                            (std::tgamma(2.0 - alpha) * std::cos(std::numbers::pi * alpha / 2.0));
        StableComponent c;
        c.alpha = alpha;
        c.sigma = std::pow(total / unit, 1.0 / alpha);
        c.beta = (c_plus - c_minus) / total;
        c.c_plus = c_plus;
        c.c_minus = c_minus;
        c.is_null = false;
        return c;
    }
};

/// True iff the component has no jumps or its small jumps have finite first moment.
inline bool check_bounded_variation(const StableComponent& component) {
    return component.is_null || component.alpha < 1.0;
}

/// Small-jump mean, per coordinate, with the quadrature cross-check attached.
struct EtaVector {
    Eigen::VectorXd value;
    Eigen::VectorXd analytic;
    Eigen::VectorXd quadrature;
    Eigen::VectorXd quadrature_error;
};

namespace detail {

/// int_0^1 xi * c xi^{-1-alpha} dxi by adaptive Gauss-Kronrod after xi = u^{1/(1-alpha)},
/// which removes the endpoint singularity.
inline std::pair<double, double> small_jump_moment_quadrature(double alpha, double c) {
    if (c == 0.0) {
        return {0.0, 0.0};
    }
    const double p = 1.0 / (1.0 - alpha);
    auto integrand = [&](double u) {
        if (u <= 0.0) {
            u = std::numeric_limits<double>::min();
        }
        const double xi = std::pow(u, p);
        const double density = c * std::pow(xi, -1.0 - alpha);
        const double dxi_du = p * std::pow(u, p - 1.0);
        return xi * density * dxi_du;
    };
    double error = 0.0;
    const double value = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
        integrand, 0.0, 1.0, 15, 1e-12, &error);
    return {value, error};
}

}  // namespace detail

/// eta = int_{|xi|<1} xi nu(dxi), one entry per coordinate.
inline EtaVector eta(std::span<const StableComponent> components) {
    const auto d = static_cast<Eigen::Index>(components.size());
    EtaVector out{Eigen::VectorXd::Zero(d), Eigen::VectorXd::Zero(d), Eigen::VectorXd::Zero(d),
                  Eigen::VectorXd::Zero(d)};
    for (Eigen::Index j = 0; j < d; ++j) {
        const auto& c = components[static_cast<std::size_t>(j)];
        if (c.is_null) {
            continue;
        }
        if (!check_bounded_variation(c)) {
            throw Error(ErrorCode::bounded_variation, "bounded variation requires alpha < 1 (coordinate " +
                                                          std::to_string(j + 1) + ")");
        }
        out.analytic[j] = (c.c_plus - c.c_minus) / (1.0 - c.alpha);
        const auto [plus, plus_err] = detail::small_jump_moment_quadrature(c.alpha, c.c_plus);
        const auto [minus, minus_err] = detail::small_jump_moment_quadrature(c.alpha, c.c_minus);
        out.quadrature[j] = plus - minus;
        out.quadrature_error[j] = plus_err + minus_err;
    }
    out.value = out.analytic;
    return out;
}

inline EtaVector eta(const std::vector<StableComponent>& components) {
    return eta(std::span<const StableComponent>(components));
}

/// Standard S_alpha(1, beta, 0) variate by the Chambers-Mallows-Stuck transform.
inline double standard_stable_variate(double alpha, double beta, Rng& rng) {
    const double half_pi = std::numbers::pi / 2.0;
    const double v = rng.uniform(-half_pi, half_pi);
    const double w = rng.exponential();
    const double t = beta * std::tan(half_pi * alpha);
    const double shift = std::atan(t) / alpha;
    const double scale = std::pow(1.0 + t * t, 1.0 / (2.0 * alpha));
    const double a = alpha * (v + shift);
    return scale * std::sin(a) / std::pow(std::cos(v), 1.0 / alpha) *
           std::pow(std::cos(v - a) / w, (1.0 - alpha) / alpha);
}

/// Increment of the Levy process over a step dt: stable with scale sigma dt^{1/alpha}, plus mu dt.
inline double sample_stable(const StableComponent& component, double dt, Rng& rng) {
    if (component.is_null) {
        throw Error(ErrorCode::invalid_parameter, "cannot sample a null component");
    }
    if (!(dt > 0.0)) {
        throw Error(ErrorCode::invalid_parameter, "dt must be positive");
    }
    const double x = standard_stable_variate(component.alpha, component.beta, rng);
    return component.sigma * std::pow(dt, 1.0 / component.alpha) * x + component.mu * dt;
}

}  // namespace ompath
