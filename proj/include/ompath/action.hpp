#pragma once

#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ompath/model.hpp"
#include "ompath/path.hpp"

namespace ompath {

/// The two pieces of the Onsager-Machlup Lagrangian at one point.
struct LagrangianTerms {
    double quadratic = 0.0;   ///< 1/2 |B^{-1}(f(z) - zdot - eta)|^2
    double divergence = 0.0;  ///< 1/2 tr Df(z)

    double total() const { return quadratic + divergence; }
};

inline LagrangianTerms lagrangian_terms(const SystemSpec& system, ConstVecRef z, ConstVecRef zdot,
                                        ConstVecRef eta) {
    const Vec r = system.noise().inverse() * (system.drift()(z) - zdot - eta);
    return {0.5 * r.squaredNorm(), 0.5 * system.drift().jacobian(z).trace()};
}

/// L(z, zdot) = 1/2 |B^{-1}(f(z) - zdot - eta)|^2 + 1/2 tr Df(z).
///
/// This is the non-negative-quadratic sign convention; the most probable
/// path minimizes the integral of L.
inline double lagrangian(const SystemSpec& system, ConstVecRef z, ConstVecRef zdot, ConstVecRef eta) {
    return lagrangian_terms(system, z, zdot, eta).total();
}

struct ActionReport {
    double action = 0.0;
    double quadratic_action = 0.0;
    Vec lagrangian;  ///< per node
    std::string rule = "composite-trapezoid";
    int intervals = 0;
};

/// Trapezoid rule for the action along `path`, using its central-difference velocities.
inline ActionReport action_of_path(const SystemSpec& system, const Path& path, ConstVecRef eta) {
    if (path.dimension() != system.dimension() || eta.size() != system.dimension()) {
        throw Error(ErrorCode::invalid_parameter, "path/eta dimension does not match the system");
    }
    const int n = path.intervals();
    const double h = path.step();
    const Mat v = path.velocities();
    ActionReport report;
    report.intervals = n;
    report.lagrangian.resize(n + 1);
    for (int k = 0; k <= n; ++k) {
        const double w = (k == 0 || k == n) ? 0.5 * h : h;
        const auto terms = lagrangian_terms(system, path.values().row(k).transpose(), v.row(k).transpose(), eta);
        report.lagrangian[k] = terms.total();
        report.action += w * terms.total();
        report.quadratic_action += w * terms.quadratic;
    }
    return report;
}

struct SymmetryReport {
    bool pass = true;
    double worst_asymmetry = 0.0;
    Vec worst_point;
    double tolerance = 0.0;  ///< threshold applied at the worst point
};

enum class SymmetryTolerance { absolute, relative };

/// Asymmetry of M(x) = (B^{-1})^T B^{-1} Df(x), the gradient of g = (B^{-1})^T B^{-1} f.
inline double poincare_asymmetry(const SystemSpec& system, ConstVecRef x, double* scale = nullptr) {
    const Mat m = system.noise().metric() * system.drift().jacobian(x);
    if (scale) {
        *scale = m.cwiseAbs().rowwise().sum().maxCoeff();
    }
    return (m - m.transpose()).cwiseAbs().maxCoeff();
}

/// Checks that grad g is symmetric at every probe, so that g has a primitive.
///
/// With `relative`, the threshold at x is tol * (1 + ||M(x)||_inf).
inline SymmetryReport check_poincare_symmetry(const SystemSpec& system, std::span<const Vec> probes, double tol,
                                              SymmetryTolerance mode = SymmetryTolerance::absolute) {
    if (probes.empty()) {
        throw Error(ErrorCode::invalid_parameter, "symmetry check needs at least one probe");
    }
    if (!(tol > 0.0)) {
        throw Error(ErrorCode::invalid_parameter, "symmetry tolerance must be positive");
    }
    SymmetryReport report;
    double worst_excess = -std::numeric_limits<double>::infinity();
    for (const auto& x : probes) {
        double scale = 0.0;
        const double a = poincare_asymmetry(system, x, &scale);
        const double threshold = mode == SymmetryTolerance::relative ? tol * (1.0 + scale) : tol;
        // Ties go to the lexicographically smallest point, so probe order is irrelevant.
        const bool worse = a > report.worst_asymmetry || report.worst_point.size() == 0 ||
                           (a == report.worst_asymmetry &&
                            std::lexicographical_compare(x.begin(), x.end(), report.worst_point.begin(),
                                                         report.worst_point.end()));
        if (worse) {
            report.worst_asymmetry = a;
            report.worst_point = x;
            report.tolerance = threshold;
        }
        worst_excess = std::max(worst_excess, a - threshold);
    }
    report.pass = worst_excess <= 0.0;
    return report;
}

inline SymmetryReport check_poincare_symmetry(const SystemSpec& system, const std::vector<Vec>& probes,
                                              double tol,
                                              SymmetryTolerance mode = SymmetryTolerance::absolute) {
    return check_poincare_symmetry(system, std::span<const Vec>(probes), tol, mode);
}

/// Halton points in the box [lo, hi]^d (first `count` points, index starting at 1).
inline std::vector<Vec> halton_probes(int dimension, int count, double lo, double hi) {
    static constexpr int primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};
    if (dimension > static_cast<int>(std::size(primes))) {
        throw Error(ErrorCode::invalid_parameter, "Halton probes support at most 16 dimensions");
    }
    std::vector<Vec> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 1; i <= count; ++i) {
        Vec p(dimension);
        for (int j = 0; j < dimension; ++j) {
            double f = 1.0, r = 0.0;
            for (int k = i; k > 0; k /= primes[j]) {
                f /= primes[j];
                r += f * (k % primes[j]);
            }
            p[j] = lo + (hi - lo) * r;
        }
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace ompath
