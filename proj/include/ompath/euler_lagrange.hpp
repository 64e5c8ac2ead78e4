#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ompath/action.hpp"
#include "ompath/model.hpp"

namespace ompath {

/// Variational derivative of the action at one point of a path.
///
/// Component i is
///   <B^{-1}[Df zdot - zddot], B^{-1} e_i> + <B^{-1}[f - zdot - eta], B^{-1} df/dz_i>
///     + 1/2 sum_j d^2 f^j / dz_i dz_j,
/// i.e. dL/dz_i - d/dt dL/dzdot_i. It vanishes exactly where (z, zdot, zddot)
/// satisfies the Euler-Lagrange equation of `lagrangian`.
inline Vec el_residual(const SystemSpec& system, ConstVecRef z, ConstVecRef zdot, ConstVecRef zddot,
                       ConstVecRef eta) {
    const Mat& metric = system.noise().metric();
    const Mat jac = system.drift().jacobian(z);
    const Vec r = system.drift()(z) - zdot - eta;
    return metric * (jac * zdot - zddot) + jac.transpose() * (metric * r) +
           0.5 * system.drift().second_derivs(z);
}

/// Right-hand side of the Newton form zddot = g(z) for diagonal B:
///   g_i = sum_j (b_i^2 / b_j^2)(f^j - eta_j) df^j/dz_i + (b_i^2 / 2) sum_j d^2 f^j / dz_i dz_j.
///
/// Valid when (B^{-1})^T B^{-1} Df is symmetric; for non-diagonal B use el_residual.
inline Vec newton_rhs(const SystemSpec& system, ConstVecRef z, ConstVecRef eta) {
    const auto& noise = system.noise();
    if (!noise.is_diagonal()) {
        throw Error(ErrorCode::wrong_reduction,
                    "Newton reduction needs a diagonal noise matrix; use el_residual for general B");
    }
    const Vec b2 = noise.matrix().diagonal().array().square();
    const Mat jac = system.drift().jacobian(z);
    const Vec weighted = (system.drift()(z) - eta).cwiseQuotient(b2);
    return b2.cwiseProduct(jac.transpose() * weighted + 0.5 * system.drift().second_derivs(z));
}

/// Closed-form Maier-Stein (gamma = 1, B = I) Newton right-hand side.
inline Vec maier_stein_rhs(ConstVecRef z, ConstVecRef eta) {
    const double x = z[0], y = z[1];
    const double e1 = eta[0], e2 = eta[1];
    const double x2 = x * x, y2 = y * y;
    Vec g(2);
    g[0] = 3.0 * x2 * x2 * x + 6.0 * x2 * x * y2 - 4.0 * x2 * x + 3.0 * e1 * x2 + x * y2 * y2 +
           2.0 * e2 * x * y - 3.0 * x - e1 + e1 * y2;
    g[1] = 3.0 * x2 * x2 * y + 2.0 * x2 * y2 * y + e2 * x2 + 2.0 * e1 * x * y + e2;
    return g;
}

enum class FieldProvenance { generic_assembly, maier_stein_closed_form, custom };

inline const char* to_string(FieldProvenance p) {
    switch (p) {
        case FieldProvenance::generic_assembly: return "generic-assembly";
        case FieldProvenance::maier_stein_closed_form: return "maier-stein-closed-form";
        case FieldProvenance::custom: return "custom";
    }
    return "unknown";
}

/// zddot = g(z) packaged for the boundary value solvers.
struct SecondOrderField {
    int dimension = 0;
    std::function<Vec(ConstVecRef)> rhs;
    FieldProvenance provenance = FieldProvenance::custom;
    std::vector<std::string> warnings;

    Vec operator()(ConstVecRef z) const { return rhs(z); }
};

/// Warning text if the symmetry hypothesis behind the Newton form fails at z, else empty.
inline std::string symmetry_warning(const SystemSpec& system, ConstVecRef z, double tol = 1e-8) {
    double scale = 0.0;
    const double a = poincare_asymmetry(system, z, &scale);
    if (a <= tol * (1.0 + scale)) {
        return {};
    }
    std::string where;
    char buf[40];
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%s%.6g", i ? ", " : "", z[i]);
        where += buf;
    }
    std::snprintf(buf, sizeof buf, "%.3g", a);
    return "grad g not symmetric at (" + where + "), asymmetry " + buf +
           "; the Newton form is not the Euler-Lagrange equation there";
}

/// Builds the Newton field for `system`, dispatching to the closed form for
/// the gamma = 1 Maier-Stein benchmark with unit noise. `probes` are points
/// where the symmetry hypothesis is checked (warnings only).
inline SecondOrderField make_second_order_field(const SystemSpec& system, const Vec& eta,
                                                const std::vector<Vec>& probes = {}) {
    if (eta.size() != system.dimension()) {
        throw Error(ErrorCode::invalid_parameter, "eta dimension does not match the system");
    }
    SecondOrderField field;
    field.dimension = system.dimension();
    const auto& tag = system.builtin();
    if (tag && tag->name == "maier_stein" && tag->gamma == 1.0 && system.noise().is_identity()) {
        // The location shift enters L only through f - eta.
        const Vec effective = eta - system.location_shift();
        field.rhs = [effective](ConstVecRef z) { return maier_stein_rhs(z, effective); };
        field.provenance = FieldProvenance::maier_stein_closed_form;
    } else {
        if (!system.noise().is_diagonal()) {
            throw Error(ErrorCode::wrong_reduction,
                        "Newton reduction needs a diagonal noise matrix; use el_residual for general B");
        }
        field.rhs = [system, eta](ConstVecRef z) { return newton_rhs(system, z, eta); };
        field.provenance = FieldProvenance::generic_assembly;
    }
    for (const auto& p : probes) {
        if (auto w = symmetry_warning(system, p); !w.empty()) {
            field.warnings.push_back(std::move(w));
        }
    }
    return field;
}

}  // namespace ompath
