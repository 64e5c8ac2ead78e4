#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ompath/action.hpp"
#include "ompath/euler_lagrange.hpp"
#include "ompath/model.hpp"
#include "ompath/path.hpp"

namespace ompath {

struct ShootingConfig {
    int steps = 1000;
    double tolerance = 1e-10;
    int max_iterations = 50;
    double fd_step = 1e-6;
    /// Starting slope; (z1 - z0) / T when empty.
    std::optional<Vec> initial_velocity;

    void validate() const {
        if (steps < 10) {
            throw Error(ErrorCode::invalid_parameter, "shooting needs at least 10 integration steps");
        }
        if (!(tolerance > 0.0) || !(fd_step > 0.0) || max_iterations < 1) {
            throw Error(ErrorCode::invalid_parameter, "shooting tolerances must be positive");
        }
    }
};

struct MinimizerConfig {
    int intervals = 400;
    int max_iterations = 200000;
    /// Stop when sqrt(g^T P^{-1} g) falls below this, P the kinetic preconditioner.
    double gradient_tolerance = 1e-8;

    void validate() const {
        if (intervals < 8) {
            throw Error(ErrorCode::invalid_parameter, "action minimization needs at least 8 intervals");
        }
        if (max_iterations < 1 || !(gradient_tolerance > 0.0)) {
            throw Error(ErrorCode::invalid_parameter, "minimizer limits must be positive");
        }
    }
};

struct SolveResult {
    std::string method;
    Path path;
    bool converged = false;
    bool diverged = false;
    double boundary_mismatch_norm = std::numeric_limits<double>::quiet_NaN();
    double el_residual_max = std::numeric_limits<double>::quiet_NaN();
    double action = std::numeric_limits<double>::quiet_NaN();
    int iterations = 0;
    /// Final gradient norm (minimizer) or initial slope (shooting) diagnostics.
    double gradient_norm = std::numeric_limits<double>::quiet_NaN();
    Vec initial_velocity;
    std::vector<std::string> warnings;
};

/// Positions and velocities of an integrated trajectory.
struct Trajectory {
    double horizon = 0.0;
    Mat positions;
    Mat velocities;

    Path path() const { return Path(horizon, positions); }
};

/// Fixed-step classical RK4 for (z, v)' = (v, g(z)).
inline Trajectory integrate_second_order(const SecondOrderField& field, const Vec& z0, const Vec& v0,
                                         double horizon, int steps) {
    if (steps < 1 || !(horizon > 0.0)) {
        throw Error(ErrorCode::invalid_parameter, "integration needs n >= 1 and T > 0");
    }
    const int d = field.dimension;
    const double h = horizon / steps;
    Trajectory out{horizon, Mat(steps + 1, d), Mat(steps + 1, d)};
    Vec z = z0, v = v0;
    out.positions.row(0) = z.transpose();
    out.velocities.row(0) = v.transpose();
    for (int k = 0; k < steps; ++k) {
        const Vec a1 = field(z);
        const Vec z2 = z + 0.5 * h * v;
        const Vec v2 = v + 0.5 * h * a1;
        const Vec a2 = field(z2);
        const Vec z3 = z + 0.5 * h * v2;
        const Vec v3 = v + 0.5 * h * a2;
        const Vec a3 = field(z3);
        const Vec z4 = z + h * v3;
        const Vec v4 = v + h * a3;
        const Vec a4 = field(z4);
        z += (h / 6.0) * (v + 2.0 * v2 + 2.0 * v3 + v4);
        v += (h / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
        if (!z.allFinite() || !v.allFinite()) {
            const double t = h * (k + 1);
            throw BlowUpError(t, "trajectory blew up at t = " + std::to_string(t));
        }
        out.positions.row(k + 1) = z.transpose();
        out.velocities.row(k + 1) = v.transpose();
    }
    return out;
}

/// Single shooting on v0 -> z(T; z0, v0) - z1 with a finite-difference Newton
/// Jacobian and step halving (at most 20 halvings per iteration). Does not
/// throw on failure; the best iterate is returned with converged = false.
inline SolveResult shoot(const SecondOrderField& field, const BoundaryPair& boundary, const ShootingConfig& cfg) {
    cfg.validate();
    boundary.validate(field.dimension);
    const int d = field.dimension;
    const double T = boundary.horizon;

    auto mismatch = [&](const Vec& v, Trajectory* keep) -> std::optional<Vec> {
        try {
            Trajectory tr = integrate_second_order(field, boundary.z0, v, T, cfg.steps);
            Vec miss = tr.positions.row(cfg.steps).transpose() - boundary.z1;
            if (keep) {
                *keep = std::move(tr);
            }
            return miss;
        } catch (const BlowUpError&) {
            return std::nullopt;
        }
    };

    Vec v = cfg.initial_velocity ? *cfg.initial_velocity : Vec((boundary.z1 - boundary.z0) / T);
    if (v.size() != d) {
        throw Error(ErrorCode::invalid_parameter, "initial velocity dimension mismatch");
    }

    SolveResult result{"shooting", Path::straight_line(boundary.z0, boundary.z1, T, cfg.steps)};
    result.warnings = field.warnings;
    Trajectory best;
    auto miss = mismatch(v, &best);
    if (!miss) {
        result.initial_velocity = v;
        result.diverged = true;
        result.warnings.push_back("integration blew up from the initial slope");
        return result;
    }
    Vec residual = *miss;
    int it = 0;
    for (; it < cfg.max_iterations && residual.norm() > cfg.tolerance; ++it) {
        Mat jac(d, d);
        bool ok = true;
        for (int j = 0; j < d && ok; ++j) {
            Vec vp = v;
            const double h = cfg.fd_step * std::max(1.0, std::abs(v[j]));
            vp[j] += h;
            auto fp = mismatch(vp, nullptr);
            if (!fp) {
                ok = false;
                break;
            }
            jac.col(j) = (*fp - residual) / h;
        }
        if (!ok) {
            break;
        }
        const Vec delta = jac.colPivHouseholderQr().solve(-residual);
        if (!delta.allFinite()) {
            break;
        }
        bool accepted = false;
        double lambda = 1.0;
        for (int halving = 0; halving <= 20; ++halving, lambda *= 0.5) {
            const Vec trial = v + lambda * delta;
            Trajectory tr;
            auto ft = mismatch(trial, &tr);
            if (ft && ft->norm() < residual.norm()) {
                v = trial;
                residual = *ft;
                best = std::move(tr);
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            break;
        }
    }
    result.iterations = it;
    result.path = best.path();
    result.initial_velocity = v;
    result.boundary_mismatch_norm = residual.norm();
    result.converged = residual.norm() <= cfg.tolerance;
    if (result.converged) {
        // The remaining mismatch is below tolerance and recorded above; pin
        // the endpoint so every solver reports identical boundary values.
        Mat pinned = result.path.values();
        pinned.row(cfg.steps) = boundary.z1.transpose();
        result.path = Path(T, std::move(pinned));
    }
    return result;
}

/// Max over interior nodes of |el_residual| with finite-difference zdot, zddot.
inline double el_diagnostics(const SystemSpec& system, const Path& path, const Vec& eta) {
    if (path.intervals() < 4) {
        throw Error(ErrorCode::invalid_parameter, "E-L diagnostics need at least 4 intervals");
    }
    const Mat v = path.velocities();
    const Mat a = path.accelerations();
    double worst = 0.0;
    for (int k = 1; k < path.intervals(); ++k) {
        const Vec r = el_residual(system, path.values().row(k).transpose(), v.row(k).transpose(),
                                  a.row(k).transpose(), eta);
        worst = std::max(worst, r.norm());
    }
    return worst;
}

/// Shooting with action and E-L diagnostics filled from `system`.
inline SolveResult shoot(const SystemSpec& system, const BoundaryPair& boundary, const Vec& eta,
                         const ShootingConfig& cfg) {
    boundary.validate(system.dimension());
    const Vec mid = 0.5 * (boundary.z0 + boundary.z1);
    const auto field = make_second_order_field(system, eta, {boundary.z0, mid, boundary.z1});
    SolveResult r = shoot(field, boundary, cfg);
    r.action = action_of_path(system, r.path, eta).action;
    r.el_residual_max = el_diagnostics(system, r.path, eta);
    return r;
}

/// Action discretized on staggered velocities, with Simpson's rule on each segment:
///   I_h = sum_k h/6 [L(z_k, d_k) + 4 L(m_k, d_k) + L(z_{k+1}, d_k)],
///   d_k = (z_{k+1} - z_k) / h,  m_k = (z_k + z_{k+1}) / 2.
///
/// Unlike central-difference velocities this form penalizes grid-scale
/// oscillation, so it is bounded below whenever the continuum action is.
/// Simpson's rule integrates the cross term f^T M d exactly for cubic drifts,
/// so for gradient-type systems that term telescopes and the discrete action
/// keeps the time-reversal symmetry of the continuum one.
class StaggeredAction {
public:
    StaggeredAction(const SystemSpec& system, Vec eta, double horizon, int intervals)
        : system_(system),
          eta_(std::move(eta)),
          h_(horizon / intervals),
          n_(intervals),
          d_(system.dimension()),
          metric_(system.noise().metric()),
          nodes_(intervals + 1, d_),
          mids_(intervals, d_) {}

    int intervals() const noexcept { return n_; }
    double step() const noexcept { return h_; }

    /// Value, and gradient w.r.t. every node when `grad` is non-null.
    double evaluate(const Mat& z, Mat* grad) {
        for (int k = 0; k <= n_; ++k) {
            nodes_.fill(system_, k, z.row(k).transpose(), grad != nullptr);
        }
        for (int k = 0; k < n_; ++k) {
            mids_.fill(system_, k, 0.5 * (z.row(k) + z.row(k + 1)).transpose(), grad != nullptr);
        }
        if (grad) {
            grad->setZero(n_ + 1, d_);
        }
        static constexpr double weight[3] = {1.0 / 6.0, 4.0 / 6.0, 1.0 / 6.0};
        static constexpr double left_share[3] = {1.0, 0.5, 0.0};
        double total = 0.0;
        Vec slope(d_), r(d_), mr(d_), dv(d_), gz(d_);
        for (int k = 0; k < n_; ++k) {
            slope = (z.row(k + 1) - z.row(k)).transpose() / h_;
            dv.setZero();
            for (int p = 0; p < 3; ++p) {
                const Samples& at = p == 1 ? mids_ : nodes_;
                const int i = p == 2 ? k + 1 : k;
                r = at.f.row(i).transpose() - slope - eta_;
                mr = metric_ * r;
                total += weight[p] * h_ * (0.5 * r.dot(mr) + 0.5 * at.trace[i]);
                if (grad) {
                    gz = weight[p] * h_ *
                         (at.jac[static_cast<std::size_t>(i)].transpose() * mr + 0.5 * at.s.row(i).transpose());
                    grad->row(k) += left_share[p] * gz.transpose();
                    grad->row(k + 1) += (1.0 - left_share[p]) * gz.transpose();
                    dv -= weight[p] * mr;
                }
            }
            if (grad) {
                // d(slope)/dz_{k+1} = 1/h, d(slope)/dz_k = -1/h.
                grad->row(k + 1) += dv.transpose();
                grad->row(k) -= dv.transpose();
            }
        }
        return total;
    }

private:
    /// Drift, Jacobian, trace and trace gradient at a set of points.
    struct Samples {
        Samples(int count, int d) : f(count, d), s(count, d), trace(count), jac(static_cast<std::size_t>(count), Mat(d, d)) {}

        void fill(const SystemSpec& system, int i, const Vec& x, bool with_second) {
            Vec v(x.size());
            Mat& j = jac[static_cast<std::size_t>(i)];
            system.drift().eval(x, v);
            f.row(i) = v.transpose();
            system.drift().jacobian(x, j);
            trace[i] = j.trace();
            if (with_second) {
                system.drift().second_derivs(x, v);
                s.row(i) = v.transpose();
            }
        }

        Mat f;
        Mat s;
        Vec trace;
        std::vector<Mat> jac;
    };

    const SystemSpec& system_;
    Vec eta_;
    double h_;
    int n_;
    int d_;
    Mat metric_;
    Samples nodes_;
    Samples mids_;
};

namespace detail {

/// Applies the inverse of (1/h) K (x) M to the interior rows of `g`, where K is
/// the second-difference matrix tridiag(-1, 2, -1). This is the Hessian of the
/// kinetic part of the staggered action, so preconditioned steps are O(1).
inline Mat apply_inverse_kinetic(const Mat& g, double h, const Mat& metric_inverse) {
    const Eigen::Index n = g.rows() - 1;
    Mat out = Mat::Zero(g.rows(), g.cols());
    const Eigen::Index m = n - 1;
    if (m <= 0) {
        return out;
    }
    // Thomas algorithm; K's Cholesky-like pivots are (k+1)/k.
    Vec c(m);
    Mat rhs = h * g.middleRows(1, m);
    double diag = 2.0;
    c[0] = -1.0 / diag;
    rhs.row(0) /= diag;
    for (Eigen::Index k = 1; k < m; ++k) {
        diag = 2.0 + c[k - 1];
        c[k] = -1.0 / diag;
        rhs.row(k) = (rhs.row(k) + rhs.row(k - 1)) / diag;
    }
    for (Eigen::Index k = m - 2; k >= 0; --k) {
        rhs.row(k) -= c[k] * rhs.row(k + 1);
    }
    out.middleRows(1, m) = rhs * metric_inverse;
    return out;
}

/// s^T ((1/h) K (x) M) s for `s` vanishing at both ends.
inline double kinetic_norm2(const Mat& s, double h, const Mat& metric) {
    double total = 0.0;
    for (Eigen::Index k = 0; k + 1 < s.rows(); ++k) {
        const Vec ds = (s.row(k + 1) - s.row(k)).transpose();
        total += ds.dot(metric * ds);
    }
    return total / h;
}

}  // namespace detail

/// Direct minimization of the discretized action over interior nodes by
/// Barzilai-Borwein descent with nonmonotone backtracking, preconditioned by
/// the kinetic-energy Hessian. Boundary nodes are pinned; the returned path is
/// the best iterate seen, so its discrete action never exceeds that of the
/// initialization.
inline SolveResult minimize_action(const SystemSpec& system, const BoundaryPair& boundary, const Vec& eta,
                                   const MinimizerConfig& cfg, const std::optional<Path>& init = std::nullopt) {
    cfg.validate();
    boundary.validate(system.dimension());
    const int n = cfg.intervals;
    const double T = boundary.horizon;
    Path start = init ? (init->intervals() == n ? *init : init->resampled(n))
                      : Path::straight_line(boundary.z0, boundary.z1, T, n);
    if (start.dimension() != system.dimension()) {
        throw Error(ErrorCode::invalid_parameter, "initial path dimension mismatch");
    }
    Mat z = start.values();
    z.row(0) = boundary.z0.transpose();
    z.row(n) = boundary.z1.transpose();

    StaggeredAction objective(system, eta, T, n);
    const Mat& b = system.noise().matrix();
    const Mat metric_inverse = b * b.transpose();
    Mat grad, trial_grad;
    double value = objective.evaluate(z, &grad);
    auto pin = [n](Mat& g) {
        g.row(0).setZero();
        g.row(n).setZero();
    };
    pin(grad);

    SolveResult result{"minimization", Path(T, z)};
    result.boundary_mismatch_norm = 0.0;
    if (!std::isfinite(value) || !grad.allFinite()) {
        result.diverged = true;
        result.warnings.push_back("non-finite action at the initial path");
        return result;
    }

    // Gradients are measured in the dual norm of the preconditioner,
    // sqrt(g^T P^{-1} g), which does not shrink as the grid is refined.
    Mat direction = detail::apply_inverse_kinetic(grad, objective.step(), metric_inverse);
    double decrease = (grad.array() * direction.array()).sum();
    Mat best = z;
    double best_value = value;
    double best_grad_norm = std::sqrt(std::max(0.0, decrease));
    std::deque<double> recent{value};
    constexpr std::size_t memory = 10;
    constexpr double armijo = 1e-4;
    double alpha = 1.0;
    int it = 0;
    for (; it < cfg.max_iterations; ++it) {
        if (std::sqrt(std::max(0.0, decrease)) < cfg.gradient_tolerance) {
            // Every accepted value lies below the initial one, so the
            // converged iterate is returned even if an earlier one is lower
            // by rounding.
            best = z;
            best_grad_norm = std::sqrt(std::max(0.0, decrease));
            break;
        }
        const double reference = *std::max_element(recent.begin(), recent.end());
        Mat trial;
        double trial_value = 0.0;
        bool accepted = false;
        for (int tries = 0; tries < 60; ++tries, alpha *= 0.5) {
            trial = z - alpha * direction;
            trial_value = objective.evaluate(trial, &trial_grad);
            if (std::isfinite(trial_value) && trial_value <= reference - armijo * alpha * decrease) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            break;
        }
        pin(trial_grad);
        const Mat s = trial - z;
        const Mat y = trial_grad - grad;
        z = std::move(trial);
        grad = trial_grad;
        value = trial_value;
        recent.push_back(value);
        if (recent.size() > memory) {
            recent.pop_front();
        }
        direction = detail::apply_inverse_kinetic(grad, objective.step(), metric_inverse);
        decrease = (grad.array() * direction.array()).sum();
        const double gn = std::sqrt(std::max(0.0, decrease));
        if (value < best_value || (value == best_value && gn < best_grad_norm)) {
            best = z;
            best_value = value;
            best_grad_norm = gn;
        }
        // BB step measured in the preconditioner's metric: s^T P s / s^T y.
        const double sy = (s.array() * y.array()).sum();
        const double sps = detail::kinetic_norm2(s, objective.step(), system.noise().metric());
        alpha = sy > 0.0 ? sps / sy : 2.0 * alpha;
        alpha = std::clamp(alpha, 1e-12, 1e6);
    }

    result.iterations = it;
    result.path = Path(T, best);
    result.gradient_norm = best_grad_norm;
    result.converged = best_grad_norm < cfg.gradient_tolerance;
    result.action = action_of_path(system, result.path, eta).action;
    result.el_residual_max = el_diagnostics(system, result.path, eta);
    return result;
}

/// Both solvers on one boundary value problem.
struct TransitionSolution {
    SolveResult shooting;
    SolveResult minimization;
    bool shooting_used_fallback = false;
};

/// Shoots from the straight-line slope; if that fails, reshoots from the
/// initial slope of the direct minimizer's path.
inline TransitionSolution solve_transition(const SystemSpec& system, const BoundaryPair& boundary, const Vec& eta,
                                           const ShootingConfig& shooting, const MinimizerConfig& minimizer) {
    TransitionSolution out{shoot(system, boundary, eta, shooting),
                           minimize_action(system, boundary, eta, minimizer)};
    if (!out.shooting.converged && !out.minimization.diverged) {
        ShootingConfig retry = shooting;
        retry.initial_velocity = out.minimization.path.velocities().row(0).transpose();
        SolveResult second = shoot(system, boundary, eta, retry);
        if (second.converged || second.boundary_mismatch_norm < out.shooting.boundary_mismatch_norm) {
            second.warnings.insert(second.warnings.begin(), "restarted from the minimizer's initial slope");
            out.shooting = std::move(second);
            out.shooting_used_fallback = true;
        }
    }
    return out;
}

}  // namespace ompath
