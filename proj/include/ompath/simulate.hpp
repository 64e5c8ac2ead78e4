#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ompath/levy.hpp"
#include "ompath/model.hpp"
#include "ompath/path.hpp"
#include "ompath/rng.hpp"

namespace ompath {

/// How the sup-norm tube event is decided between grid nodes.
enum class TubeMonitoring {
    /// Discrete sup over the simulation grid. Biased toward "inside".
    grid,
    /// Grid values plus the Brownian-bridge probability of leaving the tube
    /// between nodes (half-space approximation along the radial direction).
    /// Estimates the continuous-time sup for the diffusive part; jumps are
    /// only seen at the nodes.
    bridge,
};

enum class LargeJumps { keep, drop };

inline const char* to_string(TubeMonitoring m) { return m == TubeMonitoring::grid ? "grid" : "bridge"; }
inline const char* to_string(LargeJumps j) { return j == LargeJumps::keep ? "keep" : "drop"; }

struct SimConfig {
    double dt = 1e-3;
    double horizon = 1.0;
    int paths = 1;
    std::uint64_t seed = 0;
    /// `drop` discards stable increments with |dL| >= 1 (small jumps only).
    LargeJumps large_jumps = LargeJumps::keep;
    TubeMonitoring monitoring = TubeMonitoring::grid;

    int steps() const { return static_cast<int>(std::llround(horizon / dt)); }

    void validate() const {
        if (!(dt > 0.0) || !(horizon > 0.0) || !std::isfinite(horizon)) {
            throw Error(ErrorCode::invalid_parameter, "simulation needs dt > 0 and T > 0");
        }
        if (paths < 1) {
            throw Error(ErrorCode::invalid_parameter, "ensemble size must be at least 1");
        }
        const double ratio = horizon / dt;
        if (std::abs(ratio - std::round(ratio)) > 1e-9 * std::max(1.0, ratio) || std::round(ratio) < 1.0) {
            throw Error(ErrorCode::invalid_parameter, "T / dt must be an integer");
        }
    }
};

/// Paths whose norm exceeds this are stopped and flagged as escaped.
inline constexpr double escape_radius = 1e6;

/// Seed of path `index` in an ensemble with base seed `base`.
inline std::uint64_t path_seed(std::uint64_t base, std::uint64_t index) { return base + index; }

namespace detail {

/// Euler-Maruyama stepping; `visit(k, x)` sees every node and returns false to stop.
/// Returns the step at which the path escaped, or -1.
template <class Visitor>
int run_euler_maruyama(const SystemSpec& system, const SimConfig& cfg, std::uint64_t seed, Visitor&& visit) {
    const int d = system.dimension();
    const int steps = cfg.steps();
    const double dt = cfg.dt;
    const double sqrt_dt = std::sqrt(dt);
    const Mat& b = system.noise().matrix();
    const auto& jumps = system.jump_components();
    const bool has_noise = b.cwiseAbs().maxCoeff() > 0.0;

    Rng rng(seed);
    Vec x = system.x0();
    Vec fx(d), xi(d), dw(d);
    if (!visit(0, x)) {
        return -1;
    }
    for (int k = 0; k < steps; ++k) {
        system.drift().eval(x, fx);
        for (int i = 0; i < d; ++i) {
            xi[i] = rng.normal();
        }
        x += fx * dt;
        if (has_noise) {
            dw.noalias() = b * xi;
            x += sqrt_dt * dw;
        }
        for (int j = 0; j < d; ++j) {
            const auto& c = jumps[static_cast<std::size_t>(j)];
            if (c.is_null) {
                continue;
            }
            double jump = sample_stable(c, dt, rng);
            if (cfg.large_jumps == LargeJumps::drop && std::abs(jump) >= 1.0) {
                jump = 0.0;
            }
            x[j] += jump;
        }
        if (!x.allFinite() || x.norm() > escape_radius) {
            return k + 1;
        }
        if (!visit(k + 1, x)) {
            return -1;
        }
    }
    return -1;
}

inline Mat path_on_grid(const Path& phi, int steps, double horizon) {
    Mat out(steps + 1, phi.dimension());
    for (int k = 0; k <= steps; ++k) {
        out.row(k) = phi.at(horizon * static_cast<double>(k) / steps).transpose();
    }
    return out;
}

/// Probability that a Brownian bridge with radial variance rate `var` leaves
/// the ball of radius eps between distances r0 and r1 over dt.
inline double bridge_exit_probability(double eps, double r0, double r1, double var, double dt) {
    if (!(var > 0.0)) {
        return 0.0;
    }
    return std::exp(-2.0 * (eps - r0) * (eps - r1) / (var * dt));
}

/// Sequential tube test along one path.
class TubeTracker {
public:
    TubeTracker(const Mat& phi_grid, double eps, TubeMonitoring mode, const Mat& b, double dt)
        : phi_(phi_grid), eps_(eps), mode_(mode), bbt_(b * b.transpose()), dt_(dt) {}

    /// Returns false once the path is certainly outside.
    bool visit(int k, const Vec& x) {
        const Vec u = x - phi_.row(k).transpose();
        const double r = u.norm();
        if (!(r <= eps_)) {
            weight_ = 0.0;
            return false;
        }
        if (mode_ == TubeMonitoring::bridge && k > 0) {
            const Vec& dir = r >= prev_r_ ? u : prev_u_;
            const double len = std::max(r, prev_r_);
            double var = bbt_.trace() / static_cast<double>(bbt_.rows());
            if (len > 0.0) {
                const Vec n = dir / len;
                var = n.dot(bbt_ * n);
            }
            weight_ *= 1.0 - bridge_exit_probability(eps_, prev_r_, r, var, dt_);
        }
        prev_u_ = u;
        prev_r_ = r;
        return true;
    }

    double weight() const noexcept { return weight_; }

private:
    const Mat& phi_;
    double eps_;
    TubeMonitoring mode_;
    Mat bbt_;
    double dt_;
    Vec prev_u_;
    double prev_r_ = 0.0;
    double weight_ = 1.0;
};

}  // namespace detail

/// One simulated trajectory; rows after an escape are NaN.
struct SamplePath {
    Mat values;
    int escape_step = -1;

    bool escaped() const noexcept { return escape_step >= 0; }
    /// Number of valid rows.
    int valid_rows() const noexcept { return escaped() ? escape_step : static_cast<int>(values.rows()); }
};

/// X_{k+1} = X_k + f(X_k) dt + B sqrt(dt) xi_k + dL_k, deterministic given `seed`.
inline SamplePath simulate_path(const SystemSpec& system, const SimConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const int steps = cfg.steps();
    SamplePath out{Mat::Constant(steps + 1, system.dimension(), std::numeric_limits<double>::quiet_NaN())};
    out.escape_step = detail::run_euler_maruyama(system, cfg, seed, [&](int k, const Vec& x) {
        out.values.row(k) = x.transpose();
        return true;
    });
    return out;
}

struct Ensemble {
    std::string digest;
    SimConfig cfg;
    Mat noise;  ///< B of the generating system, used by bridge monitoring
    std::vector<std::uint64_t> seeds;
    std::vector<SamplePath> paths;

    int steps() const { return cfg.steps(); }
    double time(int k) const { return cfg.horizon * static_cast<double>(k) / cfg.steps(); }

    int escaped_count() const {
        int n = 0;
        for (const auto& p : paths) {
            n += p.escaped() ? 1 : 0;
        }
        return n;
    }
};

/// cfg.paths trajectories with seeds path_seed(cfg.seed, i), in index order.
inline Ensemble simulate_ensemble(const SystemSpec& system, const SimConfig& cfg) {
    cfg.validate();
    Ensemble e{system.digest(), cfg, system.noise().matrix(), {}, {}};
    e.seeds.reserve(static_cast<std::size_t>(cfg.paths));
    e.paths.reserve(static_cast<std::size_t>(cfg.paths));
    for (int i = 0; i < cfg.paths; ++i) {
        const auto seed = path_seed(cfg.seed, static_cast<std::uint64_t>(i));
        e.seeds.push_back(seed);
        e.paths.push_back(simulate_path(system, cfg, seed));
    }
    return e;
}

struct TubeEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
    /// Paths counted inside (grid) or summed survival weight (bridge).
    double inside = 0.0;
    int paths = 0;
    /// Escaped paths seen. The streaming overload stops following a path once
    /// it leaves the tube, so it only counts escapes from inside the tube.
    int escaped = 0;
};

namespace detail {

inline TubeEstimate summarize_tube(const std::vector<double>& weights, TubeMonitoring mode, int escaped) {
    TubeEstimate t;
    t.paths = static_cast<int>(weights.size());
    t.escaped = escaped;
    double sum = 0.0, sum2 = 0.0;
    for (double w : weights) {
        sum += w;
        sum2 += w * w;
    }
    const double m = static_cast<double>(t.paths);
    t.inside = sum;
    t.estimate = sum / m;
    if (mode == TubeMonitoring::grid) {
        t.std_error = std::sqrt(t.estimate * (1.0 - t.estimate) / m);
    } else {
        const double var = t.paths > 1 ? std::max(0.0, (sum2 - sum * sum / m) / (m - 1.0)) : 0.0;
        t.std_error = std::sqrt(var / m);
    }
    return t;
}

}  // namespace detail

/// Fraction of ensemble paths with sup_t |X(t) - phi(t)| <= eps (phi linearly
/// interpolated onto the simulation grid). Escaped paths count as outside.
inline TubeEstimate tube_probability(const Ensemble& ensemble, const Path& phi, double eps) {
    if (!(eps >= 0.0)) {
        throw Error(ErrorCode::invalid_parameter, "epsilon must be non-negative");
    }
    const int steps = ensemble.steps();
    const Mat grid = detail::path_on_grid(phi, steps, ensemble.cfg.horizon);
    std::vector<double> weights;
    weights.reserve(ensemble.paths.size());
    for (const auto& p : ensemble.paths) {
        if (p.escaped()) {
            weights.push_back(0.0);
            continue;
        }
        detail::TubeTracker tracker(grid, eps, ensemble.cfg.monitoring, ensemble.noise, ensemble.cfg.dt);
        for (int k = 0; k <= steps; ++k) {
            if (!tracker.visit(k, p.values.row(k).transpose())) {
                break;
            }
        }
        weights.push_back(tracker.weight());
    }
    return detail::summarize_tube(weights, ensemble.cfg.monitoring, ensemble.escaped_count());
}

/// Same estimate as simulating the ensemble and calling tube_probability on
/// it, without storing the paths.
inline TubeEstimate tube_probability(const SystemSpec& system, const Path& phi, double eps, const SimConfig& cfg) {
    cfg.validate();
    if (!(eps >= 0.0)) {
        throw Error(ErrorCode::invalid_parameter, "epsilon must be non-negative");
    }
    const int steps = cfg.steps();
    const Mat grid = detail::path_on_grid(phi, steps, cfg.horizon);
    std::vector<double> weights;
    weights.reserve(static_cast<std::size_t>(cfg.paths));
    int escaped = 0;
    for (int i = 0; i < cfg.paths; ++i) {
        detail::TubeTracker tracker(grid, eps, cfg.monitoring, system.noise().matrix(), cfg.dt);
        const int esc = detail::run_euler_maruyama(system, cfg, path_seed(cfg.seed, static_cast<std::uint64_t>(i)),
                                                   [&](int k, const Vec& x) { return tracker.visit(k, x); });
        if (esc >= 0) {
            ++escaped;
            weights.push_back(0.0);
        } else {
            weights.push_back(tracker.weight());
        }
    }
    return detail::summarize_tube(weights, cfg.monitoring, escaped);
}

struct GammaEstimate {
    double estimate = std::numeric_limits<double>::quiet_NaN();
    double std_error = std::numeric_limits<double>::quiet_NaN();
    bool defined = false;
    TubeEstimate numerator;
    TubeEstimate denominator;
};

/// The reference process: same noise, zero drift (up to the Levy location), started at 0.
inline SystemSpec reference_system(const SystemSpec& system) {
    return SystemSpec(zero_drift(system.dimension()), system.noise(), system.levy(), Vec::Zero(system.dimension()));
}

/// P(|X - phi| <= eps) / P(|X_ref| <= eps) with a delta-method standard error.
/// The reference ensemble uses path seeds cfg.seed + cfg.paths + i, so the
/// two estimates are independent.
inline GammaEstimate gamma_ratio(const SystemSpec& system, const Path& phi, double eps, const SimConfig& cfg) {
    if (!(eps > 0.0)) {
        throw Error(ErrorCode::invalid_parameter, "epsilon must be positive");
    }
    GammaEstimate g;
    g.numerator = tube_probability(system, phi, eps, cfg);
    SimConfig ref_cfg = cfg;
    ref_cfg.seed = cfg.seed + static_cast<std::uint64_t>(cfg.paths);
    const Path zero = Path::constant(Vec::Zero(system.dimension()), cfg.horizon, 2);
    g.denominator = tube_probability(reference_system(system), zero, eps, ref_cfg);
    if (g.denominator.estimate <= 0.0) {
        return g;
    }
    const double p1 = g.numerator.estimate, p0 = g.denominator.estimate;
    g.defined = true;
    g.estimate = p1 / p0;
    const double rel1 = p1 > 0.0 ? g.numerator.std_error / p1 : 0.0;
    const double rel0 = g.denominator.std_error / p0;
    g.std_error = p1 > 0.0 ? g.estimate * std::sqrt(rel1 * rel1 + rel0 * rel0)
                           : g.numerator.std_error / p0;
    return g;
}

/// Per grid time, the fraction of paths with |X(t) - phi(t)| <= eps.
inline Vec ensemble_band(const Ensemble& ensemble, const Path& phi, double eps) {
    const int steps = ensemble.steps();
    const Mat grid = detail::path_on_grid(phi, steps, ensemble.cfg.horizon);
    Vec coverage = Vec::Zero(steps + 1);
    for (const auto& p : ensemble.paths) {
        const int rows = p.valid_rows();
        for (int k = 0; k < rows; ++k) {
            if ((p.values.row(k) - grid.row(k)).norm() <= eps) {
                coverage[k] += 1.0;
            }
        }
    }
    return coverage / static_cast<double>(ensemble.paths.size());
}

}  // namespace ompath
