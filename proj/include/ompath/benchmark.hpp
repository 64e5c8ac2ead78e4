#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ompath/action.hpp"
#include "ompath/bvp.hpp"
#include "ompath/io.hpp"
#include "ompath/levy.hpp"
#include "ompath/model.hpp"
#include "ompath/simulate.hpp"

namespace ompath {

/// Maier-Stein (gamma = 1, B = I) with L1 ~ S_0.5(1, 0.5, 0), L2 ~ S_0.7(1, 0, 0), started at SN2 = (1, 0).
inline SystemSpec paper_benchmark_system() {
    Vec x0(2);
    x0 << 1.0, 0.0;
    return maier_stein(1.0)
        .with_levy({StableComponent::stable(0.5, 1.0, 0.5, 0.0), StableComponent::stable(0.7, 1.0, 0.0, 0.0)})
        .with_x0(x0);
}

/// Transition from SN2 = (1, 0) to SN1 = (-1, 0) over [0, 1].
inline BoundaryPair paper_benchmark_boundary() {
    Vec z0(2), z1(2);
    z0 << 1.0, 0.0;
    z1 << -1.0, 0.0;
    return {z0, z1, 1.0};
}

struct BenchmarkOptions {
    ShootingConfig shooting;
    MinimizerConfig minimizer;
    SimConfig simulation{1e-3, 1.0, 200, 20210101, LargeJumps::keep, TubeMonitoring::grid};
    double band_epsilon = 0.5;
    /// Replaces the small-jump mean computed from the Levy components.
    std::optional<Vec> eta_override;
    std::optional<std::filesystem::path> output_dir;
};

struct BenchmarkReport {
    EtaVector eta;
    Vec eta_used;
    SymmetryReport symmetry;
    TransitionSolution solution;
    double straight_line_action = 0.0;
    /// sup_t |z_shoot(t) - z_min(t)| over the minimizer grid.
    double solver_sup_distance = 0.0;
    bool both_converged = false;
    Ensemble ensemble;
    Vec band;
    std::vector<std::string> files;
};

/// Sup distance between two paths on the same horizon, sampled on `b`'s grid.
inline double sup_distance(const Path& a, const Path& b) {
    double worst = 0.0;
    for (int k = 0; k <= b.intervals(); ++k) {
        worst = std::max(worst, (a.at(b.time(k)) - b.node(k)).norm());
    }
    return worst;
}

inline io::json benchmark_report_json(const BenchmarkReport& r) {
    return {{"schema_version", io::report_schema_version},
            {"eta", {{"used", io::to_json(r.eta_used)},
                     {"analytic", io::to_json(r.eta.analytic)},
                     {"quadrature", io::to_json(r.eta.quadrature)},
                     {"quadrature_error", io::to_json(r.eta.quadrature_error)}}},
            {"symmetry", {{"pass", r.symmetry.pass},
                          {"worst_asymmetry", r.symmetry.worst_asymmetry},
                          {"worst_point", io::to_json(r.symmetry.worst_point)}}},
            {"shooting", io::solve_result_json(r.solution.shooting)},
            {"minimization", io::solve_result_json(r.solution.minimization)},
            {"shooting_used_fallback", r.solution.shooting_used_fallback},
            {"straight_line_action", r.straight_line_action},
            {"solver_sup_distance", r.solver_sup_distance},
            {"both_converged", r.both_converged},
            {"ensemble", io::ensemble_metadata(r.ensemble)},
            {"band_epsilon_coverage_min", r.band.size() ? r.band.minCoeff() : 0.0},
            {"files", r.files}};
}

/// End-to-end Maier-Stein transition: eta, symmetry check, both BVP solvers,
/// sample-path ensemble and its coverage band around the computed path.
/// Non-convergence is reported, never thrown.
inline BenchmarkReport run_paper_benchmark(const BenchmarkOptions& options = {}) {
    const SystemSpec system = paper_benchmark_system();
    const BoundaryPair boundary = paper_benchmark_boundary();
    EtaVector small_jumps = eta(system.levy());
    const Vec eta_used = options.eta_override ? *options.eta_override : small_jumps.value;
    auto symmetry =
        check_poincare_symmetry(system, halton_probes(2, 100, -2.0, 2.0), 1e-8, SymmetryTolerance::relative);
    BenchmarkReport r{std::move(small_jumps), eta_used, std::move(symmetry),
                      solve_transition(system, boundary, eta_used, options.shooting, options.minimizer)};
    r.straight_line_action =
        action_of_path(system, Path::straight_line(boundary.z0, boundary.z1, boundary.horizon, options.minimizer.intervals),
                       r.eta_used)
            .action;
    r.solver_sup_distance = sup_distance(r.solution.shooting.path, r.solution.minimization.path);
    r.both_converged = r.solution.shooting.converged && r.solution.minimization.converged;

    const Path& reference = r.solution.shooting.converged ? r.solution.shooting.path : r.solution.minimization.path;
    r.ensemble = simulate_ensemble(system, options.simulation);
    r.band = ensemble_band(r.ensemble, reference, options.band_epsilon);

    if (options.output_dir) {
        const auto& dir = *options.output_dir;
        io::write_atomic(dir / "mpp_path.csv",
                         io::solver_paths_csv({{"shooting", &r.solution.shooting.path},
                                               {"minimization", &r.solution.minimization.path}}));
        io::write_atomic(dir / "band.csv", io::band_csv(r.ensemble, r.band));
        r.files = {"mpp_path.csv", "band.csv", "report.json"};
        io::write_atomic(dir / "report.json", io::dump(benchmark_report_json(r)));
    }
    return r;
}

}  // namespace ompath
