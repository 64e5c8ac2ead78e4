#pragma once

#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "ompath/action.hpp"
#include "ompath/benchmark.hpp"
#include "ompath/bvp.hpp"
#include "ompath/config.hpp"
#include "ompath/error.hpp"
#include "ompath/io.hpp"
#include "ompath/simulate.hpp"

namespace ompath::cli {

using json = nlohmann::json;

enum ExitCode : int { ok = 0, numeric_failure = 1, input_error = 2 };

struct CommandOptions {
    std::optional<std::filesystem::path> config;
    std::optional<std::filesystem::path> out;
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> path;  ///< path CSV for `action`
};

namespace detail {

inline std::filesystem::path output_dir(const CommandOptions& opt, const config::RunConfig& rc) {
    if (opt.out) {
        return *opt.out;
    }
    if (rc.output_dir) {
        return *rc.output_dir;
    }
    return ".";
}

inline config::RunConfig load(const CommandOptions& opt) {
    if (!opt.config) {
        throw Error(ErrorCode::input, "--config is required");
    }
    config::RunConfig rc = config::load_run_config(*opt.config);
    if (opt.seed && rc.simulation) {
        rc.simulation->seed = *opt.seed;
    }
    return rc;
}

inline json error_json(const std::string& command, const Error& e) {
    return {{"schema_version", io::report_schema_version},
            {"command", command},
            {"error", to_string(e.code())},
            {"reason", e.what()}};
}

/// Maps library errors to exit codes: malformed input is 2, everything else 1.
template <class F>
int guarded(const std::string& command, std::ostream& err, F&& body) {
    try {
        return body();
    } catch (const Error& e) {
        err << "ompath " << command << ": " << e.what() << "\n";
        return e.code() == ErrorCode::input ? input_error : numeric_failure;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "ompath " << command << ": " << e.what() << "\n";
        return input_error;
    } catch (const std::exception& e) {
        err << "ompath " << command << ": " << e.what() << "\n";
        return numeric_failure;
    }
}

inline json lagrangian_summary(const Vec& l) {
    return {{"min", l.minCoeff()}, {"max", l.maxCoeff()}, {"mean", l.mean()}, {"nodes", l.size()}};
}

}  // namespace detail

inline int cmd_validate(const CommandOptions& opt, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    return detail::guarded("validate", err, [&] {
        const config::RunConfig rc = detail::load(opt);
        json checks = json::object();

        json gate = {{"pass", true}};
        for (std::size_t j = 0; j < rc.levy.size(); ++j) {
            if (!check_bounded_variation(rc.levy[j])) {
                gate = {{"pass", false},
                        {"reason", "bounded variation requires alpha < 1"},
                        {"coordinate", j + 1},
                        {"alpha", rc.levy[j].alpha}};
                break;
            }
        }
        checks["bounded_variation"] = gate;

        std::optional<NoiseMatrix> noise;
        try {
            noise.emplace(rc.noise);
            checks["noise"] = {{"pass", true}, {"condition_estimate", noise->condition_estimate()}};
        } catch (const Error& e) {
            checks["noise"] = {{"pass", false}, {"reason", e.what()}};
        }

        if (noise) {
            const SystemSpec probe_system(*rc.drift, *noise, {}, rc.x0, rc.builtin);
            const auto probes = halton_probes(rc.dimension, rc.validate.probes, rc.validate.lo, rc.validate.hi);
            const auto sym =
                check_poincare_symmetry(probe_system, probes, rc.validate.tolerance, SymmetryTolerance::relative);
            checks["symmetry"] = {{"pass", sym.pass},
                                  {"worst_asymmetry", sym.worst_asymmetry},
                                  {"worst_point", io::to_json(sym.worst_point)},
                                  {"tolerance", sym.tolerance},
                                  {"probes", rc.validate.probes},
                                  {"box", {rc.validate.lo, rc.validate.hi}}};
        } else {
            checks["symmetry"] = {{"pass", false}, {"reason", "not evaluated: noise matrix is singular"}};
        }

        const bool pass = checks["bounded_variation"]["pass"].get<bool>() && checks["noise"]["pass"].get<bool>() &&
                          checks["symmetry"]["pass"].get<bool>();
        json report = {{"schema_version", io::report_schema_version},
                       {"command", "validate"},
                       {"dimension", rc.dimension},
                       {"pass", pass},
                       {"checks", checks}};
        out << io::dump(report);
        if (!pass) {
            err << "ompath validate: failed checks:";
            for (const auto& [name, check] : checks.items()) {
                if (!check["pass"].get<bool>()) err << " " << name;
            }
            err << "\n";
        }
        return pass ? ok : numeric_failure;
    });
}

inline int cmd_solve(const CommandOptions& opt, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    return detail::guarded("solve", err, [&] {
        const config::RunConfig rc = detail::load(opt);
        if (!rc.boundary) {
            throw Error(ErrorCode::input, "solve needs a [boundary] section");
        }
        const SystemSpec system = rc.build_system();
        const Vec eta_used = eta(system.levy()).value;
        const auto sol = solve_transition(system, *rc.boundary, eta_used, rc.shooting, rc.minimizer);
        const auto& b = *rc.boundary;
        const double straight =
            action_of_path(system, Path::straight_line(b.z0, b.z1, b.horizon, rc.minimizer.intervals), eta_used)
                .action;

        const auto dir = detail::output_dir(opt, rc);
        io::write_atomic(dir / "mpp_path.csv", io::solver_paths_csv({{"shooting", &sol.shooting.path},
                                                                     {"minimization", &sol.minimization.path}}));
        const bool any = sol.shooting.converged || sol.minimization.converged;
        json report = {{"schema_version", io::report_schema_version},
                       {"command", "solve"},
                       {"system_digest", system.digest()},
                       {"eta", io::to_json(eta_used)},
                       {"boundary", {{"z0", io::to_json(b.z0)}, {"z1", io::to_json(b.z1)}, {"T", b.horizon}}},
                       {"shooting", io::solve_result_json(sol.shooting)},
                       {"minimization", io::solve_result_json(sol.minimization)},
                       {"shooting_used_fallback", sol.shooting_used_fallback},
                       {"straight_line_action", straight},
                       {"solver_sup_distance", sup_distance(sol.shooting.path, sol.minimization.path)},
                       {"converged", any},
                       {"files", {"mpp_path.csv", "report.json"}}};
        io::write_atomic(dir / "report.json", io::dump(report));
        out << io::dump(report);
        if (!any) {
            err << "ompath solve: neither solver converged (shooting mismatch "
                << io::fmt(sol.shooting.boundary_mismatch_norm) << ", minimizer gradient "
                << io::fmt(sol.minimization.gradient_norm) << ")\n";
            return numeric_failure;
        }
        return ok;
    });
}

inline int cmd_simulate(const CommandOptions& opt, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    (void)out;
    return detail::guarded("simulate", err, [&] {
        const config::RunConfig rc = detail::load(opt);
        if (!rc.simulation) {
            throw Error(ErrorCode::input, "simulate needs a [simulation] section");
        }
        const SimConfig& cfg = *rc.simulation;
        const SystemSpec system = rc.build_system(true);
        const auto dir = detail::output_dir(opt, rc);

        std::string reference;
        std::optional<Path> phi;
        if (std::filesystem::exists(dir / "mpp_path.csv")) {
            phi = io::read_path_csv(dir / "mpp_path.csv", &reference);
            reference = "mpp_path.csv" + (reference.empty() ? std::string{} : ":" + reference);
            if (phi->dimension() != system.dimension()) {
                throw Error(ErrorCode::input, "mpp_path.csv dimension does not match the system");
            }
            if (std::abs(phi->horizon() - cfg.horizon) > 1e-12 * std::max(1.0, cfg.horizon)) {
                throw Error(ErrorCode::input, "mpp_path.csv horizon differs from simulation.T");
            }
        } else if (rc.boundary) {
            phi = Path::straight_line(rc.boundary->z0, rc.boundary->z1, cfg.horizon, cfg.steps());
            reference = "straight_line";
        } else {
            phi = Path::constant(system.x0(), cfg.horizon, cfg.steps());
            reference = "constant_x0";
        }

        const Ensemble ensemble = simulate_ensemble(system, cfg);
        const Vec band = ensemble_band(ensemble, *phi, rc.band_epsilon);
        const TubeEstimate tube = tube_probability(ensemble, *phi, rc.band_epsilon);

        json meta = io::ensemble_metadata(ensemble);
        meta["command"] = "simulate";
        meta["band"] = {{"reference", reference},
                        {"epsilon", rc.band_epsilon},
                        {"tube_probability", tube.estimate},
                        {"tube_std_error", tube.std_error},
                        {"coverage_min", band.minCoeff()}};
        meta["files"] = {"ensemble.csv", "ensemble.json", "band.csv"};
        io::write_atomic(dir / "ensemble.csv", io::ensemble_csv(ensemble));
        io::write_atomic(dir / "band.csv", io::band_csv(ensemble, band));
        io::write_atomic(dir / "ensemble.json", io::dump(meta));
        return ok;
    });
}

inline int cmd_action(const CommandOptions& opt, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    return detail::guarded("action", err, [&] {
        const config::RunConfig rc = detail::load(opt);
        if (!opt.path) {
            throw Error(ErrorCode::input, "action needs --path <csv>");
        }
        const Path path = io::read_path_csv(*opt.path);
        if (path.dimension() != rc.dimension) {
            throw Error(ErrorCode::input, "path has " + std::to_string(path.dimension()) +
                                              " coordinates, system has " + std::to_string(rc.dimension));
        }
        const SystemSpec system = rc.build_system();
        const Vec eta_used = eta(system.levy()).value;
        const ActionReport a = action_of_path(system, path, eta_used);
        json report = {{"schema_version", io::report_schema_version},
                       {"command", "action"},
                       {"system_digest", system.digest()},
                       {"eta", io::to_json(eta_used)},
                       {"action", a.action},
                       {"quadratic_action", a.quadratic_action},
                       {"divergence_action", a.action - a.quadratic_action},
                       {"rule", a.rule},
                       {"intervals", a.intervals},
                       {"lagrangian", detail::lagrangian_summary(a.lagrangian)},
                       {"el_residual_max", path.intervals() >= 4 ? json(el_diagnostics(system, path, eta_used))
                                                                 : json(nullptr)}};
        out << io::dump(report);
        return std::isfinite(a.action) ? ok : numeric_failure;
    });
}

/// The built-in experiment. A config is optional; its [solver] and
/// [simulation] sections override the defaults.
inline int cmd_benchmark(const CommandOptions& opt, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    return detail::guarded("benchmark", err, [&] {
        BenchmarkOptions bo;
        std::optional<config::RunConfig> rc;
        if (opt.config) {
            rc = detail::load(opt);
            bo.shooting = rc->shooting;
            bo.minimizer = rc->minimizer;
            if (rc->simulation) {
                bo.simulation = *rc->simulation;
                bo.band_epsilon = rc->band_epsilon;
            }
        }
        if (opt.seed) {
            bo.simulation.seed = *opt.seed;
        }
        bo.output_dir = opt.out ? *opt.out
                        : (rc && rc->output_dir) ? std::filesystem::path(*rc->output_dir)
                                                 : std::filesystem::path("benchmark_out");
        const BenchmarkReport r = run_paper_benchmark(bo);
        const bool any = r.solution.shooting.converged || r.solution.minimization.converged;
        out << io::dump({{"schema_version", io::report_schema_version},
                         {"command", "benchmark"},
                         {"eta", io::to_json(r.eta_used)},
                         {"shooting_converged", r.solution.shooting.converged},
                         {"minimization_converged", r.solution.minimization.converged},
                         {"action", r.solution.minimization.action},
                         {"straight_line_action", r.straight_line_action},
                         {"solver_sup_distance", r.solver_sup_distance},
                         {"files", r.files}});
        return any ? ok : numeric_failure;
    });
}

/// Dispatches a subcommand by name; unknown names are input errors.
inline int run_command(const std::string& name, const CommandOptions& opt, std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
    if (name == "validate") return cmd_validate(opt, out, err);
    if (name == "solve") return cmd_solve(opt, out, err);
    if (name == "simulate") return cmd_simulate(opt, out, err);
    if (name == "action") return cmd_action(opt, out, err);
    if (name == "benchmark") return cmd_benchmark(opt, out, err);
    err << "ompath: unknown command '" << name << "'\n";
    return input_error;
}

}  // namespace ompath::cli
