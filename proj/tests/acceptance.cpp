// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "ompath/cli.hpp"
#include "ompath/ompath.hpp"
#include "oracles.hpp"

using namespace ompath;
namespace fs = std::filesystem;

namespace {

Vec vec(std::initializer_list<double> v) {
    Vec out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

/// Collects sub-checks of one criterion and a short numeric summary.
class Criterion {
public:
    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass_ = false;
            failures_ += (failures_.empty() ? "" : "; ") + what;
        }
    }
    template <class T>
    void note(const std::string& key, T value) {
        std::ostringstream s;
        s.precision(6);
        s << key << "=" << value;
        notes_ += (notes_.empty() ? "" : ", ") + s.str();
    }
    bool pass() const { return pass_; }
    std::string summary() const { return notes_ + (failures_.empty() ? "" : " | failed: " + failures_); }

private:
    bool pass_ = true;
    std::string notes_;
    std::string failures_;
};

// 1. Poincare symmetry gate.
void symmetry_gate(Criterion& c) {
    const auto ok = check_poincare_symmetry(maier_stein(1.0), halton_probes(2, 100, -2.0, 2.0), 1e-10);
    c.require(ok.pass, "gamma=1 should pass");
    c.note("gamma1_worst", ok.worst_asymmetry);

    auto probes = halton_probes(2, 99, -1.0, 1.0);
    probes.push_back(vec({1.0, 1.0}));
    const auto bad = check_poincare_symmetry(maier_stein(2.0), probes, 1e-10);
    c.require(!bad.pass, "gamma=2 should fail");
    c.require(std::abs(bad.worst_asymmetry - 2.0) <= 1e-10, "gamma=2 worst asymmetry should be 2");
    c.require(bad.worst_point == vec({1.0, 1.0}), "gamma=2 worst point should be (1,1)");
    c.note("gamma2_worst", bad.worst_asymmetry);
    c.note("at", "(" + std::to_string(bad.worst_point[0]) + "," + std::to_string(bad.worst_point[1]) + ")");
}

// 2. Small-jump mean: closed form against quadrature.
void eta_correctness(Criterion& c) {
    Rng rng(2002);
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
        const auto comp = StableComponent::stable(rng.uniform(0.1, 0.95), rng.uniform(0.2, 3.0), rng.uniform(-1, 1));
        const auto e = eta(std::vector{comp});
        worst = std::max(worst, std::abs(e.analytic[0] - e.quadrature[0]));
    }
    c.require(worst <= 1e-8, "analytic vs quadrature");
    c.note("max_diff", worst);
    const auto sym = eta(std::vector{StableComponent::stable(0.3, 1.7, 0.0), StableComponent::stable(0.9, 0.2, 0.0)});
    c.require(sym.value[0] == 0.0 && sym.value[1] == 0.0, "beta=0 gives exactly 0");
    const auto bench = eta(paper_benchmark_system().levy());
    c.require(bench.value[1] == 0.0, "benchmark eta2 is exactly 0");
    c.note("benchmark_eta", std::to_string(bench.value[0]) + "/" + std::to_string(bench.value[1]));
}

// 3. Chambers-Mallows-Stuck samples against the stable characteristic function.
void stable_fidelity(Criterion& c) {
    const int n = 100000;
    std::uint64_t seed = 3000;
    double worst_ratio = 0.0;
    for (double alpha : {0.5, 0.7, 0.9}) {
        for (double beta : {0.0, 0.5, 1.0}) {
            const auto comp = StableComponent::stable(alpha, 1.0, beta);
            Rng rng(seed++);
            std::vector<double> x(n);
            for (auto& v : x) v = sample_stable(comp, 1.0, rng);
            for (double theta : {0.5, 1.0, 2.0}) {
                const auto s = oracles::empirical_cf(x, theta);
                const double t = std::tan(std::numbers::pi * alpha / 2.0);
                const auto expected =
                    std::exp(-std::pow(theta, alpha) * std::complex<double>(1.0, -beta * t));
                const double ratio = std::abs(s.mean - expected) / s.std_error;
                worst_ratio = std::max(worst_ratio, ratio);
                if (ratio >= 3.0) {
                    c.require(false, "alpha=" + std::to_string(alpha) + " beta=" + std::to_string(beta) +
                                         " theta=" + std::to_string(theta));
                }
            }
        }
    }
    c.note("worst_error_in_std_errors", worst_ratio);
}

// 4. Euler-Lagrange consistency.
void el_consistency(Criterion& c) {
    const auto sys = maier_stein(1.0);
    Rng rng(4004);
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
        const Vec z = vec({rng.uniform(-2, 2), rng.uniform(-2, 2)});
        const Vec e = vec({rng.uniform(-1, 1), rng.uniform(-1, 1)});
        worst = std::max(worst, (maier_stein_rhs(z, e) - newton_rhs(sys, z, e)).cwiseAbs().maxCoeff());
    }
    c.require(worst <= 1e-10, "closed form vs newton_rhs");
    c.note("rhs_max_diff", worst);

    auto zf = [](double t) { return vec({0.8 * std::cos(2 * t), 0.3 * std::sin(3 * t) + 0.1 * t}); };
    auto zd = [](double t) { return vec({-1.6 * std::sin(2 * t), 0.9 * std::cos(3 * t) + 0.1}); };
    auto zdd = [](double t) { return vec({-3.2 * std::cos(2 * t), -2.7 * std::sin(3 * t)}); };
    const Vec e = vec({0.4, -0.1});
    std::vector<double> errors;
    for (int n : {100, 200, 400}) {
        Mat v(n + 1, 2);
        for (int k = 0; k <= n; ++k) v.row(k) = zf(static_cast<double>(k) / n).transpose();
        const Path p(1.0, v);
        const double h = p.step();
        auto action = [&](const Mat& z) { return action_of_path(sys, Path(1.0, z), e).action; };
        double err = 0.0;
        for (int k = 3; k <= n - 3; k += std::max(1, n / 50)) {
            Vec g(2);
            for (int i = 0; i < 2; ++i) {
                Mat up = p.values(), down = p.values();
                up(k, i) += 1e-5;
                down(k, i) -= 1e-5;
                g[i] = (action(up) - action(down)) / 2e-5 / h;
            }
            const double t = p.time(k);
            err = std::max(err, (g - el_residual(sys, zf(t), zd(t), zdd(t), e)).norm());
        }
        errors.push_back(err);
    }
    const double o1 = std::log2(errors[0] / errors[1]), o2 = std::log2(errors[1] / errors[2]);
    c.require(o1 > 1.8 && o2 > 1.8, "second-order convergence of the discrete gradient");
    c.note("fd_errors", std::to_string(errors[0]) + "/" + std::to_string(errors[1]) + "/" + std::to_string(errors[2]));
    c.note("orders", std::to_string(o1) + "/" + std::to_string(o2));
}

double y_max(const Path& p) { return p.values().col(1).cwiseAbs().maxCoeff(); }

double antisymmetry(const Path& p) {
    const int n = p.intervals();
    double a = 0.0;
    for (int k = 0; k <= n; ++k) a = std::max(a, std::abs(p.values()(k, 0) + p.values()(n - k, 0)));
    return a;
}

// 5. Boundary value solvers.
void bvp_solvers(Criterion& c) {
    const SystemSpec fp(zero_drift(2), NoiseMatrix::identity(2), {}, Vec::Zero(2));
    const BoundaryPair fb{vec({0.5, -1.0}), vec({2.0, 3.0}), 1.0};
    const auto line = shoot(fp, fb, Vec::Zero(2), ShootingConfig{});
    c.require(line.converged && line.boundary_mismatch_norm < 1e-12, "free particle mismatch");
    c.require((line.path.values() - Path::straight_line(fb.z0, fb.z1, 1.0, line.path.intervals()).values())
                      .cwiseAbs()
                      .maxCoeff() < 1e-10,
              "free particle straight line");
    c.note("free_mismatch", line.boundary_mismatch_norm);

    const SystemSpec ou(linear_drift(Mat::Constant(1, 1, -1.0)), NoiseMatrix::identity(1), {}, Vec::Zero(1));
    const auto sinh_bvp = shoot(ou, {vec({0.0}), vec({1.0}), 1.0}, Vec::Zero(1), ShootingConfig{});
    const double mid_err = std::abs(sinh_bvp.path.at(0.5)[0] - std::sinh(0.5) / std::sinh(1.0));
    c.require(sinh_bvp.converged && mid_err < 1e-6, "sinh BVP midpoint");
    c.note("sinh_mid_err", mid_err);

    const auto ms = maier_stein(1.0);
    const auto b = paper_benchmark_boundary();
    MinimizerConfig m400;
    m400.intervals = 400;
    const auto sol = solve_transition(ms, b, Vec::Zero(2), ShootingConfig{}, m400);
    const double dist = sup_distance(sol.shooting.path, sol.minimization.path);
    c.require(sol.shooting.converged && sol.minimization.converged, "both solvers converge (n=400)");
    c.require(dist < 1e-3, "shooting vs minimization sup distance");
    c.note("sup_distance_n400", dist);
    for (const auto* r : {&sol.shooting, &sol.minimization}) {
        c.require(y_max(r->path) < 1e-8, r->method + " y = 0");
        c.require(antisymmetry(r->path) < 1e-5, r->method + " antisymmetry");
    }
    c.note("ymax", std::max(y_max(sol.shooting.path), y_max(sol.minimization.path)));
    c.note("antisym", std::max(antisymmetry(sol.shooting.path), antisymmetry(sol.minimization.path)));

    ShootingConfig s800;
    s800.steps = 800;
    MinimizerConfig m800;
    m800.intervals = 800;
    const auto fine = solve_transition(ms, b, Vec::Zero(2), s800, m800);
    const double el_s = el_diagnostics(ms, fine.shooting.path, Vec::Zero(2));
    const double el_m = el_diagnostics(ms, fine.minimization.path, Vec::Zero(2));
    c.require(el_s < 1e-4 && el_m < 1e-4, "el_diagnostics at n=800");
    c.note("el_n800", std::to_string(el_s) + "/" + std::to_string(el_m));
}

// 6. Minimizer improves on the straight line and never increases the action.
void minimizer_property(Criterion& c) {
    BenchmarkOptions opt;
    opt.simulation.paths = 2;
    const auto r = run_paper_benchmark(opt);
    c.require(r.solution.minimization.action < r.straight_line_action, "minimized action < straight line");
    c.require(r.solution.shooting.action < r.straight_line_action, "shooting action < straight line");
    c.note("mpp_action", r.solution.minimization.action);
    c.note("straight_line_action", r.straight_line_action);

    const auto sys = paper_benchmark_system();
    const Vec e = eta(sys.levy()).value;
    const auto b = paper_benchmark_boundary();
    MinimizerConfig mc;
    mc.intervals = 100;
    mc.max_iterations = 300;
    StaggeredAction obj(sys, e, 1.0, mc.intervals);
    Rng rng(6006);
    double worst_gain = -std::numeric_limits<double>::infinity();
    for (int trial = 0; trial < 10; ++trial) {
        Mat z = Path::straight_line(b.z0, b.z1, 1.0, mc.intervals).values();
        for (int mode = 1; mode <= 5; ++mode) {
            const Vec amp = vec({rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)});
            for (int k = 1; k < mc.intervals; ++k) {
                z.row(k) += std::sin(mode * std::numbers::pi * k / mc.intervals) * amp.transpose();
            }
        }
        const double before = obj.evaluate(z, nullptr);
        const auto res = minimize_action(sys, b, e, mc, Path(1.0, z));
        const double after = obj.evaluate(res.path.values(), nullptr);
        worst_gain = std::max(worst_gain, after - before);
        c.require(after <= before, "trial " + std::to_string(trial) + " increased the action");
    }
    c.note("max_change_over_10_inits", worst_gain);
}

// 7. Tube statistics.
void tube_statistics(Criterion& c) {
    const SystemSpec bm(zero_drift(1), NoiseMatrix::identity(1), {}, Vec::Zero(1));
    const Path zero = Path::constant(vec({0.0}), 1.0, 2);
    const double exact = oracles::brownian_tube_probability(0.5);
    SimConfig cfg{1e-3, 1.0, 100000, 7007, LargeJumps::keep, TubeMonitoring::bridge};
    const auto bridged = tube_probability(bm, zero, 0.5, cfg);
    const double z = std::abs(bridged.estimate - exact) / bridged.std_error;
    c.require(z <= 3.0, "bridge-monitored estimate within 3 standard errors of the reflection series");
    c.note("oracle", exact);
    c.note("bridge", bridged.estimate);
    c.note("se", bridged.std_error);
    cfg.monitoring = TubeMonitoring::grid;
    const auto grid = tube_probability(bm, zero, 0.5, cfg);
    c.note("grid_only", grid.estimate);

    const SystemSpec ou(linear_drift(Mat::Constant(1, 1, -1.0)), NoiseMatrix::diagonal(vec({0.5})), {}, Vec::Zero(1));
    const Path flat = Path::constant(vec({0.0}), 1.0, 1000);
    const Path ramp = Path::straight_line(vec({0.0}), vec({0.6}), 1.0, 1000);
    const double a_flat = action_of_path(ou, flat, Vec::Zero(1)).action;
    const double a_ramp = action_of_path(ou, ramp, Vec::Zero(1)).action;
    c.require(a_ramp - a_flat > 1.0, "action gap > 1");
    c.note("action_gap", a_ramp - a_flat);
    SimConfig oc{1e-3, 1.0, 100000, 7100, LargeJumps::keep, TubeMonitoring::grid};
    const auto p_flat = tube_probability(ou, flat, 0.3, oc);
    oc.seed = 7100 + 2 * static_cast<std::uint64_t>(oc.paths);
    const auto p_ramp = tube_probability(ou, ramp, 0.3, oc);
    const double sep = (p_flat.estimate - p_ramp.estimate) /
                       std::hypot(p_flat.std_error, p_ramp.std_error);
    c.require(sep > 3.0, "lower-action path has the higher tube probability at 3 sigma");
    c.note("p_low_action", p_flat.estimate);
    c.note("p_high_action", p_ramp.estimate);
    c.note("separation_sigma", sep);
}

std::string snapshot(const std::string& command, const fs::path& config, const fs::path& out_dir,
                     const std::optional<fs::path>& path, int& code) {
    cli::CommandOptions opt;
    opt.config = config;
    opt.out = out_dir;
    opt.path = path;
    std::ostringstream out, err;
    code = cli::run_command(command, opt, out, err);
    std::string s = out.str();
    std::vector<fs::path> files;
    if (fs::exists(out_dir)) {
        for (const auto& e : fs::directory_iterator(out_dir)) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) s += "\n--" + f.filename().string() + "\n" + oracles::slurp(f);
    return s;
}

// 8. Reproducibility of the command-line tool.
void reproducibility(Criterion& c) {
    const fs::path cfg = fs::path(OMPATH_SOURCE_DIR) / "configs" / "benchmark.toml";
    const auto in = oracles::scratch("acceptance_repro_in");
    const auto b = paper_benchmark_boundary();
    oracles::spit(in / "path.csv", io::path_csv(Path::straight_line(b.z0, b.z1, 1.0, 100)));
    int identical = 0;
    for (const std::string command : {"validate", "solve", "simulate", "action", "benchmark"}) {
        std::string first, second;
        int code1 = -1, code2 = -1;
        const std::optional<fs::path> path = command == "action" ? std::optional(in / "path.csv") : std::nullopt;
        first = snapshot(command, cfg, oracles::scratch("acceptance_repro_" + command + "_1"), path, code1);
        second = snapshot(command, cfg, oracles::scratch("acceptance_repro_" + command + "_2"), path, code2);
        c.require(code1 == 0 && code2 == 0, command + " exit code");
        c.require(first == second, command + " output differs between runs");
        if (first == second) ++identical;
    }
    c.note("identical_commands", std::to_string(identical) + "/5");

    const auto dir = fs::temp_directory_path() / "ompath_test_acceptance_repro_simulate_1";
    const auto meta = io::json::parse(oracles::slurp(dir / "ensemble.json"));
    const auto sys = config::load_run_config(cfg).build_system(true);
    c.require(sys.digest() == meta["system_digest"].get<std::string>(), "system digest");
    const auto again = simulate_ensemble(sys, io::sim_config_from_json(meta["config"]));
    c.require(io::ensemble_csv(again) == oracles::slurp(dir / "ensemble.csv"), "ensemble regeneration");
    c.note("regenerated_paths", again.paths.size());
}

// 9. Energy conservation on the reduced Newton system.
void energy_conservation(Criterion& c) {
    const auto sys = maier_stein(1.0);
    ShootingConfig cfg;
    cfg.steps = 1000;
    const auto r = shoot(sys, paper_benchmark_boundary(), Vec::Zero(2), cfg);
    c.require(r.converged, "shooting converges");
    const auto field = make_second_order_field(sys, Vec::Zero(2));
    const auto tr = integrate_second_order(field, paper_benchmark_boundary().z0, r.initial_velocity, 1.0, 1000);
    auto energy = [&](int k) {
        const double x = tr.positions(k, 0), v = tr.velocities(k, 0);
        return 0.5 * v * v - (0.5 * std::pow(x, 6) - std::pow(x, 4) - 1.5 * x * x);
    };
    const double e0 = energy(0);
    double drift = 0.0;
    for (int k = 0; k <= 1000; ++k) drift = std::max(drift, std::abs(energy(k) - e0));
    c.require(drift / std::abs(e0) < 1e-6, "relative energy drift");
    c.note("E0", e0);
    c.note("relative_drift", drift / std::abs(e0));
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<void(Criterion&)>>> criteria{
        {"symmetry gate", symmetry_gate},
        {"eta correctness", eta_correctness},
        {"stable-law fidelity", stable_fidelity},
        {"Euler-Lagrange consistency", el_consistency},
        {"BVP solvers", bvp_solvers},
        {"minimizer property", minimizer_property},
        {"tube statistics", tube_statistics},
        {"reproducibility", reproducibility},
        {"energy conservation", energy_conservation},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Criterion c;
        const auto start = std::chrono::steady_clock::now();
        try {
            criteria[i].second(c);
        } catch (const std::exception& e) {
            c.require(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("%s criterion %zu: %s (%s) [%.1fs]\n", c.pass() ? "PASS" : "FAIL", i + 1,
                    criteria[i].first.c_str(), c.summary().c_str(), secs);
        std::fflush(stdout);
        failed += c.pass() ? 0 : 1;
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
