#include <cstring>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "ompath/benchmark.hpp"
#include "ompath/simulate.hpp"
#include "oracles.hpp"

using namespace ompath;

namespace {

Vec vec(std::initializer_list<double> v) {
    Vec out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

SystemSpec brownian(double b, double x0 = 0.0) {
    return SystemSpec(zero_drift(1), NoiseMatrix(Mat::Constant(1, 1, b)), {}, vec({x0}));
}

SystemSpec ou(double b, double x0) {
    return SystemSpec(linear_drift(Mat::Constant(1, 1, -1.0)), NoiseMatrix(Mat::Constant(1, 1, b)), {}, vec({x0}));
}

std::vector<double> endpoints(const Ensemble& e) {
    std::vector<double> out;
    for (const auto& p : e.paths) out.push_back(p.values(p.values.rows() - 1, 0));
    return out;
}

}  // namespace

TEST(Simulate, SameSeedSameBytes) {
    const auto sys = paper_benchmark_system();
    SimConfig cfg{1e-3, 1.0, 5, 99};
    const auto a = simulate_ensemble(sys, cfg);
    const auto b = simulate_ensemble(sys, cfg);
    ASSERT_EQ(a.paths.size(), b.paths.size());
    for (std::size_t i = 0; i < a.paths.size(); ++i) {
        const auto& x = a.paths[i].values;
        const auto& y = b.paths[i].values;
        EXPECT_EQ(0, std::memcmp(x.data(), y.data(), sizeof(double) * static_cast<std::size_t>(x.size())));
    }
    cfg.seed = 100;
    const auto c = simulate_ensemble(sys, cfg);
    // Path i of seed 99 + 1 is path i - 1 of seed 100.
    EXPECT_EQ(0, std::memcmp(a.paths[1].values.data(), c.paths[0].values.data(),
                             sizeof(double) * static_cast<std::size_t>(c.paths[0].values.size())));
    EXPECT_NE(a.paths[0].values, c.paths[0].values);
    EXPECT_EQ(a.seeds, (std::vector<std::uint64_t>{99, 100, 101, 102, 103}));
}

TEST(Simulate, ZeroNoiseFollowsTheODEAtFirstOrder) {
    const auto sys = maier_stein(1.0).with_noise(NoiseMatrix::degenerate(Mat::Zero(2, 2))).with_x0(vec({0.2, 0.8}));
    // RK4 reference for zdot = f(z) on a fine grid.
    auto reference = [&](int n) {
        Mat out(n + 1, 2);
        Vec z = sys.x0();
        const double h = 1.0 / n;
        out.row(0) = z.transpose();
        for (int k = 0; k < n; ++k) {
            const Vec k1 = sys.drift()(z), k2 = sys.drift()(Vec(z + 0.5 * h * k1));
            const Vec k3 = sys.drift()(Vec(z + 0.5 * h * k2)), k4 = sys.drift()(Vec(z + h * k3));
            z += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
            out.row(k + 1) = z.transpose();
        }
        return out;
    };
    std::vector<double> errs;
    for (double dt : {2e-3, 1e-3, 5e-4}) {
        const SimConfig cfg{dt, 1.0, 1, 0};
        const auto p = simulate_path(sys, cfg, 0);
        const Mat ref = reference(cfg.steps());
        errs.push_back((p.values - ref).cwiseAbs().maxCoeff());
    }
    EXPECT_NEAR(errs[0] / errs[1], 2.0, 0.2);
    EXPECT_NEAR(errs[1] / errs[2], 2.0, 0.2);
    EXPECT_LT(errs[2], 1e-3);
}

TEST(Simulate, BrownianEndpointIsGaussian) {
    const auto e = simulate_ensemble(brownian(2.0, 0.5), SimConfig{0.01, 1.0, 20000, 4});
    const auto x = endpoints(e);
    EXPECT_LT(oracles::ks_statistic(x, [](double t) { return 0.5 * std::erfc(-(t - 0.5) / (2.0 * std::sqrt(2.0))); }),
              oracles::ks_critical_one_sample(x.size()));
}

TEST(Simulate, PureJumpEndpointIsStable) {
    // f = 0, B = 0, L ~ S_{1/2}(1, 1, 0): X(T) is Levy-distributed with scale T^2.
    const SystemSpec sys(zero_drift(1), NoiseMatrix::degenerate(Mat::Zero(1, 1)),
                         {StableComponent::stable(0.5, 1.0, 1.0)}, vec({0.0}));
    const double T = 0.5;
    const auto e = simulate_ensemble(sys, SimConfig{0.01, T, 20000, 8});
    std::vector<double> x;
    for (const auto& p : e.paths) {
        if (!p.escaped()) x.push_back(p.values(p.values.rows() - 1, 0));
    }
    EXPECT_GT(x.size(), 19900u);
    const double scale = T * T;
    EXPECT_LT(oracles::ks_statistic(x, [scale](double t) { return t <= 0 ? 0.0 : std::erfc(std::sqrt(scale / (2 * t))); }),
              oracles::ks_critical_one_sample(e.paths.size()));
}

TEST(Simulate, WeakOrderOneOnLinearSystem) {
    // E[X_n] = (1 - dt)^n x0 exactly for Euler-Maruyama; the continuum mean is x0 / e.
    std::vector<double> mean, se;
    const std::vector<double> dts{1e-3, 5e-4};
    for (double dt : dts) {
        const auto e = simulate_ensemble(ou(0.5, 1.0), SimConfig{dt, 1.0, 100000, 12345});
        const auto x = endpoints(e);
        double s = 0, s2 = 0;
        for (double v : x) {
            s += v;
            s2 += v * v;
        }
        const double m = s / x.size();
        mean.push_back(m);
        se.push_back(std::sqrt((s2 / x.size() - m * m) / x.size()));
        EXPECT_NEAR(m, std::pow(1.0 - dt, std::round(1.0 / dt)), 3.0 * se.back()) << dt;
    }
    // Bias ~ -x0 e^{-1} dt / 2, so the difference is first order in dt.
    const double predicted = -std::exp(-1.0) * (dts[0] - dts[1]) / 2.0;
    EXPECT_LT(std::abs((mean[0] - mean[1]) - predicted), 3.0 * std::hypot(se[0], se[1]));
}

TEST(Simulate, EscapesAreFlaggedAndCounted) {
    // Heavy-tailed jumps push cubic drift past the escape radius.
    const auto e = simulate_ensemble(paper_benchmark_system(), SimConfig{1e-3, 1.0, 200, 20210101});
    EXPECT_GT(e.escaped_count(), 0);
    for (const auto& p : e.paths) {
        if (p.escaped()) {
            EXPECT_TRUE(std::isnan(p.values(p.escape_step, 0)));
            EXPECT_TRUE(std::isfinite(p.values(p.escape_step - 1, 0)));
            EXPECT_EQ(p.valid_rows(), p.escape_step);
        } else {
            EXPECT_TRUE(p.values.allFinite());
        }
    }
    const auto phi = Path::constant(vec({1.0, 0.0}), 1.0, 10);
    const auto t = tube_probability(e, phi, 1e12);
    EXPECT_EQ(t.escaped, e.escaped_count());
    EXPECT_DOUBLE_EQ(t.estimate, 1.0 - static_cast<double>(e.escaped_count()) / e.paths.size());
}

TEST(Simulate, DropLargeJumpsKeepsIncrementsSmall) {
    const SystemSpec sys(zero_drift(1), NoiseMatrix::degenerate(Mat::Zero(1, 1)),
                         {StableComponent::stable(0.3, 5.0, 0.0)}, vec({0.0}));
    SimConfig cfg{0.01, 1.0, 200, 3, LargeJumps::drop};
    const auto e = simulate_ensemble(sys, cfg);
    double biggest = 0.0;
    for (const auto& p : e.paths) {
        for (int k = 1; k < p.values.rows(); ++k) biggest = std::max(biggest, std::abs(p.values(k, 0) - p.values(k - 1, 0)));
    }
    EXPECT_LT(biggest, 1.0);
    cfg.large_jumps = LargeJumps::keep;
    const auto kept = simulate_ensemble(sys, cfg);
    double kept_big = 0.0;
    for (const auto& p : kept.paths) {
        for (int k = 1; k < p.valid_rows(); ++k) kept_big = std::max(kept_big, std::abs(p.values(k, 0) - p.values(k - 1, 0)));
    }
    EXPECT_GT(kept_big, 1.0);
}

TEST(Tube, MonotoneInEpsilonOnAFixedEnsemble) {
    const auto sys = paper_benchmark_system();
    const auto e = simulate_ensemble(sys, SimConfig{1e-3, 1.0, 100, 7});
    const auto phi = Path::straight_line(vec({1, 0}), vec({-1, 0}), 1.0, 50);
    double prev = -1.0;
    for (double eps = 0.05; eps < 5.0; eps *= 1.3) {
        const double p = tube_probability(e, phi, eps).estimate;
        EXPECT_GE(p, prev);
        prev = p;
    }
    Vec prev_band = Vec::Zero(e.steps() + 1);
    for (double eps : {0.1, 0.5, 2.0, 1e6}) {
        const Vec band = ensemble_band(e, Path::constant(vec({1, 0}), 1.0, 10), eps);
        EXPECT_TRUE((band.array() >= prev_band.array()).all());
        EXPECT_EQ(band[0], 1.0);
        prev_band = band;
    }
    EXPECT_NEAR(prev_band.minCoeff(), 1.0 - static_cast<double>(e.escaped_count()) / 100.0, 1e-15);
}

TEST(Tube, StreamingMatchesStoredEnsemble) {
    const auto sys = paper_benchmark_system();
    for (auto mode : {TubeMonitoring::grid, TubeMonitoring::bridge}) {
        SimConfig cfg{1e-3, 1.0, 50, 17, LargeJumps::keep, mode};
        const auto phi = Path::straight_line(vec({1, 0}), vec({-1, 0}), 1.0, 20);
        const auto a = tube_probability(simulate_ensemble(sys, cfg), phi, 0.8);
        const auto b = tube_probability(sys, phi, 0.8, cfg);
        EXPECT_EQ(a.estimate, b.estimate);
        EXPECT_EQ(a.std_error, b.std_error);
        EXPECT_LE(b.escaped, a.escaped);
    }
}

TEST(Tube, BridgeCorrectionTracksTheContinuousSup) {
    const double eps = 0.5, exact = oracles::brownian_tube_probability(eps);
    SimConfig cfg{1e-3, 1.0, 20000, 2024, LargeJumps::keep, TubeMonitoring::bridge};
    const auto zero = Path::constant(vec({0.0}), 1.0, 2);
    const auto bridged = tube_probability(brownian(1.0), zero, eps, cfg);
    EXPECT_NEAR(bridged.estimate, exact, 3.0 * bridged.std_error);
    cfg.monitoring = TubeMonitoring::grid;
    const auto grid = tube_probability(brownian(1.0), zero, eps, cfg);
    // The discrete sup misses excursions between nodes.
    EXPECT_GT(grid.estimate, bridged.estimate);
    EXPECT_EQ(grid.std_error, std::sqrt(grid.estimate * (1 - grid.estimate) / cfg.paths));
}

TEST(Tube, BridgeExitProbability) {
    using detail::bridge_exit_probability;
    EXPECT_EQ(bridge_exit_probability(1.0, 0.2, 0.3, 0.0, 1e-3), 0.0);
    EXPECT_NEAR(bridge_exit_probability(1.0, 0.5, 0.5, 1.0, 0.01), std::exp(-2 * 0.25 / 0.01), 1e-15);
    EXPECT_GT(bridge_exit_probability(1.0, 0.9, 0.9, 1.0, 0.01), bridge_exit_probability(1.0, 0.5, 0.9, 1.0, 0.01));
}

TEST(Gamma, RatioForTheReferenceProcessIsOne) {
    const auto sys = brownian(1.0);
    const SimConfig cfg{1e-2, 1.0, 20000, 55};
    const auto g = gamma_ratio(sys, Path::constant(vec({0.0}), 1.0, 2), 0.8, cfg);
    ASSERT_TRUE(g.defined);
    EXPECT_NEAR(g.estimate, 1.0, 3.0 * g.std_error);
    // Independent seeds: the two estimates are not identical.
    EXPECT_NE(g.numerator.inside, g.denominator.inside);
    EXPECT_THROW(gamma_ratio(sys, Path::constant(vec({0.0}), 1.0, 2), 0.0, cfg), Error);
}

TEST(SimConfig, Validation) {
    EXPECT_THROW((SimConfig{0.0, 1.0, 1, 0}.validate()), Error);
    EXPECT_THROW((SimConfig{0.3, 1.0, 1, 0}.validate()), Error);
    EXPECT_THROW((SimConfig{1e-3, 1.0, 0, 0}.validate()), Error);
    EXPECT_NO_THROW((SimConfig{1e-3, 2.5, 1, 0}.validate()));
    EXPECT_EQ((SimConfig{1e-3, 2.5, 1, 0}.steps()), 2500);
}
