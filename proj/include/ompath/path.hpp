#pragma once

#include <algorithm>
#include <cmath>
#include <span>

#include <Eigen/Dense>

#include "ompath/error.hpp"
#include "ompath/model.hpp"

namespace ompath {

/// Function [0, T] -> R^d sampled on n + 1 uniform nodes. Row k of `values`
/// is the state at t_k = k T / n.
class Path {
public:
    Path(double horizon, Mat values) : horizon_(horizon), values_(std::move(values)) {
        if (!(horizon_ > 0.0) || !std::isfinite(horizon_)) {
            throw Error(ErrorCode::invalid_parameter, "path horizon must be positive");
        }
        if (values_.rows() < 3 || values_.cols() < 1) {
            throw Error(ErrorCode::invalid_parameter, "path needs at least 3 nodes");
        }
    }

    /// Validates a sampled time column against the uniform grid on [0, T].
    static Path from_samples(std::span<const double> times, Mat values) {
        if (times.size() < 3 || static_cast<Eigen::Index>(times.size()) != values.rows()) {
            throw Error(ErrorCode::input, "path needs at least 3 nodes with one time per row");
        }
        const double t0 = times.front();
        const double horizon = times.back();
        const auto n = static_cast<double>(times.size() - 1);
        const double tol = 1e-14 * std::max(1.0, std::abs(horizon));
        if (std::abs(t0) > tol) {
            throw Error(ErrorCode::input, "path grid must start at t = 0");
        }
        for (std::size_t k = 0; k < times.size(); ++k) {
            const double expected = horizon * static_cast<double>(k) / n;
            if (!std::isfinite(times[k]) || std::abs(times[k] - expected) > tol) {
                throw Error(ErrorCode::input, "path grid is not uniform at row " + std::to_string(k + 1));
            }
        }
        if (!values.allFinite()) {
            throw Error(ErrorCode::input, "path values must be finite");
        }
        return Path(horizon, std::move(values));
    }

    static Path straight_line(const Vec& z0, const Vec& z1, double horizon, int intervals) {
        Mat values(intervals + 1, z0.size());
        for (int k = 0; k <= intervals; ++k) {
            const double s = static_cast<double>(k) / intervals;
            values.row(k) = ((1.0 - s) * z0 + s * z1).transpose();
        }
        return Path(horizon, std::move(values));
    }

    static Path constant(const Vec& z, double horizon, int intervals) {
        return straight_line(z, z, horizon, intervals);
    }

    int intervals() const noexcept { return static_cast<int>(values_.rows()) - 1; }
    int dimension() const noexcept { return static_cast<int>(values_.cols()); }
    double horizon() const noexcept { return horizon_; }
    double step() const noexcept { return horizon_ / intervals(); }
    double time(int k) const noexcept { return horizon_ * static_cast<double>(k) / intervals(); }

    const Mat& values() const noexcept { return values_; }
    Mat& values() noexcept { return values_; }
    Vec node(int k) const { return values_.row(k).transpose(); }

    /// Central differences inside, second-order one-sided stencils at the ends.
    Mat velocities() const {
        const int n = intervals();
        const double h = step();
        Mat v(values_.rows(), values_.cols());
        for (int k = 1; k < n; ++k) {
            v.row(k) = (values_.row(k + 1) - values_.row(k - 1)) / (2.0 * h);
        }
        v.row(0) = (-3.0 * values_.row(0) + 4.0 * values_.row(1) - values_.row(2)) / (2.0 * h);
        v.row(n) = (3.0 * values_.row(n) - 4.0 * values_.row(n - 1) + values_.row(n - 2)) / (2.0 * h);
        return v;
    }

    /// Second central differences at interior nodes; end rows copy their neighbours.
    Mat accelerations() const {
        const int n = intervals();
        const double h = step();
        Mat a(values_.rows(), values_.cols());
        for (int k = 1; k < n; ++k) {
            a.row(k) = (values_.row(k + 1) - 2.0 * values_.row(k) + values_.row(k - 1)) / (h * h);
        }
        a.row(0) = a.row(1);
        a.row(n) = a.row(n - 1);
        return a;
    }

    /// Piecewise-linear interpolation; t is clamped to [0, T].
    Vec at(double t) const {
        const int n = intervals();
        const double s = std::clamp(t / horizon_, 0.0, 1.0) * n;
        const int k = std::min(static_cast<int>(std::floor(s)), n - 1);
        const double w = s - k;
        return ((1.0 - w) * values_.row(k) + w * values_.row(k + 1)).transpose();
    }

    /// Same path, linearly interpolated onto `intervals` uniform steps.
    Path resampled(int intervals) const {
        Mat v(intervals + 1, values_.cols());
        for (int k = 0; k <= intervals; ++k) {
            v.row(k) = at(horizon_ * static_cast<double>(k) / intervals).transpose();
        }
        return Path(horizon_, std::move(v));
    }

private:
    double horizon_;
    Mat values_;
};

}  // namespace ompath
