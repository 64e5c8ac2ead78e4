#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ompath/error.hpp"
#include "ompath/levy.hpp"

namespace ompath {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using ConstVecRef = Eigen::Ref<const Eigen::VectorXd>;
using VecRef = Eigen::Ref<Eigen::VectorXd>;
using MatRef = Eigen::Ref<Eigen::MatrixXd>;

/// Drift vector field f: R^d -> R^d with first derivatives and the
/// contracted second derivatives s_i = sum_j d^2 f^j / dz_i dz_j.
///
/// Evaluation writes into caller storage so hot loops do not allocate.
/// When no second-derivative routine is given, s is computed by central
/// differences of tr(Df), with h = max(1e-5, 1e-5 |z|).
class DriftField {
public:
    using EvalFn = std::function<void(ConstVecRef, VecRef)>;
    using JacobianFn = std::function<void(ConstVecRef, MatRef)>;

    DriftField(int dimension, EvalFn eval, JacobianFn jacobian, EvalFn second_derivs = {},
               std::string signature = "custom")
        : dim_(dimension),
          eval_(std::move(eval)),
          jacobian_(std::move(jacobian)),
          second_(std::move(second_derivs)),
          signature_(std::move(signature)) {
        if (dim_ <= 0) {
            throw Error(ErrorCode::invalid_parameter, "drift dimension must be positive");
        }
        if (!eval_ || !jacobian_) {
            throw Error(ErrorCode::invalid_parameter, "drift needs eval and jacobian");
        }
    }

    int dimension() const noexcept { return dim_; }
    const std::string& signature() const noexcept { return signature_; }
    bool has_analytic_second_derivs() const noexcept { return static_cast<bool>(second_); }

    void eval(ConstVecRef x, VecRef out) const { eval_(x, out); }
    void jacobian(ConstVecRef x, MatRef out) const { jacobian_(x, out); }

    Vec operator()(ConstVecRef x) const {
        Vec out(dim_);
        eval_(x, out);
        return out;
    }

    Mat jacobian(ConstVecRef x) const {
        Mat out(dim_, dim_);
        jacobian_(x, out);
        return out;
    }

    void second_derivs(ConstVecRef x, VecRef out) const {
        if (second_) {
            second_(x, out);
            return;
        }
        const double h = std::max(1e-5, 1e-5 * x.norm());
        Mat jac(dim_, dim_);
        Vec probe = x;
        for (int i = 0; i < dim_; ++i) {
            probe[i] = x[i] + h;
            jacobian_(probe, jac);
            const double up = jac.trace();
            probe[i] = x[i] - h;
            jacobian_(probe, jac);
            const double down = jac.trace();
            probe[i] = x[i];
            out[i] = (up - down) / (2.0 * h);
        }
    }

    Vec second_derivs(ConstVecRef x) const {
        Vec out(dim_);
        second_derivs(x, out);
        return out;
    }

    /// f + shift; derivatives are unchanged.
    DriftField shifted(const Vec& shift) const {
        if (shift.size() != dim_) {
            throw Error(ErrorCode::invalid_parameter, "shift dimension mismatch");
        }
        auto base = eval_;
        EvalFn eval = [base, shift](ConstVecRef x, VecRef out) {
            base(x, out);
            out += shift;
        };
        std::string sig = signature_ + "+shift[";
        char buf[32];
        for (int i = 0; i < dim_; ++i) {
            std::snprintf(buf, sizeof buf, "%s%.17g", i ? "," : "", shift[i]);
            sig += buf;
        }
        sig += "]";
        return DriftField(dim_, std::move(eval), jacobian_, second_, std::move(sig));
    }

private:
    int dim_;
    EvalFn eval_;
    JacobianFn jacobian_;
    EvalFn second_;
    std::string signature_;
};

/// Central-difference Jacobian, entries (f_i(p + h e_j) - f_i(p - h e_j)) / 2h.
inline Mat finite_diff_jacobian(const DriftField& field, ConstVecRef point, double h) {
    if (!(h > 0.0)) {
        throw Error(ErrorCode::invalid_parameter, "finite-difference step must be positive");
    }
    const int d = field.dimension();
    Mat out(d, d);
    Vec probe = point;
    Vec up(d), down(d);
    for (int j = 0; j < d; ++j) {
        probe[j] = point[j] + h;
        field.eval(probe, up);
        probe[j] = point[j] - h;
        field.eval(probe, down);
        probe[j] = point[j];
        out.col(j) = (up - down) / (2.0 * h);
    }
    return out;
}

/// One monomial coef * prod_i x_i^{exponents[i]}.
struct Monomial {
    double coef = 0.0;
    std::vector<int> exponents;
};

/// Drift whose components are multivariate polynomials. Derivatives are exact.
inline DriftField polynomial_drift(int dimension, std::vector<std::vector<Monomial>> components) {
    if (dimension <= 0 || static_cast<int>(components.size()) != dimension) {
        throw Error(ErrorCode::invalid_parameter, "polynomial drift needs one term list per coordinate");
    }
    for (const auto& comp : components) {
        for (const auto& term : comp) {
            if (static_cast<int>(term.exponents.size()) != dimension) {
                throw Error(ErrorCode::invalid_parameter, "monomial exponent count must equal the dimension");
            }
            for (int e : term.exponents) {
                if (e < 0) {
                    throw Error(ErrorCode::invalid_parameter, "monomial exponents must be non-negative");
                }
            }
        }
    }

    // Value of the monomial after differentiating by `di` then `dj` (-1 = none).
    auto monomial = [dimension](const Monomial& m, ConstVecRef x, int di, int dj) {
        double value = m.coef;
        if (di >= 0) {
            value *= m.exponents[static_cast<std::size_t>(di)];
        }
        if (dj >= 0) {
            value *= m.exponents[static_cast<std::size_t>(dj)] - (dj == di ? 1 : 0);
        }
        if (value == 0.0) {
            return 0.0;
        }
        for (int i = 0; i < dimension; ++i) {
            const int p = m.exponents[static_cast<std::size_t>(i)] - (i == di ? 1 : 0) - (i == dj ? 1 : 0);
            for (int k = 0; k < p; ++k) {
                value *= x[i];
            }
        }
        return value;
    };

    auto shared = std::make_shared<const std::vector<std::vector<Monomial>>>(std::move(components));
    DriftField::EvalFn eval = [shared, monomial, dimension](ConstVecRef x, VecRef out) {
        for (int c = 0; c < dimension; ++c) {
            double s = 0.0;
            for (const auto& m : (*shared)[static_cast<std::size_t>(c)]) {
                s += monomial(m, x, -1, -1);
            }
            out[c] = s;
        }
    };
    DriftField::JacobianFn jac = [shared, monomial, dimension](ConstVecRef x, MatRef out) {
        for (int c = 0; c < dimension; ++c) {
            for (int j = 0; j < dimension; ++j) {
                double s = 0.0;
                for (const auto& m : (*shared)[static_cast<std::size_t>(c)]) {
                    s += monomial(m, x, j, -1);
                }
                out(c, j) = s;
            }
        }
    };
    DriftField::EvalFn second = [shared, monomial, dimension](ConstVecRef x, VecRef out) {
        for (int i = 0; i < dimension; ++i) {
            double s = 0.0;
            for (int j = 0; j < dimension; ++j) {
                for (const auto& m : (*shared)[static_cast<std::size_t>(j)]) {
                    s += monomial(m, x, i, j);
                }
            }
            out[i] = s;
        }
    };

    std::string sig = "polynomial{";
    char buf[32];
    for (int c = 0; c < dimension; ++c) {
        sig += c ? ";" : "";
        for (const auto& m : (*shared)[static_cast<std::size_t>(c)]) {
            std::snprintf(buf, sizeof buf, "(%.17g", m.coef);
            sig += buf;
            for (int e : m.exponents) {
                sig += ":" + std::to_string(e);
            }
            sig += ")";
        }
    }
    sig += "}";
    return DriftField(dimension, std::move(eval), std::move(jac), std::move(second), std::move(sig));
}

/// f(x) = 0 in d dimensions.
inline DriftField zero_drift(int dimension) {
    return polynomial_drift(dimension, std::vector<std::vector<Monomial>>(static_cast<std::size_t>(dimension)));
}

/// f(x) = A x.
inline DriftField linear_drift(const Mat& a) {
    const auto d = static_cast<int>(a.rows());
    if (a.cols() != d) {
        throw Error(ErrorCode::invalid_parameter, "linear drift matrix must be square");
    }
    std::vector<std::vector<Monomial>> comps(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            if (a(i, j) != 0.0) {
                std::vector<int> e(static_cast<std::size_t>(d), 0);
                e[static_cast<std::size_t>(j)] = 1;
                comps[static_cast<std::size_t>(i)].push_back({a(i, j), e});
            }
        }
    }
    return polynomial_drift(d, std::move(comps));
}

/// Additive noise matrix B together with its inverse.
///
/// The regular constructor enforces nondegeneracy, which the action and
/// Euler-Lagrange machinery require. `degenerate` admits singular B (e.g.
/// B = 0) for simulation only; asking it for the inverse throws.
class NoiseMatrix {
public:
    explicit NoiseMatrix(Mat b) : b_(std::move(b)) {
        if (b_.rows() != b_.cols() || b_.rows() == 0) {
            throw Error(ErrorCode::invalid_parameter, "noise matrix must be square and non-empty");
        }
        if (!b_.allFinite()) {
            throw Error(ErrorCode::invalid_parameter, "noise matrix has non-finite entries");
        }
        Eigen::FullPivLU<Mat> lu(b_);
        if (!lu.isInvertible()) {
            throw Error(ErrorCode::singular_noise, "noise matrix B is singular");
        }
        b_inv_ = lu.inverse();
        const double residual =
            (b_ * b_inv_ - Mat::Identity(b_.rows(), b_.cols())).cwiseAbs().maxCoeff();
        if (!(residual <= 1e-12)) {
            throw Error(ErrorCode::singular_noise, "noise matrix B is numerically singular");
        }
        condition_ = b_.cwiseAbs().colwise().sum().maxCoeff() *
                     b_inv_.cwiseAbs().colwise().sum().maxCoeff();
        metric_ = b_inv_.transpose() * b_inv_;
        invertible_ = true;
    }

    static NoiseMatrix identity(int d) { return NoiseMatrix(Mat::Identity(d, d)); }
    static NoiseMatrix diagonal(const Vec& entries) { return NoiseMatrix(Mat(entries.asDiagonal())); }

    static NoiseMatrix degenerate(Mat b) {
        try {
            return NoiseMatrix(b);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::singular_noise) {
                throw;
            }
        }
        NoiseMatrix n;
        n.b_ = std::move(b);
        n.condition_ = std::numeric_limits<double>::infinity();
        return n;
    }

    int dimension() const noexcept { return static_cast<int>(b_.rows()); }
    bool invertible() const noexcept { return invertible_; }
    double condition_estimate() const noexcept { return condition_; }
    const Mat& matrix() const noexcept { return b_; }

    const Mat& inverse() const {
        require_invertible();
        return b_inv_;
    }

    /// (B^{-1})^T B^{-1}.
    const Mat& metric() const {
        require_invertible();
        return metric_;
    }

    bool is_diagonal() const {
        Mat off = b_;
        off.diagonal().setZero();
        return off.cwiseAbs().maxCoeff() == 0.0;
    }

    bool is_identity() const { return b_ == Mat::Identity(b_.rows(), b_.cols()); }

private:
    NoiseMatrix() = default;

    void require_invertible() const {
        if (!invertible_) {
            throw Error(ErrorCode::singular_noise, "operation requires a nondegenerate noise matrix");
        }
    }

    Mat b_;
    Mat b_inv_;
    Mat metric_;
    double condition_ = 0.0;
    bool invertible_ = false;
};

/// Identifies a built-in benchmark so closed forms can be dispatched.
struct BuiltinTag {
    std::string name;
    double gamma = 0.0;
};

/// Complete problem definition dX = f(X) dt + B dW + dL, X(0) = x0.
///
/// Immutable. Any nonzero Levy location mu is folded into the drift at
/// construction, so `drift()` returns f + mu and `jump_components()` has
/// mu = 0; `raw_drift()` and `levy()` keep the inputs as given.
class SystemSpec {
public:
    SystemSpec(DriftField drift, NoiseMatrix noise, std::vector<StableComponent> levy, Vec x0,
               std::optional<BuiltinTag> builtin = std::nullopt)
        : raw_drift_(std::move(drift)),
          drift_(raw_drift_),
          noise_(std::move(noise)),
          levy_(std::move(levy)),
          x0_(std::move(x0)),
          builtin_(std::move(builtin)) {
        const int d = raw_drift_.dimension();
        if (noise_.dimension() != d) {
            throw Error(ErrorCode::invalid_parameter, "noise matrix dimension does not match drift");
        }
        if (levy_.empty()) {
            levy_.assign(static_cast<std::size_t>(d), StableComponent::none());
        }
        if (static_cast<int>(levy_.size()) != d) {
            throw Error(ErrorCode::invalid_parameter, "need exactly one Levy component per coordinate");
        }
        if (x0_.size() != d || !x0_.allFinite()) {
            throw Error(ErrorCode::invalid_parameter, "x0 must be a finite vector of the system dimension");
        }
        location_ = Vec::Zero(d);
        jumps_ = levy_;
        for (int j = 0; j < d; ++j) {
            auto& c = levy_[static_cast<std::size_t>(j)];
            if (!check_bounded_variation(c)) {
                throw Error(ErrorCode::bounded_variation,
                            "bounded variation requires alpha < 1 (coordinate " + std::to_string(j + 1) + ")");
            }
            if (!c.is_null) {
                location_[j] = c.mu;
                jumps_[static_cast<std::size_t>(j)].mu = 0.0;
            }
        }
        if (location_.cwiseAbs().maxCoeff() != 0.0) {
            drift_ = raw_drift_.shifted(location_);
        }
    }

    int dimension() const noexcept { return raw_drift_.dimension(); }
    const DriftField& drift() const noexcept { return drift_; }
    const DriftField& raw_drift() const noexcept { return raw_drift_; }
    const NoiseMatrix& noise() const noexcept { return noise_; }
    const std::vector<StableComponent>& levy() const noexcept { return levy_; }
    const std::vector<StableComponent>& jump_components() const noexcept { return jumps_; }
    const Vec& location_shift() const noexcept { return location_; }
    const Vec& x0() const noexcept { return x0_; }
    const std::optional<BuiltinTag>& builtin() const noexcept { return builtin_; }

    bool has_jumps() const {
        return std::any_of(jumps_.begin(), jumps_.end(), [](const auto& c) { return !c.is_null; });
    }

    SystemSpec with_levy(std::vector<StableComponent> levy) const {
        return SystemSpec(raw_drift_, noise_, std::move(levy), x0_, builtin_);
    }
    SystemSpec with_noise(NoiseMatrix noise) const {
        return SystemSpec(raw_drift_, std::move(noise), levy_, x0_, builtin_);
    }
    SystemSpec with_x0(Vec x0) const { return SystemSpec(raw_drift_, noise_, levy_, std::move(x0), builtin_); }

    /// Canonical text of everything that determines the law of X.
    std::string canonical_description() const {
        std::string s = "drift=" + raw_drift_.signature() + "|B=";
        char buf[40];
        const Mat& b = noise_.matrix();
        for (Eigen::Index i = 0; i < b.rows(); ++i) {
            for (Eigen::Index j = 0; j < b.cols(); ++j) {
                std::snprintf(buf, sizeof buf, "%.17g,", b(i, j));
                s += buf;
            }
        }
        s += "|levy=";
        for (const auto& c : levy_) {
            if (c.is_null) {
                s += "null;";
            } else {
                std::snprintf(buf, sizeof buf, "%.17g,", c.alpha);
                s += buf;
                std::snprintf(buf, sizeof buf, "%.17g,", c.sigma);
                s += buf;
                std::snprintf(buf, sizeof buf, "%.17g,", c.beta);
                s += buf;
                std::snprintf(buf, sizeof buf, "%.17g;", c.mu);
                s += buf;
            }
        }
        s += "|x0=";
        for (Eigen::Index i = 0; i < x0_.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g,", x0_[i]);
            s += buf;
        }
        return s;
    }

    /// FNV-1a 64 of the canonical description, as 16 hex digits.
    std::string digest() const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (unsigned char ch : canonical_description()) {
            h ^= ch;
            h *= 0x100000001b3ULL;
        }
        char buf[20];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
        return buf;
    }

private:
    DriftField raw_drift_;
    DriftField drift_;
    NoiseMatrix noise_;
    std::vector<StableComponent> levy_;
    std::vector<StableComponent> jumps_;
    Vec location_;
    Vec x0_;
    std::optional<BuiltinTag> builtin_;
};

/// Fixed endpoints z(0) = z0, z(T) = z1.
struct BoundaryPair {
    Vec z0;
    Vec z1;
    double horizon = 1.0;

    void validate(int dimension) const {
        if (!(horizon > 0.0) || !std::isfinite(horizon)) {
            throw Error(ErrorCode::invalid_parameter, "horizon T must be positive");
        }
        if (z0.size() != dimension || z1.size() != dimension) {
            throw Error(ErrorCode::invalid_parameter, "boundary values must match the system dimension");
        }
        if (!z0.allFinite() || !z1.allFinite()) {
            throw Error(ErrorCode::invalid_parameter, "boundary values must be finite");
        }
    }
};

/// Maier-Stein drift f(x, y) = (x - x^3 - gamma x y^2, -(1 + x^2) y) with unit noise.
inline SystemSpec maier_stein(double gamma) {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) {
        throw Error(ErrorCode::invalid_parameter, "Maier-Stein gamma must be positive");
    }
    DriftField::EvalFn eval = [gamma](ConstVecRef z, VecRef out) {
        const double x = z[0], y = z[1];
        out[0] = x - x * x * x - gamma * x * y * y;
        out[1] = -(1.0 + x * x) * y;
    };
    DriftField::JacobianFn jac = [gamma](ConstVecRef z, MatRef out) {
        const double x = z[0], y = z[1];
        out(0, 0) = 1.0 - 3.0 * x * x - gamma * y * y;
        out(0, 1) = -2.0 * gamma * x * y;
        out(1, 0) = -2.0 * x * y;
        out(1, 1) = -(1.0 + x * x);
    };
    // s_1 = d2f1/dx2 + d2f2/dxdy = -6x - 2x;  s_2 = d2f1/dydx + d2f2/dy2 = -2 gamma y.
    DriftField::EvalFn second = [gamma](ConstVecRef z, VecRef out) {
        const double x = z[0], y = z[1];
        out[0] = -8.0 * x;
        out[1] = -2.0 * gamma * y;
    };
    char sig[64];
    std::snprintf(sig, sizeof sig, "maier_stein(gamma=%.17g)", gamma);
    DriftField drift(2, std::move(eval), std::move(jac), std::move(second), sig);
    return SystemSpec(std::move(drift), NoiseMatrix::identity(2), {}, Vec::Zero(2),
                      BuiltinTag{"maier_stein", gamma});
}

/// V(x, y) = -x^2/2 + x^4/4 + y^2/2 + x^2 y^2/2; -grad V is the gamma = 1 drift.
inline double maier_stein_potential(ConstVecRef point) {
    const double x = point[0], y = point[1];
    return -0.5 * x * x + 0.25 * x * x * x * x + 0.5 * y * y + 0.5 * x * x * y * y;
}

}  // namespace ompath
