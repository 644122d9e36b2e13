#pragma once

/// \file lm.hpp
/// \brief Bounded Levenberg-Marquardt least squares with central-difference
/// Jacobians and covariance estimation.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vbodmr/hermitian.hpp"

namespace vbodmr {

using ResidualFn = std::function<std::vector<double>(std::span<const double>)>;

struct Bounds {
    std::vector<double> lower;
    std::vector<double> upper;

    static Bounds unbounded(std::size_t k) {
        return {std::vector<double>(k, -std::numeric_limits<double>::infinity()),
                std::vector<double>(k, std::numeric_limits<double>::infinity())};
    }
};

struct LmOptions {
    int max_iterations = 500;
    double cost_rtol = 1e-10;
    double gradient_tol = 1e-10;
    double step_rtol = 1e-14;
    double initial_lambda = 1e-3;
    /// Eigenvalues of the scaled normal matrix below this fraction of the
    /// largest one mark a degenerate direction.
    double degeneracy_rtol = 1e-10;
};

struct LmResult {
    std::vector<double> params;
    std::vector<double> sigma;
    std::vector<std::vector<double>> covariance;
    double ssr = 0.0;
    double rms = 0.0;
    std::size_t n_residuals = 0;
    int iterations = 0;
    bool converged = false;
    bool degenerate = false;
    std::vector<std::size_t> degenerate_params;
    std::string stop_reason;
};

namespace detail {

inline double sum_squares(const std::vector<double>& r) {
    double s = 0.0;
    for (double v : r) s += v * v;
    return s;
}

inline bool all_finite(const std::vector<double>& r) {
    return std::all_of(r.begin(), r.end(), [](double v) { return std::isfinite(v); });
}

/// Central differences with step max(1e-6 |p|, 1e-8); one-sided at a box
/// edge. Column-major: jac[i][n].
inline std::vector<std::vector<double>> fd_jacobian(const ResidualFn& fn, const std::vector<double>& p,
                                                    const std::vector<double>& r0, const Bounds& b) {
    std::vector<std::vector<double>> jac(p.size());
    std::vector<double> q = p;
    auto eval = [&](std::size_t i, double x) {
        q[i] = x;
        auto r = fn(q);
        q[i] = p[i];
        if (r.size() != r0.size()) throw std::runtime_error("residual size changed between evaluations");
        return r;
    };
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double h = std::max(1e-6 * std::abs(p[i]), 1e-8);
        const bool up = p[i] + h <= b.upper[i], down = p[i] - h >= b.lower[i];
        jac[i].resize(r0.size());
        if (up && down) {
            const auto rp = eval(i, p[i] + h), rm = eval(i, p[i] - h);
            for (std::size_t n = 0; n < r0.size(); ++n) jac[i][n] = (rp[n] - rm[n]) / (2.0 * h);
        } else {
            const double s = up ? h : -h;
            const auto r = eval(i, p[i] + s);
            for (std::size_t n = 0; n < r0.size(); ++n) jac[i][n] = (r[n] - r0[n]) / s;
        }
    }
    return jac;
}

/// Solves the SPD system a x = rhs in place; false if not positive definite.
inline bool cholesky_solve(std::vector<double> a, std::size_t k, std::vector<double>& rhs) {
    for (std::size_t j = 0; j < k; ++j) {
        double d = a[j * k + j];
        for (std::size_t m = 0; m < j; ++m) d -= a[j * k + m] * a[j * k + m];
        if (!(d > 0.0)) return false;
        d = std::sqrt(d);
        a[j * k + j] = d;
        for (std::size_t i = j + 1; i < k; ++i) {
            double s = a[i * k + j];
            for (std::size_t m = 0; m < j; ++m) s -= a[i * k + m] * a[j * k + m];
            a[i * k + j] = s / d;
        }
    }
    for (std::size_t i = 0; i < k; ++i) {
        double s = rhs[i];
        for (std::size_t m = 0; m < i; ++m) s -= a[i * k + m] * rhs[m];
        rhs[i] = s / a[i * k + i];
    }
    for (std::size_t i = k; i-- > 0;) {
        double s = rhs[i];
        for (std::size_t m = i + 1; m < k; ++m) s -= a[m * k + i] * rhs[m];
        rhs[i] = s / a[i * k + i];
    }
    return true;
}

}  // namespace detail

/// Minimizes sum r_n(p)^2 over the box `bounds`.
///
/// Converges when an accepted step lowers the cost by less than
/// cost_rtol relative, when the projected gradient's infinity norm drops
/// below gradient_tol, or when the cost reaches zero. Hitting
/// max_iterations returns the current point with converged = false.
/// Covariance is ssr/(N-k) (J^T J)^-1; singular directions are reported
/// through `degenerate` and their parameters get infinite variance.
inline LmResult lm_minimize(const ResidualFn& fn, std::vector<double> p, const Bounds& bounds,
                            const LmOptions& opt = {}) {
    const std::size_t k = p.size();
    if (k == 0) throw std::invalid_argument("no parameters to fit");
    if (bounds.lower.size() != k || bounds.upper.size() != k) throw std::invalid_argument("bounds size mismatch");
    for (std::size_t i = 0; i < k; ++i)
        if (!(p[i] >= bounds.lower[i] && p[i] <= bounds.upper[i]))
            throw std::invalid_argument("initial parameter " + std::to_string(i) + " outside bounds");

    std::vector<double> r = fn(p);
    if (!detail::all_finite(r)) throw std::invalid_argument("residuals are not finite at the initial point");
    const std::size_t nres = r.size();
    double cost = detail::sum_squares(r);

    LmResult res;
    res.n_residuals = nres;
    double lambda = opt.initial_lambda;
    bool done = false;
    int it = 0;

    auto clamp = [&](std::vector<double>& q) {
        for (std::size_t i = 0; i < k; ++i) q[i] = std::clamp(q[i], bounds.lower[i], bounds.upper[i]);
    };

    for (; it < opt.max_iterations && !done; ++it) {
        if (cost == 0.0) {
            res.stop_reason = "zero residual";
            done = true;
            break;
        }
        const auto jac = detail::fd_jacobian(fn, p, r, bounds);
        std::vector<double> a(k * k, 0.0), g(k, 0.0);
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t n = 0; n < nres; ++n) g[i] += jac[i][n] * r[n];
            for (std::size_t j = 0; j <= i; ++j) {
                double s = 0.0;
                for (std::size_t n = 0; n < nres; ++n) s += jac[i][n] * jac[j][n];
                a[i * k + j] = a[j * k + i] = s;
            }
        }
        double gmax = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            const bool pinned_low = p[i] <= bounds.lower[i] && g[i] > 0.0;
            const bool pinned_high = p[i] >= bounds.upper[i] && g[i] < 0.0;
            if (!pinned_low && !pinned_high) gmax = std::max(gmax, std::abs(g[i]));
        }
        if (gmax < opt.gradient_tol) {
            res.stop_reason = "gradient below tolerance";
            done = true;
            break;
        }
        double dmax = 0.0;
        for (std::size_t i = 0; i < k; ++i) dmax = std::max(dmax, a[i * k + i]);

        // inner loop: raise damping until a step lowers the cost
        for (;;) {
            std::vector<double> damped = a;
            for (std::size_t i = 0; i < k; ++i)
                damped[i * k + i] += lambda * std::max(a[i * k + i], 1e-12 * std::max(dmax, 1e-300));
            std::vector<double> step(k);
            for (std::size_t i = 0; i < k; ++i) step[i] = -g[i];
            if (!detail::cholesky_solve(damped, k, step)) {
                lambda *= 10.0;
                if (lambda > 1e20) break;
                continue;
            }
            std::vector<double> q(k);
            for (std::size_t i = 0; i < k; ++i) q[i] = p[i] + step[i];
            clamp(q);
            auto rq = fn(q);
            const double cq = detail::all_finite(rq) ? detail::sum_squares(rq) : std::numeric_limits<double>::infinity();
            if (cq < cost) {
                double smax = 0.0, pmax = 0.0;
                for (std::size_t i = 0; i < k; ++i) {
                    smax = std::max(smax, std::abs(q[i] - p[i]));
                    pmax = std::max(pmax, std::abs(p[i]));
                }
                const double rel = (cost - cq) / cost;
                p = std::move(q);
                r = std::move(rq);
                cost = cq;
                lambda = std::max(lambda / 10.0, 1e-15);
                if (rel < opt.cost_rtol) {
                    res.stop_reason = "relative cost change below tolerance";
                    done = true;
                } else if (smax <= opt.step_rtol * (pmax + opt.step_rtol)) {
                    res.stop_reason = "step below tolerance";
                    done = true;
                }
                break;
            }
            lambda *= 10.0;
            if (lambda > 1e20) break;
        }
        if (!done && lambda > 1e20) {
            // no descent direction left at working precision
            res.stop_reason = "damping saturated (no further decrease)";
            done = true;
        }
    }

    res.converged = done;
    res.iterations = it;
    if (!done) res.stop_reason = "iteration cap reached";
    res.params = p;
    res.ssr = cost;
    res.rms = std::sqrt(cost / static_cast<double>(nres));

    // covariance at the final point
    const auto jac = detail::fd_jacobian(fn, p, r, bounds);
    CMatrix scaled(k);
    std::vector<double> diag(k);
    for (std::size_t i = 0; i < k; ++i) {
        double s = 0.0;
        for (std::size_t n = 0; n < nres; ++n) s += jac[i][n] * jac[i][n];
        diag[i] = s;
    }
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            double s = 0.0;
            for (std::size_t n = 0; n < nres; ++n) s += jac[i][n] * jac[j][n];
            const double den = std::sqrt(diag[i] * diag[j]);
            scaled(i, j) = den > 0.0 ? s / den : (i == j ? 1.0 : 0.0);
        }
    const auto eig = eigen_hermitian(HermitianMatrix(scaled));
    const double emax = std::max(eig.values.back(), 1e-300);
    std::vector<bool> bad(k, false);
    for (std::size_t i = 0; i < k; ++i)
        if (diag[i] == 0.0) bad[i] = true;
    std::vector<std::vector<double>> pinv(k, std::vector<double>(k, 0.0));
    for (std::size_t e = 0; e < k; ++e) {
        if (eig.values[e] <= opt.degeneracy_rtol * emax) {
            for (std::size_t i = 0; i < k; ++i)
                if (std::abs(eig.vectors(i, e)) > 0.1) bad[i] = true;
            continue;
        }
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j)
                pinv[i][j] += (eig.vectors(i, e) * std::conj(eig.vectors(j, e))).real() / eig.values[e];
    }
    const double dof = nres > k ? static_cast<double>(nres - k) : 1.0;
    const double s2 = cost / dof;
    const double inf = std::numeric_limits<double>::infinity();
    res.covariance.assign(k, std::vector<double>(k, 0.0));
    res.sigma.assign(k, 0.0);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            if (bad[i] || bad[j]) {
                res.covariance[i][j] = i == j ? inf : 0.0;
                continue;
            }
            res.covariance[i][j] = s2 * pinv[i][j] / std::sqrt(diag[i] * diag[j]);
        }
    for (std::size_t i = 0; i < k; ++i) {
        res.sigma[i] = std::sqrt(std::max(res.covariance[i][i], 0.0));
        if (bad[i]) {
            res.degenerate = true;
            res.degenerate_params.push_back(i);
        }
    }
    return res;
}

}  // namespace vbodmr
