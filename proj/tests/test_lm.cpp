#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "vbodmr/lm.hpp"
#include "vbodmr/spectrum.hpp"

using namespace vbodmr;

namespace {

std::vector<double> xs(int n, double a, double b) { return uniform_grid(a, b, static_cast<std::size_t>(n)); }

// sum of Lorentzian dips, parameters (f0, C, w) per line
std::vector<double> dips(const std::vector<double>& x, std::span<const double> p) {
    std::vector<double> y(x.size(), 1.0);
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t l = 0; l + 2 < p.size(); l += 3) y[i] -= p[l + 1] * lorentzian(x[i], p[l], p[l + 2]);
    return y;
}

}  // namespace

TEST(Lm, LinearModelExact) {
    const auto x = xs(20, 0.0, 5.0);
    const ResidualFn fn = [&](std::span<const double> p) {
        std::vector<double> r;
        for (double v : x) r.push_back(p[0] * v - 2.5 * v);
        return r;
    };
    const LmResult r = lm_minimize(fn, {1.0}, Bounds::unbounded(1));
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(r.params[0], 2.5, 1e-10);
    EXPECT_NEAR(r.ssr, 0.0, 1e-20);
}

TEST(Lm, SingleLorentzianRoundTrip) {
    const auto x = xs(401, 2200.0, 2400.0);
    const std::vector<double> truth{2312.0, 0.056, 47.0};
    const auto y = dips(x, truth);
    const ResidualFn fn = [&](std::span<const double> p) {
        auto m = dips(x, p);
        for (std::size_t i = 0; i < m.size(); ++i) m[i] -= y[i];
        return m;
    };
    const LmResult r = lm_minimize(fn, {2300.0, 0.04, 60.0}, Bounds::unbounded(3));
    EXPECT_TRUE(r.converged);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(r.params[i] / truth[i], 1.0, 1e-8);
}

TEST(Lm, QuadraticBowlConvergesQuickly) {
    const ResidualFn fn = [](std::span<const double> p) {
        return std::vector<double>{3.0 * (p[0] - 1.0), 0.5 * (p[1] + 2.0), p[2] - 7.0};
    };
    const LmResult r = lm_minimize(fn, {10.0, 10.0, -10.0}, Bounds::unbounded(3));
    EXPECT_TRUE(r.converged);
    EXPECT_LT(r.iterations, 20);
    EXPECT_NEAR(r.params[0], 1.0, 1e-8);
    EXPECT_NEAR(r.params[1], -2.0, 1e-8);
    EXPECT_NEAR(r.params[2], 7.0, 1e-8);
}

TEST(Lm, IterationCapReturnsPartialResult) {
    const ResidualFn rosenbrock = [](std::span<const double> p) {
        return std::vector<double>{10.0 * (p[1] - p[0] * p[0]), 1.0 - p[0]};
    };
    LmOptions opt;
    opt.max_iterations = 2;
    const LmResult r = lm_minimize(rosenbrock, {-1.2, 1.0}, Bounds::unbounded(2), opt);
    EXPECT_FALSE(r.converged);
    EXPECT_EQ(r.iterations, 2);
    EXPECT_EQ(r.params.size(), 2u);
    const LmResult full = lm_minimize(rosenbrock, {-1.2, 1.0}, Bounds::unbounded(2));
    EXPECT_TRUE(full.converged);
    EXPECT_NEAR(full.params[0], 1.0, 1e-6);
}

TEST(Lm, SingularNormalMatrixIsDiagnosed) {
    const auto x = xs(10, 0.0, 1.0);
    const ResidualFn fn = [&](std::span<const double> p) {
        std::vector<double> r;
        for (double v : x) r.push_back((p[0] + p[1]) * v - 3.0 * v + 0.01 * std::sin(40 * v));
        return r;
    };
    const LmResult r = lm_minimize(fn, {1.0, 1.0}, Bounds::unbounded(2));
    EXPECT_TRUE(r.degenerate);
    EXPECT_EQ(r.degenerate_params.size(), 2u);
    EXPECT_TRUE(std::isinf(r.sigma[0]));
    double sxy = 0.0, sxx = 0.0;
    for (double v : x) {
        sxy += v * (3.0 * v - 0.01 * std::sin(40 * v));
        sxx += v * v;
    }
    EXPECT_NEAR(r.params[0] + r.params[1], sxy / sxx, 1e-6);
}

TEST(Lm, CovarianceMatchesLinearRegression) {
    // y = a + b x + noise: covariance must be s^2 (X^T X)^-1
    std::mt19937_64 rng(9);
    std::normal_distribution<double> g(0.0, 0.1);
    const auto x = xs(30, 0.0, 3.0);
    std::vector<double> y;
    for (double v : x) y.push_back(1.0 + 2.0 * v + g(rng));
    const ResidualFn fn = [&](std::span<const double> p) {
        std::vector<double> r;
        for (std::size_t i = 0; i < x.size(); ++i) r.push_back(p[0] + p[1] * x[i] - y[i]);
        return r;
    };
    const LmResult r = lm_minimize(fn, {0.0, 0.0}, Bounds::unbounded(2));
    double n = x.size(), sx = 0, sxx = 0, sy = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sxx += x[i] * x[i];
        sy += y[i];
        sxy += x[i] * y[i];
    }
    const double det = n * sxx - sx * sx;
    const double b = (n * sxy - sx * sy) / det, a = (sy - b * sx) / n;
    double ssr = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) ssr += std::pow(a + b * x[i] - y[i], 2);
    const double s2 = ssr / (n - 2);
    EXPECT_NEAR(r.params[0], a, 1e-8);
    EXPECT_NEAR(r.params[1], b, 1e-8);
    EXPECT_NEAR(r.covariance[0][0], s2 * sxx / det, 1e-6 * s2 * sxx / det);
    EXPECT_NEAR(r.covariance[1][1], s2 * n / det, 1e-6 * s2 * n / det);
    EXPECT_NEAR(r.covariance[0][1], -s2 * sx / det, 1e-6 * std::abs(s2 * sx / det));
    EXPECT_EQ(r.covariance[0][1], r.covariance[1][0]);
    for (int i = 0; i < 2; ++i) EXPECT_NEAR(r.sigma[i] * r.sigma[i], r.covariance[i][i], 1e-15);
}

TEST(Lm, BoundsAreRespected) {
    const ResidualFn fn = [](std::span<const double> p) { return std::vector<double>{p[0] + 1.0, p[1] - 4.0}; };
    const LmResult r = lm_minimize(fn, {0.5, 0.5}, Bounds{{0.0, 0.0}, {10.0, 3.0}});
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(r.params[0], 0.0, 1e-9);
    EXPECT_NEAR(r.params[1], 3.0, 1e-9);
    EXPECT_THROW(lm_minimize(fn, {-1.0, 0.5}, Bounds{{0.0, 0.0}, {10.0, 3.0}}), std::invalid_argument);
}

TEST(Lm, RejectsNonFiniteStart) {
    const ResidualFn fn = [](std::span<const double> p) { return std::vector<double>{std::log(p[0])}; };
    EXPECT_THROW(lm_minimize(fn, {-1.0}, Bounds::unbounded(1)), std::invalid_argument);
}

TEST(Lm, FiniteDifferenceJacobianMatchesAnalytic) {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> uf(2200, 2400), uc(0.01, 0.1), uw(20, 80);
    const auto x = xs(201, 2150.0, 2450.0);
    for (int draw = 0; draw < 20; ++draw) {
        std::vector<double> p;
        for (int l = 0; l < 3; ++l) {
            p.push_back(uf(rng));
            p.push_back(uc(rng));
            p.push_back(uw(rng));
        }
        const ResidualFn fn = [&](std::span<const double> q) { return dips(x, q); };
        const auto jac = detail::fd_jacobian(fn, p, fn(p), Bounds::unbounded(p.size()));
        for (std::size_t i = 0; i < x.size(); ++i)
            for (std::size_t l = 0; l < 9; l += 3) {
                const double f0 = p[l], c = p[l + 1], w = p[l + 2];
                const double h = w / 2, d = x[i] - f0, den = d * d + h * h;
                // dR/df0, dR/dC, dR/dw of R = 1 - C h^2/(d^2+h^2)
                const double a_f0 = c * lorentzian_derivative(x[i], f0, w);
                const double a_c = -lorentzian(x[i], f0, w);
                const double a_w = -c * (h * d * d / (den * den));
                const double an[3] = {a_f0, a_c, a_w};
                for (int k = 0; k < 3; ++k) {
                    const double fd = jac[l + k][i];
                    const double scale = std::max(std::abs(an[k]), 1e-3 * c / w);
                    EXPECT_NEAR(fd, an[k], 1e-5 * scale) << "draw " << draw << " row " << i << " param " << l + k;
                }
            }
    }
}
