#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "vbodmr/spectrum.hpp"
#include "vbodmr/spin_core.hpp"

using namespace vbodmr;

namespace {

SpectrumModel quartet_model() {
    SpectrumModel m;
    m.f_center = 2308.0;
    m.contrast = 0.11;
    m.linewidth = 51.0;
    m.a15 = 64.0;
    m.p15 = 1.0;
    return m;
}

double at(const SpectrumModel& m, int n, double f) { return config_spectrum(m, n, {f}).values[0]; }

std::vector<double> local_minima(const Curve& c) {
    std::vector<double> out;
    for (std::size_t i = 1; i + 1 < c.values.size(); ++i)
        if (c.values[i] < c.values[i - 1] && c.values[i] < c.values[i + 1]) out.push_back(c.frequencies[i]);
    return out;
}

// largest positive second difference strictly between the outer dips
double max_curvature(const Curve& c, double lo, double hi) {
    double worst = 0.0;
    const double h = c.frequencies[1] - c.frequencies[0];
    for (std::size_t i = 1; i + 1 < c.values.size(); ++i) {
        if (c.frequencies[i] <= lo || c.frequencies[i] >= hi) continue;
        worst = std::max(worst, (c.values[i + 1] - 2 * c.values[i] + c.values[i - 1]) / (h * h));
    }
    return worst;
}

}  // namespace

TEST(Ladder, DegeneracyTables) {
    const std::vector<std::vector<int>> tables{{1, 3, 6, 7, 6, 3, 1}, {1, 3, 5, 5, 3, 1}, {1, 3, 4, 3, 1}, {1, 3, 3, 1}};
    const int levels[4] = {27, 18, 12, 8};
    const int twice_max[4] = {6, 5, 4, 3};
    for (int n = 0; n < 4; ++n) {
        const LevelLadder l = enumerate_ladder(n);
        EXPECT_EQ(l.n_level, levels[n]);
        std::vector<int> deg;
        int sum = 0;
        for (const auto& r : l.rungs) {
            deg.push_back(r.degeneracy);
            sum += r.degeneracy;
            EXPECT_EQ(r.degeneracy, l.degeneracy(-r.m_tot));
        }
        EXPECT_EQ(deg, tables[n]);
        EXPECT_EQ(sum, levels[n]);
        EXPECT_EQ(l.rungs.front().m_tot.twice(), -twice_max[n]);
        EXPECT_EQ(l.m_max().twice(), twice_max[n]);
        for (std::size_t i = 1; i < l.rungs.size(); ++i)
            EXPECT_EQ(l.rungs[i].m_tot.twice() - l.rungs[i - 1].m_tot.twice(), 2);
    }
    EXPECT_THROW(enumerate_ladder(4), std::invalid_argument);
    EXPECT_THROW(enumerate_ladder(-1), std::invalid_argument);
}

TEST(Ladder, MatchesProductStateEnumeration) {
    for (int n = 0; n < 4; ++n) {
        std::map<HalfInt, int> brute;
        for (const auto& lbl : nuclear_states(make_configuration(n, 0, 0, 0, 0))) ++brute[lbl[0] + lbl[1] + lbl[2]];
        const LevelLadder l = enumerate_ladder(n);
        ASSERT_EQ(brute.size(), l.rungs.size());
        for (const auto& r : l.rungs) EXPECT_EQ(brute.at(r.m_tot), r.degeneracy);
    }
}

TEST(PopulationsType, UnpolarizedAndNormalized) {
    const LevelLadder l = enumerate_ladder(0);
    const Populations u = Populations::unpolarized(l);
    EXPECT_NO_THROW(u.validate(l));
    EXPECT_DOUBLE_EQ(u.weight(HalfInt::from_int(2)), 1.0 / 27.0);

    std::map<HalfInt, double> raw;
    for (const auto& r : l.rungs) raw[r.m_tot] = 1.0 + r.m_tot.value();
    const Populations p = Populations::normalized(l, raw);
    double total = 0.0;
    for (const auto& r : l.rungs) total += r.degeneracy * p.weight(r.m_tot);
    EXPECT_NEAR(total, 1.0, 1e-12);

    Populations bad = u;
    bad.weights[HalfInt::from_int(0)] = -0.01;
    EXPECT_THROW(bad.validate(l), std::invalid_argument);
    Populations stray = u;
    stray.weights[HalfInt::from_twice(1)] = 0.0;
    EXPECT_THROW(stray.validate(l), std::invalid_argument);
}

TEST(Lorentzian, ClosedFormValues) {
    EXPECT_EQ(lorentzian(2300.0, 2300.0, 50.0), 1.0);
    EXPECT_DOUBLE_EQ(lorentzian(2325.0, 2300.0, 50.0), 0.5);
    EXPECT_DOUBLE_EQ(lorentzian(2350.0, 2300.0, 50.0), 0.2);
    EXPECT_THROW(lorentzian(0.0, 0.0, 0.0), std::invalid_argument);
}

TEST(Lorentzian, DerivativeMatchesFiniteDifference) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> uf(-100, 100), uw(5, 80);
    for (int k = 0; k < 200; ++k) {
        const double f = uf(rng), w = uw(rng), h = w * 1e-4;
        const double fd = (lorentzian(f + h, 0.0, w) - lorentzian(f - h, 0.0, w)) / (2 * h);
        EXPECT_NEAR(lorentzian_derivative(f, 0.0, w), fd, 1e-7 * std::max(1.0, std::abs(fd)) + 1e-12);
    }
}

TEST(ConfigSpectrum, FifteenNQuartetDepthRatios) {
    SpectrumModel m = quartet_model();
    m.linewidth = 0.5;  // isolated-line limit
    const double c = m.contrast;
    const double depths[4] = {1, 3, 3, 1};
    const double pos[4] = {-96, -32, 32, 96};
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(1.0 - at(m, 3, m.f_center + pos[i]), c * depths[i] / 8.0, 1e-5);
    m.linewidth = 51.0;
    const auto mins = local_minima(config_spectrum(m, 3, uniform_grid(2100, 2516, 4161)));
    ASSERT_EQ(mins.size(), 4u);
    // overlap pulls the outer minima inward; the inner pair stays symmetric
    EXPECT_NEAR(mins[1] + mins[2], 2 * m.f_center, 1e-9);
}

TEST(ConfigSpectrum, LinePositionsForQuartet) {
    SpectrumModel m = quartet_model();
    const auto lines = config_lines(m, 3);
    ASSERT_EQ(lines.size(), 4u);
    const double pos[4] = {-96, -32, 32, 96};
    const double w[4] = {1, 3, 3, 1};
    for (int i = 0; i < 4; ++i) {
        EXPECT_DOUBLE_EQ(lines[i].frequency, m.f_center + pos[i]);
        EXPECT_NEAR(lines[i].weight, w[i] / 8.0, 1e-15);
    }
}

TEST(ConfigSpectrum, ZeroContrastIsFlat) {
    SpectrumModel m = quartet_model();
    m.contrast = 0.0;
    for (int n = 0; n < 4; ++n)
        for (double v : config_spectrum(m, n, default_grid(m.f_center)).values) EXPECT_EQ(v, 1.0);
}

TEST(ConfigSpectrum, CentralDipOfFourteenN) {
    SpectrumModel m;
    m.f_center = 2312.0;
    m.contrast = 0.056;
    m.linewidth = 0.2;
    m.a14 = 43.0;
    EXPECT_NEAR(1.0 - at(m, 0, m.f_center), 7.0 / 27.0 * m.contrast, 1e-6);
    const auto c = config_spectrum(m, 0, uniform_grid(2150, 2474, 3241));
    const auto imin = std::min_element(c.values.begin(), c.values.end()) - c.values.begin();
    EXPECT_NEAR(c.frequencies[imin], m.f_center, 1e-9);
}

TEST(ConfigSpectrum, MixedConfigurationsMergeCoincidentStates) {
    SpectrumModel m;
    m.f_center = 2300.0;
    m.a14 = 32.0;
    m.a15 = 64.0;  // 15N +-1/2 lands on the 14N +-1 grid
    const auto lines = config_lines(m, 1);
    double total = 0.0;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        total += lines[i].weight;
        if (i) {
            EXPECT_GT(lines[i].frequency - lines[i - 1].frequency, kLineMergeTol);
        }
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_EQ(lines.size(), 7u);  // offsets 32 * {-3..3} MHz
}

TEST(ConfigSpectrum, LinesMatchEffectiveTransitionsExactly) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> ud(3300, 3600), ub(10, 100), ua(-80, 80);
    for (int n = 0; n < 4; ++n)
        for (int k = 0; k < 25; ++k) {
            const double d = ud(rng), bz = ub(rng), a14 = ua(rng), a15 = ua(rng);
            const SpinSystem sys = make_configuration(n, a14, a15, d, bz);
            for (int branch : {-1, 1}) {
                SpectrumModel m;
                m.branch = branch;
                m.f_center = d + branch * 28.0 * bz;
                m.a14 = a14;
                m.a15 = a15;
                auto f = transition_frequencies(sys, TransitionMode::effective).frequencies(branch);
                std::sort(f.begin(), f.end());
                f.erase(std::unique(f.begin(), f.end(), [](double x, double y) { return std::abs(x - y) <= kLineMergeTol; }),
                        f.end());
                const auto lines = config_lines(m, n);
                ASSERT_EQ(lines.size(), f.size());
                for (std::size_t i = 0; i < f.size(); ++i) EXPECT_EQ(lines[i].frequency, f[i]);
            }
        }
}

TEST(ConfigSpectrum, PolarizedWeightsShiftDepth) {
    SpectrumModel m = quartet_model();
    m.linewidth = 0.5;
    m.a15 = -64.0;  // branch -1: m_tot = +3/2 sits at f_center + 96
    const LevelLadder l = enumerate_ladder(3);
    std::map<HalfInt, double> raw;
    for (const auto& r : l.rungs) raw[r.m_tot] = r.m_tot.twice() == 3 ? 1.0 : 0.0;
    m.populations[3] = Populations::normalized(l, raw);
    EXPECT_NEAR(1.0 - at(m, 3, m.f_center + 96.0), m.contrast, 1e-5);
    EXPECT_NEAR(1.0 - at(m, 3, m.f_center - 96.0), 0.0, 1e-5);
}

TEST(Binomial, Fractions) {
    EXPECT_EQ(binomial_fractions(0.0), (std::array<double, 4>{1, 0, 0, 0}));
    EXPECT_EQ(binomial_fractions(1.0), (std::array<double, 4>{0, 0, 0, 1}));
    const auto f = binomial_fractions(0.6);
    const double want[4] = {0.064, 0.288, 0.432, 0.216};
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(f[i], want[i], 1e-15);
    for (double p : {0.0, 0.13, 0.5, 0.87, 1.0}) {
        const auto g = binomial_fractions(p);
        EXPECT_NEAR(g[0] + g[1] + g[2] + g[3], 1.0, 1e-15);
    }
    EXPECT_THROW(binomial_fractions(1.01), std::invalid_argument);
    EXPECT_THROW(binomial_fractions(-0.01), std::invalid_argument);
}

TEST(Mixture, PureFourteenNEqualsConfigZero) {
    SpectrumModel m;
    m.f_center = 2312.0;
    const auto g = default_grid(m.f_center);
    EXPECT_EQ(mixture_spectrum(m, g).values, config_spectrum(m, 0, g).values);
}

TEST(Mixture, LiteralWeightedSum) {
    SpectrumModel m;
    m.f_center = 2310.0;
    m.contrast = 0.08;
    m.linewidth = 40.0;
    m.a14 = 43.0;
    m.a15 = -64.0;
    for (double p : {0.2, 0.6, 0.9}) {
        m.p15 = p;
        const auto g = default_grid(m.f_center);
        const auto mix = mixture_spectrum(m, g);
        const auto frac = binomial_fractions(p);
        for (std::size_t i = 0; i < g.size(); ++i) {
            double want = 0.0;
            for (int n = 0; n < 4; ++n) want += frac[n] * config_spectrum(m, n, {g[i]}).values[0];
            EXPECT_NEAR(mix.values[i], want, 1e-12);
        }
    }
}

TEST(Mixture, FifteenNDipPositions) {
    SpectrumModel m = quartet_model();
    m.linewidth = 20.0;  // resolve the quartet so minima sit on the line centres
    const auto mins = local_minima(mixture_spectrum(m, uniform_grid(2108, 2508, 40001)));
    ASSERT_EQ(mins.size(), 4u);
    const double pos[4] = {-96, -32, 32, 96};
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(mins[i], m.f_center + pos[i], 1.5);
    // at the measured width the four dips remain resolved
    m.linewidth = 51.0;
    EXPECT_EQ(local_minima(mixture_spectrum(m, uniform_grid(2108, 2508, 4001))).size(), 4u);
}

TEST(Mixture, SixtyPercentOnlyUndulates) {
    SpectrumModel pure = quartet_model();
    SpectrumModel mixed = pure;
    mixed.p15 = 0.6;
    mixed.a14 = 43.0;
    mixed.a15 = -64.0;
    mixed.contrast = 0.056;
    mixed.linewidth = 47.0;
    const auto g = uniform_grid(2058, 2558, 2001);
    const double k_pure = max_curvature(mixture_spectrum(pure, g), pure.f_center - 96, pure.f_center + 96);
    const double k_mixed = max_curvature(mixture_spectrum(mixed, g), mixed.f_center - 96, mixed.f_center + 96);
    EXPECT_GT(k_pure, 0.0);
    EXPECT_LT(k_mixed, k_pure);
}

TEST(Properties, NormalizationAndRange) {
    for (int n = 0; n < 4; ++n) {
        SpectrumModel m;
        m.f_center = 2300.0;
        m.contrast = 0.2;
        m.linewidth = 10.0 + 15.0 * n;
        m.a14 = 43.0;
        m.a15 = -64.0;
        const auto c = config_spectrum(m, n, default_grid(m.f_center));
        for (double v : c.values) {
            EXPECT_GT(v, 1.0 - m.contrast);
            EXPECT_LE(v, 1.0);
        }
        const double far = 10.0 * 2.0 * kDefaultHalfSpan;
        EXPECT_NEAR(at(m, n, m.f_center + far), 1.0, 1e-3 * m.contrast);
        EXPECT_NEAR(at(m, n, m.f_center - far), 1.0, 1e-3 * m.contrast);
    }
}

TEST(Properties, MirrorSymmetry) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> ud(0, 300);
    for (int n = 0; n < 4; ++n) {
        SpectrumModel m;
        m.f_center = 2311.7;
        m.a14 = 41.3;
        m.a15 = -63.2;
        for (int k = 0; k < 50; ++k) {
            const double d = ud(rng);
            EXPECT_NEAR(at(m, n, m.f_center + d), at(m, n, m.f_center - d), 1e-12);
        }
    }
}

TEST(Properties, BranchSymmetry) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> ud(-300, 300);
    for (int n = 0; n < 4; ++n) {
        SpectrumModel lower;
        lower.f_center = 2300.0;
        lower.a14 = 43.0;
        lower.a15 = -64.0;
        LevelLadder l = enumerate_ladder(n);
        std::map<HalfInt, double> raw;
        for (const auto& r : l.rungs) raw[r.m_tot] = 1.0 + 0.3 * r.m_tot.value();
        lower.populations[n] = Populations::normalized(l, raw);  // break mirror symmetry on purpose
        SpectrumModel upper = lower;
        upper.branch = 1;
        upper.f_center = 4600.0;
        upper.a14 = -lower.a14;
        upper.a15 = -lower.a15;
        for (int k = 0; k < 50; ++k) {
            const double d = ud(rng);
            EXPECT_NEAR(at(upper, n, upper.f_center + d), at(lower, n, lower.f_center + d), 1e-12);
        }
    }
}

TEST(Prediction, FifteenNFromFourteenN) {
    EXPECT_NEAR(predict_a15_from_a14(43.0), -60.3, 0.05);
    EXPECT_EQ(predict_a15_from_a14(0.0), 0.0);
    EXPECT_LT(predict_a15_from_a14(10.0), 0.0);
    EXPECT_GT(predict_a15_from_a14(-10.0), 0.0);
    EXPECT_NEAR(std::abs(predict_a15_from_a14(1.0)), 1.4027, 5e-5);
}

TEST(ModelValidation, RejectsOutOfRange) {
    SpectrumModel m;
    m.contrast = 1.0;
    EXPECT_THROW(m.validate(), std::invalid_argument);
    m.contrast = 0.1;
    m.linewidth = 0.0;
    EXPECT_THROW(m.validate(), std::invalid_argument);
    m.linewidth = 10.0;
    m.p15 = 1.5;
    EXPECT_THROW(m.validate(), std::invalid_argument);
    m.p15 = 0.5;
    m.branch = 0;
    EXPECT_THROW(m.validate(), std::invalid_argument);
    m.branch = 1;
    EXPECT_NO_THROW(m.validate());
}

TEST(Grid, DefaultAndChecks) {
    const auto g = default_grid(2300.0);
    EXPECT_EQ(g.size(), 801u);
    EXPECT_DOUBLE_EQ(g.front(), 2050.0);
    EXPECT_DOUBLE_EQ(g.back(), 2550.0);
    EXPECT_NEAR(g[1] - g[0], 0.625, 1e-12);
    EXPECT_THROW(check_grid({}), std::invalid_argument);
    EXPECT_THROW(check_grid({1.0, 1.0}), std::invalid_argument);
    EXPECT_THROW(uniform_grid(2.0, 1.0, 5), std::invalid_argument);
}
