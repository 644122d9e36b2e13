#pragma once

/// \file spectrum.hpp
/// \brief Analytic ODMR forward model: nuclear level ladders, Lorentzian
/// superposition per defect configuration #n (n = number of 15N among the
/// three nearest nitrogens) and binomial isotope mixtures.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vbodmr/common.hpp"
#include "vbodmr/constants.hpp"

namespace vbodmr {

struct Rung {
    HalfInt m_tot;
    int degeneracy = 0;
};

struct LevelLadder {
    int n15_count = 0;
    std::vector<Rung> rungs;  // ascending m_tot
    int n_level = 0;

    int degeneracy(HalfInt m) const {
        for (const auto& r : rungs)
            if (r.m_tot == m) return r.degeneracy;
        return 0;
    }
    HalfInt m_max() const { return rungs.back().m_tot; }
};

/// Degeneracy of each total projection m_tot for defect #n, by convolving
/// per-site multiplicities ({1,1,1} per 14N, {1,1} per 15N).
inline LevelLadder enumerate_ladder(int n15_count) {
    if (n15_count < 0 || n15_count > 3) throw std::invalid_argument("n15_count must be in [0,3]");
    // counts indexed by 2*m_tot + offset
    std::vector<int> counts{1};
    int min_twice = 0;
    for (int j = 0; j < 3; ++j) {
        const bool is15 = j >= 3 - n15_count;
        const std::vector<int> site = is15 ? std::vector<int>{1, 0, 1} : std::vector<int>{1, 0, 1, 0, 1};
        std::vector<int> next(counts.size() + site.size() - 1, 0);
        for (std::size_t a = 0; a < counts.size(); ++a)
            for (std::size_t b = 0; b < site.size(); ++b) next[a + b] += counts[a] * site[b];
        counts = std::move(next);
        min_twice -= is15 ? 1 : 2;
    }
    LevelLadder ladder;
    ladder.n15_count = n15_count;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] == 0) continue;
        ladder.rungs.push_back({HalfInt::from_twice(min_twice + static_cast<int>(i)), counts[i]});
        ladder.n_level += counts[i];
    }
    return ladder;
}

/// Per-nuclear-state occupation, keyed by m_tot. The unpolarized default is
/// 1/N_level for every state.
struct Populations {
    std::map<HalfInt, double> weights;

    static Populations unpolarized(const LevelLadder& ladder) {
        Populations p;
        for (const auto& r : ladder.rungs) p.weights[r.m_tot] = 1.0 / ladder.n_level;
        return p;
    }

    /// Scales weights so that sum(degeneracy * weight) = 1.
    static Populations normalized(const LevelLadder& ladder, std::map<HalfInt, double> raw) {
        double total = 0.0;
        for (const auto& r : ladder.rungs) total += r.degeneracy * raw.at(r.m_tot);
        if (!(total > 0.0)) throw std::invalid_argument("populations sum to zero");
        for (auto& [m, w] : raw) w /= total;
        return Populations{std::move(raw)};
    }

    double weight(HalfInt m) const {
        const auto it = weights.find(m);
        if (it == weights.end()) throw std::invalid_argument("no population for m_tot = " + m.str());
        return it->second;
    }

    void validate(const LevelLadder& ladder) const {
        double total = 0.0;
        for (const auto& r : ladder.rungs) {
            const double w = weight(r.m_tot);
            if (w < 0.0) throw std::invalid_argument("negative population at m_tot = " + r.m_tot.str());
            total += r.degeneracy * w;
        }
        for (const auto& [m, w] : weights)
            if (ladder.degeneracy(m) == 0)
                throw std::invalid_argument("population for m_tot = " + m.str() + " not in ladder #" +
                                            std::to_string(ladder.n15_count));
        if (std::abs(total - 1.0) > 1e-12)
            throw std::invalid_argument("populations are not normalized (sum " + std::to_string(total) + ")");
    }
};

struct SpectrumModel {
    double f_center = 0.0;  // f_{+-1,0}, MHz
    int branch = -1;
    double contrast = 0.05;
    double linewidth = 50.0;  // FWHM, MHz
    double a14 = constants::a14_typical_mhz;
    double a15 = -constants::a15_typical_mhz;
    double p15 = 0.0;
    std::array<std::optional<Populations>, 4> populations;

    void validate() const {
        if (branch != -1 && branch != 1) throw std::invalid_argument("branch must be -1 or +1");
        if (!(contrast >= 0.0 && contrast < 1.0)) throw std::invalid_argument("contrast must lie in [0,1)");
        if (!(linewidth > 0.0)) throw std::invalid_argument("linewidth must be positive");
        if (!(p15 >= 0.0 && p15 <= 1.0)) throw std::invalid_argument("p15 must lie in [0,1]");
        if (!std::isfinite(f_center) || !std::isfinite(a14) || !std::isfinite(a15))
            throw std::invalid_argument("non-finite spectrum parameter");
        for (int n = 0; n < 4; ++n)
            if (populations[n]) populations[n]->validate(enumerate_ladder(n));
    }

    Populations populations_for(int n15_count) const {
        if (populations[n15_count]) return *populations[n15_count];
        return Populations::unpolarized(enumerate_ladder(n15_count));
    }
};

struct Curve {
    std::vector<double> frequencies;  // MHz, strictly increasing
    std::vector<double> values;
};

inline void check_grid(const std::vector<double>& grid) {
    if (grid.empty()) throw std::invalid_argument("frequency grid is empty");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] > grid[i - 1])) throw std::invalid_argument("frequency grid must be strictly increasing");
}

inline std::vector<double> uniform_grid(double start, double stop, std::size_t points) {
    if (points < 2 || !(stop > start)) throw std::invalid_argument("grid needs >= 2 points and stop > start");
    std::vector<double> g(points);
    const double step = (stop - start) / static_cast<double>(points - 1);
    for (std::size_t i = 0; i < points; ++i) g[i] = start + step * static_cast<double>(i);
    g.back() = stop;
    return g;
}

inline constexpr double kDefaultHalfSpan = 250.0;
inline constexpr std::size_t kDefaultGridPoints = 801;

/// 801 points over f_center +- 250 MHz.
inline std::vector<double> default_grid(double f_center) {
    return uniform_grid(f_center - kDefaultHalfSpan, f_center + kDefaultHalfSpan, kDefaultGridPoints);
}

/// Unit-peak Lorentzian, L(f0) = 1, L(f0 +- fwhm/2) = 1/2.
inline double lorentzian(double f, double f0, double fwhm) {
    if (!(fwhm > 0.0)) throw std::invalid_argument("fwhm must be positive");
    const double h = 0.5 * fwhm;
    const double x = f - f0;
    return h * h / (x * x + h * h);
}

inline double lorentzian_derivative(double f, double f0, double fwhm) {
    const double h = 0.5 * fwhm;
    const double x = f - f0;
    const double den = x * x + h * h;
    return -2.0 * x * h * h / (den * den);
}

/// One resolved resonance line; `weight` is its share of the contrast.
struct Line {
    double frequency = 0.0;
    double weight = 0.0;
};

inline constexpr double kLineMergeTol = 1e-9;

/// Lines of defect #n: every nuclear product state (14N sites first) is
/// placed at f_center + branch * sum_j A_j m_j with its population weight,
/// then states at coinciding frequencies are merged. Sorted by frequency.
inline std::vector<Line> config_lines(const SpectrumModel& model, int n15_count) {
    if (n15_count < 0 || n15_count > 3) throw std::invalid_argument("n15_count must be in [0,3]");
    const Populations pops = model.populations_for(n15_count);
    std::vector<Line> raw;
    const int n14 = 3 - n15_count;
    // iterate twice-projections: 14N in {2,0,-2}, 15N in {1,-1}
    std::array<std::vector<int>, 3> proj;
    std::array<double, 3> coupling{};
    for (int j = 0; j < 3; ++j) {
        proj[j] = j < n14 ? std::vector<int>{2, 0, -2} : std::vector<int>{1, -1};
        coupling[j] = j < n14 ? model.a14 : model.a15;
    }
    for (int t1 : proj[0])
        for (int t2 : proj[1])
            for (int t3 : proj[2]) {
                double hf = 0.0;
                hf += coupling[0] * (0.5 * t1);
                hf += coupling[1] * (0.5 * t2);
                hf += coupling[2] * (0.5 * t3);
                const double w = pops.weight(HalfInt::from_twice(t1 + t2 + t3));
                raw.push_back({model.f_center + model.branch * hf, w});
            }
    std::sort(raw.begin(), raw.end(), [](const Line& a, const Line& b) { return a.frequency < b.frequency; });
    std::vector<Line> merged;
    for (const auto& l : raw) {
        if (!merged.empty() && std::abs(l.frequency - merged.back().frequency) <= kLineMergeTol)
            merged.back().weight += l.weight;
        else
            merged.push_back(l);
    }
    return merged;
}

/// (P0, P1, P2, P3) for a spatially uniform 15N fraction.
inline std::array<double, 4> binomial_fractions(double p15) {
    if (!(p15 >= 0.0 && p15 <= 1.0)) throw std::invalid_argument("p15 must lie in [0,1]");
    const double q = 1.0 - p15;
    return {q * q * q, 3.0 * q * q * p15, 3.0 * q * p15 * p15, p15 * p15 * p15};
}

/// All lines of the isotope mixture, weights scaled by the configuration
/// fractions. Configurations with zero fraction are skipped.
inline std::vector<Line> mixture_lines(const SpectrumModel& model) {
    const auto frac = binomial_fractions(model.p15);
    std::vector<Line> out;
    for (int n = 0; n < 4; ++n) {
        if (frac[n] == 0.0) continue;
        for (auto l : config_lines(model, n)) {
            l.weight *= frac[n];
            out.push_back(l);
        }
    }
    return out;
}

inline Curve lines_curve(const std::vector<Line>& lines, double contrast, double fwhm,
                         const std::vector<double>& grid) {
    check_grid(grid);
    Curve c{grid, std::vector<double>(grid.size(), 1.0)};
    for (std::size_t i = 0; i < grid.size(); ++i) {
        double s = 0.0;
        for (const auto& l : lines) s += l.weight * lorentzian(grid[i], l.frequency, fwhm);
        c.values[i] = 1.0 - contrast * s;
    }
    return c;
}

/// R(f) = 1 - C sum_states w_state L(f; f_state, dnu) for defect #n.
inline Curve config_spectrum(const SpectrumModel& model, int n15_count, const std::vector<double>& grid) {
    model.validate();
    return lines_curve(config_lines(model, n15_count), model.contrast, model.linewidth, grid);
}

/// R_tot = sum_n P_n R_n with binomial P_n(p15).
inline Curve mixture_spectrum(const SpectrumModel& model, const std::vector<double>& grid) {
    model.validate();
    check_grid(grid);
    const auto frac = binomial_fractions(model.p15);
    Curve out{grid, std::vector<double>(grid.size(), 0.0)};
    for (int n = 0; n < 4; ++n) {
        if (frac[n] == 0.0) continue;
        const Curve c = config_spectrum(model, n, grid);
        for (std::size_t i = 0; i < grid.size(); ++i) out.values[i] += frac[n] * c.values[i];
    }
    return out;
}

/// A_zz scaled by the 15N/14N gyromagnetic ratio (sign flips).
inline double predict_a15_from_a14(double a14) {
    return a14 * (constants::gamma_n15_khz_per_mt / constants::gamma_n14_khz_per_mt);
}

}  // namespace vbodmr
