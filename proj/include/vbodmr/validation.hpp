#pragma once

/// \file validation.hpp
/// \brief Self-check suite behind `vbodmr validate`: ladder enumeration,
/// eigensolver accuracy, full-vs-effective Hamiltonian equivalence, the
/// nuclear Zeeman bound, spectrum line placement and the 15N/14N slope ratio.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "vbodmr/analysis.hpp"
#include "vbodmr/hermitian.hpp"
#include "vbodmr/spectrum.hpp"
#include "vbodmr/spin_core.hpp"

namespace vbodmr {

struct ValidationOptions {
    int draws = 100;
    std::uint64_t seed = 1;
    double eigensolver_tol = 1e-9;
    double oracle_tol_mhz = 1e-6;
    double slope_ratio_target = 1.8;
    double slope_ratio_tol = 0.05;
    /// Test hook: replaces the #0 degeneracy table with a wrong one.
    bool inject_wrong_ladder = false;
};

struct ValidationGroup {
    std::string name;
    bool passed = false;
    double measured = 0.0;
    double tolerance = 0.0;
    std::string detail;
};

namespace detail {

/// Degeneracies by direct enumeration of all nuclear product states.
inline std::map<HalfInt, int> brute_force_ladder(int n15_count) {
    std::map<HalfInt, int> out;
    const SpinSystem sys = make_configuration(n15_count, 0.0, 0.0, 0.0, 0.0);
    for (const auto& label : nuclear_states(sys)) ++out[label[0] + label[1] + label[2]];
    return out;
}

inline CMatrix random_hermitian(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    CMatrix m(n);
    for (std::size_t i = 0; i < n; ++i) {
        m(i, i) = g(rng);
        for (std::size_t j = i + 1; j < n; ++j) {
            const cplx v(g(rng), g(rng));
            m(i, j) = v;
            m(j, i) = std::conj(v);
        }
    }
    return m;
}

inline double max_frequency_gap(const TransitionSet& a, const TransitionSet& b) {
    if (a.entries.size() != b.entries.size()) return std::numeric_limits<double>::infinity();
    double worst = 0.0;
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
        if (a.entries[i].branch != b.entries[i].branch || a.entries[i].nuclear != b.entries[i].nuclear)
            return std::numeric_limits<double>::infinity();
        worst = std::max(worst, std::abs(a.entries[i].frequency_mhz - b.entries[i].frequency_mhz));
    }
    return worst;
}

}  // namespace detail

inline ValidationGroup validate_ladder(const ValidationOptions& opt) {
    ValidationGroup g{"ladder", true, 0.0, 0.0, ""};
    const std::array<int, 4> expected_levels{27, 18, 12, 8};
    for (int n = 0; n < 4; ++n) {
        LevelLadder ladder = enumerate_ladder(n);
        if (opt.inject_wrong_ladder && n == 0) ladder.rungs[3].degeneracy = 6;
        const auto brute = detail::brute_force_ladder(n);
        int total = 0;
        for (const auto& r : ladder.rungs) {
            total += r.degeneracy;
            const auto it = brute.find(r.m_tot);
            const int want = it == brute.end() ? 0 : it->second;
            if (want != r.degeneracy) {
                g.passed = false;
                g.measured += 1.0;
                g.detail += "#" + std::to_string(n) + " m_tot=" + r.m_tot.str() + ": " + std::to_string(r.degeneracy) +
                            " vs " + std::to_string(want) + "; ";
            }
        }
        if (total != expected_levels[n] || brute.size() != ladder.rungs.size()) {
            g.passed = false;
            g.measured += 1.0;
            g.detail += "#" + std::to_string(n) + " N_level=" + std::to_string(total) + "; ";
        }
    }
    if (g.passed) g.detail = "27/18/12/8 levels, degeneracies match product-state enumeration";
    return g;
}

inline ValidationGroup validate_eigensolver(const ValidationOptions& opt) {
    std::mt19937_64 rng(opt.seed);
    const HermitianMatrix h(detail::random_hermitian(81, rng));
    const auto eig = eigen_hermitian(h);
    const double residual = max_relative_residual(h, eig);
    const double unitary = unitarity_error(eig.vectors);
    CMatrix d(81);
    for (std::size_t k = 0; k < 81; ++k) d(k, k) = eig.values[k];
    const CMatrix rec = eig.vectors * d * eig.vectors.adjoint();
    const double recon = (rec - h.matrix()).max_abs() / h.matrix().max_abs();
    const double measured = std::max({residual, unitary, recon});
    return {"eigensolver", measured <= opt.eigensolver_tol, measured, opt.eigensolver_tol,
            "81x81 random Hermitian: residual " + detail::fmt_double(residual) + ", unitarity " +
                detail::fmt_double(unitary) + ", reconstruction " + detail::fmt_double(recon) + " (" +
                std::to_string(eig.sweeps) + " sweeps)"};
}

inline ValidationGroup validate_oracle_equivalence(const ValidationOptions& opt) {
    std::mt19937_64 rng(opt.seed + 1);
    std::uniform_real_distribution<double> ud(3300.0, 3600.0), ub(10.0, 100.0), ua(-80.0, 80.0);
    double worst = 0.0;
    for (int n = 0; n < 4; ++n)
        for (int k = 0; k < opt.draws; ++k) {
            SpinSystem sys = make_configuration(n, 0.0, 0.0, ud(rng), ub(rng));
            for (auto& s : sys.sites) s.hfi[2][2] = ua(rng);
            worst = std::max(worst, detail::max_frequency_gap(transition_frequencies(sys, TransitionMode::full),
                                                              transition_frequencies(sys, TransitionMode::effective)));
        }
    return {"oracle_equivalence", worst <= opt.oracle_tol_mhz, worst, opt.oracle_tol_mhz,
            std::to_string(4 * opt.draws) + " random draws, full vs effective transitions"};
}

inline ValidationGroup validate_nuclear_zeeman_bound(const ValidationOptions& opt) {
    std::mt19937_64 rng(opt.seed + 2);
    std::uniform_real_distribution<double> ud(3300.0, 3600.0), ub(10.0, 100.0), ua(-80.0, 80.0);
    double worst_ratio = 0.0;
    const int draws = std::max(1, opt.draws / 4);
    for (int n = 0; n < 4; ++n)
        for (int k = 0; k < draws; ++k) {
            SpinSystem sys = make_configuration(n, 0.0, 0.0, ud(rng), ub(rng));
            for (auto& s : sys.sites) s.hfi[2][2] = ua(rng);
            const auto eff = transition_frequencies(sys, TransitionMode::effective);
            sys.include_nuclear_zeeman = true;
            const auto full = transition_frequencies(sys, TransitionMode::full);
            double bound = 0.0;
            for (const auto& s : sys.sites) bound += std::abs(s.species.gamma_khz_per_mt()) * 1e-3 * sys.electron.b_field.z;
            worst_ratio = std::max(worst_ratio, detail::max_frequency_gap(full, eff) / bound);
        }
    return {"nuclear_zeeman_bound", worst_ratio <= 1.0, worst_ratio, 1.0,
            "max shift / sum_j |gamma_j| B_z with nuclear Zeeman on"};
}

inline ValidationGroup validate_spectrum_lines(const ValidationOptions& opt) {
    std::mt19937_64 rng(opt.seed + 3);
    std::uniform_real_distribution<double> ud(3300.0, 3600.0), ub(10.0, 100.0), ua(-80.0, 80.0);
    double worst = 0.0;
    for (int n = 0; n < 4; ++n)
        for (int k = 0; k < std::max(1, opt.draws / 4); ++k) {
            const double d = ud(rng), bz = ub(rng), a14 = ua(rng), a15 = ua(rng);
            const SpinSystem sys = make_configuration(n, a14, a15, d, bz);
            for (int branch : {-1, 1}) {
                SpectrumModel m;
                m.branch = branch;
                m.f_center = d + branch * sys.electron.gamma_e * bz;
                m.a14 = a14;
                m.a15 = a15;
                auto spin = transition_frequencies(sys, TransitionMode::effective).frequencies(branch);
                std::sort(spin.begin(), spin.end());
                spin.erase(std::unique(spin.begin(), spin.end(),
                                       [](double x, double y) { return std::abs(x - y) <= kLineMergeTol; }),
                           spin.end());
                const auto lines = config_lines(m, n);
                if (lines.size() != spin.size()) {
                    worst = std::numeric_limits<double>::infinity();
                    continue;
                }
                for (std::size_t i = 0; i < lines.size(); ++i)
                    worst = std::max(worst, std::abs(lines[i].frequency - spin[i]));
            }
        }
    return {"spectrum_lines", worst == 0.0, worst, 0.0, "analytic line positions vs effective transitions"};
}

/// Per-contrast max-slope ratio of pure 15N (|A| = 64 MHz) to pure 14N
/// (|A| = 43 MHz) spectra at dnu = 50 MHz.
inline double isotope_slope_ratio() {
    SpectrumModel m14;
    m14.f_center = 2310.0;
    m14.contrast = 0.1;
    m14.linewidth = 50.0;
    m14.a14 = constants::a14_typical_mhz;
    m14.a15 = constants::a15_typical_mhz;
    m14.p15 = 0.0;
    SpectrumModel m15 = m14;
    m15.p15 = 1.0;
    const auto grid = default_grid(m14.f_center);
    const auto s14 = spectral_slope(m14, grid, SlopeNormalization::per_contrast);
    const auto s15 = spectral_slope(m15, grid, SlopeNormalization::per_contrast);
    return relative_sensitivity(s14, s15);
}

inline ValidationGroup validate_slope_ratio(const ValidationOptions& opt) {
    const double ratio = isotope_slope_ratio();
    const double dev = std::abs(ratio - opt.slope_ratio_target);
    return {"slope_ratio", dev <= opt.slope_ratio_tol, ratio, opt.slope_ratio_tol,
            "15N/14N per-contrast max slope, target " + detail::fmt_double(opt.slope_ratio_target)};
}

inline std::vector<ValidationGroup> run_validation(const ValidationOptions& opt) {
    return {validate_ladder(opt),           validate_eigensolver(opt),   validate_oracle_equivalence(opt),
            validate_nuclear_zeeman_bound(opt), validate_spectrum_lines(opt), validate_slope_ratio(opt)};
}

}  // namespace vbodmr
