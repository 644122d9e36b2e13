#pragma once

/// \file analysis.hpp
/// \brief Quantities derived from spectra: spectral slope and field
/// sensitivity, nuclear polarization from line areas, field estimates from
/// the centre frequency, and the reduced-mass Raman line.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vbodmr/common.hpp"
#include "vbodmr/constants.hpp"
#include "vbodmr/fit.hpp"
#include "vbodmr/spectrum.hpp"

namespace vbodmr {

enum class SlopeNormalization { raw, per_contrast };

inline std::string to_string(SlopeNormalization n) { return n == SlopeNormalization::raw ? "raw" : "per_contrast"; }

struct SensitivityReport {
    double max_slope = 0.0;        // per MHz
    double max_slope_frequency = 0.0;
    Curve slope_curve;             // dR/df (divided by C for per_contrast)
    double eta_relative = 0.0;     // 1 / max_slope
    SlopeNormalization normalization = SlopeNormalization::raw;
};

/// Closed-form dR/df of the mixture model on `grid`. The grid must resolve
/// the line shape: spacing <= linewidth / 20.
inline SensitivityReport spectral_slope(const SpectrumModel& model, const std::vector<double>& grid,
                                        SlopeNormalization norm = SlopeNormalization::raw) {
    model.validate();
    check_grid(grid);
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (grid[i] - grid[i - 1] > model.linewidth / 20.0 * (1.0 + 1e-12))
            throw std::invalid_argument("grid too coarse for slope evaluation (need spacing <= linewidth/20)");
    if (norm == SlopeNormalization::per_contrast && !(model.contrast > 0.0))
        throw std::invalid_argument("per-contrast normalization needs nonzero contrast");

    const auto lines = mixture_lines(model);
    const double scale = norm == SlopeNormalization::per_contrast ? 1.0 : model.contrast;
    SensitivityReport rep;
    rep.normalization = norm;
    rep.slope_curve.frequencies = grid;
    rep.slope_curve.values.resize(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        double d = 0.0;
        for (const auto& l : lines) d += l.weight * lorentzian_derivative(grid[i], l.frequency, model.linewidth);
        const double v = -scale * d;
        rep.slope_curve.values[i] = v;
        if (std::abs(v) > rep.max_slope) {
            rep.max_slope = std::abs(v);
            rep.max_slope_frequency = grid[i];
        }
    }
    rep.eta_relative = rep.max_slope > 0.0 ? 1.0 / rep.max_slope : std::numeric_limits<double>::infinity();
    return rep;
}

/// eta_a / eta_b = max_slope_b / max_slope_a.
inline double relative_sensitivity(const SensitivityReport& a, const SensitivityReport& b) {
    if (a.normalization != b.normalization)
        throw std::invalid_argument("sensitivity reports use different normalizations");
    if (!(a.max_slope > 0.0) || !(b.max_slope > 0.0))
        throw std::domain_error("relative sensitivity undefined for a zero slope");
    return b.max_slope / a.max_slope;
}

/// Shot-noise limited field B_z,min = 1 / (gamma_e sqrt(I0 T) |dR/df|), mT.
/// `max_slope` must be the raw (not per-contrast) slope in 1/MHz.
inline double shot_noise_field_limit(double max_slope, double photon_rate_hz, double duration_s,
                                     double gamma_e = constants::gamma_e_mhz_per_mt) {
    if (!(max_slope > 0.0) || !(photon_rate_hz > 0.0) || !(duration_s > 0.0))
        throw std::invalid_argument("slope, photon rate and duration must be positive");
    return 1.0 / (gamma_e * std::sqrt(photon_rate_hz * duration_s) * max_slope);
}

/// Field sensitivity eta_B = 1 / (gamma_e sqrt(I0) |dR/df|), mT / sqrt(Hz).
inline double shot_noise_sensitivity(double max_slope, double photon_rate_hz,
                                     double gamma_e = constants::gamma_e_mhz_per_mt) {
    return shot_noise_field_limit(max_slope, photon_rate_hz, 1.0, gamma_e);
}

struct PolarizationReport {
    std::map<HalfInt, double> areas;
    double polarization = 0.0;
    HalfInt m_max;
};

/// sum(m A_m) / (m_max sum(A_m)).
inline PolarizationReport polarization_from_areas(const std::map<HalfInt, double>& areas, HalfInt m_max) {
    if (!(m_max.value() > 0.0)) throw std::invalid_argument("m_max must be positive");
    double num = 0.0, den = 0.0;
    for (const auto& [m, a] : areas) {
        if (!(a >= 0.0)) throw std::invalid_argument("areas must be nonnegative");
        if (std::abs(m.value()) > m_max.value()) throw std::invalid_argument("m_tot exceeds m_max");
        num += m.value() * a;
        den += a;
    }
    if (!(den > 0.0)) throw std::invalid_argument("all areas are zero");
    return {areas, num / (m_max.value() * den), m_max};
}

/// Assigns fitted lines, ascending in frequency, to m_tot = -m_max ... +m_max
/// in unit steps and evaluates the polarization from their area proxies.
inline PolarizationReport polarization_from_lines(const std::vector<FittedLine>& lines, HalfInt m_max) {
    const int expected = m_max.twice() + 1;
    if (static_cast<int>(lines.size()) != expected)
        throw std::invalid_argument("expected " + std::to_string(expected) + " lines for m_max = " + m_max.str());
    std::vector<FittedLine> sorted = lines;
    std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.center < b.center; });
    std::map<HalfInt, double> areas;
    for (int i = 0; i < expected; ++i) areas[HalfInt::from_twice(-m_max.twice() + 2 * i)] = sorted[i].area;
    return polarization_from_areas(areas, m_max);
}

struct FieldEstimate {
    double field_mt = 0.0;
    bool wrong_branch = false;  // negative field: f lies above D
};

/// B_z = (D - f_{-,0}) / gamma_e.
inline FieldEstimate field_from_center(double d_gs, double f_center, double gamma_e = constants::gamma_e_mhz_per_mt) {
    if (!(gamma_e > 0.0)) throw std::invalid_argument("gamma_e must be positive");
    const double b = (d_gs - f_center) / gamma_e;
    return {b, b < 0.0};
}

struct RamanPoint {
    double boron_frac_10 = constants::natural_b10_fraction;
    double nitrogen_frac_15 = 0.0;
    double reduced_mass = 0.0;
    double shift = 0.0;  // cm^-1
};

/// Reduced mass of the B-N oscillator with composition-averaged masses.
inline double reduced_mass_from_masses(double m_b, double m_n) {
    if (!(m_b > 0.0) || !(m_n > 0.0)) throw std::invalid_argument("masses must be positive");
    return m_b * m_n / (m_b + m_n);
}

inline double reduced_mass(double boron_frac_10, double nitrogen_frac_15) {
    if (!(boron_frac_10 >= 0.0 && boron_frac_10 <= 1.0) || !(nitrogen_frac_15 >= 0.0 && nitrogen_frac_15 <= 1.0))
        throw std::invalid_argument("isotope fractions must lie in [0,1]");
    using namespace constants;
    const double m_b = boron_frac_10 * mass_b10 + (1.0 - boron_frac_10) * mass_b11;
    const double m_n = (1.0 - nitrogen_frac_15) * mass_n14 + nitrogen_frac_15 * mass_n15;
    return reduced_mass_from_masses(m_b, m_n);
}

/// Empirical Raman line -537 sqrt(mu) + 2691, cm^-1.
inline double raman_shift(double mu) {
    if (!(mu > 0.0)) throw std::invalid_argument("reduced mass must be positive");
    return constants::raman_slope * std::sqrt(mu) + constants::raman_intercept;
}

inline RamanPoint raman_point(double boron_frac_10, double nitrogen_frac_15) {
    RamanPoint p{boron_frac_10, nitrogen_frac_15, reduced_mass(boron_frac_10, nitrogen_frac_15), 0.0};
    p.shift = raman_shift(p.reduced_mass);
    return p;
}

}  // namespace vbodmr
