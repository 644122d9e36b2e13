#pragma once

/// \file fit.hpp
/// \brief Parameter estimation from measured ODMR curves: the constrained
/// isotope-mixture model, free equally spaced Lorentzians, and the PL
/// saturation law.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "vbodmr/constants.hpp"
#include "vbodmr/lm.hpp"
#include "vbodmr/spectrum.hpp"

namespace vbodmr {

struct Sample {
    double frequency = 0.0;
    double ratio = 1.0;
    std::optional<double> sigma;
};

struct SpectrumMetadata {
    std::string sample_id;
    std::optional<double> field_mt;
    std::optional<double> laser_power_mw;
    std::string source;
    std::size_t row_count = 0;
    double f_min = 0.0;
    double f_max = 0.0;
};

class IngestError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kMinSamples = 8;
inline constexpr double kDuplicateFreqTol = 1e-9;

struct MeasuredSpectrum {
    std::vector<Sample> samples;
    SpectrumMetadata metadata;

    /// Sorts by frequency, rejects duplicates and short inputs, and fills
    /// the row count / range metadata.
    static MeasuredSpectrum from_samples(std::vector<Sample> s, SpectrumMetadata meta = {}) {
        if (s.size() < kMinSamples)
            throw IngestError("insufficient samples: " + std::to_string(s.size()) + " < " +
                              std::to_string(kMinSamples));
        std::stable_sort(s.begin(), s.end(), [](const Sample& a, const Sample& b) { return a.frequency < b.frequency; });
        for (std::size_t i = 1; i < s.size(); ++i)
            if (s[i].frequency - s[i - 1].frequency <= kDuplicateFreqTol)
                throw IngestError("duplicate frequency " + std::to_string(s[i].frequency) + " MHz");
        for (const auto& x : s)
            if (x.sigma && !(*x.sigma > 0.0)) throw IngestError("sigma must be positive");
        meta.row_count = s.size();
        meta.f_min = s.front().frequency;
        meta.f_max = s.back().frequency;
        return MeasuredSpectrum{std::move(s), std::move(meta)};
    }

    static MeasuredSpectrum from_curve(const Curve& c, SpectrumMetadata meta = {}) {
        std::vector<Sample> s;
        for (std::size_t i = 0; i < c.frequencies.size(); ++i) s.push_back({c.frequencies[i], c.values[i], {}});
        return from_samples(std::move(s), std::move(meta));
    }

    std::vector<double> frequencies() const {
        std::vector<double> f;
        for (const auto& x : samples) f.push_back(x.frequency);
        return f;
    }
    std::vector<double> ratios() const {
        std::vector<double> r;
        for (const auto& x : samples) r.push_back(x.ratio);
        return r;
    }
};

/// Adds N(0, sigma) noise drawn from a seeded mt19937_64.
inline MeasuredSpectrum synthesize_measurement(const Curve& c, double sigma, std::uint64_t seed,
                                               SpectrumMetadata meta = {}) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, sigma);
    Curve noisy = c;
    if (sigma > 0.0)
        for (auto& v : noisy.values) v += noise(rng);
    return MeasuredSpectrum::from_curve(noisy, std::move(meta));
}

struct FitParam {
    std::string name;
    double value = 0.0;
    double sigma = 0.0;
};

/// Per-line output of the free Lorentzian model, ascending frequency.
struct FittedLine {
    double center = 0.0;
    double depth = 0.0;
    double width = 0.0;
    double area = 0.0;  // depth * width proxy
};

struct FitResult {
    std::string model;
    std::vector<FitParam> params;
    double residual_norm = 0.0;  // RMS residual
    int iterations = 0;
    bool converged = false;
    std::vector<std::vector<double>> covariance;
    std::vector<std::string> diagnostics;
    std::vector<FittedLine> lines;

    bool has(const std::string& name) const {
        return std::any_of(params.begin(), params.end(), [&](const FitParam& p) { return p.name == name; });
    }
    const FitParam& param(const std::string& name) const {
        for (const auto& p : params)
            if (p.name == name) return p;
        throw std::out_of_range("no fit parameter named " + name);
    }
    double value(const std::string& name) const { return param(name).value; }
    double sigma(const std::string& name) const { return param(name).sigma; }
    bool degenerate() const {
        return std::any_of(diagnostics.begin(), diagnostics.end(),
                           [](const std::string& d) { return d.rfind("degenerate", 0) == 0; });
    }
};

namespace detail {

inline FitResult to_fit_result(std::string model, const std::vector<std::string>& names, const LmResult& lm) {
    FitResult out;
    out.model = std::move(model);
    for (std::size_t i = 0; i < names.size(); ++i) out.params.push_back({names[i], lm.params[i], lm.sigma[i]});
    out.residual_norm = lm.rms;
    out.iterations = lm.iterations;
    out.converged = lm.converged;
    out.covariance = lm.covariance;
    if (lm.degenerate) {
        std::string d = "degenerate parameters:";
        for (auto i : lm.degenerate_params) d += " " + names[i];
        out.diagnostics.push_back(d);
    }
    if (!lm.converged) out.diagnostics.push_back("not converged: " + lm.stop_reason);
    return out;
}

inline std::vector<double> weighted_residuals(const MeasuredSpectrum& meas, const std::vector<double>& model) {
    std::vector<double> r(model.size());
    for (std::size_t i = 0; i < model.size(); ++i) {
        const auto& s = meas.samples[i];
        r[i] = (model[i] - s.ratio) / (s.sigma ? *s.sigma : 1.0);
    }
    return r;
}

/// Width of the contiguous region around index `imin` lying below `level`.
inline double width_below(const std::vector<double>& f, const std::vector<double>& r, std::size_t imin,
                          double level) {
    std::size_t lo = imin, hi = imin;
    while (lo > 0 && r[lo - 1] < level) --lo;
    while (hi + 1 < r.size() && r[hi + 1] < level) ++hi;
    const double w = f[hi] - f[lo];
    const double step = (f.back() - f.front()) / static_cast<double>(f.size() - 1);
    return std::max(w, 2.0 * step);
}

}  // namespace detail

struct P15Mode {
    bool free = false;
    double value = 0.0;  // fixed value, or starting value when free

    static P15Mode fixed(double v) { return {false, v}; }
    static P15Mode floating(double start = 0.5) { return {true, start}; }
};

struct PhysicalFitOptions {
    /// Unset: fit an A parameter whenever its species is present.
    std::optional<bool> fit_a14;
    std::optional<bool> fit_a15;
    /// Fit one defect configuration #n instead of the isotope mixture.
    std::optional<int> configuration;
    LmOptions lm;
};

/// Starting model: f_center at the spectrum minimum, |A| at the measured
/// defaults, dnu from the width of the region below half depth, and C
/// rescaled so the model reproduces the observed depth.
inline SpectrumModel initial_physical_model(const MeasuredSpectrum& meas, double p15, int branch = -1) {
    const auto f = meas.frequencies();
    const auto r = meas.ratios();
    const auto imin = static_cast<std::size_t>(std::min_element(r.begin(), r.end()) - r.begin());
    const double depth = std::clamp(1.0 - r[imin], 1e-4, 0.9);

    SpectrumModel m;
    m.branch = branch;
    m.f_center = f[imin];
    m.a14 = constants::a14_typical_mhz;
    m.a15 = constants::a15_typical_mhz;
    m.p15 = std::clamp(p15, 0.0, 1.0);
    const double half_width = detail::width_below(f, r, imin, 1.0 - depth / 2.0);
    // the half-depth region spans the hyperfine structure as well
    m.linewidth = std::max(half_width / 2.0, 2.0 * (f.back() - f.front()) / static_cast<double>(f.size()));
    m.contrast = 0.5;
    const auto unit = lines_curve(mixture_lines(m), 1.0, m.linewidth, {m.f_center});
    const double unit_depth = 1.0 - unit.values[0];
    m.contrast = std::clamp(depth / std::max(unit_depth, 1e-6), 1e-4, 0.95);
    return m;
}

/// Least-squares fit of the isotope-mixture model.
///
/// Parameters: f_center_mhz, contrast, linewidth_mhz, then |a14|_mhz and/or
/// |a15|_mhz, then p15 when free. Hyperfine magnitudes are bounded below by
/// zero since unpolarized spectra do not depend on their sign.
inline FitResult fit_physical(const MeasuredSpectrum& meas, P15Mode p15_mode, const SpectrumModel& init,
                              const PhysicalFitOptions& opt = {}) {
    if (!(init.linewidth > 0.0)) throw std::invalid_argument("initial linewidth must be positive");
    if (!(p15_mode.value >= 0.0 && p15_mode.value <= 1.0)) throw std::invalid_argument("p15 must lie in [0,1]");

    if (opt.configuration && (*opt.configuration < 0 || *opt.configuration > 3))
        throw std::invalid_argument("configuration must be in [0,3]");
    if (opt.configuration && p15_mode.free) throw std::invalid_argument("p15 cannot float for a single configuration");
    const bool has14 = opt.configuration ? *opt.configuration < 3 : (p15_mode.free || p15_mode.value < 1.0);
    const bool has15 = opt.configuration ? *opt.configuration > 0 : (p15_mode.free || p15_mode.value > 0.0);
    const bool fit14 = opt.fit_a14.value_or(has14);
    const bool fit15 = opt.fit_a15.value_or(has15);

    const double inf = std::numeric_limits<double>::infinity();
    std::vector<std::string> names{"f_center_mhz", "contrast", "linewidth_mhz"};
    std::vector<double> p0{init.f_center, std::clamp(init.contrast, 1e-6, 0.99), init.linewidth};
    Bounds b{{-inf, 0.0, 1e-6}, {inf, 0.999, inf}};
    auto add = [&](const char* name, double v, double lo, double hi) {
        names.push_back(name);
        p0.push_back(std::clamp(v, lo, hi));
        b.lower.push_back(lo);
        b.upper.push_back(hi);
    };
    if (fit14) add("a14_mhz", std::abs(init.a14), 0.0, inf);
    if (fit15) add("a15_mhz", std::abs(init.a15), 0.0, inf);
    if (p15_mode.free) add("p15", p15_mode.value, 0.0, 1.0);

    const auto grid = meas.frequencies();
    SpectrumModel base = init;
    base.populations = {};
    base.a14 = std::abs(init.a14);
    base.a15 = std::abs(init.a15);
    base.p15 = p15_mode.value;

    auto unpack = [&](std::span<const double> p) {
        SpectrumModel m = base;
        m.f_center = p[0];
        m.contrast = p[1];
        m.linewidth = p[2];
        std::size_t i = 3;
        if (fit14) m.a14 = p[i++];
        if (fit15) m.a15 = p[i++];
        if (p15_mode.free) m.p15 = p[i++];
        return m;
    };
    const ResidualFn fn = [&](std::span<const double> p) {
        const SpectrumModel m = unpack(p);
        const auto lines = opt.configuration ? config_lines(m, *opt.configuration) : mixture_lines(m);
        const Curve c = lines_curve(lines, m.contrast, m.linewidth, grid);
        return detail::weighted_residuals(meas, c.values);
    };

    const LmResult lm = lm_minimize(fn, p0, b, opt.lm);
    FitResult out = detail::to_fit_result("physical", names, lm);
    // p15 pinned at 0 or 1 means the data carries only one species
    const bool pinned = p15_mode.free && (lm.params.back() < 1e-6 || lm.params.back() > 1.0 - 1e-6);
    if (p15_mode.free && (!has14 || !has15 || pinned || out.degenerate()) &&
        std::none_of(out.diagnostics.begin(), out.diagnostics.end(),
                     [](const std::string& d) { return d.find("p15") != std::string::npos; }))
        out.diagnostics.push_back("degenerate parameters: p15 (single-species data)");
    return out;
}

struct FreeLorentzianModel {
    int n_lines = 4;
    double f_first = 0.0;
    double spacing = 64.0;
    std::vector<double> depths;
    std::vector<double> widths;

    void validate() const {
        if (n_lines < 1) throw std::invalid_argument("n_lines must be >= 1");
        if (depths.size() != static_cast<std::size_t>(n_lines) || widths.size() != static_cast<std::size_t>(n_lines))
            throw std::invalid_argument("depths/widths must have n_lines entries");
        if (n_lines > 1 && !(spacing > 0.0)) throw std::invalid_argument("spacing must be positive");
        for (double d : depths)
            if (d < 0.0) throw std::invalid_argument("depths must be nonnegative");
        for (double w : widths)
            if (!(w > 0.0)) throw std::invalid_argument("widths must be positive");
    }

    double center(int m) const { return f_first + m * spacing; }

    std::vector<double> evaluate(const std::vector<double>& grid) const {
        std::vector<double> out(grid.size(), 1.0);
        for (std::size_t i = 0; i < grid.size(); ++i)
            for (int m = 0; m < n_lines; ++m) out[i] -= depths[m] * lorentzian(grid[i], center(m), widths[m]);
        return out;
    }
};

struct FreeFitOptions {
    int starts = 5;
    LmOptions lm;
};

/// Equally spaced Lorentzians with a shared spacing and independent depths
/// C_m and widths dnu_m. Runs a small multi-start over spacing and offset
/// and keeps the lowest residual; lines come out sorted by frequency with
/// area proxy C_m * dnu_m.
inline FitResult fit_free_lorentzians(const MeasuredSpectrum& meas, int n_lines, const FreeLorentzianModel& init,
                                      const FreeFitOptions& opt = {}) {
    if (n_lines < 1) throw std::invalid_argument("n_lines must be >= 1");
    if (init.n_lines != n_lines) throw std::invalid_argument("init model has a different line count");
    init.validate();

    const bool shared = n_lines > 1;
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<std::string> names{"f_first_mhz"};
    if (shared) names.push_back("spacing_mhz");
    for (int m = 1; m <= n_lines; ++m) names.push_back("depth_" + std::to_string(m));
    for (int m = 1; m <= n_lines; ++m) names.push_back("width_" + std::to_string(m) + "_mhz");

    Bounds b;
    b.lower.push_back(-inf);
    b.upper.push_back(inf);
    if (shared) {
        b.lower.push_back(1e-6);
        b.upper.push_back(inf);
    }
    for (int m = 0; m < n_lines; ++m) {
        b.lower.push_back(0.0);
        b.upper.push_back(1.0);
    }
    for (int m = 0; m < n_lines; ++m) {
        b.lower.push_back(1e-6);
        b.upper.push_back(inf);
    }

    auto unpack = [&](std::span<const double> p) {
        FreeLorentzianModel m;
        m.n_lines = n_lines;
        std::size_t i = 0;
        m.f_first = p[i++];
        m.spacing = shared ? p[i++] : 0.0;
        m.depths.assign(p.begin() + static_cast<std::ptrdiff_t>(i), p.begin() + static_cast<std::ptrdiff_t>(i + n_lines));
        i += static_cast<std::size_t>(n_lines);
        m.widths.assign(p.begin() + static_cast<std::ptrdiff_t>(i), p.begin() + static_cast<std::ptrdiff_t>(i + n_lines));
        return m;
    };
    const auto grid = meas.frequencies();
    const ResidualFn fn = [&](std::span<const double> p) {
        return detail::weighted_residuals(meas, unpack(p).evaluate(grid));
    };

    auto pack = [&](double f_first, double spacing) {
        std::vector<double> p{f_first};
        if (shared) p.push_back(spacing);
        for (double d : init.depths) p.push_back(std::clamp(d, 0.0, 1.0));
        for (double w : init.widths) p.push_back(w);
        return p;
    };
    // (offset in units of spacing, spacing factor)
    const std::vector<std::pair<double, double>> plan{{0.0, 1.0}, {0.0, 0.85}, {0.0, 1.15}, {-0.1, 1.0}, {0.1, 1.0}};
    const int starts = shared ? std::clamp(opt.starts, 1, static_cast<int>(plan.size())) : 1;

    std::optional<LmResult> best;
    for (int s = 0; s < starts; ++s) {
        const double sp = init.spacing * plan[s].second;
        const double f0 = init.f_first + plan[s].first * init.spacing;
        LmResult r = lm_minimize(fn, pack(f0, sp), b, opt.lm);
        if (!best || (r.converged && !best->converged) || (r.converged == best->converged && r.ssr < best->ssr))
            best = std::move(r);
    }

    FitResult out = detail::to_fit_result("free_lorentzians", names, *best);
    const FreeLorentzianModel fitted = unpack(best->params);
    for (int m = 0; m < n_lines; ++m)
        out.lines.push_back({fitted.center(m), fitted.depths[m], fitted.widths[m], fitted.depths[m] * fitted.widths[m]});
    std::stable_sort(out.lines.begin(), out.lines.end(),
                     [](const FittedLine& a, const FittedLine& b) { return a.center < b.center; });
    return out;
}

/// Starting guess for the free model from the data: f_first and spacing
/// spread n lines symmetrically around the minimum with the given spacing.
inline FreeLorentzianModel initial_free_model(const MeasuredSpectrum& meas, int n_lines, double spacing,
                                              double width) {
    const auto f = meas.frequencies();
    const auto r = meas.ratios();
    const auto imin = static_cast<std::size_t>(std::min_element(r.begin(), r.end()) - r.begin());
    const double depth = std::clamp(1.0 - r[imin], 1e-4, 0.9);
    FreeLorentzianModel m;
    m.n_lines = n_lines;
    m.spacing = spacing;
    // centre of the pattern = centre of mass of the dip
    double wsum = 0.0, fsum = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        const double w = std::max(1.0 - r[i], 0.0);
        wsum += w;
        fsum += w * f[i];
    }
    const double centre = wsum > 0.0 ? fsum / wsum : f[imin];
    m.f_first = centre - 0.5 * (n_lines - 1) * spacing;
    m.depths.assign(static_cast<std::size_t>(n_lines), depth / 2.0);
    m.widths.assign(static_cast<std::size_t>(n_lines), width);
    return m;
}

/// Fits I(P) = I_max P / (P + P_sat). Flags a degenerate fit when every
/// power sits far below the fitted saturation power.
inline FitResult fit_pl_saturation(const std::vector<std::pair<double, double>>& points, const LmOptions& lm = {}) {
    if (points.size() < 3) throw std::invalid_argument("saturation fit needs at least 3 points");
    std::vector<double> powers;
    for (const auto& [p, i] : points) {
        if (!(p > 0.0)) throw std::invalid_argument("laser powers must be positive");
        powers.push_back(p);
    }
    std::sort(powers.begin(), powers.end());
    if (std::adjacent_find(powers.begin(), powers.end()) != powers.end())
        throw std::invalid_argument("laser powers must be distinct");

    // 1/I = 1/I_max + (P_sat/I_max) (1/P): ordinary regression for the start
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(points.size());
    for (const auto& [p, i] : points) {
        const double x = 1.0 / p, y = 1.0 / std::max(i, 1e-300);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const double icpt = (sy - slope * sx) / n;
    double imax0 = icpt > 0.0 ? 1.0 / icpt : 2.0 * std::max_element(points.begin(), points.end(), [](auto& a, auto& b) {
                                                     return a.second < b.second;
                                                 })->second;
    double psat0 = slope > 0.0 ? slope * imax0 : powers.back();
    if (!std::isfinite(imax0) || imax0 <= 0.0) imax0 = 1.0;
    if (!std::isfinite(psat0) || psat0 <= 0.0) psat0 = powers.back();

    const ResidualFn fn = [&](std::span<const double> q) {
        std::vector<double> r;
        for (const auto& [p, i] : points) r.push_back(q[0] * p / (p + q[1]) - i);
        return r;
    };
    const double inf = std::numeric_limits<double>::infinity();
    const LmResult res = lm_minimize(fn, {imax0, psat0}, Bounds{{0.0, 1e-12}, {inf, inf}}, lm);
    FitResult out = detail::to_fit_result("pl_saturation", {"i_max", "p_sat_mw"}, res);
    if (!out.degenerate() && powers.back() < 0.1 * res.params[1])
        out.diagnostics.push_back(
            "degenerate parameters: i_max p_sat_mw (all powers far below P_sat; only I_max/P_sat is identified)");
    return out;
}

}  // namespace vbodmr
