#pragma once

/// \file cli.hpp
/// \brief Command implementations behind the `vbodmr` executable.
///
/// A run is `verb + JSON config`. Configs are checked against a strict
/// schema: every problem (unknown key, wrong type, out-of-range value,
/// missing input file) is collected and reported before anything is
/// written. Exit codes: 0 success, 1 validation/schema error, 2 ingestion
/// error, 3 non-convergence.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "vbodmr/analysis.hpp"
#include "vbodmr/fit.hpp"
#include "vbodmr/io.hpp"
#include "vbodmr/spectrum.hpp"
#include "vbodmr/validation.hpp"

namespace vbodmr::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kValidation = 1, kIngestion = 2, kNonConvergence = 3 };

inline const std::vector<std::string>& verbs() {
    static const std::vector<std::string> v{"simulate", "fit", "sensitivity", "polarization", "raman", "validate"};
    return v;
}

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<std::string> problems)
        : std::runtime_error(join(problems)), problems_(std::move(problems)) {}
    const std::vector<std::string>& problems() const { return problems_; }

private:
    static std::string join(const std::vector<std::string>& p) {
        std::string s;
        for (const auto& x : p) s += (s.empty() ? "" : "\n") + x;
        return s;
    }
    std::vector<std::string> problems_;
};

/// Reads typed fields out of one JSON object, recording every problem in a
/// shared list. finish() reports keys that were never asked for.
class ObjectReader {
public:
    ObjectReader(const Json* obj, std::string path, std::vector<std::string>& errors)
        : obj_(obj), path_(std::move(path)), errors_(errors) {
        if (obj_ && !obj_->is_object()) {
            errors_.push_back(path_ + ": expected an object");
            obj_ = nullptr;
        }
    }

    bool present() const { return obj_ != nullptr; }
    bool has(const std::string& key) {
        known_.insert(key);
        return obj_ && obj_->contains(key) && !(*obj_)[key].is_null();
    }

    const Json* raw(const std::string& key, bool required = false) {
        known_.insert(key);
        if (!obj_ || !obj_->contains(key)) {
            if (required) errors_.push_back(where(key) + ": required");
            return nullptr;
        }
        return &(*obj_)[key];
    }

    std::optional<double> number(const std::string& key, bool required = false) {
        const Json* v = raw(key, required);
        if (!v) return std::nullopt;
        if (!v->is_number()) {
            errors_.push_back(where(key) + ": expected a number");
            return std::nullopt;
        }
        return v->get<double>();
    }
    std::optional<long long> integer(const std::string& key, bool required = false) {
        const Json* v = raw(key, required);
        if (!v) return std::nullopt;
        if (!v->is_number_integer()) {
            errors_.push_back(where(key) + ": expected an integer");
            return std::nullopt;
        }
        return v->get<long long>();
    }
    std::optional<std::string> string(const std::string& key, bool required = false) {
        const Json* v = raw(key, required);
        if (!v) return std::nullopt;
        if (!v->is_string()) {
            errors_.push_back(where(key) + ": expected a string");
            return std::nullopt;
        }
        return v->get<std::string>();
    }
    std::optional<bool> boolean(const std::string& key, bool required = false) {
        const Json* v = raw(key, required);
        if (!v) return std::nullopt;
        if (!v->is_boolean()) {
            errors_.push_back(where(key) + ": expected true or false");
            return std::nullopt;
        }
        return v->get<bool>();
    }
    ObjectReader object(const std::string& key, bool required = false) {
        return ObjectReader(raw(key, required), where(key), errors_);
    }

    void error(const std::string& key, const std::string& msg) { errors_.push_back(where(key) + ": " + msg); }
    void finish() {
        if (!obj_) return;
        for (const auto& [k, v] : obj_->items())
            if (!known_.count(k)) errors_.push_back(where(k) + ": unknown key");
    }
    const Json* json() const { return obj_; }
    const std::string& path() const { return path_; }
    std::vector<std::string>& errors() { return errors_; }

private:
    std::string where(const std::string& key) const { return path_ + "." + key; }

    const Json* obj_;
    std::string path_;
    std::vector<std::string>& errors_;
    std::set<std::string> known_;
};

struct GlobalOptions {
    std::optional<fs::path> config_path;
    std::optional<fs::path> out_dir;
    std::optional<std::uint64_t> seed;
    bool quiet = false;
};

struct Isotopes {
    std::optional<double> p15;
    std::optional<double> boron_frac_10;
};

struct GridSpec {
    std::optional<double> start, stop;
    std::optional<long long> points;

    std::vector<double> resolve(double centre, double max_step = 0.0) const {
        const double a = start.value_or(centre - kDefaultHalfSpan);
        const double b = stop.value_or(centre + kDefaultHalfSpan);
        long long n = points.value_or(static_cast<long long>(kDefaultGridPoints));
        if (!points && max_step > 0.0) n = std::max<long long>(n, static_cast<long long>(std::ceil((b - a) / max_step)) + 1);
        return uniform_grid(a, b, static_cast<std::size_t>(n));
    }
};

namespace detail {

inline double in_unit(ObjectReader& r, const std::string& key, double v) {
    if (!(v >= 0.0 && v <= 1.0)) r.error(key, "must lie in [0,1]");
    return v;
}

inline GridSpec read_grid(ObjectReader r) {
    GridSpec g;
    if (!r.present()) return g;
    g.start = r.number("start_mhz");
    g.stop = r.number("stop_mhz");
    g.points = r.integer("points");
    if (g.points && *g.points < 2) r.error("points", "must be >= 2");
    if (g.start && g.stop && !(*g.stop > *g.start)) r.error("stop_mhz", "must exceed start_mhz");
    r.finish();
    return g;
}

/// SpectrumModel block. f_center_mhz, contrast and linewidth_mhz are
/// required unless `partial` is set (fit initial values); A values default
/// to 43 / -64 MHz.
inline SpectrumModel read_model(ObjectReader r, const Isotopes& iso, bool partial, std::vector<std::string>* unset = nullptr) {
    SpectrumModel m;
    if (!r.present()) {
        if (!partial) r.errors().push_back(r.path() + ": required");
        if (unset) *unset = {"f_center_mhz", "contrast", "linewidth_mhz", "a14_mhz", "a15_mhz"};
        if (iso.p15) m.p15 = *iso.p15;
        return m;
    }
    auto take = [&](const char* key, double& slot, bool needed = true) {
        const auto v = r.number(key, needed && !partial);
        if (v)
            slot = *v;
        else if (unset)
            unset->push_back(key);
    };
    take("f_center_mhz", m.f_center);
    take("contrast", m.contrast);
    take("linewidth_mhz", m.linewidth);
    take("a14_mhz", m.a14, false);
    take("a15_mhz", m.a15, false);
    if (const auto b = r.integer("branch")) {
        if (*b != -1 && *b != 1) r.error("branch", "must be -1 or 1");
        m.branch = static_cast<int>(*b);
    }
    if (const auto p = r.number("p15"))
        m.p15 = in_unit(r, "p15", *p);
    else if (iso.p15)
        m.p15 = *iso.p15;
    if (!(m.contrast >= 0.0 && m.contrast < 1.0)) r.error("contrast", "must lie in [0,1)");
    if (!(m.linewidth > 0.0)) r.error("linewidth_mhz", "must be positive");

    ObjectReader pops = r.object("populations");
    if (pops.present()) {
        for (const auto& [key, val] : pops.json()->items()) {
            int n = -1;
            if (key.size() == 1 && key[0] >= '0' && key[0] <= '3') n = key[0] - '0';
            if (n < 0) {
                pops.error(key, "configuration key must be \"0\"..\"3\"");
                pops.has(key);
                continue;
            }
            ObjectReader cfg = pops.object(key);
            if (!cfg.present()) continue;
            const LevelLadder ladder = enumerate_ladder(n);
            std::map<HalfInt, double> raw;
            for (const auto& [mkey, w] : cfg.json()->items()) {
                cfg.has(mkey);
                HalfInt m_tot;
                try {
                    m_tot = HalfInt::parse(mkey);
                } catch (const std::exception&) {
                    cfg.error(mkey, "not a half-integer m_tot");
                    continue;
                }
                if (ladder.degeneracy(m_tot) == 0) {
                    cfg.error(mkey, "m_tot not present in configuration #" + key);
                    continue;
                }
                if (!w.is_number() || w.get<double>() < 0.0) {
                    cfg.error(mkey, "weight must be a nonnegative number");
                    continue;
                }
                raw[m_tot] = w.get<double>();
            }
            bool complete = true;
            for (const auto& rung : ladder.rungs)
                if (!raw.count(rung.m_tot)) {
                    cfg.error(rung.m_tot.str(), "missing population");
                    complete = false;
                }
            if (complete) {
                try {
                    m.populations[n] = Populations::normalized(ladder, raw);
                } catch (const std::exception& e) {
                    cfg.error("weights", e.what());
                }
            }
        }
        pops.finish();
    }
    r.finish();
    return m;
}

inline Json model_json(const SpectrumModel& m) {
    Json j{{"f_center_mhz", m.f_center}, {"branch", m.branch},  {"contrast", m.contrast},
           {"linewidth_mhz", m.linewidth}, {"a14_mhz", m.a14}, {"a15_mhz", m.a15},
           {"p15", m.p15}};
    Json pops = Json::object();
    for (int n = 0; n < 4; ++n) {
        if (!m.populations[n]) continue;
        Json c = Json::object();
        for (const auto& [mt, w] : m.populations[n]->weights) c[mt.str()] = w;
        pops[std::to_string(n)] = c;
    }
    if (!pops.empty()) j["populations"] = pops;
    return j;
}

inline Json grid_json(const std::vector<double>& g) {
    return Json{{"start_mhz", g.front()}, {"stop_mhz", g.back()}, {"points", g.size()}};
}

inline fs::path resolve_path(const fs::path& p, const fs::path& base) { return p.is_absolute() ? p : base / p; }

}  // namespace detail

/// Everything a command needs after the schema check.
struct Context {
    fs::path out_dir;
    fs::path base_dir;
    std::uint64_t seed = 0;
    bool quiet = false;
    Isotopes isotopes;
    std::ostream* log = &std::cerr;

    void info(const std::string& msg) const {
        if (!quiet) *log << msg << "\n";
    }
};

/// Runs one verb against a parsed JSON config. Never throws: errors map
/// onto exit codes and are printed to `log`.
inline int run_command(const std::string& verb, const Json& config, const GlobalOptions& g,
                       std::ostream& log = std::cerr) {
    std::vector<std::string> errors;
    if (std::find(verbs().begin(), verbs().end(), verb) == verbs().end()) {
        log << "error: unknown command '" << verb << "'\n";
        return kValidation;
    }

    Context ctx;
    ctx.quiet = g.quiet;
    ctx.log = &log;
    ctx.base_dir = g.config_path ? g.config_path->parent_path() : fs::current_path();
    if (ctx.base_dir.empty()) ctx.base_dir = fs::current_path();

    ObjectReader top(&config, "config", errors);
    if (const auto sv = top.string("schema_version"); sv && *sv != kSchemaVersion)
        top.error("schema_version", "unsupported version '" + *sv + "'");
    const auto cfg_out = top.string("output_dir");
    const auto cfg_seed = top.integer("seed");
    if (cfg_seed && *cfg_seed < 0) top.error("seed", "must be nonnegative");
    {
        ObjectReader iso = top.object("isotopes");
        if (const auto p = iso.number("p15")) ctx.isotopes.p15 = detail::in_unit(iso, "p15", *p);
        if (const auto b = iso.number("boron_frac_10")) ctx.isotopes.boron_frac_10 = detail::in_unit(iso, "boron_frac_10", *b);
        iso.finish();
    }
    ctx.out_dir = g.out_dir ? *g.out_dir
                            : (cfg_out ? detail::resolve_path(*cfg_out, ctx.base_dir) : fs::current_path());
    ctx.seed = g.seed ? *g.seed : static_cast<std::uint64_t>(cfg_seed.value_or(0));

    // ---- parse every block present, strictly ----
    struct SimulatePlan {
        SpectrumModel model;
        GridSpec grid;
        std::optional<int> n15;
        double noise = 0.0;
        std::string curve_file = "spectrum.csv", report_file = "simulate.json";
    } sim;
    struct FitPlan {
        fs::path input;
        std::string mode = "physical";
        P15Mode p15 = P15Mode::fixed(0.0);
        SpectrumModel init;
        std::vector<std::string> unset;
        std::optional<bool> fit_a14, fit_a15;
        int n_lines = 4;
        std::optional<double> spacing, width;
        std::optional<FreeLorentzianModel> free_init;
        bool polarization = false;
        std::optional<double> d_gs;
        std::string report_file = "fit.json";
        int max_iterations = LmOptions{}.max_iterations;
    } fit;
    struct SensitivityPlan {
        SpectrumModel model;
        std::optional<SpectrumModel> reference;
        SlopeNormalization norm = SlopeNormalization::raw;
        GridSpec grid;
        std::optional<double> photon_rate, duration;
        std::string slope_file = "slope.csv", report_file = "sensitivity.json";
    } sens;
    struct PolarizationPlan {
        std::map<HalfInt, double> areas;
        std::optional<HalfInt> m_max;
        std::string report_file = "polarization.json";
    } pol;
    struct RamanPlan {
        std::vector<std::pair<std::string, std::pair<double, double>>> points;
        std::string report_file = "raman.json";
    } raman;
    ValidationOptions vopt;
    vopt.seed = ctx.seed == 0 ? 1 : ctx.seed;
    std::string validate_report = "validate.json";

    auto parse_block = [&](const std::string& name, bool active, auto&& body) {
        ObjectReader r = top.object(name);
        if (!r.present()) {
            if (active && name != "validate" && name != "raman") r.error("", "block required for this command");
            return;
        }
        body(r);
        r.finish();
    };

    parse_block("simulate", verb == "simulate", [&](ObjectReader& r) {
        sim.model = detail::read_model(r.object("model", true), ctx.isotopes, false);
        sim.grid = detail::read_grid(r.object("grid"));
        if (const auto n = r.integer("n15_count")) {
            if (*n < 0 || *n > 3) r.error("n15_count", "must be in [0,3]");
            sim.n15 = static_cast<int>(*n);
        }
        if (const auto s = r.number("noise_sigma")) {
            if (*s < 0.0) r.error("noise_sigma", "must be nonnegative");
            sim.noise = *s;
        }
        if (const auto f = r.string("curve_file")) sim.curve_file = *f;
        if (const auto f = r.string("report_file")) sim.report_file = *f;
    });

    parse_block("fit", verb == "fit", [&](ObjectReader& r) {
        if (const auto in = r.string("input", true)) fit.input = detail::resolve_path(*in, ctx.base_dir);
        if (const auto m = r.string("mode")) {
            if (*m != "physical" && *m != "free") r.error("mode", "must be \"physical\" or \"free\"");
            fit.mode = *m;
        }
        double p15_default = ctx.isotopes.p15.value_or(0.0);
        if (const Json* p = r.raw("p15")) {
            if (p->is_string() && p->get<std::string>() == "free")
                fit.p15 = P15Mode::floating(0.5);
            else if (p->is_number())
                fit.p15 = P15Mode::fixed(detail::in_unit(r, "p15", p->get<double>()));
            else
                r.error("p15", "must be a number in [0,1] or \"free\"");
        } else {
            fit.p15 = P15Mode::fixed(p15_default);
        }
        if (const auto s = r.number("p15_start")) fit.p15.value = detail::in_unit(r, "p15_start", *s);
        fit.init = detail::read_model(r.object("init"), ctx.isotopes, true, &fit.unset);
        fit.fit_a14 = r.boolean("fit_a14");
        fit.fit_a15 = r.boolean("fit_a15");
        if (const auto n = r.integer("n_lines")) {
            if (*n < 1) r.error("n_lines", "must be >= 1");
            fit.n_lines = static_cast<int>(*n);
        }
        fit.spacing = r.number("spacing_mhz");
        fit.width = r.number("width_mhz");
        if (fit.spacing && !(*fit.spacing > 0.0)) r.error("spacing_mhz", "must be positive");
        if (fit.width && !(*fit.width > 0.0)) r.error("width_mhz", "must be positive");
        ObjectReader lines = r.object("init_lines");
        if (lines.present()) {
            FreeLorentzianModel fm;
            fm.n_lines = fit.n_lines;
            fm.f_first = lines.number("f_first_mhz", true).value_or(0.0);
            fm.spacing = lines.number("spacing_mhz").value_or(fit.spacing.value_or(constants::a15_typical_mhz));
            auto vec = [&](const char* key) {
                std::vector<double> out;
                const Json* v = lines.raw(key, true);
                if (!v) return out;
                if (!v->is_array()) {
                    lines.error(key, "expected an array");
                    return out;
                }
                for (const auto& x : *v) {
                    if (!x.is_number()) {
                        lines.error(key, "expected numbers");
                        return std::vector<double>{};
                    }
                    out.push_back(x.get<double>());
                }
                return out;
            };
            fm.depths = vec("depths");
            fm.widths = vec("widths_mhz");
            try {
                fm.validate();
                fit.free_init = fm;
            } catch (const std::exception& e) {
                lines.error("", e.what());
            }
            lines.finish();
        }
        if (const auto p = r.boolean("polarization")) fit.polarization = *p;
        if (fit.polarization && fit.mode != "free") r.error("polarization", "requires mode \"free\"");
        fit.d_gs = r.number("d_gs_mhz");
        if (const auto n = r.integer("max_iterations")) {
            if (*n < 1) r.error("max_iterations", "must be >= 1");
            fit.max_iterations = static_cast<int>(*n);
        }
        if (const auto f = r.string("report_file")) fit.report_file = *f;
    });

    parse_block("sensitivity", verb == "sensitivity", [&](ObjectReader& r) {
        sens.model = detail::read_model(r.object("model", true), ctx.isotopes, false);
        if (r.has("reference")) sens.reference = detail::read_model(r.object("reference"), ctx.isotopes, false);
        if (const auto n = r.string("normalization")) {
            if (*n == "raw")
                sens.norm = SlopeNormalization::raw;
            else if (*n == "per_contrast")
                sens.norm = SlopeNormalization::per_contrast;
            else
                r.error("normalization", "must be \"raw\" or \"per_contrast\"");
        }
        sens.grid = detail::read_grid(r.object("grid"));
        sens.photon_rate = r.number("photon_rate_hz");
        sens.duration = r.number("duration_s");
        if (sens.photon_rate && !(*sens.photon_rate > 0.0)) r.error("photon_rate_hz", "must be positive");
        if (sens.duration && !(*sens.duration > 0.0)) r.error("duration_s", "must be positive");
        if (const auto f = r.string("slope_file")) sens.slope_file = *f;
        if (const auto f = r.string("report_file")) sens.report_file = *f;
    });

    parse_block("polarization", verb == "polarization", [&](ObjectReader& r) {
        ObjectReader areas = r.object("areas");
        const Json* lines = r.raw("lines");
        if (areas.present() == (lines != nullptr)) r.error("areas", "give exactly one of \"areas\" or \"lines\"");
        if (areas.present()) {
            for (const auto& [key, val] : areas.json()->items()) {
                areas.has(key);
                try {
                    const HalfInt m = HalfInt::parse(key);
                    if (!val.is_number() || val.get<double>() < 0.0)
                        areas.error(key, "area must be a nonnegative number");
                    else
                        pol.areas[m] = val.get<double>();
                } catch (const std::exception&) {
                    areas.error(key, "not a half-integer m_tot");
                }
            }
            areas.finish();
        }
        if (lines) {
            if (!lines->is_array() || lines->empty()) {
                r.error("lines", "expected a nonempty array ordered by ascending frequency");
            } else {
                std::vector<std::string> line_errors;
                std::vector<double> line_areas;
                for (std::size_t i = 0; i < lines->size(); ++i) {
                    ObjectReader lr(&(*lines)[i], r.path() + ".lines[" + std::to_string(i) + "]", errors);
                    const auto d = lr.number("depth", true);
                    const auto w = lr.number("width_mhz", true);
                    if (d && *d < 0.0) lr.error("depth", "must be nonnegative");
                    if (w && !(*w > 0.0)) lr.error("width_mhz", "must be positive");
                    line_areas.push_back(d.value_or(0.0) * w.value_or(0.0));
                    lr.finish();
                }
                const int twice_max = static_cast<int>(line_areas.size()) - 1;
                for (std::size_t i = 0; i < line_areas.size(); ++i)
                    pol.areas[HalfInt::from_twice(-twice_max + 2 * static_cast<int>(i))] = line_areas[i];
                pol.m_max = HalfInt::from_twice(twice_max);
            }
        }
        if (const auto m = r.string("m_max")) {
            try {
                pol.m_max = HalfInt::parse(*m);
            } catch (const std::exception&) {
                r.error("m_max", "not a half-integer");
            }
        }
        if (!pol.m_max && !pol.areas.empty()) pol.m_max = pol.areas.rbegin()->first;
        if (pol.m_max && !(pol.m_max->value() > 0.0)) r.error("m_max", "must be positive");
        if (const auto f = r.string("report_file")) pol.report_file = *f;
    });

    parse_block("raman", verb == "raman", [&](ObjectReader& r) {
        const Json* pts = r.raw("points");
        if (pts) {
            if (!pts->is_array()) {
                r.error("points", "expected an array");
            } else {
                for (std::size_t i = 0; i < pts->size(); ++i) {
                    ObjectReader pr(&(*pts)[i], r.path() + ".points[" + std::to_string(i) + "]", errors);
                    const double b = detail::in_unit(pr, "boron_frac_10",
                                                     pr.number("boron_frac_10").value_or(constants::natural_b10_fraction));
                    const double n = detail::in_unit(pr, "nitrogen_frac_15", pr.number("nitrogen_frac_15", true).value_or(0.0));
                    const std::string label = pr.string("label").value_or("point " + std::to_string(i + 1));
                    raman.points.push_back({label, {b, n}});
                    pr.finish();
                }
            }
        }
        if (const auto f = r.string("report_file")) raman.report_file = *f;
    });

    parse_block("validate", verb == "validate", [&](ObjectReader& r) {
        if (const auto d = r.integer("draws")) {
            if (*d < 1) r.error("draws", "must be >= 1");
            vopt.draws = static_cast<int>(*d);
        }
        ObjectReader tol = r.object("tolerances");
        if (tol.present()) {
            if (const auto t = tol.number("eigensolver")) vopt.eigensolver_tol = *t;
            if (const auto t = tol.number("oracle_mhz")) vopt.oracle_tol_mhz = *t;
            if (const auto t = tol.number("slope_ratio")) vopt.slope_ratio_tol = *t;
            tol.finish();
        }
        if (const auto b = r.boolean("inject_wrong_ladder")) vopt.inject_wrong_ladder = *b;
        if (const auto f = r.string("report_file")) validate_report = *f;
    });

    top.finish();

    if (verb == "raman" && raman.points.empty()) {
        if (ctx.isotopes.p15 || ctx.isotopes.boron_frac_10)
            raman.points.push_back({"isotopes", {ctx.isotopes.boron_frac_10.value_or(constants::natural_b10_fraction),
                                                 ctx.isotopes.p15.value_or(0.0)}});
        else
            errors.push_back("config.raman.points: required (or give an isotopes block)");
    }
    if (verb == "polarization" && (pol.areas.empty() || !pol.m_max))
        errors.push_back("config.polarization: no areas given");

    // model-level invariants not covered above
    auto check_model = [&](const SpectrumModel& m, const std::string& where) {
        try {
            m.validate();
        } catch (const std::exception& e) {
            errors.push_back(where + ": " + e.what());
        }
    };
    if (verb == "simulate") check_model(sim.model, "config.simulate.model");
    if (verb == "sensitivity") {
        check_model(sens.model, "config.sensitivity.model");
        if (sens.reference) check_model(*sens.reference, "config.sensitivity.reference");
    }

    if (!errors.empty()) {
        log << "configuration invalid (" << errors.size() << " problem" << (errors.size() == 1 ? "" : "s") << "):\n";
        for (const auto& e : errors) log << "  " << e << "\n";
        return kValidation;
    }

    // ---- inputs ----
    std::optional<MeasuredSpectrum> measured;
    if (verb == "fit") {
        if (!fs::exists(fit.input)) {
            log << "error: input file not found: " << fit.input.string() << "\n";
            return kIngestion;
        }
        try {
            measured = ingest_csv(fit.input);
        } catch (const IngestError& e) {
            log << "ingestion error: " << e.what() << "\n";
            return kIngestion;
        }
    }

    std::error_code ec;
    fs::create_directories(ctx.out_dir, ec);
    if (ec) {
        log << "error: cannot create output directory " << ctx.out_dir.string() << ": " << ec.message() << "\n";
        return kValidation;
    }

    Json report{{"schema_version", kSchemaVersion}, {"command", verb}};
    try {
        if (verb == "simulate") {
            const auto grid = sim.grid.resolve(sim.model.f_center);
            const Curve clean = sim.n15 ? config_spectrum(sim.model, *sim.n15, grid) : mixture_spectrum(sim.model, grid);
            const MeasuredSpectrum noisy = synthesize_measurement(clean, sim.noise, ctx.seed);
            Curve out{noisy.frequencies(), noisy.ratios()};
            write_text(ctx.out_dir / sim.curve_file, curve_csv(out));
            report["model"] = detail::model_json(sim.model);
            report["n15_count"] = sim.n15 ? Json(*sim.n15) : Json(nullptr);
            const auto frac = binomial_fractions(sim.model.p15);
            report["configuration_fractions"] = Json::array({frac[0], frac[1], frac[2], frac[3]});
            report["grid"] = detail::grid_json(grid);
            report["noise_sigma"] = sim.noise;
            report["seed"] = ctx.seed;
            report["curve_file"] = sim.curve_file;
            write_text(ctx.out_dir / sim.report_file, dump_json(report));
            ctx.info("wrote " + (ctx.out_dir / sim.curve_file).string());
            return kOk;
        }

        if (verb == "fit") {
            const MeasuredSpectrum& meas = *measured;
            FitResult res;
            if (fit.mode == "physical") {
                SpectrumModel init = initial_physical_model(meas, fit.p15.value, fit.init.branch);
                const std::set<std::string> unset(fit.unset.begin(), fit.unset.end());
                if (!unset.count("f_center_mhz")) init.f_center = fit.init.f_center;
                if (!unset.count("contrast")) init.contrast = fit.init.contrast;
                if (!unset.count("linewidth_mhz")) init.linewidth = fit.init.linewidth;
                if (!unset.count("a14_mhz")) init.a14 = fit.init.a14;
                if (!unset.count("a15_mhz")) init.a15 = fit.init.a15;
                PhysicalFitOptions po;
                po.fit_a14 = fit.fit_a14;
                po.fit_a15 = fit.fit_a15;
                po.lm.max_iterations = fit.max_iterations;
                res = fit_physical(meas, fit.p15, init, po);
            } else {
                FreeLorentzianModel init = fit.free_init
                                               ? *fit.free_init
                                               : initial_free_model(meas, fit.n_lines,
                                                                    fit.spacing.value_or(constants::a15_typical_mhz),
                                                                    fit.width.value_or(50.0));
                init.n_lines = fit.n_lines;
                FreeFitOptions fo;
                fo.lm.max_iterations = fit.max_iterations;
                res = fit_free_lorentzians(meas, fit.n_lines, init, fo);
            }
            report["input"] = Json{{"path", fit.input.string()},
                                   {"rows", meas.metadata.row_count},
                                   {"f_min_mhz", meas.metadata.f_min},
                                   {"f_max_mhz", meas.metadata.f_max}};
            report["fit"] = to_json(res);
            Json derived = Json::object();
            if (fit.d_gs) {
                const double fc = fit.mode == "physical"
                                      ? res.value("f_center_mhz")
                                      : 0.5 * (res.lines.front().center + res.lines.back().center);
                const auto fe = field_from_center(*fit.d_gs, fc);
                derived["field_mt"] = fe.field_mt;
                derived["field_wrong_branch"] = fe.wrong_branch;
            }
            if (fit.polarization) {
                const HalfInt m_max = HalfInt::from_twice(fit.n_lines - 1);
                const auto pr = polarization_from_lines(res.lines, m_max);
                derived["polarization"] = pr.polarization;
                derived["m_max"] = m_max.str();
                Json areas = Json::object();
                for (const auto& [m, a] : pr.areas) areas[m.str()] = a;
                derived["areas"] = areas;
                derived["m_tot_assignment"] = "ascending frequency -> m_tot = -m_max ... +m_max";
            }
            report["derived"] = derived;
            write_text(ctx.out_dir / fit.report_file, dump_json(report));
            if (!res.converged) {
                log << "fit did not converge; partial report written to " << (ctx.out_dir / fit.report_file).string()
                    << "\n";
                return kNonConvergence;
            }
            ctx.info("wrote " + (ctx.out_dir / fit.report_file).string());
            return kOk;
        }

        if (verb == "sensitivity") {
            double lw = sens.model.linewidth;
            if (sens.reference) lw = std::min(lw, sens.reference->linewidth);
            const auto grid = sens.grid.resolve(sens.model.f_center, lw / 20.0);
            const auto rep = spectral_slope(sens.model, grid, sens.norm);
            write_text(ctx.out_dir / sens.slope_file, curve_csv(rep.slope_curve, "slope_per_mhz"));
            report["model"] = detail::model_json(sens.model);
            report["normalization"] = to_string(sens.norm);
            report["grid"] = detail::grid_json(grid);
            report["max_slope_per_mhz"] = rep.max_slope;
            report["max_slope_frequency_mhz"] = rep.max_slope_frequency;
            report["eta_relative"] = json_number(rep.eta_relative);
            if (sens.reference) {
                const auto rgrid = sens.grid.resolve(sens.reference->f_center, lw / 20.0);
                const auto ref = spectral_slope(*sens.reference, rgrid, sens.norm);
                report["reference"] = detail::model_json(*sens.reference);
                report["reference_max_slope_per_mhz"] = ref.max_slope;
                report["eta_ratio_model_over_reference"] = relative_sensitivity(rep, ref);
                report["slope_gain_over_reference"] = rep.max_slope / ref.max_slope;
            }
            if (sens.photon_rate) {
                const auto raw = sens.norm == SlopeNormalization::raw ? rep
                                                                       : spectral_slope(sens.model, grid, SlopeNormalization::raw);
                report["eta_b_mt_per_sqrt_hz"] = shot_noise_sensitivity(raw.max_slope, *sens.photon_rate);
                if (sens.duration)
                    report["b_min_mt"] = shot_noise_field_limit(raw.max_slope, *sens.photon_rate, *sens.duration);
            }
            report["slope_file"] = sens.slope_file;
            write_text(ctx.out_dir / sens.report_file, dump_json(report));
            ctx.info("wrote " + (ctx.out_dir / sens.report_file).string());
            return kOk;
        }

        if (verb == "polarization") {
            const auto pr = polarization_from_areas(pol.areas, *pol.m_max);
            Json areas = Json::object();
            for (const auto& [m, a] : pr.areas) areas[m.str()] = a;
            report["areas"] = areas;
            report["m_max"] = pr.m_max.str();
            report["polarization"] = pr.polarization;
            write_text(ctx.out_dir / pol.report_file, dump_json(report));
            ctx.info("polarization = " + vbodmr::detail::fmt_number(pr.polarization, 6));
            return kOk;
        }

        if (verb == "raman") {
            Json pts = Json::array();
            for (const auto& [label, fr] : raman.points) {
                const auto p = raman_point(fr.first, fr.second);
                pts.push_back(Json{{"label", label},
                                   {"boron_frac_10", p.boron_frac_10},
                                   {"nitrogen_frac_15", p.nitrogen_frac_15},
                                   {"reduced_mass", p.reduced_mass},
                                   {"shift_cm1", p.shift}});
            }
            report["points"] = pts;
            write_text(ctx.out_dir / raman.report_file, dump_json(report));
            ctx.info("wrote " + (ctx.out_dir / raman.report_file).string());
            return kOk;
        }

        // validate
        const auto groups = run_validation(vopt);
        bool all = true;
        Json jg = Json::array();
        for (const auto& gr : groups) {
            all = all && gr.passed;
            jg.push_back(Json{{"name", gr.name},
                              {"passed", gr.passed},
                              {"measured", json_number(gr.measured)},
                              {"tolerance", gr.tolerance},
                              {"detail", gr.detail}});
            ctx.info(std::string(gr.passed ? "PASS " : "FAIL ") + gr.name + "  measured=" +
                     vbodmr::detail::fmt_number(gr.measured, 6) + " tol=" + vbodmr::detail::fmt_number(gr.tolerance, 6));
        }
        report["passed"] = all;
        report["groups"] = jg;
        write_text(ctx.out_dir / validate_report, dump_json(report));
        return all ? kOk : kValidation;
    } catch (const ModelError& e) {
        log << "model error: " << e.what() << "\n";
        return kValidation;
    } catch (const NumericalError& e) {
        log << "numerical failure: " << e.what() << "\n";
        return kNonConvergence;
    } catch (const std::exception& e) {
        log << "error: " << e.what() << "\n";
        return kValidation;
    }
}

/// Loads the config file (if any) and runs the verb.
inline int run(const std::string& verb, const GlobalOptions& g, std::ostream& log = std::cerr) {
    Json config = Json::object();
    if (g.config_path) {
        std::ifstream in(*g.config_path);
        if (!in) {
            log << "error: cannot open config " << g.config_path->string() << "\n";
            return kValidation;
        }
        try {
            config = Json::parse(in);
        } catch (const std::exception& e) {
            log << "error: config is not valid JSON: " << e.what() << "\n";
            return kValidation;
        }
    }
    return run_command(verb, config, g, log);
}

}  // namespace vbodmr::cli
