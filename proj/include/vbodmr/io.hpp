#pragma once

/// \file io.hpp
/// \brief CSV ingestion of measured spectra, curve CSV output and JSON
/// serialization of fit results.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vbodmr/fit.hpp"
#include "vbodmr/spectrum.hpp"

namespace vbodmr {

using Json = nlohmann::ordered_json;

inline constexpr const char* kSchemaVersion = "1";

namespace detail {

inline std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) out.push_back(trim(cur));
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

inline double parse_cell(const std::string& cell, std::size_t line, const std::string& column) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(cell, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (cell.empty() || used != cell.size() || !std::isfinite(v))
        throw IngestError("line " + std::to_string(line) + ": malformed " + column + " value '" + cell + "'");
    return v;
}

inline std::string fmt_number(double v, int precision = 12) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    return buf;
}

}  // namespace detail

/// Reads a `frequency_mhz,ratio[,sigma]` CSV. Rows are sorted by frequency;
/// duplicate frequencies, malformed cells (reported with their line number)
/// and fewer than 8 rows are ingestion errors.
inline MeasuredSpectrum ingest_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open input file " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw IngestError("insufficient samples: empty file " + path.string());
    const std::string header = detail::trim(line);
    bool with_sigma = false;
    if (header == "frequency_mhz,ratio,sigma")
        with_sigma = true;
    else if (header != "frequency_mhz,ratio")
        throw IngestError("line 1: expected header 'frequency_mhz,ratio' or 'frequency_mhz,ratio,sigma', got '" +
                          header + "'");
    const std::size_t ncol = with_sigma ? 3 : 2;

    std::vector<Sample> samples;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        const auto cells = detail::split(line, ',');
        if (cells.size() != ncol)
            throw IngestError("line " + std::to_string(lineno) + ": expected " + std::to_string(ncol) +
                              " columns, got " + std::to_string(cells.size()));
        Sample s;
        s.frequency = detail::parse_cell(cells[0], lineno, "frequency_mhz");
        s.ratio = detail::parse_cell(cells[1], lineno, "ratio");
        if (with_sigma) s.sigma = detail::parse_cell(cells[2], lineno, "sigma");
        samples.push_back(s);
    }
    SpectrumMetadata meta;
    meta.source = path.string();
    meta.sample_id = path.stem().string();
    return MeasuredSpectrum::from_samples(std::move(samples), std::move(meta));
}

/// Two-column CSV with the given header.
inline std::string curve_csv(const Curve& c, const std::string& value_column = "ratio") {
    std::string out = "frequency_mhz," + value_column + "\n";
    for (std::size_t i = 0; i < c.frequencies.size(); ++i)
        out += detail::fmt_number(c.frequencies[i]) + "," + detail::fmt_number(c.values[i], 15) + "\n";
    return out;
}

inline std::string measured_csv(const MeasuredSpectrum& m) {
    std::string out = "frequency_mhz,ratio\n";
    for (const auto& s : m.samples) out += detail::fmt_number(s.frequency) + "," + detail::fmt_number(s.ratio, 15) + "\n";
    return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

/// Non-finite numbers become null.
inline Json json_number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json to_json(const FitResult& r) {
    Json j;
    j["model"] = r.model;
    j["converged"] = r.converged;
    j["iterations"] = r.iterations;
    j["residual_norm"] = json_number(r.residual_norm);
    Json params = Json::object();
    for (const auto& p : r.params) params[p.name] = Json{{"value", json_number(p.value)}, {"sigma", json_number(p.sigma)}};
    j["params"] = params;
    Json names = Json::array();
    for (const auto& p : r.params) names.push_back(p.name);
    Json rows = Json::array();
    for (const auto& row : r.covariance) {
        Json jr = Json::array();
        for (double v : row) jr.push_back(json_number(v));
        rows.push_back(jr);
    }
    j["covariance"] = Json{{"names", names}, {"matrix", rows}};
    j["diagnostics"] = r.diagnostics;
    if (!r.lines.empty()) {
        Json lines = Json::array();
        for (const auto& l : r.lines)
            lines.push_back(Json{{"center_mhz", l.center}, {"depth", l.depth}, {"width_mhz", l.width}, {"area", l.area}});
        j["lines"] = lines;
    }
    return j;
}

inline std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace vbodmr
