#pragma once

// Spectrum and point-table CSV I/O. Headers are fixed; frequency axes in
// files are lab-frame Hz while everything in memory is rotating-frame rad/s.
// Numbers are written with 17 significant digits so a read-back reproduces
// the doubles bit for bit, and parsed with std::from_chars (locale-free).

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "twotone/constants.hpp"
#include "twotone/errors.hpp"
#include "twotone/spectrum.hpp"

namespace twotone {

// Rotating-frame <-> lab-frame axis conversion; `offset` is the rotation
// frequency (omega_c + Delta for cavity spectra, omega_m + delta for
// mechanical ones), in rad/s.
struct FrameMap {
    double offset = 0.0;
    double to_lab_hz(double w_rot) const { return rad_to_hz(offset + w_rot); }
    double to_rot_rad(double f_lab_hz) const { return hz_to_rad(f_lab_hz) - offset; }
};

namespace detail {

inline std::string format_double(double x) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof(buf), x, std::chars_format::scientific, 16);
    return std::string(buf, res.ptr);
}

inline double parse_double_token(const std::string& tok, int line, const std::string& col) {
    double v = 0.0;
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    while (first < last && (*first == ' ' || *first == '\t')) ++first;
    while (last > first && (*(last - 1) == ' ' || *(last - 1) == '\t' || *(last - 1) == '\r')) --last;
    if (first < last && *first == '+') ++first;  // from_chars rejects a leading plus
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last)
        throw ParseError(line, col, "cannot parse number '" + tok + "' at line " +
                                        std::to_string(line));
    return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') { out.push_back(cur); cur.clear(); }
        else cur.push_back(c);
    }
    out.push_back(cur);
    return out;
}

inline std::string strip(std::string s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == '\n' || s.back() == ' ')) s.pop_back();
    std::size_t i = 0;
    while (i < s.size() && s[i] == ' ') ++i;
    return s.substr(i);
}

}  // namespace detail

inline void write_spectrum_csv(const std::string& path, const Spectrum& s,
                               const FrameMap& frame = {}) {
    std::ofstream f(path);
    if (!f) throw Error("cannot open " + path + " for writing");
    f << (s.has_sigma() ? "freq_hz,value,sigma\n" : "freq_hz,value\n");
    for (std::size_t i = 0; i < s.size(); ++i) {
        f << detail::format_double(frame.to_lab_hz(s.freq[i])) << ','
          << detail::format_double(s.value[i]);
        if (s.has_sigma()) f << ',' << detail::format_double(s.sigma[i]);
        f << '\n';
    }
}

inline void write_complex_spectrum_csv(const std::string& path, const ComplexSpectrum& s,
                                       const FrameMap& frame = {}) {
    std::ofstream f(path);
    if (!f) throw Error("cannot open " + path + " for writing");
    f << "freq_hz,re,im\n";
    for (std::size_t i = 0; i < s.size(); ++i)
        f << detail::format_double(frame.to_lab_hz(s.freq[i])) << ','
          << detail::format_double(s.value[i].real()) << ','
          << detail::format_double(s.value[i].imag()) << '\n';
}

inline Spectrum read_spectrum_csv(const std::string& path, const FrameMap& frame = {}) {
    std::ifstream f(path);
    if (!f) throw ParseError(0, path, "cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw ParseError(0, path, "empty file " + path);
    const std::string header = detail::strip(line);
    bool with_sigma = false;
    if (header == "freq_hz,value,sigma") with_sigma = true;
    else if (header != "freq_hz,value")
        throw ParseError(1, "header", "expected 'freq_hz,value[,sigma]', got '" + header + "'");

    Spectrum s;
    int lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (detail::strip(line).empty()) continue;
        const auto tok = detail::split_csv_line(line);
        if (tok.size() != (with_sigma ? 3u : 2u))
            throw ParseError(lineno, "row", "wrong column count at line " + std::to_string(lineno));
        const double f_hz = detail::parse_double_token(tok[0], lineno, "freq_hz");
        s.freq.push_back(frame.to_rot_rad(f_hz));
        s.value.push_back(detail::parse_double_token(tok[1], lineno, "value"));
        if (with_sigma) s.sigma.push_back(detail::parse_double_token(tok[2], lineno, "sigma"));
    }
    for (std::size_t i = 1; i < s.freq.size(); ++i)
        if (!(s.freq[i] > s.freq[i - 1]))
            throw ParseError(static_cast<int>(i + 2), "freq_hz",
                             "frequency column must be strictly increasing");
    return s;
}

inline ComplexSpectrum read_complex_spectrum_csv(const std::string& path,
                                                 const FrameMap& frame = {}) {
    std::ifstream f(path);
    if (!f) throw ParseError(0, path, "cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw ParseError(0, path, "empty file " + path);
    if (detail::strip(line) != "freq_hz,re,im")
        throw ParseError(1, "header", "expected 'freq_hz,re,im'");
    ComplexSpectrum s;
    int lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (detail::strip(line).empty()) continue;
        const auto tok = detail::split_csv_line(line);
        if (tok.size() != 3)
            throw ParseError(lineno, "row", "wrong column count at line " + std::to_string(lineno));
        s.freq.push_back(frame.to_rot_rad(detail::parse_double_token(tok[0], lineno, "freq_hz")));
        s.value.emplace_back(detail::parse_double_token(tok[1], lineno, "re"),
                             detail::parse_double_token(tok[2], lineno, "im"));
    }
    for (std::size_t i = 1; i < s.freq.size(); ++i)
        if (!(s.freq[i] > s.freq[i - 1]))
            throw ParseError(static_cast<int>(i + 2), "freq_hz",
                             "frequency column must be strictly increasing");
    return s;
}

// generic two/three-column tables (calibration points, linewidth-vs-phase)
inline std::vector<std::vector<double>> read_table_csv(const std::string& path,
                                                       const std::string& expected_header) {
    std::ifstream f(path);
    if (!f) throw ParseError(0, path, "cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw ParseError(0, path, "empty file " + path);
    if (detail::strip(line) != expected_header)
        throw ParseError(1, "header", "expected '" + expected_header + "'");
    const std::size_t ncol = detail::split_csv_line(expected_header).size();
    std::vector<std::vector<double>> rows;
    int lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (detail::strip(line).empty()) continue;
        const auto tok = detail::split_csv_line(line);
        if (tok.size() != ncol)
            throw ParseError(lineno, "row", "wrong column count at line " + std::to_string(lineno));
        std::vector<double> row(ncol);
        for (std::size_t c = 0; c < ncol; ++c)
            row[c] = detail::parse_double_token(tok[c], lineno, "col" + std::to_string(c));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline void write_table_csv(const std::string& path, const std::string& header,
                            const std::vector<std::vector<double>>& rows) {
    std::ofstream f(path);
    if (!f) throw Error("cannot open " + path + " for writing");
    f << header << '\n';
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c) f << ',';
            f << detail::format_double(row[c]);
        }
        f << '\n';
    }
}

}  // namespace twotone
