#pragma once

// Run configuration: a flat `section.key = value` text format. External units
// are plain Hz and degrees; conversion to angular units happens exactly once
// when the validated bundle is built. Unknown keys are rejected so a config
// always parses losslessly, and render_run_config emits an equivalent file
// (the run manifest embeds exactly that text).

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "twotone/constants.hpp"
#include "twotone/csv.hpp"
#include "twotone/errors.hpp"
#include "twotone/params.hpp"
#include "twotone/spectrum.hpp"

namespace twotone {

struct GridConfig {
    std::optional<double> span_hz;  // default: model-derived span
    std::size_t points = 32768;
};

struct SdeConfig {
    std::uint64_t seed = 1;
    std::optional<double> dt_s;  // default: 0.05 / max dynamical rate
    std::int64_t n_steps = 200000;
    int n_traj = 8;
    int batches_per_traj = 32;
    std::int64_t store_decimation = 0;
    bool euler = false;
};

struct CalibrationConfig {
    std::optional<double> a_minus, a_plus;   // rad^2 s^-1 W^-1
    std::optional<double> b_minus;           // (rad/s)^2, on-resonance configuration
    std::optional<double> b_minus_bae;       // (rad/s)^2, BAE configuration
};

struct BaeConfig {
    std::optional<double> exclude_lo_hz, exclude_hi_hz;  // lab-frame band of the sideband
    std::optional<double> reference_power;               // P- in the data's power units
    std::optional<double> power_ratio;                   // direct P_m/P- input
};

struct ScanConfig {
    std::optional<double> np_total;
    std::vector<double> ratios;
};

struct RunConfig {
    // system (Hz / SI)
    double omega_m_hz = 0.0, kappa_hz = 0.0, kappa_left_hz = 0.0, kappa_right_hz = 0.0,
           kappa_internal_hz = 0.0, gamma_m_hz = 0.0, g0_hz = 0.0;
    std::optional<double> x_zp_m, mass_kg, omega_c_hz;
    // drive
    double cavity_detuning_hz = 0.0, mech_detuning_hz = 0.0;
    std::optional<double> np_minus, np_plus;
    std::optional<double> power_minus_w, power_plus_w;  // alternative pump input
    double phi_deg = 0.0, lambda_hz = 0.0, psi_deg = 0.0;
    // baths
    double n_c_th = 0.0, n_m_th = 0.0;
    std::optional<double> n_left_th, n_right_th, n_internal_th;

    GridConfig grid;
    std::optional<HeatingModel> heating;
    SdeConfig sde;
    CalibrationConfig cal;
    BaeConfig bae;
    ScanConfig scan;
    std::string fit_hypothesis = "follow";
};

namespace detail {

struct KeyValue {
    std::string value;
    int line = 0;
    bool used = false;
};

inline double parse_number(const std::string& raw, int line, const std::string& key) {
    return parse_double_token(raw, line, key);
}

class ConfigReader {
  public:
    explicit ConfigReader(const std::string& text) {
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            line = strip(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ParseError(lineno, line, "expected 'key = value' at line " +
                                                   std::to_string(lineno));
            std::string key = strip(line.substr(0, eq));
            std::string value = strip(line.substr(eq + 1));
            if (key.empty() || value.empty())
                throw ParseError(lineno, key, "empty key or value at line " + std::to_string(lineno));
            if (entries_.count(key))
                throw ParseError(lineno, key, "duplicate key '" + key + "'");
            entries_[key] = {value, lineno, false};
        }
    }

    std::optional<std::string> get(const std::string& key) {
        auto it = entries_.find(key);
        if (it == entries_.end()) return std::nullopt;
        it->second.used = true;
        return it->second.value;
    }
    double require_number(const std::string& key) {
        auto v = get(key);
        if (!v) throw ParseError(0, key, "missing required key '" + key + "'");
        return parse_number(*v, entries_[key].line, key);
    }
    std::optional<double> number(const std::string& key) {
        auto v = get(key);
        if (!v) return std::nullopt;
        return parse_number(*v, entries_[key].line, key);
    }
    double number_or(const std::string& key, double fallback) {
        auto v = number(key);
        return v ? *v : fallback;
    }
    void finish() const {
        for (const auto& [key, kv] : entries_)
            if (!kv.used)
                throw ParseError(kv.line, key, "unknown key '" + key + "'");
    }

  private:
    std::map<std::string, KeyValue> entries_;
};

inline std::vector<double> parse_double_list(const std::string& raw, const std::string& key) {
    std::vector<double> out;
    std::string cur;
    auto flush = [&](int) {
        if (cur.empty()) return;
        out.push_back(parse_number(cur, 0, key));
        cur.clear();
    };
    for (char c : raw) {
        if (c == ',') flush(0);
        else if (c != ' ') cur.push_back(c);
    }
    flush(0);
    return out;
}

}  // namespace detail

inline RunConfig parse_run_config_text(const std::string& text) {
    detail::ConfigReader r(text);
    RunConfig c;
    c.omega_m_hz = r.require_number("system.omega_m_hz");
    c.kappa_hz = r.require_number("system.kappa_hz");
    c.kappa_left_hz = r.require_number("system.kappa_left_hz");
    c.kappa_right_hz = r.require_number("system.kappa_right_hz");
    c.kappa_internal_hz = r.require_number("system.kappa_internal_hz");
    c.gamma_m_hz = r.require_number("system.gamma_m_hz");
    c.g0_hz = r.require_number("system.g0_hz");
    c.x_zp_m = r.number("system.x_zp_m");
    c.mass_kg = r.number("system.mass_kg");
    c.omega_c_hz = r.number("system.omega_c_hz");

    c.cavity_detuning_hz = r.number_or("drive.cavity_detuning_hz", 0.0);
    c.mech_detuning_hz = r.number_or("drive.mech_detuning_hz", 0.0);
    c.np_minus = r.number("drive.np_minus");
    c.np_plus = r.number("drive.np_plus");
    c.power_minus_w = r.number("drive.power_minus_w");
    c.power_plus_w = r.number("drive.power_plus_w");
    c.phi_deg = r.number_or("drive.phi_deg", 0.0);
    c.lambda_hz = r.number_or("drive.lambda_hz", 0.0);
    c.psi_deg = r.number_or("drive.psi_deg", 0.0);

    c.n_c_th = r.number_or("baths.n_c_th", 0.0);
    c.n_m_th = r.number_or("baths.n_m_th", 0.0);
    c.n_left_th = r.number("baths.n_left_th");
    c.n_right_th = r.number("baths.n_right_th");
    c.n_internal_th = r.number("baths.n_internal_th");

    c.grid.span_hz = r.number("grid.span_hz");
    c.grid.points = static_cast<std::size_t>(r.number_or("grid.points", 32768.0));

    if (auto n_c0 = r.number("heating.n_c0")) {
        HeatingModel h;
        h.n_c0 = *n_c0;
        h.slope_per_ratio = r.number_or("heating.slope_per_ratio", 0.0);
        c.heating = h;
    }

    c.sde.seed = static_cast<std::uint64_t>(r.number_or("sde.seed", 1.0));
    c.sde.dt_s = r.number("sde.dt_s");
    c.sde.n_steps = static_cast<std::int64_t>(r.number_or("sde.n_steps", 200000.0));
    c.sde.n_traj = static_cast<int>(r.number_or("sde.n_traj", 8.0));
    c.sde.batches_per_traj = static_cast<int>(r.number_or("sde.batches_per_traj", 32.0));
    c.sde.store_decimation = static_cast<std::int64_t>(r.number_or("sde.store_decimation", 0.0));
    c.sde.euler = r.number_or("sde.euler", 0.0) != 0.0;

    c.cal.a_minus = r.number("calibration.a_minus");
    c.cal.a_plus = r.number("calibration.a_plus");
    c.cal.b_minus = r.number("calibration.b_minus");
    c.cal.b_minus_bae = r.number("calibration.b_minus_bae");

    c.bae.exclude_lo_hz = r.number("bae.exclude_lo_hz");
    c.bae.exclude_hi_hz = r.number("bae.exclude_hi_hz");
    c.bae.reference_power = r.number("bae.reference_power");
    c.bae.power_ratio = r.number("bae.power_ratio");

    c.scan.np_total = r.number("scan.np_total");
    if (auto ratios = r.get("scan.ratios"))
        c.scan.ratios = detail::parse_double_list(*ratios, "scan.ratios");

    if (auto hyp = r.get("fit.hypothesis")) {
        if (*hyp != "follow" && *hyp != "constant" && *hyp != "both")
            throw ParseError(0, "fit.hypothesis", "fit.hypothesis must be follow|constant|both");
        c.fit_hypothesis = *hyp;
    }
    r.finish();
    return c;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ParseError(0, path, "cannot open config file " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_run_config_text(ss.str());
}

// Validated bundle from the raw config; Hz -> rad/s and degrees -> radians
// happen here and nowhere else.
inline Bundle make_bundle_from_config(const RunConfig& c) {
    RawParams raw;
    raw.unit = FreqUnit::hertz;
    raw.system.omega_m = c.omega_m_hz;
    raw.system.kappa = c.kappa_hz;
    raw.system.kappa_l = c.kappa_left_hz;
    raw.system.kappa_r = c.kappa_right_hz;
    raw.system.kappa_i = c.kappa_internal_hz;
    raw.system.gamma_m = c.gamma_m_hz;
    raw.system.g0 = c.g0_hz;
    raw.system.x_zp = c.x_zp_m.value_or(0.0);
    raw.system.mass = c.mass_kg.value_or(0.0);
    if (c.omega_c_hz) raw.system.omega_c = *c.omega_c_hz;
    raw.drive.cavity_detuning = c.cavity_detuning_hz;
    raw.drive.mech_detuning = c.mech_detuning_hz;
    raw.drive.phi = deg_to_rad(c.phi_deg);
    raw.drive.lambda_par = c.lambda_hz;
    raw.drive.psi = deg_to_rad(c.psi_deg);
    const RawParams ang = normalized(raw);

    SystemParams sys = ang.system;
    DriveConfig drive = ang.drive;
    if (c.np_minus) drive.np_minus = *c.np_minus;
    else if (c.power_minus_w) {
        if (!c.cal.a_minus)
            throw ParseError(0, "calibration.a_minus",
                             "drive.power_minus_w needs calibration.a_minus");
        drive.np_minus = photon_number_from_power(*c.power_minus_w, *c.cal.a_minus, sys.g0);
    }
    if (c.np_plus) drive.np_plus = *c.np_plus;
    else if (c.power_plus_w) {
        if (!c.cal.a_plus)
            throw ParseError(0, "calibration.a_plus", "drive.power_plus_w needs calibration.a_plus");
        drive.np_plus = photon_number_from_power(*c.power_plus_w, *c.cal.a_plus, sys.g0);
    }

    BathOccupations baths;
    baths.n_c_th = c.n_c_th;
    baths.n_m_th = c.n_m_th;
    if (c.n_left_th || c.n_right_th || c.n_internal_th)
        baths.per_port = {{c.n_left_th.value_or(0.0), c.n_right_th.value_or(0.0),
                           c.n_internal_th.value_or(0.0)}};
    return make_bundle(sys, drive, baths);
}

inline std::vector<double> grid_from_config(const RunConfig& c, const Bundle& b) {
    if (c.grid.span_hz) {
        const double span = hz_to_rad(*c.grid.span_hz);
        return linspace(-span, span, c.grid.points);
    }
    return default_grid(b, c.grid.points);
}

inline std::string render_run_config(const RunConfig& c) {
    std::ostringstream out;
    auto num = [](double v) { return detail::format_double(v); };
    auto put = [&](const char* key, double v) { out << key << " = " << num(v) << '\n'; };
    auto put_opt = [&](const char* key, const std::optional<double>& v) {
        if (v) put(key, *v);
    };
    put("system.omega_m_hz", c.omega_m_hz);
    put("system.kappa_hz", c.kappa_hz);
    put("system.kappa_left_hz", c.kappa_left_hz);
    put("system.kappa_right_hz", c.kappa_right_hz);
    put("system.kappa_internal_hz", c.kappa_internal_hz);
    put("system.gamma_m_hz", c.gamma_m_hz);
    put("system.g0_hz", c.g0_hz);
    put_opt("system.x_zp_m", c.x_zp_m);
    put_opt("system.mass_kg", c.mass_kg);
    put_opt("system.omega_c_hz", c.omega_c_hz);
    put("drive.cavity_detuning_hz", c.cavity_detuning_hz);
    put("drive.mech_detuning_hz", c.mech_detuning_hz);
    put_opt("drive.np_minus", c.np_minus);
    put_opt("drive.np_plus", c.np_plus);
    put_opt("drive.power_minus_w", c.power_minus_w);
    put_opt("drive.power_plus_w", c.power_plus_w);
    put("drive.phi_deg", c.phi_deg);
    put("drive.lambda_hz", c.lambda_hz);
    put("drive.psi_deg", c.psi_deg);
    put("baths.n_c_th", c.n_c_th);
    put("baths.n_m_th", c.n_m_th);
    put_opt("baths.n_left_th", c.n_left_th);
    put_opt("baths.n_right_th", c.n_right_th);
    put_opt("baths.n_internal_th", c.n_internal_th);
    put_opt("grid.span_hz", c.grid.span_hz);
    put("grid.points", static_cast<double>(c.grid.points));
    if (c.heating) {
        put("heating.n_c0", c.heating->n_c0);
        put("heating.slope_per_ratio", c.heating->slope_per_ratio);
    }
    put("sde.seed", static_cast<double>(c.sde.seed));
    put_opt("sde.dt_s", c.sde.dt_s);
    put("sde.n_steps", static_cast<double>(c.sde.n_steps));
    put("sde.n_traj", static_cast<double>(c.sde.n_traj));
    put("sde.batches_per_traj", static_cast<double>(c.sde.batches_per_traj));
    put("sde.store_decimation", static_cast<double>(c.sde.store_decimation));
    put("sde.euler", c.sde.euler ? 1.0 : 0.0);
    put_opt("calibration.a_minus", c.cal.a_minus);
    put_opt("calibration.a_plus", c.cal.a_plus);
    put_opt("calibration.b_minus", c.cal.b_minus);
    put_opt("calibration.b_minus_bae", c.cal.b_minus_bae);
    put_opt("bae.exclude_lo_hz", c.bae.exclude_lo_hz);
    put_opt("bae.exclude_hi_hz", c.bae.exclude_hi_hz);
    put_opt("bae.reference_power", c.bae.reference_power);
    put_opt("bae.power_ratio", c.bae.power_ratio);
    put_opt("scan.np_total", c.scan.np_total);
    if (!c.scan.ratios.empty()) {
        out << "scan.ratios = ";
        for (std::size_t i = 0; i < c.scan.ratios.size(); ++i) {
            if (i) out << ',';
            out << num(c.scan.ratios[i]);
        }
        out << '\n';
    }
    out << "fit.hypothesis = " << c.fit_hypothesis << '\n';
    return out.str();
}

// Frame offsets for lab-frame file axes. Without omega_c the cavity axis is
// relative to the (unknown) cavity resonance, which shifts nothing but the
// axis origin.
inline FrameMap cavity_frame(const Bundle& b) {
    return {b.system.omega_c.value_or(0.0) + b.drive.cavity_detuning};
}
inline FrameMap mechanical_frame(const Bundle& b) {
    return {b.system.omega_m + b.drive.mech_detuning};
}

}  // namespace twotone
