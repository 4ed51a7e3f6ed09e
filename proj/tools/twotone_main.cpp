// Command-line front end: forward spectra, phase and ratio scans, the
// calibration/fitting pipeline, BAE conversion, and the SDE cross-check.
// Every run writes its outputs plus a manifest that is itself a valid config
// file reproducing the run.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "twotone/config.hpp"
#include "twotone/csv.hpp"
#include "twotone/inference.hpp"
#include "twotone/quadrature.hpp"
#include "twotone/response.hpp"
#include "twotone/sde.hpp"

namespace fs = std::filesystem;
using namespace twotone;

namespace {

constexpr const char* kVersion = "twotone 1.0.0";

struct CommonArgs {
    std::string config_path;
    std::string out_dir = ".";
    std::optional<std::size_t> grid_points;
    std::optional<std::uint64_t> seed;
    std::string phases;      // "a,b,c" in degrees
    std::string hypothesis;  // follow|constant|both
    std::string data_path;
    bool with_intercept = false;
};

struct Deferred {
    // computed outputs staged in memory; nothing touches the disk until the
    // whole command has succeeded
    std::vector<std::pair<std::string, std::string>> text_files;
    std::vector<std::function<void(const std::string&)>> writers;

    void add_text(const std::string& name, std::string content) {
        text_files.emplace_back(name, std::move(content));
    }
    void add_writer(std::function<void(const std::string&)> w) { writers.push_back(std::move(w)); }

    void flush(const fs::path& dir) {
        fs::create_directories(dir);
        for (auto& [name, content] : text_files) {
            std::ofstream f(dir / name);
            if (!f) throw Error("cannot write " + (dir / name).string());
            f << content;
        }
        for (auto& w : writers) w(dir.string());
    }
};

RunConfig effective_config(const CommonArgs& args) {
    RunConfig cfg = load_run_config(args.config_path);
    if (args.grid_points) cfg.grid.points = *args.grid_points;
    if (args.seed) cfg.sde.seed = *args.seed;
    if (!args.hypothesis.empty()) cfg.fit_hypothesis = args.hypothesis;
    return cfg;
}

std::string manifest_text(const std::string& command, const CommonArgs& args,
                          const RunConfig& cfg, const std::string& extra = {}) {
    std::ostringstream out;
    out << "# " << kVersion << " run manifest\n";
    out << "# command: twotone " << command << " --config " << args.config_path << " --out "
        << args.out_dir;
    if (!args.data_path.empty()) out << " --data " << args.data_path;
    out << "\n# re-run: point --config at this file with the same command\n";
    out << render_run_config(cfg);
    if (!extra.empty()) out << "# results\n" << extra;
    return out.str();
}

std::vector<double> parse_phase_list_deg(const std::string& s) {
    if (s.empty()) {
        std::vector<double> out;
        for (int k = 0; k <= 180; k += 5) out.push_back(static_cast<double>(k));
        return out;
    }
    return detail::parse_double_list(s, "--phases");
}

std::string fit_result_text(const FitResult& fit) {
    std::ostringstream out;
    for (std::size_t i = 0; i < fit.names.size(); ++i)
        out << fit.names[i] << " = " << detail::format_double(fit.values[i]) << " +- "
            << detail::format_double(fit.std_errors[i]) << "\n";
    out << "rss = " << detail::format_double(fit.rss) << "\n";
    out << "iterations = " << fit.iterations << "\n";
    out << "converged = " << (fit.converged ? 1 : 0) << "\n";
    return out.str();
}

int cmd_spectrum(const CommonArgs& args) {
    const RunConfig cfg = effective_config(args);
    const Bundle b = make_bundle_from_config(cfg);
    const auto grid = grid_from_config(cfg, b);
    const auto trans = transmission(b, grid);
    const auto noise = output_noise_spectrum(b, grid);
    const FrameMap frame = cavity_frame(b);

    Deferred out;
    out.add_writer([=](const std::string& dir) {
        write_complex_spectrum_csv(dir + "/transmission.csv", trans, frame);
        write_spectrum_csv(dir + "/noise_device.csv", noise.device_referred, frame);
        write_spectrum_csv(dir + "/noise_output.csv", noise.output, frame);
    });
    out.add_text("run_manifest.cfg", manifest_text("spectrum", args, cfg));
    out.flush(args.out_dir);
    std::cout << "wrote transmission.csv, noise_device.csv, noise_output.csv\n";
    return 0;
}

int cmd_quadrature(const CommonArgs& args) {
    const RunConfig cfg = effective_config(args);
    const Bundle b = make_bundle_from_config(cfg);
    const auto grid = grid_from_config(cfg, b);
    const auto spec = quadrature_spectrum(b, b.drive.phi, grid);
    const double var = quadrature_variance(b, b.drive.phi);

    std::ostringstream extra;
    extra << "# variance_xzp2 = " << detail::format_double(var) << "\n";
    Deferred out;
    const FrameMap frame = mechanical_frame(b);
    out.add_writer([=](const std::string& dir) {
        write_spectrum_csv(dir + "/quadrature.csv", spec, frame);
    });
    out.add_text("run_manifest.cfg", manifest_text("quadrature", args, cfg, extra.str()));
    out.flush(args.out_dir);
    std::cout << "variance = " << var << " x_zp^2\n";
    return 0;
}

int cmd_phase_scan(const CommonArgs& args) {
    const RunConfig cfg = effective_config(args);
    const Bundle b = make_bundle_from_config(cfg);
    const auto phases_deg = parse_phase_list_deg(args.phases);
    std::vector<double> phases(phases_deg.size());
    for (std::size_t i = 0; i < phases.size(); ++i) phases[i] = deg_to_rad(phases_deg[i]);

    PhaseScanOptions opt;
    opt.psi0 = b.drive.psi;
    opt.psi_mode = cfg.fit_hypothesis == "constant" ? PhaseScanOptions::PsiMode::fixed
                                                    : PhaseScanOptions::PsiMode::follow_probe;
    if (b.drive.lambda_par == 0.0) opt.psi_mode = PhaseScanOptions::PsiMode::fixed;
    const auto scan = phase_scan(b, phases, opt);

    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < scan.size(); ++i)
        rows.push_back({phases_deg[i], scan[i].variance,
                        scan[i].linewidth ? rad_to_hz(*scan[i].linewidth) : 0.0});
    Deferred out;
    out.add_writer([=](const std::string& dir) {
        write_table_csv(dir + "/phase_scan.csv", "phi_deg,variance_xzp2,linewidth_hz", rows);
    });
    out.add_text("run_manifest.cfg", manifest_text("phase-scan", args, cfg));
    out.flush(args.out_dir);
    std::cout << "wrote phase_scan.csv (" << rows.size() << " phases)\n";
    return 0;
}

int cmd_ratio_scan(const CommonArgs& args) {
    const RunConfig cfg = effective_config(args);
    if (!cfg.scan.np_total) throw ParseError(0, "scan.np_total", "ratio-scan needs scan.np_total");
    std::vector<double> ratios = cfg.scan.ratios;
    if (ratios.empty())
        for (int k = 0; k <= 45; ++k) ratios.push_back(0.02 * k);

    const Bundle base = make_bundle_from_config(cfg);
    std::vector<std::vector<double>> rows;
    for (double rho : ratios) {
        Bundle b = base;
        b.drive.np_minus = *cfg.scan.np_total / (1.0 + rho);
        b.drive.np_plus = *cfg.scan.np_total - b.drive.np_minus;
        if (cfg.heating) b.baths.n_c_th = cfg.heating->at_ratio(rho);
        b.couplings = derive_couplings(b.system, b.drive);
        const double v1 = quadrature_variance(b, 0.0);
        const double v2 = quadrature_variance(b, two_pi / 4.0);
        rows.push_back({rho, b.baths.n_c_th, v1, v2});
    }
    Deferred out;
    out.add_writer([=](const std::string& dir) {
        write_table_csv(dir + "/ratio_scan.csv", "ratio,n_c_th,var_x1_xzp2,var_x2_xzp2", rows);
    });
    out.add_text("run_manifest.cfg", manifest_text("ratio-scan", args, cfg));
    out.flush(args.out_dir);
    std::cout << "wrote ratio_scan.csv (" << rows.size() << " ratios)\n";
    return 0;
}

int cmd_fit_spectrum(const CommonArgs& args) {
    const RunConfig cfg = effective_config(args);
    if (args.data_path.empty()) throw ParseError(0, "--data", "fit-spectrum needs --data");
    if (!cfg.cal.a_minus || !cfg.cal.b_minus)
        throw ParseError(0, "calibration.a_minus",
                         "fit-spectrum needs calibration.a_minus and calibration.b_minus");
    const Bundle base = make_bundle_from_config(cfg);
    const Spectrum measured = read_spectrum_csv(args.data_path, cavity_frame(base));

    OutputSpectrumFitSetup setup;
    setup.base = base;
    setup.g_minus = base.couplings.g_minus;
    setup.g_plus = base.couplings.g_plus;
    CalibrationConstants cal;
    cal.a_minus = *cfg.cal.a_minus;
    cal.a_plus = cfg.cal.a_plus.value_or(*cfg.cal.a_minus);
    cal.b_minus = *cfg.cal.b_minus;
    setup.gain = cal.gain_product();

    const FitResult fit = fit_output_spectrum(measured, setup);

    // model curve at the fitted point
    const Bundle fitted = detail::output_fit_bundle(
        setup, fit.value("Delta"), fit.value("delta"), fit.value("kappa"), fit.value("gamma_m"),
        fit.value("n_c_th"), fit.value("n_m_th"));
    Spectrum model;
    model.freq = measured.freq;
    model.value.resize(measured.size());
    for (std::size_t i = 0; i < measured.size(); ++i)
        model.value[i] = setup.gain * output_noise_at(fitted, measured.freq[i]);

    Deferred out;
    const FrameMap frame = cavity_frame(base);
    out.add_writer([=](const std::string& dir) {
        write_spectrum_csv(dir + "/fit_model.csv", model, frame);
    });
    out.add_text("fit_result.txt", fit_result_text(fit));
    out.add_text("run_manifest.cfg", manifest_text("fit-spectrum", args, cfg, fit_result_text(fit)));
    out.flush(args.out_dir);
    std::cout << fit_result_text(fit);
    return 0;
}

int cmd_calibrate(const CommonArgs& args) {
    if (args.data_path.empty()) throw ParseError(0, "--data", "calibrate needs --data");
    const auto rows = read_table_csv(args.data_path, "x,y");
    std::vector<std::pair<double, double>> pts;
    for (const auto& r : rows) pts.emplace_back(r[0], r[1]);
    const FitResult fit = fit_linear_calibration(pts, args.with_intercept);

    Deferred out;
    out.add_text("calibration_result.txt", fit_result_text(fit));
    out.flush(args.out_dir);
    std::cout << fit_result_text(fit);
    return 0;
}

int cmd_bae(const CommonArgs& args) {
    const RunConfig cfg = effective_config(args);
    if (!cfg.cal.b_minus_bae)
        throw ParseError(0, "calibration.b_minus_bae", "bae needs calibration.b_minus_bae");
    const Bundle b = make_bundle_from_config(cfg);
    CalibrationConstants cal;
    cal.a_minus = cfg.cal.a_minus.value_or(1.0);
    cal.a_plus = cfg.cal.a_plus.value_or(1.0);
    cal.b_minus = *cfg.cal.b_minus_bae;

    double ratio = 0.0;
    Deferred out;
    if (cfg.bae.power_ratio) {
        ratio = *cfg.bae.power_ratio;
    } else {
        if (args.data_path.empty())
            throw ParseError(0, "--data", "bae needs --data or bae.power_ratio");
        if (!cfg.bae.exclude_lo_hz || !cfg.bae.exclude_hi_hz || !cfg.bae.reference_power)
            throw ParseError(0, "bae.exclude_lo_hz",
                             "bae needs bae.exclude_lo_hz/exclude_hi_hz/reference_power");
        const FrameMap frame = cavity_frame(b);
        const Spectrum meas = read_spectrum_csv(args.data_path, frame);
        const double lo = frame.to_rot_rad(*cfg.bae.exclude_lo_hz);
        const double hi = frame.to_rot_rad(*cfg.bae.exclude_hi_hz);
        const auto bg = subtract_background_quadratic(meas, lo, hi);
        // sideband power: integral of the corrected spectrum over the band
        double power = 0.0;
        for (std::size_t i = 0; i + 1 < bg.corrected.size(); ++i) {
            const double w0 = bg.corrected.freq[i], w1 = bg.corrected.freq[i + 1];
            if (w0 < lo || w1 > hi) continue;
            power += 0.5 * (bg.corrected.value[i] + bg.corrected.value[i + 1]) *
                     rad_to_hz(w1 - w0);
        }
        ratio = power / *cfg.bae.reference_power;
        out.add_writer([=](const std::string& dir) {
            write_spectrum_csv(dir + "/bae_corrected.csv", bg.corrected, frame);
            write_spectrum_csv(dir + "/bae_background.csv", bg.background, frame);
        });
    }
    const double variance =
        bae_sideband_to_variance(ratio, cal, b.drive.cavity_detuning, b.system.kappa);
    std::ostringstream extra;
    extra << "# power_ratio = " << detail::format_double(ratio) << "\n";
    extra << "# variance_xzp2 = " << detail::format_double(variance) << "\n";
    out.add_text("run_manifest.cfg", manifest_text("bae", args, cfg, extra.str()));
    out.flush(args.out_dir);
    std::cout << "power ratio = " << ratio << ", variance = " << variance << " x_zp^2\n";
    return 0;
}

int cmd_fit_parametric(const CommonArgs& args) {
    const RunConfig cfg = effective_config(args);
    if (args.data_path.empty()) throw ParseError(0, "--data", "fit-parametric needs --data");
    const Bundle base = make_bundle_from_config(cfg);
    const auto rows = read_table_csv(args.data_path, "phi_deg,gamma_hz,sigma_hz");
    PhaseLinewidthData data;
    for (const auto& r : rows) {
        data.phi.push_back(deg_to_rad(r[0]));
        data.gamma.push_back(hz_to_rad(r[1]));
        data.sigma.push_back(hz_to_rad(r[2]));
    }

    std::ostringstream report;
    auto run = [&](ParametricHypothesis hyp, const char* label) {
        const FitResult fit = fit_parametric_drive(data, base, hyp);
        report << "[" << label << "]\n";
        report << "lambda_hz = " << detail::format_double(rad_to_hz(fit.value("lambda_par")))
               << " +- " << detail::format_double(rad_to_hz(fit.std_error("lambda_par"))) << "\n";
        report << "psi0_deg = " << detail::format_double(rad_to_deg(fit.value("psi0"))) << " +- "
               << detail::format_double(rad_to_deg(fit.std_error("psi0"))) << "\n";
        report << "rss = " << detail::format_double(fit.rss) << "\n";
    };
    if (cfg.fit_hypothesis == "follow" || cfg.fit_hypothesis == "both")
        run(ParametricHypothesis::follow_probe, "follow");
    if (cfg.fit_hypothesis == "constant" || cfg.fit_hypothesis == "both")
        run(ParametricHypothesis::constant_psi, "constant");

    Deferred out;
    out.add_text("parametric_fit.txt", report.str());
    out.add_text("run_manifest.cfg", manifest_text("fit-parametric", args, cfg, report.str()));
    out.flush(args.out_dir);
    std::cout << report.str();
    return 0;
}

int cmd_sde_check(const CommonArgs& args) {
    const RunConfig cfg = effective_config(args);
    const Bundle b = make_bundle_from_config(cfg);

    SdeOptions opt;
    opt.seed = cfg.sde.seed;
    opt.dt = cfg.sde.dt_s.value_or(0.05 / max_dynamical_rate(b));
    opt.n_steps = cfg.sde.n_steps;
    opt.n_traj = cfg.sde.n_traj;
    opt.batches_per_traj = cfg.sde.batches_per_traj;
    opt.store_decimation = cfg.sde.store_decimation;
    opt.euler = cfg.sde.euler;
    const auto ens = simulate_trajectories(b, opt);

    std::vector<std::vector<double>> rows;
    bool all_within = true;
    for (double phi_deg : {0.0, 90.0}) {
        const double phi = deg_to_rad(phi_deg);
        const auto est = estimate_variance_from_trajectories(ens, phi);
        const double ref = quadrature_variance(b, phi);
        const bool ok = std::abs(est.value - ref) <= 3.0 * est.sigma;
        all_within = all_within && ok;
        rows.push_back({phi_deg, est.value, est.sigma, ref, ok ? 1.0 : 0.0});
    }
    Deferred out;
    out.add_writer([=](const std::string& dir) {
        write_table_csv(dir + "/sde_check.csv",
                        "phi_deg,sde_variance,sde_sigma,freq_domain_variance,within_3sigma", rows);
    });
    if (opt.store_decimation > 0 && !ens.samples.empty()) {
        std::vector<std::vector<double>> trace;
        double t = 0.0;
        for (const auto& s : ens.samples[0]) {
            trace.push_back({t, s[0], s[1]});
            t += opt.dt * static_cast<double>(opt.store_decimation);
        }
        out.add_writer([=](const std::string& dir) {
            write_table_csv(dir + "/sde_trace.csv", "time_s,x1_xzp,x2_xzp", trace);
        });
    }
    out.add_text("run_manifest.cfg", manifest_text("sde-check", args, cfg));
    out.flush(args.out_dir);
    std::cout << (all_within ? "sde-check: agreement within 3 sigma\n"
                             : "sde-check: DISAGREEMENT beyond 3 sigma\n");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"two-tone cavity optomechanics: spectra, squeezing, and inference"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    CommonArgs args;
    std::string command;
    auto add_common = [&](CLI::App* sub, bool needs_config = true) {
        auto* c = sub->add_option("--config", args.config_path, "run configuration file");
        if (needs_config) c->required();
        sub->add_option("--out", args.out_dir, "output directory");
        sub->add_option("--grid-points", args.grid_points, "override grid.points");
        sub->add_option("--seed", args.seed, "override sde.seed");
    };

    auto* spectrum = app.add_subcommand("spectrum", "transmission and output-noise spectra");
    add_common(spectrum);
    auto* quad = app.add_subcommand("quadrature", "mechanical quadrature spectrum and variance");
    add_common(quad);
    auto* pscan = app.add_subcommand("phase-scan", "variance and linewidth vs probe phase");
    add_common(pscan);
    pscan->add_option("--phases", args.phases, "comma-separated phases in degrees");
    pscan->add_option("--hypothesis", args.hypothesis, "follow|constant (when lambda != 0)");
    auto* rscan = app.add_subcommand("ratio-scan", "variances vs pump photon ratio");
    add_common(rscan);
    auto* fitspec = app.add_subcommand("fit-spectrum", "fit a measured output noise spectrum");
    add_common(fitspec);
    fitspec->add_option("--data", args.data_path, "measured spectrum CSV")->required();
    auto* cal = app.add_subcommand("calibrate", "linear calibration fit of x,y points");
    cal->add_option("--data", args.data_path, "points CSV with header x,y")->required();
    cal->add_option("--out", args.out_dir, "output directory");
    cal->add_flag("--intercept", args.with_intercept, "fit slope and intercept");
    auto* bae = app.add_subcommand("bae", "convert a BAE sideband measurement to a variance");
    add_common(bae);
    bae->add_option("--data", args.data_path, "BAE spectrum CSV");
    auto* fitpar = app.add_subcommand("fit-parametric", "fit the parametric drive to linewidth data");
    add_common(fitpar);
    fitpar->add_option("--data", args.data_path, "linewidth CSV: phi_deg,gamma_hz,sigma_hz")
        ->required();
    fitpar->add_option("--hypothesis", args.hypothesis, "follow|constant|both");
    auto* sde = app.add_subcommand("sde-check", "cross-validate variances with trajectories");
    add_common(sde);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 4;
    }

    try {
        if (spectrum->parsed()) return cmd_spectrum(args);
        if (quad->parsed()) return cmd_quadrature(args);
        if (pscan->parsed()) return cmd_phase_scan(args);
        if (rscan->parsed()) return cmd_ratio_scan(args);
        if (fitspec->parsed()) return cmd_fit_spectrum(args);
        if (cal->parsed()) return cmd_calibrate(args);
        if (bae->parsed()) return cmd_bae(args);
        if (fitpar->parsed()) return cmd_fit_parametric(args);
        if (sde->parsed()) return cmd_sde_check(args);
    } catch (const UnstableParameters& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const UnstableAtPhase& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NonConvergence& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const UnstableFitRegion& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
