// dualfringe: simulate -> fit -> analyze campaigns of the dual open interferometer.
//
// Exit codes: 0 ok, 2 config error, 3 IO error, 4 convergence rate below
// threshold, 1 any other library failure.

#include "dualfringe/analysis.hpp"
#include "dualfringe/config.hpp"
#include "dualfringe/io.hpp"

#include <CLI11.hpp>
#include <openssl/evp.h>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>

namespace fs = std::filesystem;
using namespace dualfringe;
using io::json;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_other = 1;
constexpr int exit_config = 2;
constexpr int exit_io = 3;
constexpr int exit_convergence = 4;

struct ConvergenceFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Options {
    std::string config;
    std::string in;
    std::string out;
    std::optional<std::int64_t> seed;
    unsigned jobs{std::max(1u, std::thread::hardware_concurrency())};
    bool quiet{false};
};

struct Log {
    bool quiet{false};
    template <class... A>
    void info(const A&... parts) const {
        if (quiet) return;
        (std::cerr << ... << parts) << '\n';
    }
    template <class... A>
    void warn(const A&... parts) const {
        (std::cerr << "warning: " << ... << parts) << '\n';
    }
};

std::string sha256_hex(const std::string& data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    require(ctx != nullptr, Errc::IoFailure, "cannot allocate a digest context");
    const bool ok = EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) == 1 &&
                    EVP_DigestUpdate(ctx, data.data(), data.size()) == 1 &&
                    EVP_DigestFinal_ex(ctx, digest, &len) == 1;
    EVP_MD_CTX_free(ctx);
    require(ok, Errc::IoFailure, "SHA-256 failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xf];
    }
    return out;
}

std::string file_sha256(const fs::path& path) { return sha256_hex(io::read_text(path)); }

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    require(!ec && fs::is_directory(dir), Errc::IoFailure, "cannot create output directory '" + dir.string() + "'");
}

CampaignConfig apply_seed(CampaignConfig cfg, const std::optional<std::int64_t>& seed) {
    if (!seed) return cfg;
    ConfigValues v = cfg.values;
    v.seed = *seed;
    auto defaulted = cfg.defaulted_keys;
    std::erase(defaulted, std::string("campaign.seed"));
    return build_config(v, defaulted);
}

CampaignConfig config_from_manifest(const fs::path& dir) {
    const fs::path path = dir / "manifest.json";
    require(fs::is_regular_file(path), Errc::IoFailure, "no manifest.json in '" + dir.string() + "'");
    const json manifest = json::parse(io::read_text(path), nullptr, false);
    require(!manifest.is_discarded() && manifest.contains("config_text"), Errc::IoFailure,
            "manifest.json in '" + dir.string() + "' is malformed");
    return parse_config(manifest.at("config_text").get<std::string>());
}

/// Records the hash of each named output in the campaign manifest.
void register_outputs(const fs::path& manifest_dir, const fs::path& out_dir, const std::vector<std::string>& names) {
    const fs::path path = manifest_dir / "manifest.json";
    json manifest = json::parse(io::read_text(path), nullptr, false);
    require(!manifest.is_discarded(), Errc::IoFailure, "manifest.json is malformed");
    const std::string prefix =
        fs::equivalent(manifest_dir, out_dir) ? "" : fs::relative(out_dir, manifest_dir).generic_string() + "/";
    for (const auto& name : names) manifest["files"][prefix + name] = file_sha256(out_dir / name);
    io::write_text(path, manifest.dump(2) + "\n");
}

// --- simulate -----------------------------------------------------------------

void cmd_simulate(const CampaignConfig& cfg, const fs::path& out, unsigned jobs, const Log& log) {
    ensure_dir(out);
    log.info("simulating ", cfg.n_runs, " runs (seed ", cfg.seed, ")");
    if (!cfg.defaulted_keys.empty()) {
        log.info(cfg.defaulted_keys.size(), " config keys taken from defaults; listed in manifest.json");
    }
    const Campaign campaign = simulate_campaign(cfg.scenario, cfg.n_runs, jobs);
    io::write_profiles_csv(out / "profiles.csv", campaign.profiles);
    io::write_truth_jsonl(out / "ground_truth.jsonl", campaign.truth);

    const std::string text = canonical_ini(cfg.values);
    const auto& s = cfg.scenario;
    json manifest{{"tool", "dualfringe"},
                  {"format_version", 1},
                  {"seed", cfg.seed},
                  {"n_runs", cfg.n_runs},
                  {"config_sha256", sha256_hex(text)},
                  {"config_text", text},
                  {"defaulted_keys", cfg.defaulted_keys},
                  {"derived",
                   {{"fringe_wavenumber_rad_m", s.fringe_defaults.fringe_wavenumber},
                    {"scale_factor_dual_rad_per_m_s2", source_scale_factor(SeriesSource::Dual, s)},
                    {"scale_factor_signal_rad_per_m_s2", source_scale_factor(SeriesSource::Signal, s)},
                    {"scale_factor_reference_rad_per_m_s2", source_scale_factor(SeriesSource::Reference, s)},
                    {"t_drop_s", s.dual.signal.t_drop()},
                    {"reference_t_exp_s", s.dual.reference.t_exp}}},
                  {"files", json::object()}};
    io::write_text(out / "manifest.json", manifest.dump(2) + "\n");
    register_outputs(out, out, {"profiles.csv", "ground_truth.jsonl"});
}

// --- calibrate ----------------------------------------------------------------

inline constexpr std::size_t calibration_profiles = 50;

void cmd_calibrate(const CampaignConfig& cfg, const fs::path& in, const Log& log) {
    const fs::path profiles_path = in / "profiles.csv";
    require(fs::is_regular_file(profiles_path), Errc::IoFailure, "no profiles.csv in '" + in.string() + "'");
    auto profiles = io::read_profiles_csv(profiles_path, cfg.scenario.grid);
    if (profiles.size() > calibration_profiles) profiles.resize(calibration_profiles);
    const double nominal = cfg.scenario.fringe_defaults.fringe_wavenumber;
    const double k = calibrate_magnification(profiles, nominal, cfg.scenario.grid.z_start, cfg.fit);
    log.info("calibrated fringe wavenumber ", k, " rad/m (nominal ", nominal, ")");
    json out{{"nominal_fringe_wavenumber_rad_m", nominal},
             {"fringe_wavenumber_rad_m", k},
             {"ratio", k / nominal},
             {"n_profiles", profiles.size()}};
    io::write_text(in / "calibration.json", out.dump(2) + "\n");
    register_outputs(in, in, {"calibration.json"});
}

// --- fit ------------------------------------------------------------------------

void cmd_fit(const CampaignConfig& cfg, const fs::path& in, const fs::path& out, unsigned jobs, const Log& log) {
    const fs::path profiles_path = in / "profiles.csv";
    require(fs::is_regular_file(profiles_path), Errc::IoFailure, "no profiles.csv in '" + in.string() + "'");
    ensure_dir(out);
    const auto profiles = io::read_profiles_csv(profiles_path, cfg.scenario.grid);
    require(!profiles.empty(), Errc::IoFailure, "profiles.csv holds no profiles");

    double k = cfg.scenario.fringe_defaults.fringe_wavenumber;
    std::string k_source = "config";
    if (fs::is_regular_file(in / "calibration.json")) {
        const json cal = json::parse(io::read_text(in / "calibration.json"), nullptr, false);
        require(!cal.is_discarded() && cal.contains("fringe_wavenumber_rad_m"), Errc::IoFailure,
                "calibration.json is malformed");
        k = cal.at("fringe_wavenumber_rad_m").get<double>();
        k_source = "calibration";
    }
    log.info("fitting ", profiles.size(), " profiles at k_fringe = ", k, " rad/m (", k_source, ")");
    const auto records = fit_profiles(profiles, k, cfg.scenario.grid.z_start, cfg.fit, jobs);
    io::write_fits_jsonl(out / "fits.jsonl", records);

    std::map<std::string, std::size_t> failures;
    std::size_t converged = 0;
    for (const auto& r : records) {
        if (r.ok()) {
            ++converged;
        } else {
            const std::string reason = r.failure.empty() ? "NotConverged" : r.failure.substr(0, r.failure.find(':'));
            ++failures[reason];
        }
    }
    const double rate = convergence_rate(records);
    json summary{{"n_profiles", records.size()},
                 {"n_converged", converged},
                 {"convergence_rate", rate},
                 {"min_convergence_rate", cfg.min_convergence_rate},
                 {"fringe_wavenumber_rad_m", k},
                 {"fringe_wavenumber_source", k_source},
                 {"failures", failures}};
    io::write_text(out / "fit_summary.json", summary.dump(2) + "\n");
    if (fs::is_regular_file(in / "manifest.json")) register_outputs(in, out, {"fits.jsonl", "fit_summary.json"});
    log.info("convergence rate ", rate);
    if (rate < cfg.min_convergence_rate) {
        throw ConvergenceFailure("convergence rate " + io::num(rate) + " below threshold " +
                                 io::num(cfg.min_convergence_rate));
    }
}

// --- analyze --------------------------------------------------------------------

void write_moving_average(const fs::path& path, const TimeSeries& ma) {
    io::CsvTable t({"timestamp_s", "phase_rad", "quality"});
    for (std::size_t i = 0; i < ma.size(); ++i) t.row(ma.timestamps[i], ma.values[i], static_cast<int>(ma.quality[i]));
    t.write(path);
}

json loglog_summary(const AllanCurve& curve, double shot_period) {
    json j = json::object();
    const std::size_t n = curve.n_samples;
    if (n < 20 || curve.taus.size() < 2) return j;
    const LogLogFit f = fit_loglog(curve, 1, n / 10);
    j["slope"] = f.slope;
    j["adev_at_n_uGal"] = f.at(static_cast<double>(n) * shot_period);
    j["fit_range_runs"] = json::array({1, n / 10});
    return j;
}

void cmd_analyze(const CampaignConfig& cfg, const fs::path& in, const fs::path& out, const Log& log) {
    const fs::path fits_path = in / "fits.jsonl";
    require(fs::is_regular_file(fits_path), Errc::IoFailure, "no fits.jsonl in '" + in.string() + "'");
    ensure_dir(out);
    const auto records = io::read_fits_jsonl(fits_path);
    require(!records.empty(), Errc::IoFailure, "fits.jsonl holds no records");
    const DualScenario& s = cfg.scenario;
    const CampaignAnalysis a = analyze_campaign(records, s, cfg.analysis);
    if (a.drop_rate > 0.05) {
        log.warn("drop rate ", a.drop_rate, " exceeds 5%; Allan curves use the compacted series");
    }

    std::vector<std::string> written;
    auto emit = [&](const std::string& name) { written.push_back(name); };

    write_moving_average(out / "fig2b_reference_ma.csv", a.reference.moving_average);
    emit("fig2b_reference_ma.csv");
    write_moving_average(out / "fig2c_signal_ma.csv", a.signal.moving_average);
    emit("fig2c_signal_ma.csv");
    write_moving_average(out / "fig2d_dual_ma.csv", a.dual.moving_average);
    emit("fig2d_dual_ma.csv");

    std::vector<const ReadoutAnalysis*> gravity_readouts;
    if (cfg.pipeline != PipelineMode::Signal) gravity_readouts.push_back(&a.dual);
    if (cfg.pipeline != PipelineMode::Dual) gravity_readouts.push_back(&a.signal);

    io::CsvTable binned({"source", "bin_center_s", "mean_uGal", "se_uGal", "count", "tide_uGal"});
    io::CsvTable resid({"source", "bin_center_s", "residual_uGal", "se_uGal", "count"});
    json se = json::object(), means = json::object(), flagged = json::object(), allan = json::object();
    for (const ReadoutAnalysis* r : gravity_readouts) {
        const std::string name(to_string(r->source));
        for (const auto& b : r->bins) {
            binned.row(name, b.center, b.mean, b.standard_error, b.count, tide_at(s.gravity_signal, b.center));
        }
        for (const auto& b : r->residual_bins) resid.row(name, b.center, b.mean, b.standard_error, b.count);
        io::write_gravity_csv(out / ("gravity_" + name + ".csv"), r->gravity);
        emit("gravity_" + name + ".csv");
        io::write_allan_csv(out / ("fig3_allan_" + name + ".csv"), r->allan);
        emit("fig3_allan_" + name + ".csv");
        se[name] = r->residuals.standard_error;
        means[name] = r->residuals.mean;
        flagged[name] = r->flagged_steps;
        allan[name] = loglog_summary(r->allan, s.shot_period);
    }
    binned.write(out / "fig2e_binned.csv");
    emit("fig2e_binned.csv");
    resid.write(out / "fig2f_residuals.csv");
    emit("fig2f_residuals.csv");
    io::write_allan_csv(out / "fig3_allan_reference.csv", a.reference.allan);
    emit("fig3_allan_reference.csv");

    json report{{"se_uGal", se},
                {"residual_mean_uGal", means},
                {"bin_width_s", cfg.analysis.bin_width_s},
                {"n_bins", a.dual.residual_bins.size()},
                {"drop_rate", a.drop_rate},
                {"convergence_rate", a.convergence_rate},
                {"flagged_steps", flagged},
                {"allan_loglog", allan}};
    if (cfg.pipeline == PipelineMode::Both) report["ratio"] = a.residual_ratio.ratio;

    const fs::path truth_path = in / "ground_truth.jsonl";
    if (fs::is_regular_file(truth_path)) {
        const auto truth = io::read_truth_jsonl(truth_path);
        if (truth.size() == records.size()) {
            // wrapped difference between fitted and true dual phase, about its mean
            std::vector<double> err;
            for (std::size_t i = 0; i < records.size(); ++i) {
                if (!a.dual.phase.quality[i]) continue;
                const double fitted = wrap_phase(records[i].fit->params.phase_sig - records[i].fit->params.phase_ref);
                err.push_back(wrap_phase(fitted - truth[i].dual_phase_true));
            }
            double m = 0.0, ss = 0.0;
            for (double e : err) m += e;
            m /= static_cast<double>(std::max<std::size_t>(err.size(), 1));
            for (double e : err) ss += (e - m) * (e - m);
            report["truth"] = {{"dual_phase_error_mean_rad", m},
                               {"dual_phase_error_std_rad",
                                err.size() > 1 ? std::sqrt(ss / static_cast<double>(err.size() - 1)) : 0.0}};
        } else {
            log.warn("ground_truth.jsonl has ", truth.size(), " records for ", records.size(), " fits; ignored");
        }
    }
    io::write_text(out / "residual_report.json", report.dump(2) + "\n");
    emit("residual_report.json");

    if (a.closed_report) {
        const auto& c = *a.closed_report;
        json closed{{"closed_t_s", cfg.analysis.closed_t_interrogation},
                    {"scale_factor_dual", c.scale_dual},
                    {"scale_factor_closed", c.scale_closed},
                    {"scale_ratio", c.scale_ratio}};
        if (c.sensitivity_ratio) {
            closed["dual_sensitivity_uGal"] = *c.dual_sensitivity_ugal;
            closed["closed_sensitivity_uGal"] = *c.closed_sensitivity_ugal;
            closed["sensitivity_ratio"] = *c.sensitivity_ratio;
        }
        io::write_text(out / "closed_mz_report.json", closed.dump(2) + "\n");
        emit("closed_mz_report.json");
        if (a.closed_allan) {
            io::write_allan_csv(out / "fig3_allan_closed.csv", *a.closed_allan);
            emit("fig3_allan_closed.csv");
        }
    }
    if (fs::is_regular_file(in / "manifest.json")) register_outputs(in, out, written);
    log.info("analysis written to ", out.string());
}

int exit_code_for(Errc code) {
    switch (code) {
    case Errc::ConfigParse: return exit_config;
    case Errc::IoFailure: return exit_io;
    default: return exit_other;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Simulate, fit and analyze dual open-interferometer gravimetry campaigns"};
    app.require_subcommand(1);
    Options opt;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--jobs", opt.jobs, "worker threads")->check(CLI::PositiveNumber);
        sub->add_flag("--quiet", opt.quiet, "suppress progress messages");
    };
    auto* simulate = app.add_subcommand("simulate", "synthesize a campaign of density profiles");
    simulate->add_option("--config", opt.config, "campaign INI")->required();
    simulate->add_option("--out", opt.out, "output directory")->required();
    simulate->add_option("--seed", opt.seed, "overrides campaign.seed");
    common(simulate);

    auto* fit = app.add_subcommand("fit", "fit every profile of a simulated campaign");
    fit->add_option("--in", opt.in, "campaign directory")->required();
    fit->add_option("--out", opt.out, "output directory (default: --in)");
    common(fit);

    auto* analyze = app.add_subcommand("analyze", "turn fit records into figure data");
    analyze->add_option("--in", opt.in, "directory with fits.jsonl and manifest.json")->required();
    analyze->add_option("--out", opt.out, "output directory (default: --in)");
    analyze->add_option("--config", opt.config, "analysis config (default: the campaign's own)");
    common(analyze);

    auto* pipeline = app.add_subcommand("pipeline", "simulate, fit and analyze in one go");
    pipeline->add_option("--config", opt.config, "campaign INI")->required();
    pipeline->add_option("--out", opt.out, "output directory")->required();
    pipeline->add_option("--seed", opt.seed, "overrides campaign.seed");
    common(pipeline);

    auto* calibrate = app.add_subcommand("calibrate", "estimate the imaging magnification from profiles");
    calibrate->add_option("--in", opt.in, "campaign directory")->required();
    common(calibrate);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_config;
    }

    const Log log{opt.quiet};
    try {
        const fs::path in = opt.in;
        const fs::path out = opt.out.empty() ? in : fs::path(opt.out);
        if (simulate->parsed()) {
            cmd_simulate(apply_seed(load_config(opt.config), opt.seed), out, opt.jobs, log);
        } else if (fit->parsed()) {
            cmd_fit(config_from_manifest(in), in, out, opt.jobs, log);
        } else if (analyze->parsed()) {
            const CampaignConfig cfg = opt.config.empty() ? config_from_manifest(in) : load_config(opt.config);
            cmd_analyze(cfg, in, out, log);
        } else if (calibrate->parsed()) {
            cmd_calibrate(config_from_manifest(in), in, log);
        } else if (pipeline->parsed()) {
            const CampaignConfig cfg = apply_seed(load_config(opt.config), opt.seed);
            cmd_simulate(cfg, out, opt.jobs, log);
            if (cfg.calibrate_magnification) cmd_calibrate(cfg, out, log);
            cmd_fit(cfg, out, out, opt.jobs, log);
            cmd_analyze(cfg, out, out, log);
        }
    } catch (const ConvergenceFailure& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_convergence;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e.code());
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: IoFailure: " << e.what() << '\n';
        return exit_io;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_other;
    }
    return exit_ok;
}
