#include <catch2/catch_amalgamated.hpp>

#include "dualfringe/io.hpp"
#include "dualfringe/stability.hpp"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace dualfringe;
using Catch::Approx;
namespace fs = std::filesystem;
using io::json;

namespace {

const fs::path root = fs::temp_directory_path() / "dualfringe_cli_test";

fs::path fresh(const std::string& name) {
    const fs::path dir = root / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

int run(const std::string& args) {
    const std::string cmd = std::string("\"") + DUALFRINGE_CLI + "\" " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
    const fs::path path = dir / "campaign.ini";
    io::write_text(path, text);
    return path;
}

json read_json(const fs::path& path) { return json::parse(io::read_text(path)); }

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
    std::ifstream in(path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::istringstream s(line);
        std::string cell;
        while (std::getline(s, cell, ',')) cells.push_back(cell);
        rows.push_back(cells);
    }
    return rows;
}

const std::string quiet_noise = "[noise]\nsigma_v0_um_s = 0\nsigma_detect_frac = 0\npixel_drift_nm_s = 0\n"
                                "pixel_jitter_um = 0\nmirror_phase_rad = 0\n";

} // namespace

TEST_CASE("config errors exit with 2", "[cli]") {
    const fs::path dir = fresh("config_errors");
    CHECK(run("simulate --config \"" + write_config(dir, "[campaign]\nn_runs = 0\n").string() + "\" --out \"" +
              (dir / "o").string() + "\"") == 2);
    CHECK(run("simulate --config \"" + write_config(dir, "[timing]\nt_big_ms = 3\n").string() + "\" --out \"" +
              (dir / "o").string() + "\"") == 2);
    CHECK(run("no-such-command") == 2);
    CHECK_FALSE(fs::exists(dir / "o" / "profiles.csv"));
}

TEST_CASE("IO errors exit with 3", "[cli]") {
    const fs::path dir = fresh("io_errors");
    CHECK(run("fit --in \"" + dir.string() + "\"") == 3);
    CHECK(run("analyze --in \"" + dir.string() + "\"") == 3);
    CHECK(run("calibrate --in \"" + dir.string() + "\"") == 3);
    CHECK(run("simulate --config \"" + (dir / "absent.ini").string() + "\" --out \"" + dir.string() + "\"") == 3);
}

TEST_CASE("simulate is deterministic and echoes its config", "[cli]") {
    const fs::path dir = fresh("determinism");
    const auto cfg = write_config(dir, "[campaign]\nn_runs = 40\nseed = 11\n");
    REQUIRE(run("simulate --quiet --jobs 3 --config \"" + cfg.string() + "\" --out \"" + (dir / "a").string() + "\"") == 0);
    REQUIRE(run("simulate --quiet --jobs 1 --config \"" + cfg.string() + "\" --out \"" + (dir / "b").string() + "\"") == 0);
    for (const char* name : {"profiles.csv", "ground_truth.jsonl", "manifest.json"}) {
        CHECK(io::read_text(dir / "a" / name) == io::read_text(dir / "b" / name));
    }
    const json manifest = read_json(dir / "a" / "manifest.json");
    CHECK(manifest.at("seed") == 11);
    CHECK(manifest.at("n_runs") == 40);
    CHECK(manifest.at("files").contains("profiles.csv"));
    const auto defaulted = manifest.at("defaulted_keys").get<std::vector<std::string>>();
    CHECK(std::find(defaulted.begin(), defaulted.end(), "timing.t_sig_ms") != defaulted.end());
    CHECK(std::find(defaulted.begin(), defaulted.end(), "campaign.seed") == defaulted.end());
    const std::string text = manifest.at("config_text").get<std::string>();
    CHECK(text.find("t_sig_ms = 70\n") != std::string::npos);
    CHECK(text.find("seed = 11\n") != std::string::npos);

    // 40 profiles plus the header
    CHECK(read_csv(dir / "a" / "profiles.csv").size() == 41);

    REQUIRE(run("simulate --quiet --seed 12 --config \"" + cfg.string() + "\" --out \"" + (dir / "c").string() + "\"") == 0);
    CHECK(read_json(dir / "c" / "manifest.json").at("seed") == 12);
    CHECK(io::read_text(dir / "c" / "profiles.csv") != io::read_text(dir / "a" / "profiles.csv"));
}

TEST_CASE("noiseless campaign converges everywhere", "[cli]") {
    const fs::path dir = fresh("noiseless");
    const auto cfg = write_config(dir, "[campaign]\nn_runs = 120\n" + quiet_noise);
    REQUIRE(run("pipeline --quiet --config \"" + cfg.string() + "\" --out \"" + dir.string() + "\"") == 0);
    const json summary = read_json(dir / "fit_summary.json");
    CHECK(summary.at("convergence_rate").get<double>() == 1.0);
    CHECK(read_csv(dir / "fits.jsonl").size() == 120);
    const json manifest = read_json(dir / "manifest.json");
    for (const char* name : {"fits.jsonl", "fig2e_binned.csv", "fig3_allan_dual.csv", "residual_report.json"}) {
        CHECK(manifest.at("files").contains(name));
    }
}

TEST_CASE("fit, calibrate and analyze as separate steps", "[cli]") {
    const fs::path dir = fresh("steps");
    const auto cfg = write_config(dir, "[campaign]\nn_runs = 60\n");
    REQUIRE(run("simulate --quiet --config \"" + cfg.string() + "\" --out \"" + dir.string() + "\"") == 0);
    REQUIRE(run("calibrate --quiet --in \"" + dir.string() + "\"") == 0);
    const json cal = read_json(dir / "calibration.json");
    CHECK(cal.at("ratio").get<double>() == Approx(1.0).margin(5e-3));
    REQUIRE(run("fit --quiet --in \"" + dir.string() + "\" --out \"" + (dir / "fits").string() + "\"") == 0);
    CHECK(read_json(dir / "fits" / "fit_summary.json").at("fringe_wavenumber_source") == "calibration");
    CHECK(read_json(dir / "manifest.json").at("files").contains("fits/fits.jsonl"));
    REQUIRE(run("analyze --quiet --in \"" + (dir / "fits").string() + "\"") == 3); // no manifest there
    fs::copy_file(dir / "manifest.json", dir / "fits" / "manifest.json");
    CHECK(run("analyze --quiet --in \"" + (dir / "fits").string() + "\"") == 0);
    CHECK(fs::exists(dir / "fits" / "fig2d_dual_ma.csv"));
}

TEST_CASE("convergence below threshold exits with 4", "[cli]") {
    const fs::path dir = fresh("convergence");
    const auto cfg = write_config(dir, "[campaign]\nn_runs = 20\n[noise]\nsigma_detect_frac = 0.6\n"
                                       "[fit]\nmax_iterations = 2\nmin_convergence_rate = 0.9\n");
    CHECK(run("pipeline --quiet --config \"" + cfg.string() + "\" --out \"" + dir.string() + "\"") == 4);
    CHECK(fs::exists(dir / "fit_summary.json"));
}

TEST_CASE("zero tide amplitude gives a flat tide column", "[cli]") {
    const fs::path dir = fresh("flat_tide");
    const auto cfg = write_config(dir, "[campaign]\nn_runs = 400\n[tide]\nmean_offset_ugal = 7.5\n"
                                       "M2_amplitude_ugal = 0\nO1_amplitude_ugal = 0\nK1_amplitude_ugal = 0\n");
    REQUIRE(run("pipeline --quiet --config \"" + cfg.string() + "\" --out \"" + dir.string() + "\"") == 0);
    const auto rows = read_csv(dir / "fig2e_binned.csv");
    REQUIRE(rows.size() > 1);
    REQUIRE(rows[0].back() == "tide_uGal");
    for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].back() == "7.5");
}

TEST_CASE("default campaign end to end", "[cli]") {
    const fs::path dir = fresh("default");
    const fs::path cfg = fs::path(DUALFRINGE_SOURCE_DIR) / "configs" / "default.ini";
    REQUIRE(run("pipeline --quiet --config \"" + cfg.string() + "\" --out \"" + dir.string() + "\"") == 0);
    CHECK(read_csv(dir / "profiles.csv").size() == 2001);
    CHECK(read_json(dir / "fit_summary.json").at("convergence_rate").get<double>() >= 0.99);

    const AllanCurve dual = io::read_allan_csv(dir / "fig3_allan_dual.csv");
    const AllanCurve signal = io::read_allan_csv(dir / "fig3_allan_signal.csv");
    const std::size_t n = 2000;
    const double dual_slope = fit_loglog(dual, 1, n / 10).slope;
    CHECK(dual_slope == Approx(-0.5).margin(0.05));
    // the camera drift pulls the signal-only curve off the white-noise law
    // beyond a few tens of runs; the dual curve keeps integrating down
    CHECK(fit_loglog(signal, 1, 16).slope == Approx(-0.5).margin(0.15));
    CHECK(fit_loglog(signal, 32, n / 10).slope > -0.3);
    CHECK(fit_loglog(dual, 32, n / 10).slope < -0.3);

    const json report = read_json(dir / "residual_report.json");
    CHECK(report.at("ratio").get<double>() >= 2.0);
    const json closed = read_json(dir / "closed_mz_report.json");
    CHECK(closed.at("scale_ratio").get<double>() == Approx(21.8).margin(0.1));
    CHECK(closed.at("sensitivity_ratio").get<double>() == Approx(6.0).margin(0.6));
    for (const char* name : {"fig2b_reference_ma.csv", "fig2c_signal_ma.csv", "fig2d_dual_ma.csv",
                             "fig2f_residuals.csv", "fig3_allan_reference.csv", "fig3_allan_closed.csv",
                             "gravity_dual.csv", "gravity_signal.csv"}) {
        CHECK(fs::exists(dir / name));
    }
    // 800-point moving average over 2000 runs
    CHECK(read_csv(dir / "fig2d_dual_ma.csv").size() == 2000 - 800 + 1 + 1);
    CHECK(read_csv(dir / "gravity_dual.csv")[0] == std::vector<std::string>{"timestamp_s", "g_uGal", "source", "quality"});
}
