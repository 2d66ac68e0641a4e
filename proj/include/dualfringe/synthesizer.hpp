#pragma once
/*
 * Forward model: 1D column-density profiles of the two interferometer
 * outputs, imaged on one frame,
 *
 *   f(z) = C + sum_{i in ref, sig} A_i exp(-(z - z_i)^2 / (2 s_i^2))
 *                                  (1 - B_i sin(k_f (z - z0) - phi_i)),
 *
 * and the per-run noise and gravity signal that feed it.
 */

#include "dualfringe/constants.hpp"
#include "dualfringe/error.hpp"
#include "dualfringe/parallel.hpp"
#include "dualfringe/phase_core.hpp"
#include "dualfringe/tide.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace dualfringe {

struct FringeModelParams {
    double amp_ref{};
    double amp_sig{};
    double center_ref{};
    double center_sig{};
    double sigma_ref{};
    double sigma_sig{};
    double contrast_ref{};
    double contrast_sig{};
    double offset{};
    double phase_ref{};
    double phase_sig{};
    double fringe_wavenumber{};
    double z0{};

    void validate() const {
        for (double v : {amp_ref, amp_sig, center_ref, center_sig, sigma_ref, sigma_sig, contrast_ref,
                         contrast_sig, offset, phase_ref, phase_sig, fringe_wavenumber, z0}) {
            require(std::isfinite(v), Errc::InvalidArgument, "fringe parameters must be finite");
        }
        require(amp_ref >= 0.0 && amp_sig >= 0.0, Errc::InvalidArgument, "amplitudes must be >= 0");
        require(sigma_ref > 0.0 && sigma_sig > 0.0, Errc::InvalidArgument, "envelope widths must be > 0");
        require(contrast_ref >= 0.0 && contrast_ref <= 1.0 && contrast_sig >= 0.0 && contrast_sig <= 1.0,
                Errc::InvalidArgument, "contrasts must lie in [0, 1]");
        require(fringe_wavenumber >= 0.0, Errc::InvalidArgument, "fringe wavenumber must be >= 0");
    }
};

inline double fringe_model(const FringeModelParams& p, double z) noexcept {
    const double x = p.fringe_wavenumber * (z - p.z0);
    const double dr = (z - p.center_ref) / p.sigma_ref;
    const double ds = (z - p.center_sig) / p.sigma_sig;
    return p.offset + p.amp_ref * std::exp(-0.5 * dr * dr) * (1.0 - p.contrast_ref * std::sin(x - p.phase_ref)) +
           p.amp_sig * std::exp(-0.5 * ds * ds) * (1.0 - p.contrast_sig * std::sin(x - p.phase_sig));
}

struct GridSpec {
    double z_start{0.0};
    double spacing{6.45e-6};
    std::size_t n_samples{1036};

    [[nodiscard]] double z_end() const noexcept {
        return z_start + spacing * static_cast<double>(n_samples - 1);
    }
    [[nodiscard]] std::vector<double> positions() const {
        std::vector<double> z(n_samples);
        for (std::size_t i = 0; i < n_samples; ++i) z[i] = z_start + spacing * static_cast<double>(i);
        return z;
    }
    void validate() const {
        require(std::isfinite(z_start), Errc::InvalidArgument, "grid start must be finite");
        require(std::isfinite(spacing) && spacing > 0.0, Errc::InvalidArgument, "grid spacing must be > 0");
        require(n_samples >= 16, Errc::InvalidArgument, "grid needs at least 16 samples");
    }
};

struct DensityProfile {
    std::vector<double> z_grid;
    std::vector<double> density;
    std::int64_t run_index{0};
    double timestamp{0.0};

    [[nodiscard]] double spacing() const noexcept {
        return z_grid.size() > 1 ? (z_grid.back() - z_grid.front()) / static_cast<double>(z_grid.size() - 1) : 0.0;
    }

    void validate() const {
        require(z_grid.size() == density.size(), Errc::InvalidArgument, "profile grid and density sizes differ");
        require(z_grid.size() >= 16, Errc::InvalidArgument, "profile needs at least 16 samples");
        const double dz = spacing();
        require(dz > 0.0, Errc::InvalidArgument, "profile grid must be increasing");
        for (std::size_t i = 1; i < z_grid.size(); ++i) {
            require(std::abs((z_grid[i] - z_grid[i - 1]) - dz) <= 1e-6 * dz, Errc::InvalidArgument,
                    "profile grid spacing must be uniform");
        }
        for (double d : density) require(std::isfinite(d), Errc::InvalidArgument, "profile density must be finite");
    }
};

inline constexpr double min_samples_per_fringe = 8.0;

/// Common spatial fringe frequency 2 n k dT / T_drop of both outputs.
inline double fringe_wavenumber(const LaserConfig& laser, const BraggOrder& order, const SequenceTiming& timing) {
    require(timing.t_drop() > 0.0, Errc::InvalidArgument, "drop time must be > 0");
    return 2.0 * std::abs(order.n) * laser.wavenumber() * timing.delta_t / timing.t_drop();
}

inline void require_resolved_fringes(double fringe_wavenumber, double spacing) {
    if (fringe_wavenumber <= 0.0) return;
    const double period = constants::two_pi / fringe_wavenumber;
    require(period / spacing >= min_samples_per_fringe, Errc::GridTooCoarse,
            "fewer than 8 samples per fringe period");
}

inline DensityProfile synthesize_profile(const FringeModelParams& params, const GridSpec& grid) {
    params.validate();
    grid.validate();
    require_resolved_fringes(params.fringe_wavenumber, grid.spacing);
    const double lo = grid.z_start;
    const double hi = grid.z_end();
    require(params.center_ref - 4.0 * params.sigma_ref >= lo && params.center_ref + 4.0 * params.sigma_ref <= hi &&
                params.center_sig - 4.0 * params.sigma_sig >= lo && params.center_sig + 4.0 * params.sigma_sig <= hi,
            Errc::InvalidArgument, "grid must cover both envelopes to +/- 4 sigma");

    DensityProfile profile;
    profile.z_grid = grid.positions();
    profile.density.resize(grid.n_samples);
    for (std::size_t i = 0; i < grid.n_samples; ++i) profile.density[i] = fringe_model(params, profile.z_grid[i]);
    return profile;
}

// --- noisy runs ----------------------------------------------------------------

struct NoiseModel {
    double sigma_v0{};           // m/s, common to both interferometers
    double sigma_detect{};       // per-sample density noise, fraction of amp_sig
    double pixel_drift_rate{};   // m per s of wall-clock time
    double pixel_jitter{};       // m, per shot
    double mirror_phase_sigma{}; // rad, signal interferometer only
    std::uint64_t rng_seed{0};

    void validate() const {
        for (double v : {sigma_v0, sigma_detect, pixel_jitter, mirror_phase_sigma}) {
            require(std::isfinite(v) && v >= 0.0, Errc::InvalidArgument, "noise standard deviations must be >= 0");
        }
        require(std::isfinite(pixel_drift_rate), Errc::InvalidArgument, "pixel drift rate must be finite");
    }

    [[nodiscard]] static NoiseModel none(std::uint64_t seed = 0) { return NoiseModel{0, 0, 0, 0, 0, seed}; }

    /// Single-shot dual noise of ~200 uGal (mirror phase 0.157 rad at S ~ 7.9e4),
    /// common velocity noise for corr(phi_sig, phi_ref) ~ 0.89, 1% detection
    /// noise and a 4 nm/s camera drift.
    [[nodiscard]] static NoiseModel calibrated(std::uint64_t seed = 1) {
        return NoiseModel{42.5e-6, 0.01, 4.0e-9, 0.0, 0.157, seed};
    }
};

struct DualScenario {
    LaserConfig laser{constants::two_pi / constants::rb87_d2_wavelength};
    DualOrders orders;
    DualTiming dual;
    DualRamps ramps;
    PhysicalState state;
    FringeModelParams fringe_defaults;
    GridSpec grid;
    NoiseModel noise;
    TideModel gravity_signal;
    double shot_period{12.0};

    [[nodiscard]] double fringe_wavenumber() const {
        return dualfringe::fringe_wavenumber(laser, orders.signal, dual.signal);
    }

    void validate() const {
        dual.validate();
        orders.validate();
        fringe_defaults.validate();
        grid.validate();
        noise.validate();
        gravity_signal.validate();
        require(std::isfinite(shot_period) && shot_period > 0.0, Errc::InvalidArgument, "shot period must be > 0");
        require(std::isfinite(state.g_true) && std::isfinite(state.v0), Errc::InvalidArgument,
                "physical state must be finite");
        detail::require_shared_estimates(laser, orders, ramps);
        require_resolved_fringes(fringe_wavenumber(), grid.spacing);
    }

    /// Experimental protocol defaults: T_sig = 70 ms, T_ref = 1 ms, dT = 0.45 ms,
    /// T_sep = 8 / 8.05 ms, 216 ms drop, signal 0<->2hk, reference -6<->-4hk.
    /// Noise is left at zero; see NoiseModel::calibrated().
    [[nodiscard]] static DualScenario protocol_defaults() {
        DualScenario s;
        const double ms = 1e-3;
        s.orders.signal = BraggOrder::from_states(0, 1);
        s.orders.reference = BraggOrder::from_states(-3, -2);
        s.dual.signal = SequenceTiming{67.55 * ms, 70.0 * ms, 0.45 * ms, 8.0 * ms, 0.5 * ms};
        s.dual.reference = DualTiming::matched_reference(s.dual.signal, 1.0 * ms, 8.05 * ms);
        s.dual.ordering = DualOrdering::ExperimentOverlap;
        const double g_hat = 9.7996;
        s.state = PhysicalState{9.7996, 0.0};
        s.ramps.signal = DetuningRamp::resonant(s.laser, s.orders.signal, g_hat, 0.0);
        s.ramps.reference = DetuningRamp::resonant(s.laser, s.orders.reference, g_hat, 0.0);

        auto& f = s.fringe_defaults;
        f.amp_sig = 1.0e8;
        f.sigma_sig = 0.40e-3;
        f.sigma_ref = 0.40e-3;
        // 40% of the atoms in the reference cloud
        f.amp_ref = f.amp_sig * (0.4 / 0.6) * (f.sigma_sig / f.sigma_ref);
        f.center_sig = 1.9e-3;
        f.center_ref = 4.5e-3; // leaves room for ~0.5 mm of drift over 30 h
        f.contrast_sig = 0.6;
        f.contrast_ref = 0.6;
        f.offset = 2.0e6;
        f.z0 = s.grid.z_start;
        f.fringe_wavenumber = s.fringe_wavenumber();

        s.noise = NoiseModel::none(1);
        s.gravity_signal = TideModel::default_three();
        return s;
    }
};

/// Everything that went into one synthetic run; written to the ground-truth sidecar.
struct RunTruth {
    std::int64_t run_index{};
    double timestamp{};
    double v0{};
    double g_true{};
    double phi_sig_true{};  // interferometer phase, unwrapped, without mirror noise
    double phi_ref_true{};
    double mirror_phase{};
    double z_shift{};       // camera-frame displacement of the atoms
    double dual_phase_true{};
};

struct RunSample {
    DensityProfile profile;
    RunTruth truth;
};

/// Independent, reproducible stream per (seed, run_index).
inline std::mt19937_64 run_stream(std::uint64_t seed, std::int64_t run_index) {
    const auto idx = static_cast<std::uint64_t>(run_index);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(idx), static_cast<std::uint32_t>(idx >> 32), 0x9e3779b9u};
    return std::mt19937_64(seq);
}

inline RunSample sample_run(const DualScenario& scenario, std::int64_t run_index, double wallclock) {
    const NoiseModel& noise = scenario.noise;
    auto rng = run_stream(noise.rng_seed, run_index);
    std::normal_distribution<double> normal(0.0, 1.0);

    // Draw order is fixed: v0, mirror, jitter, then per-sample detection noise.
    const double dv0 = noise.sigma_v0 * normal(rng);
    const double mirror = noise.mirror_phase_sigma * normal(rng);
    const double jitter = noise.pixel_jitter * normal(rng);

    RunTruth truth;
    truth.run_index = run_index;
    truth.timestamp = wallclock;
    truth.v0 = scenario.state.v0 + dv0;
    truth.g_true = scenario.state.g_true + tide_at(scenario.gravity_signal, wallclock) * constants::ugal;
    const PhysicalState state{truth.g_true, truth.v0};
    truth.phi_sig_true =
        open_mz_phase(scenario.laser, scenario.orders.signal, scenario.dual.signal, scenario.ramps.signal, state);
    truth.phi_ref_true = open_mz_phase(scenario.laser, scenario.orders.reference, scenario.dual.reference,
                                       scenario.ramps.reference, state);
    truth.mirror_phase = mirror;
    truth.z_shift = noise.pixel_drift_rate * wallclock + jitter;
    truth.dual_phase_true = truth.phi_sig_true - truth.phi_ref_true;

    FringeModelParams p = scenario.fringe_defaults;
    p.phase_sig = wrap_phase(truth.phi_sig_true + mirror);
    p.phase_ref = wrap_phase(truth.phi_ref_true);
    // The whole atomic picture moves relative to the camera.
    p.z0 += truth.z_shift;
    p.center_sig += truth.z_shift;
    p.center_ref += truth.z_shift;

    RunSample sample{synthesize_profile(p, scenario.grid), truth};
    sample.profile.run_index = run_index;
    sample.profile.timestamp = wallclock;
    if (noise.sigma_detect > 0.0) {
        const double s = noise.sigma_detect * scenario.fringe_defaults.amp_sig;
        for (double& d : sample.profile.density) d += s * normal(rng);
    }
    return sample;
}

struct Campaign {
    std::vector<DensityProfile> profiles;
    std::vector<RunTruth> truth;
};

inline Campaign simulate_campaign(const DualScenario& scenario, std::int64_t n_runs, unsigned jobs = 1) {
    require(n_runs >= 1, Errc::InvalidArgument, "campaign needs n_runs >= 1");
    scenario.validate();
    Campaign campaign;
    const auto n = static_cast<std::size_t>(n_runs);
    campaign.profiles.resize(n);
    campaign.truth.resize(n);
    parallel_for(n, jobs, [&](std::size_t i) {
        const auto idx = static_cast<std::int64_t>(i);
        RunSample s = sample_run(scenario, idx, static_cast<double>(idx) * scenario.shot_period);
        campaign.profiles[i] = std::move(s.profile);
        campaign.truth[i] = s.truth;
    });
    return campaign;
}

} // namespace dualfringe
