#pragma once
// Fit records -> everything the stability figures need: phase series, gravity
// series, moving averages, tide bins and residuals, Allan curves.

#include "dualfringe/constants.hpp"
#include "dualfringe/dual_pipeline.hpp"
#include "dualfringe/stability.hpp"
#include "dualfringe/synthesizer.hpp"

#include <optional>
#include <span>
#include <vector>

namespace dualfringe {

struct AnalysisOptions {
    std::size_t moving_average_points{800};
    double bin_width_s{3600.0};
    double z_pixel{0.0};          // camera pixel used by the signal-only readout
    bool closed_mz{true};
    double closed_t_interrogation{15e-3};
    double closed_mirror_phase_sigma{0.0435}; // rad per shot
    std::uint64_t closed_seed{1};
};

struct ReadoutAnalysis {
    SeriesSource source{};
    PhaseSeries phase;          // unwrapped, masked points kept
    GravitySeries gravity;
    TimeSeries moving_average;  // of the unwrapped phase, rad
    std::vector<TimeBin> bins;  // of g - g_base, uGal
    std::vector<TimeBin> residual_bins; // of g - g_base - tide, uGal
    ResidualReport residuals;   // over residual_bins
    AllanCurve allan;           // of the compacted residual series, uGal
    std::size_t flagged_steps{};
};

struct CampaignAnalysis {
    ReadoutAnalysis dual, signal, reference;
    std::optional<AllanCurve> closed_allan;
    std::optional<ClosedMZReport> closed_report;
    ResidualComparison residual_ratio; // a = dual, b = signal
    double drop_rate{};
    double convergence_rate{};
};

namespace detail {

inline ReadoutAnalysis analyze_readout(std::span<const FitRecord> records, SeriesSource source,
                                       const DualScenario& scenario, const AnalysisOptions& opt) {
    ReadoutAnalysis a;
    a.source = source;
    a.phase = unwrap_series(phase_series(records, source, opt.z_pixel));
    for (auto f : a.phase.large_step) a.flagged_steps += f;
    a.gravity = to_gravity(a.phase, scenario);

    const TimeSeries phase_ts = TimeSeries::from(a.phase);
    const std::size_t accepted = phase_ts.accepted().size();
    if (accepted >= 1) a.moving_average = moving_average(phase_ts, std::min(opt.moving_average_points, phase_ts.size()));

    const TimeSeries g_ts = TimeSeries::from(a.gravity, scenario.state.g_true / constants::ugal);
    a.bins = bin_by_time(g_ts, opt.bin_width_s);
    TimeSeries resid = residuals_vs_tide(g_ts, scenario.gravity_signal).residuals;
    a.residual_bins = bin_by_time(resid, opt.bin_width_s);
    a.residuals = residuals_vs_tide(to_series(a.residual_bins), TideModel{});

    const std::vector<double> y = resid.accepted();
    if (y.size() >= 2) a.allan = allan_deviation(y, scenario.shot_period);
    return a;
}

} // namespace detail

inline CampaignAnalysis analyze_campaign(std::span<const FitRecord> records, const DualScenario& scenario,
                                         const AnalysisOptions& opt = {}) {
    require(!records.empty(), Errc::InsufficientData, "no fit records to analyze");
    CampaignAnalysis out;
    out.convergence_rate = convergence_rate(records);
    require(out.convergence_rate > 0.0, Errc::InsufficientData, "no converged fits to analyze");
    out.dual = detail::analyze_readout(records, SeriesSource::Dual, scenario, opt);
    out.signal = detail::analyze_readout(records, SeriesSource::Signal, scenario, opt);
    out.reference = detail::analyze_readout(records, SeriesSource::Reference, scenario, opt);
    out.drop_rate = drop_rate(out.dual.phase);
    out.residual_ratio = compare_residuals(out.dual.residuals, out.signal.residuals);

    if (opt.closed_mz) {
        SequenceTiming closed = scenario.dual.signal;
        closed.t_interrogation = opt.closed_t_interrogation;
        closed.delta_t = 0.0;
        MirrorNoiseModel noise{scenario.noise.mirror_phase_sigma, opt.closed_mirror_phase_sigma, 20000, opt.closed_seed};
        out.closed_report = closed_mz_scale_comparison(closed, scenario.dual, scenario.laser, scenario.orders.signal,
                                                       scenario.noise.mirror_phase_sigma > 0.0 ? std::optional(noise)
                                                                                              : std::nullopt);
        const double sens = out.closed_report->closed_sensitivity_ugal.value_or(0.0);
        const std::size_t n = out.dual.allan.n_samples;
        if (n >= 2 && sens > 0.0) {
            const auto series = simulate_closed_mz_series(sens, n, scenario.shot_period, opt.closed_seed);
            out.closed_allan = allan_deviation(series.values, scenario.shot_period);
        }
    }
    return out;
}

} // namespace dualfringe
