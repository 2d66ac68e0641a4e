#pragma once
// Per-run fits -> phase time series -> gravity time series, for the dual
// difference and for the single-interferometer (pixel-referenced) readout.

#include "dualfringe/constants.hpp"
#include "dualfringe/error.hpp"
#include "dualfringe/fringe_fit.hpp"
#include "dualfringe/parallel.hpp"
#include "dualfringe/phase_core.hpp"
#include "dualfringe/synthesizer.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dualfringe {

enum class SeriesSource { Signal, Reference, Dual, ClosedMZ };

inline std::string_view to_string(SeriesSource s) noexcept {
    switch (s) {
    case SeriesSource::Signal: return "signal";
    case SeriesSource::Reference: return "reference";
    case SeriesSource::Dual: return "dual";
    case SeriesSource::ClosedMZ: return "closed";
    }
    return "?";
}

/// Masked points (quality 0) hold NaN.
struct PhaseSeries {
    std::vector<double> timestamps;
    std::vector<double> values;
    std::vector<std::uint8_t> quality;
    std::vector<std::uint8_t> large_step; // set by unwrap_series
    SeriesSource source{SeriesSource::Dual};
    bool wrapped{true};

    [[nodiscard]] std::size_t size() const noexcept { return timestamps.size(); }

    void push(double t, double v, bool ok) {
        timestamps.push_back(t);
        values.push_back(ok ? v : std::numeric_limits<double>::quiet_NaN());
        quality.push_back(ok ? 1 : 0);
        large_step.push_back(0);
    }

    void validate() const {
        require(values.size() == size() && quality.size() == size() && large_step.size() == size(),
                Errc::InvalidArgument, "phase series columns differ in length");
        for (std::size_t i = 1; i < size(); ++i) {
            require(timestamps[i] > timestamps[i - 1], Errc::InvalidArgument,
                    "phase series timestamps must be strictly increasing");
        }
        for (std::size_t i = 0; i < size(); ++i) {
            require(!quality[i] || std::isfinite(values[i]), Errc::InvalidArgument,
                    "accepted phase values must be finite");
        }
    }
};

struct GravitySeries {
    std::vector<double> timestamps;
    std::vector<double> g_values; // m/s^2
    std::vector<std::uint8_t> quality;
    SeriesSource source{SeriesSource::Dual};

    [[nodiscard]] std::size_t size() const noexcept { return timestamps.size(); }
    [[nodiscard]] double ugal(std::size_t i) const noexcept { return g_values[i] / constants::ugal; }
    [[nodiscard]] std::vector<double> ugal_values() const {
        std::vector<double> out(size());
        for (std::size_t i = 0; i < size(); ++i) out[i] = ugal(i);
        return out;
    }
};

/// Outcome of fitting one profile; failed fits keep the reason.
struct FitRecord {
    std::int64_t run_index{};
    double timestamp{};
    std::optional<FitResult> fit;
    std::string failure;

    [[nodiscard]] bool ok() const noexcept { return fit && fit->converged; }
};

/// Fits every profile against the shared z0 with k_fringe held fixed.
/// Library errors are recorded per profile, not thrown.
inline std::vector<FitRecord> fit_profiles(std::span<const DensityProfile> profiles, double k_fringe, double z0,
                                           const FitConfig& cfg = {}, unsigned jobs = 1) {
    std::vector<FitRecord> out(profiles.size());
    parallel_for(profiles.size(), jobs, [&](std::size_t i) {
        FitRecord& r = out[i];
        r.run_index = profiles[i].run_index;
        r.timestamp = profiles[i].timestamp;
        try {
            r.fit = fit_dual_profile(profiles[i], initial_guess(profiles[i], k_fringe, z0, cfg.identity), cfg);
        } catch (const Error& e) {
            r.failure = e.what();
        }
    });
    return out;
}

inline double convergence_rate(std::span<const FitRecord> records) {
    if (records.empty()) return 0.0;
    std::size_t ok = 0;
    for (const auto& r : records) ok += r.ok() ? 1 : 0;
    return static_cast<double>(ok) / static_cast<double>(records.size());
}

/// Signal phase referenced to a fixed camera position instead of the shared z0.
inline double pixel_reference_phase(const FitResult& fit, double z_pixel) {
    require(fit.converged, Errc::InvalidArgument, "pixel referencing needs a converged fit");
    return wrap_phase(fit.params.phase_sig + fit.params.fringe_wavenumber * (fit.params.z0 - z_pixel));
}

inline double pixel_reference_phase_ref(const FitResult& fit, double z_pixel) {
    require(fit.converged, Errc::InvalidArgument, "pixel referencing needs a converged fit");
    return wrap_phase(fit.params.phase_ref + fit.params.fringe_wavenumber * (fit.params.z0 - z_pixel));
}

inline PhaseSeries dual_difference(const PhaseSeries& sig, const PhaseSeries& ref) {
    require(sig.wrapped && ref.wrapped, Errc::InvalidArgument, "dual_difference expects wrapped phases");
    require(sig.size() == ref.size(), Errc::TimestampMismatch, "signal and reference series differ in length");
    PhaseSeries out;
    out.source = SeriesSource::Dual;
    for (std::size_t i = 0; i < sig.size(); ++i) {
        require(std::abs(sig.timestamps[i] - ref.timestamps[i]) <= 1e-9 * std::max(1.0, std::abs(sig.timestamps[i])),
                Errc::TimestampMismatch, "signal and reference timestamps are not aligned");
        const bool ok = sig.quality[i] && ref.quality[i];
        out.push(sig.timestamps[i], ok ? wrap_phase(sig.values[i] - ref.values[i]) : 0.0, ok);
    }
    return out;
}

/// Wrapped single-interferometer series read against pixel z_pixel.
inline PhaseSeries phase_series(std::span<const FitRecord> records, SeriesSource source, double z_pixel) {
    PhaseSeries out;
    out.source = source;
    if (source == SeriesSource::Dual) {
        return dual_difference(phase_series(records, SeriesSource::Signal, z_pixel),
                               phase_series(records, SeriesSource::Reference, z_pixel));
    }
    require(source == SeriesSource::Signal || source == SeriesSource::Reference, Errc::InvalidArgument,
            "phase_series supports signal, reference and dual");
    for (const auto& r : records) {
        double v = 0.0;
        if (r.ok()) {
            v = source == SeriesSource::Signal ? pixel_reference_phase(*r.fit, z_pixel)
                                               : pixel_reference_phase_ref(*r.fit, z_pixel);
        }
        out.push(r.timestamp, v, r.ok());
    }
    return out;
}

/// Nearest-multiple-of-2pi unwrapping over the accepted points. Steps that
/// remain above pi/2 after unwrapping are flagged.
inline PhaseSeries unwrap_series(const PhaseSeries& series) {
    series.validate();
    PhaseSeries out = series;
    out.wrapped = false;
    std::fill(out.large_step.begin(), out.large_step.end(), std::uint8_t{0});
    std::optional<double> prev_raw;
    double prev_out = 0.0;
    for (std::size_t i = 0; i < series.size(); ++i) {
        if (!series.quality[i]) continue;
        const double raw = series.values[i];
        if (!prev_raw) {
            out.values[i] = raw;
        } else {
            const double step = std::remainder(raw - *prev_raw, constants::two_pi);
            out.values[i] = prev_out + step;
            if (std::abs(step) > constants::pi / 2.0) out.large_step[i] = 1;
        }
        prev_raw = raw;
        prev_out = out.values[i];
    }
    return out;
}

inline double drop_rate(const PhaseSeries& series) {
    if (series.size() == 0) return 0.0;
    std::size_t dropped = 0;
    for (auto q : series.quality) dropped += q ? 0 : 1;
    return static_cast<double>(dropped) / static_cast<double>(series.size());
}

/// Accepted points only.
inline PhaseSeries compact(const PhaseSeries& series) {
    PhaseSeries out;
    out.source = series.source;
    out.wrapped = series.wrapped;
    for (std::size_t i = 0; i < series.size(); ++i) {
        if (!series.quality[i]) continue;
        out.push(series.timestamps[i], series.values[i], true);
        out.large_step.back() = series.large_step[i];
    }
    return out;
}

/// Phase per unit gravity error for each readout.
inline double source_scale_factor(SeriesSource source, const DualScenario& scenario) {
    switch (source) {
    case SeriesSource::Dual: return scale_factor(scenario.laser, scenario.orders.signal, scenario.dual);
    case SeriesSource::Signal:
        return open_mz_scale_factor(scenario.laser, scenario.orders.signal, scenario.dual.signal);
    case SeriesSource::Reference:
        return open_mz_scale_factor(scenario.laser, scenario.orders.reference, scenario.dual.reference);
    case SeriesSource::ClosedMZ: break;
    }
    throw Error(Errc::InvalidArgument, "no scenario scale factor for a closed-MZ series");
}

inline GravitySeries to_gravity(const PhaseSeries& series, const DualScenario& scenario) {
    series.validate();
    require(!series.wrapped, Errc::InvalidArgument, "to_gravity expects an unwrapped series");
    const double S = source_scale_factor(series.source, scenario);
    require(S != 0.0, Errc::ZeroScaleFactor, "scale factor for this readout is zero");
    const double g_hat = series.source == SeriesSource::Reference ? scenario.ramps.reference.g_hat(scenario.laser)
                                                                  : scenario.ramps.signal.g_hat(scenario.laser);
    GravitySeries out;
    out.source = series.source;
    out.timestamps = series.timestamps;
    out.quality = series.quality;
    out.g_values.resize(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) {
        out.g_values[i] = series.quality[i] ? g_hat + series.values[i] / S : std::numeric_limits<double>::quiet_NaN();
    }
    return out;
}

} // namespace dualfringe
