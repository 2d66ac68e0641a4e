#pragma once
// Moving averages, time bins, tide residuals and the overlapping Allan
// deviation for gravity and phase time series.

#include "dualfringe/constants.hpp"
#include "dualfringe/dual_pipeline.hpp"
#include "dualfringe/error.hpp"
#include "dualfringe/phase_core.hpp"
#include "dualfringe/tide.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace dualfringe {

/// Masked points (quality 0) are skipped by every operation here.
struct TimeSeries {
    std::vector<double> timestamps;
    std::vector<double> values;
    std::vector<std::uint8_t> quality;

    [[nodiscard]] std::size_t size() const noexcept { return timestamps.size(); }

    void push(double t, double v, bool ok = true) {
        timestamps.push_back(t);
        values.push_back(v);
        quality.push_back(ok ? 1 : 0);
    }

    /// Accepted values in order.
    [[nodiscard]] std::vector<double> accepted() const {
        std::vector<double> out;
        out.reserve(size());
        for (std::size_t i = 0; i < size(); ++i) {
            if (quality[i]) out.push_back(values[i]);
        }
        return out;
    }

    void validate() const {
        require(values.size() == size() && quality.size() == size(), Errc::InvalidArgument,
                "time series columns differ in length");
    }

    static TimeSeries from(const PhaseSeries& s) { return {s.timestamps, s.values, s.quality}; }
    /// g in uGal relative to `baseline_ugal`.
    static TimeSeries from(const GravitySeries& s, double baseline_ugal = 0.0) {
        TimeSeries out{s.timestamps, s.ugal_values(), s.quality};
        for (double& v : out.values) v -= baseline_ugal;
        return out;
    }
};

/// Output i averages the accepted inputs in [i, i + window) and is stamped
/// at the mean time of that window.
inline TimeSeries moving_average(const TimeSeries& series, std::size_t window) {
    series.validate();
    require(window >= 1, Errc::InvalidArgument, "moving-average window must be >= 1");
    require(window <= series.size(), Errc::WindowTooLarge, "moving-average window exceeds the series length");
    const std::size_t n = series.size();
    std::vector<double> sum(n + 1, 0.0);
    std::vector<std::size_t> count(n + 1, 0);
    std::vector<double> tsum(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const bool ok = series.quality[i] != 0;
        sum[i + 1] = sum[i] + (ok ? series.values[i] : 0.0);
        count[i + 1] = count[i] + (ok ? 1 : 0);
        tsum[i + 1] = tsum[i] + series.timestamps[i];
    }
    TimeSeries out;
    for (std::size_t i = 0; i + window <= n; ++i) {
        const std::size_t c = count[i + window] - count[i];
        const double t = (tsum[i + window] - tsum[i]) / static_cast<double>(window);
        if (c == 0) {
            out.push(t, std::numeric_limits<double>::quiet_NaN(), false);
        } else if (window == 1) {
            out.push(t, series.values[i], true);
        } else {
            out.push(t, (sum[i + window] - sum[i]) / static_cast<double>(c), true);
        }
    }
    return out;
}

struct TimeBin {
    double center{};
    double mean{};
    double standard_error{}; // NaN for singleton bins
    std::size_t count{};
};

/// Bins of `bin_width` starting at the first timestamp; empty bins omitted.
inline std::vector<TimeBin> bin_by_time(const TimeSeries& series, double bin_width) {
    series.validate();
    require(std::isfinite(bin_width) && bin_width > 0.0, Errc::InvalidArgument, "bin width must be > 0");
    std::vector<TimeBin> out;
    if (series.size() == 0) return out;
    const double t0 = series.timestamps.front();
    std::map<std::int64_t, std::vector<double>> bins;
    for (std::size_t i = 0; i < series.size(); ++i) {
        if (!series.quality[i]) continue;
        bins[static_cast<std::int64_t>(std::floor((series.timestamps[i] - t0) / bin_width))].push_back(
            series.values[i]);
    }
    for (const auto& [k, v] : bins) {
        TimeBin b;
        b.center = t0 + (static_cast<double>(k) + 0.5) * bin_width;
        b.count = v.size();
        double m = 0.0;
        for (double x : v) m += x;
        m /= static_cast<double>(v.size());
        b.mean = m;
        if (v.size() > 1) {
            double ss = 0.0;
            for (double x : v) ss += (x - m) * (x - m);
            b.standard_error = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
        } else {
            b.standard_error = std::numeric_limits<double>::quiet_NaN();
        }
        out.push_back(b);
    }
    return out;
}

inline TimeSeries to_series(std::span<const TimeBin> bins) {
    TimeSeries out;
    for (const auto& b : bins) out.push(b.center, b.mean, true);
    return out;
}

struct ResidualReport {
    TimeSeries residuals;
    double mean{};
    double standard_error{}; // sample std of the residuals about their mean
};

/// series - tide, pointwise. The series must be in uGal.
inline ResidualReport residuals_vs_tide(const TimeSeries& series, const TideModel& model) {
    series.validate();
    model.validate();
    ResidualReport r;
    r.residuals = series;
    std::size_t n = 0;
    double sum = 0.0;
    for (std::size_t i = 0; i < series.size(); ++i) {
        r.residuals.values[i] = series.values[i] - tide_at(model, series.timestamps[i]);
        if (series.quality[i]) {
            sum += r.residuals.values[i];
            ++n;
        }
    }
    require(n >= 1, Errc::InsufficientData, "no accepted points to compare with the tide model");
    r.mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < series.size(); ++i) {
        if (series.quality[i]) ss += (r.residuals.values[i] - r.mean) * (r.residuals.values[i] - r.mean);
    }
    r.standard_error = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    return r;
}

struct ResidualComparison {
    double se_a{};
    double se_b{};
    double ratio{}; // se_b / se_a
};

inline ResidualComparison compare_residuals(const ResidualReport& a, const ResidualReport& b) {
    return {a.standard_error, b.standard_error,
            a.standard_error > 0.0 ? b.standard_error / a.standard_error : std::numeric_limits<double>::infinity()};
}

// --- Allan deviation ---------------------------------------------------------

struct AllanCurve {
    std::vector<double> taus;
    std::vector<double> adev;
    std::vector<std::size_t> cluster_sizes;
    std::vector<std::size_t> n_clusters; // non-overlapping clusters at each tau
    std::size_t n_samples{};
};

/// 1, 2, 4, ... while at least two clusters fit.
inline std::vector<std::size_t> octave_cluster_sizes(std::size_t n_samples) {
    std::vector<std::size_t> m;
    for (std::size_t k = 1; 2 * k <= n_samples; k *= 2) m.push_back(k);
    return m;
}

/// Overlapping Allan deviation of a uniformly sampled series (tau0 apart).
inline AllanCurve allan_deviation(std::span<const double> y, double tau0, std::span<const std::size_t> cluster_sizes) {
    require(std::isfinite(tau0) && tau0 > 0.0, Errc::InvalidArgument, "tau0 must be > 0");
    const std::size_t n = y.size();
    AllanCurve curve;
    curve.n_samples = n;
    if (cluster_sizes.empty()) return curve;
    for (std::size_t i = 0; i < cluster_sizes.size(); ++i) {
        require(cluster_sizes[i] >= 1, Errc::InvalidArgument, "cluster sizes must be >= 1");
        require(i == 0 || cluster_sizes[i] > cluster_sizes[i - 1], Errc::InvalidArgument,
                "cluster sizes must increase");
    }
    require(2 * cluster_sizes.back() <= n, Errc::SeriesTooShort, "need at least two clusters at the largest tau");

    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(n);
    std::vector<double> cum(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) cum[i + 1] = cum[i] + (y[i] - mean);

    for (std::size_t m : cluster_sizes) {
        double acc = 0.0;
        const std::size_t terms = n - 2 * m + 1;
        for (std::size_t j = 0; j < terms; ++j) {
            const double d = cum[j + 2 * m] - 2.0 * cum[j + m] + cum[j];
            acc += d * d;
        }
        const double md = static_cast<double>(m);
        curve.taus.push_back(md * tau0);
        curve.adev.push_back(std::sqrt(acc / (2.0 * md * md * static_cast<double>(terms))));
        curve.cluster_sizes.push_back(m);
        curve.n_clusters.push_back(n / m);
    }
    return curve;
}

inline AllanCurve allan_deviation(std::span<const double> y, double tau0) {
    const auto m = octave_cluster_sizes(y.size());
    require(!m.empty(), Errc::SeriesTooShort, "need at least two samples");
    return allan_deviation(y, tau0, m);
}

struct LogLogFit {
    double slope{};
    double intercept{}; // log10 adev at log10 tau = 0
    [[nodiscard]] double at(double tau) const { return std::pow(10.0, intercept + slope * std::log10(tau)); }
};

/// Least-squares line through log10(adev) vs log10(tau) over cluster sizes
/// in [m_lo, m_hi], weighted by the number of non-overlapping clusters.
inline LogLogFit fit_loglog(const AllanCurve& curve, std::size_t m_lo, std::size_t m_hi) {
    double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < curve.taus.size(); ++i) {
        const std::size_t m = curve.cluster_sizes[i];
        if (m < m_lo || m > m_hi || !(curve.adev[i] > 0.0)) continue;
        const double w = static_cast<double>(curve.n_clusters[i]);
        const double x = std::log10(curve.taus[i]);
        const double yv = std::log10(curve.adev[i]);
        sw += w;
        sx += w * x;
        sy += w * yv;
        sxx += w * x * x;
        sxy += w * x * yv;
        ++used;
    }
    require(used >= 2, Errc::InsufficientData, "log-log fit needs at least two taus in range");
    const double det = sw * sxx - sx * sx;
    LogLogFit f;
    f.slope = (sw * sxy - sx * sy) / det;
    f.intercept = (sy - f.slope * sx) / sw;
    return f;
}

// --- closed-MZ comparison ------------------------------------------------------

/// Per-shot mirror phase noise of each configuration.
struct MirrorNoiseModel {
    double dual_phase_sigma{};   // rad
    double closed_phase_sigma{}; // rad
    std::size_t n_samples{10000};
    std::uint64_t seed{1};
};

struct ClosedMZReport {
    double scale_dual{};
    double scale_closed{};
    double scale_ratio{};
    // Monte Carlo single-shot sensitivities, when a noise model is given
    std::optional<double> dual_sensitivity_ugal;
    std::optional<double> closed_sensitivity_ugal;
    std::optional<double> sensitivity_ratio; // closed / dual
};

inline ClosedMZReport closed_mz_scale_comparison(const SequenceTiming& timing_closed, const DualTiming& dual,
                                                 const LaserConfig& laser, const BraggOrder& order,
                                                 const std::optional<MirrorNoiseModel>& noise = std::nullopt) {
    timing_closed.validate();
    dual.validate();
    require(timing_closed.delta_t == 0.0, Errc::InvalidArgument, "closed interferometer needs dT = 0");
    ClosedMZReport r;
    r.scale_dual = scale_factor(laser, order, dual);
    r.scale_closed = open_mz_scale_factor(laser, order, timing_closed);
    require(r.scale_closed != 0.0, Errc::ZeroScaleFactor, "closed scale factor is zero");
    r.scale_ratio = r.scale_dual / r.scale_closed;
    if (noise) {
        require(noise->n_samples >= 2, Errc::InvalidArgument, "Monte Carlo needs at least two samples");
        require(r.scale_dual != 0.0, Errc::ZeroScaleFactor, "dual scale factor is zero");
        std::mt19937_64 rng(noise->seed);
        std::normal_distribution<double> normal(0.0, 1.0);
        auto sensitivity = [&](double sigma, double S) {
            double sum = 0.0, ss = 0.0;
            for (std::size_t i = 0; i < noise->n_samples; ++i) {
                const double g = sigma * normal(rng) / S / constants::ugal;
                sum += g;
                ss += g * g;
            }
            const double nn = static_cast<double>(noise->n_samples);
            return std::sqrt(std::max(ss - sum * sum / nn, 0.0) / (nn - 1.0));
        };
        r.dual_sensitivity_ugal = sensitivity(noise->dual_phase_sigma, r.scale_dual);
        r.closed_sensitivity_ugal = sensitivity(noise->closed_phase_sigma, r.scale_closed);
        r.sensitivity_ratio = *r.closed_sensitivity_ugal / *r.dual_sensitivity_ugal;
    }
    return r;
}

/// White closed-MZ gravity series (uGal about the mean) for the Allan comparison.
inline TimeSeries simulate_closed_mz_series(double sensitivity_ugal, std::size_t n, double shot_period,
                                            std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, sensitivity_ugal);
    TimeSeries s;
    for (std::size_t i = 0; i < n; ++i) s.push(static_cast<double>(i) * shot_period, normal(rng));
    return s;
}

} // namespace dualfringe
