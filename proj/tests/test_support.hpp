#pragma once

#include "dualfringe/phase_core.hpp"
#include "dualfringe/synthesizer.hpp"
#include "oracles.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace testsupport {

using namespace dualfringe;

inline constexpr double k_nominal = 8.0553e6; // rad/m, wavenumber used by the worked examples
inline constexpr double ms = 1e-3;

inline oracle::Physics physics_of(const LaserConfig& laser) {
    return {laser.wavenumber(), laser.hbar(), laser.atom_mass()};
}

inline oracle::Interferometer oracle_ifo(const BraggOrder& order, const SequenceTiming& t, const DetuningRamp& r) {
    return {order.n, order.n_bar, t.t_exp, t.t_interrogation, t.delta_t, r.delta_0, r.alpha};
}

/// Random dual timing with a shared drop time; the reference either follows
/// the signal or overlaps its end, and the ordering tag is set to match.
inline DualTiming random_dual_timing(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> T_sig(20 * ms, 200 * ms);
    std::uniform_real_distribution<double> T_ref(1 * ms, 10 * ms);
    std::uniform_real_distribution<double> dT(0.0, 2 * ms);
    std::uniform_real_distribution<double> t_exp(1 * ms, 200 * ms);
    std::uniform_real_distribution<double> t_sep(1 * ms, 30 * ms);
    for (;;) {
        DualTiming d;
        d.signal = SequenceTiming{t_exp(rng), T_sig(rng), dT(rng), t_sep(rng), 0.0};
        d.reference = DualTiming::matched_reference(d.signal, T_ref(rng), t_sep(rng));
        if (d.reference.t_exp < 0.0) continue;
        d.ordering = d.reference.t1() >= d.signal.t3() ? DualOrdering::ReferenceAfter : DualOrdering::ExperimentOverlap;
        return d;
    }
}

/// Nominal timings with the worked-example wavenumber.
inline DualTiming default_dual_timing() {
    DualTiming d;
    d.signal = SequenceTiming{67.55 * ms, 70 * ms, 0.45 * ms, 8 * ms, 0.5 * ms};
    d.reference = DualTiming::matched_reference(d.signal, 1 * ms, 8.05 * ms);
    d.ordering = DualOrdering::ExperimentOverlap;
    return d;
}

/// Physically plausible dual-cloud parameters on the default grid: both
/// envelopes inside the grid to +/- 4 sigma and separated by > 4 sigma.
inline FringeModelParams random_fringe_params(std::mt19937_64& rng, double k_fringe, double z0 = 0.0) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto in = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
    FringeModelParams p;
    p.amp_sig = in(0.5e8, 1.5e8);
    p.amp_ref = p.amp_sig * in(0.3, 1.0);
    p.sigma_sig = in(0.30e-3, 0.45e-3);
    p.sigma_ref = in(0.30e-3, 0.45e-3);
    p.center_sig = in(1.8e-3, 2.4e-3);
    p.center_ref = in(4.2e-3, 4.8e-3);
    p.contrast_sig = in(0.3, 0.9);
    p.contrast_ref = in(0.3, 0.9);
    p.phase_sig = in(-constants::pi, constants::pi);
    p.phase_ref = in(-constants::pi, constants::pi);
    p.offset = in(0.0, 5e6);
    p.fringe_wavenumber = k_fringe;
    p.z0 = z0;
    return p;
}

inline double sample_mean(const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

inline double sample_std(const std::vector<double>& x) {
    const double m = sample_mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(x.size() - 1));
}

inline double sample_corr(const std::vector<double>& x, const std::vector<double>& y) {
    const double mx = sample_mean(x);
    const double my = sample_mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

} // namespace testsupport
