#pragma once
/*
 * Closed-form phases of open (temporally asymmetric) Mach-Zehnder Bragg
 * interferometers and of the dual signal/reference pair built from one
 * atomic source.
 *
 * Conventions:
 *   - vertical axis positive downward, so g > 0 and v0 is the downward
 *     velocity at trap release;
 *   - times are measured from trap release;
 *   - phases are returned unwrapped (plain reals). Wrapping happens only
 *     where a phase is written into, or read out of, a density profile.
 *
 * For one interferometer with pulses at T1 = t_exp, T2 = T1 + T and
 * T3 = T2 + T + dT the atom-light detuning is linear in time,
 *
 *     xi(t) = 2 n k dg t + n (4 nbar w_r + 2 k v0 - delta0),  dg = g - alpha / (2k),
 *
 * and the phase is  int_{T2}^{T3} xi - int_{T1}^{T2} xi.
 */

#include "dualfringe/constants.hpp"
#include "dualfringe/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>

namespace dualfringe {

/// Wraps a phase into (-pi, pi].
inline double wrap_phase(double phase) noexcept {
    double r = std::remainder(phase, constants::two_pi);
    if (r <= -constants::pi) r += constants::two_pi;
    return r;
}

/// Two-photon laser parameters. The recoil frequency is always derived from
/// k and the atomic mass, so the pair can never disagree.
class LaserConfig {
public:
    explicit LaserConfig(double wavenumber_k, double atom_mass = constants::rb87_mass,
                         double hbar = constants::hbar)
        : k_(wavenumber_k), mass_(atom_mass), hbar_(hbar) {
        require(std::isfinite(k_) && k_ > 0.0, Errc::InvalidArgument, "laser wavenumber must be > 0");
        require(std::isfinite(mass_) && mass_ > 0.0, Errc::InvalidArgument, "atom mass must be > 0");
        require(std::isfinite(hbar_) && hbar_ > 0.0, Errc::InvalidArgument, "hbar must be > 0");
        recoil_ = hbar_ * k_ * k_ / (2.0 * mass_);
    }

    static LaserConfig from_wavelength(double wavelength, double atom_mass = constants::rb87_mass,
                                       double hbar = constants::hbar) {
        require(std::isfinite(wavelength) && wavelength > 0.0, Errc::InvalidArgument,
                "wavelength must be > 0");
        return LaserConfig(constants::two_pi / wavelength, atom_mass, hbar);
    }

    [[nodiscard]] double wavenumber() const noexcept { return k_; }
    [[nodiscard]] double recoil_omega() const noexcept { return recoil_; }
    [[nodiscard]] double atom_mass() const noexcept { return mass_; }
    [[nodiscard]] double hbar() const noexcept { return hbar_; }

private:
    double k_;
    double mass_;
    double hbar_;
    double recoil_{};
};

/// Bragg transition between |p + 2 n_i hbar k> and |p + 2 n_f hbar k>:
/// n = n_f - n_i, n_bar = n_f + n_i.
struct BraggOrder {
    int n{1};
    int n_bar{1};

    void validate() const {
        require(n != 0, Errc::InvalidArgument, "Bragg order n must be non-zero");
        require(((n - n_bar) % 2) == 0, Errc::InvalidArgument, "n and n_bar must have the same parity");
    }

    static BraggOrder from_states(int n_initial, int n_final) {
        BraggOrder order{n_final - n_initial, n_final + n_initial};
        order.validate();
        return order;
    }
};

/// Pulse timing of one interferometer, all in seconds from trap release.
/// t_split is recorded for bookkeeping only: the splitting pulse precedes the
/// first pi/2 pulse by t_split and is already included in t_exp.
struct SequenceTiming {
    double t_exp{};
    double t_interrogation{};
    double delta_t{};
    double t_sep{};
    double t_split{};

    [[nodiscard]] double t1() const noexcept { return t_exp; }
    [[nodiscard]] double t2() const noexcept { return t_exp + t_interrogation; }
    [[nodiscard]] double t3() const noexcept { return t_exp + 2.0 * t_interrogation + delta_t; }
    [[nodiscard]] double t_drop() const noexcept { return t3() + t_sep; }

    void validate() const {
        for (double v : {t_exp, t_interrogation, delta_t, t_sep, t_split}) {
            require(std::isfinite(v) && v >= 0.0, Errc::InvalidArgument, "timings must be finite and >= 0");
        }
        require(t_interrogation > 0.0, Errc::InvalidArgument, "interrogation time must be > 0");
        require(t_split <= t_exp, Errc::InvalidArgument, "t_split must not exceed t_exp");
        require(t1() < t2() && t2() < t3() && t3() <= t_drop(), Errc::InvalidArgument,
                "pulse times must be ordered T1 < T2 < T3 <= T3 + t_sep");
    }
};

/// Two-photon detuning delta(t) = delta_0 + alpha t.
struct DetuningRamp {
    double delta_0{};
    double alpha{};

    /// Ramp that keeps an atom with velocity v_hat0 resonant under gravity g_hat:
    /// alpha = 2 k g_hat, delta_0 = 4 nbar w_r + 2 k v_hat0.
    static DetuningRamp resonant(const LaserConfig& laser, const BraggOrder& order, double g_hat,
                                 double v_hat0 = 0.0) {
        const double k = laser.wavenumber();
        return {4.0 * order.n_bar * laser.recoil_omega() + 2.0 * k * v_hat0, 2.0 * k * g_hat};
    }

    [[nodiscard]] double g_hat(const LaserConfig& laser) const noexcept {
        return alpha / (2.0 * laser.wavenumber());
    }
    [[nodiscard]] double v_hat0(const LaserConfig& laser, const BraggOrder& order) const noexcept {
        return (delta_0 - 4.0 * order.n_bar * laser.recoil_omega()) / (2.0 * laser.wavenumber());
    }
};

struct PhysicalState {
    double g_true{};
    double v0{};
};

enum class DualOrdering { ReferenceAfter, ReferenceInterior, ExperimentOverlap };

constexpr std::string_view to_string(DualOrdering ordering) noexcept {
    switch (ordering) {
    case DualOrdering::ReferenceAfter: return "reference_after";
    case DualOrdering::ReferenceInterior: return "reference_interior";
    case DualOrdering::ExperimentOverlap: return "experiment_overlap";
    }
    return "unknown";
}

inline DualOrdering parse_ordering(std::string_view text) {
    if (text == "reference_after") return DualOrdering::ReferenceAfter;
    if (text == "reference_interior") return DualOrdering::ReferenceInterior;
    if (text == "experiment_overlap") return DualOrdering::ExperimentOverlap;
    throw Error(Errc::InvalidArgument, "unknown dual ordering '" + std::string(text) + "'");
}

inline constexpr double drop_time_tolerance = 1e-12; // s

struct DualTiming {
    SequenceTiming signal;
    SequenceTiming reference;
    DualOrdering ordering{DualOrdering::ExperimentOverlap};

    [[nodiscard]] bool reference_strictly_interior() const noexcept {
        return signal.t2() < reference.t1() && reference.t3() < signal.t3();
    }

    void validate() const {
        signal.validate();
        reference.validate();
        require(std::abs(signal.t_drop() - reference.t_drop()) <= drop_time_tolerance, Errc::InvalidArgument,
                "signal and reference must share the total drop time");
        require(signal.delta_t == reference.delta_t, Errc::InvalidArgument,
                "signal and reference must share the asymmetry delta_t");
        switch (ordering) {
        case DualOrdering::ReferenceAfter:
            require(reference.t1() >= signal.t3(), Errc::InvalidArgument,
                    "reference_after needs the reference to start after the signal's last pulse");
            break;
        case DualOrdering::ReferenceInterior:
            require(reference_strictly_interior(), Errc::InvalidArgument,
                    "reference window is not strictly inside the signal's free evolution");
            break;
        case DualOrdering::ExperimentOverlap:
            require(reference.t1() < signal.t3(), Errc::InvalidArgument,
                    "experiment_overlap needs the reference to start before the signal's last pulse");
            break;
        }
    }

    /// Reference timing that shares the signal's drop time and asymmetry.
    static SequenceTiming matched_reference(const SequenceTiming& signal, double t_interrogation_ref,
                                            double t_sep_ref) {
        SequenceTiming ref;
        ref.t_interrogation = t_interrogation_ref;
        ref.delta_t = signal.delta_t;
        ref.t_sep = t_sep_ref;
        ref.t_exp = signal.t_drop() - 2.0 * t_interrogation_ref - signal.delta_t - t_sep_ref;
        return ref;
    }
};

struct DualOrders {
    BraggOrder signal{1, 1};
    BraggOrder reference{1, -5};

    void validate() const {
        signal.validate();
        reference.validate();
        require(signal.n == reference.n, Errc::InvalidArgument,
                "signal and reference must share the momentum transfer order n");
    }
};

struct DualRamps {
    DetuningRamp signal;
    DetuningRamp reference;
};

// --- single interferometer -------------------------------------------------

/// Gravity error dg = g - alpha / (2k) seen by a ramp.
/// Both subtractions below cancel large nearly-equal terms, so they are
/// carried out in extended precision.
inline double gravity_error(const LaserConfig& laser, const DetuningRamp& ramp, const PhysicalState& state) {
    using ld = long double;
    return static_cast<double>(static_cast<ld>(state.g_true) -
                               static_cast<ld>(ramp.alpha) / (2.0L * static_cast<ld>(laser.wavenumber())));
}

/// n (4 nbar w_r + 2 k v0 - delta_0)
inline double resonance_offset(const LaserConfig& laser, const BraggOrder& order, const DetuningRamp& ramp,
                               const PhysicalState& state) {
    using ld = long double;
    const ld bracket = 4.0L * order.n_bar * static_cast<ld>(laser.recoil_omega()) +
                       2.0L * static_cast<ld>(laser.wavenumber()) * static_cast<ld>(state.v0) -
                       static_cast<ld>(ramp.delta_0);
    return static_cast<double>(order.n * bracket);
}

inline double detuning_at(double t, const LaserConfig& laser, const BraggOrder& order, const DetuningRamp& ramp,
                          const PhysicalState& state) {
    require(t >= 0.0, Errc::InvalidArgument, "detuning_at needs t >= 0");
    return 2.0 * order.n * laser.wavenumber() * gravity_error(laser, ramp, state) * t +
           resonance_offset(laser, order, ramp, state);
}

/// Gravity scale factor of one open interferometer: d(phi)/d(dg).
inline double open_mz_scale_factor(const LaserConfig& laser, const BraggOrder& order, const SequenceTiming& timing) {
    const double T = timing.t_interrogation;
    const double dT = timing.delta_t;
    return 2.0 * order.n * laser.wavenumber() * (T * T + 2.0 * T * dT + 0.5 * dT * dT + timing.t_exp * dT);
}

inline double open_mz_phase(const LaserConfig& laser, const BraggOrder& order, const SequenceTiming& timing,
                            const DetuningRamp& ramp, const PhysicalState& state) {
    timing.validate();
    const double velocity_term = resonance_offset(laser, order, ramp, state) * timing.delta_t;
    return open_mz_scale_factor(laser, order, timing) * gravity_error(laser, ramp, state) + velocity_term;
}

// --- dual interferometer ---------------------------------------------------

/// 2 n k (T_sig^2 - T_ref^2 - (T_sep,sig - T_sep,ref) dT)
inline double scale_factor(const LaserConfig& laser, const BraggOrder& order, const DualTiming& dual) {
    const double Ts = dual.signal.t_interrogation;
    const double Tr = dual.reference.t_interrogation;
    const double dT = dual.signal.delta_t;
    return 2.0 * order.n * laser.wavenumber() *
           (Ts * Ts - Tr * Tr - (dual.signal.t_sep - dual.reference.t_sep) * dT);
}

namespace detail {

inline void require_shared_estimates(const LaserConfig& laser, const DualOrders& orders, const DualRamps& ramps) {
    const double ga = ramps.signal.g_hat(laser);
    const double gb = ramps.reference.g_hat(laser);
    require(std::abs(ga - gb) <= 1e-12 * std::max({std::abs(ga), std::abs(gb), 1.0}), Errc::InvalidArgument,
            "signal and reference ramps must share g_hat");
    // Compare v_hat0 through the detuning offsets: 2k dv must be negligible
    // against the offsets themselves.
    const double va = ramps.signal.v_hat0(laser, orders.signal);
    const double vb = ramps.reference.v_hat0(laser, orders.reference);
    const double scale = std::max({std::abs(ramps.signal.delta_0), std::abs(ramps.reference.delta_0),
                                   laser.recoil_omega()});
    require(2.0 * laser.wavenumber() * std::abs(va - vb) <= 1e-9 * scale, Errc::InvalidArgument,
            "signal and reference ramps must share v_hat0");
}

} // namespace detail

/// Dual phase phi_sig - phi_ref for a reference that runs after (or, as in the
/// experiment, overlaps the end of) the signal interferometer. The initial
/// velocity drops out identically, so state.v0 is never read.
inline double dual_phase(const LaserConfig& laser, const DualOrders& orders, const DualTiming& dual,
                         const DualRamps& ramps, const PhysicalState& state) {
    dual.validate();
    orders.validate();
    require(dual.ordering != DualOrdering::ReferenceInterior, Errc::InvalidArgument,
            "dual_phase does not apply to an interior reference; use dual_phase_interior");
    detail::require_shared_estimates(laser, orders, ramps);
    return scale_factor(laser, orders.signal, dual) * gravity_error(laser, ramps.signal, state);
}

/// Extra signal phase picked up when the detuning is switched to address an
/// interior reference: 4 n w_r (nbar_sig - nbar_ref)(2 T_ref + dT).
inline double interior_frequency_change_phase(const LaserConfig& laser, const DualOrders& orders,
                                              const DualTiming& dual) {
    return 4.0 * orders.signal.n * laser.recoil_omega() * (orders.signal.n_bar - orders.reference.n_bar) *
           (2.0 * dual.reference.t_interrogation + dual.reference.delta_t);
}

inline double dual_phase_interior(const LaserConfig& laser, const DualOrders& orders, const DualTiming& dual,
                                  const DualRamps& ramps, const PhysicalState& state) {
    dual.validate();
    orders.validate();
    require(dual.ordering == DualOrdering::ReferenceInterior && dual.reference_strictly_interior(),
            Errc::InvalidArgument, "dual_phase_interior needs a strictly interior reference window");
    detail::require_shared_estimates(laser, orders, ramps);
    return scale_factor(laser, orders.signal, dual) * gravity_error(laser, ramps.signal, state) +
           interior_frequency_change_phase(laser, orders, dual);
}

/// g = alpha / (2k) + delta_phi / S. With n = 1 this is alpha / (2 n k) as well.
inline double invert_gravity(double delta_phi, const LaserConfig& laser, const BraggOrder& order,
                             const DualTiming& dual, const DetuningRamp& ramp) {
    const double S = scale_factor(laser, order, dual);
    require(S != 0.0, Errc::ZeroScaleFactor, "dual scale factor is zero");
    return ramp.g_hat(laser) + delta_phi / S;
}

} // namespace dualfringe
