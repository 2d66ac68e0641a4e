#pragma once
/*
 * Extraction of the two fringe phases (and envelope parameters) from a
 * DensityProfile by damped Gauss-Newton (Levenberg-Marquardt) least squares
 * against fringe_model().
 *
 * Parameter vector layout (FitParam); the fringe wavenumber is the 12th
 * entry and is only free when FitConfig::fix_fringe_wavenumber is false.
 * z0 is never fitted.
 */

#include "dualfringe/constants.hpp"
#include "dualfringe/error.hpp"
#include "dualfringe/phase_core.hpp"
#include "dualfringe/synthesizer.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <utility>
#include <string_view>
#include <vector>

namespace dualfringe {

enum FitParam : std::size_t {
    AmpRef, CenterRef, SigmaRef, ContrastRef, PhaseRef,
    AmpSig, CenterSig, SigmaSig, ContrastSig, PhaseSig,
    Offset, FringeK,
};

inline constexpr std::size_t fit_param_count = 12;

inline constexpr std::array<std::string_view, fit_param_count> fit_param_names{
    "amp_ref", "center_ref", "sigma_ref", "contrast_ref", "phase_ref", "amp_sig",
    "center_sig", "sigma_sig", "contrast_sig", "phase_sig", "offset", "fringe_wavenumber"};

using ParamVector = std::array<double, fit_param_count>;

inline ParamVector to_vector(const FringeModelParams& p) {
    return {p.amp_ref, p.center_ref, p.sigma_ref, p.contrast_ref, p.phase_ref, p.amp_sig,
            p.center_sig, p.sigma_sig, p.contrast_sig, p.phase_sig, p.offset, p.fringe_wavenumber};
}

inline FringeModelParams from_vector(const ParamVector& v, double z0) {
    FringeModelParams p;
    p.amp_ref = v[AmpRef];
    p.center_ref = v[CenterRef];
    p.sigma_ref = v[SigmaRef];
    p.contrast_ref = v[ContrastRef];
    p.phase_ref = v[PhaseRef];
    p.amp_sig = v[AmpSig];
    p.center_sig = v[CenterSig];
    p.sigma_sig = v[SigmaSig];
    p.contrast_sig = v[ContrastSig];
    p.phase_sig = v[PhaseSig];
    p.offset = v[Offset];
    p.fringe_wavenumber = v[FringeK];
    p.z0 = z0;
    return p;
}

/// Which output is the reference cloud. The reference carries the larger
/// momentum kick in the imaging geometry, so by default it is the cloud
/// further along the fall direction (larger z).
enum class CloudIdentity { ReferenceAtLargerZ, ReferenceAtSmallerZ };

struct ParamBound {
    double lo{-std::numeric_limits<double>::infinity()};
    double hi{std::numeric_limits<double>::infinity()};
};

struct FitConfig {
    int max_iterations{100};
    double gradient_tolerance{1e-10};
    double step_tolerance{1e-11};
    bool fix_fringe_wavenumber{true};
    /// Overrides for the default bounds (amplitudes >= 0, widths in
    /// [2 grid steps, grid span], contrasts in [0, 1]).
    std::array<std::optional<ParamBound>, fit_param_count> bounds{};
    /// Per-sample noise used for chi2_reduced; 0 reports the raw residual variance.
    double measurement_sigma{0.0};
    CloudIdentity identity{CloudIdentity::ReferenceAtLargerZ};

    void validate() const {
        require(max_iterations > 0, Errc::InvalidArgument, "max_iterations must be > 0");
        require(gradient_tolerance > 0.0 && step_tolerance > 0.0, Errc::InvalidArgument,
                "fit tolerances must be > 0");
        require(measurement_sigma >= 0.0, Errc::InvalidArgument, "measurement_sigma must be >= 0");
    }
};

struct FitResult {
    FringeModelParams params;
    ParamVector param_stddevs{};
    double residual_rms{};
    double chi2_reduced{};
    int iterations{};
    bool converged{};
    std::vector<double> cost_history; // cost after every accepted step, starting at the guess
};

// --- model and Jacobian ----------------------------------------------------------

/// d f(z_j) / d p_i for every grid point (rows) and parameter (columns).
/// With free_k the last column is d/dk, otherwise it is left out.
inline Eigen::MatrixXd model_jacobian(const FringeModelParams& p, std::span<const double> z, bool free_k) {
    const Eigen::Index cols = free_k ? 12 : 11;
    Eigen::MatrixXd J(static_cast<Eigen::Index>(z.size()), cols);
    for (std::size_t j = 0; j < z.size(); ++j) {
        const auto row = static_cast<Eigen::Index>(j);
        const double x = z[j] - p.z0;
        const double arg = p.fringe_wavenumber * x;
        double dk = 0.0;
        auto cloud = [&](double A, double zc, double s, double B, double phi, std::size_t base) {
            const double u = (z[j] - zc) / s;
            const double e = std::exp(-0.5 * u * u);
            const double sn = std::sin(arg - phi);
            const double cs = std::cos(arg - phi);
            const double G = A * e;
            const double mod = 1.0 - B * sn;
            J(row, static_cast<Eigen::Index>(base + 0)) = e * mod;
            J(row, static_cast<Eigen::Index>(base + 1)) = G * mod * u / s;
            J(row, static_cast<Eigen::Index>(base + 2)) = G * mod * u * u / s;
            J(row, static_cast<Eigen::Index>(base + 3)) = -G * sn;
            J(row, static_cast<Eigen::Index>(base + 4)) = G * B * cs;
            dk += -G * B * cs * x;
        };
        cloud(p.amp_ref, p.center_ref, p.sigma_ref, p.contrast_ref, p.phase_ref, AmpRef);
        cloud(p.amp_sig, p.center_sig, p.sigma_sig, p.contrast_sig, p.phase_sig, AmpSig);
        J(row, Offset) = 1.0;
        if (free_k) J(row, FringeK) = dk;
    }
    return J;
}

namespace detail {

inline std::array<ParamBound, fit_param_count> resolve_bounds(const FitConfig& cfg, const DensityProfile& profile) {
    const double dz = profile.spacing();
    const double span = profile.z_grid.back() - profile.z_grid.front();
    const double inf = std::numeric_limits<double>::infinity();
    std::array<ParamBound, fit_param_count> b{};
    b[AmpRef] = b[AmpSig] = {0.0, inf};
    b[SigmaRef] = b[SigmaSig] = {2.0 * dz, span};
    b[ContrastRef] = b[ContrastSig] = {0.0, 1.0};
    b[FringeK] = {0.0, inf};
    for (std::size_t i = 0; i < fit_param_count; ++i) {
        if (cfg.bounds[i]) b[i] = *cfg.bounds[i];
    }
    return b;
}

inline double cost_of(const FringeModelParams& p, const DensityProfile& profile, Eigen::VectorXd& residual) {
    const auto n = profile.z_grid.size();
    residual.resize(static_cast<Eigen::Index>(n));
    for (std::size_t j = 0; j < n; ++j) {
        residual(static_cast<Eigen::Index>(j)) = fringe_model(p, profile.z_grid[j]) - profile.density[j];
    }
    return 0.5 * residual.squaredNorm();
}

inline void swap_clouds(FringeModelParams& p) {
    std::swap(p.amp_ref, p.amp_sig);
    std::swap(p.center_ref, p.center_sig);
    std::swap(p.sigma_ref, p.sigma_sig);
    std::swap(p.contrast_ref, p.contrast_sig);
    std::swap(p.phase_ref, p.phase_sig);
}

} // namespace detail

inline FitResult fit_dual_profile(const DensityProfile& profile, const FringeModelParams& guess,
                                  const FitConfig& cfg = {}) {
    cfg.validate();
    profile.validate();
    for (double v : to_vector(guess)) require(std::isfinite(v), Errc::InvalidArgument, "guess must be finite");
    require(std::isfinite(guess.z0), Errc::InvalidArgument, "guess must be finite");

    const bool free_k = !cfg.fix_fringe_wavenumber;
    const std::size_t n_free = free_k ? 12 : 11;
    const auto bounds = detail::resolve_bounds(cfg, profile);
    ParamVector p = to_vector(guess);
    for (std::size_t i = 0; i < n_free; ++i) {
        require(p[i] >= bounds[i].lo && p[i] <= bounds[i].hi, Errc::BoundsViolation,
                std::string("guess for ") + std::string(fit_param_names[i]) + " is outside its bounds");
    }
    const std::size_t n_samples = profile.z_grid.size();
    require(n_samples > n_free, Errc::InsufficientData, "profile has fewer samples than free parameters");

    // Natural scale of each parameter, used for the step test.
    const double amp_scale = std::max({std::abs(guess.amp_ref), std::abs(guess.amp_sig), 1e-300});
    ParamVector scale{amp_scale, guess.sigma_ref, guess.sigma_ref, 1.0, 1.0, amp_scale, guess.sigma_sig,
                      guess.sigma_sig, 1.0, 1.0, amp_scale, std::max(guess.fringe_wavenumber, 1.0)};

    auto project = [&](ParamVector v) {
        for (std::size_t i = 0; i < n_free; ++i) v[i] = std::clamp(v[i], bounds[i].lo, bounds[i].hi);
        return v;
    };

    Eigen::VectorXd r;
    Eigen::VectorXd r_trial;
    FitResult result;
    double cost = detail::cost_of(from_vector(p, guess.z0), profile, r);
    result.cost_history.push_back(cost);
    double lambda = 1e-3;
    bool converged = false;
    int iter = 0;

    const auto nf = static_cast<Eigen::Index>(n_free);
    while (!converged && iter < cfg.max_iterations) {
        ++iter;
        const FringeModelParams current = from_vector(p, guess.z0);
        const Eigen::MatrixXd J = model_jacobian(current, profile.z_grid, free_k);
        const Eigen::MatrixXd H = J.transpose() * J;
        const Eigen::VectorXd g = J.transpose() * r;
        const double rnorm = r.norm();
        if (rnorm == 0.0) {
            converged = true;
            break;
        }

        // Scaled gradient: cosine between the residual and each column, ignoring
        // parameters pinned at a bound by a gradient pointing outward.
        double worst = 0.0;
        for (Eigen::Index i = 0; i < nf; ++i) {
            const auto k = static_cast<std::size_t>(i);
            const bool at_lo = p[k] <= bounds[k].lo && g(i) > 0.0;
            const bool at_hi = p[k] >= bounds[k].hi && g(i) < 0.0;
            if (at_lo || at_hi) continue;
            const double d = std::sqrt(H(i, i));
            if (d > 0.0) worst = std::max(worst, std::abs(g(i)) / (d * rnorm));
        }
        if (worst < cfg.gradient_tolerance) {
            converged = true;
            break;
        }

        const double diag_floor = 1e-12 * H.diagonal().maxCoeff();
        for (;;) {
            Eigen::MatrixXd A = H;
            for (Eigen::Index i = 0; i < nf; ++i) A(i, i) += lambda * std::max(H(i, i), diag_floor);
            const Eigen::VectorXd delta = A.ldlt().solve(-g);
            ParamVector trial = p;
            for (std::size_t i = 0; i < n_free; ++i) trial[i] += delta(static_cast<Eigen::Index>(i));
            trial = project(trial);

            double step = 0.0;
            for (std::size_t i = 0; i < n_free; ++i) step = std::max(step, std::abs(trial[i] - p[i]) / scale[i]);

            const double trial_cost = detail::cost_of(from_vector(trial, guess.z0), profile, r_trial);
            if (std::isfinite(trial_cost) && trial_cost < cost) {
                p = trial;
                cost = trial_cost;
                r.swap(r_trial);
                result.cost_history.push_back(cost);
                lambda = std::max(lambda * 0.1, 1e-12);
                if (step < cfg.step_tolerance) converged = true;
                break;
            }
            // No decrease: either we are at the floating-point floor of the
            // cost or the damping needs to grow.
            if (step < cfg.step_tolerance) {
                converged = true;
                break;
            }
            lambda *= 10.0;
            if (lambda > 1e16) break;
        }
        if (lambda > 1e16) break;
    }

    if (!converged) {
        throw Error(Errc::NotConverged, "fringe fit did not converge after " + std::to_string(iter) + " iterations");
    }

    FringeModelParams fitted = from_vector(p, guess.z0);
    const Eigen::MatrixXd J = model_jacobian(fitted, profile.z_grid, free_k);
    const Eigen::MatrixXd H = J.transpose() * J;
    Eigen::VectorXd d = H.diagonal().cwiseSqrt();
    for (Eigen::Index i = 0; i < nf; ++i) {
        if (!(d(i) > 0.0)) {
            throw Error(Errc::SingularJacobian, std::string("parameter ") +
                                                    std::string(fit_param_names[static_cast<std::size_t>(i)]) +
                                                    " is unidentifiable (zero Jacobian column)");
        }
    }
    const Eigen::MatrixXd Hs = d.asDiagonal().inverse() * H * d.asDiagonal().inverse();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Hs);
    if (eig.eigenvalues().minCoeff() < 1e-12) {
        throw Error(Errc::SingularJacobian, "normal matrix is singular; a parameter is unidentifiable "
                                            "(e.g. zero contrast leaves its phase undetermined)");
    }
    const Eigen::MatrixXd Hs_inv =
        eig.eigenvectors() * eig.eigenvalues().cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
    const double dof = static_cast<double>(n_samples - n_free);
    const double residual_variance = 2.0 * cost / dof;
    for (Eigen::Index i = 0; i < nf; ++i) {
        result.param_stddevs[static_cast<std::size_t>(i)] = std::sqrt(residual_variance * Hs_inv(i, i)) / d(i);
    }

    // A phase whose contrast is not resolved from zero, or whose 1-sigma spans
    // the whole circle, carries no information.
    for (auto [b, ph] : {std::pair{ContrastRef, PhaseRef}, std::pair{ContrastSig, PhaseSig}}) {
        if (result.param_stddevs[ph] > constants::pi || std::abs(p[b]) <= result.param_stddevs[b]) {
            throw Error(Errc::SingularJacobian, std::string(fit_param_names[ph]) +
                                                    " is unidentifiable: fringe contrast is not resolved from zero");
        }
    }

    fitted.phase_ref = wrap_phase(fitted.phase_ref);
    fitted.phase_sig = wrap_phase(fitted.phase_sig);
    if ((cfg.identity == CloudIdentity::ReferenceAtLargerZ) != (fitted.center_ref > fitted.center_sig)) {
        detail::swap_clouds(fitted);
        for (std::size_t i = 0; i < 5; ++i) std::swap(result.param_stddevs[i], result.param_stddevs[i + 5]);
    }

    result.params = fitted;
    result.residual_rms = std::sqrt(2.0 * cost / static_cast<double>(n_samples));
    result.chi2_reduced = cfg.measurement_sigma > 0.0
                              ? residual_variance / (cfg.measurement_sigma * cfg.measurement_sigma)
                              : residual_variance;
    result.iterations = iter;
    result.converged = true;
    return result;
}

// --- initial guess -------------------------------------------------------------

namespace detail {

inline std::vector<double> boxcar(std::span<const double> y, std::size_t width) {
    const std::size_t n = y.size();
    const std::size_t half = width / 2;
    std::vector<double> prefix(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + y[i];
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t lo = i >= half ? i - half : 0;
        const std::size_t hi = std::min(n, i + half + 1);
        out[i] = (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
    }
    return out;
}

struct EnvelopeGuess {
    double amp{};
    double center{};
    double sigma{};
};

/// Gaussian through the log of the smoothed profile above half maximum
/// around `peak`, bounded by [lo, hi).
inline EnvelopeGuess log_parabola(std::span<const double> z, std::span<const double> s, std::size_t peak,
                                  std::size_t lo, std::size_t hi, double broadening2) {
    const double top = s[peak];
    std::size_t a = peak;
    std::size_t b = peak;
    while (a > lo && s[a - 1] > 0.5 * top) --a;
    while (b + 1 < hi && s[b + 1] > 0.5 * top) ++b;
    EnvelopeGuess g{top, z[peak], 0.0};
    if (b - a < 4) {
        g.sigma = std::max(static_cast<double>(b - a + 1) * (z[1] - z[0]) / 2.355, z[1] - z[0]);
        return g;
    }
    Eigen::MatrixXd M(static_cast<Eigen::Index>(b - a + 1), 3);
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(b - a + 1));
    const double zc = z[peak];
    for (std::size_t i = a; i <= b; ++i) {
        const auto row = static_cast<Eigen::Index>(i - a);
        const double x = z[i] - zc;
        M(row, 0) = 1.0;
        M(row, 1) = x;
        M(row, 2) = x * x;
        rhs(row) = std::log(s[i]);
    }
    const Eigen::Vector3d c = M.colPivHouseholderQr().solve(rhs);
    if (!(c(2) < 0.0)) {
        g.sigma = static_cast<double>(b - a + 1) * (z[1] - z[0]) / 2.355;
        return g;
    }
    const double var = -1.0 / (2.0 * c(2));
    g.center = zc - c(1) / (2.0 * c(2));
    g.amp = std::exp(c(0) - c(1) * c(1) / (4.0 * c(2)));
    g.sigma = std::sqrt(std::max(var - broadening2, 0.25 * var));
    return g;
}

struct Demodulation {
    double phase{};
    double contrast{};
};

/// Projects the envelope-normalized residual of cloud i onto sin / cos of
/// k (z - z0) within +/- 1.5 sigma of its centre.
inline Demodulation demodulate(std::span<const double> z, std::span<const double> y, double offset,
                               const EnvelopeGuess& self, const EnvelopeGuess& other, double k, double z0) {
    double ps = 0.0;
    double pc = 0.0;
    double wsum = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) {
        const double u = (z[j] - self.center) / self.sigma;
        if (std::abs(u) > 1.5) continue;
        const double G = self.amp * std::exp(-0.5 * u * u);
        const double uo = (z[j] - other.center) / other.sigma;
        const double Go = other.amp * std::exp(-0.5 * uo * uo);
        // (y - C - G_other) / G - 1 = -B sin(kx - phi), weighted by G^2
        const double w = G * G;
        const double v = ((y[j] - offset - Go) / G - 1.0) * w;
        const double x = k * (z[j] - z0);
        ps += v * std::sin(x);
        pc += v * std::cos(x);
        wsum += w;
    }
    // ps ~ -B cos(phi) W / 2, pc ~ B sin(phi) W / 2
    Demodulation d;
    d.phase = std::atan2(pc, -ps);
    d.contrast = wsum > 0.0 ? 2.0 * std::hypot(ps, pc) / wsum : 0.0;
    return d;
}

struct CloudPair {
    EnvelopeGuess first;  // smaller z
    EnvelopeGuess second; // larger z
    double offset{};
};

inline CloudPair find_clouds(const DensityProfile& profile, double k_fringe) {
    const auto& z = profile.z_grid;
    const auto& y = profile.density;
    const std::size_t n = z.size();
    const double dz = profile.spacing();
    std::size_t width = 15;
    if (k_fringe > 0.0) width = static_cast<std::size_t>(std::lround(constants::two_pi / k_fringe / dz));
    width = std::clamp<std::size_t>(width | 1u, 3, n / 4);
    const double wlen = static_cast<double>(width) * dz;
    const double broadening2 = wlen * wlen / 12.0;
    std::vector<double> s = boxcar(y, width);

    const std::size_t edge = std::max<std::size_t>(n / 50, 4);
    double left = 0.0;
    double right = 0.0;
    for (std::size_t i = 0; i < edge; ++i) {
        left += s[i + width / 2];
        right += s[n - 1 - i - width / 2];
    }
    const double offset = 0.5 * (left + right) / static_cast<double>(edge);
    for (double& v : s) v -= offset;

    const auto first_peak = static_cast<std::size_t>(std::distance(s.begin(), std::max_element(s.begin(), s.end())));
    const double top = s[first_peak];
    const double noise_floor = 1e-9 * std::max(std::abs(offset), 1e-300);
    if (!(top > noise_floor)) throw Error(Errc::TwoCloudsNotFound, "profile has no envelope above its edges");

    // Mask the first cloud out to where it falls to 5% of its peak or starts
    // rising again by more than 5% towards a neighbour.
    std::size_t a = first_peak;
    std::size_t b = first_peak;
    for (double floor = top; a > 0 && s[a - 1] > 0.05 * top && s[a - 1] < floor + 0.05 * top; --a) {
        floor = std::min(floor, s[a - 1]);
    }
    for (double floor = top; b + 1 < n && s[b + 1] > 0.05 * top && s[b + 1] < floor + 0.05 * top; ++b) {
        floor = std::min(floor, s[b + 1]);
    }

    std::size_t second_peak = n;
    double second_top = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (i >= a && i <= b) continue;
        if (s[i] > second_top) {
            second_top = s[i];
            second_peak = i;
        }
    }
    // A genuine second maximum rises well above the noise and is separated
    // from the first by a dip.
    bool separated = second_peak < n && second_top > 0.05 * top;
    if (separated) {
        const std::size_t lo = std::min(first_peak, second_peak);
        const std::size_t hi = std::max(first_peak, second_peak);
        const double dip = *std::min_element(s.begin() + static_cast<std::ptrdiff_t>(lo),
                                             s.begin() + static_cast<std::ptrdiff_t>(hi) + 1);
        const bool is_local_max = (second_peak == 0 || s[second_peak] >= s[second_peak - 1]) &&
                                  (second_peak + 1 == n || s[second_peak] >= s[second_peak + 1]);
        separated = is_local_max && dip < 0.8 * second_top;
    }
    if (!separated) throw Error(Errc::TwoCloudsNotFound, "smoothed profile lacks two separated maxima");

    const std::size_t lo_peak = std::min(first_peak, second_peak);
    const std::size_t hi_peak = std::max(first_peak, second_peak);
    const auto dip_it = std::min_element(s.begin() + static_cast<std::ptrdiff_t>(lo_peak),
                                         s.begin() + static_cast<std::ptrdiff_t>(hi_peak) + 1);
    const auto dip = static_cast<std::size_t>(std::distance(s.begin(), dip_it));

    // log_parabola needs strictly positive samples; restrict to those.
    CloudPair pair;
    pair.offset = offset;
    pair.first = log_parabola(z, s, lo_peak, 0, dip + 1, broadening2);
    pair.second = log_parabola(z, s, hi_peak, dip, n, broadening2);
    return pair;
}

} // namespace detail

/// Starting point for fit_dual_profile. z0 is the shared phase reference of
/// the measurement record; k_fringe is taken as known.
inline FringeModelParams initial_guess(const DensityProfile& profile, double k_fringe, double z0,
                                       CloudIdentity identity = CloudIdentity::ReferenceAtLargerZ) {
    profile.validate();
    require(std::isfinite(k_fringe) && k_fringe >= 0.0, Errc::InvalidArgument, "k_fringe must be >= 0");
    const detail::CloudPair clouds = detail::find_clouds(profile, k_fringe);
    const auto dm_first = detail::demodulate(profile.z_grid, profile.density, clouds.offset, clouds.first,
                                             clouds.second, k_fringe, z0);
    const auto dm_second = detail::demodulate(profile.z_grid, profile.density, clouds.offset, clouds.second,
                                              clouds.first, k_fringe, z0);
    const double span = profile.z_grid.back() - profile.z_grid.front();
    const double dz = profile.spacing();
    auto width = [&](double s) { return std::clamp(s, 2.0 * dz, span); };

    const bool ref_is_second = identity == CloudIdentity::ReferenceAtLargerZ;
    const auto& ref = ref_is_second ? clouds.second : clouds.first;
    const auto& sig = ref_is_second ? clouds.first : clouds.second;
    const auto& dref = ref_is_second ? dm_second : dm_first;
    const auto& dsig = ref_is_second ? dm_first : dm_second;

    FringeModelParams p;
    p.amp_ref = std::max(ref.amp, 0.0);
    p.amp_sig = std::max(sig.amp, 0.0);
    p.center_ref = ref.center;
    p.center_sig = sig.center;
    p.sigma_ref = width(ref.sigma);
    p.sigma_sig = width(sig.sigma);
    p.contrast_ref = std::clamp(dref.contrast, 0.05, 1.0);
    p.contrast_sig = std::clamp(dsig.contrast, 0.05, 1.0);
    p.phase_ref = dref.phase;
    p.phase_sig = dsig.phase;
    p.offset = clouds.offset;
    p.fringe_wavenumber = k_fringe;
    p.z0 = z0;
    return p;
}

/// Wavenumber within +/- rel_range of `nominal` that maximizes the summed
/// demodulated fringe contrast of both clouds.
inline double scan_fringe_wavenumber(const DensityProfile& profile, double nominal, double z0,
                                     double rel_range = 0.2, int steps = 401) {
    require(nominal > 0.0, Errc::InvalidArgument, "nominal k_fringe must be > 0");
    const detail::CloudPair clouds = detail::find_clouds(profile, nominal);
    double best_k = nominal;
    double best = -1.0;
    for (int i = 0; i < steps; ++i) {
        const double k = nominal * (1.0 - rel_range + 2.0 * rel_range * i / (steps - 1));
        const double power =
            detail::demodulate(profile.z_grid, profile.density, clouds.offset, clouds.first, clouds.second, k, z0)
                .contrast +
            detail::demodulate(profile.z_grid, profile.density, clouds.offset, clouds.second, clouds.first, k, z0)
                .contrast;
        if (power > best) {
            best = power;
            best_k = k;
        }
    }
    return best_k;
}

inline constexpr std::size_t min_calibration_profiles = 10;

/// Mean fringe wavenumber over per-profile fits with k free. Downstream fits
/// then hold it fixed.
inline double calibrate_magnification(std::span<const DensityProfile> profiles, double nominal_k_fringe, double z0,
                                      FitConfig cfg = {}) {
    require(profiles.size() >= min_calibration_profiles, Errc::InsufficientData,
            "magnification calibration needs at least 10 profiles");
    cfg.fix_fringe_wavenumber = false;
    double sum = 0.0;
    for (const auto& profile : profiles) {
        const double k0 = scan_fringe_wavenumber(profile, nominal_k_fringe, z0);
        const FringeModelParams guess = initial_guess(profile, k0, z0, cfg.identity);
        sum += fit_dual_profile(profile, guess, cfg).params.fringe_wavenumber;
    }
    return sum / static_cast<double>(profiles.size());
}

} // namespace dualfringe
