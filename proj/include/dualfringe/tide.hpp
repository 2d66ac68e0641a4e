#pragma once

#include "dualfringe/constants.hpp"
#include "dualfringe/error.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace dualfringe {

struct TideConstituent {
    std::string name;
    double amplitude_ugal{};
    double period_s{};
    double phase_rad{};
};

/// Harmonic tide surrogate. Stands in for an ephemeris tide model: the
/// simulator only needs a known injected ground truth.
struct TideModel {
    std::vector<TideConstituent> constituents;
    double mean_offset_ugal{};

    void validate() const {
        for (const auto& c : constituents) {
            require(std::isfinite(c.period_s) && c.period_s > 0.0, Errc::InvalidArgument,
                    "tide constituent '" + c.name + "' needs period > 0");
            require(std::isfinite(c.amplitude_ugal) && c.amplitude_ugal >= 0.0, Errc::InvalidArgument,
                    "tide constituent '" + c.name + "' needs amplitude >= 0");
        }
    }

    /// M2 + O1 + K1 with the given amplitudes (uGal).
    static TideModel default_three(double m2 = 50.0, double o1 = 30.0, double k1 = 30.0) {
        return TideModel{{{"M2", m2, 12.4206 * 3600.0, 0.0},
                          {"O1", o1, 25.8193 * 3600.0, 0.0},
                          {"K1", k1, 23.9345 * 3600.0, 0.0}},
                         0.0};
    }
};

inline double tide_at(const TideModel& model, double t) {
    double value = model.mean_offset_ugal;
    for (const auto& c : model.constituents) {
        // reduce first so long campaigns keep full phase resolution
        const double cycles = std::fmod(t, c.period_s) / c.period_s;
        value += c.amplitude_ugal * std::cos(constants::two_pi * cycles + c.phase_rad);
    }
    return value;
}

} // namespace dualfringe
