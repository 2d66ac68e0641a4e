#include <catch2/catch_amalgamated.hpp>

#include "dualfringe/stability.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

#include <cmath>
#include <complex>
#include <random>

using namespace dualfringe;
using namespace testsupport;
using Catch::Approx;

namespace {

TimeSeries white(std::size_t n, double sigma, std::uint64_t seed, double dt = 12.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, sigma);
    TimeSeries s;
    for (std::size_t i = 0; i < n; ++i) s.push(static_cast<double>(i) * dt, g(rng));
    return s;
}

} // namespace

TEST_CASE("tide_at", "[stability]") {
    SECTION("no constituents gives the offset") {
        const TideModel m{{}, 12.5};
        CHECK(tide_at(m, 0.0) == 12.5);
        CHECK(tide_at(m, 1e5) == 12.5);
    }
    SECTION("single constituent: peak-to-peak 2A and periodic") {
        const TideModel m{{{"M2", 40.0, 44714.16, 0.3}}, 0.0};
        double lo = 1e9, hi = -1e9;
        for (int i = 0; i <= 100000; ++i) {
            const double v = tide_at(m, 44714.16 * i / 100000.0);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        CHECK(hi - lo == Approx(80.0).epsilon(1e-8));
        for (double t : {0.0, 1000.0, 33333.3, 1e5}) {
            CHECK(tide_at(m, t + 44714.16) == Approx(tide_at(m, t)).margin(1e-9));
        }
    }
    SECTION("default set peaks at the semidiurnal frequency") {
        const auto m = TideModel::default_three();
        const std::size_t n = 8192;
        const double dt = 600.0;
        std::vector<double> y(n);
        for (std::size_t i = 0; i < n; ++i) y[i] = tide_at(m, static_cast<double>(i) * dt);
        // direct DFT power, skipping DC
        std::size_t best = 1;
        double best_p = 0.0;
        for (std::size_t k = 1; k < n / 2; ++k) {
            std::complex<double> acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                acc += y[i] * std::polar(1.0, -constants::two_pi * static_cast<double>(k * i) / static_cast<double>(n));
            }
            if (std::norm(acc) > best_p) {
                best_p = std::norm(acc);
                best = k;
            }
        }
        const double f = static_cast<double>(best) / (static_cast<double>(n) * dt);
        CHECK(1.0 / f / 3600.0 == Approx(12.42).epsilon(0.01));
    }
    SECTION("validation") {
        CHECK_THROWS_AS(TideModel({{"bad", 1.0, 0.0, 0.0}}, 0.0).validate(), Error);
        CHECK_THROWS_AS(TideModel({{"bad", -1.0, 10.0, 0.0}}, 0.0).validate(), Error);
    }
}

TEST_CASE("moving_average", "[stability]") {
    const auto s = white(10000, 1.0, 3);
    SECTION("window 1 is the identity") {
        const auto m = moving_average(s, 1);
        CHECK(m.values == s.values);
        CHECK(m.timestamps == s.timestamps);
    }
    SECTION("constant in, constant out") {
        TimeSeries c;
        for (int i = 0; i < 100; ++i) c.push(i, 4.25);
        for (double v : moving_average(c, 10).values) CHECK(v == Approx(4.25).epsilon(1e-15));
    }
    SECTION("800-point window reduces white noise by sqrt(800)") {
        const auto m = moving_average(s, 800);
        CHECK(m.size() == s.size() - 800 + 1);
        CHECK(sample_std(m.values) == Approx(1.0 / std::sqrt(800.0)).epsilon(0.1));
    }
    SECTION("commutes with a constant offset") {
        TimeSeries shifted = s;
        for (double& v : shifted.values) v += 7.0;
        const auto a = moving_average(s, 25);
        const auto b = moving_average(shifted, 25);
        for (std::size_t i = 0; i < a.size(); i += 97) CHECK(b.values[i] - a.values[i] == Approx(7.0).epsilon(1e-9));
    }
    SECTION("masked points are skipped") {
        TimeSeries m;
        m.push(0, 1.0);
        m.push(1, 1e9, false);
        m.push(2, 3.0);
        CHECK(moving_average(m, 3).values[0] == 2.0);
    }
    SECTION("window larger than the series") {
        try {
            (void)moving_average(s, s.size() + 1);
            FAIL("expected WindowTooLarge");
        } catch (const Error& e) {
            CHECK(e.code() == Errc::WindowTooLarge);
        }
    }
}

TEST_CASE("bin_by_time", "[stability]") {
    SECTION("one bin") {
        const auto s = white(50, 2.0, 9);
        const auto bins = bin_by_time(s, 1e6);
        REQUIRE(bins.size() == 1);
        CHECK(bins[0].mean == Approx(sample_mean(s.values)).epsilon(1e-12));
        CHECK(bins[0].standard_error == Approx(sample_std(s.values) / std::sqrt(50.0)).epsilon(1e-12));
        CHECK(bins[0].count == 50);
    }
    SECTION("bins narrower than the shot period") {
        const auto s = white(20, 1.0, 2);
        const auto bins = bin_by_time(s, 5.0);
        REQUIRE(bins.size() == 20);
        for (std::size_t i = 0; i < 20; ++i) {
            CHECK(bins[i].mean == s.values[i]);
            CHECK(std::isnan(bins[i].standard_error));
        }
    }
    SECTION("30 h at 12 s in 1 h bins") {
        const auto s = white(9000, 1.0, 1);
        const auto bins = bin_by_time(s, 3600.0);
        CHECK(bins.size() == 30);
        for (const auto& b : bins) CHECK(b.count == 300);
    }
    SECTION("empty bins are omitted") {
        TimeSeries s;
        s.push(0.0, 1.0);
        s.push(10000.0, 2.0);
        CHECK(bin_by_time(s, 3600.0).size() == 2);
    }
}

TEST_CASE("residuals_vs_tide", "[stability]") {
    const auto model = TideModel::default_three();
    TimeSeries exact;
    for (int i = 0; i < 500; ++i) exact.push(i * 60.0, tide_at(model, i * 60.0));
    SECTION("identical to the model") {
        const auto r = residuals_vs_tide(exact, model);
        for (double v : r.residuals.values) CHECK(v == 0.0);
        CHECK(r.standard_error == 0.0);
    }
    SECTION("affine in the series") {
        auto noisy = exact;
        const auto n = white(500, 3.0, 4);
        for (std::size_t i = 0; i < 500; ++i) noisy.values[i] += n.values[i] + 10.0;
        const auto r = residuals_vs_tide(noisy, model);
        CHECK(r.mean == Approx(10.0 + sample_mean(n.values)).epsilon(1e-12));
        CHECK(r.standard_error == Approx(sample_std(n.values)).epsilon(1e-12));
        auto doubled = exact;
        for (std::size_t i = 0; i < 500; ++i) doubled.values[i] += 2.0 * n.values[i];
        CHECK(residuals_vs_tide(doubled, model).standard_error == Approx(2.0 * sample_std(n.values)).epsilon(1e-12));
    }
    SECTION("pairwise ratio") {
        auto a = exact, b = exact;
        const auto na = white(500, 1.0, 5);
        const auto nb = white(500, 1.0, 6);
        for (std::size_t i = 0; i < 500; ++i) {
            a.values[i] += na.values[i];
            b.values[i] += 2.5 * nb.values[i];
        }
        const auto cmp = compare_residuals(residuals_vs_tide(a, model), residuals_vs_tide(b, model));
        CHECK(cmp.ratio == Approx(2.5).epsilon(0.15));
    }
}

TEST_CASE("allan_deviation", "[stability]") {
    SECTION("constant series") {
        const std::vector<double> c(256, 3.7);
        const auto curve = allan_deviation(c, 12.0);
        for (double a : curve.adev) CHECK(a == Approx(0.0).margin(1e-12));
    }
    SECTION("matches the brute-force definition") {
        const auto s = white(300, 1.0, 8);
        std::vector<std::size_t> ms{1, 2, 3, 7, 20, 64, 150};
        const auto curve = allan_deviation(s.values, 12.0, ms);
        for (std::size_t i = 0; i < ms.size(); ++i) {
            CHECK(curve.adev[i] == Approx(oracle::brute_allan_deviation(s.values, ms[i])).epsilon(1e-10));
            CHECK(curve.taus[i] == 12.0 * static_cast<double>(ms[i]));
        }
    }
    SECTION("white noise follows sigma / sqrt(m)") {
        const auto s = white(10000, 200.0, 10);
        const auto curve = allan_deviation(s.values, 12.0);
        for (std::size_t i = 0; i < curve.taus.size(); ++i) {
            const auto m = curve.cluster_sizes[i];
            if (m > 1000) break;
            CHECK(curve.adev[i] * std::sqrt(static_cast<double>(m)) / 200.0 == Approx(1.0).margin(0.1));
        }
        const auto fit = fit_loglog(curve, 1, 1000);
        CHECK(fit.slope == Approx(-0.5).margin(0.05));
    }
    SECTION("linear drift gives slope +1") {
        std::vector<double> y(4096);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = 0.01 * static_cast<double>(i);
        const auto curve = allan_deviation(y, 1.0);
        for (std::size_t i = 0; i < curve.taus.size(); ++i) {
            // drift d per sample: adev(m) = d m / sqrt(2)
            CHECK(curve.adev[i] == Approx(0.01 * static_cast<double>(curve.cluster_sizes[i]) / std::sqrt(2.0))
                                       .epsilon(1e-8));
        }
        CHECK(fit_loglog(curve, 1, 2048).slope == Approx(1.0).margin(1e-6));
        std::vector<double> small(y.begin(), y.begin() + 40);
        CHECK(allan_deviation(small, 1.0, std::vector<std::size_t>{5})
                  .adev[0] == Approx(oracle::brute_allan_deviation(small, 5)).epsilon(1e-10));
    }
    SECTION("needs two clusters at the largest tau") {
        const std::vector<double> y(10, 1.0);
        try {
            (void)allan_deviation(y, 1.0, std::vector<std::size_t>{6});
            FAIL("expected SeriesTooShort");
        } catch (const Error& e) {
            CHECK(e.code() == Errc::SeriesTooShort);
        }
    }
}

TEST_CASE("closed_mz_scale_comparison", "[stability]") {
    const auto scen = DualScenario::protocol_defaults();
    SequenceTiming closed{scen.dual.signal.t_exp, 15 * ms, 0.0, scen.dual.signal.t_sep, 0.0};
    SECTION("scale-factor ratio for the nominal timings") {
        const auto r = closed_mz_scale_comparison(closed, scen.dual, scen.laser, scen.orders.signal);
        CHECK(r.scale_ratio == Approx(21.8).margin(0.1));
        CHECK(r.scale_ratio == Approx((0.07 * 0.07 - 1e-6 + 0.05e-3 * 0.45e-3) / (0.015 * 0.015)).epsilon(1e-12));
        CHECK_FALSE(r.sensitivity_ratio);
    }
    SECTION("identical interrogation gives ratio 1") {
        DualTiming d = scen.dual;
        d.reference = DualTiming::matched_reference(d.signal, 1e-9, d.signal.t_sep);
        SequenceTiming c = closed;
        c.t_interrogation = d.signal.t_interrogation;
        const double S_dual = scale_factor(scen.laser, scen.orders.signal, d);
        const double S_closed = open_mz_scale_factor(scen.laser, scen.orders.signal, c);
        const auto r = closed_mz_scale_comparison(c, d, scen.laser, scen.orders.signal);
        CHECK(r.scale_ratio == Approx(S_dual / S_closed).epsilon(1e-14));
        CHECK(r.scale_ratio == Approx(1.0).epsilon(1e-6));
    }
    SECTION("mirror noise tuned to 200 and 1200 uGal gives a sixfold ratio") {
        const double S_dual = scale_factor(scen.laser, scen.orders.signal, scen.dual);
        const double S_closed = open_mz_scale_factor(scen.laser, scen.orders.signal, closed);
        const MirrorNoiseModel noise{200 * constants::ugal * S_dual, 1200 * constants::ugal * S_closed, 20000, 3};
        const auto r = closed_mz_scale_comparison(closed, scen.dual, scen.laser, scen.orders.signal, noise);
        CHECK(*r.dual_sensitivity_ugal == Approx(200.0).epsilon(0.03));
        CHECK(*r.closed_sensitivity_ugal == Approx(1200.0).epsilon(0.03));
        CHECK(*r.sensitivity_ratio == Approx(6.0).epsilon(0.05));
    }
    SECTION("closed timing must have dT = 0") {
        SequenceTiming open = closed;
        open.delta_t = 0.45 * ms;
        CHECK_THROWS_AS(closed_mz_scale_comparison(open, scen.dual, scen.laser, scen.orders.signal), Error);
    }
}
