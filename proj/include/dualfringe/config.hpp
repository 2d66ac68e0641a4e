#pragma once
// INI campaign configuration. Every physical key carries its unit in the name.
// One schema walk (visit_schema) drives parsing, defaulting and the canonical
// re-emission, so the three cannot disagree.

#include "dualfringe/analysis.hpp"
#include "dualfringe/constants.hpp"
#include "dualfringe/error.hpp"
#include "dualfringe/fringe_fit.hpp"
#include "dualfringe/synthesizer.hpp"
#include "dualfringe/tide.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace dualfringe {

enum class PipelineMode { Dual, Signal, Both };

constexpr std::string_view to_string(PipelineMode m) noexcept {
    switch (m) {
    case PipelineMode::Dual: return "dual";
    case PipelineMode::Signal: return "signal";
    case PipelineMode::Both: return "both";
    }
    return "?";
}

/// Raw config values in the units of their keys.
struct ConfigValues {
    // [campaign]
    std::int64_t n_runs{2000};
    std::int64_t seed{1};
    double shot_period_s{12.0};
    std::string pipeline{"both"};
    bool closed_mz{true};
    // [laser]
    double wavelength_nm{780.241};
    double atom_mass_kg{constants::rb87_mass};
    double hbar_js{constants::hbar};
    // [orders], momentum states in units of 2 hbar k
    std::int64_t signal_state_lo{0}, signal_state_hi{1};
    std::int64_t reference_state_lo{-3}, reference_state_hi{-2};
    // [timing]
    double signal_t_exp_ms{67.55};
    double t_sig_ms{70.0};
    double t_ref_ms{1.0};
    double delta_t_ms{0.45};
    double t_sep_sig_ms{8.0};
    double t_sep_ref_ms{8.05};
    double t_split_ms{0.5};
    std::string ordering{"experiment_overlap"};
    // [ramp]
    double g_hat_m_s2{9.7996};
    double v_hat0_m_s{0.0};
    // [state]
    double g_base_m_s2{9.7996};
    double v0_m_s{0.0};
    // [fringe]
    double amp_sig_per_m{1.0e8};
    double amp_ref_per_m{1.0e8 * 0.4 / 0.6};
    double sigma_sig_mm{0.40};
    double sigma_ref_mm{0.40};
    double center_sig_mm{1.9};
    double center_ref_mm{4.5};
    double contrast_sig{0.6};
    double contrast_ref{0.6};
    double offset_per_m{2.0e6};
    double fringe_wavenumber_rad_m{0.0}; // 0: derived from the timing
    // [grid]
    double z_start_mm{0.0};
    double spacing_um{6.45};
    std::int64_t n_samples{1036};
    // [noise]
    double sigma_v0_um_s{42.5};
    double sigma_detect_frac{0.01};
    double pixel_drift_nm_s{4.0};
    double pixel_jitter_um{0.0};
    double mirror_phase_rad{0.157};
    // [tide]
    double tide_mean_offset_ugal{0.0};
    std::vector<TideConstituent> tide{TideModel::default_three().constituents}; // period_s in seconds
    // [fit]
    std::int64_t max_iterations{100};
    double gradient_tolerance{1e-10};
    double step_tolerance{1e-11};
    double min_convergence_rate{0.9};
    std::string reference_cloud{"larger_z"};
    bool calibrate_magnification{false};
    // [analysis]
    std::int64_t moving_average_points{800};
    double bin_width_h{1.0};
    double z_pixel_mm{0.0};
    double closed_t_ms{15.0};
    double closed_mirror_phase_rad{0.0435};
};

struct CampaignConfig {
    ConfigValues values;
    DualScenario scenario;
    std::int64_t n_runs{};
    std::uint64_t seed{};
    PipelineMode pipeline{PipelineMode::Both};
    bool closed_mz{true};
    FitConfig fit;
    double min_convergence_rate{0.9};
    bool calibrate_magnification{false};
    AnalysisOptions analysis;
    std::vector<std::string> defaulted_keys; // "section.key" filled from built-in defaults
};

namespace config_detail {

inline std::string format_number(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

inline double parse_number(const std::string& key, const std::string& text) {
    double v{};
    const char* b = text.data();
    const char* e = b + text.size();
    const auto r = std::from_chars(b, e, v);
    require(r.ec == std::errc{} && r.ptr == e && std::isfinite(v), Errc::ConfigParse,
            "key '" + key + "': '" + text + "' is not a finite number");
    return v;
}

inline std::int64_t parse_integer(const std::string& key, const std::string& text) {
    std::int64_t v{};
    const char* b = text.data();
    const char* e = b + text.size();
    const auto r = std::from_chars(b, e, v);
    require(r.ec == std::errc{} && r.ptr == e, Errc::ConfigParse,
            "key '" + key + "': '" + text + "' is not an integer");
    return v;
}

inline bool parse_flag(const std::string& key, const std::string& text) {
    if (text == "true") return true;
    if (text == "false") return false;
    throw Error(Errc::ConfigParse, "key '" + key + "': expected true or false, got '" + text + "'");
}

inline std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

/// Reads values out of a ptree, tracking which keys were consumed.
class Reader {
public:
    explicit Reader(const boost::property_tree::ptree& tree) : tree_(tree) {}

    std::optional<std::string> raw(const std::string& section, const std::string& key) {
        const std::string path = section + "." + key;
        seen_.insert(path);
        sections_.insert(section);
        const auto sec = tree_.get_child_optional(section);
        if (!sec) return std::nullopt;
        const auto v = sec->get_optional<std::string>(boost::property_tree::ptree::path_type(key, '\0'));
        if (!v) return std::nullopt;
        return *v;
    }

    template <class T, class Parse>
    void field(const std::string& section, const std::string& key, T& v, Parse parse) {
        if (const auto text = raw(section, key)) {
            v = parse(section + "." + key, *text);
        } else {
            defaulted.push_back(section + "." + key);
        }
    }

    void num(const std::string& s, const std::string& k, double& v) { field(s, k, v, parse_number); }
    void integer(const std::string& s, const std::string& k, std::int64_t& v) { field(s, k, v, parse_integer); }
    void flag(const std::string& s, const std::string& k, bool& v) { field(s, k, v, parse_flag); }
    void text(const std::string& s, const std::string& k, std::string& v) {
        field(s, k, v, [](const std::string&, const std::string& t) { return t; });
    }

    void tide(std::vector<TideConstituent>& constituents) {
        const auto names = raw("tide", "constituents");
        if (!names) {
            defaulted.push_back("tide.constituents");
        } else {
            std::vector<TideConstituent> parsed;
            for (const auto& name : split_list(*names)) {
                TideConstituent c;
                c.name = name;
                const auto defaults = find_default(constituents, name);
                if (defaults) c = *defaults;
                double period_h = c.period_s / 3600.0;
                num("tide", name + "_amplitude_ugal", c.amplitude_ugal);
                num("tide", name + "_period_h", period_h);
                num("tide", name + "_phase_rad", c.phase_rad);
                if (!defaults) {
                    for (const char* suffix : {"_amplitude_ugal", "_period_h", "_phase_rad"}) {
                        const std::string path = "tide." + name + suffix;
                        require(std::find(defaulted.begin(), defaulted.end(), path) == defaulted.end(),
                                Errc::ConfigParse, "constituent '" + name + "' has no default for " + path);
                    }
                }
                c.period_s = period_h * 3600.0;
                parsed.push_back(c);
            }
            constituents = std::move(parsed);
            return;
        }
        for (auto& c : constituents) {
            double period_h = c.period_s / 3600.0;
            num("tide", c.name + "_amplitude_ugal", c.amplitude_ugal);
            num("tide", c.name + "_period_h", period_h);
            num("tide", c.name + "_phase_rad", c.phase_rad);
            c.period_s = period_h * 3600.0;
        }
    }

    void reject_unknown() const {
        for (const auto& [section, body] : tree_) {
            require(body.data().empty() || !body.empty(), Errc::ConfigParse,
                    "key '" + section + "' is outside any section");
            require(sections_.count(section) == 1, Errc::ConfigParse, "unknown section [" + section + "]");
            for (const auto& [key, value] : body) {
                require(seen_.count(section + "." + key) == 1, Errc::ConfigParse,
                        "unknown key '" + section + "." + key + "'");
            }
        }
    }

    std::vector<std::string> defaulted;

private:
    static std::optional<TideConstituent> find_default(const std::vector<TideConstituent>& list,
                                                       const std::string& name) {
        for (const auto& c : TideModel::default_three().constituents) {
            if (c.name == name) return c;
        }
        for (const auto& c : list) {
            if (c.name == name) return c;
        }
        return std::nullopt;
    }

    const boost::property_tree::ptree& tree_;
    std::set<std::string> seen_;
    std::set<std::string> sections_;
};

/// Emits the canonical INI text: every key, fixed order, shortest round-trip numbers.
class Writer {
public:
    void num(const std::string& s, const std::string& k, double v) { put(s, k, format_number(v)); }
    void integer(const std::string& s, const std::string& k, std::int64_t v) { put(s, k, std::to_string(v)); }
    void flag(const std::string& s, const std::string& k, bool v) { put(s, k, v ? "true" : "false"); }
    void text(const std::string& s, const std::string& k, const std::string& v) { put(s, k, v); }

    void tide(const std::vector<TideConstituent>& constituents) {
        std::string names;
        for (const auto& c : constituents) names += (names.empty() ? "" : ",") + c.name;
        put("tide", "constituents", names);
        for (const auto& c : constituents) {
            num("tide", c.name + "_amplitude_ugal", c.amplitude_ugal);
            num("tide", c.name + "_period_h", c.period_s / 3600.0);
            num("tide", c.name + "_phase_rad", c.phase_rad);
        }
    }

    [[nodiscard]] std::string str() const { return out_.str(); }

private:
    void put(const std::string& section, const std::string& key, const std::string& value) {
        if (section != current_) {
            out_ << (current_.empty() ? "" : "\n") << '[' << section << "]\n";
            current_ = section;
        }
        out_ << key << " = " << value << '\n';
    }

    std::ostringstream out_;
    std::string current_;
};

template <class V, class Values>
void visit_schema(V& v, Values& c) {
    v.integer("campaign", "n_runs", c.n_runs);
    v.integer("campaign", "seed", c.seed);
    v.num("campaign", "shot_period_s", c.shot_period_s);
    v.text("campaign", "pipeline", c.pipeline);
    v.flag("campaign", "closed_mz", c.closed_mz);

    v.num("laser", "wavelength_nm", c.wavelength_nm);
    v.num("laser", "atom_mass_kg", c.atom_mass_kg);
    v.num("laser", "hbar_js", c.hbar_js);

    v.integer("orders", "signal_state_lo_2hk", c.signal_state_lo);
    v.integer("orders", "signal_state_hi_2hk", c.signal_state_hi);
    v.integer("orders", "reference_state_lo_2hk", c.reference_state_lo);
    v.integer("orders", "reference_state_hi_2hk", c.reference_state_hi);

    v.num("timing", "signal_t_exp_ms", c.signal_t_exp_ms);
    v.num("timing", "t_sig_ms", c.t_sig_ms);
    v.num("timing", "t_ref_ms", c.t_ref_ms);
    v.num("timing", "delta_t_ms", c.delta_t_ms);
    v.num("timing", "t_sep_sig_ms", c.t_sep_sig_ms);
    v.num("timing", "t_sep_ref_ms", c.t_sep_ref_ms);
    v.num("timing", "t_split_ms", c.t_split_ms);
    v.text("timing", "ordering", c.ordering);

    v.num("ramp", "g_hat_m_s2", c.g_hat_m_s2);
    v.num("ramp", "v_hat0_m_s", c.v_hat0_m_s);

    v.num("state", "g_base_m_s2", c.g_base_m_s2);
    v.num("state", "v0_m_s", c.v0_m_s);

    v.num("fringe", "amp_sig_per_m", c.amp_sig_per_m);
    v.num("fringe", "amp_ref_per_m", c.amp_ref_per_m);
    v.num("fringe", "sigma_sig_mm", c.sigma_sig_mm);
    v.num("fringe", "sigma_ref_mm", c.sigma_ref_mm);
    v.num("fringe", "center_sig_mm", c.center_sig_mm);
    v.num("fringe", "center_ref_mm", c.center_ref_mm);
    v.num("fringe", "contrast_sig", c.contrast_sig);
    v.num("fringe", "contrast_ref", c.contrast_ref);
    v.num("fringe", "offset_per_m", c.offset_per_m);
    v.num("fringe", "fringe_wavenumber_rad_m", c.fringe_wavenumber_rad_m);

    v.num("grid", "z_start_mm", c.z_start_mm);
    v.num("grid", "spacing_um", c.spacing_um);
    v.integer("grid", "n_samples", c.n_samples);

    v.num("noise", "sigma_v0_um_s", c.sigma_v0_um_s);
    v.num("noise", "sigma_detect_frac", c.sigma_detect_frac);
    v.num("noise", "pixel_drift_nm_s", c.pixel_drift_nm_s);
    v.num("noise", "pixel_jitter_um", c.pixel_jitter_um);
    v.num("noise", "mirror_phase_rad", c.mirror_phase_rad);

    v.num("tide", "mean_offset_ugal", c.tide_mean_offset_ugal);
    v.tide(c.tide);

    v.integer("fit", "max_iterations", c.max_iterations);
    v.num("fit", "gradient_tolerance", c.gradient_tolerance);
    v.num("fit", "step_tolerance", c.step_tolerance);
    v.num("fit", "min_convergence_rate", c.min_convergence_rate);
    v.text("fit", "reference_cloud", c.reference_cloud);
    v.flag("fit", "calibrate_magnification", c.calibrate_magnification);

    v.integer("analysis", "moving_average_points", c.moving_average_points);
    v.num("analysis", "bin_width_h", c.bin_width_h);
    v.num("analysis", "z_pixel_mm", c.z_pixel_mm);
    v.num("analysis", "closed_t_ms", c.closed_t_ms);
    v.num("analysis", "closed_mirror_phase_rad", c.closed_mirror_phase_rad);
}

inline int as_state(std::int64_t v, const std::string& key) {
    require(v >= -1000 && v <= 1000, Errc::ConfigParse, key + " out of range");
    return static_cast<int>(v);
}

} // namespace config_detail

inline std::string canonical_ini(const ConfigValues& values) {
    config_detail::Writer w;
    config_detail::visit_schema(w, values);
    return w.str();
}

/// Builds and validates everything derived from the raw values. Library
/// validation failures surface as ConfigParse.
inline CampaignConfig build_config(const ConfigValues& v, std::vector<std::string> defaulted = {}) {
    CampaignConfig c;
    c.values = v;
    c.defaulted_keys = std::move(defaulted);
    try {
        require(v.n_runs >= 1, Errc::ConfigParse, "campaign.n_runs must be >= 1");
        require(v.seed >= 0, Errc::ConfigParse, "campaign.seed must be >= 0");
        c.n_runs = v.n_runs;
        c.seed = static_cast<std::uint64_t>(v.seed);
        if (v.pipeline == "dual") c.pipeline = PipelineMode::Dual;
        else if (v.pipeline == "signal") c.pipeline = PipelineMode::Signal;
        else if (v.pipeline == "both") c.pipeline = PipelineMode::Both;
        else throw Error(Errc::ConfigParse, "campaign.pipeline must be dual, signal or both");
        c.closed_mz = v.closed_mz;

        DualScenario& s = c.scenario;
        s.laser = LaserConfig::from_wavelength(v.wavelength_nm * 1e-9, v.atom_mass_kg, v.hbar_js);
        using config_detail::as_state;
        s.orders.signal = BraggOrder::from_states(as_state(v.signal_state_lo, "orders.signal_state_lo_2hk"),
                                                  as_state(v.signal_state_hi, "orders.signal_state_hi_2hk"));
        s.orders.reference =
            BraggOrder::from_states(as_state(v.reference_state_lo, "orders.reference_state_lo_2hk"),
                                    as_state(v.reference_state_hi, "orders.reference_state_hi_2hk"));
        const double ms = 1e-3;
        s.dual.signal = SequenceTiming{v.signal_t_exp_ms * ms, v.t_sig_ms * ms, v.delta_t_ms * ms,
                                       v.t_sep_sig_ms * ms, v.t_split_ms * ms};
        s.dual.reference = DualTiming::matched_reference(s.dual.signal, v.t_ref_ms * ms, v.t_sep_ref_ms * ms);
        s.dual.ordering = parse_ordering(v.ordering);
        s.ramps.signal = DetuningRamp::resonant(s.laser, s.orders.signal, v.g_hat_m_s2, v.v_hat0_m_s);
        s.ramps.reference = DetuningRamp::resonant(s.laser, s.orders.reference, v.g_hat_m_s2, v.v_hat0_m_s);
        s.state = PhysicalState{v.g_base_m_s2, v.v0_m_s};

        require(v.n_samples >= 16, Errc::ConfigParse, "grid.n_samples must be >= 16");
        s.grid = GridSpec{v.z_start_mm * ms, v.spacing_um * 1e-6, static_cast<std::size_t>(v.n_samples)};

        auto& f = s.fringe_defaults;
        f.amp_sig = v.amp_sig_per_m;
        f.amp_ref = v.amp_ref_per_m;
        f.sigma_sig = v.sigma_sig_mm * ms;
        f.sigma_ref = v.sigma_ref_mm * ms;
        f.center_sig = v.center_sig_mm * ms;
        f.center_ref = v.center_ref_mm * ms;
        f.contrast_sig = v.contrast_sig;
        f.contrast_ref = v.contrast_ref;
        f.offset = v.offset_per_m;
        f.z0 = s.grid.z_start;
        f.fringe_wavenumber = v.fringe_wavenumber_rad_m != 0.0 ? v.fringe_wavenumber_rad_m : s.fringe_wavenumber();

        s.noise = NoiseModel{v.sigma_v0_um_s * 1e-6, v.sigma_detect_frac, v.pixel_drift_nm_s * 1e-9,
                             v.pixel_jitter_um * 1e-6, v.mirror_phase_rad, c.seed};
        s.gravity_signal = TideModel{v.tide, v.tide_mean_offset_ugal};
        s.shot_period = v.shot_period_s;
        s.validate();

        require(v.max_iterations >= 1 && v.max_iterations <= 100000, Errc::ConfigParse,
                "fit.max_iterations must be in [1, 100000]");
        c.fit.max_iterations = static_cast<int>(v.max_iterations);
        c.fit.gradient_tolerance = v.gradient_tolerance;
        c.fit.step_tolerance = v.step_tolerance;
        if (v.reference_cloud == "larger_z") c.fit.identity = CloudIdentity::ReferenceAtLargerZ;
        else if (v.reference_cloud == "smaller_z") c.fit.identity = CloudIdentity::ReferenceAtSmallerZ;
        else throw Error(Errc::ConfigParse, "fit.reference_cloud must be larger_z or smaller_z");
        c.fit.measurement_sigma = v.sigma_detect_frac * v.amp_sig_per_m;
        c.fit.validate();
        require(v.min_convergence_rate >= 0.0 && v.min_convergence_rate <= 1.0, Errc::ConfigParse,
                "fit.min_convergence_rate must be in [0, 1]");
        c.min_convergence_rate = v.min_convergence_rate;
        c.calibrate_magnification = v.calibrate_magnification;

        require(v.moving_average_points >= 1, Errc::ConfigParse, "analysis.moving_average_points must be >= 1");
        require(v.bin_width_h > 0.0, Errc::ConfigParse, "analysis.bin_width_h must be > 0");
        require(v.closed_t_ms > 0.0, Errc::ConfigParse, "analysis.closed_t_ms must be > 0");
        require(v.closed_mirror_phase_rad >= 0.0, Errc::ConfigParse,
                "analysis.closed_mirror_phase_rad must be >= 0");
        c.analysis.moving_average_points = static_cast<std::size_t>(v.moving_average_points);
        c.analysis.bin_width_s = v.bin_width_h * 3600.0;
        c.analysis.z_pixel = v.z_pixel_mm * ms;
        c.analysis.closed_mz = v.closed_mz;
        c.analysis.closed_t_interrogation = v.closed_t_ms * ms;
        c.analysis.closed_mirror_phase_sigma = v.closed_mirror_phase_rad;
        c.analysis.closed_seed = c.seed;
    } catch (const Error& e) {
        if (e.code() == Errc::ConfigParse) throw;
        throw Error(Errc::ConfigParse, e.what());
    }
    return c;
}

inline CampaignConfig parse_config(const std::string& text) {
    boost::property_tree::ptree tree;
    try {
        std::istringstream in(text);
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw Error(Errc::ConfigParse, std::string("malformed INI: ") + e.message() + " at line " +
                                           std::to_string(e.line()));
    }
    ConfigValues values;
    config_detail::Reader reader(tree);
    config_detail::visit_schema(reader, values);
    reader.reject_unknown();
    return build_config(values, reader.defaulted);
}

inline CampaignConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), Errc::IoFailure, "cannot read config '" + path + "'");
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str());
}

} // namespace dualfringe
