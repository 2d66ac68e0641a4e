#pragma once
// On-disk formats: profile CSV, ground-truth and fit JSON-lines, small CSV
// tables. Numbers are written in shortest round-trip form, so a read-back
// reproduces every double exactly.

#include "dualfringe/dual_pipeline.hpp"
#include "dualfringe/error.hpp"
#include "dualfringe/fringe_fit.hpp"
#include "dualfringe/stability.hpp"
#include "dualfringe/synthesizer.hpp"

#include "json.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace dualfringe::io {

using json = nlohmann::ordered_json;

inline std::string num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

inline double parse_num(std::string_view text, const std::string& where) {
    if (text == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (text == "inf") return std::numeric_limits<double>::infinity();
    if (text == "-inf") return -std::numeric_limits<double>::infinity();
    double v{};
    const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
    require(r.ec == std::errc{} && r.ptr == text.data() + text.size(), Errc::IoFailure,
            where + ": '" + std::string(text) + "' is not a number");
    return v;
}

/// NaN and infinities become null.
inline json num_json(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
inline double from_json_num(const json& j) {
    return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

inline std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), Errc::IoFailure, "cannot write '" + path.string() + "'");
    return out;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), Errc::IoFailure, "cannot read '" + path.string() + "'");
    return in;
}

inline void finish(std::ofstream& out, const std::filesystem::path& path) {
    out.flush();
    require(static_cast<bool>(out), Errc::IoFailure, "write to '" + path.string() + "' failed");
}

inline std::string read_text(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    auto out = open_out(path);
    out << text;
    finish(out, path);
}

// --- profiles ---------------------------------------------------------------

/// run_index, timestamp_s, d0 .. d{n-1}; the grid itself lives in the config.
inline void write_profiles_csv(const std::filesystem::path& path, std::span<const DensityProfile> profiles) {
    auto out = open_out(path);
    const std::size_t n = profiles.empty() ? 0 : profiles.front().density.size();
    out << "run_index,timestamp_s";
    for (std::size_t i = 0; i < n; ++i) out << ",d" << i;
    out << '\n';
    std::string line;
    for (const auto& p : profiles) {
        require(p.density.size() == n, Errc::InvalidArgument, "profiles in one campaign must share the grid");
        line = std::to_string(p.run_index) + ',' + num(p.timestamp);
        for (double d : p.density) {
            line += ',';
            line += num(d);
        }
        out << line << '\n';
    }
    finish(out, path);
}

inline std::vector<DensityProfile> read_profiles_csv(const std::filesystem::path& path, const GridSpec& grid) {
    auto in = open_in(path);
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), Errc::IoFailure, "'" + path.string() + "' is empty");
    const std::vector<double> z = grid.positions();
    std::vector<DensityProfile> out;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        const std::string where = path.filename().string() + " row " + std::to_string(row);
        DensityProfile p;
        p.z_grid = z;
        p.density.reserve(z.size());
        std::size_t start = 0, col = 0;
        while (start <= line.size()) {
            std::size_t end = line.find(',', start);
            if (end == std::string::npos) end = line.size();
            const std::string_view cell(line.data() + start, end - start);
            if (col == 0) {
                p.run_index = static_cast<std::int64_t>(parse_num(cell, where));
            } else if (col == 1) {
                p.timestamp = parse_num(cell, where);
            } else {
                p.density.push_back(parse_num(cell, where));
            }
            ++col;
            start = end + 1;
        }
        require(p.density.size() == z.size(), Errc::IoFailure,
                where + ": expected " + std::to_string(z.size()) + " density samples");
        out.push_back(std::move(p));
    }
    return out;
}

// --- ground truth -------------------------------------------------------------

inline json to_json(const RunTruth& t) {
    return json{{"run_index", t.run_index},      {"timestamp_s", t.timestamp},
                {"v0", t.v0},                    {"phi_sig_true", t.phi_sig_true},
                {"phi_ref_true", t.phi_ref_true}, {"g_true", t.g_true},
                {"mirror_phase", t.mirror_phase}, {"z_shift", t.z_shift},
                {"dual_phase_true", t.dual_phase_true}};
}

inline RunTruth truth_from_json(const json& j) {
    RunTruth t;
    t.run_index = j.at("run_index").get<std::int64_t>();
    t.timestamp = j.at("timestamp_s").get<double>();
    t.v0 = j.at("v0").get<double>();
    t.phi_sig_true = j.at("phi_sig_true").get<double>();
    t.phi_ref_true = j.at("phi_ref_true").get<double>();
    t.g_true = j.at("g_true").get<double>();
    t.mirror_phase = j.value("mirror_phase", 0.0);
    t.z_shift = j.value("z_shift", 0.0);
    t.dual_phase_true = j.value("dual_phase_true", 0.0);
    return t;
}

template <class T, class Encode>
void write_jsonl(const std::filesystem::path& path, std::span<const T> items, Encode encode) {
    auto out = open_out(path);
    for (const auto& item : items) out << encode(item).dump() << '\n';
    finish(out, path);
}

template <class Decode>
auto read_jsonl(const std::filesystem::path& path, Decode decode) {
    auto in = open_in(path);
    std::vector<decltype(decode(json{}))> out;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        try {
            out.push_back(decode(json::parse(line)));
        } catch (const json::exception& e) {
            throw Error(Errc::IoFailure, path.filename().string() + " line " + std::to_string(row) + ": " + e.what());
        }
    }
    return out;
}

inline void write_truth_jsonl(const std::filesystem::path& path, std::span<const RunTruth> truth) {
    write_jsonl(path, truth, [](const RunTruth& t) { return to_json(t); });
}

inline std::vector<RunTruth> read_truth_jsonl(const std::filesystem::path& path) {
    return read_jsonl(path, truth_from_json);
}

// --- fits -----------------------------------------------------------------------

inline json to_json(const FitRecord& r) {
    json j{{"run_index", r.run_index}, {"timestamp_s", r.timestamp}, {"converged", r.ok()}};
    if (r.fit) {
        const ParamVector p = to_vector(r.fit->params);
        json params = json::object(), stddevs = json::object();
        for (std::size_t i = 0; i < fit_param_count; ++i) {
            params[std::string(fit_param_names[i])] = num_json(p[i]);
            stddevs[std::string(fit_param_names[i])] = num_json(r.fit->param_stddevs[i]);
        }
        params["z0"] = num_json(r.fit->params.z0);
        j["params"] = std::move(params);
        j["stddevs"] = std::move(stddevs);
        j["residual_rms"] = num_json(r.fit->residual_rms);
        j["chi2_reduced"] = num_json(r.fit->chi2_reduced);
        j["iterations"] = r.fit->iterations;
    }
    j["failure"] = r.failure;
    return j;
}

inline FitRecord fit_from_json(const json& j) {
    FitRecord r;
    r.run_index = j.at("run_index").get<std::int64_t>();
    r.timestamp = j.at("timestamp_s").get<double>();
    r.failure = j.value("failure", std::string{});
    if (j.contains("params")) {
        FitResult f;
        ParamVector p{}, s{};
        for (std::size_t i = 0; i < fit_param_count; ++i) {
            const std::string name(fit_param_names[i]);
            p[i] = from_json_num(j.at("params").at(name));
            s[i] = from_json_num(j.at("stddevs").at(name));
        }
        f.params = from_vector(p, from_json_num(j.at("params").at("z0")));
        f.param_stddevs = s;
        f.residual_rms = from_json_num(j.at("residual_rms"));
        f.chi2_reduced = from_json_num(j.at("chi2_reduced"));
        f.iterations = j.at("iterations").get<int>();
        f.converged = j.at("converged").get<bool>();
        r.fit = f;
    }
    return r;
}

inline void write_fits_jsonl(const std::filesystem::path& path, std::span<const FitRecord> records) {
    write_jsonl(path, records, [](const FitRecord& r) { return to_json(r); });
}

inline std::vector<FitRecord> read_fits_jsonl(const std::filesystem::path& path) {
    return read_jsonl(path, fit_from_json);
}

// --- tables ----------------------------------------------------------------------

/// Rows of preformatted cells under a header.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

    template <class... Cells>
    void row(const Cells&... cells) {
        std::vector<std::string> r{cell(cells)...};
        require(r.size() == header_.size(), Errc::InvalidArgument, "CSV row width differs from header");
        rows_.push_back(std::move(r));
    }

    void write(const std::filesystem::path& path) const {
        auto out = open_out(path);
        write_line(out, header_);
        for (const auto& r : rows_) write_line(out, r);
        finish(out, path);
    }

private:
    static std::string cell(double v) { return num(v); }
    static std::string cell(std::size_t v) { return std::to_string(v); }
    static std::string cell(int v) { return std::to_string(v); }
    static std::string cell(std::int64_t v) { return std::to_string(v); }
    static std::string cell(std::string_view v) { return std::string(v); }
    static std::string cell(const std::string& v) { return v; }
    static std::string cell(const char* v) { return v; }

    static void write_line(std::ofstream& out, const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
        out << '\n';
    }

    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

inline void write_allan_csv(const std::filesystem::path& path, const AllanCurve& curve) {
    CsvTable t({"tau_s", "adev_uGal", "n_clusters"});
    for (std::size_t i = 0; i < curve.taus.size(); ++i) t.row(curve.taus[i], curve.adev[i], curve.n_clusters[i]);
    t.write(path);
}

inline AllanCurve read_allan_csv(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::string line;
    std::getline(in, line);
    AllanCurve c;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream cells(line);
        std::string a, b, n;
        std::getline(cells, a, ',');
        std::getline(cells, b, ',');
        std::getline(cells, n, ',');
        c.taus.push_back(parse_num(a, path.string()));
        c.adev.push_back(parse_num(b, path.string()));
        c.n_clusters.push_back(static_cast<std::size_t>(parse_num(n, path.string())));
    }
    if (!c.taus.empty()) {
        for (double tau : c.taus) c.cluster_sizes.push_back(static_cast<std::size_t>(std::llround(tau / c.taus.front())));
    }
    return c;
}

/// timestamp_s, g_uGal, source, quality
inline void write_gravity_csv(const std::filesystem::path& path, const GravitySeries& g) {
    CsvTable t({"timestamp_s", "g_uGal", "source", "quality"});
    for (std::size_t i = 0; i < g.size(); ++i) {
        t.row(g.timestamps[i], g.ugal(i), to_string(g.source), static_cast<int>(g.quality[i]));
    }
    t.write(path);
}

} // namespace dualfringe::io
