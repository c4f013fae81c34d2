// SPDX-License-Identifier: Apache-2.0
//
// dmasense: DMA transmit beamforming for bistatic multi-target sensing
// Copyright (C) 2026 The dmasense authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#ifndef DMASENSE_HARNESS_HPP
#define DMASENSE_HARNESS_HPP

#include "beamform.hpp"
#include "core.hpp"
#include "em_model.hpp"
#include "fisher.hpp"
#include "scene.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace dmasense
{

inline constexpr const char *kVersion = "0.1.0";

// ------------------------------------------------------------------------
// Scenario

struct TargetSpec
{
    Vec3 position_m = Vec3::Zero();
    double uncertainty_m = 5.0;
    cplx reflection{1.0, 0.0};
};

/// Everything an experiment needs. Fields keep the file units (m, dBm, wavelengths); SI conversion happens on use.
struct Scenario
{
    std::string preset = "default";

    // OFDM grid
    double carrier_hz = 24e9;
    int subcarriers = 512;
    double subcarrier_spacing_hz = 120e3;
    int pilots = 1;

    // DMA
    int n_rf = 4;
    int n_e = 32;
    double d_rf_wavelengths = 0.5;
    double d_e_wavelengths = 0.2;
    double waveguide_width_wavelengths = 0.73;
    double waveguide_height_wavelengths = 0.17;
    double waveguide_length_m = 0.110;
    double rel_permittivity = 1.0;

    // scene
    Vec3 rx_position_m{35.0, 6.0, 5.0};
    double rx_rotation_rad = kPi / 4;
    int rx_antennas = 16;
    double boresight_exponent = 0.57;
    double noise_power_dbm = -80.0;
    double power_budget_dbm = 20.0; // per frame, P_tot / M
    double clock_std_m = 1.0;
    std::vector<TargetSpec> targets{{Vec3(5.0, 18.0, 5.0), 5.0, {1.0, 0.0}}, {Vec3(15.0, 5.0, 5.0), 5.0, {1.0, 0.0}}};

    // design and Monte Carlo
    std::vector<Strategy> strategies{Strategy::direct_crb, Strategy::codebook_sdp, Strategy::codebook_lp_bound};
    int trials = 500;
    std::uint64_t seed = 1;
    int randomization_samples = 10;
    int alternation_max_iter = 10;
    double alternation_tol = 1e-3;
    int p2_max_elements = 64;
    int projection_outer_iter = 30;
    int approx_trials = 20;
    int approx_max_order = 5;

    // sweeps
    std::vector<double> sweep_carrier_hz{7e9, 15e9, 24e9};
    std::vector<int> sweep_n_e{8, 16, 32};
    std::vector<double> sweep_clock_std_m{0.01, 1.0, 100.0};
    std::vector<double> sweep_scenario_uncertainty_m{5.0, 0.5};
    std::vector<double> sweep_uncertainty_m{0.5, 2.0, 5.0};
    std::vector<double> sweep_radius_clock_std_m{1.0, 100.0};
    std::vector<double> beampattern_clock_std_m{1.0, 100.0};
    int beampattern_azimuth_points = 73;
    int beampattern_elevation_points = 37;
    double heatmap_x_min_m = 0, heatmap_x_max_m = 35;
    double heatmap_y_min_m = 0, heatmap_y_max_m = 20;
    double heatmap_step_m = 1, heatmap_z_m = 5;

    OfdmGrid grid() const
    {
        OfdmGrid g;
        g.carrier_hz = carrier_hz;
        g.subcarriers = subcarriers;
        g.spacing_hz = subcarrier_spacing_hz;
        g.pilots = pilots;
        return g;
    }

    Scene scene() const
    {
        Scene s;
        s.rx_position = rx_position_m;
        s.rotation = rx_rotation_rad;
        s.rx_antennas = rx_antennas;
        s.boresight_exponent = boresight_exponent;
        s.noise_power_w = dbm_to_watt(noise_power_dbm);
        s.power_budget_w = dbm_to_watt(power_budget_dbm);
        s.clock_std_s = std::isinf(clock_std_m) ? clock_std_m : meters_to_seconds(clock_std_m);
        for (const auto &t : targets)
        {
            Target x;
            x.position = t.position_m;
            x.uncertainty_m = t.uncertainty_m;
            x.reflection = t.reflection;
            s.targets.push_back(x);
        }
        return s;
    }

    void validate() const
    {
        auto check = [](bool ok, const std::string &field, const std::string &what) {
            require(ok, ErrorKind::validation_error, field + ": " + what);
        };
        check(carrier_hz > 0, "carrier_hz", "must be positive");
        check(subcarriers >= 1, "subcarriers", "must be >= 1");
        check(subcarrier_spacing_hz > 0, "subcarrier_spacing_hz", "must be positive");
        check(pilots >= 1, "pilots", "must be >= 1");
        check(n_rf >= 1, "n_rf", "must be >= 1");
        check(n_e >= 1, "n_e", "must be >= 1");
        check(d_rf_wavelengths > 0, "d_rf_wavelengths", "must be positive");
        check(d_e_wavelengths > 0, "d_e_wavelengths", "must be positive");
        check(waveguide_width_wavelengths > 0.5, "waveguide_width_wavelengths",
              "must exceed 0.5 so the TE10 mode propagates");
        check(waveguide_height_wavelengths > 0, "waveguide_height_wavelengths", "must be positive");
        check(waveguide_length_m > 0, "waveguide_length_m", "must be positive");
        check(rel_permittivity >= 1, "rel_permittivity", "must be >= 1");
        check(rx_antennas >= 1, "rx_antennas", "must be >= 1");
        check(std::abs(rx_rotation_rad) <= kPi / 2 + 1e-12, "rx_rotation_rad", "must lie in [-pi/2, pi/2]");
        check(clock_std_m >= 0, "clock_std_m", "must be >= 0");
        check(!targets.empty(), "target_count", "must be >= 1");
        for (std::size_t g = 0; g < targets.size(); ++g)
        {
            const std::string f = "target." + std::to_string(g + 1);
            check(targets[g].uncertainty_m >= 0, f + ".uncertainty_m", "must be >= 0");
            check(targets[g].position_m.allFinite(), f + ".position_m", "must be finite");
            check(targets[g].uncertainty_m < targets[g].position_m.norm(), f + ".uncertainty_m",
                  "sphere must not contain the TX");
        }
        check(!strategies.empty(), "strategies", "must name at least one strategy");
        check(trials >= 1, "trials", "must be >= 1");
        check(randomization_samples >= 1, "randomization_samples", "must be >= 1");
        check(alternation_max_iter >= 1, "alternation_max_iter", "must be >= 1");
        check(alternation_tol > 0, "alternation_tol", "must be positive");
        check(projection_outer_iter >= 1, "projection_outer_iter", "must be >= 1");
        check(approx_trials >= 1, "approx_trials", "must be >= 1");
        check(approx_max_order >= 1, "approx_max_order", "must be >= 1");
        check(beampattern_azimuth_points >= 2 && beampattern_elevation_points >= 2, "beampattern_points",
              "need at least 2 points per axis");
        check(heatmap_step_m > 0, "heatmap.step_m", "must be positive");
        check(heatmap_x_max_m >= heatmap_x_min_m && heatmap_y_max_m >= heatmap_y_min_m, "heatmap",
              "ranges must be ordered");
        (void)scene().validate(n_rf);
    }
};

// ------------------------------------------------------------------------
// Key-value format

namespace detail
{

inline std::string trim(const std::string &s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string &s, char sep)
{
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep))
        out.push_back(trim(cur));
    return out;
}

inline std::string fmt(double v)
{
    if (std::isnan(v))
        return "nan";
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline double parse_double(const std::string &s)
{
    const std::string t = trim(s);
    if (t == "inf")
        return std::numeric_limits<double>::infinity();
    char *end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    require(!t.empty() && end == t.c_str() + t.size(), ErrorKind::parse_error, "expected a number, got '" + t + "'");
    return v;
}

inline long long parse_int(const std::string &s)
{
    const std::string t = trim(s);
    char *end = nullptr;
    const long long v = std::strtoll(t.c_str(), &end, 10);
    require(!t.empty() && end == t.c_str() + t.size(), ErrorKind::parse_error, "expected an integer, got '" + t + "'");
    return v;
}

inline std::vector<double> parse_list(const std::string &s)
{
    std::vector<double> out;
    if (trim(s).empty())
        return out;
    for (const auto &p : split(s, ','))
        out.push_back(parse_double(p));
    return out;
}

inline std::string fmt_list(const std::vector<double> &v)
{
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i)
        out += (i ? "," : "") + fmt(v[i]);
    return out;
}

inline Vec3 parse_vec3(const std::string &s)
{
    const auto v = parse_list(s);
    require(v.size() == 3, ErrorKind::parse_error, "expected x,y,z");
    return {v[0], v[1], v[2]};
}

struct Field
{
    std::string key;
    std::function<std::string(const Scenario &)> get;
    std::function<void(Scenario &, const std::string &)> set;
};

template <class T> Field number(const std::string &key, T Scenario::*member)
{
    return {key,
            [member](const Scenario &s) {
                if constexpr (std::is_floating_point_v<T>)
                    return fmt(s.*member);
                else
                    return std::to_string(s.*member);
            },
            [member](Scenario &s, const std::string &v) {
                if constexpr (std::is_floating_point_v<T>)
                    s.*member = parse_double(v);
                else
                {
                    const long long x = parse_int(v);
                    require(x >= 0 || std::is_signed_v<T>, ErrorKind::parse_error, "expected a non-negative integer");
                    s.*member = static_cast<T>(x);
                }
            }};
}

inline Field list(const std::string &key, std::vector<double> Scenario::*member)
{
    return {key, [member](const Scenario &s) { return fmt_list(s.*member); },
            [member](Scenario &s, const std::string &v) { s.*member = parse_list(v); }};
}

inline const std::vector<Field> &fields()
{
    static const std::vector<Field> f = [] {
        std::vector<Field> v{
            number("carrier_hz", &Scenario::carrier_hz),
            number("subcarriers", &Scenario::subcarriers),
            number("subcarrier_spacing_hz", &Scenario::subcarrier_spacing_hz),
            number("pilots", &Scenario::pilots),
            number("n_rf", &Scenario::n_rf),
            number("n_e", &Scenario::n_e),
            number("d_rf_wavelengths", &Scenario::d_rf_wavelengths),
            number("d_e_wavelengths", &Scenario::d_e_wavelengths),
            number("waveguide_width_wavelengths", &Scenario::waveguide_width_wavelengths),
            number("waveguide_height_wavelengths", &Scenario::waveguide_height_wavelengths),
            number("waveguide_length_m", &Scenario::waveguide_length_m),
            number("rel_permittivity", &Scenario::rel_permittivity),
            {"rx_position_m", [](const Scenario &s) { return fmt_list({s.rx_position_m.x(), s.rx_position_m.y(), s.rx_position_m.z()}); },
             [](Scenario &s, const std::string &v) { s.rx_position_m = parse_vec3(v); }},
            number("rx_rotation_rad", &Scenario::rx_rotation_rad),
            number("rx_antennas", &Scenario::rx_antennas),
            number("boresight_exponent", &Scenario::boresight_exponent),
            number("noise_power_dbm", &Scenario::noise_power_dbm),
            number("power_budget_dbm", &Scenario::power_budget_dbm),
            number("clock_std_m", &Scenario::clock_std_m),
            {"strategies",
             [](const Scenario &s) {
                 std::string out;
                 for (std::size_t i = 0; i < s.strategies.size(); ++i)
                     out += (i ? "," : "") + std::string(to_string(s.strategies[i]));
                 return out;
             },
             [](Scenario &s, const std::string &v) {
                 s.strategies.clear();
                 for (const auto &p : split(v, ','))
                     s.strategies.push_back(parse_strategy(p));
             }},
            number("trials", &Scenario::trials),
            number("seed", &Scenario::seed),
            number("randomization_samples", &Scenario::randomization_samples),
            number("alternation_max_iter", &Scenario::alternation_max_iter),
            number("alternation_tol", &Scenario::alternation_tol),
            number("p2_max_elements", &Scenario::p2_max_elements),
            number("projection_outer_iter", &Scenario::projection_outer_iter),
            number("approx_trials", &Scenario::approx_trials),
            number("approx_max_order", &Scenario::approx_max_order),
            list("sweep.carrier_hz", &Scenario::sweep_carrier_hz),
            {"sweep.n_e",
             [](const Scenario &s) {
                 std::string out;
                 for (std::size_t i = 0; i < s.sweep_n_e.size(); ++i)
                     out += (i ? "," : "") + std::to_string(s.sweep_n_e[i]);
                 return out;
             },
             [](Scenario &s, const std::string &v) {
                 s.sweep_n_e.clear();
                 if (!trim(v).empty())
                     for (const auto &p : split(v, ','))
                         s.sweep_n_e.push_back(static_cast<int>(parse_int(p)));
             }},
            list("sweep.clock_std_m", &Scenario::sweep_clock_std_m),
            list("sweep.scenario_uncertainty_m", &Scenario::sweep_scenario_uncertainty_m),
            list("sweep.uncertainty_m", &Scenario::sweep_uncertainty_m),
            list("sweep.radius_clock_std_m", &Scenario::sweep_radius_clock_std_m),
            list("beampattern.clock_std_m", &Scenario::beampattern_clock_std_m),
            number("beampattern.azimuth_points", &Scenario::beampattern_azimuth_points),
            number("beampattern.elevation_points", &Scenario::beampattern_elevation_points),
            number("heatmap.x_min_m", &Scenario::heatmap_x_min_m),
            number("heatmap.x_max_m", &Scenario::heatmap_x_max_m),
            number("heatmap.y_min_m", &Scenario::heatmap_y_min_m),
            number("heatmap.y_max_m", &Scenario::heatmap_y_max_m),
            number("heatmap.step_m", &Scenario::heatmap_step_m),
            number("heatmap.z_m", &Scenario::heatmap_z_m),
        };
        return v;
    }();
    return f;
}

/// target.<i>.<field>, i starting at 1.
inline bool set_target_field(Scenario &s, const std::string &key, const std::string &value)
{
    if (key.rfind("target.", 0) != 0)
        return false;
    const auto dot = key.find('.', 7);
    require(dot != std::string::npos, ErrorKind::parse_error, "unknown key '" + key + "'");
    const long long idx = parse_int(key.substr(7, dot - 7));
    require(idx >= 1 && idx <= static_cast<long long>(s.targets.size()), ErrorKind::parse_error,
            "target index in '" + key + "' exceeds target_count");
    TargetSpec &t = s.targets[static_cast<std::size_t>(idx - 1)];
    const std::string field = key.substr(dot + 1);
    if (field == "position_m")
        t.position_m = parse_vec3(value);
    else if (field == "uncertainty_m")
        t.uncertainty_m = parse_double(value);
    else if (field == "reflection")
        t.reflection = parse_complex(trim(value));
    else
        throw Error(ErrorKind::parse_error, "unknown key '" + key + "'");
    return true;
}

} // namespace detail

/// Preset overlays applied on top of the reference defaults.
inline void apply_preset(Scenario &s, const std::string &name)
{
    if (name == "default")
        ;
    else if (name == "small")
    {
        s.n_rf = 2;
        s.n_e = 8;
        s.subcarriers = 16;
        s.trials = 50;
        s.approx_trials = 5;
    }
    else if (name == "paper")
    {
        s.trials = 500;
        s.p2_max_elements = 64; // P2 skipped at N_T = 128
    }
    else
        throw Error(ErrorKind::validation_error, "preset: unknown preset '" + name + "' (expected small or paper)");
    s.preset = name;
}

/// Parses key = value text. Precedence: reference defaults, then the preset, then the file's keys.
/// A non-empty preset_override wins over a `preset` key in the file.
inline Scenario parse_scenario(std::istream &in, const std::string &preset_override = "")
{
    struct Entry
    {
        int line;
        std::string key, value;
    };
    std::vector<Entry> entries;
    std::map<std::string, int> seen;
    std::string line;
    int lineno = 0;
    std::string preset = "default";
    int target_count = -1, target_line = 0;
    while (std::getline(in, line))
    {
        ++lineno;
        const auto hash = line.find('#');
        const std::string body = detail::trim(hash == std::string::npos ? line : line.substr(0, hash));
        if (body.empty())
            continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            throw Error(ErrorKind::parse_error, "line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = detail::trim(body.substr(0, eq));
        const std::string value = detail::trim(body.substr(eq + 1));
        if (auto it = seen.find(key); it != seen.end())
            throw Error(ErrorKind::parse_error, "line " + std::to_string(lineno) + ": duplicate key '" + key +
                                                    "' (first on line " + std::to_string(it->second) + ")");
        seen[key] = lineno;
        try
        {
            if (key == "preset")
                preset = value;
            else if (key == "target_count")
            {
                target_count = static_cast<int>(detail::parse_int(value));
                target_line = lineno;
            }
            else
                entries.push_back({lineno, key, value});
        }
        catch (const Error &e)
        {
            throw Error(e.kind(), "line " + std::to_string(lineno) + ": " + key + ": " + e.what());
        }
    }
    Scenario s;
    apply_preset(s, preset_override.empty() ? preset : preset_override);
    if (target_count >= 0)
    {
        if (target_count < 1)
            throw Error(ErrorKind::validation_error,
                        "line " + std::to_string(target_line) + ": target_count: must be >= 1");
        const Scenario defaults;
        s.targets.resize(static_cast<std::size_t>(target_count));
        for (int g = 2; g < target_count; ++g)
            s.targets[static_cast<std::size_t>(g)].position_m = Vec3::Constant(std::numeric_limits<double>::quiet_NaN());
    }
    for (const auto &e : entries)
    {
        try
        {
            if (detail::set_target_field(s, e.key, e.value))
                continue;
            bool found = false;
            for (const auto &f : detail::fields())
                if (f.key == e.key)
                {
                    f.set(s, e.value);
                    found = true;
                    break;
                }
            if (!found)
                throw Error(ErrorKind::parse_error, "unknown key '" + e.key + "'");
        }
        catch (const Error &err)
        {
            throw Error(err.kind(), "line " + std::to_string(e.line) + ": " + err.what());
        }
    }
    for (std::size_t g = 0; g < s.targets.size(); ++g)
        require(s.targets[g].position_m.allFinite(), ErrorKind::validation_error,
                "target." + std::to_string(g + 1) + ".position_m: required for targets beyond the defaults");
    s.validate();
    return s;
}

inline Scenario load_scenario(const std::string &path, const std::string &preset_override = "")
{
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorKind::io_error, "cannot open scenario file '" + path + "'");
    return parse_scenario(in, preset_override);
}

/// Canonical key = value listing; parse_scenario(save_scenario(s)) reproduces s.
inline std::vector<std::pair<std::string, std::string>> scenario_entries(const Scenario &s)
{
    std::vector<std::pair<std::string, std::string>> out{{"preset", s.preset}};
    for (const auto &f : detail::fields())
        out.emplace_back(f.key, f.get(s));
    out.emplace_back("target_count", std::to_string(s.targets.size()));
    for (std::size_t g = 0; g < s.targets.size(); ++g)
    {
        const std::string p = "target." + std::to_string(g + 1) + ".";
        const auto &t = s.targets[g];
        out.emplace_back(p + "position_m", detail::fmt_list({t.position_m.x(), t.position_m.y(), t.position_m.z()}));
        out.emplace_back(p + "uncertainty_m", detail::fmt(t.uncertainty_m));
        out.emplace_back(p + "reflection", format_complex(t.reflection));
    }
    return out;
}

inline void save_scenario(std::ostream &os, const Scenario &s)
{
    os << "# dmasense scenario\n";
    for (const auto &[k, v] : scenario_entries(s))
        os << k << " = " << v << '\n';
}

// ------------------------------------------------------------------------
// Hardware and design contexts

struct Hardware
{
    WaveguideSpec spec;
    DmaGeometry geom;
    DmaModel model;
    bool length_extended = false;
};

/// Reference proportions at the given carrier; the waveguide is lengthened when the elements would not fit.
inline Hardware build_hardware(const Scenario &s, double carrier_hz, int n_e)
{
    Hardware h;
    const double lambda = kSpeedOfLight / carrier_hz;
    h.spec.carrier_hz = carrier_hz;
    h.spec.width_m = s.waveguide_width_wavelengths * lambda;
    h.spec.height_m = s.waveguide_height_wavelengths * lambda;
    h.spec.rel_permittivity = s.rel_permittivity;
    const double d_e = s.d_e_wavelengths * lambda;
    const double needed = (n_e + 1) * d_e;
    h.length_extended = needed > s.waveguide_length_m;
    h.spec.length_m = std::max(s.waveguide_length_m, needed);
    h.spec.validate();
    h.geom = build_geometry(s.n_rf, n_e, s.d_rf_wavelengths * lambda, d_e, 0.5 * h.spec.width_m);
    h.model = build_model(h.geom, h.spec);
    return h;
}

inline DesignOptions design_options(const Scenario &s, int n_total)
{
    DesignOptions o;
    o.seed = s.seed;
    o.projection.outer_iters = s.projection_outer_iter;
    o.alternation.max_iter = s.alternation_max_iter;
    o.alternation.tol = s.alternation_tol;
    o.alternation.skip_p2 = n_total > s.p2_max_elements;
    return o;
}

// ------------------------------------------------------------------------
// Monte Carlo

using Coords = std::vector<std::pair<std::string, double>>;

struct ResultRow
{
    Coords coords;
    std::string strategy;
    int P = 0;
    int M = 0;
    double mean_peb_m = std::numeric_limits<double>::quiet_NaN();
    double stderr_m = std::numeric_limits<double>::quiet_NaN();
    int trials = 0;
    int excluded = 0;
    int solver_iterations = 0;
    double residual = std::numeric_limits<double>::quiet_NaN();
    std::string flags;
};

struct TrialRecord
{
    Coords coords;
    std::string strategy;
    int trial = 0;
    double dt_s = 0;
    double peb_m = 0;
    int candidate = -1;
};

struct MonteCarlo
{
    std::vector<ResultRow> rows;
    std::vector<TrialRecord> trials;
};

inline std::pair<double, double> mean_stderr(const std::vector<double> &v)
{
    if (v.empty())
        return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    double m = 0;
    for (double x : v)
        m += x;
    m /= static_cast<double>(v.size());
    if (!std::isfinite(m) || v.size() < 2)
        return {m, std::isfinite(m) ? 0.0 : std::numeric_limits<double>::quiet_NaN()};
    // shifted by v[0] so identical values give exactly zero
    double sh = 0;
    for (double x : v)
        sh += x - v[0];
    sh /= static_cast<double>(v.size());
    double ss = 0;
    for (double x : v)
        ss += (x - v[0] - sh) * (x - v[0] - sh);
    return {m, std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()))};
}

inline std::string join_flags(const std::vector<std::string> &f)
{
    std::string out;
    for (std::size_t i = 0; i < f.size(); ++i)
        out += (i ? ";" : "") + f[i];
    return out;
}

/// Designs each strategy once for the scenario, then runs the trials. Per trial: draw dt (the FIM does not
/// depend on it) and, for direct_crb, draw F by Gaussian randomisation. Trial seeds depend on the stream key,
/// strategy and trial only, so sweep points share random numbers.
inline MonteCarlo run_monte_carlo(const Scenario &s, const Coords &coords, std::uint64_t stream_key)
{
    MonteCarlo out;
    const Hardware hw = build_hardware(s, s.carrier_hz, s.n_e);
    const DesignContext ctx = build_design_context(s.scene(), s.grid(), hw.model);
    const DesignOptions opt = design_options(s, hw.model.n_total());
    for (Strategy st : s.strategies)
    {
        ResultRow row;
        row.coords = coords;
        row.strategy = to_string(st);
        row.P = ctx.P();
        row.M = ctx.M;
        std::vector<std::string> flags = ctx.warnings;
        if (hw.length_extended)
            flags.push_back("waveguide_extended");
        std::optional<BeamDesign> design;
        try
        {
            design = design_strategy(ctx, st, opt);
            row.solver_iterations = design->solver_iterations;
            row.residual = design->residual_trace.empty() ? row.residual : design->residual_trace.back();
            flags.insert(flags.end(), design->flags.begin(), design->flags.end());
        }
        catch (const Error &e)
        {
            flags.push_back(std::string("design_failed:") + to_string(e.kind()));
        }
        std::vector<double> pebs;
        for (int t = 0; t < s.trials; ++t)
        {
            const std::uint64_t seed = derive_seed(s.seed, stream_key, static_cast<std::uint64_t>(st), static_cast<std::uint64_t>(t));
            std::mt19937_64 rng(seed);
            std::normal_distribution<double> nd(0.0, 1.0);
            TrialRecord rec;
            rec.coords = coords;
            rec.strategy = row.strategy;
            rec.trial = t;
            rec.dt_s = ctx.clock_std_s() * nd(rng);
            if (!design)
            {
                ++row.excluded;
                continue;
            }
            if (st == Strategy::direct_crb)
            {
                const DirectRealization r = realize_direct(ctx, *design, s.randomization_samples, rng());
                rec.peb_m = r.peb;
                rec.candidate = r.candidate;
            }
            else
                rec.peb_m = design->worst.peb;
            pebs.push_back(rec.peb_m);
            out.trials.push_back(rec);
        }
        row.trials = static_cast<int>(pebs.size());
        std::tie(row.mean_peb_m, row.stderr_m) = mean_stderr(pebs);
        row.flags = join_flags(flags);
        out.rows.push_back(row);
    }
    return out;
}

// ------------------------------------------------------------------------
// Tables and output

struct Table
{
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void add(std::vector<std::string> r) { rows.push_back(std::move(r)); }
};

inline std::string num(double v)
{
    if (std::isnan(v))
        return "nan";
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline std::string csv_field(const std::string &s)
{
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string q = "\"";
    for (char c : s)
        q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
}

inline void write_table(std::ostream &os, const Table &t)
{
    for (std::size_t i = 0; i < t.header.size(); ++i)
        os << (i ? "," : "") << t.header[i];
    os << '\n';
    for (const auto &r : t.rows)
    {
        for (std::size_t i = 0; i < r.size(); ++i)
            os << (i ? "," : "") << csv_field(r[i]);
        os << '\n';
    }
}

struct ExperimentOutput
{
    std::string name;
    Table summary;
    Table detail;
    nlohmann::ordered_json notes = nlohmann::ordered_json::object();
};

inline void append_mc(ExperimentOutput &out, const MonteCarlo &mc, const std::vector<std::string> &coord_names)
{
    if (out.summary.header.empty())
    {
        out.summary.header = coord_names;
        for (const char *h : {"strategy", "P", "M", "mean_peb_m", "stderr_m", "trials", "excluded",
                              "solver_iterations", "projection_residual", "flags"})
            out.summary.header.push_back(h);
        out.detail.header = coord_names;
        for (const char *h : {"strategy", "trial", "dt_s", "peb_m", "candidate"})
            out.detail.header.push_back(h);
    }
    for (const auto &r : mc.rows)
    {
        std::vector<std::string> f;
        for (const auto &c : r.coords)
            f.push_back(num(c.second));
        for (const std::string &v : {r.strategy, std::to_string(r.P), std::to_string(r.M), num(r.mean_peb_m),
                                     num(r.stderr_m), std::to_string(r.trials), std::to_string(r.excluded),
                                     std::to_string(r.solver_iterations), num(r.residual), r.flags})
            f.push_back(v);
        out.summary.add(std::move(f));
    }
    for (const auto &t : mc.trials)
    {
        std::vector<std::string> f;
        for (const auto &c : t.coords)
            f.push_back(num(c.second));
        for (const std::string &v :
             {t.strategy, std::to_string(t.trial), num(t.dt_s), num(t.peb_m), std::to_string(t.candidate)})
            f.push_back(v);
        out.detail.add(std::move(f));
    }
}

// ------------------------------------------------------------------------
// Experiments

/// Solver status for output files; usable stalls within 100x tolerance read near_optimal.
inline std::string status_label(const SdpReport &r)
{
    if (r.status != conic::Status::optimal && r.usable)
        return "near_optimal";
    return conic::to_string(r.status);
}

inline void require_sweep(bool ok, const std::string &experiment, const std::string &key)
{
    require(ok, ErrorKind::incompatible_scenario, experiment + " requires a non-empty " + key);
}

/// e(p) = ||(Q + W_MC)^{-1} - approx_p||_F^2 over random Lorentzian weights, per carrier.
inline ExperimentOutput experiment_approx_error(const Scenario &s)
{
    require_sweep(!s.sweep_carrier_hz.empty(), "approx_error", "sweep.carrier_hz");
    ExperimentOutput out{"approx_error", {}, {}};
    out.summary.header = {"carrier_hz", "order", "mean_error", "stderr", "trials"};
    out.detail.header = {"carrier_hz", "order", "trial", "error"};
    for (std::size_t fi = 0; fi < s.sweep_carrier_hz.size(); ++fi)
    {
        const double fc = s.sweep_carrier_hz[fi];
        const Hardware hw = build_hardware(s, fc, s.n_e);
        std::vector<std::vector<double>> errs(static_cast<std::size_t>(s.approx_max_order));
        for (int t = 0; t < s.approx_trials; ++t)
        {
            const CVec k = random_unit_phases(hw.model.n_total(), derive_seed(s.seed, hash_string("approx_error"), fi, t));
            const LorentzianWeights lw = LorentzianWeights::from_unit(k);
            const CMat exact = projection_response(hw.model, ProjectionModel::no_waveguide_loss, k);
            for (int p = 1; p <= s.approx_max_order; ++p)
            {
                const double e = (exact - neumann_inverse(hw.model.wmc_inv, lw.admittances(), p)).squaredNorm();
                errs[static_cast<std::size_t>(p - 1)].push_back(e);
                out.detail.add({num(fc), std::to_string(p), std::to_string(t), num(e)});
            }
        }
        for (int p = 1; p <= s.approx_max_order; ++p)
        {
            const auto [m, se] = mean_stderr(errs[static_cast<std::size_t>(p - 1)]);
            out.summary.add({num(fc), std::to_string(p), num(m), num(se), std::to_string(s.approx_trials)});
        }
    }
    return out;
}

/// ||B_dig - B_dma||_F^2 versus N_E for the full, no-coupling and lossless-waveguide models.
inline ExperimentOutput experiment_codebook_cost(const Scenario &s)
{
    require_sweep(!s.sweep_n_e.empty(), "codebook_cost", "sweep.n_e");
    ExperimentOutput out{"codebook_cost", {}, {}};
    out.summary.header = {"n_e", "model", "P", "M", "residual", "relative_residual", "outer_iterations",
                          "rcg_iterations", "flags"};
    out.detail.header = {"n_e", "model", "step", "residual"};
    for (int ne : s.sweep_n_e)
    {
        const Hardware hw = build_hardware(s, s.carrier_hz, ne);
        const UncertaintyGrid ug = discretize_uncertainty(s.scene(), hw.geom, hw.spec.wavelength());
        const CMat bdig = build_digital_codebook(ug, hw.geom, hw.spec.wavelength());
        const CVec k0 = random_unit_phases(hw.model.n_total(), derive_seed(s.seed, hash_string("codebook_cost"), ne));
        ProjectionOptions po;
        po.outer_iters = s.projection_outer_iter;
        for (ProjectionModel m : {ProjectionModel::full, ProjectionModel::no_coupling, ProjectionModel::no_waveguide_loss})
        {
            const ProjectionResult pr = project_codebook(bdig, hw.model, m, k0, po);
            std::vector<std::string> flags;
            if (pr.pseudo_inverse)
                flags.push_back("pseudo_inverse");
            if (hw.length_extended)
                flags.push_back("waveguide_extended");
            out.summary.add({std::to_string(ne), to_string(m), std::to_string(ug.P()), std::to_string(ug.M()),
                             num(pr.residual), num(pr.residual / bdig.squaredNorm()),
                             std::to_string(pr.outer_iterations), std::to_string(pr.rcg_iterations), join_flags(flags)});
            for (std::size_t i = 0; i < pr.trace.size(); ++i)
                out.detail.add({std::to_string(ne), to_string(m), std::to_string(i), num(pr.trace[i])});
        }
    }
    return out;
}

/// Gain N_T a^H Z a / tr Z (dB) on an azimuth x elevation grid for B_dig, B_dma and the no-coupling B_dma,
/// each with P5 power allocation.
inline ExperimentOutput experiment_beampattern(const Scenario &s)
{
    require_sweep(!s.beampattern_clock_std_m.empty(), "beampattern", "beampattern.clock_std_m");
    ExperimentOutput out{"beampattern", {}, {}};
    out.summary.header = {"clock_std_m", "variant", "azimuth_rad", "elevation_rad", "gain_db"};
    out.detail.header = {"clock_std_m", "variant", "beam", "rho", "beam_norm_sq", "peak_gain_db", "worst_peb_m",
                         "solver_status"};
    const Hardware hw = build_hardware(s, s.carrier_hz, s.n_e);
    const double lambda = hw.spec.wavelength();
    const DesignOptions opt = design_options(s, hw.model.n_total());
    for (std::size_t ci = 0; ci < s.beampattern_clock_std_m.size(); ++ci)
    {
        Scenario sc = s;
        sc.clock_std_m = s.beampattern_clock_std_m[ci];
        const DesignContext ctx = build_design_context(sc.scene(), sc.grid(), hw.model);
        const CodebookStage full = build_codebook_stage(ctx, ProjectionModel::full, opt);
        const CodebookStage nc = build_codebook_stage(ctx, ProjectionModel::no_coupling, opt);
        const std::vector<std::pair<std::string, CMat>> variants{
            {"b_dig", full.bdig}, {"b_dma", full.bdma}, {"b_dma_no_coupling", nc.bdma}};
        for (const auto &[name, B] : variants)
        {
            const PowerResult pr = power_allocation_P5(ctx, B, opt.solver);
            const CMat Z = B * pr.rho.cast<cplx>().asDiagonal() * B.adjoint();
            const double trz = Z.trace().real();
            const int na = s.beampattern_azimuth_points, ne = s.beampattern_elevation_points;
            double peak = -std::numeric_limits<double>::infinity();
            for (int i = 0; i < na; ++i)
                for (int j = 0; j < ne; ++j)
                {
                    const double az = -kPi / 2 + kPi * i / (na - 1);
                    const double el = -kPi / 2 + kPi * j / (ne - 1);
                    const CVec a = steering_tx(az, el, hw.geom, lambda);
                    const double g = hw.model.n_total() * a.dot(Z * a).real() / trz;
                    const double db = 10.0 * std::log10(std::max(g, 1e-300));
                    peak = std::max(peak, db);
                    out.summary.add({num(sc.clock_std_m), name, num(az), num(el), num(db)});
                }
            const double wpeb = evaluate_covariance(ctx, Z).peb;
            for (Eigen::Index m = 0; m < B.cols(); ++m)
                out.detail.add({num(sc.clock_std_m), name, std::to_string(m), num(pr.rho(m)), num(B.col(m).squaredNorm()),
                                num(peak), num(wpeb), status_label(pr.sdp)});
        }
    }
    return out;
}

/// Mean worst-case PEB versus clock uncertainty, for every scenario radius and strategy.
inline ExperimentOutput experiment_peb_vs_clock(const Scenario &s)
{
    require_sweep(!s.sweep_clock_std_m.empty(), "peb_vs_clock", "sweep.clock_std_m");
    require_sweep(!s.sweep_scenario_uncertainty_m.empty(), "peb_vs_clock", "sweep.scenario_uncertainty_m");
    ExperimentOutput out{"peb_vs_clock", {}, {}};
    const std::uint64_t key = hash_string("peb_vs_clock");
    for (double u : s.sweep_scenario_uncertainty_m)
        for (double c : s.sweep_clock_std_m)
        {
            Scenario sc = s;
            sc.clock_std_m = c;
            for (auto &t : sc.targets)
                t.uncertainty_m = u;
            append_mc(out, run_monte_carlo(sc, {{"uncertainty_m", u}, {"clock_std_m", c}}, key),
                      {"uncertainty_m", "clock_std_m"});
        }
    return out;
}

/// Mean worst-case PEB versus uncertainty radius; P and M follow the beam-count rule at every radius.
inline ExperimentOutput experiment_peb_vs_radius(const Scenario &s)
{
    require_sweep(!s.sweep_uncertainty_m.empty(), "peb_vs_radius", "sweep.uncertainty_m");
    require_sweep(!s.sweep_radius_clock_std_m.empty(), "peb_vs_radius", "sweep.radius_clock_std_m");
    ExperimentOutput out{"peb_vs_radius", {}, {}};
    const std::uint64_t key = hash_string("peb_vs_radius");
    for (double c : s.sweep_radius_clock_std_m)
        for (double u : s.sweep_uncertainty_m)
        {
            Scenario sc = s;
            sc.clock_std_m = c;
            for (auto &t : sc.targets)
                t.uncertainty_m = u;
            append_mc(out, run_monte_carlo(sc, {{"clock_std_m", c}, {"uncertainty_m", u}}, key),
                      {"clock_std_m", "uncertainty_m"});
        }
    return out;
}

/// Location-domain evaluator for a hypothetical single SP at `position`, counting M frames.
inline std::optional<LocationFimEvaluator> point_evaluator(const DesignContext &ctx, const Vec3 &position,
                                                           cplx reflection)
{
    if (position.norm() < 1e-9 || (position - ctx.scene.rx_position).norm() < 1e-9)
        return std::nullopt;
    Scene sp = ctx.scene;
    Target t;
    t.position = position;
    t.reflection = reflection;
    sp.targets = {t};
    const PathParams params = path_params(sp, ctx.lambda, 0.0);
    const RxCombiner rx = rx_combiner(sp, {BeamCount{}}, ctx.lambda);
    FisherKernels fk = build_fisher_kernels(params, sp, ctx.model.geom, ctx.grid, rx.w);
    fk.omega *= static_cast<double>(ctx.M);
    return LocationFimEvaluator(std::move(fk));
}

/// PEB of one hypothetical SP over an xy grid, for each strategy designed on the scenario.
/// direct_crb uses its expected covariance W X W^H.
inline ExperimentOutput experiment_peb_heatmap(const Scenario &s)
{
    ExperimentOutput out{"peb_heatmap", {}, {}};
    out.summary.header = {"strategy", "x_m", "y_m", "z_m", "peb_m"};
    out.detail.header = {"strategy", "P", "M", "worst_peb_m", "solver_iterations", "flags"};
    const Hardware hw = build_hardware(s, s.carrier_hz, s.n_e);
    const DesignContext ctx = build_design_context(s.scene(), s.grid(), hw.model);
    const DesignOptions opt = design_options(s, hw.model.n_total());
    const int nx = static_cast<int>(std::floor((s.heatmap_x_max_m - s.heatmap_x_min_m) / s.heatmap_step_m + 1e-9)) + 1;
    const int ny = static_cast<int>(std::floor((s.heatmap_y_max_m - s.heatmap_y_min_m) / s.heatmap_step_m + 1e-9)) + 1;
    std::vector<std::optional<LocationFimEvaluator>> evals;
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j < ny; ++j)
        {
            const Vec3 p(s.heatmap_x_min_m + i * s.heatmap_step_m, s.heatmap_y_min_m + j * s.heatmap_step_m, s.heatmap_z_m);
            try
            {
                evals.push_back(point_evaluator(ctx, p, s.targets.front().reflection));
            }
            catch (const Error &)
            {
                evals.push_back(std::nullopt);
            }
        }
    for (Strategy st : s.strategies)
    {
        std::optional<BeamDesign> d;
        std::string flags;
        try
        {
            d = design_strategy(ctx, st, opt);
            flags = join_flags(d->flags);
        }
        catch (const Error &e)
        {
            flags = std::string("design_failed:") + to_string(e.kind());
        }
        out.detail.add({to_string(st), std::to_string(ctx.P()), std::to_string(ctx.M),
                        num(d ? d->worst.peb : std::numeric_limits<double>::quiet_NaN()),
                        std::to_string(d ? d->solver_iterations : 0), flags});
        for (int i = 0; i < nx; ++i)
            for (int j = 0; j < ny; ++j)
            {
                const auto &ev = evals[static_cast<std::size_t>(i * ny + j)];
                double peb_m = std::numeric_limits<double>::quiet_NaN();
                if (d && ev)
                    peb_m = ev->peb_of(d->Z).value;
                out.summary.add({to_string(st), num(s.heatmap_x_min_m + i * s.heatmap_step_m),
                                 num(s.heatmap_y_min_m + j * s.heatmap_step_m), num(s.heatmap_z_m), num(peb_m)});
            }
    }
    return out;
}

inline const std::vector<std::string> &experiment_names()
{
    static const std::vector<std::string> n{"approx_error", "codebook_cost", "beampattern",
                                            "peb_vs_clock", "peb_vs_radius", "peb_heatmap"};
    return n;
}

inline ExperimentOutput run_experiment(const std::string &name, const Scenario &s)
{
    if (name == "approx_error")
        return experiment_approx_error(s);
    if (name == "codebook_cost")
        return experiment_codebook_cost(s);
    if (name == "beampattern")
        return experiment_beampattern(s);
    if (name == "peb_vs_clock")
        return experiment_peb_vs_clock(s);
    if (name == "peb_vs_radius")
        return experiment_peb_vs_radius(s);
    if (name == "peb_heatmap")
        return experiment_peb_heatmap(s);
    throw Error(ErrorKind::invalid_argument, "unknown experiment '" + name + "'");
}

/// Manifest keys: tool, version, experiment, seed, preset, randomness, outputs, scenario.
inline nlohmann::ordered_json manifest(const ExperimentOutput &out, const Scenario &s)
{
    nlohmann::ordered_json m;
    m["tool"] = "dmasense";
    m["version"] = kVersion;
    m["experiment"] = out.name;
    m["seed"] = s.seed;
    m["preset"] = s.preset;
    m["randomness"] = "per trial: clock offset draw (recorded, FIM invariant) and, for direct_crb, Gaussian "
                      "randomisation of F with randomization_samples candidates; codebook initialisation fixed by seed";
    m["outputs"] = nlohmann::ordered_json::array(
        {{{"file", out.name + ".csv"}, {"rows", out.summary.rows.size()}, {"columns", out.summary.header}},
         {{"file", out.name + ".detail.csv"}, {"rows", out.detail.rows.size()}, {"columns", out.detail.header}}});
    nlohmann::ordered_json sc = nlohmann::ordered_json::object();
    for (const auto &[k, v] : scenario_entries(s))
        sc[k] = v;
    m["scenario"] = sc;
    if (!out.notes.empty())
        m["notes"] = out.notes;
    return m;
}

inline void write_outputs(const ExperimentOutput &out, const Scenario &s, const std::filesystem::path &dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    require(!ec, ErrorKind::io_error, "cannot create output directory '" + dir.string() + "'");
    auto open = [&](const std::string &file) {
        std::ofstream f(dir / file, std::ios::binary);
        require(static_cast<bool>(f), ErrorKind::io_error, "cannot write '" + (dir / file).string() + "'");
        return f;
    };
    {
        auto f = open(out.name + ".csv");
        write_table(f, out.summary);
    }
    {
        auto f = open(out.name + ".detail.csv");
        write_table(f, out.detail);
    }
    {
        auto f = open("manifest.json");
        f << manifest(out, s).dump(2) << '\n';
    }
}

} // namespace dmasense

#endif
