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

#include "dmasense/harness.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <iostream>

namespace
{

int exit_code(dmasense::ErrorKind k)
{
    using dmasense::ErrorKind;
    switch (k)
    {
    case ErrorKind::parse_error: return 3;
    case ErrorKind::validation_error: return 4;
    case ErrorKind::incompatible_scenario: return 5;
    case ErrorKind::solver_failure: return 6;
    case ErrorKind::io_error: return 7;
    default: return 8;
    }
}

void report_error(const std::string &kind, const std::string &message)
{
    nlohmann::ordered_json j;
    j["error"] = kind;
    j["message"] = message;
    std::cerr << j.dump() << '\n';
}

} // namespace

int main(int argc, char **argv)
{
    using namespace dmasense;
    CLI::App app{"dmasense: DMA transmit beamforming for bistatic multi-target sensing"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    std::string experiment, scenario_path, out_dir, preset, strategy;
    std::optional<std::uint64_t> seed;

    auto *run = app.add_subcommand("run", "run an experiment and write CSV outputs and a manifest");
    run->add_option("experiment", experiment, "experiment name")
        ->required()
        ->check(CLI::IsMember(experiment_names()));
    run->add_option("--scenario", scenario_path, "scenario file")->required();
    run->add_option("--seed", seed, "master seed (overrides the scenario)");
    run->add_option("--out", out_dir, "output directory")->required();
    run->add_option("--preset", preset, "preset overlay")->check(CLI::IsMember({"small", "paper"}));

    auto *validate = app.add_subcommand("validate", "parse and validate a scenario");
    validate->add_option("--scenario", scenario_path, "scenario file")->required();
    validate->add_option("--preset", preset, "preset overlay")->check(CLI::IsMember({"small", "paper"}));

    auto *dump = app.add_subcommand("dump-design", "design one strategy and print it");
    dump->add_option("--scenario", scenario_path, "scenario file")->required();
    dump->add_option("--strategy", strategy, "beamforming strategy")->required();
    dump->add_option("--seed", seed, "master seed (overrides the scenario)");
    dump->add_option("--preset", preset, "preset overlay")->check(CLI::IsMember({"small", "paper"}));

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::CallForHelp &e)
    {
        return app.exit(e);
    }
    catch (const CLI::CallForVersion &e)
    {
        return app.exit(e);
    }
    catch (const CLI::ParseError &e)
    {
        report_error("usage_error", e.what());
        return 2;
    }

    try
    {
        Scenario s = load_scenario(scenario_path, preset);
        if (seed)
            s.seed = *seed;
        if (*run)
        {
            const auto t0 = std::chrono::steady_clock::now();
            const ExperimentOutput out = run_experiment(experiment, s);
            write_outputs(out, s, out_dir);
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            std::cerr << experiment << ": " << out.summary.rows.size() << " rows in " << secs << " s\n";
        }
        else if (*validate)
        {
            const Hardware hw = build_hardware(s, s.carrier_hz, s.n_e);
            const DesignContext ctx = build_design_context(s.scene(), s.grid(), hw.model);
            nlohmann::ordered_json j;
            j["status"] = "ok";
            j["preset"] = s.preset;
            j["n_total"] = hw.model.n_total();
            j["waveguide_length_m"] = hw.spec.length_m;
            j["P"] = ctx.P();
            j["M"] = ctx.M;
            j["warnings"] = ctx.warnings;
            std::cout << j.dump(2) << '\n';
        }
        else if (*dump)
        {
            const Strategy st = parse_strategy(strategy);
            const Hardware hw = build_hardware(s, s.carrier_hz, s.n_e);
            const DesignContext ctx = build_design_context(s.scene(), s.grid(), hw.model);
            const BeamDesign d = design_strategy(ctx, st, design_options(s, hw.model.n_total()));
            write_design(std::cout, d);
        }
    }
    catch (const Error &e)
    {
        report_error(to_string(e.kind()), e.what());
        return exit_code(e.kind());
    }
    catch (const std::exception &e)
    {
        report_error("internal_error", e.what());
        return 9;
    }
    return 0;
}
