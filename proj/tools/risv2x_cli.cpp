// SPDX-License-Identifier: Apache-2.0
//
// risv2x: simulator for RIS-aided V2X sidelink tracking and resource allocation
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

// Command-line runner: run, list, validate, report.
// Exit codes: 0 success, 2 usage error, 1 runtime error.

#include "risv2x/risv2x.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace
{

constexpr int exit_usage = 2;
constexpr int exit_runtime = 1;

// "param=v1,v2,..." into a sweep.
void parse_sweep(const std::string &text, risv2x::ExperimentSpec &spec)
{
    const auto eq = text.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == text.size())
        throw risv2x::UsageError("--sweep expects param=v1,v2,...");
    spec.sweep_param = text.substr(0, eq);
    for (const auto &v : risv2x::detail::split(text.substr(eq + 1), ','))
    {
        try
        {
            spec.sweep_values.push_back(risv2x::detail::parse_num(v));
        }
        catch (const std::exception &)
        {
            throw risv2x::UsageError("--sweep: bad value '" + v + "'");
        }
    }
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"risv2x: RIS-aided V2X sidelink experiments"};
    app.require_subcommand(1);

    risv2x::ExperimentSpec spec;
    std::uint64_t seed = 0;
    std::string format = "csv";
    std::string config_path;
    std::string sweep;
    auto *run = app.add_subcommand("run", "run a named experiment and emit its table");
    run->add_option("experiment", spec.name, "experiment name (see 'list')")->required();
    run->add_option("--drops", spec.drops, "Monte-Carlo drops per sweep point")->capture_default_str();
    auto *seed_opt = run->add_option("--seed", seed, "RNG seed");
    run->add_option("--set", spec.config_overrides, "config override key=value (repeatable)");
    run->add_option("--out", spec.output_path, "output file (default: stdout)");
    run->add_option("--format", format, "csv or jsonl")->check(CLI::IsMember({"csv", "jsonl"}))->capture_default_str();
    run->add_option("--config", config_path, "base config file");
    run->add_option("--sweep", sweep, "override the sweep: param=v1,v2,...");
    run->add_option("--workers", spec.workers, "worker threads (0: all cores)");

    auto *list = app.add_subcommand("list", "list experiments");

    std::string report_config;
    std::vector<std::string> report_sets;
    int report_subframes = 1;
    bool report_benchmark = false;
    auto *rep = app.add_subcommand("report", "frame accounting as JSON lines (one record per sub-frame)");
    rep->add_option("--config", report_config, "base config file");
    rep->add_option("--set", report_sets, "config override key=value (repeatable)");
    rep->add_option("--subframes", report_subframes, "number of sub-frames")->capture_default_str();
    rep->add_flag("--benchmark", report_benchmark, "per-slot angle training frame");

    std::string validate_path;
    auto *val = app.add_subcommand("validate", "check a config file against the config invariants");
    val->add_option("configfile", validate_path, "key=value config file")->required();

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::Success &e)
    {
        return app.exit(e);
    }
    catch (const CLI::ParseError &e)
    {
        app.exit(e);
        return exit_usage;
    }

    if (list->parsed())
    {
        for (const auto &n : risv2x::experiment_names())
            std::cout << n << "\t" << risv2x::experiment_description(n) << "\n";
        return 0;
    }

    if (rep->parsed())
    {
        risv2x::ScenarioConfig c;
        try
        {
            if (report_subframes < 0)
                throw risv2x::UsageError("--subframes must be >= 0");
            for (const auto &a : report_sets)
            {
                risv2x::ScenarioConfig probe;
                risv2x::apply_assignment(probe, a);
            }
        }
        catch (const std::exception &e)
        {
            std::cerr << "usage error: " << e.what() << "\n";
            return exit_usage;
        }
        try
        {
            if (!report_config.empty())
                c = risv2x::load_config(report_config);
            for (const auto &a : report_sets)
                risv2x::apply_assignment(c, a);
            risv2x::validate(c);
            std::cout << risv2x::accounting_jsonl(c, report_subframes, report_benchmark);
            return 0;
        }
        catch (const std::exception &e)
        {
            std::cerr << "error: " << e.what() << "\n";
            return exit_runtime;
        }
    }

    if (val->parsed())
    {
        try
        {
            const auto c = risv2x::load_config(validate_path);
            risv2x::validate(c);
            std::cout << "valid: " << validate_path << "\n";
            return 0;
        }
        catch (const std::exception &e)
        {
            std::cerr << "invalid: " << validate_path << ": " << e.what() << "\n";
            return exit_runtime;
        }
    }

    // run
    risv2x::ScenarioConfig base;
    try
    {
        if (*seed_opt)
            spec.seed = seed;
        if (!sweep.empty())
            parse_sweep(sweep, spec);
        risv2x::experiment_defaults(spec.name);
        if (spec.drops < 1)
            throw risv2x::UsageError("--drops must be >= 1");
        if (!spec.sweep_param.empty() && !risv2x::has_field(spec.sweep_param))
            throw risv2x::UsageError("unknown sweep parameter '" + spec.sweep_param + "'");
        for (const auto &a : spec.config_overrides)
        {
            risv2x::ScenarioConfig probe;
            risv2x::apply_assignment(probe, a);
        }
    }
    catch (const std::exception &e)
    {
        std::cerr << "usage error: " << e.what() << "\n";
        return exit_usage;
    }

    try
    {
        if (!config_path.empty())
            base = risv2x::load_config(config_path);
        const auto table = risv2x::run_experiment(spec, base);
        if (spec.output_path.empty())
            std::cout << risv2x::render(table, format);
        else
            risv2x::emit(table, format, spec.output_path);
        return 0;
    }
    catch (const std::exception &e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return exit_runtime;
    }
}
