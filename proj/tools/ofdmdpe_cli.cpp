// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The ofdmdpe Authors
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


#include <ofdmdpe/config.hpp>
#include <ofdmdpe/experiments.hpp>

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace
{

using namespace ofdmdpe;

struct Options
{
    std::string scenario = "scenarios/default.yaml";
    std::string out;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::optional<int> trials;
    bool bounds_only = false;
};

ExperimentConfig load(const Options& o)
{
    std::vector<std::string> ov;
    if (o.seed)
    {
        ov.push_back("seed=" + std::to_string(*o.seed));
        ov.push_back("montecarlo.seed=" + std::to_string(*o.seed));
    }
    if (o.trials)
        ov.push_back("montecarlo.trials=" + std::to_string(*o.trials));
    if (o.bounds_only)
        ov.push_back("sweep.bounds_only=true");
    ov.insert(ov.end(), o.overrides.begin(), o.overrides.end());
    return load_config(o.scenario, ov);
}

void emit(const CsvTable& t, const std::string& path)
{
    if (path.empty() || path == "-")
    {
        t.write(std::cout);
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw Error("cannot write '" + path + "'");
    t.write(f);
}

int finish(const CsvTable& t)
{
    if (t.ok())
        return 0;
    std::cerr << "error: " << t.errors.size() << " point(s) failed\n";
    for (const auto& e : t.errors)
        std::cerr << "  " << e << '\n';
    return 1;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"OFDM direct position estimation: Cramer-Rao bounds and grid-search DPE"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--scenario", o.scenario, "scenario YAML file")->check(CLI::ExistingFile);
        sub->add_option("--out", o.out, "output CSV path (stdout if omitted)");
        sub->add_option("--set", o.overrides, "override a config key, key=value (repeatable)")->take_all();
        sub->add_option("--seed", o.seed, "seed for channel, pilots and noise");
        sub->add_option("--trials", o.trials, "Monte Carlo trial count");
        sub->add_flag("--bounds-only", o.bounds_only, "skip Monte Carlo in sweeps");
    };

    auto* snr = app.add_subcommand("fig-snr", "bounds versus SNR for each path count");
    auto* bw = app.add_subcommand("fig-bandwidth", "bounds versus bandwidth, two families");
    auto* sym = app.add_subcommand("fig-symbols", "bounds versus number of OFDM symbols");
    auto* sweep = app.add_subcommand("sweep", "sweep over the axis given in the config 'sweep' section");
    auto* mc = app.add_subcommand("montecarlo", "grid-search DPE campaign against the bounds");
    auto* once = app.add_subcommand("crb-once", "single-point CRB report");
    for (auto* s : {snr, bw, sym, sweep, mc, once})
        common(s);

    CLI11_PARSE(app, argc, argv);

    try
    {
        const ExperimentConfig cfg = load(o);
        if (snr->parsed())
        {
            const auto t = fig_snr(cfg);
            emit(t, o.out);
            return finish(t);
        }
        if (bw->parsed())
        {
            const auto t = fig_bandwidth(cfg);
            emit(t, o.out);
            return finish(t);
        }
        if (sym->parsed())
        {
            const auto t = fig_symbols(cfg);
            emit(t, o.out);
            return finish(t);
        }
        if (sweep->parsed())
        {
            const auto t = sweep_table(cfg);
            emit(t, o.out);
            return finish(t);
        }
        if (mc->parsed())
        {
            const auto t = montecarlo_tables(cfg);
            emit(t.summary, o.out);
            if (!o.out.empty() && o.out != "-")
            {
                const auto dot = o.out.rfind(".csv");
                emit(t.trials, (dot == std::string::npos ? o.out : o.out.substr(0, dot)) + ".trials.csv");
            }
            return finish(t.summary);
        }
        if (once->parsed())
        {
            const auto r = crb_once(cfg);
            std::cout << r.text;
            if (!o.out.empty())
                emit(r.table, o.out);
            return 0;
        }
    }
    catch (const std::exception& e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
