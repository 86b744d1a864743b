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


#pragma once

#include "common.hpp"
#include "config.hpp"
#include "montecarlo.hpp"

#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

namespace ofdmdpe
{

inline std::string format_number(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

inline std::string format_number(long long v) { return std::to_string(v); }
inline std::string format_number(int v) { return std::to_string(v); }

struct CsvTable
{
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> errors; // one line per failed point

    bool ok() const { return errors.empty(); }

    void write(std::ostream& os) const
    {
        auto line = [&](const std::vector<std::string>& cells) {
            for (std::size_t i = 0; i < cells.size(); ++i)
                os << (i ? "," : "") << cells[i];
            os << '\n';
        };
        line(header);
        for (const auto& r : rows)
            line(r);
    }
};

namespace experiment_detail
{

inline void set_num_paths(Scenario& s, int L)
{
    for (auto& bs : s.stations)
        bs.num_paths = L;
}

} // namespace experiment_detail

// Bounds versus SNR for each L.
inline CsvTable fig_snr(const ExperimentConfig& c)
{
    CsvTable t{{"snr_db", "num_paths", "bound_dpe_3d_m", "bound_twostep_3d_m"}, {}, {}};
    for (int L : c.figures.snr_num_paths)
    {
        Scenario s = c.scenario;
        experiment_detail::set_num_paths(s, L);
        SweepSpec spec;
        spec.axis = SweepAxis::snr;
        spec.values = c.figures.snr_db;
        for (const auto& r : run_sweep(s, c.ofdm, spec))
        {
            if (!r.ok)
            {
                t.errors.push_back("snr_db=" + format_number(r.value) + " num_paths=" + std::to_string(L) + ": " +
                                   r.error);
                continue;
            }
            t.rows.push_back({format_number(r.value), std::to_string(L), format_number(r.bounds.dpe_3d()),
                              format_number(r.bounds.twostep_3d())});
        }
    }
    return t;
}

inline constexpr const char* family_fixed_spacing = "fixed_spacing";        // K varies
inline constexpr const char* family_fixed_subcarriers = "fixed_subcarriers"; // spacing varies

// Bounds versus B = K * spacing for the two families.
inline CsvTable fig_bandwidth(const ExperimentConfig& c)
{
    CsvTable t{{"bandwidth_hz", "family", "num_subcarriers", "subcarrier_spacing_hz", "bound_dpe_3d_m",
                "bound_twostep_3d_m"},
               {},
               {}};
    auto emit = [&](const char* family, const OfdmConfig& cfg, const SweepRecord& r) {
        if (!r.ok)
        {
            t.errors.push_back(std::string("family=") + family + " value " + format_number(r.value) + ": " + r.error);
            return;
        }
        t.rows.push_back({format_number(cfg.bandwidth()), family, std::to_string(cfg.num_subcarriers),
                          format_number(cfg.subcarrier_spacing), format_number(r.bounds.dpe_3d()),
                          format_number(r.bounds.twostep_3d())});
    };

    SweepSpec a;
    a.axis = SweepAxis::bandwidth;
    for (int K : c.figures.bandwidth_num_subcarriers)
        a.values.push_back(K * c.ofdm.subcarrier_spacing);
    const auto ra = run_sweep(c.scenario, c.ofdm, a);
    for (std::size_t i = 0; i < ra.size(); ++i)
    {
        OfdmConfig cfg = c.ofdm;
        cfg.num_subcarriers = c.figures.bandwidth_num_subcarriers[i];
        emit(family_fixed_spacing, cfg, ra[i]);
    }

    SweepSpec b;
    b.axis = SweepAxis::subcarrier_spacing;
    b.values = c.figures.bandwidth_subcarrier_spacing;
    const auto rb = run_sweep(c.scenario, c.ofdm, b);
    for (std::size_t i = 0; i < rb.size(); ++i)
    {
        OfdmConfig cfg = c.ofdm;
        cfg.set_subcarrier_spacing(b.values[i]);
        emit(family_fixed_subcarriers, cfg, rb[i]);
    }
    return t;
}

// Bounds versus the number of OFDM symbols for each L.
inline CsvTable fig_symbols(const ExperimentConfig& c)
{
    CsvTable t{{"num_symbols", "num_paths", "bound_dpe_3d_m", "bound_twostep_3d_m"}, {}, {}};
    for (int L : c.figures.symbols_num_paths)
    {
        Scenario s = c.scenario;
        experiment_detail::set_num_paths(s, L);
        SweepSpec spec;
        spec.axis = SweepAxis::num_symbols;
        for (int P : c.figures.symbols_num_symbols)
            spec.values.push_back(P);
        for (const auto& r : run_sweep(s, c.ofdm, spec))
        {
            if (!r.ok)
            {
                t.errors.push_back("num_symbols=" + format_number(r.value) + " num_paths=" + std::to_string(L) + ": " +
                                   r.error);
                continue;
            }
            t.rows.push_back({format_number(r.value), std::to_string(L), format_number(r.bounds.dpe_3d()),
                              format_number(r.bounds.twostep_3d())});
        }
    }
    return t;
}

inline const std::vector<std::string>& campaign_columns()
{
    static const std::vector<std::string> cols{"n_trials",       "n_failed",       "rmse_3d_m",
                                               "rmse_clock_s",   "bound_dpe_3d_m", "bound_twostep_3d_m",
                                               "bound_dpe_clock_s", "boundary_hits", "quantization_floor_m",
                                               "below_quantization_floor"};
    return cols;
}

inline std::vector<std::string> campaign_cells(const TrialReport& r)
{
    return {std::to_string(r.num_trials),      std::to_string(r.num_failed),
            format_number(r.rmse_3d),          format_number(r.rmse_clock),
            format_number(r.bound_dpe_3d),     format_number(r.bound_twostep_3d),
            format_number(r.bound_dpe_clock),  std::to_string(r.boundary_hits),
            format_number(r.quantization_floor), r.below_quantization_floor ? "1" : "0"};
}

// Free-form sweep over the axis named in the config.
inline CsvTable sweep_table(const ExperimentConfig& c)
{
    if (c.sweep_values.empty())
        throw ConfigError("sweep.values is empty");
    SweepSpec spec;
    spec.axis = c.sweep_axis;
    spec.values = c.sweep_values;
    spec.bounds_only = c.sweep_bounds_only;
    spec.num_trials = c.trials;
    spec.seed = c.montecarlo_seed;
    spec.grid = c.grid;
    spec.campaign = c.campaign;

    CsvTable t;
    t.header = {sweep_axis_column(spec.axis), "bound_dpe_3d_m", "bound_twostep_3d_m"};
    if (!spec.bounds_only)
        for (const auto& col : campaign_columns())
            if (col.rfind("bound_", 0) != 0)
                t.header.push_back(col);
    for (const auto& r : run_sweep(c.scenario, c.ofdm, spec))
    {
        if (!r.ok)
        {
            t.errors.push_back(std::string(sweep_axis_column(spec.axis)) + "=" + format_number(r.value) + ": " +
                               r.error);
            continue;
        }
        std::vector<std::string> row{format_number(r.value), format_number(r.bounds.dpe_3d()),
                                     format_number(r.bounds.twostep_3d())};
        if (r.trials)
        {
            const auto cells = campaign_cells(*r.trials);
            for (std::size_t i = 0; i < cells.size(); ++i)
                if (campaign_columns()[i].rfind("bound_", 0) != 0)
                    row.push_back(cells[i]);
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

struct CampaignTables
{
    CsvTable summary;
    CsvTable trials;
};

inline CampaignTables montecarlo_tables(const ExperimentConfig& c)
{
    const TrialReport r = run_campaign(c.scenario, c.ofdm, c.grid, c.trials, c.montecarlo_seed, c.campaign);
    CampaignTables out;
    out.summary.header = campaign_columns();
    out.summary.rows.push_back(campaign_cells(r));
    out.trials.header = {"trial", "ok", "err_x_m", "err_y_m", "err_z_m", "err_clock_s", "boundary_hit", "error"};
    for (const auto& tr : r.trials)
    {
        out.trials.rows.push_back({std::to_string(tr.trial), tr.ok ? "1" : "0", format_number(tr.position_error(0)),
                                   format_number(tr.position_error(1)), format_number(tr.position_error(2)),
                                   format_number(tr.clock_error), tr.boundary_hit ? "1" : "0",
                                   tr.ok ? "" : "\"" + tr.error + "\""});
        if (!tr.ok)
            out.summary.errors.push_back("trial " + std::to_string(tr.trial) + ": " + tr.error);
    }
    return out;
}

struct CrbReport
{
    PointBounds bounds;
    CsvTable table; // quantity,value
    std::string text;
};

inline CrbReport crb_once(const ExperimentConfig& c)
{
    CrbReport rep;
    rep.bounds = bounds_at_scenario(c.scenario, c.ofdm);
    const auto& b = rep.bounds;
    rep.table.header = {"quantity", "value"};
    auto add = [&](const std::string& k, double v) { rep.table.rows.push_back({k, format_number(v)}); };
    add("sigma2", b.sigma2);
    add("bound_dpe_3d_m", b.dpe_3d());
    add("bound_twostep_3d_m", b.twostep_3d());
    add("dpe_velocity_rmse_mps", std::sqrt(b.dpe.velocity_trace()));
    add("dpe_clock_std_s", std::sqrt(b.dpe.clock_variance()));
    add("twostep_clock_std_s", std::sqrt(b.twostep.clock_variance()));
    add("dpe_nuisance_condition", b.dpe.nuisance_condition);
    add("dpe_schur_condition", b.dpe.schur_condition);
    for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 7; ++j)
            add("crb_dpe_" + std::to_string(i) + std::to_string(j), b.dpe.crb(i, j));
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            add("crb_twostep_" + std::to_string(i) + std::to_string(j), b.twostep.crb(i, j));

    std::string s;
    auto value = [&](const std::string& k) {
        for (const auto& r : rep.table.rows)
            if (r[0] == k)
                return r[1];
        return std::string();
    };
    s += "noise variance          " + value("sigma2") + "\n";
    s += "DPE 3D position bound   " + value("bound_dpe_3d_m") + " m\n";
    s += "two-step 3D bound       " + value("bound_twostep_3d_m") + " m\n";
    s += "DPE velocity bound      " + value("dpe_velocity_rmse_mps") + " m/s\n";
    s += "DPE clock bound         " + value("dpe_clock_std_s") + " s\n";
    s += "two-step clock bound    " + value("twostep_clock_std_s") + " s\n";
    s += "nuisance condition      " + value("dpe_nuisance_condition") + "\n";
    s += "Schur condition         " + value("dpe_schur_condition") + "\n";
    s += "\nDPE CRB (7x7, order p_x p_y p_z v_x v_y v_z clock_bias)\n";
    for (int i = 0; i < 7; ++i)
    {
        for (int j = 0; j < 7; ++j)
            s += (j ? "  " : "") + value("crb_dpe_" + std::to_string(i) + std::to_string(j));
        s += "\n";
    }
    s += "\ntwo-step CRB (4x4, order p_x p_y p_z c*clock_bias; m^2)\n";
    for (int i = 0; i < 4; ++i)
    {
        for (int j = 0; j < 4; ++j)
            s += (j ? "  " : "") + value("crb_twostep_" + std::to_string(i) + std::to_string(j));
        s += "\n";
    }
    rep.text = std::move(s);
    return rep;
}

} // namespace ofdmdpe
