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
#include "dpe.hpp"
#include "fim.hpp"
#include "ofdm.hpp"
#include "scenario.hpp"
#include "twostep.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ofdmdpe
{

struct PointBounds
{
    double sigma2 = 1.0;
    DpeBound dpe;
    TwoStepBound twostep;

    double dpe_3d() const { return dpe.position_rmse(); }
    double twostep_3d() const { return twostep.position_rmse(); }
};

// Bounds at unit noise; at() scales them, so sweeps over SNR reuse one
// factorization and stay exactly linear in sigma2.
struct UnitBounds
{
    DpeBound dpe;
    TwoStepBound twostep;

    PointBounds at(double sigma2) const
    {
        PointBounds b{sigma2, dpe, twostep};
        b.dpe.crb *= sigma2;
        b.twostep.crb *= sigma2;
        return b;
    }
};

inline UnitBounds unit_bounds(const Scenario& s, const ChannelRealization& ch, const OfdmConfig& cfg,
                              const PilotBook& pilots)
{
    const DerivativeBundle d = build_derivatives(s, ch, cfg, pilots);
    return {crb_dpe(assemble_fim(d, 1.0)), crb_twostep(s, ranging_fim(d, 1.0))};
}

inline UnitBounds unit_bounds(const Scenario& s, const OfdmConfig& cfg)
{
    s.validate();
    cfg.validate();
    const auto ch = draw_channel(s, cfg.bandwidth(), cfg.num_symbols);
    return unit_bounds(s, ch, cfg, make_pilot_book(s, cfg));
}

inline PointBounds bounds_at_scenario(const Scenario& s, const OfdmConfig& cfg)
{
    return unit_bounds(s, cfg).at(noise_model(s).sigma2);
}

// ---------------------------------------------------------------------------
// Monte Carlo campaigns

enum class ChannelPolicy
{
    fixed,  // one realization drawn from the scenario seed
    redraw  // a fresh realization per trial
};

struct CampaignOptions
{
    ChannelPolicy channel_policy = ChannelPolicy::fixed;
    int threads = 0;
};

struct TrialOutcome
{
    int trial = 0;
    bool ok = false;
    std::string error;
    StateVector estimate = StateVector::Zero();
    Vec3 position_error = Vec3::Zero();
    double clock_error = 0.0;
    bool boundary_hit = false;
    std::size_t rank_deficient_points = 0;
};

struct TrialReport
{
    int num_trials = 0;
    int num_failed = 0;
    double rmse_3d = 0.0;            // m
    double rmse_clock = 0.0;         // s
    double bound_dpe_3d = 0.0;       // m, from the mean per-realization CRB trace
    double bound_twostep_3d = 0.0;   // m
    double bound_dpe_clock = 0.0;    // s
    int boundary_hits = 0;
    double quantization_floor = 0.0; // m, RMS of a uniform grid error on the active position axes
    bool below_quantization_floor = false;
    std::vector<TrialOutcome> trials;
};

inline std::uint64_t trial_channel_seed(std::uint64_t base, int trial)
{
    std::uint64_t z = base + 0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(trial + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Trial t uses noise seed (seed ^ t). Failed trials are recorded; more than
// half failing aborts the campaign.
inline TrialReport run_campaign(const Scenario& s, const OfdmConfig& cfg, const GridSpec& grid_spec, int num_trials,
                                std::uint64_t seed, const CampaignOptions& opt = {})
{
    if (num_trials < 1)
        throw ConfigError("num_trials must be >= 1");
    s.validate();
    cfg.validate();

    const PilotBook pilots = make_pilot_book(s, cfg);
    const double sigma2 = noise_model(s).sigma2;
    const SearchGrid grid = make_grid(grid_spec, s.ue);
    const StateVector truth = s.ue.to_vector();

    TrialReport rep;
    rep.num_trials = num_trials;
    double floor2 = 0.0;
    for (int a = 0; a < 3; ++a)
        if (grid.active(state_index::position + a))
            floor2 += grid.step(state_index::position + a) * grid.step(state_index::position + a) / 12.0;
    rep.quantization_floor = std::sqrt(floor2);

    std::optional<ChannelRealization> fixed;
    std::optional<PointBounds> fixed_bounds;
    if (opt.channel_policy == ChannelPolicy::fixed)
    {
        fixed = draw_channel(s, cfg.bandwidth(), cfg.num_symbols);
        fixed_bounds = unit_bounds(s, *fixed, cfg, pilots).at(sigma2);
    }

    double se_pos = 0.0, se_clk = 0.0, tr_dpe = 0.0, tr_two = 0.0, var_clk = 0.0;
    int n_bounds = 0;
    for (int t = 0; t < num_trials; ++t)
    {
        TrialOutcome out;
        out.trial = t;
        try
        {
            Scenario st = s;
            ChannelRealization ch;
            PointBounds b;
            if (fixed)
            {
                ch = *fixed;
                b = *fixed_bounds;
            }
            else
            {
                st.seed = trial_channel_seed(s.seed, t);
                ch = draw_channel(st, cfg.bandwidth(), cfg.num_symbols);
                b = unit_bounds(st, ch, cfg, pilots).at(sigma2);
            }
            tr_dpe += b.dpe.position_trace();
            tr_two += b.twostep.position_trace();
            var_clk += b.dpe.clock_variance();
            ++n_bounds;

            const NoiseModel noise{sigma2, seed ^ static_cast<std::uint64_t>(t)};
            const CVector y = synthesize_received(st, ch, cfg, pilots, noise);
            const ThetaCandidate theta =
                grid_spec.nlos_mode == NlosMode::oracle_theta ? ThetaCandidate::from(ch) : ThetaCandidate::none();
            GridSearchOptions gopt;
            gopt.threads = opt.threads;
            auto res = grid_search(y, grid, st, cfg, pilots, theta, gopt);
            out.estimate = res.estimate;
            out.boundary_hit = res.surface.boundary_hit;
            if (grid_spec.refine)
            {
                const auto r = refine(res.surface, grid);
                out.estimate = r.estimate;
                out.boundary_hit = r.boundary_hit;
            }
            out.rank_deficient_points = res.surface.rank_deficient_points;
            out.position_error = out.estimate.segment<3>(state_index::position) - truth.segment<3>(state_index::position);
            out.clock_error = out.estimate(state_index::clock) - truth(state_index::clock);
            out.ok = true;
        }
        catch (const std::exception& e)
        {
            out.error = e.what();
        }
        if (out.ok)
        {
            se_pos += out.position_error.squaredNorm();
            se_clk += out.clock_error * out.clock_error;
            rep.boundary_hits += out.boundary_hit ? 1 : 0;
        }
        else
            ++rep.num_failed;
        rep.trials.push_back(std::move(out));
    }

    if (2 * rep.num_failed > num_trials)
        throw Error("Monte Carlo campaign aborted: " + std::to_string(rep.num_failed) + " of " +
                    std::to_string(num_trials) + " trials failed; first error: " + rep.trials.front().error);
    const int n_ok = num_trials - rep.num_failed;
    rep.rmse_3d = std::sqrt(se_pos / n_ok);
    rep.rmse_clock = std::sqrt(se_clk / n_ok);
    if (n_bounds > 0)
    {
        rep.bound_dpe_3d = std::sqrt(tr_dpe / n_bounds);
        rep.bound_twostep_3d = std::sqrt(tr_two / n_bounds);
        rep.bound_dpe_clock = std::sqrt(var_clk / n_bounds);
    }
    rep.below_quantization_floor = rep.rmse_3d < rep.quantization_floor;
    return rep;
}

// ---------------------------------------------------------------------------
// Parameter sweeps

enum class SweepAxis
{
    snr,                // dB
    num_paths,          // L applied to every BS
    bandwidth,          // Hz, changes K at fixed spacing
    subcarrier_spacing, // Hz, at fixed K
    num_symbols         // P
};

inline SweepAxis parse_sweep_axis(const std::string& name)
{
    if (name == "snr")
        return SweepAxis::snr;
    if (name == "num_paths")
        return SweepAxis::num_paths;
    if (name == "bandwidth")
        return SweepAxis::bandwidth;
    if (name == "subcarrier_spacing")
        return SweepAxis::subcarrier_spacing;
    if (name == "num_symbols")
        return SweepAxis::num_symbols;
    throw ConfigError("unknown sweep axis '" + name +
                      "' (expected snr, num_paths, bandwidth, subcarrier_spacing or num_symbols)");
}

inline const char* sweep_axis_column(SweepAxis a)
{
    switch (a)
    {
    case SweepAxis::snr: return "snr_db";
    case SweepAxis::num_paths: return "num_paths";
    case SweepAxis::bandwidth: return "bandwidth_hz";
    case SweepAxis::subcarrier_spacing: return "subcarrier_spacing_hz";
    case SweepAxis::num_symbols: return "num_symbols";
    }
    return "value";
}

inline int integral_value(double v, const char* what)
{
    const double r = std::round(v);
    if (std::abs(v - r) > 1e-9 * std::max(1.0, std::abs(v)) || r < 1.0)
        throw ConfigError(std::string(what) + " must be a positive integer, got " + std::to_string(v));
    return static_cast<int>(r);
}

inline void apply_sweep_value(SweepAxis axis, double v, Scenario& s, OfdmConfig& cfg)
{
    switch (axis)
    {
    case SweepAxis::snr:
        s.channel.snr_db = v;
        s.channel.noise_sigma2 = 0.0;
        break;
    case SweepAxis::num_paths:
        for (auto& bs : s.stations)
            bs.num_paths = integral_value(v, "num_paths");
        break;
    case SweepAxis::bandwidth:
        cfg.num_subcarriers = integral_value(v / cfg.subcarrier_spacing, "bandwidth / subcarrier_spacing");
        break;
    case SweepAxis::subcarrier_spacing:
        if (!(v > 0.0))
            throw ConfigError("subcarrier_spacing must be positive");
        cfg.set_subcarrier_spacing(v);
        break;
    case SweepAxis::num_symbols:
        cfg.num_symbols = integral_value(v, "num_symbols");
        break;
    }
}

struct SweepSpec
{
    SweepAxis axis = SweepAxis::snr;
    std::vector<double> values;
    bool bounds_only = true;
    int num_trials = 0;
    std::uint64_t seed = 0;
    GridSpec grid;
    CampaignOptions campaign;
};

struct SweepRecord
{
    double value = 0.0;
    bool ok = false;
    std::string error;
    PointBounds bounds;
    std::optional<TrialReport> trials;
};

// Evaluates each value independently; a failing point is recorded and the
// sweep continues.
inline std::vector<SweepRecord> run_sweep(const Scenario& base, const OfdmConfig& base_cfg, const SweepSpec& spec)
{
    std::vector<SweepRecord> out;
    std::optional<UnitBounds> snr_cache;
    for (double v : spec.values)
    {
        SweepRecord rec;
        rec.value = v;
        try
        {
            Scenario s = base;
            OfdmConfig cfg = base_cfg;
            apply_sweep_value(spec.axis, v, s, cfg);
            s.validate();
            cfg.validate();
            if (spec.axis == SweepAxis::snr)
            {
                if (!snr_cache)
                    snr_cache = unit_bounds(s, cfg);
                rec.bounds = snr_cache->at(noise_model(s).sigma2);
            }
            else
                rec.bounds = bounds_at_scenario(s, cfg);
            if (!spec.bounds_only)
                rec.trials = run_campaign(s, cfg, spec.grid, spec.num_trials, spec.seed, spec.campaign);
            rec.ok = true;
        }
        catch (const std::exception& e)
        {
            rec.error = e.what();
        }
        out.push_back(std::move(rec));
    }
    return out;
}

} // namespace ofdmdpe
