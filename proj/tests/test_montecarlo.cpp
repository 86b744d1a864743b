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


#include "oracle.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>

using namespace ofdmdpe;
using Catch::Matchers::WithinRel;

namespace
{

Scenario tetra(double snr_db)
{
    Scenario s;
    const double a = 300.0;
    const Vec3 pos[4] = {{a, a, a}, {a, -a, -a}, {-a, a, -a}, {-a, -a, a}};
    for (int m = 0; m < 4; ++m)
    {
        BaseStation bs;
        bs.id = m + 1;
        bs.position = pos[m];
        bs.num_paths = 1;
        s.stations.push_back(bs);
    }
    s.ue.velocity = Vec3(3, 5, 0);
    s.channel.snr_db = snr_db;
    s.seed = 1;
    return s;
}

OfdmConfig short_config()
{
    OfdmConfig c;
    c.num_subcarriers = 16;
    c.dft_size = 16;
    c.num_symbols = 2;
    c.set_subcarrier_spacing(120e3);
    return c;
}

GridSpec small_grid()
{
    GridSpec g;
    g.position_half_extent = 1.0;
    g.position_step = 0.5;
    g.clock_half_extent = 2e-9;
    g.clock_step = 1e-9;
    return g;
}

Scenario default_ring(int L)
{
    Scenario s;
    s.stations = ring_constellation(4, 500, {25, 100}, L);
    s.ue.velocity = Vec3(3, 5, 0);
    s.seed = 1;
    return s;
}

OfdmConfig mid_config()
{
    OfdmConfig c;
    c.num_subcarriers = 64;
    c.dft_size = 128;
    c.num_symbols = 2;
    c.set_subcarrier_spacing(60e3);
    return c;
}

} // namespace

TEST_CASE("noiseless campaign on a grid node has zero error", "[montecarlo]")
{
    const auto rep = run_campaign(tetra(300.0), short_config(), small_grid(), 4, 9);
    CHECK(rep.num_trials == 4);
    CHECK(rep.num_failed == 0);
    CHECK(rep.rmse_3d == 0.0);
    CHECK(rep.rmse_clock == 0.0);
    CHECK(rep.bound_dpe_3d > 0.0);
    CHECK(rep.bound_twostep_3d >= rep.bound_dpe_3d);
    CHECK(rep.below_quantization_floor);
    CHECK_THAT(rep.quantization_floor, WithinRel(std::sqrt(3 * 0.25 / 12.0), 1e-15));
}

TEST_CASE("campaigns are deterministic and self-consistent", "[montecarlo]")
{
    const Scenario s = tetra(5.0);
    for (auto policy : {ChannelPolicy::fixed, ChannelPolicy::redraw})
    {
        CampaignOptions a{policy, 1}, b{policy, 3};
        const auto r1 = run_campaign(s, short_config(), small_grid(), 6, 42, a);
        const auto r2 = run_campaign(s, short_config(), small_grid(), 6, 42, b);
        CHECK(r1.rmse_3d == r2.rmse_3d);
        CHECK(r1.rmse_clock == r2.rmse_clock);
        CHECK(r1.bound_dpe_3d == r2.bound_dpe_3d);
        CHECK(r1.boundary_hits == r2.boundary_hits);
        REQUIRE(r1.trials.size() == 6);
        double se = 0.0, sc = 0.0;
        int n = 0;
        for (std::size_t t = 0; t < r1.trials.size(); ++t)
        {
            CHECK(r1.trials[t].estimate == r2.trials[t].estimate);
            CHECK(r1.trials[t].trial == int(t));
            if (!r1.trials[t].ok)
                continue;
            se += r1.trials[t].position_error.squaredNorm();
            sc += r1.trials[t].clock_error * r1.trials[t].clock_error;
            ++n;
        }
        CHECK_THAT(std::sqrt(se / n), WithinRel(r1.rmse_3d, 1e-12));
        CHECK_THAT(std::sqrt(sc / n), WithinRel(r1.rmse_clock, 1e-12));
        CHECK(r1.rmse_3d > 0.0);
    }
    const auto other = run_campaign(s, short_config(), small_grid(), 6, 1042);
    const auto base = run_campaign(s, short_config(), small_grid(), 6, 42);
    CHECK(other.rmse_3d != base.rmse_3d);
}

TEST_CASE("fixed-channel bounds match the direct computation", "[montecarlo]")
{
    const Scenario s = tetra(20.0);
    const OfdmConfig c = short_config();
    const auto rep = run_campaign(s, c, small_grid(), 1, 0);
    const auto b = bounds_at_scenario(s, c);
    CHECK(rep.bound_dpe_3d == b.dpe_3d());
    CHECK(rep.bound_twostep_3d == b.twostep_3d());
    CHECK_THAT(rep.bound_dpe_clock, WithinRel(std::sqrt(b.dpe.clock_variance()), 1e-15));
}

TEST_CASE("campaign aborts when most trials fail", "[montecarlo]")
{
    Scenario s = tetra(20.0);
    s.stations.pop_back(); // three stations leave the state unobservable
    CampaignOptions opt{ChannelPolicy::redraw, 1};
    try
    {
        run_campaign(s, short_config(), small_grid(), 3, 0, opt);
        FAIL("expected an abort");
    }
    catch (const Error& e)
    {
        CHECK(std::string(e.what()).find("3 of 3 trials failed") != std::string::npos);
    }
    CHECK_THROWS_AS(run_campaign(tetra(20.0), short_config(), small_grid(), 0, 0), ConfigError);
}

TEST_CASE("sweep axes", "[montecarlo]")
{
    CHECK(parse_sweep_axis("bandwidth") == SweepAxis::bandwidth);
    CHECK_THROWS_AS(parse_sweep_axis("carrier"), ConfigError);

    Scenario s = default_ring(1);
    OfdmConfig c = mid_config();
    apply_sweep_value(SweepAxis::bandwidth, 1.92e6, s, c);
    CHECK(c.num_subcarriers == 32);
    CHECK_THROWS_AS(apply_sweep_value(SweepAxis::bandwidth, 1e6, s, c), ConfigError);
    apply_sweep_value(SweepAxis::subcarrier_spacing, 30e3, s, c);
    CHECK(c.subcarrier_spacing == 30e3);
    apply_sweep_value(SweepAxis::num_paths, 3, s, c);
    CHECK(s.stations[2].num_paths == 3);
    s.channel.noise_sigma2 = 2.0;
    apply_sweep_value(SweepAxis::snr, 7, s, c);
    CHECK(s.channel.snr_db == 7.0);
    CHECK(s.channel.noise_sigma2 == 0.0);
}

TEST_CASE("SNR sweep bounds strictly decrease", "[montecarlo]")
{
    SweepSpec spec;
    spec.axis = SweepAxis::snr;
    for (int v = -10; v <= 20; v += 5)
        spec.values.push_back(v);
    const auto rec = run_sweep(default_ring(2), mid_config(), spec);
    REQUIRE(rec.size() == 7);
    for (std::size_t i = 0; i < rec.size(); ++i)
    {
        REQUIRE(rec[i].ok);
        CHECK(rec[i].bounds.dpe_3d() <= rec[i].bounds.twostep_3d());
        if (i > 0)
        {
            CHECK(rec[i].bounds.dpe_3d() < rec[i - 1].bounds.dpe_3d());
            // CRB is proportional to sigma2: 5 dB steps scale the RMSE by 10^(-1/4).
            CHECK_THAT(rec[i].bounds.dpe_3d() / rec[i - 1].bounds.dpe_3d(), WithinRel(std::pow(10.0, -0.25), 1e-12));
        }
    }
}

TEST_CASE("symbol and path sweeps", "[montecarlo]")
{
    SweepSpec p;
    p.axis = SweepAxis::num_symbols;
    p.values = {1, 2, 4, 8, 16};
    const auto rp = run_sweep(default_ring(2), mid_config(), p);
    for (std::size_t i = 1; i < rp.size(); ++i)
        CHECK(rp[i].bounds.dpe_3d() <= rp[i - 1].bounds.dpe_3d());

    SweepSpec l;
    l.axis = SweepAxis::num_paths;
    l.values = {1, 2, 4};
    const auto rl = run_sweep(default_ring(1), mid_config(), l);
    for (std::size_t i = 1; i < rl.size(); ++i)
    {
        REQUIRE(rl[i].ok);
        CHECK(rl[i].bounds.dpe_3d() > rl[0].bounds.dpe_3d());
    }

    SweepSpec bad;
    bad.axis = SweepAxis::num_symbols;
    bad.values = {2, 0.5};
    const auto rb = run_sweep(default_ring(1), mid_config(), bad);
    CHECK(rb[0].ok);
    CHECK_FALSE(rb[1].ok);
    CHECK(rb[1].error.find("num_symbols") != std::string::npos);
}

TEST_CASE("sweep with trials attaches a report per point", "[montecarlo]")
{
    SweepSpec spec;
    spec.axis = SweepAxis::snr;
    spec.values = {10, 20};
    spec.bounds_only = false;
    spec.num_trials = 2;
    spec.seed = 3;
    spec.grid = small_grid();
    const auto rec = run_sweep(tetra(0.0), short_config(), spec);
    for (const auto& r : rec)
    {
        REQUIRE(r.trials);
        CHECK(r.trials->num_trials == 2);
        CHECK(r.trials->bound_dpe_3d == r.bounds.dpe_3d());
    }
}
