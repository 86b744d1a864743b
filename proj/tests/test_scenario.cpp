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

using namespace ofdmdpe;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace
{

BaseStation station_at(const Vec3& p, const Vec3& v = Vec3::Zero(), int paths = 1)
{
    BaseStation bs;
    bs.id = 1;
    bs.position = p;
    bs.velocity = v;
    bs.num_paths = paths;
    return bs;
}

UeState ue_at(const Vec3& p, const Vec3& v = Vec3::Zero(), double dt = 0.0)
{
    UeState u;
    u.position = p;
    u.velocity = v;
    u.clock_bias = dt;
    return u;
}

} // namespace

TEST_CASE("state vector flattens as position, velocity, clock", "[scenario]")
{
    const UeState u = ue_at(Vec3(1, 2, 3), Vec3(4, 5, 6), 7);
    const StateVector g = u.to_vector();
    for (int i = 0; i < 7; ++i)
        CHECK(g(i) == i + 1);
    const UeState back = UeState::from_vector(g);
    CHECK(back.position == u.position);
    CHECK(back.velocity == u.velocity);
    CHECK(back.clock_bias == u.clock_bias);
}

TEST_CASE("los_delay examples", "[scenario]")
{
    const auto bs = station_at(Vec3(300, 0, 0));
    CHECK(los_delay(ue_at(Vec3(300, 0, 0)), bs) == 0.0);
    CHECK(los_delay(ue_at(Vec3(300, 0, 0), Vec3::Zero(), 1e-6), bs) == 1e-6);
    CHECK_THAT(los_delay(ue_at(Vec3::Zero()), bs), WithinRel(1.000692285594456e-06, 1e-14));
}

TEST_CASE("los_doppler examples", "[scenario]")
{
    const auto bs = station_at(Vec3(100, 0, 0));
    CHECK(los_doppler(ue_at(Vec3::Zero()), bs, 3.5e9) == 0.0);
    CHECK_THAT(los_doppler(ue_at(Vec3::Zero(), Vec3(0, 4, -2)), bs, 3.5e9), WithinAbs(0.0, 1e-15));
    CHECK_THAT(los_doppler(ue_at(Vec3::Zero(), Vec3(3, 5, 0)), bs, 3.5e9), WithinRel(35.02422999580597, 1e-13));
    CHECK_THROWS_AS(los_doppler(ue_at(Vec3(100, 0, 0)), bs, 3.5e9), GeometryError);
}

TEST_CASE("path_delay_doppler composes LOS and NLOS offsets", "[scenario]")
{
    Scenario s;
    s.stations = {station_at(Vec3(300, 0, 0), Vec3::Zero(), 2)};
    s.ue = ue_at(Vec3::Zero(), Vec3(3, 5, 0));
    ChannelRealization ch;
    ch.coeff = {CMatrix::Ones(2, 1)};
    ch.delay_offset = {{100e-9}};
    ch.doppler_offset = {{-20.0}};
    const auto los = path_delay_doppler(s.ue, s.stations[0], ch, 0, 0, 3.5e9);
    CHECK(los.delay == los_delay(s.ue, s.stations[0]));
    CHECK(los.doppler == los_doppler(s.ue, s.stations[0], 3.5e9));
    const auto nlos = path_delay_doppler(s.ue, s.stations[0], ch, 0, 1, 3.5e9);
    CHECK_THAT(nlos.delay, WithinRel(1.100692285594456e-06, 1e-14));
    CHECK_THAT(nlos.doppler, WithinRel(15.024229995805968, 1e-13));
    CHECK_THROWS_AS(path_delay_doppler(s.ue, s.stations[0], ch, 0, 2, 3.5e9), std::out_of_range);
}

TEST_CASE("delay_jacobian structure and finite differences", "[scenario]")
{
    const auto j = delay_jacobian(ue_at(Vec3::Zero()), station_at(Vec3(250, 0, 0)));
    CHECK(j(3) == 0.0);
    CHECK(j(4) == 0.0);
    CHECK(j(5) == 0.0);
    CHECK(j(6) == 1.0);
    CHECK_THAT(j(0), WithinRel(-1.0 / speed_of_light, 1e-15));
    CHECK(j(1) == 0.0);
    CHECK(j(2) == 0.0);

    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1, 1);
    const StateVector step = (StateVector() << 1e-3, 1e-3, 1e-3, 1e-3, 1e-3, 1e-3, 1e-9).finished();
    for (int trial = 0; trial < 10; ++trial)
    {
        const Vec3 pb(300 * u(rng), 300 * u(rng), 30 + 10 * u(rng));
        const UeState ue = ue_at(Vec3(10 * u(rng), 10 * u(rng), u(rng)), Vec3(5 * u(rng), 5 * u(rng), 0), 1e-7 * u(rng));
        StateVector fd;
        for (int i = 0; i < 7; ++i)
        {
            StateVector a = ue.to_vector(), b = a;
            a(i) += step(i);
            b(i) -= step(i);
            fd(i) = (oracle::delay(a.head<3>(), a(6), pb) - oracle::delay(b.head<3>(), b(6), pb)) / (2 * step(i));
        }
        const StateVector an = delay_jacobian(ue, station_at(pb));
        CHECK((an - fd).norm() / fd.norm() < 1e-6);
    }
    CHECK_THROWS_AS(delay_jacobian(ue_at(Vec3(1, 2, 3)), station_at(Vec3(1, 2, 3))), GeometryError);
}

TEST_CASE("doppler_jacobian structure and finite differences", "[scenario]")
{
    const Vec3 v(3, 5, 0);
    const auto same = doppler_jacobian(ue_at(Vec3::Zero(), v), station_at(Vec3(100, 50, 25), v), 3.5e9);
    CHECK(same(6) == 0.0);
    CHECK(same.head<3>().norm() == 0.0);

    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(-1, 1);
    const StateVector step = (StateVector() << 1e-3, 1e-3, 1e-3, 1e-3, 1e-3, 1e-3, 1e-9).finished();
    for (int trial = 0; trial < 10; ++trial)
    {
        const Vec3 pb(300 * u(rng), 300 * u(rng), 30 + 10 * u(rng));
        const Vec3 vb(u(rng), u(rng), 0);
        const UeState ue = ue_at(Vec3(10 * u(rng), 10 * u(rng), u(rng)), Vec3(5 * u(rng), 5 * u(rng), 0), 1e-7 * u(rng));
        StateVector fd;
        for (int i = 0; i < 7; ++i)
        {
            StateVector a = ue.to_vector(), b = a;
            a(i) += step(i);
            b(i) -= step(i);
            fd(i) = (oracle::doppler(a.head<3>(), a.segment<3>(3), pb, vb, 3.5e9) -
                     oracle::doppler(b.head<3>(), b.segment<3>(3), pb, vb, 3.5e9)) /
                    (2 * step(i));
        }
        const StateVector an = doppler_jacobian(ue, station_at(pb, vb), 3.5e9);
        CHECK(an(6) == 0.0);
        CHECK((an - fd).norm() / fd.norm() < 1e-6);
    }
}

TEST_CASE("geometric invariances", "[scenario]")
{
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int trial = 0; trial < 10; ++trial)
    {
        const Vec3 pb(300 * u(rng), 300 * u(rng), 40 * u(rng));
        const UeState ue = ue_at(Vec3(10 * u(rng), 10 * u(rng), u(rng)), Vec3(5 * u(rng), 5 * u(rng), u(rng)), 1e-7 * u(rng));
        const Eigen::Matrix3d R =
            Eigen::AngleAxisd(3 * u(rng), Vec3(u(rng), u(rng), u(rng)).normalized()).toRotationMatrix();
        UeState rotated = ue;
        rotated.position = R * ue.position;
        CHECK_THAT(los_delay(rotated, station_at(R * pb)), WithinRel(los_delay(ue, station_at(pb)), 1e-12));

        UeState reversed = ue;
        reversed.velocity = -ue.velocity;
        CHECK_THAT(los_doppler(reversed, station_at(pb), 3.5e9),
                   WithinRel(-los_doppler(ue, station_at(pb), 3.5e9), 1e-12));
    }
}

TEST_CASE("draw_channel calibration and structure", "[scenario]")
{
    Scenario s;
    s.stations = ring_constellation(4, 500, {25, 100}, 3);
    s.channel.snr_db = 7.0;
    s.channel.smr_db = -3.0;
    s.seed = 99;
    const double B = 3.84e6;
    const auto ch = draw_channel(s, B, 4);
    const double sigma2 = noise_model(s).sigma2;
    for (int m = 0; m < 4; ++m)
    {
        REQUIRE(ch.delay_offset[m].size() == 2);
        for (int p = 0; p < 4; ++p)
        {
            CHECK_THAT(std::norm(ch.h(m, 0, p)) / sigma2, WithinRel(db_to_linear(7.0), 1e-12));
            for (int l = 1; l < 3; ++l)
                CHECK_THAT(std::norm(ch.h(m, l, p)) / std::norm(ch.h(m, 0, p)), WithinRel(1.9952623149688795, 1e-12));
        }
        for (int l = 0; l < 2; ++l)
        {
            CHECK(ch.delay_offset[m][l] > 0.0);
            CHECK(ch.delay_offset[m][l] >= 0.1 / B);
            CHECK(ch.delay_offset[m][l] <= 2.0 / B);
            CHECK(std::abs(ch.doppler_offset[m][l]) <= 50.0);
        }
    }

    const auto again = draw_channel(s, B, 4);
    for (int m = 0; m < 4; ++m)
    {
        CHECK(again.coeff[m] == ch.coeff[m]);
        CHECK(again.delay_offset[m] == ch.delay_offset[m]);
        CHECK(again.doppler_offset[m] == ch.doppler_offset[m]);
    }

    // Fewer symbols give a prefix of the same realization.
    const auto shorter = draw_channel(s, B, 2);
    for (int m = 0; m < 4; ++m)
        CHECK(shorter.coeff[m] == ch.coeff[m].leftCols(2));
}

TEST_CASE("draw_channel special cases", "[scenario]")
{
    Scenario s;
    s.stations = ring_constellation(4, 500, {25, 100}, 1);
    const auto ch = draw_channel(s, 3.84e6, 3);
    CHECK(s.num_nlos() == 0);
    for (int m = 0; m < 4; ++m)
    {
        CHECK(ch.delay_offset[m].empty());
        CHECK(ch.coeff[m].rows() == 1);
    }

    s.channel.phase_mode = PhaseMode::constant;
    const auto c2 = draw_channel(s, 3.84e6, 3);
    for (int m = 0; m < 4; ++m)
        CHECK(c2.coeff[m](0, 2) == c2.coeff[m](0, 0));

    s.channel.snr_db = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(draw_channel(s, 3.84e6, 3), ConfigError);
    s.channel.snr_db = 0;
    s.channel.smr_db = std::nan("");
    CHECK_THROWS_AS(draw_channel(s, 3.84e6, 3), ConfigError);
}

TEST_CASE("scenario validation", "[scenario]")
{
    Scenario s;
    s.stations = ring_constellation(4, 500, {25}, 1);
    CHECK_NOTHROW(s.validate());
    CHECK(s.stations[2].id == 3);
    s.stations[1].position = s.stations[0].position;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s.stations = ring_constellation(4, 500, {25}, 1);
    s.stations[0].num_paths = 0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    CHECK_THROWS_AS(ring_constellation(0, 500, {25}, 1), ConfigError);
}

TEST_CASE("noise model follows the SNR calibration", "[scenario]")
{
    Scenario s;
    s.stations = ring_constellation(4, 500, {25}, 1);
    s.channel.snr_db = 10;
    s.channel.los_power = 2.0;
    CHECK_THAT(noise_model(s).sigma2, WithinRel(0.2, 1e-14));
    s.channel.noise_sigma2 = 0.7;
    CHECK(noise_model(s).sigma2 == 0.7);
}
