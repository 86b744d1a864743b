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

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace ofdmdpe
{

struct UeState
{
    Vec3 position = Vec3::Zero();   // m
    Vec3 velocity = Vec3::Zero();   // m/s
    double clock_bias = 0.0;        // s, may be negative

    StateVector to_vector() const
    {
        StateVector g;
        g << position, velocity, clock_bias;
        return g;
    }

    static UeState from_vector(const StateVector& g)
    {
        return {g.segment<3>(state_index::position), g.segment<3>(state_index::velocity), g(state_index::clock)};
    }
};

struct BaseStation
{
    int id = 0;
    Vec3 position = Vec3::Zero();
    Vec3 velocity = Vec3::Zero();
    int num_paths = 1; // path 0 is always LOS
};

enum class PhaseMode
{
    per_symbol, // magnitudes fixed, phases i.i.d. per OFDM symbol
    constant    // one phase per path for the whole frame
};

struct ChannelStats
{
    double snr_db = 0.0;                 // per-sample LOS SNR, |h_LOS|^2 / sigma^2
    double smr_db = -3.0;                // |h_LOS|^2 / |h_NLOS|^2, same for every NLOS path
    double los_power = 1.0;              // |h_LOS|^2
    double nlos_delay_min_chips = 0.1;   // NLOS excess delay range, in units of 1/B
    double nlos_delay_max_chips = 2.0;
    double nlos_doppler_max_hz = 50.0;   // NLOS Doppler offsets uniform in [-max, max]
    PhaseMode phase_mode = PhaseMode::per_symbol;
    double noise_sigma2 = 0.0;           // > 0 replaces the SNR-derived noise variance
};

struct Scenario
{
    std::vector<BaseStation> stations;
    UeState ue;
    ChannelStats channel;
    std::uint64_t seed = 1;

    int num_stations() const { return static_cast<int>(stations.size()); }

    int num_replicas() const
    {
        int q = 0;
        for (const auto& bs : stations)
            q += bs.num_paths;
        return q;
    }

    int num_nlos() const { return num_replicas() - num_stations(); }

    void validate() const
    {
        if (stations.empty())
            throw ConfigError("scenario has no base stations");
        for (std::size_t i = 0; i < stations.size(); ++i)
        {
            const auto& bs = stations[i];
            if (bs.num_paths < 1)
                throw ConfigError("base station " + std::to_string(bs.id) + ": num_paths must be >= 1");
            if (!bs.position.allFinite() || !bs.velocity.allFinite())
                throw ConfigError("base station " + std::to_string(bs.id) + ": non-finite position or velocity");
            for (std::size_t k = 0; k < i; ++k)
                if (stations[k].position == bs.position)
                    throw ConfigError("base stations " + std::to_string(stations[k].id) + " and " +
                                      std::to_string(bs.id) + " share a position");
        }
        if (!ue.position.allFinite() || !ue.velocity.allFinite() || !std::isfinite(ue.clock_bias))
            throw ConfigError("UE state has non-finite entries");
        if (!std::isfinite(channel.snr_db) || !std::isfinite(channel.smr_db))
            throw ConfigError("SNR and SMR must be finite");
        if (!(channel.los_power > 0.0))
            throw ConfigError("channel.los_power must be positive");
        if (!(channel.nlos_delay_min_chips > 0.0) || channel.nlos_delay_max_chips < channel.nlos_delay_min_chips)
            throw ConfigError("NLOS delay range must satisfy 0 < min <= max");
        if (!(channel.noise_sigma2 >= 0.0) || !std::isfinite(channel.noise_sigma2))
            throw ConfigError("channel.noise_sigma2 must be finite and >= 0");
        if (channel.nlos_doppler_max_hz < 0.0)
            throw ConfigError("channel.nlos_doppler_max_hz must be >= 0");
    }
};

// M stations evenly spaced on a horizontal circle around the origin.
// Heights are cycled, so alternating values break the height/clock
// degeneracy a flat ring has for a UE at its centre.
inline std::vector<BaseStation> ring_constellation(int count, double radius, const std::vector<double>& heights,
                                                   int num_paths)
{
    if (count < 1 || heights.empty())
        throw ConfigError("ring constellation needs count >= 1 and at least one height");
    std::vector<BaseStation> out;
    out.reserve(count);
    for (int m = 0; m < count; ++m)
    {
        const double a = two_pi * m / count;
        BaseStation bs;
        bs.id = m + 1;
        bs.position = Vec3(radius * std::cos(a), radius * std::sin(a), heights[m % heights.size()]);
        bs.num_paths = num_paths;
        out.push_back(bs);
    }
    return out;
}

// Replica bookkeeping. Two orderings are in use:
//  - basis order (columns of S, entries of h_p): BS-major, path-minor;
//  - derivative order (blocks of Psi, H_gamma/H_theta): the M LOS replicas
//    first, then the NLOS replicas grouped per BS.
struct ReplicaLayout
{
    std::vector<int> paths;   // L_m
    std::vector<int> offset;  // first basis column of BS m

    explicit ReplicaLayout(const std::vector<BaseStation>& stations)
    {
        int q = 0;
        for (const auto& bs : stations)
        {
            paths.push_back(bs.num_paths);
            offset.push_back(q);
            q += bs.num_paths;
        }
    }

    int num_stations() const { return static_cast<int>(paths.size()); }
    int num_replicas() const { return offset.empty() ? 0 : offset.back() + paths.back(); }
    int num_nlos() const { return num_replicas() - num_stations(); }

    int basis_index(int m, int l) const { return offset[m] + l; }

    // Position of NLOS replica (m, l >= 1) among the NLOS replicas.
    int nlos_index(int m, int l) const { return offset[m] - m + (l - 1); }
};

inline void require_distinct(const UeState& ue, const BaseStation& bs)
{
    if ((bs.position - ue.position).norm() == 0.0)
        throw GeometryError("UE coincides with base station " + std::to_string(bs.id));
}

// Unit vector from the UE towards the BS.
inline Vec3 los_direction(const UeState& ue, const BaseStation& bs)
{
    require_distinct(ue, bs);
    const Vec3 d = bs.position - ue.position;
    return d / d.norm();
}

inline double los_delay(const UeState& ue, const BaseStation& bs)
{
    return (bs.position - ue.position).norm() / speed_of_light + ue.clock_bias;
}

// Doppler of the LOS path. Relative velocity (v - v_bs) projected on the
// UE->BS direction; reduces to v^T g fc/c for a static BS.
inline double los_doppler(const UeState& ue, const BaseStation& bs, double carrier_hz)
{
    const Vec3 g = los_direction(ue, bs);
    return (ue.velocity - bs.velocity).dot(g) * carrier_hz / speed_of_light;
}

inline StateVector delay_jacobian(const UeState& ue, const BaseStation& bs)
{
    const Vec3 g = los_direction(ue, bs);
    StateVector row = StateVector::Zero();
    row.segment<3>(state_index::position) = -g / speed_of_light;
    row(state_index::clock) = 1.0;
    return row;
}

inline StateVector doppler_jacobian(const UeState& ue, const BaseStation& bs, double carrier_hz)
{
    const Vec3 d = bs.position - ue.position;
    require_distinct(ue, bs);
    const double r = d.norm();
    const Vec3 g = d / r;
    const double k = carrier_hz / speed_of_light;
    const Eigen::Matrix3d projector = Eigen::Matrix3d::Identity() - g * g.transpose();
    StateVector row = StateVector::Zero();
    row.segment<3>(state_index::position) = (projector * (bs.velocity - ue.velocity)) * (k / r);
    row.segment<3>(state_index::velocity) = g * k;
    return row;
}

struct ChannelRealization
{
    // coeff[m] is L_m x P: h_{l,p} for BS m.
    std::vector<CMatrix> coeff;
    // delay_offset[m][l-1], doppler_offset[m][l-1] for NLOS paths l >= 1.
    std::vector<std::vector<double>> delay_offset;
    std::vector<std::vector<double>> doppler_offset;

    int num_symbols() const { return coeff.empty() ? 0 : static_cast<int>(coeff.front().cols()); }

    cplx h(int m, int l, int p) const { return coeff[m](l, p); }

    // Per-symbol coefficient vector in basis order.
    CVector symbol_coefficients(int p) const
    {
        Eigen::Index q = 0;
        for (const auto& c : coeff)
            q += c.rows();
        CVector out(q);
        q = 0;
        for (const auto& c : coeff)
        {
            out.segment(q, c.rows()) = c.col(p);
            q += c.rows();
        }
        return out;
    }

    // theta flattened per BS as [dtau_1..dtau_{L-1}, df_1..df_{L-1}].
    RVector theta() const
    {
        std::vector<double> v;
        for (std::size_t m = 0; m < delay_offset.size(); ++m)
        {
            v.insert(v.end(), delay_offset[m].begin(), delay_offset[m].end());
            v.insert(v.end(), doppler_offset[m].begin(), doppler_offset[m].end());
        }
        return Eigen::Map<const RVector>(v.data(), static_cast<Eigen::Index>(v.size()));
    }

    // Same realization with the first `p` symbols only.
    ChannelRealization truncated(int p) const
    {
        ChannelRealization out = *this;
        for (auto& c : out.coeff)
            c = c.leftCols(p).eval();
        return out;
    }
};

struct NoiseModel
{
    double sigma2 = 1.0;      // per complex sample
    std::uint64_t seed = 0;
};

inline NoiseModel noise_model(const Scenario& s, std::uint64_t seed = 0)
{
    if (s.channel.noise_sigma2 > 0.0)
        return {s.channel.noise_sigma2, seed};
    const double snr = db_to_linear(s.channel.snr_db);
    if (!std::isfinite(snr) || snr <= 0.0)
        throw ConfigError("SNR is not finite");
    return {s.channel.los_power / snr, seed};
}

// Independent generator per (purpose, indices) so that sub-streams do not
// shift when unrelated dimensions (P, other BSs) change.
inline std::mt19937_64 substream(std::uint64_t seed, std::uint32_t tag, std::uint32_t a = 0, std::uint32_t b = 0)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), tag, a, b};
    return std::mt19937_64(seq);
}

namespace stream_tag
{
inline constexpr std::uint32_t channel = 0xC4A11E1u;
inline constexpr std::uint32_t pilots = 0x9170751u;
inline constexpr std::uint32_t noise = 0x7015E00u;
} // namespace stream_tag

// Draws LOS/NLOS coefficients and NLOS offsets. Magnitudes follow the SNR /
// SMR calibration exactly; only phases and offsets are random. Per path,
// draws happen in the order (delay, doppler, phase_0, phase_1, ...), so a
// realization with P symbols is a prefix of one with more symbols.
inline ChannelRealization draw_channel(const Scenario& s, double bandwidth_hz, int num_symbols)
{
    const auto& st = s.channel;
    if (!std::isfinite(st.snr_db) || !std::isfinite(st.smr_db))
        throw ConfigError("SNR and SMR must be finite");
    if (num_symbols < 1)
        throw ConfigError("num_symbols must be >= 1");
    if (!(bandwidth_hz > 0.0))
        throw ConfigError("bandwidth must be positive");

    const double los_amp = std::sqrt(st.los_power);
    const double nlos_amp = std::sqrt(st.los_power / db_to_linear(st.smr_db));

    ChannelRealization ch;
    for (int m = 0; m < s.num_stations(); ++m)
    {
        const int L = s.stations[m].num_paths;
        CMatrix c(L, num_symbols);
        std::vector<double> dtau, dfreq;
        for (int l = 0; l < L; ++l)
        {
            auto rng = substream(s.seed, stream_tag::channel, static_cast<std::uint32_t>(m), static_cast<std::uint32_t>(l));
            std::uniform_real_distribution<double> unit(0.0, 1.0);
            if (l > 0)
            {
                const double u = unit(rng);
                const double chips = st.nlos_delay_min_chips + u * (st.nlos_delay_max_chips - st.nlos_delay_min_chips);
                dtau.push_back(chips / bandwidth_hz);
                dfreq.push_back((2.0 * unit(rng) - 1.0) * st.nlos_doppler_max_hz);
            }
            const double amp = (l == 0) ? los_amp : nlos_amp;
            double phase = two_pi * unit(rng);
            for (int p = 0; p < num_symbols; ++p)
            {
                if (p > 0 && st.phase_mode == PhaseMode::per_symbol)
                    phase = two_pi * unit(rng);
                c(l, p) = std::polar(amp, phase);
            }
        }
        ch.coeff.push_back(std::move(c));
        ch.delay_offset.push_back(std::move(dtau));
        ch.doppler_offset.push_back(std::move(dfreq));
    }
    return ch;
}

struct PathObservables
{
    double delay;   // s
    double doppler; // Hz
};

inline PathObservables path_delay_doppler(const UeState& ue, const BaseStation& bs, const ChannelRealization& ch,
                                          int m, int l, double carrier_hz)
{
    if (l < 0 || l >= bs.num_paths)
        throw std::out_of_range("path index " + std::to_string(l) + " out of range for base station " +
                                std::to_string(bs.id));
    PathObservables o{los_delay(ue, bs), los_doppler(ue, bs, carrier_hz)};
    if (l > 0)
    {
        o.delay += ch.delay_offset.at(m).at(l - 1);
        o.doppler += ch.doppler_offset.at(m).at(l - 1);
    }
    return o;
}

} // namespace ofdmdpe
