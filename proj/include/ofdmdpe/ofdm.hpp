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
#include "scenario.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <utility>
#include <vector>

namespace ofdmdpe
{

struct OfdmConfig
{
    int num_subcarriers = 128;                     // K
    int dft_size = 2048;                           // N, N >= K
    int num_symbols = 4;                           // P
    double subcarrier_spacing = 30e3;              // Hz
    double cyclic_prefix = 144.0 / 2048.0 / 30e3;  // s (5G NR normal CP ratio)
    double carrier = 3.5e9;                        // Hz

    double symbol_duration() const { return 1.0 / subcarrier_spacing; }
    double bandwidth() const { return num_subcarriers * subcarrier_spacing; }
    double sample_rate() const { return dft_size * subcarrier_spacing; }
    double total_symbol_duration() const { return symbol_duration() + cyclic_prefix; }
    double cyclic_prefix_ratio() const { return cyclic_prefix * subcarrier_spacing; }

    // Changes the spacing while keeping T_cp a fixed fraction of T_s.
    void set_subcarrier_spacing(double df)
    {
        const double ratio = cyclic_prefix_ratio();
        subcarrier_spacing = df;
        cyclic_prefix = ratio / df;
    }

    // Sampling instant of sample n relative to the symbol start, n/D + T_cp.
    double sample_time(int n) const { return n / sample_rate() + cyclic_prefix; }

    void validate() const
    {
        if (num_subcarriers < 1)
            throw ConfigError("num_subcarriers must be >= 1");
        if (dft_size < num_subcarriers)
            throw ConfigError("dft_size must be >= num_subcarriers");
        if (num_symbols < 1)
            throw ConfigError("num_symbols must be >= 1");
        if (!(subcarrier_spacing > 0.0) || !std::isfinite(subcarrier_spacing))
            throw ConfigError("subcarrier_spacing must be positive");
        if (!(cyclic_prefix >= 0.0))
            throw ConfigError("cyclic prefix must be >= 0");
        if (!(carrier > 0.0))
            throw ConfigError("carrier must be positive");
    }
};

// Unit-modulus QPSK pilots, one length-K vector per BS, reused on every symbol.
struct PilotBook
{
    std::vector<CVector> symbols;

    const CVector& operator[](int m) const { return symbols[m]; }
    int num_stations() const { return static_cast<int>(symbols.size()); }
};

inline PilotBook make_pilot_book(int num_stations, int num_subcarriers, std::uint64_t seed)
{
    PilotBook book;
    const double a = std::sqrt(0.5);
    for (int m = 0; m < num_stations; ++m)
    {
        auto rng = substream(seed, stream_tag::pilots, static_cast<std::uint32_t>(m));
        CVector d(num_subcarriers);
        for (int k = 0; k < num_subcarriers; ++k)
        {
            const auto bits = rng();
            d(k) = cplx((bits & 1u) ? a : -a, (bits & 2u) ? a : -a);
        }
        book.symbols.push_back(std::move(d));
    }
    return book;
}

inline PilotBook make_pilot_book(const Scenario& s, const OfdmConfig& cfg)
{
    return make_pilot_book(s.num_stations(), cfg.num_subcarriers, s.seed);
}

// e^{j 2 pi x} with the integer part of x removed first.
inline cplx unit_phasor(double cycles)
{
    cycles -= std::floor(cycles);
    return std::polar(1.0, two_pi * cycles);
}

// Oversampled N-point DFT matrix F_N (K x N), entry (u,v) = e^{-j2pi uv/N}/sqrt(K).
inline CMatrix dft_matrix(int K, int N)
{
    if (K < 1 || N < K)
        throw ConfigError("dft_matrix requires N >= K >= 1");
    CMatrix F(K, N);
    const double scale = 1.0 / std::sqrt(static_cast<double>(K));
    for (int u = 0; u < K; ++u)
        for (int v = 0; v < N; ++v)
        {
            const long long r = (static_cast<long long>(u) * v) % N;
            F(u, v) = scale * unit_phasor(-static_cast<double>(r) / N);
        }
    return F;
}

using CDiagonal = Eigen::DiagonalMatrix<cplx, Eigen::Dynamic>;

// Upsilon_q: diag e^{j2pi f (n/D + T_cp)}, n = 0..N-1.
inline CDiagonal doppler_matrix(double doppler, const OfdmConfig& cfg)
{
    CVector d(cfg.dft_size);
    for (int n = 0; n < cfg.dft_size; ++n)
        d(n) = unit_phasor(doppler * cfg.sample_time(n));
    return CDiagonal(d);
}

// Gamma_q: diag e^{-j2pi k df tau}, k = 0..K-1.
inline CDiagonal delay_matrix(double delay, const OfdmConfig& cfg)
{
    CVector d(cfg.num_subcarriers);
    for (int k = 0; k < cfg.num_subcarriers; ++k)
        d(k) = unit_phasor(-k * cfg.subcarrier_spacing * delay);
    return CDiagonal(d);
}

// Theta_q = Upsilon_q F_N^H Gamma_q  (N x K).
inline CMatrix transform_block(double delay, double doppler, const OfdmConfig& cfg)
{
    const CMatrix FH = dft_matrix(cfg.num_subcarriers, cfg.dft_size).adjoint();
    return doppler_matrix(doppler, cfg) * FH * delay_matrix(delay, cfg);
}

// Delay/Doppler of one signal replica plus the BS it belongs to.
struct Replica
{
    int bs = 0;
    int path = 0;
    double delay = 0.0;
    double doppler = 0.0;
};

// All replicas of a scenario in basis order (BS-major, path-minor).
inline std::vector<Replica> replica_parameters(const Scenario& s, const ChannelRealization& ch, const OfdmConfig& cfg)
{
    std::vector<Replica> out;
    out.reserve(s.num_replicas());
    for (int m = 0; m < s.num_stations(); ++m)
        for (int l = 0; l < s.stations[m].num_paths; ++l)
        {
            const auto o = path_delay_doppler(s.ue, s.stations[m], ch, m, l, cfg.carrier);
            out.push_back({m, l, o.delay, o.doppler});
        }
    return out;
}

// FFT evaluation of Theta_q d and its delay/Doppler derivatives. Produces the
// same vectors as the explicit matrix products in O(N log N).
class ReplicaSynthesizer
{
  public:
    explicit ReplicaSynthesizer(const OfdmConfig& cfg)
        : cfg_(cfg), spectrum_(cfg.dft_size), time_(cfg.dft_size)
    {
        fft_.SetFlag(Eigen::FFT<double>::Unscaled);
    }

    // Theta_q d.
    CVector waveform(double delay, double doppler, const CVector& d)
    {
        CVector out(cfg_.dft_size);
        waveform_into(delay, doppler, d, out);
        return out;
    }

    template <class Out>
    void waveform_into(double delay, double doppler, const CVector& d, Out&& out)
    {
        fill_spectrum(delay, d, false);
        fft_.inv(time_, spectrum_);
        apply_doppler(doppler, out);
    }

    struct Derivatives
    {
        CVector value;     // Theta_q d
        CVector d_doppler; // (dUpsilon/df) F^H Gamma d
        CVector d_delay;   // Upsilon F^H (dGamma/dtau) d
    };

    Derivatives derivatives(double delay, double doppler, const CVector& d)
    {
        Derivatives out;
        out.value = waveform(delay, doppler, d);
        out.d_doppler.resize(cfg_.dft_size);
        for (int n = 0; n < cfg_.dft_size; ++n)
            out.d_doppler(n) = j2pi * cfg_.sample_time(n) * out.value(n);

        out.d_delay.resize(cfg_.dft_size);
        fill_spectrum(delay, d, true);
        fft_.inv(time_, spectrum_);
        apply_doppler(doppler, out.d_delay);
        return out;
    }

  private:
    void fill_spectrum(double delay, const CVector& d, bool derivative)
    {
        const double scale = 1.0 / std::sqrt(static_cast<double>(cfg_.num_subcarriers));
        std::fill(spectrum_.begin(), spectrum_.end(), cplx(0.0, 0.0));
        const double cycles = -cfg_.subcarrier_spacing * delay;
        const cplx step = unit_phasor(cycles);
        cplx ramp(1.0, 0.0);
        for (int k = 0; k < cfg_.num_subcarriers; ++k)
        {
            if (k % anchor_interval == 0)
                ramp = unit_phasor(k * cycles);
            cplx c = scale * d(k) * ramp;
            if (derivative)
                c *= -j2pi * (k * cfg_.subcarrier_spacing);
            spectrum_[k] = c;
            ramp *= step;
        }
    }

    // out(n) = time_[n] e^{j 2 pi f (n/D + T_cp)}
    template <class Out>
    void apply_doppler(double doppler, Out& out) const
    {
        const cplx step = unit_phasor(doppler / cfg_.sample_rate());
        cplx rot(1.0, 0.0);
        for (int n = 0; n < cfg_.dft_size; ++n)
        {
            if (n % anchor_interval == 0)
                rot = unit_phasor(doppler * cfg_.sample_time(n));
            out(n) = time_[n] * rot;
            rot *= step;
        }
    }

    // Phase recurrences are re-seeded from an exact phasor this often.
    static constexpr int anchor_interval = 32;

    OfdmConfig cfg_;
    Eigen::FFT<double> fft_;
    std::vector<cplx> spectrum_;
    std::vector<cplx> time_;
};

// S = I_P (x) (Theta D). Only the per-symbol block is stored.
struct BasisMatrix
{
    CMatrix block;                                  // N x Q, basis order
    int num_symbols = 1;
    std::vector<std::pair<int, int>> collisions;    // replicas with identical (tau, f)

    Eigen::Index rows() const { return block.rows() * num_symbols; }
    Eigen::Index cols() const { return block.cols() * num_symbols; }

    // Dense PN x PQ matrix; meant for small configurations.
    CMatrix full() const
    {
        CMatrix S = CMatrix::Zero(rows(), cols());
        for (int p = 0; p < num_symbols; ++p)
            S.block(p * block.rows(), p * block.cols(), block.rows(), block.cols()) = block;
        return S;
    }
};

inline BasisMatrix assemble_basis(const std::vector<Replica>& replicas, const OfdmConfig& cfg, const PilotBook& pilots)
{
    BasisMatrix S;
    S.num_symbols = cfg.num_symbols;
    S.block.resize(cfg.dft_size, static_cast<Eigen::Index>(replicas.size()));
    ReplicaSynthesizer synth(cfg);
    for (std::size_t q = 0; q < replicas.size(); ++q)
    {
        const auto& r = replicas[q];
        S.block.col(q) = synth.waveform(r.delay, r.doppler, pilots[r.bs]);
        for (std::size_t k = 0; k < q; ++k)
            if (replicas[k].bs == r.bs && replicas[k].delay == r.delay && replicas[k].doppler == r.doppler)
                S.collisions.emplace_back(static_cast<int>(k), static_cast<int>(q));
    }
    return S;
}

inline BasisMatrix assemble_basis(const Scenario& s, const ChannelRealization& ch, const OfdmConfig& cfg,
                                  const PilotBook& pilots)
{
    return assemble_basis(replica_parameters(s, ch, cfg), cfg, pilots);
}

// y = S h + w with w ~ CN(0, sigma2 I). Deterministic in noise.seed.
inline CVector synthesize_received(const BasisMatrix& S, const ChannelRealization& ch, const NoiseModel& noise)
{
    const Eigen::Index N = S.block.rows();
    CVector y(S.rows());
    for (int p = 0; p < S.num_symbols; ++p)
        y.segment(p * N, N) = S.block * ch.symbol_coefficients(p);
    if (noise.sigma2 > 0.0)
    {
        auto rng = substream(noise.seed, stream_tag::noise);
        std::normal_distribution<double> gauss(0.0, std::sqrt(noise.sigma2 / 2.0));
        for (Eigen::Index i = 0; i < y.size(); ++i)
        {
            const double re = gauss(rng);
            const double im = gauss(rng);
            y(i) += cplx(re, im);
        }
    }
    return y;
}

inline CVector synthesize_received(const Scenario& s, const ChannelRealization& ch, const OfdmConfig& cfg,
                                   const PilotBook& pilots, const NoiseModel& noise)
{
    return synthesize_received(assemble_basis(s, ch, cfg, pilots), ch, noise);
}

} // namespace ofdmdpe
