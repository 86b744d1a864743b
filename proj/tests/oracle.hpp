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


// Independent reference implementations used only by the tests. Nothing here
// calls into the library's numerics: geometry, waveforms and Fisher
// information are rebuilt from the signal model by direct summation and
// central finite differences.

#pragma once

#include <ofdmdpe/ofdmdpe.hpp>

#include <cmath>
#include <complex>
#include <functional>
#include <random>
#include <vector>

namespace oracle
{

using ofdmdpe::cplx;
using ofdmdpe::CMatrix;
using ofdmdpe::CVector;
using ofdmdpe::RMatrix;
using ofdmdpe::RVector;
using ofdmdpe::Vec3;

inline constexpr double c0 = 299792458.0;
inline constexpr double pi = 3.14159265358979323846;

inline cplx expj(double radians) { return {std::cos(radians), std::sin(radians)}; }

inline double distance(const Vec3& a, const Vec3& b)
{
    const double dx = a(0) - b(0), dy = a(1) - b(1), dz = a(2) - b(2);
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

inline double delay(const Vec3& p, double clock_bias, const Vec3& p_bs) { return distance(p, p_bs) / c0 + clock_bias; }

inline double doppler(const Vec3& p, const Vec3& v, const Vec3& p_bs, const Vec3& v_bs, double fc)
{
    const double r = distance(p, p_bs);
    double s = 0.0;
    for (int i = 0; i < 3; ++i)
        s += (v(i) - v_bs(i)) * (p_bs(i) - p(i)) / r;
    return s * fc / c0;
}

struct Waveform
{
    int K, N;
    double spacing, cp, fc;

    double sample_rate() const { return N * spacing; }
};

inline Waveform waveform_of(const ofdmdpe::OfdmConfig& c)
{
    return {c.num_subcarriers, c.dft_size, c.subcarrier_spacing, c.cyclic_prefix, c.carrier};
}

// x[n] = e^{j2pi f (n/D + Tcp)} K^{-1/2} sum_k d_k e^{-j2pi k df tau} e^{j2pi k n / N}
inline CVector replica(double tau, double f, const CVector& d, const Waveform& w)
{
    CVector x(w.N);
    for (int n = 0; n < w.N; ++n)
    {
        cplx s = 0.0;
        for (int k = 0; k < w.K; ++k)
            s += d(k) * expj(-2.0 * pi * k * w.spacing * tau) * expj(2.0 * pi * double(k) * n / w.N);
        x(n) = s / std::sqrt(double(w.K)) * expj(2.0 * pi * f * (n / w.sample_rate() + w.cp));
    }
    return x;
}

// Everything needed to evaluate u(eta) = S(gamma, theta) h.
struct Model
{
    std::vector<Vec3> bs_pos, bs_vel;
    std::vector<int> paths;
    std::vector<CVector> pilots;
    Waveform w;
    int P;

    int M() const { return int(paths.size()); }
    int Q() const
    {
        int q = 0;
        for (int L : paths)
            q += L;
        return q;
    }
    int num_theta() const { return 2 * (Q() - M()); }
    int num_eta() const { return 2 * P * Q() + num_theta() + 7; }
};

inline Model model_of(const ofdmdpe::Scenario& s, const ofdmdpe::OfdmConfig& c, const ofdmdpe::PilotBook& pilots)
{
    Model m;
    for (const auto& bs : s.stations)
    {
        m.bs_pos.push_back(bs.position);
        m.bs_vel.push_back(bs.velocity);
        m.paths.push_back(bs.num_paths);
    }
    m.pilots = pilots.symbols;
    m.w = waveform_of(c);
    m.P = c.num_symbols;
    return m;
}

// eta = [Re h; Im h; theta; gamma], h symbol-major then BS then path,
// theta per BS as [dtau_1.., df_1..].
inline RVector eta_of(const Model& m, const ofdmdpe::ChannelRealization& ch, const ofdmdpe::UeState& ue)
{
    RVector eta(m.num_eta());
    int i = 0;
    for (int part = 0; part < 2; ++part)
        for (int p = 0; p < m.P; ++p)
            for (int b = 0; b < m.M(); ++b)
                for (int l = 0; l < m.paths[b]; ++l)
                    eta(i++) = part == 0 ? ch.coeff[b](l, p).real() : ch.coeff[b](l, p).imag();
    for (int b = 0; b < m.M(); ++b)
    {
        for (int l = 1; l < m.paths[b]; ++l)
            eta(i++) = ch.delay_offset[b][l - 1];
        for (int l = 1; l < m.paths[b]; ++l)
            eta(i++) = ch.doppler_offset[b][l - 1];
    }
    for (int k = 0; k < 3; ++k)
        eta(i++) = ue.position(k);
    for (int k = 0; k < 3; ++k)
        eta(i++) = ue.velocity(k);
    eta(i++) = ue.clock_bias;
    return eta;
}

inline CVector observation(const Model& m, const RVector& eta)
{
    const int Q = m.Q(), P = m.P, N = m.w.N;
    const int t0 = 2 * P * Q;
    const int g0 = t0 + m.num_theta();
    const Vec3 p(eta(g0), eta(g0 + 1), eta(g0 + 2));
    const Vec3 v(eta(g0 + 3), eta(g0 + 4), eta(g0 + 5));
    const double dt = eta(g0 + 6);

    CVector u = CVector::Zero(N * P);
    int theta_base = t0;
    int q = 0;
    for (int b = 0; b < m.M(); ++b)
    {
        const int L = m.paths[b];
        const double tau0 = delay(p, dt, m.bs_pos[b]);
        const double f0 = doppler(p, v, m.bs_pos[b], m.bs_vel[b], m.w.fc);
        for (int l = 0; l < L; ++l, ++q)
        {
            double tau = tau0, f = f0;
            if (l > 0)
            {
                tau += eta(theta_base + (l - 1));
                f += eta(theta_base + (L - 1) + (l - 1));
            }
            const CVector x = replica(tau, f, m.pilots[b], m.w);
            for (int s = 0; s < P; ++s)
            {
                const cplx h(eta(s * Q + q), eta(P * Q + s * Q + q));
                u.segment(s * N, N) += h * x;
            }
        }
        theta_base += 2 * (L - 1);
    }
    return u;
}

// Per-parameter finite-difference steps matched to the parameter units.
inline RVector default_steps(const Model& m)
{
    RVector h(m.num_eta());
    int i = 0;
    for (; i < 2 * m.P * m.Q(); ++i)
        h(i) = 1e-3;
    for (int b = 0; b < m.M(); ++b)
    {
        for (int l = 1; l < m.paths[b]; ++l)
            h(i++) = 1e-11;
        for (int l = 1; l < m.paths[b]; ++l)
            h(i++) = 1e-3;
    }
    for (int k = 0; k < 6; ++k)
        h(i++) = 1e-3;
    h(i++) = 1e-11;
    return h;
}

inline CMatrix jacobian_fd(const std::function<CVector(const RVector&)>& f, const RVector& x, const RVector& step)
{
    const CVector f0 = f(x);
    CMatrix G(f0.size(), x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i)
    {
        RVector xp = x, xm = x;
        xp(i) += step(i);
        xm(i) -= step(i);
        G.col(i) = (f(xp) - f(xm)) / (2.0 * step(i));
    }
    return G;
}

inline RMatrix fim_fd(const Model& m, const RVector& eta, double sigma2)
{
    const CMatrix G = jacobian_fd([&](const RVector& e) { return observation(m, e); }, eta, default_steps(m));
    return (2.0 / sigma2) * (G.adjoint() * G).real();
}

// Inverse of a symmetric positive definite matrix after symmetric diagonal
// scaling, via a pivoted QR (a different route from the library's LDLT).
inline RMatrix scaled_inverse(const RMatrix& J)
{
    const RVector s = J.diagonal().cwiseSqrt().cwiseInverse();
    const RMatrix A = s.asDiagonal() * J * s.asDiagonal();
    const RMatrix Ai = A.colPivHouseholderQr().inverse();
    return s.asDiagonal() * Ai * s.asDiagonal();
}

inline double rel_err(const RMatrix& a, const RMatrix& b) { return (a - b).norm() / b.norm(); }
inline double rel_err(const CMatrix& a, const CMatrix& b) { return (a - b).norm() / b.norm(); }

// Two-step mapping: c^2 (T^T T)^{-1} T^T C T (T^T T)^{-1} with rows
// [(p_m - p) / |p_m - p|, 1].
inline RMatrix geometry_rows(const Vec3& p, const std::vector<Vec3>& bs)
{
    RMatrix T(bs.size(), 4);
    for (std::size_t m = 0; m < bs.size(); ++m)
    {
        const double r = distance(p, bs[m]);
        for (int k = 0; k < 3; ++k)
            T(m, k) = (bs[m](k) - p(k)) / r;
        T(m, 3) = 1.0;
    }
    return T;
}

// Small random scenario used by several property tests.
inline ofdmdpe::Scenario random_scenario(std::mt19937_64& rng, int M, int L)
{
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    ofdmdpe::Scenario s;
    for (int m = 0; m < M; ++m)
    {
        ofdmdpe::BaseStation bs;
        bs.id = m + 1;
        const double a = 2.0 * pi * (m + 0.3 * u(rng)) / M;
        bs.position = Vec3(400.0 * std::cos(a), 400.0 * std::sin(a), 60.0 * u(rng) + (m % 2 ? 80.0 : -40.0));
        bs.velocity = Vec3(2.0 * u(rng), 2.0 * u(rng), 0.0);
        bs.num_paths = L;
        s.stations.push_back(bs);
    }
    s.ue.position = Vec3(20.0 * u(rng), 20.0 * u(rng), 2.0 * u(rng));
    s.ue.velocity = Vec3(5.0 * u(rng), 5.0 * u(rng), 0.5 * u(rng));
    s.ue.clock_bias = 1e-7 * u(rng);
    s.seed = rng();
    return s;
}

} // namespace oracle
