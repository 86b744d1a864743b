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
#include "ofdm.hpp"
#include "scenario.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace ofdmdpe
{

// ---------------------------------------------------------------------------
// Diagonal derivative matrices

// d Upsilon_q / d f_q: diag j2pi(n/D + T_cp) e^{j2pi f (n/D + T_cp)}.
inline CDiagonal deriv_doppler_matrix(double doppler, const OfdmConfig& cfg)
{
    CVector d(cfg.dft_size);
    for (int n = 0; n < cfg.dft_size; ++n)
    {
        const double t = cfg.sample_time(n);
        d(n) = j2pi * t * unit_phasor(doppler * t);
    }
    return CDiagonal(d);
}

// d Gamma_q / d tau_q: diag -j2pi k df e^{-j2pi k df tau}.
inline CDiagonal deriv_delay_matrix(double delay, const OfdmConfig& cfg)
{
    CVector d(cfg.num_subcarriers);
    for (int k = 0; k < cfg.num_subcarriers; ++k)
    {
        const double fk = k * cfg.subcarrier_spacing;
        d(k) = -j2pi * fk * unit_phasor(-fk * delay);
    }
    return CDiagonal(d);
}

// ---------------------------------------------------------------------------
// Explicit factor matrices. These materialise N x 2QK blocks and are meant
// for verification on small configurations; build_derivatives() below uses
// the FFT route for the products it actually needs.

struct PsiMatrix
{
    CMatrix gamma; // N x 2MK, LOS replicas
    CMatrix theta; // N x 2(Q-M)K, NLOS replicas grouped per BS
};

// Replicas are taken in basis order and rearranged into derivative order.
inline PsiMatrix build_psi(const std::vector<Replica>& replicas, const ReplicaLayout& layout, const OfdmConfig& cfg)
{
    if (static_cast<int>(replicas.size()) != layout.num_replicas())
        throw DimensionError("build_psi: replica count does not match layout");
    const int N = cfg.dft_size;
    const int K = cfg.num_subcarriers;
    const int M = layout.num_stations();
    const CMatrix FH = dft_matrix(K, N).adjoint();

    PsiMatrix psi{CMatrix(N, 2 * M * K), CMatrix(N, 2 * layout.num_nlos() * K)};
    for (const auto& r : replicas)
    {
        if (r.bs < 0 || r.bs >= M || r.path < 0 || r.path >= layout.paths[r.bs])
            throw DimensionError("build_psi: replica ordering mismatch");
        const int slot = (r.path == 0) ? r.bs : layout.nlos_index(r.bs, r.path);
        CMatrix& target = (r.path == 0) ? psi.gamma : psi.theta;
        target.middleCols(2 * slot * K, K) = deriv_doppler_matrix(r.doppler, cfg) * FH * delay_matrix(r.delay, cfg);
        target.middleCols((2 * slot + 1) * K, K) = doppler_matrix(r.doppler, cfg) * FH * deriv_delay_matrix(r.delay, cfg);
    }
    return psi;
}

struct Selectors
{
    CMatrix D;       // QK x Q       blkdiag(I_{L_m} (x) d_m)
    CMatrix D_gamma; // 2MK x 2M     blkdiag(I_2 (x) d_m)
    CMatrix D_theta; // 2(Q-M)K x 2(Q-M)
};

inline Selectors build_selectors(const ReplicaLayout& layout, const PilotBook& pilots)
{
    const int M = layout.num_stations();
    if (pilots.num_stations() != M)
        throw DimensionError("build_selectors: pilot book has " + std::to_string(pilots.num_stations()) +
                             " stations, layout has " + std::to_string(M));
    const Eigen::Index K = pilots[0].size();
    const int Q = layout.num_replicas();
    const int T = layout.num_nlos();

    Selectors sel{CMatrix::Zero(Q * K, Q), CMatrix::Zero(2 * M * K, 2 * M), CMatrix::Zero(2 * T * K, 2 * T)};
    for (int m = 0; m < M; ++m)
    {
        for (int l = 0; l < layout.paths[m]; ++l)
        {
            const int q = layout.basis_index(m, l);
            sel.D.block(q * K, q, K, 1) = pilots[m];
        }
        for (int i = 0; i < 2; ++i)
            sel.D_gamma.block((2 * m + i) * K, 2 * m + i, K, 1) = pilots[m];
        for (int l = 1; l < layout.paths[m]; ++l)
        {
            const int t = layout.nlos_index(m, l);
            for (int i = 0; i < 2; ++i)
                sel.D_theta.block((2 * t + i) * K, 2 * t + i, K, 1) = pilots[m];
        }
    }
    return sel;
}

struct ChannelStacks
{
    CMatrix H_gamma; // 2MP x 2M, row block p = blkdiag(I_2 (x) h_{m,0,p})
    CMatrix H_theta; // 2(Q-M)P x 2(Q-M)
};

inline ChannelStacks build_channel_stacks(const ReplicaLayout& layout, const ChannelRealization& ch)
{
    const int M = layout.num_stations();
    const int T = layout.num_nlos();
    const int P = ch.num_symbols();
    ChannelStacks st{CMatrix::Zero(2 * M * P, 2 * M), CMatrix::Zero(2 * T * P, 2 * T)};
    for (int p = 0; p < P; ++p)
        for (int m = 0; m < M; ++m)
        {
            for (int i = 0; i < 2; ++i)
                st.H_gamma(p * 2 * M + 2 * m + i, 2 * m + i) = ch.h(m, 0, p);
            for (int l = 1; l < layout.paths[m]; ++l)
            {
                const int t = layout.nlos_index(m, l);
                for (int i = 0; i < 2; ++i)
                    st.H_theta(p * 2 * T + 2 * t + i, 2 * t + i) = ch.h(m, l, p);
            }
        }
    return st;
}

// Phi (2M x 7): per BS the Doppler row, then the delay row.
inline RMatrix build_phi(const Scenario& s, double carrier_hz)
{
    const int M = s.num_stations();
    RMatrix phi(2 * M, state_dim);
    for (int m = 0; m < M; ++m)
    {
        phi.row(2 * m) = doppler_jacobian(s.ue, s.stations[m], carrier_hz).transpose();
        phi.row(2 * m + 1) = delay_jacobian(s.ue, s.stations[m]).transpose();
    }
    return phi;
}

// ---------------------------------------------------------------------------
// Derivatives of the noiseless observation u = S h.

struct PsiProducts
{
    CMatrix los;  // Psi_gamma D_gamma, N x 2M
    CMatrix nlos; // Psi_theta D_theta, N x 2(Q-M)
};

inline PsiProducts psi_products(const std::vector<Replica>& replicas, const ReplicaLayout& layout,
                                const OfdmConfig& cfg, const PilotBook& pilots)
{
    const int N = cfg.dft_size;
    PsiProducts out{CMatrix(N, 2 * layout.num_stations()), CMatrix(N, 2 * layout.num_nlos())};
    ReplicaSynthesizer synth(cfg);
    for (const auto& r : replicas)
    {
        auto dv = synth.derivatives(r.delay, r.doppler, pilots[r.bs]);
        const int slot = (r.path == 0) ? r.bs : layout.nlos_index(r.bs, r.path);
        CMatrix& target = (r.path == 0) ? out.los : out.nlos;
        target.col(2 * slot) = dv.d_doppler;
        target.col(2 * slot + 1) = dv.d_delay;
    }
    return out;
}

// (I_P (x) A) H for H stacked as P row blocks of A.cols() rows.
inline CMatrix apply_symbolwise(const CMatrix& A, const CMatrix& H, int num_symbols)
{
    if (H.rows() != A.cols() * num_symbols)
        throw DimensionError("symbolwise product: channel stack has " + std::to_string(H.rows()) + " rows, expected " +
                             std::to_string(A.cols() * num_symbols));
    CMatrix out(A.rows() * num_symbols, H.cols());
    for (int p = 0; p < num_symbols; ++p)
        out.middleRows(p * A.rows(), A.rows()).noalias() = A * H.middleRows(p * A.cols(), A.cols());
    return out;
}

struct DerivativeBundle
{
    BasisMatrix basis;
    ReplicaLayout layout;
    CMatrix xi_theta; // PN x 2(Q-M), columns in theta order
    CMatrix xi_gamma; // PN x 7
    // Per-replica delay/Doppler derivatives, before mapping to parameters.
    CMatrix xi_los;   // PN x 2M, (f_m, tau_m) pairs
    CMatrix xi_nlos;  // PN x 2(Q-M), (f, tau) pairs in derivative order
    RMatrix phi;      // 2M x 7

    // d u / d x for a state x that moves the per-BS LOS observables through
    // `jacobian` (2M x n, rows as in Phi). NLOS replicas ride on their LOS
    // delay/Doppler, so they pick up the same rows.
    CMatrix state_derivative(const RMatrix& jacobian) const
    {
        if (jacobian.rows() != xi_los.cols())
            throw DimensionError("state_derivative: Jacobian has " + std::to_string(jacobian.rows()) +
                                 " rows, expected 2M = " + std::to_string(xi_los.cols()));
        CMatrix out = xi_los * jacobian.cast<cplx>();
        if (xi_nlos.cols() > 0)
            out += xi_nlos * nlos_rows(jacobian).cast<cplx>();
        return out;
    }

    RMatrix nlos_rows(const RMatrix& jacobian) const
    {
        RMatrix rows(2 * layout.num_nlos(), jacobian.cols());
        for (int m = 0; m < layout.num_stations(); ++m)
            for (int l = 1; l < layout.paths[m]; ++l)
            {
                const int t = layout.nlos_index(m, l);
                rows.row(2 * t) = jacobian.row(2 * m);
                rows.row(2 * t + 1) = jacobian.row(2 * m + 1);
            }
        return rows;
    }
};

struct XiInputs
{
    const BasisMatrix& basis;
    const ReplicaLayout& layout;
    const PsiProducts& psi_d;      // Psi_gamma D_gamma, Psi_theta D_theta
    const ChannelStacks& stacks;
    const RMatrix& phi;
};

// Xi_theta = (I_P (x) Psi_theta D_theta) H_theta, reordered to theta order.
// Xi_gamma = (I_P (x) Psi_gamma D_gamma) H_gamma Phi + the same chain through
// the NLOS replicas, whose delays and Dopplers are offsets from the LOS ones.
inline DerivativeBundle build_xi(const XiInputs& in)
{
    const int P = in.basis.num_symbols;
    const int M = in.layout.num_stations();
    const int T = in.layout.num_nlos();
    const Eigen::Index N = in.basis.block.rows();

    auto check = [](bool ok, const std::string& what) {
        if (!ok)
            throw DimensionError("build_xi: inconsistent dimensions in " + what);
    };
    check(in.psi_d.los.rows() == N && in.psi_d.los.cols() == 2 * M, "Psi_gamma D_gamma");
    check(in.psi_d.nlos.rows() == N && in.psi_d.nlos.cols() == 2 * T, "Psi_theta D_theta");
    check(in.stacks.H_gamma.rows() == 2 * M * P && in.stacks.H_gamma.cols() == 2 * M, "H_gamma");
    check(in.stacks.H_theta.rows() == 2 * T * P && in.stacks.H_theta.cols() == 2 * T, "H_theta");
    check(in.phi.rows() == 2 * M && in.phi.cols() == state_dim, "Phi");
    check(in.basis.block.cols() == in.layout.num_replicas(), "S");

    DerivativeBundle b{in.basis, in.layout, {}, {}, {}, {}, in.phi};
    b.xi_los = apply_symbolwise(in.psi_d.los, in.stacks.H_gamma, P);
    b.xi_nlos = (T > 0) ? apply_symbolwise(in.psi_d.nlos, in.stacks.H_theta, P) : CMatrix(N * P, 0);

    b.xi_theta.resize(N * P, 2 * T);
    for (int m = 0; m < M; ++m)
    {
        const int base = 2 * (in.layout.offset[m] - m);
        const int nl = in.layout.paths[m] - 1;
        for (int l = 1; l <= nl; ++l)
        {
            const int t = in.layout.nlos_index(m, l);
            b.xi_theta.col(base + (l - 1)) = b.xi_nlos.col(2 * t + 1);     // delta tau
            b.xi_theta.col(base + nl + (l - 1)) = b.xi_nlos.col(2 * t);    // delta f
        }
    }
    b.xi_gamma = b.state_derivative(in.phi);
    return b;
}

// Full pipeline from scenario objects to the derivative bundle.
inline DerivativeBundle build_derivatives(const Scenario& s, const ChannelRealization& ch, const OfdmConfig& cfg,
                                          const PilotBook& pilots)
{
    if (ch.num_symbols() != cfg.num_symbols)
        throw DimensionError("channel realization has " + std::to_string(ch.num_symbols()) + " symbols, config has " +
                             std::to_string(cfg.num_symbols));
    const ReplicaLayout layout(s.stations);
    const auto replicas = replica_parameters(s, ch, cfg);
    const BasisMatrix basis = assemble_basis(replicas, cfg, pilots);
    const PsiProducts pd = psi_products(replicas, layout, cfg, pilots);
    const ChannelStacks st = build_channel_stacks(layout, ch);
    const RMatrix phi = build_phi(s, cfg.carrier);
    return build_xi({basis, layout, pd, st, phi});
}

// ---------------------------------------------------------------------------
// Fisher information

struct BlockRange
{
    Eigen::Index offset = 0;
    Eigen::Index size = 0;
};

struct FimBundle
{
    // Information at unit noise power; J = information_unit / sigma2.
    RMatrix information_unit;
    double sigma2 = 1.0;
    BlockRange alpha, theta, gamma;
    std::vector<std::string> names;
    std::optional<Matrix7> crb_gamma;

    RMatrix J() const { return information_unit / sigma2; }

    FimBundle rescaled(double new_sigma2) const
    {
        FimBundle out = *this;
        out.sigma2 = new_sigma2;
        if (crb_gamma)
            out.crb_gamma = *crb_gamma * (new_sigma2 / sigma2);
        return out;
    }
};

inline std::vector<std::string> parameter_names(const ReplicaLayout& layout, int num_symbols,
                                                const std::vector<std::string>& interest)
{
    std::vector<std::string> names;
    for (const char* part : {"Re", "Im"})
        for (int p = 0; p < num_symbols; ++p)
            for (int m = 0; m < layout.num_stations(); ++m)
                for (int l = 0; l < layout.paths[m]; ++l)
                    names.push_back(std::string(part) + " h[sym " + std::to_string(p) + ", bs " +
                                    std::to_string(m) + ", path " + std::to_string(l) + "]");
    for (int m = 0; m < layout.num_stations(); ++m)
    {
        for (int l = 1; l < layout.paths[m]; ++l)
            names.push_back("dtau[bs " + std::to_string(m) + ", path " + std::to_string(l) + "]");
        for (int l = 1; l < layout.paths[m]; ++l)
            names.push_back("df[bs " + std::to_string(m) + ", path " + std::to_string(l) + "]");
    }
    names.insert(names.end(), interest.begin(), interest.end());
    return names;
}

inline const std::vector<std::string>& state_names()
{
    static const std::vector<std::string> n{"p_x", "p_y", "p_z", "v_x", "v_y", "v_z", "clock_bias"};
    return n;
}

// 2 Re{Xi^H Xi} for Xi = [S, jS, Xi_theta, Xi_interest], using the block
// structure S = I_P (x) S_p.
inline RMatrix unit_information(const BasisMatrix& S, const CMatrix& xi_theta, const CMatrix& xi_interest)
{
    const Eigen::Index N = S.block.rows();
    const Eigen::Index Q = S.block.cols();
    const int P = S.num_symbols;
    if (xi_theta.rows() != N * P || xi_interest.rows() != N * P)
        throw DimensionError("assemble_fim: Xi blocks must have P*N rows");

    const Eigen::Index nt = xi_theta.cols();
    const Eigen::Index ni = xi_interest.cols();
    const Eigen::Index na = 2 * P * Q;
    const Eigen::Index n = na + nt + ni;

    CMatrix X(N * P, nt + ni);
    X << xi_theta, xi_interest;

    RMatrix J = RMatrix::Zero(n, n);
    const CMatrix G = S.block.adjoint() * S.block;
    for (int p = 0; p < P; ++p)
    {
        const Eigen::Index re = p * Q;
        const Eigen::Index im = P * Q + p * Q;
        J.block(re, re, Q, Q) = 2.0 * G.real();
        J.block(re, im, Q, Q) = -2.0 * G.imag();
        J.block(im, re, Q, Q) = 2.0 * G.imag();
        J.block(im, im, Q, Q) = 2.0 * G.real();

        const CMatrix C = S.block.adjoint() * X.middleRows(p * N, N);
        J.block(re, na, Q, nt + ni) = 2.0 * C.real();
        J.block(im, na, Q, nt + ni) = 2.0 * C.imag();
    }
    J.block(na, na, nt + ni, nt + ni) = 2.0 * (X.adjoint() * X).real();
    J.bottomLeftCorner(nt + ni, na) = J.topRightCorner(na, nt + ni).transpose();
    return 0.5 * (J + J.transpose());
}

inline FimBundle assemble_fim(const BasisMatrix& S, const CMatrix& xi_theta, const CMatrix& xi_gamma, double sigma2,
                              std::vector<std::string> names = {})
{
    if (!(sigma2 > 0.0))
        throw ConfigError("sigma2 must be positive");
    if (xi_gamma.cols() != state_dim)
        throw DimensionError("assemble_fim: Xi_gamma must have 7 columns");
    FimBundle f;
    f.information_unit = unit_information(S, xi_theta, xi_gamma);
    f.sigma2 = sigma2;
    f.alpha = {0, 2 * S.block.cols() * S.num_symbols};
    f.theta = {f.alpha.size, xi_theta.cols()};
    f.gamma = {f.alpha.size + f.theta.size, state_dim};
    if (names.empty())
    {
        for (Eigen::Index i = 0; i < f.alpha.size; ++i)
            names.push_back("alpha[" + std::to_string(i) + "]");
        for (Eigen::Index i = 0; i < f.theta.size; ++i)
            names.push_back("theta[" + std::to_string(i) + "]");
        names.insert(names.end(), state_names().begin(), state_names().end());
    }
    f.names = std::move(names);
    return f;
}

inline FimBundle assemble_fim(const DerivativeBundle& d, double sigma2)
{
    return assemble_fim(d.basis, d.xi_theta, d.xi_gamma, sigma2,
                        parameter_names(d.layout, d.basis.num_symbols, state_names()));
}

// ---------------------------------------------------------------------------
// Symmetric solves with Jacobi equilibration and an explicit condition gate.

inline constexpr double condition_threshold = 1e12;

struct ScaledSpd
{
    RVector scale;                         // D^{-1/2}
    Eigen::LDLT<RMatrix> ldlt;             // of D^{-1/2} A D^{-1/2}
    double condition = 0.0;
};

// Returns the factorization, or throws `Err` naming the parameters that span
// the weakest direction when the equilibrated condition number exceeds the
// threshold.
template <class Err>
ScaledSpd factor_spd(const RMatrix& A, const std::vector<std::string>& names, const std::string& what)
{
    const Eigen::Index n = A.rows();
    ScaledSpd f;
    f.scale.resize(n);
    for (Eigen::Index i = 0; i < n; ++i)
    {
        if (!(A(i, i) > 0.0))
            throw Err(what + " is singular: no information on " + (i < Eigen::Index(names.size()) ? names[i] : "#" + std::to_string(i)));
        f.scale(i) = 1.0 / std::sqrt(A(i, i));
    }
    const RMatrix As = f.scale.asDiagonal() * A * f.scale.asDiagonal();
    Eigen::SelfAdjointEigenSolver<RMatrix> eig(As);
    const double lmin = eig.eigenvalues()(0);
    const double lmax = eig.eigenvalues()(n - 1);
    f.condition = (lmin > 0.0) ? lmax / lmin : std::numeric_limits<double>::infinity();
    if (!(f.condition <= condition_threshold))
    {
        const RVector w = eig.eigenvectors().col(0);
        std::vector<Eigen::Index> idx(n);
        for (Eigen::Index i = 0; i < n; ++i)
            idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return std::abs(w(a)) > std::abs(w(b)); });
        std::string span;
        for (std::size_t k = 0; k < std::min<std::size_t>(4, idx.size()); ++k)
        {
            if (std::abs(w(idx[k])) < 0.1)
                break;
            span += (span.empty() ? "" : ", ") + (idx[k] < Eigen::Index(names.size()) ? names[idx[k]] : "#" + std::to_string(idx[k]));
        }
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.3g", f.condition);
        throw Err(what + " is ill-conditioned (condition " + buf + "); deficient direction spans: " + span);
    }
    f.ldlt.compute(As);
    return f;
}

inline RMatrix solve_scaled(const ScaledSpd& f, const RMatrix& B)
{
    return f.scale.asDiagonal() * f.ldlt.solve(f.scale.asDiagonal() * B);
}

inline RMatrix inverse_scaled(const ScaledSpd& f)
{
    return solve_scaled(f, RMatrix::Identity(f.scale.size(), f.scale.size()));
}

struct EquivalentInformation
{
    RMatrix information;          // Schur complement for the trailing block
    double nuisance_condition = 0.0;
};

// Marginalizes the leading `n_nuisance` parameters out of J.
inline EquivalentInformation equivalent_information(const RMatrix& J, Eigen::Index n_nuisance,
                                                    const std::vector<std::string>& names)
{
    const Eigen::Index ni = J.rows() - n_nuisance;
    EquivalentInformation out;
    const RMatrix Jii = J.bottomRightCorner(ni, ni);
    if (n_nuisance == 0)
    {
        out.information = Jii;
        out.nuisance_condition = 1.0;
        return out;
    }
    const RMatrix Jnn = J.topLeftCorner(n_nuisance, n_nuisance);
    const RMatrix Jni = J.topRightCorner(n_nuisance, ni);
    const std::vector<std::string> nuisance_names(names.begin(), names.begin() + std::min<Eigen::Index>(n_nuisance, names.size()));
    const ScaledSpd f = factor_spd<UnobservableError>(Jnn, nuisance_names, "nuisance block");
    out.nuisance_condition = f.condition;
    const RMatrix E = Jii - Jni.transpose() * solve_scaled(f, Jni);
    out.information = 0.5 * (E + E.transpose());
    return out;
}

struct DpeBound
{
    Matrix7 crb = Matrix7::Zero();
    double nuisance_condition = 0.0;
    double schur_condition = 0.0;

    double position_trace() const { return crb.block<3, 3>(0, 0).trace(); }
    double velocity_trace() const { return crb.block<3, 3>(3, 3).trace(); }
    double clock_variance() const { return crb(6, 6); }
    double position_rmse() const { return std::sqrt(position_trace()); }
};

// CRB(gamma) = (J_gg - J_ng^T J_nn^{-1} J_ng)^{-1}, n = (alpha, theta).
// Computed at unit noise and scaled, so it is exactly linear in sigma2.
inline DpeBound crb_dpe(const FimBundle& fim)
{
    const Eigen::Index nn = fim.alpha.size + fim.theta.size;
    const auto eq = equivalent_information(fim.information_unit, nn, fim.names);
    const ScaledSpd f = factor_spd<GeometryError>(eq.information, state_names(), "UE-state equivalent information");
    DpeBound b;
    const RMatrix inv = inverse_scaled(f);
    b.crb = 0.5 * (inv + inv.transpose()) * fim.sigma2;
    b.nuisance_condition = eq.nuisance_condition;
    b.schur_condition = f.condition;
    return b;
}

} // namespace ofdmdpe
