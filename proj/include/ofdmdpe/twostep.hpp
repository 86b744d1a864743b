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

#include "fim.hpp"

#include <string>
#include <vector>

namespace ofdmdpe
{

// Equivalent information on the LOS observables nu = [tau_LOS; f_LOS] after
// marginalizing channel coefficients and NLOS offsets, and the TOA block
// derived from it.
struct RangingFim
{
    RMatrix J_vv;            // 2M x 2M
    RMatrix J_tautau;        // M x M, defined by J_tautau^{-1} = [J_vv^{-1}]_tautau
    RMatrix J_tautau_inv;    // TOA CRB, s^2
    RMatrix toa_crb_unit;    // J_tautau_inv at unit noise power
    double sigma2 = 1.0;
    double nuisance_condition = 0.0;
};

// Maps the per-BS (f_m, tau_m) rows of the derivative bookkeeping onto
// nu = [tau_1..tau_M, f_1..f_M].
inline RMatrix observable_selector(int num_stations)
{
    const int M = num_stations;
    RMatrix E = RMatrix::Zero(2 * M, 2 * M);
    for (int m = 0; m < M; ++m)
    {
        E(2 * m, M + m) = 1.0;
        E(2 * m + 1, m) = 1.0;
    }
    return E;
}

inline RangingFim ranging_fim(const DerivativeBundle& d, double sigma2)
{
    if (!(sigma2 > 0.0))
        throw ConfigError("sigma2 must be positive");
    const int M = d.layout.num_stations();
    const CMatrix xi_nu = d.state_derivative(observable_selector(M));

    std::vector<std::string> nu_names;
    for (int m = 0; m < M; ++m)
        nu_names.push_back("tau_LOS[bs " + std::to_string(m) + "]");
    for (int m = 0; m < M; ++m)
        nu_names.push_back("f_LOS[bs " + std::to_string(m) + "]");
    const auto names = parameter_names(d.layout, d.basis.num_symbols, nu_names);

    const RMatrix J = unit_information(d.basis, d.xi_theta, xi_nu);
    const auto eq = equivalent_information(J, J.rows() - 2 * M, names);

    RangingFim r;
    r.nuisance_condition = eq.nuisance_condition;
    const ScaledSpd f = factor_spd<UnobservableError>(eq.information, nu_names, "LOS observable information");
    const RMatrix inv_unit = inverse_scaled(f);
    r.J_vv = eq.information / sigma2;
    r.sigma2 = sigma2;
    r.toa_crb_unit = (0.5 * (inv_unit + inv_unit.transpose())).topLeftCorner(M, M);
    r.J_tautau_inv = r.toa_crb_unit * sigma2;
    r.J_tautau = r.J_tautau_inv.inverse();
    return r;
}

inline RangingFim ranging_fim(const Scenario& s, const ChannelRealization& ch, const OfdmConfig& cfg,
                              const PilotBook& pilots, double sigma2)
{
    return ranging_fim(build_derivatives(s, ch, cfg, pilots), sigma2);
}

struct GeometryMatrix
{
    RMatrix T; // M x 4: LOS unit vector (UE -> BS) and a ones column
};

inline GeometryMatrix geometry_matrix(const Vec3& ue_position, const Scenario& s)
{
    GeometryMatrix g{RMatrix(s.num_stations(), 4)};
    UeState at;
    at.position = ue_position;
    for (int m = 0; m < s.num_stations(); ++m)
    {
        g.T.row(m).head<3>() = los_direction(at, s.stations[m]).transpose();
        g.T(m, 3) = 1.0;
    }
    return g;
}

struct TwoStepBound
{
    Matrix4 crb = Matrix4::Zero(); // [position (m^2); c * clock bias (m^2)]

    double position_trace() const { return crb.block<3, 3>(0, 0).trace(); }
    double clock_variance() const { return crb(3, 3) / (speed_of_light * speed_of_light); }
    double position_rmse() const { return std::sqrt(position_trace()); }
};

// c^2 ((T^T W T)^{-1} T^T W) C_toa ((T^T W T)^{-1} T^T W)^T.
inline Matrix4 twostep_covariance(const RMatrix& T, const RMatrix& toa_covariance, const RMatrix& W)
{
    if (T.cols() != 4 || toa_covariance.rows() != T.rows() || W.rows() != T.rows())
        throw DimensionError("twostep_covariance: dimension mismatch");
    Eigen::JacobiSVD<RMatrix> svd(T);
    const auto& sv = svd.singularValues();
    if (T.rows() < 4 || sv(sv.size() - 1) <= 1e-10 * sv(0))
        throw GeometryError("geometry matrix T is rank deficient (need >= 4 base stations in non-degenerate geometry)");
    const RMatrix TtW = T.transpose() * W;
    const RMatrix A = (TtW * T).ldlt().solve(TtW);
    const RMatrix C = speed_of_light * speed_of_light * A * toa_covariance * A.transpose();
    return 0.5 * (C + C.transpose());
}

inline TwoStepBound crb_twostep(const Scenario& s, const RangingFim& r)
{
    const RMatrix T = geometry_matrix(s.ue.position, s).T;
    const RMatrix W = RMatrix::Identity(T.rows(), T.rows());
    // Rows [u, 1] with u pointing at the BS linearize c tau around -p, so the
    // mapped covariance is for [-p; c dt]. Flip to [p; c dt].
    const Eigen::Vector4d flip(-1.0, -1.0, -1.0, 1.0);
    const Matrix4 C = twostep_covariance(T, r.toa_crb_unit, W) * r.sigma2;
    return {flip.asDiagonal() * C * flip.asDiagonal()};
}

inline TwoStepBound crb_twostep(const Scenario& s, const ChannelRealization& ch, const OfdmConfig& cfg,
                                const PilotBook& pilots, double sigma2)
{
    return crb_twostep(s, ranging_fim(s, ch, cfg, pilots, sigma2));
}

} // namespace ofdmdpe
