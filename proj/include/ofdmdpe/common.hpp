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

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace ofdmdpe
{

using cplx = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;
using RMatrix = Eigen::MatrixXd;
using Vec3 = Eigen::Vector3d;

// UE state gamma = [position(3); velocity(3); clock bias], always in this order.
using StateVector = Eigen::Matrix<double, 7, 1>;
using Matrix7 = Eigen::Matrix<double, 7, 7>;
using Matrix4 = Eigen::Matrix4d;

inline constexpr double speed_of_light = 299792458.0; // m/s, exact
inline constexpr double two_pi = 2.0 * std::numbers::pi;
inline constexpr cplx j2pi{0.0, two_pi};

inline constexpr int state_dim = 7;

namespace state_index
{
inline constexpr int position = 0;
inline constexpr int velocity = 3;
inline constexpr int clock = 6;
} // namespace state_index

// Library-wide error root. Sub-types let callers separate configuration
// problems from physically unobservable scenarios.
class Error : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error
{
  public:
    using Error::Error;
};

// Coincident UE/BS, rank-deficient geometry matrix, singular Schur complement.
class GeometryError : public Error
{
  public:
    using Error::Error;
};

// Nuisance block too ill-conditioned to invert.
class UnobservableError : public Error
{
  public:
    using Error::Error;
};

// Two replicas of a basis matrix are numerically indistinguishable.
class RankDeficiencyError : public Error
{
  public:
    using Error::Error;
};

class DimensionError : public Error
{
  public:
    using Error::Error;
};

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

} // namespace ofdmdpe
