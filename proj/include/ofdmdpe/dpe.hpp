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
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ofdmdpe
{

inline constexpr double rank_threshold = 1e-10;

// h_p = (S^H S)^{-1} S^H y_p through a pivoted QR.
inline CVector ls_channel(const CMatrix& S, const CVector& y)
{
    if (S.rows() != y.size())
        throw DimensionError("ls_channel: S has " + std::to_string(S.rows()) + " rows, y has " + std::to_string(y.size()));
    Eigen::ColPivHouseholderQR<CMatrix> qr(S);
    qr.setThreshold(rank_threshold);
    if (qr.rank() < S.cols())
    {
        int bi = 0, bj = 1;
        double best = -1.0;
        for (Eigen::Index i = 0; i < S.cols(); ++i)
            for (Eigen::Index j = i + 1; j < S.cols(); ++j)
            {
                const double ni = S.col(i).norm(), nj = S.col(j).norm();
                const double c = (ni > 0 && nj > 0) ? std::abs(S.col(i).dot(S.col(j))) / (ni * nj) : 1.0;
                if (c > best)
                {
                    best = c;
                    bi = static_cast<int>(i);
                    bj = static_cast<int>(j);
                }
            }
        throw RankDeficiencyError("basis matrix is rank deficient: replicas " + std::to_string(bi) + " and " +
                                  std::to_string(bj) + " collide");
    }
    return qr.solve(y);
}

struct CostEvaluation
{
    double cost = 0.0;
    int rank = 0;
    bool rank_deficient = false;
};

// sum_p y_p^H S (S^H S)^{-1} S^H y_p for Y = [y_0 .. y_{P-1}] (N x P). A
// rank-deficient S falls back to the span of its well-conditioned pivoted
// columns.
inline CostEvaluation projection_energy(const CMatrix& S, const CMatrix& Y)
{
    Eigen::ColPivHouseholderQR<CMatrix> qr(S);
    qr.setThreshold(rank_threshold);
    CostEvaluation out;
    out.rank = static_cast<int>(qr.rank());
    out.rank_deficient = out.rank < S.cols();
    const CMatrix QhY = qr.householderQ().adjoint() * Y;
    out.cost = QhY.topRows(out.rank).squaredNorm();
    return out;
}

inline Eigen::Map<const CMatrix> symbols_as_columns(const CVector& y, int num_symbols)
{
    if (num_symbols < 1 || y.size() % num_symbols != 0)
        throw DimensionError("received vector length is not a multiple of the symbol count");
    return Eigen::Map<const CMatrix>(y.data(), y.size() / num_symbols, num_symbols);
}

enum class NlosMode
{
    los_only,     // candidate basis holds one LOS replica per BS
    oracle_theta  // candidate basis adds NLOS replicas at the true offsets
};

// NLOS offsets a candidate basis is built with; empty means LOS only.
struct ThetaCandidate
{
    std::vector<std::vector<double>> delay_offset;
    std::vector<std::vector<double>> doppler_offset;

    static ThetaCandidate none() { return {}; }
    static ThetaCandidate from(const ChannelRealization& ch) { return {ch.delay_offset, ch.doppler_offset}; }
};

// Builds candidate basis blocks S_p(gamma, theta). Holds FFT state, so use one
// per thread.
class CandidateBasis
{
  public:
    CandidateBasis(const Scenario& s, const OfdmConfig& cfg, const PilotBook& pilots, ThetaCandidate theta)
        : stations_(s.stations), cfg_(cfg), pilots_(pilots), theta_(std::move(theta)), synth_(cfg)
    {
        cols_ = 0;
        for (std::size_t m = 0; m < stations_.size(); ++m)
            cols_ += 1 + (theta_.delay_offset.empty() ? 0 : static_cast<int>(theta_.delay_offset[m].size()));
        block_.resize(cfg.dft_size, cols_);
        qr_ = Eigen::ColPivHouseholderQR<CMatrix>(cfg.dft_size, cols_);
        qr_.setThreshold(rank_threshold);
    }

    const CMatrix& at(const StateVector& gamma)
    {
        const UeState ue = UeState::from_vector(gamma);
        int q = 0;
        for (std::size_t m = 0; m < stations_.size(); ++m)
        {
            const double tau = los_delay(ue, stations_[m]);
            const double f = los_doppler(ue, stations_[m], cfg_.carrier);
            synth_.waveform_into(tau, f, pilots_[static_cast<int>(m)], block_.col(q++));
            if (theta_.delay_offset.empty())
                continue;
            for (std::size_t l = 0; l < theta_.delay_offset[m].size(); ++l)
                synth_.waveform_into(tau + theta_.delay_offset[m][l], f + theta_.doppler_offset[m][l],
                                     pilots_[static_cast<int>(m)], block_.col(q++));
        }
        return block_;
    }

    // projection_energy(at(gamma), Y) without per-call allocations.
    CostEvaluation cost(const StateVector& gamma, const Eigen::Ref<const CMatrix>& Y)
    {
        qr_.compute(at(gamma));
        CostEvaluation out;
        out.rank = static_cast<int>(qr_.rank());
        out.rank_deficient = out.rank < block_.cols();
        qhy_.noalias() = Y;
        qhy_.applyOnTheLeft(qr_.householderQ().adjoint());
        out.cost = qhy_.topRows(out.rank).squaredNorm();
        return out;
    }

  private:
    std::vector<BaseStation> stations_;
    OfdmConfig cfg_;
    const PilotBook& pilots_;
    ThetaCandidate theta_;
    ReplicaSynthesizer synth_;
    int cols_ = 0;
    CMatrix block_;
    Eigen::ColPivHouseholderQR<CMatrix> qr_;
    CMatrix qhy_;
};

inline CostEvaluation dpe_cost(const StateVector& gamma, const ThetaCandidate& theta, const CVector& y,
                               const Scenario& s, const OfdmConfig& cfg, const PilotBook& pilots)
{
    CandidateBasis basis(s, cfg, pilots, theta);
    return basis.cost(gamma, symbols_as_columns(y, cfg.num_symbols));
}

// ---------------------------------------------------------------------------
// Search grid over gamma

using AxisMask = std::array<bool, state_dim>;

inline constexpr AxisMask position_clock_mask{true, true, true, false, false, false, true};

class SearchGrid
{
  public:
    static constexpr std::size_t default_budget = 10'000'000;

    // Inactive axes are pinned to `center`. Each active axis spans
    // center +- floor(half_extent / step) * step.
    static SearchGrid make(const StateVector& center, const StateVector& half_extent, const StateVector& step,
                           const AxisMask& active, std::size_t budget = default_budget)
    {
        SearchGrid g;
        g.center_ = center;
        g.step_ = step;
        g.active_ = active;
        long double total = 1.0L;
        for (int a = 0; a < state_dim; ++a)
        {
            if (!active[a])
            {
                g.half_count_[a] = 0;
                continue;
            }
            if (!(step(a) > 0.0) || !(half_extent(a) >= 0.0))
                throw ConfigError("search grid: active axis " + state_names_[a] + " needs step > 0 and half extent >= 0");
            g.half_count_[a] = static_cast<int>(std::floor(half_extent(a) / step(a) + 1e-9));
            total *= 2.0L * g.half_count_[a] + 1.0L;
        }
        if (total > static_cast<long double>(budget))
            throw ConfigError("search grid has " + std::to_string(static_cast<double>(total)) + " points, budget is " +
                              std::to_string(budget));
        std::size_t stride = 1;
        for (int a = state_dim - 1; a >= 0; --a)
        {
            g.stride_[a] = stride;
            stride *= static_cast<std::size_t>(g.count(a));
        }
        g.size_ = stride;
        return g;
    }

    std::size_t size() const { return size_; }
    int count(int axis) const { return 2 * half_count_[axis] + 1; }
    bool active(int axis) const { return active_[axis]; }
    double step(int axis) const { return step_(axis); }
    std::size_t stride(int axis) const { return stride_[axis]; }
    const StateVector& center() const { return center_; }

    int index(std::size_t flat, int axis) const { return static_cast<int>((flat / stride_[axis]) % count(axis)); }

    StateVector point(std::size_t flat) const
    {
        StateVector g = center_;
        for (int a = 0; a < state_dim; ++a)
            if (active_[a])
                g(a) += (index(flat, a) - half_count_[a]) * step_(a);
        return g;
    }

    bool on_boundary(std::size_t flat) const
    {
        for (int a = 0; a < state_dim; ++a)
            if (active_[a] && half_count_[a] > 0 && (index(flat, a) == 0 || index(flat, a) == count(a) - 1))
                return true;
        return false;
    }

    // Flat index of the node nearest to gamma (clamped to the grid).
    std::size_t nearest(const StateVector& gamma) const
    {
        std::size_t flat = 0;
        for (int a = 0; a < state_dim; ++a)
        {
            if (!active_[a])
                continue;
            const long i = std::lround((gamma(a) - center_(a)) / step_(a)) + half_count_[a];
            flat += static_cast<std::size_t>(std::clamp<long>(i, 0, count(a) - 1)) * stride_[a];
        }
        return flat;
    }

  private:
    static inline const std::array<std::string, state_dim> state_names_{"p_x", "p_y", "p_z", "v_x",
                                                                        "v_y", "v_z", "clock_bias"};
    StateVector center_ = StateVector::Zero();
    StateVector step_ = StateVector::Ones();
    AxisMask active_{};
    std::array<int, state_dim> half_count_{};
    std::array<std::size_t, state_dim> stride_{};
    std::size_t size_ = 1;
};

// Grid described relative to the truth, as it appears in experiment configs.
struct GridSpec
{
    double position_half_extent = 5.0;   // m
    double position_step = 0.5;          // m
    double velocity_half_extent = 0.0;   // m/s
    double velocity_step = 1.0;          // m/s
    double clock_half_extent = 50e-9;    // s
    double clock_step = 1e-9;            // s
    AxisMask active = position_clock_mask;
    Vec3 prior_position_offset = Vec3::Zero();
    double prior_clock_offset = 0.0;
    std::size_t budget = SearchGrid::default_budget;
    NlosMode nlos_mode = NlosMode::los_only;
    bool refine = false;
};

inline SearchGrid make_grid(const GridSpec& spec, const UeState& truth)
{
    StateVector center = truth.to_vector();
    center.segment<3>(state_index::position) += spec.prior_position_offset;
    center(state_index::clock) += spec.prior_clock_offset;
    StateVector half, step;
    half << Vec3::Constant(spec.position_half_extent), Vec3::Constant(spec.velocity_half_extent), spec.clock_half_extent;
    step << Vec3::Constant(spec.position_step), Vec3::Constant(spec.velocity_step), spec.clock_step;
    return SearchGrid::make(center, half, step, spec.active, spec.budget);
}

struct CostSurface
{
    std::vector<double> cost;          // indexed by flat grid index
    std::size_t argmax = 0;
    StateVector argmax_gamma = StateVector::Zero();
    std::size_t rank_deficient_points = 0;
    bool boundary_hit = false;
};

struct GridSearchOptions
{
    int threads = 0;                   // 0: OpenMP default
    // Optional evaluation order (a permutation of the flat indices). The
    // result does not depend on it; exposed for determinism checks.
    std::vector<std::size_t> order;
};

struct GridSearchResult
{
    StateVector estimate = StateVector::Zero();
    CostSurface surface;
};

// Exhaustive evaluation of the projection cost; argmax with ties broken by
// lowest flat index. The reduction runs over stored costs in index order, so
// the result is independent of thread count and evaluation order.
inline GridSearchResult grid_search(const CVector& y, const SearchGrid& grid, const Scenario& s, const OfdmConfig& cfg,
                                    const PilotBook& pilots, const ThetaCandidate& theta,
                                    const GridSearchOptions& opt = {})
{
    const auto Y = symbols_as_columns(y, cfg.num_symbols);
    if (Y.rows() != cfg.dft_size)
        throw DimensionError("grid_search: received frame does not match the OFDM config");
    const std::size_t n = grid.size();
    if (!opt.order.empty() && opt.order.size() != n)
        throw ConfigError("grid_search: evaluation order must cover every grid point");

    CostSurface surf;
    surf.cost.assign(n, 0.0);
    std::vector<unsigned char> deficient(n, 0);

#ifdef _OPENMP
    const int threads = opt.threads > 0 ? opt.threads : omp_get_max_threads();
#pragma omp parallel num_threads(threads)
#endif
    {
        CandidateBasis basis(s, cfg, pilots, theta);
#ifdef _OPENMP
#pragma omp for schedule(static)
#endif
        for (long long i = 0; i < static_cast<long long>(n); ++i)
        {
            const std::size_t idx = opt.order.empty() ? static_cast<std::size_t>(i) : opt.order[i];
            const auto e = basis.cost(grid.point(idx), Y);
            surf.cost[idx] = e.cost;
            deficient[idx] = e.rank_deficient ? 1 : 0;
        }
    }

    for (std::size_t i = 0; i < n; ++i)
    {
        if (surf.cost[i] > surf.cost[surf.argmax])
            surf.argmax = i;
        surf.rank_deficient_points += deficient[i];
    }
    surf.argmax_gamma = grid.point(surf.argmax);
    surf.boundary_hit = grid.on_boundary(surf.argmax);
    return {surf.argmax_gamma, std::move(surf)};
}

struct RefineResult
{
    StateVector estimate = StateVector::Zero();
    bool boundary_hit = false;
};

// Per active axis, vertex of the parabola through the argmax and its two
// neighbours, clamped to half a step. An argmax on the boundary is returned
// unchanged and flagged.
inline RefineResult refine(const CostSurface& surf, const SearchGrid& grid)
{
    RefineResult r{grid.point(surf.argmax), grid.on_boundary(surf.argmax)};
    if (r.boundary_hit)
        return r;
    const double c0 = surf.cost[surf.argmax];
    for (int a = 0; a < state_dim; ++a)
    {
        if (!grid.active(a) || grid.count(a) < 3)
            continue;
        const double cm = surf.cost[surf.argmax - grid.stride(a)];
        const double cp = surf.cost[surf.argmax + grid.stride(a)];
        const double curvature = cm - 2.0 * c0 + cp;
        if (!(curvature < 0.0))
            continue;
        const double delta = std::clamp(0.5 * (cm - cp) / curvature, -0.5, 0.5);
        r.estimate(a) += delta * grid.step(a);
    }
    return r;
}

inline void write_cost_surface_csv(std::ostream& os, const SearchGrid& grid, const CostSurface& surf)
{
    static const std::array<const char*, state_dim> cols{"p_x_m", "p_y_m", "p_z_m", "v_x_mps",
                                                         "v_y_mps", "v_z_mps", "clock_bias_s"};
    std::vector<int> axes;
    for (int a = 0; a < state_dim; ++a)
        if (grid.active(a))
            axes.push_back(a);
    for (int a : axes)
        os << cols[a] << ',';
    os << "cost\n";
    char buf[32];
    for (std::size_t i = 0; i < surf.cost.size(); ++i)
    {
        const StateVector g = grid.point(i);
        for (int a : axes)
        {
            std::snprintf(buf, sizeof buf, "%.9g", g(a));
            os << buf << ',';
        }
        std::snprintf(buf, sizeof buf, "%.9g", surf.cost[i]);
        os << buf << '\n';
    }
}

} // namespace ofdmdpe
