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
#include "montecarlo.hpp"
#include "ofdm.hpp"
#include "scenario.hpp"

#include <yaml-cpp/yaml.h>

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace ofdmdpe
{

// Value lists of the three canonical figure sweeps.
struct FigureLists
{
    std::vector<double> snr_db{-10, -5, 0, 5, 10, 15, 20};
    std::vector<int> snr_num_paths{1, 2, 4};
    std::vector<int> bandwidth_num_subcarriers{32, 64, 128, 256};
    std::vector<double> bandwidth_subcarrier_spacing{7.5e3, 15e3, 30e3, 60e3};
    std::vector<int> symbols_num_symbols{1, 2, 4, 8, 16};
    std::vector<int> symbols_num_paths{1, 4};
};

struct ExperimentConfig
{
    Scenario scenario;
    OfdmConfig ofdm;
    GridSpec grid;
    CampaignOptions campaign;
    int trials = 200;
    std::uint64_t montecarlo_seed = 1;
    SweepAxis sweep_axis = SweepAxis::snr;
    std::vector<double> sweep_values;
    bool sweep_bounds_only = true;
    FigureLists figures;
};

namespace config_detail
{

// Leaf keys accepted anywhere in a config. "[]" marks the items of a list.
inline const std::set<std::string>& leaf_keys()
{
    static const std::set<std::string> keys{
        "seed",
        "ue.position_m", "ue.velocity_mps", "ue.clock_bias_s",
        "stations.ring.count", "stations.ring.radius_m", "stations.ring.heights_m", "stations.ring.num_paths",
        "stations.ring.velocity_mps",
        "stations.list[].id", "stations.list[].position_m", "stations.list[].velocity_mps", "stations.list[].num_paths",
        "channel.snr_db", "channel.smr_db", "channel.los_power", "channel.nlos_delay_chips",
        "channel.nlos_doppler_max_hz", "channel.phase_mode", "channel.noise_sigma2",
        "ofdm.num_subcarriers", "ofdm.dft_size", "ofdm.num_symbols", "ofdm.subcarrier_spacing_hz",
        "ofdm.cyclic_prefix_ratio", "ofdm.carrier_hz",
        "grid.position_half_extent_m", "grid.position_step_m", "grid.velocity_half_extent_mps",
        "grid.velocity_step_mps", "grid.clock_half_extent_s", "grid.clock_step_s", "grid.active",
        "grid.prior_position_offset_m", "grid.prior_clock_offset_s", "grid.budget", "grid.nlos_mode", "grid.refine",
        "montecarlo.trials", "montecarlo.seed", "montecarlo.channel_policy", "montecarlo.threads",
        "sweep.axis", "sweep.values", "sweep.bounds_only",
        "figures.snr.snr_db", "figures.snr.num_paths", "figures.bandwidth.num_subcarriers",
        "figures.bandwidth.subcarrier_spacing_hz", "figures.symbols.num_symbols", "figures.symbols.num_paths"};
    return keys;
}

inline bool is_section(const std::string& path)
{
    const std::string prefix = path + ".";
    for (const auto& k : leaf_keys())
        if (k.compare(0, prefix.size(), prefix) == 0)
            return true;
    return false;
}

class Reader
{
  public:
    explicit Reader(std::string source, std::set<std::string> overridden = {})
        : source_(std::move(source)), overridden_(std::move(overridden))
    {
    }

    [[noreturn]] void fail(const YAML::Node& n, const std::string& msg, const std::string& path = "") const
    {
        std::ostringstream os;
        os << source_;
        if (!overridden_.count(path) && n.IsDefined() && n.Mark().line >= 0)
            os << ':' << n.Mark().line + 1;
        else
            os << " (override)";
        os << ": " << msg;
        throw ConfigError(os.str());
    }

    void check_keys(const YAML::Node& n, const std::string& path) const
    {
        if (!n.IsMap())
        {
            if (!path.empty())
                fail(n, "'" + path + "' must be a mapping");
            fail(n, "config root must be a mapping");
        }
        for (const auto& kv : n)
        {
            const std::string key = kv.first.as<std::string>();
            const std::string child = path.empty() ? key : path + "." + key;
            if (leaf_keys().count(child))
            {
                if (kv.second.IsMap())
                    fail(kv.first, "'" + child + "' must be a scalar or list");
                continue;
            }
            if (is_section(child + "[]"))
            {
                if (!kv.second.IsSequence())
                    fail(kv.first, "'" + child + "' must be a list");
                for (const auto& item : kv.second)
                    check_keys(item, child + "[]");
                continue;
            }
            if (is_section(child))
            {
                check_keys(kv.second, child);
                continue;
            }
            fail(kv.first, "unknown key '" + child + "'");
        }
    }

    template <class T>
    T as(const YAML::Node& n, const std::string& what) const
    {
        try
        {
            return n.as<T>();
        }
        catch (const YAML::Exception&)
        {
            fail(n, "'" + what + "' has an invalid value", what);
        }
    }

    template <class T>
    void read(const YAML::Node& parent, const char* key, const std::string& path, T& out) const
    {
        const YAML::Node n = parent[key];
        if (n.IsDefined() && !n.IsNull())
            out = as<T>(n, path + key);
    }

    template <class T>
    void read_list(const YAML::Node& parent, const char* key, const std::string& path, std::vector<T>& out) const
    {
        const YAML::Node n = parent[key];
        if (!n.IsDefined() || n.IsNull())
            return;
        if (!n.IsSequence())
            fail(n, "'" + path + key + "' must be a list", path + key);
        out.clear();
        for (const auto& item : n)
            out.push_back(as<T>(item, path + key));
    }

    void read_vec3(const YAML::Node& parent, const char* key, const std::string& path, Vec3& out) const
    {
        std::vector<double> v{out(0), out(1), out(2)};
        read_list(parent, key, path, v);
        if (v.size() != 3)
            fail(parent[key], "'" + path + key + "' must have 3 entries", path + key);
        out = Vec3(v[0], v[1], v[2]);
    }

    const std::string& source() const { return source_; }

  private:
    std::string source_;
    std::set<std::string> overridden_;
};

// Sets a dotted path in a YAML tree, creating sections as needed.
inline void set_path(YAML::Node node, const std::vector<std::string>& parts, std::size_t i, const YAML::Node& value)
{
    if (i + 1 == parts.size())
    {
        node[parts[i]] = value;
        return;
    }
    YAML::Node child = node[parts[i]];
    if (!child.IsDefined() || child.IsNull())
        node[parts[i]] = YAML::Node(YAML::NodeType::Map);
    set_path(node[parts[i]], parts, i + 1, value);
}

} // namespace config_detail

// Applies "key=value" overrides; keys are dotted paths of the config schema,
// values are parsed as YAML (so lists are written "[1, 2]").
inline void apply_overrides(YAML::Node& root, const std::vector<std::string>& overrides)
{
    for (const auto& o : overrides)
    {
        const auto eq = o.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ConfigError("override '" + o + "' is not of the form key=value");
        const std::string key = o.substr(0, eq);
        if (!config_detail::leaf_keys().count(key))
            throw ConfigError("override names unknown config key '" + key + "'");
        YAML::Node value;
        try
        {
            value = YAML::Load(o.substr(eq + 1));
        }
        catch (const YAML::Exception& e)
        {
            throw ConfigError("override '" + o + "': " + e.msg);
        }
        std::vector<std::string> parts;
        std::stringstream ss(key);
        for (std::string p; std::getline(ss, p, '.');)
            parts.push_back(p);
        if (!root.IsDefined() || root.IsNull())
            root = YAML::Node(YAML::NodeType::Map);
        config_detail::set_path(root, parts, 0, value);
    }
}

inline ExperimentConfig parse_config(const YAML::Node& root, const std::string& source,
                                     std::set<std::string> overridden = {})
{
    using config_detail::Reader;
    const Reader r(source, std::move(overridden));
    ExperimentConfig c;
    if (!root.IsDefined() || root.IsNull())
        r.fail(root, "empty config");
    r.check_keys(root, "");

    std::uint64_t seed = c.scenario.seed;
    r.read(root, "seed", "", seed);
    c.scenario.seed = seed;
    c.montecarlo_seed = seed;

    if (const auto ue = root["ue"])
    {
        r.read_vec3(ue, "position_m", "ue.", c.scenario.ue.position);
        r.read_vec3(ue, "velocity_mps", "ue.", c.scenario.ue.velocity);
        r.read(ue, "clock_bias_s", "ue.", c.scenario.ue.clock_bias);
    }

    const auto st = root["stations"];
    if (!st)
        r.fail(root, "'stations' section is required");
    if (st["ring"] && st["list"])
        r.fail(st, "'stations' takes either 'ring' or 'list', not both");
    if (const auto ring = st["ring"])
    {
        int count = 4, num_paths = 1;
        double radius = 500.0;
        std::vector<double> heights{25.0};
        Vec3 vel = Vec3::Zero();
        r.read(ring, "count", "stations.ring.", count);
        r.read(ring, "radius_m", "stations.ring.", radius);
        r.read_list(ring, "heights_m", "stations.ring.", heights);
        r.read(ring, "num_paths", "stations.ring.", num_paths);
        r.read_vec3(ring, "velocity_mps", "stations.ring.", vel);
        try
        {
            c.scenario.stations = ring_constellation(count, radius, heights, num_paths);
        }
        catch (const ConfigError& e)
        {
            r.fail(ring, e.what());
        }
        for (auto& bs : c.scenario.stations)
            bs.velocity = vel;
    }
    else if (const auto list = st["list"])
    {
        int next_id = 1;
        for (const auto& item : list)
        {
            BaseStation bs;
            bs.id = next_id;
            r.read(item, "id", "stations.list[].", bs.id);
            if (!item["position_m"])
                r.fail(item, "base station entry needs 'position_m'");
            r.read_vec3(item, "position_m", "stations.list[].", bs.position);
            r.read_vec3(item, "velocity_mps", "stations.list[].", bs.velocity);
            r.read(item, "num_paths", "stations.list[].", bs.num_paths);
            next_id = bs.id + 1;
            c.scenario.stations.push_back(bs);
        }
    }
    else
        r.fail(st, "'stations' needs a 'ring' or 'list' entry");

    if (const auto ch = root["channel"])
    {
        auto& s = c.scenario.channel;
        r.read(ch, "snr_db", "channel.", s.snr_db);
        r.read(ch, "smr_db", "channel.", s.smr_db);
        r.read(ch, "los_power", "channel.", s.los_power);
        std::vector<double> chips{s.nlos_delay_min_chips, s.nlos_delay_max_chips};
        r.read_list(ch, "nlos_delay_chips", "channel.", chips);
        if (chips.size() != 2)
            r.fail(ch["nlos_delay_chips"], "'channel.nlos_delay_chips' must be [min, max]", "channel.nlos_delay_chips");
        s.nlos_delay_min_chips = chips[0];
        s.nlos_delay_max_chips = chips[1];
        r.read(ch, "nlos_doppler_max_hz", "channel.", s.nlos_doppler_max_hz);
        r.read(ch, "noise_sigma2", "channel.", s.noise_sigma2);
        std::string mode = "per_symbol";
        r.read(ch, "phase_mode", "channel.", mode);
        if (mode == "per_symbol")
            s.phase_mode = PhaseMode::per_symbol;
        else if (mode == "constant")
            s.phase_mode = PhaseMode::constant;
        else
            r.fail(ch["phase_mode"], "'channel.phase_mode' must be per_symbol or constant", "channel.phase_mode");
    }

    if (const auto o = root["ofdm"])
    {
        auto& f = c.ofdm;
        r.read(o, "num_subcarriers", "ofdm.", f.num_subcarriers);
        r.read(o, "dft_size", "ofdm.", f.dft_size);
        r.read(o, "num_symbols", "ofdm.", f.num_symbols);
        double ratio = f.cyclic_prefix_ratio();
        r.read(o, "cyclic_prefix_ratio", "ofdm.", ratio);
        r.read(o, "subcarrier_spacing_hz", "ofdm.", f.subcarrier_spacing);
        f.cyclic_prefix = ratio / f.subcarrier_spacing;
        r.read(o, "carrier_hz", "ofdm.", f.carrier);
    }

    if (const auto g = root["grid"])
    {
        auto& s = c.grid;
        r.read(g, "position_half_extent_m", "grid.", s.position_half_extent);
        r.read(g, "position_step_m", "grid.", s.position_step);
        r.read(g, "velocity_half_extent_mps", "grid.", s.velocity_half_extent);
        r.read(g, "velocity_step_mps", "grid.", s.velocity_step);
        r.read(g, "clock_half_extent_s", "grid.", s.clock_half_extent);
        r.read(g, "clock_step_s", "grid.", s.clock_step);
        r.read_vec3(g, "prior_position_offset_m", "grid.", s.prior_position_offset);
        r.read(g, "prior_clock_offset_s", "grid.", s.prior_clock_offset);
        r.read(g, "budget", "grid.", s.budget);
        r.read(g, "refine", "grid.", s.refine);
        if (g["active"])
        {
            static const std::array<const char*, state_dim> names{"p_x", "p_y", "p_z", "v_x",
                                                                  "v_y", "v_z", "clock_bias"};
            std::vector<std::string> axes;
            r.read_list(g, "active", "grid.", axes);
            s.active = AxisMask{};
            for (const auto& a : axes)
            {
                const auto it = std::find(names.begin(), names.end(), a);
                if (it == names.end())
                    r.fail(g["active"], "unknown grid axis '" + a + "'", "grid.active");
                s.active[it - names.begin()] = true;
            }
        }
        std::string mode = "los_only";
        r.read(g, "nlos_mode", "grid.", mode);
        if (mode == "los_only")
            s.nlos_mode = NlosMode::los_only;
        else if (mode == "oracle_theta")
            s.nlos_mode = NlosMode::oracle_theta;
        else
            r.fail(g["nlos_mode"], "'grid.nlos_mode' must be los_only or oracle_theta", "grid.nlos_mode");
    }

    if (const auto m = root["montecarlo"])
    {
        r.read(m, "trials", "montecarlo.", c.trials);
        r.read(m, "seed", "montecarlo.", c.montecarlo_seed);
        r.read(m, "threads", "montecarlo.", c.campaign.threads);
        std::string policy = "fixed";
        r.read(m, "channel_policy", "montecarlo.", policy);
        if (policy == "fixed")
            c.campaign.channel_policy = ChannelPolicy::fixed;
        else if (policy == "redraw")
            c.campaign.channel_policy = ChannelPolicy::redraw;
        else
            r.fail(m["channel_policy"], "'montecarlo.channel_policy' must be fixed or redraw", "montecarlo.channel_policy");
    }

    if (const auto sw = root["sweep"])
    {
        std::string axis = "snr";
        r.read(sw, "axis", "sweep.", axis);
        try
        {
            c.sweep_axis = parse_sweep_axis(axis);
        }
        catch (const ConfigError& e)
        {
            r.fail(sw["axis"], e.what(), "sweep.axis");
        }
        r.read_list(sw, "values", "sweep.", c.sweep_values);
        r.read(sw, "bounds_only", "sweep.", c.sweep_bounds_only);
    }

    if (const auto fg = root["figures"])
    {
        auto& f = c.figures;
        if (const auto n = fg["snr"])
        {
            r.read_list(n, "snr_db", "figures.snr.", f.snr_db);
            r.read_list(n, "num_paths", "figures.snr.", f.snr_num_paths);
        }
        if (const auto n = fg["bandwidth"])
        {
            r.read_list(n, "num_subcarriers", "figures.bandwidth.", f.bandwidth_num_subcarriers);
            r.read_list(n, "subcarrier_spacing_hz", "figures.bandwidth.", f.bandwidth_subcarrier_spacing);
        }
        if (const auto n = fg["symbols"])
        {
            r.read_list(n, "num_symbols", "figures.symbols.", f.symbols_num_symbols);
            r.read_list(n, "num_paths", "figures.symbols.", f.symbols_num_paths);
        }
    }

    try
    {
        c.scenario.validate();
        c.ofdm.validate();
    }
    catch (const ConfigError& e)
    {
        throw ConfigError(source + ": " + e.what());
    }
    if (c.trials < 1)
        throw ConfigError(source + ": montecarlo.trials must be >= 1");
    return c;
}

inline ExperimentConfig load_config_string(const std::string& text, const std::vector<std::string>& overrides = {},
                                           const std::string& source = "<string>")
{
    YAML::Node root;
    try
    {
        root = YAML::Load(text);
    }
    catch (const YAML::Exception& e)
    {
        throw ConfigError(source + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
    }
    apply_overrides(root, overrides);
    std::set<std::string> keys;
    for (const auto& o : overrides)
        keys.insert(o.substr(0, o.find('=')));
    return parse_config(root, source, std::move(keys));
}

inline ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {})
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return load_config_string(ss.str(), overrides, path);
}

} // namespace ofdmdpe
