// SPDX-License-Identifier: Apache-2.0
//
// risv2x: simulator for RIS-aided V2X sidelink tracking and resource allocation
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

#include "core.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <utility>

namespace risv2x
{

// Every system dimension, geometry input and numeric constant of a run.
// Field names double as keys of the configuration file and of --set.
struct ScenarioConfig
{
    // Array and grid dimensions
    int n_bs_antennas = 16;  // N_T
    int n_ue_antennas = 2;   // Q
    int n_ris_elements = 80; // N
    int grid_bs = 16;
    int grid_ris = 80;
    int grid_ue = 2;

    // Traffic
    int n_cues = 3;      // M
    int n_due_pairs = 0; // L

    // Mode 2 surface
    int n_tiles = 20; // K
    int n_pscs = 8;   // S
    int pr_ris_elements = 1000; // roadside surface size in the passive-reflection mode

    // Frame
    double carrier_hz = 28e9;
    double slot_duration_s = 1e-4;
    int slots_per_subframe = 10;
    int pilots_angle = 45;  // M_A
    int pilots_doppler = 5; // M_D
    int data_symbols = 100; // M_T per slot
    int feedback_symbols_header = 6;
    int feedback_symbols = 2;
    int pscch_symbols = 2;
    int pscch_prbs = 10;
    int psfch_symbols = 1;
    int psfch_prbs = 1;
    int n_subchannels = 4;        // L_subCH
    int prbs_per_subchannel = 10; // M_sub
    double power_coeff_pssch = 1.0; // mW per PRB-symbol
    double power_coeff_pscch = 1.0;
    double power_coeff_psfch = 0.5;
    bool benchmark_frame = false;
    std::string eta_denominator = "pilots"; // pilots | total
    int sensing_window = 10;
    int selection_window = 4;

    // Geometry
    int n_lanes = 6;
    double lane_width_m = 4.0;
    double road_length_m = 2000.0;
    double bs_offset_m = 35.0;
    double bs_height_m = 25.0;
    double ris_position_m = 250.0; // x_RIS
    double ris_lateral_m = 16.0;   // roadside surface, from the road axis
    double ris_height_m = 10.0;
    double drop_center_m = 0.0;
    double drop_window_m = 0.0; // 0 = whole road
    double max_v2v_range_m = 50.0;
    double vehicle_speed_mps = 30.0;
    double in_vehicle_distance_m = 1.0;

    // Propagation
    double rician_k_db = 3.0;       // direct links
    double rician_k_hop_db = 3.0;   // BS-RIS and roadside RIS-vehicle hops
    double rician_k_cabin_db = 10.0; // RIS-UE inside the vehicle
    double pathloss_exponent_direct = 3.5;
    double pathloss_exponent_cascaded = 2.2;
    double pathloss_ref_db = -30.0;
    double noise_dbm = -80.0;
    double ris_noise_dbm = -70.0;
    double ue_power_dbm = 23.0;
    double due_power_dbm = 23.0;
    double p_active_max_dbm = 20.0; // P_A^max
    double csi_delay_s = 3e-5;
    bool direct_v2i_blocked = true; // roadside passive scenario

    // Sparse cascaded channel and tracker
    int n_common_paths = 3;
    int n_individual_paths = 2;
    double p_keep = 0.9;
    double offgrid_fraction = 0.5; // true offsets drawn within +-fraction of half a cell
    double prior_shape = 1.0;
    double prior_rate = 1.0;
    bool normalize_path_power = true;
    double snr_db = 15.0;
    double smoothing_weight = 0.5;
    double prior_floor = 1e-2;
    double cold_precision = 1e-9;
    int refine_sweeps = 5;
    double lobe_threshold_db = -10.0;

    // Allocation
    double gamma_th_db = 5.0;
    double outage_max = 0.01;
    int outage_samples = 10000;
    int tile_sweeps = 3;
    std::string objective = "sum"; // sum | min
    double outage_penalty = 100.0;

    std::uint64_t seed = 1;
};

// Visits every field as (name, reference). Order defines the serialized
// order of configuration dumps.
template <class Cfg, class F>
void visit_fields(Cfg &c, F &&f)
{
    f("n_bs_antennas", c.n_bs_antennas);
    f("n_ue_antennas", c.n_ue_antennas);
    f("n_ris_elements", c.n_ris_elements);
    f("grid_bs", c.grid_bs);
    f("grid_ris", c.grid_ris);
    f("grid_ue", c.grid_ue);
    f("n_cues", c.n_cues);
    f("n_due_pairs", c.n_due_pairs);
    f("n_tiles", c.n_tiles);
    f("n_pscs", c.n_pscs);
    f("pr_ris_elements", c.pr_ris_elements);
    f("carrier_hz", c.carrier_hz);
    f("slot_duration_s", c.slot_duration_s);
    f("slots_per_subframe", c.slots_per_subframe);
    f("pilots_angle", c.pilots_angle);
    f("pilots_doppler", c.pilots_doppler);
    f("data_symbols", c.data_symbols);
    f("feedback_symbols_header", c.feedback_symbols_header);
    f("feedback_symbols", c.feedback_symbols);
    f("pscch_symbols", c.pscch_symbols);
    f("pscch_prbs", c.pscch_prbs);
    f("psfch_symbols", c.psfch_symbols);
    f("psfch_prbs", c.psfch_prbs);
    f("n_subchannels", c.n_subchannels);
    f("prbs_per_subchannel", c.prbs_per_subchannel);
    f("power_coeff_pssch", c.power_coeff_pssch);
    f("power_coeff_pscch", c.power_coeff_pscch);
    f("power_coeff_psfch", c.power_coeff_psfch);
    f("benchmark_frame", c.benchmark_frame);
    f("eta_denominator", c.eta_denominator);
    f("sensing_window", c.sensing_window);
    f("selection_window", c.selection_window);
    f("n_lanes", c.n_lanes);
    f("lane_width_m", c.lane_width_m);
    f("road_length_m", c.road_length_m);
    f("bs_offset_m", c.bs_offset_m);
    f("bs_height_m", c.bs_height_m);
    f("ris_position_m", c.ris_position_m);
    f("ris_lateral_m", c.ris_lateral_m);
    f("ris_height_m", c.ris_height_m);
    f("drop_center_m", c.drop_center_m);
    f("drop_window_m", c.drop_window_m);
    f("max_v2v_range_m", c.max_v2v_range_m);
    f("vehicle_speed_mps", c.vehicle_speed_mps);
    f("in_vehicle_distance_m", c.in_vehicle_distance_m);
    f("rician_k_db", c.rician_k_db);
    f("rician_k_hop_db", c.rician_k_hop_db);
    f("rician_k_cabin_db", c.rician_k_cabin_db);
    f("pathloss_exponent_direct", c.pathloss_exponent_direct);
    f("pathloss_exponent_cascaded", c.pathloss_exponent_cascaded);
    f("pathloss_ref_db", c.pathloss_ref_db);
    f("noise_dbm", c.noise_dbm);
    f("ris_noise_dbm", c.ris_noise_dbm);
    f("ue_power_dbm", c.ue_power_dbm);
    f("due_power_dbm", c.due_power_dbm);
    f("p_active_max_dbm", c.p_active_max_dbm);
    f("csi_delay_s", c.csi_delay_s);
    f("direct_v2i_blocked", c.direct_v2i_blocked);
    f("n_common_paths", c.n_common_paths);
    f("n_individual_paths", c.n_individual_paths);
    f("p_keep", c.p_keep);
    f("offgrid_fraction", c.offgrid_fraction);
    f("prior_shape", c.prior_shape);
    f("prior_rate", c.prior_rate);
    f("normalize_path_power", c.normalize_path_power);
    f("snr_db", c.snr_db);
    f("smoothing_weight", c.smoothing_weight);
    f("prior_floor", c.prior_floor);
    f("cold_precision", c.cold_precision);
    f("refine_sweeps", c.refine_sweeps);
    f("lobe_threshold_db", c.lobe_threshold_db);
    f("gamma_th_db", c.gamma_th_db);
    f("outage_max", c.outage_max);
    f("outage_samples", c.outage_samples);
    f("tile_sweeps", c.tile_sweeps);
    f("objective", c.objective);
    f("outage_penalty", c.outage_penalty);
    f("seed", c.seed);
}

namespace detail
{
inline std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

inline void parse_value(const std::string &key, const std::string &v, int &out)
{
    int x = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || p != v.data() + v.size())
        throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
    out = x;
}

inline void parse_value(const std::string &key, const std::string &v, std::uint64_t &out)
{
    std::uint64_t x = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || p != v.data() + v.size())
        throw ConfigError("key '" + key + "': expected an unsigned integer, got '" + v + "'");
    out = x;
}

inline void parse_value(const std::string &key, const std::string &v, double &out)
{
    try
    {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size())
            throw std::invalid_argument(v);
        out = x;
    }
    catch (const std::exception &)
    {
        throw ConfigError("key '" + key + "': expected a real number, got '" + v + "'");
    }
}

inline void parse_value(const std::string &key, const std::string &v, bool &out)
{
    if (v == "true" || v == "1" || v == "yes")
        out = true;
    else if (v == "false" || v == "0" || v == "no")
        out = false;
    else
        throw ConfigError("key '" + key + "': expected true/false, got '" + v + "'");
}

inline void parse_value(const std::string &, const std::string &v, std::string &out) { out = v; }

inline std::string format_value(int v) { return std::to_string(v); }
inline std::string format_value(std::uint64_t v) { return std::to_string(v); }
inline std::string format_value(bool v) { return v ? "true" : "false"; }
inline std::string format_value(const std::string &v) { return v; }
inline std::string format_value(double v)
{
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}
} // namespace detail

// Sets one field from its textual form.
inline void set_field(ScenarioConfig &c, const std::string &key, const std::string &value)
{
    bool found = false;
    visit_fields(c, [&](const char *name, auto &field) {
        if (key == name)
        {
            detail::parse_value(key, value, field);
            found = true;
        }
    });
    if (!found)
        throw ConfigError("unknown configuration key '" + key + "'");
}

inline bool has_field(const std::string &key)
{
    ScenarioConfig c;
    bool found = false;
    visit_fields(c, [&](const char *name, auto &) { found = found || key == name; });
    return found;
}

// Applies "key=value" (or "key = value") assignments.
inline void apply_assignment(ScenarioConfig &c, const std::string &assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError("expected key=value, got '" + assignment + "'");
    set_field(c, detail::trim(assignment.substr(0, eq)), detail::trim(assignment.substr(eq + 1)));
}

// Ordered key/value dump, used for metadata blocks and config files.
inline std::vector<std::pair<std::string, std::string>> to_key_values(const ScenarioConfig &c)
{
    std::vector<std::pair<std::string, std::string>> kv;
    visit_fields(const_cast<ScenarioConfig &>(c),
                 [&](const char *name, auto &field) { kv.emplace_back(name, detail::format_value(field)); });
    return kv;
}

inline std::string to_config_text(const ScenarioConfig &c)
{
    std::string s;
    for (const auto &[k, v] : to_key_values(c))
        s += k + " = " + v + "\n";
    return s;
}

// Configuration files hold one "key = value" per line; '#' starts a comment.
inline ScenarioConfig parse_config_text(const std::string &text, ScenarioConfig base = {})
{
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line))
    {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos)
            line.resize(hash);
        const std::string t = detail::trim(line);
        if (t.empty())
            continue;
        try
        {
            apply_assignment(base, t);
        }
        catch (const ConfigError &e)
        {
            throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return base;
}

inline ScenarioConfig load_config(const std::string &path, ScenarioConfig base = {})
{
    std::ifstream f(path);
    if (!f)
        throw ConfigError("cannot read configuration file '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str(), std::move(base));
}

// Throws ConfigError naming the first violated invariant.
inline void validate(const ScenarioConfig &c)
{
    auto need = [](bool ok, const std::string &what) {
        if (!ok)
            throw ConfigError("invariant violated: " + what);
    };
    need(c.n_bs_antennas >= 1, "n_bs_antennas >= 1");
    need(c.n_ue_antennas >= 1, "n_ue_antennas >= 1");
    need(c.n_ris_elements >= 1, "n_ris_elements >= 1");
    need(c.n_cues >= 0, "n_cues >= 0");
    need(c.n_due_pairs >= 0, "n_due_pairs >= 0");
    need(c.n_tiles >= 1, "n_tiles >= 1");
    need(c.n_pscs >= 1, "n_pscs >= 1");
    need(c.grid_bs >= c.n_bs_antennas, "grid_bs >= n_bs_antennas");
    need(c.grid_ris >= c.n_ris_elements, "grid_ris >= n_ris_elements");
    need(c.grid_ue >= c.n_ue_antennas, "grid_ue >= n_ue_antennas");
    need(c.slots_per_subframe >= 1, "slots_per_subframe >= 1");
    need(c.pilots_doppler >= 1, "pilots_doppler >= 1");
    need(c.pilots_angle >= c.pilots_doppler, "pilots_angle >= pilots_doppler");
    need(c.data_symbols >= 1, "data_symbols >= 1");
    need(c.n_subchannels >= 1, "n_subchannels >= 1");
    need(c.prbs_per_subchannel >= 1, "prbs_per_subchannel >= 1");
    need(c.pr_ris_elements >= 1 && c.pr_ris_elements % c.n_tiles == 0, "pr_ris_elements divisible by n_tiles");
    need(std::abs(c.slot_duration_s * c.slots_per_subframe * 10.0 - 0.01) <= 1e-9,
         "slot_duration_s * slots_per_subframe * 10 == 10 ms radio frame");
    need(c.feedback_symbols >= 0 && c.feedback_symbols_header >= 0, "feedback symbol counts >= 0");
    need(c.pscch_symbols >= 0 && c.pscch_prbs >= 0 && c.psfch_symbols >= 0 && c.psfch_prbs >= 0,
         "control channel counts >= 0");
    need(c.power_coeff_pssch >= 0 && c.power_coeff_pscch >= 0 && c.power_coeff_psfch >= 0,
         "power coefficients >= 0");
    need(c.eta_denominator == "pilots" || c.eta_denominator == "total", "eta_denominator in {pilots, total}");
    need(c.sensing_window >= 1 && c.selection_window >= 1, "sensing and selection windows >= 1 slot");
    need(c.n_lanes >= 1, "n_lanes >= 1");
    need(c.lane_width_m > 0, "lane_width_m > 0");
    need(c.road_length_m > 0, "road_length_m > 0");
    need(c.drop_window_m >= 0 && c.drop_window_m <= c.road_length_m, "0 <= drop_window_m <= road_length_m");
    need(c.max_v2v_range_m > 0, "max_v2v_range_m > 0");
    need(c.in_vehicle_distance_m > 0, "in_vehicle_distance_m > 0");
    need(c.carrier_hz > 0, "carrier_hz > 0");
    need(c.vehicle_speed_mps >= 0, "vehicle_speed_mps >= 0");
    need(c.csi_delay_s >= 0, "csi_delay_s >= 0");
    need(std::isfinite(c.rician_k_db) || c.rician_k_db > 0, "rician_k_db finite or +inf");
    need(c.pathloss_exponent_direct > 0 && c.pathloss_exponent_cascaded > 0, "path-loss exponents > 0");
    need(std::isfinite(c.noise_dbm) && std::isfinite(c.ris_noise_dbm), "noise powers finite");
    need(c.n_common_paths >= 1 && c.n_individual_paths >= 1, "path counts >= 1");
    need(c.n_common_paths <= c.grid_bs, "n_common_paths <= grid_bs");
    need(c.n_individual_paths <= c.grid_ris * c.grid_ue, "n_individual_paths <= grid_ris * grid_ue");
    need(c.p_keep >= 0 && c.p_keep <= 1, "p_keep in [0, 1]");
    need(c.offgrid_fraction >= 0 && c.offgrid_fraction <= 1, "offgrid_fraction in [0, 1]");
    need(c.prior_shape > 0 && c.prior_rate > 0, "prior shape and rate > 0");
    need(c.smoothing_weight >= 0 && c.smoothing_weight <= 1, "smoothing_weight in [0, 1]");
    need(c.prior_floor > 0 && c.prior_floor < 1, "prior_floor in (0, 1)");
    need(c.cold_precision > 0, "cold_precision > 0");
    need(c.refine_sweeps >= 0, "refine_sweeps >= 0");
    need(c.outage_max > 0 && c.outage_max < 1, "outage_max in (0, 1)");
    need(c.outage_samples >= 1, "outage_samples >= 1");
    need(c.tile_sweeps >= 1, "tile_sweeps >= 1");
    need(c.objective == "sum" || c.objective == "min", "objective in {sum, min}");
}

} // namespace risv2x
