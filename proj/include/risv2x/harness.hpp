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

#include "allocator.hpp"
#include "dts_tracker.hpp"
#include "protocol.hpp"
#include "scenario.hpp"

#include <atomic>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <mutex>
#include <thread>

namespace risv2x
{

inline constexpr const char *version_tag = "risv2x 0.1.0";

struct ExperimentSpec
{
    std::string name;
    std::string sweep_param; // empty: the experiment's default axis
    std::vector<double> sweep_values;
    int drops = 200;
    std::vector<std::string> config_overrides; // key=value
    std::string output_path;
    std::optional<std::uint64_t> seed;
    unsigned workers = 0; // 0: hardware concurrency
};

inline const std::vector<std::string> &experiment_names()
{
    static const std::vector<std::string> names{"overhead_vs_n",    "power_vs_subchannels", "capacity_vs_speed",
                                                "capacity_vs_distance", "tracking_nmse",     "channel_stats"};
    return names;
}

inline std::string experiment_description(const std::string &name)
{
    if (name == "overhead_vs_n")
        return "pilot overhead of the header-slot frame vs RIS size (M_A scales with N)";
    if (name == "power_vs_subchannels")
        return "sidelink transmit power vs number of subchannels, proposed and benchmark frames";
    if (name == "capacity_vs_speed")
        return "active-RIS uplink capacity vs speed, robust and non-robust, I-CSI and S-CSI";
    if (name == "capacity_vs_distance")
        return "AT (vehicle active RIS) vs PR (roadside passive RIS) capacity vs RIS position";
    if (name == "tracking_nmse")
        return "twin-structured tracking NMSE and support recovery vs SNR, with an OMP baseline";
    if (name == "channel_stats")
        return "aging correlation, gain energy and RIS angular statistics vs speed";
    throw UsageError("unknown experiment '" + name + "'");
}

// Per-experiment default axis and any settings the figure fixes.
struct ExperimentDefaults
{
    std::string sweep_param;
    std::vector<double> sweep_values;
    std::vector<std::string> overrides;
};

inline ExperimentDefaults experiment_defaults(const std::string &name)
{
    if (name == "overhead_vs_n")
        return {"n_ris_elements", {16, 32, 48, 64, 80, 96, 112, 128}, {}};
    if (name == "power_vs_subchannels")
        return {"n_subchannels", {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, {}};
    if (name == "capacity_vs_speed")
        return {"vehicle_speed_mps", {0, 10, 20, 30, 40, 50}, {}};
    if (name == "capacity_vs_distance")
        return {"ris_position_m",
                {50, 100, 150, 200, 250, 300, 350, 400, 450},
                {"n_cues=5", "n_due_pairs=5", "drop_center_m=500", "drop_window_m=100"}};
    if (name == "tracking_nmse")
        return {"snr_db", {0, 5, 10, 15, 20, 25, 30}, {}};
    if (name == "channel_stats")
        return {"vehicle_speed_mps", {0, 10, 20, 30, 40, 50}, {}};
    std::string valid;
    for (const auto &n : experiment_names())
        valid += (valid.empty() ? "" : ", ") + n;
    throw UsageError("unknown experiment '" + name + "' (valid: " + valid + ")");
}

// ---- Tables ----------------------------------------------------------------

struct MetricsTable
{
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
    std::vector<std::pair<std::string, std::string>> metadata;

    int column_index(const std::string &name) const
    {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name)
                return int(i);
        throw ArgumentError("MetricsTable: no column '" + name + "'");
    }
    std::vector<double> column(const std::string &name) const
    {
        const int i = column_index(name);
        std::vector<double> out;
        for (const auto &r : rows)
            out.push_back(r[i]);
        return out;
    }
    std::string meta(const std::string &key) const
    {
        for (const auto &[k, v] : metadata)
            if (k == key)
                return v;
        throw ArgumentError("MetricsTable: no metadata '" + key + "'");
    }
};

struct Summary
{
    double mean = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double std_dev = 0.0;
    int n = 0;
};

// Normal-approximation 95% interval; summation in index order.
inline Summary summarize(const std::vector<double> &x)
{
    Summary s;
    s.n = int(x.size());
    if (x.empty())
    {
        s.mean = s.ci_low = s.ci_high = std::numeric_limits<double>::quiet_NaN();
        return s;
    }
    KahanSum sum;
    for (double v : x)
        sum.add(v);
    s.mean = sum.value() / s.n;
    if (s.n > 1)
    {
        KahanSum ss;
        for (double v : x)
            ss.add((v - s.mean) * (v - s.mean));
        s.std_dev = std::sqrt(ss.value() / (s.n - 1));
    }
    const double h = 1.959963984540054 * s.std_dev / std::sqrt(double(s.n));
    s.ci_low = s.mean - h;
    s.ci_high = s.mean + h;
    return s;
}

// Per-drop samples of every metric at one sweep point.
struct PointSamples
{
    double sweep_value = 0.0;
    std::vector<std::string> metrics;
    std::vector<std::vector<double>> values; // [metric][drop]

    const std::vector<double> &get(const std::string &name) const
    {
        for (std::size_t i = 0; i < metrics.size(); ++i)
            if (metrics[i] == name)
                return values[i];
        throw ArgumentError("PointSamples: no metric '" + name + "'");
    }
};

struct ExperimentResult
{
    std::string name;
    std::string sweep_param;
    int drops = 0;
    ScenarioConfig config; // resolved, before the sweep value is applied
    std::vector<PointSamples> points;
};

inline MetricsTable tabulate(const ExperimentResult &r)
{
    MetricsTable t;
    t.metadata.emplace_back("experiment", r.name);
    t.metadata.emplace_back("version", version_tag);
    t.metadata.emplace_back("drops", std::to_string(r.drops));
    t.metadata.emplace_back("sweep", r.sweep_param);
    for (const auto &kv : to_key_values(r.config))
        t.metadata.push_back(kv);
    t.columns.push_back(r.sweep_param);
    t.columns.push_back("n");
    if (!r.points.empty())
        for (const auto &m : r.points.front().metrics)
        {
            t.columns.push_back(m + "_mean");
            t.columns.push_back(m + "_ci95_low");
            t.columns.push_back(m + "_ci95_high");
        }
    for (const auto &p : r.points)
    {
        std::vector<double> row{p.sweep_value, double(p.values.empty() ? 0 : p.values.front().size())};
        for (const auto &v : p.values)
        {
            const Summary s = summarize(v);
            row.push_back(s.mean);
            row.push_back(s.ci_low);
            row.push_back(s.ci_high);
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

// ---- Emit and parse ----------------------------------------------------------

namespace detail
{
inline std::string num(double v)
{
    if (std::isnan(v))
        return "nan";
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline double parse_num(const std::string &s)
{
    if (s == "nan")
        return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf")
        return std::numeric_limits<double>::infinity();
    if (s == "-inf")
        return -std::numeric_limits<double>::infinity();
    // from_chars is exact and, unlike stod, accepts subnormals.
    double v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size())
        throw ArgumentError("parse: bad number '" + s + "'");
    return v;
}

inline std::string json_string(const std::string &s) { return nlohmann::json(s).dump(); }

inline std::vector<std::string> split(const std::string &s, char sep)
{
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s)
    {
        if (ch == sep)
        {
            out.push_back(cur);
            cur.clear();
        }
        else
            cur += ch;
    }
    out.push_back(cur);
    return out;
}
} // namespace detail

inline std::string to_csv(const MetricsTable &t)
{
    std::string out;
    for (const auto &[k, v] : t.metadata)
        out += "# " + k + "=" + v + "\n";
    for (std::size_t i = 0; i < t.columns.size(); ++i)
        out += (i ? "," : "") + t.columns[i];
    out += "\n";
    for (const auto &r : t.rows)
    {
        for (std::size_t i = 0; i < r.size(); ++i)
            out += (i ? "," : "") + detail::num(r[i]);
        out += "\n";
    }
    return out;
}

// First record holds the metadata, then one object per row. Numbers are
// written with 17 significant digits; non-finite values as strings.
inline std::string to_jsonl(const MetricsTable &t)
{
    std::string out = "{\"metadata\":{";
    for (std::size_t i = 0; i < t.metadata.size(); ++i)
        out += (i ? "," : "") + detail::json_string(t.metadata[i].first) + ":" +
               detail::json_string(t.metadata[i].second);
    out += "},\"columns\":[";
    for (std::size_t i = 0; i < t.columns.size(); ++i)
        out += (i ? "," : "") + detail::json_string(t.columns[i]);
    out += "]}\n";
    for (const auto &r : t.rows)
    {
        out += "{";
        for (std::size_t i = 0; i < r.size(); ++i)
        {
            // Non-finite values travel as strings; "-0" would parse back as the integer 0.
            const std::string v = !std::isfinite(r[i])             ? "\"" + detail::num(r[i]) + "\""
                                  : r[i] == 0 && std::signbit(r[i]) ? std::string("-0.0")
                                                                    : detail::num(r[i]);
            out += (i ? "," : "") + detail::json_string(t.columns[i]) + ":" + v;
        }
        out += "}\n";
    }
    return out;
}

inline MetricsTable parse_csv(const std::string &text)
{
    MetricsTable t;
    std::istringstream is(text);
    std::string line;
    bool header = false;
    while (std::getline(is, line))
    {
        if (line.rfind("# ", 0) == 0)
        {
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ArgumentError("parse_csv: bad metadata line");
            t.metadata.emplace_back(line.substr(2, eq - 2), line.substr(eq + 1));
            continue;
        }
        if (line.empty())
            continue;
        const auto cells = detail::split(line, ',');
        if (!header)
        {
            t.columns = cells;
            header = true;
            continue;
        }
        if (cells.size() != t.columns.size())
            throw ArgumentError("parse_csv: row width does not match the header");
        std::vector<double> r;
        for (const auto &c : cells)
            r.push_back(detail::parse_num(c));
        t.rows.push_back(std::move(r));
    }
    return t;
}

inline MetricsTable parse_jsonl(const std::string &text)
{
    MetricsTable t;
    std::istringstream is(text);
    std::string line;
    bool first = true;
    while (std::getline(is, line))
    {
        if (line.empty())
            continue;
        const auto j = nlohmann::ordered_json::parse(line);
        if (first)
        {
            for (const auto &[k, v] : j.at("metadata").items())
                t.metadata.emplace_back(k, v.get<std::string>());
            t.columns = j.at("columns").get<std::vector<std::string>>();
            first = false;
            continue;
        }
        std::vector<double> r;
        for (const auto &c : t.columns)
        {
            const auto &v = j.at(c);
            r.push_back(v.is_string() ? detail::parse_num(v.get<std::string>()) : v.get<double>());
        }
        t.rows.push_back(std::move(r));
    }
    return t;
}

inline std::string render(const MetricsTable &t, const std::string &format)
{
    if (format == "csv")
        return to_csv(t);
    if (format == "jsonl")
        return to_jsonl(t);
    throw UsageError("unknown format '" + format + "' (valid: csv, jsonl)");
}

inline void emit(const MetricsTable &t, const std::string &format, const std::string &path)
{
    const std::string text = render(t, format);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os)
        throw std::runtime_error("cannot open '" + path + "' for writing");
    os << text;
    os.flush();
    if (!os)
        throw std::runtime_error("write failed for '" + path + "'");
}

// ---- Drivers -------------------------------------------------------------------

// Runs body(drop) for drop = 0..n-1 on a pool of threads. Results are stored
// by drop index, so the outcome does not depend on scheduling.
inline void parallel_drops(int n, unsigned workers, const std::function<void(int)> &body)
{
    if (workers == 0)
        workers = std::max(1u, std::thread::hardware_concurrency());
    workers = std::min<unsigned>(workers, unsigned(std::max(n, 1)));
    if (workers <= 1)
    {
        for (int d = 0; d < n; ++d)
            body(d);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr err;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (;;)
            {
                const int d = next.fetch_add(1);
                if (d >= n)
                    return;
                try
                {
                    body(d);
                }
                catch (...)
                {
                    std::lock_guard lk(mu);
                    if (!err)
                        err = std::current_exception();
                    next = n;
                }
            }
        });
    for (auto &t : pool)
        t.join();
    if (err)
        std::rethrow_exception(err);
}

// Config of one sweep point. Sweeping the surface size also scales the angle
// training (M_A proportional to N, anchored at N = 80) and widens the RIS grid.
inline ScenarioConfig sweep_point(const ScenarioConfig &base, const std::string &param, double value)
{
    ScenarioConfig c = base;
    set_field(c, param, detail::format_value(value));
    if (param == "n_ris_elements")
    {
        c.grid_ris = std::max(c.grid_ris, c.n_ris_elements);
        c.pilots_angle = std::max(c.pilots_doppler,
                                  int(std::lround(double(base.pilots_angle) * c.n_ris_elements / 80.0)));
    }
    validate(c);
    return c;
}

struct DropMetrics
{
    std::vector<std::string> names;
    std::function<std::vector<double>(const ScenarioConfig &, const Rng &, int drop)> run;
};

inline PointSamples run_point(const ScenarioConfig &c, double value, int drops, const DropMetrics &dm,
                              unsigned workers)
{
    PointSamples p;
    p.sweep_value = value;
    p.metrics = dm.names;
    std::vector<std::vector<double>> per_drop(drops);
    const Rng rng(c.seed);
    parallel_drops(drops, workers, [&](int d) { per_drop[d] = dm.run(c, rng, d); });
    p.values.assign(dm.names.size(), std::vector<double>(drops));
    for (int d = 0; d < drops; ++d)
    {
        if (per_drop[d].size() != dm.names.size())
            throw std::logic_error("metric count mismatch");
        for (std::size_t k = 0; k < dm.names.size(); ++k)
            p.values[k][d] = per_drop[d][k];
    }
    return p;
}

// Frame accounting is deterministic; every drop gives the same sample.
inline DropMetrics overhead_metrics()
{
    return {{"pilots_angle", "proposed_pilots", "benchmark_pilots", "eta", "reduction", "eta_total"},
            [](const ScenarioConfig &c, const Rng &, int) {
                const auto f = build_frame(c, 0, false);
                const auto b = build_frame(c, 0, true);
                const double eta = overhead_ratio(f, "pilots");
                return std::vector<double>{double(c.pilots_angle), double(frame_pilots(f)),
                                           double(frame_pilots(b)), eta, 1.0 - eta, overhead_ratio(f, "total")};
            }};
}

inline DropMetrics power_metrics()
{
    return {{"proposed_total", "proposed_pssch", "pscch", "psfch", "benchmark_total", "benchmark_pssch", "pssch_prbs"},
            [](const ScenarioConfig &c, const Rng &, int) {
                const auto p = total_power(c, false);
                const auto b = total_power(c, true);
                return std::vector<double>{p.total, p.pssch, p.pscch, p.psfch, b.total, b.pssch, double(p.pssch_prbs)};
            }};
}

// Active RIS on a vehicle at x_RIS carrying the CUEs. The CSI is the channel
// csi_delay_s before transmission; the truth is that channel aged by the
// Jakes correlation at the current speed. The I-CSI schemes design both the
// RIS and the combiner from the aged estimate; the S-CSI schemes design the
// RIS from the statistics and the combiner from the aged estimate.
struct SpeedDrop
{
    double i_robust, i_nonrobust, s_robust, s_nonrobust;
};

inline SpeedDrop capacity_speed_drop(const ScenarioConfig &c, const Rng &rng, int drop)
{
    const Geometry geo = build_vehicle_ris_scenario(c, rng, std::uint64_t(drop));
    auto e = rng.stream("speed.links", std::uint64_t(drop));
    const AtLinks est = draw_at_links(geo, c, e);
    const double rho = jakes_rho(c.vehicle_speed_mps, c.carrier_hz, c.csi_delay_s);
    const AtLinks truth = age_at_links(est, rho, e);
    const CsiView tv = true_view(truth);
    const Mode1Params p = mode1_params(c, int(geo.cues.size()));
    SpeedDrop out{};
    for (int robust = 1; robust >= 0; --robust)
    {
        const CsiView vi = apply_csi_view(est, rho, CsiKind::I_CSI, robust);
        const CsiView vs = apply_csi_view(est, rho, CsiKind::S_CSI, robust);
        const Mode1Result rs = optimize_mode1(vs, p);
        Mode1Options oi;
        oi.extra_inits = {rs.v};
        const Mode1Result ri = optimize_mode1(vi, p, oi);
        const double ci = mode1_capacity(tv, p, ri.v, ri.combiner);
        const double cs = mode1_capacity(tv, p, rs.v, Mode1Objective(vi, p).mmse(rs.v));
        (robust ? out.i_robust : out.i_nonrobust) = ci;
        (robust ? out.s_robust : out.s_nonrobust) = cs;
    }
    return out;
}

inline DropMetrics speed_metrics()
{
    return {{"i_csi_robust", "i_csi_nonrobust", "s_csi_robust", "s_csi_nonrobust", "gap_i_csi", "gap_s_csi",
             "i_minus_s_robust", "i_minus_s_nonrobust", "rho"},
            [](const ScenarioConfig &c, const Rng &rng, int d) {
                const auto r = capacity_speed_drop(c, rng, d);
                return std::vector<double>{r.i_robust,
                                           r.i_nonrobust,
                                           r.s_robust,
                                           r.s_nonrobust,
                                           r.i_robust - r.i_nonrobust,
                                           r.s_robust - r.s_nonrobust,
                                           r.i_robust - r.s_robust,
                                           r.i_nonrobust - r.s_nonrobust,
                                           jakes_rho(c.vehicle_speed_mps, c.carrier_hz, c.csi_delay_s)};
            }};
}

// AT: the active-RIS vehicle sits at x_RIS with the CUEs inside, designed on
// the current channel. PR: a roadside passive surface of pr_ris_elements at
// x_RIS serves CUEs and V2V pairs dropped in the drop window, direct V2I
// links blocked. Both report the sum capacity over the CUEs.
struct DistanceDrop
{
    double at, pr, pr_unmatched, pr_outage_max;
};

inline DistanceDrop capacity_distance_drop(const ScenarioConfig &c, const Rng &rng, int drop)
{
    DistanceDrop out{};
    {
        const Geometry geo = build_vehicle_ris_scenario(c, rng, std::uint64_t(drop));
        auto e = rng.stream("distance.at", std::uint64_t(drop));
        const AtLinks l = draw_at_links(geo, c, e);
        const CsiView tv = true_view(l);
        const Mode1Params p = mode1_params(c, int(geo.cues.size()));
        const Mode1Result r = optimize_mode1(tv, p);
        out.at = mode1_capacity(tv, p, r.v, r.combiner);
    }
    {
        const Geometry geo = build_freeway_scenario(c, rng, std::uint64_t(drop));
        auto e = rng.stream("distance.pr", std::uint64_t(drop));
        const PrLinks l = draw_pr_links(geo, c, e);
        const PscCodebook cb = build_psc_codebook(c);
        const Mode2Params p = mode2_params(c);
        const AllocationDecision dec = optimize_mode2(l, cb, c.n_tiles, p);
        const TileContributions tc(l, cb, c.n_tiles);
        out.pr = v2i_capacity(dec, tc, p);
        out.pr_unmatched = double(dec.unmatched_dues.size());
        auto eo = rng.stream("distance.outage", std::uint64_t(drop));
        const RVec o = v2v_outage(dec, tc, p, eo);
        double worst = 0;
        for (int d = 0; d < o.size(); ++d)
            if (dec.reuse[d] >= 0)
                worst = std::max(worst, o(d));
        out.pr_outage_max = worst;
    }
    return out;
}

inline DropMetrics distance_metrics()
{
    return {{"at_capacity", "pr_capacity", "at_minus_pr", "pr_unmatched_dues", "pr_worst_outage"},
            [](const ScenarioConfig &c, const Rng &rng, int d) {
                const auto r = capacity_distance_drop(c, rng, d);
                return std::vector<double>{r.at, r.pr, r.at - r.pr, r.pr_unmatched, r.pr_outage_max};
            }};
}

// One tracking drop: header slot with 2 x sparsity pilots, then the rest of
// the sub-frame with Doppler-only pilots on the aging channel.
struct TrackingDrop
{
    double nmse_header = 0, nmse_subframe = 0, recovered = 0, omp_nmse = 0, omp_recovered = 0;
};

inline TrackingDrop tracking_drop(const ScenarioConfig &c, const Rng &rng, int drop)
{
    const Geometry geo = build_vehicle_ris_scenario(c, rng, std::uint64_t(drop));
    auto e = rng.stream("tracking", std::uint64_t(drop));
    const GridDims g = grid_dims(c);
    const int M = int(geo.cues.size());
    const SupportPattern s = generate_support(g, M, c.n_common_paths, c.n_individual_paths, nullptr, 1.0, e);
    const Dictionary dict = draw_offsets(c, s, c.offgrid_fraction, e);
    CascadedChannel ch = synthesize_channel(s, dict, gain_prior(c), geo, c, e);
    const int header_pilots = 2 * c.n_common_paths * c.n_individual_paths;
    const PilotPattern hp = random_pilots(header_pilots, c.n_ris_elements, c.n_ue_antennas, e);
    const PilotObservation obs = observe(ch, hp, c.snr_db, e);
    const TrackerOptions o = tracker_options(c);
    TrackerState st = cold_state(c, M, o);
    auto [est, st2] = track_slot(obs, st, o, true);
    TrackingDrop out;
    double num = 0, den = 0;
    int rec = 1, omp_rec = 0;
    double onum = 0;
    const Dictionary nominal = build_dictionary(c);
    for (int m = 0; m < M; ++m)
    {
        num += (est.z_dense(m) - ch.z_dense(m)).squaredNorm();
        den += ch.z_dense(m).squaredNorm();
        rec &= same_atoms(est.atoms[m], s.atoms(m)) ? 1 : 0;
        const auto oa = omp_unstructured(obs.y[m], nominal, hp, int(s.atoms(m).size()));
        onum += (dense_gains(oa, ls_gains(obs.y[m], nominal, hp, oa), g) - ch.z_dense(m)).squaredNorm();
        omp_rec += same_atoms(oa, s.atoms(m)) ? 1 : 0;
    }
    out.nmse_header = num / den;
    out.recovered = rec;
    out.omp_nmse = onum / den;
    out.omp_recovered = double(omp_rec) / std::max(M, 1);

    double sub = out.nmse_header;
    st = st2;
    for (int slot = 1; slot < c.slots_per_subframe; ++slot)
    {
        ch = age_channel(ch, c.vehicle_speed_mps, c.slot_duration_s, c.carrier_hz, e);
        const PilotPattern dp = random_pilots(c.pilots_doppler, c.n_ris_elements, c.n_ue_antennas, e);
        const PilotObservation ob = observe(ch, dp, c.snr_db, e);
        auto [es, sn] = track_slot(ob, st, o, false);
        double n2 = 0, d2 = 0;
        for (int m = 0; m < M; ++m)
        {
            n2 += (es.z_dense(m) - ch.z_dense(m)).squaredNorm();
            d2 += ch.z_dense(m).squaredNorm();
        }
        sub += n2 / d2;
        st = sn;
    }
    out.nmse_subframe = sub / c.slots_per_subframe;
    return out;
}

inline DropMetrics tracking_metrics()
{
    return {{"dts_nmse", "dts_nmse_subframe", "dts_recovered", "omp_nmse", "omp_recovered"},
            [](const ScenarioConfig &c, const Rng &rng, int d) {
                const auto r = tracking_drop(c, rng, d);
                return std::vector<double>{r.nmse_header, r.nmse_subframe, r.recovered, r.omp_nmse,
                                           r.omp_recovered};
            }};
}

// Aging over one slot: empirical gain correlation against the Jakes
// value, energy preservation, cascaded gain, and RIS departure statistics.
inline DropMetrics channel_stats_metrics()
{
    return {{"rho_theory", "rho_empirical", "energy_ratio", "cascade_gain_db", "ris_lobes", "ris_spread_rad"},
            [](const ScenarioConfig &c, const Rng &rng, int d) {
                const Geometry geo = build_vehicle_ris_scenario(c, rng, std::uint64_t(d));
                auto e = rng.stream("stats", std::uint64_t(d));
                const SupportPattern s = generate_support(grid_dims(c), int(geo.cues.size()), c.n_common_paths,
                                                          c.n_individual_paths, nullptr, 1.0, e);
                const Dictionary dict = draw_offsets(c, s, c.offgrid_fraction, e);
                const CascadedChannel ch = synthesize_channel(s, dict, gain_prior(c), geo, c, e);
                const double dt = c.slot_duration_s;
                const CascadedChannel aged = age_channel(ch, c.vehicle_speed_mps, dt, c.carrier_hz, e);
                double cross = 0, e0 = 0, e1 = 0;
                for (int m = 0; m < ch.n_ues(); ++m)
                {
                    const CVec a = ch.z_dense(m), b = aged.z_dense(m);
                    cross += std::real(a.dot(b));
                    e0 += a.squaredNorm();
                    e1 += b.squaredNorm();
                }
                const AngularStats as =
                    ch.f_ris_ue.empty() ? AngularStats{} : angular_stats(ch.f_ris_ue[0].col(0), c.lobe_threshold_db);
                return std::vector<double>{jakes_rho(c.vehicle_speed_mps, c.carrier_hz, dt),
                                           cross / e0,
                                           e1 / e0,
                                           lin2db(e0 / std::max(1, ch.n_ues())),
                                           double(as.lobes),
                                           as.spread_rad};
            }};
}

inline DropMetrics experiment_metrics(const std::string &name)
{
    if (name == "overhead_vs_n")
        return overhead_metrics();
    if (name == "power_vs_subchannels")
        return power_metrics();
    if (name == "capacity_vs_speed")
        return speed_metrics();
    if (name == "capacity_vs_distance")
        return distance_metrics();
    if (name == "tracking_nmse")
        return tracking_metrics();
    if (name == "channel_stats")
        return channel_stats_metrics();
    experiment_defaults(name); // throws the usage error
    return {};
}

// Base config + the experiment's fixed settings + user overrides + seed.
inline ScenarioConfig resolve_config(const ExperimentSpec &spec, ScenarioConfig base = {})
{
    const auto def = experiment_defaults(spec.name);
    for (const auto &a : def.overrides)
        apply_assignment(base, a);
    for (const auto &a : spec.config_overrides)
        apply_assignment(base, a);
    if (spec.seed)
        base.seed = *spec.seed;
    validate(base);
    return base;
}

inline ExperimentResult run_experiment_samples(const ExperimentSpec &spec, const ScenarioConfig &base = {})
{
    if (spec.drops < 1)
        throw UsageError("drops must be >= 1");
    const auto def = experiment_defaults(spec.name);
    ExperimentResult r;
    r.name = spec.name;
    r.sweep_param = spec.sweep_param.empty() ? def.sweep_param : spec.sweep_param;
    if (!has_field(r.sweep_param))
        throw UsageError("unknown sweep parameter '" + r.sweep_param + "'");
    const auto values = spec.sweep_values.empty() ? def.sweep_values : spec.sweep_values;
    r.config = resolve_config(spec, base);
    r.drops = spec.drops;
    const DropMetrics dm = experiment_metrics(spec.name);
    for (double v : values)
        r.points.push_back(run_point(sweep_point(r.config, r.sweep_param, v), v, r.drops, dm, spec.workers));
    return r;
}

inline MetricsTable run_experiment(const ExperimentSpec &spec, const ScenarioConfig &base = {})
{
    return tabulate(run_experiment_samples(spec, base));
}

} // namespace risv2x
