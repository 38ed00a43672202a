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

#include "config.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string_view>

namespace risv2x
{

enum class ChannelTag
{
    AGC,
    PSCCH,
    PSSCH,
    PSFCH,
    GUARD
};

inline const char *to_string(ChannelTag t)
{
    switch (t)
    {
    case ChannelTag::AGC: return "AGC";
    case ChannelTag::PSCCH: return "PSCCH";
    case ChannelTag::PSSCH: return "PSSCH";
    case ChannelTag::PSFCH: return "PSFCH";
    case ChannelTag::GUARD: return "GUARD";
    }
    return "?";
}

// Phase 1 carries the pilots (angle plus Doppler training in the header,
// Doppler only afterwards), phase 2 the feedback, phase 3 the data.
struct SlotPlan
{
    int phase1_pilots = 0;
    int phase2_feedback_symbols = 0;
    int phase3_data_symbols = 0;
    bool header = false;
    std::vector<ChannelTag> channels;
};

struct FrameSchedule
{
    std::vector<SlotPlan> slots;
    int subframe_index = 0;
    bool benchmark = false;
};

// Symbol layout per slot: AGC, PSCCH control, PSSCH (pilots then data),
// PSFCH feedback, GUARD. The benchmark repeats angle training in every slot.
inline FrameSchedule build_frame(const ScenarioConfig &c, int subframe_index, std::optional<bool> benchmark = {})
{
    FrameSchedule f;
    f.subframe_index = subframe_index;
    f.benchmark = benchmark.value_or(c.benchmark_frame);
    for (int s = 0; s < c.slots_per_subframe; ++s)
    {
        SlotPlan p;
        p.header = s == 0;
        p.phase1_pilots = (p.header || f.benchmark) ? c.pilots_angle + c.pilots_doppler : c.pilots_doppler;
        p.phase2_feedback_symbols = p.header ? c.feedback_symbols_header : c.feedback_symbols;
        p.phase3_data_symbols = c.data_symbols;
        p.channels.push_back(ChannelTag::AGC);
        p.channels.insert(p.channels.end(), c.pscch_symbols, ChannelTag::PSCCH);
        p.channels.insert(p.channels.end(), p.phase1_pilots + p.phase3_data_symbols, ChannelTag::PSSCH);
        p.channels.insert(p.channels.end(), p.phase2_feedback_symbols, ChannelTag::PSFCH);
        p.channels.push_back(ChannelTag::GUARD);
        f.slots.push_back(std::move(p));
    }
    return f;
}

inline int frame_pilots(const FrameSchedule &f)
{
    int n = 0;
    for (const auto &s : f.slots)
        n += s.phase1_pilots;
    return n;
}

// Pilot overhead ratio. "pilots" divides by the pilots the per-slot-training
// benchmark spends on the same frame (every slot costs what the header
// costs); "total" divides the frame's pilots by its pilots plus data.
inline double overhead_ratio(const FrameSchedule &f, std::string_view denominator = "pilots")
{
    if (f.slots.empty())
        throw ArgumentError("overhead_ratio: empty schedule");
    const double num = frame_pilots(f);
    if (denominator == "pilots")
    {
        const double den = double(f.slots.size()) * f.slots.front().phase1_pilots;
        return den > 0 ? num / den : 0.0;
    }
    if (denominator == "total")
    {
        double data = 0;
        for (const auto &s : f.slots)
            data += s.phase3_data_symbols;
        return num + data > 0 ? num / (num + data) : 0.0;
    }
    throw ArgumentError("overhead_ratio: unknown denominator '" + std::string(denominator) + "'");
}

struct PowerBreakdown
{
    double total = 0.0;
    double pssch = 0.0;
    double pscch = 0.0;
    double psfch = 0.0;
    int pssch_prbs = 0;
};

// Per sub-frame: every channel costs coefficient x PRBs x symbols.
inline PowerBreakdown total_power(const ScenarioConfig &c, std::optional<bool> benchmark = {})
{
    if (c.power_coeff_pssch < 0 || c.power_coeff_pscch < 0 || c.power_coeff_psfch < 0)
        throw ArgumentError("total_power: negative coefficient");
    const auto f = build_frame(c, 0, benchmark);
    PowerBreakdown p;
    p.pssch_prbs = c.n_subchannels * c.prbs_per_subchannel;
    double pssch_sym = 0, psfch_sym = 0;
    for (const auto &s : f.slots)
    {
        pssch_sym += s.phase1_pilots + s.phase3_data_symbols;
        psfch_sym += s.phase2_feedback_symbols;
    }
    p.pssch = c.power_coeff_pssch * p.pssch_prbs * pssch_sym;
    p.pscch = c.power_coeff_pscch * c.pscch_prbs * double(c.pscch_symbols) * double(f.slots.size());
    p.psfch = c.power_coeff_psfch * c.psfch_prbs * psfch_sym;
    p.total = p.pssch + p.pscch + p.psfch;
    return p;
}

// Accounting report: one JSON record per sub-frame with the overhead ratio,
// its reduction and the power breakdown. Numbers carry 17 significant digits.
inline std::string accounting_jsonl(const ScenarioConfig &c, int n_subframes, std::optional<bool> benchmark = {})
{
    if (n_subframes < 0)
        throw ArgumentError("accounting_jsonl: negative sub-frame count");
    auto num = [](double v) {
        char b[40];
        std::snprintf(b, sizeof b, "%.17g", v);
        return std::string(b);
    };
    std::string out;
    for (int i = 0; i < n_subframes; ++i)
    {
        const auto f = build_frame(c, i, benchmark);
        const double eta = overhead_ratio(f, c.eta_denominator);
        const auto pw = total_power(c, benchmark);
        out += "{\"subframe\":" + std::to_string(i) + ",\"benchmark\":" + (f.benchmark ? "true" : "false") +
               ",\"pilots\":" + std::to_string(frame_pilots(f)) + ",\"eta\":" + num(eta) +
               ",\"reduction\":" + num(1.0 - eta) + ",\"p_total\":" + num(pw.total) +
               ",\"p_pssch\":" + num(pw.pssch) + ",\"p_pscch\":" + num(pw.pscch) + ",\"p_psfch\":" +
               num(pw.psfch) + "}\n";
    }
    return out;
}

// ---- Mode 1 dynamic grant ----------------------------------------------

enum class GrantKind
{
    SR,
    DCI,
    RS_REFRACT,
    CONFIG_REPORT,
    TB_TX
};

inline const char *to_string(GrantKind k)
{
    switch (k)
    {
    case GrantKind::SR: return "SR";
    case GrantKind::DCI: return "DCI";
    case GrantKind::RS_REFRACT: return "RS_REFRACT";
    case GrantKind::CONFIG_REPORT: return "CONFIG_REPORT";
    case GrantKind::TB_TX: return "TB_TX";
    }
    return "?";
}

struct GrantEvent
{
    double time = 0.0;
    GrantKind kind = GrantKind::SR;
    int ue = 0;
    std::string payload;
};

struct GrantTimeline
{
    std::vector<GrantEvent> events;
};

// Processing delays between consecutive events, in seconds.
struct GrantDelays
{
    double sr_to_dci = 0.0;
    double dci_to_refract = 0.0;
    double refract_to_report = 0.0;
    double report_to_tx = 0.0;
};

inline double symbol_duration(const ScenarioConfig &c) { return c.slot_duration_s / 14.0; }

// SR -> DCI -> RIS refracts the reference signal -> BS reports the computed
// coefficients to the RIS controller -> transport block. Consecutive events
// are at least one OFDM symbol apart.
inline GrantTimeline mode1_grant(double request_time, const GrantDelays &d, const ScenarioConfig &c, int ue = 0)
{
    const double gaps[] = {d.sr_to_dci, d.dci_to_refract, d.refract_to_report, d.report_to_tx};
    for (double g : gaps)
        if (!(g >= 0) || !std::isfinite(g))
            throw ArgumentError("mode1_grant: delays must be finite and >= 0");
    if (!std::isfinite(request_time))
        throw ArgumentError("mode1_grant: request time must be finite");
    const double sym = symbol_duration(c);
    const char *payload[] = {"scheduling request", "sidelink grant", "pilots via RIS", "RIS coefficients",
                             "transport block"};
    GrantTimeline t;
    double time = request_time;
    for (int k = 0; k < 5; ++k)
    {
        if (k > 0)
            time += std::max(gaps[k - 1], sym);
        t.events.push_back({time, GrantKind(k), ue, payload[k]});
    }
    return t;
}

// Merge per-UE timelines into one event queue ordered by time (ties keep the
// input order).
inline GrantTimeline merge_timelines(const std::vector<GrantTimeline> &ts)
{
    GrantTimeline out;
    for (const auto &t : ts)
        out.events.insert(out.events.end(), t.events.begin(), t.events.end());
    std::stable_sort(out.events.begin(), out.events.end(),
                     [](const GrantEvent &a, const GrantEvent &b) { return a.time < b.time; });
    return out;
}

// True if every UE's events appear in SR < DCI < RS_REFRACT < CONFIG_REPORT <
// TB_TX order with strictly increasing times.
inline bool grant_order_holds(const GrantTimeline &t)
{
    std::map<int, std::pair<int, double>> last;
    for (const auto &e : t.events)
    {
        auto it = last.find(e.ue);
        const int k = int(e.kind);
        if (it == last.end())
        {
            if (k != 0)
                return false;
            last[e.ue] = {k, e.time};
            continue;
        }
        if (k != it->second.first + 1 || !(e.time > it->second.second))
            return false;
        it->second = {k, e.time};
    }
    for (const auto &[ue, s] : last)
        if (s.first != int(GrantKind::TB_TX))
            return false;
    return true;
}

inline std::string timeline_csv(const GrantTimeline &t)
{
    std::ostringstream os;
    os.precision(17);
    os << "time_s,ue,kind,payload\n";
    for (const auto &e : t.events)
        os << e.time << ',' << e.ue << ',' << to_string(e.kind) << ',' << e.payload << '\n';
    return os.str();
}

// ---- Mode 2 sensing and selection --------------------------------------

// Occupancy over (subchannel, slot, tile) for the slots
// [sensing_begin, selection_end). The selection window follows the sensing
// window directly.
struct ResourceMap
{
    int n_subchannels = 0;
    int n_tiles = 0;
    int sensing_begin = 0;
    int sensing_end = 0;
    int selection_begin = 0;
    int selection_end = 0;
    std::vector<char> occupied;
    std::vector<char> v2i; // occupied by a V2I link (reusable by DUEs)
    RMat predicted_sinr_db; // subchannel x tile; +inf when unknown

    int n_slots() const { return selection_end - sensing_begin; }
    std::size_t index(int sub, int slot, int tile) const
    {
        return (std::size_t(sub) * n_slots() + (slot - sensing_begin)) * n_tiles + tile;
    }
    bool is_occupied(int sub, int slot, int tile) const { return occupied[index(sub, slot, tile)] != 0; }
    void set(int sub, int slot, int tile, bool occ, bool by_v2i = false)
    {
        occupied[index(sub, slot, tile)] = occ;
        v2i[index(sub, slot, tile)] = occ && by_v2i;
    }
};

inline ResourceMap make_resource_map(int n_subchannels, int n_tiles, int first_slot, int sensing_window,
                                     int selection_window)
{
    if (n_subchannels < 1 || n_tiles < 1 || sensing_window < 0 || selection_window < 0)
        throw ArgumentError("make_resource_map: bad dimensions");
    ResourceMap m;
    m.n_subchannels = n_subchannels;
    m.n_tiles = n_tiles;
    m.sensing_begin = first_slot;
    m.sensing_end = first_slot + sensing_window;
    m.selection_begin = m.sensing_end;
    m.selection_end = m.selection_begin + selection_window;
    const std::size_t n = std::size_t(n_subchannels) * m.n_slots() * n_tiles;
    m.occupied.assign(n, 0);
    m.v2i.assign(n, 0);
    m.predicted_sinr_db = RMat::Constant(n_subchannels, n_tiles, std::numeric_limits<double>::infinity());
    return m;
}

inline ResourceMap make_resource_map(const ScenarioConfig &c, int first_slot = 0)
{
    return make_resource_map(c.n_subchannels, c.n_tiles, first_slot, c.sensing_window, c.selection_window);
}

struct QosThresholds
{
    double sinr_min_db = -std::numeric_limits<double>::infinity();
    bool allow_reuse = false; // DUE: may pick resources held by V2I links
};

struct Candidate
{
    int subchannel = 0;
    int slot = 0;
    int tile = 0;
    bool reuse = false;
    bool operator==(const Candidate &) const = default;
};

// Free (or, for DUEs, V2I-held) triples in the selection window whose
// predicted SINR meets the threshold, in random order.
inline std::vector<Candidate> mode2_sense_select(const ResourceMap &m, const QosThresholds &q, std::mt19937_64 &rng)
{
    if (m.selection_end <= m.selection_begin)
        throw ProtocolError("mode2_sense_select: empty selection window");
    if (m.sensing_begin > m.sensing_end || m.sensing_end > m.selection_begin)
        throw ProtocolError("mode2_sense_select: selection window must follow the sensing window");
    std::vector<Candidate> out;
    for (int sub = 0; sub < m.n_subchannels; ++sub)
        for (int slot = m.selection_begin; slot < m.selection_end; ++slot)
            for (int t = 0; t < m.n_tiles; ++t)
            {
                if (m.predicted_sinr_db(sub, t) < q.sinr_min_db)
                    continue;
                const auto i = m.index(sub, slot, t);
                if (!m.occupied[i])
                    out.push_back({sub, slot, t, false});
                else if (q.allow_reuse && m.v2i[i])
                    out.push_back({sub, slot, t, true});
            }
    std::shuffle(out.begin(), out.end(), rng);
    return out;
}

} // namespace risv2x
