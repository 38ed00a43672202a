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

#include "risv2x/protocol.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <nlohmann/json.hpp>

#include <random>

using namespace risv2x;

TEST_CASE("single-slot frame is a header")
{
    ScenarioConfig c;
    c.slots_per_subframe = 1;
    const auto f = build_frame(c, 0);
    REQUIRE(f.slots.size() == 1);
    REQUIRE(f.slots[0].header);
}

TEST_CASE("default frame carries angle training only in slot 0")
{
    ScenarioConfig c;
    const auto f = build_frame(c, 3);
    REQUIRE(f.subframe_index == 3);
    REQUIRE(int(f.slots.size()) == c.slots_per_subframe);
    REQUIRE(f.slots[0].phase1_pilots == 50);
    for (std::size_t s = 1; s < f.slots.size(); ++s)
    {
        REQUIRE_FALSE(f.slots[s].header);
        REQUIRE(f.slots[s].phase1_pilots == 5);
    }
}

TEST_CASE("benchmark frame trains angles in every slot")
{
    ScenarioConfig c;
    const auto f = build_frame(c, 0, true);
    for (const auto &s : f.slots)
        REQUIRE(s.phase1_pilots == c.pilots_angle + c.pilots_doppler);
    REQUIRE(overhead_ratio(f) == 1.0);
}

TEST_CASE("every slot starts with AGC and ends with GUARD")
{
    ScenarioConfig c;
    for (bool bench : {false, true})
        for (const auto &s : build_frame(c, 0, bench).slots)
        {
            REQUIRE(s.channels.front() == ChannelTag::AGC);
            REQUIRE(s.channels.back() == ChannelTag::GUARD);
            const auto n_pssch = std::count(s.channels.begin(), s.channels.end(), ChannelTag::PSSCH);
            const auto n_psfch = std::count(s.channels.begin(), s.channels.end(), ChannelTag::PSFCH);
            REQUIRE(n_pssch == s.phase1_pilots + s.phase3_data_symbols);
            REQUIRE(n_psfch == s.phase2_feedback_symbols);
            REQUIRE(s.phase2_feedback_symbols == (s.header ? c.feedback_symbols_header : c.feedback_symbols));
        }
}

TEST_CASE("overhead ratio matches a counting oracle")
{
    ScenarioConfig c;
    REQUIRE(overhead_ratio(build_frame(c, 0)) == Catch::Approx(95.0 / 500.0).epsilon(1e-15));
    c.pilots_angle = c.pilots_doppler;
    // (M_D + S M_D) / (2 S M_D) at S = 10
    REQUIRE(overhead_ratio(build_frame(c, 0)) == Catch::Approx(0.55).epsilon(1e-15));

    // Brute-force count over a grid of frame shapes.
    for (int S : {1, 2, 5, 10, 14})
        for (int MA : {0, 1, 9, 45, 72})
            for (int MD : {1, 5})
            {
                ScenarioConfig k;
                k.slots_per_subframe = S;
                k.pilots_angle = MA;
                k.pilots_doppler = MD;
                int prop = 0, bench = 0;
                for (int s = 0; s < S; ++s)
                {
                    prop += (s == 0 ? MA : 0) + MD;
                    bench += MA + MD;
                }
                REQUIRE(overhead_ratio(build_frame(k, 0)) == Catch::Approx(double(prop) / bench).epsilon(1e-15));
            }
}

TEST_CASE("overhead total denominator and bad denominator")
{
    ScenarioConfig c;
    const auto f = build_frame(c, 0);
    const double pilots = 95, data = 10.0 * c.data_symbols;
    REQUIRE(overhead_ratio(f, "total") == Catch::Approx(pilots / (pilots + data)));
    REQUIRE_THROWS_AS(overhead_ratio(f, "bogus"), ArgumentError);
    REQUIRE_THROWS_AS(overhead_ratio(FrameSchedule{}), ArgumentError);
}

TEST_CASE("overhead reduction grows with the array size")
{
    double prev = -1;
    for (int N = 16; N <= 128; N += 16)
    {
        ScenarioConfig c;
        c.n_ris_elements = N;
        c.pilots_angle = std::max(c.pilots_doppler, int(std::lround(45.0 * N / 80.0)));
        const auto f = build_frame(c, 0);
        const double red = 1.0 - overhead_ratio(f);
        REQUIRE(red > prev);
        prev = red;
        REQUIRE(frame_pilots(f) < frame_pilots(build_frame(c, 0, true)));
    }
}

TEST_CASE("reduction is strictly increasing in M_A for at least two slots")
{
    for (int S : {2, 3, 10})
    {
        double prev = -1;
        for (int MA = 0; MA <= 100; MA += 5)
        {
            ScenarioConfig c;
            c.slots_per_subframe = S;
            c.pilots_angle = MA;
            const double red = 1.0 - overhead_ratio(build_frame(c, 0));
            REQUIRE(red > prev);
            prev = red;
        }
    }
}

TEST_CASE("zero power coefficients give zero power")
{
    ScenarioConfig c;
    c.power_coeff_pssch = c.power_coeff_pscch = c.power_coeff_psfch = 0;
    const auto p = total_power(c);
    REQUIRE(p.total == 0.0);
    c.power_coeff_psfch = -1;
    REQUIRE_THROWS_AS(total_power(c), ArgumentError);
}

TEST_CASE("PSSCH spans L_subCH x M_sub PRBs")
{
    ScenarioConfig c;
    c.n_subchannels = 2;
    c.prbs_per_subchannel = 10;
    REQUIRE(total_power(c).pssch_prbs == 20);
}

TEST_CASE("power breakdown matches hand evaluation")
{
    ScenarioConfig c;
    const auto p = total_power(c);
    const int S = c.slots_per_subframe;
    const double pssch_sym = 50 + 9 * 5 + S * c.data_symbols;
    const double psfch_sym = c.feedback_symbols_header + (S - 1) * c.feedback_symbols;
    REQUIRE(p.pssch == Catch::Approx(c.power_coeff_pssch * c.n_subchannels * c.prbs_per_subchannel * pssch_sym));
    REQUIRE(p.pscch == Catch::Approx(c.power_coeff_pscch * c.pscch_prbs * c.pscch_symbols * S));
    REQUIRE(p.psfch == Catch::Approx(c.power_coeff_psfch * c.psfch_prbs * psfch_sym));
    REQUIRE(p.total == Catch::Approx(p.pssch + p.pscch + p.psfch));
}

TEST_CASE("power is increasing in sub-channels and lower than the benchmark")
{
    double prev = -1;
    for (int L = 1; L <= 10; ++L)
    {
        ScenarioConfig c;
        c.n_subchannels = L;
        const double p = total_power(c).total;
        REQUIRE(p > prev);
        REQUIRE(p < total_power(c, true).total);
        prev = p;
    }
}

TEST_CASE("power is linear in each coefficient")
{
    ScenarioConfig c;
    const auto base = total_power(c);
    for (double k : {0.5, 2.0, 3.25})
    {
        ScenarioConfig a = c, b = c, d = c;
        a.power_coeff_pssch *= k;
        b.power_coeff_pscch *= k;
        d.power_coeff_psfch *= k;
        REQUIRE(total_power(a).pssch == Catch::Approx(k * base.pssch).epsilon(1e-15));
        REQUIRE(total_power(a).pscch == base.pscch);
        REQUIRE(total_power(b).pscch == Catch::Approx(k * base.pscch).epsilon(1e-15));
        REQUIRE(total_power(d).psfch == Catch::Approx(k * base.psfch).epsilon(1e-15));
    }
}

TEST_CASE("zero delays are spread one symbol apart")
{
    ScenarioConfig c;
    const auto t = mode1_grant(1.0, GrantDelays{}, c);
    REQUIRE(t.events.size() == 5);
    const double sym = symbol_duration(c);
    for (std::size_t k = 1; k < t.events.size(); ++k)
        REQUIRE(t.events[k].time - t.events[k - 1].time == Catch::Approx(sym));
    REQUIRE(grant_order_holds(t));
}

TEST_CASE("unit delays give the SR to transport block order")
{
    ScenarioConfig c;
    const auto t = mode1_grant(0.0, {1, 1, 1, 1}, c);
    const GrantKind order[] = {GrantKind::SR, GrantKind::DCI, GrantKind::RS_REFRACT, GrantKind::CONFIG_REPORT,
                               GrantKind::TB_TX};
    for (int k = 0; k < 5; ++k)
    {
        REQUIRE(t.events[k].kind == order[k]);
        REQUIRE(t.events[k].time == Catch::Approx(double(k)));
    }
}

TEST_CASE("interleaved UE requests keep per-UE order")
{
    ScenarioConfig c;
    const auto a = mode1_grant(0.0, {1e-3, 1e-3, 1e-3, 1e-3}, c, 0);
    const auto b = mode1_grant(0.5e-3, {1e-3, 1e-3, 1e-3, 1e-3}, c, 1);
    const auto m = merge_timelines({a, b});
    REQUIRE(m.events.size() == 10);
    REQUIRE(m.events[1].ue == 1);
    REQUIRE(grant_order_holds(m));
    for (std::size_t k = 1; k < m.events.size(); ++k)
        REQUIRE(m.events[k].time >= m.events[k - 1].time);
}

TEST_CASE("order check rejects a broken timeline")
{
    ScenarioConfig c;
    auto t = mode1_grant(0.0, {1, 1, 1, 1}, c);
    std::swap(t.events[1], t.events[2]);
    REQUIRE_FALSE(grant_order_holds(t));
    auto u = mode1_grant(0.0, {1, 1, 1, 1}, c);
    u.events.pop_back();
    REQUIRE_FALSE(grant_order_holds(u));
}

TEST_CASE("grant order holds for random delays")
{
    ScenarioConfig c;
    std::mt19937_64 g(11);
    std::exponential_distribution<double> ex(1e4);
    std::uniform_real_distribution<double> u(0, 1e-2);
    for (int trial = 0; trial < 500; ++trial)
    {
        std::vector<GrantTimeline> ts;
        const int n = 1 + trial % 4;
        for (int ue = 0; ue < n; ++ue)
            ts.push_back(mode1_grant(u(g), {ex(g), ex(g), ex(g), ex(g)}, c, ue));
        REQUIRE(grant_order_holds(merge_timelines(ts)));
    }
}

TEST_CASE("negative or non-finite delays are rejected")
{
    ScenarioConfig c;
    REQUIRE_THROWS_AS(mode1_grant(0.0, {-1e-3, 0, 0, 0}, c), ArgumentError);
    REQUIRE_THROWS_AS(mode1_grant(0.0, {0, std::numeric_limits<double>::quiet_NaN(), 0, 0}, c), ArgumentError);
    REQUIRE_THROWS_AS(mode1_grant(std::numeric_limits<double>::infinity(), {}, c), ArgumentError);
}

TEST_CASE("timeline CSV has one row per event")
{
    ScenarioConfig c;
    const auto csv = timeline_csv(mode1_grant(0.0, {1, 1, 1, 1}, c));
    REQUIRE(csv.rfind("time_s,ue,kind,payload\n0,0,SR,", 0) == 0);
    REQUIRE(std::count(csv.begin(), csv.end(), '\n') == 6);
    REQUIRE(csv.find("4,0,TB_TX,transport block\n") != std::string::npos);
}

TEST_CASE("fully occupied map without reuse has no candidates")
{
    std::mt19937_64 g(1);
    auto m = make_resource_map(4, 2, 0, 10, 4);
    for (int s = 0; s < 4; ++s)
        for (int t = m.sensing_begin; t < m.selection_end; ++t)
            for (int k = 0; k < 2; ++k)
                m.set(s, t, k, true, true);
    REQUIRE(mode2_sense_select(m, {}, g).empty());
    // V2I-held resources become reuse candidates for DUEs.
    const auto reuse = mode2_sense_select(m, {-std::numeric_limits<double>::infinity(), true}, g);
    REQUIRE(reuse.size() == 4u * 4u * 2u);
    for (const auto &c : reuse)
        REQUIRE(c.reuse);
}

TEST_CASE("free map returns every triple in the selection window meeting QoS")
{
    std::mt19937_64 g(2);
    auto m = make_resource_map(3, 2, 5, 10, 4);
    REQUIRE(mode2_sense_select(m, {}, g).size() == 3u * 4u * 2u);
    m.predicted_sinr_db.setConstant(5.0);
    m.predicted_sinr_db(1, 0) = -3.0;
    const auto c = mode2_sense_select(m, {0.0, false}, g);
    REQUIRE(c.size() == 3u * 4u * 2u - 4u);
    for (const auto &x : c)
    {
        REQUIRE(x.slot >= m.selection_begin);
        REQUIRE(x.slot < m.selection_end);
        REQUIRE_FALSE((x.subchannel == 1 && x.tile == 0));
    }
}

TEST_CASE("one free sub-channel gives at most eight candidates on it")
{
    std::mt19937_64 g(3);
    auto m = make_resource_map(4, 2, 0, 10, 4);
    for (int s = 0; s < 4; ++s)
        for (int t = m.sensing_begin; t < m.selection_end; ++t)
            for (int k = 0; k < 2; ++k)
                m.set(s, t, k, s != 2);
    const auto c = mode2_sense_select(m, {}, g);
    REQUIRE(c.size() <= 8);
    REQUIRE(c.size() == 8);
    for (const auto &x : c)
        REQUIRE(x.subchannel == 2);
}

TEST_CASE("empty selection window is a protocol error")
{
    std::mt19937_64 g(4);
    const auto m = make_resource_map(2, 2, 0, 10, 0);
    REQUIRE_THROWS_AS(mode2_sense_select(m, {}, g), ProtocolError);
    REQUIRE_THROWS_AS(make_resource_map(0, 2, 0, 10, 4), ArgumentError);
}

TEST_CASE("selection window follows the sensing window")
{
    ScenarioConfig c;
    const auto m = make_resource_map(c, 7);
    REQUIRE(m.sensing_begin == 7);
    REQUIRE(m.selection_begin == m.sensing_end);
    REQUIRE(m.selection_end - m.selection_begin == c.selection_window);
}

TEST_CASE("accounting report has one record per sub-frame")
{
    ScenarioConfig c;
    const auto s = accounting_jsonl(c, 3);
    REQUIRE(std::count(s.begin(), s.end(), '\n') == 3);
    const auto first = nlohmann::json::parse(s.substr(0, s.find('\n')));
    REQUIRE(first["subframe"] == 0);
    REQUIRE(first["pilots"] == 95);
    REQUIRE(first["eta"].get<double>() == 0.19);
    REQUIRE(first["reduction"].get<double>() == Catch::Approx(0.81));
    REQUIRE(first["p_total"].get<double>() == total_power(c).total);
    REQUIRE(accounting_jsonl(c, 0).empty());
    REQUIRE_THROWS_AS(accounting_jsonl(c, -1), ArgumentError);
    const auto b = nlohmann::json::parse(accounting_jsonl(c, 1, true));
    REQUIRE(b["eta"].get<double>() == 1.0);
}
