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

#include "risv2x/scenario.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

using namespace risv2x;
using Catch::Matchers::ContainsSubstring;

TEST_CASE("default config passes validation")
{
    REQUIRE_NOTHROW(validate(ScenarioConfig{}));
}

TEST_CASE("validation names the violated invariant")
{
    auto expect = [](auto mutate, const std::string &what) {
        ScenarioConfig c;
        mutate(c);
        REQUIRE_THROWS_WITH(validate(c), ContainsSubstring(what));
    };
    expect([](ScenarioConfig &c) { c.grid_ris = c.n_ris_elements - 1; }, "grid_ris >= n_ris_elements");
    expect([](ScenarioConfig &c) { c.grid_bs = 8; }, "grid_bs >= n_bs_antennas");
    expect([](ScenarioConfig &c) { c.grid_ue = 1; }, "grid_ue >= n_ue_antennas");
    expect([](ScenarioConfig &c) { c.pilots_angle = 2; }, "pilots_angle >= pilots_doppler");
    expect([](ScenarioConfig &c) { c.pr_ris_elements = 999; }, "divisible by n_tiles");
    expect([](ScenarioConfig &c) { c.slots_per_subframe = 8; }, "10 ms radio frame");
    expect([](ScenarioConfig &c) { c.n_tiles = 0; }, "n_tiles >= 1");
    expect([](ScenarioConfig &c) { c.n_bs_antennas = 0; }, "n_bs_antennas >= 1");
}

TEST_CASE("radio-frame invariant allows other numerologies")
{
    ScenarioConfig c;
    c.slots_per_subframe = 4;
    c.slot_duration_s = 2.5e-4;
    REQUIRE_NOTHROW(validate(c));
}

TEST_CASE("config text round-trips every field")
{
    ScenarioConfig c;
    c.n_ris_elements = 64;
    c.grid_ris = 64;
    c.noise_dbm = -87.125;
    c.carrier_hz = 28e9 + 1.0 / 3.0;
    c.objective = "min";
    c.benchmark_frame = true;
    c.seed = 18446744073709551557ULL;
    const ScenarioConfig back = parse_config_text(to_config_text(c));
    REQUIRE(to_key_values(back) == to_key_values(c));
    REQUIRE(back.carrier_hz == c.carrier_hz);
}

TEST_CASE("config parser accepts comments and rejects unknown keys")
{
    const auto c = parse_config_text("# comment\n\n n_cues = 7 \nsnr_db=12.5 # trailing\n");
    REQUIRE(c.n_cues == 7);
    REQUIRE(c.snr_db == 12.5);
    REQUIRE_THROWS_AS(parse_config_text("no_such_key=1\n"), ConfigError);
    REQUIRE_THROWS_AS(parse_config_text("n_cues\n"), ConfigError);
    REQUIRE_THROWS_AS(parse_config_text("n_cues=three\n"), ConfigError);
}

TEST_CASE("load_config reads a file and reports a missing one")
{
    const std::string path = "test_scenario_cfg.txt";
    {
        std::ofstream os(path);
        os << "n_due_pairs=4\nris_position_m=125\n";
    }
    const auto c = load_config(path);
    REQUIRE(c.n_due_pairs == 4);
    REQUIRE(c.ris_position_m == 125.0);
    std::remove(path.c_str());
    REQUIRE_THROWS(load_config("definitely/missing/file.cfg"));
}

TEST_CASE("empty traffic places only BS and RIS")
{
    ScenarioConfig c;
    c.n_cues = 0;
    c.n_due_pairs = 0;
    const Geometry g = build_freeway_scenario(c);
    REQUIRE(g.cues.empty());
    REQUIRE(g.due_pairs.empty());
    REQUIRE(g.bs_position.x() == 0.0);
    REQUIRE(g.ris_position.x() == c.ris_position_m);
}

TEST_CASE("freeway drop with five CUEs and five pairs")
{
    ScenarioConfig c;
    c.n_cues = 5;
    c.n_due_pairs = 5;
    c.ris_position_m = 250;
    const Geometry g = build_freeway_scenario(c);
    REQUIRE(g.cues.size() == 5);
    REQUIRE(g.due_pairs.size() == 5);
    REQUIRE(ris_position(g).x() == 250.0);
    REQUIRE(ris_position(g).y() == c.ris_lateral_m);
}

TEST_CASE("invalid config is rejected by the scenario builder")
{
    ScenarioConfig c;
    c.grid_ris = 10;
    REQUIRE_THROWS_AS(build_freeway_scenario(c), ConfigError);
}

TEST_CASE("geometry invariants hold over random drops")
{
    ScenarioConfig c;
    c.n_cues = 6;
    c.n_due_pairs = 6;
    const Rng rng(99);
    for (int drop = 0; drop < 300; ++drop)
    {
        const Geometry g = build_freeway_scenario(c, rng, drop);
        for (const auto &v : g.cues)
            REQUIRE(within_lane(g, v));
        for (const auto &[tx, rx] : g.due_pairs)
        {
            REQUIRE(within_lane(g, tx));
            REQUIRE(within_lane(g, rx));
            REQUIRE(road_separation(g, tx, rx) <= c.max_v2v_range_m);
            REQUIRE(std::abs(tx.lane - rx.lane) <= 1);
        }
    }
}

TEST_CASE("drop window confines vehicles")
{
    ScenarioConfig c;
    c.n_cues = 20;
    c.drop_center_m = 500;
    c.drop_window_m = 100;
    const Geometry g = build_freeway_scenario(c, Rng(3), 0);
    for (const auto &v : g.cues)
    {
        REQUIRE(position(g, v).x() >= 450.0);
        REQUIRE(position(g, v).x() <= 550.0);
    }
}

TEST_CASE("same seed gives bit-identical geometry")
{
    ScenarioConfig c;
    c.n_cues = 4;
    c.n_due_pairs = 3;
    const Geometry a = build_freeway_scenario(c, Rng(c.seed), 5);
    const Geometry b = build_freeway_scenario(c, Rng(c.seed), 5);
    REQUIRE(a.cues.size() == b.cues.size());
    for (std::size_t i = 0; i < a.cues.size(); ++i)
    {
        REQUIRE(a.cues[i].base_x == b.cues[i].base_x);
        REQUIRE(a.cues[i].y == b.cues[i].y);
    }
    for (std::size_t i = 0; i < a.due_pairs.size(); ++i)
        REQUIRE(a.due_pairs[i].second.base_x == b.due_pairs[i].second.base_x);
    const Geometry other = build_freeway_scenario(c, Rng(c.seed), 6);
    REQUIRE(other.cues[0].base_x != a.cues[0].base_x);
}

TEST_CASE("named substreams are independent of each other")
{
    const Rng rng(7);
    auto a = rng.stream("alpha", 1);
    auto b = rng.stream("alpha", 1);
    auto c = rng.stream("beta", 1);
    const auto x = a();
    REQUIRE(x == b());
    REQUIRE(x != c());
    // Extra draws in one stream never move another.
    auto d = rng.stream("beta", 1);
    for (int i = 0; i < 100; ++i)
        (void)a();
    auto e = rng.stream("beta", 1);
    REQUIRE(d() == e());
}

TEST_CASE("advance_mobility with zero step leaves the geometry unchanged")
{
    ScenarioConfig c;
    c.n_cues = 3;
    const Geometry g = build_freeway_scenario(c);
    const Geometry h = advance_mobility(g, 30.0, 0.0);
    for (std::size_t i = 0; i < g.cues.size(); ++i)
        REQUIRE(position(g, g.cues[i]) == position(h, h.cues[i]));
}

TEST_CASE("advance_mobility moves every vehicle by speed times dt modulo the road")
{
    ScenarioConfig c;
    c.n_cues = 8;
    c.n_due_pairs = 2;
    const Geometry g = build_freeway_scenario(c);
    const Geometry h = advance_mobility(g, 10.0, 1.0);
    for (std::size_t i = 0; i < g.cues.size(); ++i)
    {
        const auto p0 = position(g, g.cues[i]);
        const auto p1 = position(h, h.cues[i]);
        const double expected = wrap_road(p0.x() + 10.0, c.road_length_m);
        REQUIRE(p1.x() == Catch::Approx(expected).margin(1e-9));
        REQUIRE(p1.y() == p0.y());
        REQUIRE(within_lane(h, h.cues[i]));
    }
}

TEST_CASE("advance_mobility is additive")
{
    ScenarioConfig c;
    c.n_cues = 5;
    const Geometry g = build_freeway_scenario(c, Rng(11), 2);
    for (int t = 0; t < 50; ++t)
    {
        const double dt = 0.125 * (t + 1);
        const Geometry twice = advance_mobility(advance_mobility(g, 25.0, dt), 25.0, dt);
        const Geometry once = advance_mobility(g, 25.0, 2.0 * dt);
        for (std::size_t i = 0; i < g.cues.size(); ++i)
            REQUIRE(position(twice, twice.cues[i]).x() == position(once, once.cues[i]).x());
    }
}

TEST_CASE("advance_mobility rejects negative steps")
{
    const Geometry g = build_freeway_scenario(ScenarioConfig{});
    REQUIRE_THROWS_AS(advance_mobility(g, 10.0, -1.0), ArgumentError);
}

TEST_CASE("vehicle-mounted RIS carries the CUEs inside the cabin")
{
    ScenarioConfig c;
    c.n_cues = 3;
    const Geometry g = build_vehicle_ris_scenario(c, Rng(4), 0);
    REQUIRE(g.ris_on_vehicle);
    REQUIRE(ris_position(g).x() == c.ris_position_m);
    for (const auto &v : g.cues)
        REQUIRE((position(g, v) - ris_position(g)).norm() <= c.in_vehicle_distance_m + 1.0);
    const Geometry h = advance_mobility(g, 20.0, 0.5);
    REQUIRE(ris_position(h).x() == Catch::Approx(c.ris_position_m + 10.0));
}
