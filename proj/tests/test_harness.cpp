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

#include "risv2x/harness.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cstring>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace risv2x;

namespace
{
std::string slurp(const std::string &path)
{
    std::ifstream is(path, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

std::string scratch(const std::string &name)
{
    const auto dir = std::filesystem::temp_directory_path() / "risv2x_test_harness";
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

void check_shape(const MetricsTable &t)
{
    for (const auto &r : t.rows)
        REQUIRE(r.size() == t.columns.size());
    for (std::size_t i = 0; i < t.columns.size(); ++i)
    {
        const auto &name = t.columns[i];
        if (name.size() > 5 && name.ends_with("_mean"))
        {
            REQUIRE(t.columns[i + 1] == name.substr(0, name.size() - 5) + "_ci95_low");
            REQUIRE(t.columns[i + 2] == name.substr(0, name.size() - 5) + "_ci95_high");
            for (const auto &r : t.rows)
            {
                REQUIRE(r[i + 1] <= r[i]);
                REQUIRE(r[i] <= r[i + 2]);
            }
        }
    }
}

MetricsTable sample_table()
{
    MetricsTable t;
    t.metadata = {{"experiment", "x"}, {"note", "a=b, \"quoted\""}};
    t.columns = {"sweep", "n", "v_mean", "v_ci95_low", "v_ci95_high"};
    t.rows = {{0.1, 3, 1.0 / 3.0, -2.5e-300, 6.02214076e23},
              {1e-17, 1, std::numeric_limits<double>::quiet_NaN(), -std::numeric_limits<double>::infinity(),
               std::numeric_limits<double>::infinity()},
              {-0.0, 2, 0.30000000000000004, std::numeric_limits<double>::denorm_min(),
               std::numeric_limits<double>::max()}};
    return t;
}

bool same_value(double a, double b)
{
    if (std::isnan(a))
        return std::isnan(b);
    return a == b && std::signbit(a) == std::signbit(b);
}
} // namespace

TEST_CASE("summary of one sample collapses the interval")
{
    const auto s = summarize({2.5});
    REQUIRE(s.mean == 2.5);
    REQUIRE(s.ci_low == 2.5);
    REQUIRE(s.ci_high == 2.5);
    const auto e = summarize({});
    REQUIRE(std::isnan(e.mean));
}

TEST_CASE("summary matches a hand computation")
{
    const std::vector<double> x{1, 2, 3, 4, 5};
    const auto s = summarize(x);
    REQUIRE(s.mean == 3.0);
    REQUIRE(s.std_dev == Catch::Approx(std::sqrt(2.5)));
    REQUIRE(s.ci_high - s.mean == Catch::Approx(1.959963984540054 * std::sqrt(2.5) / std::sqrt(5.0)));
}

TEST_CASE("one drop gives one-sample rows with ci equal to the mean")
{
    for (const auto &name : {"overhead_vs_n", "power_vs_subchannels", "capacity_vs_distance"})
    {
        ExperimentSpec s;
        s.name = name;
        s.drops = 1;
        if (std::string(name) == "capacity_vs_distance")
            s.sweep_values = {450};
        const auto t = run_experiment(s);
        check_shape(t);
        const int n = t.column_index("n");
        for (const auto &r : t.rows)
        {
            REQUIRE(r[n] == 1.0);
            for (std::size_t i = 2; i < r.size(); i += 3)
            {
                REQUIRE(same_value(r[i], r[i + 1]));
                REQUIRE(same_value(r[i], r[i + 2]));
            }
        }
    }
}

TEST_CASE("every experiment runs and tabulates")
{
    for (const auto &name : experiment_names())
    {
        ExperimentSpec s;
        s.name = name;
        s.drops = 2;
        const auto def = experiment_defaults(name);
        s.sweep_values = {def.sweep_values.back()};
        const auto t = run_experiment(s);
        check_shape(t);
        REQUIRE(t.rows.size() == 1);
        REQUIRE(t.meta("experiment") == name);
        REQUIRE(t.meta("version") == version_tag);
        REQUIRE_FALSE(experiment_description(name).empty());
    }
}

TEST_CASE("overhead experiment reproduces the counting oracle")
{
    ExperimentSpec s;
    s.name = "overhead_vs_n";
    s.drops = 1;
    const auto t = run_experiment(s);
    const auto n = t.column("n_ris_elements");
    const auto red = t.column("reduction_mean");
    REQUIRE(n.front() == 16);
    REQUIRE(n.back() == 128);
    for (std::size_t i = 0; i < n.size(); ++i)
    {
        const int MA = std::max(5, int(std::lround(45.0 * n[i] / 80.0)));
        REQUIRE(red[i] == Catch::Approx(1.0 - double(MA + 50) / (10.0 * (MA + 5))).epsilon(1e-14));
    }
}

TEST_CASE("metadata carries the full resolved config")
{
    ExperimentSpec s;
    s.name = "power_vs_subchannels";
    s.drops = 1;
    s.seed = 77;
    s.config_overrides = {"power_coeff_psfch=0.25"};
    const auto t = run_experiment(s);
    ScenarioConfig expect;
    expect.seed = 77;
    expect.power_coeff_psfch = 0.25;
    for (const auto &[k, v] : to_key_values(expect))
        REQUIRE(t.meta(k) == v);
    REQUIRE(t.meta("drops") == "1");
    REQUIRE(t.meta("sweep") == "n_subchannels");
    // The metadata alone rebuilds the config.
    std::string text;
    for (const auto &[k, v] : t.metadata)
        if (has_field(k))
            text += k + "=" + v + "\n";
    REQUIRE(to_key_values(parse_config_text(text)) == to_key_values(expect));
}

TEST_CASE("unknown experiment names the valid ones")
{
    ExperimentSpec s;
    s.name = "nope";
    try
    {
        run_experiment(s);
        FAIL("no error");
    }
    catch (const UsageError &e)
    {
        const std::string m = e.what();
        REQUIRE(m.find("nope") != std::string::npos);
        for (const auto &n : experiment_names())
            REQUIRE(m.find(n) != std::string::npos);
    }
}

TEST_CASE("bad specs are usage errors")
{
    ExperimentSpec s;
    s.name = "overhead_vs_n";
    s.drops = 0;
    REQUIRE_THROWS_AS(run_experiment(s), UsageError);
    s.drops = 1;
    s.sweep_param = "not_a_field";
    REQUIRE_THROWS_AS(run_experiment(s), UsageError);
    s.sweep_param.clear();
    s.config_overrides = {"n_cues=-3"};
    REQUIRE_THROWS_AS(run_experiment(s), ConfigError);
}

TEST_CASE("custom sweep axis")
{
    ExperimentSpec s;
    s.name = "power_vs_subchannels";
    s.drops = 1;
    s.sweep_param = "prbs_per_subchannel";
    s.sweep_values = {5, 10, 20};
    const auto t = run_experiment(s);
    REQUIRE(t.columns.front() == "prbs_per_subchannel");
    const auto p = t.column("proposed_total_mean");
    REQUIRE(p[0] < p[1]);
    REQUIRE(p[1] < p[2]);
}

TEST_CASE("results do not depend on the worker count")
{
    ExperimentSpec s;
    s.name = "capacity_vs_speed";
    s.drops = 4;
    s.seed = 5;
    s.sweep_values = {30};
    s.workers = 1;
    const auto a = render(run_experiment(s), "csv");
    s.workers = 3;
    const auto b = render(run_experiment(s), "csv");
    REQUIRE(a == b);
    s.seed = 6;
    REQUIRE(render(run_experiment(s), "csv") != a);
}

TEST_CASE("parallel drops visit every index once and propagate errors")
{
    std::vector<int> hits(50, 0);
    parallel_drops(50, 4, [&](int d) { hits[d]++; });
    for (int h : hits)
        REQUIRE(h == 1);
    REQUIRE_THROWS_AS(parallel_drops(10, 3, [](int d) {
                          if (d == 7)
                              throw NumericalError("boom");
                      }),
                      NumericalError);
}

TEST_CASE("empty table is header only")
{
    MetricsTable t;
    t.columns = {"a", "b"};
    REQUIRE(to_csv(t) == "a,b\n");
    const auto j = to_jsonl(t);
    REQUIRE(std::count(j.begin(), j.end(), '\n') == 1);
    REQUIRE(nlohmann::json::parse(j)["columns"] == nlohmann::json::array({"a", "b"}));
}

TEST_CASE("emitting twice gives identical bytes")
{
    const auto t = sample_table();
    for (const std::string fmt : {"csv", "jsonl"})
    {
        const auto p1 = scratch("a." + fmt), p2 = scratch("b." + fmt);
        emit(t, fmt, p1);
        emit(t, fmt, p2);
        REQUIRE(slurp(p1) == slurp(p2));
        REQUIRE(slurp(p1) == render(t, fmt));
    }
}

TEST_CASE("CSV and JSONL parse back exactly")
{
    const auto t = sample_table();
    for (const auto &back : {parse_csv(to_csv(t)), parse_jsonl(to_jsonl(t))})
    {
        REQUIRE(back.columns == t.columns);
        REQUIRE(back.rows.size() == t.rows.size());
        for (std::size_t r = 0; r < t.rows.size(); ++r)
            for (std::size_t c = 0; c < t.columns.size(); ++c)
                REQUIRE(same_value(back.rows[r][c], t.rows[r][c]));
        REQUIRE(back.metadata == t.metadata);
    }
}

TEST_CASE("random values survive the text round trip")
{
    std::mt19937_64 g(21);
    std::uniform_int_distribution<std::uint64_t> bits;
    MetricsTable t;
    t.columns = {"x", "y"};
    for (int i = 0; i < 2000; ++i)
    {
        double a, b;
        const auto u = bits(g), v = bits(g);
        std::memcpy(&a, &u, sizeof a);
        std::memcpy(&b, &v, sizeof b);
        t.rows.push_back({a, b});
    }
    for (const auto &back : {parse_csv(to_csv(t)), parse_jsonl(to_jsonl(t))})
        for (std::size_t r = 0; r < t.rows.size(); ++r)
            for (int c = 0; c < 2; ++c)
                REQUIRE(same_value(back.rows[r][c], t.rows[r][c]));
}

TEST_CASE("numbers are written with 17 significant digits")
{
    MetricsTable t;
    t.columns = {"x"};
    t.rows = {{0.1}};
    REQUIRE(to_csv(t) == "x\n0.10000000000000001\n");
}

TEST_CASE("CSV carries metadata as a comment block and JSONL as the first record")
{
    const auto t = sample_table();
    const auto csv = to_csv(t);
    REQUIRE(csv.rfind("# experiment=x\n", 0) == 0);
    const auto jl = to_jsonl(t);
    const auto first = nlohmann::json::parse(jl.substr(0, jl.find('\n')));
    REQUIRE(first["metadata"]["experiment"] == "x");
    REQUIRE(std::count(jl.begin(), jl.end(), '\n') == 1 + int(t.rows.size()));
}

TEST_CASE("unknown format and unwritable path")
{
    const auto t = sample_table();
    REQUIRE_THROWS_AS(render(t, "xml"), UsageError);
    try
    {
        emit(t, "csv", "/nonexistent-dir/x.csv");
        FAIL("no error");
    }
    catch (const std::runtime_error &e)
    {
        REQUIRE(std::string(e.what()).find("/nonexistent-dir/x.csv") != std::string::npos);
    }
}

TEST_CASE("malformed input fails to parse")
{
    REQUIRE_THROWS(parse_csv("a,b\n1,2,3\n"));
    REQUIRE_THROWS(parse_csv("a,b\n1,zz\n"));
    REQUIRE_THROWS(parse_jsonl("{not json}\n"));
}

TEST_CASE("sweeping the surface size scales angle training")
{
    ScenarioConfig c;
    const auto a = sweep_point(c, "n_ris_elements", 160);
    REQUIRE(a.n_ris_elements == 160);
    REQUIRE(a.pilots_angle == 90);
    REQUIRE(a.grid_ris >= 160);
    const auto b = sweep_point(c, "n_ris_elements", 4);
    REQUIRE(b.pilots_angle == c.pilots_doppler);
    REQUIRE_THROWS(sweep_point(c, "vehicle_speed_mps", -1));
}
