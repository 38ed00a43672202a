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

// Acceptance run: one PASS/FAIL line per criterion, exit 1 if any fails.

#include "risv2x/allocator.hpp"
#include "risv2x/dts_tracker.hpp"
#include "risv2x/harness.hpp"
#include "risv2x/protocol.hpp"
#include "risv2x/scenario.hpp"

#include <chrono>
#include <cstdlib>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <sstream>
#include <string>

using namespace risv2x;

namespace
{
struct Outcome
{
    bool pass = false;
    std::string detail;
};

std::string fmt(const char *f, double a, double b = 0, double c = 0, double d = 0)
{
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

const double inf = std::numeric_limits<double>::infinity();

// ---- 1. Overhead structure ----------------------------------------------------

Outcome overhead()
{
    Outcome o{true, ""};
    double prev = -1;
    for (int N = 16; N <= 128; N += 16)
    {
        ScenarioConfig c;
        c.slots_per_subframe = 10;
        c = sweep_point(c, "n_ris_elements", N);
        const FrameSchedule f = build_frame(c, 0, false);
        const double red = 1.0 - overhead_ratio(f);
        // Counting oracle: M_A + S M_D pilots against S (M_A + M_D).
        const int S = c.slots_per_subframe;
        const double eta = double(c.pilots_angle + S * c.pilots_doppler) / (S * (c.pilots_angle + c.pilots_doppler));
        o.pass = o.pass && red > prev && std::abs(overhead_ratio(f) - eta) <= 1e-15 &&
                 frame_pilots(f) == c.pilots_angle + S * c.pilots_doppler;
        if (N >= 32)
            o.pass = o.pass && red > 0.5;
        o.detail += fmt("N=%g:%.4f ", N, red);
        prev = red;
    }
    return o;
}

// ---- 2. Power accounting ------------------------------------------------------

Outcome power()
{
    Outcome o{true, ""};
    double prev = -inf;
    for (int L = 1; L <= 10; ++L)
    {
        ScenarioConfig c;
        c.n_subchannels = L;
        const auto p = total_power(c, false);
        const auto b = total_power(c, true);
        o.pass = o.pass && p.total > prev && p.total < b.total;
        prev = p.total;
        // Linearity: P(a x + y) = a P(x) + P(y) in the coefficient vector.
        ScenarioConfig x = c, y = c, z = c;
        std::mt19937_64 g{std::uint64_t(L)};
        std::uniform_real_distribution<double> u(0.0, 2.0);
        x.power_coeff_pssch = u(g), x.power_coeff_pscch = u(g), x.power_coeff_psfch = u(g);
        y.power_coeff_pssch = u(g), y.power_coeff_pscch = u(g), y.power_coeff_psfch = u(g);
        const double a = 1.75;
        z.power_coeff_pssch = a * x.power_coeff_pssch + y.power_coeff_pssch;
        z.power_coeff_pscch = a * x.power_coeff_pscch + y.power_coeff_pscch;
        z.power_coeff_psfch = a * x.power_coeff_psfch + y.power_coeff_psfch;
        for (bool bench : {false, true})
        {
            const double lhs = total_power(z, bench).total;
            const double rhs = a * total_power(x, bench).total + total_power(y, bench).total;
            o.pass = o.pass && std::abs(lhs - rhs) <= 1e-12 * std::abs(rhs);
        }
        o.detail += fmt("L=%g:%.0f/%.0f ", L, p.total, b.total);
    }
    return o;
}

// ---- 3. Tracking --------------------------------------------------------------

struct Drop
{
    SupportPattern s;
    Dictionary dict;
    CascadedChannel ch;
    PilotPattern pilots;
    PilotObservation obs;
};

Drop make_drop(const ScenarioConfig &c, std::uint64_t drop, double offgrid, double snr_db, int n_pilots)
{
    Drop x;
    const Rng rng(c.seed);
    auto e = rng.stream("acceptance.tracking", drop);
    const Geometry geo = build_vehicle_ris_scenario(c, rng, drop);
    x.s = generate_support(grid_dims(c), c.n_cues, c.n_common_paths, c.n_individual_paths, nullptr, 1.0, e);
    x.dict = draw_offsets(c, x.s, offgrid, e);
    x.ch = synthesize_channel(x.s, x.dict, gain_prior(c), geo, c, e);
    x.pilots = random_pilots(n_pilots, c.n_ris_elements, c.n_ue_antennas, e);
    x.obs = observe(x.ch, x.pilots, snr_db, e);
    return x;
}

double drop_nmse(const ChannelEstimate &e, const CascadedChannel &ch, int M)
{
    double num = 0, den = 0;
    for (int m = 0; m < M; ++m)
    {
        num += (e.z_dense(m) - ch.z_dense(m)).squaredNorm();
        den += ch.z_dense(m).squaredNorm();
    }
    return num / den;
}

// Mean header NMSE at 15 dB with pilots at twice the sparsity.
double mean_nmse(const ScenarioConfig &c, int drops, bool *monotone = nullptr)
{
    const TrackerOptions o = tracker_options(c);
    const int pilots = 2 * c.n_common_paths * c.n_individual_paths;
    KahanSum acc;
    for (int d = 0; d < drops; ++d)
    {
        const Drop x = make_drop(c, std::uint64_t(d), c.offgrid_fraction, 15.0, pilots);
        const auto [e, st] = track_slot(x.obs, cold_state(c, c.n_cues, o), o, true);
        acc.add(drop_nmse(e, x.ch, c.n_cues));
        if (monotone)
            for (std::size_t i = 1; i < e.likelihood_trace.size(); ++i)
                *monotone = *monotone && e.likelihood_trace[i] >= e.likelihood_trace[i - 1];
    }
    return acc.value() / drops;
}

Outcome tracking()
{
    const ScenarioConfig c;
    const int drops = 200;
    bool monotone = true;
    const double nmse_db = lin2db(mean_nmse(c, drops, &monotone));

    const TrackerOptions o = tracker_options(c);
    const int pilots = 2 * c.n_common_paths * c.n_individual_paths;
    int recovered = 0;
    double worst_rel = 0;
    for (int d = 0; d < drops; ++d)
    {
        const Drop x = make_drop(c, std::uint64_t(d) + 100000, 0.0, inf, pilots);
        const auto [e, st] = track_slot(x.obs, cold_state(c, c.n_cues, o), o, true);
        bool all = true;
        for (int m = 0; m < c.n_cues; ++m)
            all = all && same_atoms(e.atoms[m], x.s.atoms(m));
        recovered += all;

        // MMSE at noise 1e-12 against least squares on the true support.
        const Drop n = make_drop(c, std::uint64_t(d), c.offgrid_fraction, 15.0, pilots);
        const auto mm = mmse_gains(n.obs, n.dict, n.s, 1e-12);
        for (int m = 0; m < c.n_cues; ++m)
        {
            const CMat F = n.dict.response_matrix(n.pilots, n.s.atoms(m));
            const CVec ls = (F.adjoint() * F).ldlt().solve(F.adjoint() * n.obs.y[m]);
            worst_rel = std::max(worst_rel, (mm.z_hat[m] - ls).norm() / ls.norm());
        }
    }
    const double rate = double(recovered) / drops;
    Outcome out;
    out.pass = nmse_db <= -10.0 && rate >= 0.9 && worst_rel <= 1e-6 && monotone;
    out.detail = fmt("nmse %.2f dB, recovery %.3f, mmse-ls %.2e, monotone %g", nmse_db, rate, worst_rel, monotone);
    return out;
}

// ---- 4. Pilot scaling ---------------------------------------------------------

Outcome pilot_scaling()
{
    Outcome o{true, ""};
    std::mt19937_64 g(4);
    const int Q = ScenarioConfig{}.n_ue_antennas;
    for (int N : {16, 40, 80, 160})
        for (int P : {12, N / 2, N - 1})
        {
            const auto id = ls_identifiability(random_pilots(P, N, Q, g));
            o.pass = o.pass && !id.identifiable() && id.rank <= P;
        }
    o.detail = "ls rank-deficient below N; dts";
    for (int N : {40, 80, 160})
    {
        ScenarioConfig c = sweep_point(ScenarioConfig{}, "n_ris_elements", N);
        const double db = lin2db(mean_nmse(c, 40));
        o.pass = o.pass && db <= -10.0;
        o.detail += fmt(" N=%g:%.2fdB", N, db);
    }
    o.detail += " at 12 pilots";
    return o;
}

// ---- 5. Robustness vs speed ---------------------------------------------------

Outcome robustness()
{
    ExperimentSpec spec;
    spec.name = "capacity_vs_speed";
    const ScenarioConfig base = resolve_config(spec);
    const DropMetrics dm = speed_metrics();
    const int drops = 500;
    std::vector<PointSamples> pts;
    for (double v : {10.0, 20.0, 30.0, 40.0, 50.0})
        pts.push_back(run_point(sweep_point(base, "vehicle_speed_mps", v), v, drops, dm, 0));

    auto mean = [](const PointSamples &p, const char *k) { return summarize(p.get(k)).mean; };
    bool a = true, c = true;
    for (const auto &p : pts)
    {
        a = a && mean(p, "i_csi_robust") >= mean(p, "i_csi_nonrobust") &&
            mean(p, "s_csi_robust") >= mean(p, "s_csi_nonrobust");
        c = c && mean(p, "i_csi_robust") >= mean(p, "s_csi_robust") &&
            mean(p, "i_csi_nonrobust") >= mean(p, "s_csi_nonrobust");
    }
    const Summary g10 = summarize(pts.front().get("gap_s_csi"));
    const Summary g50 = summarize(pts.back().get("gap_s_csi"));
    const bool b = g50.mean > g10.mean && g50.ci_low > g10.ci_high;
    // Drops share their random streams across speeds; the paired difference
    // is reported for information only.
    std::vector<double> diff(drops);
    for (int d = 0; d < drops; ++d)
        diff[d] = pts.back().get("gap_s_csi")[d] - pts.front().get("gap_s_csi")[d];
    const Summary pd = summarize(diff);
    Outcome o;
    o.pass = a && b && c;
    o.detail = fmt("(a) %g (c) %g; S-CSI gap 10 m/s %.4f [%.4f, ", a, c, g10.mean, g10.ci_low) +
               fmt("%.4f] 50 m/s %.4f [%.4f, %.4f]", g10.ci_high, g50.mean, g50.ci_low, g50.ci_high) +
               fmt("; paired 50-10 %.4f [%.4f, %.4f]", pd.mean, pd.ci_low, pd.ci_high);
    return o;
}

// ---- 6. Distance trends -------------------------------------------------------

Outcome distance()
{
    ExperimentSpec spec;
    spec.name = "capacity_vs_distance";
    spec.drops = 200;
    spec.config_overrides = {"n_ris_elements=80", "p_active_max_dbm=20", "pr_ris_elements=1000", "n_tiles=20",
                             "n_pscs=8"};
    const ExperimentResult r = run_experiment_samples(spec);
    std::vector<double> at, pr;
    for (const auto &p : r.points)
    {
        at.push_back(summarize(p.get("at_capacity")).mean);
        pr.push_back(summarize(p.get("pr_capacity")).mean);
    }
    bool nonincreasing = true, above = true;
    for (std::size_t i = 0; i < at.size(); ++i)
    {
        above = above && at[i] > pr[i];
        if (i > 0)
            nonincreasing = nonincreasing && at[i] <= at[i - 1];
    }
    const auto k = std::size_t(std::min_element(pr.begin(), pr.end()) - pr.begin());
    const bool interior = k > 0 && k + 1 < pr.size() && pr[k] < pr.front() && pr[k] < pr.back();
    Outcome o;
    o.pass = nonincreasing && interior && above;
    o.detail = fmt("AT %.2f -> %.2f non-increasing %g, ", at.front(), at.back(), nonincreasing) +
               fmt("PR min %.4f at x=%g, AT > PR %g", pr[k], r.points[k].sweep_value, above);
    return o;
}

// ---- 7. Allocation oracles ----------------------------------------------------

PrLinks pr_links(ScenarioConfig &c, int K, int S, int L, std::uint64_t d)
{
    c.pr_ris_elements = 1000;
    c.n_tiles = K;
    c.n_pscs = S;
    c.n_cues = 3;
    c.n_due_pairs = L;
    c.drop_center_m = 500;
    c.drop_window_m = 100;
    c.ris_position_m = 500;
    const Rng rng(c.seed);
    auto e = rng.stream("acceptance.pr", d);
    return draw_pr_links(build_freeway_scenario(c, rng, d), c, e);
}

Outcome allocation()
{
    Outcome o{true, ""};

    // Scalar Mode 1 against its closed form.
    std::mt19937_64 g(7);
    double worst = 0;
    for (int trial = 0; trial < 100; ++trial)
    {
        CsiView v;
        v.direct = CMat::Constant(1, 1, 1e-6 * crandn(g));
        v.bs_ris = CMat::Constant(1, 1, 1e-3 * crandn(g));
        v.ris_ue = CMat::Constant(1, 1, 1e-2 * crandn(g));
        v.err_direct = RVec::Zero(1);
        Mode1Params p;
        p.tx_power = RVec::Constant(1, 0.2);
        p.noise_var = 1e-13;
        p.max_ris_power = 0.1;
        const auto r = optimize_mode1(v, p);
        const double a = std::sqrt(p.max_ris_power / (p.tx_power(0) * std::norm(v.ris_ue(0, 0))));
        const double h = std::abs(v.direct(0, 0)), gf = std::abs(v.bs_ris(0, 0) * v.ris_ue(0, 0));
        const double best = std::log2(1.0 + p.tx_power(0) * std::pow(h + a * gf, 2) / p.noise_var);
        worst = std::max(worst, std::abs(r.objective - best) / best);
    }
    o.pass = worst <= 1e-6;
    o.detail = fmt("mode1 %.1e; greedy/exhaustive", worst);

    // Greedy tiles against exhaustive search. A negative optimum (some pair
    // misses its outage target everywhere) reads 90% as ex - 0.1 |ex|.
    const int shapes[][2] = {{2, 4}, {4, 4}, {4, 8}, {8, 4}};
    for (const auto &ks : shapes)
    {
        int ok = 0;
        double sg = 0, se = 0;
        for (std::uint64_t d = 0; d < 100; ++d)
        {
            ScenarioConfig c;
            const PrLinks l = pr_links(c, ks[0], ks[1], 2, d);
            const TileContributions tc(l, build_psc_codebook(c), ks[0]);
            const Mode2Params p = mode2_params(c);
            double ex = 0;
            assign_tiles_exhaustive(tc, p, &ex);
            const double gr = tile_objective(tc, assign_tiles(tc, associate_tiles(tc, l, p), p), p);
            ok += gr >= ex - 0.1 * std::abs(ex);
            sg += gr;
            se += ex;
        }
        o.pass = o.pass && ok >= 90 && sg >= se - 0.1 * std::abs(se);
        o.detail += fmt(" K=%g,S=%g:%g/100", ks[0], ks[1], ok);
    }

    // Rayleigh outage Monte Carlo against the closed form.
    auto e = Rng(11).stream("acceptance.outage", 0);
    double worst_mc = 0;
    for (double snr : {0.3, 1.0, 3.0, 10.0, 100.0})
        for (double gth : {0.1, 0.5, 1.0, 3.16})
            for (double intf : {0.0, 1.0})
            {
                const LinkStats h{0.0, snr}, i{0.0, intf};
                const double mc = outage_monte_carlo(h, i, 1.0, intf > 0 ? 1.0 : 0.0, 1.0, gth, 10000, e);
                worst_mc = std::max(worst_mc, std::abs(mc - rayleigh_outage(snr, intf, 1.0, gth)));
            }
    o.pass = o.pass && worst_mc <= 0.01;
    o.detail += fmt("; outage mc %.4f", worst_mc);
    return o;
}

// ---- 8. Determinism -----------------------------------------------------------

std::uint64_t fnv1a(const std::string &bytes)
{
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : bytes)
        h = (h ^ ch) * 1099511628211ull;
    return h;
}

std::string slurp(const std::filesystem::path &p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism()
{
    const auto dir = std::filesystem::temp_directory_path() / "risv2x_acceptance";
    std::filesystem::create_directories(dir);
    Outcome o{true, ""};
    int files = 0;
    for (const auto &name : experiment_names())
        for (const char *format : {"csv", "jsonl"})
        {
            std::uint64_t h[2];
            for (int run = 0; run < 2; ++run)
            {
                ExperimentSpec spec;
                spec.name = name;
                spec.drops = 3;
                spec.seed = 20240611;
                spec.workers = run == 0 ? 1 : 4;
                const auto path = dir / (name + "." + std::to_string(run) + "." + format);
                emit(run_experiment(spec), format, path.string());
                h[run] = fnv1a(slurp(path));
            }
            o.pass = o.pass && h[0] == h[1];
            ++files;
        }
    std::filesystem::remove_all(dir);
    o.detail = fmt("%g output pairs hashed", files);
    return o;
}

struct Criterion
{
    int id;
    const char *name;
    double limit_s;
    std::function<Outcome()> run;
};
} // namespace

int main(int argc, char **argv)
{
    const std::vector<Criterion> all{
        {1, "overhead structure", 1.0, overhead},     {2, "power accounting", 1.0, power},
        {3, "tracking", 120.0, tracking},             {4, "pilot scaling", 60.0, pilot_scaling},
        {5, "robustness vs speed", 600.0, robustness}, {6, "distance trends", 600.0, distance},
        {7, "allocation oracles", 300.0, allocation}, {8, "determinism", inf, determinism},
    };
    int failed = 0;
    for (const auto &c : all)
    {
        // Optional criterion ids on the command line select a subset.
        bool wanted = argc == 1;
        for (int i = 1; i < argc; ++i)
            wanted = wanted || std::atoi(argv[i]) == c.id;
        if (!wanted)
            continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try
        {
            o = c.run();
        }
        catch (const std::exception &e)
        {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool pass = o.pass && s < c.limit_s;
        failed += !pass;
        std::printf("%s criterion %d %s (%.2f s): %s\n", pass ? "PASS" : "FAIL", c.id, c.name, s, o.detail.c_str());
        std::fflush(stdout);
    }
    return failed ? 1 : 0;
}
