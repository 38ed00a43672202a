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

#include "scenario.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>
#include <optional>

namespace risv2x
{

// Path loss ----------------------------------------------------------------

// reference_db is the gain at 1 m.
inline double path_loss(double d, double exponent, double reference_db)
{
    if (!(d > 0))
        throw ArgumentError("path_loss: distance must be positive");
    return db2lin(reference_db) * std::pow(d, -exponent);
}

// Twin-hop loss of a cascaded link: the product of the hop losses.
inline double cascaded_path_loss(double d1, double d2, double exponent, double reference_db)
{
    return path_loss(d1, exponent, reference_db) * path_loss(d2, exponent, reference_db);
}

// Support ------------------------------------------------------------------

struct GridDims
{
    int bs = 16;  // N~_T
    int ris = 80; // N~
    int ue = 2;   // Q~
    int size() const { return bs * ris * ue; }
};

inline GridDims grid_dims(const ScenarioConfig &c) { return {c.grid_bs, c.grid_ris, c.grid_ue}; }

struct CommonPath // BS-RIS path
{
    int bs = 0;
    int ris = 0;
    bool operator==(const CommonPath &) const = default;
};

struct IndividualPath // RIS-UE path
{
    int ris = 0;
    int ue = 0;
    bool operator==(const IndividualPath &) const = default;
};

// One cascaded grid point: BS angle, composite RIS angle, UE angle.
struct Atom
{
    int bs = 0;
    int ris = 0;
    int ue = 0;
    bool operator==(const Atom &) const = default;
    auto operator<=>(const Atom &) const = default;
};

inline int atom_index(const Atom &a, const GridDims &g) { return (a.bs * g.ris + a.ris) * g.ue + a.ue; }

inline Atom atom_from_index(int idx, const GridDims &g)
{
    Atom a;
    a.ue = idx % g.ue;
    idx /= g.ue;
    a.ris = idx % g.ris;
    a.bs = idx / g.ris;
    return a;
}

// Composite RIS index of pairing a BS-RIS path with a RIS-UE path: the
// difference of the RIS departure and arrival grid angles, folded into the grid.
inline int composite_ris(int k, int j, int grid) { return ((k - j) % grid + grid) % grid; }

struct SupportPattern
{
    GridDims grid;
    std::vector<CommonPath> common;
    std::vector<std::vector<IndividualPath>> individual; // per UE

    int n_ues() const { return int(individual.size()); }

    // Active cascaded grid points of UE m, in pairing order (common-major).
    std::vector<Atom> atoms(int m) const
    {
        std::vector<Atom> out;
        out.reserve(common.size() * individual[m].size());
        for (const auto &c : common)
            for (const auto &d : individual[m])
                out.push_back({c.bs, composite_ris(d.ris, c.ris, grid.ris), d.ue});
        return out;
    }

    // Binary tensor alpha of UE m over the (N~_T x N~ x Q~) grid.
    std::vector<std::uint8_t> alpha(int m) const
    {
        std::vector<std::uint8_t> a(grid.size(), 0);
        for (const auto &at : atoms(m))
            a[atom_index(at, grid)] = 1;
        return a;
    }

    int nonzeros(int m) const
    {
        auto a = alpha(m);
        return int(std::count(a.begin(), a.end(), std::uint8_t(1)));
    }
};

// Draws a twin-structured support. Without `prev`, paths are drawn uniformly
// without replacement (distinct BS indices for the common paths, distinct
// RIS/UE pairs per UE). With `prev`, each path survives with probability
// p_keep and is otherwise redrawn among the unused positions.
template <class URBG>
SupportPattern generate_support(const GridDims &grid, int n_ues, int n_common, int n_individual,
                                const SupportPattern *prev, double p_keep, URBG &rng)
{
    if (n_common < 1 || n_individual < 1)
        throw ArgumentError("generate_support: path counts must be >= 1");
    if (n_common > grid.bs)
        throw ArgumentError("generate_support: more common paths than BS grid points");
    if (n_individual > grid.ris * grid.ue)
        throw ArgumentError("generate_support: more individual paths than RIS x UE grid points");
    if (n_ues < 0)
        throw ArgumentError("generate_support: negative UE count");
    if (prev && (int(prev->common.size()) != n_common || prev->n_ues() != n_ues))
        throw ArgumentError("generate_support: previous pattern has different dimensions");

    SupportPattern s;
    s.grid = grid;
    std::bernoulli_distribution keep(std::clamp(p_keep, 0.0, 1.0));

    std::vector<char> bs_used(grid.bs, 0);
    s.common.resize(n_common);
    std::vector<char> kept(n_common, 0);
    if (prev)
        for (int c = 0; c < n_common; ++c)
            if (keep(rng))
            {
                s.common[c] = prev->common[c];
                bs_used[s.common[c].bs] = 1;
                kept[c] = 1;
            }
    for (int c = 0; c < n_common; ++c)
    {
        if (kept[c])
            continue;
        int i;
        do
            i = uniform_int(rng, 0, grid.bs - 1);
        while (bs_used[i]);
        bs_used[i] = 1;
        s.common[c] = {i, uniform_int(rng, 0, grid.ris - 1)};
    }

    s.individual.resize(n_ues);
    const int pairs = grid.ris * grid.ue;
    for (int m = 0; m < n_ues; ++m)
    {
        auto &d = s.individual[m];
        d.resize(n_individual);
        std::vector<char> used(pairs, 0);
        std::vector<char> k(n_individual, 0);
        if (prev && int(prev->individual[m].size()) == n_individual)
            for (int p = 0; p < n_individual; ++p)
                if (keep(rng))
                {
                    d[p] = prev->individual[m][p];
                    used[d[p].ris * grid.ue + d[p].ue] = 1;
                    k[p] = 1;
                }
        for (int p = 0; p < n_individual; ++p)
        {
            if (k[p])
                continue;
            int q;
            do
                q = uniform_int(rng, 0, pairs - 1);
            while (used[q]);
            used[q] = 1;
            d[p] = {q / grid.ue, q % grid.ue};
        }
    }
    return s;
}

// Dictionary ---------------------------------------------------------------

// Known training applied during one block of pilots: row p of ris_phases is
// the RIS coefficient vector of pilot p, column p of ue_pilots the UE symbol
// vector.
struct PilotPattern
{
    CMat ris_phases; // P x N
    CMat ue_pilots;  // Q x P
    int n_pilots() const { return int(ris_phases.rows()); }
};

template <class URBG>
PilotPattern random_pilots(int n_pilots, int n_ris, int n_ue, URBG &rng)
{
    PilotPattern p;
    p.ris_phases.resize(n_pilots, n_ris);
    p.ue_pilots.resize(n_ue, n_pilots);
    for (int i = 0; i < n_pilots; ++i)
        for (int n = 0; n < n_ris; ++n)
            p.ris_phases(i, n) = unit_phase(rng);
    const double s = 1.0 / std::sqrt(double(n_ue));
    for (int i = 0; i < n_pilots; ++i)
        for (int q = 0; q < n_ue; ++q)
            p.ue_pilots(q, i) = s * unit_phase(rng);
    return p;
}

// Off-grid angular dictionary: steering matrices of BS, RIS (composite
// angles) and UE arrays on grids perturbed by per-grid-point offsets.
class Dictionary
{
  public:
    Dictionary() = default;

    Dictionary(int n_bs, int n_ris, int n_ue, const GridDims &g) : n_bs_(n_bs), n_ris_(n_ris), n_ue_(n_ue), grid_(g)
    {
        theta_bs_ = RVec::Zero(g.bs);
        theta_ris_ = RVec::Zero(g.ris);
        theta_ue_ = RVec::Zero(g.ue);
        a_bs_.resize(n_bs, g.bs);
        a_ris_.resize(n_ris, g.ris);
        a_ue_.resize(n_ue, g.ue);
        for (int i = 0; i < g.bs; ++i)
            a_bs_.col(i) = steering(n_bs, grid_angle(i, g.bs));
        for (int i = 0; i < g.ris; ++i)
            a_ris_.col(i) = steering(n_ris, grid_angle(i, g.ris));
        for (int i = 0; i < g.ue; ++i)
            a_ue_.col(i) = steering(n_ue, grid_angle(i, g.ue));
    }

    static double half_cell(int grid) { return pi / double(grid); }

    enum class Side
    {
        bs,
        ris,
        ue
    };

    void set_offset(Side s, int idx, double theta)
    {
        const int g = s == Side::bs ? grid_.bs : s == Side::ris ? grid_.ris : grid_.ue;
        if (idx < 0 || idx >= g)
            throw ArgumentError("dictionary: grid index out of range");
        if (!(std::abs(theta) <= half_cell(g) * (1.0 + 1e-12)))
            throw ArgumentError("dictionary: offset exceeds half a grid cell");
        switch (s)
        {
        case Side::bs:
            theta_bs_(idx) = theta;
            a_bs_.col(idx) = steering(n_bs_, grid_angle(idx, g) + theta);
            break;
        case Side::ris:
            theta_ris_(idx) = theta;
            a_ris_.col(idx) = steering(n_ris_, grid_angle(idx, g) + theta);
            break;
        case Side::ue:
            theta_ue_(idx) = theta;
            a_ue_.col(idx) = steering(n_ue_, grid_angle(idx, g) + theta);
            break;
        }
    }

    double offset(Side s, int idx) const
    {
        return s == Side::bs ? theta_bs_(idx) : s == Side::ris ? theta_ris_(idx) : theta_ue_(idx);
    }

    const RVec &theta_bs() const { return theta_bs_; }
    const RVec &theta_ris() const { return theta_ris_; }
    const RVec &theta_ue() const { return theta_ue_; }
    const CMat &a_bs() const { return a_bs_; }
    const CMat &a_ris() const { return a_ris_; }
    const CMat &a_ue() const { return a_ue_; }
    const GridDims &grid() const { return grid_; }
    int n_bs() const { return n_bs_; }
    int n_ris() const { return n_ris_; }
    int n_ue() const { return n_ue_; }

    // B(p, r) = phi_p^T a_RIS(r) / sqrt(N): RIS factor of composite grid point r.
    CMat ris_factor(const PilotPattern &p) const { return p.ris_phases * a_ris_ / std::sqrt(double(n_ris_)); }

    // C(p, l) = a_UE(l)^H x_p.
    CMat ue_factor(const PilotPattern &p) const { return (a_ue_.adjoint() * p.ue_pilots).transpose(); }

    // Observation-domain column of one atom: vec(a_BS(i) (B(:,r) .* C(:,l))^T),
    // pilot-major with the BS antenna index running fastest.
    CVec atom_column(const PilotPattern &p, const Atom &a) const
    {
        const CMat B = ris_factor(p);
        const CMat C = ue_factor(p);
        return atom_column(B, C, a);
    }

    CVec atom_column(const CMat &B, const CMat &C, const Atom &a) const
    {
        const int P = int(B.rows());
        CVec col(P * n_bs_);
        for (int q = 0; q < P; ++q)
            col.segment(q * n_bs_, n_bs_) = a_bs_.col(a.bs) * (B(q, a.ris) * C(q, a.ue));
        return col;
    }

    // Response matrix F(theta) restricted to `atoms`.
    CMat response_matrix(const PilotPattern &p, const std::vector<Atom> &atoms) const
    {
        const CMat B = ris_factor(p);
        const CMat C = ue_factor(p);
        CMat F(p.n_pilots() * n_bs_, Eigen::Index(atoms.size()));
        for (std::size_t k = 0; k < atoms.size(); ++k)
            F.col(k) = atom_column(B, C, atoms[k]);
        return F;
    }

    // Full response matrix over every grid point, in atom_index order.
    CMat response_matrix(const PilotPattern &p) const
    {
        std::vector<Atom> all(grid_.size());
        for (int i = 0; i < grid_.size(); ++i)
            all[i] = atom_from_index(i, grid_);
        return response_matrix(p, all);
    }

  private:
    int n_bs_ = 0, n_ris_ = 0, n_ue_ = 0;
    GridDims grid_;
    RVec theta_bs_, theta_ris_, theta_ue_;
    CMat a_bs_, a_ris_, a_ue_;
};

inline Dictionary build_dictionary(const ScenarioConfig &c) { return {c.n_bs_antennas, c.n_ris_elements, c.n_ue_antennas, grid_dims(c)}; }

// Builds a dictionary with the given offsets; vectors must match the grids.
inline Dictionary build_dictionary(const ScenarioConfig &c, const RVec &theta_bs, const RVec &theta_ris,
                                   const RVec &theta_ue)
{
    Dictionary d = build_dictionary(c);
    const GridDims g = grid_dims(c);
    if (theta_bs.size() != g.bs || theta_ris.size() != g.ris || theta_ue.size() != g.ue)
        throw ArgumentError("build_dictionary: offset vector sizes do not match the grids");
    for (int i = 0; i < g.bs; ++i)
        if (theta_bs(i) != 0)
            d.set_offset(Dictionary::Side::bs, i, theta_bs(i));
    for (int i = 0; i < g.ris; ++i)
        if (theta_ris(i) != 0)
            d.set_offset(Dictionary::Side::ris, i, theta_ris(i));
    for (int i = 0; i < g.ue; ++i)
        if (theta_ue(i) != 0)
            d.set_offset(Dictionary::Side::ue, i, theta_ue(i));
    return d;
}

// Closed-form inner product of two unit-norm ULA steering vectors separated
// by dpsi: (1/N) sum_n exp(j n dpsi).
inline cplx dirichlet_kernel(int n, double dpsi)
{
    const double s = std::sin(0.5 * dpsi);
    if (std::abs(s) < 1e-15)
        return 1.0;
    return std::polar(std::sin(0.5 * n * dpsi) / (n * s), 0.5 * (n - 1) * dpsi);
}

// Cascaded channel ---------------------------------------------------------

// Layer II/III gain prior: hop gains are complex Gaussian around `mean` with
// per-path precision drawn from Gamma(shape, rate). A fixed precision of
// +inf makes the gains deterministic.
struct GainPrior
{
    cplx common_mean = 0.0;
    cplx individual_mean = 0.0;
    double shape = 1.0;
    double rate = 1.0;
    std::optional<double> fixed_precision;
    bool normalize = false; // rescale each hop to unit average path power
};

inline GainPrior gain_prior(const ScenarioConfig &c)
{
    GainPrior p;
    p.shape = c.prior_shape;
    p.rate = c.prior_rate;
    p.normalize = c.normalize_path_power;
    return p;
}

struct PathGain
{
    Atom atom;
    cplx z = 0.0;
    double precision = 0.0; // 1 / prior variance of z
    double doppler_hz = 0.0;
};

struct CascadedChannel
{
    SupportPattern support;
    Dictionary dictionary;                // true off-grid angles
    std::vector<cplx> common_gains;       // BS-RIS hop, path loss included
    std::vector<double> common_var;       // prior variance of each common gain
    std::vector<std::vector<cplx>> individual_gains; // RIS-UE hop per UE
    std::vector<std::vector<double>> individual_var;
    std::vector<std::vector<PathGain>> paths; // z per UE, aligned with support.atoms(m)
    std::vector<CMat> h_direct;               // N_T x Q per UE
    CMat g_bs_ris;                            // N_T x N
    std::vector<CMat> f_ris_ue;               // N x Q per UE
    std::vector<double> individual_theta;     // true RIS departure offsets of individual paths, by UE-major order

    int n_ues() const { return support.n_ues(); }

    // Dense z of UE m over the whole grid, atom_index order.
    CVec z_dense(int m) const
    {
        CVec z = CVec::Zero(support.grid.size());
        for (const auto &p : paths[m])
            z(atom_index(p.atom, support.grid)) += p.z;
        return z;
    }
};

namespace detail
{
// Union-find over composite RIS indices, used to give every composite grid
// point one consistent offset.
struct Dsu
{
    std::vector<int> parent;
    explicit Dsu(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x)
    {
        while (parent[x] != x)
            x = parent[x] = parent[parent[x]];
        return x;
    }
    void unite(int a, int b)
    {
        a = find(a);
        b = find(b);
        if (a != b)
            parent[std::max(a, b)] = std::min(a, b);
    }
};

template <class URBG>
double draw_precision(const GainPrior &p, URBG &rng)
{
    if (p.fixed_precision)
        return *p.fixed_precision;
    std::gamma_distribution<double> gd(p.shape, 1.0 / p.rate);
    double r;
    do
        r = gd(rng);
    while (!(r > 0));
    return r;
}

template <class URBG>
cplx draw_gain(cplx mean, double precision, URBG &rng)
{
    if (std::isinf(precision))
        return mean;
    return mean + crandn(rng) / std::sqrt(precision);
}

inline double product_variance(cplx mg, double vg, cplx mf, double vf)
{
    return (std::norm(mg) + vg) * (std::norm(mf) + vf) - std::norm(mg * mf);
}
} // namespace detail

// Draws off-grid offsets consistent with a support: BS and UE offsets per
// used grid point, composite RIS offsets tied so that every pairing of a RIS
// departure angle with a common-path arrival angle lands on one offset.
// Common-path RIS arrival angles stay on the grid.
template <class URBG>
Dictionary draw_offsets(const ScenarioConfig &c, const SupportPattern &s, double fraction, URBG &rng)
{
    Dictionary d = build_dictionary(c);
    const GridDims g = s.grid;
    auto draw = [&](int grid) { return uniform(rng, -1.0, 1.0) * fraction * Dictionary::half_cell(grid); };
    if (fraction <= 0)
        return d;
    for (const auto &cp : s.common)
        d.set_offset(Dictionary::Side::bs, cp.bs, draw(g.bs));
    std::vector<char> ue_done(g.ue, 0);
    detail::Dsu dsu(g.ris);
    std::vector<char> used(g.ris, 0);
    for (int m = 0; m < s.n_ues(); ++m)
        for (const auto &ip : s.individual[m])
        {
            if (!ue_done[ip.ue])
            {
                d.set_offset(Dictionary::Side::ue, ip.ue, draw(g.ue));
                ue_done[ip.ue] = 1;
            }
            const int r0 = composite_ris(ip.ris, s.common.front().ris, g.ris);
            used[r0] = 1;
            for (const auto &cp : s.common)
            {
                const int r = composite_ris(ip.ris, cp.ris, g.ris);
                used[r] = 1;
                dsu.unite(r0, r);
            }
        }
    std::map<int, double> class_offset;
    for (int r = 0; r < g.ris; ++r)
        if (used[r])
        {
            const int root = dsu.find(r);
            auto it = class_offset.find(root);
            if (it == class_offset.end())
                it = class_offset.emplace(root, draw(g.ris)).first;
            d.set_offset(Dictionary::Side::ris, r, it->second);
        }
    return d;
}

// Synthesizes the sparse cascaded channel of one drop plus the dense
// BS-RIS and RIS-UE matrices it factors into. Hop losses come from the
// geometry (the RIS-UE distance of UE m is that of CUE m); direct links are
// left empty here and filled by rician_direct.
template <class URBG>
CascadedChannel synthesize_channel(const SupportPattern &support, const Dictionary &dict, const GainPrior &prior,
                                   const Geometry &geo, const ScenarioConfig &c, URBG &rng)
{
    if (prior.fixed_precision && !(*prior.fixed_precision > 0))
        throw ArgumentError("synthesize_channel: precision must be positive");
    if (!prior.fixed_precision && !(prior.shape > 0 && prior.rate > 0))
        throw ArgumentError("synthesize_channel: Gamma hyperparameters must be positive");

    CascadedChannel ch;
    ch.support = support;
    ch.dictionary = dict;
    const int M = support.n_ues();
    const int C = int(support.common.size());
    const GridDims g = support.grid;
    const Eigen::Vector3d ris = ris_position(geo);
    const double pl1 = path_loss((ris - geo.bs_position).norm(), c.pathloss_exponent_cascaded, c.pathloss_ref_db);

    ch.common_gains.resize(C);
    ch.common_var.resize(C);
    for (int k = 0; k < C; ++k)
    {
        const double rho = detail::draw_precision(prior, rng);
        ch.common_gains[k] = detail::draw_gain(prior.common_mean, rho, rng);
        ch.common_var[k] = std::isinf(rho) ? 0.0 : 1.0 / rho;
    }
    auto normalize = [](std::vector<cplx> &gains, std::vector<double> &var) {
        double e = 0;
        for (auto x : gains)
            e += std::norm(x);
        if (e <= 0)
            return;
        const double s2 = double(gains.size()) / e;
        for (auto &x : gains)
            x *= std::sqrt(s2);
        for (auto &v : var)
            v *= s2;
    };
    if (prior.normalize && !prior.fixed_precision)
        normalize(ch.common_gains, ch.common_var);
    // The common-hop mean is scaled together with its draws.
    const cplx mean_g = prior.common_mean * std::sqrt(pl1);
    for (int k = 0; k < C; ++k)
    {
        ch.common_gains[k] *= std::sqrt(pl1);
        ch.common_var[k] *= pl1;
    }

    const double fd = c.vehicle_speed_mps * c.carrier_hz / speed_of_light;
    ch.individual_gains.resize(M);
    ch.individual_var.resize(M);
    ch.paths.resize(M);
    ch.f_ris_ue.resize(M);
    ch.h_direct.resize(M);
    for (int m = 0; m < M; ++m)
    {
        const auto &D = support.individual[m];
        double pl2 = 1.0;
        if (m < int(geo.cues.size()))
            pl2 = path_loss(std::max((position(geo, geo.cues[m]) - ris).norm(), 1e-3), c.pathloss_exponent_cascaded,
                            c.pathloss_ref_db);
        auto &f = ch.individual_gains[m];
        auto &fv = ch.individual_var[m];
        f.resize(D.size());
        fv.resize(D.size());
        for (std::size_t d = 0; d < D.size(); ++d)
        {
            const double rho = detail::draw_precision(prior, rng);
            f[d] = detail::draw_gain(prior.individual_mean, rho, rng);
            fv[d] = std::isinf(rho) ? 0.0 : 1.0 / rho;
        }
        if (prior.normalize && !prior.fixed_precision)
            normalize(f, fv);
        for (std::size_t d = 0; d < D.size(); ++d)
        {
            f[d] *= std::sqrt(pl2);
            fv[d] *= pl2;
        }
        const cplx mean_f = prior.individual_mean * std::sqrt(pl2);

        for (int k = 0; k < C; ++k)
            for (std::size_t d = 0; d < D.size(); ++d)
            {
                PathGain p;
                p.atom = {support.common[k].bs, composite_ris(D[d].ris, support.common[k].ris, g.ris), D[d].ue};
                p.z = ch.common_gains[k] * f[d];
                const double var = detail::product_variance(mean_g, ch.common_var[k], mean_f, fv[d]);
                p.precision = var > 0 ? 1.0 / var : std::numeric_limits<double>::infinity();
                const double psi = grid_angle(D[d].ue, g.ue) + dict.theta_ue()(D[d].ue);
                p.doppler_hz = fd * std::remainder(psi, 2.0 * pi) / pi;
                ch.paths[m].push_back(p);
            }
    }

    // Dense factors. RIS-side physical angles: common arrivals on the grid,
    // individual departures carry the composite offset of their first pairing.
    const int NT = dict.n_bs(), N = dict.n_ris(), Q = dict.n_ue();
    ch.g_bs_ris = CMat::Zero(NT, N);
    for (int k = 0; k < C; ++k)
    {
        const auto &cp = support.common[k];
        ch.g_bs_ris += ch.common_gains[k] * dict.a_bs().col(cp.bs) * steering(N, grid_angle(cp.ris, g.ris)).adjoint();
    }
    for (int m = 0; m < M; ++m)
    {
        ch.f_ris_ue[m] = CMat::Zero(N, Q);
        const auto &D = support.individual[m];
        for (std::size_t d = 0; d < D.size(); ++d)
        {
            double theta = 0.0;
            if (C > 0)
                theta = dict.theta_ris()(composite_ris(D[d].ris, support.common.front().ris, g.ris));
            ch.individual_theta.push_back(theta);
            const CVec ar = steering(N, grid_angle(D[d].ris, g.ris) + theta);
            ch.f_ris_ue[m] += ch.individual_gains[m][d] * ar * dict.a_ue().col(D[d].ue).adjoint();
        }
        ch.h_direct[m] = CMat::Zero(NT, Q);
    }
    return ch;
}

// End-to-end cascade of UE m for RIS coefficients phi: G diag(phi) F_m.
inline CMat cascade_dense(const CascadedChannel &ch, const CVec &phi, int m)
{
    return ch.g_bs_ris * phi.asDiagonal() * ch.f_ris_ue[m];
}

// The same cascade synthesized from the sparse gains and the dictionary.
inline CMat cascade_from_dictionary(const CascadedChannel &ch, const CVec &phi, int m)
{
    const Dictionary &d = ch.dictionary;
    CMat H = CMat::Zero(d.n_bs(), d.n_ue());
    const double s = 1.0 / std::sqrt(double(d.n_ris()));
    for (const auto &p : ch.paths[m])
    {
        const cplx b = (phi.transpose() * d.a_ris().col(p.atom.ris))(0) * s;
        H += p.z * b * d.a_bs().col(p.atom.bs) * d.a_ue().col(p.atom.ue).adjoint();
    }
    return H;
}

// Gauss-Markov aging of the RIS-UE hop over dt: f' = rho f + sqrt(1-rho^2) e
// with e of the path's prior variance and rho the Jakes correlation. Every
// cascaded gain z = g f then evolves with the same rho; support and angles
// are kept.
template <class URBG>
CascadedChannel age_channel(const CascadedChannel &ch, double speed, double dt, double carrier_hz, URBG &rng)
{
    if (dt < 0)
        throw ArgumentError("age_channel: negative dt");
    const double rho = jakes_rho(speed, carrier_hz, dt);
    if (dt == 0 || rho == 1.0)
        return ch;
    CascadedChannel out = ch;
    const double w = std::sqrt(std::max(0.0, 1.0 - rho * rho));
    const int M = ch.n_ues();
    const int N = ch.dictionary.n_ris();
    const GridDims g = ch.support.grid;
    std::size_t theta_pos = 0;
    for (int m = 0; m < M; ++m)
    {
        auto &f = out.individual_gains[m];
        // Innovations keep the variance profile but match the realized energy,
        // so aging is energy-stationary even after gain normalization.
        double energy = 0, var_sum = 0;
        for (std::size_t d = 0; d < f.size(); ++d)
        {
            energy += std::norm(f[d]);
            var_sum += out.individual_var[m][d];
        }
        const double scale = var_sum > 0 ? energy / var_sum : 0.0;
        for (std::size_t d = 0; d < f.size(); ++d)
            f[d] = rho * f[d] + w * std::sqrt(out.individual_var[m][d] * scale) * crandn(rng);
        const auto &D = ch.support.individual[m];
        std::size_t i = 0;
        for (std::size_t k = 0; k < ch.support.common.size(); ++k)
            for (std::size_t d = 0; d < D.size(); ++d)
                out.paths[m][i++].z = out.common_gains[k] * f[d];
        out.f_ris_ue[m].setZero();
        for (std::size_t d = 0; d < D.size(); ++d)
        {
            const CVec ar = steering(N, grid_angle(D[d].ris, g.ris) + ch.individual_theta[theta_pos++]);
            out.f_ris_ue[m] += f[d] * ar * ch.dictionary.a_ue().col(D[d].ue).adjoint();
        }
    }
    return out;
}

// Rician links ---------------------------------------------------------------

// A dense link split into its deterministic LoS part and its scattered part,
// both already scaled by path loss.
struct RicianLink
{
    CMat los;
    CMat nlos;
    double nlos_power = 0.0; // per-entry variance of nlos
    CMat total() const { return los + nlos; }
};

// h = sqrt(K/(K+1)) h_LoS + sqrt(1/(K+1)) h_NLoS scaled by `pl`. h_LoS is the
// outer product of unnormalized array responses (unit-modulus entries) with
// the carrier phase of distance d; K = +inf drops the scattered part.
template <class URBG>
RicianLink rician_link(int n_rx, int n_tx, double psi_rx, double psi_tx, double pl, double k_db, double d,
                       double wavelength, URBG &rng)
{
    RicianLink l;
    const double K = db2lin(k_db);
    const double w_los = std::isinf(K) ? 1.0 : std::sqrt(K / (K + 1.0));
    const double w_nlos = std::isinf(K) ? 0.0 : std::sqrt(1.0 / (K + 1.0));
    const cplx ph = std::polar(1.0, -2.0 * pi * std::fmod(d / wavelength, 1.0));
    l.los = (std::sqrt(pl) * w_los * ph) * steering(n_rx, psi_rx) * steering(n_tx, psi_tx).adjoint() *
            std::sqrt(double(n_rx) * double(n_tx));
    l.nlos_power = pl * w_nlos * w_nlos;
    if (w_nlos > 0)
        l.nlos = crandn(rng, n_rx, n_tx) * std::sqrt(l.nlos_power);
    else
        l.nlos = CMat::Zero(n_rx, n_tx);
    return l;
}

// Array axes point along the road.
inline const Eigen::Vector3d &array_axis()
{
    static const Eigen::Vector3d x{1.0, 0.0, 0.0};
    return x;
}

// Link between two points with half-wavelength ULAs along the road axis.
template <class URBG>
RicianLink rician_between(const Eigen::Vector3d &rx, const Eigen::Vector3d &tx, int n_rx, int n_tx, double exponent,
                          double k_db, const ScenarioConfig &c, URBG &rng)
{
    const Eigen::Vector3d v = rx - tx;
    const double d = std::max(v.norm(), 1e-3);
    const Eigen::Vector3d u = v / d;
    const double psi_tx = electrical_angle(array_axis(), u);
    const double psi_rx = electrical_angle(array_axis(), -u);
    return rician_link(n_rx, n_tx, psi_rx, psi_tx, path_loss(d, exponent, c.pathloss_ref_db), k_db, d,
                       speed_of_light / c.carrier_hz, rng);
}

// Direct BS<-UE links (N_T x Q) of every CUE.
template <class URBG>
std::vector<RicianLink> rician_direct(const Geometry &geo, const ScenarioConfig &c, URBG &rng)
{
    std::vector<RicianLink> out;
    for (const auto &v : geo.cues)
        out.push_back(rician_between(geo.bs_position, position(geo, v), c.n_bs_antennas, c.n_ue_antennas,
                                     c.pathloss_exponent_direct, c.rician_k_db, c, rng));
    return out;
}

// Aging of a Rician link: only the scattered part decorrelates.
template <class URBG>
RicianLink age_link(const RicianLink &l, double rho, URBG &rng)
{
    RicianLink out = l;
    if (rho == 1.0 || l.nlos_power == 0)
        return out;
    const double w = std::sqrt(std::max(0.0, 1.0 - rho * rho) * l.nlos_power);
    out.nlos = rho * l.nlos + w * crandn(rng, l.nlos.rows(), l.nlos.cols());
    return out;
}

// Angular statistics --------------------------------------------------------

struct AngularStats
{
    int lobes = 0;
    double spread_rad = 0.0; // rms spread of the angular power spectrum over [0, pi)
};

// Angular power spectrum of a RIS departure vector sampled at `points`
// physical angles in [0, pi).
inline RVec angular_spectrum(const CVec &f, int points)
{
    const int N = int(f.size());
    RVec p(points);
    for (int i = 0; i < points; ++i)
    {
        const double th = pi * (i + 0.5) / points;
        p(i) = std::norm(steering(N, pi * std::cos(th)).dot(f));
    }
    return p;
}

// A lobe is a maximal run of angles whose power is within threshold_db of
// the peak.
inline AngularStats angular_stats(const CVec &f, double threshold_db, int points = 720)
{
    AngularStats s;
    const RVec p = angular_spectrum(f, points);
    const double peak = p.maxCoeff();
    if (!(peak > 0))
        return s;
    const double thr = peak * db2lin(threshold_db);
    bool in = false;
    for (int i = 0; i < points; ++i)
    {
        const bool above = p(i) > thr;
        if (above && !in)
            ++s.lobes;
        in = above;
    }
    const double tot = p.sum();
    double mean = 0;
    for (int i = 0; i < points; ++i)
        mean += pi * (i + 0.5) / points * p(i);
    mean /= tot;
    double var = 0;
    for (int i = 0; i < points; ++i)
    {
        const double th = pi * (i + 0.5) / points - mean;
        var += th * th * p(i);
    }
    s.spread_rad = std::sqrt(var / tot);
    return s;
}

// RIS departure vector made of spatial lobes: lobe count drawn from
// `lobe_pmf` (index i = i+1 lobes), lobe centres at least min_sep_rad apart,
// two sub-paths per lobe inside a fraction of the array beamwidth.
template <class URBG>
CVec lobed_departure(int n_ris, const std::vector<double> &lobe_pmf, double min_sep_rad, URBG &rng,
                     int *drawn_lobes = nullptr)
{
    std::discrete_distribution<int> dd(lobe_pmf.begin(), lobe_pmf.end());
    const int lobes = dd(rng) + 1;
    if (drawn_lobes)
        *drawn_lobes = lobes;
    std::vector<double> centres;
    const double margin = 0.2;
    while (int(centres.size()) < lobes)
    {
        const double th = uniform(rng, margin, pi - margin);
        bool ok = true;
        for (double c0 : centres)
            ok = ok && std::abs(c0 - th) >= min_sep_rad;
        if (ok)
            centres.push_back(th);
    }
    CVec f = CVec::Zero(n_ris);
    for (double th : centres)
    {
        const double lobe_amp = std::sqrt(db2lin(uniform(rng, -5.0, 0.0)));
        const double width = 0.25 * 2.0 / n_ris; // in cos-domain
        for (int k = 0; k < 2; ++k)
        {
            const double u = std::cos(th) + uniform(rng, -0.5, 0.5) * width;
            f += lobe_amp * std::polar(1.0, uniform(rng, 0.0, 0.25 * pi)) * steering(n_ris, pi * u);
        }
    }
    return f;
}

// CSV export of the nonzero paths.
inline std::string channel_paths_csv(const CascadedChannel &ch)
{
    std::ostringstream os;
    os << std::setprecision(17);
    os << "ue,bs_index,ris_index,ue_index,theta_bs,theta_ris,theta_ue,gain_re,gain_im\n";
    for (int m = 0; m < ch.n_ues(); ++m)
        for (const auto &p : ch.paths[m])
            os << m << ',' << p.atom.bs << ',' << p.atom.ris << ',' << p.atom.ue << ','
               << ch.dictionary.theta_bs()(p.atom.bs) << ',' << ch.dictionary.theta_ris()(p.atom.ris) << ','
               << ch.dictionary.theta_ue()(p.atom.ue) << ',' << p.z.real() << ',' << p.z.imag() << '\n';
    return os.str();
}

} // namespace risv2x
