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

#include "channel.hpp"

#include <cstdio>
#include <functional>
#include <optional>

namespace risv2x
{

// Pilot observations of every UE for one block of pilots. All UEs share the
// RIS training; each UE's block is received in its own orthogonal resource.
struct PilotObservation
{
    std::vector<CVec> y; // per UE, length n_pilots * N_T
    PilotPattern pilots;
    double noise_var = 0.0;
    double snr_db = std::numeric_limits<double>::infinity();
    int n_ues() const { return int(y.size()); }
};

// Generates observations of a channel through its true dictionary. The noise
// variance is set so that the mean per-entry clean power over all UEs is
// snr_db above it; snr_db = +inf gives noiseless data.
template <class URBG>
PilotObservation observe(const CascadedChannel &ch, const PilotPattern &pilots, double snr_db, URBG &rng)
{
    PilotObservation obs;
    obs.pilots = pilots;
    obs.snr_db = snr_db;
    const CMat B = ch.dictionary.ris_factor(pilots);
    const CMat C = ch.dictionary.ue_factor(pilots);
    const int rows = pilots.n_pilots() * ch.dictionary.n_bs();
    double energy = 0;
    for (int m = 0; m < ch.n_ues(); ++m)
    {
        CVec y = CVec::Zero(rows);
        for (const auto &p : ch.paths[m])
            y += p.z * ch.dictionary.atom_column(B, C, p.atom);
        energy += y.squaredNorm();
        obs.y.push_back(std::move(y));
    }
    if (std::isinf(snr_db) || ch.n_ues() == 0 || energy == 0)
        return obs;
    obs.noise_var = energy / (double(rows) * ch.n_ues()) / db2lin(snr_db);
    const double s = std::sqrt(obs.noise_var);
    for (auto &y : obs.y)
        for (Eigen::Index i = 0; i < y.size(); ++i)
            y(i) += s * crandn(rng);
    return obs;
}

struct TrackerOptions
{
    int max_common = 3;
    int max_individual = 2;
    double residual_tol = 1e-3;   // residual-energy drop, relative to the current residual, that stops the pursuit
    double likelihood_tol = 1e-6; // relative likelihood gain that stops refinement
    int max_sweeps = 5;
    int golden_iterations = 24;
    int lookahead = 8;             // candidates re-scored by their exact residual
    int swap_rounds = 6;           // remove-and-replace rounds after the greedy pursuit
    double swap_noise_factor = 2.0; // swaps stop once the residual is below this many noise energies
    double smoothing_weight = 0.5;
    double prior_floor = 1e-2;
    double cold_precision = 1e-9;
    double temporal_rho = 1.0; // gain correlation between consecutive slots
    double cond_limit = 1e12;
};

inline TrackerOptions tracker_options(const ScenarioConfig &c)
{
    TrackerOptions o;
    o.max_common = c.n_common_paths;
    o.max_individual = c.n_individual_paths;
    o.max_sweeps = c.refine_sweeps;
    o.smoothing_weight = c.smoothing_weight;
    o.prior_floor = c.prior_floor;
    o.cold_precision = c.cold_precision;
    o.temporal_rho = jakes_rho(c.vehicle_speed_mps, c.carrier_hz, c.slot_duration_s);
    return o;
}

// Posterior carried between slots: per-grid-point activity probabilities,
// angle estimates, per-path precisions and the previous gain posterior.
struct TrackerState
{
    std::vector<RVec> activity;  // per UE, atom_index order, in [0, 1]
    std::vector<RVec> precision; // per UE, > 0
    Dictionary dict;             // theta-hat
    SupportPattern support;      // last header-slot support
    std::vector<CVec> z_prev;    // per UE, dense
    std::vector<RVec> var_prev;  // per UE, dense
    bool has_support = false;
};

// Cold start: uniform activity sparsity / grid size, on-grid angles.
inline TrackerState cold_state(const ScenarioConfig &c, int n_ues, const TrackerOptions &o)
{
    TrackerState s;
    const GridDims g = grid_dims(c);
    const double p0 = double(o.max_common) * o.max_individual / double(g.size());
    s.activity.assign(n_ues, RVec::Constant(g.size(), p0));
    s.precision.assign(n_ues, RVec::Constant(g.size(), o.cold_precision));
    s.z_prev.assign(n_ues, CVec::Zero(g.size()));
    s.var_prev.assign(n_ues, RVec::Zero(g.size()));
    s.dict = build_dictionary(c);
    s.support.grid = g;
    s.support.individual.assign(n_ues, {});
    return s;
}

struct ChannelEstimate
{
    SupportPattern support_hat;
    Dictionary dict_hat;
    std::vector<std::vector<Atom>> atoms; // per UE, aligned with z_hat
    std::vector<CVec> z_hat;
    std::vector<RVec> posterior_var;
    std::vector<double> likelihood_trace; // data log-likelihood after each refinement sweep

    CVec z_dense(int m) const
    {
        CVec z = CVec::Zero(support_hat.grid.size());
        for (std::size_t k = 0; k < atoms[m].size(); ++k)
            z(atom_index(atoms[m][k], support_hat.grid)) += z_hat[m](k);
        return z;
    }
};

// Normalized squared error; a zero reference is rejected.
inline double nmse(const CVec &z_hat, const CVec &z_true)
{
    if (z_hat.size() != z_true.size())
        throw ArgumentError("nmse: dimension mismatch");
    const double ref = z_true.squaredNorm();
    if (!(ref > 0))
        throw ArgumentError("nmse: zero reference");
    return (z_hat - z_true).squaredNorm() / ref;
}

// Gaussian posterior on the support columns:
//   z = (F^H F + s2 Lambda)^-1 (F^H y + s2 Lambda mu),  var = diag(inv) * s2.
// Paths with infinite precision are pinned to their prior mean.
struct GainPosterior
{
    CVec mean;
    RVec var;
};

inline GainPosterior mmse_solve(const CMat &F, const CVec &y, double noise_var, const RVec &lambda,
                                const CVec *mu = nullptr, double cond_limit = 1e12)
{
    const Eigen::Index n = F.cols();
    GainPosterior post{CVec::Zero(n), RVec::Zero(n)};
    if (n == 0)
        return post;
    std::vector<Eigen::Index> free;
    for (Eigen::Index k = 0; k < n; ++k)
    {
        if (std::isinf(lambda(k)))
            post.mean(k) = mu ? (*mu)(k) : cplx(0.0);
        else
            free.push_back(k);
    }
    if (free.empty())
        return post;
    CVec r = y;
    for (Eigen::Index k = 0; k < n; ++k)
        if (std::isinf(lambda(k)) && post.mean(k) != cplx(0.0))
            r -= F.col(k) * post.mean(k);
    const Eigen::Index f = Eigen::Index(free.size());
    CMat Fsub;
    if (f < n)
    {
        Fsub.resize(F.rows(), f);
        for (Eigen::Index k = 0; k < f; ++k)
            Fsub.col(k) = F.col(free[k]);
    }
    const CMat &Fs = f < n ? Fsub : F;
    // Lazy products: the systems are tiny and the blocked kernels only add overhead.
    CMat A = Fs.adjoint().lazyProduct(Fs);
    CVec b = Fs.adjoint().lazyProduct(r);
    for (Eigen::Index k = 0; k < f; ++k)
    {
        const double l = lambda(free[k]);
        A(k, k) += noise_var * l;
        if (mu)
            b(k) += noise_var * l * (*mu)(free[k]);
    }
    // Cholesky with its reciprocal condition estimate (1-norm).
    const Eigen::LLT<CMat> llt(A);
    if (llt.info() != Eigen::Success || !(llt.rcond() * cond_limit >= 1.0))
        throw NumericalError("mmse_gains: normal matrix is ill-conditioned");
    const CMat inv = llt.solve(CMat::Identity(f, f));
    const CVec z = inv * b;
    for (Eigen::Index k = 0; k < f; ++k)
    {
        post.mean(free[k]) = z(k);
        post.var(free[k]) = std::max(0.0, inv(k, k).real()) * noise_var;
    }
    return post;
}

namespace detail
{
// Observation-domain synthesis with cached RIS and UE factors, so that moving
// one offset only recomputes one column of a factor.
class Workspace
{
  public:
    Workspace(const PilotObservation &obs, const Dictionary &d) : obs_(&obs), dict_(d)
    {
        B_ = dict_.ris_factor(obs.pilots);
        C_ = dict_.ue_factor(obs.pilots);
    }

    const Dictionary &dict() const { return dict_; }
    const CMat &B() const { return B_; }
    const CMat &C() const { return C_; }
    const PilotObservation &obs() const { return *obs_; }

    void set_offset(Dictionary::Side side, int idx, double theta)
    {
        dict_.set_offset(side, idx, theta);
        if (side == Dictionary::Side::ris)
            B_.col(idx) = obs_->pilots.ris_phases * dict_.a_ris().col(idx) / std::sqrt(double(dict_.n_ris()));
        else if (side == Dictionary::Side::ue)
            C_.col(idx) = (dict_.a_ue().col(idx).adjoint() * obs_->pilots.ue_pilots).transpose();
    }

    CMat F(const std::vector<Atom> &atoms) const
    {
        CMat F(obs_->y.empty() ? 0 : obs_->y.front().size(), Eigen::Index(atoms.size()));
        for (std::size_t k = 0; k < atoms.size(); ++k)
            F.col(k) = dict_.atom_column(B_, C_, atoms[k]);
        return F;
    }

  private:
    const PilotObservation *obs_;
    Dictionary dict_;
    CMat B_, C_;
};

inline RVec lambda_for(const TrackerState *st, int m, const std::vector<Atom> &atoms, const GridDims &g,
                       double cold)
{
    RVec l(atoms.size());
    for (std::size_t k = 0; k < atoms.size(); ++k)
        l(k) = st && !st->precision.empty() ? st->precision[m](atom_index(atoms[k], g)) : cold;
    return l;
}

inline CVec mu_for(const TrackerState *st, int m, const std::vector<Atom> &atoms, const GridDims &g)
{
    CVec mu = CVec::Zero(atoms.size());
    if (st && !st->z_prev.empty())
        for (std::size_t k = 0; k < atoms.size(); ++k)
            mu(k) = st->z_prev[m](atom_index(atoms[k], g));
    return mu;
}

struct Fit
{
    std::vector<CVec> z;
    std::vector<RVec> var;
    std::vector<CVec> residual;
    double energy = 0.0;
};

struct UeFit
{
    CVec z;
    RVec var;
    CVec residual;
};

// Least squares (pursuit) or MMSE (with the state's prior) fit of one UE.
inline UeFit fit_ue(const Workspace &ws, int m, const std::vector<Atom> &atoms, bool least_squares,
                    const TrackerState *state, const TrackerOptions &o)
{
    const auto &obs = ws.obs();
    UeFit f{CVec(), RVec(), obs.y[m]};
    if (atoms.empty())
        return f;
    const CMat F = ws.F(atoms);
    if (least_squares)
    {
        f.z = F.colPivHouseholderQr().solve(obs.y[m]);
        f.var = RVec::Zero(f.z.size());
    }
    else
    {
        const GridDims g = ws.dict().grid();
        const RVec lambda = lambda_for(state, m, atoms, g, o.cold_precision);
        const CVec mu = mu_for(state, m, atoms, g);
        auto post = mmse_solve(F, obs.y[m], obs.noise_var, lambda, &mu, o.cond_limit);
        f.z = std::move(post.mean);
        f.var = std::move(post.var);
    }
    f.residual -= F * f.z;
    return f;
}

// Fit of every UE on the given atoms.
inline Fit fit(const Workspace &ws, const std::vector<std::vector<Atom>> &atoms, bool least_squares,
               const TrackerState *state, const TrackerOptions &o)
{
    Fit f;
    for (int m = 0; m < ws.obs().n_ues(); ++m)
    {
        auto u = fit_ue(ws, m, atoms[m], least_squares, state, o);
        f.energy += u.residual.squaredNorm();
        f.z.push_back(std::move(u.z));
        f.var.push_back(std::move(u.var));
        f.residual.push_back(std::move(u.residual));
    }
    return f;
}

inline double likelihood_of(const Fit &f, double noise_var) { return -f.energy / (noise_var > 0 ? noise_var : 1.0); }

struct Coord
{
    Dictionary::Side side;
    int idx;
    int grid;
    bool operator==(const Coord &) const = default;
};

inline std::vector<Coord> active_coords(const std::vector<std::vector<Atom>> &atoms, const Dictionary &d)
{
    const GridDims g = d.grid();
    std::vector<char> bs(g.bs, 0), ris(g.ris, 0), ue(g.ue, 0);
    for (const auto &am : atoms)
        for (const auto &a : am)
            bs[a.bs] = ris[a.ris] = ue[a.ue] = 1;
    std::vector<Coord> c;
    for (int i = 0; i < g.bs; ++i)
        if (bs[i])
            c.push_back({Dictionary::Side::bs, i, g.bs});
    for (int i = 0; i < g.ris; ++i)
        if (ris[i])
            c.push_back({Dictionary::Side::ris, i, g.ris});
    if (d.n_ue() > 1)
        for (int i = 0; i < g.ue; ++i)
            if (ue[i])
                c.push_back({Dictionary::Side::ue, i, g.ue});
    return c;
}

// One coordinate-wise golden-section pass; a move is kept only if the
// likelihood rises. Only UEs with an atom on the coordinate are refitted.
// Returns the likelihood after the pass.
inline double refine_pass(Workspace &ws, const std::vector<std::vector<Atom>> &atoms, const std::vector<Coord> &coords,
                          bool least_squares, const TrackerState *state, const TrackerOptions &o, double L)
{
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    const double s2 = ws.obs().noise_var;
    const int M = ws.obs().n_ues();
    std::vector<double> e(M);
    for (int m = 0; m < M; ++m)
        e[m] = fit_ue(ws, m, atoms[m], least_squares, state, o).residual.squaredNorm();
    auto uses = [](const Atom &a, const Coord &c) {
        switch (c.side)
        {
        case Dictionary::Side::bs:
            return a.bs == c.idx;
        case Dictionary::Side::ris:
            return a.ris == c.idx;
        default:
            return a.ue == c.idx;
        }
    };
    for (const auto &c : coords)
    {
        std::vector<int> hit;
        double others = 0;
        for (int m = 0; m < M; ++m)
        {
            if (std::any_of(atoms[m].begin(), atoms[m].end(), [&](const Atom &a) { return uses(a, c); }))
                hit.push_back(m);
            else
                others += e[m];
        }
        if (hit.empty())
            continue;
        const double h = Dictionary::half_cell(c.grid);
        const double t0 = ws.dict().offset(c.side, c.idx);
        auto eval = [&](double t) {
            ws.set_offset(c.side, c.idx, t);
            double en = others;
            for (int m : hit)
                en += fit_ue(ws, m, atoms[m], least_squares, state, o).residual.squaredNorm();
            return -en / (s2 > 0 ? s2 : 1.0);
        };
        double a = -h, b = h;
        double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
        double f1 = eval(x1), f2 = eval(x2);
        for (int it = 0; it < o.golden_iterations; ++it)
        {
            if (f1 >= f2)
            {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - gr * (b - a);
                f1 = eval(x1);
            }
            else
            {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + gr * (b - a);
                f2 = eval(x2);
            }
        }
        const double t = f1 >= f2 ? x1 : x2;
        const double ft = std::max(f1, f2);
        if (ft > L)
        {
            ws.set_offset(c.side, c.idx, t);
            for (int m : hit)
                e[m] = fit_ue(ws, m, atoms[m], least_squares, state, o).residual.squaredNorm();
            L = ft;
        }
        else
            ws.set_offset(c.side, c.idx, t0);
    }
    return L;
}

inline std::vector<std::vector<Atom>> all_atoms(const SupportPattern &s, int n_ues)
{
    std::vector<std::vector<Atom>> a(n_ues);
    for (int m = 0; m < n_ues && m < s.n_ues(); ++m)
        a[m] = s.atoms(m);
    return a;
}

struct Correlator
{
    // e[m][l] is N~_T x N~ : normalized correlation energy of every atom.
    std::vector<std::vector<RMat>> e;
};

inline Correlator correlate(const std::vector<CVec> &residual, const Dictionary &dict, const CMat &B, const CMat &C)
{
    const int P = int(B.rows()), NT = dict.n_bs();
    const GridDims g = dict.grid();
    Correlator out;
    std::vector<CMat> K(g.ue);
    std::vector<RVec> inv_norm(g.ue);
    for (int l = 0; l < g.ue; ++l)
    {
        K[l] = (B.array().colwise() * C.col(l).array()).conjugate().matrix();
        inv_norm[l] = K[l].colwise().norm().transpose();
        for (int r = 0; r < g.ris; ++r)
            inv_norm[l](r) = inv_norm[l](r) > 0 ? 1.0 / inv_norm[l](r) : 0.0;
    }
    const RVec bs_norm = dict.a_bs().colwise().norm().transpose();
    for (const auto &y : residual)
    {
        const Eigen::Map<const CMat> Y(y.data(), NT, P);
        const CMat T = dict.a_bs().adjoint() * Y;
        std::vector<RMat> per_l(g.ue);
        for (int l = 0; l < g.ue; ++l)
        {
            const CMat Cr = T * K[l];
            RMat e = Cr.cwiseAbs2();
            for (int r = 0; r < g.ris; ++r)
                e.col(r) *= inv_norm[l](r) * inv_norm[l](r);
            for (int i = 0; i < g.bs; ++i)
                e.row(i) /= bs_norm(i) * bs_norm(i);
            per_l[l] = std::move(e);
        }
        out.e.push_back(std::move(per_l));
    }
    return out;
}

inline bool has_duplicate_atoms(const SupportPattern &s)
{
    for (int m = 0; m < s.n_ues(); ++m)
    {
        auto a = s.atoms(m);
        std::sort(a.begin(), a.end());
        if (std::adjacent_find(a.begin(), a.end()) != a.end())
            return true;
    }
    return false;
}

// Coordinates touched by adding one path to a support.
inline std::vector<Coord> touched(const SupportPattern &s, const Dictionary &d, int kind, int m, int a, int b)
{
    const GridDims g = d.grid();
    std::vector<Coord> c;
    auto add = [&](Coord x) {
        if (std::find(c.begin(), c.end(), x) == c.end())
            c.push_back(x);
    };
    if (kind == 0)
    {
        add({Dictionary::Side::bs, a, g.bs});
        for (int u = 0; u < s.n_ues(); ++u)
            for (const auto &ip : s.individual[u])
                add({Dictionary::Side::ris, composite_ris(ip.ris, b, g.ris), g.ris});
    }
    else
    {
        for (const auto &cp : s.common)
            add({Dictionary::Side::ris, composite_ris(a, cp.ris, g.ris), g.ris});
        if (d.n_ue() > 1)
            add({Dictionary::Side::ue, b, g.ue});
    }
    (void)m;
    return c;
}
} // namespace detail

// Greedy twin-structured pursuit, returning the support together with the
// offsets adjusted along the way. Common (BS-RIS) candidates are scored by
// the residual energy they would capture jointly over all UEs when paired
// with each UE's individual paths; individual (RIS-UE) candidates are scored
// per UE against the common paths. Scores are weighted by the prior activity
// of the atoms involved, the best few are compared on their exact
// least-squares residual, and the offsets of every newly touched grid point
// get one refinement pass before the next step. The first common path fixes
// the RIS gauge (arrival index 0); only composite indices are identifiable.
inline std::pair<SupportPattern, Dictionary> pursue_support(const PilotObservation &obs, const Dictionary &dict,
                                                            const TrackerState &state, const TrackerOptions &o)
{
    const GridDims g = dict.grid();
    const int M = obs.n_ues();
    SupportPattern s;
    s.grid = g;
    s.individual.assign(M, {});
    for (const auto &y : obs.y)
        if (y.size() != Eigen::Index(obs.pilots.n_pilots()) * dict.n_bs())
            throw ArgumentError("estimate_support: observation size does not match the dictionary");

    double total = 0;
    for (const auto &y : obs.y)
        total += y.squaredNorm();
    if (!(total > 0) || M == 0)
        return {s, dict};

    detail::Workspace ws(obs, dict);
    auto prior = [&](int m, int i, int r, int l) {
        return state.activity.empty() ? 1.0 : state.activity[m](atom_index({i, r, l}, g));
    };

    {
        const auto cor = detail::correlate(obs.y, ws.dict(), ws.B(), ws.C());
        double best = -1;
        int bi = 0;
        std::vector<std::pair<int, int>> pick(M);
        for (int i = 0; i < g.bs; ++i)
        {
            double sc = 0;
            std::vector<std::pair<int, int>> p(M);
            for (int m = 0; m < M; ++m)
            {
                double bm = -1;
                for (int r = 0; r < g.ris; ++r)
                    for (int l = 0; l < g.ue; ++l)
                    {
                        const double v = cor.e[m][l](i, r) * prior(m, i, r, l);
                        if (v > bm)
                        {
                            bm = v;
                            p[m] = {r, l};
                        }
                    }
                sc += bm;
            }
            if (sc > best)
            {
                best = sc;
                bi = i;
                pick = p;
            }
        }
        s.common.push_back({bi, 0});
        for (int m = 0; m < M; ++m)
            s.individual[m].push_back({pick[m].first, pick[m].second});
    }
    auto atoms = detail::all_atoms(s, M);
    auto cur = detail::fit(ws, atoms, true, nullptr, o);
    {
        double L = detail::likelihood_of(cur, obs.noise_var);
        detail::refine_pass(ws, atoms, detail::active_coords(atoms, ws.dict()), true, nullptr, o, L);
        cur = detail::fit(ws, atoms, true, nullptr, o);
    }

    struct Move
    {
        double score;
        int kind; // 0 common, 1 individual
        int m;
        int a, b;
    };
    // Candidate additions to s scored against the residual, best first.
    auto moves_for = [&](const SupportPattern &s, const detail::Fit &f) {
        std::vector<Move> moves;
        const auto cor = detail::correlate(f.residual, ws.dict(), ws.B(), ws.C());
        if (int(s.common.size()) < o.max_common)
        {
            std::vector<char> used(g.bs, 0);
            for (const auto &c : s.common)
                used[c.bs] = 1;
            for (int i = 0; i < g.bs; ++i)
            {
                if (used[i])
                    continue;
                for (int j = 0; j < g.ris; ++j)
                {
                    double sc = 0;
                    for (int m = 0; m < M; ++m)
                        for (const auto &d : s.individual[m])
                        {
                            const int r = composite_ris(d.ris, j, g.ris);
                            sc += cor.e[m][d.ue](i, r) * prior(m, i, r, d.ue);
                        }
                    moves.push_back({sc, 0, -1, i, j});
                }
            }
        }
        for (int m = 0; m < M; ++m)
        {
            if (int(s.individual[m].size()) >= o.max_individual)
                continue;
            for (int k = 0; k < g.ris; ++k)
                for (int l = 0; l < g.ue; ++l)
                {
                    if (std::find(s.individual[m].begin(), s.individual[m].end(), IndividualPath{k, l}) !=
                        s.individual[m].end())
                        continue;
                    double sc = 0;
                    for (const auto &c : s.common)
                    {
                        const int r = composite_ris(k, c.ris, g.ris);
                        sc += cor.e[m][l](c.bs, r) * prior(m, c.bs, r, l);
                    }
                    moves.push_back({sc, 1, m, k, l});
                }
        }
        // Stable order keeps the lowest index first among equal scores.
        std::stable_sort(moves.begin(), moves.end(), [](const Move &x, const Move &y) { return x.score > y.score; });
        return moves;
    };
    auto apply = [](SupportPattern s, const Move &mv) {
        if (mv.kind == 0)
            s.common.push_back({mv.a, mv.b});
        else
            s.individual[mv.m].push_back({mv.a, mv.b});
        return s;
    };

    for (;;)
    {
        const bool can_common = int(s.common.size()) < o.max_common;
        bool can_ind = false;
        for (int m = 0; m < M; ++m)
            can_ind = can_ind || int(s.individual[m].size()) < o.max_individual;
        if ((!can_common && !can_ind) || cur.energy <= 0)
            break;

        const auto moves = moves_for(s, cur);
        if (moves.empty() || !(moves.front().score > 0))
            break;

        double best_e = cur.energy;
        int best_t = -1;
        const int look = std::min<int>(o.lookahead, int(moves.size()));
        for (int t = 0; t < look; ++t)
        {
            const Move &mv = moves[t];
            if (!(mv.score > 0))
                break;
            const SupportPattern trial = apply(s, mv);
            if (detail::has_duplicate_atoms(trial))
                continue;
            const double e_new = detail::fit(ws, detail::all_atoms(trial, M), true, nullptr, o).energy;
            if (e_new < best_e)
            {
                best_e = e_new;
                best_t = t;
            }
        }
        if (best_t < 0 || cur.energy - best_e < o.residual_tol * cur.energy)
            break;
        const Move &mv = moves[best_t];
        s = apply(s, mv);
        atoms = detail::all_atoms(s, M);
        const auto coords = detail::touched(s, ws.dict(), mv.kind, mv.m, mv.a, mv.b);
        detail::refine_pass(ws, atoms, coords, true, nullptr, o, detail::likelihood_of(detail::fit(ws, atoms, true, nullptr, o), obs.noise_var));
        cur = detail::fit(ws, atoms, true, nullptr, o);
    }

    // Swap stage: remove one path, re-add the best path of the same kind, keep
    // the pair that lowers the residual most. Undoes greedy picks that block
    // the true support. Skipped once the residual is at the noise level.
    Eigen::Index n_obs = 0;
    for (const auto &y : obs.y)
        n_obs += y.size();
    const double floor = std::max(o.residual_tol * total, o.swap_noise_factor * obs.noise_var * double(n_obs));
    for (int round = 0; round < o.swap_rounds && cur.energy > floor; ++round)
    {
        double best_e = cur.energy * (1.0 - o.residual_tol);
        std::optional<SupportPattern> best_s;
        Move best_mv{};
        const int n_slots = int(s.common.size()) + [&] {
            int n = 0;
            for (const auto &d : s.individual)
                n += int(d.size());
            return n;
        }();
        for (int slot = 0; slot < n_slots; ++slot)
        {
            SupportPattern base = s;
            int kind = 0, um = -1;
            if (slot < int(s.common.size()))
                base.common.erase(base.common.begin() + slot);
            else
            {
                kind = 1;
                int k = slot - int(s.common.size());
                for (um = 0; k >= int(s.individual[um].size()); ++um)
                    k -= int(s.individual[um].size());
                base.individual[um].erase(base.individual[um].begin() + k);
            }
            const auto f = detail::fit(ws, detail::all_atoms(base, M), true, nullptr, o);
            int tried = 0;
            for (const auto &mv : moves_for(base, f))
            {
                if (tried >= o.lookahead || !(mv.score > 0))
                    break;
                if (mv.kind != kind || (kind == 1 && mv.m != um))
                    continue;
                ++tried;
                SupportPattern trial = apply(base, mv);
                if (detail::has_duplicate_atoms(trial))
                    continue;
                const double e_new = detail::fit(ws, detail::all_atoms(trial, M), true, nullptr, o).energy;
                if (e_new < best_e)
                {
                    best_e = e_new;
                    best_s = std::move(trial);
                    best_mv = mv;
                }
            }
        }
        if (!best_s)
            break;
        s = *best_s;
        atoms = detail::all_atoms(s, M);
        const auto coords = detail::touched(s, ws.dict(), best_mv.kind, best_mv.m, best_mv.a, best_mv.b);
        detail::refine_pass(ws, atoms, coords, true, nullptr, o, detail::likelihood_of(detail::fit(ws, atoms, true, nullptr, o), obs.noise_var));
        cur = detail::fit(ws, atoms, true, nullptr, o);
    }
    return {s, ws.dict()};
}

inline SupportPattern estimate_support(const PilotObservation &obs, const Dictionary &dict, const TrackerState &state,
                                       const TrackerOptions &o)
{
    return pursue_support(obs, dict, state, o).first;
}

// MMSE gains on a fixed support. Without a state the prior is zero-mean with
// the cold precision.
inline ChannelEstimate mmse_gains(const PilotObservation &obs, const Dictionary &dict, const SupportPattern &support,
                                  double noise_var, const TrackerState *state = nullptr,
                                  const TrackerOptions &o = {})
{
    ChannelEstimate est;
    est.support_hat = support;
    est.dict_hat = dict;
    PilotObservation o2 = obs;
    o2.noise_var = noise_var;
    const detail::Workspace ws(o2, dict);
    const auto atoms = detail::all_atoms(support, obs.n_ues());
    const auto f = detail::fit(ws, atoms, false, state, o);
    est.atoms = atoms;
    est.z_hat = f.z;
    est.posterior_var = f.var;
    return est;
}

// Data log-likelihood (up to a constant) of an estimate.
inline double log_likelihood(const PilotObservation &obs, const Dictionary &dict, const ChannelEstimate &est)
{
    const detail::Workspace ws(obs, dict);
    double r = 0;
    for (int m = 0; m < obs.n_ues(); ++m)
    {
        CVec e = obs.y[m];
        if (!est.atoms[m].empty())
            e -= ws.F(est.atoms[m]) * est.z_hat[m];
        r += e.squaredNorm();
    }
    return -r / (obs.noise_var > 0 ? obs.noise_var : 1.0);
}

// MAP refinement of the off-grid offsets: coordinate-wise golden-section
// search over each active grid point within half a cell, gains re-fitted by
// MMSE at every trial point. A coordinate move is kept only if it raises the
// likelihood, so the per-sweep trace is non-decreasing.
inline std::pair<Dictionary, ChannelEstimate> refine_angles(const PilotObservation &obs, const Dictionary &dict,
                                                            const ChannelEstimate &estimate, const TrackerOptions &o,
                                                            const TrackerState *state = nullptr)
{
    detail::Workspace ws(obs, dict);
    const auto atoms = detail::all_atoms(estimate.support_hat, obs.n_ues());
    auto cur = detail::fit(ws, atoms, false, state, o);
    double L = detail::likelihood_of(cur, obs.noise_var);
    std::vector<double> trace{L};
    const auto coords = detail::active_coords(atoms, ws.dict());
    if (!coords.empty())
        for (int sweep = 0; sweep < o.max_sweeps; ++sweep)
        {
            const double L0 = L;
            L = detail::refine_pass(ws, atoms, coords, false, state, o, L);
            cur = detail::fit(ws, atoms, false, state, o);
            L = detail::likelihood_of(cur, obs.noise_var);
            trace.push_back(L);
            if (L - L0 <= o.likelihood_tol * std::max(std::abs(L0), 1e-300))
                break;
        }
    ChannelEstimate out;
    out.support_hat = estimate.support_hat;
    out.dict_hat = ws.dict();
    out.atoms = atoms;
    out.z_hat = cur.z;
    out.posterior_var = cur.var;
    out.likelihood_trace = std::move(trace);
    return {ws.dict(), out};
}

// Exponential smoothing of the activity probabilities towards the detected
// support, and a precision / gain prior for the next slot.
inline TrackerState update_state(const TrackerState &prev, const ChannelEstimate &est, const TrackerOptions &o,
                                 bool header)
{
    TrackerState s = prev;
    const GridDims g = est.support_hat.grid;
    const int M = int(est.atoms.size());
    const double rho2 = o.temporal_rho * o.temporal_rho;
    for (int m = 0; m < M; ++m)
    {
        if (header)
        {
            RVec ind = RVec::Zero(g.size());
            for (const auto &a : est.atoms[m])
                ind(atom_index(a, g)) = 1.0;
            s.activity[m] = ((1.0 - o.smoothing_weight) * prev.activity[m] + o.smoothing_weight * ind)
                                .cwiseMax(o.prior_floor)
                                .cwiseMin(1.0);
        }
        s.precision[m].setConstant(o.cold_precision);
        s.z_prev[m].setZero();
        s.var_prev[m].setZero();
        for (std::size_t k = 0; k < est.atoms[m].size(); ++k)
        {
            const int idx = atom_index(est.atoms[m][k], g);
            const cplx z = est.z_hat[m](k);
            const double v = est.posterior_var[m](k);
            // Predicted variance of the next-slot gain given this posterior.
            const double power = std::norm(z) + v;
            const double pv = rho2 * v + (1.0 - rho2) * power;
            s.precision[m](idx) = pv > 0 ? 1.0 / pv : o.cold_precision;
            s.z_prev[m](idx) = o.temporal_rho * z;
            s.var_prev[m](idx) = pv;
        }
    }
    s.dict = est.dict_hat;
    s.support = est.support_hat;
    s.has_support = true;
    return s;
}

// One slot of tracking. Header slots run support detection, MMSE and angle
// refinement; other slots keep support and angles and refit the gains.
inline std::pair<ChannelEstimate, TrackerState> track_slot(const PilotObservation &obs, const TrackerState &state,
                                                           const TrackerOptions &o, bool header)
{
    if (header || !state.has_support)
    {
        const auto [s, d0] = pursue_support(obs, state.dict, state, o);
        ChannelEstimate e = mmse_gains(obs, d0, s, obs.noise_var, &state, o);
        auto [d, refined] = refine_angles(obs, d0, e, o, &state);
        return {refined, update_state(state, refined, o, true)};
    }
    ChannelEstimate e = mmse_gains(obs, state.dict, state.support, obs.noise_var, &state, o);
    return {e, update_state(state, e, o, false)};
}

// Baselines -------------------------------------------------------------------

// Orthogonal matching pursuit over the full unstructured grid of one UE.
inline std::vector<Atom> omp_unstructured(const CVec &y, const Dictionary &dict, const PilotPattern &pilots,
                                          int n_atoms)
{
    const GridDims g = dict.grid();
    std::vector<Atom> chosen;
    const CMat B = dict.ris_factor(pilots);
    const CMat C = dict.ue_factor(pilots);
    CVec r = y;
    const double total = y.squaredNorm();
    if (!(total > 0))
        return chosen;
    for (int it = 0; it < n_atoms; ++it)
    {
        const auto cor = detail::correlate({r}, dict, B, C);
        double best = -1;
        Atom ba;
        for (int i = 0; i < g.bs; ++i)
            for (int rr = 0; rr < g.ris; ++rr)
                for (int l = 0; l < g.ue; ++l)
                {
                    const double v = cor.e[0][l](i, rr);
                    if (v > best && std::find(chosen.begin(), chosen.end(), Atom{i, rr, l}) == chosen.end())
                    {
                        best = v;
                        ba = {i, rr, l};
                    }
                }
        if (!(best > 0))
            break;
        chosen.push_back(ba);
        const CMat F = dict.response_matrix(pilots, chosen);
        r = y - F * F.colPivHouseholderQr().solve(y);
        if (r.squaredNorm() < 1e-12 * total)
            break;
    }
    return chosen;
}

// Least-squares gains of a fixed support on the given dictionary.
inline CVec ls_gains(const CVec &y, const Dictionary &dict, const PilotPattern &pilots, const std::vector<Atom> &atoms)
{
    if (atoms.empty())
        return CVec();
    const CMat F = dict.response_matrix(pilots, atoms);
    return F.colPivHouseholderQr().solve(y);
}

inline CVec dense_gains(const std::vector<Atom> &atoms, const CVec &z, const GridDims &g)
{
    CVec d = CVec::Zero(g.size());
    for (std::size_t k = 0; k < atoms.size(); ++k)
        d(atom_index(atoms[k], g)) += z(Eigen::Index(k));
    return d;
}

// Unstructured least squares on the full N x Q cascade seen by one BS
// antenna: row p of the measurement matrix is phi_p (x) x_p. Returns the rank
// of its normal matrix; identifiability needs rank == N * Q.
struct LsIdentifiability
{
    int rank = 0;
    int unknowns = 0;
    bool identifiable() const { return rank == unknowns; }
};

inline LsIdentifiability ls_identifiability(const PilotPattern &pilots)
{
    const int P = pilots.n_pilots();
    const int N = int(pilots.ris_phases.cols());
    const int Q = int(pilots.ue_pilots.rows());
    CMat A(P, N * Q);
    for (int p = 0; p < P; ++p)
        for (int n = 0; n < N; ++n)
            for (int q = 0; q < Q; ++q)
                A(p, n * Q + q) = pilots.ris_phases(p, n) * pilots.ue_pilots(q, p);
    const CMat normal = A.adjoint() * A;
    Eigen::SelfAdjointEigenSolver<CMat> es(normal);
    const RVec ev = es.eigenvalues();
    const double tol = std::max(1e-300, ev.cwiseAbs().maxCoeff()) * 1e-10;
    LsIdentifiability out;
    out.unknowns = N * Q;
    for (Eigen::Index i = 0; i < ev.size(); ++i)
        out.rank += ev(i) > tol ? 1 : 0;
    return out;
}

// Per-slot tracking trace and its CSV export.
struct SlotTrace
{
    int slot = 0;
    double nmse = 0.0;
    int support_size = 0;
    bool recovered = false;
};

inline std::string trace_csv(const std::vector<SlotTrace> &t)
{
    std::string out = "slot,nmse,support_size,recovered\n";
    char b[40];
    for (const auto &r : t)
    {
        std::snprintf(b, sizeof b, "%.17g", r.nmse);
        out += std::to_string(r.slot) + "," + b + "," + std::to_string(r.support_size) + "," +
               (r.recovered ? "1" : "0") + "\n";
    }
    return out;
}

// Exact support recovery of UE m: same set of active atoms.
inline bool same_atoms(std::vector<Atom> a, std::vector<Atom> b)
{
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    return a == b;
}

} // namespace risv2x
