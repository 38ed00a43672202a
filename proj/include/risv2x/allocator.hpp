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
#include "hungarian.hpp"

#include <functional>
#include <optional>

#include <json.hpp>

namespace risv2x
{

// ---- Mode 1: active RIS on the vehicle ---------------------------------

struct ActiveRisCoefficients
{
    RVec amplitudes;
    RVec phases;

    CVec values() const
    {
        CVec v(amplitudes.size());
        for (Eigen::Index n = 0; n < v.size(); ++n)
            v(n) = std::polar(amplitudes(n), phases(n));
        return v;
    }
    static ActiveRisCoefficients from(const CVec &v)
    {
        ActiveRisCoefficients a;
        a.amplitudes = v.cwiseAbs();
        a.phases.resize(v.size());
        for (Eigen::Index n = 0; n < v.size(); ++n)
            a.phases(n) = v(n) == cplx(0) ? 0.0 : std::arg(v(n));
        return a;
    }
};

enum class CsiKind
{
    I_CSI,
    S_CSI
};

inline const char *to_string(CsiKind k) { return k == CsiKind::I_CSI ? "I-CSI" : "S-CSI"; }

// Single-stream uplink through an active RIS: BS <- G <- diag(v) <- f_m <- UE m,
// plus the direct link h_m. Channel errors are zero-mean with per-entry
// variance err_direct(m) on h_m and err_ris on every entry of G.
struct CsiView
{
    CsiKind kind = CsiKind::I_CSI;
    bool robust = true;
    CMat direct;   // N_T x M
    CMat bs_ris;   // N_T x N
    CMat ris_ue;   // N x M
    RVec err_direct; // M
    double err_ris = 0.0;
};

// Dense links of one active-transmission drop, each UE already reduced to a
// single stream.
struct AtLinks
{
    RicianLink bs_ris;
    std::vector<RicianLink> direct; // N_T x 1
    std::vector<RicianLink> ris_ue; // N x 1
};

// I-CSI: the estimate taken csi-delay ago, aged in mean by rho; the scattered
// part's lost correlation (1 - rho^2) plus the estimator's posterior variance
// is the error. S-CSI: only the LoS mean is known and the whole scattered
// power is error. LoS parts do not age. Non-robust views zero the error.
// The in-cabin RIS-UE hop is static and taken as known.
inline CsiView apply_csi_view(const AtLinks &est, double rho, CsiKind kind, bool robust,
                              double posterior_var = 0.0)
{
    if (!(rho >= -1.0 && rho <= 1.0))
        throw ArgumentError("apply_csi_view: rho outside [-1, 1]");
    if (posterior_var < 0)
        throw ArgumentError("apply_csi_view: negative posterior variance");
    const int M = int(est.direct.size());
    CsiView v;
    v.kind = kind;
    v.robust = robust;
    v.direct.resize(est.bs_ris.los.rows(), M);
    v.ris_ue.resize(est.bs_ris.los.cols(), M);
    v.err_direct.resize(M);
    const double lost = std::max(0.0, 1.0 - rho * rho);
    if (kind == CsiKind::I_CSI)
    {
        v.bs_ris = est.bs_ris.los + rho * est.bs_ris.nlos;
        v.err_ris = lost * est.bs_ris.nlos_power + posterior_var;
    }
    else
    {
        v.bs_ris = est.bs_ris.los;
        v.err_ris = est.bs_ris.nlos_power;
    }
    for (int m = 0; m < M; ++m)
    {
        const auto &d = est.direct[m];
        if (kind == CsiKind::I_CSI)
        {
            v.direct.col(m) = (d.los + rho * d.nlos).col(0);
            v.err_direct(m) = lost * d.nlos_power + posterior_var;
        }
        else
        {
            v.direct.col(m) = d.los.col(0);
            v.err_direct(m) = d.nlos_power;
        }
        v.ris_ue.col(m) = est.ris_ue[m].total().col(0);
    }
    if (!robust)
    {
        v.err_direct.setZero();
        v.err_ris = 0.0;
    }
    return v;
}

// The true channel as an error-free view.
inline CsiView true_view(const AtLinks &l)
{
    CsiView v = apply_csi_view(l, 1.0, CsiKind::I_CSI, false);
    v.bs_ris = l.bs_ris.total();
    for (int m = 0; m < v.direct.cols(); ++m)
        v.direct.col(m) = l.direct[m].total().col(0);
    return v;
}

struct Mode1Params
{
    RVec tx_power;          // per UE, W
    double noise_var = 0.0; // per BS antenna, W
    double ris_noise_var = 0.0;
    double max_ris_power = 0.0; // P_A^max, W
};

inline Mode1Params mode1_params(const ScenarioConfig &c, int n_ues)
{
    Mode1Params p;
    p.tx_power = RVec::Constant(n_ues, dbm2watt(c.ue_power_dbm));
    p.noise_var = dbm2watt(c.noise_dbm);
    p.ris_noise_var = dbm2watt(c.ris_noise_dbm);
    p.max_ris_power = dbm2watt(c.p_active_max_dbm);
    return p;
}

// Sum capacity of the linear receiver W (or of the per-UE MMSE receiver)
// with the channel error and the amplified RIS noise treated as noise.
class Mode1Objective
{
  public:
    Mode1Objective(const CsiView &csi, const Mode1Params &p) : csi_(csi), p_(p)
    {
        if (csi.direct.cols() != p.tx_power.size() || csi.ris_ue.cols() != p.tx_power.size() ||
            csi.bs_ris.cols() != csi.ris_ue.rows() || csi.bs_ris.rows() != csi.direct.rows())
            throw ArgumentError("Mode1Objective: inconsistent dimensions");
        // Power radiated by element n per unit squared amplitude.
        cost_ = csi.ris_ue.cwiseAbs2() * p.tx_power;
        cost_.array() += p.ris_noise_var;
        f2_ = csi.ris_ue.cwiseAbs2();
    }

    int n_elements() const { return int(csi_.bs_ris.cols()); }
    int n_ues() const { return int(csi_.direct.cols()); }
    int n_bs() const { return int(csi_.bs_ris.rows()); }
    const RVec &cost() const { return cost_; }
    const CsiView &csi() const { return csi_; }
    const Mode1Params &params() const { return p_; }

    double radiated_power(const CVec &v) const { return cost_.dot(v.cwiseAbs2()); }

    CMat effective(const CVec &v) const
    {
        return csi_.direct + csi_.bs_ris * (csi_.ris_ue.array().colwise() * v.array()).matrix();
    }

    CMat noise_cov(const CVec &v) const
    {
        const RVec a2 = v.cwiseAbs2();
        const RVec err = csi_.err_direct + csi_.err_ris * (f2_.transpose() * a2);
        CMat R = p_.ris_noise_var * csi_.bs_ris * a2.asDiagonal() * csi_.bs_ris.adjoint();
        const double white = p_.noise_var + p_.ris_noise_var * csi_.err_ris * a2.sum() + p_.tx_power.dot(err);
        R.diagonal().array() += white;
        return R;
    }

    CMat mmse(const CVec &v) const
    {
        const CMat H = effective(v);
        CMat Q = noise_cov(v) + H * p_.tx_power.asDiagonal() * H.adjoint();
        return Q.ldlt().solve(H);
    }

    RVec sinr(const CVec &v) const
    {
        const CMat H = effective(v);
        CMat Q = noise_cov(v) + H * p_.tx_power.asDiagonal() * H.adjoint();
        const CMat X = Q.ldlt().solve(H);
        RVec s(n_ues());
        for (int m = 0; m < n_ues(); ++m)
        {
            const double t = std::clamp(p_.tx_power(m) * std::real(H.col(m).dot(X.col(m))), 0.0, 1.0 - 1e-15);
            s(m) = t / (1.0 - t);
        }
        return s;
    }

    RVec sinr(const CVec &v, const CMat &W) const
    {
        const CMat H = effective(v);
        const CMat R = noise_cov(v);
        const CMat T = W.adjoint() * H;
        RVec s(n_ues());
        for (int m = 0; m < n_ues(); ++m)
        {
            const double noise = std::real(W.col(m).dot(R * W.col(m)));
            double intf = 0;
            for (int k = 0; k < n_ues(); ++k)
                if (k != m)
                    intf += p_.tx_power(k) * std::norm(T(m, k));
            const double den = noise + intf;
            s(m) = den > 0 ? p_.tx_power(m) * std::norm(T(m, m)) / den : 0.0;
        }
        return s;
    }

    // Objective of t*u for a fixed combiner as a function of the scale t.
    // Outputs and noise are affine / quadratic in t, so each evaluation only
    // touches M x M quantities.
    std::function<double(double)> scale_profile(const CVec &u, const CMat &W) const
    {
        const int M = n_ues();
        const CMat T0 = W.adjoint() * csi_.direct;
        const CMat T1 = W.adjoint() * (csi_.bs_ris * (csi_.ris_ue.array().colwise() * u.array()).matrix());
        const RVec a2 = u.cwiseAbs2();
        const CMat Rq = p_.ris_noise_var * csi_.bs_ris * a2.asDiagonal() * csi_.bs_ris.adjoint();
        const double wq = p_.ris_noise_var * csi_.err_ris * a2.sum() +
                          csi_.err_ris * p_.tx_power.dot(f2_.transpose() * a2);
        const double w0 = p_.noise_var + p_.tx_power.dot(csi_.err_direct);
        RVec nq(M), n0(M);
        for (int m = 0; m < M; ++m)
        {
            const double ww = W.col(m).squaredNorm();
            nq(m) = std::real(W.col(m).dot(Rq * W.col(m))) + wq * ww;
            n0(m) = w0 * ww;
        }
        const RVec p = p_.tx_power;
        return [=](double t) {
            const CMat T = T0 + t * T1;
            double r = 0;
            for (int m = 0; m < M; ++m)
            {
                double den = n0(m) + t * t * nq(m);
                for (int k = 0; k < M; ++k)
                    if (k != m)
                        den += p(k) * std::norm(T(m, k));
                const double sig = p(m) * std::norm(T(m, m));
                r += std::log2(1.0 + (den > 0 ? sig / den : 0.0));
            }
            return r;
        };
    }

    double value(const CVec &v) const { return sum_rate(sinr(v)); }
    double value(const CVec &v, const CMat &W) const { return sum_rate(sinr(v, W)); }

    static double sum_rate(const RVec &s)
    {
        double r = 0;
        for (double x : s)
            r += std::log2(1.0 + x);
        return r;
    }

  private:
    CsiView csi_;
    Mode1Params p_;
    RVec cost_;
    RMat f2_;
};

struct Mode1Options
{
    int max_rounds = 20;
    double tolerance = 1e-4;
    int phase_candidates = 64;
    int amplitude_steps = 50;
    std::vector<CVec> extra_inits; // unit-modulus starting phases
};

struct Mode1Result
{
    ActiveRisCoefficients ris;
    CVec v;
    CMat combiner;
    double objective = 0.0;
    std::vector<double> trace; // objective after every round of the chosen start
};

namespace detail
{
// One pass of exact per-element phase updates for a fixed combiner. For
// element n only a rotation of its contribution changes the outputs, so each
// candidate rotation (a uniform grid plus the rotations aligning the element
// with each UE's remaining signal) is scored exactly; a rotation is taken
// only if it improves the objective.
inline void phase_pass(const Mode1Objective &obj, CVec &v, const CMat &W, int n_grid)
{
    const auto &csi = obj.csi();
    const auto &p = obj.params().tx_power;
    const int M = obj.n_ues();
    const CMat H = obj.effective(v);
    const CMat R = obj.noise_cov(v);
    CMat T = W.adjoint() * H;
    const CMat Bw = W.adjoint() * csi.bs_ris; // M x N
    RVec nc(M);
    for (int m = 0; m < M; ++m)
        nc(m) = std::real(W.col(m).dot(R * W.col(m)));

    // Objective with element n's contribution rotated by c.
    auto score = [&](const CMat &rest, const CMat &beta, cplx c) {
        double r = 0;
        for (int m = 0; m < M; ++m)
        {
            double intf = nc(m), sig = 0;
            for (int k = 0; k < M; ++k)
            {
                const double e = p(k) * std::norm(rest(m, k) + c * beta(m, k));
                if (k == m)
                    sig = e;
                else
                    intf += e;
            }
            r += std::log2(1.0 + (intf > 0 ? sig / intf : 0.0));
        }
        return r;
    };

    std::vector<cplx> grid(n_grid);
    for (int g = 0; g < n_grid; ++g)
        grid[g] = std::polar(1.0, 2.0 * pi * g / n_grid);

    for (int n = 0; n < obj.n_elements(); ++n)
    {
        if (v(n) == cplx(0))
            continue;
        const CMat beta = (Bw.col(n) * csi.ris_ue.row(n)) * v(n);
        const CMat rest = T - beta;
        std::vector<cplx> cands = grid;
        for (int m = 0; m < M; ++m)
            if (std::abs(beta(m, m)) > 0 && std::abs(rest(m, m)) > 0)
                cands.push_back(std::polar(1.0, std::arg(rest(m, m) / beta(m, m))));
        const double cur = score(rest, beta, 1.0);
        double best = cur;
        cplx rot = 1.0;
        for (const cplx &c : cands)
        {
            const double s = score(rest, beta, c);
            if (s > best)
            {
                best = s;
                rot = c;
            }
        }
        if (best > cur + 1e-12)
        {
            v(n) *= rot;
            T = rest + rot * beta;
        }
    }
}
} // namespace detail

// Block-coordinate ascent on the expected sum capacity under `csi`:
// MMSE combiner for the current coefficients, then exact per-element phase
// updates and a line search on the common amplitude for that combiner.
// Every element radiates the same power share of the P_A^max budget scaled
// by the searched factor. Several phase starts are tried (all-equal, each
// UE's coherent alignment, and any extra ones) and the best kept. Within a
// start the objective never decreases.
inline Mode1Result optimize_mode1(const CsiView &csi, const Mode1Params &p, const Mode1Options &o = {})
{
    if (!(p.max_ris_power > 0))
        throw ConfigError("optimize_mode1: P_A^max must be positive");
    const Mode1Objective obj(csi, p);
    const int N = obj.n_elements(), M = obj.n_ues();
    Mode1Result best;
    best.objective = -1;

    const double cascade = (csi.bs_ris * csi.ris_ue).norm() + csi.bs_ris.norm() * csi.ris_ue.norm();
    if (N == 0 || !(cascade > 0))
    {
        best.v = CVec::Zero(N);
        best.combiner = obj.mmse(best.v);
        best.objective = obj.value(best.v);
        best.trace = {best.objective};
        best.ris = ActiveRisCoefficients::from(best.v);
        return best;
    }

    const double t_max = std::sqrt(p.max_ris_power / obj.cost().sum());
    std::vector<CVec> inits{CVec::Ones(N)};
    for (int m = 0; m < M; ++m)
    {
        const double nd = csi.direct.col(m).norm();
        CVec w = nd > 0 ? CVec(csi.direct.col(m) / nd) : CVec(csi.bs_ris.col(0).normalized());
        const cplx ref = nd > 0 ? w.dot(csi.direct.col(m)) : cplx(1.0);
        const CVec c = (w.adjoint() * csi.bs_ris).transpose().cwiseProduct(csi.ris_ue.col(m));
        CVec v(N);
        for (int n = 0; n < N; ++n)
            v(n) = std::polar(1.0, std::arg(ref) - (c(n) == cplx(0) ? 0.0 : std::arg(c(n))));
        inits.push_back(v);
    }
    for (const auto &e : o.extra_inits)
    {
        if (e.size() != N)
            throw ArgumentError("optimize_mode1: extra init has the wrong length");
        CVec u(N);
        for (int n = 0; n < N; ++n)
            u(n) = e(n) == cplx(0) ? cplx(1.0) : e(n) / std::abs(e(n));
        inits.push_back(u);
    }

    for (const auto &v0 : inits)
    {
        CVec v = v0 * t_max;
        double J = obj.value(v);
        std::vector<double> trace{J};
        for (int it = 0; it < o.max_rounds; ++it)
        {
            const CMat W = obj.mmse(v);
            detail::phase_pass(obj, v, W, o.phase_candidates);
            CVec ph(N);
            for (int n = 0; n < N; ++n)
                ph(n) = v(n) / std::abs(v(n));
            double bj = obj.value(v, W);
            double bt = -1;
            const auto line = obj.scale_profile(ph * t_max, W);
            for (int s = 1; s <= o.amplitude_steps; ++s)
            {
                const double t = 0.02 + (1.0 - 0.02) * (s - 1) / std::max(1, o.amplitude_steps - 1);
                const double jt = line(t);
                if (jt > bj)
                {
                    bj = jt;
                    bt = t;
                }
            }
            const CVec bv = bt > 0 ? CVec(ph * (t_max * bt)) : v;
            v = bv;
            const double Jn = obj.value(v);
            trace.push_back(std::max(J, Jn));
            const bool done = Jn - J < o.tolerance;
            J = std::max(J, Jn);
            if (done)
                break;
        }
        if (J > best.objective)
        {
            best.objective = J;
            best.v = v;
            best.trace = std::move(trace);
        }
    }
    best.combiner = obj.mmse(best.v);
    best.ris = ActiveRisCoefficients::from(best.v);
    return best;
}

// Realized sum capacity of coefficients v and combiner W on a channel.
inline double mode1_capacity(const CsiView &truth, const Mode1Params &p, const CVec &v, const CMat &W)
{
    return Mode1Objective(truth, p).value(v, W);
}

// Draws the dense links of an active-transmission drop. The UE streams use
// equal-gain transmit weights over their Q antennas.
template <class URBG>
AtLinks draw_at_links(const Geometry &geo, const ScenarioConfig &c, URBG &rng)
{
    AtLinks l;
    const Eigen::Vector3d ris = ris_position(geo);
    l.bs_ris = rician_between(geo.bs_position, ris, c.n_bs_antennas, c.n_ris_elements, c.pathloss_exponent_cascaded,
                              c.rician_k_hop_db, c, rng);
    const CVec u = CVec::Constant(c.n_ue_antennas, 1.0 / std::sqrt(double(c.n_ue_antennas)));
    auto reduce = [&](RicianLink k) {
        k.los = k.los * u;
        k.nlos = k.nlos * u;
        return k;
    };
    for (const auto &ue : geo.cues)
    {
        const Eigen::Vector3d x = position(geo, ue);
        l.direct.push_back(reduce(rician_between(geo.bs_position, x, c.n_bs_antennas, c.n_ue_antennas,
                                                 c.pathloss_exponent_direct, c.rician_k_db, c, rng)));
        l.ris_ue.push_back(reduce(rician_between(ris, x, c.n_ris_elements, c.n_ue_antennas,
                                                 c.pathloss_exponent_cascaded, c.rician_k_cabin_db, c, rng)));
    }
    return l;
}

// Ages the moving links (BS-RIS and direct); the cabin hop is static.
template <class URBG>
AtLinks age_at_links(const AtLinks &l, double rho, URBG &rng)
{
    AtLinks out = l;
    out.bs_ris = age_link(l.bs_ris, rho, rng);
    for (auto &d : out.direct)
        d = age_link(d, rho, rng);
    return out;
}

// ---- Mode 2: passive roadside RIS with tiles ---------------------------

// S phase configurations for a tile of N/K elements; configuration s steers
// the tile to electrical angle 2*pi*s/S (a DFT beam).
struct PscCodebook
{
    std::vector<CVec> configs;
    int tile_size() const { return configs.empty() ? 0 : int(configs.front().size()); }
    int size() const { return int(configs.size()); }
};

inline PscCodebook build_psc_codebook(int tile_size, int n_pscs)
{
    if (n_pscs < 1 || tile_size < 1)
        throw ArgumentError("build_psc_codebook: need S >= 1 and a non-empty tile");
    PscCodebook cb;
    for (int s = 0; s < n_pscs; ++s)
    {
        CVec v(tile_size);
        for (int n = 0; n < tile_size; ++n)
        {
            // Reduce the phase index first so that the argument stays exact.
            const long long k = (static_cast<long long>(n) * s) % n_pscs;
            v(n) = std::polar(1.0, 2.0 * pi * double(k) / double(n_pscs));
        }
        cb.configs.push_back(std::move(v));
    }
    return cb;
}

inline PscCodebook build_psc_codebook(const ScenarioConfig &c)
{
    if (c.n_tiles < 1 || c.pr_ris_elements % c.n_tiles != 0)
        throw ConfigError("build_psc_codebook: N must be a multiple of K");
    return build_psc_codebook(c.pr_ris_elements / c.n_tiles, c.n_pscs);
}

// Mean (LoS) and scattered power of a scalar fading link.
struct LinkStats
{
    cplx los = 0.0;
    double nlos_power = 0.0;
    double mean_power() const { return std::norm(los) + nlos_power; }
};

// Dense links of one passive-reflection drop. Vehicle-to-BS direct links are
// absent when blocked. Vectors are per element of the surface.
struct PrLinks
{
    RicianLink bs_ris;                  // N_T x N
    std::vector<RicianLink> cue_ris;    // N x 1, per CUE
    std::vector<RicianLink> dtx_ris;    // N x 1, per DUE transmitter
    std::vector<RicianLink> ris_drx;    // 1 x N, per DUE receiver
    std::vector<RicianLink> cue_bs;     // N_T x 1 (empty when blocked)
    std::vector<RicianLink> dtx_bs;     // N_T x 1 (empty when blocked)
    std::vector<RicianLink> v2v;        // 1 x 1, DUE tx -> its receiver
    std::vector<std::vector<RicianLink>> cue_drx; // [m][d] 1 x 1, CUE -> DUE receiver
};

template <class URBG>
PrLinks draw_pr_links(const Geometry &geo, const ScenarioConfig &c, URBG &rng)
{
    PrLinks l;
    const Eigen::Vector3d ris = ris_position(geo);
    const int N = c.pr_ris_elements;
    const CVec u = CVec::Constant(c.n_ue_antennas, 1.0 / std::sqrt(double(c.n_ue_antennas)));
    auto from_ue = [&](RicianLink k) {
        k.los = k.los * u;
        k.nlos = k.nlos * u;
        return k;
    };
    auto to_ue = [&](RicianLink k) {
        k.los = u.transpose() * k.los;
        k.nlos = u.transpose() * k.nlos;
        return k;
    };
    auto ue_ue = [&](RicianLink k) {
        k.los = u.transpose() * k.los * u;
        k.nlos = u.transpose() * k.nlos * u;
        return k;
    };
    const double ec = c.pathloss_exponent_cascaded, ed = c.pathloss_exponent_direct;
    l.bs_ris = rician_between(geo.bs_position, ris, c.n_bs_antennas, N, ec, c.rician_k_hop_db, c, rng);
    for (const auto &v : geo.cues)
    {
        const auto x = position(geo, v);
        l.cue_ris.push_back(from_ue(rician_between(ris, x, N, c.n_ue_antennas, ec, c.rician_k_hop_db, c, rng)));
        if (!c.direct_v2i_blocked)
            l.cue_bs.push_back(from_ue(rician_between(geo.bs_position, x, c.n_bs_antennas, c.n_ue_antennas, ed,
                                                      c.rician_k_db, c, rng)));
    }
    for (const auto &[tx, rx] : geo.due_pairs)
    {
        const auto xt = position(geo, tx), xr = position(geo, rx);
        l.dtx_ris.push_back(from_ue(rician_between(ris, xt, N, c.n_ue_antennas, ec, c.rician_k_hop_db, c, rng)));
        l.ris_drx.push_back(to_ue(rician_between(xr, ris, c.n_ue_antennas, N, ec, c.rician_k_hop_db, c, rng)));
        if (!c.direct_v2i_blocked)
            l.dtx_bs.push_back(from_ue(rician_between(geo.bs_position, xt, c.n_bs_antennas, c.n_ue_antennas, ed,
                                                      c.rician_k_db, c, rng)));
        l.v2v.push_back(ue_ue(rician_between(xr, xt, c.n_ue_antennas, c.n_ue_antennas, ed, c.rician_k_db, c, rng)));
    }
    for (const auto &v : geo.cues)
    {
        std::vector<RicianLink> row;
        for (const auto &pr : geo.due_pairs)
            row.push_back(ue_ue(rician_between(position(geo, pr.second), position(geo, v), c.n_ue_antennas,
                                               c.n_ue_antennas, ed, c.rician_k_db, c, rng)));
        l.cue_drx.push_back(std::move(row));
    }
    return l;
}

struct Mode2Params
{
    double cue_power = 0.0; // W, maximum
    double due_power = 0.0; // W, maximum
    double noise_var = 0.0;
    double gamma_th = 1.0;  // linear
    double outage_max = 0.01;
    double outage_penalty = 100.0;
    int sweeps = 3;
    bool min_objective = false;
    int outage_samples = 10000;
    double bisection_tol_db = 0.01;
    double power_range_db = 60.0; // bisection searches down to max - range
};

inline Mode2Params mode2_params(const ScenarioConfig &c)
{
    Mode2Params p;
    p.cue_power = dbm2watt(c.ue_power_dbm);
    p.due_power = dbm2watt(c.due_power_dbm);
    p.noise_var = dbm2watt(c.noise_dbm);
    p.gamma_th = db2lin(c.gamma_th_db);
    p.outage_max = c.outage_max;
    p.outage_penalty = c.outage_penalty;
    p.sweeps = c.tile_sweeps;
    p.min_objective = c.objective == "min";
    p.outage_samples = c.outage_samples;
    return p;
}

// Per-tile, per-PSC contributions of every reflected link, so that the
// channel of any tile assignment is a sum of K precomputed terms. "tot" uses
// the realized hops, "los" only their LoS parts; the scattered power of a
// reflected term does not depend on the unit-modulus PSC.
class TileContributions
{
  public:
    TileContributions(const PrLinks &l, const PscCodebook &cb, int n_tiles) : K_(n_tiles), S_(cb.size())
    {
        const int N = int(l.bs_ris.los.cols());
        const int T = cb.tile_size();
        if (T * n_tiles != N)
            throw ArgumentError("TileContributions: tiles do not cover the surface");
        M_ = int(l.cue_ris.size());
        L_ = int(l.dtx_ris.size());
        const int NT = int(l.bs_ris.los.rows());
        v2i_.assign(K_ * S_, CMat());
        dbs_.assign(K_ * S_, CMat());
        dd_tot_.assign(K_ * S_, CVec());
        dd_los_.assign(K_ * S_, CVec());
        md_tot_.assign(K_ * S_, CMat());
        md_los_.assign(K_ * S_, CMat());
        dd_nlos_ = RMat::Zero(K_, L_);
        md_nlos_.assign(K_, RMat::Zero(M_, L_));
        const CMat G = l.bs_ris.total();
        auto hop_nlos = [](const RicianLink &a, const RicianLink &b, int n0, int T) {
            // Variance of sum_n a_n b_n over the tile with independent hops.
            double v = 0;
            for (int n = n0; n < n0 + T; ++n)
            {
                const double la = std::norm(a.los(a.los.rows() == 1 ? 0 : n, a.los.rows() == 1 ? n : 0));
                const double lb = std::norm(b.los(n, 0));
                v += la * b.nlos_power + a.nlos_power * lb + a.nlos_power * b.nlos_power;
            }
            return v;
        };
        for (int k = 0; k < K_; ++k)
        {
            const int n0 = k * T;
            for (int l2 = 0; l2 < L_; ++l2)
            {
                dd_nlos_(k, l2) = hop_nlos(l.ris_drx[l2], l.dtx_ris[l2], n0, T);
                for (int m = 0; m < M_; ++m)
                    md_nlos_[k](m, l2) = hop_nlos(l.ris_drx[l2], l.cue_ris[m], n0, T);
            }
            for (int s = 0; s < S_; ++s)
            {
                const CVec &phi = cb.configs[s];
                const int i = k * S_ + s;
                CMat Gt = G.middleCols(n0, T) * phi.asDiagonal();
                CMat a(NT, M_), b(NT, L_);
                for (int m = 0; m < M_; ++m)
                    a.col(m) = Gt * l.cue_ris[m].total().middleRows(n0, T);
                for (int d = 0; d < L_; ++d)
                    b.col(d) = Gt * l.dtx_ris[d].total().middleRows(n0, T);
                v2i_[i] = a;
                dbs_[i] = b;
                dd_tot_[i].resize(L_);
                dd_los_[i].resize(L_);
                md_tot_[i].resize(M_, L_);
                md_los_[i].resize(M_, L_);
                for (int d = 0; d < L_; ++d)
                {
                    const auto &r = l.ris_drx[d];
                    const CVec rt = (r.total().middleCols(n0, T).transpose()).cwiseProduct(phi);
                    const CVec rl = (r.los.middleCols(n0, T).transpose()).cwiseProduct(phi);
                    dd_tot_[i](d) = rt.cwiseProduct(l.dtx_ris[d].total().middleRows(n0, T).col(0)).sum();
                    dd_los_[i](d) = rl.cwiseProduct(l.dtx_ris[d].los.middleRows(n0, T).col(0)).sum();
                    for (int m = 0; m < M_; ++m)
                    {
                        md_tot_[i](m, d) = rt.cwiseProduct(l.cue_ris[m].total().middleRows(n0, T).col(0)).sum();
                        md_los_[i](m, d) = rl.cwiseProduct(l.cue_ris[m].los.middleRows(n0, T).col(0)).sum();
                    }
                }
            }
        }
        // Direct terms.
        direct_v2i_ = CMat::Zero(NT, M_);
        for (int m = 0; m < int(l.cue_bs.size()); ++m)
            direct_v2i_.col(m) = l.cue_bs[m].total().col(0);
        direct_dbs_ = CMat::Zero(NT, L_);
        for (int d = 0; d < int(l.dtx_bs.size()); ++d)
            direct_dbs_.col(d) = l.dtx_bs[d].total().col(0);
        dd_direct_.resize(L_);
        md_direct_.assign(M_, std::vector<Direct>(L_));
        for (int d = 0; d < L_; ++d)
            dd_direct_[d] = {l.v2v[d].los(0, 0), l.v2v[d].nlos_power, l.v2v[d].total()(0, 0)};
        for (int m = 0; m < M_; ++m)
            for (int d = 0; d < L_; ++d)
            {
                const auto &k = l.cue_drx[m][d];
                md_direct_[m][d] = {k.los(0, 0), k.nlos_power, k.total()(0, 0)};
            }
    }

    int n_tiles() const { return K_; }
    int n_pscs() const { return S_; }
    int n_cues() const { return M_; }
    int n_dues() const { return L_; }

    // V2I channels (N_T x M) and DUE-to-BS interference channels (N_T x L).
    CMat v2i(const std::vector<int> &a) const
    {
        CMat h = direct_v2i_;
        for (int k = 0; k < K_; ++k)
            h += v2i_[k * S_ + a[k]];
        return h;
    }
    CMat due_to_bs(const std::vector<int> &a) const
    {
        CMat h = direct_dbs_;
        for (int k = 0; k < K_; ++k)
            h += dbs_[k * S_ + a[k]];
        return h;
    }
    // Realized V2V channel of pair d and its fading statistics.
    cplx v2v(const std::vector<int> &a, int d) const
    {
        cplx h = dd_direct_[d].total;
        for (int k = 0; k < K_; ++k)
            h += dd_tot_[k * S_ + a[k]](d);
        return h;
    }
    LinkStats v2v_stats(const std::vector<int> &a, int d) const
    {
        LinkStats s{dd_direct_[d].los, dd_direct_[d].nlos};
        for (int k = 0; k < K_; ++k)
        {
            s.los += dd_los_[k * S_ + a[k]](d);
            s.nlos_power += dd_nlos_(k, d);
        }
        return s;
    }
    // CUE m -> receiver of pair d.
    LinkStats cue_to_due_stats(const std::vector<int> &a, int m, int d) const
    {
        LinkStats s{md_direct_[m][d].los, md_direct_[m][d].nlos};
        for (int k = 0; k < K_; ++k)
        {
            s.los += md_los_[k * S_ + a[k]](m, d);
            s.nlos_power += md_nlos_[k](m, d);
        }
        return s;
    }
    cplx cue_to_due(const std::vector<int> &a, int m, int d) const
    {
        cplx h = md_direct_[m][d].total;
        for (int k = 0; k < K_; ++k)
            h += md_tot_[k * S_ + a[k]](m, d);
        return h;
    }
    // Energy tile k collects from CUE m (index m) or DUE d (index M + d).
    double incident_energy(const PrLinks &l, int k, int link, double p_cue, double p_due) const
    {
        const int T = int(l.bs_ris.los.cols()) / K_;
        if (link < M_)
            return p_cue * l.cue_ris[link].total().middleRows(k * T, T).squaredNorm();
        return p_due * l.dtx_ris[link - M_].total().middleRows(k * T, T).squaredNorm();
    }

  private:
    struct Direct
    {
        cplx los;
        double nlos;
        cplx total;
    };
    int K_, S_, M_ = 0, L_ = 0;
    std::vector<CMat> v2i_, dbs_;
    std::vector<CVec> dd_tot_, dd_los_;
    std::vector<CMat> md_tot_, md_los_;
    RMat dd_nlos_;
    std::vector<RMat> md_nlos_;
    CMat direct_v2i_, direct_dbs_;
    std::vector<Direct> dd_direct_;
    std::vector<std::vector<Direct>> md_direct_;
};

// Rayleigh surrogate of the V2V outage: the desired and the interfering
// links are treated as Rayleigh with their mean powers. With mean received
// powers S and I and noise n, Pr(S/(I + n) < g) = 1 - exp(-g n / S) / (1 + g I / S).
inline double rayleigh_outage(double signal_mean, double interference_mean, double noise, double gamma_th)
{
    if (!(signal_mean > 0))
        return 1.0;
    return 1.0 - std::exp(-gamma_th * noise / signal_mean) / (1.0 + gamma_th * interference_mean / signal_mean);
}

// Monte-Carlo outage of SINR = p_d |h|^2 / (noise + p_c |g|^2) with h, g
// drawn from their LoS + scattered statistics. Samples are summed with
// compensation so the result does not depend on evaluation order.
template <class URBG>
double outage_monte_carlo(const LinkStats &h, const LinkStats &g, double p_d, double p_c, double noise,
                          double gamma_th, int samples, URBG &rng)
{
    if (!(gamma_th > 0))
        throw ArgumentError("outage: gamma_th must be positive");
    if (samples < 1)
        throw ArgumentError("outage: need at least one sample");
    const double sh = std::sqrt(h.nlos_power), sg = std::sqrt(g.nlos_power);
    KahanSum out;
    for (int i = 0; i < samples; ++i)
    {
        const cplx hh = h.los + sh * crandn(rng);
        const cplx gg = g.los + sg * crandn(rng);
        const double sinr = p_d * std::norm(hh) / (noise + p_c * std::norm(gg));
        out.add(sinr < gamma_th ? 1.0 : 0.0);
    }
    return out.value() / samples;
}

struct PowerPair
{
    bool feasible = false;
    double cue = 0.0;
    double due = 0.0;
    double outage = 1.0; // surrogate outage at the chosen powers
};

// Smallest DUE power meeting the outage target with the CUE at full power;
// if even full DUE power fails, the CUE backs off to the largest power that
// still meets it. Bisection runs in dB.
inline PowerPair power_control(const LinkStats &h, const LinkStats &g, const Mode2Params &p)
{
    auto out = [&](double pd, double pc) {
        return rayleigh_outage(pd * h.mean_power(), pc * g.mean_power(), p.noise_var, p.gamma_th);
    };
    PowerPair r;
    const double pd_max = p.due_power, pc_max = p.cue_power;
    if (out(pd_max, 0.0) > p.outage_max)
        return r;
    if (out(pd_max, pc_max) <= p.outage_max)
    {
        double lo = watt2dbm(pd_max) - p.power_range_db, hi = watt2dbm(pd_max);
        if (out(dbm2watt(lo), pc_max) <= p.outage_max)
            hi = lo;
        while (hi - lo > p.bisection_tol_db)
        {
            const double mid = 0.5 * (lo + hi);
            if (out(dbm2watt(mid), pc_max) <= p.outage_max)
                hi = mid;
            else
                lo = mid;
        }
        r = {true, pc_max, dbm2watt(hi), out(dbm2watt(hi), pc_max)};
        return r;
    }
    double lo = watt2dbm(pc_max) - p.power_range_db, hi = watt2dbm(pc_max);
    if (out(pd_max, dbm2watt(lo)) > p.outage_max)
        return r;
    while (hi - lo > p.bisection_tol_db)
    {
        const double mid = 0.5 * (lo + hi);
        if (out(pd_max, dbm2watt(mid)) <= p.outage_max)
            lo = mid;
        else
            hi = mid;
    }
    r = {true, dbm2watt(lo), pd_max, out(pd_max, dbm2watt(lo))};
    return r;
}

// MMSE-combined V2I SINR of a CUE with one optional interferer.
inline double v2i_sinr(const CVec &h, double p, const CVec *intf, double p_i, double noise)
{
    const double hh = h.squaredNorm();
    if (!intf || p_i <= 0)
        return p * hh / noise;
    const cplx ih = intf->dot(h);
    return p / noise * (hh - p_i * std::norm(ih) / (noise + p_i * intf->squaredNorm()));
}

inline CVec v2i_combiner(const CVec &h, const CVec *intf, double p_i, double noise)
{
    const int n = int(h.size());
    CMat R = CMat::Identity(n, n) * noise;
    if (intf && p_i > 0)
        R += p_i * (*intf) * intf->adjoint();
    CVec w = R.ldlt().solve(h);
    const double nw = w.norm();
    return nw > 0 ? CVec(w / nw) : w;
}

struct AllocationDecision
{
    std::string mode; // "AT" or "PR"
    CMat bs_combiner;
    std::optional<ActiveRisCoefficients> ris; // AT
    std::vector<int> tile_psc;                // PR: PSC per tile
    std::vector<int> tile_link;               // PR: served link per tile (CUE m, or M + d for DUE d)
    std::vector<int> reuse;                   // PR: CUE subchannel reused by each DUE, -1 if none
    std::vector<int> unmatched_dues;
    RVec cue_power;
    RVec due_power;
    double objective = 0.0;
};

// Tile-stage objective: interference-free V2I capacity (sum or minimum over
// CUEs, MRC at the BS) minus a penalty on the interference-free V2V outage
// in excess of the target.
inline double tile_objective(const TileContributions &tc, const std::vector<int> &a, const Mode2Params &p,
                             double *violation = nullptr)
{
    const CMat H = tc.v2i(a);
    double sum = 0, mn = std::numeric_limits<double>::infinity();
    for (int m = 0; m < tc.n_cues(); ++m)
    {
        const double c = std::log2(1.0 + p.cue_power * H.col(m).squaredNorm() / p.noise_var);
        sum += c;
        mn = std::min(mn, c);
    }
    double viol = 0;
    for (int d = 0; d < tc.n_dues(); ++d)
    {
        const double o = rayleigh_outage(p.due_power * tc.v2v_stats(a, d).mean_power(), 0.0, p.noise_var, p.gamma_th);
        viol += std::max(0.0, o - p.outage_max);
    }
    if (violation)
        *violation = viol;
    const double base = tc.n_cues() == 0 ? 0.0 : (p.min_objective ? mn : sum);
    return base - p.outage_penalty * viol;
}

// Tile association: every tile serves the link whose transmitter delivers
// the most energy onto it (ties to the lowest index).
inline std::vector<int> associate_tiles(const TileContributions &tc, const PrLinks &l, const Mode2Params &p)
{
    std::vector<int> out(tc.n_tiles(), -1);
    for (int k = 0; k < tc.n_tiles(); ++k)
    {
        double best = -1;
        for (int j = 0; j < tc.n_cues() + tc.n_dues(); ++j)
        {
            const double e = tc.incident_energy(l, k, j, p.cue_power, p.due_power);
            if (e > best)
            {
                best = e;
                out[k] = j;
            }
        }
    }
    return out;
}

// Coordinate ascent over tiles on the penalized objective: V2I-serving tiles
// raise the capacity term, V2V-serving tiles mostly act through the outage
// penalty. Tiles are visited V2V-serving first, each in index order. Ascent
// starts from every uniform assignment (all tiles on PSC s) and the best end
// point wins. Changes require strict improvement, so ties keep the lower PSC
// index and the earlier start.
inline std::vector<int> assign_tiles(const TileContributions &tc, const std::vector<int> &association,
                                     const Mode2Params &p)
{
    std::vector<int> order;
    for (int pass = 0; pass < 2; ++pass)
        for (int k = 0; k < tc.n_tiles(); ++k)
            if ((association[k] >= tc.n_cues()) == (pass == 0))
                order.push_back(k);
    std::vector<int> best_a;
    double best = -std::numeric_limits<double>::infinity();
    for (int s0 = 0; s0 < tc.n_pscs(); ++s0)
    {
        std::vector<int> a(tc.n_tiles(), s0);
        double cur = tile_objective(tc, a, p);
        for (int sweep = 0; sweep < p.sweeps; ++sweep)
        {
            bool changed = false;
            for (int k : order)
            {
                int bs = a[k];
                std::vector<int> t = a;
                for (int s = 0; s < tc.n_pscs(); ++s)
                {
                    if (s == a[k])
                        continue;
                    t[k] = s;
                    const double f = tile_objective(tc, t, p);
                    if (f > cur)
                    {
                        cur = f;
                        bs = s;
                    }
                }
                if (bs != a[k])
                {
                    a[k] = bs;
                    changed = true;
                }
            }
            if (!changed)
                break;
        }
        if (cur > best)
        {
            best = cur;
            best_a = a;
        }
    }
    return best_a;
}

// Exhaustive search over all S^K tile assignments (oracle for small cases).
inline std::vector<int> assign_tiles_exhaustive(const TileContributions &tc, const Mode2Params &p,
                                                double *best_value = nullptr)
{
    const int K = tc.n_tiles(), S = tc.n_pscs();
    double total = std::pow(double(S), K);
    if (total > 65536.0 * 16)
        throw ArgumentError("assign_tiles_exhaustive: S^K too large");
    std::vector<int> a(K, 0), best_a = a;
    double best = -std::numeric_limits<double>::infinity();
    for (;;)
    {
        const double f = tile_objective(tc, a, p);
        if (f > best)
        {
            best = f;
            best_a = a;
        }
        int k = 0;
        while (k < K && ++a[k] == S)
            a[k++] = 0;
        if (k == K)
            break;
    }
    if (best_value)
        *best_value = best;
    return best_a;
}

// Full Mode 2 decision: tile association and PSCs, per-pair power control,
// then a one-to-one DUE -> CUE-subchannel matching maximizing the sum V2I
// capacity over pairs that meet the outage target.
inline AllocationDecision optimize_mode2(const PrLinks &l, const PscCodebook &cb, int n_tiles, const Mode2Params &p)
{
    const TileContributions tc(l, cb, n_tiles);
    AllocationDecision dec;
    dec.mode = "PR";
    dec.tile_link = associate_tiles(tc, l, p);
    dec.tile_psc = assign_tiles(tc, dec.tile_link, p);
    const auto &a = dec.tile_psc;
    const int M = tc.n_cues(), L = tc.n_dues();
    const CMat H = tc.v2i(a), D = tc.due_to_bs(a);

    RMat weight = RMat::Zero(L, M);
    Eigen::Matrix<bool, -1, -1> allowed = Eigen::Matrix<bool, -1, -1>::Constant(L, M, false);
    std::vector<std::vector<PowerPair>> pw(L, std::vector<PowerPair>(M));
    for (int d = 0; d < L; ++d)
        for (int m = 0; m < M; ++m)
        {
            pw[d][m] = power_control(tc.v2v_stats(a, d), tc.cue_to_due_stats(a, m, d), p);
            if (!pw[d][m].feasible)
                continue;
            allowed(d, m) = true;
            const CVec i = D.col(d);
            const double with = std::log2(1.0 + v2i_sinr(H.col(m), pw[d][m].cue, &i, pw[d][m].due, p.noise_var));
            const double alone = std::log2(1.0 + v2i_sinr(H.col(m), p.cue_power, nullptr, 0.0, p.noise_var));
            // Gain relative to an unshared subchannel (never positive).
            weight(d, m) = with - alone;
        }
    dec.reuse = max_weight_matching(weight, allowed);
    dec.cue_power = RVec::Constant(M, p.cue_power);
    dec.due_power = RVec::Zero(L);
    for (int d = 0; d < L; ++d)
    {
        const int m = dec.reuse[d];
        if (m < 0)
        {
            dec.unmatched_dues.push_back(d);
            continue;
        }
        dec.cue_power(m) = pw[d][m].cue;
        dec.due_power(d) = pw[d][m].due;
    }
    dec.bs_combiner.resize(H.rows(), M);
    for (int m = 0; m < M; ++m)
    {
        int d = -1;
        for (int k = 0; k < L; ++k)
            if (dec.reuse[k] == m)
                d = k;
        const CVec i = d >= 0 ? CVec(D.col(d)) : CVec();
        dec.bs_combiner.col(m) = v2i_combiner(H.col(m), d >= 0 ? &i : nullptr, d >= 0 ? dec.due_power(d) : 0.0,
                                              p.noise_var);
    }
    dec.objective = tile_objective(tc, a, p);
    return dec;
}

// Realized V2I capacity of a Mode 2 decision: every CUE on its own
// subchannel, MMSE-combined, with the matched DUE (if any) interfering.
inline double v2i_capacity(const AllocationDecision &dec, const TileContributions &tc, const Mode2Params &p)
{
    const CMat H = tc.v2i(dec.tile_psc), D = tc.due_to_bs(dec.tile_psc);
    double total = 0;
    for (int m = 0; m < tc.n_cues(); ++m)
    {
        int d = -1;
        for (int k = 0; k < int(dec.reuse.size()); ++k)
            if (dec.reuse[k] == m)
                d = k;
        const CVec i = d >= 0 ? CVec(D.col(d)) : CVec();
        const double s = v2i_sinr(H.col(m), dec.cue_power(m), d >= 0 ? &i : nullptr,
                                  d >= 0 ? dec.due_power(d) : 0.0, p.noise_var);
        total += std::log2(1.0 + s);
    }
    return total;
}

// Monte-Carlo V2V outage of every DUE under a decision; unmatched DUEs do
// not transmit and report 1.
template <class URBG>
RVec v2v_outage(const AllocationDecision &dec, const TileContributions &tc, const Mode2Params &p, URBG &rng)
{
    RVec out = RVec::Ones(tc.n_dues());
    for (int d = 0; d < tc.n_dues(); ++d)
    {
        const int m = dec.reuse[d];
        if (m < 0)
            continue;
        out(d) = outage_monte_carlo(tc.v2v_stats(dec.tile_psc, d), tc.cue_to_due_stats(dec.tile_psc, m, d),
                                    dec.due_power(d), dec.cue_power(m), p.noise_var, p.gamma_th, p.outage_samples,
                                    rng);
    }
    return out;
}

// ---- Decision serialization ------------------------------------------------

inline nlohmann::json to_json(const AllocationDecision &d)
{
    nlohmann::json j;
    j["mode"] = d.mode;
    auto mat = [](const CMat &m) {
        nlohmann::json re = nlohmann::json::array(), im = nlohmann::json::array();
        for (int r = 0; r < m.rows(); ++r)
        {
            std::vector<double> a, b;
            for (int c = 0; c < m.cols(); ++c)
            {
                a.push_back(m(r, c).real());
                b.push_back(m(r, c).imag());
            }
            re.push_back(a);
            im.push_back(b);
        }
        return nlohmann::json{{"real", re}, {"imag", im}};
    };
    j["bs_combiner"] = mat(d.bs_combiner);
    if (d.ris)
        j["ris"] = {{"amplitudes", std::vector<double>(d.ris->amplitudes.begin(), d.ris->amplitudes.end())},
                    {"phases", std::vector<double>(d.ris->phases.begin(), d.ris->phases.end())}};
    j["tile_psc"] = d.tile_psc;
    j["tile_link"] = d.tile_link;
    j["reuse"] = d.reuse;
    j["unmatched_dues"] = d.unmatched_dues;
    j["cue_power_w"] = std::vector<double>(d.cue_power.begin(), d.cue_power.end());
    j["due_power_w"] = std::vector<double>(d.due_power.begin(), d.due_power.end());
    j["objective"] = d.objective;
    return j;
}

inline AllocationDecision decision_from_json(const nlohmann::json &j)
{
    AllocationDecision d;
    d.mode = j.at("mode").get<std::string>();
    const auto &re = j.at("bs_combiner").at("real");
    const auto &im = j.at("bs_combiner").at("imag");
    const int R = int(re.size()), C = R ? int(re[0].size()) : 0;
    d.bs_combiner.resize(R, C);
    for (int r = 0; r < R; ++r)
        for (int c = 0; c < C; ++c)
            d.bs_combiner(r, c) = cplx(re[r][c].get<double>(), im[r][c].get<double>());
    if (j.contains("ris"))
    {
        ActiveRisCoefficients a;
        const auto amp = j["ris"]["amplitudes"].get<std::vector<double>>();
        const auto ph = j["ris"]["phases"].get<std::vector<double>>();
        a.amplitudes = Eigen::Map<const RVec>(amp.data(), Eigen::Index(amp.size()));
        a.phases = Eigen::Map<const RVec>(ph.data(), Eigen::Index(ph.size()));
        d.ris = a;
    }
    d.tile_psc = j.at("tile_psc").get<std::vector<int>>();
    d.tile_link = j.at("tile_link").get<std::vector<int>>();
    d.reuse = j.at("reuse").get<std::vector<int>>();
    d.unmatched_dues = j.at("unmatched_dues").get<std::vector<int>>();
    const auto cp = j.at("cue_power_w").get<std::vector<double>>();
    const auto dp = j.at("due_power_w").get<std::vector<double>>();
    d.cue_power = Eigen::Map<const RVec>(cp.data(), Eigen::Index(cp.size()));
    d.due_power = Eigen::Map<const RVec>(dp.data(), Eigen::Index(dp.size()));
    d.objective = j.at("objective").get<double>();
    return d;
}

// Mode 1 result as a decision record.
inline AllocationDecision mode1_decision(const Mode1Result &r, const Mode1Params &p)
{
    AllocationDecision d;
    d.mode = "AT";
    d.bs_combiner = r.combiner;
    d.ris = r.ris;
    d.cue_power = p.tx_power;
    d.due_power = RVec();
    d.objective = r.objective;
    return d;
}

} // namespace risv2x
