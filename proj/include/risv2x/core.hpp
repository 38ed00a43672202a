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

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace risv2x
{
using cplx = std::complex<double>;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using RVec = Eigen::VectorXd;
using RMat = Eigen::MatrixXd;

inline constexpr double pi = 3.14159265358979323846;
inline constexpr double speed_of_light = 299792458.0;

// Error kinds. The CLI maps config/argument errors to exit code 2 where they
// stem from user input and everything else to 1.
struct ConfigError : std::runtime_error
{
    using std::runtime_error::runtime_error;
};
struct ArgumentError : std::invalid_argument
{
    using std::invalid_argument::invalid_argument;
};
struct NumericalError : std::runtime_error
{
    using std::runtime_error::runtime_error;
};
struct ProtocolError : std::runtime_error
{
    using std::runtime_error::runtime_error;
};
struct UsageError : std::runtime_error
{
    using std::runtime_error::runtime_error;
};

inline double db2lin(double db) { return std::pow(10.0, db / 10.0); }
inline double lin2db(double x) { return 10.0 * std::log10(x); }
inline double dbm2watt(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
inline double watt2dbm(double w) { return 10.0 * std::log10(w) + 30.0; }

inline double bessel_j0(double x) { return std::cyl_bessel_j(0.0, x); }

// Jakes autocorrelation of a Doppler-faded gain after a lag of dt seconds.
inline double jakes_rho(double speed_mps, double carrier_hz, double dt)
{
    const double fd = speed_mps * carrier_hz / speed_of_light;
    return bessel_j0(2.0 * pi * fd * dt);
}

// Uniform linear array response for electrical angle psi (radians),
// a[n] = exp(j n psi) / sqrt(n_elem).
inline CVec steering(int n_elem, double psi)
{
    CVec a(n_elem);
    const double s = 1.0 / std::sqrt(double(n_elem));
    for (int n = 0; n < n_elem; ++n)
        a(n) = std::polar(s, psi * n);
    return a;
}

// Electrical angle of grid point k on a grid of size g: 2 pi k / g.
inline double grid_angle(int k, int g) { return 2.0 * pi * double(k) / double(g); }

// Electrical angle seen by a half-wavelength array whose axis is `axis`
// (unit vector) for a plane wave leaving towards `dir` (unit vector).
inline double electrical_angle(const Eigen::Vector3d &axis, const Eigen::Vector3d &dir)
{
    return pi * axis.dot(dir);
}

// Random streams ------------------------------------------------------------

namespace detail
{
inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s)
    {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}
} // namespace detail

using Engine = std::mt19937_64;

// Root of the named-substream tree. A stream is identified by a name plus up
// to two integer indices (typically drop and slot), so extra draws in one
// consumer never shift the draws of another.
class Rng
{
  public:
    explicit Rng(std::uint64_t seed = 1) : seed_(seed) {}

    std::uint64_t seed() const { return seed_; }

    Engine stream(std::string_view name, std::uint64_t i = 0, std::uint64_t j = 0) const
    {
        std::uint64_t h = detail::splitmix64(seed_ ^ detail::fnv1a(name));
        h = detail::splitmix64(h ^ (i * 0xd1b54a32d192ed03ULL));
        h = detail::splitmix64(h ^ (j * 0xaef17502108ef2d9ULL));
        std::seed_seq seq{std::uint32_t(h), std::uint32_t(h >> 32)};
        return Engine(seq);
    }

    Rng child(std::string_view name, std::uint64_t i = 0) const
    {
        return Rng(detail::splitmix64(seed_ ^ detail::fnv1a(name) ^ detail::splitmix64(i + 0x51ULL)));
    }

  private:
    std::uint64_t seed_;
};

// Circularly-symmetric complex normal with unit variance.
template <class URBG>
cplx crandn(URBG &g)
{
    std::normal_distribution<double> nd(0.0, std::sqrt(0.5));
    const double re = nd(g);
    const double im = nd(g);
    return {re, im};
}

template <class URBG>
CMat crandn(URBG &g, Eigen::Index rows, Eigen::Index cols)
{
    CMat m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r)
            m(r, c) = crandn(g);
    return m;
}

template <class URBG>
double uniform(URBG &g, double lo, double hi)
{
    return std::uniform_real_distribution<double>(lo, hi)(g);
}

template <class URBG>
int uniform_int(URBG &g, int lo, int hi)
{
    return std::uniform_int_distribution<int>(lo, hi)(g);
}

template <class URBG>
cplx unit_phase(URBG &g)
{
    return std::polar(1.0, uniform(g, 0.0, 2.0 * pi));
}

// Compensated summation, used where reductions must not depend on order of
// accumulation across workers.
class KahanSum
{
  public:
    void add(double x)
    {
        const double y = x - c_;
        const double t = s_ + y;
        c_ = (t - s_) - y;
        s_ = t;
    }
    double value() const { return s_; }

  private:
    double s_ = 0.0, c_ = 0.0;
};

} // namespace risv2x
