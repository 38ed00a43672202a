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

#include <optional>

namespace risv2x
{

struct Lane
{
    double center_y = 0.0;
    double width = 4.0;
};

struct Vehicle
{
    double base_x = 0.0; // road-axis coordinate at travelled distance 0
    double y = 0.0;
    double z = 1.5;
    int lane = 0;
};

// Freeway drop. Vehicles all travel towards +x; their current road-axis
// coordinate is base_x + travelled_m folded into [-road_length/2, road_length/2).
struct Geometry
{
    Eigen::Vector3d bs_position = Eigen::Vector3d::Zero();
    Eigen::Vector3d ris_position = Eigen::Vector3d::Zero();
    bool ris_on_vehicle = false; // the RIS rides on a vehicle and moves with traffic
    std::vector<Vehicle> cues;
    std::vector<std::pair<Vehicle, Vehicle>> due_pairs; // (transmitter, receiver)
    std::vector<Lane> lanes;
    double road_length = 2000.0;
    double travelled_m = 0.0;
};

inline double wrap_road(double x, double length)
{
    double r = std::fmod(x + 0.5 * length, length);
    if (r < 0)
        r += length;
    return r - 0.5 * length;
}

inline Eigen::Vector3d position(const Geometry &g, const Vehicle &v)
{
    return {wrap_road(v.base_x + g.travelled_m, g.road_length), v.y, v.z};
}

inline Eigen::Vector3d ris_position(const Geometry &g)
{
    if (!g.ris_on_vehicle)
        return g.ris_position;
    Eigen::Vector3d p = g.ris_position;
    p.x() = wrap_road(p.x() + g.travelled_m, g.road_length);
    return p;
}

// Separation of two vehicles with the road treated as a ring.
inline double road_separation(const Geometry &g, const Vehicle &a, const Vehicle &b)
{
    double dx = std::abs(wrap_road(a.base_x - b.base_x, g.road_length));
    const double dy = a.y - b.y, dz = a.z - b.z;
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

inline std::vector<Lane> freeway_lanes(const ScenarioConfig &c)
{
    std::vector<Lane> lanes(c.n_lanes);
    for (int i = 0; i < c.n_lanes; ++i)
        lanes[i] = {(i - 0.5 * (c.n_lanes - 1)) * c.lane_width_m, c.lane_width_m};
    return lanes;
}

inline bool within_lane(const Geometry &g, const Vehicle &v)
{
    if (v.lane < 0 || v.lane >= int(g.lanes.size()))
        return false;
    const Lane &l = g.lanes[v.lane];
    const double x = wrap_road(v.base_x + g.travelled_m, g.road_length);
    return std::abs(v.y - l.center_y) <= 0.5 * l.width + 1e-12 && x >= -0.5 * g.road_length &&
           x < 0.5 * g.road_length;
}

namespace detail
{
template <class URBG>
Vehicle drop_vehicle(const ScenarioConfig &c, const std::vector<Lane> &lanes, URBG &rng)
{
    Vehicle v;
    v.lane = uniform_int(rng, 0, c.n_lanes - 1);
    v.y = lanes[v.lane].center_y;
    if (c.drop_window_m > 0)
        v.base_x = wrap_road(c.drop_center_m + uniform(rng, -0.5, 0.5) * c.drop_window_m, c.road_length_m);
    else
        v.base_x = wrap_road(uniform(rng, -0.5, 0.5) * c.road_length_m, c.road_length_m);
    return v;
}

// Receiver of a V2V pair: an immediately adjacent vehicle, same or
// neighbouring lane, within the V2V range.
template <class URBG>
Vehicle neighbour_of(const ScenarioConfig &c, const std::vector<Lane> &lanes, const Vehicle &tx, URBG &rng)
{
    for (;;)
    {
        Vehicle rx;
        int dl = uniform_int(rng, -1, 1);
        rx.lane = std::clamp(tx.lane + dl, 0, c.n_lanes - 1);
        rx.y = lanes[rx.lane].center_y;
        const double gap = uniform(rng, 0.1, 0.7) * c.max_v2v_range_m;
        rx.base_x = wrap_road(tx.base_x + (uniform_int(rng, 0, 1) ? gap : -gap), c.road_length_m);
        const double dy = rx.y - tx.y;
        if (std::sqrt(gap * gap + dy * dy) <= c.max_v2v_range_m)
            return rx;
    }
}
} // namespace detail

// Drops CUEs and V2V pairs on the freeway; the BS sits off-road at the road
// midpoint and the RIS is a roadside surface at (x_RIS, ris_lateral_m).
inline Geometry build_freeway_scenario(const ScenarioConfig &c, const Rng &rng, std::uint64_t drop = 0)
{
    validate(c);
    Geometry g;
    g.road_length = c.road_length_m;
    g.lanes = freeway_lanes(c);
    const double half_width = 0.5 * c.n_lanes * c.lane_width_m;
    g.bs_position = {0.0, -(half_width + c.bs_offset_m), c.bs_height_m};
    g.ris_position = {c.ris_position_m, c.ris_lateral_m, c.ris_height_m};

    auto eng = rng.stream("scenario", drop);
    for (int m = 0; m < c.n_cues; ++m)
        g.cues.push_back(detail::drop_vehicle(c, g.lanes, eng));
    for (int l = 0; l < c.n_due_pairs; ++l)
    {
        Vehicle tx = detail::drop_vehicle(c, g.lanes, eng);
        Vehicle rx = detail::neighbour_of(c, g.lanes, tx, eng);
        g.due_pairs.emplace_back(tx, rx);
    }
    return g;
}

// Variant for the active-transmission mode: the RIS is mounted on a vehicle
// driving in `lane` at road coordinate x_RIS, and the CUEs ride inside it
// within in_vehicle_distance_m of the surface.
inline Geometry build_vehicle_ris_scenario(const ScenarioConfig &c, const Rng &rng, std::uint64_t drop = 0,
                                           int lane = -1)
{
    Geometry g = build_freeway_scenario([&] {
        ScenarioConfig cc = c;
        cc.n_cues = 0;
        return cc;
    }(), rng, drop);
    if (lane < 0)
        lane = c.n_lanes / 2;
    g.ris_on_vehicle = true;
    g.ris_position = {wrap_road(c.ris_position_m, c.road_length_m), g.lanes[lane].center_y, 1.6};
    auto eng = rng.stream("scenario.cabin", drop);
    for (int m = 0; m < c.n_cues; ++m)
    {
        Vehicle v;
        v.lane = lane;
        const double r = c.in_vehicle_distance_m * uniform(eng, 0.5, 1.0);
        const double az = uniform(eng, 0.0, 2.0 * pi);
        v.base_x = wrap_road(g.ris_position.x() + r * std::cos(az), c.road_length_m);
        v.y = g.lanes[lane].center_y + std::clamp(0.5 * r * std::sin(az), -0.45 * c.lane_width_m,
                                                  0.45 * c.lane_width_m);
        v.z = 1.0;
        g.cues.push_back(v);
    }
    return g;
}

inline Geometry build_freeway_scenario(const ScenarioConfig &c)
{
    return build_freeway_scenario(c, Rng(c.seed));
}

// Translates every vehicle (and a vehicle-mounted RIS) by speed*dt along +x.
inline Geometry advance_mobility(const Geometry &g, double speed, double dt)
{
    if (dt < 0)
        throw ArgumentError("advance_mobility: negative dt");
    if (speed < 0)
        throw ArgumentError("advance_mobility: negative speed");
    Geometry out = g;
    out.travelled_m = g.travelled_m + speed * dt;
    return out;
}

} // namespace risv2x
