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

#include "core.hpp"

#include <limits>
#include <vector>

namespace risv2x
{

// Rectangular linear assignment (shortest augmenting paths with potentials).
// Minimizes the summed cost; rows <= cols is handled directly, otherwise the
// problem is transposed. Returns for every row its column, or -1 when
// rows > cols leaves it unassigned. Among equal-cost optima the result is
// deterministic.
inline std::vector<int> hungarian_min(const RMat &cost)
{
    const int R = int(cost.rows()), C = int(cost.cols());
    if (R == 0 || C == 0)
        return std::vector<int>(R, -1);
    for (Eigen::Index i = 0; i < cost.size(); ++i)
        if (!std::isfinite(cost.data()[i]))
            throw ArgumentError("hungarian_min: costs must be finite");
    if (R > C)
    {
        const auto col_of_row = hungarian_min(cost.transpose());
        std::vector<int> out(R, -1);
        for (int c = 0; c < C; ++c)
            if (col_of_row[c] >= 0)
                out[col_of_row[c]] = c;
        return out;
    }
    const double inf = std::numeric_limits<double>::infinity();
    // 1-based arrays; p[j] is the row matched to column j.
    std::vector<double> u(R + 1, 0.0), v(C + 1, 0.0);
    std::vector<int> p(C + 1, 0), way(C + 1, 0);
    for (int i = 1; i <= R; ++i)
    {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(C + 1, inf);
        std::vector<char> used(C + 1, 0);
        do
        {
            used[j0] = 1;
            const int i0 = p[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= C; ++j)
            {
                if (used[j])
                    continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j])
                {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta)
                {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= C; ++j)
            {
                if (used[j])
                {
                    u[p[j]] += delta;
                    v[j] -= delta;
                }
                else
                    minv[j] -= delta;
            }
            j0 = j1;
        } while (p[j0] != 0);
        do
        {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> out(R, -1);
    for (int j = 1; j <= C; ++j)
        if (p[j] > 0)
            out[p[j] - 1] = j - 1;
    return out;
}

// Maximum-weight partial matching: entries with allowed(i, j) == false are
// never used. Allowed pairs get a bonus larger than any weight sum, so the
// matching first maximizes the number of allowed pairs and then their total
// weight.
inline std::vector<int> max_weight_matching(const RMat &weight, const Eigen::Matrix<bool, -1, -1> &allowed)
{
    const int R = int(weight.rows()), C = int(weight.cols());
    if (allowed.rows() != R || allowed.cols() != C)
        throw ArgumentError("max_weight_matching: mask size mismatch");
    double span = 1.0;
    for (int i = 0; i < R; ++i)
        for (int j = 0; j < C; ++j)
            if (allowed(i, j))
            {
                if (!std::isfinite(weight(i, j)))
                    throw ArgumentError("max_weight_matching: weights must be finite");
                span += std::abs(weight(i, j));
            }
    const double bonus = 2.0 * span * (std::min(R, C) + 1);
    RMat cost(R, C);
    for (int i = 0; i < R; ++i)
        for (int j = 0; j < C; ++j)
            cost(i, j) = allowed(i, j) ? -(weight(i, j) + bonus) : 0.0;
    auto m = hungarian_min(cost);
    for (int i = 0; i < R; ++i)
        if (m[i] >= 0 && !allowed(i, m[i]))
            m[i] = -1;
    return m;
}

} // namespace risv2x
