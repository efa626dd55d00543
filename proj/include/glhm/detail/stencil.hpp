#pragma once

#include "glhm/field.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>

namespace glhm::detail {

//! Central-difference gradient at a node; one-sided second order on boundary faces.
//! grad[k*J + c] = d u^c / d x_k.
inline void node_gradient(const VectorField& u, std::size_t idx, const std::array<int, 3>& ijk,
                          double* grad)
{
    const GridDomain& d = u.domain;
    const int J = u.J;
    const double inv2h = 1.0 / (2.0 * d.h());
    for (int k = 0; k < d.m; ++k) {
        const std::size_t s = d.stride(k) * static_cast<std::size_t>(J);
        const double* c0 = u.values.data() + idx * static_cast<std::size_t>(J);
        double* g = grad + k * J;
        if (ijk[k] == 0) {
            for (int c = 0; c < J; ++c) g[c] = (-3.0 * c0[c] + 4.0 * c0[s + c] - c0[2 * s + c]) * inv2h;
        } else if (ijk[k] == d.n - 1) {
            for (int c = 0; c < J; ++c) g[c] = (3.0 * c0[c] - 4.0 * (c0 - s)[c] + (c0 - 2 * s)[c]) * inv2h;
        } else {
            for (int c = 0; c < J; ++c) g[c] = ((c0 + s)[c] - (c0 - s)[c]) * inv2h;
        }
    }
}

//! Visits every node in row-major order with its multi-index.
template <typename F>
void for_each_node(const GridDomain& d, F&& f)
{
    const int n = d.n;
    std::size_t idx = 0;
    if (d.m == 2) {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j, ++idx) f(idx, std::array<int, 3>{i, j, 0});
    } else {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k, ++idx) f(idx, std::array<int, 3>{i, j, k});
    }
}

inline double node_weight(const GridDomain& d, const std::array<int, 3>& ijk)
{
    double w = d.cell_volume();
    for (int k = 0; k < d.m; ++k)
        if (ijk[k] == 0 || ijk[k] == d.n - 1) w *= 0.5;
    return w;
}

//! Nodes inside B(c, radius): f(node, position, weight).
template <typename F>
void for_each_in_ball(const GridDomain& dom, const Vec& c, double radius, F&& f)
{
    std::array<int, 3> lo, hi;
    dom.node_window(c, radius, lo, hi);
    const double r2 = radius * radius;
    Vec y(dom.m);
    std::array<int, 3> ijk{0, 0, 0};
    const int kmax = dom.m == 3 ? 1 : 0;
    for (int i = lo[0]; i <= hi[0]; ++i)
        for (int j = lo[1]; j <= hi[1]; ++j)
            for (int l = (kmax ? lo[2] : 0); l <= (kmax ? hi[2] : 0); ++l) {
                ijk = {i, j, l};
                double d2 = 0.0;
                for (int a = 0; a < dom.m; ++a) {
                    y[a] = dom.coord(ijk[a]);
                    d2 += (y[a] - c[a]) * (y[a] - c[a]);
                }
                if (d2 > r2) continue;
                std::size_t idx = static_cast<std::size_t>(i) * dom.n + j;
                if (dom.m == 3) idx = idx * dom.n + l;
                f(idx, y, node_weight(dom, ijk));
            }
}

//! Trilinear (bilinear in 2D) interpolation weights of y on the grid.
inline int interp_stencil(const GridDomain& dom, const Vec& y, std::array<std::size_t, 8>& nodes, std::array<double, 8>& w)
{
    std::array<int, 3> i0{0, 0, 0};
    std::array<double, 3> f{0.0, 0.0, 0.0};
    const double h = dom.h();
    for (int a = 0; a < dom.m; ++a) {
        double s = (y[a] + dom.extent) / h;
        int i = static_cast<int>(std::floor(s));
        i = std::clamp(i, 0, dom.n - 2);
        i0[a] = i;
        f[a] = std::clamp(s - i, 0.0, 1.0);
    }
    const int corners = 1 << dom.m;
    for (int c = 0; c < corners; ++c) {
        double wt = 1.0;
        std::size_t idx = 0;
        for (int a = 0; a < dom.m; ++a) {
            const int bit = (c >> a) & 1;
            wt *= bit ? f[a] : 1.0 - f[a];
            idx = idx * dom.n + static_cast<std::size_t>(i0[a] + bit);
        }
        nodes[c] = idx;
        w[c] = wt;
    }
    return corners;
}

} // namespace glhm::detail
