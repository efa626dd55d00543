#pragma once

#include "glhm/errors.hpp"
#include "glhm/projector.hpp"

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace glhm {

//! Uniform grid on the box [-a, a]^m with n nodes per axis.
struct GridDomain {
    int m = 2;
    double extent = 1.0;
    int n = 65;

    GridDomain() = default;
    GridDomain(int m_, double extent_, int n_);

    double h() const { return 2.0 * extent / (n - 1); }
    std::size_t num_nodes() const;
    double coord(int i) const { return -extent + i * h(); }
    //! Row-major stride of axis k (last axis fastest).
    std::size_t stride(int k) const;
    std::array<int, 3> unravel(std::size_t idx) const;
    Vec position(std::size_t idx) const;
    bool on_boundary(std::size_t idx) const;
    //! Trapezoid (dual cell) weight of a node.
    double weight(std::size_t idx) const;
    double cell_volume() const;
    //! True when the closed ball lies inside the box.
    bool contains_ball(const Vec& center, double radius) const;
    //! Index range [lo, hi] per axis of nodes within the axis-aligned box around a ball.
    void node_window(const Vec& center, double radius, std::array<int, 3>& lo, std::array<int, 3>& hi) const;
    bool operator==(const GridDomain& o) const { return m == o.m && extent == o.extent && n == o.n; }
};

//! Gridded map u: box -> R^J, J values per node, row-major node order.
struct VectorField {
    GridDomain domain;
    int J = 3;
    std::vector<double> values;
    std::optional<double> eps;
    std::optional<double> residual;

    VectorField() = default;
    VectorField(const GridDomain& d, int J_);

    double* at(std::size_t node) { return values.data() + node * J; }
    const double* at(std::size_t node) const { return values.data() + node * J; }
    std::size_t num_nodes() const { return domain.num_nodes(); }
    bool all_finite() const;
};

//! Writes the binary snapshot (magic, version, m, n, J, extent, eps, residual, values).
void write_field(const VectorField& f, const std::string& path);
VectorField read_field(const std::string& path);

} // namespace glhm
