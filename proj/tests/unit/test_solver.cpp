#include "doctest.h"

#include "glhm/solver.hpp"

#include "../oracles.hpp"

#include <random>

using namespace glhm;

namespace {

const SphereTargetd T;

double sup_norm_defect(const VectorField& u)
{
    double worst = 0.0;
    for (std::size_t i = 0; i < u.num_nodes(); ++i) {
        const double* p = u.at(i);
        worst = std::max(worst, std::abs(std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]) - 1.0));
    }
    return worst;
}

} // namespace

TEST_SUITE("solver") {

TEST_CASE("synthesized bubble energy matches the conformal density quadrature")
{
    const GridDomain d(2, 1.0, 257);
    const VectorField u = synth_bubble(d, Vec::Zero(2), 0.3, 1);
    CHECK(sup_norm_defect(u) < 1e-12);
    const double ref = oracle::bubble_energy_square(1.0, 0.3);
    CHECK(energy(u, 0.1, T) == doctest::Approx(ref).epsilon(2e-3));
    const VectorField v = synth_bubble(d, Vec::Zero(2), 0.3, -1);
    CHECK(energy(v, 0.1, T) == doctest::Approx(ref).epsilon(2e-3));
}

TEST_CASE("degree-two bubble energy matches its quadrature")
{
    // w = (z/sigma)^2: (1/2)|grad u|^2 = 16 s^2 sigma^-4 / (1 + (s/sigma)^4)^2.
    const double sigma = 0.4;
    const auto dens = [&](double x, double y) {
        const double s2 = x * x + y * y;
        const double q = 1.0 + s2 * s2 / std::pow(sigma, 4);
        return 16.0 * s2 / std::pow(sigma, 4) / (q * q);
    };
    const GridDomain d(2, 1.0, 257);
    CHECK(energy(synth_bubble(d, Vec::Zero(2), sigma, 2), 0.1, T) ==
          doctest::Approx(oracle::simpson2(dens, 1.0)).epsilon(3e-3));
}

TEST_CASE("constant field is critical with zero energy")
{
    const GridDomain d(2, 1.0, 17);
    const VectorField u = synth_constant(d, Eigen::Vector3d(0, 0, 1));
    CHECK(energy(u, 0.1, T) == 0.0);
    CHECK(el_residual_sup(u, 0.1, T) == 0.0);
    SolverConfig cfg;
    cfg.eps = 0.1;
    const auto r = relax(u, cfg, T);
    CHECK(r.converged);
    CHECK(r.iterations == 0);
}

TEST_CASE("relaxation decreases energy monotonically and reaches tolerance")
{
    const GridDomain d(2, 1.0, 33);
    const VectorField u = synth_bubble(d, Vec::Zero(2), 1.5, 1);
    SolverConfig cfg;
    cfg.eps = 0.1;
    cfg.tol = 1e-7;
    cfg.energy_interval = 50;
    const auto r = relax(u, cfg, T);
    CHECK(r.converged);
    CHECK(r.residual <= 1e-7);
    CHECK(r.max_energy_increase <= 0.0);
    CHECK(discrete_energy(r.field, 0.1, T) < discrete_energy(u, 0.1, T));
    for (std::size_t i = 0; i < d.num_nodes(); ++i)
        if (d.on_boundary(i))
            for (int c = 0; c < 3; ++c) CHECK(r.field.at(i)[c] == u.at(i)[c]);
}

TEST_CASE("stationarity residual separates relaxed from perturbed fields")
{
    const GridDomain d(2, 1.0, 65);
    SolverConfig cfg;
    cfg.eps = 0.1;
    cfg.tol = 1e-8;
    const auto r = relax(synth_bubble(d, Vec::Zero(2), 1.5, 1), cfg, T);
    VectorField bad = r.field;
    std::mt19937 rng(7);
    std::normal_distribution<double> N(0.0, 0.01);
    for (std::size_t i = 0; i < d.num_nodes(); ++i)
        if (!d.on_boundary(i))
            for (int c = 0; c < 3; ++c) bad.at(i)[c] += N(rng);
    BumpField xi;
    xi.center = Vec::Zero(2);
    xi.center << 0.1, -0.2;
    xi.width = 0.4;
    xi.amplitude = Vec::Zero(2);
    xi.amplitude << 0.6, 0.8;
    const double good = stationary_residual(r.field, 0.1, T, xi);
    const double worse = stationary_residual(bad, 0.1, T, xi);
    CHECK(good < 1e-3 * bump_gradient_sup(d, xi) * energy(r.field, 0.1, T));
    CHECK(worse > 10.0 * good);
}

TEST_CASE("pinned components stay put and report the holding force")
{
    const GridDomain d(2, 1.0, 33);
    const VectorField u = synth_bubble(d, Vec::Zero(2), 0.3, 1);
    SolverConfig cfg;
    cfg.eps = 0.1;
    cfg.tol = 1e-6;
    cfg.frozen.assign(d.num_nodes(), 0);
    std::vector<std::size_t> held;
    for (std::size_t i = 0; i < d.num_nodes(); ++i)
        if (std::abs(d.position(i).norm() - 0.3) < 0.5 * d.h()) {
            cfg.frozen[i] = 4;
            held.push_back(i);
        }
    REQUIRE(!held.empty());
    const auto r = relax(u, cfg, T);
    for (std::size_t i : held) CHECK(r.field.at(i)[2] == u.at(i)[2]);
    CHECK(r.frozen_residual > 0.0);
    CHECK(std::isfinite(r.frozen_residual));
}

TEST_CASE("tube is constant along its axis")
{
    const GridDomain d(3, 1.0, 21);
    const VectorField u = synth_bubble_tube(d, Projector::axes(3, {2}), 0.3, Vec::Zero(3));
    const std::size_t s = d.stride(2);
    for (std::size_t i = 0; i + s < d.num_nodes(); i += 37)
        if (d.unravel(i)[2] + 1 < d.n)
            for (int c = 0; c < 3; ++c) CHECK(u.at(i)[c] == u.at(i + s)[c]);
}

}
