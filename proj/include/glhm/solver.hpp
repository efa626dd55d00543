#pragma once

#include "glhm/field.hpp"
#include "glhm/target.hpp"

#include <complex>
#include <functional>
#include <vector>

namespace glhm {

struct SolverConfig {
    double eps = 0.1;
    int max_iter = 400000;
    //! Tolerance on sup |eps^2 Lap_h u - f(u)| over interior nodes.
    double tol = 1e-5;
    double step_factor = 0.9;
    //! Record the discrete energy every this many iterations (0: only first and last).
    int energy_interval = 0;
    //! Optional per-node bitmask: bit c set holds component c at its initial value.
    std::vector<unsigned char> frozen;
};

struct RelaxResult {
    VectorField field;
    bool converged = false;
    int iterations = 0;
    double residual = 0.0;
    double initial_residual = 0.0;
    double tau = 0.0;
    //! (iteration, discrete energy) samples.
    std::vector<std::pair<int, double>> energy_trace;
    //! Largest energy increase between consecutive samples (<= 0 when monotone).
    double max_energy_increase = 0.0;
    //! sup of the preconditioned residual over frozen interior nodes (the holding force).
    double frozen_residual = 0.0;
};

//! Gradient energy plus penalty, trapezoid quadrature of the central-difference density.
double energy(const VectorField& u, double eps, const SphereTargetd& target);
std::vector<double> energy_density(const VectorField& u, double eps, const SphereTargetd& target);
//! The functional relax descends: forward-difference edge energy plus penalty.
double discrete_energy(const VectorField& u, double eps, const SphereTargetd& target);
//! Lap_h u - f(u)/eps^2 at interior nodes, zero on the boundary.
VectorField el_residual(const VectorField& u, double eps, const SphereTargetd& target);
//! sup over interior nodes of |eps^2 Lap_h u - f(u)|.
double el_residual_sup(const VectorField& u, double eps, const SphereTargetd& target);

//! Explicit gradient flow with Dirichlet data from init. Throws NonConvergence only when
//! asked; otherwise the flag in the result carries it.
RelaxResult relax(const VectorField& init, const SolverConfig& cfg, const SphereTargetd& target);
//! Step size used by relax.
double relax_step(const GridDomain& d, double eps, double step_factor, const SphereTargetd& target);

//! Smooth compactly supported test vector field xi(y) = a (1 - |y-c|^2/w^2)^4.
struct BumpField {
    Vec center;
    double width = 0.1;
    Vec amplitude;

    Vec value(const Vec& y) const;
    //! J(a,b) = d_a xi^b.
    Mat jacobian(const Vec& y) const;
};

//! |int e div xi - sum int <d_a u, d_b u> d_a xi^b| on the grid.
double stationary_residual(const VectorField& u, double eps, const SphereTargetd& target,
                           const BumpField& xi);
//! sup over grid nodes of the Frobenius norm of grad xi.
double bump_gradient_sup(const GridDomain& d, const BumpField& xi);

//! Inverse stereographic projection of a complex value to S^2.
Eigen::Vector3d inverse_stereographic(std::complex<double> w);
//! Field sampled from a complex map z -> w(z) (2D) followed by inverse stereographic projection.
VectorField synth_complex_map(const GridDomain& d, const std::function<std::complex<double>(std::complex<double>)>& w);
//! Degree-d bubble ((z-c)/sigma)^d; negative d uses the conjugate.
VectorField synth_bubble(const GridDomain& d, const Vec& center, double sigma, int degree);
//! (z-c1)/sigma1 + b/(z-c2): a degree-two map with bubbles at two scales. b = sigma2 sqrt(1 + |c2-c1|^2/sigma1^2)
//! puts the second bubble at spherical scale sigma2 around the value the first map takes at c2.
VectorField synth_two_bubble(const GridDomain& d, const Vec& c1, double sigma1, const Vec& c2, double sigma2);
//! 2D bubble extended constantly along the rank-1 projector axis through center.
VectorField synth_bubble_tube(const GridDomain& d, const Projector& axis, double sigma, const Vec& center);
//! Constant field.
VectorField synth_constant(const GridDomain& d, const Eigen::Vector3d& value);

} // namespace glhm
