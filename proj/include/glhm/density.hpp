#pragma once

#include "glhm/field.hpp"
#include "glhm/kernel.hpp"
#include "glhm/projector.hpp"
#include "glhm/target.hpp"

#include <optional>
#include <string>
#include <vector>

namespace glhm {

//! Per-node quantities every probe reads: packed upper triangle of G_ab = <d_a u, d_b u>,
//! the energy density and the scaled penalty F(u)/eps^2.
class FieldCache {
public:
    FieldCache(const VectorField& u, double eps, const SphereTargetd& target = SphereTargetd());

    const GridDomain& domain() const { return domain_; }
    double eps() const { return eps_; }
    int m() const { return domain_.m; }
    int packed() const { return m() * (m() + 1) / 2; }

    const double* G(std::size_t node) const { return G_.data() + node * packed(); }
    double e(std::size_t node) const { return e_[node]; }
    double pen(std::size_t node) const { return pen_[node]; }
    //! G_ab as a dense matrix.
    Mat gram(std::size_t node) const;
    //! Total energy by trapezoid quadrature.
    double total_energy() const;

private:
    GridDomain domain_;
    double eps_;
    std::vector<double> G_;
    std::vector<double> e_;
    std::vector<double> pen_;
};

//! Kernel-weighted integrals at one probe, from a single pass over the support.
struct ProbeMoments {
    Vec x;
    double r = 0.0;
    //! int rho_r (quadrature of the kernel mass, ideally 1).
    double mass = 0.0;
    //! int rho_r e.
    double energy = 0.0;
    //! int rho_r F/eps^2.
    double penalty = 0.0;
    //! int rho_r G_ab.
    Mat gram;
    //! int rhodot_r <d, G d>, d = y - x.
    double radial_dot = 0.0;
    //! int rhodot_r (x - y)^T G, one entry per direction.
    Vec spatial;
    //! int rho_r d_a d_b G_cd, stored at (a*m + b, c*m + d).
    Mat fourth;

    double theta_bar() const { return r * r * energy; }
};

ProbeMoments probe_moments(const FieldCache& cache, const KernelProfile& k, const Vec& x, double r);

//! r^{2-m} int_{B_r(x)} e.
double theta_classical(const FieldCache& cache, const Vec& x, double r);
double theta_classical(const VectorField& u, double eps, const Vec& x, double r);

double theta_bar(const FieldCache& cache, const KernelProfile& k, const Vec& x, double r);
double theta_bar(const VectorField& u, double eps, const KernelProfile& k, const Vec& x, double r);

enum class Part { tangential, radial, angular, perp };

struct PartialEnergy {
    double value = 0.0;
    //! Contributing nodes with |Pi_{L perp}(y - x)| < h.
    int degenerate_nodes = 0;
};

//! Partial energies from precomputed moments.
double partial_from_moments(const ProbeMoments& pm, const Projector& L, Part part);
PartialEnergy theta_bar_partial(const FieldCache& cache, const KernelProfile& k, const Vec& x, double r,
                                const Projector& L, Part part);

struct RadialDerivative {
    double formula = 0.0;
    double fd = 0.0;
};

//! r d/dr of theta_bar from the monotonicity formula and from a central difference (step r/100).
RadialDerivative theta_bar_r_derivative(const FieldCache& cache, const KernelProfile& k, const Vec& x,
                                        double r);
double r_derivative_from_moments(const ProbeMoments& pm);
//! Formula value only, without the fourth moments.
double theta_bar_dr(const FieldCache& cache, const KernelProfile& k, const Vec& x, double r);

struct SpatialGradient {
    //! Full gradient of theta_bar in x by the formula.
    Vec gradient;
    //! Pi_L applied to it.
    Vec along_plane;
    //! r^2 |grad_L|^2 / (r d_r theta_bar(x,r) * theta_bar(x,2r;L)), NaN when the denominator is 0.
    double cauchy_schwarz_constant = 0.0;
};

SpatialGradient theta_bar_gradient(const FieldCache& cache, const KernelProfile& k, const Vec& x, double r,
                                   const Projector& L);
Vec gradient_from_moments(const ProbeMoments& pm);

struct QTensor {
    Vec x;
    double r = 0.0;
    Mat Q;
    //! Descending.
    Vec eigenvalues;
    //! Columns match eigenvalues; first nonzero entry positive.
    Mat eigenvectors;
    bool unique = true;
};

QTensor q_tensor(const FieldCache& cache, const KernelProfile& k, const Vec& x, double r);
QTensor q_from_moments(const ProbeMoments& pm);

struct BestPlane {
    Projector plane;
    QTensor q;
    double theta_L = 0.0;
    bool unique = true;
};

BestPlane best_plane(const FieldCache& cache, const KernelProfile& k, const Vec& x, double r);
BestPlane best_plane_from_moments(const ProbeMoments& pm);

struct SymmetryResult {
    bool is_symmetric = false;
    Projector plane;
    double deficit = 0.0;
};

SymmetryResult symmetry_classify(const FieldCache& cache, const KernelProfile& k, const Vec& x, double r,
                                 double delta);

//! Checks alpha-linear independence at scale r of x_0..x_k.
bool linearly_independent(const std::vector<Vec>& points, double r, double alpha);

struct ConeSplitting {
    double lhs = 0.0;
    double rhs = 0.0;
    double ratio = 0.0;
    Projector plane;
};

//! lhs = theta_bar(x0,r;L) + theta_bar(x0,r;n), rhs = sum_i r d_r theta_bar(x_i, 1.4 r).
ConeSplitting cone_splitting_check(const FieldCache& cache, const KernelProfile& k, const std::vector<Vec>& points,
                                   double r, double alpha);

//! Every scalar a density table row carries.
struct DensityProbe {
    Vec x;
    double r = 0.0;
    double theta = 0.0;
    double theta_bar = 0.0;
    double theta_L = 0.0;
    double theta_radial = 0.0;
    double theta_angular = 0.0;
    double theta_perp = 0.0;
    double dtheta_formula = 0.0;
    double dtheta_fd = 0.0;
    Vec gradient;
    QTensor q;
    Projector plane;
    double deficit = 0.0;
};

DensityProbe density_probe(const FieldCache& cache, const KernelProfile& k, const Vec& x, double r);

//! Angular and radial energies with the L-cutoff kernel rho_hat_r(y - x; L) in place of rho_r.
struct HattedPartials {
    double angular = 0.0;
    double radial = 0.0;
};
HattedPartials hatted_partials(const FieldCache& cache, const KernelProfile& k, const Vec& x, double r,
                               const Projector& L);

//! Largest r with the kernel support of scale r inside the box around x (0 outside).
double admissible_radius(const GridDomain& d, const KernelProfile& k, const Vec& x);

std::string density_csv_header(int m);
std::string density_csv_row(const DensityProbe& p);

//! Measured constants of theta(x,r) <= c theta_bar(x,r) <= C theta(x, support radius).
struct SandwichConstants {
    double c_lower = 0.0;
    double C_upper = 0.0;
    int probes = 0;
};

SandwichConstants sandwich_constants(const FieldCache& cache, const KernelProfile& k,
                                     const std::vector<std::pair<Vec, double>>& probes);

} // namespace glhm
