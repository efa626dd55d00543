#pragma once

#include "glhm/density.hpp"

#include <string>
#include <utility>
#include <vector>

namespace glhm {

//! Knobs of the decomposition. lambda <= 0 means "use the total energy of the field".
struct DecompConfig {
    double delta = 0.25;
    double delta1 = 0.05;
    double delta2 = 0.35;
    double eps0 = 1.0;
    double lambda = 0.0;
    //! Maximal-condition constant c in lambda = c delta.
    double spawn_c = 0.01;
    //! Sub-concentration probe scale as a fraction of the bubble scale.
    double sub_scale = 0.1;
    //! Children satisfy B(x, ratio r) pairwise disjoint.
    double vitali = 1.0 / 3.0;
    //! Geometric step of the collar ladder.
    double collar_ratio = 1.189207115002721;
    //! Concentration lattice points per probe scale (spacing = probe scale / lattice_density).
    double lattice_density = 2.0;
    //! Sample points for the covering check.
    int cover_samples = 10000;
    unsigned seed = 1;
};

struct DropScale {
    double r = 0.0;
    double drop = 0.0;
    //! Rung index (1-based) of the returned scale.
    int rung = 0;
    //! Theta_bar(x, 2r_k) - Theta_bar(x, r_k) for every visited rung.
    std::vector<double> drops;
};

//! Scans r_k = start 2^{-k}, k = 1..ceil(10 Lambda / delta2), for the first rung with
//! Theta_bar(x,2r) - Theta_bar(x,r) <= delta2/2. Rungs below min_scale are not probed.
DropScale find_drop_scale(const FieldCache& cache, const KernelProfile& k, const Vec& x, double delta2,
                          double lambda, double start, double min_scale);

struct CollarScale {
    double r = 0.0;
    //! False when r d_r Theta_bar > delta already at r_top.
    bool plateau = false;
    //! (r, r d_r Theta_bar) down the ladder.
    std::vector<std::pair<double, double>> ladder;
};

//! Smallest ladder scale r with r' d_r Theta_bar(x, r') <= delta for every ladder r' in [r, r_top].
CollarScale collar_scale(const FieldCache& cache, const KernelProfile& k, const Vec& x, double r_top,
                         double delta, double ratio, double min_scale);

struct RefineResult {
    Vec x;
    bool converged = false;
    int iterations = 0;
    //! |Omega| at the start and after every accepted step.
    std::vector<double> omega;
    //! |Pi_perp grad Theta_bar| r / Theta_bar at x.
    double residual = 0.0;
};

struct RefineOptions {
    double tol = 1e-6;
    int max_iter = 50;
    //! LeftBasin once |x - x0| exceeds basin * r.
    double basin = 0.5;
};

//! Damped iteration x <- x + gamma (r / Theta_bar) Omega(x), Omega(z) = r Pi_{L perp} Pi_perp_{z,r} grad Theta_bar(z, r),
//! with L the best plane at (x0, r) unless given. Steps move only in L perp.
RefineResult refine_center(const FieldCache& cache, const KernelProfile& k, const Vec& x0, double r,
                           const RefineOptions& opt = {});
RefineResult refine_center(const FieldCache& cache, const KernelProfile& k, const Vec& x0, double r,
                           const Projector& L, const RefineOptions& opt = {});

//! T_r sampled over a lattice on L_A: point(i) = p + t_i + graph(i).
struct SubmanifoldGraph {
    double r = 0.0;
    Vec p;
    Projector L_A;
    double spacing = 0.0;
    //! Lattice coordinates along L_A (rank 1: one column entry per node; rank 0: a single empty row).
    std::vector<Vec> lattice;
    std::vector<Vec> graph;
    std::vector<Vec> points;
    std::vector<Projector> best_planes;
    std::vector<Projector> tangent;
    //! |d^2 graph| per node (finite differences), zero at the lattice ends.
    std::vector<double> second_fundamental;
    std::vector<double> mean_curvature;
    std::vector<bool> converged;
    std::vector<bool> copied;
    //! max over nodes of |t| + |grad t| + r |grad^2 t|.
    double graph_norm = 0.0;
    //! graph_norm / sqrt(delta) when delta is supplied to the fit.
    double graph_constant = 0.0;
    //! max || Pi_T - Pi_{x,r} ||.
    double tangent_plane_gap = 0.0;

    std::size_t size() const { return points.size(); }
};

struct SubmanifoldSeed {
    const SubmanifoldGraph* graph = nullptr;
    //! Collar per seed node; nodes with r <= collar copy the seed point.
    std::vector<double> collar;
};

//! Fits T_r over L_A cap B(p, half_length), lattice spacing <= r/4, restricted to probes that fit.
SubmanifoldGraph fit_submanifold(const FieldCache& cache, const KernelProfile& k, const Vec& p,
                                 const Projector& L_A, double half_length, double r, double delta,
                                 const SubmanifoldSeed& seed = {}, const RefineOptions& opt = {});

struct ClauseResult {
    std::string name;
    bool pass = false;
    double worst = 0.0;
    double bound = 0.0;
    Vec witness;
    std::string note;
};

struct AnnularRegion {
    Vec p;
    double radius = 0.0;
    Projector L_A;
    SubmanifoldGraph graph;
    std::vector<double> collar;
};

struct PredicateReport {
    std::vector<ClauseResult> clauses;
    bool all_pass() const;
    const ClauseResult& find(const std::string& name) const;
};

//! (a1)-(a3) on the lattice. Scales in (a2) run over [collar, r_top] with r_top the largest probe
//! that fits at each point, capped at 2 radius.
PredicateReport check_annular(const FieldCache& cache, const KernelProfile& k, const AnnularRegion& A, double delta,
                              double eps0);

struct SubBall {
    Vec x;
    double r = 0.0;
};

//! (b1), (b3), (b4) for B(p, radius) minus the sub-balls; (b2) is reported as skipped.
PredicateReport check_bubble(const FieldCache& cache, const KernelProfile& k, const Vec& p, double radius,
                             const Projector& L, const std::vector<SubBall>& subs, double delta, double delta2,
                             double eps0);

enum class RegionKind { annular, bubble, regular, junk };
const char* region_name(RegionKind k);

struct TreeNode {
    int id = 0;
    int parent = -1;
    int depth = 0;
    RegionKind kind = RegionKind::regular;
    Vec center;
    double radius = 0.0;
    Projector plane;
    std::vector<int> children;
    //! Annular nodes: core points and their collars.
    std::vector<Vec> core;
    std::vector<double> collar;
    //! Bubble nodes: sub-balls cut out of the region.
    std::vector<SubBall> holes;
    //! Bubble scale (collar at the spawning point) for bubble nodes.
    double scale = 0.0;
    //! Energy of the region (ball minus holes, or minus collars).
    double energy = 0.0;
    //! Half the perpendicular gradient energy on the slice through the center (m = 3), the
    //! gradient part of the region energy (m = 2).
    double slice_energy = 0.0;
    double slice_penalty = 0.0;
    std::vector<std::pair<std::string, double>> diagnostics;
    std::vector<ClauseResult> predicates;
    std::string note;
};

struct DecompositionTree {
    DecompConfig config;
    double lambda = 0.0;
    int depth_bound = 0;
    bool depth_exceeded = false;
    double junk_volume = 0.0;
    int max_depth = 0;
    double cover_fraction = 0.0;
    int uncovered = 0;
    std::vector<TreeNode> nodes;

    int count(RegionKind k) const;
    std::vector<int> leaves() const;
    //! Whether y lies in the region of some node, with tolerance tol on every boundary.
    bool covered(const Vec& y, double tol) const;
    std::string to_json() const;
    std::string leaf_csv() const;
};

//! Recursive decomposition of B(p, radius).
DecompositionTree decompose(const FieldCache& cache, const KernelProfile& k, const Vec& p, double radius,
                            const DecompConfig& cfg);

struct EnergySplit {
    double E_L = 0.0;
    double E_alpha = 0.0;
    double E_n = 0.0;
    double E_alpha_hat = 0.0;
    double E_n_hat = 0.0;
    //! Nodes where the hatted value exceeded the plain one.
    int hat_violations = 0;
};

//! Lattice quadrature over T_r of psi_T times the partial energies, with L = L_{x,r}.
EnergySplit energy_split(const FieldCache& cache, const KernelProfile& k, const SubmanifoldGraph& graph,
                         const std::vector<double>& collar, double unit);

//! int e over B(p, radius) minus the tubes B(T, sigma collar) around the lattice points.
double annulus_energy(const FieldCache& cache, const AnnularRegion& A, double sigma);

//! Half the perpendicular gradient energy on (c + L perp) cap B(c, radius) minus holes, and the
//! penalty on the same set. Exact on grid-aligned slices, trilinear otherwise.
std::pair<double, double> slice_energy(const FieldCache& cache, const Vec& c, double radius, const Projector& L,
                                       const std::vector<SubBall>& holes);

//! int e over B(c, radius) minus holes.
double ball_energy(const FieldCache& cache, const Vec& c, double radius, const std::vector<SubBall>& holes);

} // namespace glhm
