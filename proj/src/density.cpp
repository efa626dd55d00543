#include "glhm/density.hpp"

#include "glhm/detail/stencil.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

namespace glhm {

namespace {

inline int packed_index(int m, int a, int b)
{
    if (a > b) std::swap(a, b);
    // rows of the upper triangle, row a has m - a entries
    return a * m - a * (a - 1) / 2 + (b - a);
}

void require_support(const GridDomain& d, const KernelProfile& k, const Vec& x, double r)
{
    if (x.size() != d.m) throw InvalidArgument("probe dimension does not match grid");
    if (!(r > 0.0)) throw InvalidArgument("probe radius must be positive");
    if (k.m() != d.m) throw InvalidArgument("kernel dimension does not match grid");
    if (!d.contains_ball(x, k.support_radius(r)))
        throw SupportOutOfDomain("kernel support of radius " + std::to_string(k.support_radius(r)) +
                                 " leaves the box");
}

// Visits nodes in the kernel support: f(node, d, rho_r, rhodot_r, weight) with d = y - x.
template <typename F>
void scan_support(const GridDomain& dom, const KernelProfile& k, const Vec& x, double r, F&& f)
{
    const int m = dom.m;
    const double R = k.R();
    const double tmax = R + 2.0;
    const double inv2r2 = 1.0 / (2.0 * r * r);
    const double scale = k.c() * std::pow(r, -m);
    std::array<int, 3> lo, hi;
    dom.node_window(x, k.support_radius(r), lo, hi);
    std::array<std::vector<double>, 3> dd, ex;
    for (int a = 0; a < m; ++a) {
        for (int i = lo[a]; i <= hi[a]; ++i) {
            const double v = dom.coord(i) - x[a];
            dd[a].push_back(v);
            ex[a].push_back(std::exp(-v * v * inv2r2));
        }
    }
    const int n = dom.n;
    double d[3] = {0.0, 0.0, 0.0};
    auto visit = [&](std::size_t node, const std::array<int, 3>& ijk, double t, double e) {
        if (t >= tmax) return;
        double rho = scale * e;
        double drho = -rho;
        if (t > R) {
            const double u = 0.5 * (t - R);
            const double S = 1.0 - smoothstep5(u);
            const double dS = -smoothstep5_d1(u);
            drho = scale * e * (-S + 0.5 * dS);
            rho *= S;
        }
        f(node, d, rho, drho, detail::node_weight(dom, ijk));
    };
    if (m == 2) {
        for (int i = lo[0]; i <= hi[0]; ++i) {
            const int ii = i - lo[0];
            d[0] = dd[0][ii];
            for (int j = lo[1]; j <= hi[1]; ++j) {
                const int jj = j - lo[1];
                d[1] = dd[1][jj];
                const double t = (d[0] * d[0] + d[1] * d[1]) * inv2r2;
                visit(static_cast<std::size_t>(i) * n + j, {i, j, 0}, t, ex[0][ii] * ex[1][jj]);
            }
        }
    } else {
        for (int i = lo[0]; i <= hi[0]; ++i) {
            const int ii = i - lo[0];
            d[0] = dd[0][ii];
            for (int j = lo[1]; j <= hi[1]; ++j) {
                const int jj = j - lo[1];
                d[1] = dd[1][jj];
                const double eij = ex[0][ii] * ex[1][jj];
                const double t01 = (d[0] * d[0] + d[1] * d[1]) * inv2r2;
                if (t01 >= tmax) continue;
                const std::size_t row = (static_cast<std::size_t>(i) * n + j) * n;
                for (int l = lo[2]; l <= hi[2]; ++l) {
                    const int ll = l - lo[2];
                    d[2] = dd[2][ll];
                    visit(row + l, {i, j, l}, t01 + d[2] * d[2] * inv2r2, eij * ex[2][ll]);
                }
            }
        }
    }
}

QTensor eigen_split(const Vec& x, double r, const Mat& Q)
{
    const int m = static_cast<int>(Q.rows());
    QTensor q;
    q.x = x;
    q.r = r;
    q.Q = 0.5 * (Q + Q.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(q.Q);
    q.eigenvalues.resize(m);
    q.eigenvectors.resize(m, m);
    for (int i = 0; i < m; ++i) {
        q.eigenvalues[i] = es.eigenvalues()[m - 1 - i];
        Vec v = es.eigenvectors().col(m - 1 - i);
        for (int j = 0; j < m; ++j) {
            if (std::abs(v[j]) > 1e-12) {
                if (v[j] < 0.0) v = -v;
                break;
            }
        }
        q.eigenvectors.col(i) = v;
    }
    // plane = span(e_3..e_m); it is pinned down only when lambda_2 and lambda_3 separate
    if (m >= 3) {
        const double l1 = std::max(q.eigenvalues[0], 0.0);
        q.unique = (q.eigenvalues[1] - q.eigenvalues[2]) > 1e-6 * l1;
    }
    return q;
}

} // namespace

FieldCache::FieldCache(const VectorField& u, double eps, const SphereTargetd& target)
    : domain_(u.domain), eps_(eps)
{
    if (!(eps > 0.0)) throw InvalidArgument("eps must be positive");
    const int m = domain_.m;
    const int J = u.J;
    const int P = packed();
    const std::size_t N = domain_.num_nodes();
    G_.assign(N * P, 0.0);
    e_.assign(N, 0.0);
    pen_.assign(N, 0.0);
    const double inv_eps2 = 1.0 / (eps * eps);
    std::vector<double> grad(static_cast<std::size_t>(m * J));
    detail::for_each_node(domain_, [&](std::size_t idx, const std::array<int, 3>& ijk) {
        detail::node_gradient(u, idx, ijk, grad.data());
        double* g = G_.data() + idx * P;
        double tr = 0.0;
        for (int a = 0; a < m; ++a)
            for (int b = a; b < m; ++b) {
                double s = 0.0;
                for (int c = 0; c < J; ++c) s += grad[a * J + c] * grad[b * J + c];
                g[packed_index(m, a, b)] = s;
                if (a == b) tr += s;
            }
        double F = 0.0;
        if (J == 3) {
            const double* v = u.at(idx);
            const double nrm = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
            F = target.profile((nrm - 1.0) * (nrm - 1.0));
        }
        pen_[idx] = F * inv_eps2;
        e_[idx] = 0.5 * tr + pen_[idx];
    });
}

Mat FieldCache::gram(std::size_t node) const
{
    const int m = this->m();
    Mat G(m, m);
    const double* g = this->G(node);
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) G(a, b) = g[packed_index(m, a, b)];
    return G;
}

double FieldCache::total_energy() const
{
    double s = 0.0;
    detail::for_each_node(domain_, [&](std::size_t idx, const std::array<int, 3>& ijk) {
        s += detail::node_weight(domain_, ijk) * e_[idx];
    });
    return s;
}

ProbeMoments probe_moments(const FieldCache& cache, const KernelProfile& k, const Vec& x, double r)
{
    const GridDomain& dom = cache.domain();
    require_support(dom, k, x, r);
    const int m = dom.m;
    const int P = cache.packed();
    ProbeMoments pm;
    pm.x = x;
    pm.r = r;
    std::array<double, 6> gsum{};
    std::array<double, 3> sp{};
    std::array<double, 81> four{};
    double mass = 0.0, en = 0.0, pen = 0.0, rad = 0.0;
    scan_support(dom, k, x, r, [&](std::size_t node, const double* d, double rho, double drho, double w) {
        const double* g = cache.G(node);
        const double wr = w * rho;
        const double wd = w * drho;
        mass += wr;
        en += wr * cache.e(node);
        pen += wr * cache.pen(node);
        double Gd[3] = {0.0, 0.0, 0.0};
        for (int a = 0; a < m; ++a)
            for (int b = 0; b < m; ++b) Gd[a] += g[packed_index(m, a, b)] * d[b];
        double dGd = 0.0;
        for (int a = 0; a < m; ++a) dGd += d[a] * Gd[a];
        rad += wd * dGd;
        for (int a = 0; a < m; ++a) sp[a] -= wd * Gd[a];
        for (int p = 0; p < P; ++p) gsum[p] += wr * g[p];
        for (int a = 0; a < m; ++a)
            for (int b = 0; b < m; ++b) {
                const double dab = wr * d[a] * d[b];
                for (int c = 0; c < m; ++c)
                    for (int e = 0; e < m; ++e) four[((a * m + b) * m + c) * m + e] += dab * g[packed_index(m, c, e)];
            }
    });
    pm.mass = mass;
    pm.energy = en;
    pm.penalty = pen;
    pm.radial_dot = rad;
    pm.gram.resize(m, m);
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) pm.gram(a, b) = gsum[packed_index(m, a, b)];
    pm.spatial.resize(m);
    for (int a = 0; a < m; ++a) pm.spatial[a] = sp[a];
    pm.fourth.resize(m * m, m * m);
    for (int ab = 0; ab < m * m; ++ab)
        for (int ce = 0; ce < m * m; ++ce) pm.fourth(ab, ce) = four[ab * m * m + ce];
    return pm;
}

double theta_classical(const FieldCache& cache, const Vec& x, double r)
{
    const GridDomain& dom = cache.domain();
    if (x.size() != dom.m) throw InvalidArgument("probe dimension does not match grid");
    if (!(r > 0.0)) throw InvalidArgument("radius must be positive");
    if (!dom.contains_ball(x, r)) throw BallOutOfDomain("ball of radius " + std::to_string(r) + " leaves the box");
    std::array<int, 3> lo, hi;
    dom.node_window(x, r, lo, hi);
    const double r2 = r * r;
    double sum = 0.0;
    detail::for_each_node(dom, [&](std::size_t idx, const std::array<int, 3>& ijk) {
        for (int a = 0; a < dom.m; ++a)
            if (ijk[a] < lo[a] || ijk[a] > hi[a]) return;
        double d2 = 0.0;
        for (int a = 0; a < dom.m; ++a) {
            const double v = dom.coord(ijk[a]) - x[a];
            d2 += v * v;
        }
        if (d2 <= r2) sum += detail::node_weight(dom, ijk) * cache.e(idx);
    });
    return std::pow(r, 2 - dom.m) * sum;
}

double theta_classical(const VectorField& u, double eps, const Vec& x, double r)
{
    return theta_classical(FieldCache(u, eps), x, r);
}

double theta_bar(const FieldCache& cache, const KernelProfile& k, const Vec& x, double r)
{
    const GridDomain& dom = cache.domain();
    require_support(dom, k, x, r);
    double en = 0.0;
    scan_support(dom, k, x, r, [&](std::size_t node, const double*, double rho, double, double w) {
        en += w * rho * cache.e(node);
    });
    return r * r * en;
}

double theta_bar(const VectorField& u, double eps, const KernelProfile& k, const Vec& x, double r)
{
    return theta_bar(FieldCache(u, eps), k, x, r);
}

double partial_from_moments(const ProbeMoments& pm, const Projector& L, Part part)
{
    const int m = static_cast<int>(pm.x.size());
    if (L.dim() != m) throw InvalidArgument("plane dimension does not match probe");
    const Mat& P = L.matrix();
    const Mat Pp = Mat::Identity(m, m) - P;
    if (part == Part::tangential) return pm.r * pm.r * ((P.cwiseProduct(pm.gram)).sum() + 2.0 * pm.penalty);
    // int rho |Pi_perp d|^2 tr(Pi_perp G) and int rho <Pi_perp d, G Pi_perp d>
    double perp = 0.0, radial = 0.0;
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b)
            for (int c = 0; c < m; ++c)
                for (int e = 0; e < m; ++e) {
                    const double M = pm.fourth(a * m + b, c * m + e);
                    perp += Pp(a, b) * Pp(c, e) * M;
                    radial += Pp(c, a) * Pp(e, b) * M;
                }
    switch (part) {
    case Part::radial: return radial;
    case Part::angular: return perp - radial;
    case Part::perp: return perp;
    default: return 0.0;
    }
}

PartialEnergy theta_bar_partial(const FieldCache& cache, const KernelProfile& k, const Vec& x, double r,
                                const Projector& L, Part part)
{
    const auto pm = probe_moments(cache, k, x, r);
    PartialEnergy out;
    out.value = partial_from_moments(pm, L, part);
    if (part == Part::radial || part == Part::angular) {
        const GridDomain& dom = cache.domain();
        const Mat Pp = L.complement().matrix();
        const double h2 = dom.h() * dom.h();
        scan_support(dom, k, x, r, [&](std::size_t, const double* d, double rho, double, double) {
            if (rho == 0.0) return;
            Vec v = Eigen::Map<const Vec>(d, dom.m);
            if ((Pp * v).squaredNorm() < h2) ++out.degenerate_nodes;
        });
    }
    return out;
}

double r_derivative_from_moments(const ProbeMoments& pm)
{
    return -pm.radial_dot + 2.0 * pm.r * pm.r * pm.penalty;
}

RadialDerivative theta_bar_r_derivative(const FieldCache& cache, const KernelProfile& k, const Vec& x,
                                        double r)
{
    const double dr = r / 100.0;
    require_support(cache.domain(), k, x, r + dr);
    RadialDerivative out;
    out.formula = r_derivative_from_moments(probe_moments(cache, k, x, r));
    out.fd = r * (theta_bar(cache, k, x, r + dr) - theta_bar(cache, k, x, r - dr)) / (2.0 * dr);
    return out;
}

double theta_bar_dr(const FieldCache& cache, const KernelProfile& k, const Vec& x, double r)
{
    const GridDomain& dom = cache.domain();
    require_support(dom, k, x, r);
    const int m = dom.m;
    double rad = 0.0, pen = 0.0;
    scan_support(dom, k, x, r, [&](std::size_t node, const double* d, double rho, double drho, double w) {
        const double* g = cache.G(node);
        double dGd = 0.0;
        for (int a = 0; a < m; ++a) {
            dGd += g[packed_index(m, a, a)] * d[a] * d[a];
            for (int b = a + 1; b < m; ++b) dGd += 2.0 * g[packed_index(m, a, b)] * d[a] * d[b];
        }
        rad += w * drho * dGd;
        pen += w * rho * cache.pen(node);
    });
    return -rad + 2.0 * r * r * pen;
}

HattedPartials hatted_partials(const FieldCache& cache, const KernelProfile& k, const Vec& x, double r,
                               const Projector& L)
{
    const GridDomain& dom = cache.domain();
    require_support(dom, k, x, r);
    const int m = dom.m;
    const Mat Pp = L.complement().matrix();
    const double inv2r2 = 1.0 / (2.0 * r * r);
    HattedPartials out;
    scan_support(dom, k, x, r, [&](std::size_t node, const double* d, double rho, double, double w) {
        if (rho == 0.0) return;
        Vec v = Pp * Eigen::Map<const Vec>(d, m);
        const double v2 = v.squaredNorm();
        const double cut = cutoff_psi(k, v2 * inv2r2);
        if (cut == 0.0) return;
        const Mat G = cache.gram(node);
        const double radial = v.dot(G * v);
        const double perp = v2 * (Pp.cwiseProduct(G)).sum();
        out.radial += w * rho * cut * radial;
        out.angular += w * rho * cut * (perp - radial);
    });
    return out;
}

double admissible_radius(const GridDomain& d, const KernelProfile& k, const Vec& x)
{
    double dist = std::numeric_limits<double>::infinity();
    for (int a = 0; a < d.m; ++a) dist = std::min(dist, d.extent - std::abs(x[a]));
    if (dist <= 0.0) return 0.0;
    return dist / std::sqrt(2.0 * (k.R() + 2.0)) * (1.0 - 1e-9);
}

Vec gradient_from_moments(const ProbeMoments& pm) { return pm.spatial; }

SpatialGradient theta_bar_gradient(const FieldCache& cache, const KernelProfile& k, const Vec& x, double r,
                                   const Projector& L)
{
    require_support(cache.domain(), k, x, 2.0 * r);
    const auto pm = probe_moments(cache, k, x, r);
    SpatialGradient out;
    out.gradient = gradient_from_moments(pm);
    out.along_plane = L.apply(out.gradient);
    const double drv = r_derivative_from_moments(pm);
    const double tl = partial_from_moments(probe_moments(cache, k, x, 2.0 * r), L, Part::tangential);
    const double den = drv * tl;
    out.cauchy_schwarz_constant =
        den > 0.0 ? r * r * out.along_plane.squaredNorm() / den : std::numeric_limits<double>::quiet_NaN();
    return out;
}

QTensor q_from_moments(const ProbeMoments& pm) { return eigen_split(pm.x, pm.r, pm.r * pm.r * pm.gram); }

QTensor q_tensor(const FieldCache& cache, const KernelProfile& k, const Vec& x, double r)
{
    return q_from_moments(probe_moments(cache, k, x, r));
}

BestPlane best_plane_from_moments(const ProbeMoments& pm)
{
    BestPlane bp;
    bp.q = q_from_moments(pm);
    const int m = static_cast<int>(pm.x.size());
    if (m <= 2) {
        bp.plane = Projector::zero(m);
    } else {
        bp.plane = Projector::from_orthonormal(bp.q.eigenvectors.rightCols(m - 2));
    }
    bp.unique = bp.q.unique;
    bp.theta_L = partial_from_moments(pm, bp.plane, Part::tangential);
    return bp;
}

BestPlane best_plane(const FieldCache& cache, const KernelProfile& k, const Vec& x, double r)
{
    return best_plane_from_moments(probe_moments(cache, k, x, r));
}

SymmetryResult symmetry_classify(const FieldCache& cache, const KernelProfile& k, const Vec& x, double r,
                                 double delta)
{
    const auto pm = probe_moments(cache, k, x, r);
    const auto bp = best_plane_from_moments(pm);
    SymmetryResult out;
    out.plane = bp.plane;
    out.deficit = bp.theta_L + partial_from_moments(pm, bp.plane, Part::radial);
    out.is_symmetric = out.deficit <= delta;
    return out;
}

bool linearly_independent(const std::vector<Vec>& points, double r, double alpha)
{
    if (points.empty()) return false;
    const Vec& x0 = points[0];
    std::vector<Vec> span;
    for (std::size_t i = 1; i < points.size(); ++i) {
        const Vec v = points[i] - x0;
        if (v.norm() >= r) return false;
        Vec res = v;
        if (!span.empty()) res = v - Projector::span(span, static_cast<int>(x0.size())).apply(v);
        if (res.norm() < alpha * r) return false;
        span.push_back(v);
    }
    return true;
}

ConeSplitting cone_splitting_check(const FieldCache& cache, const KernelProfile& k, const std::vector<Vec>& points,
                                   double r, double alpha)
{
    if (!linearly_independent(points, r, alpha))
        throw NotIndependent("points are not alpha-linearly independent at scale r");
    const int m = cache.m();
    for (const auto& p : points) require_support(cache.domain(), k, p, 1.4 * r * 1.01);
    std::vector<Vec> dirs;
    for (std::size_t i = 1; i < points.size(); ++i) dirs.push_back(points[i] - points[0]);
    ConeSplitting out;
    out.plane = dirs.empty() ? Projector::zero(m) : Projector::span(dirs, m);
    const auto pm = probe_moments(cache, k, points[0], r);
    out.lhs = partial_from_moments(pm, out.plane, Part::tangential) + partial_from_moments(pm, out.plane, Part::radial);
    for (const auto& p : points) out.rhs += r_derivative_from_moments(probe_moments(cache, k, p, 1.4 * r));
    if (out.rhs > 0.0)
        out.ratio = out.lhs / out.rhs;
    else
        out.ratio = out.lhs > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    return out;
}

DensityProbe density_probe(const FieldCache& cache, const KernelProfile& k, const Vec& x, double r)
{
    DensityProbe p;
    p.x = x;
    p.r = r;
    const auto pm = probe_moments(cache, k, x, r);
    p.theta = theta_classical(cache, x, r);
    p.theta_bar = pm.theta_bar();
    const auto bp = best_plane_from_moments(pm);
    p.q = bp.q;
    p.plane = bp.plane;
    p.theta_L = bp.theta_L;
    p.theta_radial = partial_from_moments(pm, bp.plane, Part::radial);
    p.theta_angular = partial_from_moments(pm, bp.plane, Part::angular);
    p.theta_perp = partial_from_moments(pm, bp.plane, Part::perp);
    p.deficit = p.theta_L + p.theta_radial;
    const auto rd = theta_bar_r_derivative(cache, k, x, r);
    p.dtheta_formula = rd.formula;
    p.dtheta_fd = rd.fd;
    p.gradient = gradient_from_moments(pm);
    return p;
}

std::string density_csv_header(int m)
{
    std::ostringstream os;
    for (int a = 0; a < m; ++a) os << "x" << a + 1 << ",";
    os << "r,theta,theta_bar,dtheta_formula,dtheta_fd";
    for (int a = 0; a < m; ++a) os << ",lambda" << a + 1;
    os << ",theta_L,deficit";
    for (int a = 0; a < m * (m - 2); ++a) os << ",plane" << a + 1;
    return os.str();
}

std::string density_csv_row(const DensityProbe& p)
{
    const int m = static_cast<int>(p.x.size());
    std::ostringstream os;
    os << std::setprecision(12);
    for (int a = 0; a < m; ++a) os << p.x[a] << ",";
    os << p.r << "," << p.theta << "," << p.theta_bar << "," << p.dtheta_formula << "," << p.dtheta_fd;
    for (int a = 0; a < m; ++a) os << "," << p.q.eigenvalues[a];
    os << "," << p.theta_L << "," << p.deficit;
    if (m > 2) {
        const Mat B = p.plane.basis();
        for (int c = 0; c < B.cols(); ++c)
            for (int a = 0; a < m; ++a) os << "," << B(a, c);
    }
    return os.str();
}

SandwichConstants sandwich_constants(const FieldCache& cache, const KernelProfile& k,
                                     const std::vector<std::pair<Vec, double>>& probes)
{
    SandwichConstants out;
    for (const auto& [x, r] : probes) {
        const double tb = theta_bar(cache, k, x, r);
        const double lo = theta_classical(cache, x, r);
        const double hi = theta_classical(cache, x, k.support_radius(r));
        if (tb > 0.0) out.c_lower = std::max(out.c_lower, lo / tb);
        if (hi > 0.0) out.C_upper = std::max(out.C_upper, tb / hi);
        ++out.probes;
    }
    return out;
}

} // namespace glhm
