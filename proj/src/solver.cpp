#include "glhm/solver.hpp"

#include "glhm/detail/stencil.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace glhm {

namespace {

void require_target_field(const VectorField& u)
{
    if (u.J != 3) throw InvalidArgument("sphere target needs J = 3");
}

// Calls f(idx) for every interior node in row-major order.
template <typename F>
void for_each_interior(const GridDomain& d, F&& f)
{
    const int n = d.n;
    if (d.m == 2) {
        for (int i = 1; i < n - 1; ++i) {
            const std::size_t row = static_cast<std::size_t>(i) * n;
            for (int j = 1; j < n - 1; ++j) f(row + j);
        }
    } else {
        for (int i = 1; i < n - 1; ++i)
            for (int j = 1; j < n - 1; ++j) {
                const std::size_t row = (static_cast<std::size_t>(i) * n + j) * n;
                for (int k = 1; k < n - 1; ++k) f(row + k);
            }
    }
}

inline double node_penalty(const SphereTargetd& target, const double* v)
{
    const double nrm = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    const double d = nrm - 1.0;
    return target.profile(d * d);
}

inline double node_gradient_factor(const SphereTargetd& target, const double* v)
{
    const double nrm = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    if (nrm == 0.0) return 0.0;
    return target.gradient_factor(nrm);
}

} // namespace

std::vector<double> energy_density(const VectorField& u, double eps, const SphereTargetd& target)
{
    require_target_field(u);
    const GridDomain& d = u.domain;
    std::vector<double> e(d.num_nodes());
    const double inv_eps2 = 1.0 / (eps * eps);
    double grad[9];
    detail::for_each_node(d, [&](std::size_t idx, const std::array<int, 3>& ijk) {
        detail::node_gradient(u, idx, ijk, grad);
        double g2 = 0.0;
        for (int q = 0; q < d.m * 3; ++q) g2 += grad[q] * grad[q];
        e[idx] = 0.5 * g2 + node_penalty(target, u.at(idx)) * inv_eps2;
    });
    return e;
}

double energy(const VectorField& u, double eps, const SphereTargetd& target)
{
    const auto e = energy_density(u, eps, target);
    double sum = 0.0;
    detail::for_each_node(u.domain, [&](std::size_t idx, const std::array<int, 3>& ijk) {
        sum += detail::node_weight(u.domain, ijk) * e[idx];
    });
    return sum;
}

double discrete_energy(const VectorField& u, double eps, const SphereTargetd& target)
{
    require_target_field(u);
    const GridDomain& d = u.domain;
    const double h = d.h();
    const double inv_eps2 = 1.0 / (eps * eps);
    double sum = 0.0;
    detail::for_each_node(d, [&](std::size_t idx, const std::array<int, 3>& ijk) {
        const double w = detail::node_weight(d, ijk);
        const double* a = u.at(idx);
        sum += w * node_penalty(target, a) * inv_eps2;
        for (int k = 0; k < d.m; ++k) {
            if (ijk[k] == d.n - 1) continue;
            // edge weight: transverse trapezoid factors only
            double we = d.cell_volume();
            for (int q = 0; q < d.m; ++q)
                if (q != k && (ijk[q] == 0 || ijk[q] == d.n - 1)) we *= 0.5;
            const double* b = a + d.stride(k) * 3;
            double diff2 = 0.0;
            for (int c = 0; c < 3; ++c) diff2 += (b[c] - a[c]) * (b[c] - a[c]);
            sum += we * 0.5 * diff2 / (h * h);
        }
    });
    return sum;
}

VectorField el_residual(const VectorField& u, double eps, const SphereTargetd& target)
{
    require_target_field(u);
    const GridDomain& d = u.domain;
    VectorField r(d, 3);
    const double inv_h2 = 1.0 / (d.h() * d.h());
    const double inv_eps2 = 1.0 / (eps * eps);
    std::size_t s[3];
    for (int k = 0; k < d.m; ++k) s[k] = d.stride(k) * 3;
    for_each_interior(d, [&](std::size_t idx) {
        const double* a = u.at(idx);
        const double fk = node_gradient_factor(target, a);
        double* out = r.at(idx);
        for (int c = 0; c < 3; ++c) {
            double lap = -2.0 * d.m * a[c];
            for (int k = 0; k < d.m; ++k) lap += a[c + s[k]] + *(a + c - s[k]);
            out[c] = lap * inv_h2 - fk * a[c] * inv_eps2;
        }
    });
    return r;
}

double el_residual_sup(const VectorField& u, double eps, const SphereTargetd& target)
{
    const auto r = el_residual(u, eps, target);
    double sup = 0.0;
    for (double v : r.values) sup = std::max(sup, std::abs(v));
    return sup * eps * eps;
}

double relax_step(const GridDomain& d, double eps, double step_factor, const SphereTargetd& target)
{
    const double h2 = d.h() * d.h();
    const double nominal = step_factor * std::min(h2 / (2.0 * d.m), eps * eps / 4.0);
    const double stable = 1.9 / (4.0 * d.m / h2 + target.curvature_bound() / (eps * eps));
    return std::min(nominal, stable);
}

RelaxResult relax(const VectorField& init, const SolverConfig& cfg, const SphereTargetd& target)
{
    require_target_field(init);
    if (!(cfg.eps > 0.0)) throw InvalidArgument("eps must be positive");
    if (cfg.max_iter < 0) throw InvalidArgument("max_iter must be nonnegative");
    const GridDomain& d = init.domain;
    RelaxResult res;
    res.tau = relax_step(d, cfg.eps, cfg.step_factor, target);
    const double tau = res.tau;
    const double inv_h2 = 1.0 / (d.h() * d.h());
    const double inv_eps2 = 1.0 / (cfg.eps * cfg.eps);
    const double eps2 = cfg.eps * cfg.eps;
    std::size_t s[3] = {0, 0, 0};
    for (int k = 0; k < d.m; ++k) s[k] = d.stride(k) * 3;
    const int m = d.m;
    const bool has_mask = !cfg.frozen.empty();
    if (has_mask && cfg.frozen.size() != d.num_nodes()) throw InvalidArgument("frozen mask size mismatch");
    const unsigned char* mask = has_mask ? cfg.frozen.data() : nullptr;

    VectorField cur = init;
    VectorField next = init;
    auto record = [&](int it) {
        const double E = discrete_energy(cur, cfg.eps, target);
        if (!res.energy_trace.empty())
            res.max_energy_increase = std::max(res.max_energy_increase, E - res.energy_trace.back().second);
        res.energy_trace.emplace_back(it, E);
    };
    res.max_energy_increase = -std::numeric_limits<double>::infinity();
    record(0);

    int it = 0;
    double sup = 0.0, held = 0.0;
    for (;; ++it) {
        sup = 0.0;
        held = 0.0;
        const double* src = cur.values.data();
        double* dst = next.values.data();
        for_each_interior(d, [&](std::size_t idx) {
            const double* a = src + idx * 3;
            const double nrm2 = a[0] * a[0] + a[1] * a[1] + a[2] * a[2];
            const double fk = nrm2 > 0.0 ? target.gradient_factor(std::sqrt(nrm2)) : 0.0;
            double* o = dst + idx * 3;
            const unsigned char held_bits = mask ? mask[idx] : 0;
            for (int c = 0; c < 3; ++c) {
                const bool fixed = held_bits & (1u << c);
                double lap = -2.0 * m * a[c] + a[c + s[0]] + *(a + c - s[0]) + a[c + s[1]] + *(a + c - s[1]);
                if (m == 3) lap += a[c + s[2]] + *(a + c - s[2]);
                const double r = lap * inv_h2 - fk * a[c] * inv_eps2;
                if (fixed) {
                    held = std::max(held, std::abs(r));
                    o[c] = a[c];
                } else {
                    sup = std::max(sup, std::abs(r));
                    o[c] = a[c] + tau * r;
                }
            }
        });
        sup *= eps2;
        if (it == 0) res.initial_residual = sup;
        if (sup <= cfg.tol || it >= cfg.max_iter) break;
        std::swap(cur.values, next.values);
        if (cfg.energy_interval > 0 && (it + 1) % cfg.energy_interval == 0) record(it + 1);
    }
    res.iterations = it;
    res.residual = sup;
    res.converged = sup <= cfg.tol;
    res.frozen_residual = held * eps2;
    if (res.energy_trace.back().first != it) record(it);
    if (res.energy_trace.size() < 2) res.max_energy_increase = 0.0;
    cur.eps = cfg.eps;
    cur.residual = sup;
    res.field = std::move(cur);
    return res;
}

Vec BumpField::value(const Vec& y) const
{
    const double q = (y - center).squaredNorm() / (width * width);
    if (q >= 1.0) return Vec::Zero(y.size());
    const double b = (1.0 - q) * (1.0 - q);
    return amplitude * (b * b);
}

Mat BumpField::jacobian(const Vec& y) const
{
    const Vec dy = y - center;
    const double q = dy.squaredNorm() / (width * width);
    if (q >= 1.0) return Mat::Zero(y.size(), y.size());
    const double one = 1.0 - q;
    // d/dy_a (1-q)^4 = -4 (1-q)^3 * 2 dy_a / w^2
    const Vec g = (-8.0 * one * one * one / (width * width)) * dy;
    return g * amplitude.transpose();
}

double bump_gradient_sup(const GridDomain& d, const BumpField& xi)
{
    double sup = 0.0;
    for (std::size_t idx = 0; idx < d.num_nodes(); ++idx) {
        const Vec y = d.position(idx);
        if ((y - xi.center).norm() >= xi.width) continue;
        sup = std::max(sup, xi.jacobian(y).norm());
    }
    return sup;
}

double stationary_residual(const VectorField& u, double eps, const SphereTargetd& target,
                           const BumpField& xi)
{
    require_target_field(u);
    const GridDomain& d = u.domain;
    if (xi.center.size() != d.m || xi.amplitude.size() != d.m)
        throw InvalidArgument("test field dimension does not match grid");
    if (!d.contains_ball(xi.center, xi.width + d.h()))
        throw SupportViolation("test field support reaches the boundary");
    std::array<int, 3> lo, hi;
    d.node_window(xi.center, xi.width, lo, hi);
    const double inv_eps2 = 1.0 / (eps * eps);
    const double w = d.cell_volume();
    double grad[9];
    double sum = 0.0;
    Vec y(d.m);
    auto visit = [&](const std::array<int, 3>& ijk) {
        std::size_t idx = 0;
        for (int k = 0; k < d.m; ++k) {
            idx = idx * d.n + ijk[k];
            y[k] = d.coord(ijk[k]);
        }
        const Vec dy = y - xi.center;
        if (dy.squaredNorm() >= xi.width * xi.width) return;
        const Mat Jx = xi.jacobian(y);
        detail::node_gradient(u, idx, ijk, grad);
        double g2 = 0.0;
        for (int q = 0; q < d.m * 3; ++q) g2 += grad[q] * grad[q];
        const double e = 0.5 * g2 + node_penalty(target, u.at(idx)) * inv_eps2;
        double term = e * Jx.trace();
        for (int a = 0; a < d.m; ++a)
            for (int b = 0; b < d.m; ++b) {
                double gab = 0.0;
                for (int c = 0; c < 3; ++c) gab += grad[a * 3 + c] * grad[b * 3 + c];
                term -= gab * Jx(a, b);
            }
        sum += w * term;
    };
    if (d.m == 2) {
        for (int i = lo[0]; i <= hi[0]; ++i)
            for (int j = lo[1]; j <= hi[1]; ++j) visit({i, j, 0});
    } else {
        for (int i = lo[0]; i <= hi[0]; ++i)
            for (int j = lo[1]; j <= hi[1]; ++j)
                for (int k = lo[2]; k <= hi[2]; ++k) visit({i, j, k});
    }
    return std::abs(sum);
}

Eigen::Vector3d inverse_stereographic(std::complex<double> w)
{
    const double a = std::norm(w);
    if (!std::isfinite(a)) return {0.0, 0.0, 1.0};
    return {2.0 * w.real() / (a + 1.0), 2.0 * w.imag() / (a + 1.0), (a - 1.0) / (a + 1.0)};
}

VectorField synth_complex_map(const GridDomain& d,
                              const std::function<std::complex<double>(std::complex<double>)>& w)
{
    if (d.m != 2) throw InvalidArgument("complex-map fixtures need m = 2");
    VectorField u(d, 3);
    for (std::size_t idx = 0; idx < d.num_nodes(); ++idx) {
        const auto ijk = d.unravel(idx);
        const Eigen::Vector3d v = inverse_stereographic(w({d.coord(ijk[0]), d.coord(ijk[1])}));
        std::copy(v.data(), v.data() + 3, u.at(idx));
    }
    return u;
}

VectorField synth_bubble(const GridDomain& d, const Vec& center, double sigma, int degree)
{
    if (!(sigma > 0.0)) throw InvalidArgument("bubble scale must be positive");
    if (degree == 0) throw InvalidArgument("bubble degree must be nonzero");
    if (center.size() != 2) throw InvalidArgument("bubble center must be 2D");
    const std::complex<double> c(center[0], center[1]);
    return synth_complex_map(d, [=](std::complex<double> z) {
        std::complex<double> q = (z - c) / sigma;
        if (degree < 0) q = std::conj(q);
        return std::pow(q, std::abs(degree));
    });
}

VectorField synth_two_bubble(const GridDomain& d, const Vec& c1, double sigma1, const Vec& c2, double sigma2)
{
    if (!(sigma1 > 0.0) || !(sigma2 > 0.0)) throw InvalidArgument("bubble scales must be positive");
    const std::complex<double> z1(c1[0], c1[1]), z2(c2[0], c2[1]);
    const double a = std::abs(z2 - z1) / sigma1;
    const double b = sigma2 * std::sqrt(1.0 + a * a);
    return synth_complex_map(d, [=](std::complex<double> z) {
        const std::complex<double> dz = z - z2;
        if (dz == 0.0) return std::complex<double>(INFINITY, 0.0);
        return (z - z1) / sigma1 + b / dz;
    });
}

VectorField synth_bubble_tube(const GridDomain& d, const Projector& axis, double sigma, const Vec& center)
{
    if (d.m != 3) throw InvalidArgument("bubble tube needs m = 3");
    if (axis.rank() != 1 || axis.dim() != 3) throw InvalidArgument("tube axis must be a rank-1 projector in R^3");
    if (!(sigma > 0.0)) throw InvalidArgument("tube scale must be positive");
    const Eigen::Vector3d a = axis.basis().col(0);
    const Projector perp = axis.complement();
    Eigen::Vector3d e1 = perp.matrix() * Eigen::Vector3d::UnitX();
    if (e1.norm() < 1e-8) e1 = perp.matrix() * Eigen::Vector3d::UnitY();
    e1.normalize();
    const Eigen::Vector3d e2 = a.cross(e1);
    VectorField u(d, 3);
    for (std::size_t idx = 0; idx < d.num_nodes(); ++idx) {
        const Eigen::Vector3d y = d.position(idx) - center;
        const std::complex<double> z(y.dot(e1), y.dot(e2));
        const Eigen::Vector3d v = inverse_stereographic(z / sigma);
        std::copy(v.data(), v.data() + 3, u.at(idx));
    }
    return u;
}

VectorField synth_constant(const GridDomain& d, const Eigen::Vector3d& value)
{
    VectorField u(d, 3);
    for (std::size_t idx = 0; idx < d.num_nodes(); ++idx) std::copy(value.data(), value.data() + 3, u.at(idx));
    return u;
}

} // namespace glhm
