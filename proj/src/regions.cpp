#include "glhm/regions.hpp"

#include "glhm/detail/stencil.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace glhm {

namespace {

using detail::for_each_in_ball;
using detail::interp_stencil;

constexpr double kInf = std::numeric_limits<double>::infinity();

bool in_holes(const Vec& y, const std::vector<SubBall>& holes, double tol = 0.0)
{
    for (const auto& s : holes)
        if ((y - s.x).norm() < s.r - tol) return true;
    return false;
}

double pack_trace(const double* g, int m, const Mat& P)
{
    // tr(P G) with G packed as the upper triangle
    double s = 0.0;
    int idx = 0;
    for (int a = 0; a < m; ++a)
        for (int b = a; b < m; ++b, ++idx) s += (a == b ? 1.0 : 2.0) * P(a, b) * g[idx];
    return s;
}


} // namespace

DropScale find_drop_scale(const FieldCache& cache, const KernelProfile& k, const Vec& x, double delta2,
                          double lambda, double start, double min_scale)
{
    if (!(delta2 > 0.0) || !(start > 0.0)) throw InvalidArgument("drop scale needs positive delta2 and start");
    const int K = static_cast<int>(std::ceil(10.0 * std::max(lambda, 0.0) / delta2));
    DropScale out;
    double prev = theta_bar(cache, k, x, start);
    double r = start;
    for (int rung = 1; rung <= std::max(K, 1); ++rung) {
        r *= 0.5;
        if (r < min_scale) break;
        const double cur = theta_bar(cache, k, x, r);
        const double drop = prev - cur;
        out.drops.push_back(drop);
        if (drop <= 0.5 * delta2) {
            out.r = r;
            out.drop = drop;
            out.rung = rung;
            return out;
        }
        prev = cur;
    }
    throw LadderExhausted("no dyadic scale below " + std::to_string(start) + " has drop <= delta2/2");
}

CollarScale collar_scale(const FieldCache& cache, const KernelProfile& k, const Vec& x, double r_top,
                         double delta, double ratio, double min_scale)
{
    if (!(ratio > 1.0)) throw InvalidArgument("collar ladder ratio must exceed 1");
    CollarScale out;
    out.r = r_top;
    for (double r = r_top; r >= min_scale; r /= ratio) {
        const double d = theta_bar_dr(cache, k, x, r);
        out.ladder.emplace_back(r, d);
        if (d > delta) break;
        out.plateau = true;
        out.r = r;
    }
    return out;
}

RefineResult refine_center(const FieldCache& cache, const KernelProfile& k, const Vec& x0, double r,
                           const RefineOptions& opt)
{
    return refine_center(cache, k, x0, r, best_plane(cache, k, x0, r).plane, opt);
}

RefineResult refine_center(const FieldCache& cache, const KernelProfile& k, const Vec& x0, double r,
                           const Projector& L, const RefineOptions& opt)
{
    const Mat Lp = L.complement().matrix();
    struct Eval {
        Vec omega;
        double theta = 0.0;
        double norm = 0.0;
    };
    auto eval = [&](const Vec& z) {
        const auto pm = probe_moments(cache, k, z, r);
        const auto bp = best_plane_from_moments(pm);
        Eval e;
        e.theta = pm.theta_bar();
        e.omega = r * (Lp * (bp.plane.complement().matrix() * gradient_from_moments(pm)));
        e.norm = e.omega.norm();
        return e;
    };
    RefineResult out;
    out.x = x0;
    Eval cur = eval(x0);
    out.omega.push_back(cur.norm);
    if (!(cur.theta > 0.0)) throw NoConvergence("theta_bar vanishes at the start point");
    double gamma = 1.0;
    while (true) {
        if (cur.norm <= opt.tol * cur.theta) {
            out.converged = true;
            break;
        }
        if (out.iterations >= opt.max_iter)
            throw NoConvergence("center refinement did not converge in " + std::to_string(opt.max_iter) +
                                " iterations");
        Vec trial;
        Eval next;
        bool accepted = false;
        for (int halve = 0; halve < 12; ++halve) {
            trial = out.x + gamma * (r / cur.theta) * cur.omega;
            if ((trial - x0).norm() > opt.basin * r) {
                gamma *= 0.5;
                continue;
            }
            next = eval(trial);
            if (next.norm < cur.norm) {
                accepted = true;
                break;
            }
            gamma *= 0.5;
        }
        ++out.iterations;
        if (!accepted) {
            if ((trial - x0).norm() > opt.basin * r)
                throw LeftBasin("refinement left the ball of radius " + std::to_string(opt.basin * r));
            throw NoConvergence("no damped step decreases |Omega|");
        }
        out.x = trial;
        cur = next;
        out.omega.push_back(cur.norm);
        gamma = std::min(1.0, 2.0 * gamma);
    }
    out.residual = cur.norm / cur.theta;
    return out;
}

SubmanifoldGraph fit_submanifold(const FieldCache& cache, const KernelProfile& k, const Vec& p,
                                 const Projector& L_A, double half_length, double r, double delta,
                                 const SubmanifoldSeed& seed, const RefineOptions& opt)
{
    const GridDomain& dom = cache.domain();
    const int m = dom.m;
    const int rank = L_A.rank();
    if (rank > 1) throw RankMismatch("graph fitting supports planes of dimension 0 or 1");
    if (rank != m - 2) throw RankMismatch("plane dimension must be m - 2");
    SubmanifoldGraph g;
    g.r = r;
    g.p = p;
    g.L_A = L_A;
    const Mat Pp = L_A.complement().matrix();

    std::vector<double> ts;
    Vec b = Vec::Zero(m);
    if (rank == 0) {
        ts.push_back(0.0);
        g.spacing = 0.0;
    } else {
        b = L_A.basis().col(0);
        const int steps = std::max(1, static_cast<int>(std::ceil(half_length / (0.25 * r))));
        g.spacing = half_length / steps;
        for (int i = -steps; i <= steps; ++i) {
            const Vec z = p + (i * g.spacing) * b;
            if (admissible_radius(dom, k, z) >= r) ts.push_back(i * g.spacing);
        }
    }

    auto seed_index = [&](double t) -> int {
        if (!seed.graph) return -1;
        for (std::size_t j = 0; j < seed.graph->lattice.size(); ++j) {
            const double ts_j = seed.graph->lattice[j].size() ? seed.graph->lattice[j][0] : 0.0;
            if (std::abs(ts_j - t) <= 1e-9 * std::max(1.0, g.spacing)) return static_cast<int>(j);
        }
        return -1;
    };

    Vec offset = Vec::Zero(m);
    for (double t : ts) {
        const Vec z = p + t * b;
        Vec lat(rank);
        if (rank == 1) lat[0] = t;
        const int js = seed_index(t);
        Vec x0 = z + offset;
        bool copied = false;
        bool ok = true;
        Vec xs;
        if (js >= 0) {
            x0 = seed.graph->points[js];
            if (js < static_cast<int>(seed.collar.size()) && r <= seed.collar[js]) copied = true;
        }
        if (copied) {
            xs = x0;
        } else {
            try {
                xs = refine_center(cache, k, x0, r, L_A, opt).x;
            } catch (const Error&) {
                xs = x0;
                ok = false;
            }
        }
        offset = Pp * (xs - p);
        g.lattice.push_back(lat);
        g.points.push_back(xs);
        g.graph.push_back(Pp * (xs - p));
        g.converged.push_back(ok);
        g.copied.push_back(copied);
        try {
            g.best_planes.push_back(best_plane(cache, k, xs, r).plane);
        } catch (const Error&) {
            g.best_planes.push_back(L_A);
        }
    }

    const std::size_t n = g.points.size();
    std::vector<Vec> d1(n, Vec::Zero(m)), d2(n, Vec::Zero(m));
    if (rank == 1 && n >= 2) {
        const double s = g.spacing;
        for (std::size_t i = 0; i < n; ++i) {
            if (i == 0)
                d1[i] = (g.graph[1] - g.graph[0]) / s;
            else if (i + 1 == n)
                d1[i] = (g.graph[n - 1] - g.graph[n - 2]) / s;
            else
                d1[i] = (g.graph[i + 1] - g.graph[i - 1]) / (2.0 * s);
            if (i > 0 && i + 1 < n) d2[i] = (g.graph[i + 1] - 2.0 * g.graph[i] + g.graph[i - 1]) / (s * s);
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (rank == 0) {
            g.tangent.push_back(Projector::zero(m));
            g.second_fundamental.push_back(0.0);
            g.mean_curvature.push_back(0.0);
        } else {
            const Vec xp = b + d1[i];
            const Vec T = xp.normalized();
            g.tangent.push_back(Projector::from_orthonormal(T));
            g.second_fundamental.push_back(d2[i].norm());
            const Vec nrm = d2[i] - d2[i].dot(T) * T;
            g.mean_curvature.push_back(nrm.norm() / xp.squaredNorm());
        }
        g.graph_norm = std::max(g.graph_norm, g.graph[i].norm() + d1[i].norm() + r * d2[i].norm());
        g.tangent_plane_gap = std::max(g.tangent_plane_gap, grassmann_distance(g.tangent[i], g.best_planes[i]));
    }
    if (delta > 0.0) g.graph_constant = g.graph_norm / std::sqrt(delta);
    return g;
}

bool PredicateReport::all_pass() const
{
    return std::all_of(clauses.begin(), clauses.end(), [](const ClauseResult& c) { return c.pass; });
}

const ClauseResult& PredicateReport::find(const std::string& name) const
{
    for (const auto& c : clauses)
        if (c.name == name) return c;
    throw InvalidArgument("no clause named " + name);
}

PredicateReport check_annular(const FieldCache& cache, const KernelProfile& k, const AnnularRegion& A, double delta,
                              double eps0)
{
    const GridDomain& dom = cache.domain();
    const auto& g = A.graph;
    const std::size_t n = g.size();
    if (A.collar.size() != n) throw InvalidArgument("collar must be sampled on the graph lattice");
    PredicateReport rep;
    ClauseResult a1{"a1", true, 0.0, delta, Vec(), ""};
    ClauseResult a2{"a2", true, 0.0, delta, Vec(), ""};
    ClauseResult a3{"a3", true, kInf, 0.5 * eps0, Vec(), ""};

    // graph derivatives along the lattice
    const int rank = A.L_A.rank();
    for (std::size_t i = 0; i < n; ++i) {
        double d1 = 0.0, d2 = 0.0;
        if (rank == 1 && n >= 2) {
            const double s = g.spacing;
            if (i == 0)
                d1 = ((g.graph[1] - g.graph[0]) / s).norm();
            else if (i + 1 == n)
                d1 = ((g.graph[n - 1] - g.graph[n - 2]) / s).norm();
            else
                d1 = ((g.graph[i + 1] - g.graph[i - 1]) / (2.0 * s)).norm();
            if (i > 0 && i + 1 < n) d2 = ((g.graph[i + 1] - 2.0 * g.graph[i] + g.graph[i - 1]) / (s * s)).norm();
        }
        const double v = g.graph[i].norm() + d1 + A.collar[i] * d2;
        if (v > a1.worst || a1.witness.size() == 0) {
            a1.worst = std::max(a1.worst, v);
            if (v >= a1.worst) a1.witness = g.points[i];
        }
        if (v >= delta) a1.pass = false;

        const Vec& x = g.points[i];
        const double r_top = std::min(admissible_radius(dom, k, x), 2.0 * A.radius);
        if (A.collar[i] > r_top) {
            a2.note = "collar exceeds the largest probe that fits at some points";
        } else {
            const double ratio = std::pow(2.0, 0.25);
            for (double r = A.collar[i]; r <= r_top * (1.0 + 1e-12); r *= ratio) {
                const double d = theta_bar_dr(cache, k, x, r);
                if (d > a2.worst) {
                    a2.worst = d;
                    a2.witness = x;
                }
                if (d > delta) a2.pass = false;
            }
        }

        try {
            const double th = theta_bar(cache, k, x, A.collar[i]);
            if (th < a3.worst) {
                a3.worst = th;
                a3.witness = x;
            }
            if (th < 0.5 * eps0) a3.pass = false;
        } catch (const SupportOutOfDomain&) {
            a3.pass = false;
            a3.note = "collar probe leaves the box";
            a3.witness = x;
        }
    }
    if (n == 0) {
        a1.note = a2.note = a3.note = "empty lattice";
        a3.pass = false;
    }
    if (!std::isfinite(a3.worst)) a3.worst = 0.0;
    rep.clauses = {a1, a2, a3};
    return rep;
}

PredicateReport check_bubble(const FieldCache& cache, const KernelProfile& k, const Vec& p, double radius,
                             const Projector& L, const std::vector<SubBall>& subs, double delta, double delta2,
                             double eps0)
{
    const GridDomain& dom = cache.domain();
    const int m = dom.m;
    for (std::size_t i = 0; i < subs.size(); ++i)
        for (std::size_t j = i + 1; j < subs.size(); ++j)
            if ((subs[i].x - subs[j].x).norm() < subs[i].r + subs[j].r)
                throw OverlappingSubBalls("sub-balls " + std::to_string(i) + " and " + std::to_string(j) +
                                          " intersect");
    PredicateReport rep;

    ClauseResult b1{"b1", true, 0.0, delta, Vec(), ""};
    const Mat PL = L.matrix();
    const double r2 = radius * radius;
    for_each_in_ball(dom, p, radius, [&](std::size_t idx, const Vec& y, double) {
        if (in_holes(y, subs)) return;
        const double v = r2 * (pack_trace(cache.G(idx), m, PL) + 2.0 * cache.pen(idx));
        if (v > b1.worst) {
            b1.worst = v;
            b1.witness = y;
        }
    });
    b1.pass = b1.worst < delta;
    rep.clauses.push_back(b1);

    rep.clauses.push_back({"b2", true, 0.0, delta, Vec(), "skipped"});

    ClauseResult b3{"b3", true, kInf, eps0, Vec(), ""};
    try {
        const double outer = theta_classical(cache, p, radius);
        if (subs.empty()) {
            b3.worst = outer;
            b3.witness = p;
        }
        for (const auto& s : subs) {
            const double drop = outer - theta_classical(cache, s.x, s.r);
            if (drop < b3.worst) {
                b3.worst = drop;
                b3.witness = s.x;
            }
        }
        b3.pass = b3.worst >= eps0;
    } catch (const BallOutOfDomain&) {
        b3.pass = false;
        b3.worst = 0.0;
        b3.note = "ball leaves the box";
    }
    rep.clauses.push_back(b3);

    ClauseResult b4{"b4", true, 0.0, delta2, Vec(), ""};
    ClauseResult flat{"b4_flatness", true, 0.0, delta * delta, Vec(), ""};
    const double h = dom.h();
    for (const auto& s : subs) {
        try {
            const double tl = theta_bar_partial(cache, k, s.x, 2.0 * s.r, L, Part::tangential).value;
            const double th = theta_bar(cache, k, s.x, s.r);
            if (tl > b4.worst) {
                b4.worst = tl;
                b4.witness = s.x;
            }
            if (tl > delta2 || th < eps0) {
                b4.pass = false;
                b4.witness = s.x;
                if (th < eps0) b4.note = "theta_bar below eps0 at a sub-ball";
            }
        } catch (const SupportOutOfDomain&) {
            b4.pass = false;
            b4.note = "probe at 2 r_j leaves the box";
        }
        const double lo = std::max(delta * delta * s.r, 2.0 * h);
        const double hi = std::min(2.0 * s.r, admissible_radius(dom, k, s.x));
        for (double r = lo; r <= hi * (1.0 + 1e-12); r *= std::sqrt(2.0)) {
            const double d = theta_bar_dr(cache, k, s.x, r);
            if (d > flat.worst) {
                flat.worst = d;
                flat.witness = s.x;
            }
        }
        flat.pass = flat.worst <= delta * delta;
    }
    if (subs.empty()) b4.note = flat.note = "no sub-balls";
    rep.clauses.push_back(b4);
    rep.clauses.push_back(flat);
    for (auto& c : rep.clauses)
        if (!std::isfinite(c.worst)) c.worst = 0.0;
    return rep;
}

const char* region_name(RegionKind k)
{
    switch (k) {
    case RegionKind::annular: return "annular";
    case RegionKind::bubble: return "bubble";
    case RegionKind::regular: return "regular";
    case RegionKind::junk: return "junk";
    }
    return "unknown";
}

int DecompositionTree::count(RegionKind k) const
{
    return static_cast<int>(std::count_if(nodes.begin(), nodes.end(), [k](const TreeNode& n) { return n.kind == k; }));
}

std::vector<int> DecompositionTree::leaves() const
{
    std::vector<int> out;
    for (const auto& n : nodes)
        if (n.children.empty()) out.push_back(n.id);
    return out;
}

bool DecompositionTree::covered(const Vec& y, double tol) const
{
    for (const auto& n : nodes) {
        if ((y - n.center).norm() > n.radius + tol) continue;
        switch (n.kind) {
        case RegionKind::annular: {
            bool inside_collar = false;
            for (std::size_t i = 0; i < n.core.size(); ++i)
                if ((y - n.core[i]).norm() < n.collar[i] - tol) inside_collar = true;
            if (!inside_collar) return true;
            break;
        }
        case RegionKind::bubble:
            if (!in_holes(y, n.holes, tol)) return true;
            break;
        default: return true;
        }
    }
    return false;
}

namespace {

nlohmann::ordered_json vec_json(const Vec& v)
{
    auto a = nlohmann::ordered_json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

nlohmann::ordered_json node_json(const DecompositionTree& t, int id)
{
    const TreeNode& n = t.nodes[id];
    nlohmann::ordered_json j;
    j["id"] = n.id;
    j["label"] = region_name(n.kind);
    j["depth"] = n.depth;
    j["center"] = vec_json(n.center);
    j["radius"] = n.radius;
    j["energy"] = n.energy;
    j["slice_energy"] = n.slice_energy;
    j["slice_penalty"] = n.slice_penalty;
    if (n.kind == RegionKind::bubble) {
        j["scale"] = n.scale;
        auto holes = nlohmann::ordered_json::array();
        for (const auto& h : n.holes) holes.push_back({{"center", vec_json(h.x)}, {"radius", h.r}});
        j["holes"] = holes;
    }
    if (n.kind == RegionKind::annular) {
        auto core = nlohmann::ordered_json::array();
        for (std::size_t i = 0; i < n.core.size(); ++i)
            core.push_back({{"point", vec_json(n.core[i])}, {"collar", n.collar[i]}});
        j["core"] = core;
    }
    nlohmann::ordered_json diag = nlohmann::ordered_json::object();
    for (const auto& [key, v] : n.diagnostics) diag[key] = v;
    j["diagnostics"] = diag;
    auto preds = nlohmann::ordered_json::array();
    for (const auto& c : n.predicates) {
        nlohmann::ordered_json pc;
        pc["clause"] = c.name;
        pc["pass"] = c.pass;
        pc["worst"] = c.worst;
        pc["bound"] = c.bound;
        if (!c.note.empty()) pc["note"] = c.note;
        preds.push_back(pc);
    }
    j["predicates"] = preds;
    if (!n.note.empty()) j["note"] = n.note;
    auto kids = nlohmann::ordered_json::array();
    for (int c : n.children) kids.push_back(node_json(t, c));
    j["children"] = kids;
    return j;
}

} // namespace

std::string DecompositionTree::to_json() const
{
    nlohmann::ordered_json j;
    nlohmann::ordered_json c;
    c["delta"] = config.delta;
    c["delta1"] = config.delta1;
    c["delta2"] = config.delta2;
    c["eps0"] = config.eps0;
    c["lambda"] = lambda;
    j["config"] = c;
    j["depth_bound"] = depth_bound;
    j["max_depth"] = max_depth;
    j["depth_exceeded"] = depth_exceeded;
    j["junk_volume"] = junk_volume;
    j["cover_fraction"] = cover_fraction;
    j["uncovered"] = uncovered;
    j["counts"] = {{"annular", count(RegionKind::annular)},
                   {"bubble", count(RegionKind::bubble)},
                   {"regular", count(RegionKind::regular)},
                   {"junk", count(RegionKind::junk)}};
    j["root"] = nodes.empty() ? nlohmann::ordered_json() : node_json(*this, 0);
    return j.dump(2) + "\n";
}

std::string DecompositionTree::leaf_csv() const
{
    std::ostringstream os;
    os << std::setprecision(10);
    os << "id,parent,depth,label,";
    const int m = nodes.empty() ? 0 : static_cast<int>(nodes[0].center.size());
    for (int a = 0; a < m; ++a) os << "c" << a << ",";
    os << "radius,energy,slice_energy,holes\n";
    for (int id : leaves()) {
        const auto& n = nodes[id];
        os << n.id << "," << n.parent << "," << n.depth << "," << region_name(n.kind) << ",";
        for (int a = 0; a < m; ++a) os << n.center[a] << ",";
        os << n.radius << "," << n.energy << "," << n.slice_energy << "," << n.holes.size() << "\n";
    }
    return os.str();
}

double ball_energy(const FieldCache& cache, const Vec& c, double radius, const std::vector<SubBall>& holes)
{
    double s = 0.0;
    for_each_in_ball(cache.domain(), c, radius, [&](std::size_t idx, const Vec& y, double w) {
        if (!in_holes(y, holes)) s += w * cache.e(idx);
    });
    return s;
}

std::pair<double, double> slice_energy(const FieldCache& cache, const Vec& c, double radius, const Projector& L,
                                       const std::vector<SubBall>& holes)
{
    const GridDomain& dom = cache.domain();
    const int m = dom.m;
    const Mat Pp = L.complement().matrix();
    if (m == 2) {
        double grad = 0.0, pen = 0.0;
        for_each_in_ball(dom, c, radius, [&](std::size_t idx, const Vec& y, double w) {
            if (in_holes(y, holes)) return;
            grad += w * 0.5 * pack_trace(cache.G(idx), m, Pp);
            pen += w * cache.pen(idx);
        });
        return {grad, pen};
    }
    if (L.rank() != m - 2) throw RankMismatch("slice needs an (m-2)-plane");
    const Mat B = L.complement().basis();
    const double h = dom.h();
    const int steps = static_cast<int>(std::ceil(radius / h));
    double grad = 0.0, pen = 0.0;
    std::array<std::size_t, 8> nodes;
    std::array<double, 8> w;
    const int P = cache.packed();
    std::vector<double> g(P);
    for (int i = -steps; i <= steps; ++i)
        for (int j = -steps; j <= steps; ++j) {
            const double a = i * h, b = j * h;
            if (a * a + b * b > radius * radius) continue;
            const Vec y = c + a * B.col(0) + b * B.col(1);
            if (in_holes(y, holes)) continue;
            bool inside = true;
            for (int q = 0; q < m; ++q)
                if (std::abs(y[q]) > dom.extent) inside = false;
            if (!inside) throw BallOutOfDomain("slice disc leaves the box");
            const int nc = interp_stencil(dom, y, nodes, w);
            std::fill(g.begin(), g.end(), 0.0);
            double pn = 0.0;
            for (int q = 0; q < nc; ++q) {
                const double* gq = cache.G(nodes[q]);
                for (int t = 0; t < P; ++t) g[t] += w[q] * gq[t];
                pn += w[q] * cache.pen(nodes[q]);
            }
            grad += h * h * 0.5 * pack_trace(g.data(), m, Pp);
            pen += h * h * pn;
        }
    return {grad, pen};
}

double annulus_energy(const FieldCache& cache, const AnnularRegion& A, double sigma)
{
    std::vector<SubBall> tubes;
    for (std::size_t i = 0; i < A.graph.size(); ++i) tubes.push_back({A.graph.points[i], sigma * A.collar[i]});
    return ball_energy(cache, A.p, A.radius, tubes);
}

EnergySplit energy_split(const FieldCache& cache, const KernelProfile& k, const SubmanifoldGraph& graph,
                         const std::vector<double>& collar, double unit)
{
    if (collar.size() != graph.size()) throw InvalidArgument("collar must be sampled on the graph lattice");
    EnergySplit out;
    const double r = graph.r;
    const std::size_t n = graph.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec& x = graph.points[i];
        const double psi = region_cutoff_psi_T(x, r, collar[i], graph.p, graph.L_A, unit);
        if (psi == 0.0) continue;
        double ds = 1.0;
        if (graph.L_A.rank() == 1) {
            const double tangent_len = [&] {
                if (n < 2) return 1.0;
                const Vec& a = graph.points[i == 0 ? 0 : i - 1];
                const Vec& b = graph.points[i + 1 == n ? n - 1 : i + 1];
                const double steps = (i == 0 || i + 1 == n) ? 1.0 : 2.0;
                return (b - a).norm() / (steps * graph.spacing);
            }();
            ds = graph.spacing * tangent_len * ((i == 0 || i + 1 == n) ? 0.5 : 1.0);
        }
        const auto pm = probe_moments(cache, k, x, r);
        const Projector L = best_plane_from_moments(pm).plane;
        const double wL = psi * ds;
        const double ea = partial_from_moments(pm, L, Part::angular);
        const double en = partial_from_moments(pm, L, Part::radial);
        const auto hat = hatted_partials(cache, k, x, r, L);
        out.E_L += wL * partial_from_moments(pm, L, Part::tangential);
        out.E_alpha += wL * ea;
        out.E_n += wL * en;
        out.E_alpha_hat += wL * hat.angular;
        out.E_n_hat += wL * hat.radial;
        const double tol = 1e-12 * (std::abs(ea) + std::abs(en) + 1e-300);
        if (hat.angular > ea + tol || hat.radial > en + tol) ++out.hat_violations;
    }
    return out;
}

namespace {

struct Candidate {
    Vec y;
    double r = 0.0;
    double theta = 0.0;
};

class Decomposer {
public:
    Decomposer(const FieldCache& cache, const KernelProfile& k, const DecompConfig& cfg, DecompositionTree& tree)
        : cache_(cache), k_(k), cfg_(cfg), tree_(tree), dom_(cache.domain()), h_(cache.domain().h())
    {
    }

    void ball(const Vec& p, double rho, int parent, int depth);

private:
    int add(RegionKind kind, const Vec& c, double radius, int parent, int depth)
    {
        TreeNode n;
        n.id = static_cast<int>(tree_.nodes.size());
        n.kind = kind;
        n.center = c;
        n.radius = radius;
        n.parent = parent;
        n.depth = depth;
        n.plane = Projector::zero(dom_.m);
        tree_.nodes.push_back(n);
        if (parent >= 0) tree_.nodes[parent].children.push_back(n.id);
        tree_.max_depth = std::max(tree_.max_depth, depth);
        return n.id;
    }

    void junk(const Vec& c, double radius, int parent, int depth, const std::string& why)
    {
        const int id = add(RegionKind::junk, c, radius, parent, depth);
        tree_.nodes[id].note = why;
        tree_.junk_volume += std::pow(radius, dom_.m - 2);
    }

    std::vector<Vec> lattice(const Vec& c, double radius, double spacing, const Projector* slice) const;
    std::vector<Candidate> concentrations(const std::vector<Vec>& pts, double r_cap) const;
    void bubble(const Vec& c, double radius, const Projector& L, double scale, int parent, int depth);

    const FieldCache& cache_;
    const KernelProfile& k_;
    const DecompConfig& cfg_;
    DecompositionTree& tree_;
    const GridDomain& dom_;
    double h_;
};

std::vector<Vec> Decomposer::lattice(const Vec& c, double radius, double spacing, const Projector* slice) const
{
    const int m = dom_.m;
    const int steps = static_cast<int>(std::floor(radius / spacing));
    std::vector<Vec> out;
    if (slice && m == 3) {
        const Mat B = slice->complement().basis();
        for (int i = -steps; i <= steps; ++i)
            for (int j = -steps; j <= steps; ++j) {
                if ((i * i + j * j) * spacing * spacing > radius * radius) continue;
                out.push_back(c + (i * spacing) * B.col(0) + (j * spacing) * B.col(1));
            }
        return out;
    }
    const int kmax = m == 3 ? steps : 0;
    for (int i = -steps; i <= steps; ++i)
        for (int j = -steps; j <= steps; ++j)
            for (int l = -kmax; l <= kmax; ++l) {
                Vec d(m);
                d[0] = i * spacing;
                d[1] = j * spacing;
                if (m == 3) d[2] = l * spacing;
                if (d.norm() > radius) continue;
                out.push_back(c + d);
            }
    return out;
}

std::vector<Candidate> Decomposer::concentrations(const std::vector<Vec>& pts, double r_cap) const
{
    std::vector<Candidate> out;
    for (const auto& y : pts) {
        const double r = std::min(r_cap, admissible_radius(dom_, k_, y));
        if (r < 2.0 * h_) continue;
        const double th = theta_bar(cache_, k_, y, r);
        if (th >= cfg_.eps0) out.push_back({y, r, th});
    }
    std::stable_sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) { return a.theta > b.theta; });
    return out;
}

void Decomposer::ball(const Vec& p, double rho, int parent, int depth)
{
    if (depth > tree_.depth_bound) {
        tree_.depth_exceeded = true;
        junk(p, rho, parent, depth, "depth bound reached");
        return;
    }
    const int m = dom_.m;
    const double rc0 = std::min(0.5 * rho, admissible_radius(dom_, k_, p));
    if (rc0 < 2.0 * h_) {
        junk(p, rho, parent, depth, "probe scale below grid resolution");
        return;
    }
    const auto pts = lattice(p, rho, rc0 / cfg_.lattice_density, nullptr);
    const auto cands = concentrations(pts, rc0);
    if (cands.empty()) {
        const int id = add(RegionKind::regular, p, rho, parent, depth);
        auto& n = tree_.nodes[id];
        double peak = 0.0;
        for (const auto& y : pts) {
            const double r = std::min(rc0, admissible_radius(dom_, k_, y));
            if (r >= 2.0 * h_) peak = std::max(peak, theta_bar(cache_, k_, y, r));
        }
        n.diagnostics.emplace_back("peak_theta_bar", peak);
        n.diagnostics.emplace_back("probe_scale", rc0);
        n.energy = ball_energy(cache_, p, rho, {});
        return;
    }

    const Projector L_A = best_plane(cache_, k_, cands[0].y, cands[0].r).plane;
    const Mat Pp = L_A.complement().matrix();
    // strongest candidate first; others within 2 rc0 (across L_A) belong to the same concentration
    std::vector<Vec> core;
    std::vector<CollarScale> collars;
    std::string note;
    RefineOptions ropt;
    ropt.basin = 1.0;
    auto claimed = [&](const Vec& y) {
        for (const auto& c : core)
            if ((Pp * (y - c)).norm() < 2.0 * rc0) return true;
        return false;
    };
    auto add_core = [&](const Vec& x) {
        for (const auto& c : core)
            if ((x - c).norm() < (m == 2 ? rc0 : h_)) return;
        const double r_top = std::min(rc0, admissible_radius(dom_, k_, x));
        if (r_top < 2.0 * h_) return;
        core.push_back(x);
        collars.push_back(collar_scale(cache_, k_, x, r_top, cfg_.delta, cfg_.collar_ratio, 2.0 * h_));
    };
    for (const auto& s : cands) {
        if (claimed(s.y)) continue;
        if (m == 2) {
            Vec x = s.y;
            try {
                x = refine_center(cache_, k_, s.y, s.r, L_A, ropt).x;
            } catch (const Error& e) {
                note += std::string("refine: ") + e.what() + "; ";
            }
            add_core(x);
        } else {
            const Vec foot = s.y + L_A.apply(p - s.y);
            const auto g = fit_submanifold(cache_, k_, foot, L_A, rho, 0.5 * rc0, cfg_.delta, {}, ropt);
            std::size_t before = core.size();
            for (std::size_t i = 0; i < g.size(); ++i)
                if ((g.points[i] - p).norm() <= rho) add_core(g.points[i]);
            if (core.size() == before) add_core(s.y);
        }
    }
    if (core.empty()) {
        junk(p, rho, parent, depth, "concentration without a resolvable core");
        return;
    }

    const bool any_plateau =
        std::any_of(collars.begin(), collars.end(), [](const CollarScale& c) { return c.plateau; });
    if (!any_plateau) {
        // the energy concentrates at the scale of the ball itself
        bubble(p, rho, L_A, rc0, parent, depth);
        return;
    }

    const int id = add(RegionKind::annular, p, rho, parent, depth);
    tree_.nodes[id].plane = L_A;
    tree_.nodes[id].note = note;
    // 1-Lipschitz upper envelope of the per-point scales
    std::vector<double> collar(core.size());
    for (std::size_t i = 0; i < core.size(); ++i) {
        double v = collars[i].r;
        for (std::size_t j = 0; j < core.size(); ++j) v = std::max(v, collars[j].r - (core[i] - core[j]).norm());
        collar[i] = v;
    }
    tree_.nodes[id].core = core;
    tree_.nodes[id].collar = collar;

    struct Spawn {
        std::size_t i;
        double r;
        double maximal;
    };
    std::vector<Spawn> spawns;
    double min_maximal = kInf;
    for (std::size_t i = 0; i < core.size(); ++i) {
        double maximal = 0.0;
        for (const auto& [r, d] : collars[i].ladder) maximal = std::max(maximal, d);
        min_maximal = std::min(min_maximal, maximal);
        if (maximal < cfg_.spawn_c * cfg_.delta) continue;
        spawns.push_back({i, std::min(collar[i] / std::sqrt(cfg_.delta), rho), maximal});
    }
    std::stable_sort(spawns.begin(), spawns.end(), [](const Spawn& a, const Spawn& b) { return a.r > b.r; });
    std::vector<Spawn> chosen;
    for (const auto& s : spawns) {
        bool disjoint = true;
        for (const auto& c : chosen)
            if ((core[s.i] - core[c.i]).norm() < cfg_.vitali * (s.r + c.r)) disjoint = false;
        if (disjoint) chosen.push_back(s);
    }

    {
        auto& n = tree_.nodes[id];
        n.diagnostics.emplace_back("probe_scale", rc0);
        n.diagnostics.emplace_back("core_points", static_cast<double>(core.size()));
        n.diagnostics.emplace_back("spawned", static_cast<double>(spawns.size()));
        n.diagnostics.emplace_back("selected", static_cast<double>(chosen.size()));
        n.diagnostics.emplace_back("min_maximal_condition", std::isfinite(min_maximal) ? min_maximal : 0.0);
        n.diagnostics.emplace_back("collar_min", *std::min_element(collar.begin(), collar.end()));
        n.diagnostics.emplace_back("collar_max", *std::max_element(collar.begin(), collar.end()));
        std::vector<SubBall> tubes;
        for (std::size_t i = 0; i < core.size(); ++i) tubes.push_back({core[i], collar[i]});
        n.energy = ball_energy(cache_, p, rho, tubes);
    }
    {
        AnnularRegion A;
        A.p = p;
        A.radius = rho;
        A.L_A = L_A;
        A.graph.r = rc0;
        A.graph.p = p;
        A.graph.L_A = L_A;
        A.graph.points = core;
        A.graph.graph.reserve(core.size());
        for (const auto& x : core) A.graph.graph.push_back(Pp * (x - p));
        A.graph.spacing = core.size() > 1 ? (core[1] - core[0]).norm() : 0.0;
        A.collar = collar;
        // the lattice of a fitted graph is ordered; isolated 2D points carry no derivatives
        if (m == 2) A.graph.spacing = 0.0;
        const auto rep = check_annular(cache_, k_, A, cfg_.delta, cfg_.eps0);
        tree_.nodes[id].predicates = rep.clauses;
    }

    for (const auto& s : chosen) {
        const Vec& x = core[s.i];
        Projector L = L_A;
        if (m == 3) {
            try {
                L = best_plane(cache_, k_, x, collar[s.i]).plane;
            } catch (const Error&) {
            }
        }
        bubble(x, s.r, L, collar[s.i], id, depth + 1);
    }
}

void Decomposer::bubble(const Vec& c, double radius, const Projector& L, double scale, int parent, int depth)
{
    if (depth > tree_.depth_bound) {
        tree_.depth_exceeded = true;
        junk(c, radius, parent, depth, "depth bound reached");
        return;
    }
    const int id = add(RegionKind::bubble, c, radius, parent, depth);
    tree_.nodes[id].plane = L;
    tree_.nodes[id].scale = scale;
    const double rs = cfg_.sub_scale * scale;
    std::vector<SubBall> subs;
    std::vector<std::pair<Vec, std::string>> failed;
    std::string note;
    if (rs >= 2.0 * h_) {
        const auto pts = lattice(c, radius, rs / cfg_.lattice_density, dom_.m == 3 ? &L : nullptr);
        const auto cands = concentrations(pts, rs);
        std::vector<Vec> centers;
        for (const auto& cd : cands) {
            bool fresh = true;
            for (const auto& s : centers)
                if ((cd.y - s).norm() < 2.0 * rs) fresh = false;
            if (!fresh) continue;
            Vec x = cd.y;
            try {
                x = refine_center(cache_, k_, cd.y, cd.r, L).x;
            } catch (const Error& e) {
                note += std::string("refine: ") + e.what() + "; ";
            }
            bool dup = false;
            for (const auto& s : centers)
                if ((x - s).norm() < rs) dup = true;
            if (!dup) centers.push_back(x);
        }
        for (std::size_t j = 0; j < centers.size(); ++j) {
            const Vec& x = centers[j];
            double start = std::min(scale, admissible_radius(dom_, k_, x));
            start = std::min(start, radius - (x - c).norm());
            for (std::size_t i = 0; i < centers.size(); ++i)
                if (i != j) start = std::min(start, 0.5 * (centers[i] - x).norm());
            try {
                if (!(start > 2.0 * h_)) throw LadderExhausted("no room for a sub-ball ladder");
                const auto ds = find_drop_scale(cache_, k_, x, cfg_.delta2, tree_.lambda, start, h_);
                bool overlap = false;
                for (const auto& s : subs)
                    if ((s.x - x).norm() < s.r + ds.r) overlap = true;
                if (overlap) {
                    note += "overlapping sub-ball dropped; ";
                    continue;
                }
                subs.push_back({x, ds.r});
            } catch (const Error& e) {
                failed.emplace_back(x, e.what());
            }
        }
    } else {
        note += "sub-concentration scale below grid resolution; ";
    }

    {
        auto& n = tree_.nodes[id];
        n.holes = subs;
        n.note = note;
        n.energy = ball_energy(cache_, c, radius, subs);
        try {
            const auto se = slice_energy(cache_, c, radius, L, subs);
            n.slice_energy = se.first;
            n.slice_penalty = se.second;
        } catch (const Error& e) {
            n.note += std::string("slice: ") + e.what() + "; ";
        }
        n.diagnostics.emplace_back("sub_probe_scale", rs);
        n.diagnostics.emplace_back("sub_balls", static_cast<double>(subs.size()));
        try {
            n.diagnostics.emplace_back("theta", theta_classical(cache_, c, radius));
        } catch (const Error&) {
        }
        try {
            n.predicates = check_bubble(cache_, k_, c, radius, L, subs, cfg_.delta, cfg_.delta2, cfg_.eps0).clauses;
        } catch (const Error& e) {
            n.note += std::string("predicates: ") + e.what() + "; ";
        }
    }
    for (const auto& s : subs) ball(s.x, s.r, id, depth + 1);
    for (const auto& [x, why] : failed) junk(x, rs, id, depth + 1, why);
}

} // namespace

DecompositionTree decompose(const FieldCache& cache, const KernelProfile& k, const Vec& p, double radius,
                            const DecompConfig& cfg)
{
    const GridDomain& dom = cache.domain();
    if (p.size() != dom.m) throw InvalidArgument("root center dimension does not match grid");
    if (!dom.contains_ball(p, radius)) throw BallOutOfDomain("root ball leaves the box");
    if (!(cfg.eps0 > 0.0) || !(cfg.delta > 0.0) || !(cfg.delta2 > 0.0))
        throw InvalidArgument("eps0, delta and delta2 must be positive");
    DecompositionTree tree;
    tree.config = cfg;
    tree.lambda = cfg.lambda > 0.0 ? cfg.lambda : cache.total_energy();
    tree.depth_bound = static_cast<int>(std::ceil(4.0 * tree.lambda / cfg.eps0));
    Decomposer(cache, k, cfg, tree).ball(p, radius, -1, 0);

    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    const int m = dom.m;
    int hits = 0, total = 0;
    Vec y(m);
    while (total < cfg.cover_samples) {
        for (int a = 0; a < m; ++a) y[a] = U(rng);
        if (y.norm() > 1.0) continue;
        ++total;
        if (tree.covered(p + radius * y, dom.h()))
            ++hits;
        else
            ++tree.uncovered;
    }
    tree.cover_fraction = total ? static_cast<double>(hits) / total : 1.0;
    return tree;
}

} // namespace glhm
