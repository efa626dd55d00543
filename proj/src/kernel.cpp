#include "glhm/kernel.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

namespace glhm {

namespace {

using boost::math::quadrature::gauss_kronrod;

double sphere_area(int m)
{
    return m == 2 ? 2.0 * std::numbers::pi : 4.0 * std::numbers::pi;
}

// unnormalized profile e^{-t} S(t)
double shape(const KernelProfile& k, double t)
{
    return std::exp(-t) * k.transition(t);
}

} // namespace

KernelProfile::KernelProfile(double R, int m) : R_(R), m_(m)
{
    if (!(R >= 4.0)) throw InvalidArgument("kernel cutoff R must be >= 4");
    if (m != 2 && m != 3) throw InvalidArgument("kernel dimension must be 2 or 3");
    // int_{R^m} rho(|y|^2/2) dy = |S^{m-1}| int_0^smax rho(s^2/2) s^{m-1} ds
    auto integrand = [this](double s) { return shape(*this, 0.5 * s * s) * std::pow(s, m_ - 1); };
    const double s1 = std::sqrt(2.0 * R_);
    const double s2 = std::sqrt(2.0 * (R_ + 2.0));
    double e1 = 0.0, e2 = 0.0;
    const double i1 = gauss_kronrod<double, 61>::integrate(integrand, 0.0, s1, 15, 1e-14, &e1);
    const double i2 = gauss_kronrod<double, 61>::integrate(integrand, s1, s2, 15, 1e-14, &e2);
    const double total = sphere_area(m_) * (i1 + i2);
    const double err = sphere_area(m_) * (e1 + e2);
    if (!std::isfinite(total) || total <= 0.0 || err > 1e-10 * total)
        throw NormalizationFailure("radial quadrature did not converge (error " +
                                   std::to_string(err) + ")");
    c_ = 1.0 / total;
}

KernelValues KernelProfile::eval(double t) const
{
    KernelValues v;
    if (t <= R_) {
        const double e = c_ * std::exp(-t);
        v.rho = e;
        v.drho = -e;
        v.ddrho = e;
        return v;
    }
    if (t >= R_ + 2.0) return v;
    const double u = 0.5 * (t - R_);
    const double S = 1.0 - smoothstep5(u);
    const double S1 = -smoothstep5_d1(u);
    const double S2 = -smoothstep5_d2(u);
    const double e = c_ * std::exp(-t);
    v.rho = e * S;
    v.drho = e * (-S + 0.5 * S1);
    v.ddrho = e * (S - S1 + 0.25 * S2);
    return v;
}

double KernelProfile::antiderivative(double t) const
{
    const double top = R_ + 2.0;
    if (t >= top) return 0.0;
    auto f = [this](double s) { return rho(s); };
    if (t >= R_) return gauss_kronrod<double, 61>::integrate(f, t, top, 10, 1e-15);
    const double tail = gauss_kronrod<double, 61>::integrate(f, R_, top, 10, 1e-15);
    return c_ * (std::exp(-t) - std::exp(-R_)) + tail;
}

double KernelProfile::normalization_residual() const
{
    // t-variable: dy = |S^{m-1}| (2t)^{(m-2)/2} dt; composite Simpson with an
    // s = sqrt(t) substitution on the first panel for m = 3.
    const int panels = 20000;
    auto g = [this](double t) { return rho(t) * std::pow(2.0 * t, 0.5 * (m_ - 2)); };
    double sum = 0.0;
    if (m_ == 2) {
        const double a = 0.0, b = R_ + 2.0, h = (b - a) / panels;
        for (int i = 0; i < panels; ++i) {
            const double x0 = a + i * h;
            sum += h / 6.0 * (g(x0) + 4.0 * g(x0 + 0.5 * h) + g(x0 + h));
        }
    } else {
        // t = w^2, dt = 2w dw
        const double a = 0.0, b = std::sqrt(R_ + 2.0), h = (b - a) / panels;
        auto gw = [&](double w) { return g(w * w) * 2.0 * w; };
        for (int i = 0; i < panels; ++i) {
            const double x0 = a + i * h;
            sum += h / 6.0 * (gw(x0) + 4.0 * gw(x0 + 0.5 * h) + gw(x0 + h));
        }
    }
    return std::abs(sphere_area(m_) * sum - 1.0);
}

KernelProfile build_kernel(double R, int m) { return KernelProfile(R, m); }

KernelValues kernel_eval(const KernelProfile& k, double t) { return k.eval(t); }

std::pair<double, double> kernel_scaled(const KernelProfile& k, double r, const Vec& y)
{
    if (!(r > 0.0)) throw InvalidArgument("scale must be positive");
    if (y.size() != k.m()) throw InvalidArgument("point dimension does not match kernel");
    return k.scaled(r, y.squaredNorm());
}

double cutoff_psi(const KernelProfile& k, double t)
{
    const double a = std::exp(-2.0 * k.R());
    return smoothstep5((t - a) / a);
}

double cutoff_psi_d1(const KernelProfile& k, double t)
{
    const double a = std::exp(-2.0 * k.R());
    return smoothstep5_d1((t - a) / a) / a;
}

double cutoff_phi(double t) { return 1.0 - smoothstep5(t - 1.0); }
double cutoff_phi_d1(double t) { return -smoothstep5_d1(t - 1.0); }

double l_cutoff(const KernelProfile& k, const Vec& y, const Projector& L, double r)
{
    const Vec perp = y - L.apply(y);
    const double t = perp.squaredNorm() / (2.0 * r * r);
    return k.scaled(r, y.squaredNorm()).first * cutoff_psi(k, t);
}

double rho_tilde_from_lengths(const KernelProfile& k, double perp, double along, double r)
{
    const double ta = perp * perp / (2.0 * r * r);
    const double tb = along * along / (2.0 * r * r);
    const double top = k.support_t() - tb;
    if (ta >= top) return 0.0;
    const double a = std::exp(-2.0 * k.R());
    auto f = [&](double t) { return cutoff_psi(k, t) * k.rho(t + tb); };
    // breakpoints at the psi ramp and the rho transition
    std::vector<double> cuts{ta};
    for (double b : {a, 2.0 * a, k.R() - tb, top})
        if (b > ta && b <= top) cuts.push_back(b);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    double sum = 0.0, err_total = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        double err = 0.0;
        sum += gauss_kronrod<double, 31>::integrate(f, cuts[i], cuts[i + 1], 12, 1e-13, &err);
        err_total += err;
    }
    if (!std::isfinite(sum) || err_total > 1e-9 * std::max(std::abs(sum), 1e-300) + 1e-300)
        throw QuadratureFailure("rho tilde quadrature error " + std::to_string(err_total));
    return std::pow(r, -k.m()) * sum;
}

double radial_antiderivative_rho_tilde(const KernelProfile& k, const Vec& y, const Projector& L,
                                       double r)
{
    const Vec along = L.apply(y);
    const double perp = (y - along).norm();
    return rho_tilde_from_lengths(k, perp, along.norm(), r);
}

double region_cutoff_psi_T(const Vec& x, double r, double r_x, const Vec& p, const Projector& L_A,
                           double unit)
{
    if (!(r > 0.0) || r_x < 0.0) throw InvalidArgument("invalid scales for region cutoff");
    const double lateral = L_A.apply(x - p).squaredNorm() / (unit * unit);
    return cutoff_phi(r_x / r) * cutoff_phi(r / unit) * cutoff_phi(lateral);
}

bool KernelReport::all_pass() const
{
    return std::all_of(checks.begin(), checks.end(), [](const KernelCheck& c) { return c.pass; });
}

const KernelCheck& KernelReport::find(const std::string& clause) const
{
    for (const auto& c : checks)
        if (c.clause == clause) return c;
    throw InvalidArgument("no kernel check named " + clause);
}

std::string KernelReport::to_csv() const
{
    std::ostringstream os;
    os << std::setprecision(10);
    os << "R,m,clause,measured,bound,pass\n";
    for (const auto& c : checks)
        os << R << ',' << m << ',' << c.clause << ',' << c.measured << ',' << c.bound << ','
           << (c.pass ? "pass" : "fail") << '\n';
    return os.str();
}

std::string KernelReport::to_text() const
{
    std::ostringstream os;
    os << std::setprecision(10);
    os << "kernel R=" << R << " m=" << m << " c_m=" << c << '\n';
    for (const auto& c : checks)
        os << "  [" << (c.pass ? "pass" : "FAIL") << "] " << c.clause << ": " << c.description
           << " measured=" << c.measured << " bound=" << c.bound << '\n';
    return os.str();
}

KernelReport verify_kernel(const KernelProfile& k)
{
    KernelReport rep;
    rep.R = k.R();
    rep.m = k.m();
    rep.c = k.c();
    const double R = k.R(), c = k.c(), top = R + 2.0;
    const int N = 10000;
    const double inf = std::numeric_limits<double>::infinity();
    auto sample = [&](int i) { return top * (i + 0.5) / N; };

    {
        const double res = k.normalization_residual();
        rep.checks.push_back({"norm", "|int rho(|y|^2/2) dy - 1|", res, 1e-6, res <= 1e-6});
    }
    {
        double worst = 0.0;
        for (int i = 0; i <= N; ++i) {
            const double t = R * i / N;
            worst = std::max(worst, std::abs(k.rho(t) - c * std::exp(-t)));
        }
        rep.checks.push_back({"exp_branch", "max |rho - c e^-t| on [0,R]", worst, 0.0, worst == 0.0});
    }
    {
        const double at_top = std::abs(k.rho(top)) + std::abs(k.drho(top));
        rep.checks.push_back({"support", "|rho|+|rhodot| at R+2", at_top, 0.0, at_top == 0.0});
    }
    {
        double lo = inf, hi_rel = 0.0, dmax = -inf;
        for (int i = 0; i < N; ++i) {
            const double t = sample(i);
            const auto v = k.eval(t);
            lo = std::min(lo, v.ddrho);
            dmax = std::max(dmax, v.drho);
        }
        for (int i = 0; i <= N; ++i) {
            const double t = R + 2.0 * i / N;
            hi_rel = std::max(hi_rel, k.eval(t).ddrho / (c * std::exp(-R)));
        }
        rep.checks.push_back({"ddrho_lower", "min rhoddot on [0,R+2]", lo, 0.0, lo >= 0.0});
        rep.checks.push_back({"ddrho_upper", "max rhoddot/(c e^-R) on [R,R+2]", hi_rel, 1.0,
                              hi_rel <= 1.0});
        rep.checks.push_back({"drho_sign", "max rhodot", dmax, 0.0, dmax <= 0.0});
    }
    {
        // clause (1): -rhodot - t rhodot + t^2 rhoddot <= C min{rho(t/1.21), -rhodot(t/1.21)}
        double C = 0.0;
        for (int i = 0; i < N; ++i) {
            const double t = sample(i);
            const auto v = k.eval(t);
            const double lhs = -v.drho - t * v.drho + t * t * v.ddrho;
            const auto w = k.eval(t / 1.21);
            const double rhs = std::min(w.rho, -w.drho);
            if (lhs <= 0.0) continue;
            C = std::max(C, rhs > 0.0 ? lhs / rhs : inf);
        }
        rep.checks.push_back({"1", "(-rhodot - t rhodot + t^2 rhoddot)/min(rho,-rhodot)(t/1.21)", C,
                              inf, std::isfinite(C)});
    }
    {
        double C = 0.0;
        for (int i = 0; i < N; ++i) {
            const double t = sample(i);
            const auto v = k.eval(t);
            if (v.rho <= 0.0) continue;
            C = std::max(C, -v.drho > 0.0 ? v.rho / -v.drho : inf);
        }
        rep.checks.push_back({"2", "rho/(-rhodot)", C, inf, std::isfinite(C)});
    }
    {
        double inner = 0.0, outer = 0.0;
        for (int i = 0; i <= N; ++i) {
            const double t = R * i / N;
            const auto v = k.eval(t);
            inner = std::max(inner, std::abs(v.rho + v.drho));
        }
        for (int i = 0; i <= N; ++i) {
            const double t = R + 2.0 * i / N;
            const auto v = k.eval(t);
            outer = std::max(outer, std::abs(v.rho + v.drho));
        }
        const double ratio = outer / (2.0 * c * std::exp(-R));
        rep.checks.push_back({"3", "sup|rho+rhodot|/(2 c e^-R), zero on [0,R]", ratio, 1.0,
                              inner == 0.0 && ratio <= 1.0});
    }
    {
        // clause (4): B_r(x) in B_s(x') => rho_r(y-x) <= C rho_s(y-x'), r <= s <= 10 r
        const int m = k.m();
        double C = 0.0;
        const double r = 1.0;
        const double ratios[] = {1.0, 1.25, 1.5, 2.0, 3.0, 5.0, 7.5, 10.0};
        const double fracs[] = {0.0, 0.25, 0.5, 0.75, 1.0};
        std::vector<Vec> dirs;
        for (int d = 0; d < 5; ++d) {
            Vec v = Vec::Zero(m);
            const double a = std::numbers::pi * d / 4.0;
            v[0] = std::cos(a);
            v[1] = std::sin(a);
            dirs.push_back(v);
        }
        const double reach = k.support_radius(r);
        for (double s : ratios)
            for (double f : fracs) {
                Vec x = Vec::Zero(m);
                x[0] = f * (s - r);
                for (const auto& dir : dirs)
                    for (int i = 0; i < 400; ++i) {
                        const Vec y = x + dir * (reach * i / 400.0);
                        const double a = k.scaled(r, (y - x).squaredNorm()).first;
                        const double b = k.scaled(s, y.squaredNorm()).first;
                        if (a <= 0.0) continue;
                        C = std::max(C, b > 0.0 ? a / b : inf);
                    }
            }
        rep.checks.push_back({"4", "rho_r(y-x)/rho_s(y-x') with B_r(x) in B_s(x'), s/r in [1,10]", C,
                              inf, std::isfinite(C)});
    }
    {
        const double step = 1e-4;
        double d1 = 0.0, d2 = 0.0, dp = 0.0;
        for (int i = 0; i < 2000; ++i) {
            const double t = step * 2 + (top - 4 * step) * (i + 0.5) / 2000.0;
            const auto v = k.eval(t);
            const double fd1 = (k.rho(t + step) - k.rho(t - step)) / (2 * step);
            const double fd2 = (k.drho(t + step) - k.drho(t - step)) / (2 * step);
            d1 = std::max(d1, std::abs(fd1 - v.drho) / c);
            d2 = std::max(d2, std::abs(fd2 - v.ddrho) / c);
        }
        for (int i = 0; i < 200; ++i) {
            const double t = step * 2 + (top - 4 * step) * (i + 0.5) / 200.0;
            const double fdp = (k.antiderivative(t + step) - k.antiderivative(t - step)) / (2 * step);
            dp = std::max(dp, std::abs(fdp + k.rho(t)));
        }
        rep.checks.push_back({"d_rho", "max |fd(rho) - rhodot|/c", d1, 1e-6, d1 <= 1e-6});
        rep.checks.push_back({"dd_rho", "max |fd(rhodot) - rhoddot|/c", d2, 1e-6, d2 <= 1e-6});
        rep.checks.push_back({"P", "max |fd(P) + rho|", dp, 1e-8, dp <= 1e-8});
    }
    return rep;
}

} // namespace glhm
