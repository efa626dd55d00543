#pragma once

#include "glhm/errors.hpp"
#include "glhm/projector.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace glhm {

//! Quintic smoothstep on [0,1] and its first two derivatives.
inline double smoothstep5(double u)
{
    if (u <= 0.0) return 0.0;
    if (u >= 1.0) return 1.0;
    return u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
}
inline double smoothstep5_d1(double u)
{
    if (u <= 0.0 || u >= 1.0) return 0.0;
    const double w = u * (1.0 - u);
    return 30.0 * w * w;
}
inline double smoothstep5_d2(double u)
{
    if (u <= 0.0 || u >= 1.0) return 0.0;
    return 60.0 * u * (1.0 - u) * (1.0 - 2.0 * u);
}

struct KernelValues {
    double rho = 0.0;
    double drho = 0.0;
    double ddrho = 0.0;
};

//! Mollified heat kernel rho(t) = c_m e^{-t} on [0,R], smoothly cut to zero on [R,R+2].
class KernelProfile {
public:
    KernelProfile() = default;
    KernelProfile(double R, int m);

    double R() const { return R_; }
    int m() const { return m_; }
    double c() const { return c_; }
    double support_t() const { return R_ + 2.0; }
    double support_radius(double r) const { return r * std::sqrt(2.0 * (R_ + 2.0)); }

    KernelValues eval(double t) const;

    double rho(double t) const
    {
        if (t <= R_) return c_ * std::exp(-t);
        if (t >= R_ + 2.0) return 0.0;
        return c_ * std::exp(-t) * (1.0 - smoothstep5(0.5 * (t - R_)));
    }
    double drho(double t) const
    {
        if (t <= R_) return -c_ * std::exp(-t);
        if (t >= R_ + 2.0) return 0.0;
        const double u = 0.5 * (t - R_);
        return c_ * std::exp(-t) * (-(1.0 - smoothstep5(u)) - 0.5 * smoothstep5_d1(u));
    }

    //! Transition factor S(u) on [R,R+2] with rho = c e^{-t} S; 1 below R, 0 above R+2.
    double transition(double t) const
    {
        if (t <= R_) return 1.0;
        if (t >= R_ + 2.0) return 0.0;
        return 1.0 - smoothstep5(0.5 * (t - R_));
    }

    //! (rho_r(y), rhodot_r(y)) from |y|^2.
    std::pair<double, double> scaled(double r, double y2) const
    {
        const double t = y2 / (2.0 * r * r);
        const double s = std::pow(r, -m_);
        return {s * rho(t), s * drho(t)};
    }

    //! P(t) = int_t^inf rho(s) ds.
    double antiderivative(double t) const;

    //! |int_{R^m} rho(|y|^2/2) dy - 1| from an independent quadrature.
    double normalization_residual() const;

private:
    double R_ = 8.0;
    int m_ = 2;
    double c_ = 0.0;
};

KernelProfile build_kernel(double R, int m);
KernelValues kernel_eval(const KernelProfile& k, double t);
std::pair<double, double> kernel_scaled(const KernelProfile& k, double r, const Vec& y);

//! psi: 0 for t <= e^{-2R}, 1 for t >= 2 e^{-2R}.
double cutoff_psi(const KernelProfile& k, double t);
double cutoff_psi_d1(const KernelProfile& k, double t);
//! phi: 1 for t <= 1, 0 for t >= 2.
double cutoff_phi(double t);
double cutoff_phi_d1(double t);

//! rho_r(y) psi(|Pi_{L perp} y|^2 / 2r^2).
double l_cutoff(const KernelProfile& k, const Vec& y, const Projector& L, double r);
//! r^{-m} int_{|Pi_perp y|^2/2r^2}^inf psi(t) rho(t + |Pi_L y|^2/2r^2) dt.
double radial_antiderivative_rho_tilde(const KernelProfile& k, const Vec& y, const Projector& L,
                                       double r);
//! Same quantity from the two projected lengths.
double rho_tilde_from_lengths(const KernelProfile& k, double perp, double along, double r);

//! phi(r_x/r) phi(r/unit) phi(|Pi_{L_A}(x - p)|^2/unit^2); unit is the anchor ball radius.
double region_cutoff_psi_T(const Vec& x, double r, double r_x, const Vec& p, const Projector& L_A,
                           double unit = 1.0);

struct KernelCheck {
    std::string clause;
    std::string description;
    double measured = 0.0;
    double bound = 0.0;
    bool pass = false;
};

struct KernelReport {
    double R = 0.0;
    int m = 0;
    double c = 0.0;
    std::vector<KernelCheck> checks;
    bool all_pass() const;
    const KernelCheck& find(const std::string& clause) const;
    std::string to_csv() const;
    std::string to_text() const;
};

//! Measures every kernel property on dense samples.
KernelReport verify_kernel(const KernelProfile& k);

} // namespace glhm
