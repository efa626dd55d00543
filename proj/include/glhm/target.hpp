#pragma once

#include "glhm/errors.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <string>

namespace glhm {

//! Unit sphere S^2 in R^3 with the truncated squared-distance penalty.
//!
//! F(p) = d^2 for d < gamma, 4 gamma^2 for d >= 2 gamma, and a C^2 monotone
//! quintic blend in s = d^2 in between.  d = | |p| - 1 |.
template <typename Scalar>
class SphereTarget {
public:
    using Vec = Eigen::Matrix<Scalar, 3, 1>;

    explicit SphereTarget(Scalar gamma = Scalar(0.4), Scalar gamma_floor = Scalar(0.05))
        : gamma_(gamma), floor_(gamma_floor)
    {
        if (!(gamma > Scalar(0)) || !(gamma < Scalar(0.5)))
            throw InvalidArgument("penalty width gamma must lie in (0, 0.5)");
        if (!(gamma_floor > Scalar(0)) || !(gamma_floor < Scalar(1)))
            throw InvalidArgument("focal floor must lie in (0, 1)");
        curvature_ = measure_curvature();
    }

    Scalar gamma() const { return gamma_; }
    Scalar gamma_floor() const { return floor_; }

    Scalar distance(const Vec& p) const { return std::abs(p.norm() - Scalar(1)); }

    Vec project(const Vec& p) const
    {
        const Scalar n = p.norm();
        if (n < floor_)
            throw NearFocalSet("|p| = " + std::to_string(double(n)) + " below floor " +
                               std::to_string(double(floor_)));
        return p / n;
    }

    //! Penalty as a function of s = d^2.
    Scalar profile(Scalar s) const
    {
        const Scalar g2 = gamma_ * gamma_;
        if (s < g2) return s;
        if (s >= Scalar(4) * g2) return Scalar(4) * g2;
        const Scalar t = (s - g2) / (Scalar(3) * g2);
        return g2 + Scalar(3) * g2 * blend(t);
    }

    //! dF/ds.
    Scalar profile_slope(Scalar s) const
    {
        const Scalar g2 = gamma_ * gamma_;
        if (s < g2) return Scalar(1);
        if (s >= Scalar(4) * g2) return Scalar(0);
        return blend_slope((s - g2) / (Scalar(3) * g2));
    }

    //! d^2F/ds^2.
    Scalar profile_curvature(Scalar s) const
    {
        const Scalar g2 = gamma_ * gamma_;
        if (s < g2 || s >= Scalar(4) * g2) return Scalar(0);
        const Scalar t = (s - g2) / (Scalar(3) * g2);
        return (Scalar(24) * t - Scalar(84) * t * t + Scalar(60) * t * t * t) / (Scalar(3) * g2);
    }

    Scalar penalty(const Vec& p) const
    {
        const Scalar d = p.norm() - Scalar(1);
        return profile(d * d);
    }

    Vec penalty_gradient(const Vec& p) const
    {
        const Scalar n = p.norm();
        const Scalar d = n - Scalar(1);
        const Scalar slope = profile_slope(d * d);
        if (slope == Scalar(0)) return Vec::Zero();
        return (slope * Scalar(2) * d / n) * p;
    }

    //! Scalar factor k with grad F(p) = k p; avoids temporaries in hot loops.
    Scalar gradient_factor(Scalar norm) const
    {
        const Scalar d = norm - Scalar(1);
        const Scalar slope = profile_slope(d * d);
        if (slope == Scalar(0)) return Scalar(0);
        return slope * Scalar(2) * d / norm;
    }

    //! Upper bound on the largest Hessian eigenvalue of F over R^3.
    Scalar curvature_bound() const { return curvature_; }

private:
    static Scalar blend(Scalar t)
    {
        const Scalar t2 = t * t;
        return t + Scalar(4) * t2 * t - Scalar(7) * t2 * t2 + Scalar(3) * t2 * t2 * t;
    }
    static Scalar blend_slope(Scalar t)
    {
        const Scalar t2 = t * t;
        return Scalar(1) + Scalar(12) * t2 - Scalar(28) * t2 * t + Scalar(15) * t2 * t2;
    }

    Scalar measure_curvature() const
    {
        // Radial eigenvalue G'' and tangential eigenvalue G'/rho of F(p) = G(|p|).
        Scalar best = Scalar(2);
        const int samples = 20000;
        const Scalar hi = Scalar(1) + Scalar(3) * gamma_;
        for (int i = 1; i <= samples; ++i) {
            const Scalar rho = hi * Scalar(i) / Scalar(samples);
            const Scalar d = rho - Scalar(1);
            const Scalar s = d * d;
            const Scalar g1 = profile_slope(s) * Scalar(2) * d;
            const Scalar g2 = profile_curvature(s) * Scalar(4) * s + Scalar(2) * profile_slope(s);
            best = std::max({best, g2, g1 / rho});
        }
        return best * Scalar(1.05);
    }

    Scalar gamma_;
    Scalar floor_;
    Scalar curvature_ = Scalar(2);
};

using SphereTargetd = SphereTarget<double>;

template <typename Scalar>
Scalar distance_to_target(const Eigen::Matrix<Scalar, 3, 1>& p, const SphereTarget<Scalar>& target)
{
    return target.distance(p);
}

template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> project_to_target(const Eigen::Matrix<Scalar, 3, 1>& p,
                                              const SphereTarget<Scalar>& target)
{
    return target.project(p);
}

template <typename Scalar>
Scalar penalty(const Eigen::Matrix<Scalar, 3, 1>& p, const SphereTarget<Scalar>& target)
{
    return target.penalty(p);
}

template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> penalty_gradient(const Eigen::Matrix<Scalar, 3, 1>& p,
                                             const SphereTarget<Scalar>& target)
{
    return target.penalty_gradient(p);
}

} // namespace glhm
