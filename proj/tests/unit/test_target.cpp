#include "doctest.h"

#include "glhm/target.hpp"

#include <random>

using namespace glhm;

TEST_SUITE("target") {

TEST_CASE("penalty is the squared distance inside the band and flat far away")
{
    const SphereTargetd T(0.4, 0.05);
    for (double d : {-0.35, -0.1, 0.0, 0.2, 0.39}) {
        const Eigen::Vector3d p(0.0, 0.0, 1.0 + d);
        CHECK(T.penalty(p) == doctest::Approx(d * d).epsilon(1e-14));
    }
    for (double n : {1.81, 2.5, 7.0}) CHECK(T.penalty(Eigen::Vector3d(n, 0.0, 0.0)) == doctest::Approx(4 * 0.16));
}

TEST_CASE("profile is C1 across both transitions and monotone")
{
    const SphereTargetd T(0.3);
    const double g2 = 0.09;
    for (double s0 : {g2, 4 * g2}) {
        const double h = 1e-7;
        CHECK(T.profile(s0 - h) == doctest::Approx(T.profile(s0 + h)).epsilon(1e-6));
        CHECK(T.profile_slope(s0 - h) == doctest::Approx(T.profile_slope(s0 + h)).epsilon(1e-5));
    }
    double prev = 0.0;
    for (int i = 0; i <= 1000; ++i) {
        const double s = 5 * g2 * i / 1000.0;
        CHECK(T.profile(s) >= prev - 1e-15);
        prev = T.profile(s);
    }
}

TEST_CASE("penalty gradient matches central differences")
{
    const SphereTargetd T;
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> U(-1.6, 1.6);
    for (int trial = 0; trial < 200; ++trial) {
        Eigen::Vector3d p(U(rng), U(rng), U(rng));
        if (p.norm() < 0.2) continue;
        const Eigen::Vector3d g = T.penalty_gradient(p);
        for (int a = 0; a < 3; ++a) {
            const double h = 1e-6;
            Eigen::Vector3d e = Eigen::Vector3d::Zero();
            e[a] = h;
            const double fd = (T.penalty(p + e) - T.penalty(p - e)) / (2 * h);
            CHECK(g[a] == doctest::Approx(fd).epsilon(1e-5).scale(1.0));
        }
    }
}

TEST_CASE("projection and the focal floor")
{
    const SphereTargetd T(0.4, 0.05);
    CHECK(T.project(Eigen::Vector3d(0, 3, 4)).isApprox(Eigen::Vector3d(0, 0.6, 0.8)));
    CHECK_THROWS_AS(T.project(Eigen::Vector3d(0.01, 0, 0)), NearFocalSet);
    CHECK_THROWS_AS(SphereTargetd(0.6), InvalidArgument);
    CHECK(T.curvature_bound() >= 2.0);
}

}
