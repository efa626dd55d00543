#include "doctest.h"

#include "glhm/experiments.hpp"

#include "../oracles.hpp"

using namespace glhm;

TEST_SUITE("experiments") {

TEST_CASE("unit ball volumes")
{
    for (int k = 0; k <= 4; ++k) CHECK(unit_ball_volume(k) == doctest::Approx(oracle::ball_volume(k)).epsilon(1e-14));
    CHECK(unit_ball_volume(1) == doctest::Approx(2.0));
}

TEST_CASE("shell cutoff derivative")
{
    for (double rho : {0.3, 0.4, 0.45, 0.5, 0.55, 0.6}) {
        const double h = 1e-6;
        CHECK(shell_phi_d1(rho, 0.5, 0.125) ==
              doctest::Approx((shell_phi(rho + h, 0.5, 0.125) - shell_phi(rho - h, 0.5, 0.125)) / (2 * h))
                  .epsilon(1e-6)
                  .scale(1.0));
    }
    CHECK(shell_phi(0.3, 0.5, 0.125) == 1.0);
    CHECK(shell_phi(0.7, 0.5, 0.125) == 0.0);
}

TEST_CASE("conformality: constant field has zero residuals")
{
    const GridDomain d(2, 1.0, 65);
    const FieldCache fc(synth_constant(d, Eigen::Vector3d(1, 0, 0)), 0.1);
    const auto rep = conformality_check_2d(fc, Vec::Zero(2), {0.3, 0.5}, 0.25, 0.02);
    for (const auto& c : rep.checks) CHECK(c.residual == 0.0);
    CHECK(rep.all_pass());
    CHECK_THROWS_AS(conformality_check_2d(fc, Vec::Zero(2), {0.9}, 0.25, 0.02), ShellOutOfDomain);
}

TEST_CASE("conformality: exact bubble balances without penalty")
{
    const GridDomain d(2, 1.0, 401);
    const FieldCache fc(synth_bubble(d, Vec::Zero(2), 0.2, 1), 0.1);
    const auto t = conformality_terms(fc, Vec::Zero(2), 0.5, 0.25);
    CHECK(t.penalty_volume == doctest::Approx(0.0).scale(1e-12));
    CHECK(t.angular == doctest::Approx(t.radial).epsilon(1e-3));
}

TEST_CASE("angular energy of a bubble")
{
    const GridDomain d(2, 1.0, 401);
    const FieldCache fc(synth_bubble(d, Vec::Zero(2), 0.1, 1), 0.1);
    for (double s : {0.05, 0.1, 0.3, 0.6})
        CHECK(angular_energy(fc, Vec::Zero(2), Projector::zero(2), s) ==
              doctest::Approx(oracle::bubble_angular_energy(s, 0.1)).epsilon(1e-2));
    CHECK_THROWS_AS(angular_energy(fc, Vec::Zero(2), Projector::zero(2), 1.2), CircleOutOfDomain);
}

TEST_CASE("superconvexity ratio on the synthesized tube follows the closed form")
{
    const GridDomain d(3, 1.0, 81);
    const Projector L = Projector::axes(3, {2});
    const FieldCache fc(synth_bubble_tube(d, L, 0.1, Vec::Zero(3)), 0.05);
    std::vector<SuperconvexityProbe> probes;
    for (double s : {0.3, 0.45, 0.6}) probes.push_back({Vec::Zero(3), s});
    const auto rep = angular_superconvexity_check(fc, L, probes);
    for (std::size_t i = 0; i < probes.size(); ++i) {
        const double s = probes[i].s;
        // The stencil sees log-step averaging; compare with the averaged closed form.
        const double kap = 0.15;
        const double Ep = oracle::bubble_angular_energy(s * std::exp(kap), 0.1);
        const double Em = oracle::bubble_angular_energy(s * std::exp(-kap), 0.1);
        const double E0 = oracle::bubble_angular_energy(s, 0.1);
        const double ratio = (Ep - 2 * E0 + Em) / (kap * kap) / E0;
        CHECK(rep.checks[i].lhs == doctest::Approx(ratio).epsilon(0.05));
        CHECK(rep.checks[i].residual == doctest::Approx(rep.checks[i].lhs - 1.5));
    }
    CHECK(rep.all_pass());
}

TEST_CASE("superconvexity skips probes with no angular energy")
{
    const GridDomain d(3, 1.0, 21);
    const FieldCache fc(synth_constant(d, Eigen::Vector3d(0, 0, 1)), 0.05);
    const auto rep = angular_superconvexity_check(fc, Projector::axes(3, {2}), {{Vec::Zero(3), 0.3}});
    REQUIRE(rep.checks.size() == 1);
    CHECK_FALSE(rep.checks[0].asserted);
    CHECK(rep.checks[0].note.find("ZeroAngularEnergy") != std::string::npos);
}

TEST_CASE("annulus energy shrinks as the excluded tubes grow")
{
    const GridDomain d(3, 1.0, 41);
    const Projector axis = Projector::axes(3, {2});
    const FieldCache fc(synth_bubble_tube(d, axis, 0.1, Vec::Zero(3)), 0.05);
    const KernelProfile k = build_kernel(8.0, 3);
    AnnularRegion A;
    A.p = Vec::Zero(3);
    A.radius = 0.5;
    A.L_A = axis;
    A.graph = fit_submanifold(fc, k, A.p, axis, 0.5, 0.15, 0.25);
    REQUIRE(A.graph.size() > 0);
    A.collar.assign(A.graph.size(), 0.2);
    CHECK(annulus_energy(fc, A, 0.0) == doctest::Approx(ball_energy(fc, A.p, A.radius, {})));
    double prev = annulus_energy(fc, A, 0.0);
    for (double s : {0.25, 0.5, 1.0, 2.0}) {
        const double e = annulus_energy(fc, A, s);
        CHECK(e <= prev);
        prev = e;
    }
}

TEST_CASE("reports are deterministic and carry tolerances")
{
    const GridDomain d(2, 1.0, 65);
    const FieldCache fc(synth_bubble(d, Vec::Zero(2), 0.5, 1), 0.1);
    const auto a = conformality_check_2d(fc, Vec::Zero(2), {0.4}, 0.25, 0.02);
    const auto b = conformality_check_2d(fc, Vec::Zero(2), {0.4}, 0.25, 0.02);
    CHECK(a.to_text() == b.to_text());
    CHECK(a.checks_csv() == b.checks_csv());
    CHECK(a.to_text().find("runtime") == std::string::npos);
    for (const auto& c : a.checks) CHECK(c.tolerance == 0.02);
    CHECK_THROWS_AS(a.find("nothing"), InvalidArgument);
}

TEST_CASE("identity experiment: constant boundary gives no bubbles")
{
    IdentityConfig cfg;
    cfg.n = 25;
    cfg.constant = true;
    cfg.slice_offsets = {0.0};
    const auto res = energy_identity_experiment(cfg);
    REQUIRE(res.rows.size() == 3);
    for (const auto& r : res.rows) {
        CHECK(r.bubble_nodes == 0);
        CHECK(r.theta == doctest::Approx(0.0).scale(1e-12));
    }
    CHECK(res.report.find("no_bubbles").pass);
    CHECK_THROWS_AS(energy_identity_experiment([] {
                        IdentityConfig c;
                        c.eps = {0.1, 0.2};
                        return c;
                    }()),
                    InvalidArgument);
}

}
