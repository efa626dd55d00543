#include "doctest.h"

#include "glhm/regions.hpp"
#include "glhm/solver.hpp"

#include "../oracles.hpp"

#include "json.hpp"

using namespace glhm;

TEST_SUITE("regions") {

TEST_CASE("drop scale on a single bubble")
{
    const GridDomain d(2, 1.25, 501);
    const FieldCache fc(synth_bubble(d, Vec::Zero(2), 0.01, 1), 0.05);
    const KernelProfile k = build_kernel(8.0, 2);
    const auto ds = find_drop_scale(fc, k, Vec::Zero(2), 0.35, fc.total_energy(), 0.25, 2 * d.h());
    CHECK(ds.drop <= 0.175);
    CHECK(ds.r <= 0.125);
    CHECK(ds.r >= 2 * d.h());
    CHECK(ds.drops.size() == static_cast<std::size_t>(ds.rung));
    CHECK_THROWS_AS(find_drop_scale(fc, k, Vec::Zero(2), 1e-6, fc.total_energy(), 0.25, 0.2), LadderExhausted);
}

TEST_CASE("collar ladder: every rung above the collar is flat")
{
    const GridDomain d(2, 1.25, 251);
    const FieldCache fc(synth_bubble(d, Vec::Zero(2), 0.02, 1), 0.05);
    const KernelProfile k = build_kernel(8.0, 2);
    const auto cs = collar_scale(fc, k, Vec::Zero(2), 0.25, 0.1, 1.189207115002721, 2 * d.h());
    CHECK(cs.plateau);
    for (const auto& [r, v] : cs.ladder)
        if (r >= cs.r) CHECK(v <= 0.1);
}

TEST_CASE("center refinement walks back to the tube axis")
{
    const GridDomain d(3, 1.0, 61);
    const FieldCache fc(synth_bubble_tube(d, Projector::axes(3, {2}), 0.15, Vec::Zero(3)), 0.05);
    const KernelProfile k = build_kernel(8.0, 3);
    const double r = 0.15;
    Vec x0(3);
    x0 << 0.1 * r, 0.0, 0.05;
    const auto res = refine_center(fc, k, x0, r);
    CHECK(res.converged);
    CHECK(std::hypot(res.x[0], res.x[1]) <= 1e-3 * r);
    CHECK(res.x[2] == doctest::Approx(0.05));
}

TEST_CASE("submanifold fit recovers a straight axis")
{
    const GridDomain d(3, 1.0, 61);
    const Projector axis = Projector::axes(3, {2});
    const FieldCache fc(synth_bubble_tube(d, axis, 0.15, Vec::Zero(3)), 0.05);
    const KernelProfile k = build_kernel(8.0, 3);
    const auto g = fit_submanifold(fc, k, Vec::Zero(3), axis, 0.3, 0.15, 0.25);
    REQUIRE(g.size() >= 3);
    CHECK(g.tangent_plane_gap < 1e-2);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(std::hypot(g.points[i][0], g.points[i][1]) < 1e-3);
}

TEST_CASE("one bubble decomposes into one bubble node and covers the ball")
{
    const GridDomain d(2, 1.25, 251);
    const FieldCache fc(synth_bubble(d, Vec::Zero(2), 0.05, 1), 0.05);
    const KernelProfile k = build_kernel(8.0, 2);
    DecompConfig cfg;
    cfg.delta2 = 0.35;
    const auto t = decompose(fc, k, Vec::Zero(2), 1.0, cfg);
    CHECK(t.count(RegionKind::bubble) == 1);
    CHECK(t.max_depth <= t.depth_bound);
    CHECK(t.junk_volume <= cfg.delta);
    CHECK(t.cover_fraction == doctest::Approx(1.0));
    double bubble = 0.0;
    for (const auto& n : t.nodes)
        if (n.kind == RegionKind::bubble) bubble = n.energy;
    CHECK(bubble == doctest::Approx(4 * oracle::pi).epsilon(0.05));

    const auto j = nlohmann::json::parse(t.to_json());
    CHECK(j["counts"]["bubble"] == 1);
    CHECK(j.contains("root"));
    CHECK(t.leaf_csv().find('\n') != std::string::npos);
    CHECK(t.to_json() == decompose(fc, k, Vec::Zero(2), 1.0, cfg).to_json());
}

TEST_CASE("constant field has no bubbles")
{
    const GridDomain d(2, 1.0, 65);
    const FieldCache fc(synth_constant(d, Eigen::Vector3d(0, 0, 1)), 0.05);
    const KernelProfile k = build_kernel(8.0, 2);
    const auto t = decompose(fc, k, Vec::Zero(2), 0.8, DecompConfig{});
    CHECK(t.count(RegionKind::bubble) == 0);
    CHECK(t.count(RegionKind::junk) == 0);
}

TEST_CASE("overlapping sub-balls are rejected")
{
    const GridDomain d(2, 1.0, 65);
    const FieldCache fc(synth_bubble(d, Vec::Zero(2), 0.2, 1), 0.05);
    const KernelProfile k = build_kernel(8.0, 2);
    Vec a(2), b(2);
    a << 0.1, 0.0;
    b << 0.15, 0.0;
    CHECK_THROWS_AS(check_bubble(fc, k, Vec::Zero(2), 0.5, Projector::zero(2), {{a, 0.1}, {b, 0.1}}, 0.25, 0.35, 1.0),
                    OverlappingSubBalls);
}

TEST_CASE("slice energy of the tube equals the disc energy")
{
    const GridDomain d(3, 1.0, 81);
    const Projector axis = Projector::axes(3, {2});
    const FieldCache fc(synth_bubble_tube(d, axis, 0.3, Vec::Zero(3)), 0.05);
    const auto s = slice_energy(fc, Vec::Zero(3), 0.9, axis, {});
    CHECK(s.first == doctest::Approx(oracle::bubble_energy_disc(0.9, 0.3)).epsilon(1e-2));
    CHECK(s.second == doctest::Approx(0.0).scale(1e-9));
    CHECK_THROWS_AS(slice_energy(fc, Vec::Zero(3), 1.2, axis, {}), BallOutOfDomain);
}

TEST_CASE("energy split on the tube: no tangential energy, hats below plain")
{
    const GridDomain d(3, 1.0, 61);
    const Projector axis = Projector::axes(3, {2});
    const FieldCache fc(synth_bubble_tube(d, axis, 0.1, Vec::Zero(3)), 0.05);
    const KernelProfile k = build_kernel(8.0, 3);
    const auto g = fit_submanifold(fc, k, Vec::Zero(3), axis, 0.3, 0.15, 0.25);
    REQUIRE(g.size() > 0);
    const std::vector<double> collar(g.size(), 0.1);
    const auto sp = energy_split(fc, k, g, collar, 0.5);
    CHECK(sp.E_L == doctest::Approx(0.0).scale(1e-12));
    CHECK(sp.hat_violations == 0);
    CHECK(sp.E_alpha_hat <= sp.E_alpha * (1 + 1e-12));
    CHECK(sp.E_n_hat <= sp.E_n * (1 + 1e-12));
    CHECK(sp.E_alpha > 0.0);
}

}
