#include "doctest.h"

#include "glhm/field.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

using namespace glhm;

TEST_SUITE("field") {

TEST_CASE("trapezoid weights integrate constants exactly")
{
    for (int m : {2, 3}) {
        const GridDomain d(m, 0.75, 17);
        double s = 0.0;
        for (std::size_t i = 0; i < d.num_nodes(); ++i) s += d.weight(i);
        CHECK(s == doctest::Approx(std::pow(1.5, m)).epsilon(1e-12));
    }
}

TEST_CASE("index helpers agree")
{
    const GridDomain d(3, 1.0, 9);
    for (std::size_t idx : {std::size_t(0), std::size_t(100), d.num_nodes() - 1}) {
        const auto ijk = d.unravel(idx);
        const Vec y = d.position(idx);
        for (int a = 0; a < 3; ++a) CHECK(y[a] == doctest::Approx(d.coord(ijk[a])));
    }
    CHECK(d.on_boundary(0));
    CHECK_FALSE(d.on_boundary(d.num_nodes() / 2));
    CHECK(d.contains_ball(Vec::Zero(3), 1.0));
    CHECK_FALSE(d.contains_ball(Vec::Zero(3), 1.01));
}

TEST_CASE("snapshot round trip is exact")
{
    const GridDomain d(2, 1.25, 21);
    VectorField f(d, 3);
    std::mt19937 rng(5);
    std::normal_distribution<double> N;
    for (double& v : f.values) v = N(rng);
    f.eps = 0.05;
    f.residual = 1e-6;
    const auto path = (std::filesystem::temp_directory_path() / "glhm_roundtrip.glhm").string();
    write_field(f, path);
    const VectorField g = read_field(path);
    CHECK(g.domain == d);
    CHECK(g.J == 3);
    CHECK(g.values == f.values);
    CHECK(g.eps.value() == 0.05);
    CHECK(g.residual.value() == 1e-6);
    std::remove(path.c_str());
}

TEST_CASE("bad snapshots raise IoError")
{
    CHECK_THROWS_AS(read_field("/nonexistent/field.glhm"), IoError);
    const auto path = (std::filesystem::temp_directory_path() / "glhm_garbage.glhm").string();
    {
        std::ofstream o(path, std::ios::binary);
        o << "not a field";
    }
    CHECK_THROWS_AS(read_field(path), IoError);
    std::remove(path.c_str());
    CHECK_THROWS_AS(GridDomain(4, 1.0, 10), InvalidArgument);
}

}
