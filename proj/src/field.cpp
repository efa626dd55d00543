#include "glhm/field.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>

namespace glhm {

GridDomain::GridDomain(int m_, double extent_, int n_) : m(m_), extent(extent_), n(n_)
{
    if (m != 2 && m != 3) throw InvalidArgument("grid dimension must be 2 or 3");
    if (!(extent > 0.0)) throw InvalidArgument("grid extent must be positive");
    if (n < 3) throw InvalidArgument("grid needs at least 3 nodes per axis");
}

std::size_t GridDomain::num_nodes() const
{
    std::size_t N = 1;
    for (int k = 0; k < m; ++k) N *= static_cast<std::size_t>(n);
    return N;
}

std::size_t GridDomain::stride(int k) const
{
    std::size_t s = 1;
    for (int j = m - 1; j > k; --j) s *= static_cast<std::size_t>(n);
    return s;
}

std::array<int, 3> GridDomain::unravel(std::size_t idx) const
{
    std::array<int, 3> ijk{0, 0, 0};
    for (int k = m - 1; k >= 0; --k) {
        ijk[k] = static_cast<int>(idx % static_cast<std::size_t>(n));
        idx /= static_cast<std::size_t>(n);
    }
    return ijk;
}

Vec GridDomain::position(std::size_t idx) const
{
    const auto ijk = unravel(idx);
    Vec x(m);
    for (int k = 0; k < m; ++k) x[k] = coord(ijk[k]);
    return x;
}

bool GridDomain::on_boundary(std::size_t idx) const
{
    const auto ijk = unravel(idx);
    for (int k = 0; k < m; ++k)
        if (ijk[k] == 0 || ijk[k] == n - 1) return true;
    return false;
}

double GridDomain::weight(std::size_t idx) const
{
    const auto ijk = unravel(idx);
    double w = cell_volume();
    for (int k = 0; k < m; ++k)
        if (ijk[k] == 0 || ijk[k] == n - 1) w *= 0.5;
    return w;
}

double GridDomain::cell_volume() const { return std::pow(h(), m); }

bool GridDomain::contains_ball(const Vec& center, double radius) const
{
    if (center.size() != m) throw InvalidArgument("point dimension does not match grid");
    const double tol = 1e-12 * extent;
    for (int k = 0; k < m; ++k)
        if (center[k] - radius < -extent - tol || center[k] + radius > extent + tol) return false;
    return true;
}

void GridDomain::node_window(const Vec& center, double radius, std::array<int, 3>& lo,
                             std::array<int, 3>& hi) const
{
    const double hh = h();
    lo = {0, 0, 0};
    hi = {0, 0, 0};
    for (int k = 0; k < m; ++k) {
        lo[k] = std::max(0, static_cast<int>(std::ceil((center[k] - radius + extent) / hh - 1e-9)));
        hi[k] = std::min(n - 1, static_cast<int>(std::floor((center[k] + radius + extent) / hh + 1e-9)));
    }
}

VectorField::VectorField(const GridDomain& d, int J_) : domain(d), J(J_)
{
    if (J < 1) throw InvalidArgument("field needs at least one component");
    values.assign(d.num_nodes() * static_cast<std::size_t>(J), 0.0);
}

bool VectorField::all_finite() const
{
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

namespace {

constexpr char kMagic[4] = {'G', 'L', 'H', 'M'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, T v)
{
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T get(std::istream& is)
{
    unsigned char b[sizeof(T)];
    is.read(reinterpret_cast<char*>(b), sizeof(T));
    if (!is) throw IoError("truncated field snapshot");
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
}

} // namespace

void write_field(const VectorField& f, const std::string& path)
{
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path + " for writing");
    const double nan = std::numeric_limits<double>::quiet_NaN();
    os.write(kMagic, 4);
    put<std::uint32_t>(os, kVersion);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(f.domain.m));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(f.domain.n));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(f.J));
    put<double>(os, f.domain.extent);
    put<double>(os, f.eps.value_or(nan));
    put<double>(os, f.residual.value_or(nan));
    if constexpr (std::endian::native == std::endian::little) {
        os.write(reinterpret_cast<const char*>(f.values.data()),
                 static_cast<std::streamsize>(f.values.size() * sizeof(double)));
    } else {
        for (double v : f.values) put<double>(os, v);
    }
    if (!os) throw IoError("write failed for " + path);
}

VectorField read_field(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) throw IoError(path + " is not a field snapshot");
    const auto version = get<std::uint32_t>(is);
    if (version != kVersion) throw IoError("unsupported snapshot version " + std::to_string(version));
    const auto m = get<std::uint32_t>(is);
    const auto n = get<std::uint32_t>(is);
    const auto J = get<std::uint32_t>(is);
    const double extent = get<double>(is);
    const double eps = get<double>(is);
    const double residual = get<double>(is);
    VectorField f;
    try {
        f = VectorField(GridDomain(static_cast<int>(m), extent, static_cast<int>(n)), static_cast<int>(J));
    } catch (const Error& e) {
        throw IoError(std::string("bad snapshot header: ") + e.what());
    }
    if (!std::isnan(eps)) f.eps = eps;
    if (!std::isnan(residual)) f.residual = residual;
    if constexpr (std::endian::native == std::endian::little) {
        is.read(reinterpret_cast<char*>(f.values.data()),
                static_cast<std::streamsize>(f.values.size() * sizeof(double)));
        if (!is) throw IoError("truncated field snapshot");
    } else {
        for (auto& v : f.values) v = get<double>(is);
    }
    if (is.peek() != std::char_traits<char>::eof()) throw IoError("trailing bytes in " + path);
    return f;
}

} // namespace glhm
