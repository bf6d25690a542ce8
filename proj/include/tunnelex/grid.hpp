#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "errors.hpp"

namespace tunnelex {

using cplx = std::complex<double>;

// Uniform periodic grid. Points sit at x_j = (j - origin) * dx, so when the
// origin index is an integer x = 0 is a grid point and the mirror of j is n - j.
class Grid1D {
public:
    Grid1D() = default;

    Grid1D(double x_min, double x_max, std::size_t n_points) : n_(n_points) {
        require(std::isfinite(x_min) && std::isfinite(x_max) && x_min < 0.0 && 0.0 < x_max,
                ErrorKind::invalid_argument, "grid must satisfy x_min < 0 < x_max");
        require(n_points >= 2 && std::has_single_bit(n_points), ErrorKind::invalid_argument,
                "n_points must be a power of two");
        dx_ = (x_max - x_min) / static_cast<double>(n_points);
        origin_ = -x_min / dx_;
        double nearest = std::round(origin_);
        if (std::abs(origin_ - nearest) < 1e-9) origin_ = nearest;
    }

    // Grid with the given first point and spacing (used when reading snapshots).
    static Grid1D uniform(std::size_t n_points, double x_min, double dx) {
        require(dx > 0.0 && std::isfinite(dx), ErrorKind::invalid_argument, "dx must be positive");
        Grid1D g(x_min, x_min + static_cast<double>(n_points) * dx, n_points);
        g.dx_ = dx;
        g.origin_ = -x_min / dx;
        double nearest = std::round(g.origin_);
        if (std::abs(g.origin_ - nearest) < 1e-9) g.origin_ = nearest;
        return g;
    }

    // Symmetric grid with x = 0 at index n/2.
    static Grid1D centered(std::size_t n_points, double dx) {
        require(dx > 0.0 && std::isfinite(dx), ErrorKind::invalid_argument, "dx must be positive");
        require(n_points >= 2 && std::has_single_bit(n_points), ErrorKind::invalid_argument,
                "n_points must be a power of two");
        Grid1D g;
        g.n_ = n_points;
        g.dx_ = dx;
        g.origin_ = static_cast<double>(n_points / 2);
        return g;
    }

    std::size_t size() const { return n_; }
    double dx() const { return dx_; }
    double x_min() const { return x(0); }
    double x_max() const { return x_min() + static_cast<double>(n_) * dx_; }
    double length() const { return static_cast<double>(n_) * dx_; }
    double half_width() const { return std::min(-x_min(), x_max()); }
    double dk() const { return 2.0 * std::numbers::pi / length(); }
    double x(std::size_t j) const { return (static_cast<double>(j) - origin_) * dx_; }

    // Wave number of FFT bin m (standard ordering: 0, 1, ..., n/2-1, -n/2, ..., -1).
    double k(std::size_t m) const {
        auto n = static_cast<std::ptrdiff_t>(n_);
        auto mm = static_cast<std::ptrdiff_t>(m);
        return static_cast<double>(mm < n / 2 ? mm : mm - n) * dk();
    }
    double k_nyquist() const { return std::numbers::pi / dx_; }

    bool symmetric() const { return origin_ == static_cast<double>(n_ / 2); }
    std::size_t mirror(std::size_t j) const { return (n_ - j) % n_; }

    // Fraction of the cell [x_j - dx/2, x_j + dx/2] lying inside [lo, hi].
    double cell_fraction(std::size_t j, double lo, double hi) const {
        double l = x(j) - 0.5 * dx_, r = x(j) + 0.5 * dx_;
        if (lo <= l && hi >= r) return 1.0;
        double a = std::max(lo, l);
        double b = std::min(hi, r);
        return b > a ? (b - a) / dx_ : 0.0;
    }

    std::vector<double> weights(double lo, double hi) const {
        std::vector<double> w(n_);
        for (std::size_t j = 0; j < n_; ++j) w[j] = cell_fraction(j, lo, hi);
        return w;
    }

    bool operator==(const Grid1D& o) const {
        return n_ == o.n_ && dx_ == o.dx_ && origin_ == o.origin_;
    }

private:
    std::size_t n_ = 0;
    double dx_ = 0.0;
    double origin_ = 0.0;
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Field1D {
    Grid1D grid;
    std::vector<cplx> values;

    Field1D() = default;
    explicit Field1D(const Grid1D& g) : grid(g), values(g.size()) {}
    Field1D(const Grid1D& g, std::vector<cplx> v) : grid(g), values(std::move(v)) {
        require(values.size() == grid.size(), ErrorKind::invalid_argument,
                "field length does not match grid");
    }
    std::size_t size() const { return values.size(); }
    cplx& operator[](std::size_t j) { return values[j]; }
    const cplx& operator[](std::size_t j) const { return values[j]; }
};

// Row-major, x1 is the slow index: values[i * n + j] = Phi(x1_i, x2_j).
struct Field2D {
    Grid1D grid;
    std::vector<cplx> values;

    Field2D() = default;
    explicit Field2D(const Grid1D& g) : grid(g), values(g.size() * g.size()) {}
    std::size_t n() const { return grid.size(); }
    cplx& operator()(std::size_t i, std::size_t j) { return values[i * grid.size() + j]; }
    const cplx& operator()(std::size_t i, std::size_t j) const {
        return values[i * grid.size() + j];
    }
};

inline void require_same_grid(const Grid1D& a, const Grid1D& b) {
    require(a == b, ErrorKind::invalid_argument, "fields live on different grids");
}

inline cplx inner_product(const Field1D& f, const Field1D& g, double x_lo, double x_hi) {
    require_same_grid(f.grid, g.grid);
    require(x_lo < x_hi, ErrorKind::invalid_argument, "inner_product needs x_lo < x_hi");
    cplx acc = 0.0;
    for (std::size_t j = 0; j < f.size(); ++j) {
        double w = f.grid.cell_fraction(j, x_lo, x_hi);
        if (w != 0.0) acc += w * std::conj(f[j]) * g[j];
    }
    return acc * f.grid.dx();
}

inline cplx inner_product(const Field1D& f, const Field1D& g) {
    require_same_grid(f.grid, g.grid);
    cplx acc = 0.0;
    for (std::size_t j = 0; j < f.size(); ++j) acc += std::conj(f[j]) * g[j];
    return acc * f.grid.dx();
}

inline double norm(const Field1D& f) {
    double acc = 0.0;
    for (const auto& v : f.values) acc += std::norm(v);
    return acc * f.grid.dx();
}

inline double norm(const Field1D& f, double x_lo, double x_hi) {
    return inner_product(f, f, x_lo, x_hi).real();
}

inline double norm(const Field2D& f) {
    double acc = 0.0;
    for (const auto& v : f.values) acc += std::norm(v);
    return acc * f.grid.dx() * f.grid.dx();
}

enum class Quadrant { LL, LR, RL, RR };

// Masses of |Phi|^2 over products of 1D regions given by cell weights.
template <std::size_t K>
std::array<std::array<double, K>, K> region_masses(const Field2D& f,
                                                   const std::array<std::vector<double>, K>& w) {
    const std::size_t n = f.n();
    std::array<std::array<double, K>, K> out{};
    for (std::size_t i = 0; i < n; ++i) {
        std::array<double, K> row{};
        const cplx* r = f.values.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            double p = std::norm(r[j]);
            for (std::size_t b = 0; b < K; ++b) row[b] += w[b][j] * p;
        }
        for (std::size_t a = 0; a < K; ++a)
            if (w[a][i] != 0.0)
                for (std::size_t b = 0; b < K; ++b) out[a][b] += w[a][i] * row[b];
    }
    double area = f.grid.dx() * f.grid.dx();
    for (auto& row : out)
        for (auto& v : row) v *= area;
    return out;
}

inline double quadrant_norm(const Field2D& f, Quadrant q) {
    std::array<std::vector<double>, 2> w{f.grid.weights(-kInf, 0.0), f.grid.weights(0.0, kInf)};
    auto m = region_masses(f, w);
    switch (q) {
        case Quadrant::LL: return m[0][0];
        case Quadrant::LR: return m[0][1];
        case Quadrant::RL: return m[1][0];
        case Quadrant::RR: return m[1][1];
    }
    return 0.0;
}

// Snapshot format: u64 n_points, f64 x_min, f64 dx, then interleaved (re, im)
// doubles, little-endian. 1D and 2D fields differ only in payload length.
namespace detail {

inline std::uint64_t to_le(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::big) v = __builtin_bswap64(v);
    return v;
}

template <class T>
void write_le(std::ostream& os, T v) {
    static_assert(sizeof(T) == 8);
    auto u = to_le(std::bit_cast<std::uint64_t>(v));
    os.write(reinterpret_cast<const char*>(&u), sizeof u);
}

template <class T>
T read_le(std::istream& is) {
    std::uint64_t u = 0;
    is.read(reinterpret_cast<char*>(&u), sizeof u);
    return std::bit_cast<T>(to_le(u));
}

inline void write_payload(std::ostream& os, const Grid1D& g, const std::vector<cplx>& values) {
    write_le<std::uint64_t>(os, g.size());
    write_le(os, g.x_min());
    write_le(os, g.dx());
    for (const auto& v : values) {
        write_le(os, v.real());
        write_le(os, v.imag());
    }
}

inline std::vector<cplx> read_payload(const std::string& path, Grid1D& g, std::size_t dims) {
    std::ifstream is(path, std::ios::binary);
    require(bool(is), ErrorKind::io, "cannot open " + path);
    auto n = read_le<std::uint64_t>(is);
    double x_min = read_le<double>(is);
    double dx = read_le<double>(is);
    require(bool(is) && n >= 2, ErrorKind::io, "truncated header in " + path);
    g = Grid1D::uniform(n, x_min, dx);
    std::size_t count = dims == 1 ? n : n * n;
    std::vector<cplx> values(count);
    for (auto& v : values) {
        double re = read_le<double>(is);
        double im = read_le<double>(is);
        v = {re, im};
    }
    require(bool(is), ErrorKind::io, "truncated payload in " + path);
    require(is.peek() == std::char_traits<char>::eof(), ErrorKind::io,
            "trailing data in " + path + " (wrong dimensionality?)");
    return values;
}

}  // namespace detail

inline void write_field(const std::string& path, const Field1D& f) {
    std::ofstream os(path, std::ios::binary);
    require(bool(os), ErrorKind::io, "cannot write " + path);
    detail::write_payload(os, f.grid, f.values);
}

inline void write_field(const std::string& path, const Field2D& f) {
    std::ofstream os(path, std::ios::binary);
    require(bool(os), ErrorKind::io, "cannot write " + path);
    detail::write_payload(os, f.grid, f.values);
}

inline Field1D read_field_1d(const std::string& path) {
    Grid1D g;
    auto v = detail::read_payload(path, g, 1);
    return Field1D(g, std::move(v));
}

inline Field2D read_field_2d(const std::string& path) {
    Grid1D g;
    auto v = detail::read_payload(path, g, 2);
    Field2D f(g);
    f.values = std::move(v);
    return f;
}

}  // namespace tunnelex
