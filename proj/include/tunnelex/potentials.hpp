#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "grid.hpp"
#include "units.hpp"

namespace tunnelex {

enum class BarrierKind { single, double_barrier };

struct BarrierSpec {
    BarrierKind kind = BarrierKind::double_barrier;
    double height = 0.4;      // eV
    double width = 0.8;       // nm
    double well_width = 5.6;  // nm, double barrier only
    double bias = 0.0;        // V across the active region

    static BarrierSpec single(double height, double width, double bias = 0.0) {
        return {BarrierKind::single, height, width, 0.0, bias};
    }
    static BarrierSpec double_barrier(double height, double width, double well, double bias = 0.0) {
        return {BarrierKind::double_barrier, height, width, well, bias};
    }
};

struct Interval {
    double lo, hi;
};

inline void check_barrier(const BarrierSpec& s) {
    require(s.height > 0.0 && s.width > 0.0, ErrorKind::invalid_argument,
            "barrier height and width must be positive");
    require(s.kind == BarrierKind::single || s.well_width > 0.0, ErrorKind::invalid_argument,
            "double barrier needs a positive well width");
    require(std::isfinite(s.bias), ErrorKind::invalid_argument, "bias must be finite");
}

// Left edge of the first barrier to right edge of the last one.
inline Interval active_region(const BarrierSpec& s) {
    double h = s.kind == BarrierKind::single ? 0.5 * s.width : 0.5 * s.well_width + s.width;
    return {-h, h};
}

inline double device_half_extent(const BarrierSpec& s) { return active_region(s).hi; }

inline std::vector<Interval> barrier_intervals(const BarrierSpec& s) {
    if (s.kind == BarrierKind::single) return {{-0.5 * s.width, 0.5 * s.width}};
    double w = 0.5 * s.well_width;
    return {{-w - s.width, -w}, {w, w + s.width}};
}

// Linear drop of `bias` eV across the active region; flat outside.
inline double bias_ramp(const BarrierSpec& s, double x) {
    if (s.bias == 0.0) return 0.0;
    auto [a, b] = active_region(s);
    return -s.bias * std::clamp((x - a) / (b - a), 0.0, 1.0);
}

inline double barrier_value(const BarrierSpec& s, double x) {
    double v = bias_ramp(s, x);
    for (auto [lo, hi] : barrier_intervals(s))
        if (x >= lo && x <= hi) v += s.height;
    return v;
}

// Cell averages of V over [x_j - dx/2, x_j + dx/2]. The integrated barrier
// strength is exact for any dx; with bias = 0 the result is mirror-symmetric.
inline std::vector<double> sample_barrier(const BarrierSpec& s, const Grid1D& g) {
    check_barrier(s);
    require(s.width >= g.dx() * (1.0 - 1e-12), ErrorKind::resolution,
            "barrier width " + std::to_string(s.width) + " nm is narrower than dx = " +
                std::to_string(g.dx()) + " nm");
    require(s.kind == BarrierKind::single || s.well_width >= g.dx() * (1.0 - 1e-12),
            ErrorKind::resolution, "well narrower than dx");

    auto [a, b] = active_region(s);
    // Antiderivative of the ramp.
    auto ramp_integral = [&](double x) {
        if (x <= a) return 0.0;
        if (x <= b) return -s.bias * (x - a) * (x - a) / (2.0 * (b - a));
        return -s.bias * (0.5 * (b - a) + (x - b));
    };
    std::vector<double> v(g.size(), 0.0);
    auto intervals = barrier_intervals(s);
    for (std::size_t j = 0; j < g.size(); ++j) {
        double acc = 0.0;
        // Sum in a fixed outward order so mirrored cells see identical arithmetic.
        if (intervals.size() == 1) {
            acc = s.height * g.cell_fraction(j, intervals[0].lo, intervals[0].hi);
        } else {
            double x = g.x(j);
            const auto& near = x < 0.0 ? intervals[0] : intervals[1];
            const auto& far = x < 0.0 ? intervals[1] : intervals[0];
            acc = s.height * g.cell_fraction(j, near.lo, near.hi) +
                  s.height * g.cell_fraction(j, far.lo, far.hi);
        }
        if (s.bias != 0.0) {
            double h = 0.5 * g.dx();
            if (g.x(j) - h >= b)
                acc += -s.bias;
            else if (g.x(j) + h > a)
                acc += (ramp_integral(g.x(j) + h) - ramp_integral(g.x(j) - h)) / g.dx();
        }
        v[j] = acc;
    }
    return v;
}

// Piecewise-constant profile: left_level for x < first segment, right_level after the last.
struct PotentialProfile {
    struct Segment {
        double x_lo, x_hi, value;
    };
    double left_level = 0.0;
    double right_level = 0.0;
    std::vector<Segment> segments;

    double value(double x) const {
        if (segments.empty() || x < segments.front().x_lo) return left_level;
        for (const auto& s : segments)
            if (x < s.x_hi) return s.value;
        return right_level;
    }
};

inline PotentialProfile staircase_profile(const BarrierSpec& s, int ramp_segments = 64) {
    check_barrier(s);
    require(ramp_segments >= 1, ErrorKind::invalid_argument, "ramp_segments must be >= 1");
    auto [a, b] = active_region(s);
    std::vector<double> cuts{a, b};
    for (auto iv : barrier_intervals(s)) {
        cuts.push_back(iv.lo);
        cuts.push_back(iv.hi);
    }
    if (s.bias != 0.0)
        for (int i = 1; i < ramp_segments; ++i) cuts.push_back(a + (b - a) * i / ramp_segments);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    auto stair_ramp = [&](double x) {
        if (s.bias == 0.0) return 0.0;
        double u = (x - a) / (b - a);
        double cell = std::floor(std::clamp(u, 0.0, 1.0 - 1e-15) * ramp_segments);
        return -s.bias * (cell + 0.5) / ramp_segments;
    };
    PotentialProfile p;
    p.left_level = 0.0;
    p.right_level = -s.bias;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        double mid = 0.5 * (cuts[i] + cuts[i + 1]);
        double v = stair_ramp(mid);
        for (auto iv : barrier_intervals(s))
            if (mid > iv.lo && mid < iv.hi) v += s.height;
        p.segments.push_back({cuts[i], cuts[i + 1], v});
    }
    return p;
}

// Profile whose cells are the grid cells of a sampled array. The contact levels
// are the first and last samples; equal neighbouring cells are merged.
inline PotentialProfile profile_from_samples(std::span<const double> v, const Grid1D& g) {
    require(v.size() == g.size(), ErrorKind::invalid_argument, "potential length != grid size");
    PotentialProfile p;
    p.left_level = v.front();
    p.right_level = v.back();
    std::size_t lo = 0, hi = v.size();
    while (lo < hi && v[lo] == p.left_level) ++lo;
    while (hi > lo && v[hi - 1] == p.right_level) --hi;
    double h = 0.5 * g.dx();
    for (std::size_t j = lo; j < hi; ++j) {
        if (!p.segments.empty() && p.segments.back().value == v[j])
            p.segments.back().x_hi = g.x(j) + h;
        else
            p.segments.push_back({g.x(j) - h, g.x(j) + h, v[j]});
    }
    return p;
}

enum class CoulombWindow { as_printed, squared };

struct CoulombSpec {
    double strength = 0.0;  // C
    double a_c = 1.2;       // nm
    double sigma_c = 5.0;
    double epsilon_r = 11.6;
    CoulombWindow window = CoulombWindow::as_printed;
};

inline double coulomb_value(const CoulombSpec& s, double x1, double x2) {
    double coeff = coulomb_coeff_vacuum / s.epsilon_r;
    double scale = s.window == CoulombWindow::as_printed ? s.sigma_c : s.sigma_c * s.sigma_c;
    double dx = x1 - x2;
    return coeff * std::exp(-(x1 * x1 + x2 * x2) / scale) / std::sqrt(dx * dx + s.a_c * s.a_c);
}

// Softened, windowed Coulomb term without the strength factor C. Row-major n*n.
inline std::vector<double> sample_coulomb(const CoulombSpec& s, const Grid1D& g) {
    require(s.a_c > 0.0 && s.sigma_c > 0.0 && s.epsilon_r >= 1.0, ErrorKind::invalid_argument,
            "Coulomb spec needs a_c > 0, sigma_c > 0, epsilon_r >= 1");
    const std::size_t n = g.size();
    std::vector<double> v(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) v[i * n + j] = coulomb_value(s, g.x(i), g.x(j));
    return v;
}

inline std::vector<double> total_potential_2d(std::span<const double> vb,
                                              const std::optional<CoulombSpec>& coulomb,
                                              const Grid1D& g) {
    const std::size_t n = g.size();
    require(vb.size() == n, ErrorKind::invalid_argument, "potential length != grid size");
    std::vector<double> v(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) v[i * n + j] = vb[i] + vb[j];
    if (coulomb && coulomb->strength != 0.0) {
        auto vc = sample_coulomb(*coulomb, g);
        for (std::size_t k = 0; k < v.size(); ++k) v[k] += coulomb->strength * vc[k];
    }
    return v;
}

inline std::vector<double> total_potential_2d(const BarrierSpec& barrier,
                                              const std::optional<CoulombSpec>& coulomb,
                                              const Grid1D& g) {
    auto vb = sample_barrier(barrier, g);
    return total_potential_2d(vb, coulomb, g);
}

}  // namespace tunnelex
