#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "fft.hpp"
#include "grid.hpp"
#include "units.hpp"

namespace tunnelex {

struct PropagatorConfig {
    double dt = 0.05;               // fs
    double t_end = 700.0;           // fs
    std::size_t snapshot_stride = 200;  // steps
    double guard_width = 20.0;      // nm at each domain edge
    double guard_tolerance = 1e-4;  // max mass allowed inside the guard bands
};

// Number of steps and the step actually used so that n * dt == t_end.
inline std::pair<std::size_t, double> step_plan(const PropagatorConfig& cfg) {
    require(cfg.dt > 0.0 && cfg.t_end >= 0.0, ErrorKind::invalid_argument,
            "dt must be positive and t_end non-negative");
    auto n = static_cast<std::size_t>(std::llround(cfg.t_end / cfg.dt));
    if (n == 0) return {0, cfg.dt};
    return {n, cfg.t_end / static_cast<double>(n)};
}

namespace detail {

inline std::vector<cplx> potential_half_phase(std::span<const double> v, double dt,
                                              const Constants& c) {
    std::vector<cplx> p(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        double ph = -0.5 * v[i] * dt / c.hbar;
        p[i] = {std::cos(ph), std::sin(ph)};
    }
    return p;
}

// exp(-i kc k^2 dt / hbar) with the 1/n of the inverse transform folded in.
inline std::vector<cplx> kinetic_phase(const Grid1D& g, double dt, const Constants& c) {
    std::vector<cplx> p(g.size());
    double inv_n = 1.0 / static_cast<double>(g.size());
    for (std::size_t m = 0; m < g.size(); ++m) {
        double ph = -c.energy(g.k(m)) * dt / c.hbar;
        p[m] = inv_n * cplx(std::cos(ph), std::sin(ph));
    }
    return p;
}

inline std::vector<std::size_t> guard_cells(const Grid1D& g, double width) {
    std::vector<std::size_t> cells;
    for (std::size_t j = 0; j < g.size(); ++j)
        if (g.x(j) < g.x_min() + width || g.x(j) > g.x_max() - width) cells.push_back(j);
    return cells;
}

// p *= f element-wise, written out so it is not routed through the
// Annex G complex multiply (the phases are finite by construction).
inline void multiply(cplx* p, const cplx* f, std::size_t n) {
    for (std::size_t j = 0; j < n; ++j) {
        double a = p[j].real(), b = p[j].imag(), c = f[j].real(), d = f[j].imag();
        p[j] = cplx(a * c - b * d, a * d + b * c);
    }
}

[[noreturn]] inline void wrap_error(double t, double mass) {
    fail(ErrorKind::domain_too_small, "probability " + std::to_string(mass) +
                                          " reached the guard band at t = " + std::to_string(t) +
                                          " fs; enlarge the domain");
}

}  // namespace detail

// Strang split-step for a batch of independent 1D wave functions sharing V.
// Fields are stepped one at a time so each stays in cache; the stride keeps
// every field at the alignment the single-field plan was made for.
class SplitStep1D {
public:
    SplitStep1D(const Grid1D& g, std::span<const double> v, double dt, const Constants& c,
                std::size_t batch = 1)
        : grid_(g),
          batch_(batch),
          stride_((g.size() + 3) / 4 * 4),
          buf_(stride_ * batch),
          fft_(g.size(), 1, buf_.data()),
          vhalf_(detail::potential_half_phase(v, dt, c)),
          kin_(detail::kinetic_phase(g, dt, c)) {
        require(v.size() == g.size(), ErrorKind::invalid_argument, "potential length != grid size");
    }

    std::size_t batch() const { return batch_; }
    const Grid1D& grid() const { return grid_; }

    void load(std::size_t b, const Field1D& f) {
        require_same_grid(f.grid, grid_);
        std::copy(f.values.begin(), f.values.end(), buf_.data() + b * stride_);
    }
    Field1D get(std::size_t b) const {
        const cplx* p = buf_.data() + b * stride_;
        return Field1D(grid_, std::vector<cplx>(p, p + grid_.size()));
    }

    void step() {
        const std::size_t n = grid_.size();
        for (std::size_t b = 0; b < batch_; ++b) {
            cplx* p = buf_.data() + b * stride_;
            detail::multiply(p, vhalf_.data(), n);
            fft_.forward(p);
            detail::multiply(p, kin_.data(), n);
            fft_.backward(p);
            detail::multiply(p, vhalf_.data(), n);
        }
    }

    double mass(std::size_t b, std::span<const std::size_t> cells) const {
        const cplx* p = buf_.data() + b * stride_;
        double acc = 0.0;
        for (auto j : cells) acc += std::norm(p[j]);
        return acc * grid_.dx();
    }

private:
    Grid1D grid_;
    std::size_t batch_;
    std::size_t stride_;
    AlignedBuffer buf_;
    BatchedFft fft_;
    std::vector<cplx> vhalf_;
    std::vector<cplx> kin_;
};

using Observer1D = std::function<void(double t, std::span<const Field1D>)>;

// Evolves every field of the batch to cfg.t_end. The observer sees t = 0, every
// snapshot_stride steps, and the final time. Returns the final fields.
inline std::vector<Field1D> evolve_1d(std::span<const Field1D> psi0, std::span<const double> v,
                                      const PropagatorConfig& cfg, const Constants& c,
                                      const Observer1D& observer = {}) {
    require(!psi0.empty(), ErrorKind::invalid_argument, "nothing to evolve");
    const Grid1D& g = psi0.front().grid;
    auto [steps, dt] = step_plan(cfg);
    SplitStep1D prop(g, v, dt, c, psi0.size());
    for (std::size_t b = 0; b < psi0.size(); ++b) prop.load(b, psi0[b]);
    auto guard = detail::guard_cells(g, cfg.guard_width);
    std::size_t stride = std::max<std::size_t>(cfg.snapshot_stride, 1);

    auto snapshot = [&](double t) {
        if (!observer) return;
        std::vector<Field1D> now;
        for (std::size_t b = 0; b < psi0.size(); ++b) now.push_back(prop.get(b));
        observer(t, now);
    };
    snapshot(0.0);
    for (std::size_t s = 1; s <= steps; ++s) {
        prop.step();
        double t = static_cast<double>(s) * dt;
        for (std::size_t b = 0; b < psi0.size(); ++b) {
            double m = prop.mass(b, guard);
            if (m > cfg.guard_tolerance) detail::wrap_error(t, m);
        }
        if (s % stride == 0 || s == steps) snapshot(t);
    }
    std::vector<Field1D> out;
    for (std::size_t b = 0; b < psi0.size(); ++b) out.push_back(prop.get(b));
    return out;
}

struct TimeSeries1D {
    std::vector<double> t;
    std::vector<Field1D> fields;
};

inline TimeSeries1D evolve_1d(const Field1D& psi0, std::span<const double> v,
                              const PropagatorConfig& cfg, const Constants& c) {
    TimeSeries1D ts;
    evolve_1d(std::span<const Field1D>(&psi0, 1), v, cfg, c,
              [&](double t, std::span<const Field1D> f) {
                  ts.t.push_back(t);
                  ts.fields.push_back(f.front());
              });
    return ts;
}

// Split-step on the n x n configuration grid. 2D transforms are batched row
// transforms with a transpose in between.
class SplitStep2D {
public:
    SplitStep2D(const Grid1D& g, std::span<const double> v2, double dt, const Constants& c)
        : grid_(g),
          n_(g.size()),
          a_(n_ * n_),
          b_(n_ * n_),
          fft_(n_, n_, a_.data()),
          vhalf_(detail::potential_half_phase(v2, dt, c)),
          kin_(detail::kinetic_phase(g, dt, c)) {
        require(v2.size() == n_ * n_, ErrorKind::invalid_argument,
                "2D potential size != n_points^2");
    }

    const Grid1D& grid() const { return grid_; }

    void load(const Field2D& f) {
        require_same_grid(f.grid, grid_);
        std::copy(f.values.begin(), f.values.end(), a_.data());
    }
    Field2D get() const {
        Field2D f(grid_);
        std::copy(a_.data(), a_.data() + n_ * n_, f.values.begin());
        return f;
    }
    std::span<const cplx> values() const { return a_.span(); }

    void step() {
        cplx* a = a_.data();
        cplx* b = b_.data();
        const std::size_t nn = n_ * n_;
        for (std::size_t i = 0; i < nn; ++i) a[i] *= vhalf_[i];
        fft_.forward(a);
        transpose(a, b, n_);
        fft_.forward(b);
        for (std::size_t r = 0; r < n_; ++r) {
            cplx kr = kin_[r];
            cplx* row = b + r * n_;
            for (std::size_t s = 0; s < n_; ++s) row[s] *= kr * kin_[s];
        }
        fft_.backward(b);
        transpose(b, a, n_);
        fft_.backward(a);
        for (std::size_t i = 0; i < nn; ++i) a[i] *= vhalf_[i];
    }

    // Mass in the band of cells listed in `edge` along either axis.
    double guard_mass(std::span<const std::size_t> edge, std::span<const char> is_edge) const {
        const cplx* a = a_.data();
        double acc = 0.0;
        for (auto i : edge)
            for (std::size_t j = 0; j < n_; ++j) acc += std::norm(a[i * n_ + j]);
        for (std::size_t i = 0; i < n_; ++i) {
            if (is_edge[i]) continue;
            for (auto j : edge) acc += std::norm(a[i * n_ + j]);
        }
        return acc * grid_.dx() * grid_.dx();
    }

private:
    Grid1D grid_;
    std::size_t n_;
    AlignedBuffer a_;
    AlignedBuffer b_;
    BatchedFft fft_;
    std::vector<cplx> vhalf_;
    std::vector<cplx> kin_;
};

using Observer2D = std::function<void(double t, const Field2D&)>;

inline Field2D evolve_2d(const Field2D& phi0, std::span<const double> v2,
                         const PropagatorConfig& cfg, const Constants& c,
                         const Observer2D& observer = {}) {
    const Grid1D& g = phi0.grid;
    auto [steps, dt] = step_plan(cfg);
    SplitStep2D prop(g, v2, dt, c);
    prop.load(phi0);
    auto edge = detail::guard_cells(g, cfg.guard_width);
    std::vector<char> is_edge(g.size(), 0);
    for (auto j : edge) is_edge[j] = 1;
    std::size_t stride = std::max<std::size_t>(cfg.snapshot_stride, 1);

    if (observer) observer(0.0, phi0);
    for (std::size_t s = 1; s <= steps; ++s) {
        prop.step();
        double t = static_cast<double>(s) * dt;
        double m = prop.guard_mass(edge, is_edge);
        if (m > cfg.guard_tolerance) detail::wrap_error(t, m);
        if (observer && (s % stride == 0 || s == steps)) observer(t, prop.get());
    }
    return prop.get();
}

enum class IncidentSide { left, right };

struct Components {
    Field1D reflected;
    Field1D transmitted;
};

// Splits at x = 0 (the x = 0 cell is shared with amplitude weight 1/sqrt 2 so
// the two norms add up exactly). Requires the barrier strip to be nearly empty.
inline Components split_components(const Field1D& psi, IncidentSide side, double barrier_half_extent,
                                   double tolerance = 1e-3) {
    double strip = norm(psi, -barrier_half_extent, barrier_half_extent);
    require(strip < tolerance, ErrorKind::interaction_not_finished,
            "barrier-region probability " + std::to_string(strip) + " exceeds " +
                std::to_string(tolerance));
    Field1D left(psi.grid), right(psi.grid);
    for (std::size_t j = 0; j < psi.size(); ++j) {
        double wl = psi.grid.cell_fraction(j, -kInf, 0.0);
        double wr = psi.grid.cell_fraction(j, 0.0, kInf);
        left[j] = std::sqrt(wl) * psi[j];
        right[j] = std::sqrt(wr) * psi[j];
    }
    if (side == IncidentSide::left) return {std::move(left), std::move(right)};
    return {std::move(right), std::move(left)};
}

}  // namespace tunnelex
