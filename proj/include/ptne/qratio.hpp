#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "ptne/errors.hpp"
#include "ptne/geometry.hpp"
#include "ptne/measure.hpp"
#include "ptne/partition.hpp"

namespace ptne {

/// Mass of m inside the bin-sized box centered at c (half-open, sides L).
template <std::size_t D>
double binned_mass(const Measure<D>& m, const Point<D>& bin_dims, const Point<D>& c) {
    Point<D> half;
    for (std::size_t i = 0; i < D; ++i) half[i] = 0.5 * bin_dims[i];
    return m.rect_prob(centered_box(c, half));
}

/// Posterior-to-prior ratio of bin-sized masses centered at c. This is the
/// quantity whose boundary behaviour decides whether an update stays
/// incentive-compatible across every member of the partition family.
template <std::size_t D>
double q_ratio(const Measure<D>& prior, const Measure<D>& posterior, const Point<D>& bin_dims,
               const Point<D>& c) {
    double denom = binned_mass(prior, bin_dims, c);
    if (denom <= 0.0)
        throw degenerate_payment_error("q_ratio: prior has no mass in the bin at this point");
    return binned_mass(posterior, bin_dims, c) / denom;
}

struct FaceIntegralOptions {
    int min_panels = 256;   ///< minimum Gauss panels per face
    int error_panels = 128; ///< coarser pass used only for the error estimate
};

struct FaceIntegral {
    double value = 0.0;
    double error_estimate = 0.0;
};

namespace detail {

// 4-point Gauss-Legendre nodes/weights on [-1, 1].
inline constexpr double gl4_x[4] = {-0.8611363115940526, -0.3399810435848563,
                                    0.3399810435848563, 0.8611363115940526};
inline constexpr double gl4_w[4] = {0.3478548451374538, 0.6521451548625461,
                                    0.6521451548625461, 0.3478548451374538};

/// Composite Gauss quadrature of g over [lo, hi], with the interval first
/// split at the supplied breakpoints (integrand kinks land on panel edges,
/// restoring full Gauss accuracy piecewise).
template <typename G>
double line_integral(G&& g, double lo, double hi, const std::vector<double>& breakpoints,
                     int total_panels) {
    std::vector<double> edges{lo, hi};
    for (double b : breakpoints)
        if (b > lo && b < hi) edges.push_back(b);
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

    double len = hi - lo;
    double sum = 0.0;
    for (std::size_t s = 0; s + 1 < edges.size(); ++s) {
        double a = edges[s], b = edges[s + 1];
        int panels = std::max(1, static_cast<int>(std::ceil(total_panels * (b - a) / len)));
        double w = (b - a) / panels;
        for (int p = 0; p < panels; ++p) {
            double mid = a + (p + 0.5) * w;
            for (int q = 0; q < 4; ++q)
                sum += 0.5 * w * gl4_w[q] * g(mid + 0.5 * w * gl4_x[q]);
        }
    }
    return sum;
}

} // namespace detail

/// Integral of f over one face of the box of sides bin_dims centered at o:
/// the face normal to `axis` on the `side` (-1 or +1). In 1D this is a point
/// evaluation at the face. `kink_coords[j]` lists absolute coordinates along
/// axis j where the integrand may lose smoothness (e.g. support edges of a
/// kernel); they are shifted into face-offset coordinates internally.
template <std::size_t D, typename F>
FaceIntegral integrate_face(F&& f, const Point<D>& o, const Point<D>& bin_dims,
                            std::size_t axis, int side,
                            const std::array<std::vector<double>, D>& kink_coords,
                            const FaceIntegralOptions& opts = {}) {
    Point<D> p = o;
    p[axis] = o[axis] + 0.5 * side * bin_dims[axis];
    if constexpr (D == 1) {
        return {f(p), 0.0};
    } else {
        static_assert(D == 2, "integrate_face implemented for D in {1, 2}");
        std::size_t j = 1 - axis;
        double half = 0.5 * bin_dims[j];
        std::vector<double> brk;
        for (double c : kink_coords[j]) brk.push_back(c - o[j]);
        auto g = [&](double off) {
            Point<D> q = p;
            q[j] = o[j] + off;
            return f(q);
        };
        double fine = detail::line_integral(g, -half, half, brk, opts.min_panels);
        double coarse = detail::line_integral(g, -half, half, brk, opts.error_panels);
        return {fine, std::abs(fine - coarse)};
    }
}

template <std::size_t D>
struct FaceResiduals {
    /// Per axis: (integral over +face) - (integral over -face) of the ratio.
    std::array<double, D> f{};
    /// Largest single face-integral magnitude; the natural scale for
    /// relative residual tests.
    double scale = 0.0;
    double quad_error = 0.0;
};

/// Face residuals of the posterior/prior bin-mass ratio for the bin-sized
/// box centered at o. All residuals vanishing is the balance condition that
/// pins the kernel apex.
template <std::size_t D>
FaceResiduals<D> face_residuals(const Measure<D>& prior, const Measure<D>& posterior,
                                const Point<D>& bin_dims, const Point<D>& o,
                                const std::array<std::vector<double>, D>& kink_coords = {},
                                const FaceIntegralOptions& opts = {}) {
    auto q = [&](const Point<D>& p) { return q_ratio(prior, posterior, bin_dims, p); };
    FaceResiduals<D> out;
    for (std::size_t axis = 0; axis < D; ++axis) {
        FaceIntegral plus = integrate_face<D>(q, o, bin_dims, axis, +1, kink_coords, opts);
        FaceIntegral minus = integrate_face<D>(q, o, bin_dims, axis, -1, kink_coords, opts);
        out.f[axis] = plus.value - minus.value;
        out.scale = std::max({out.scale, std::abs(plus.value), std::abs(minus.value)});
        out.quad_error += plus.error_estimate + minus.error_estimate;
    }
    return out;
}

} // namespace ptne
