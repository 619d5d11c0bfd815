#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "ptne/errors.hpp"
#include "ptne/geometry.hpp"
#include "ptne/measure.hpp"

namespace ptne {

/// Density whose graph is a hyper-pyramid: support is the box
/// [base_center_i - half_widths_i, base_center_i + half_widths_i], the peak
/// sits over `apex`, and the density falls affinely to zero along every ray
/// from the apex to the support boundary. The peak height (D+1)/volume does
/// not depend on the apex position, so moving the apex preserves total mass.
template <std::size_t D>
struct PyramidKernel {
    Point<D> base_center{};
    Point<D> half_widths{};
    Point<D> apex{};

    static PyramidKernel make(const Point<D>& base_center, const Point<D>& half_widths,
                              const Point<D>& apex) {
        PyramidKernel k{base_center, half_widths, apex};
        for (std::size_t i = 0; i < D; ++i) {
            if (!(half_widths[i] > 0.0))
                throw validation_error("PyramidKernel: half widths must be positive");
            double lo = base_center[i] - half_widths[i];
            double hi = base_center[i] + half_widths[i];
            // An apex meant to sit on the box edge can land a few ulp outside
            // it after o +/- delta arithmetic; absorb that instead of throwing.
            double slack = 8.0 * std::numeric_limits<double>::epsilon() *
                           std::max({std::abs(lo), std::abs(hi), 1.0});
            if (apex[i] < lo - slack || apex[i] > hi + slack)
                throw validation_error("PyramidKernel: apex outside the support box");
            k.apex[i] = std::clamp(apex[i], lo, hi);
        }
        return k;
    }

    Rect<D> support() const { return centered_box(base_center, half_widths); }

    double height() const {
        double vol = 1.0;
        for (std::size_t i = 0; i < D; ++i) vol *= 2.0 * half_widths[i];
        return static_cast<double>(D + 1) / vol;
    }

    double pdf(const Point<D>& p) const {
        Rect<D> s = support();
        double t = 0.0;
        for (std::size_t i = 0; i < D; ++i) {
            if (p[i] < s.low[i] || p[i] > s.high[i]) return 0.0;
            double d = p[i] - apex[i];
            double rho;
            if (d > 0.0) {
                double e = s.high[i] - apex[i];
                rho = e > 0.0 ? d / e : 2.0;
            } else if (d < 0.0) {
                double e = apex[i] - s.low[i];
                rho = e > 0.0 ? -d / e : 2.0;
            } else {
                rho = 0.0;
            }
            t = std::max(t, rho);
        }
        return t >= 1.0 ? 0.0 : height() * (1.0 - t);
    }

    /// Exact mass of an axis-aligned box (clipped against the support).
    /// Decomposes the support into the 2^D apex quadrants; in quadrant-local
    /// unit coordinates the density is h * (1 - max_i u_i), whose box
    /// integral has a closed form.
    double box_mass(const Rect<D>& r) const {
        Rect<D> s = support();
        double h = height();
        double total = 0.0;
        // Iterate quadrant sign patterns.
        for (int mask = 0; mask < (1 << D); ++mask) {
            double scale = h;
            double a[D], b[D];
            bool empty = false;
            for (std::size_t i = 0; i < D; ++i) {
                bool plus = (mask >> i) & 1;
                double w = plus ? s.high[i] - apex[i] : apex[i] - s.low[i];
                if (w <= 0.0) {
                    empty = true;
                    break;
                }
                double glo = plus ? apex[i] : apex[i] - w;
                double ghi = plus ? apex[i] + w : apex[i];
                double clo = std::max(r.low[i], glo);
                double chi = std::min(r.high[i], ghi);
                if (chi <= clo) {
                    empty = true;
                    break;
                }
                // Local coordinate grows away from the apex in both cases.
                if (plus) {
                    a[i] = (clo - apex[i]) / w;
                    b[i] = (chi - apex[i]) / w;
                } else {
                    a[i] = (apex[i] - chi) / w;
                    b[i] = (apex[i] - clo) / w;
                }
                scale *= w;
            }
            if (empty) continue;
            total += scale * unit_integral(a, b);
        }
        return total;
    }

    double cdf(const Point<D>& x) const {
        Rect<D> s = support();
        Rect<D> r;
        for (std::size_t i = 0; i < D; ++i) {
            if (x[i] <= s.low[i]) return 0.0;
            r.low[i] = s.low[i];
            r.high[i] = std::min(x[i], s.high[i]);
        }
        return box_mass(r);
    }

private:
    // Integral of (1 - max_i u_i) over [a, b] within the unit cube.
    static double unit_integral(const double* a, const double* b) {
        if constexpr (D == 1) {
            return (b[0] - a[0]) - 0.5 * (b[0] * b[0] - a[0] * a[0]);
        } else {
            static_assert(D == 2, "PyramidKernel closed form implemented for D in {1, 2}");
            double area = (b[0] - a[0]) * (b[1] - a[1]);
            double m = corner(b[0], b[1]) - corner(a[0], b[1]) - corner(b[0], a[1]) +
                       corner(a[0], a[1]);
            return area - m;
        }
    }

    // T(s, t) = integral of max(u, v) over [0, s] x [0, t].
    static double corner(double s, double t) {
        double m = std::min(s, t);
        double M = std::max(s, t);
        return m * m * m / 6.0 + 0.5 * m * M * M;
    }
};

namespace nodes {

template <std::size_t D>
class Pyramid final : public MeasureNode<D> {
public:
    explicit Pyramid(PyramidKernel<D> k) : k_(k) {}

    MeasureKind kind() const override { return MeasureKind::Pyramid; }
    double cdf(const Point<D>& x) const override { return k_.cdf(x); }
    double rect_prob(const Rect<D>& r) const override { return k_.box_mass(r); }

    Point<D> sample_one(rng_engine& eng) const override {
        Rect<D> s = k_.support();
        double h = k_.height();
        // Rejection from the bounding slab; acceptance rate 1/(D+1).
        while (true) {
            Point<D> p;
            for (std::size_t i = 0; i < D; ++i)
                p[i] = s.low[i] + uniform01(eng) * (s.high[i] - s.low[i]);
            if (uniform01(eng) * h < k_.pdf(p)) return p;
        }
    }

    Rect<D> support_box() const override { return k_.support(); }

    const PyramidKernel<D>& kernel() const { return k_; }

private:
    PyramidKernel<D> k_;
};

} // namespace nodes

template <std::size_t D>
Measure<D> pyramid_measure(const PyramidKernel<D>& k) {
    return Measure<D>(std::make_shared<nodes::Pyramid<D>>(
        PyramidKernel<D>::make(k.base_center, k.half_widths, k.apex)));
}

} // namespace ptne
