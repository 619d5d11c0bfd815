#pragma once

#include <array>
#include <cmath>
#include <cstddef>

#include "ptne/errors.hpp"

namespace ptne {

template <std::size_t D>
using Point = std::array<double, D>;

/// Axis-aligned box, half-open: [low_i, high_i) in every coordinate.
template <std::size_t D>
struct Rect {
    Point<D> low{};
    Point<D> high{};

    bool valid() const {
        for (std::size_t i = 0; i < D; ++i)
            if (!(low[i] < high[i])) return false;
        return true;
    }

    bool contains(const Point<D>& p) const {
        for (std::size_t i = 0; i < D; ++i)
            if (p[i] < low[i] || p[i] >= high[i]) return false;
        return true;
    }

    double volume() const {
        double v = 1.0;
        for (std::size_t i = 0; i < D; ++i) v *= high[i] - low[i];
        return v;
    }

    Point<D> center() const {
        Point<D> c;
        for (std::size_t i = 0; i < D; ++i) c[i] = 0.5 * (low[i] + high[i]);
        return c;
    }
};

template <std::size_t D>
inline void require_valid(const Rect<D>& r, const char* what) {
    if (!r.valid()) throw validation_error(std::string(what) + ": empty or inverted rectangle");
}

/// Box of side 2*half centered at c.
template <std::size_t D>
inline Rect<D> centered_box(const Point<D>& c, const Point<D>& half) {
    Rect<D> r;
    for (std::size_t i = 0; i < D; ++i) {
        r.low[i] = c[i] - half[i];
        r.high[i] = c[i] + half[i];
    }
    return r;
}

template <std::size_t D>
inline double sup_distance(const Point<D>& a, const Point<D>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < D; ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

template <std::size_t D>
inline double euclidean_distance(const Point<D>& a, const Point<D>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < D; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

} // namespace ptne
