#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "ptne/errors.hpp"
#include "ptne/geometry.hpp"
#include "ptne/measure.hpp"
#include "ptne/partition.hpp"
#include "ptne/pyramid.hpp"
#include "ptne/qratio.hpp"

namespace ptne {

struct PeSolverOptions {
    double alpha = 1.0;  ///< posterior = (1-alpha) prior + alpha kernel
    double tol = 1e-8;   ///< residual tolerance relative to the face scale
    int max_evaluations = 2000; ///< budget of residual evaluations
    int max_sweeps = 16;        ///< axis-cycling passes
    FaceIntegralOptions quad{};
};

template <std::size_t D>
struct PeSolveDiagnostics {
    bool converged = false;
    int evaluations = 0;
    std::array<double, D> residuals{}; ///< signed face differences at the solution
    double scale = 0.0;
    double objective = 0.0;
    double quad_error = 0.0;
    /// Sign check of the residuals at the two extreme apex positions per
    /// axis; the bracket these signs provide is what guarantees a root.
    bool sign_bracket_ok = true;
};

template <std::size_t D>
struct PeSolveResult {
    PyramidKernel<D> kernel;
    PeSolveDiagnostics<D> diagnostics;
};

namespace detail {

template <std::size_t D>
struct ApexObjective {
    const Measure<D>* prior;
    Point<D> o;
    Point<D> delta;
    Point<D> bin_dims;
    double alpha;
    FaceIntegralOptions quad;

    /// Kernel with base centered at x and peak held at the observation.
    PyramidKernel<D> kernel_at(const Point<D>& x) const {
        return PyramidKernel<D>::make(x, delta, o);
    }

    Measure<D> posterior_at(const PyramidKernel<D>& k) const {
        Measure<D> km = pyramid_measure(k);
        if (alpha >= 1.0) return km;
        return mix(*prior, 1.0 - alpha, km, alpha);
    }

    // The moving bin's edges cross the kernel's support edges and apex;
    // those coordinates are where the face integrand kinks.
    std::array<std::vector<double>, D> kinks_of(const PyramidKernel<D>& k) const {
        std::array<std::vector<double>, D> kinks;
        Rect<D> s = k.support();
        for (std::size_t i = 0; i < D; ++i) {
            for (double v : {s.low[i], k.apex[i], s.high[i]}) {
                kinks[i].push_back(v - 0.5 * bin_dims[i]);
                kinks[i].push_back(v + 0.5 * bin_dims[i]);
            }
        }
        return kinks;
    }

    FaceResiduals<D> residuals_at(const Point<D>& x) const {
        PyramidKernel<D> k = kernel_at(x);
        Measure<D> post = posterior_at(k);
        return face_residuals(*prior, post, bin_dims, o, kinks_of(k), quad);
    }

    /// Residual of one axis only (its two faces); half the work of a full
    /// residual evaluation in 2D. Returns {signed difference, face scale}.
    std::pair<double, double> axis_residual(const Point<D>& x, std::size_t axis) const {
        PyramidKernel<D> k = kernel_at(x);
        Measure<D> post = posterior_at(k);
        auto kinks = kinks_of(k);
        auto q = [&](const Point<D>& p) { return q_ratio(*prior, post, bin_dims, p); };
        FaceIntegral plus = integrate_face<D>(q, o, bin_dims, axis, +1, kinks, quad);
        FaceIntegral minus = integrate_face<D>(q, o, bin_dims, axis, -1, kinks, quad);
        return {plus.value - minus.value,
                std::max(std::abs(plus.value), std::abs(minus.value))};
    }

    double value(const FaceResiduals<D>& r) const {
        double g = 0.0;
        for (std::size_t i = 0; i < D; ++i) g += r.f[i] * r.f[i];
        return g;
    }
};

} // namespace detail

/// Finds the base-center position x in [o - delta, o + delta] making all
/// face residuals of the bin-mass ratio vanish, for a pyramid kernel of
/// half-widths `delta` peaked at the observation o. At the extreme position
/// on axis i the whole kernel sits on one side of the matching bin face, so
/// the residual changes sign across the box and a root exists; each residual
/// is close to monotone in its own coordinate and only weakly coupled to the
/// others, so the solver runs sign-bracketed bisection per axis and cycles
/// the axes until the full residual vector is below tolerance. Throws
/// solver_error if the tolerance is not reached.
///
/// Preconditions: 0 < delta_i <= l_i / 2 (the shifted base stays within one
/// bin width of o), 0 < alpha <= 1, and the prior must give every probed bin
/// positive mass (otherwise the ratio is undefined and a degenerate error
/// surfaces).
template <std::size_t D>
PeSolveResult<D> solve_pe_apex(const Measure<D>& prior, const Point<D>& o,
                               const Point<D>& delta, const RegularPartitionSpace<D>& ps,
                               const PeSolverOptions& opts = {}) {
    const Point<D>& dims = ps.bin_dims();
    for (std::size_t i = 0; i < D; ++i) {
        if (!(delta[i] > 0.0)) throw validation_error("solve_pe_apex: delta must be positive");
        if (delta[i] > 0.5 * dims[i] + 1e-15)
            throw validation_error("solve_pe_apex: kernel wider than a bin");
    }
    if (!(opts.alpha > 0.0 && opts.alpha <= 1.0))
        throw validation_error("solve_pe_apex: alpha must be in (0, 1]");

    detail::ApexObjective<D> obj{&prior, o, delta, dims, opts.alpha, opts.quad};

    int evals = 0;
    auto full = [&](const Point<D>& x) {
        ++evals;
        return obj.residuals_at(x);
    };
    auto axis_res = [&](const Point<D>& x, std::size_t i) {
        ++evals;
        return obj.axis_residual(x, i);
    };

    Point<D> x = o;
    FaceResiduals<D> res = full(x);

    auto worst_of = [&](const FaceResiduals<D>& r) {
        double w = 0.0;
        for (std::size_t i = 0; i < D; ++i) w = std::max(w, std::abs(r.f[i]));
        return w;
    };
    auto converged = [&](const FaceResiduals<D>& r) {
        return r.scale > 0.0 && worst_of(r) <= opts.tol * r.scale;
    };

    for (int sweep = 0; sweep < opts.max_sweeps && evals < opts.max_evaluations; ++sweep) {
        if (converged(res)) break;
        bool moved = false;
        for (std::size_t i = 0; i < D; ++i) {
            double a = o[i] - delta[i], b = o[i] + delta[i];
            Point<D> pa = x, pb = x;
            pa[i] = a;
            pb[i] = b;
            auto [fa, sa] = axis_res(pa, i);
            auto [fb, sb] = axis_res(pb, i);
            if (fa == 0.0 || fb == 0.0) {
                x[i] = fa == 0.0 ? a : b;
                moved = true;
                continue;
            }
            if ((fa > 0.0) == (fb > 0.0)) continue; // no bracket on this axis now

            double width0 = b - a;
            while (evals < opts.max_evaluations && b - a > 1e-14 * width0) {
                double m = 0.5 * (a + b);
                Point<D> pm = x;
                pm[i] = m;
                auto [fm, sm] = axis_res(pm, i);
                x[i] = m;
                moved = true;
                if (std::abs(fm) <= 0.1 * opts.tol * std::max({sm, sa, sb})) break;
                if ((fm > 0.0) == (fa > 0.0)) {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
            }
        }
        res = full(x);
        if (!moved) break; // no axis could move; the final check decides
    }

    PeSolveDiagnostics<D> diag;
    diag.evaluations = evals;
    diag.residuals = res.f;
    diag.scale = res.scale;
    diag.objective = obj.value(res);
    diag.quad_error = res.quad_error;
    diag.converged = converged(res);

    if (!diag.converged) {
        // Report whether a root bracket even exists: the axis-i residual
        // must change sign between the two extreme apex positions.
        for (std::size_t i = 0; i < D; ++i) {
            Point<D> lo = x, hi = x;
            lo[i] = o[i] - delta[i];
            hi[i] = o[i] + delta[i];
            double fl = obj.axis_residual(lo, i).first;
            double fh = obj.axis_residual(hi, i).first;
            if (fl != 0.0 && fh != 0.0 && (fl > 0.0) == (fh > 0.0))
                diag.sign_bracket_ok = false;
        }
        throw solver_error("solve_pe_apex: residual tolerance not reached" +
                               std::string(diag.sign_bracket_ok
                                               ? ""
                                               : " (no sign bracket on some axis)"),
                           worst_of(res), evals);
    }
    return {obj.kernel_at(x), diag};
}

} // namespace ptne
