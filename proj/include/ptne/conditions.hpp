#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "ptne/errors.hpp"
#include "ptne/geometry.hpp"
#include "ptne/measure.hpp"
#include "ptne/mechanism.hpp"
#include "ptne/partition.hpp"
#include "ptne/qratio.hpp"

namespace ptne {

enum class ThetaMode { MonteCarlo, Grid };

/// How partition offsets are enumerated for a condition check. Grid mode
/// lays `count` offsets evenly over the offset box (per-axis count is
/// round(count^(1/D))); MonteCarlo draws them from `seed`.
struct ThetaSchedule {
    ThetaMode mode = ThetaMode::MonteCarlo;
    std::size_t count = 500;
    std::uint64_t seed = 0;
};

template <std::size_t D>
std::vector<Point<D>> make_thetas(const RegularPartitionSpace<D>& ps, const ThetaSchedule& s) {
    if (s.count == 0) throw validation_error("ThetaSchedule: count must be positive");
    if (s.mode == ThetaMode::MonteCarlo) return ps.sample_theta(s.seed, s.count);
    auto m = static_cast<std::size_t>(
        std::llround(std::pow(static_cast<double>(s.count), 1.0 / D)));
    m = std::max<std::size_t>(m, 1);
    std::vector<Point<D>> out;
    if constexpr (D == 1) {
        for (std::size_t a = 0; a < m; ++a)
            out.push_back({ps.bin_dims()[0] * static_cast<double>(a) / static_cast<double>(m)});
    } else {
        static_assert(D == 2);
        for (std::size_t a = 0; a < m; ++a)
            for (std::size_t b = 0; b < m; ++b)
                out.push_back(
                    {ps.bin_dims()[0] * static_cast<double>(a) / static_cast<double>(m),
                     ps.bin_dims()[1] * static_cast<double>(b) / static_cast<double>(m)});
    }
    return out;
}

struct ConditionCheckOptions {
    ThetaSchedule schedule{};
    PtsConfig payment{};
    /// Point pairs sampled per face for the boundary-equality diagnostic.
    int boundary_pairs_per_face = 64;
    /// Relative tolerance on the boundary mismatch diagnostic.
    double boundary_tol = 1e-6;
    /// Competitor mean must beat 3 standard errors under MonteCarlo offsets.
    double se_factor = 3.0;
    FaceIntegralOptions quad{};
};

template <std::size_t D>
struct ConditionReport {
    bool passed = false;
    /// Smallest incentive margin found: per-offset value(truth) -
    /// value(competitor) for the pointwise checks, mean difference for the
    /// expectation check.
    double worst_margin = std::numeric_limits<double>::infinity();
    double worst_margin_se = 0.0;
    std::optional<Point<D>> worst_competitor;
    /// Fraction of offsets with at least one violated comparison.
    double violating_fraction = 0.0;
    std::size_t n_theta = 0;
    /// Competitor bins carrying neither prior nor posterior mass (payment 0).
    std::size_t zero_mass_bins = 0;

    /// Boundary-equality diagnostic: the ratio evaluated at opposite face
    /// points of the bin around the observation.
    double boundary_mismatch_max = 0.0;
    double boundary_scale = 0.0;
    std::size_t boundary_pairs = 0;
    std::size_t boundary_skipped = 0;
    bool boundary_ok = true;

    /// Face-integral diagnostic (expectation check).
    std::array<double, D> face_residuals{};
    double face_scale = 0.0;
    bool face_residuals_valid = false;

    /// Central-difference gradient of the offset-averaged payment at the
    /// observation (expectation check).
    std::array<double, D> payment_gradient{};
};

namespace detail {

/// Expected payment for reporting into bin b when peers report truthfully:
/// posterior mass of b times the score of its prior mass. Both masses zero
/// means the report never matches anyone: value 0. Positive posterior over
/// zero prior is a genuine degeneracy.
template <std::size_t D>
double bin_value(const Measure<D>& prior, const Measure<D>& posterior,
                 const RegularPartitionSpace<D>& ps, const Point<D>& theta, const BinIndex<D>& b,
                 const PtsConfig& pay, std::size_t* zero_mass) {
    Rect<D> r = ps.bin_rect(theta, b);
    double post_p = posterior.rect_prob(r);
    double prior_p = prior.rect_prob(r);
    if (post_p <= 0.0 && prior_p <= 0.0) {
        if (zero_mass) ++*zero_mass;
        return 0.0;
    }
    if (prior_p <= 0.0)
        throw degenerate_payment_error("bin with posterior mass but zero prior mass");
    return post_p * pay.c / prior_p;
}

} // namespace detail

/// Pointwise self-predicting check for one partition member: the observed
/// bin must strictly maximize posterior-mass times prior-score over all bins
/// meeting `region`.
template <std::size_t D>
ConditionReport<D> check_natural(const Measure<D>& prior, const Measure<D>& posterior,
                                 const RegularPartitionSpace<D>& ps, const Point<D>& theta,
                                 const Point<D>& o, const Rect<D>& region,
                                 const PtsConfig& pay = {}) {
    ConditionReport<D> rep;
    rep.n_theta = 1;
    BinIndex<D> bo = ps.bin_select(theta, o);
    double vo = detail::bin_value(prior, posterior, ps, theta, bo, pay, nullptr);
    for (const auto& b : bins_in_region(ps, theta, region)) {
        if (b == bo) continue;
        double v = detail::bin_value(prior, posterior, ps, theta, b, pay, &rep.zero_mass_bins);
        double margin = vo - v;
        if (margin < rep.worst_margin) {
            rep.worst_margin = margin;
            rep.worst_competitor = ps.bin_rect(theta, b).center();
        }
    }
    rep.passed = rep.worst_margin > 0.0;
    rep.violating_fraction = rep.passed ? 0.0 : 1.0;
    return rep;
}

/// Checks the almost-sure version of the self-predicting condition over the
/// partition family: the pointwise check must pass at every sampled offset.
/// Also evaluates the boundary point-pair equalities of the bin-mass ratio
/// as a diagnostic (skipping points where the prior carries no mass).
template <std::size_t D>
ConditionReport<D> check_pi(const Measure<D>& prior,
                            const std::function<Measure<D>(const Point<D>&)>& posterior_builder,
                            const RegularPartitionSpace<D>& ps, const Point<D>& o,
                            const Rect<D>& region, const ConditionCheckOptions& opts = {}) {
    Measure<D> posterior = posterior_builder(o);
    ConditionReport<D> rep;
    auto thetas = make_thetas(ps, opts.schedule);
    rep.n_theta = thetas.size();
    std::size_t violations = 0;
    for (const auto& theta : thetas) {
        BinIndex<D> bo = ps.bin_select(theta, o);
        double vo = detail::bin_value(prior, posterior, ps, theta, bo, opts.payment, nullptr);
        bool bad = false;
        for (const auto& b : bins_in_region(ps, theta, region)) {
            if (b == bo) continue;
            double v =
                detail::bin_value(prior, posterior, ps, theta, b, opts.payment, &rep.zero_mass_bins);
            double margin = vo - v;
            if (margin < rep.worst_margin) {
                rep.worst_margin = margin;
                rep.worst_competitor = ps.bin_rect(theta, b).center();
            }
            if (margin <= 0.0) bad = true;
        }
        if (bad) ++violations;
    }
    rep.violating_fraction = static_cast<double>(violations) / static_cast<double>(rep.n_theta);

    // Boundary pairs: the ratio at opposite face points of the bin-sized box
    // around o must agree for the family version of the condition to hold.
    const Point<D>& dims = ps.bin_dims();
    for (std::size_t axis = 0; axis < D; ++axis) {
        int pairs = D == 1 ? 1 : opts.boundary_pairs_per_face;
        for (int t = 0; t < pairs; ++t) {
            Point<D> lo = o, hi = o;
            lo[axis] = o[axis] - 0.5 * dims[axis];
            hi[axis] = o[axis] + 0.5 * dims[axis];
            if constexpr (D == 2) {
                int j = 1 - axis;
                double off = dims[j] * ((t + 0.5) / pairs - 0.5);
                lo[j] += off;
                hi[j] += off;
            }
            ++rep.boundary_pairs;
            try {
                double ql = q_ratio(prior, posterior, dims, lo);
                double qh = q_ratio(prior, posterior, dims, hi);
                rep.boundary_mismatch_max = std::max(rep.boundary_mismatch_max, std::abs(qh - ql));
                rep.boundary_scale = std::max({rep.boundary_scale, std::abs(ql), std::abs(qh)});
            } catch (const degenerate_payment_error&) {
                ++rep.boundary_skipped;
            }
        }
    }
    rep.boundary_ok =
        rep.boundary_mismatch_max <= opts.boundary_tol * std::max(rep.boundary_scale, 1.0);

    rep.passed = violations == 0 && rep.worst_margin > 0.0;
    return rep;
}

/// Checks the in-expectation condition: the offset-averaged payment of the
/// truthful report must exceed that of every competitor report, by more than
/// se_factor standard errors when offsets are Monte Carlo. Differences are
/// paired per offset.
template <std::size_t D>
ConditionReport<D> check_pe(const Measure<D>& prior, const Measure<D>& posterior,
                            const RegularPartitionSpace<D>& ps, const Point<D>& o,
                            const std::vector<Point<D>>& competitors,
                            const ConditionCheckOptions& opts = {},
                            const std::array<std::vector<double>, D>& kink_coords = {}) {
    if (competitors.empty()) throw validation_error("check_pe: no competitors");
    ConditionReport<D> rep;
    auto thetas = make_thetas(ps, opts.schedule);
    rep.n_theta = thetas.size();
    const auto n = static_cast<double>(thetas.size());

    std::vector<double> vo(thetas.size());
    for (std::size_t t = 0; t < thetas.size(); ++t)
        vo[t] = detail::bin_value(prior, posterior, ps, thetas[t], ps.bin_select(thetas[t], o),
                                  opts.payment, nullptr);

    bool mc = opts.schedule.mode == ThetaMode::MonteCarlo;
    rep.passed = true;
    for (const auto& x : competitors) {
        double sum = 0.0, sumsq = 0.0;
        for (std::size_t t = 0; t < thetas.size(); ++t) {
            double vx = detail::bin_value(prior, posterior, ps, thetas[t],
                                          ps.bin_select(thetas[t], x), opts.payment,
                                          &rep.zero_mass_bins);
            double d = vo[t] - vx;
            sum += d;
            sumsq += d * d;
        }
        double mean = sum / n;
        double var = n > 1 ? std::max(0.0, (sumsq - n * mean * mean) / (n - 1.0)) : 0.0;
        double se = std::sqrt(var / n);
        if (mean < rep.worst_margin) {
            rep.worst_margin = mean;
            rep.worst_margin_se = se;
            rep.worst_competitor = x;
        }
        if (mc ? !(mean > opts.se_factor * se) : !(mean > 0.0)) rep.passed = false;
    }

    try {
        auto fr = face_residuals(prior, posterior, ps.bin_dims(), o, kink_coords, opts.quad);
        rep.face_residuals = fr.f;
        rep.face_scale = fr.scale;
        rep.face_residuals_valid = true;
    } catch (const degenerate_payment_error&) {
        rep.face_residuals_valid = false;
    }

    // Gradient of the averaged payment in the report, at the truthful point.
    for (std::size_t i = 0; i < D; ++i) {
        double h = 1e-3 * ps.bin_dims()[i];
        double acc = 0.0;
        bool ok = true;
        for (const auto& theta : thetas) {
            Point<D> pl = o, ph = o;
            pl[i] -= h;
            ph[i] += h;
            try {
                double vl = detail::bin_value(prior, posterior, ps, theta,
                                              ps.bin_select(theta, pl), opts.payment, nullptr);
                double vh = detail::bin_value(prior, posterior, ps, theta,
                                              ps.bin_select(theta, ph), opts.payment, nullptr);
                acc += (vh - vl) / (2.0 * h);
            } catch (const degenerate_payment_error&) {
                ok = false;
                break;
            }
        }
        rep.payment_gradient[i] = ok ? acc / n : std::numeric_limits<double>::quiet_NaN();
    }
    return rep;
}

} // namespace ptne
