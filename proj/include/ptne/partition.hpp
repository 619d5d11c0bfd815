#pragma once

#include <cmath>
#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "ptne/errors.hpp"
#include "ptne/geometry.hpp"
#include "ptne/measure.hpp"
#include "ptne/rng.hpp"

namespace ptne {

template <std::size_t D>
struct BinIndex {
    std::array<std::int64_t, D> n{};

    auto operator<=>(const BinIndex&) const = default;
};

/// The family of shifted regular grid partitions of R^D with fixed bin side
/// lengths l_i. A member of the family is selected by an offset theta with
/// theta_i in [0, l_i); bin n of that member is the half-open box
/// [l_i*(n_i - 1/2) + theta_i, l_i*(n_i + 1/2) + theta_i) per coordinate.
template <std::size_t D>
class RegularPartitionSpace {
public:
    explicit RegularPartitionSpace(Point<D> bin_dims) : dims_(bin_dims) {
        for (std::size_t i = 0; i < D; ++i)
            if (!(dims_[i] > 0.0))
                throw validation_error("RegularPartitionSpace: bin sides must be positive");
    }

    const Point<D>& bin_dims() const { return dims_; }

    void require_theta(const Point<D>& theta) const {
        for (std::size_t i = 0; i < D; ++i)
            if (!(theta[i] >= 0.0 && theta[i] < dims_[i]))
                throw validation_error("theta outside [0, l_i)");
    }

    /// Index of the bin containing z in the partition shifted by theta.
    BinIndex<D> bin_select(const Point<D>& theta, const Point<D>& z) const {
        require_theta(theta);
        BinIndex<D> b;
        for (std::size_t i = 0; i < D; ++i)
            b.n[i] = static_cast<std::int64_t>(std::floor((z[i] - theta[i]) / dims_[i] + 0.5));
        return b;
    }

    Rect<D> bin_rect(const Point<D>& theta, const BinIndex<D>& b) const {
        require_theta(theta);
        Rect<D> r;
        for (std::size_t i = 0; i < D; ++i) {
            double n = static_cast<double>(b.n[i]);
            r.low[i] = dims_[i] * (n - 0.5) + theta[i];
            r.high[i] = dims_[i] * (n + 0.5) + theta[i];
        }
        return r;
    }

    /// n i.i.d. draws of theta, uniform over the offset box.
    std::vector<Point<D>> sample_theta(std::uint64_t seed, std::size_t n) const {
        rng_engine eng(seed);
        std::vector<Point<D>> out;
        out.reserve(n);
        for (std::size_t k = 0; k < n; ++k) {
            Point<D> t;
            for (std::size_t i = 0; i < D; ++i) t[i] = uniform01(eng) * dims_[i];
            out.push_back(t);
        }
        return out;
    }

private:
    Point<D> dims_;
};

/// A partition member with zero-probability bins merged into their nearest
/// positive-probability neighbour, restricted to an enumeration region.
/// Payments treat all bins mapping to the same target as one merged bin.
template <std::size_t D>
class ContractedPartition {
public:
    ContractedPartition(Point<D> theta, std::map<BinIndex<D>, BinIndex<D>> merged)
        : theta_(theta), merged_(std::move(merged)) {
        for (const auto& [from, to] : merged_) members_[to].push_back(from);
        for (auto& [to, list] : members_) list.push_back(to);
    }

    const Point<D>& theta() const { return theta_; }

    /// Identity outside the merged set.
    BinIndex<D> map(const BinIndex<D>& b) const {
        auto it = merged_.find(b);
        return it == merged_.end() ? b : it->second;
    }

    /// All original bins that map to `target` (including itself), or just
    /// `target` if nothing was merged into it.
    std::vector<BinIndex<D>> members(const BinIndex<D>& target) const {
        auto it = members_.find(target);
        if (it == members_.end()) return {target};
        return it->second;
    }

    const std::map<BinIndex<D>, BinIndex<D>>& merges() const { return merged_; }

private:
    Point<D> theta_;
    std::map<BinIndex<D>, BinIndex<D>> merged_;
    std::map<BinIndex<D>, std::vector<BinIndex<D>>> members_;
};

/// All bin indices of the theta-shifted member that intersect `region`,
/// in lexicographic order.
template <std::size_t D>
std::vector<BinIndex<D>> bins_in_region(const RegularPartitionSpace<D>& ps, const Point<D>& theta,
                                        const Rect<D>& region) {
    ps.require_theta(theta);
    require_valid(region, "bins_in_region");
    BinIndex<D> lo = ps.bin_select(theta, region.low);
    BinIndex<D> hi = ps.bin_select(theta, region.high);
    std::vector<BinIndex<D>> all;
    BinIndex<D> cur = lo;
    while (true) {
        all.push_back(cur);
        int i = 0;
        for (; i < D; ++i) {
            if (cur.n[i] < hi.n[i]) {
                ++cur.n[i];
                break;
            }
            cur.n[i] = lo.n[i];
        }
        if (i == D) break;
    }
    return all;
}

/// Builds the contraction of the theta-shifted member over `region`: every
/// bin intersecting the region with R-probability zero is merged into the
/// positive-probability bin with the nearest center (ties broken by the
/// smaller index, lexicographically). Throws if no bin in the region has
/// positive probability.
template <std::size_t D>
ContractedPartition<D> contract(const RegularPartitionSpace<D>& ps, const Point<D>& theta,
                                const Measure<D>& r_dist, const Rect<D>& region) {
    auto all = bins_in_region(ps, theta, region);

    std::vector<BinIndex<D>> positive;
    std::vector<BinIndex<D>> zero;
    for (const auto& b : all) {
        double p = r_dist.rect_prob(ps.bin_rect(theta, b));
        (p > 0.0 ? positive : zero).push_back(b);
    }
    if (positive.empty())
        throw validation_error("contract: no positive-probability bin in region");

    std::map<BinIndex<D>, BinIndex<D>> merged;
    for (const auto& z : zero) {
        Point<D> zc = ps.bin_rect(theta, z).center();
        BinIndex<D> best = positive.front();
        double best_d = euclidean_distance(zc, ps.bin_rect(theta, best).center());
        for (std::size_t k = 1; k < positive.size(); ++k) {
            double d = euclidean_distance(zc, ps.bin_rect(theta, positive[k]).center());
            if (d < best_d || (d == best_d && positive[k] < best)) {
                best = positive[k];
                best_d = d;
            }
        }
        merged.emplace(z, best);
    }
    return ContractedPartition<D>(theta, std::move(merged));
}

struct BinSupportReport {
    std::size_t n_theta = 0;
    std::size_t violations = 0;
    double violation_rate = 0.0;
};

/// Estimates how often, over random partition offsets, some support point of
/// interest lands in a bin that the distribution `r_dist` gives zero
/// probability. A rate of zero (over the sampled offsets) is evidence that
/// payments never divide by zero for reports at these points.
template <std::size_t D>
BinSupportReport check_bin_supported(const RegularPartitionSpace<D>& ps, const Measure<D>& r_dist,
                                     const std::vector<Point<D>>& points, std::size_t n_theta,
                                     std::uint64_t seed) {
    BinSupportReport rep;
    rep.n_theta = n_theta;
    auto thetas = ps.sample_theta(seed, n_theta);
    for (const auto& theta : thetas) {
        bool bad = false;
        for (const auto& p : points) {
            Rect<D> bin = ps.bin_rect(theta, ps.bin_select(theta, p));
            if (r_dist.rect_prob(bin) <= 0.0) {
                bad = true;
                break;
            }
        }
        if (bad) ++rep.violations;
    }
    rep.violation_rate = n_theta == 0 ? 0.0 : static_cast<double>(rep.violations) / n_theta;
    return rep;
}

} // namespace ptne
