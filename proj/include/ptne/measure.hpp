#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <utility>
#include <vector>

#include "ptne/errors.hpp"
#include "ptne/geometry.hpp"
#include "ptne/rng.hpp"

namespace ptne {

enum class MeasureKind { Empirical, GaussianMixture, Mixture, UniformBox, Pyramid };

namespace detail {

constexpr double weight_tol = 1e-12;
constexpr double inv_sqrt2 = 0.70710678118654752440084436210485;

inline double std_normal_cdf(double z) {
    return 0.5 * std::erfc(-z * inv_sqrt2);
}

/// P(a <= Z < b) for standard normal Z. Branches keep cancellation out of
/// the tails: same-sign endpoints go through erfc, straddling through erf.
inline double std_normal_interval(double a, double b) {
    if (!(a < b)) return 0.0;
    if (a >= 0.0) return 0.5 * (std::erfc(a * inv_sqrt2) - std::erfc(b * inv_sqrt2));
    if (b <= 0.0) return 0.5 * (std::erfc(-b * inv_sqrt2) - std::erfc(-a * inv_sqrt2));
    return 0.5 * (std::erf(b * inv_sqrt2) + std::erf(-a * inv_sqrt2));
}

inline void check_weights(const std::vector<double>& w, const char* what) {
    if (w.empty()) throw validation_error(std::string(what) + ": no components");
    double sum = 0.0;
    for (double x : w) {
        if (!(x >= 0.0)) throw validation_error(std::string(what) + ": negative weight");
        sum += x;
    }
    if (std::abs(sum - 1.0) > weight_tol)
        throw validation_error(std::string(what) + ": weights must sum to 1 within 1e-12");
}

inline std::vector<double> cumulative(const std::vector<double>& w) {
    std::vector<double> c(w.size());
    std::partial_sum(w.begin(), w.end(), c.begin());
    return c;
}

inline std::size_t pick_index(const std::vector<double>& cum, double u) {
    auto it = std::upper_bound(cum.begin(), cum.end(), u);
    auto i = static_cast<std::size_t>(it - cum.begin());
    return std::min(i, cum.size() - 1);
}

} // namespace detail

/// Immutable node behind the type-erased Measure handle.
template <std::size_t D>
class MeasureNode {
public:
    virtual ~MeasureNode() = default;
    virtual MeasureKind kind() const = 0;
    /// P(X_i <= x_i for all i).
    virtual double cdf(const Point<D>& x) const = 0;
    /// Probability of the half-open box [low, high).
    virtual double rect_prob(const Rect<D>& r) const = 0;
    virtual Point<D> sample_one(rng_engine& eng) const = 0;
    /// Box carrying all but a negligible tail of the mass; a grid/plot hint,
    /// not a probability statement. May be degenerate (zero width).
    virtual Rect<D> support_box() const = 0;
};

/// Value-semantic handle to an immutable probability measure on R^D.
/// Handles are cheap to copy; the node is shared and never mutated.
template <std::size_t D>
class Measure {
public:
    explicit Measure(std::shared_ptr<const MeasureNode<D>> node) : node_(std::move(node)) {
        if (!node_) throw validation_error("Measure: null node");
    }

    MeasureKind kind() const { return node_->kind(); }

    double cdf(const Point<D>& x) const { return node_->cdf(x); }

    double rect_prob(const Rect<D>& r) const {
        require_valid(r, "rect_prob");
        return node_->rect_prob(r);
    }

    std::vector<Point<D>> sample(std::uint64_t seed, std::size_t n) const {
        rng_engine eng(seed);
        std::vector<Point<D>> out;
        out.reserve(n);
        for (std::size_t i = 0; i < n; ++i) out.push_back(node_->sample_one(eng));
        return out;
    }

    Rect<D> support_box() const { return node_->support_box(); }

    const MeasureNode<D>& node() const { return *node_; }

private:
    std::shared_ptr<const MeasureNode<D>> node_;
};

namespace nodes {

template <std::size_t D>
class Empirical final : public MeasureNode<D> {
public:
    Empirical(std::vector<Point<D>> atoms, std::vector<double> weights)
        : atoms_(std::move(atoms)), weights_(std::move(weights)) {
        if (atoms_.size() != weights_.size())
            throw validation_error("empirical_measure: atoms/weights size mismatch");
        detail::check_weights(weights_, "empirical_measure");
        cum_ = detail::cumulative(weights_);
    }

    MeasureKind kind() const override { return MeasureKind::Empirical; }

    double cdf(const Point<D>& x) const override {
        double p = 0.0;
        for (std::size_t k = 0; k < atoms_.size(); ++k) {
            bool below = true;
            for (std::size_t i = 0; i < D; ++i)
                if (atoms_[k][i] > x[i]) { below = false; break; }
            if (below) p += weights_[k];
        }
        return p;
    }

    double rect_prob(const Rect<D>& r) const override {
        double p = 0.0;
        for (std::size_t k = 0; k < atoms_.size(); ++k)
            if (r.contains(atoms_[k])) p += weights_[k];
        return p;
    }

    Point<D> sample_one(rng_engine& eng) const override {
        return atoms_[detail::pick_index(cum_, uniform01(eng))];
    }

    Rect<D> support_box() const override {
        Rect<D> r;
        for (std::size_t i = 0; i < D; ++i) {
            r.low[i] = std::numeric_limits<double>::infinity();
            r.high[i] = -std::numeric_limits<double>::infinity();
        }
        for (const auto& a : atoms_)
            for (std::size_t i = 0; i < D; ++i) {
                r.low[i] = std::min(r.low[i], a[i]);
                r.high[i] = std::max(r.high[i], a[i]);
            }
        return r;
    }

    const std::vector<Point<D>>& atoms() const { return atoms_; }
    const std::vector<double>& weights() const { return weights_; }

private:
    std::vector<Point<D>> atoms_;
    std::vector<double> weights_;
    std::vector<double> cum_;
};

/// Gaussian mixture with diagonal covariance per component.
template <std::size_t D>
class GaussianMixture final : public MeasureNode<D> {
public:
    GaussianMixture(std::vector<Point<D>> means, std::vector<Point<D>> variances,
                    std::vector<double> weights)
        : means_(std::move(means)), vars_(std::move(variances)), weights_(std::move(weights)) {
        if (means_.size() != vars_.size() || means_.size() != weights_.size())
            throw validation_error("gaussian_mixture: component size mismatch");
        detail::check_weights(weights_, "gaussian_mixture");
        for (const auto& v : vars_)
            for (std::size_t i = 0; i < D; ++i)
                if (!(v[i] > 0.0)) throw validation_error("gaussian_mixture: variance must be positive");
        cum_ = detail::cumulative(weights_);
        sds_.resize(vars_.size());
        for (std::size_t k = 0; k < vars_.size(); ++k)
            for (std::size_t i = 0; i < D; ++i) sds_[k][i] = std::sqrt(vars_[k][i]);
    }

    MeasureKind kind() const override { return MeasureKind::GaussianMixture; }

    double cdf(const Point<D>& x) const override {
        double p = 0.0;
        for (std::size_t k = 0; k < means_.size(); ++k) {
            double term = weights_[k];
            for (std::size_t i = 0; i < D; ++i)
                term *= detail::std_normal_cdf((x[i] - means_[k][i]) / sds_[k][i]);
            p += term;
        }
        return p;
    }

    double rect_prob(const Rect<D>& r) const override {
        double p = 0.0;
        for (std::size_t k = 0; k < means_.size(); ++k) {
            double term = weights_[k];
            for (std::size_t i = 0; i < D; ++i) {
                double a = (r.low[i] - means_[k][i]) / sds_[k][i];
                double b = (r.high[i] - means_[k][i]) / sds_[k][i];
                term *= detail::std_normal_interval(a, b);
            }
            p += term;
        }
        return p;
    }

    Point<D> sample_one(rng_engine& eng) const override {
        std::size_t k = detail::pick_index(cum_, uniform01(eng));
        Point<D> x;
        for (std::size_t i = 0; i < D; ++i) x[i] = means_[k][i] + sds_[k][i] * normal01(eng);
        return x;
    }

    Rect<D> support_box() const override {
        Rect<D> r;
        for (std::size_t i = 0; i < D; ++i) {
            r.low[i] = std::numeric_limits<double>::infinity();
            r.high[i] = -std::numeric_limits<double>::infinity();
        }
        for (std::size_t k = 0; k < means_.size(); ++k)
            for (std::size_t i = 0; i < D; ++i) {
                r.low[i] = std::min(r.low[i], means_[k][i] - 6.0 * sds_[k][i]);
                r.high[i] = std::max(r.high[i], means_[k][i] + 6.0 * sds_[k][i]);
            }
        return r;
    }

    const std::vector<Point<D>>& means() const { return means_; }
    const std::vector<Point<D>>& variances() const { return vars_; }
    const std::vector<double>& weights() const { return weights_; }

private:
    std::vector<Point<D>> means_;
    std::vector<Point<D>> vars_;
    std::vector<double> weights_;
    std::vector<double> cum_;
    std::vector<Point<D>> sds_;
};

template <std::size_t D>
class UniformBox final : public MeasureNode<D> {
public:
    explicit UniformBox(Rect<D> box) : box_(box) {
        require_valid(box_, "uniform_box_measure");
    }

    MeasureKind kind() const override { return MeasureKind::UniformBox; }

    double cdf(const Point<D>& x) const override {
        double p = 1.0;
        for (std::size_t i = 0; i < D; ++i) {
            double t = (x[i] - box_.low[i]) / (box_.high[i] - box_.low[i]);
            p *= std::clamp(t, 0.0, 1.0);
        }
        return p;
    }

    double rect_prob(const Rect<D>& r) const override {
        double p = 1.0;
        for (std::size_t i = 0; i < D; ++i) {
            double lo = std::max(r.low[i], box_.low[i]);
            double hi = std::min(r.high[i], box_.high[i]);
            if (hi <= lo) return 0.0;
            p *= (hi - lo) / (box_.high[i] - box_.low[i]);
        }
        return p;
    }

    Point<D> sample_one(rng_engine& eng) const override {
        Point<D> x;
        for (std::size_t i = 0; i < D; ++i)
            x[i] = box_.low[i] + uniform01(eng) * (box_.high[i] - box_.low[i]);
        return x;
    }

    Rect<D> support_box() const override { return box_; }

    const Rect<D>& box() const { return box_; }

private:
    Rect<D> box_;
};

/// Finite convex combination of arbitrary measures. Terms are held lazily;
/// queries distribute over them.
template <std::size_t D>
class Mixture final : public MeasureNode<D> {
public:
    explicit Mixture(std::vector<std::pair<double, Measure<D>>> terms)
        : terms_(std::move(terms)) {
        std::vector<double> coefs;
        coefs.reserve(terms_.size());
        for (const auto& [c, m] : terms_) coefs.push_back(c);
        detail::check_weights(coefs, "mixture");
        cum_ = detail::cumulative(coefs);
    }

    MeasureKind kind() const override { return MeasureKind::Mixture; }

    double cdf(const Point<D>& x) const override {
        double p = 0.0;
        for (const auto& [c, m] : terms_)
            if (c > 0.0) p += c * m.cdf(x);
        return p;
    }

    double rect_prob(const Rect<D>& r) const override {
        double p = 0.0;
        for (const auto& [c, m] : terms_)
            if (c > 0.0) p += c * m.node().rect_prob(r);
        return p;
    }

    Point<D> sample_one(rng_engine& eng) const override {
        std::size_t k = detail::pick_index(cum_, uniform01(eng));
        return terms_[k].second.node().sample_one(eng);
    }

    Rect<D> support_box() const override {
        Rect<D> r;
        for (std::size_t i = 0; i < D; ++i) {
            r.low[i] = std::numeric_limits<double>::infinity();
            r.high[i] = -std::numeric_limits<double>::infinity();
        }
        for (const auto& [c, m] : terms_) {
            if (c <= 0.0) continue;
            Rect<D> s = m.support_box();
            for (std::size_t i = 0; i < D; ++i) {
                r.low[i] = std::min(r.low[i], s.low[i]);
                r.high[i] = std::max(r.high[i], s.high[i]);
            }
        }
        return r;
    }

    const std::vector<std::pair<double, Measure<D>>>& terms() const { return terms_; }

private:
    std::vector<std::pair<double, Measure<D>>> terms_;
    std::vector<double> cum_;
};

} // namespace nodes

template <std::size_t D>
Measure<D> empirical_measure(std::vector<Point<D>> atoms, std::vector<double> weights) {
    return Measure<D>(std::make_shared<nodes::Empirical<D>>(std::move(atoms), std::move(weights)));
}

template <std::size_t D>
Measure<D> gaussian_mixture(std::vector<Point<D>> means, std::vector<Point<D>> variances,
                            std::vector<double> weights) {
    return Measure<D>(std::make_shared<nodes::GaussianMixture<D>>(
        std::move(means), std::move(variances), std::move(weights)));
}

template <std::size_t D>
Measure<D> uniform_box_measure(Rect<D> box) {
    return Measure<D>(std::make_shared<nodes::UniformBox<D>>(box));
}

template <std::size_t D>
Measure<D> mixture(std::vector<std::pair<double, Measure<D>>> terms) {
    return Measure<D>(std::make_shared<nodes::Mixture<D>>(std::move(terms)));
}

/// Two-term convenience mixture wa*a + wb*b; wa + wb must be 1 within 1e-12.
template <std::size_t D>
Measure<D> mix(const Measure<D>& a, double wa, const Measure<D>& b, double wb) {
    return mixture<D>({{wa, a}, {wb, b}});
}

/// Structural accessors. Each throws validation_error unless the measure has
/// the matching kind.
template <std::size_t D>
const std::vector<Point<D>>& atoms_of(const Measure<D>& m) {
    auto* n = dynamic_cast<const nodes::Empirical<D>*>(&m.node());
    if (!n) throw validation_error("atoms_of: not an empirical measure");
    return n->atoms();
}

template <std::size_t D>
const std::vector<double>& weights_of(const Measure<D>& m) {
    if (auto* e = dynamic_cast<const nodes::Empirical<D>*>(&m.node())) return e->weights();
    if (auto* g = dynamic_cast<const nodes::GaussianMixture<D>*>(&m.node())) return g->weights();
    throw validation_error("weights_of: measure has no component weights");
}

template <std::size_t D>
const std::vector<std::pair<double, Measure<D>>>& mixture_terms_of(const Measure<D>& m) {
    auto* n = dynamic_cast<const nodes::Mixture<D>*>(&m.node());
    if (!n) throw validation_error("mixture_terms_of: not a mixture");
    return n->terms();
}

} // namespace ptne
