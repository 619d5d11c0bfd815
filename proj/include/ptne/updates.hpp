#pragma once

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "ptne/errors.hpp"
#include "ptne/measure.hpp"
#include "ptne/pyramid.hpp"

namespace ptne {

/// Posterior (1 - alpha) * prior + alpha * kernel.
template <std::size_t D>
Measure<D> additive_update(const Measure<D>& prior, const Measure<D>& kernel, double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0))
        throw validation_error("additive_update: alpha must be in (0, 1]");
    if (alpha >= 1.0) return kernel;
    return mix(prior, 1.0 - alpha, kernel, alpha);
}

/// Additive update whose kernel is a unit point mass at the observation.
template <std::size_t D>
Measure<D> empirical_update(const Measure<D>& prior, const Point<D>& o, double alpha) {
    return additive_update(prior, empirical_measure<D>({o}, {1.0}), alpha);
}

/// Mass the pyramid kernel assigns to a box; exposed under the name used by
/// the update layer.
template <std::size_t D>
double pyramid_pdf_bin_mass(const PyramidKernel<D>& k, const Rect<D>& r) {
    return k.box_mass(r);
}

/// Builds the per-step kernel from the observation and the 1-based step
/// index (later steps may shrink the kernel).
template <std::size_t D>
using KernelBuilder = std::function<Measure<D>(const Point<D>& o, int step)>;

template <std::size_t D>
KernelBuilder<D> point_mass_kernel_builder() {
    return [](const Point<D>& o, int) { return empirical_measure<D>({o}, {1.0}); };
}

/// Symmetric pyramid kernels shrinking as delta0 / step, so late
/// observations sharpen the posterior instead of smearing it.
template <std::size_t D>
KernelBuilder<D> shrinking_pyramid_kernel_builder(Point<D> delta0) {
    for (std::size_t i = 0; i < D; ++i)
        if (!(delta0[i] > 0.0))
            throw validation_error("shrinking_pyramid_kernel_builder: delta0 must be positive");
    return [delta0](const Point<D>& o, int step) {
        Point<D> d;
        for (std::size_t i = 0; i < D; ++i) d[i] = delta0[i] / static_cast<double>(step);
        return pyramid_measure(PyramidKernel<D>::make(o, d, o));
    };
}

/// State of the repeated additive update with the k/(k+n) confidence
/// schedule: after n observations the posterior is
///   k/(k+n) * prior + 1/(k+n) * (kernel_1 + ... + kernel_n).
/// Kernels are retained so the posterior can be formed in closed form; the
/// step-by-step binary mixture route gives the same measure and is exercised
/// by the tests.
template <std::size_t D>
class UpdateSequenceState {
public:
    UpdateSequenceState(double k, Measure<D> prior) : k_(k), prior_(std::move(prior)) {
        if (!(k_ > 0.0)) throw validation_error("UpdateSequenceState: k must be positive");
    }

    double k() const { return k_; }
    std::size_t steps() const { return kernels_.size(); }
    const Measure<D>& prior() const { return prior_; }
    const std::vector<Measure<D>>& kernels() const { return kernels_; }
    const std::vector<Point<D>>& observations() const { return obs_; }

    /// Confidence the next observation will receive; the n-th observation
    /// enters at weight 1 / (k + n).
    double next_alpha() const {
        return 1.0 / (k_ + static_cast<double>(kernels_.size()) + 1.0);
    }

    void push(const Point<D>& o, Measure<D> kernel) {
        obs_.push_back(o);
        kernels_.push_back(std::move(kernel));
    }

    Measure<D> posterior() const {
        double n = static_cast<double>(kernels_.size());
        std::vector<std::pair<double, Measure<D>>> terms;
        terms.reserve(kernels_.size() + 1);
        terms.emplace_back(k_ / (k_ + n), prior_);
        for (const auto& kref : kernels_) terms.emplace_back(1.0 / (k_ + n), kref);
        return mixture(std::move(terms));
    }

private:
    double k_;
    Measure<D> prior_;
    std::vector<Measure<D>> kernels_;
    std::vector<Point<D>> obs_;
};

/// One step of the sequence: builds the kernel for this observation and
/// appends it at weight 1/(k+n+1).
template <std::size_t D>
UpdateSequenceState<D> sequence_update(UpdateSequenceState<D> state, const Point<D>& o,
                                       const KernelBuilder<D>& builder) {
    state.push(o, builder(o, static_cast<int>(state.steps()) + 1));
    return state;
}

struct ConvergenceReport {
    /// sup over the evaluation grid of |F_posterior - F_truth|.
    double ks_distance = 0.0;
    /// Per epsilon of the ladder: average over observations of the kernel
    /// mass escaping the sup-norm ball of that radius around its center.
    std::vector<std::pair<double, double>> concentration;
};

/// Distance of the current posterior from `truth` plus how concentrated the
/// step kernels are. CDFs are compared on the supplied grid points.
template <std::size_t D>
ConvergenceReport convergence_report(const UpdateSequenceState<D>& state, const Measure<D>& truth,
                                     const std::vector<Point<D>>& eval_grid,
                                     const std::vector<double>& eps_ladder) {
    if (eval_grid.empty()) throw validation_error("convergence_report: empty evaluation grid");
    ConvergenceReport rep;
    Measure<D> post = state.posterior();
    for (const auto& x : eval_grid)
        rep.ks_distance = std::max(rep.ks_distance, std::abs(post.cdf(x) - truth.cdf(x)));

    const auto& obs = state.observations();
    const auto& kernels = state.kernels();
    for (double eps : eps_ladder) {
        double acc = 0.0;
        if (!obs.empty()) {
            Point<D> half;
            for (std::size_t i = 0; i < D; ++i) half[i] = eps;
            for (std::size_t j = 0; j < obs.size(); ++j)
                acc += 1.0 - kernels[j].rect_prob(centered_box(obs[j], half));
            acc /= static_cast<double>(obs.size());
        }
        rep.concentration.emplace_back(eps, acc);
    }
    return rep;
}

} // namespace ptne
