#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ptne/errors.hpp"
#include "ptne/measure.hpp"
#include "ptne/partition.hpp"

namespace ptne {

/// What to do when a matched report falls in a bin of zero R-probability.
/// Error is the faithful behaviour; EpsilonFloor substitutes a tiny floor and
/// counts the event so downstream output can flag it.
enum class ZeroBinPolicy { Error, Contract, EpsilonFloor };

struct PtsConfig {
    double c = 1.0;
    double f_offset = 0.0;
    ZeroBinPolicy zero_bin_policy = ZeroBinPolicy::Error;
    double epsilon_floor = 1e-12;
};

struct PaymentEstimate {
    double mean = 0.0;
    double std_dev = 0.0;
    std::size_t n_theta = 0;
    std::uint64_t seed = 0;
    /// Number of per-theta evaluations where the epsilon floor kicked in.
    std::size_t floored = 0;
};

namespace detail {

inline double resolve_bin_prob(const PtsConfig& cfg, double p, std::size_t* floored) {
    if (p > 0.0) return p;
    switch (cfg.zero_bin_policy) {
    case ZeroBinPolicy::EpsilonFloor:
        if (floored) ++*floored;
        return cfg.epsilon_floor;
    case ZeroBinPolicy::Contract:
        throw degenerate_payment_error(
            "matched bin has zero probability after contraction; region too small or "
            "no contraction supplied");
    case ZeroBinPolicy::Error:
    default:
        throw degenerate_payment_error("matched bin has zero R-probability");
    }
}

inline PaymentEstimate summarize(const std::vector<double>& vals, std::uint64_t seed,
                                 std::size_t floored) {
    PaymentEstimate est;
    est.n_theta = vals.size();
    est.seed = seed;
    est.floored = floored;
    if (vals.empty()) return est;
    double sum = 0.0;
    for (double v : vals) sum += v;
    est.mean = sum / static_cast<double>(vals.size());
    if (vals.size() > 1) {
        double ss = 0.0;
        for (double v : vals) {
            double d = v - est.mean;
            ss += d * d;
        }
        est.std_dev = std::sqrt(ss / static_cast<double>(vals.size() - 1));
    }
    return est;
}

} // namespace detail

/// Output-agreement score 1/p evaluated on the public probability of the
/// matched answer, scaled by c. Used by the update-condition checks.
inline std::function<double(double)> make_pts_scoring(const PtsConfig& cfg) {
    return [cfg](double p) {
        std::size_t dummy = 0;
        return cfg.c / detail::resolve_bin_prob(cfg, p, &dummy);
    };
}

/// Discrete peer-truth-serum payment over a finite answer space:
/// f + c / pub[r] if r == rr, else f.
inline double pts_pay(const PtsConfig& cfg, const std::vector<double>& pub, std::size_t r,
                      std::size_t rr) {
    if (r >= pub.size() || rr >= pub.size())
        throw validation_error("pts_pay: answer index out of range");
    if (r != rr) return cfg.f_offset;
    return cfg.f_offset + cfg.c / detail::resolve_bin_prob(cfg, pub[r], nullptr);
}

/// Payment for one partition member: reports are reduced to bins of the
/// theta-shifted grid, then scored by the discrete rule. If a contraction is
/// supplied, bins are first mapped through it and the matched merged bin is
/// priced at the probability of its positive target (merged-in bins carry
/// zero R-mass by construction).
template <std::size_t D>
double bin_extended_pay(const PtsConfig& cfg, const Measure<D>& r_dist,
                        const RegularPartitionSpace<D>& ps, const Point<D>& theta,
                        const Point<D>& r, const Point<D>& rr,
                        const ContractedPartition<D>* contraction = nullptr,
                        std::size_t* floored = nullptr) {
    BinIndex<D> bi = ps.bin_select(theta, r);
    BinIndex<D> bj = ps.bin_select(theta, rr);
    if (contraction) {
        bi = contraction->map(bi);
        bj = contraction->map(bj);
    }
    if (bi != bj) return cfg.f_offset;
    double p = r_dist.rect_prob(ps.bin_rect(theta, bi));
    return cfg.f_offset + cfg.c / detail::resolve_bin_prob(cfg, p, floored);
}

/// Monte Carlo estimate of the payment averaged over the partition family:
/// the offset theta is drawn uniformly n_theta times and the bin payment is
/// averaged. std_dev is the sample standard deviation of the per-theta
/// payments, not of the mean.
template <std::size_t D>
PaymentEstimate ptne_pay(const PtsConfig& cfg, const Measure<D>& r_dist,
                         const RegularPartitionSpace<D>& ps, const Point<D>& r,
                         const Point<D>& rr, std::size_t n_theta, std::uint64_t seed,
                         const ContractedPartition<D>* contraction = nullptr) {
    if (n_theta == 0) throw validation_error("ptne_pay: n_theta must be positive");
    auto thetas = ps.sample_theta(seed, n_theta);
    std::vector<double> vals;
    vals.reserve(n_theta);
    std::size_t floored = 0;
    for (const auto& theta : thetas)
        vals.push_back(bin_extended_pay(cfg, r_dist, ps, theta, r, rr, contraction, &floored));
    return detail::summarize(vals, seed, floored);
}

enum class PeerExpectation { Exact, Sampled };

/// Per-theta expected payment for `report` against a random peer drawn from
/// `peer_dist`, averaged over the supplied offsets. In Exact mode the match
/// probability is the peer mass of the report's (merged) bin; Sampled mode
/// draws n_peers concrete peers per offset instead.
template <std::size_t D>
PaymentEstimate expected_pay_over(const PtsConfig& cfg, const Measure<D>& r_dist,
                                  const RegularPartitionSpace<D>& ps, const Point<D>& report,
                                  const Measure<D>& peer_dist, std::span<const Point<D>> thetas,
                                  PeerExpectation mode = PeerExpectation::Exact,
                                  std::size_t n_peers = 0, std::uint64_t peer_seed = 0,
                                  const ContractedPartition<D>* contraction = nullptr) {
    if (mode == PeerExpectation::Sampled && n_peers == 0)
        throw validation_error("expected_pay_over: sampled mode needs n_peers > 0");
    std::vector<double> vals;
    vals.reserve(thetas.size());
    std::size_t floored = 0;
    rng_engine peer_eng(peer_seed);
    for (const auto& theta : thetas) {
        if (mode == PeerExpectation::Exact) {
            BinIndex<D> bi = ps.bin_select(theta, report);
            if (contraction) bi = contraction->map(bi);
            double peer_p = 0.0;
            if (contraction) {
                for (const auto& member : contraction->members(bi))
                    peer_p += peer_dist.rect_prob(ps.bin_rect(theta, member));
            } else {
                peer_p = peer_dist.rect_prob(ps.bin_rect(theta, bi));
            }
            double pay = cfg.f_offset;
            if (peer_p > 0.0) {
                double rp = r_dist.rect_prob(ps.bin_rect(theta, bi));
                pay += peer_p * cfg.c / detail::resolve_bin_prob(cfg, rp, &floored);
            }
            vals.push_back(pay);
        } else {
            double acc = 0.0;
            for (std::size_t k = 0; k < n_peers; ++k) {
                Point<D> rr = peer_dist.node().sample_one(peer_eng);
                acc += bin_extended_pay(cfg, r_dist, ps, theta, report, rr, contraction, &floored);
            }
            vals.push_back(acc / static_cast<double>(n_peers));
        }
    }
    return detail::summarize(vals, 0, floored);
}

/// Convenience wrapper drawing its own offsets from `seed`.
template <std::size_t D>
PaymentEstimate expected_pay_under(const PtsConfig& cfg, const Measure<D>& r_dist,
                                   const RegularPartitionSpace<D>& ps, const Point<D>& report,
                                   const Measure<D>& peer_dist, std::size_t n_theta,
                                   std::size_t n_peers, std::uint64_t seed,
                                   PeerExpectation mode = PeerExpectation::Exact,
                                   const ContractedPartition<D>* contraction = nullptr) {
    if (n_theta == 0) throw validation_error("expected_pay_under: n_theta must be positive");
    auto thetas = ps.sample_theta(derive_seed(seed, "theta"), n_theta);
    auto est = expected_pay_over(cfg, r_dist, ps, report, peer_dist,
                                 std::span<const Point<D>>(thetas.data(), thetas.size()), mode,
                                 n_peers, derive_seed(seed, "peers"), contraction);
    est.seed = seed;
    return est;
}

} // namespace ptne
