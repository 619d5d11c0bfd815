#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ptne/mechanism.hpp"

using namespace ptne;

TEST_CASE("discrete payment: match scores inverse public probability") {
    PtsConfig cfg;
    std::vector<double> pub{0.5, 0.25, 0.25};
    CHECK(pts_pay(cfg, pub, 1, 1) == Catch::Approx(4.0));
    CHECK(pts_pay(cfg, pub, 0, 0) == Catch::Approx(2.0));
    CHECK(pts_pay(cfg, pub, 0, 1) == 0.0);

    cfg.c = 2.0;
    cfg.f_offset = 0.5;
    CHECK(pts_pay(cfg, pub, 1, 1) == Catch::Approx(8.5));
    CHECK(pts_pay(cfg, pub, 2, 0) == Catch::Approx(0.5));

    CHECK_THROWS_AS(pts_pay(cfg, pub, 3, 0), validation_error);
    std::vector<double> degenerate{1.0, 0.0};
    CHECK_THROWS_AS(pts_pay(cfg, degenerate, 1, 1), degenerate_payment_error);
    CHECK(pts_pay(cfg, degenerate, 1, 0) == Catch::Approx(0.5)); // no match, no division
}

TEST_CASE("bin payment on a fixed partition member") {
    RegularPartitionSpace<1> ps({0.2});
    auto r = empirical_measure<1>({{0.1}, {0.3}}, {0.5, 0.5});
    PtsConfig cfg;
    Point<1> theta{0.05};

    // 0.1 and 0.12 share bin [-0.05, 0.15) of mass 0.5.
    CHECK(bin_extended_pay(cfg, r, ps, theta, {0.1}, {0.12}) == Catch::Approx(2.0));
    // 0.3 lies in the next bin: no match.
    CHECK(bin_extended_pay(cfg, r, ps, theta, {0.1}, {0.3}) == 0.0);
    CHECK(bin_extended_pay(cfg, r, ps, theta, {0.3}, {0.3}) == Catch::Approx(2.0));

    // Matching in a massless bin is degenerate under the default policy.
    CHECK_THROWS_AS(bin_extended_pay(cfg, r, ps, theta, {0.7}, {0.7}),
                    degenerate_payment_error);

    PtsConfig floor_cfg;
    floor_cfg.zero_bin_policy = ZeroBinPolicy::EpsilonFloor;
    std::size_t floored = 0;
    double pay = bin_extended_pay<1>(floor_cfg, r, ps, theta, {0.7}, {0.7}, nullptr, &floored);
    CHECK(floored == 1);
    CHECK(pay == Catch::Approx(1.0 / floor_cfg.epsilon_floor));
}

TEST_CASE("uniform public distribution gives constant interior payment") {
    // Bins of width 0.2 around 0.5 always sit inside [0,1]: mass is exactly
    // 0.2 for every offset, so the payment has zero variance.
    RegularPartitionSpace<1> ps({0.2});
    auto r = uniform_box_measure<1>({{0.0}, {1.0}});
    auto est = ptne_pay(PtsConfig{}, r, ps, {0.5}, {0.5}, 400, 17);
    CHECK(est.mean == Catch::Approx(5.0).margin(1e-12));
    CHECK(est.std_dev == Catch::Approx(0.0).margin(1e-12));
    CHECK(est.n_theta == 400);
}

TEST_CASE("family-averaged payment is deterministic in the seed") {
    RegularPartitionSpace<1> ps({0.2});
    auto r = empirical_measure<1>({{0.1}, {0.3}, {0.8}}, {0.3, 0.4, 0.3});
    auto a = ptne_pay(PtsConfig{}, r, ps, {0.3}, {0.31}, 300, 123);
    auto b = ptne_pay(PtsConfig{}, r, ps, {0.3}, {0.31}, 300, 123);
    CHECK(a.mean == b.mean);
    CHECK(a.std_dev == b.std_dev);
    auto c = ptne_pay(PtsConfig{}, r, ps, {0.3}, {0.31}, 300, 124);
    CHECK(a.mean != c.mean);
}

TEST_CASE("match probability shrinks linearly with report separation") {
    // With uniform R, the matched-bin payment is c/l whenever both points
    // share a bin, which happens with offset probability 1 - d/l. Expected
    // payment is therefore (1 - d/l) * c/l.
    RegularPartitionSpace<1> ps({0.2});
    auto r = uniform_box_measure<1>({{-1.0}, {2.0}});
    PtsConfig cfg;
    for (double d : {0.0, 0.05, 0.1, 0.15}) {
        auto est = ptne_pay(cfg, r, ps, {0.5}, {0.5 + d}, 20000, 9);
        double bin_mass = 0.2 / 3.0;
        double want = (1.0 - d / 0.2) / bin_mass;
        CHECK(est.mean == Catch::Approx(want).margin(3.5 * est.std_dev / std::sqrt(20000.0)));
    }
}

TEST_CASE("exact peer expectation matches analytic value for a point-mass peer") {
    RegularPartitionSpace<1> ps({0.2});
    auto r = uniform_box_measure<1>({{-1.0}, {2.0}});
    auto peer = empirical_measure<1>({{0.55}}, {1.0});
    PtsConfig cfg;
    auto thetas = ps.sample_theta(21, 20000);
    auto est = expected_pay_over(cfg, r, ps, Point<1>{0.5}, peer,
                                 std::span<const Point<1>>(thetas.data(), thetas.size()));
    double bin_mass = 0.2 / 3.0;
    double want = (1.0 - 0.05 / 0.2) / bin_mass;
    CHECK(est.mean == Catch::Approx(want).margin(3.5 * est.std_dev / std::sqrt(20000.0)));
}

TEST_CASE("exact and sampled peer expectations agree") {
    RegularPartitionSpace<1> ps({0.25});
    auto r = empirical_measure<1>({{0.2}, {0.5}, {0.8}}, {0.25, 0.5, 0.25});
    auto peer = empirical_measure<1>({{0.2}, {0.5}, {0.8}}, {0.3, 0.4, 0.3});
    PtsConfig cfg;
    auto exact = expected_pay_under(cfg, r, ps, Point<1>{0.5}, peer, 2000, 1, 77,
                                    PeerExpectation::Exact);
    auto sampled = expected_pay_under(cfg, r, ps, Point<1>{0.5}, peer, 2000, 50, 77,
                                      PeerExpectation::Sampled);
    // Same offsets, so only peer-sampling noise separates them.
    CHECK(exact.mean == Catch::Approx(sampled.mean).margin(0.15 * exact.mean + 0.05));
}

TEST_CASE("contracted partitions price merged bins at the positive target") {
    RegularPartitionSpace<1> ps({0.2});
    auto r = empirical_measure<1>({{0.1}, {0.9}}, {0.6, 0.4});
    Point<1> theta{0.0};
    auto con = contract(ps, theta, r, {{0.0}, {1.0}});
    PtsConfig cfg;

    // 0.45 lives in a massless bin merged into 0.1's bin (nearest positive):
    // reports at 0.1 and 0.45 now match and pay 1/0.6.
    double pay = bin_extended_pay(cfg, r, ps, theta, {0.45}, {0.1}, &con);
    CHECK(pay == Catch::Approx(1.0 / 0.6));
    // Without the contraction this is a mismatch.
    CHECK(bin_extended_pay(cfg, r, ps, theta, {0.45}, {0.1}) == 0.0);
    // And a self-match in the massless bin is degenerate only without it.
    CHECK(bin_extended_pay(cfg, r, ps, theta, {0.45}, {0.45}, &con) == Catch::Approx(1.0 / 0.6));
    CHECK_THROWS_AS(bin_extended_pay(cfg, r, ps, theta, {0.45}, {0.45}),
                    degenerate_payment_error);

    // Exact peer expectation accounts for the whole merged bin.
    auto thetas = std::vector<Point<1>>{theta};
    auto peer = empirical_measure<1>({{0.45}}, {1.0});
    auto est = expected_pay_over(cfg, r, ps, Point<1>{0.1}, peer,
                                 std::span<const Point<1>>(thetas.data(), thetas.size()),
                                 PeerExpectation::Exact, 0, 0, &con);
    CHECK(est.mean == Catch::Approx(1.0 / 0.6));
}

TEST_CASE("payment estimate input validation") {
    RegularPartitionSpace<1> ps({0.2});
    auto r = uniform_box_measure<1>({{0.0}, {1.0}});
    CHECK_THROWS_AS(ptne_pay(PtsConfig{}, r, ps, {0.5}, {0.5}, 0, 1), validation_error);
    CHECK_THROWS_AS(expected_pay_under(PtsConfig{}, r, ps, Point<1>{0.5}, r, 10, 0, 1,
                                       PeerExpectation::Sampled),
                    validation_error);
}
