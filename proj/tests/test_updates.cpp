#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ptne/updates.hpp"

using namespace ptne;

TEST_CASE("point-mass update reweights bins exactly") {
    auto prior = empirical_measure<1>({{0.2}, {0.6}}, {0.5, 0.5});
    Point<1> o{0.6};
    for (double alpha : {0.25, 0.5, 1.0}) {
        auto post = empirical_update(prior, o, alpha);
        CHECK(post.rect_prob({{0.55}, {0.65}}) ==
              Catch::Approx((1 - alpha) * 0.5 + alpha).margin(1e-15));
        CHECK(post.rect_prob({{0.15}, {0.25}}) == Catch::Approx((1 - alpha) * 0.5).margin(1e-15));
        CHECK(post.rect_prob({{-1.0}, {2.0}}) == Catch::Approx(1.0).margin(1e-12));
    }
    CHECK_THROWS_AS(empirical_update(prior, o, 0.0), validation_error);
    CHECK_THROWS_AS(empirical_update(prior, o, 1.5), validation_error);
}

TEST_CASE("full-confidence update returns the kernel itself") {
    auto prior = gaussian_mixture<1>({{0.5}}, {{0.1}}, {1.0});
    auto kernel = empirical_measure<1>({{0.3}}, {1.0});
    auto post = additive_update(prior, kernel, 1.0);
    CHECK(post.kind() == MeasureKind::Empirical);
    CHECK(post.rect_prob({{0.29}, {0.31}}) == 1.0);
}

TEST_CASE("confidence schedule follows 1/(k+n)") {
    auto prior = uniform_box_measure<1>({{0.0}, {1.0}});
    UpdateSequenceState<1> st(2.0, prior);
    CHECK(st.next_alpha() == Catch::Approx(1.0 / 3.0));
    st = sequence_update(std::move(st), {0.5}, point_mass_kernel_builder<1>());
    CHECK(st.steps() == 1);
    CHECK(st.next_alpha() == Catch::Approx(1.0 / 4.0));
    st = sequence_update(std::move(st), {0.25}, point_mass_kernel_builder<1>());
    CHECK(st.next_alpha() == Catch::Approx(1.0 / 5.0));
    CHECK_THROWS_AS(UpdateSequenceState<1>(0.0, prior), validation_error);
}

TEST_CASE("closed-form posterior equals the step-by-step mixture") {
    // Folding the updates one at a time with confidences 1/(k+1), 1/(k+2),
    // ... must produce the same measure as the flat closed form.
    auto prior = gaussian_mixture<1>({{0.3}, {0.7}}, {{0.02}, {0.05}}, {0.4, 0.6});
    double k = 1.0;
    UpdateSequenceState<1> st(k, prior);
    Measure<1> folded = prior;
    rng_engine eng(55);
    auto builder = shrinking_pyramid_kernel_builder<1>({0.05});
    for (int n = 1; n <= 10; ++n) {
        Point<1> o{uniform01(eng)};
        double alpha = st.next_alpha();
        CHECK(alpha == Catch::Approx(1.0 / (k + n)));
        st = sequence_update(std::move(st), o, builder);
        folded = additive_update(folded, builder(o, n), alpha);
    }
    auto closed = st.posterior();
    for (int t = 0; t < 300; ++t) {
        double lo = uniform01(eng) * 1.4 - 0.2;
        double hi = lo + uniform01(eng) * 0.8 + 1e-6;
        CHECK(closed.rect_prob({{lo}, {hi}}) ==
              Catch::Approx(folded.rect_prob({{lo}, {hi}})).margin(1e-12));
    }
}

TEST_CASE("posterior cdf splits into prior and sample parts") {
    auto prior = uniform_box_measure<1>({{0.0}, {1.0}});
    double k = 1.0;
    UpdateSequenceState<1> st(k, prior);
    std::vector<double> obs{0.1, 0.4, 0.4, 0.9};
    for (double o : obs) st = sequence_update(std::move(st), {o}, point_mass_kernel_builder<1>());
    auto post = st.posterior();
    double n = static_cast<double>(obs.size());
    for (double x : {0.05, 0.3, 0.45, 0.95}) {
        double ecdf = 0.0;
        for (double o : obs)
            if (o <= x) ecdf += 1.0;
        ecdf /= n;
        double want = (k / (k + n)) * prior.cdf({x}) + (n / (k + n)) * ecdf;
        CHECK(post.cdf({x}) == Catch::Approx(want).margin(1e-14));
    }
}

TEST_CASE("shrinking pyramid kernels narrow as 1/step") {
    auto builder = shrinking_pyramid_kernel_builder<2>({0.1, 0.2});
    for (int step : {1, 2, 5, 10}) {
        auto kern = builder({0.5, 0.5}, step);
        Rect<2> s = kern.support_box();
        CHECK(s.high[0] - s.low[0] == Catch::Approx(0.2 / step));
        CHECK(s.high[1] - s.low[1] == Catch::Approx(0.4 / step));
        CHECK(kern.rect_prob({{0.0, 0.0}, {1.0, 1.0}}) == Catch::Approx(1.0).margin(1e-13));
    }
    CHECK_THROWS_AS(shrinking_pyramid_kernel_builder<1>({0.0}), validation_error);
}

TEST_CASE("convergence report: kolmogorov distance and kernel escape mass") {
    auto truth = empirical_measure<1>({{0.25}, {0.75}}, {0.5, 0.5});
    auto prior = uniform_box_measure<1>({{0.0}, {1.0}});
    UpdateSequenceState<1> st(1.0, prior);
    auto samples = truth.sample(1234, 2000);
    for (const auto& s : samples)
        st = sequence_update(std::move(st), s, point_mass_kernel_builder<1>());

    std::vector<Point<1>> grid;
    for (int i = 0; i <= 200; ++i) grid.push_back({-0.1 + 1.2 * i / 200.0});
    auto rep = convergence_report(st, truth, grid, {0.1, 0.01});

    // Point-mass kernels never put mass outside any positive radius.
    for (const auto& [eps, esc] : rep.concentration) {
        (void)eps;
        CHECK(esc == 0.0);
    }
    // At n=2000 the posterior should be well within a few percent.
    CHECK(rep.ks_distance < 0.05);
    CHECK(rep.ks_distance > 0.0);

    CHECK_THROWS_AS(convergence_report(st, truth, {}, {0.1}), validation_error);
}

TEST_CASE("pyramid kernel escape mass drops to zero once the radius covers the base") {
    auto prior = uniform_box_measure<1>({{0.0}, {1.0}});
    UpdateSequenceState<1> st(1.0, prior);
    auto builder = shrinking_pyramid_kernel_builder<1>({0.05});
    rng_engine eng(6);
    for (int n = 0; n < 50; ++n) {
        Point<1> o{0.2 + 0.6 * uniform01(eng)};
        st = sequence_update(std::move(st), o, builder);
    }
    std::vector<Point<1>> grid{{0.5}};
    auto truth = uniform_box_measure<1>({{0.0}, {1.0}});
    auto rep = convergence_report(st, truth, grid, {0.06, 0.02, 0.001});
    REQUIRE(rep.concentration.size() == 3);
    CHECK(rep.concentration[0].second == Catch::Approx(0.0).margin(1e-14)); // 0.06 > 0.05
    CHECK(rep.concentration[1].second > 0.0);  // only early wide kernels escape 0.02
    CHECK(rep.concentration[1].second < 1.0);
    CHECK(rep.concentration[2].second > rep.concentration[1].second);
}
