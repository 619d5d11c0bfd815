#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ptne/pyramid.hpp"

using namespace ptne;

namespace {

// Midpoint-rule oracle over the clipped support.
double riemann_mass_2d(const PyramidKernel<2>& k, const Rect<2>& r, int steps = 1200) {
    Rect<2> s = k.support();
    double lo0 = std::max(r.low[0], s.low[0]), hi0 = std::min(r.high[0], s.high[0]);
    double lo1 = std::max(r.low[1], s.low[1]), hi1 = std::min(r.high[1], s.high[1]);
    if (hi0 <= lo0 || hi1 <= lo1) return 0.0;
    double hx = (hi0 - lo0) / steps, hy = (hi1 - lo1) / steps;
    double acc = 0.0;
    for (int i = 0; i < steps; ++i)
        for (int j = 0; j < steps; ++j)
            acc += k.pdf({lo0 + (i + 0.5) * hx, lo1 + (j + 0.5) * hy});
    return acc * hx * hy;
}

double riemann_mass_1d(const PyramidKernel<1>& k, const Rect<1>& r, int steps = 2000000) {
    Rect<1> s = k.support();
    double lo = std::max(r.low[0], s.low[0]), hi = std::min(r.high[0], s.high[0]);
    if (hi <= lo) return 0.0;
    double h = (hi - lo) / steps;
    double acc = 0.0;
    for (int i = 0; i < steps; ++i) acc += k.pdf({lo + (i + 0.5) * h});
    return acc * h;
}

} // namespace

TEST_CASE("pyramid height is apex-independent and normalizes the mass") {
    rng_engine eng(3);
    for (int t = 0; t < 20; ++t) {
        Point<1> c{uniform01(eng) * 2 - 1};
        Point<1> hw{0.05 + uniform01(eng)};
        Point<1> apex{c[0] + (2 * uniform01(eng) - 1) * hw[0]};
        auto k = PyramidKernel<1>::make(c, hw, apex);
        CHECK(k.height() == Catch::Approx(2.0 / (2.0 * hw[0])));
        Rect<1> all{{c[0] - 2 * hw[0]}, {c[0] + 2 * hw[0]}};
        CHECK(k.box_mass(all) == Catch::Approx(1.0).margin(1e-14));
    }
    for (int t = 0; t < 20; ++t) {
        Point<2> c{uniform01(eng), uniform01(eng)};
        Point<2> hw{0.05 + 0.5 * uniform01(eng), 0.05 + 0.5 * uniform01(eng)};
        Point<2> apex{c[0] + (2 * uniform01(eng) - 1) * hw[0],
                      c[1] + (2 * uniform01(eng) - 1) * hw[1]};
        auto k = PyramidKernel<2>::make(c, hw, apex);
        CHECK(k.height() == Catch::Approx(3.0 / (4.0 * hw[0] * hw[1])));
        Rect<2> all{{c[0] - 2 * hw[0], c[1] - 2 * hw[1]}, {c[0] + 2 * hw[0], c[1] + 2 * hw[1]}};
        CHECK(k.box_mass(all) == Catch::Approx(1.0).margin(1e-14));
    }
}

TEST_CASE("pyramid pdf decays affinely along rays to the boundary") {
    auto k = PyramidKernel<2>::make({0.0, 0.0}, {0.4, 0.3}, {0.1, -0.05});
    double h = k.height();
    CHECK(k.pdf({0.1, -0.05}) == Catch::Approx(h));
    // Boundary points on different faces and a corner.
    for (Point<2> b : {Point<2>{0.4, 0.0}, {-0.4, 0.1}, {0.25, 0.3}, {0.4, -0.3}}) {
        CHECK(k.pdf(b) == Catch::Approx(0.0).margin(1e-12));
        for (double t : {0.25, 0.5, 0.75}) {
            Point<2> p{k.apex[0] + t * (b[0] - k.apex[0]), k.apex[1] + t * (b[1] - k.apex[1])};
            CHECK(k.pdf(p) == Catch::Approx(h * (1.0 - t)).margin(1e-12));
        }
    }
    CHECK(k.pdf({0.41, 0.0}) == 0.0);
    CHECK(k.pdf({0.0, -0.31}) == 0.0);
}

TEST_CASE("1d box mass equals the triangle-geometry formula") {
    // Independent derivation: the density is two linear pieces with peak
    // 1/delta; integrate each piece in closed form.
    rng_engine eng(8);
    for (int t = 0; t < 50; ++t) {
        double c = uniform01(eng);
        double hw = 0.05 + 0.5 * uniform01(eng);
        double apex = c + (2 * uniform01(eng) - 1) * hw;
        auto k = PyramidKernel<1>::make({c}, {hw}, {apex});
        double a = c - hw, b = c + hw, h = 1.0 / hw;

        auto cum = [&](double x) {
            x = std::clamp(x, a, b);
            double wl = apex - a, wr = b - apex;
            if (x <= apex)
                return wl > 0 ? 0.5 * h * (x - a) * (x - a) / wl : 0.0;
            double left = 0.5 * h * wl;
            if (wr <= 0) return left;
            return left + 0.5 * h * (wr * wr - (b - x) * (b - x)) / wr;
        };

        for (int q = 0; q < 20; ++q) {
            double lo = a - 0.2 + uniform01(eng) * (b - a + 0.4);
            double hi = lo + uniform01(eng) * (b - a);
            if (hi <= lo) continue;
            CHECK(k.box_mass({{lo}, {hi}}) == Catch::Approx(cum(hi) - cum(lo)).margin(1e-12));
        }
    }
}

TEST_CASE("1d box mass agrees with brute-force integration") {
    auto k = PyramidKernel<1>::make({0.5}, {0.3}, {0.65});
    for (auto [lo, hi] : {std::pair{0.2, 0.8}, {0.3, 0.6}, {0.55, 0.75}, {0.0, 0.45}}) {
        CHECK(k.box_mass({{lo}, {hi}}) ==
              Catch::Approx(riemann_mass_1d(k, {{lo}, {hi}})).margin(1e-7));
    }
}

TEST_CASE("2d box mass agrees with brute-force integration") {
    rng_engine eng(19);
    for (int t = 0; t < 6; ++t) {
        Point<2> c{uniform01(eng), uniform01(eng)};
        Point<2> hw{0.1 + 0.3 * uniform01(eng), 0.1 + 0.3 * uniform01(eng)};
        Point<2> apex{c[0] + (2 * uniform01(eng) - 1) * 0.9 * hw[0],
                      c[1] + (2 * uniform01(eng) - 1) * 0.9 * hw[1]};
        auto k = PyramidKernel<2>::make(c, hw, apex);
        Rect<2> r{{c[0] - hw[0] * uniform01(eng), c[1] - hw[1] * uniform01(eng)},
                  {c[0] + hw[0] * uniform01(eng), c[1] + hw[1] * uniform01(eng)}};
        if (!r.valid()) continue;
        double got = k.box_mass(r);
        double want = riemann_mass_2d(k, r);
        CHECK(got == Catch::Approx(want).margin(5e-4));
    }
}

TEST_CASE("box mass is additive across a split") {
    auto k = PyramidKernel<2>::make({0.0, 0.0}, {0.5, 0.4}, {-0.2, 0.1});
    rng_engine eng(23);
    for (int t = 0; t < 100; ++t) {
        Rect<2> r{{-0.6 + uniform01(eng) * 0.4, -0.5 + uniform01(eng) * 0.4},
                  {0.1 + uniform01(eng) * 0.6, 0.1 + uniform01(eng) * 0.4}};
        double cut = r.low[0] + uniform01(eng) * (r.high[0] - r.low[0]);
        Rect<2> left = r, right = r;
        left.high[0] = cut;
        right.low[0] = cut;
        if (!left.valid() || !right.valid()) continue;
        CHECK(k.box_mass(r) ==
              Catch::Approx(k.box_mass(left) + k.box_mass(right)).margin(1e-13));
    }
}

TEST_CASE("apex on the support boundary still integrates to one") {
    auto k1 = PyramidKernel<1>::make({0.0}, {0.5}, {-0.5});
    CHECK(k1.box_mass({{-1.0}, {1.0}}) == Catch::Approx(1.0).margin(1e-14));
    CHECK(k1.pdf({-0.5}) == Catch::Approx(k1.height()));

    auto k2 = PyramidKernel<2>::make({0.0, 0.0}, {0.5, 0.5}, {0.5, 0.5});
    CHECK(k2.box_mass({{-1.0, -1.0}, {1.0, 1.0}}) == Catch::Approx(1.0).margin(1e-14));
    CHECK(riemann_mass_2d(k2, {{-0.5, -0.5}, {0.0, 0.0}}, 800) ==
          Catch::Approx(k2.box_mass({{-0.5, -0.5}, {0.0, 0.0}})).margin(5e-4));
}

TEST_CASE("pyramid cdf is a proper distribution function") {
    auto k = PyramidKernel<2>::make({0.3, 0.4}, {0.2, 0.25}, {0.35, 0.3});
    CHECK(k.cdf({-1.0, 0.5}) == 0.0);
    CHECK(k.cdf({10.0, 10.0}) == Catch::Approx(1.0).margin(1e-14));
    rng_engine eng(5);
    for (int t = 0; t < 200; ++t) {
        Point<2> p{uniform01(eng), uniform01(eng)};
        Point<2> q{p[0] + 0.2 * uniform01(eng), p[1] + 0.2 * uniform01(eng)};
        CHECK(k.cdf(p) <= k.cdf(q) + 1e-14);
    }
}

TEST_CASE("pyramid measure node and sampling") {
    auto k = PyramidKernel<1>::make({0.5}, {0.3}, {0.6});
    auto m = pyramid_measure(k);
    CHECK(m.kind() == MeasureKind::Pyramid);
    CHECK(m.rect_prob({{0.4}, {0.7}}) == Catch::Approx(k.box_mass({{0.4}, {0.7}})));

    auto s = m.sample(41, 40000);
    double mean = 0.0;
    for (const auto& p : s) {
        CHECK(p[0] >= 0.2);
        CHECK(p[0] <= 0.8);
        mean += p[0];
    }
    mean /= s.size();
    // Triangle centroid (a + apex + b) / 3.
    double want = (0.2 + 0.6 + 0.8) / 3.0;
    CHECK(mean == Catch::Approx(want).margin(0.003));

    auto s2 = m.sample(41, 100);
    auto s3 = m.sample(41, 100);
    CHECK(s2 == s3);
}

TEST_CASE("pyramid kernel validation") {
    CHECK_THROWS_AS(PyramidKernel<1>::make({0.0}, {0.0}, {0.0}), validation_error);
    CHECK_THROWS_AS(PyramidKernel<1>::make({0.0}, {0.5}, {0.51}), validation_error);
    CHECK_THROWS_AS(PyramidKernel<2>::make({0.0, 0.0}, {0.5, 0.5}, {0.0, -0.6}),
                    validation_error);
    CHECK_NOTHROW(PyramidKernel<2>::make({0.0, 0.0}, {0.5, 0.5}, {0.5, -0.5}));
}
