#include <catch2/catch_amalgamated.hpp>

#include "rbsde/smooth.hpp"

using namespace rbsde;

TEST_CASE("smoothstep plateaus and symmetry") {
    CHECK(smoothstep(-1.0) == 0.0);
    CHECK(smoothstep(2.0) == 1.0);
    CHECK(smoothstep(0.5) == Catch::Approx(0.5).margin(1e-15));
    for (int i = 0; i <= 100; ++i) {
        const double x = i / 100.0;
        CHECK(smoothstep(x) + smoothstep(1.0 - x) == Catch::Approx(1.0).margin(1e-14));
    }
}

TEST_CASE("smoothstep is nondecreasing and strictly increasing inside") {
    double prev = smoothstep(-0.2);
    for (int i = 1; i <= 240; ++i) {
        const double x = -0.2 + 1.4 * i / 240.0;
        const double v = smoothstep(x);
        CHECK(v >= prev);
        prev = v;
    }
    CHECK(smoothstep(0.3) < smoothstep(0.31));
    CHECK(smoothstep(0.69) < smoothstep(0.7));
}

TEST_CASE("smoothstep derivatives match finite differences") {
    const double h = 1e-6, h2 = 1e-4;
    for (double x : {0.05, 0.2, 0.37, 0.5, 0.61, 0.83, 0.97}) {
        const double fd1 = (smoothstep(x + h) - smoothstep(x - h)) / (2 * h);
        CHECK(smoothstep_d1(x) == Catch::Approx(fd1).epsilon(1e-6).margin(1e-9));
        const double fd2 =
            (smoothstep(x + h2) - 2 * smoothstep(x) + smoothstep(x - h2)) / (h2 * h2);
        CHECK(smoothstep_d2(x) == Catch::Approx(fd2).epsilon(1e-3).margin(1e-4));
    }
    // flat to all orders at the plateaus
    CHECK(smoothstep_d1(1e-9) == 0.0);
    CHECK(smoothstep_d1(1.0 - 1e-12) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("rho_eps bridge: plateaus, identity branch, frozen midpoint") {
    const double eps = 0.3;
    const SmoothRamp r = rho_eps_bridge(eps);
    CHECK(r.value(-2.0 * eps) == Catch::Approx(-eps / 2.0));
    CHECK(r.value(1.0) == Catch::Approx(1.0));
    // midpoint of the bridge: -eps/2 + (5/64) eps from the chosen polynomial
    CHECK(r.value(-eps / 2.0) == Catch::Approx(-0.5 * eps + 5.0 * eps / 64.0).margin(1e-15));
}

TEST_CASE("rho_eps bridge is convex and C^2 on a dense grid") {
    const double eps = 0.17;
    const SmoothRamp r = rho_eps_bridge(eps);
    const double h = eps / 400.0;
    for (int i = -500; i <= 300; ++i) {
        const double x = i * h;
        const double second = (r.value(x + h) - 2 * r.value(x) + r.value(x - h)) / (h * h);
        CHECK(second >= -1e-8);  // grid convexity oracle
        const double fd1 = (r.value(x + h) - r.value(x - h)) / (2 * h);
        CHECK(r.d1(x) == Catch::Approx(fd1).epsilon(1e-3).margin(1e-5));
        CHECK(r.d2(x) == Catch::Approx(second).epsilon(5e-3).margin(5e-3));
        CHECK(r.d2(x) >= 0.0);
        CHECK(r.d1(x) >= 0.0);
    }
}

TEST_CASE("saturating clamp: identity band, plateau, C^2") {
    const SaturatingClamp m(0.15);
    CHECK(m.value(0.1) == 0.1);
    CHECK(m.value(-0.07) == -0.07);
    CHECK(m.value(0.5) == Catch::Approx(m.plateau()));
    CHECK(m.value(-2.0) == Catch::Approx(-m.plateau()));
    const double h = 1e-5;
    for (double x = -0.4; x <= 0.4; x += 0.003) {
        const double fd1 = (m.value(x + h) - m.value(x - h)) / (2 * h);
        CHECK(m.d1(x) == Catch::Approx(fd1).epsilon(1e-5).margin(1e-7));
        const double fd2 = (m.value(x + h) - 2 * m.value(x) + m.value(x - h)) / (h * h);
        CHECK(m.d2(x) == Catch::Approx(fd2).epsilon(1e-3).margin(1e-3));
        CHECK(m.d1(x) >= 0.0);
    }
}
