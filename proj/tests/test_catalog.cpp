#include <catch2/catch_amalgamated.hpp>

#include "rbsde/catalog.hpp"
#include "rbsde/geometry.hpp"
#include "rbsde/pseudo_distance.hpp"

using namespace rbsde;

namespace {

void check_fd(const LevelSetDomain& dom, const Vec& y, double h = 1e-4,
              double tol = 1e-5, bool with_hess = true) {
    const int d = dom.dim;
    const Vec g = dom.grad_phi(y);
    Vec g_fd(d);
    for (int i = 0; i < d; ++i) {
        Vec yp = y, ym = y;
        yp[i] += h;
        ym[i] -= h;
        g_fd[i] = (dom.phi(yp) - dom.phi(ym)) / (2.0 * h);
    }
    CHECK((g - g_fd).norm() <= tol * std::max(1.0, g.norm()));
    if (!with_hess) return;
    const Mat H = dom.hess_phi(y);
    Mat H_fd(d, d);
    for (int i = 0; i < d; ++i) {
        Vec yp = y, ym = y;
        yp[i] += h;
        ym[i] -= h;
        H_fd.col(i) = (dom.grad_phi(yp) - dom.grad_phi(ym)) / (2.0 * h);
    }
    CHECK((H - H_fd).norm() <= tol * std::max(1.0, H.norm()));
}

}  // namespace

TEST_CASE("polar star with constant radius is the unit circle level set") {
    PolarStarSpec spec;
    spec.cos_coeffs = {1.0};
    const auto star = make_polar_star(spec);
    CHECK(star.domain.phi(make_vec2(2.0, 0.0)) == Catch::Approx(1.0).margin(1e-14));
    CHECK(star.domain.phi(make_vec2(0.0, -1.5)) == Catch::Approx(0.5).margin(1e-14));
    CHECK(star.domain.phi(make_vec2(0.7, 0.0)) == Catch::Approx(-0.3).margin(1e-14));
}

TEST_CASE("polar star three-lobe construction passes the margin check") {
    PolarStarSpec spec;
    spec.cos_coeffs = {1.0, 0.0, 0.0, 0.3};
    const auto star = make_polar_star(spec);
    CHECK(star.star_margin > 0.0);
    CHECK(star.core_radius > 0.0);
}

TEST_CASE("sector: inner arc sits exactly on the unit circle") {
    const SectorDomain sec = make_sector_domain({});
    const Eigen::Vector2d op = sec.arcs.circle_center;
    SplitMix64 rng(3);
    for (int i = 0; i < 200; ++i) {
        const Vec y = sec.inner_arc_sampler(rng);
        const double r = std::hypot(y[0] - op.x(), y[1] - op.y());
        CHECK(std::abs(r - 1.0) < 1e-10);
        CHECK(std::abs(sec.domain.phi(y)) < 1e-10);
    }
}

TEST_CASE("sector: finite differences at 100 random points") {
    SectorDomainSpec spec;
    spec.alpha = 0.7;
    const SectorDomain sec = make_sector_domain(spec);
    SplitMix64 rng(11);
    const double R = sec.domain.bounding_radius - 1.0;
    for (int i = 0; i < 100; ++i) {
        Vec y(2);
        y[0] = rng.uniform(-R, R);
        y[1] = rng.uniform(-R, R);
        check_fd(sec.domain, y);
    }
}

TEST_CASE("sector: exterior sphere radius is 1") {
    for (double alpha : {0.7, M_PI / 4.0}) {
        SectorDomainSpec spec;
        spec.alpha = alpha;
        const SectorDomain sec = make_sector_domain(spec);
        const R0Estimate est = estimate_r0(sec.domain, 20000);
        CHECK(est.r0 == Catch::Approx(1.0).margin(0.01));
        CHECK_FALSE(est.convex_cap);
    }
}

TEST_CASE("sector: gamma restricted to the inner arc equals cos(alpha)") {
    SectorDomainSpec spec;
    spec.alpha = M_PI / 4.0;
    const SectorDomain sec = make_sector_domain(spec);
    const double g = compute_gamma(sec.domain, sec.core, sec.inner_arc_sampler, 2048);
    CHECK(g == Catch::Approx(std::cos(M_PI / 4.0)).margin(1e-3));

    // full-boundary infimum still positive (weak star-shape holds)
    const double g_full = compute_gamma(sec.domain, sec.core, nullptr, 2048);
    CHECK(g_full > 0.0);
    CHECK(g_full <= g + 1e-9);
}

TEST_CASE("sector: normal on the inner arc points at the circle center") {
    const SectorDomain sec = make_sector_domain({});
    const Eigen::Vector2d op = sec.arcs.circle_center;
    // mid-arc point, straight below the center
    const Vec y = make_vec2(op.x(), op.y() - 1.0);
    const Vec g = sec.domain.grad_phi(y);
    const Vec n = g / g.norm();
    CHECK(n[0] == Catch::Approx(0.0).margin(1e-9));
    CHECK(n[1] == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("sector: pseudo-distance positivity margin") {
    SectorDomainSpec spec;
    spec.alpha = 0.7;
    const SectorDomain sec = make_sector_domain(spec);
    const PseudoDistance ps = build_pseudo_distance(sec.domain, sec.core);
    CHECK(ps.positivity_margin > 0.0);
    CHECK(ps.comp_lo > 0.0);

    // dense boundary sweep of grad_phi_c . grad_psi just outside
    SplitMix64 rng(31);
    double margin = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 4000; ++i) {
        Vec b = sample_boundary_point(sec.domain, rng);
        const Vec g = sec.domain.grad_phi(b);
        const Vec y = b + rng.uniform(1e-6, 0.2) * g / g.norm();
        if (sec.domain.phi(y) <= 0.0) continue;
        Vec gpsi(2);
        ps.psi_with_grad(y, gpsi);
        margin = std::min(margin, sec.core.grad_phi_c(y).dot(gpsi));
    }
    CHECK(margin > 0.0);
}

TEST_CASE("sector: smallness case (i) threshold at cos(alpha) = 2/3") {
    for (double alpha : {0.8, 0.9}) {
        SectorDomainSpec spec;
        spec.alpha = alpha;
        const SectorDomain sec = make_sector_domain(spec);
        GeometryReport rep;
        rep.gamma = compute_gamma(sec.domain, sec.core, sec.inner_arc_sampler, 2048);
        rep.r0 = estimate_r0(sec.domain, 20000).r0;
        // terminal values on the inner arc: sup phi_c^+ = 1 - cos(alpha),
        // attained at the arc endpoints (uniform grid incl. endpoints)
        const Eigen::Vector2d op = sec.arcs.circle_center;
        double xi_bound = 0.0;
        for (int i = 0; i <= 2000; ++i) {
            const double t = -alpha + 2.0 * alpha * i / 2000;
            const Vec y = make_vec2(op.x() + std::sin(t), op.y() - std::cos(t));
            xi_bound = std::max(xi_bound, std::max(sec.core.phi_c(y), 0.0));
        }
        CHECK(xi_bound == Catch::Approx(1.0 - std::cos(alpha)).margin(1e-3));
        const GeometryReport out = check_smallness(sec.domain, sec.core, rep, xi_bound,
                                                   true, 2.0, SmallnessCase::I);
        if (alpha == 0.8)
            CHECK(out.smallness_pass);
        else
            CHECK_FALSE(out.smallness_pass);
    }
}

TEST_CASE("sector: infeasible parameter combinations are rejected") {
    SectorDomainSpec bad;
    bad.alpha = 0.7;
    bad.eps_corner = M_PI / 2.0 - 0.7 + 0.1;  // outside (0, pi/2 - alpha)
    CHECK_THROWS_AS(make_sector_domain(bad), InfeasibleSpec);

    SectorDomainSpec huge;
    huge.alpha = 0.7;
    huge.eta = 2.5;  // core outgrows the center triangle
    CHECK_THROWS_AS(make_sector_domain(huge), InfeasibleSpec);
}

TEST_CASE("revolve: identity in 2-d, exact profile values, ball roundtrip") {
    const auto ball = make_ball(1.0);
    const LevelSetDomain same = revolve_to_dim(ball.domain, 2);
    CHECK(same.phi(make_vec2(1.7, 0.2)) == ball.domain.phi(make_vec2(1.7, 0.2)));

    const LevelSetDomain b3 = revolve_to_dim(ball.domain, 3);
    const auto direct = make_ball(1.0, 3);
    SplitMix64 rng(19);
    for (int i = 0; i < 60; ++i) {
        Vec y(3);
        for (int j = 0; j < 3; ++j) y[j] = rng.uniform(-2.0, 2.0);
        CHECK(b3.phi(y) == Catch::Approx(direct.domain.phi(y)).margin(1e-12));
        // profile identity: phi_3(y) == phi_2((r, y_3)) exactly
        Vec p(2);
        p << y.head(2).norm(), y[2];
        CHECK(b3.phi(y) == ball.domain.phi(p));
    }
}

TEST_CASE("revolve: sector to 3-d keeps finite-difference consistency") {
    SectorDomainSpec spec;
    spec.alpha = 0.7;
    const SectorDomain sec = make_sector_domain(spec);
    const LevelSetDomain s3 = revolve_to_dim(sec.domain, 3);
    SplitMix64 rng(23);
    for (int i = 0; i < 40; ++i) {
        Vec y(3);
        y[0] = rng.uniform(-3.0, 3.0);
        y[1] = rng.uniform(-3.0, 3.0);
        y[2] = rng.uniform(-3.0, 3.0);
        if (y.head(2).norm() < 0.05) continue;  // axis handled by the planar limit
        check_fd(s3, y, 1e-4, 1e-5, false);
    }
    // axis evaluation does not blow up
    Vec axis(3);
    axis << 0.0, 0.0, 0.5;
    CHECK(std::isfinite(s3.phi(axis)));
    CHECK(std::isfinite(s3.grad_phi(axis).norm()));
    CHECK(std::isfinite(s3.hess_phi(axis).norm()));
}

TEST_CASE("revolve rejects asymmetric planar input") {
    PolarStarSpec spec;
    spec.cos_coeffs = {1.0, 0.3};
    spec.offset = Eigen::Vector2d(0.2, 0.1);  // breaks the mirror symmetry
    const auto star = make_polar_star(spec);
    CHECK_THROWS_AS(revolve_to_dim(star.domain, 3), std::invalid_argument);
}
