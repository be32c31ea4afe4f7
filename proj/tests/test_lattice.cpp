#include <catch2/catch_amalgamated.hpp>

#include "rbsde/lattice.hpp"

using namespace rbsde;

TEST_CASE("one-step moments are exact") {
    const BrownianLattice lat(1.0, 4, 1);
    const double dt = lat.dt();
    const int k = 2;
    const long nodes_next = lat.nodes_at(k + 1);

    // constant field
    std::vector<double> c(nodes_next, 3.5);
    CHECK(conditional_expectation(lat, c, k, 1) == 3.5);

    // field = W at step k+1: martingale property (exactly)
    std::vector<double> w(nodes_next);
    for (long j = 0; j < nodes_next; ++j) w[j] = lat.w_at(k + 1, j)[0];
    for (long node = 0; node <= k; ++node)
        CHECK(conditional_expectation(lat, w, k, node) ==
              Catch::Approx(lat.w_at(k, node)[0]).margin(1e-15));

    // field = W^2: E_k[W^2] = W_k^2 + dt
    std::vector<double> w2(nodes_next);
    for (long j = 0; j < nodes_next; ++j) w2[j] = w[j] * w[j];
    for (long node = 0; node <= k; ++node)
        CHECK(conditional_expectation(lat, w2, k, node) ==
              Catch::Approx(std::pow(lat.w_at(k, node)[0], 2) + dt).margin(1e-15));
}

TEST_CASE("z-projection: affine fields are exact, constants vanish") {
    const BrownianLattice lat(2.0, 8, 1);
    const int k = 3;
    const long nodes_next = lat.nodes_at(k + 1);
    std::vector<double> affine(nodes_next), constant(nodes_next, 2.0);
    const double a = -1.7, b = 0.4;
    for (long j = 0; j < nodes_next; ++j) affine[j] = a * lat.w_at(k + 1, j)[0] + b;
    for (long node = 0; node <= k; ++node) {
        CHECK(z_projection(lat, affine, k, node)[0] == Catch::Approx(a).margin(1e-13));
        CHECK(z_projection(lat, constant, k, node)[0] == 0.0);
    }

    // central-difference identity for a nonlinear field in d' = 1
    auto g = [](double x) { return std::sin(2.0 * x) + x * x; };
    std::vector<double> gw(nodes_next);
    for (long j = 0; j < nodes_next; ++j) gw[j] = g(lat.w_at(k + 1, j)[0]);
    const long node = 2;
    const double wk = lat.w_at(k, node)[0];
    const double sdt = lat.sqrt_dt();
    const double expected = (g(wk + sdt) - g(wk - sdt)) / (2.0 * sdt);
    CHECK(z_projection(lat, gw, k, node)[0] == Catch::Approx(expected).margin(1e-13));
}

TEST_CASE("two-axis lattice: product structure") {
    const BrownianLattice lat(1.0, 6, 2);
    CHECK(lat.nodes_at(3) == 16);
    CHECK(lat.branches() == 4);
    const int k = 2;
    const long nodes_next = lat.nodes_at(k + 1);
    // field = W1 * W2 at k+1: E_k = W1 W2 (independent increments)
    std::vector<double> f(nodes_next);
    for (long j = 0; j < nodes_next; ++j) {
        const Vec w = lat.w_at(k + 1, j);
        f[j] = w[0] * w[1];
    }
    for (long node = 0; node < lat.nodes_at(k); ++node) {
        const Vec w = lat.w_at(k, node);
        CHECK(conditional_expectation(lat, f, k, node) ==
              Catch::Approx(w[0] * w[1]).margin(1e-14));
        // z-projection picks out the partner coordinate
        const Vec z = z_projection(lat, f, k, node);
        CHECK(z[0] == Catch::Approx(w[1]).margin(1e-13));
        CHECK(z[1] == Catch::Approx(w[0]).margin(1e-13));
    }
}

TEST_CASE("missing child field throws") {
    const BrownianLattice lat(1.0, 4, 1);
    std::vector<double> wrong(3, 0.0);
    CHECK_THROWS_AS(conditional_expectation(lat, wrong, 2, 0), MissingChild);
    CHECK_THROWS_AS(z_projection(lat, wrong, 2, 0), MissingChild);
}

TEST_CASE("path samples: determinism and node consistency") {
    const BrownianLattice lat(1.0, 32, 1);
    const auto a = sample_paths(lat, 50, 99);
    const auto b = sample_paths(lat, 50, 99);
    for (int i = 0; i < 50; ++i) {
        CHECK(a[i].increments == b[i].increments);
        CHECK(a[i].node_index == b[i].node_index);
        // reconstruct node indices from increments
        int j = 0;
        for (int k = 0; k < lat.n_steps; ++k) {
            if (a[i].increments[k] > 0) ++j;
            CHECK(a[i].node_index[k + 1] == j);
        }
    }
    const auto c = sample_paths(lat, 50, 100);
    CHECK(c[0].increments != a[0].increments);
}

TEST_CASE("path statistics: CLT mean bound and variance of W_T") {
    const BrownianLattice lat(1.0, 64, 1);
    const long n = 1000000;
    double sum = 0.0, sum2 = 0.0;
    for (long i = 0; i < n; ++i) {
        const PathSample p = sample_path(lat, 7, i);
        const double wT = lat.w_at(lat.n_steps, p.node_index.back())[0];
        sum += wT;
        sum2 += wT * wT;
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    CHECK(std::abs(mean) <= 3.0 / std::sqrt(double(n)));  // 3 sigma / sqrt(n)
    CHECK(var == Catch::Approx(1.0).epsilon(0.01));       // exact lattice variance is T
}

TEST_CASE("forward diffusion: identity and euler modes") {
    const BrownianLattice lat(1.0, 10, 1);
    const ForwardDiffusion id = ForwardDiffusion::identity(1);
    CHECK(id.x_at(lat, 4, 2)[0] == lat.w_at(4, 2)[0]);

    Vec x0(1);
    x0 << 0.5;
    Mat sigma(1, 1);
    sigma << 2.0;
    const ForwardDiffusion eu = ForwardDiffusion::euler(
        x0, [](double t) { Vec b(1); b << 0.3 * t; return b; }, sigma);
    const auto table = eu.drift_table(lat);
    // node-wise one-step identity: X_{k+1} = X_k + b dt + sigma dW
    for (int k = 0; k < 5; ++k) {
        for (long node = 0; node <= k; ++node) {
            const Vec xk = eu.x_at(lat, k, node, &table);
            for (int br = 0; br < 2; ++br) {
                const Vec xn = eu.x_at(lat, k + 1, lat.child(k, node, br), &table);
                const double expect =
                    xk[0] + 0.3 * lat.time_at(k) * lat.dt() + 2.0 * lat.increment(br, 0);
                CHECK(xn[0] == Catch::Approx(expect).margin(1e-13));
            }
        }
    }

    Mat bad(1, 1);
    bad << 0.0;
    CHECK_THROWS_AS(ForwardDiffusion::euler(x0, nullptr, bad), std::invalid_argument);
}
