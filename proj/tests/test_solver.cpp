#include <catch2/catch_amalgamated.hpp>

#include "rbsde/catalog.hpp"
#include "rbsde/oracle.hpp"
#include "rbsde/solver.hpp"

using namespace rbsde;

namespace {

struct SectorSetup {
    SectorDomain sector;
    PseudoDistance pseudo;
    TerminalMap terminal;
    double alpha;

    explicit SectorSetup(double a) : alpha(a) {
        SectorDomainSpec spec;
        spec.alpha = a;
        sector = make_sector_domain(spec);
        pseudo = build_pseudo_distance(sector.domain, sector.core);
        const Eigen::Vector2d op = sector.arcs.circle_center;
        const double alpha_v = a;
        terminal = [op, alpha_v](const Vec& x) {
            const double cdf = 0.5 * std::erfc(-x[0] / std::sqrt(2.0));
            return sector_terminal_from_angle(op, alpha_v * (2.0 * cdf - 1.0));
        };
    }
};

// full non-recombining binary tree solved with the same one-step operation
struct BruteTree {
    BrownianLattice lat;
    std::vector<std::vector<Vec>> y;  // per step: 2^k paths

    BruteTree(const PseudoDistance& ps, const PathTerminal& g, int k1,
              const GeneratorSpec& gen, const BrownianLattice& lattice,
              const PenalizationConfig& cfg)
        : lat(lattice) {
        const int N = lat.n_steps;
        const double sdt = lat.sqrt_dt();
        y.resize(N + 1);
        auto w_of = [&](long bits, int upto) {
            double w = 0.0;
            for (int k = 0; k < upto; ++k) w += ((bits >> k) & 1) ? sdt : -sdt;
            return w;
        };
        y[N].resize(1L << N);
        for (long b = 0; b < (1L << N); ++b) {
            Vec x1(1), xT(1);
            x1 << w_of(b, k1);
            xT << w_of(b, N);
            y[N][b] = g({x1, xT});
        }
        for (int k = N - 1; k >= 0; --k) {
            y[k].resize(1L << k);
            for (long b = 0; b < (1L << k); ++b) {
                const Vec& dn = y[k + 1][b];             // bit k = 0
                const Vec& up = y[k + 1][b | (1L << k)]; // bit k = 1
                const Vec e = 0.5 * (up + dn);
                Mat z(2, 1);
                z.col(0) = (up - dn) / (2.0 * sdt);
                Vec x(1);
                x << w_of(b, k);
                const auto out = detail::penalized_one_step(ps, e, z, x, lat.time_at(k),
                                                            lat.dt(), gen, cfg);
                REQUIRE(out.converged);
                y[k][b] = out.y;
            }
        }
    }
};

}  // namespace

TEST_CASE("convex sanity: constant interior terminal is a fixed point") {
    const auto ball = make_ball(1.0);
    const PseudoDistance ps = build_pseudo_distance(ball.domain, ball.core);
    const Vec xi = make_vec2(0.3, -0.1);
    const BrownianLattice lat(1.0, 24, 1);
    for (int n : {4, 16, 64, 256}) {
        PenalizationConfig cfg;
        cfg.n = n;
        const SolverField f = solve_penalized(
            ps, [xi](const Vec&) { return xi; }, {}, ForwardDiffusion::identity(1), lat,
            cfg);
        for (int k = 0; k <= lat.n_steps; ++k) {
            for (long node = 0; node < lat.nodes_at(k); ++node) {
                CHECK((f.y_at(k, node) - xi).norm() == 0.0);
                if (k < lat.n_steps) CHECK(f.z_at(k, node).norm() == 0.0);
            }
        }
        CHECK(f.max_n_psi == 0.0);
    }
}

TEST_CASE("terminal step stores g(X_N) exactly and rejects exterior data") {
    SectorSetup s(0.7);
    const BrownianLattice lat(1.0, 12, 1);
    PenalizationConfig cfg;
    cfg.n = 8;
    const SolverField f = solve_penalized(s.pseudo, s.terminal, {},
                                          ForwardDiffusion::identity(1), lat, cfg);
    for (long node = 0; node < lat.nodes_at(lat.n_steps); ++node) {
        const Vec g = s.terminal(lat.w_at(lat.n_steps, node));
        CHECK((f.y_at(lat.n_steps, node) - g).norm() == 0.0);
    }
    // a terminal outside the closure is refused
    CHECK_THROWS_AS(solve_penalized(
                        s.pseudo,
                        [&](const Vec&) {
                            return make_vec2(s.sector.arcs.circle_center.x(),
                                             s.sector.arcs.circle_center.y());
                        },
                        {}, ForwardDiffusion::identity(1), lat, cfg),
                    TerminalOutsideDomain);
}

TEST_CASE("cap consistency: inactive caps reproduce the uncapped run bitwise") {
    SectorSetup s(0.7);
    const BrownianLattice lat(1.0, 16, 1);
    PenalizationConfig uncapped;
    uncapped.n = 8;
    const SolverField a = solve_penalized(s.pseudo, s.terminal, {},
                                          ForwardDiffusion::identity(1), lat, uncapped);
    double max_psi = 0.0, max_zsq = 0.0;
    for (int k = 0; k < lat.n_steps; ++k)
        for (long node = 0; node < lat.nodes_at(k); ++node) {
            max_psi = std::max(max_psi, s.pseudo.psi(a.y_at(k, node)));
            max_zsq = std::max(max_zsq, a.z_at(k, node).squaredNorm());
        }
    PenalizationConfig capped = uncapped;
    capped.cap_psi = 2.0 * max_psi + 1.0;
    capped.cap_zsq = 2.0 * max_zsq + 1.0;
    const SolverField b = solve_penalized(s.pseudo, s.terminal, {},
                                          ForwardDiffusion::identity(1), lat, capped);
    for (int k = 0; k <= lat.n_steps; ++k) CHECK(a.y[k] == b.y[k]);
    for (int k = 0; k < lat.n_steps; ++k) CHECK(a.z[k] == b.z[k]);
}

TEST_CASE("stored fields satisfy the one-step fixed point on re-evaluation") {
    SectorSetup s(0.7);
    const BrownianLattice lat(1.0, 20, 1);
    PenalizationConfig cfg;
    cfg.n = 32;
    const SolverField f = solve_penalized(s.pseudo, s.terminal, {},
                                          ForwardDiffusion::identity(1), lat, cfg);
    CHECK(f.max_residual <= cfg.picard_tol);
    SplitMix64 rng(5);
    Vec grad(2);
    for (int trial = 0; trial < 60; ++trial) {
        const int k = static_cast<int>(rng.next() % lat.n_steps);
        const long node = static_cast<long>(rng.next() % lat.nodes_at(k));
        Vec e(2);
        conditional_expectation_into(lat, k, node, f.y[k + 1], 2, e.data());
        const Mat z = f.z_at(k, node);
        const Vec y = f.y_at(k, node);
        const double p = s.pseudo.psi_with_grad(y, grad);
        Vec mapped = e;
        if (p > 0.0)
            mapped -= cfg.n * lat.dt() * std::min(p, cfg.cap_psi) *
                      (1.0 + std::min(z.squaredNorm(), cfg.cap_zsq)) * grad;
        CHECK((mapped - y).cwiseAbs().maxCoeff() <= 2.0 * cfg.picard_tol);
    }
}

TEST_CASE("interior paths carry no reflection") {
    const auto ball = make_ball(1.0);
    const PseudoDistance ps = build_pseudo_distance(ball.domain, ball.core);
    const Vec xi = make_vec2(-0.2, 0.4);
    const BrownianLattice lat(1.0, 16, 1);
    PenalizationConfig cfg;
    cfg.n = 64;
    const SolverField f = solve_penalized(
        ps, [xi](const Vec&) { return xi; }, {}, ForwardDiffusion::identity(1), lat, cfg);
    const auto paths = sample_paths(lat, 16, 3);
    for (const auto& p : paths) {
        const ReflectedPath rp = extract_k_path(f, p, ps);
        CHECK(rp.var.back() == 0.0);
        CHECK(rp.k_accum.back().norm() == 0.0);
        CHECK(rp.k_residual_discrepancy <= cfg.picard_tol);
    }
}

TEST_CASE("extract_k_path: accumulator and residual forms agree") {
    SectorSetup s(0.7);
    const BrownianLattice lat(1.0, 40, 1);
    PenalizationConfig cfg;
    cfg.n = 64;
    const SolverField f = solve_penalized(s.pseudo, s.terminal, {},
                                          ForwardDiffusion::identity(1), lat, cfg);
    const auto paths = sample_paths(lat, 32, 9);
    for (const auto& p : paths) {
        const ReflectedPath rp = extract_k_path(f, p, s.pseudo);
        CHECK(rp.k_residual_discrepancy <= 4.0 * cfg.picard_tol);
        // variation is nondecreasing
        for (int k = 0; k < lat.n_steps; ++k) CHECK(rp.var[k + 1] >= rp.var[k]);
        // split accumulators sum to K
        CHECK((rp.phi_accum.back() + rp.theta_accum.back() - rp.k_accum.back()).norm() <
              1e-14);
    }

    const BrownianLattice other(1.0, 13, 1);
    const auto bad = sample_paths(other, 1, 1);
    CHECK_THROWS_AS(extract_k_path(f, bad[0], s.pseudo), LatticeMismatch);
}

TEST_CASE("picard divergence is reported for unstable configurations") {
    SectorSetup s(0.7);
    const BrownianLattice lat(1.0, 4, 1);
    PenalizationConfig cfg;
    cfg.n = 1000000;  // uncapped stiff penalty at dt = 1/4
    cfg.picard_max_iters = 60;
    CHECK_THROWS_AS(solve_penalized(s.pseudo, s.terminal, {},
                                    ForwardDiffusion::identity(1), lat, cfg),
                    PicardDivergence);
}

TEST_CASE("reflected schedule: diffs shrink toward the oracle on a small case") {
    SectorSetup s(0.7);
    const BrownianLattice lat(1.0, 40, 1);
    ReflectedSolveOptions opts;
    opts.n_paths = 32;
    const ReflectedSolution sol = solve_reflected(s.pseudo, s.terminal, {},
                                                  ForwardDiffusion::identity(1), lat,
                                                  {4, 8, 16, 32, 64}, opts);
    REQUIRE(sol.table.size() == 5);
    for (size_t i = 2; i < sol.table.size(); ++i)
        CHECK(sol.table[i].sup_diff < sol.table[i - 1].sup_diff);
    // distance to the domain shrinks roughly like 1/n
    CHECK(sol.table.back().sup_dist < sol.table[1].sup_dist);

    const CircleOracle oc = circle_oracle(0.7, arc_smooth(0.7), lat);
    double err = 0.0;
    for (int k = 0; k <= lat.n_steps; ++k)
        for (long node = 0; node < lat.nodes_at(k); ++node)
            err = std::max(err, (sol.field.y_at(k, node) -
                                 oracle_point_in_sector_frame(s.sector.arcs.circle_center,
                                                              oc.theta_at(k, node)))
                                    .norm());
    CHECK(err < 0.1);
    CHECK_FALSE(sol.converged);  // stop_tol = 0 runs the whole schedule
}

TEST_CASE("path-dependent depth 1 equals the markovian solve") {
    SectorSetup s(0.7);
    const BrownianLattice lat(1.0, 10, 1);
    PenalizationConfig cfg;
    cfg.n = 16;
    const auto direct = solve_penalized(s.pseudo, s.terminal, {},
                                        ForwardDiffusion::identity(1), lat, cfg);
    const auto pd = solve_path_dependent(
        s.pseudo, {1.0}, [&](const std::vector<Vec>& xs) { return s.terminal(xs[0]); },
        {}, lat, cfg);
    CHECK(pd.depth == 1);
    for (int k = 0; k <= lat.n_steps; ++k) CHECK(pd.lower.y[k] == direct.y[k]);
}

TEST_CASE("path-dependent depth 2 matches the exhaustive tree") {
    SectorSetup s(0.7);
    const BrownianLattice lat(1.0, 10, 1);
    PenalizationConfig cfg;
    cfg.n = 16;
    const int k1 = 5;
    const Eigen::Vector2d op = s.sector.arcs.circle_center;
    const PathTerminal g = [op](const std::vector<Vec>& xs) {
        // angle depends on both the midpoint and the terminal value
        const double cdf1 = 0.5 * std::erfc(-xs[0][0] / std::sqrt(2.0));
        const double cdfT = 0.5 * std::erfc(-xs[1][0] / std::sqrt(2.0));
        const double ang = 0.35 * (2.0 * cdf1 - 1.0) + 0.35 * (2.0 * cdfT - 1.0);
        return sector_terminal_from_angle(op, ang);
    };
    const auto pd = solve_path_dependent(s.pseudo, {0.5, 1.0}, g, {}, lat, cfg);
    REQUIRE(pd.depth == 2);
    REQUIRE(pd.k1 == k1);

    const BruteTree tree(s.pseudo, g, k1, {}, lat, cfg);
    // compare at every tree node
    const double sdt = lat.sqrt_dt();
    for (int k = 0; k <= lat.n_steps; ++k) {
        for (long b = 0; b < (1L << k); ++b) {
            int ups_total = 0, ups_prefix = 0, ups_after = 0;
            for (int i = 0; i < k; ++i) {
                const int bit = (b >> i) & 1;
                ups_total += bit;
                if (i < k1) ups_prefix += bit;
                else ups_after += bit;
            }
            Vec ref = tree.y[k][b];
            Vec val(2);
            if (k <= k1) {
                val = pd.lower.y_at(k, ups_total);
            } else {
                // prefix node at k1 requires ups over the first k1 steps;
                // for k > k1 the path has fixed prefix
                int ups_pre_full = 0;
                for (int i = 0; i < k1; ++i) ups_pre_full += (b >> i) & 1;
                val = pd.upper[ups_pre_full].y_at(k - k1, ups_after);
            }
            CHECK((val - ref).cwiseAbs().maxCoeff() < 1e-10);
        }
    }
    (void)sdt;
}

TEST_CASE("path-dependent terminal ignoring the prefix matches depth 1") {
    SectorSetup s(0.7);
    const BrownianLattice lat(1.0, 10, 1);
    PenalizationConfig cfg;
    cfg.n = 16;
    const PathTerminal g2 = [&](const std::vector<Vec>& xs) { return s.terminal(xs[1]); };
    const auto pd = solve_path_dependent(s.pseudo, {0.5, 1.0}, g2, {}, lat, cfg);
    const auto direct = solve_penalized(s.pseudo, s.terminal, {},
                                        ForwardDiffusion::identity(1), lat, cfg);
    for (int k = 0; k <= pd.k1; ++k)
        for (long node = 0; node < lat.nodes_at(k); ++node)
            CHECK((pd.lower.y_at(k, node) - direct.y_at(k, node)).cwiseAbs().maxCoeff() <
                  1e-12);

    CHECK_THROWS_AS(solve_path_dependent(s.pseudo, {0.3, 0.6, 1.0},
                                         [&](const std::vector<Vec>& xs) {
                                             return s.terminal(xs[2]);
                                         },
                                         {}, lat, cfg),
                    UnsupportedDepth);
}
