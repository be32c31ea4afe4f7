#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <thread>
#include <vector>

#include "rbsde/lattice.hpp"
#include "rbsde/pseudo_distance.hpp"
#include "rbsde/types.hpp"

namespace rbsde {

struct PenalizationConfig {
    int n = 1;  // penalization intensity
    double cap_psi = std::numeric_limits<double>::infinity();  // M1
    double cap_zsq = std::numeric_limits<double>::infinity();  // M2
    double picard_tol = 1e-12;
    int picard_max_iters = 200;
    int damping_interval = 50;  // damping factor halves every interval
    int threads = 1;

    void validate() const {
        if (n < 1) throw std::invalid_argument("penalization: n must be >= 1");
        if (!(cap_psi > 0.0) || !(cap_zsq > 0.0))
            throw std::invalid_argument("penalization: caps must be positive");
        if (!(picard_tol > 0.0))
            throw std::invalid_argument("penalization: picard_tol must be positive");
    }
};

struct GeneratorSpec {
    // F(t, x, y, z) with supplied Lipschitz data; empty f means zero
    std::function<Vec(double, const Vec&, const Vec&, const Mat&)> f;
    double lip_y = 0.0;
    double lip_z = 0.0;
};

using TerminalMap = std::function<Vec(const Vec&)>;  // x at the horizon -> point in the closure

// ---------------------------------------------------------------------------
// Markovian fields u^n, v^n on the lattice.
// ---------------------------------------------------------------------------

struct SolverField {
    BrownianLattice lattice;
    ForwardDiffusion diffusion;
    GeneratorSpec generator;
    PenalizationConfig config;
    double t_offset = 0.0;  // start time of this field's interval
    int y_dim = 0;
    int z_cols = 0;

    std::vector<std::vector<double>> y;  // per step: nodes x y_dim
    std::vector<std::vector<double>> z;  // per step k < N: nodes x (y_dim * d')

    // diagnostics
    int max_picard_iters = 0;
    double max_residual = 0.0;
    double max_n_psi = 0.0;
    double contraction_a_priori = 0.0;  // dt (K_fy + n M1 Lip(grad psi) (1 + M2))

    Vec y_at(int k, long node) const {
        Vec out(y_dim);
        for (int i = 0; i < y_dim; ++i) out[i] = y[k][node * y_dim + i];
        return out;
    }

    Mat z_at(int k, long node) const {
        Mat out(y_dim, z_cols);
        for (int i = 0; i < y_dim; ++i)
            for (int a = 0; a < z_cols; ++a)
                out(i, a) = z[k][node * y_dim * z_cols + i * z_cols + a];
        return out;
    }
};

namespace detail {

struct OneStepOutcome {
    Vec y;
    int iters = 0;
    double residual = 0.0;
    bool converged = false;
};

// Implicit-in-Y Picard solve of
//   y = e + F(t, x, y, z) dt - n rho_{M1}(psi(y)) grad psi(y) (1 + rho_{M2}(|z|^2)) dt
// The penalty slope can exceed 1/dt for large n, so the iteration is damped
// on a geometric schedule and whenever the residual grows.
inline OneStepOutcome penalized_one_step(const PseudoDistance& ps, const Vec& e,
                                         const Mat& zmat, const Vec& x, double t,
                                         double dt, const GeneratorSpec& gen,
                                         const PenalizationConfig& cfg) {
    const double zsq = std::min(zmat.squaredNorm(), cfg.cap_zsq);
    const double pen_scale = static_cast<double>(cfg.n) * dt * (1.0 + zsq);
    const int d = static_cast<int>(e.size());
    Vec grad(d);

    auto apply = [&](const Vec& yy, Vec& out) {
        const double p = ps.psi_with_grad(yy, grad);
        out = e;
        if (gen.f) out += dt * gen.f(t, x, yy, zmat);
        if (p > 0.0) out -= pen_scale * std::min(p, cfg.cap_psi) * grad;
    };

    OneStepOutcome res;
    Vec ycur = e, ynew(d);
    double theta = 1.0;
    double best = std::numeric_limits<double>::infinity();
    for (int it = 0; it < cfg.picard_max_iters; ++it) {
        apply(ycur, ynew);
        const double r = (ynew - ycur).cwiseAbs().maxCoeff();
        if (r <= cfg.picard_tol) {
            res.y = ynew;
            res.iters = it + 1;
            res.residual = r;
            res.converged = true;
            return res;
        }
        if (!std::isfinite(r)) break;
        if (r > 10.0 * best && theta > 1.0 / 64.0) theta *= 0.5;
        if ((it + 1) % cfg.damping_interval == 0 && theta > 1.0 / 64.0) theta *= 0.5;
        best = std::min(best, r);
        ycur += theta * (ynew - ycur);
        res.residual = r;
        res.iters = it + 1;
    }
    res.y = ycur;
    return res;
}

inline void parallel_over_nodes(long count, int threads, const std::function<void(long, long)>& body) {
    if (threads <= 1 || count < 256) {
        body(0, count);
        return;
    }
    const int used = std::min<long>(threads, count);
    std::vector<std::thread> pool;
    pool.reserve(used);
    for (int t = 0; t < used; ++t) {
        const long lo = count * t / used;
        const long hi = count * (t + 1) / used;
        pool.emplace_back([&body, lo, hi] { body(lo, hi); });
    }
    for (auto& th : pool) th.join();
}

// Backward induction from explicit terminal node values.
inline SolverField solve_backward(const PseudoDistance& pseudo,
                                  const std::vector<double>& terminal_values,
                                  const GeneratorSpec& generator,
                                  const ForwardDiffusion& diffusion,
                                  const BrownianLattice& lattice,
                                  const PenalizationConfig& config, double t_offset,
                                  bool check_terminal = false) {
    config.validate();
    const int d = pseudo.domain.dim;
    const int dp = lattice.driver_dim;
    const int N = lattice.n_steps;
    const double dt = lattice.dt();
    if (diffusion.driver_dim != dp)
        throw LatticeMismatch("solve: diffusion driver dimension differs from the lattice");
    if (static_cast<long>(terminal_values.size()) != lattice.nodes_at(N) * d)
        throw LatticeMismatch("solve: terminal field size mismatch");

    SolverField field;
    field.lattice = lattice;
    field.diffusion = diffusion;
    field.generator = generator;
    field.config = config;
    field.t_offset = t_offset;
    field.y_dim = d;
    field.z_cols = dp;
    field.y.resize(N + 1);
    field.z.resize(N);
    field.y[N] = terminal_values;

    if (check_terminal) {
        for (long node = 0; node < lattice.nodes_at(N); ++node) {
            Vec g(d);
            for (int i = 0; i < d; ++i) g[i] = terminal_values[node * d + i];
            if (pseudo.psi(g) > 1e-9)
                throw TerminalOutsideDomain(
                    "solve: terminal value leaves the closed domain at node " +
                    std::to_string(node));
        }
    }

    const double m1 = config.cap_psi, m2 = config.cap_zsq;
    field.contraction_a_priori =
        std::isfinite(m1) && std::isfinite(m2)
            ? dt * (generator.lip_y +
                    config.n * m1 * pseudo.hess_sup * (1.0 + m2))
            : std::numeric_limits<double>::infinity();

    const auto drift_tab = diffusion.drift_table(lattice);

    std::vector<int> iters_by_thread;
    for (int k = N - 1; k >= 0; --k) {
        const long nodes = lattice.nodes_at(k);
        field.y[k].assign(nodes * d, 0.0);
        field.z[k].assign(nodes * d * dp, 0.0);
        const std::vector<double>& next = field.y[k + 1];
        const double t = t_offset + lattice.time_at(k);

        std::vector<double> local_npsi(std::max<long>(1, nodes), 0.0);
        std::vector<int> local_iters(std::max<long>(1, nodes), 0);
        std::vector<double> local_res(std::max<long>(1, nodes), 0.0);
        std::vector<long> diverged(std::max<long>(1, nodes), -1);

        parallel_over_nodes(nodes, config.threads, [&](long lo, long hi) {
            Vec e(d);
            double zbuf[kMaxDim * 2];
            for (long node = lo; node < hi; ++node) {
                conditional_expectation_into(lattice, k, node, next, d, e.data());
                // z_projection_into fills row-major (d x d'); copy into the matrix
                z_projection_into(lattice, k, node, next, d, zbuf);
                Mat zm(d, dp);
                for (int i = 0; i < d; ++i)
                    for (int a = 0; a < dp; ++a) zm(i, a) = zbuf[i * dp + a];
                const Vec xk = diffusion.x_at(lattice, k, node, &drift_tab);
                const OneStepOutcome out =
                    penalized_one_step(pseudo, e, zm, xk, t, dt, generator, config);
                if (!out.converged) {
                    diverged[node] = node;
                    continue;
                }
                for (int i = 0; i < d; ++i) field.y[k][node * d + i] = out.y[i];
                for (int i = 0; i < d; ++i)
                    for (int a = 0; a < dp; ++a)
                        field.z[k][node * d * dp + i * dp + a] = zm(i, a);
                local_npsi[node] = config.n * pseudo.psi(out.y);
                local_iters[node] = out.iters;
                local_res[node] = out.residual;
            }
        });

        for (long node = 0; node < nodes; ++node) {
            if (diverged[node] >= 0)
                throw PicardDivergence(
                    "solve: one-step Picard iteration did not converge (n=" +
                        std::to_string(config.n) + ", step " + std::to_string(k) +
                        ", node " + std::to_string(node) + ")",
                    config.n, k, static_cast<int>(node));
            field.max_n_psi = std::max(field.max_n_psi, local_npsi[node]);
            field.max_picard_iters = std::max(field.max_picard_iters, local_iters[node]);
            field.max_residual = std::max(field.max_residual, local_res[node]);
        }
    }
    return field;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Penalized solve with terminal map g(X_T).
// ---------------------------------------------------------------------------

inline SolverField solve_penalized(const PseudoDistance& pseudo, const TerminalMap& g,
                                   const GeneratorSpec& generator,
                                   const ForwardDiffusion& diffusion,
                                   const BrownianLattice& lattice,
                                   const PenalizationConfig& config) {
    const int d = pseudo.domain.dim;
    const int N = lattice.n_steps;
    const auto drift_tab = diffusion.drift_table(lattice);
    std::vector<double> terminal(lattice.nodes_at(N) * d);
    for (long node = 0; node < lattice.nodes_at(N); ++node) {
        const Vec gv = g(diffusion.x_at(lattice, N, node, &drift_tab));
        for (int i = 0; i < d; ++i) terminal[node * d + i] = gv[i];
    }
    return detail::solve_backward(pseudo, terminal, generator, diffusion, lattice, config,
                                  0.0, /*check_terminal=*/true);
}

// ---------------------------------------------------------------------------
// Pathwise extraction of the reflection process.
// ---------------------------------------------------------------------------

struct ReflectedPath {
    PathSample path;
    double dt = 0.0;
    double t_offset = 0.0;
    int driver_dim = 1;
    std::vector<Vec> y;          // size N+1
    std::vector<Vec> x;          // forward state along the path, size N+1
    std::vector<Mat> z;          // size N
    std::vector<Vec> k_accum;    // cumulative K, size N+1
    std::vector<double> var;     // cumulative variation, size N+1
    std::vector<Vec> phi_accum;  // cumulative penalty drift part
    std::vector<Vec> theta_accum;  // cumulative quadratic part
    double k_residual_discrepancy = 0.0;
};

inline ReflectedPath extract_k_path(const SolverField& field, const PathSample& path,
                                    const PseudoDistance& pseudo) {
    const BrownianLattice& lat = field.lattice;
    const int N = lat.n_steps;
    const int d = field.y_dim;
    if (static_cast<int>(path.node_index.size()) != N + 1)
        throw LatticeMismatch("extract_k_path: path length differs from the lattice");

    ReflectedPath out;
    out.path = path;
    out.dt = lat.dt();
    out.t_offset = field.t_offset;
    out.driver_dim = lat.driver_dim;
    out.y.resize(N + 1);
    out.x.resize(N + 1);
    out.z.resize(N);
    out.k_accum.assign(N + 1, Vec::Zero(d));
    out.var.assign(N + 1, 0.0);
    out.phi_accum.assign(N + 1, Vec::Zero(d));
    out.theta_accum.assign(N + 1, Vec::Zero(d));

    const double dt = lat.dt();
    const auto drift_tab = field.diffusion.drift_table(lat);
    Vec grad(d);
    for (int k = 0; k <= N; ++k) {
        out.y[k] = field.y_at(k, path.node_index[k]);
        out.x[k] = field.diffusion.x_at(lat, k, path.node_index[k], &drift_tab);
    }
    for (int k = 0; k < N; ++k) {
        const long node = path.node_index[k];
        out.z[k] = field.z_at(k, node);
        const double zsq = std::min(out.z[k].squaredNorm(), field.config.cap_zsq);
        const double p = pseudo.psi_with_grad(out.y[k], grad);
        const Vec pen = field.config.n * std::min(p, field.config.cap_psi) * grad;
        const Vec d_phi = pen * dt;
        const Vec d_theta = pen * zsq * dt;
        const Vec d_k = d_phi + d_theta;
        out.phi_accum[k + 1] = out.phi_accum[k] + d_phi;
        out.theta_accum[k + 1] = out.theta_accum[k] + d_theta;
        out.k_accum[k + 1] = out.k_accum[k] + d_k;
        out.var[k + 1] = out.var[k] + d_k.norm();

        // residual form of the same increment from the one-step identity
        Vec dw(lat.driver_dim);
        for (int a = 0; a < lat.driver_dim; ++a)
            dw[a] = lat.increment(path.branch_at(k, lat.driver_dim), a);
        Vec f_term = Vec::Zero(d);
        if (field.generator.f)
            f_term = field.generator.f(field.t_offset + lat.time_at(k), out.x[k],
                                       out.y[k], out.z[k]) *
                     dt;
        const Vec d_k_res = out.y[k + 1] - out.y[k] + f_term - out.z[k] * dw;
        out.k_residual_discrepancy =
            std::max(out.k_residual_discrepancy, (d_k - d_k_res).cwiseAbs().maxCoeff());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reflected limit over an increasing penalization schedule.
// ---------------------------------------------------------------------------

struct ConvergenceRow {
    int n = 0;
    double sup_diff = std::numeric_limits<double>::quiet_NaN();  // vs previous field
    double sup_dist = 0.0;
    double sup_n_psi = 0.0;
    double holder_quotient = 0.0;
    double var_mean = 0.0;
    double var_max = 0.0;
    int picard_max_iters = 0;
};

struct ReflectedSolveOptions {
    double stop_tol = 0.0;          // 0: always run the whole schedule
    double cap_zsq = 100.0;         // M2 default
    double cap_psi_factor = 10.0;   // M1 = factor * max(C_est, 1) / n
    bool auto_caps = true;
    double holder_alpha = 1.0;
    int holder_pairs = 4000;
    long n_paths = 256;
    std::uint64_t seed = 0x5eed1ULL;
    double picard_tol = 1e-12;
    int picard_max_iters = 200;
    int threads = 1;
};

struct ReflectedSolution {
    SolverField field;                 // final iterate
    int final_n = 0;
    bool converged = false;            // sup_diff <= stop_tol before exhaustion
    std::vector<ReflectedPath> paths;  // sampled under the final field
    std::vector<ConvergenceRow> table;
};

inline double holder_quotient(const SolverField& field, double alpha_prime, int pairs,
                              std::uint64_t seed) {
    const BrownianLattice& lat = field.lattice;
    SplitMix64 rng(seed, 77);
    const auto drift_tab = field.diffusion.drift_table(lat);
    double q = 0.0;
    for (int i = 0; i < pairs; ++i) {
        const int k1 = static_cast<int>(rng.next() % (lat.n_steps + 1));
        const int k2 = static_cast<int>(rng.next() % (lat.n_steps + 1));
        const long n1 = static_cast<long>(rng.next() % lat.nodes_at(k1));
        const long n2 = static_cast<long>(rng.next() % lat.nodes_at(k2));
        if (k1 == k2 && n1 == n2) continue;
        const Vec x1 = field.diffusion.x_at(lat, k1, n1, &drift_tab);
        const Vec x2 = field.diffusion.x_at(lat, k2, n2, &drift_tab);
        const double denom = std::pow(std::abs(lat.time_at(k1) - lat.time_at(k2)),
                                      alpha_prime / 2.0) +
                             std::pow((x1 - x2).norm(), alpha_prime);
        if (denom < 1e-14) continue;
        q = std::max(q, (field.y_at(k1, n1) - field.y_at(k2, n2)).norm() / denom);
    }
    return q;
}

inline double sup_distance_to_domain(const SolverField& field, const PseudoDistance& ps,
                                     const GeometrySettings& gs = {}) {
    double sup = 0.0;
    for (int k = 0; k <= field.lattice.n_steps; ++k) {
        for (long node = 0; node < field.lattice.nodes_at(k); ++node) {
            const Vec y = field.y_at(k, node);
            if (ps.domain.phi(y) <= 0.0) continue;
            double dist;
            try {
                dist = distance_to_domain(ps.domain, y, gs);
            } catch (const std::runtime_error&) {
                dist = ps.psi(y) / ps.comp_lo;
            }
            sup = std::max(sup, dist);
        }
    }
    return sup;
}

inline ReflectedSolution solve_reflected(const PseudoDistance& pseudo, const TerminalMap& g,
                                         const GeneratorSpec& generator,
                                         const ForwardDiffusion& diffusion,
                                         const BrownianLattice& lattice,
                                         const std::vector<int>& n_schedule,
                                         const ReflectedSolveOptions& opts = {}) {
    if (n_schedule.empty())
        throw std::invalid_argument("solve_reflected: empty schedule");
    ReflectedSolution sol;
    double c_est = 1.0;
    bool have_prev = false;
    SolverField prev;

    for (size_t idx = 0; idx < n_schedule.size(); ++idx) {
        PenalizationConfig cfg;
        cfg.n = n_schedule[idx];
        cfg.picard_tol = opts.picard_tol;
        cfg.picard_max_iters = opts.picard_max_iters;
        cfg.threads = opts.threads;
        if (opts.auto_caps) {
            cfg.cap_psi = opts.cap_psi_factor * std::max(c_est, 1.0) / cfg.n;
            cfg.cap_zsq = opts.cap_zsq;
        }
        SolverField field = solve_penalized(pseudo, g, generator, diffusion, lattice, cfg);

        ConvergenceRow row;
        row.n = cfg.n;
        row.sup_n_psi = field.max_n_psi;
        row.sup_dist = sup_distance_to_domain(field, pseudo);
        row.holder_quotient =
            holder_quotient(field, opts.holder_alpha, opts.holder_pairs, opts.seed);
        row.picard_max_iters = field.max_picard_iters;
        if (have_prev) {
            double diff = 0.0;
            for (int k = 0; k <= lattice.n_steps; ++k)
                for (long node = 0; node < lattice.nodes_at(k); ++node)
                    diff = std::max(diff,
                                    (field.y_at(k, node) - prev.y_at(k, node)).norm());
            row.sup_diff = diff;
        }

        {
            double vsum = 0.0, vmax = 0.0;
            const auto paths = sample_paths(lattice, opts.n_paths, opts.seed);
            for (const auto& p : paths) {
                const ReflectedPath rp = extract_k_path(field, p, pseudo);
                vsum += rp.var.back();
                vmax = std::max(vmax, rp.var.back());
            }
            row.var_mean = vsum / static_cast<double>(opts.n_paths);
            row.var_max = vmax;
        }

        sol.table.push_back(row);
        c_est = std::max(c_est, field.max_n_psi);
        prev = std::move(field);
        have_prev = true;
        sol.final_n = cfg.n;
        if (opts.stop_tol > 0.0 && !std::isnan(row.sup_diff) &&
            row.sup_diff <= opts.stop_tol) {
            sol.converged = true;
            break;
        }
    }
    sol.field = std::move(prev);
    const auto paths = sample_paths(lattice, opts.n_paths, opts.seed);
    sol.paths.reserve(paths.size());
    for (const auto& p : paths) sol.paths.push_back(extract_k_path(sol.field, p, pseudo));
    return sol;
}

// ---------------------------------------------------------------------------
// Discrete path-dependent mode: terminal g(X_{t_1}, ..., X_{t_l}) with l <= 2.
// The interval [t_{l-1}, T] is solved per frozen prefix value; the resulting
// time-t_{l-1} values become the terminal condition of the lower interval.
// ---------------------------------------------------------------------------

using PathTerminal = std::function<Vec(const std::vector<Vec>&)>;

struct PathDependentField {
    int depth = 1;
    int k1 = 0;  // grid index of t_1 when depth == 2
    std::vector<SolverField> upper;  // one per prefix node (depth == 2)
    SolverField lower;               // field on [0, t_1] (or the whole field)
};

inline PathDependentField solve_path_dependent(const PseudoDistance& pseudo,
                                               const std::vector<double>& times,
                                               const PathTerminal& g,
                                               const GeneratorSpec& generator,
                                               const BrownianLattice& lattice,
                                               const PenalizationConfig& config) {
    const size_t ell = times.size();
    if (ell == 0 || ell > 2)
        throw UnsupportedDepth("solve_path_dependent: supported depths are 1 and 2");
    const double dt = lattice.dt();
    for (double t : times) {
        const double steps = t / dt;
        if (std::abs(steps - std::llround(steps)) > 1e-9)
            throw std::invalid_argument("solve_path_dependent: times must lie on the grid");
    }
    if (std::abs(times.back() - lattice.horizon) > 1e-9)
        throw std::invalid_argument("solve_path_dependent: last time must be the horizon");

    PathDependentField out;
    const ForwardDiffusion diff = ForwardDiffusion::identity(lattice.driver_dim);
    if (ell == 1) {
        out.depth = 1;
        out.lower = solve_penalized(
            pseudo, [&](const Vec& x) { return g({x}); }, generator, diff, lattice, config);
        return out;
    }

    out.depth = 2;
    const int k1 = static_cast<int>(std::llround(times[0] / dt));
    if (k1 <= 0 || k1 >= lattice.n_steps)
        throw std::invalid_argument("solve_path_dependent: t_1 must be interior");
    out.k1 = k1;

    const BrownianLattice upper_lat(lattice.horizon - times[0], lattice.n_steps - k1,
                                    lattice.driver_dim);
    const int d = pseudo.domain.dim;
    const long prefix_nodes = lattice.nodes_at(k1);
    std::vector<double> mid_values(prefix_nodes * d);
    out.upper.reserve(prefix_nodes);
    for (long p = 0; p < prefix_nodes; ++p) {
        const Vec v = lattice.w_at(k1, p);
        Mat eye = Mat::Identity(lattice.driver_dim, lattice.driver_dim);
        const ForwardDiffusion shifted = ForwardDiffusion::euler(v, nullptr, eye);
        GeneratorSpec upper_gen = generator;
        if (generator.f) {
            auto base = generator.f;
            const double t1 = times[0];
            upper_gen.f = [base, t1](double t, const Vec& x, const Vec& y, const Mat& z) {
                return base(t1 + t, x, y, z);
            };
        }
        SolverField uf = solve_penalized(
            pseudo, [&](const Vec& xT) { return g({v, xT}); }, upper_gen, shifted,
            upper_lat, config);
        uf.t_offset = times[0];
        for (int i = 0; i < d; ++i) mid_values[p * d + i] = uf.y[0][i];
        out.upper.push_back(std::move(uf));
    }

    const BrownianLattice lower_lat(times[0], k1, lattice.driver_dim);
    out.lower = detail::solve_backward(pseudo, mid_values, generator, diff, lower_lat,
                                       config, 0.0);
    return out;
}

}  // namespace rbsde
