#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "rbsde/oracle.hpp"
#include "rbsde/solver.hpp"

namespace rbsde {

struct CheckReport {
    std::string name;
    bool pass = false;
    double worst_violation = 0.0;
    long sample_count = 0;
    NamedReals fitted;
};

// ---------------------------------------------------------------------------
// Skorokhod variational inequality: for adapted test processes V inside the
// domain,  sum (Y - V) . dK + c |Y - V|^2 n(Y) . dK >= 0  with c = 1/(2 R0).
// Test processes are mean-reverting paths pulled toward the core center and
// clipped into the closure by projection.
// ---------------------------------------------------------------------------

inline CheckReport check_skorokhod(const std::vector<ReflectedPath>& paths,
                                   const PseudoDistance& pseudo, double r0,
                                   int n_test_processes, std::uint64_t seed,
                                   double tol = 1e-6) {
    CheckReport rep;
    rep.name = "skorokhod";
    const double c = 1.0 / (2.0 * r0);
    const int d = pseudo.domain.dim;
    double worst = std::numeric_limits<double>::infinity();
    long count = 0;

    for (int v = 0; v < n_test_processes; ++v) {
        SplitMix64 rng(seed, 9000 + v);
        const double pull = rng.uniform(0.5, 3.0);
        const double vol = rng.uniform(0.05, 0.4);
        const Vec dir = rng.unit_vector(d);
        Vec anchor = Vec::Zero(d);  // the core contains the origin

        for (const ReflectedPath& rp : paths) {
            const int N = static_cast<int>(rp.y.size()) - 1;
            const double dt = rp.dt;
            Vec vcur = anchor;
            double sum = 0.0;
            for (int k = 0; k < N; ++k) {
                const Vec dk = rp.k_accum[k + 1] - rp.k_accum[k];
                if (dk.norm() > 0.0) {
                    const Vec diff = rp.y[k] - vcur;
                    const Vec nrm = outward_normal(pseudo.domain, pseudo, rp.y[k]);
                    sum += diff.dot(dk) + c * diff.squaredNorm() * nrm.dot(dk);
                }
                // advance the test process and clip it into the closure
                double dw = 0.0;
                for (int a = 0; a < rp.driver_dim; ++a)
                    dw += rp.path.increments[k * rp.driver_dim + a];
                vcur += pull * (anchor - vcur) * dt + vol * std::sqrt(dt) * dw * dir;
                if (pseudo.domain.phi(vcur) > 0.0) {
                    try {
                        vcur = project(pseudo.domain, vcur);
                    } catch (const std::runtime_error&) {
                        vcur = 0.5 * (vcur + anchor);
                    }
                }
            }
            worst = std::min(worst, sum);
            ++count;
        }
    }
    rep.worst_violation = -std::min(worst, 0.0);
    rep.sample_count = count;
    rep.fitted["min_sum"] = worst;
    rep.fitted["c"] = c;
    rep.pass = worst >= -tol;
    return rep;
}

// Self-test variant: V = Y makes every term vanish identically.
inline double skorokhod_self_test(const std::vector<ReflectedPath>& paths,
                                  const PseudoDistance& pseudo, double r0) {
    const double c = 1.0 / (2.0 * r0);
    double worst = 0.0;
    for (const ReflectedPath& rp : paths) {
        double sum = 0.0;
        for (size_t k = 0; k + 1 < rp.y.size(); ++k) {
            const Vec dk = rp.k_accum[k + 1] - rp.k_accum[k];
            const Vec diff = rp.y[k] - rp.y[k];
            sum += diff.dot(dk) + c * diff.squaredNorm() * dk.norm();
        }
        worst = std::max(worst, std::abs(sum));
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Variation domination: dVar <= 1_boundary ([n . f]^+ + |Z|^2 / (2 R0)) dt.
// ---------------------------------------------------------------------------

inline CheckReport check_var_domination(const std::vector<ReflectedPath>& paths,
                                        const PseudoDistance& pseudo, double r0,
                                        const GeneratorSpec& generator,
                                        double boundary_band, double rel_tol = 0.05) {
    CheckReport rep;
    rep.name = "var_domination";
    double max_slack = -std::numeric_limits<double>::infinity();
    double excess = 0.0, z_mass = 0.0;
    long count = 0;
    for (const ReflectedPath& rp : paths) {
        const int N = static_cast<int>(rp.y.size()) - 1;
        const double dt = rp.dt;
        for (int k = 0; k < N; ++k) {
            const double dvar = rp.var[k + 1] - rp.var[k];
            const bool on_boundary = pseudo.psi(rp.y[k]) <= boundary_band ||
                                     pseudo.domain.phi(rp.y[k]) >= -boundary_band;
            double rhs = 0.0;
            if (on_boundary) {
                double fplus = 0.0;
                if (generator.f) {
                    const Vec nrm = outward_normal(pseudo.domain, pseudo, rp.y[k]);
                    const Vec fv = generator.f(rp.t_offset + k * dt, rp.x[k], rp.y[k],
                                               rp.z[k]);
                    fplus = std::max(nrm.dot(fv), 0.0);
                }
                rhs = (fplus + rp.z[k].squaredNorm() / (2.0 * r0)) * dt;
            }
            max_slack = std::max(max_slack, dvar - rhs);
            excess += std::max(dvar - rhs, 0.0);
            z_mass += rp.z[k].squaredNorm() * dt;
            ++count;
        }
    }
    // the one-step offset relaxation spreads variation over neighboring
    // steps, so the domination is gated in aggregate relative to the
    // quadratic mass; the per-step extreme is reported alongside
    const double rel = z_mass > 0.0 ? excess / z_mass : 0.0;
    rep.worst_violation = rel;
    rep.sample_count = count;
    rep.fitted["max_slack"] = max_slack;
    rep.fitted["excess_rel"] = rel;
    rep.pass = rel <= rel_tol;
    return rep;
}

// ---------------------------------------------------------------------------
// Distance decay rate: least-squares slope of log sup-dist against log n,
// discarding the smallest n (pre-asymptotic).
// ---------------------------------------------------------------------------

inline CheckReport check_distance_rate(const std::vector<ConvergenceRow>& table,
                                       double strong_gate = -0.8,
                                       double weak_gate = -0.4) {
    if (table.size() < 5)
        throw InsufficientData("check_distance_rate: need at least 5 schedule points");
    CheckReport rep;
    rep.name = "distance_rate";
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    long m = 0;
    for (size_t i = 1; i < table.size(); ++i) {  // drop the smallest n
        if (table[i].sup_dist <= 0.0) continue;
        const double x = std::log(double(table[i].n));
        const double y = std::log(table[i].sup_dist);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++m;
    }
    if (m < 3) throw InsufficientData("check_distance_rate: too few usable rows");
    const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    rep.fitted["slope"] = slope;
    rep.fitted["strong_gate"] = strong_gate;
    rep.fitted["weak_gate"] = weak_gate;
    rep.fitted["weak_pass"] = slope <= weak_gate ? 1.0 : 0.0;
    rep.sample_count = m;
    rep.pass = slope <= strong_gate;
    rep.worst_violation = std::max(0.0, slope - strong_gate);
    return rep;
}

// ---------------------------------------------------------------------------
// Uniformity of the discrete Hoelder quotient across the schedule.
// ---------------------------------------------------------------------------

inline CheckReport check_holder(const std::vector<double>& quotients,
                                double ratio_gate = 2.0) {
    CheckReport rep;
    rep.name = "holder_uniformity";
    if (quotients.empty()) throw InsufficientData("check_holder: no quotients");
    const double qmax = *std::max_element(quotients.begin(), quotients.end());
    const double qmin = *std::min_element(quotients.begin(), quotients.end());
    rep.sample_count = static_cast<long>(quotients.size());
    rep.fitted["max"] = qmax;
    rep.fitted["min"] = qmin;
    if (qmax < 1e-12) {
        rep.fitted["ratio"] = 0.0;
        rep.pass = true;
        return rep;
    }
    const double ratio = qmax / std::max(qmin, 1e-300);
    rep.fitted["ratio"] = ratio;
    rep.pass = ratio <= ratio_gate;
    rep.worst_violation = std::max(0.0, ratio - ratio_gate);
    return rep;
}

// ---------------------------------------------------------------------------
// Stability under terminal perturbations: lattice norms of the solution
// differences, one solve per perturbation size.
// ---------------------------------------------------------------------------

struct StabilityResult {
    CheckReport report;
    std::vector<double> deltas;
    std::vector<double> combined_error;  // ||dY||_S2 + ||dZ||_H2 + ||dK||_S2
};

inline StabilityResult stability_experiment(
    const PseudoDistance& pseudo, const TerminalMap& base_terminal,
    const std::function<TerminalMap(double)>& perturbed_terminal,
    const GeneratorSpec& generator, const ForwardDiffusion& diffusion,
    const BrownianLattice& lattice, const PenalizationConfig& config,
    const std::vector<double>& deltas, long n_paths, std::uint64_t seed) {
    StabilityResult out;
    out.deltas = deltas;
    const SolverField base =
        solve_penalized(pseudo, base_terminal, generator, diffusion, lattice, config);
    const auto paths = sample_paths(lattice, n_paths, seed);
    std::vector<ReflectedPath> base_paths;
    base_paths.reserve(paths.size());
    for (const auto& p : paths) base_paths.push_back(extract_k_path(base, p, pseudo));

    const double dt = lattice.dt();
    for (double delta : deltas) {
        const SolverField pert = solve_penalized(pseudo, perturbed_terminal(delta),
                                                 generator, diffusion, lattice, config);
        double ey2 = 0.0, ez2 = 0.0, ek2 = 0.0;
        for (size_t i = 0; i < paths.size(); ++i) {
            const ReflectedPath rp = extract_k_path(pert, paths[i], pseudo);
            double sup_y = 0.0, int_z = 0.0, sup_k = 0.0;
            for (size_t k = 0; k < rp.y.size(); ++k) {
                sup_y = std::max(sup_y, (rp.y[k] - base_paths[i].y[k]).squaredNorm());
                sup_k = std::max(sup_k,
                                 (rp.k_accum[k] - base_paths[i].k_accum[k]).squaredNorm());
            }
            for (size_t k = 0; k < rp.z.size(); ++k)
                int_z += (rp.z[k] - base_paths[i].z[k]).squaredNorm() * dt;
            ey2 += sup_y;
            ez2 += int_z;
            ek2 += sup_k;
        }
        const double np = static_cast<double>(paths.size());
        out.combined_error.push_back(std::sqrt(ey2 / np) + std::sqrt(ez2 / np) +
                                     std::sqrt(ek2 / np));
    }

    CheckReport rep;
    rep.name = "stability";
    rep.sample_count = static_cast<long>(deltas.size());
    bool monotone = true;
    for (size_t i = 1; i < deltas.size(); ++i) {
        if (deltas[i] < deltas[i - 1] && out.combined_error[i] >= out.combined_error[i - 1])
            monotone = false;
        if (deltas[i] > deltas[i - 1] && out.combined_error[i] <= out.combined_error[i - 1])
            monotone = false;
    }
    for (size_t i = 0; i < deltas.size(); ++i) {
        rep.fitted["error_delta_" + std::to_string(i)] = out.combined_error[i];
        if (deltas[i] == 0.0) {
            const double zero_gate =
                2.0 * config.picard_tol * lattice.n_steps;
            if (out.combined_error[i] > zero_gate) monotone = false;
            rep.fitted["zero_delta_error"] = out.combined_error[i];
        }
    }
    rep.pass = monotone;
    out.report = rep;
    return out;
}

// ---------------------------------------------------------------------------
// Monte Carlo exponential moment of the total variation, with a doubling
// stability diagnostic.
// ---------------------------------------------------------------------------

inline CheckReport estimate_exp_moments(const std::vector<double>& var_samples,
                                        double theta, double p, double r0,
                                        double stability_gate = 0.10) {
    CheckReport rep;
    rep.name = "exp_moments";
    const size_t n = var_samples.size();
    if (n < 2) throw InsufficientData("estimate_exp_moments: need at least 2 samples");
    const double rate = theta * p / r0;
    double half = 0.0, full = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double v = std::exp(rate * var_samples[i]);
        full += v;
        if (i < n / 2) half += v;
    }
    full /= static_cast<double>(n);
    half /= static_cast<double>(n / 2);
    const double stability = std::abs(full - half) / full;
    rep.sample_count = static_cast<long>(n);
    rep.fitted["estimate"] = full;
    rep.fitted["estimate_half"] = half;
    rep.fitted["stability"] = stability;
    rep.fitted["rate"] = rate;
    rep.pass = std::isfinite(full) && stability <= stability_gate;
    rep.worst_violation = std::max(0.0, stability - stability_gate);
    return rep;
}

// ---------------------------------------------------------------------------
// Boundary-martingale identity: the solution stays on the boundary, the
// variation matches [-1/2 Tr(Z^T hess phi Z)]^+ dt, and dK is aligned with
// the outward normal.
// ---------------------------------------------------------------------------

inline CheckReport gamma_martingale_check(const std::vector<ReflectedPath>& paths,
                                          const LevelSetDomain& domain,
                                          const PseudoDistance& pseudo,
                                          double boundary_tol, double var_slack_rel,
                                          double angular_tol = 1e-6) {
    CheckReport rep;
    rep.name = "gamma_martingale";
    double max_phi = 0.0;
    double var_mismatch = 0.0, z_mass = 0.0;
    double worst_align = 1.0;
    long count = 0;
    for (const ReflectedPath& rp : paths) {
        const int N = static_cast<int>(rp.y.size()) - 1;
        const double dt = rp.dt;
        for (int k = 0; k <= N; ++k)
            max_phi = std::max(max_phi, std::abs(domain.phi(rp.y[k])));
        for (int k = 0; k < N; ++k) {
            const double dvar = rp.var[k + 1] - rp.var[k];
            const Mat H = domain.hess_phi(rp.y[k]);
            const double tr = (rp.z[k].transpose() * H * rp.z[k]).trace();
            const double target = std::max(-0.5 * tr, 0.0) * dt;
            var_mismatch += std::abs(dvar - target);
            z_mass += rp.z[k].squaredNorm() * dt;
            const Vec dk = rp.k_accum[k + 1] - rp.k_accum[k];
            if (dk.norm() > 1e-14) {
                const Vec nrm = outward_normal(pseudo.domain, pseudo, rp.y[k]);
                if (nrm.norm() > 0.0)
                    worst_align = std::min(worst_align, dk.dot(nrm) / dk.norm());
            }
            ++count;
        }
    }
    const double rel = z_mass > 0.0 ? var_mismatch / z_mass : 0.0;
    rep.sample_count = count;
    rep.fitted["max_abs_phi"] = max_phi;
    rep.fitted["var_mismatch_rel"] = rel;
    rep.fitted["worst_alignment"] = worst_align;
    const bool align_ok = worst_align >= std::cos(angular_tol) - 1e-12;
    rep.pass = max_phi <= boundary_tol && rel <= var_slack_rel && align_ok;
    rep.worst_violation = std::max({max_phi - boundary_tol, rel - var_slack_rel, 0.0});
    return rep;
}

// ---------------------------------------------------------------------------
// Reflected-path view of the circle construction in the sector frame: the
// reflection increment is the variation times the inward-pointing unit
// normal of the inner arc.
// ---------------------------------------------------------------------------

inline std::vector<ReflectedPath> oracle_reflected_paths(
    const CircleOracle& oc, const Eigen::Vector2d& circle_center,
    const std::vector<PathSample>& paths) {
    std::vector<ReflectedPath> out;
    out.reserve(paths.size());
    const BrownianLattice& lat = oc.lattice;
    const int N = lat.n_steps;
    const double dt = lat.dt();
    for (const PathSample& p : paths) {
        ReflectedPath rp;
        rp.path = p;
        rp.dt = dt;
        rp.driver_dim = 1;
        rp.y.resize(N + 1);
        rp.x.resize(N + 1);
        rp.z.resize(N);
        rp.k_accum.assign(N + 1, Vec::Zero(2));
        rp.var.assign(N + 1, 0.0);
        rp.phi_accum.assign(N + 1, Vec::Zero(2));
        rp.theta_accum.assign(N + 1, Vec::Zero(2));
        for (int k = 0; k <= N; ++k) {
            const long node = p.node_index[k];
            const double th =
                k < N ? oc.theta[k][node]
                      : oc.theta[N - 1][p.node_index[N - 1]] +
                            oc.eta[N - 1][p.node_index[N - 1]] *
                                lat.increment(p.branch_at(N - 1, 1), 0);
            rp.y[k] = oracle_point_in_sector_frame(circle_center, th);
            Vec x(1);
            x << lat.w_at(k, node)[0];
            rp.x[k] = x;
            if (k < N) {
                const double eta = oc.eta[k][node];
                Mat z(2, 1);
                z(0, 0) = eta * std::cos(th);
                z(1, 0) = eta * std::sin(th);
                rp.z[k] = z;
                const double dvar = 0.5 * eta * eta * dt;
                const Vec inward = make_vec2(-std::sin(th), std::cos(th));
                rp.k_accum[k + 1] = rp.k_accum[k] + dvar * inward;
                rp.var[k + 1] = rp.var[k] + dvar;
            }
        }
        out.push_back(std::move(rp));
    }
    return out;
}

}  // namespace rbsde
