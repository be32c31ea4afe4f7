#pragma once

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "rbsde/types.hpp"

namespace rbsde {

// ---------------------------------------------------------------------------
// Level-set domain D = { phi < 0 } with C^2 evaluators.
// ---------------------------------------------------------------------------

struct LevelSetDomain {
    int dim = 2;
    std::function<double(const Vec&)> phi;
    std::function<Vec(const Vec&)> grad_phi;
    std::function<Mat(const Vec&)> hess_phi;

    // Optional joint value+gradient evaluator (hot path); falls back to the
    // two separate calls when absent.
    std::function<double(const Vec&, Vec&)> phi_with_grad;

    // Optional direct boundary sampler; the generic rejection sampler is the
    // fallback.
    std::function<Vec(SplitMix64&)> boundary_sampler;

    double bounding_radius = 0.0;  // phi > 0 outside B_{bounding_radius - 1}(0)
    double grad_floor = 0.0;       // certified lower bound on |grad phi| near the boundary
    std::string name;

    double eval_phi_grad(const Vec& y, Vec& grad) const {
        if (phi_with_grad) return phi_with_grad(y, grad);
        grad = grad_phi(y);
        return phi(y);
    }
};

// Convex core C = { phi_c < 0 } with 0 in C; phi_c equals the distance to
// the closure of C outside of C.
struct ConvexCore {
    std::function<double(const Vec&)> phi_c;
    std::function<Vec(const Vec&)> grad_phi_c;
    bool contains_origin = true;
    std::optional<double> ball_radius;  // set when C is a centered euclidean ball
};

struct GeometrySettings {
    double boundary_band = 1e-6;   // |phi| tolerance defining "on the boundary"
    double loose_band = 0.1;       // rejection acceptance band before correction
    int newton_max_iters = 80;
    double newton_tol = 1e-12;
    double verify_tol = 1e-10;     // exterior-sphere violation tolerance
    double r0_cap = 1000.0;        // returned for convex domains
    std::uint64_t seed = 0x5eed0ULL;
};

// ---------------------------------------------------------------------------
// Boundary sampling: rejection into a loose band, then Newton correction
// along the gradient down to |phi| <= boundary_band.
// ---------------------------------------------------------------------------

inline bool boundary_correct(const LevelSetDomain& dom, Vec& y, double band,
                             int max_iters = 12) {
    Vec g(dom.dim);
    for (int it = 0; it < max_iters; ++it) {
        const double p = dom.eval_phi_grad(y, g);
        const double g2 = g.squaredNorm();
        if (std::abs(p) <= band) {
            // one extra correction: quadratic convergence parks the sample a
            // couple of orders below the band, which the tight pairwise
            // verifications need
            if (g2 >= 1e-18) y -= (p / g2) * g;
            return true;
        }
        if (g2 < 1e-18) return false;
        y -= (p / g2) * g;
    }
    Vec gg(dom.dim);
    return std::abs(dom.eval_phi_grad(y, gg)) <= band;
}

inline Vec sample_boundary_point(const LevelSetDomain& dom, SplitMix64& rng,
                                 const GeometrySettings& gs = {}) {
    if (dom.boundary_sampler) {
        Vec y = dom.boundary_sampler(rng);
        boundary_correct(dom, y, gs.boundary_band);
        return y;
    }
    const double R = dom.bounding_radius;
    for (int attempt = 0; attempt < 2000000; ++attempt) {
        Vec y(dom.dim);
        for (int i = 0; i < dom.dim; ++i) y[i] = rng.uniform(-R, R);
        if (std::abs(dom.phi(y)) > gs.loose_band) continue;
        if (boundary_correct(dom, y, gs.boundary_band)) return y;
    }
    throw EmptyBoundarySample("boundary sampler failed to find the level set of " +
                              dom.name);
}

inline std::vector<Vec> sample_boundary(const LevelSetDomain& dom, int count,
                                        SplitMix64& rng,
                                        const GeometrySettings& gs = {}) {
    std::vector<Vec> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) out.push_back(sample_boundary_point(dom, rng, gs));
    return out;
}

// Rejection sample of the closed domain (phi <= 0).
inline std::vector<Vec> sample_interior(const LevelSetDomain& dom, int count,
                                        SplitMix64& rng) {
    std::vector<Vec> out;
    out.reserve(count);
    const double R = dom.bounding_radius;
    int guard = 0;
    while (static_cast<int>(out.size()) < count) {
        if (++guard > 20000000)
            throw EmptyBoundarySample("interior rejection sampling starved for " +
                                      dom.name);
        Vec y(dom.dim);
        for (int i = 0; i < dom.dim; ++i) y[i] = rng.uniform(-R, R);
        if (dom.phi(y) <= 0.0) out.push_back(y);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Projection onto the closure of D: Newton iteration on the closest-point
// system  x + mu * grad_phi(x) = y,  phi(x) = 0.
// ---------------------------------------------------------------------------

inline Vec project(const LevelSetDomain& dom, const Vec& y,
                   double r0 = std::numeric_limits<double>::infinity(),
                   const GeometrySettings& gs = {}) {
    if (dom.phi(y) <= 0.0) return y;

    const int d = dom.dim;
    Vec x = y;
    Vec g(d);
    // gradient flow steps to reach the boundary neighborhood
    for (int it = 0; it < 40; ++it) {
        const double p = dom.eval_phi_grad(x, g);
        if (std::abs(p) <= 1e-3) break;
        const double g2 = g.squaredNorm();
        if (g2 < 1e-18) throw NonConvergence("project: vanishing gradient for " + dom.name);
        x -= (p / g2) * g;
    }
    double p = dom.eval_phi_grad(x, g);
    double mu = (y - x).dot(g) / std::max(g.squaredNorm(), 1e-300);

    using DynMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim + 1,
                                 kMaxDim + 1>;
    using DynVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim + 1, 1>;

    bool done = false;
    for (int it = 0; it < gs.newton_max_iters; ++it) {
        p = dom.eval_phi_grad(x, g);
        const Vec res_vec = x + mu * g - y;
        if (res_vec.norm() <= gs.newton_tol && std::abs(p) <= gs.newton_tol) {
            done = true;
            break;
        }
        const Mat H = dom.hess_phi(x);
        DynMat J(d + 1, d + 1);
        J.setZero();
        J.topLeftCorner(d, d) = Mat::Identity(d, d) + mu * H;
        J.topRightCorner(d, 1) = g;
        J.bottomLeftCorner(1, d) = g.transpose();
        DynVec rhs(d + 1);
        rhs.head(d) = -res_vec;
        rhs[d] = -p;
        const DynVec step = J.fullPivLu().solve(rhs);
        x += step.head(d);
        mu += step[d];
    }
    if (!done) throw NonConvergence("project: Newton did not converge for " + dom.name);
    if ((y - x).norm() >= r0)
        throw OutsideUniquenessBand("project: query farther than r0 from " + dom.name);
    return x;
}

inline double distance_to_domain(const LevelSetDomain& dom, const Vec& y,
                                 const GeometrySettings& gs = {}) {
    if (dom.phi(y) <= 0.0) return 0.0;
    return (y - project(dom, y, std::numeric_limits<double>::infinity(), gs)).norm();
}

// ---------------------------------------------------------------------------
// Exterior sphere radius: candidate from the Taylor bound
// grad_floor / sup ||hess phi|| over boundary samples, then a mandatory
// sampled verification of the supporting inequality
//   (y - y') . n(y) + |y - y'|^2 / (2 R0) >= -tol .
// Convex domains (first term nonnegative on all sampled pairs) return the
// configured cap.
// ---------------------------------------------------------------------------

struct R0Estimate {
    double r0 = 0.0;
    double hess_sup = 0.0;
    double worst_violation = 0.0;  // min of the verified left-hand side
    bool convex_cap = false;
    long pair_count = 0;
};

inline R0Estimate estimate_r0(const LevelSetDomain& dom, long n_samples,
                              const GeometrySettings& gs = {}) {
    SplitMix64 rng(gs.seed, 17);
    const int nb = std::max<int>(64, static_cast<int>(std::sqrt(double(n_samples))));
    const int nprime = std::max<int>(8, static_cast<int>(n_samples / nb));

    const std::vector<Vec> bnd = sample_boundary(dom, nb, rng, gs);
    std::vector<Vec> others = sample_interior(dom, nprime / 2, rng);
    {
        SplitMix64 rng2(gs.seed, 18);
        auto extra = sample_boundary(dom, nprime - static_cast<int>(others.size()), rng2, gs);
        others.insert(others.end(), extra.begin(), extra.end());
    }

    std::vector<Vec> normals(bnd.size());
    double hess_sup = 0.0;
    for (size_t i = 0; i < bnd.size(); ++i) {
        const Vec g = dom.grad_phi(bnd[i]);
        const double gn = g.norm();
        if (gn < 0.5 * dom.grad_floor)
            throw VerificationFailed("estimate_r0: gradient below floor at a boundary sample of " +
                                     dom.name);
        normals[i] = g / gn;
        Eigen::SelfAdjointEigenSolver<Mat> es(dom.hess_phi(bnd[i]));
        hess_sup = std::max(hess_sup, es.eigenvalues().cwiseAbs().maxCoeff());
    }

    R0Estimate est;
    est.hess_sup = hess_sup;
    est.pair_count = static_cast<long>(bnd.size()) * static_cast<long>(others.size());

    double min_dot = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < bnd.size(); ++i)
        for (const Vec& yp : others)
            min_dot = std::min(min_dot, (bnd[i] - yp).dot(normals[i]));
    if (min_dot >= -gs.verify_tol) {
        est.r0 = gs.r0_cap;
        est.convex_cap = true;
        est.worst_violation = min_dot;
        return est;
    }

    const double candidate = dom.grad_floor / std::max(hess_sup, 1e-12);
    double worst = std::numeric_limits<double>::infinity();
    size_t wi = 0, wj = 0;
    for (size_t i = 0; i < bnd.size(); ++i) {
        for (size_t j = 0; j < others.size(); ++j) {
            const double lhs = (bnd[i] - others[j]).dot(normals[i]) +
                               (bnd[i] - others[j]).squaredNorm() / (2.0 * candidate);
            if (lhs < worst) {
                worst = lhs;
                wi = i;
                wj = j;
            }
        }
    }
    if (worst < -gs.verify_tol) {
        throw VerificationFailed(
            "estimate_r0: exterior-sphere inequality violated by " + std::to_string(worst) +
            " at boundary sample " + std::to_string(wi) + " / point " + std::to_string(wj) +
            " of " + dom.name);
    }
    est.r0 = candidate;
    est.worst_violation = worst;
    return est;
}

// ---------------------------------------------------------------------------
// gamma = inf over the boundary of grad_phi_c . grad_phi / |grad_phi|,
// sampled and then refined by tangential descent from the worst samples.
// ---------------------------------------------------------------------------

inline double compute_gamma(const LevelSetDomain& dom, const ConvexCore& core,
                            const std::function<Vec(SplitMix64&)>& boundary_subset = nullptr,
                            int n_samples = 4096, const GeometrySettings& gs = {}) {
    SplitMix64 rng(gs.seed, 23);
    auto objective = [&](const Vec& y) {
        const Vec g = dom.grad_phi(y);
        return core.grad_phi_c(y).dot(g) / g.norm();
    };

    if (boundary_subset) {
        // tangential refinement could escape the subset; use a denser sampled
        // infimum instead
        double best = std::numeric_limits<double>::infinity();
        for (int i = 0; i < 4 * n_samples; ++i) {
            Vec y = boundary_subset(rng);
            boundary_correct(dom, y, gs.boundary_band);
            best = std::min(best, objective(y));
        }
        if (!std::isfinite(best))
            throw EmptyBoundarySample("compute_gamma: no boundary samples");
        return best;
    }

    std::vector<Vec> samples;
    samples.reserve(n_samples);
    for (int i = 0; i < n_samples; ++i)
        samples.push_back(sample_boundary_point(dom, rng, gs));
    if (samples.empty()) throw EmptyBoundarySample("compute_gamma: no boundary samples");

    std::vector<std::pair<double, Vec>> scored;
    scored.reserve(samples.size());
    for (const Vec& y : samples) scored.emplace_back(objective(y), y);
    std::sort(scored.begin(), scored.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    double best = scored.front().first;
    const int n_refine = std::min<int>(12, static_cast<int>(scored.size()));
    for (int r = 0; r < n_refine; ++r) {
        Vec y = scored[r].second;
        double val = scored[r].first;
        for (double step = 0.02; step > 1e-6; step *= 0.5) {
            bool improved = true;
            int guard = 0;
            while (improved && guard++ < 64) {
                improved = false;
                const Vec g = dom.grad_phi(y);
                // orthonormal tangent basis via Householder complement
                Eigen::HouseholderQR<Mat> qr(g);
                Mat Q = qr.householderQ() * Mat::Identity(dom.dim, dom.dim);
                for (int t = 1; t < dom.dim; ++t) {
                    for (double s : {step, -step}) {
                        Vec cand = y + s * Q.col(t);
                        if (!boundary_correct(dom, cand, gs.boundary_band)) continue;
                        const double v = objective(cand);
                        if (v < val - 1e-15) {
                            val = v;
                            y = cand;
                            improved = true;
                        }
                    }
                }
            }
        }
        best = std::min(best, val);
    }
    return best;
}

// ---------------------------------------------------------------------------
// Smallness conditions
// ---------------------------------------------------------------------------

enum class SmallnessCase { I, II, III, IV, None };

inline const char* to_string(SmallnessCase c) {
    switch (c) {
        case SmallnessCase::I: return "I";
        case SmallnessCase::II: return "II";
        case SmallnessCase::III: return "III";
        case SmallnessCase::IV: return "IV";
        default: return "none";
    }
}

struct GeometryReport {
    double gamma = 0.0;
    double r0 = 0.0;
    SmallnessCase smallness_case = SmallnessCase::None;
    bool smallness_pass = false;
    double theta = 1.0;
    NamedReals margins;
    NamedCounts sample_counts;

    bool admissible() const { return gamma > 0.0 && r0 > 0.0; }
};

// Evaluates one of the four smallness conditions given gamma and r0 (already
// computed into `report`). `xi_bound` is ||phi_c^+(xi)||_inf for cases I/II
// context and ||xi||_inf for case III.
inline GeometryReport check_smallness(const LevelSetDomain& dom, const ConvexCore& core,
                                      GeometryReport report, double xi_bound,
                                      bool f_sign_ok, double theta, SmallnessCase which,
                                      const GeometrySettings& gs = {}) {
    report.theta = theta;
    report.smallness_case = which;
    const double gamma_r0 = report.gamma * report.r0 / theta;

    auto sampled_sup = [&](auto&& f) {
        SplitMix64 rng(gs.seed, 31);
        double sup = -std::numeric_limits<double>::infinity();
        for (const Vec& y : sample_interior(dom, 4096, rng)) sup = std::max(sup, f(y));
        SplitMix64 rng2(gs.seed, 32);
        for (const Vec& y : sample_boundary(dom, 512, rng2, gs)) sup = std::max(sup, f(y));
        return sup;
    };

    switch (which) {
        case SmallnessCase::I: {
            if (!f_sign_ok)
                throw CaseInapplicable("smallness case (i) needs the generator sign condition");
            report.margins["gamma_r0_over_theta"] = gamma_r0;
            report.margins["xi_bound"] = xi_bound;
            report.margins["margin"] = gamma_r0 - xi_bound;
            report.smallness_pass = xi_bound < gamma_r0;
            break;
        }
        case SmallnessCase::II: {
            const double sup_core_plus =
                sampled_sup([&](const Vec& y) { return std::max(core.phi_c(y), 0.0); });
            report.margins["gamma_r0_over_theta"] = gamma_r0;
            report.margins["sup_phi_c_plus"] = sup_core_plus;
            report.margins["margin"] = gamma_r0 - sup_core_plus;
            report.smallness_pass = sup_core_plus < gamma_r0;
            break;
        }
        case SmallnessCase::III: {
            if (!core.ball_radius)
                throw CaseInapplicable("smallness case (iii) needs a centered ball core");
            if (!f_sign_ok)
                throw CaseInapplicable("smallness case (iii) needs the generator sign condition");
            const double lambda = *core.ball_radius;
            const double bound = lambda * lambda + 2.0 * report.r0 * report.r0 / theta;
            report.margins["bound"] = bound;
            report.margins["xi_sq_bound"] = xi_bound * xi_bound;
            report.margins["margin"] = bound - xi_bound * xi_bound;
            report.smallness_pass = xi_bound * xi_bound < bound;
            break;
        }
        case SmallnessCase::IV: {
            if (!core.ball_radius)
                throw CaseInapplicable("smallness case (iv) needs a centered ball core");
            const double lambda = *core.ball_radius;
            const double bound = lambda * lambda + 2.0 * report.r0 * report.r0 / theta;
            const double sup_sq = sampled_sup([](const Vec& y) { return y.squaredNorm(); });
            report.margins["bound"] = bound;
            report.margins["sup_x_sq"] = sup_sq;
            report.margins["margin"] = bound - sup_sq;
            report.smallness_pass = sup_sq < bound;
            break;
        }
        case SmallnessCase::None:
            report.smallness_pass = false;
            break;
    }
    return report;
}

}  // namespace rbsde
