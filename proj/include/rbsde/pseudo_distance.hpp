#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "rbsde/geometry.hpp"
#include "rbsde/smooth.hpp"
#include "rbsde/types.hpp"

namespace rbsde {

// ---------------------------------------------------------------------------
// Pseudo-distance
//   tilde_phi(y) = phi^+(y) (1 - theta(|y| - R - 1)) + theta(|y| - R)
//   psi(y)       = tilde_phi(y) + kappa |y| theta(tilde_phi(y) / eps)
// psi vanishes exactly on {phi <= 0}, is comparable to d(., D) near the
// domain, and grows linearly far away. grad psi is extended by zero inside;
// on the boundary it agrees with grad phi because theta is flat at 0.
// ---------------------------------------------------------------------------

struct PseudoDistance {
    LevelSetDomain domain;
    ConvexCore core;
    double R = 0.0;
    double eps = 0.0;
    double kappa = 0.0;

    // certified sampled constants
    double positivity_margin = 0.0;  // inf grad_phi_c . grad_psi outside D
    double comp_lo = 0.0;            // c with c d(y,D) <= psi(y)
    double comp_hi = 0.0;            // C with psi(y) <= C d(y,D)
    double min_grad_outside = 0.0;   // inf |grad psi| outside D
    double grad_sup = 0.0;           // sup |grad psi| (Lipschitz constant of psi)
    double hess_sup = 0.0;           // sampled sup ||hess psi|| near D

    double psi(const Vec& y) const {
        Vec g(domain.dim);
        return psi_with_grad_impl(y, &g, false);
    }

    double psi_with_grad(const Vec& y, Vec& grad) const {
        return psi_with_grad_impl(y, &grad, true);
    }

    Vec grad_psi(const Vec& y) const {
        Vec g(domain.dim);
        psi_with_grad_impl(y, &g, true);
        return g;
    }

    Vec big_psi(const Vec& y) const {
        Vec g(domain.dim);
        const double p = psi_with_grad_impl(y, &g, true);
        return p * g;
    }

    Mat hess_psi(const Vec& y) const {
        const int d = domain.dim;
        Vec gphi(d);
        const double phi = domain.eval_phi_grad(y, gphi);
        if (phi <= 0.0) return Mat::Zero(d, d);
        const Mat Hphi = domain.hess_phi(y);

        const double u = y.norm();
        const Vec unit = u > 1e-300 ? Vec(y / u) : Vec(Vec::Zero(d));
        const Mat P = (Mat::Identity(d, d) - unit * unit.transpose()) / std::max(u, 1e-300);

        const double a = 1.0 - smoothstep(u - R - 1.0);
        const double ap = -smoothstep_d1(u - R - 1.0);
        const double app = -smoothstep_d2(u - R - 1.0);
        const double b = smoothstep(u - R);
        const double bp = smoothstep_d1(u - R);
        const double bpp = smoothstep_d2(u - R);

        const double tphi = phi * a + b;
        const Vec g_tphi = a * gphi + (phi * ap + bp) * unit;
        const Mat H_tphi = a * Hphi + ap * (gphi * unit.transpose() + unit * gphi.transpose()) +
                           (phi * app + bpp) * (unit * unit.transpose()) +
                           (phi * ap + bp) * P;

        const double w = smoothstep(tphi / eps);
        const double wp = smoothstep_d1(tphi / eps) / eps;
        const double wpp = smoothstep_d2(tphi / eps) / (eps * eps);

        Mat H = H_tphi * (1.0 + kappa * u * wp);
        H += kappa * wp * (g_tphi * unit.transpose() + unit * g_tphi.transpose());
        H += kappa * u * wpp * (g_tphi * g_tphi.transpose());
        H += kappa * w * P;
        return H;
    }

private:
    double psi_with_grad_impl(const Vec& y, Vec* grad, bool want_grad) const {
        const int d = domain.dim;
        Vec gphi(d);
        const double phi = want_grad ? domain.eval_phi_grad(y, gphi) : domain.phi(y);
        if (phi <= 0.0) {
            if (want_grad) grad->setZero(d);
            return 0.0;
        }
        const double u = y.norm();
        const double a = 1.0 - smoothstep(u - R - 1.0);
        const double b = smoothstep(u - R);
        const double tphi = phi * a + b;
        const double w = smoothstep(tphi / eps);
        const double p = tphi + kappa * u * w;
        if (want_grad) {
            const Vec unit = u > 1e-300 ? Vec(y / u) : Vec(Vec::Zero(d));
            const double ap = -smoothstep_d1(u - R - 1.0);
            const double bp = smoothstep_d1(u - R);
            const Vec g_tphi = a * gphi + (phi * ap + bp) * unit;
            const double wp = smoothstep_d1(tphi / eps) / eps;
            *grad = g_tphi * (1.0 + kappa * u * wp) + (kappa * w) * unit;
        }
        return p;
    }
};

// Unit outward normal, extended by zero into the domain; grad psi direction
// outside, grad phi direction on the boundary band.
inline Vec outward_normal(const LevelSetDomain& dom, const PseudoDistance& pseudo,
                          const Vec& y, const GeometrySettings& gs = {}) {
    const double phi = dom.phi(y);
    if (phi < -gs.boundary_band) return Vec::Zero(dom.dim);
    if (phi <= gs.boundary_band) {
        const Vec g = dom.grad_phi(y);
        const double gn = g.norm();
        if (gn < dom.grad_floor * 0.5)
            throw DegenerateGradient("outward_normal: |grad phi| below floor on the boundary of " +
                                     dom.name);
        return g / gn;
    }
    Vec g(dom.dim);
    pseudo.psi_with_grad(y, g);
    const double gn = g.norm();
    if (gn < dom.grad_floor)
        throw DegenerateGradient("outward_normal: |grad psi| below grad_floor outside " +
                                 dom.name);
    return g / gn;
}

// ---------------------------------------------------------------------------
// Parameter search for (R, eps, kappa) with sampled verification of the
// pseudo-distance properties.
// ---------------------------------------------------------------------------

struct PseudoSearchBudget {
    int eps_halvings = 40;
    int kappa_doublings = 40;
    int band_samples = 2048;    // near-boundary exterior points
    int outside_samples = 2048; // general exterior points
    double margin_target = 1e-3;
};

inline PseudoDistance build_pseudo_distance(const LevelSetDomain& dom, const ConvexCore& core,
                                            const PseudoSearchBudget& budget = {},
                                            const GeometrySettings& gs = {}) {
    PseudoDistance ps;
    ps.domain = dom;
    ps.core = core;
    ps.R = dom.bounding_radius + 1.0;

    const int d = dom.dim;
    SplitMix64 rng(gs.seed, 41);

    // Exterior sample set: boundary points pushed outward by graded offsets,
    // plus box rejection points with phi > 0 up to |y| <= R + 2.
    std::vector<Vec> outside;
    outside.reserve(budget.band_samples + budget.outside_samples);
    std::vector<Vec> band;
    band.reserve(budget.band_samples);
    {
        const int nb = budget.band_samples;
        const std::vector<Vec> bnd = sample_boundary(dom, nb, rng, gs);
        for (int i = 0; i < nb; ++i) {
            const Vec g = dom.grad_phi(bnd[i]);
            const double t = std::pow(10.0, rng.uniform(-6.0, -0.5));
            Vec y = bnd[i] + t * g / g.norm();
            if (dom.phi(y) > 0.0) {
                band.push_back(y);
                outside.push_back(y);
            }
        }
        int guard = 0;
        while (static_cast<int>(outside.size()) <
                   budget.band_samples + budget.outside_samples &&
               guard++ < 10000000) {
            Vec y(d);
            for (int i = 0; i < d; ++i) y[i] = rng.uniform(-(ps.R + 2.0), ps.R + 2.0);
            if (dom.phi(y) > 0.0) outside.push_back(y);
        }
    }

    // eps search: phi(y) <= eps (outside, |y| <= R+1) must imply y in B_R and
    // grad_phi_c . grad_phi > 0.
    double eps = 1.0;
    bool eps_ok = false;
    for (int h = 0; h < budget.eps_halvings; ++h) {
        bool ok = true;
        for (const Vec& y : outside) {
            if (y.norm() > ps.R + 1.0) continue;
            if (dom.phi(y) > eps) continue;
            if (y.norm() > ps.R || core.grad_phi_c(y).dot(dom.grad_phi(y)) <= 0.0) {
                ok = false;
                break;
            }
        }
        if (ok) {
            eps_ok = true;
            break;
        }
        eps *= 0.5;
    }
    if (!eps_ok)
        throw ParameterSearchFailed(
            "build_pseudo_distance: no eps satisfies the band implication for " + dom.name);
    ps.eps = eps;

    // kappa search: positivity margin of grad_phi_c . grad_psi outside D.
    double kappa = 1.0;
    bool kappa_ok = false;
    double margin = 0.0;
    for (int h = 0; h < budget.kappa_doublings; ++h) {
        ps.kappa = kappa;
        margin = std::numeric_limits<double>::infinity();
        Vec g(d);
        for (const Vec& y : outside) {
            ps.psi_with_grad(y, g);
            margin = std::min(margin, core.grad_phi_c(y).dot(g));
        }
        if (margin >= budget.margin_target) {
            kappa_ok = true;
            break;
        }
        kappa *= 2.0;
    }
    if (!kappa_ok)
        throw ParameterSearchFailed(
            "build_pseudo_distance: positivity margin stayed below target for " + dom.name +
            " (weak star-shape condition is likely violated)");
    ps.positivity_margin = margin;

    // Certified comparability constants (band plus any exterior sample whose
    // projection converges), gradient bounds, and a sampled Hessian bound
    // used by the solver contraction diagnostics.
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const Vec& y : outside) {
        double dist;
        try {
            dist = distance_to_domain(dom, y, gs);
        } catch (const std::runtime_error&) {
            continue;  // saturated level sets far out have no usable gradient
        }
        if (dist < 1e-12) continue;
        const double r = ps.psi(y) / dist;
        lo = std::min(lo, r);
        hi = std::max(hi, r);
    }
    ps.comp_lo = lo;
    ps.comp_hi = hi;
    if (!(lo > 0.0))
        throw VerificationFailed("build_pseudo_distance: psi/d comparability failed for " +
                                 dom.name);

    double gmin = std::numeric_limits<double>::infinity(), gmax = 0.0, hsup = 0.0;
    Vec g(d);
    for (const Vec& y : outside) {
        ps.psi_with_grad(y, g);
        const double gn = g.norm();
        gmin = std::min(gmin, gn);
        gmax = std::max(gmax, gn);
    }
    for (const Vec& y : band) {
        Eigen::SelfAdjointEigenSolver<Mat> es(ps.hess_psi(y));
        hsup = std::max(hsup, es.eigenvalues().cwiseAbs().maxCoeff());
    }
    ps.min_grad_outside = gmin;
    ps.grad_sup = gmax;
    ps.hess_sup = hsup;
    if (!(gmin > 0.0))
        throw VerificationFailed("build_pseudo_distance: grad psi degenerates outside " +
                                 dom.name);
    return ps;
}

// Sampled bound C with z^T hess(psi^2)(y) z >= -C psi(y) |z|^2 outside D.
inline double check_hessian_psi_sq(const PseudoDistance& ps, int n_samples,
                                   std::uint64_t seed = 0x5eed0ULL,
                                   const GeometrySettings& gs = {}) {
    SplitMix64 rng(seed, 47);
    const int d = ps.domain.dim;
    double c_fit = 0.0;
    bool any = false;
    int produced = 0;
    int guard = 0;
    while (produced < n_samples && guard++ < 50 * n_samples) {
        Vec y = sample_boundary_point(ps.domain, rng, gs);
        const Vec gphi = ps.domain.grad_phi(y);
        y += std::pow(10.0, rng.uniform(-4.0, -0.5)) * gphi / gphi.norm();
        const double p = ps.psi(y);
        if (p <= 1e-12) continue;
        ++produced;
        const Vec z = rng.unit_vector(d);
        Vec gpsi(d);
        ps.psi_with_grad(y, gpsi);
        const Mat H = ps.hess_psi(y);
        const double q = 2.0 * std::pow(gpsi.dot(z), 2) + 2.0 * p * z.dot(H * z);
        any = true;
        if (q < 0.0) c_fit = std::max(c_fit, -q / p);
    }
    if (!any) return std::numeric_limits<double>::infinity();
    return c_fit;
}

}  // namespace rbsde
