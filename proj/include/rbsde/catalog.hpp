#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "rbsde/curves.hpp"
#include "rbsde/geometry.hpp"
#include "rbsde/smooth.hpp"
#include "rbsde/types.hpp"

namespace rbsde {

struct DomainWithCore {
    LevelSetDomain domain;
    ConvexCore core;
};

// ---------------------------------------------------------------------------
// Ball: phi(y) = sqrt(|y|^2 + s^2) - sqrt(radius^2 + s^2), a C-infinity
// version of |y| - radius. Core is the centered ball of half the radius with
// the convex ramp level function.
// ---------------------------------------------------------------------------

inline DomainWithCore make_ball(double radius, int dim = 2) {
    if (radius <= 0.0) throw std::invalid_argument("make_ball: radius must be positive");
    // phi = q(|y|) - radius with q(r) = r away from the origin and a parabola
    // below r0/2, blended over [r0/2, r0]; exact distance form on the boundary.
    const double r0 = 0.5 * radius;

    auto eval = [r0, radius, dim](const Vec& y, Vec* grad, Mat* hess) {
        const double r = y.norm();
        const int d = dim;
        if (r >= r0) {
            if (grad) *grad = y / r;
            if (hess) *hess = (Mat::Identity(d, d) - y * y.transpose() / (r * r)) / r;
            return r - radius;
        }
        const double pb = r * r / (2.0 * r0) + 0.5 * r0;
        const Vec gb = y / r0;
        if (r <= 0.5 * r0) {
            if (grad) *grad = gb;
            if (hess) *hess = Mat::Identity(d, d) / r0;
            return pb - radius;
        }
        const double u = (r - 0.5 * r0) / (0.5 * r0);
        const double w = smoothstep(u);
        const double wp = smoothstep_d1(u) / (0.5 * r0);
        const double wpp = smoothstep_d2(u) / (0.25 * r0 * r0);
        const double delta = r - pb;
        const double val = pb + w * delta - radius;
        if (grad || hess) {
            const Vec yhat = y / r;
            const Vec gd = yhat - gb;
            if (grad) *grad = gb + w * gd + delta * wp * yhat;
            if (hess) {
                const Mat P = (Mat::Identity(d, d) - yhat * yhat.transpose()) / r;
                const Mat Hd = P - Mat::Identity(d, d) / r0;
                const Mat Hw = wpp * yhat * yhat.transpose() + wp * P;
                *hess = Mat::Identity(d, d) / r0 + w * Hd +
                        wp * (yhat * gd.transpose() + gd * yhat.transpose()) + delta * Hw;
            }
        }
        return val;
    };

    DomainWithCore out;
    LevelSetDomain& dom = out.domain;
    dom.dim = dim;
    dom.name = "ball";
    dom.phi = [eval](const Vec& y) { return eval(y, nullptr, nullptr); };
    dom.grad_phi = [eval, dim](const Vec& y) {
        Vec g(dim);
        eval(y, &g, nullptr);
        return g;
    };
    dom.hess_phi = [eval, dim](const Vec& y) {
        Mat H(dim, dim);
        eval(y, nullptr, &H);
        return H;
    };
    dom.phi_with_grad = [eval, dim](const Vec& y, Vec& g) { return eval(y, &g, nullptr); };
    dom.boundary_sampler = [radius, dim](SplitMix64& rng) {
        return Vec(radius * rng.unit_vector(dim));
    };
    dom.bounding_radius = radius + 2.0;
    dom.grad_floor = 0.999;

    const double lam = 0.5 * radius;
    const SmoothRamp ramp(lam);
    out.core.phi_c = [=](const Vec& y) { return ramp.value(y.norm() - lam); };
    out.core.grad_phi_c = [=, d = dim](const Vec& y) {
        const double r = y.norm();
        if (r < 1e-300) return Vec(Vec::Zero(d));
        return Vec((ramp.d1(r - lam) / r) * y);
    };
    out.core.contains_origin = true;
    out.core.ball_radius = lam;
    return out;
}

// ---------------------------------------------------------------------------
// Polar star: planar domain r < rho(t) around `offset`, rho given by a
// truncated cosine series. Strictly star-shaped w.r.t. the origin is
// required (checked on a dense boundary sweep). The level function is
// analytic away from the center and blended into a smooth paraboloid there.
// ---------------------------------------------------------------------------

struct PolarStarSpec {
    std::vector<double> cos_coeffs;  // rho(t) = c0 + sum_k c_k cos(k t)
    Eigen::Vector2d offset = Eigen::Vector2d::Zero();
    double core_radius = 0.0;  // 0 = auto: half the minimal boundary norm
};

struct PolarStarDomain {
    LevelSetDomain domain;
    ConvexCore core;
    double star_margin = 0.0;
    double core_radius = 0.0;
};

namespace detail {

struct PolarRho {
    std::vector<double> c;
    double operator()(double t) const {
        double v = c.empty() ? 0.0 : c[0];
        for (size_t k = 1; k < c.size(); ++k) v += c[k] * std::cos(k * t);
        return v;
    }
    double d1(double t) const {
        double v = 0.0;
        for (size_t k = 1; k < c.size(); ++k) v -= c[k] * double(k) * std::sin(k * t);
        return v;
    }
    double d2(double t) const {
        double v = 0.0;
        for (size_t k = 1; k < c.size(); ++k)
            v -= c[k] * double(k * k) * std::cos(k * t);
        return v;
    }
};

}  // namespace detail

inline PolarStarDomain make_polar_star(const PolarStarSpec& spec) {
    detail::PolarRho rho{spec.cos_coeffs};

    double rho_min = std::numeric_limits<double>::infinity(), rho_max = 0.0;
    for (int i = 0; i < 4096; ++i) {
        const double t = 2.0 * M_PI * i / 4096;
        rho_min = std::min(rho_min, rho(t));
        rho_max = std::max(rho_max, rho(t));
    }
    if (!(rho_min > 0.0))
        throw InfeasibleSpec("make_polar_star: rho must stay positive");

    const Eigen::Vector2d c0 = spec.offset;
    const double ra = 0.3 * rho_min, rb = 0.6 * rho_min;

    auto eval = [rho, c0, ra, rb, rho_min](const Vec& y, Vec* grad, Mat* hess) {
        const Eigen::Vector2d z(y[0] - c0.x(), y[1] - c0.y());
        const double r = z.norm();
        Vec g(2);
        Mat H(2, 2);
        if (r >= rb) {
            const double t = std::atan2(z.y(), z.x());
            const double p = r - rho(t);
            if (grad || hess) {
                const Eigen::Vector2d zhat = z / r;
                const Eigen::Vector2d gt(-z.y() / (r * r), z.x() / (r * r));
                const Eigen::Vector2d gv = zhat - rho.d1(t) * gt;
                if (grad) { (*grad)[0] = gv.x(); (*grad)[1] = gv.y(); }
                if (hess) {
                    Eigen::Matrix2d Ht;
                    const double r4 = r * r * r * r;
                    Ht << 2.0 * z.x() * z.y(), z.y() * z.y() - z.x() * z.x(),
                          z.y() * z.y() - z.x() * z.x(), -2.0 * z.x() * z.y();
                    Ht /= r4;
                    Eigen::Matrix2d Hv =
                        (Eigen::Matrix2d::Identity() - zhat * zhat.transpose()) / r -
                        rho.d2(t) * gt * gt.transpose() - rho.d1(t) * Ht;
                    *hess = Hv;
                }
            }
            return p;
        }
        // smooth patch near the center, blended over [ra, rb]
        const double pb = r * r / (2.0 * rb) - 0.5 * rho_min;
        Eigen::Vector2d gb = z / rb;
        Eigen::Matrix2d Hb = Eigen::Matrix2d::Identity() / rb;
        if (r <= ra) {
            if (grad) { (*grad)[0] = gb.x(); (*grad)[1] = gb.y(); }
            if (hess) *hess = Hb;
            return pb;
        }
        // blend region: both branches are smooth here
        const double t = std::atan2(z.y(), z.x());
        const double pa = r - rho(t);
        const Eigen::Vector2d zhat = z / r;
        const Eigen::Vector2d gt(-z.y() / (r * r), z.x() / (r * r));
        const Eigen::Vector2d ga = zhat - rho.d1(t) * gt;
        const double u = (r - ra) / (rb - ra);
        const double w = smoothstep(u);
        const double wp = smoothstep_d1(u) / (rb - ra);
        const double wpp = smoothstep_d2(u) / ((rb - ra) * (rb - ra));
        const double p = pb + w * (pa - pb);
        if (grad) {
            const Eigen::Vector2d gv = gb + w * (ga - gb) + (pa - pb) * wp * zhat;
            (*grad)[0] = gv.x();
            (*grad)[1] = gv.y();
        }
        if (hess) {
            Eigen::Matrix2d Ha;
            const double r4 = r * r * r * r;
            Eigen::Matrix2d Ht;
            Ht << 2.0 * z.x() * z.y(), z.y() * z.y() - z.x() * z.x(),
                  z.y() * z.y() - z.x() * z.x(), -2.0 * z.x() * z.y();
            Ht /= r4;
            Ha = (Eigen::Matrix2d::Identity() - zhat * zhat.transpose()) / r -
                 rho.d2(t) * gt * gt.transpose() - rho.d1(t) * Ht;
            Eigen::Matrix2d P = (Eigen::Matrix2d::Identity() - zhat * zhat.transpose()) / r;
            Eigen::Matrix2d Hw = wpp * zhat * zhat.transpose() + wp * P;
            Eigen::Vector2d dD = ga - gb;
            *hess = Hb + w * (Ha - Hb) + wp * (zhat * dD.transpose() + dD * zhat.transpose()) +
                    (pa - pb) * Hw;
        }
        return p;
    };

    PolarStarDomain out;
    LevelSetDomain& dom = out.domain;
    dom.dim = 2;
    dom.name = "polar_star";
    dom.phi = [eval](const Vec& y) { return eval(y, nullptr, nullptr); };
    dom.grad_phi = [eval](const Vec& y) {
        Vec g(2);
        eval(y, &g, nullptr);
        return g;
    };
    dom.hess_phi = [eval](const Vec& y) {
        Mat H(2, 2);
        eval(y, nullptr, &H);
        return H;
    };
    dom.phi_with_grad = [eval](const Vec& y, Vec& g) { return eval(y, &g, nullptr); };
    dom.boundary_sampler = [rho, c0](SplitMix64& rng) {
        const double t = rng.uniform(0.0, 2.0 * M_PI);
        Vec y(2);
        y[0] = c0.x() + rho(t) * std::cos(t);
        y[1] = c0.y() + rho(t) * std::sin(t);
        return y;
    };

    double min_bnorm = std::numeric_limits<double>::infinity(), max_bnorm = 0.0;
    double margin = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 8192; ++i) {
        const double t = 2.0 * M_PI * i / 8192;
        Vec y(2);
        y[0] = c0.x() + rho(t) * std::cos(t);
        y[1] = c0.y() + rho(t) * std::sin(t);
        min_bnorm = std::min(min_bnorm, y.norm());
        max_bnorm = std::max(max_bnorm, y.norm());
        Vec g(2);
        eval(y, &g, nullptr);
        margin = std::min(margin, y.dot(g) / (y.norm() * g.norm()));
    }
    out.star_margin = margin;
    Vec origin = Vec::Zero(2);
    if (dom.phi(origin) >= 0.0 || margin <= 0.0)
        throw NotStarShaped("make_polar_star: strict star-shape margin is " +
                            std::to_string(margin));

    dom.bounding_radius = max_bnorm + 2.0;
    dom.grad_floor = 0.99;

    const double eps_core =
        spec.core_radius > 0.0 ? spec.core_radius : 0.5 * min_bnorm;
    if (eps_core >= min_bnorm)
        throw InfeasibleSpec("make_polar_star: core radius does not fit in the domain");
    const SmoothRamp ramp(eps_core);
    out.core.phi_c = [=](const Vec& y) { return ramp.value(y.norm() - eps_core); };
    out.core.grad_phi_c = [=](const Vec& y) {
        const double r = y.norm();
        if (r < 1e-300) return Vec(Vec::Zero(2));
        return Vec((ramp.d1(r - eps_core) / r) * y);
    };
    out.core.contains_origin = true;
    out.core.ball_radius = eps_core;
    out.core_radius = eps_core;
    return out;
}

// ---------------------------------------------------------------------------
// Sector domain: the crescent between two concentric arcs (inner radius 1,
// outer radius (2 sin a + 2 eta + 1)/cos a around the circle center), closed
// by two C^2 connecting curves built from an intrinsic curvature profile and
// represented as quintic splines. Coordinates are chosen so the origin sits
// at the center of the rounded-square core; the circle center is then at
// (0, 1 + sin a + eta).
// ---------------------------------------------------------------------------

struct SectorDomainSpec {
    double alpha = M_PI / 4.0;  // half opening angle, in (0, pi/2)
    double eta = 0.2;
    double eps_corner = 0.15;   // polar extent of the peel-off piece, in (0, pi/2 - alpha)
    int spline_segments = 32;   // quintic segments per connecting curve
    int integration_steps = 4096;
    double clamp_width = 0.15;  // signed-distance saturation half-band
    double return_length_scale = 1.0;  // initial guess knob for the return curve
};

struct SectorArcs {
    Eigen::Vector2d circle_center;
    double alpha = 0.0;
    double outer_radius = 0.0;
    std::vector<Eigen::Vector2d> s_alpha_eps;  // polyline of the extended inner arc
    std::vector<Eigen::Vector2d> a_hull;       // convex hull of s_alpha_eps
};

struct SectorDomain {
    LevelSetDomain domain;
    ConvexCore core;
    SectorArcs arcs;
    std::function<Vec(SplitMix64&)> inner_arc_sampler;
    std::shared_ptr<curves::ClosedCurve> boundary;
    double clamp_width = 0.0;
    double return_curvature_peak = 0.0;
};

namespace detail {

// Signed distance to the rounded square (half side `lam`, corner radius
// `eta`) centered at the origin; exact and convex.
inline double rounded_square_sd(const Eigen::Vector2d& y, double lam, double eta,
                                Eigen::Vector2d* grad) {
    const double b = lam - eta;
    const double q1 = std::abs(y.x()) - b;
    const double q2 = std::abs(y.y()) - b;
    const double s1 = y.x() < 0.0 ? -1.0 : 1.0;
    const double s2 = y.y() < 0.0 ? -1.0 : 1.0;
    if (q1 > 0.0 || q2 > 0.0) {
        const Eigen::Vector2d v(std::max(q1, 0.0), std::max(q2, 0.0));
        const double n = v.norm();
        if (grad) *grad = Eigen::Vector2d(s1 * v.x() / n, s2 * v.y() / n);
        return n - eta;
    }
    if (grad) *grad = q1 >= q2 ? Eigen::Vector2d(s1, 0.0) : Eigen::Vector2d(0.0, s2);
    return std::max(q1, q2) - eta;
}

struct ReturnProfile {
    double h = 0.5;     // plateau height of the curvature profile
    double skew = 1.0;  // exponent reshaping the arc-length map
    double length = 1.0;
    double tail = 0.0;  // terminal curvature magnitude (1/outer radius)
    static constexpr double ramp = 0.12;

    // table-top profile: rises from 0, holds at -h, hands over to the
    // terminal value -tail; flat (zero slope) at both ends
    double kappa(double sigma) const {
        const double u = std::clamp(sigma / length, 0.0, 1.0);
        const double v = std::pow(u, skew);
        const double up = quintic_step(v / ramp);
        const double down = 1.0 - quintic_step((v - (1.0 - 2.0 * ramp)) / ramp);
        const double end = quintic_step((v - (1.0 - 2.0 * ramp)) / (2.0 * ramp));
        return -(h * up * down + tail * end);
    }
};

}  // namespace detail

inline SectorDomain make_sector_domain(const SectorDomainSpec& spec) {
    using Eigen::Vector2d;
    const double alpha = spec.alpha, eta = spec.eta, epsc = spec.eps_corner;
    if (!(alpha > 0.0 && alpha < M_PI / 2.0))
        throw InfeasibleSpec("make_sector_domain: alpha outside (0, pi/2)");
    if (!(eta > 0.0)) throw InfeasibleSpec("make_sector_domain: eta must be positive");
    if (!(epsc > 0.0 && epsc < M_PI / 2.0 - alpha))
        throw InfeasibleSpec("make_sector_domain: eps_corner outside (0, pi/2 - alpha)");

    const double lam = std::sin(alpha) + eta;
    const Vector2d op(0.0, 1.0 + lam);  // circle center in the shifted frame
    const double r_out = (1.0 + 2.0 * lam) / std::cos(alpha);
    const double beta1 = alpha - M_PI / 2.0;
    const double beta2 = -alpha - M_PI / 2.0;
    auto on_circle = [&](double beta, double radius) {
        return Vector2d(op.x() + radius * std::cos(beta), op.y() + radius * std::sin(beta));
    };
    const Vector2d a1 = on_circle(beta1, 1.0);
    const Vector2d p1 = on_circle(beta1, r_out);

    // --- peel-off piece (reverse orientation, starting at A1 tangent to the
    // inner circle): curvature eases from +1 to 0; its length is fitted so
    // the piece spans polar angle eps_corner beyond A1.
    auto peel_kappa = [](double sigma, double len) {
        return 1.0 - quintic_step(sigma / len);
    };
    auto peel_end = [&](double len) {
        auto c = curves::integrate_intrinsic(
            a1, alpha, len, [&](double s) { return peel_kappa(s, len); }, 512);
        return c.pos.back();
    };
    auto polar_of = [&](const Vector2d& p) {
        const Vector2d rel = p - op;
        return std::atan2(rel.y(), rel.x());
    };
    double lo = 0.2 * epsc, hi = 6.0 * epsc;
    if (polar_of(peel_end(hi)) - (beta1 + epsc) < 0.0)
        throw InfeasibleSpec("make_sector_domain: peel-off bracketing failed");
    for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (polar_of(peel_end(mid)) - (beta1 + epsc) < 0.0) lo = mid; else hi = mid;
    }
    const double len_a = 0.5 * (lo + hi);
    const double theta_b = alpha + 0.5 * len_a;  // integral of the peel profile

    // --- return piece: curvature bump + tail, shot so the curve lands on P1
    // with the outer-arc tangent and curvature.
    auto rev_endpoint = [&](const detail::ReturnProfile& prof, int steps) {
        auto full_kappa = [&](double s) {
            return s <= len_a ? peel_kappa(s, len_a) : prof.kappa(s - len_a);
        };
        return curves::integrate_intrinsic(a1, alpha, len_a + prof.length, full_kappa,
                                           steps);
    };
    const double theta_target = alpha - M_PI;
    auto residual = [&](const detail::ReturnProfile& prof, Eigen::Vector3d& r) {
        auto c = rev_endpoint(prof, 1600);
        r[0] = c.pos.back().x() - p1.x();
        r[1] = c.pos.back().y() - p1.y();
        r[2] = c.theta.back() - theta_target;
    };

    detail::ReturnProfile prof;
    prof.tail = 1.0 / r_out;
    const double chord = (p1 - on_circle(beta1 + epsc, 1.0)).norm();
    const double len0 = spec.return_length_scale * 1.25 * (M_PI / 2.0) * chord;
    bool solved = false;
    for (double lscale : {1.0, 0.75, 1.4, 2.0}) {
        for (double skew0 : {1.0, 0.7, 1.5}) {
            detail::ReturnProfile trial;
            trial.tail = prof.tail;
            trial.skew = skew0;
            trial.length = len0 * lscale;
            // initial plateau height from the turning budget
            const double w_plateau = 1.0 - 2.0 * detail::ReturnProfile::ramp;
            const double w_tail = detail::ReturnProfile::ramp;
            const double dtheta = theta_target - theta_b;
            trial.h = (-dtheta - w_tail * trial.length * trial.tail) /
                      (w_plateau * trial.length);
            if (!(trial.h > 0.02 && trial.h < 1.5)) continue;
            // damped Newton on (log h, log skew, log length)
            Eigen::Vector3d x(std::log(trial.h), std::log(trial.skew),
                              std::log(trial.length));
            Eigen::Vector3d r;
            auto unpack = [&](const Eigen::Vector3d& v) {
                detail::ReturnProfile p = trial;
                p.h = std::exp(v[0]);
                p.skew = std::exp(v[1]);
                p.length = std::exp(v[2]);
                return p;
            };
            residual(unpack(x), r);
            for (int it = 0; it < 80 && r.norm() > 1e-11; ++it) {
                Eigen::Matrix3d J;
                const double fd = 1e-7;
                for (int j = 0; j < 3; ++j) {
                    Eigen::Vector3d xp = x;
                    xp[j] += fd;
                    Eigen::Vector3d rp;
                    residual(unpack(xp), rp);
                    J.col(j) = (rp - r) / fd;
                }
                Eigen::Vector3d step = J.fullPivLu().solve(-r);
                double a_damp = 1.0;
                for (int k = 0; k < 30; ++k) {
                    Eigen::Vector3d rn;
                    residual(unpack(x + a_damp * step), rn);
                    if (rn.norm() < r.norm()) {
                        x += a_damp * step;
                        r = rn;
                        break;
                    }
                    a_damp *= 0.5;
                    if (k == 29) it = 80;
                }
            }
            if (r.norm() <= 1e-10) {
                detail::ReturnProfile cand = unpack(x);
                double kmax = 0.0;
                for (int i = 0; i <= 400; ++i)
                    kmax = std::max(kmax, std::abs(cand.kappa(cand.length * i / 400.0)));
                if (kmax <= 0.985) {
                    prof = cand;
                    solved = true;
                    break;
                }
            }
        }
        if (solved) break;
    }
    if (!solved)
        throw InfeasibleSpec("make_sector_domain: connecting-curve shooting failed");

    // --- final high-resolution integration and spline fit
    auto full_curve = rev_endpoint(prof, spec.integration_steps);
    auto l1_ccw = curves::reverse_curve(full_curve);   // P1 -> A1
    auto l2_ccw = curves::mirror_curve(full_curve);    // A2 -> P2

    curves::KnotState p1_state{p1, alpha, 1.0 / r_out};
    curves::KnotState a1_state{a1, alpha + M_PI, -1.0};
    curves::KnotState a2_state{Vector2d(-a1.x(), a1.y()), -alpha + M_PI, -1.0};
    curves::KnotState p2_state{Vector2d(-p1.x(), p1.y()), -alpha, 1.0 / r_out};

    auto seg_l1 = curves::fit_quintic_spline(l1_ccw, spec.spline_segments, &p1_state,
                                             &a1_state);
    auto seg_l2 = curves::fit_quintic_spline(l2_ccw, spec.spline_segments, &a2_state,
                                             &p2_state);

    auto boundary = std::make_shared<curves::ClosedCurve>();
    boundary->add_arc({op, r_out, beta2, beta1});  // outer arc, ccw
    for (const auto& s : seg_l1) boundary->add_quintic(s);
    boundary->add_arc({op, 1.0, beta1, beta2});    // inner arc, cw around op
    for (const auto& s : seg_l2) boundary->add_quintic(s);
    boundary->finalize(48);

    double pos_err, tan_err, kappa_err;
    boundary->join_errors(pos_err, tan_err, kappa_err);
    if (pos_err > 1e-7 || tan_err > 1e-6 || kappa_err > 1e-4)
        throw InfeasibleSpec("make_sector_domain: boundary joins are not C^2 (pos " +
                             std::to_string(pos_err) + ", tan " + std::to_string(tan_err) +
                             ", kappa " + std::to_string(kappa_err) + ")");
    if (boundary->signed_area() <= 0.0)
        throw InfeasibleSpec("make_sector_domain: boundary orientation flipped");

    // keep the saturation band clear of medial points: the narrowest passage
    // has half-width clearance/2, the tightest focal distance is 1 (inner arc).
    // A wide transition keeps the clamp's higher derivatives small enough for
    // O(h^2) finite-difference checks of the Hessian.
    const double clearance = boundary->min_self_clearance(0.8);
    const double budget = std::min(0.4, 0.425 * clearance);
    const double w_tr = std::min(0.3, 0.75 * budget);
    const double w_id = std::min(spec.clamp_width, budget - w_tr);
    if (w_id < 1e-3)
        throw InfeasibleSpec("make_sector_domain: boundary self-clearance too small");
    const SaturatingClamp clamp(w_id, w_tr);

    SectorDomain out;
    out.boundary = boundary;
    out.clamp_width = w_id;
    out.return_curvature_peak = prof.h;

    LevelSetDomain& dom = out.domain;
    dom.dim = 2;
    dom.name = "sector";
    auto eval = [boundary, clamp](const Vec& y, Vec* grad, Mat* hess) {
        const curves::ClosestPoint cp = boundary->closest(Vector2d(y[0], y[1]));
        const double sd = cp.signed_dist;
        if (grad) {
            const double m1 = clamp.d1(sd);
            (*grad)[0] = m1 * cp.outward_normal.x();
            (*grad)[1] = m1 * cp.outward_normal.y();
        }
        if (hess) {
            const double m1 = clamp.d1(sd);
            const double m2 = clamp.d2(sd);
            Mat H(2, 2);
            H.setZero();
            if (m1 != 0.0 || m2 != 0.0) {
                Eigen::Matrix2d nn = Eigen::Matrix2d::Zero(), tt = Eigen::Matrix2d::Zero();
                nn = cp.outward_normal * cp.outward_normal.transpose();
                tt = cp.tangent * cp.tangent.transpose();
                const double curv = cp.kappa / (1.0 + sd * cp.kappa);
                Eigen::Matrix2d Hd = m2 * nn + m1 * curv * tt;
                H(0, 0) = Hd(0, 0);
                H(0, 1) = Hd(0, 1);
                H(1, 0) = Hd(1, 0);
                H(1, 1) = Hd(1, 1);
            }
            // hess output through pointer
            *hess = H;
        }
        return clamp.value(sd);
    };
    dom.phi = [eval](const Vec& y) { return eval(y, nullptr, nullptr); };
    dom.grad_phi = [eval](const Vec& y) {
        Vec g(2);
        eval(y, &g, nullptr);
        return g;
    };
    dom.hess_phi = [eval](const Vec& y) {
        Mat H(2, 2);
        eval(y, nullptr, &H);
        return H;
    };
    dom.phi_with_grad = [eval](const Vec& y, Vec& g) { return eval(y, &g, nullptr); };
    dom.bounding_radius = boundary->max_extent() + 2.0;
    dom.grad_floor = 0.999;

    // length-weighted sampler over the boundary polyline (points lie exactly
    // on the curve)
    {
        const auto& poly = boundary->polyline();
        auto cum = std::make_shared<std::vector<double>>(poly.size() + 1, 0.0);
        for (size_t i = 0; i < poly.size(); ++i)
            (*cum)[i + 1] = (*cum)[i] + (poly[(i + 1) % poly.size()] - poly[i]).norm();
        auto poly_copy = std::make_shared<std::vector<Vector2d>>(poly);
        dom.boundary_sampler = [cum, poly_copy](SplitMix64& rng) {
            const double target = rng.uniform(0.0, cum->back());
            const auto it = std::upper_bound(cum->begin(), cum->end(), target);
            size_t i = std::min(poly_copy->size() - 1,
                                static_cast<size_t>(it - cum->begin()) - 1);
            const Vector2d& a = (*poly_copy)[i];
            const Vector2d& b = (*poly_copy)[(i + 1) % poly_copy->size()];
            const double seg = (*cum)[i + 1] - (*cum)[i];
            const double u = seg > 0.0 ? (target - (*cum)[i]) / seg : 0.0;
            const Vector2d p = a + u * (b - a);
            Vec y(2);
            y << p.x(), p.y();
            return y;
        };
    }
    out.inner_arc_sampler = [op, beta1, beta2](SplitMix64& rng) {
        const double b = rng.uniform(beta2, beta1);
        Vec y(2);
        y << op.x() + std::cos(b), op.y() + std::sin(b);
        return y;
    };

    // rounded-square core (exact signed distance, convex)
    out.core.phi_c = [lam, eta](const Vec& y) {
        return detail::rounded_square_sd(Vector2d(y[0], y[1]), lam, eta, nullptr);
    };
    out.core.grad_phi_c = [lam, eta](const Vec& y) {
        Eigen::Vector2d g;
        detail::rounded_square_sd(Vector2d(y[0], y[1]), lam, eta, &g);
        Vec out_g(2);
        out_g << g.x(), g.y();
        return out_g;
    };
    out.core.contains_origin = true;

    // construction checks: the core stays inside the domain and inside the
    // triangle P1-center-P2
    {
        auto core_boundary_point = [&](double t) {
            // parameterize the rounded square by angle, correct onto phi_c = 0
            Vector2d dir(std::cos(t), std::sin(t));
            double lo_r = 0.0, hi_r = 2.0 * lam;
            for (int it = 0; it < 60; ++it) {
                const double mid = 0.5 * (lo_r + hi_r);
                if (detail::rounded_square_sd(mid * dir, lam, eta, nullptr) < 0.0)
                    lo_r = mid;
                else
                    hi_r = mid;
            }
            return Vector2d(0.5 * (lo_r + hi_r) * dir);
        };
        const Vector2d p2(-p1.x(), p1.y());
        auto left_of = [](const Vector2d& a, const Vector2d& b, const Vector2d& c) {
            return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
        };
        for (int i = 0; i < 256; ++i) {
            const Vector2d c = core_boundary_point(2.0 * M_PI * i / 256);
            Vec cv(2);
            cv << c.x(), c.y();
            if (dom.phi(cv) > 1e-9)
                throw InfeasibleSpec("make_sector_domain: core escapes the domain");
            const double tol = -1e-9;
            if (left_of(op, p2, c) < tol || left_of(p2, p1, c) < tol ||
                left_of(p1, op, c) < tol)
                throw InfeasibleSpec(
                    "make_sector_domain: core is not inside the center triangle (eta too large)");
        }
        Vec origin = Vec::Zero(2);
        if (dom.phi(origin) >= 0.0)
            throw InfeasibleSpec("make_sector_domain: core center left the domain");
        Vec opv(2);
        opv << op.x(), op.y();
        if (dom.phi(opv) <= 0.0)
            throw InfeasibleSpec("make_sector_domain: circle center swallowed by the domain");
    }

    // arc descriptors
    out.arcs.circle_center = op;
    out.arcs.alpha = alpha;
    out.arcs.outer_radius = r_out;
    {
        auto& pl = out.arcs.s_alpha_eps;
        const int m = 256;
        std::vector<Vector2d> peel;
        {
            auto c = curves::integrate_intrinsic(
                a1, alpha, len_a, [&](double s) { return peel_kappa(s, len_a); }, m);
            peel = c.pos;
        }
        for (auto it = peel.rbegin(); it != peel.rend(); ++it)
            pl.push_back(Vector2d(-it->x(), it->y()));  // mirrored peel: B2 -> A2
        for (int i = 1; i <= m; ++i) {
            const double b = beta2 + (beta1 - beta2) * double(i) / m;
            pl.push_back(on_circle(b, 1.0));
        }
        for (size_t i = 1; i < peel.size(); ++i) pl.push_back(peel[i]);  // A1 -> B1
        // convex hull (monotone chain)
        std::vector<Vector2d> pts = pl;
        std::sort(pts.begin(), pts.end(), [](const Vector2d& a, const Vector2d& b) {
            return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
        });
        auto cross = [](const Vector2d& o, const Vector2d& a, const Vector2d& b) {
            return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
        };
        std::vector<Vector2d> hull(2 * pts.size());
        int k = 0;
        for (size_t i = 0; i < pts.size(); ++i) {
            while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) k--;
            hull[k++] = pts[i];
        }
        const int lower = k + 1;
        for (int i = static_cast<int>(pts.size()) - 2; i >= 0; i--) {
            while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) k--;
            hull[k++] = pts[i];
        }
        hull.resize(k - 1);
        out.arcs.a_hull = hull;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Revolution of a planar domain (even in its first coordinate) to dimension
// d: phi_d(y) = phi_2((r(y), y_d)) with r(y) = |(y_1, ..., y_{d-1})|.
// ---------------------------------------------------------------------------

inline LevelSetDomain revolve_to_dim(const LevelSetDomain& planar, int d) {
    if (planar.dim != 2)
        throw std::invalid_argument("revolve_to_dim: planar input must be 2-d");
    if (d < 2 || d > kMaxDim)
        throw std::invalid_argument("revolve_to_dim: dimension out of range");
    if (d == 2) return planar;

    {
        SplitMix64 rng(0xABCDEFULL);
        for (int i = 0; i < 32; ++i) {
            Vec p(2);
            p << rng.uniform(-planar.bounding_radius, planar.bounding_radius),
                rng.uniform(-planar.bounding_radius, planar.bounding_radius);
            Vec q(2);
            q << -p[0], p[1];
            if (std::abs(planar.phi(p) - planar.phi(q)) > 1e-12)
                throw std::invalid_argument(
                    "revolve_to_dim: planar domain is not symmetric in its first coordinate");
        }
    }

    auto planar_ptr = std::make_shared<LevelSetDomain>(planar);
    auto split = [d](const Vec& y, double& r, Vec& axis_part) {
        axis_part = y.head(d - 1);
        r = axis_part.norm();
    };

    LevelSetDomain out;
    out.dim = d;
    out.name = planar.name + "_rev" + std::to_string(d);
    out.bounding_radius = planar.bounding_radius;
    out.grad_floor = planar.grad_floor;
    out.phi = [planar_ptr, split](const Vec& y) {
        double r;
        Vec ax;
        split(y, r, ax);
        Vec p(2);
        p << r, y[y.size() - 1];
        return planar_ptr->phi(p);
    };
    out.grad_phi = [planar_ptr, split, d](const Vec& y) {
        double r;
        Vec ax;
        split(y, r, ax);
        Vec p(2);
        p << r, y[d - 1];
        const Vec g2 = planar_ptr->grad_phi(p);
        Vec g(d);
        if (r > 1e-12) {
            g.head(d - 1) = (g2[0] / r) * ax;
        } else {
            g.head(d - 1).setZero();
        }
        g[d - 1] = g2[1];
        return g;
    };
    out.hess_phi = [planar_ptr, split, d](const Vec& y) {
        double r;
        Vec ax;
        split(y, r, ax);
        Vec p(2);
        p << r, y[d - 1];
        const Vec g2 = planar_ptr->grad_phi(p);
        const Mat H2 = planar_ptr->hess_phi(p);
        Mat H = Mat::Zero(d, d);
        if (r > 1e-7) {
            const Vec u = ax / r;
            H.topLeftCorner(d - 1, d - 1) =
                H2(0, 0) * u * u.transpose() +
                (g2[0] / r) * (Mat::Identity(d - 1, d - 1) - u * u.transpose());
            H.topRightCorner(d - 1, 1) = H2(0, 1) * u;
            H.bottomLeftCorner(1, d - 1) = H2(0, 1) * u.transpose();
        } else {
            // on the axis the transverse block tends to phi_rr * I
            H.topLeftCorner(d - 1, d - 1) = H2(0, 0) * Mat::Identity(d - 1, d - 1);
        }
        H(d - 1, d - 1) = H2(1, 1);
        return H;
    };
    if (planar.boundary_sampler) {
        out.boundary_sampler = [planar_ptr, d](SplitMix64& rng) {
            Vec p = planar_ptr->boundary_sampler(rng);
            const Vec dir = rng.unit_vector(d - 1);
            Vec y(d);
            y.head(d - 1) = std::abs(p[0]) * dir;
            y[d - 1] = p[1];
            return y;
        };
    }
    return out;
}

inline ConvexCore revolve_core(const ConvexCore& planar_core, int d) {
    if (d == 2) return planar_core;
    auto core_ptr = std::make_shared<ConvexCore>(planar_core);
    ConvexCore out;
    out.contains_origin = planar_core.contains_origin;
    out.ball_radius = planar_core.ball_radius;
    out.phi_c = [core_ptr, d](const Vec& y) {
        Vec p(2);
        p << y.head(d - 1).norm(), y[d - 1];
        return core_ptr->phi_c(p);
    };
    out.grad_phi_c = [core_ptr, d](const Vec& y) {
        const Vec ax = y.head(d - 1);
        const double r = ax.norm();
        Vec p(2);
        p << r, y[d - 1];
        const Vec g2 = core_ptr->grad_phi_c(p);
        Vec g(d);
        if (r > 1e-12)
            g.head(d - 1) = (g2[0] / r) * ax;
        else
            g.head(d - 1).setZero();
        g[d - 1] = g2[1];
        return g;
    };
    return out;
}

}  // namespace rbsde
