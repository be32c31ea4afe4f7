#pragma once

#include <cmath>

namespace rbsde {

// ---------------------------------------------------------------------------
// C-infinity step: theta(x) = s(x) / (s(x) + s(1-x)) with s(x) = exp(-1/x)
// for x > 0 and s = 0 otherwise. Flat to all orders at 0 and 1, strictly
// increasing in between, and theta(x) + theta(1-x) = 1 identically.
// ---------------------------------------------------------------------------

namespace detail {

inline double bump(double x) { return x > 0.0 ? std::exp(-1.0 / x) : 0.0; }
inline double bump_d1(double x) { return x > 0.0 ? bump(x) / (x * x) : 0.0; }
inline double bump_d2(double x) {
    if (x <= 0.0) return 0.0;
    const double s = bump(x);
    return s * (1.0 - 2.0 * x) / (x * x * x * x);
}

}  // namespace detail

inline double smoothstep(double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double a = detail::bump(x);
    const double b = detail::bump(1.0 - x);
    return a / (a + b);
}

inline double smoothstep_d1(double x) {
    if (x <= 0.0 || x >= 1.0) return 0.0;
    const double a = detail::bump(x);
    const double b = detail::bump(1.0 - x);
    const double ad = detail::bump_d1(x);
    const double bd = -detail::bump_d1(1.0 - x);
    const double den = a + b;
    return (ad * b - a * bd) / (den * den);
}

inline double smoothstep_d2(double x) {
    if (x <= 0.0 || x >= 1.0) return 0.0;
    const double a = detail::bump(x);
    const double b = detail::bump(1.0 - x);
    const double ad = detail::bump_d1(x);
    const double bd = -detail::bump_d1(1.0 - x);
    const double add = detail::bump_d2(x);
    const double bdd = detail::bump_d2(1.0 - x);
    const double den = a + b;
    const double num = ad * b - a * bd;
    const double num_d = add * b - a * bdd;
    const double den_d = ad + bd;
    return (num_d * den - 2.0 * num * den_d) / (den * den * den);
}

// Quintic polynomial step (C^2 with zero first and second derivatives at the
// ends). Cheaper than the exponential step; used where C-infinity flatness
// is not required.
inline double quintic_step(double u) {
    if (u <= 0.0) return 0.0;
    if (u >= 1.0) return 1.0;
    return u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
}
inline double quintic_step_d1(double u) {
    if (u <= 0.0 || u >= 1.0) return 0.0;
    return 30.0 * u * u * (1.0 - u) * (1.0 - u);
}
inline double quintic_step_d2(double u) {
    if (u <= 0.0 || u >= 1.0) return 0.0;
    return 60.0 * u * (1.0 - u) * (1.0 - 2.0 * u);
}

// ---------------------------------------------------------------------------
// Convex C^2 ramp: value -eps/2 on (-inf, -eps], identity on [0, inf), and a
// convex polynomial bridge in between.  On [-eps, 0] with u = (x+eps)/eps the
// bridge is -eps/2 + eps*(2.5 u^4 - 3 u^5 + u^6); its second derivative is
// (30/eps) u^2 (1-u)^2 >= 0, so the ramp is globally convex and C^2 at both
// junctions.
// ---------------------------------------------------------------------------

struct SmoothRamp {
    double eps;

    explicit SmoothRamp(double eps_) : eps(eps_) {}

    double value(double x) const {
        if (x <= -eps) return -0.5 * eps;
        if (x >= 0.0) return x;
        const double u = (x + eps) / eps;
        const double u4 = u * u * u * u;
        return -0.5 * eps + eps * u4 * (2.5 + u * (-3.0 + u));
    }

    double d1(double x) const {
        if (x <= -eps) return 0.0;
        if (x >= 0.0) return 1.0;
        const double u = (x + eps) / eps;
        // integral of (30/eps) u^2(1-u)^2 times eps
        return u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
    }

    double d2(double x) const {
        if (x <= -eps || x >= 0.0) return 0.0;
        const double u = (x + eps) / eps;
        const double w = u * (1.0 - u);
        return 30.0 * w * w / eps;
    }
};

inline SmoothRamp rho_eps_bridge(double eps) { return SmoothRamp(eps); }

// ---------------------------------------------------------------------------
// C^3 saturating clamp used to flatten a signed distance away from the
// boundary: m(x) = x on [-w_id, w_id], constant for |x| >= w_id + w_tr,
// monotone C^3 in between (m'(x) = 1 - quintic_step((|x|-w_id)/w_tr)). The
// transition width w_tr controls the size of the higher derivatives.
// ---------------------------------------------------------------------------

struct SaturatingClamp {
    double w_id;
    double w_tr;

    explicit SaturatingClamp(double w) : w_id(w), w_tr(w) {}
    SaturatingClamp(double id, double tr) : w_id(id), w_tr(tr) {}

    double band() const { return w_id + w_tr; }
    double plateau() const { return w_id + 0.5 * w_tr; }

    double value(double x) const {
        const double ax = std::abs(x);
        const double sg = x < 0.0 ? -1.0 : 1.0;
        if (ax <= w_id) return x;
        if (ax >= band()) return sg * plateau();
        const double t = (ax - w_id) / w_tr;
        // w_id + w_tr * int_0^t (1 - quintic_step)
        const double t4 = t * t * t * t;
        const double integral = t - t4 * (2.5 + t * (-3.0 + t));
        return sg * (w_id + w_tr * integral);
    }

    double d1(double x) const {
        const double ax = std::abs(x);
        if (ax <= w_id) return 1.0;
        if (ax >= band()) return 0.0;
        return 1.0 - quintic_step((ax - w_id) / w_tr);
    }

    double d2(double x) const {
        const double ax = std::abs(x);
        if (ax <= w_id || ax >= band()) return 0.0;
        const double sg = x < 0.0 ? -1.0 : 1.0;
        return -sg * quintic_step_d1((ax - w_id) / w_tr) / w_tr;
    }
};

}  // namespace rbsde
