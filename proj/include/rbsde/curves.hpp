#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <variant>
#include <vector>

#include "rbsde/smooth.hpp"
#include "rbsde/types.hpp"

namespace rbsde::curves {

using Vec2 = Eigen::Vector2d;

inline double wrap_angle(double a) {
    while (a > M_PI) a -= 2.0 * M_PI;
    while (a <= -M_PI) a += 2.0 * M_PI;
    return a;
}

// A point on an oriented planar curve. `tangent` is the unit tangent in the
// traversal direction; `kappa` is the signed curvature w.r.t. that direction
// (positive = turning left).
struct CurvePoint {
    Vec2 pos;
    Vec2 tangent;
    double kappa = 0.0;
};

// ---------------------------------------------------------------------------
// Segments
// ---------------------------------------------------------------------------

struct ArcSegment {
    Vec2 center;
    double radius;
    double ang_start;  // traversal runs from ang_start to ang_end
    double ang_end;    // ang_end > ang_start means counterclockwise

    bool ccw() const { return ang_end > ang_start; }

    CurvePoint at(double u) const {
        const double a = ang_start + u * (ang_end - ang_start);
        CurvePoint p;
        p.pos = center + radius * Vec2(std::cos(a), std::sin(a));
        const double s = ccw() ? 1.0 : -1.0;
        p.tangent = s * Vec2(-std::sin(a), std::cos(a));
        p.kappa = s / radius;
        return p;
    }

    // Closest point of the arc to y (analytic: clamp the polar angle).
    void closest(const Vec2& y, double& u_out, double& dist2_out) const {
        const Vec2 rel = y - center;
        const double mid = 0.5 * (ang_start + ang_end);
        const double half = 0.5 * std::abs(ang_end - ang_start);
        double a;
        if (rel.squaredNorm() < 1e-24) {
            a = mid;
        } else {
            const double ay = std::atan2(rel.y(), rel.x());
            const double d = wrap_angle(ay - mid);
            a = mid + std::clamp(d, -half, half);
        }
        u_out = std::abs(ang_end - ang_start) < 1e-300
                    ? 0.0
                    : (a - ang_start) / (ang_end - ang_start);
        u_out = std::clamp(u_out, 0.0, 1.0);
        const Vec2 foot = center + radius * Vec2(std::cos(a), std::sin(a));
        dist2_out = (y - foot).squaredNorm();
    }
};

struct QuinticSegment {
    Vec2 c[6];  // r(u) = sum c[i] u^i, u in [0,1]

    // Hermite data: end positions p, first derivatives v = dr/du and second
    // derivatives a = d^2 r/du^2 at u = 0 and u = 1.
    static QuinticSegment hermite(const Vec2& p0, const Vec2& v0, const Vec2& a0,
                                  const Vec2& p1, const Vec2& v1, const Vec2& a1) {
        QuinticSegment q;
        q.c[0] = p0;
        q.c[1] = v0;
        q.c[2] = 0.5 * a0;
        q.c[3] = -10.0 * p0 - 6.0 * v0 - 1.5 * a0 + 10.0 * p1 - 4.0 * v1 + 0.5 * a1;
        q.c[4] = 15.0 * p0 + 8.0 * v0 + 1.5 * a0 - 15.0 * p1 + 7.0 * v1 - a1;
        q.c[5] = -6.0 * p0 - 3.0 * v0 - 0.5 * a0 + 6.0 * p1 - 3.0 * v1 + 0.5 * a1;
        return q;
    }

    void eval(double u, Vec2& r, Vec2& r1, Vec2& r2) const {
        r = c[5];
        for (int i = 4; i >= 0; --i) r = r * u + c[i];
        r1 = 5.0 * c[5];
        for (int i = 4; i >= 1; --i) r1 = r1 * u + static_cast<double>(i) * c[i];
        r2 = 20.0 * c[5];
        for (int i = 4; i >= 2; --i)
            r2 = r2 * u + static_cast<double>(i * (i - 1)) * c[i];
    }

    CurvePoint at(double u) const {
        Vec2 r, r1, r2;
        eval(u, r, r1, r2);
        CurvePoint p;
        p.pos = r;
        const double n1 = r1.norm();
        p.tangent = r1 / n1;
        p.kappa = (r1.x() * r2.y() - r1.y() * r2.x()) / (n1 * n1 * n1);
        return p;
    }

    // Guarded Newton on g(u) = (r - y) . r' from the given seed.
    void closest_from(const Vec2& y, double u_seed, double& u_out,
                      double& dist2_out) const {
        double u = std::clamp(u_seed, 0.0, 1.0);
        for (int it = 0; it < 20; ++it) {
            Vec2 r, r1, r2;
            eval(u, r, r1, r2);
            const Vec2 d = r - y;
            const double g = d.dot(r1);
            const double gp = r1.squaredNorm() + d.dot(r2);
            double du = gp > 1e-30 ? -g / gp : (g > 0 ? -0.05 : 0.05);
            du = std::clamp(du, -0.25, 0.25);
            double un = std::clamp(u + du, 0.0, 1.0);
            if (std::abs(un - u) < 1e-15) {
                u = un;
                break;
            }
            u = un;
        }
        Vec2 r, r1, r2;
        eval(u, r, r1, r2);
        double best_u = u, best_d2 = (r - y).squaredNorm();
        for (double ue : {0.0, 1.0}) {
            eval(ue, r, r1, r2);
            const double d2 = (r - y).squaredNorm();
            if (d2 < best_d2) {
                best_d2 = d2;
                best_u = ue;
            }
        }
        u_out = best_u;
        dist2_out = best_d2;
    }
};

using Segment = std::variant<ArcSegment, QuinticSegment>;

inline CurvePoint segment_at(const Segment& s, double u) {
    return std::visit([u](const auto& seg) { return seg.at(u); }, s);
}

// ---------------------------------------------------------------------------
// Closed oriented curve (counterclockwise, interior on the left). Closest
// point queries combine analytic arc projection with seeded Newton on the
// quintic segments; signed distance uses the outward normal at the foot.
// ---------------------------------------------------------------------------

struct ClosestPoint {
    Vec2 foot;
    Vec2 tangent;         // traversal tangent at the foot
    Vec2 outward_normal;  // right normal of the tangent
    double kappa = 0.0;   // traversal-signed curvature at the foot
    double dist = 0.0;
    double signed_dist = 0.0;  // > 0 outside, < 0 inside
    int segment = -1;
    double u = 0.0;
};

class ClosedCurve {
public:
    void add_arc(const ArcSegment& a) { segments_.emplace_back(a); }
    void add_quintic(const QuinticSegment& q) { segments_.emplace_back(q); }

    int segment_count() const { return static_cast<int>(segments_.size()); }
    const Segment& segment(int i) const { return segments_[i]; }

    // Builds the seed table and the validation polyline.
    void finalize(int samples_per_segment = 48) {
        table_.clear();
        polyline_.clear();
        for (int s = 0; s < segment_count(); ++s) {
            const int m = samples_per_segment;
            for (int i = 0; i < m; ++i) {
                const double u = (i + 0.5) / m;
                TableEntry e;
                e.pos = segment_at(segments_[s], u).pos;
                e.seg = s;
                e.u = u;
                table_.push_back(e);
            }
            for (int i = 0; i < m; ++i)
                polyline_.push_back(segment_at(segments_[s], double(i) / m).pos);
        }
    }

    ClosestPoint closest(const Vec2& y) const {
        // candidate segments: all arcs + quintics near the best table seeds
        double best_d2 = std::numeric_limits<double>::infinity();
        ClosestPoint best;
        int top_seg = -1;
        double top_u = 0.5, top_d2 = best_d2;
        int second_seg = -1;
        double second_u = 0.5;
        for (const auto& e : table_) {
            const double d2 = (y - e.pos).squaredNorm();
            if (d2 < top_d2) {
                second_seg = top_seg;
                second_u = top_u;
                top_d2 = d2;
                top_seg = e.seg;
                top_u = e.u;
            }
        }
        auto consider = [&](int s, double u_seed) {
            const auto& seg = segments_[s];
            double u, d2;
            if (std::holds_alternative<ArcSegment>(seg)) {
                std::get<ArcSegment>(seg).closest(y, u, d2);
            } else {
                std::get<QuinticSegment>(seg).closest_from(y, u_seed, u, d2);
            }
            if (d2 < best_d2) {
                best_d2 = d2;
                const CurvePoint p = segment_at(seg, u);
                best.foot = p.pos;
                best.tangent = p.tangent;
                best.kappa = p.kappa;
                best.segment = s;
                best.u = u;
            }
        };
        const int n = segment_count();
        for (int s = 0; s < n; ++s)
            if (std::holds_alternative<ArcSegment>(segments_[s])) consider(s, 0.5);
        if (top_seg >= 0) {
            consider(top_seg, top_u);
            consider((top_seg + 1) % n, 0.0);
            consider((top_seg + n - 1) % n, 1.0);
        }
        if (second_seg >= 0 && second_seg != top_seg) consider(second_seg, second_u);

        best.dist = std::sqrt(best_d2);
        best.outward_normal = Vec2(best.tangent.y(), -best.tangent.x());
        const double side = (y - best.foot).dot(best.outward_normal);
        best.signed_dist = side >= 0.0 ? best.dist : -best.dist;
        return best;
    }

    const std::vector<Vec2>& polyline() const { return polyline_; }

    double signed_area() const {
        double a = 0.0;
        const auto& p = polyline_;
        for (size_t i = 0; i < p.size(); ++i) {
            const Vec2& q = p[i];
            const Vec2& r = p[(i + 1) % p.size()];
            a += q.x() * r.y() - r.x() * q.y();
        }
        return 0.5 * a;
    }

    double max_extent() const {
        double m = 0.0;
        for (const auto& p : polyline_) m = std::max(m, p.norm());
        return m;
    }

    // Smallest gap between polyline samples that are at least `s_skip` apart
    // along the curve; a proxy for the narrowest passage, which bounds the
    // usable signed-distance band.
    double min_self_clearance(double s_skip = 0.8) const {
        const int m = static_cast<int>(polyline_.size());
        std::vector<double> s(m + 1, 0.0);
        for (int i = 0; i < m; ++i)
            s[i + 1] = s[i] + (polyline_[(i + 1) % m] - polyline_[i]).norm();
        const double total = s[m];
        double best = std::numeric_limits<double>::infinity();
        for (int i = 0; i < m; ++i) {
            for (int j = i + 1; j < m; ++j) {
                const double ds = s[j] - s[i];
                if (std::min(ds, total - ds) < s_skip) continue;
                best = std::min(best, (polyline_[i] - polyline_[j]).squaredNorm());
            }
        }
        return std::sqrt(best);
    }

    // Endpoint agreement of consecutive segments: max position/tangent/kappa
    // mismatch. Used as a construction-time C^2 check.
    void join_errors(double& pos_err, double& tan_err, double& kappa_err) const {
        pos_err = tan_err = kappa_err = 0.0;
        const int n = segment_count();
        for (int s = 0; s < n; ++s) {
            const CurvePoint a = segment_at(segments_[s], 1.0);
            const CurvePoint b = segment_at(segments_[(s + 1) % n], 0.0);
            pos_err = std::max(pos_err, (a.pos - b.pos).norm());
            tan_err = std::max(tan_err, (a.tangent - b.tangent).norm());
            kappa_err = std::max(kappa_err, std::abs(a.kappa - b.kappa));
        }
    }

private:
    struct TableEntry {
        Vec2 pos;
        int seg;
        double u;
    };
    std::vector<Segment> segments_;
    std::vector<TableEntry> table_;
    std::vector<Vec2> polyline_;
};

// ---------------------------------------------------------------------------
// Intrinsic construction: integrate a curve from a prescribed curvature
// profile kappa(s), then fit a C^2 quintic spline through the samples.
// ---------------------------------------------------------------------------

struct IntrinsicCurve {
    std::vector<double> s;      // arc length at samples
    std::vector<Vec2> pos;
    std::vector<double> theta;  // tangent angle
    std::vector<double> kappa;
};

inline IntrinsicCurve integrate_intrinsic(const Vec2& p0, double theta0, double length,
                                          const std::function<double(double)>& kappa,
                                          int steps) {
    IntrinsicCurve out;
    out.s.resize(steps + 1);
    out.pos.resize(steps + 1);
    out.theta.resize(steps + 1);
    out.kappa.resize(steps + 1);
    const double h = length / steps;
    double x = p0.x(), y = p0.y(), th = theta0;
    out.s[0] = 0.0;
    out.pos[0] = p0;
    out.theta[0] = theta0;
    out.kappa[0] = kappa(0.0);
    for (int i = 0; i < steps; ++i) {
        const double s0 = i * h;
        // RK4 on (x, y, theta), theta' = kappa(s)
        const double k1t = kappa(s0);
        const double k1x = std::cos(th), k1y = std::sin(th);
        const double th2 = th + 0.5 * h * k1t;
        const double k2t = kappa(s0 + 0.5 * h);
        const double k2x = std::cos(th2), k2y = std::sin(th2);
        const double th3 = th + 0.5 * h * k2t;
        const double k3t = k2t;
        const double k3x = std::cos(th3), k3y = std::sin(th3);
        const double th4 = th + h * k3t;
        const double k4t = kappa(s0 + h);
        const double k4x = std::cos(th4), k4y = std::sin(th4);
        x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
        y += h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
        th += h / 6.0 * (k1t + 2.0 * k2t + 2.0 * k3t + k4t);
        out.s[i + 1] = s0 + h;
        out.pos[i + 1] = Vec2(x, y);
        out.theta[i + 1] = th;
        out.kappa[i + 1] = kappa(s0 + h);
    }
    return out;
}

// Per-knot state used when fitting the spline; end knots may be overridden
// with exact junction data so the assembled boundary joins bit-cleanly.
struct KnotState {
    Vec2 pos;
    double theta;
    double kappa;
};

inline std::vector<QuinticSegment> fit_quintic_spline(const IntrinsicCurve& c,
                                                      int n_segments,
                                                      const KnotState* exact_first = nullptr,
                                                      const KnotState* exact_last = nullptr) {
    const int steps = static_cast<int>(c.s.size()) - 1;
    std::vector<KnotState> knots(n_segments + 1);
    for (int j = 0; j <= n_segments; ++j) {
        const int i = static_cast<int>(std::llround(double(j) * steps / n_segments));
        knots[j] = {c.pos[i], c.theta[i], c.kappa[i]};
    }
    if (exact_first) knots.front() = *exact_first;
    if (exact_last) knots.back() = *exact_last;

    std::vector<QuinticSegment> segs;
    segs.reserve(n_segments);
    const double ds = c.s.back() / n_segments;
    for (int j = 0; j < n_segments; ++j) {
        const KnotState& a = knots[j];
        const KnotState& b = knots[j + 1];
        const Vec2 ta(std::cos(a.theta), std::sin(a.theta));
        const Vec2 tb(std::cos(b.theta), std::sin(b.theta));
        const Vec2 na(-ta.y(), ta.x());
        const Vec2 nb(-tb.y(), tb.x());
        segs.push_back(QuinticSegment::hermite(a.pos, ds * ta, ds * ds * a.kappa * na,
                                               b.pos, ds * tb, ds * ds * b.kappa * nb));
    }
    return segs;
}

// Reverse an intrinsic curve (flip traversal direction).
inline IntrinsicCurve reverse_curve(const IntrinsicCurve& c) {
    IntrinsicCurve out;
    const size_t m = c.s.size();
    const double L = c.s.back();
    out.s.resize(m);
    out.pos.resize(m);
    out.theta.resize(m);
    out.kappa.resize(m);
    for (size_t i = 0; i < m; ++i) {
        const size_t j = m - 1 - i;
        out.s[i] = L - c.s[j];
        out.pos[i] = c.pos[j];
        out.theta[i] = c.theta[j] + M_PI;
        out.kappa[i] = -c.kappa[j];
    }
    return out;
}

// Mirror an intrinsic curve across the vertical axis (x -> -x).
inline IntrinsicCurve mirror_curve(const IntrinsicCurve& c) {
    IntrinsicCurve out = c;
    for (size_t i = 0; i < c.s.size(); ++i) {
        out.pos[i] = Vec2(-c.pos[i].x(), c.pos[i].y());
        out.theta[i] = M_PI - c.theta[i];
        out.kappa[i] = -c.kappa[i];
    }
    return out;
}

}  // namespace rbsde::curves
