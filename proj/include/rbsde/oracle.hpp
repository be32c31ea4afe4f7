#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "rbsde/lattice.hpp"
#include "rbsde/types.hpp"

namespace rbsde {

// Terminal angle functional nu(W_T); the last-step sign breaks ties for
// discontinuous functionals (an even step count makes W_T = 0 attainable,
// and the symmetric tie-break keeps the lattice mean of nu exactly zero).
struct AngleTerminal {
    std::function<double(double, int)> nu;
    double alpha = 0.0;  // range bound: |nu| <= alpha
};

inline AngleTerminal arc_point_pair(double alpha) {
    return {[alpha](double w, int last) {
                if (w > 0.0) return alpha;
                if (w < 0.0) return -alpha;
                return last >= 0 ? alpha : -alpha;
            },
            alpha};
}

inline AngleTerminal arc_smooth(double alpha) {
    return {[alpha](double w, int) {
                const double cdf = 0.5 * std::erfc(-w / std::sqrt(2.0));
                return alpha * (2.0 * cdf - 1.0);
            },
            alpha};
}

inline AngleTerminal arc_constant(double c) {
    return {[c](double, int) { return c; }, std::abs(c)};
}

// ---------------------------------------------------------------------------
// Closed-form circle construction: theta is the exact lattice martingale
// closing nu, eta its one-step representation, Y = (cos theta, sin theta),
// Z = eta (-sin theta, cos theta)^T, dVar = eta^2/2 dt. The variation-to-go
// field is computed by the same backward recursion and is exact.
// ---------------------------------------------------------------------------

struct CircleOracle {
    double alpha = 0.0;
    BrownianLattice lattice;
    std::vector<std::vector<double>> theta;       // steps 0..N
    std::vector<std::vector<double>> eta;         // steps 0..N-1
    std::vector<std::vector<double>> var_to_go;   // E_k[int_k^T dVar]
    std::vector<std::vector<double>> nu_sq_mean;  // E_k[nu^2]
    double expected_total_var = 0.0;              // E[int_0^T dVar]

    double theta_at(int k, long node) const { return theta[k][node]; }
    double eta_at(int k, long node) const { return eta[k][node]; }

    Vec y_unit(int k, long node) const {
        return make_vec2(std::cos(theta[k][node]), std::sin(theta[k][node]));
    }

    Mat z_unit(int k, long node) const {
        Mat z(2, 1);
        const double th = theta[k][node];
        z(0, 0) = -eta[k][node] * std::sin(th);
        z(1, 0) = eta[k][node] * std::cos(th);
        return z;
    }

    // per-path cumulative variation (exact on the lattice)
    double path_var(const PathSample& p) const {
        double v = 0.0;
        const double dt = lattice.dt();
        for (int k = 0; k < lattice.n_steps; ++k) {
            const double e = eta[k][p.node_index[k]];
            v += 0.5 * e * e * dt;
        }
        return v;
    }
};

inline CircleOracle circle_oracle(double alpha, const AngleTerminal& nu,
                                  const BrownianLattice& lat) {
    if (lat.driver_dim != 1)
        throw std::invalid_argument("circle_oracle: needs a one-dimensional driver");
    if (!(alpha > 0.0 && alpha < M_PI / 2.0))
        throw std::invalid_argument("circle_oracle: alpha outside (0, pi/2)");

    CircleOracle oc;
    oc.alpha = alpha;
    oc.lattice = lat;
    const int N = lat.n_steps;
    const double dt = lat.dt();
    const double sdt = lat.sqrt_dt();
    oc.theta.resize(N + 1);
    oc.eta.resize(N);
    oc.var_to_go.resize(N + 1);
    oc.nu_sq_mean.resize(N + 1);

    // the terminal step carries the edge-dependent values; steps below N - 1
    // use plain node averaging
    oc.theta[N].assign(lat.nodes_at(N), 0.0);  // filled for reference only
    oc.var_to_go[N].assign(lat.nodes_at(N), 0.0);
    oc.nu_sq_mean[N].assign(lat.nodes_at(N), 0.0);
    for (long j = 0; j < lat.nodes_at(N); ++j) {
        const double w = lat.w_at(N, j)[0];
        oc.theta[N][j] = nu.nu(w, +1);  // representative value
        oc.nu_sq_mean[N][j] = oc.theta[N][j] * oc.theta[N][j];
    }

    for (int k = N - 1; k >= 0; --k) {
        const long nodes = lat.nodes_at(k);
        oc.theta[k].resize(nodes);
        oc.eta[k].resize(nodes);
        oc.var_to_go[k].resize(nodes);
        oc.nu_sq_mean[k].resize(nodes);
        for (long node = 0; node < nodes; ++node) {
            double up, dn, m2_up, m2_dn, v_up, v_dn;
            if (k == N - 1) {
                const double w_up = lat.w_at(N, lat.child(k, node, 1))[0];
                const double w_dn = lat.w_at(N, lat.child(k, node, 0))[0];
                up = nu.nu(w_up, +1);
                dn = nu.nu(w_dn, -1);
                m2_up = up * up;
                m2_dn = dn * dn;
                v_up = v_dn = 0.0;
            } else {
                up = oc.theta[k + 1][lat.child(k, node, 1)];
                dn = oc.theta[k + 1][lat.child(k, node, 0)];
                m2_up = oc.nu_sq_mean[k + 1][lat.child(k, node, 1)];
                m2_dn = oc.nu_sq_mean[k + 1][lat.child(k, node, 0)];
                v_up = oc.var_to_go[k + 1][lat.child(k, node, 1)];
                v_dn = oc.var_to_go[k + 1][lat.child(k, node, 0)];
            }
            const double th = 0.5 * (up + dn);
            const double et = (up - dn) / (2.0 * sdt);
            oc.theta[k][node] = th;
            oc.eta[k][node] = et;
            oc.nu_sq_mean[k][node] = 0.5 * (m2_up + m2_dn);
            oc.var_to_go[k][node] = 0.5 * (v_up + v_dn) + 0.5 * et * et * dt;
        }
    }
    oc.expected_total_var = oc.var_to_go[0][0];
    return oc;
}

// Embedding of the circle construction into the sector frame: the arc of
// angle 2 alpha around the circle center corresponds to unit-circle angles
// via a quarter-turn rotation.
inline Vec oracle_point_in_sector_frame(const Eigen::Vector2d& circle_center,
                                        double theta) {
    return make_vec2(circle_center.x() + std::sin(theta),
                     circle_center.y() - std::cos(theta));
}

inline Vec sector_terminal_from_angle(const Eigen::Vector2d& circle_center, double nu_value) {
    return oracle_point_in_sector_frame(circle_center, nu_value);
}

}  // namespace rbsde
