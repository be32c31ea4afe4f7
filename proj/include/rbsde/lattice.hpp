#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "rbsde/types.hpp"

namespace rbsde {

// ---------------------------------------------------------------------------
// Recombining binomial lattice for a d'-dimensional Brownian driver
// (d' in {1, 2}); increments are +-sqrt(dt) per axis with probability 1/2,
// so one-step conditional expectations are exact two-point means.
// ---------------------------------------------------------------------------

struct BrownianLattice {
    double horizon = 1.0;
    int n_steps = 1;
    int driver_dim = 1;

    BrownianLattice() = default;
    BrownianLattice(double T, int N, int d_prime)
        : horizon(T), n_steps(N), driver_dim(d_prime) {
        if (T <= 0.0 || N < 1) throw std::invalid_argument("lattice: bad horizon/steps");
        if (d_prime != 1 && d_prime != 2)
            throw std::invalid_argument("lattice: driver_dim must be 1 or 2");
    }

    double dt() const { return horizon / n_steps; }
    double sqrt_dt() const { return std::sqrt(dt()); }
    double time_at(int k) const { return k * dt(); }

    long nodes_at(int k) const {
        const long side = k + 1;
        return driver_dim == 1 ? side : side * side;
    }

    int branches() const { return 1 << driver_dim; }

    // node index -> per-axis up-counts (j in [0, k])
    void axis_counts(int k, long node, int* j) const {
        if (driver_dim == 1) {
            j[0] = static_cast<int>(node);
        } else {
            j[0] = static_cast<int>(node / (k + 1));
            j[1] = static_cast<int>(node % (k + 1));
        }
    }

    Vec w_at(int k, long node) const {
        int j[2];
        axis_counts(k, node, j);
        Vec w(driver_dim);
        for (int a = 0; a < driver_dim; ++a)
            w[a] = (2.0 * j[a] - k) * sqrt_dt();
        return w;
    }

    // child node index at step k+1 for branch b (bit a of b = up on axis a)
    long child(int k, long node, int branch) const {
        int j[2];
        axis_counts(k, node, j);
        if (driver_dim == 1) return j[0] + (branch & 1);
        const long j1 = j[0] + ((branch >> 1) & 1);
        const long j2 = j[1] + (branch & 1);
        return j1 * (k + 2) + j2;
    }

    // branch increment on axis a: +-sqrt(dt)
    double increment(int branch, int axis) const {
        const int bit = driver_dim == 1 ? (branch & 1) : ((branch >> (1 - axis)) & 1);
        return (bit ? 1.0 : -1.0) * sqrt_dt();
    }
};

// ---------------------------------------------------------------------------
// One-step operators on node fields. A field over step k+1 with m values per
// node is stored flat as nodes_at(k+1) x m, node-major.
// ---------------------------------------------------------------------------

inline void conditional_expectation_into(const BrownianLattice& lat, int k, long node,
                                         std::span<const double> next, int m,
                                         double* out) {
    if (static_cast<long>(next.size()) != lat.nodes_at(k + 1) * m)
        throw MissingChild("conditional_expectation: field size does not match step " +
                           std::to_string(k + 1));
    const int nb = lat.branches();
    for (int i = 0; i < m; ++i) out[i] = 0.0;
    for (int b = 0; b < nb; ++b) {
        const long c = lat.child(k, node, b);
        for (int i = 0; i < m; ++i) out[i] += next[c * m + i];
    }
    const double inv = 1.0 / nb;
    for (int i = 0; i < m; ++i) out[i] *= inv;
}

inline double conditional_expectation(const BrownianLattice& lat,
                                      std::span<const double> next, int k, long node) {
    double v;
    conditional_expectation_into(lat, k, node, next, 1, &v);
    return v;
}

// E_k[field dW^T] / dt, laid out as m x d' (column per axis), row-major in m.
inline void z_projection_into(const BrownianLattice& lat, int k, long node,
                              std::span<const double> next, int m, double* out) {
    if (static_cast<long>(next.size()) != lat.nodes_at(k + 1) * m)
        throw MissingChild("z_projection: field size does not match step " +
                           std::to_string(k + 1));
    const int nb = lat.branches();
    const int dp = lat.driver_dim;
    for (int i = 0; i < m * dp; ++i) out[i] = 0.0;
    for (int b = 0; b < nb; ++b) {
        const long c = lat.child(k, node, b);
        for (int a = 0; a < dp; ++a) {
            const double w = lat.increment(b, a);
            for (int i = 0; i < m; ++i) out[i * dp + a] += next[c * m + i] * w;
        }
    }
    const double scale = 1.0 / (nb * lat.dt());
    for (int i = 0; i < m * dp; ++i) out[i] *= scale;
}

inline Vec z_projection(const BrownianLattice& lat, std::span<const double> next, int k,
                        long node) {
    Vec z(lat.driver_dim);
    z_projection_into(lat, k, node, next, 1, z.data());
    return z;
}

// ---------------------------------------------------------------------------
// Forward state: X = W (identity) or X = x0 + int b(s) ds + sigma W with a
// constant diffusion matrix. State-dependent coefficients would break the
// recombining property and are rejected up front.
// ---------------------------------------------------------------------------

struct ForwardDiffusion {
    enum class Mode { identity, euler };
    Mode mode = Mode::identity;
    int driver_dim = 1;
    Vec x0;
    std::function<Vec(double)> drift;  // b(t), euler mode
    Mat sigma;                         // constant dx x d', euler mode

    int state_dim() const {
        return mode == Mode::identity ? driver_dim : static_cast<int>(sigma.rows());
    }

    static ForwardDiffusion identity(int d_prime) {
        ForwardDiffusion f;
        f.mode = Mode::identity;
        f.driver_dim = d_prime;
        f.x0 = Vec::Zero(d_prime);
        return f;
    }

    static ForwardDiffusion euler(const Vec& x0, std::function<Vec(double)> drift,
                                  const Mat& sigma) {
        ForwardDiffusion f;
        f.mode = Mode::euler;
        f.driver_dim = static_cast<int>(sigma.cols());
        f.x0 = x0;
        f.drift = std::move(drift);
        f.sigma = sigma;
        const Mat gram = sigma.transpose() * sigma;
        Eigen::SelfAdjointEigenSolver<Mat> es(gram);
        if (es.eigenvalues().minCoeff() <= 1e-12)
            throw std::invalid_argument("ForwardDiffusion: sigma^T sigma is not positive definite");
        return f;
    }

    // cumulative drift integral at each step time (euler mode)
    std::vector<Vec> drift_table(const BrownianLattice& lat) const {
        std::vector<Vec> table(lat.n_steps + 1, Vec::Zero(state_dim()));
        if (mode == Mode::euler && drift) {
            for (int k = 0; k < lat.n_steps; ++k)
                table[k + 1] = table[k] + lat.dt() * drift(lat.time_at(k));
        }
        return table;
    }

    Vec x_at(const BrownianLattice& lat, int k, long node,
             const std::vector<Vec>* drift_tab = nullptr) const {
        const Vec w = lat.w_at(k, node);
        if (mode == Mode::identity) return w;
        Vec x = x0 + sigma * w;
        if (drift) {
            if (drift_tab) {
                x += (*drift_tab)[k];
            } else {
                Vec acc = Vec::Zero(state_dim());
                for (int i = 0; i < k; ++i) acc += lat.dt() * drift(lat.time_at(i));
                x += acc;
            }
        }
        return x;
    }
};

// ---------------------------------------------------------------------------
// Path sampling with splittable per-path seeds.
// ---------------------------------------------------------------------------

struct PathSample {
    std::uint64_t seed = 0;
    std::vector<std::int8_t> increments;  // n_steps x driver_dim, +-1
    std::vector<long> node_index;         // node at each step, size n_steps + 1

    int branch_at(int k, int driver_dim) const {
        if (driver_dim == 1) return increments[k] > 0 ? 1 : 0;
        const int b1 = increments[2 * k] > 0 ? 1 : 0;
        const int b2 = increments[2 * k + 1] > 0 ? 1 : 0;
        return (b1 << 1) | b2;
    }
};

inline PathSample sample_path(const BrownianLattice& lat, std::uint64_t run_seed,
                              std::uint64_t path_index) {
    PathSample p;
    p.seed = SplitMix64(run_seed, path_index).state;
    SplitMix64 rng(run_seed, path_index);
    const int dp = lat.driver_dim;
    p.increments.resize(static_cast<size_t>(lat.n_steps) * dp);
    p.node_index.resize(lat.n_steps + 1);
    int j[2] = {0, 0};
    p.node_index[0] = 0;
    for (int k = 0; k < lat.n_steps; ++k) {
        for (int a = 0; a < dp; ++a) {
            const int s = rng.sign();
            p.increments[static_cast<size_t>(k) * dp + a] = static_cast<std::int8_t>(s);
            if (s > 0) ++j[a];
        }
        p.node_index[k + 1] = dp == 1 ? j[0] : static_cast<long>(j[0]) * (k + 2) + j[1];
    }
    return p;
}

inline std::vector<PathSample> sample_paths(const BrownianLattice& lat, long count,
                                            std::uint64_t seed) {
    if (count < 1) throw std::invalid_argument("sample_paths: count must be positive");
    std::vector<PathSample> out;
    out.reserve(count);
    for (long i = 0; i < count; ++i) out.push_back(sample_path(lat, seed, i));
    return out;
}

}  // namespace rbsde
