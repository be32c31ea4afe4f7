#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

namespace rbsde {

// Points live in R^d with d <= kMaxDim; drivers in R^{d'} with d' <= 2.
// Fixed capacity keeps the small vectors on the stack in the solver loops.
inline constexpr int kMaxDim = 6;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                          Eigen::ColMajor, kMaxDim, kMaxDim>;

inline Vec make_vec2(double x, double y) {
    Vec v(2);
    v << x, y;
    return v;
}

// ---------------------------------------------------------------------------
// Error types. Names follow the operation contracts; all carry a message.
// ---------------------------------------------------------------------------

struct ParameterSearchFailed : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct OutsideUniquenessBand : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NonConvergence : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DegenerateGradient : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct VerificationFailed : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct EmptyBoundarySample : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CaseInapplicable : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NotStarShaped : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InfeasibleSpec : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MissingChild : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct PicardDivergence : std::runtime_error {
    PicardDivergence(const std::string& msg, int n_, int step_, int node_)
        : std::runtime_error(msg), n(n_), step(step_), node(node_) {}
    int n, step, node;
};
struct TerminalOutsideDomain : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct LatticeMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct UnsupportedDepth : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InsufficientData : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Deterministic splittable RNG (splitmix64). Stream i of a run seed is
// hash(seed, i); bit streams are identical across platforms, which is what
// the byte-identical-output contract needs.
// ---------------------------------------------------------------------------

struct SplitMix64 {
    std::uint64_t state;

    explicit SplitMix64(std::uint64_t seed) : state(seed) {}
    SplitMix64(std::uint64_t seed, std::uint64_t stream)
        : state(seed ^ (0x9e3779b97f4a7c15ULL * (stream + 1))) {
        next();
    }

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // uniform in [a, b)
    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    // fair sign
    int sign() { return (next() >> 63) ? 1 : -1; }

    // standard normal via Box-Muller (deterministic, no cached spare)
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    Vec unit_vector(int dim) {
        Vec v(dim);
        double norm2 = 0.0;
        do {
            for (int i = 0; i < dim; ++i) v[i] = normal();
            norm2 = v.squaredNorm();
        } while (norm2 < 1e-12);
        return v / std::sqrt(norm2);
    }
};

using NamedReals = std::map<std::string, double>;
using NamedCounts = std::map<std::string, long>;

}  // namespace rbsde
