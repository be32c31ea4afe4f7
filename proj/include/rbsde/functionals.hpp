#pragma once

#include <json.hpp>
#include <optional>
#include <string>

#include "rbsde/catalog.hpp"
#include "rbsde/oracle.hpp"
#include "rbsde/solver.hpp"

namespace rbsde {

// Catalog-facing bundle: a domain, its core, and the descriptors needed to
// wire terminals and restricted boundary sweeps.
struct DomainBundle {
    LevelSetDomain domain;
    ConvexCore core;
    std::optional<SectorArcs> arcs;
    std::function<Vec(SplitMix64&)> inner_arc_sampler;
};

inline DomainBundle build_domain(const nlohmann::json& spec) {
    const std::string name = spec.at("name").get<std::string>();
    DomainBundle out;
    if (name == "ball") {
        const double radius = spec.value("radius", 1.0);
        const int dim = spec.value("dim", 2);
        auto pair = make_ball(radius, dim);
        out.domain = pair.domain;
        out.core = pair.core;
        return out;
    }
    if (name == "polar_star") {
        PolarStarSpec ps;
        ps.cos_coeffs = spec.at("coeffs").get<std::vector<double>>();
        if (spec.contains("offset")) {
            const auto off = spec.at("offset").get<std::vector<double>>();
            ps.offset = Eigen::Vector2d(off.at(0), off.at(1));
        }
        ps.core_radius = spec.value("core_radius", 0.0);
        auto star = make_polar_star(ps);
        out.domain = star.domain;
        out.core = star.core;
        return out;
    }
    if (name == "sector") {
        SectorDomainSpec ss;
        ss.alpha = spec.value("alpha", M_PI / 4.0);
        ss.eta = spec.value("eta", 0.2);
        ss.eps_corner = spec.value("eps_corner", 0.15);
        auto sec = make_sector_domain(ss);
        out.domain = sec.domain;
        out.core = sec.core;
        out.arcs = sec.arcs;
        out.inner_arc_sampler = sec.inner_arc_sampler;
        return out;
    }
    if (name == "revolve") {
        DomainBundle inner = build_domain(spec.at("inner"));
        const int dim = spec.at("dim").get<int>();
        out.domain = revolve_to_dim(inner.domain, dim);
        out.core = revolve_core(inner.core, dim);
        return out;
    }
    throw std::invalid_argument("unknown domain catalog entry: " + name);
}

// Terminal functionals. Arc terminals embed an angle process into the
// sector frame and therefore require the sector's circle center.
inline TerminalMap build_terminal(const nlohmann::json& spec, const DomainBundle& bundle) {
    const std::string name = spec.at("name").get<std::string>();
    if (name == "constant") {
        const auto pt = spec.at("point").get<std::vector<double>>();
        Vec v(static_cast<int>(pt.size()));
        for (size_t i = 0; i < pt.size(); ++i) v[static_cast<int>(i)] = pt[i];
        return [v](const Vec&) { return v; };
    }
    if (name == "arc_smooth" || name == "arc_point_pair" || name == "arc_constant") {
        if (!bundle.arcs)
            throw std::invalid_argument("terminal '" + name + "' needs a sector domain");
        const Eigen::Vector2d op = bundle.arcs->circle_center;
        if (name == "arc_smooth") {
            const double alpha = spec.at("alpha").get<double>();
            return [op, alpha](const Vec& x) {
                const double cdf = 0.5 * std::erfc(-x[0] / std::sqrt(2.0));
                return sector_terminal_from_angle(op, alpha * (2.0 * cdf - 1.0));
            };
        }
        if (name == "arc_point_pair") {
            // node-valued sign terminal; ties at W_T = 0 resolve upward
            const double alpha = spec.at("alpha").get<double>();
            return [op, alpha](const Vec& x) {
                return sector_terminal_from_angle(op, x[0] >= 0.0 ? alpha : -alpha);
            };
        }
        const double angle = spec.at("angle").get<double>();
        return [op, angle](const Vec&) { return sector_terminal_from_angle(op, angle); };
    }
    throw std::invalid_argument("unknown terminal catalog entry: " + name);
}

inline AngleTerminal build_angle_terminal(const nlohmann::json& spec) {
    const std::string name = spec.at("name").get<std::string>();
    if (name == "arc_point_pair") return arc_point_pair(spec.at("alpha").get<double>());
    if (name == "arc_smooth") return arc_smooth(spec.at("alpha").get<double>());
    if (name == "arc_constant") return arc_constant(spec.at("angle").get<double>());
    throw std::invalid_argument("terminal '" + name + "' has no angle-process form");
}

inline GeneratorSpec build_generator(const nlohmann::json& spec) {
    const std::string name = spec.value("name", "zero");
    if (name == "zero") return {};
    throw std::invalid_argument("unknown generator catalog entry: " + name);
}

inline std::string catalog_listing() {
    // stable, sorted within each section
    return
        "domains:\n"
        "  ball{radius, dim?}\n"
        "  polar_star{coeffs, offset?, core_radius?}\n"
        "  revolve{inner, dim}\n"
        "  sector{alpha, eta, eps_corner}\n"
        "terminals:\n"
        "  arc_constant{angle}\n"
        "  arc_point_pair{alpha}\n"
        "  arc_smooth{alpha}\n"
        "  constant{point}\n"
        "generators:\n"
        "  zero\n";
}

}  // namespace rbsde
