#pragma once

#include <cerrno>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>

#include "rbsde/checks.hpp"
#include "rbsde/functionals.hpp"
#include "rbsde/geometry.hpp"
#include "rbsde/pseudo_distance.hpp"

namespace rbsde {

using ordered_json = nlohmann::ordered_json;

// exit codes of the experiment runner
inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitGeometryInadmissible = 3;
inline constexpr int kExitSolverFailure = 4;

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Run configuration (single-file key-value tree, dotted --set overrides).
// ---------------------------------------------------------------------------

struct RunConfig {
    nlohmann::json raw;

    std::string experiment = "solve";  // "solve" or "oracle"
    nlohmann::json domain;
    nlohmann::json terminal;
    nlohmann::json generator;

    double horizon = 1.0;
    int n_steps = 100;
    int driver_dim = 1;
    std::string diffusion_mode = "identity";

    std::vector<int> n_schedule;
    double stop_tol = 0.0;
    double cap_zsq = 100.0;
    double picard_tol = 1e-12;
    int picard_max_iters = 200;
    int threads = 1;
    long n_paths = 256;
    long geometry_samples = 20000;

    std::vector<std::string> checks;
    nlohmann::json smallness;  // optional {case, theta}
    std::uint64_t seed = 1;
    std::string output_dir = "out";
    bool dump_paths = false;
    bool geometry_only = false;

    static RunConfig parse(const nlohmann::json& j) {
        RunConfig c;
        c.raw = j;
        c.experiment = j.value("experiment", std::string("solve"));
        if (c.experiment != "solve" && c.experiment != "oracle")
            throw std::invalid_argument("config: experiment must be 'solve' or 'oracle'");
        if (c.experiment == "solve") c.domain = j.at("domain");
        c.terminal = j.at("terminal");
        c.generator = j.value("generator", nlohmann::json{{"name", "zero"}});

        const auto lat = j.at("lattice");
        c.horizon = lat.value("T", 1.0);
        c.n_steps = lat.at("N").get<int>();
        c.driver_dim = lat.value("driver_dim", 1);
        c.diffusion_mode = lat.value("mode", std::string("identity"));
        if (c.n_steps < 2) throw std::invalid_argument("config: N must be >= 2");
        if (c.diffusion_mode != "identity")
            throw std::invalid_argument("config: only the identity forward mode is wired "
                                        "through the runner");

        if (c.experiment == "solve") {
            c.n_schedule = j.at("n_schedule").get<std::vector<int>>();
            if (c.n_schedule.empty())
                throw std::invalid_argument("config: n_schedule must be nonempty");
            for (size_t i = 1; i < c.n_schedule.size(); ++i)
                if (c.n_schedule[i] <= c.n_schedule[i - 1])
                    throw std::invalid_argument("config: n_schedule must be increasing");
        }
        const auto pen = j.value("penalization", nlohmann::json::object());
        c.stop_tol = pen.value("stop_tol", 0.0);
        c.cap_zsq = pen.value("cap_zsq", 100.0);
        c.picard_tol = pen.value("picard_tol", 1e-12);
        c.picard_max_iters = pen.value("picard_max_iters", 200);

        c.checks = j.value("checks", std::vector<std::string>{});
        if (j.contains("smallness")) c.smallness = j.at("smallness");
        c.seed = j.value("seed", 1ULL);
        c.threads = j.value("threads", 1);
        c.n_paths = j.value("n_paths", 256L);
        c.geometry_samples = j.value("geometry_samples", 20000L);
        c.output_dir = j.value("output_dir", std::string("out"));
        c.dump_paths = j.value("dump_paths", false);
        return c;
    }
};

// dotted-path override: "section.key=value" (value parsed as JSON, falling
// back to a raw string)
inline void apply_override(nlohmann::json& j, const std::string& expr) {
    const auto eq = expr.find('=');
    if (eq == std::string::npos)
        throw std::invalid_argument("--set expects key.path=value");
    const std::string path = expr.substr(0, eq);
    const std::string value = expr.substr(eq + 1);
    nlohmann::json parsed;
    try {
        parsed = nlohmann::json::parse(value);
    } catch (const nlohmann::json::parse_error&) {
        parsed = value;
    }
    nlohmann::json* cur = &j;
    std::stringstream ss(path);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    if (parts.empty()) throw std::invalid_argument("--set: empty key path");
    for (size_t i = 0; i + 1 < parts.size(); ++i) cur = &(*cur)[parts[i]];
    (*cur)[parts.back()] = parsed;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline ordered_json to_json(const GeometryReport& r) {
    ordered_json j;
    j["gamma"] = r.gamma;
    j["r0"] = r.r0;
    j["smallness_case"] = to_string(r.smallness_case);
    j["smallness_pass"] = r.smallness_pass;
    j["theta"] = r.theta;
    ordered_json margins;
    for (const auto& [k, v] : r.margins) margins[k] = v;
    j["margins"] = margins;
    ordered_json samples;
    for (const auto& [k, v] : r.sample_counts) samples[k] = v;
    j["samples"] = samples;
    j["admissible"] = r.admissible();
    return j;
}

inline ordered_json to_json(const CheckReport& r) {
    ordered_json j;
    j["name"] = r.name;
    j["pass"] = r.pass;
    j["worst_violation"] = r.worst_violation;
    j["samples"] = r.sample_count;
    ordered_json fitted;
    for (const auto& [k, v] : r.fitted) fitted[k] = v;
    j["fitted"] = fitted;
    return j;
}

inline void write_convergence_csv(std::ostream& os,
                                  const std::vector<ConvergenceRow>& table) {
    os << "n,sup_dist,sup_n_psi,holder_quotient,var_mean,var_max,picard_max_iters\n";
    for (const auto& r : table) {
        os << r.n << ',' << format_double(r.sup_dist) << ',' << format_double(r.sup_n_psi)
           << ',' << format_double(r.holder_quotient) << ',' << format_double(r.var_mean)
           << ',' << format_double(r.var_max) << ',' << r.picard_max_iters << '\n';
    }
}

inline void write_paths_csv(std::ostream& os, const std::vector<PathSample>& paths,
                            int driver_dim) {
    os << "path,step,axis,increment\n";
    for (size_t p = 0; p < paths.size(); ++p) {
        const auto& inc = paths[p].increments;
        const int n_steps = static_cast<int>(inc.size()) / driver_dim;
        for (int k = 0; k < n_steps; ++k)
            for (int a = 0; a < driver_dim; ++a)
                os << p << ',' << k << ',' << a << ','
                   << int(inc[static_cast<size_t>(k) * driver_dim + a]) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Experiment runner
// ---------------------------------------------------------------------------

namespace detail {

inline SmallnessCase smallness_case_from(const std::string& s) {
    if (s == "i" || s == "I") return SmallnessCase::I;
    if (s == "ii" || s == "II") return SmallnessCase::II;
    if (s == "iii" || s == "III") return SmallnessCase::III;
    if (s == "iv" || s == "IV") return SmallnessCase::IV;
    throw std::invalid_argument("config: unknown smallness case '" + s + "'");
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    os << text;
}

}  // namespace detail

inline int run_experiment(const RunConfig& cfg, std::ostream& log) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.output_dir);
    const BrownianLattice lattice(cfg.horizon, cfg.n_steps, cfg.driver_dim);

    // --- oracle experiment: the closed-form circle construction
    if (cfg.experiment == "oracle") {
        const AngleTerminal nu = build_angle_terminal(cfg.terminal);
        const CircleOracle oc = circle_oracle(nu.alpha, nu, lattice);
        ordered_json checks = ordered_json::array();
        bool all_pass = true;

        {
            ordered_json j;
            j["name"] = "oracle_dvar_expectation";
            j["expected_total_var"] = oc.expected_total_var;
            j["half_variance_identity"] =
                0.5 * (oc.nu_sq_mean[0][0] - oc.theta[0][0] * oc.theta[0][0]);
            j["pass"] = true;
            checks.push_back(j);
        }
        {
            double worst = 0.0, theta_max = 0.0;
            for (int k = 0; k < lattice.n_steps; ++k) {
                for (long node = 0; node < lattice.nodes_at(k); ++node) {
                    worst = std::max(worst,
                                     std::abs(oc.y_unit(k, node).norm() - 1.0));
                    theta_max = std::max(theta_max, std::abs(oc.theta_at(k, node)));
                }
            }
            ordered_json j;
            j["name"] = "oracle_on_circle";
            j["max_modulus_error"] = worst;
            j["max_abs_theta"] = theta_max;
            j["pass"] = worst <= 1e-12 && theta_max <= nu.alpha + 1e-12;
            all_pass = all_pass && j["pass"].get<bool>();
            checks.push_back(j);
        }
        for (const std::string& name : cfg.checks) {
            if (name == "exp_moments") {
                const long paths = std::max<long>(cfg.n_paths, 10000);
                std::vector<double> vars;
                vars.reserve(paths);
                for (long i = 0; i < paths; ++i)
                    vars.push_back(oc.path_var(sample_path(lattice, cfg.seed, i)));
                const CheckReport rep = estimate_exp_moments(vars, 2.0, 1.1, 1.0);
                checks.push_back(to_json(rep));
                all_pass = all_pass && rep.pass;
            }
        }
        ordered_json root;
        root["experiment"] = "oracle";
        root["alpha"] = nu.alpha;
        root["checks"] = checks;
        detail::write_text_file(fs::path(cfg.output_dir) / "checks.json",
                                root.dump(2) + "\n");
        log << "oracle experiment: E[int dVar] = "
            << format_double(oc.expected_total_var) << "\n";
        return all_pass ? kExitOk : kExitCheckFailed;
    }

    // --- solve experiment
    DomainBundle bundle = build_domain(cfg.domain);
    const TerminalMap terminal = build_terminal(cfg.terminal, bundle);
    const GeneratorSpec generator = build_generator(cfg.generator);
    const ForwardDiffusion diffusion = ForwardDiffusion::identity(cfg.driver_dim);

    GeometrySettings gs;
    gs.seed = cfg.seed;

    GeometryReport report;
    try {
        report.gamma = compute_gamma(bundle.domain, bundle.core, nullptr, 2048, gs);
        const R0Estimate r0est = estimate_r0(bundle.domain, cfg.geometry_samples, gs);
        report.r0 = r0est.r0;
        report.margins["r0_worst_violation"] = r0est.worst_violation;
        report.margins["r0_hessian_sup"] = r0est.hess_sup;
        report.sample_counts["r0_pairs"] = r0est.pair_count;
        if (bundle.inner_arc_sampler) {
            report.margins["gamma_inner_arc"] =
                compute_gamma(bundle.domain, bundle.core, bundle.inner_arc_sampler, 2048,
                              gs);
        }
    } catch (const VerificationFailed& e) {
        log << "geometry verification failed: " << e.what() << "\n";
        return kExitGeometryInadmissible;
    }

    if (!cfg.smallness.is_null()) {
        const SmallnessCase which =
            detail::smallness_case_from(cfg.smallness.at("case").get<std::string>());
        const double theta = cfg.smallness.value("theta", 2.0);
        // terminal range bound: sup phi_c^+ over g(X_N) (cases I/II context)
        // and sup |g| for the ball-core cases
        double xi_core_plus = 0.0, xi_norm = 0.0;
        for (long node = 0; node < lattice.nodes_at(lattice.n_steps); ++node) {
            const Vec g = terminal(lattice.w_at(lattice.n_steps, node));
            xi_core_plus = std::max(xi_core_plus, std::max(bundle.core.phi_c(g), 0.0));
            xi_norm = std::max(xi_norm, g.norm());
        }
        const double xi_bound =
            (which == SmallnessCase::III) ? xi_norm : xi_core_plus;
        GeometryReport small_in = report;
        if (report.margins.count("gamma_inner_arc") &&
            cfg.smallness.value("use_inner_arc_gamma", true))
            small_in.gamma = report.margins.at("gamma_inner_arc");
        const bool f_sign_ok = !generator.f;  // the zero generator satisfies the sign condition
        report = check_smallness(bundle.domain, bundle.core, small_in, xi_bound,
                                 f_sign_ok, theta, which, gs);
        report.margins["xi_bound"] = xi_bound;
    }

    detail::write_text_file(fs::path(cfg.output_dir) / "geometry.json",
                            to_json(report).dump(2) + "\n");
    if (!report.admissible()) {
        log << "geometry inadmissible: gamma = " << report.gamma << ", r0 = " << report.r0
            << "\n";
        return kExitGeometryInadmissible;
    }
    if (cfg.geometry_only) {
        log << "geometry report: gamma = " << format_double(report.gamma)
            << ", r0 = " << format_double(report.r0) << "\n";
        return kExitOk;
    }

    PseudoDistance pseudo;
    try {
        pseudo = build_pseudo_distance(bundle.domain, bundle.core, {}, gs);
    } catch (const ParameterSearchFailed& e) {
        log << e.what() << "\n";
        return kExitGeometryInadmissible;
    }

    ReflectedSolveOptions opts;
    opts.stop_tol = cfg.stop_tol;
    opts.cap_zsq = cfg.cap_zsq;
    opts.picard_tol = cfg.picard_tol;
    opts.picard_max_iters = cfg.picard_max_iters;
    opts.threads = cfg.threads;
    opts.n_paths = cfg.n_paths;
    opts.seed = cfg.seed;

    ReflectedSolution sol;
    try {
        sol = solve_reflected(pseudo, terminal, generator, diffusion, lattice,
                              cfg.n_schedule, opts);
    } catch (const PicardDivergence& e) {
        log << e.what() << "\n";
        return kExitSolverFailure;
    }

    {
        std::ostringstream csv;
        write_convergence_csv(csv, sol.table);
        detail::write_text_file(fs::path(cfg.output_dir) / "convergence.csv", csv.str());
    }
    if (cfg.dump_paths) {
        std::ostringstream csv;
        std::vector<PathSample> raw;
        raw.reserve(sol.paths.size());
        for (const auto& rp : sol.paths) raw.push_back(rp.path);
        write_paths_csv(csv, raw, lattice.driver_dim);
        detail::write_text_file(fs::path(cfg.output_dir) / "paths.csv", csv.str());
    }

    // --- checks
    ordered_json checks = ordered_json::array();
    bool all_pass = true;
    const double band = 10.0 * std::max(sol.table.back().sup_dist, 1e-12);
    for (const std::string& name : cfg.checks) {
        try {
        if (name == "skorokhod") {
            const CheckReport rep =
                check_skorokhod(sol.paths, pseudo, report.r0, 200, cfg.seed, 1e-6);
            checks.push_back(to_json(rep));
            all_pass = all_pass && rep.pass;
        } else if (name == "var_domination") {
            const CheckReport rep =
                check_var_domination(sol.paths, pseudo, report.r0, generator, band);
            checks.push_back(to_json(rep));
            all_pass = all_pass && rep.pass;
        } else if (name == "distance_rate") {
            const CheckReport rep = check_distance_rate(sol.table);
            checks.push_back(to_json(rep));
            all_pass = all_pass && rep.pass;
        } else if (name == "holder") {
            std::vector<double> quotients;
            for (const auto& row : sol.table) quotients.push_back(row.holder_quotient);
            const CheckReport rep = check_holder(quotients);
            checks.push_back(to_json(rep));
            all_pass = all_pass && rep.pass;
        } else if (name == "gamma_martingale") {
            const CheckReport rep = gamma_martingale_check(sol.paths, bundle.domain,
                                                           pseudo, band, 0.05);
            checks.push_back(to_json(rep));
            all_pass = all_pass && rep.pass;
        } else if (name == "exp_moments") {
            std::vector<double> vars;
            vars.reserve(sol.paths.size());
            for (const auto& rp : sol.paths) vars.push_back(rp.var.back());
            const CheckReport rep = estimate_exp_moments(vars, 2.0, 1.1, report.r0);
            checks.push_back(to_json(rep));
            all_pass = all_pass && rep.pass;
        } else {
            throw std::invalid_argument("config: unknown check '" + name + "'");
        }
        } catch (const InsufficientData& e) {
            ordered_json j;
            j["name"] = name;
            j["pass"] = false;
            j["error"] = e.what();
            checks.push_back(j);
            all_pass = false;
        }
    }

    ordered_json root;
    root["experiment"] = "solve";
    root["final_n"] = sol.final_n;
    root["schedule_converged"] = sol.converged;
    root["checks"] = checks;
    detail::write_text_file(fs::path(cfg.output_dir) / "checks.json",
                            root.dump(2) + "\n");
    log << "solve experiment: final n = " << sol.final_n
        << ", sup_dist = " << format_double(sol.table.back().sup_dist) << "\n";
    return all_pass ? kExitOk : kExitCheckFailed;
}

// Parse a config file, apply overrides, dispatch. Maps error classes onto
// the documented exit codes.
inline int run_config(const std::string& config_path,
                      const std::vector<std::string>& overrides, std::ostream& log,
                      const std::string& output_dir_override = "",
                      int threads_override = 0, bool geometry_only = false) {
    nlohmann::json j;
    try {
        std::ifstream is(config_path);
        if (!is) {
            log << "cannot open config " << config_path << "\n";
            return kExitConfigError;
        }
        j = nlohmann::json::parse(is);
        for (const auto& o : overrides) apply_override(j, o);
        if (!output_dir_override.empty()) j["output_dir"] = output_dir_override;
        else if (!j.contains("output_dir")) {
            if (const char* env = std::getenv("RBSDE_OUTPUT_DIR")) j["output_dir"] = env;
        }
        if (threads_override > 0) j["threads"] = threads_override;
        if (geometry_only && !j.contains("n_schedule"))
            j["n_schedule"] = std::vector<int>{1};
        RunConfig cfg = RunConfig::parse(j);
        cfg.geometry_only = geometry_only;
        return run_experiment(cfg, log);
    } catch (const nlohmann::json::exception& e) {
        log << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const std::invalid_argument& e) {
        log << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const InfeasibleSpec& e) {
        log << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const NotStarShaped& e) {
        log << "geometry inadmissible: " << e.what() << "\n";
        return kExitGeometryInadmissible;
    } catch (const PicardDivergence& e) {
        log << "solver failure: " << e.what() << "\n";
        return kExitSolverFailure;
    } catch (const NonConvergence& e) {
        log << "solver failure: " << e.what() << "\n";
        return kExitSolverFailure;
    }
}

}  // namespace rbsde
