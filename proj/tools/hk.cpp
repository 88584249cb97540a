#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "hk/harness.hpp"
#include "hk/kato.hpp"
#include "hk/profiles.hpp"

using namespace hk;
namespace fs = std::filesystem;

namespace {

int cmd_build(const std::string& config, const std::string& out_dir, double tol, double grid_h,
              double grid_R, double horizon) {
    ModelSpec spec = model_spec_from_json_file(config);
    EngineConfig cfg;
    if (tol > 0.0) cfg.series_rel_tol = tol;
    Engine eng(spec, cfg);
    const double T = horizon > 0.0 ? horizon : spec.T;
    DuhamelState st = eng.build(0.0, Pt{0.0, 0.0}, T);

    fs::create_directories(out_dir);
    KernelTable tab = st.to_table(st.stages.size() - 1, TableKind::P);
    if (grid_h > 0.0 || grid_R > 0.0) {
        // re-export on a user grid by interpolation
        const double R = grid_R > 0.0 ? grid_R : tab.grid.R;
        const double h = grid_h > 0.0 ? grid_h : tab.grid.h;
        const double snapped = std::round(R / h) * h;
        SpaceTimeGrid g(spec.d, h, snapped, tab.grid.center);
        KernelTable sub = tab;
        sub.grid = g;
        sub.values.assign(size_t(g.n_points), 0.0);
        for (long i = 0; i < g.n_points; ++i) {
            const Pt y = g.point(i);
            sub.values[size_t(i)] = tab.grid.contains(y) ? tab.interpolate(y) : 0.0;
        }
        tab = sub;
    }
    tab.write_csv(out_dir + "/p.csv");
    tab.write_meta_json(out_dir + "/p.json");

    std::ofstream os(out_dir + "/state.json");
    os << "{\n  \"delta\": " << st.window.window << ",\n  \"ell_hat\": " << st.window.ell_hat
       << ",\n  \"chat\": " << st.window.chat << ",\n  \"n_terms\": " << st.window.n_terms
       << ",\n  \"tail_bound\": " << st.window.tail_bound
       << ",\n  \"converged\": " << (st.window.converged ? "true" : "false")
       << ",\n  \"mass\": " << st.final_stage().mass
       << ",\n  \"truncated_tail\": " << st.final_stage().trunc_tail << "\n}\n";
    std::cout << "wrote " << out_dir << "/p.csv (window " << st.window.window << ", "
              << st.window.n_terms << " terms)\n";
    return 0;
}

int cmd_verify(const std::string& scenario, const std::string& config, const std::string& out,
               uint64_t seed, bool no_mc, long paths) {
    VerifyOptions opt;
    opt.seed = seed;
    opt.with_mc = !no_mc;
    opt.mc_paths = paths;
    std::vector<ScenarioReport> reports;
    if (!scenario.empty()) {
        reports.push_back(verify_scenario(scenario, opt));
    } else if (!config.empty()) {
        throw ConfigError("verify: custom configs run through `build`; use --scenario");
    } else {
        reports = verify_all(opt);
    }
    const std::string j = reports_to_json(reports, seed);
    if (!out.empty()) {
        std::ofstream os(out);
        os << j << "\n";
    }
    bool all = true;
    for (const auto& r : reports) {
        for (const auto& c : r.checks) {
            std::cout << r.scenario << " :: " << c.name << " = " << c.value
                      << (c.skipped ? " [skipped: " + c.witness + "]"
                                    : (c.pass ? " [pass]" : " [FAIL]"))
                      << "\n";
            if (!c.skipped && !c.pass) all = false;
        }
    }
    if (out.empty()) std::cout << j << "\n";
    return all ? 0 : 1;
}

int cmd_simulate(const std::string& config, long paths, uint64_t seed, double dt, double eps,
                 double horizon, const std::string& out_csv) {
    ModelSpec spec = model_spec_from_json_file(config);
    PathConfig pc;
    pc.n_paths = paths;
    pc.rng_seed = seed;
    pc.dt = dt;
    pc.eps_jump = eps;
    const double T = horizon > 0.0 ? horizon : spec.T;
    PathStats ps = simulate_batch(spec, 0.0, Pt{0.0, 0.0}, T, pc);
    std::ofstream os(out_csv);
    os.precision(12);
    os << "x1,x2,jumps\n";
    for (size_t i = 0; i < ps.endpoints.size(); ++i)
        os << ps.endpoints[i][0] << "," << ps.endpoints[i][1] << "," << ps.jump_counts[i] << "\n";
    std::cout << "wrote " << out_csv << " (" << paths << " paths, majorant rate "
              << ps.majorant_rate << ")\n";
    return 0;
}

int cmd_compare(const std::string& a_csv, const std::string& b_csv, double region) {
    KernelTable a = read_table_csv(a_csv);
    KernelTable b = read_table_csv(b_csv);
    if (region <= 0.0) region = 0.75 * a.grid.R;
    CompareReport rep = compare_tables(a, b, region);
    std::cout << rep.to_json() << "\n";
    return 0;
}

int cmd_profiles(const std::string& which, int n_samples, uint64_t seed, double alpha,
                 double beta, double g1, double g2) {
    if (which == "cke") {
        auto rep = check_gaussian_convolution_identity(1.0, 2, 0.5, 0.25, Pt{1.0, 0.0});
        std::cout << "{\"lhs\":" << rep.lhs << ",\"rhs\":" << rep.rhs
                  << ",\"rel_error\":" << rep.rel_error << "}\n";
        return rep.rel_error <= 1e-6 ? 0 : 1;
    }
    InequalityParams prm;
    prm.alpha = alpha;
    prm.beta = beta;
    prm.gamma1 = g1;
    prm.gamma2 = g2;
    InequalityReport rep = check_3p_inequality(inequality_kind_from_name(which), prm, n_samples,
                                               seed);
    std::cout << rep.to_json() << "\n";
    return rep.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"heat-kernel construction and verification for diffusions with jumps"};
    app.require_subcommand(1);

    std::string config, out_dir = "out", scenario, out_json;
    std::string table_a, table_b, which = "eq3p";
    double tol = -1.0, grid_h = -1.0, grid_R = -1.0, horizon = -1.0;
    double dt = 1e-3, eps = 0.05, region = -1.0;
    double alpha = 1.0, beta = 1.0, g1 = 0.0, g2 = 0.0;
    long paths = 100000;
    uint64_t seed = 1;
    bool no_mc = false;

    auto* build = app.add_subcommand("build", "construct the kernel from a model config");
    build->add_option("--config", config)->required();
    build->add_option("--out", out_dir);
    build->add_option("--tol", tol);
    build->add_option("--grid-h", grid_h);
    build->add_option("--grid-R", grid_R);
    build->add_option("--horizon", horizon);

    auto* verify = app.add_subcommand("verify", "run the verification suite");
    verify->add_option("--scenario", scenario);
    verify->add_option("--config", config);
    verify->add_option("--out", out_json);
    verify->add_option("--seed", seed);
    verify->add_option("--paths", paths);
    verify->add_flag("--no-mc", no_mc);

    auto* simulate = app.add_subcommand("simulate", "jump-diffusion endpoint sampler");
    simulate->add_option("--config", config)->required();
    simulate->add_option("--paths", paths);
    simulate->add_option("--seed", seed);
    simulate->add_option("--dt", dt);
    simulate->add_option("--eps-jump", eps);
    simulate->add_option("--horizon", horizon);
    simulate->add_option("--out", out_dir);

    auto* compare = app.add_subcommand("compare", "error metrics between two kernel tables");
    compare->add_option("--kernel", table_a)->required();
    compare->add_option("--kernel-b", table_b);
    compare->add_option("--region", region);

    auto* profiles = app.add_subcommand("profiles", "comparison-kernel identity checks");
    profiles->add_option("--check", which);
    profiles->add_option("--samples", paths);
    profiles->add_option("--seed", seed);
    profiles->add_option("--alpha", alpha);
    profiles->add_option("--beta", beta);
    profiles->add_option("--gamma1", g1);
    profiles->add_option("--gamma2", g2);

    // `compare --kernel A --kernel B` per the interface: allow repeated flag
    std::vector<std::string> kernels;
    compare->add_option("--kernels", kernels);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (build->parsed()) return cmd_build(config, out_dir, tol, grid_h, grid_R, horizon);
        if (verify->parsed()) return cmd_verify(scenario, config, out_json, seed, no_mc, paths);
        if (simulate->parsed())
            return cmd_simulate(config, paths, seed, dt, eps, horizon,
                                out_dir.ends_with(".csv") ? out_dir : out_dir + "/paths.csv");
        if (compare->parsed()) {
            if (table_b.empty() && kernels.size() == 2) {
                table_a = kernels[0];
                table_b = kernels[1];
            }
            if (table_b.empty()) throw ConfigError("compare needs two tables");
            return cmd_compare(table_a, table_b, region);
        }
        if (profiles->parsed())
            return cmd_profiles(which, int(paths), seed, alpha, beta, g1, g2);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
