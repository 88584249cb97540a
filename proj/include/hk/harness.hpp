#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hk/engine.hpp"
#include "hk/model.hpp"
#include "hk/oracle.hpp"

namespace hk {

struct Scenario {
    std::string name;
    ModelSpec spec;
    bool kappa_nonneg = false;
    bool truncated_upper = false;  // HU flag
    bool truncated_lower = false;  // HL flag
    bool has_fourier_oracle = false;
    double fourier_kappa0 = 0.0;
    Pt fourier_shift{};  // constant-drift translation of the symmetric oracle
};

// catalog: gaussian-exact, holder-diffusion, const-jump, signed-jump,
// truncated-jump, kato-drift; alpha overrides the catalog default when > 0
Scenario make_scenario(const std::string& name, double alpha = -1.0);
std::vector<std::string> scenario_names();

struct CheckResult {
    std::string name;
    std::string anchor;  // stable property id
    double value = 0.0;
    double tol = 0.0;
    bool pass = false;
    bool skipped = false;
    std::string witness;
};

struct ScenarioReport {
    std::string scenario;
    uint64_t seed = 0;
    double grid_tol = 0.0;
    double horizon = 0.0;
    double runtime_sec = 0.0;
    std::vector<CheckResult> checks;

    bool all_pass() const;
    std::string to_json() const;
};

struct VerifyOptions {
    uint64_t seed = 20240817;
    bool with_mc = true;         // Monte Carlo cross-checks (the slow part)
    long mc_paths = 1000000;
    int ck_probes = 200;
    EngineConfig engine;
    std::optional<double> grid_tol_override;
};

// measured discretization error of the pipeline: the gaussian-exact scenario
// run through the same lattice class, midpoint C-K residual x 3
double calibrate_grid_tol(bool general_path, const VerifyOptions& opt);

ScenarioReport verify_scenario(const std::string& name, const VerifyOptions& opt);
std::vector<ScenarioReport> verify_all(const VerifyOptions& opt);

struct CompareReport {
    double sup_rel = 0.0;
    double sup_abs = 0.0;
    double l1 = 0.0;
    double region_radius = 0.0;
    std::string to_json() const;
};

// error metrics between two tables on |y - center| <= region_radius (the
// second table is interpolated onto the first table's lattice)
CompareReport compare_tables(const KernelTable& a, const KernelTable& b, double region_radius);

std::string reports_to_json(const std::vector<ScenarioReport>& reports, uint64_t seed);

}  // namespace hk
