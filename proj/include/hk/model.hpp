#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hk/common.hpp"
#include "hk/grid.hpp"

namespace hk {

// Scalar space-time field on a lattice loaded from CSV rows (t, x1..xd, value),
// evaluated by multilinear interpolation in (t, x).
struct GriddedScalarField {
    int d = 2;
    std::vector<double> t_nodes;
    SpaceTimeGrid grid;
    std::vector<std::vector<double>> slices;  // one nodal field per time node

    double eval(double t, const Pt& x) const;
};

GriddedScalarField gridded_field_from_csv(const std::string& path, int d);

// Diffusion coefficient a(t, x), symmetric d x d.  The catalog fields are
// either a constant matrix or an isotropic scalar multiple of the identity;
// isotropic fields expose the scalar and its derivatives for the short-time
// limit operator used by the kernel builders.
struct DiffusionField {
    std::string kind = "constant";
    bool is_constant = true;
    bool is_isotropic = true;
    bool time_dependent = false;

    std::function<SymMat(double, const Pt&)> eval;
    std::function<double(double, const Pt&)> iso;       // phi with a = phi * I
    std::function<Pt(double, const Pt&)> iso_grad;      // grad_x phi
    std::function<double(double, const Pt&)> iso_lap;   // Delta_x phi
};

DiffusionField diffusion_constant(int d, const SymMat& a);
DiffusionField diffusion_identity(int d, double scale = 1.0);
// a = (base + amp * sin(x[axis])) * I
DiffusionField diffusion_iso_trig(int d, double base, double amp, int axis = 0);
// a = (base + amp * exp(-1/(1-|x/r|^2)) on |x|<r) * I, smooth compact bump
DiffusionField diffusion_iso_bump(int d, double base, double amp, double radius);
// time-modulated isotropic: a = (base + amp*t) * I
DiffusionField diffusion_iso_linear_t(int d, double base, double amp);
DiffusionField diffusion_iso_gridded(int d, GriddedScalarField f);

struct DriftField {
    std::string kind = "zero";
    bool is_zero = true;
    bool is_constant = true;
    Pt const_value{};
    std::function<Pt(double, const Pt&)> eval;
};

DriftField drift_zero(int d);
DriftField drift_constant(int d, const Pt& b);
// b(t,x) = c * e_axis * |x|^{-1/2} 1_{|x| <= 1}, the singular Kato-class example
DriftField drift_kato_singular(int d, double c, int axis = 0);

struct KappaField {
    std::string kind = "zero";
    bool is_zero = true;
    bool x_dependent = false;
    bool even_in_z = true;
    bool radial_in_z = true;
    double sup = 0.0;            // ||kappa||_inf
    double inf = 0.0;            // m_kappa
    double trunc_radius = -1.0;  // < 0 means unbounded support in z
    std::function<double(double, const Pt&, const Pt&)> eval;
};

KappaField kappa_zero();
KappaField kappa_constant(double k0);
KappaField kappa_truncated(double k0, double radius);
// kappa = c * sin(z[axis]); sign-changing, odd in z
KappaField kappa_sin(double c, int axis = 0);
// kappa = k0 (1 + a cos(theta_z)), direction-dependent only
KappaField kappa_angular(double k0, double a);

// Declared hypothesis constants and regularity metadata.
struct ModelConstants {
    double c1 = 0.0;        // Holder coefficient of a
    double beta = 0.5;      // Holder exponent, in (0,1)
    double c2 = 1.0;        // ellipticity bound, >= 1
    double kappa_sup = 0.0;
    double kappa_inf = 0.0;
    std::optional<double> kappa_trunc_radius;
    bool b_in_k1 = false;        // declared b in K_1 (needed for alpha <= 1 frac der)
    bool b_in_kbar_alpha = false;  // declared b in Kbar_alpha (alpha in (1,2))
};

struct ModelSpec {
    int d = 2;
    double alpha = 1.0;
    double T = 1.0;
    DiffusionField a;
    DriftField b;
    KappaField kappa;
    ModelConstants constants;

    void validate_basic() const;
    bool translation_invariant() const {
        return a.is_constant && b.is_constant && !kappa.x_dependent;
    }
};

ModelSpec model_spec_from_json_file(const std::string& path);
ModelSpec model_spec_from_json_text(const std::string& text);

struct ValidationReport {
    bool pass = false;
    bool hard_failure = false;
    std::string failure_reason;
    double max_holder_quotient = 0.0;
    double min_eigenvalue = 0.0;
    double max_eigenvalue = 0.0;
    double sup_kappa_observed = 0.0;
    double inf_kappa_observed = 0.0;
    double symmetry_residual = 0.0;  // alpha = 1 ring average, worst case
    Pt witness{};

    std::string to_json() const;
};

// Samples (H^a)/(H^kappa) over the model's domain and compares with the
// declared constants.  alpha = 1 symmetry residual above `sym_tol` is a hard
// failure, as is any non-symmetric a sample.
ValidationReport validate_hypotheses(const ModelSpec& spec, int n_samples, uint64_t rng_seed,
                                     double sym_tol = 1e-8);

// Compensated drift: b plus/minus the jump compensator per the alpha regime.
Pt compensated_drift(const ModelSpec& spec, double t, const Pt& x, int radial_nodes = 24,
                     int angular_nodes = 64, double outer_radius = 1e4);

// Symmetric SPD square root via spectral decomposition.
SymMat matrix_sqrt(const SymMat& a);

using ScalarField = std::function<double(double, const Pt&)>;

// f * rho_eps with a fixed smooth bump on the unit ball of R^{d+1}.
ScalarField mollify(const ScalarField& f, int d, double epsilon, int nodes_per_axis = 10);

struct MollifierConvergenceReport {
    std::vector<double> epsilons;
    std::vector<double> metrics;  // decreasing along epsilons
    bool decreasing = true;
};

MollifierConvergenceReport mollifier_convergence_check(const ScalarField& f, int d, double alpha,
                                                       const std::vector<double>& eps_grid,
                                                       const std::vector<std::pair<double, Pt>>& probes);

}  // namespace hk
