#pragma once

#include <array>
#include <memory>
#include <vector>

#include "hk/grid.hpp"
#include "hk/model.hpp"
#include "hk/nonlocal.hpp"

namespace hk {

struct EngineConfig {
    int time_cells = 12;        // cells of the graded window mesh
    int per_axis_ti = 129;      // lattice nodes per axis, translation-invariant path
    int per_axis_gen = 33;      // lattice nodes per axis, general path
    double extent_sigmas = 6.0; // lattice half-extent in units of sqrt(c2 tau)
    double chat = 4.0;          // safety constant for the contraction window
    int max_terms = 16;         // series depth cap
    double series_rel_tol = 1e-8;
    double window_override = 0.0;  // > 0 forces the window length
    double res_cells = 1.0;        // short-time substitution threshold, in cells
    bool force_general = false;    // run the matrix path even for constant coefficients
    bool build_companions = true;
    bool keep_iterates = false;    // keep per-level final-time slices
    int profile_nodes = 512;
    int max_window_splits = 12;
};

// One dyadic stage of the construction: the fixed-source slice at horizon tau
// together with its derivative companions.
struct StageResult {
    SpaceTimeGrid grid;
    double tau = 0.0;
    std::vector<double> p;
    std::array<std::vector<double>, 2> grad;
    std::vector<double> frac;
    bool has_companions = false;
    bool has_frac = false;
    double mass = 0.0;
    double trunc_tail = 0.0;  // reported envelope mass outside the lattice
};

struct WindowDetail {
    double window = 0.0;
    double ell_hat = 0.0;
    double chat = 0.0;
    int n_terms = 0;
    double tail_bound = 0.0;
    bool converged = true;
    std::vector<double> mesh;  // absolute times, mesh.front() = t0
    SpaceTimeGrid grid;
    std::vector<std::vector<double>> u_mesh;     // p(t0,x0;r_m,.) per mesh time
    std::vector<double> level_sup;               // sup norm of each iterate at the window end
    std::vector<std::vector<double>> iterates;   // per-level final slices (optional)
    std::vector<std::vector<double>> mesh_matrix;  // general path: p(t0,z;r_m,y) per mesh time
};

struct DuhamelState {
    const ModelSpec* spec = nullptr;
    EngineConfig cfg;
    double t0 = 0.0;
    Pt x0{};
    double horizon = 0.0;
    bool translation_invariant = true;
    bool gauss_only = false;  // built for the diffusion part alone (Z)
    WindowDetail window;
    std::vector<StageResult> stages;                // stages[k] at tau = window * 2^k
    std::vector<std::vector<double>> stage_matrix;  // general path: p(t0,z;t0+tau_k,y), row-major

    const StageResult& final_stage() const { return stages.back(); }
    KernelTable to_table(size_t stage_idx, TableKind kind) const;

    // p(t0, z; t0 + tau_k, y) from the stage representation (matrix row or
    // translation-invariant slice)
    double eval_two_point(size_t stage_idx, const Pt& z, const Pt& y) const;
};

struct QSeriesResult {
    KernelTable table;               // Q(t, x; s, y_target) over x
    std::vector<double> level_sup;   // sup norms of the Q_n iterates
    bool converged = true;
    bool warning = false;
};

struct ResidualField {
    SpaceTimeGrid grid;
    std::vector<double> residual;  // pointwise Duhamel defect at the window end
    double sup = 0.0;
    double kernel_scale = 0.0;  // sup |p| on the same slice, for relative reads
};

class Engine {
  public:
    struct Ctx;  // scenario-level kernel machinery, defined in the implementation

    Engine(const ModelSpec& spec, EngineConfig cfg = {});

    const ModelSpec& spec() const { return *spec_; }
    const EngineConfig& config() const { return cfg_; }

    // ell_{b,kappa}(r) = ||kappa|| (r^{1-a/2} + r^{1/2}) + K^b_2(r)
    double contraction(double r) const;
    // largest dyadic fraction of `horizon` with chat * ell <= 1/2
    double choose_window(double horizon) const;

    // full kernel construction: window series + dyadic extension to `horizon`
    DuhamelState build(double t0, const Pt& x0, double horizon) const;

    // diffusion-only fundamental solution (the Levi series for L^a)
    DuhamelState build_gauss(double t0, const Pt& x0, double horizon) const;

    // continue the dyadic extension of an existing state
    void extend_by_ck(DuhamelState& state, double new_horizon) const;

    // fixed-target correction-series field Q(t, .; s, y) on the window lattice
    QSeriesResult q_series(double t, double s, const Pt& y_target, int n_max,
                           double tol) const;

    // fixed-source Z table (kind Z) at the given horizon
    KernelTable assemble_Z(double t0, const Pt& x0, double horizon) const;

    // pointwise defect of the Duhamel fixed point over the window slice
    ResidualField duhamel_residual(const DuhamelState& state) const;

    // P_{t0,t0+tau} f on the stage lattice (values at lattice sources for the
    // general path; at x0 + v for translation invariant)
    std::vector<double> semigroup_apply(const DuhamelState& state, size_t stage_idx,
                                        const std::function<double(const Pt&)>& f) const;

    // sup over window-mesh probes of |P_{t,s}f - f - int P L f|
    double generator_residual(const DuhamelState& state,
                              const C2Field& f) const;

  private:
    std::shared_ptr<Ctx> ctx_;
    const ModelSpec* spec_;
    EngineConfig cfg_;

    DuhamelState build_impl(double t0, const Pt& x0, double horizon, bool gauss_only) const;
};

// full generator L_t f(x) = (1/2) a : hess f + b . grad f + L^kappa f
double apply_generator(const ModelSpec& spec, const C2Field& f, double t, const Pt& x,
                       const NonlocalQuadSpec& quad = {});

// L^kappa f in the raw form of the operator definition (1_{|z|<=1} recentering),
// used to cross-check the compensated-drift decomposition
double apply_Lkappa_raw(const ModelSpec& spec, const C2Field& f, double t, const Pt& x,
                        const NonlocalQuadSpec& quad = {});

// Catmull-Rom resampling of a nodal field onto another lattice (zero outside)
std::vector<double> resample_field(const SpaceTimeGrid& from, const std::vector<double>& values,
                                   const SpaceTimeGrid& to);

}  // namespace hk
