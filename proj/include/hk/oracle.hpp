#pragma once

#include <optional>

#include "hk/grid.hpp"
#include "hk/model.hpp"

namespace hk {

// Reference kernel for constant coefficients a = I, b = 0, kappa = kappa0 by
// radial inversion of the exact symbol exp(-t(|xi|^2/2 + (k0/A)|xi|^alpha)).
KernelTable fourier_reference(int d, double alpha, double kappa0, double t,
                              const SpaceTimeGrid& grid);

struct PathConfig {
    long n_paths = 100000;
    double dt = 1e-3;
    double eps_jump = 0.05;
    uint64_t rng_seed = 1;
};

struct PathStats {
    std::vector<Pt> endpoints;
    std::vector<int> jump_counts;
    double discarded_variance = 0.0;  // per unit time, from jumps below eps_jump
    double majorant_rate = 0.0;
};

// One path endpoint (for tests) and the batch simulator.  Requires kappa >= 0.
Pt simulate_endpoint(const ModelSpec& spec, double t0, const Pt& x0, double s,
                     const PathConfig& cfg, uint64_t path_index = 0);
PathStats simulate_batch(const ModelSpec& spec, double t0, const Pt& x0, double s,
                         const PathConfig& cfg);

struct KdeResult {
    KernelTable table;
    double bandwidth = 0.0;
    double effective_n = 0.0;
    std::vector<double> bootstrap_se;  // per grid node, from path chunks
};

// Gaussian-product KDE of an endpoint cloud on the grid (cloud-in-cell binning
// plus FFT smoothing).  bandwidth <= 0 selects Silverman's rule.
KdeResult density_mc(const std::vector<Pt>& cloud, const SpaceTimeGrid& grid, double bandwidth,
                     int bootstrap_chunks = 32);

struct ExitStats {
    double probability = 0.0;
    double std_error = 0.0;
    long n_paths = 0;
};

// P_{t,x}( exit of B(x, delta) before t + gamma delta^2 )
ExitStats exit_time_prob(const ModelSpec& spec, double t, const Pt& x, double delta, double gamma,
                         const PathConfig& cfg);
// P_{t,x}( hit B(y, delta) before t + gamma delta^2 )
ExitStats hitting_prob(const ModelSpec& spec, double t, const Pt& x, const Pt& y, double delta,
                       double gamma, const PathConfig& cfg);

}  // namespace hk
