#pragma once

#include <string>
#include <vector>

#include "hk/model.hpp"

namespace hk {

enum class KatoFamily { K_ALPHA, KBAR_ALPHA, N_LAMBDA };

struct KatoQuad {
    int time_nodes = 12;
    int radial_nodes = 8;
    int angular_nodes = 16;
    double space_radius = 40.0;
    int n_probes = 32;          // quasi-random (t, x) probe points for the sup
    double probe_T = 1.0;
    double probe_L = 3.0;
};

struct KatoReport {
    KatoFamily family = KatoFamily::K_ALPHA;
    double alpha_or_lambda = 2.0;
    std::vector<double> delta_grid;
    std::vector<double> norms;
    std::string verdict;  // "member" | "nonmember" | "inconclusive"

    std::string to_json() const;
};

// sup over probes of the heat-kernel-weighted integral norm of |f| up to
// horizon delta.  The weight is eta_{a,a-1} (K), eta_{a,0} (Kbar) or
// xi_{lambda,-1} (N).
double kato_norm(const ScalarField& f, int d, KatoFamily family, double alpha_or_lambda,
                 double delta, const KatoQuad& quad = {});

// Evaluates the norm along a delta grid and classifies membership by the
// trend of the norms toward delta -> 0.
KatoReport kato_membership(const ScalarField& f, int d, KatoFamily family,
                           double alpha_or_lambda, const std::vector<double>& delta_grid,
                           const KatoQuad& quad = {});

struct KatoSubadditivityReport {
    double delta = 0.0;
    int j_max = 0;
    std::vector<double> ratios;  // K(j delta) / (j K(delta))
    double fitted_c = 0.0;
    bool pass = false;
};

KatoSubadditivityReport kato_subadditivity_check(const ScalarField& f, int d, double alpha,
                                                 double delta, int j_max,
                                                 const KatoQuad& quad = {});

// Kato norm of the model's drift (family K, index 2), used by the
// contraction estimate.
double drift_kato_k2(const ModelSpec& spec, double r, const KatoQuad& quad = {});

}  // namespace hk
