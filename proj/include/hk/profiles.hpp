#pragma once

#include <cstdint>
#include <string>

#include "hk/common.hpp"

namespace hk {

enum class ProfileFamily { XI, ETA, ETA_BAR };

// One envelope kernel from the comparison family used by all two-sided
// estimates:
//   XI      : C * t^{(gamma-d)/2} exp(-lambda |x|^2 / t)
//   ETA     : C * t^{gamma/2} (|x| + sqrt(t))^{-d-alpha}
//   ETA_BAR : C * [ t (|x|+sqrt(t))^{-(d+alpha)}  for |x| <= 1/2
//                   (t/|x|)^{lambda |x|}          for |x| >  1/2 ]
struct ComparisonProfile {
    ProfileFamily family = ProfileFamily::XI;
    double lambda = 1.0;
    double gamma = 0.0;
    double alpha = 1.0;  // only meaningful for ETA / ETA_BAR
    double scale = 1.0;

    void validate() const;
};

// log of the profile value; computed in log space so the ETA_BAR power
// (t/|x|)^{lambda |x|} cannot overflow/underflow on the way.
double log_evaluate_profile(const ComparisonProfile& p, int d, double t, double r2);

double evaluate_profile(const ComparisonProfile& p, int d, double t, const Pt& x);
double evaluate_profile_r(const ComparisonProfile& p, int d, double t, double radius);

// Convenience evaluators for the bare families (scale C = 1).
double xi(double lambda, double gamma, int d, double t, double r2);
double eta(double alpha, double gamma, int d, double t, double r2);
double eta_bar(double alpha, double lambda, int d, double t, double r2);

struct ConvolutionIdentityReport {
    double lhs = 0.0;
    double rhs = 0.0;
    double rel_error = 0.0;
    bool converged = true;
};

// Checks integral xi_{l,0}(t, x-y) xi_{l,0}(s, y) dy = (pi/l)^{d/2} xi_{l,0}(t+s, x)
// by quadrature with n_r radial refinement levels.
ConvolutionIdentityReport check_gaussian_convolution_identity(double lambda, int d, double t,
                                                              double s, const Pt& x,
                                                              int quad_points = 96);

enum class InequalityKind { EQ3P, INEQ, ETA_LOWER, THREE_P, UY3, UY1, UY2 };

InequalityKind inequality_kind_from_name(const std::string& name);
std::string inequality_kind_name(InequalityKind k);

struct InequalityParams {
    int d = 2;
    double alpha = 1.0;
    double beta = 1.0;   // second stability index where applicable
    double lambda = 1.0;
    double gamma1 = 0.0;
    double gamma2 = 0.0;
    double T = 1.0;      // sampling horizon for (t, s)
};

struct InequalityReport {
    std::string name;
    int n_samples = 0;
    double max_ratio = 0.0;   // max over samples of LHS / RHS-envelope (C = 1)
    double bound = 0.0;       // the asserted constant if the paper names one, else fitted
    bool bound_is_fitted = false;
    bool pass = false;
    std::string note;

    std::string to_json() const;
};

// Randomized check of one comparison-kernel inequality.  For EQ3P the bound is
// the explicit constant 2^{d+alpha}; for the others a finite constant is
// fitted (max ratio * 1.05) and `pass` means the fit stayed finite and stable.
InequalityReport check_3p_inequality(InequalityKind which, const InequalityParams& params,
                                     int n_samples, uint64_t rng_seed);

}  // namespace hk
