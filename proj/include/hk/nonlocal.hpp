#pragma once

#include <functional>

#include "hk/convolve.hpp"
#include "hk/gaussian.hpp"
#include "hk/model.hpp"

namespace hk {

// Twice-differentiable scalar field with pointwise derivative access.
struct C2Field {
    std::function<double(const Pt&)> value;
    std::function<Pt(const Pt&)> grad;
    std::function<SymMat(const Pt&)> hess;
};

C2Field gaussian_c2field(const SymMat& cov, const Pt& center);

// z-kernel J(z) with the parity/support metadata the quadrature needs.
struct JKernel {
    std::function<double(const Pt&)> eval;
    bool even = true;
    bool radial = true;
    double sup = 1.0;
    double trunc_radius = -1.0;  // < 0: unbounded support
};

JKernel j_constant(double value);
JKernel j_from_kappa(const KappaField& kappa, double t, const Pt& x);

// alpha-regime normalizer A(d,-alpha) with L^kappa = (kappa/A) Delta^{alpha/2}
// for constant kappa.
double stable_normalizer(int d, double alpha);

struct NonlocalQuadSpec {
    double inner_radius = -1.0;   // <= 0: choose from the field scale
    int angular_nodes = 32;       // per half-circle; antipodal pairs are explicit
    int radial_nodes_per_decade = 12;
    double outer_radius = 1e4;
    double inner_radius_cap = 0.5;
};

// compensated increment delta^{(alpha)}_f(x; z)
double delta_increment(const C2Field& f, double alpha, const Pt& x, const Pt& z);

// L^J f(x) = integral delta^{(alpha)}_f(x;z) J(z) |z|^{-d-alpha} dz.
// Inner region handled by a second-order Taylor form against the exact
// moments of the measure, outer region by antipodally paired polar
// quadrature, far tail analytic in the f(x) term.
double apply_LJ(const C2Field& f, const JKernel& J, int d, double alpha, const Pt& x,
                const NonlocalQuadSpec& quad = {});

// L^{b,kappa}_t f(x) = btilde(t,x) . grad f(x) + L^{kappa(t,x,.)} f(x)
double apply_Lbk(const ModelSpec& spec, const C2Field& f, double t, const Pt& x,
                 const NonlocalQuadSpec& quad = {});

// Radial profile of L^{kappa}[G] for an isotropic Gaussian G with variance
// sigma2 * I and radial kappa(|z|); evaluated by interpolation.
class StableGaussianProfile {
  public:
    // master profile: unit variance, kappa == 1; exact rescaling gives any
    // variance when kappa is constant
    static StableGaussianProfile master(int d, double alpha, double r_max = 16.0,
                                        int n_nodes = 512);
    // fixed-variance profile for a general radial kappa (no rescaling)
    static StableGaussianProfile fixed(int d, double alpha, const JKernel& radial_kappa,
                                       double sigma2, double r_max, int n_nodes = 512);

    // L^{kappa}[G_{sigma2 I}](v) at |v| = r; master profiles accept any
    // sigma2, fixed profiles require the sigma2 they were built with.
    double eval(double r, double sigma2) const;

    bool is_master() const { return master_; }
    double built_sigma2() const { return sigma2_; }

  private:
    int d_ = 2;
    double alpha_ = 1.0;
    bool master_ = true;
    double sigma2_ = 1.0;
    double r_max_ = 16.0;
    double dr_ = 0.0;
    std::vector<double> vals_;
    double tail_coeff_ = 0.0;  // T(r) ~ tail_coeff * r^{-d-alpha} for large r

    double eval_unit(double r) const;
};

// L^{kappa} applied to a nodal field on a centered lattice, FFT outer region
// plus finite-difference inner Taylor; annihilates constants exactly.
struct TableNonlocal {
    SpaceTimeGrid grid;
    double alpha = 1.0;
    JKernel J;
    double inner_radius = 0.0;

    // precomputed pieces
    std::vector<double> w_reflected;  // J(z)|z|^{-d-a} on offsets, reflected
    double w_mass = 0.0;              // lattice mass of W (times cell volume)
    Pt w_first_moment{};              // lattice first moment of W
    SymMat m2_inner;                  // inner second moment of the measure
    Pt m1_inner{};                    // inner first moment (alpha < 1, odd J)
    Pt m1_unit{};                     // moment over inner_radius < |z| <= 1 (alpha = 1)
    double tail_mass = 0.0;           // analytic mass beyond the lattice reach
    std::shared_ptr<LatticeFft> fft;
    std::vector<std::complex<double>> w_spec;

    TableNonlocal(const SpaceTimeGrid& g, double alpha, const JKernel& J,
                  double inner_radius_cells = 3.0);

    std::vector<double> apply(const std::vector<double>& field) const;
};

// second moment of z (x) z J(z)|z|^{-d-alpha} over |z| <= rho
SymMat inner_second_moment(const JKernel& J, int d, double alpha, double rho);
// first moment of z J(z)|z|^{-d-alpha} over r0 < |z| <= r1 (paired quadrature)
Pt first_moment_annulus(const JKernel& J, int d, double alpha, double r0, double r1);
// mass of J(z)|z|^{-d-alpha} over |z| > R (angular average, analytic radial tail)
double tail_mass_beyond(const JKernel& J, int d, double alpha, double R);

}  // namespace hk
