#pragma once

#include "hk/model.hpp"
#include "hk/quadrature.hpp"

namespace hk {

double sym_det(const SymMat& a);
SymMat sym_inverse(const SymMat& a);
double quad_form(const SymMat& a, const Pt& v);  // <a v, v>

// Gaussian density with covariance A evaluated at v.
double gaussian_density(const SymMat& a_cov, const Pt& v);

// Frozen-coefficient Gaussian machinery: covariance A_{t,s}(y) is the time
// integral of the diffusion coefficient frozen at the target point y.
class FrozenGaussian {
  public:
    explicit FrozenGaussian(const ModelSpec* spec, int time_nodes = 8)
        : spec_(spec), time_nodes_(time_nodes) {}

    const ModelSpec& spec() const { return *spec_; }

    SymMat covariance(double t, double s, const Pt& y) const;

    // Z0(t,x;s,y) and its x-derivatives (closed form Gaussian-times-polynomial)
    double z0(double t, const Pt& x, double s, const Pt& y) const;
    Pt grad_z0(double t, const Pt& x, double s, const Pt& y) const;
    SymMat hess_z0(double t, const Pt& x, double s, const Pt& y) const;

    // Q0(t,x;s,y) = (1/2) sum_ij (a_ij(t,x) - a_ij(t,y)) d^2_{xi xj} Z0
    double q0(double t, const Pt& x, double s, const Pt& y) const;

  private:
    const ModelSpec* spec_;
    int time_nodes_;
};

}  // namespace hk
