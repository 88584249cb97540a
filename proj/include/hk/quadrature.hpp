#pragma once

#include <vector>

#include "hk/common.hpp"

namespace hk {

struct QuadRule {
    std::vector<double> nodes;
    std::vector<double> weights;

    template <class F>
    double integrate(F&& f) const {
        double s = 0.0;
        for (size_t i = 0; i < nodes.size(); ++i) s += weights[i] * f(nodes[i]);
        return s;
    }
};

// Gauss-Legendre rule on [a, b].
QuadRule gauss_legendre(int n, double a, double b);

// Gauss-Jacobi rule for the weight (1-u)^p (1+u)^q on [-1, 1], p, q > -1.
QuadRule gauss_jacobi(int n, double p, double q);

// Nodes/weights exact (degree 2n-1 in the smooth factor) for
//   integral_t^s f(r) (r-t)^{g1/2} (s-r)^{g2/2} dr.
// Requires g1, g2 > -2 and t < s.
QuadRule beta_singular_time_rule(double g1, double g2, int n, double t, double s);

// Time mesh on [a, b] clustered at both endpoints (smoothstep grading).
// Returns m+1 strictly increasing nodes, mesh[0] = a, mesh[m] = b.
std::vector<double> graded_mesh(double a, double b, int m);

// Product-integration weights for integral_a^b F(r) dr where
//   F(r) = (r-a)^{aL} (b-r)^{aR} * P(r)
// and P is piecewise linear on the given mesh (mesh.front()=a, mesh.back()=b).
// Returns one weight per mesh node, to be dotted with the regularized nodal
// values P_j = F(r_j) (r_j-a)^{-aL} (b-r_j)^{-aR}.  At nodes where the power
// factor vanishes, callers supply the finite regularized limit (usually by
// extrapolation).  Exponents must be > -1.
std::vector<double> product_weights(const std::vector<double>& mesh, double aL, double aR);

// B(p, q) = Gamma(p) Gamma(q) / Gamma(p+q), p, q > 0.
double beta_function(double p, double q);

// log Gamma wrapper.
double log_gamma(double x);

}  // namespace hk
