#include "hk/gaussian.hpp"

namespace hk {

double sym_det(const SymMat& a) {
    switch (a.d) {
        case 1: return a(0, 0);
        case 2: return a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
        case 3:
            return a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) -
                   a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
                   a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
    }
    throw ConfigError("sym_det: d <= 3");
}

SymMat sym_inverse(const SymMat& a) {
    SymMat r;
    r.d = a.d;
    const double det = sym_det(a);
    if (std::abs(det) < 1e-300) throw DomainError("sym_inverse: singular matrix");
    switch (a.d) {
        case 1:
            r(0, 0) = 1.0 / det;
            return r;
        case 2:
            r(0, 0) = a(1, 1) / det;
            r(1, 1) = a(0, 0) / det;
            r(0, 1) = -a(0, 1) / det;
            r(1, 0) = -a(1, 0) / det;
            return r;
        case 3: {
            r(0, 0) = (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) / det;
            r(0, 1) = (a(0, 2) * a(2, 1) - a(0, 1) * a(2, 2)) / det;
            r(0, 2) = (a(0, 1) * a(1, 2) - a(0, 2) * a(1, 1)) / det;
            r(1, 0) = r(0, 1);
            r(1, 1) = (a(0, 0) * a(2, 2) - a(0, 2) * a(2, 0)) / det;
            r(1, 2) = (a(0, 2) * a(1, 0) - a(0, 0) * a(1, 2)) / det;
            r(2, 0) = r(0, 2);
            r(2, 1) = r(1, 2);
            r(2, 2) = (a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0)) / det;
            return r;
        }
    }
    throw ConfigError("sym_inverse: d <= 3");
}

double quad_form(const SymMat& a, const Pt& v) {
    double acc = 0.0;
    for (int i = 0; i < a.d; ++i)
        for (int j = 0; j < a.d; ++j) acc += a(i, j) * v[i] * v[j];
    return acc;
}

double gaussian_density(const SymMat& a_cov, const Pt& v) {
    const SymMat inv = sym_inverse(a_cov);
    const double det = sym_det(a_cov);
    const double q = quad_form(inv, v);
    return std::exp(-0.5 * q) / std::sqrt(std::pow(2.0 * kPi, a_cov.d) * det);
}

SymMat FrozenGaussian::covariance(double t, double s, const Pt& y) const {
    if (!(t < s)) throw DomainError("covariance: requires t < s");
    const auto& a = spec_->a;
    if (!a.time_dependent) return a.eval(t, y) * (s - t);
    const QuadRule gl = gauss_legendre(time_nodes_, t, s);
    SymMat acc;
    acc.d = spec_->d;
    for (size_t i = 0; i < gl.nodes.size(); ++i)
        acc = acc + a.eval(gl.nodes[i], y) * gl.weights[i];
    return acc;
}

double FrozenGaussian::z0(double t, const Pt& x, double s, const Pt& y) const {
    return gaussian_density(covariance(t, s, y), y - x);
}

Pt FrozenGaussian::grad_z0(double t, const Pt& x, double s, const Pt& y) const {
    const SymMat inv = sym_inverse(covariance(t, s, y));
    const Pt v = y - x;
    const double z = gaussian_density(covariance(t, s, y), v);
    Pt g;
    for (int i = 0; i < spec_->d; ++i) {
        double acc = 0.0;
        for (int j = 0; j < spec_->d; ++j) acc += inv(i, j) * v[j];
        g[i] = acc * z;
    }
    return g;
}

SymMat FrozenGaussian::hess_z0(double t, const Pt& x, double s, const Pt& y) const {
    const SymMat cov = covariance(t, s, y);
    const SymMat inv = sym_inverse(cov);
    const Pt v = y - x;
    const double z = gaussian_density(cov, v);
    Pt iv;
    for (int i = 0; i < spec_->d; ++i) {
        double acc = 0.0;
        for (int j = 0; j < spec_->d; ++j) acc += inv(i, j) * v[j];
        iv[i] = acc;
    }
    SymMat h;
    h.d = spec_->d;
    for (int i = 0; i < spec_->d; ++i)
        for (int j = 0; j < spec_->d; ++j) h(i, j) = (iv[i] * iv[j] - inv(i, j)) * z;
    return h;
}

double FrozenGaussian::q0(double t, const Pt& x, double s, const Pt& y) const {
    if (spec_->a.is_constant) return 0.0;
    const SymMat ax = spec_->a.eval(t, x);
    const SymMat ay = spec_->a.eval(t, y);
    const SymMat h = hess_z0(t, x, s, y);
    double acc = 0.0;
    for (int i = 0; i < spec_->d; ++i)
        for (int j = 0; j < spec_->d; ++j) acc += (ax(i, j) - ay(i, j)) * h(i, j);
    return 0.5 * acc;
}

}  // namespace hk
