#include "hk/quadrature.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <map>
#include <mutex>

namespace hk {

double log_gamma(double x) { return std::lgamma(x); }

double beta_function(double p, double q) {
    if (!(p > 0.0) || !(q > 0.0)) throw DomainError("beta_function: arguments must be positive");
    return std::exp(std::lgamma(p) + std::lgamma(q) - std::lgamma(p + q));
}

namespace {

// Golub-Welsch: nodes/weights from the symmetric Jacobi matrix of the
// three-term recurrence for the orthogonal polynomials of the weight.
QuadRule golub_welsch(const std::vector<double>& alpha, const std::vector<double>& beta,
                      double mu0) {
    const int n = int(alpha.size());
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        J(i, i) = alpha[size_t(i)];
        if (i + 1 < n) {
            const double b = std::sqrt(beta[size_t(i + 1)]);
            J(i, i + 1) = b;
            J(i + 1, i) = b;
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    QuadRule r;
    r.nodes.resize(size_t(n));
    r.weights.resize(size_t(n));
    for (int i = 0; i < n; ++i) {
        r.nodes[size_t(i)] = es.eigenvalues()(i);
        const double v = es.eigenvectors()(0, i);
        r.weights[size_t(i)] = mu0 * v * v;
    }
    return r;
}

// Recurrence coefficients for Jacobi weight (1-x)^p (1+x)^q on [-1,1].
void jacobi_coeffs(int n, double p, double q, std::vector<double>& alpha,
                   std::vector<double>& beta) {
    alpha.resize(size_t(n));
    beta.resize(size_t(n));
    const double pq = p + q;
    for (int k = 0; k < n; ++k) {
        const double kk = double(k);
        double a;
        if (k == 0) {
            a = (q - p) / (pq + 2.0);
        } else {
            const double den = (2.0 * kk + pq) * (2.0 * kk + pq + 2.0);
            a = (q * q - p * p) / den;
        }
        alpha[size_t(k)] = a;
        double b;
        if (k == 0) {
            b = std::exp((pq + 1.0) * std::log(2.0) + std::lgamma(p + 1.0) + std::lgamma(q + 1.0) -
                         std::lgamma(pq + 2.0));
        } else if (k == 1) {
            b = 4.0 * (p + 1.0) * (q + 1.0) / ((pq + 2.0) * (pq + 2.0) * (pq + 3.0));
        } else {
            const double kk2 = 2.0 * kk + pq;
            b = 4.0 * kk * (kk + p) * (kk + q) * (kk + pq) / (kk2 * kk2 * (kk2 + 1.0) * (kk2 - 1.0));
        }
        beta[size_t(k)] = b;
    }
}

std::mutex g_rule_mutex;
std::map<std::pair<int, std::pair<long long, long long>>, QuadRule> g_jacobi_cache;

}  // namespace

QuadRule gauss_jacobi(int n, double p, double q) {
    if (n < 1) throw ConfigError("gauss_jacobi: n must be >= 1");
    if (!(p > -1.0) || !(q > -1.0)) throw DomainError("gauss_jacobi: exponents must be > -1");
    // cache keyed on rounded exponents (exact for the values used in practice)
    const auto key = std::make_pair(n, std::make_pair((long long)std::llround(p * 1e12),
                                                      (long long)std::llround(q * 1e12)));
    {
        std::lock_guard<std::mutex> lk(g_rule_mutex);
        auto it = g_jacobi_cache.find(key);
        if (it != g_jacobi_cache.end()) return it->second;
    }
    std::vector<double> alpha, beta;
    jacobi_coeffs(n, p, q, alpha, beta);
    const double mu0 = beta[0];
    QuadRule r = golub_welsch(alpha, beta, mu0);
    {
        std::lock_guard<std::mutex> lk(g_rule_mutex);
        g_jacobi_cache[key] = r;
    }
    return r;
}

QuadRule gauss_legendre(int n, double a, double b) {
    QuadRule base = gauss_jacobi(n, 0.0, 0.0);
    QuadRule r;
    r.nodes.resize(base.nodes.size());
    r.weights.resize(base.weights.size());
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    for (size_t i = 0; i < base.nodes.size(); ++i) {
        r.nodes[i] = mid + half * base.nodes[i];
        r.weights[i] = half * base.weights[i];
    }
    return r;
}

QuadRule beta_singular_time_rule(double g1, double g2, int n, double t, double s) {
    if (!(g1 > -2.0) || !(g2 > -2.0))
        throw DomainError("beta_singular_time_rule: exponents must be > -2");
    if (!(t < s)) throw DomainError("beta_singular_time_rule: requires t < s");
    // map r = t + (s-t)(1+u)/2: (r-t)^{g1/2} ~ (1+u)^{g1/2}, (s-r)^{g2/2} ~ (1-u)^{g2/2}
    QuadRule base = gauss_jacobi(n, g2 / 2.0, g1 / 2.0);
    const double L = s - t;
    const double scale = std::pow(L / 2.0, 1.0 + (g1 + g2) / 2.0);
    QuadRule r;
    r.nodes.resize(base.nodes.size());
    r.weights.resize(base.weights.size());
    for (size_t i = 0; i < base.nodes.size(); ++i) {
        r.nodes[i] = t + L * (1.0 + base.nodes[i]) / 2.0;
        r.weights[i] = scale * base.weights[i];
    }
    return r;
}

std::vector<double> graded_mesh(double a, double b, int m) {
    if (m < 2) throw ConfigError("graded_mesh: need at least 2 cells");
    std::vector<double> mesh(size_t(m) + 1);
    for (int j = 0; j <= m; ++j) {
        const double th = double(j) / double(m);
        const double g = th * th * (3.0 - 2.0 * th);
        mesh[size_t(j)] = a + (b - a) * g;
    }
    mesh.front() = a;
    mesh.back() = b;
    return mesh;
}

std::vector<double> product_weights(const std::vector<double>& mesh, double aL, double aR) {
    const size_t n = mesh.size();
    if (n < 2) throw ConfigError("product_weights: mesh too short");
    if (!(aL > -1.0) || !(aR > -1.0)) throw DomainError("product_weights: exponents must be > -1");
    const double a = mesh.front(), b = mesh.back();
    std::vector<double> w(n, 0.0);
    // Per cell, integrate (linear hat functions) * (r-a)^{aL} (b-r)^{aR} with a
    // rule that is exact for the active power endpoint; 16-pt Jacobi per cell.
    for (size_t k = 0; k + 1 < n; ++k) {
        const double r0 = mesh[k], r1 = mesh[k + 1];
        const bool left_end = (k == 0) && aL != 0.0;
        const bool right_end = (k + 2 == n) && aR != 0.0;
        QuadRule cell;
        if (left_end && right_end) {
            cell = beta_singular_time_rule(2.0 * aL, 2.0 * aR, 16, r0, r1);
            for (size_t i = 0; i < cell.nodes.size(); ++i) {
                const double r = cell.nodes[i];
                const double lam = (r - r0) / (r1 - r0);
                w[k] += cell.weights[i] * (1.0 - lam);
                w[k + 1] += cell.weights[i] * lam;
            }
            continue;
        }
        if (left_end) {
            cell = beta_singular_time_rule(2.0 * aL, 0.0, 16, r0, r1);
        } else if (right_end) {
            cell = beta_singular_time_rule(0.0, 2.0 * aR, 16, r0, r1);
        } else {
            cell = gauss_legendre(12, r0, r1);
        }
        for (size_t i = 0; i < cell.nodes.size(); ++i) {
            const double r = cell.nodes[i];
            const double lam = (r - r0) / (r1 - r0);
            double f = cell.weights[i];
            if (!left_end && aL != 0.0) f *= std::pow(r - a, aL);
            if (!right_end && aR != 0.0) f *= std::pow(b - r, aR);
            if (left_end && aR != 0.0) f *= std::pow(b - r, aR);
            if (right_end && aL != 0.0) f *= std::pow(r - a, aL);
            w[k] += f * (1.0 - lam);
            w[k + 1] += f * lam;
        }
    }
    return w;
}

}  // namespace hk
