#include "hk/profiles.hpp"

#include <algorithm>
#include <random>
#include <sstream>

#include "hk/quadrature.hpp"

namespace hk {

void ComparisonProfile::validate() const {
    if (!(lambda > 0.0)) throw ConfigError("profile: lambda must be positive");
    if (!(scale > 0.0)) throw ConfigError("profile: scale must be positive");
    if (family != ProfileFamily::XI && !(alpha > 0.0 && alpha < 2.0))
        throw ConfigError("profile: alpha must lie in (0,2) for ETA families");
}

double log_evaluate_profile(const ComparisonProfile& p, int d, double t, double r2) {
    if (!(t > 0.0)) throw DomainError("profile: t must be positive");
    if (d < 1) throw DomainError("profile: d must be >= 1");
    p.validate();
    const double lc = std::log(p.scale);
    switch (p.family) {
        case ProfileFamily::XI:
            return lc + 0.5 * (p.gamma - d) * std::log(t) - p.lambda * r2 / t;
        case ProfileFamily::ETA: {
            const double r = std::sqrt(r2);
            return lc + 0.5 * p.gamma * std::log(t) -
                   (d + p.alpha) * std::log(r + std::sqrt(t));
        }
        case ProfileFamily::ETA_BAR: {
            const double r = std::sqrt(r2);
            if (r <= 0.5) {
                return lc + std::log(t) - (d + p.alpha) * std::log(r + std::sqrt(t));
            }
            return lc + p.lambda * r * (std::log(t) - std::log(r));
        }
    }
    throw ConfigError("profile: unknown family");
}

double evaluate_profile(const ComparisonProfile& p, int d, double t, const Pt& x) {
    return std::exp(log_evaluate_profile(p, d, t, x.norm2()));
}

double evaluate_profile_r(const ComparisonProfile& p, int d, double t, double radius) {
    return std::exp(log_evaluate_profile(p, d, t, radius * radius));
}

double xi(double lambda, double gamma, int d, double t, double r2) {
    ComparisonProfile p{ProfileFamily::XI, lambda, gamma, 1.0, 1.0};
    return std::exp(log_evaluate_profile(p, d, t, r2));
}

double eta(double alpha, double gamma, int d, double t, double r2) {
    ComparisonProfile p{ProfileFamily::ETA, 1.0, gamma, alpha, 1.0};
    return std::exp(log_evaluate_profile(p, d, t, r2));
}

double eta_bar(double alpha, double lambda, int d, double t, double r2) {
    ComparisonProfile p{ProfileFamily::ETA_BAR, lambda, 0.0, alpha, 1.0};
    return std::exp(log_evaluate_profile(p, d, t, r2));
}

ConvolutionIdentityReport check_gaussian_convolution_identity(double lambda, int d, double t,
                                                              double s, const Pt& x,
                                                              int quad_points) {
    if (!(t > 0.0) || !(s > 0.0))
        throw DomainError("gaussian convolution identity: t, s must be positive");
    ConvolutionIdentityReport rep;
    // The integrand is a Gaussian peaked at y* = x s/(t+s); integrate on a
    // +-8 sigma box per axis, tensor Gauss-Legendre.
    const double sigma = std::sqrt(0.5 * (t * s / (t + s)) / lambda);
    Pt ystar = x * (s / (t + s));
    const double L = 8.0 * sigma;
    const int n = std::max(16, quad_points);
    auto ax = std::vector<QuadRule>(size_t(d));
    for (int k = 0; k < d; ++k) ax[size_t(k)] = gauss_legendre(n, ystar[k] - L, ystar[k] + L);

    double lhs = 0.0;
    if (d == 1) {
        for (int i = 0; i < n; ++i) {
            Pt y(ax[0].nodes[size_t(i)]);
            lhs += ax[0].weights[size_t(i)] * xi(lambda, 0, d, t, (x - y).norm2()) *
                   xi(lambda, 0, d, s, y.norm2());
        }
    } else if (d == 2) {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                Pt y(ax[0].nodes[size_t(i)], ax[1].nodes[size_t(j)]);
                lhs += ax[0].weights[size_t(i)] * ax[1].weights[size_t(j)] *
                       xi(lambda, 0, d, t, (x - y).norm2()) * xi(lambda, 0, d, s, y.norm2());
            }
    } else if (d == 3) {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k) {
                    Pt y(ax[0].nodes[size_t(i)], ax[1].nodes[size_t(j)], ax[2].nodes[size_t(k)]);
                    lhs += ax[0].weights[size_t(i)] * ax[1].weights[size_t(j)] *
                           ax[2].weights[size_t(k)] * xi(lambda, 0, d, t, (x - y).norm2()) *
                           xi(lambda, 0, d, s, y.norm2());
                }
    } else {
        throw ConfigError("gaussian convolution identity: d <= 3 supported");
    }
    rep.lhs = lhs;
    rep.rhs = std::pow(kPi / lambda, 0.5 * d) * xi(lambda, 0, d, t + s, x.norm2());
    rep.rel_error = std::abs(rep.lhs - rep.rhs) / rep.rhs;
    rep.converged = std::isfinite(rep.rel_error);
    return rep;
}

InequalityKind inequality_kind_from_name(const std::string& name) {
    if (name == "eq3p") return InequalityKind::EQ3P;
    if (name == "ineq") return InequalityKind::INEQ;
    if (name == "etaLower") return InequalityKind::ETA_LOWER;
    if (name == "3P") return InequalityKind::THREE_P;
    if (name == "UY3") return InequalityKind::UY3;
    if (name == "UY1") return InequalityKind::UY1;
    if (name == "UY2") return InequalityKind::UY2;
    throw ConfigError("unknown inequality name: " + name);
}

std::string inequality_kind_name(InequalityKind k) {
    switch (k) {
        case InequalityKind::EQ3P: return "eq3p";
        case InequalityKind::INEQ: return "ineq";
        case InequalityKind::ETA_LOWER: return "etaLower";
        case InequalityKind::THREE_P: return "3P";
        case InequalityKind::UY3: return "UY3";
        case InequalityKind::UY1: return "UY1";
        case InequalityKind::UY2: return "UY2";
    }
    return "?";
}

std::string InequalityReport::to_json() const {
    std::ostringstream os;
    os.precision(12);
    os << "{\"name\":\"" << name << "\",\"n_samples\":" << n_samples
       << ",\"max_ratio\":" << max_ratio << ",\"bound\":" << bound
       << ",\"bound_is_fitted\":" << (bound_is_fitted ? "true" : "false")
       << ",\"pass\":" << (pass ? "true" : "false") << ",\"note\":\"" << note << "\"}";
    return os.str();
}

namespace {

// radial profile evaluator f(t, r) for the families used in the checks
struct RadialKernel {
    ProfileFamily fam;
    double a = 1.0;      // alpha (ETA)
    double lam = 1.0;    // lambda (XI)
    double g = 0.0;      // gamma
    int d = 2;
    double operator()(double t, double r) const {
        if (fam == ProfileFamily::XI) return xi(lam, g, d, t, r * r);
        return eta(a, g, d, t, r * r);
    }
};

// integral over R^2 of f1(t1, |w - u|) f2(t2, |u|) du with |w| = rho.
double radial_conv2(const RadialKernel& f1, double t1, const RadialKernel& f2, double t2,
                    double rho) {
    const QuadRule ang = gauss_legendre(48, 0.0, kPi);
    const double r_lo = 1e-6 * std::min(1.0, std::sqrt(std::min(t1, t2)));
    const double r_hi = 1e4 * (rho + std::sqrt(t1) + std::sqrt(t2) + 1.0);
    const int decades = int(std::ceil(std::log10(r_hi / r_lo)));
    double total = 0.0;
    for (int dec = 0; dec < decades; ++dec) {
        const double a = r_lo * std::pow(10.0, dec);
        const double b = std::min(a * 10.0, r_hi);
        const QuadRule rad = gauss_legendre(12, a, b);
        for (size_t i = 0; i < rad.nodes.size(); ++i) {
            const double r = rad.nodes[i];
            double angsum = 0.0;
            for (size_t j = 0; j < ang.nodes.size(); ++j) {
                const double c = std::cos(ang.nodes[j]);
                const double dist = std::sqrt(std::max(0.0, rho * rho + r * r - 2.0 * rho * r * c));
                angsum += ang.weights[j] * f1(t1, dist);
            }
            total += rad.weights[i] * r * f2(t2, r) * 2.0 * angsum;
        }
        if (b >= r_hi) break;
    }
    return total;
}

// integral over R^2 of eta_{a,g}(t, x) dx by log-radial quadrature
double eta_mass(double alpha, double gamma, double t) {
    const double r_lo = 1e-6 * std::sqrt(t);
    const double r_hi = 1e5 * std::sqrt(t) + 1e4;
    const int decades = int(std::ceil(std::log10(r_hi / r_lo)));
    double total = 0.0;
    for (int dec = 0; dec < decades; ++dec) {
        const double a = r_lo * std::pow(10.0, dec);
        const double b = std::min(a * 10.0, r_hi);
        const QuadRule rad = gauss_legendre(16, a, b);
        for (size_t i = 0; i < rad.nodes.size(); ++i)
            total += rad.weights[i] * rad.nodes[i] * eta(alpha, gamma, 2, t, rad.nodes[i] * rad.nodes[i]);
        if (b >= r_hi) break;
    }
    return 2.0 * kPi * total;
}

// space-time convolution integral_t^s integral f1(r-t, z-x) f2(s-r, y-z) dz dr
// with the time rule matched to the endpoint exponents (g1, g2).
double spacetime_conv(const RadialKernel& f1, const RadialKernel& f2, double t, double s,
                      double rho, double g1, double g2, int n_t = 20) {
    const QuadRule tr = beta_singular_time_rule(g1, g2, n_t, t, s);
    double total = 0.0;
    for (size_t i = 0; i < tr.nodes.size(); ++i) {
        const double r = tr.nodes[i];
        const double tau1 = r - t, tau2 = s - r;
        const double inner = radial_conv2(f2, tau2, f1, tau1, rho);
        // strip the weight's power factors back out of the integrand value
        const double reg = inner * std::pow(tau1, -g1 / 2.0) * std::pow(tau2, -g2 / 2.0);
        total += tr.weights[i] * reg;
    }
    return total;
}

}  // namespace

InequalityReport check_3p_inequality(InequalityKind which, const InequalityParams& prm,
                                     int n_samples, uint64_t rng_seed) {
    InequalityReport rep;
    rep.name = inequality_kind_name(which);
    const int d = prm.d;
    if (d != 2 && which != InequalityKind::EQ3P)
        throw ConfigError("integral inequality checks support d = 2");

    const double t_lo = 1e-3, t_hi = prm.T;
    const double x_max = 10.0 * std::sqrt(prm.T);

    // pointwise kinds afford many samples; quadrature kinds are capped
    int n = n_samples;
    const bool pointwise = (which == InequalityKind::EQ3P);
    if (!pointwise) n = std::min(n_samples, 160);
    rep.n_samples = n;

    std::vector<double> ratios(size_t(n), 0.0);

#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) {
        std::mt19937_64 rng(derive_seed(rng_seed, uint64_t(i)));
        std::uniform_real_distribution<double> ut(t_lo, t_hi);
        std::uniform_real_distribution<double> ux(-x_max, x_max);
        auto draw_pt = [&]() {
            Pt p;
            for (int k = 0; k < d; ++k) p[k] = ux(rng);
            return p;
        };
        double t = ut(rng), s = ut(rng);
        Pt x = draw_pt(), y = draw_pt();
        double ratio = 0.0;
        switch (which) {
            case InequalityKind::EQ3P: {
                if (!(prm.alpha <= prm.beta)) throw ConfigError("eq3p requires alpha <= beta");
                const double lhs =
                    eta(prm.alpha, 0, d, t, x.norm2()) * eta(prm.beta, 0, d, s, y.norm2());
                const double rhs =
                    (eta(prm.beta, 0, d, t, x.norm2()) + eta(prm.beta, 0, d, s, y.norm2())) *
                    eta(prm.alpha, 0, d, t + s, (x + y).norm2());
                ratio = lhs / rhs;
                break;
            }
            case InequalityKind::INEQ: {
                if (prm.gamma1 < 0.0) throw ConfigError("ineq requires gamma >= 0");
                const double mass = eta_mass(prm.alpha, prm.gamma1, t);
                ratio = mass / std::pow(t, 0.5 * (prm.gamma1 - prm.alpha));
                break;
            }
            case InequalityKind::ETA_LOWER: {
                if (prm.gamma1 < 0.0 || prm.gamma1 > prm.alpha)
                    throw ConfigError("etaLower requires gamma in [0, alpha]");
                RadialKernel f1{ProfileFamily::ETA, prm.alpha, 1.0, prm.gamma1, d};
                RadialKernel f2{ProfileFamily::ETA, prm.alpha, 1.0, prm.alpha, d};
                const double conv = radial_conv2(f1, t, f2, s, x.norm());
                const double env = eta(prm.alpha, prm.gamma1, d, t + s, x.norm2());
                ratio = env / conv;  // bound = 1/C3
                break;
            }
            case InequalityKind::THREE_P: {
                if (!(prm.gamma1 > prm.beta - 2.0) || !(prm.gamma2 > prm.beta - 2.0))
                    throw ConfigError("3P requires gamma1, gamma2 > beta - 2");
                if (s < t) std::swap(s, t);
                if (s - t < 1e-3) s = t + 1e-3;
                RadialKernel f2{ProfileFamily::ETA, prm.beta, 1.0, prm.gamma2, d};  // source leg
                RadialKernel f1{ProfileFamily::ETA, prm.alpha, 1.0, prm.gamma1, d}; // target leg
                const double rho = (y - x).norm();
                const double val = spacetime_conv(f2, f1, t, s, rho, prm.gamma2 - prm.beta,
                                                  prm.gamma1 - prm.beta);
                const double env = beta_function(0.5 * (prm.gamma1 - prm.beta) + 1.0,
                                                 0.5 * (prm.gamma2 - prm.beta) + 1.0) *
                                   eta(prm.alpha, 2.0 + prm.gamma1 + prm.gamma2 - prm.beta, d,
                                       s - t, rho * rho);
                ratio = val / env;
                break;
            }
            case InequalityKind::UY3: {
                if (!(prm.gamma1 > -2.0) || !(prm.gamma2 > prm.alpha - 2.0))
                    throw ConfigError("UY3 requires gamma1 > -2, gamma2 > alpha - 2");
                if (s < t) std::swap(s, t);
                if (s - t < 1e-3) s = t + 1e-3;
                RadialKernel f2{ProfileFamily::XI, 1.0, prm.lambda, prm.gamma1, d};
                RadialKernel f1{ProfileFamily::ETA, prm.alpha, 1.0, prm.gamma2, d};
                const double rho = (y - x).norm();
                const double val =
                    spacetime_conv(f2, f1, t, s, rho, prm.gamma1, prm.gamma2 - prm.alpha);
                const double env =
                    beta_function(0.5 * prm.gamma1 + 1.0, 0.5 * (prm.gamma2 - prm.alpha) + 1.0) *
                    eta(prm.alpha, 2.0 + prm.gamma1 + prm.gamma2, d, s - t, rho * rho);
                ratio = val / env;
                break;
            }
            case InequalityKind::UY1:
            case InequalityKind::UY2: {
                // b == 1: K^1_2(delta) = (8 pi / 3) sqrt(delta) in d = 2
                if (s < t) std::swap(s, t);
                if (s - t < 1e-3) s = t + 1e-3;
                const int j = int(prm.gamma1 + 0.5);  // j in {0, 1}
                const double rho = (y - x).norm();
                const double kb2 = (8.0 * kPi / 3.0) * std::sqrt(s - t);
                if (which == InequalityKind::UY1) {
                    RadialKernel f2{ProfileFamily::ETA, prm.alpha, 1.0, 2.0 - j, d};
                    RadialKernel f1{ProfileFamily::XI, 1.0, prm.lambda, -1.0, d};
                    const double val =
                        spacetime_conv(f2, f1, t, s, rho, 2.0 - j - prm.alpha, -1.0);
                    ratio = val / (kb2 * eta(prm.alpha, 2.0 - j, d, s - t, rho * rho));
                } else {
                    RadialKernel f2{ProfileFamily::XI, 1.0, prm.lambda, -double(j), d};
                    RadialKernel f1{ProfileFamily::XI, 1.0, 2.0 * prm.lambda, -1.0, d};
                    const double val = spacetime_conv(f2, f1, t, s, rho, -double(j), -1.0);
                    ratio = val / (kb2 * xi(prm.lambda, -double(j), d, s - t, rho * rho));
                }
                break;
            }
        }
        ratios[size_t(i)] = ratio;
    }

    rep.max_ratio = *std::max_element(ratios.begin(), ratios.end());
    if (which == InequalityKind::EQ3P) {
        rep.bound = std::pow(2.0, d + prm.alpha);
        rep.bound_is_fitted = false;
        rep.pass = rep.max_ratio <= rep.bound;
    } else {
        rep.bound = rep.max_ratio * 1.05;  // fitted constant with 5% margin
        rep.bound_is_fitted = true;
        // stability: max over the first half within 2x of the full max and finite
        double half_max = 0.0;
        for (int i = 0; i < rep.n_samples / 2; ++i)
            half_max = std::max(half_max, ratios[size_t(i)]);
        rep.pass = std::isfinite(rep.max_ratio) && rep.max_ratio > 0.0 &&
                   rep.max_ratio <= 2.0 * std::max(half_max, 1e-300);
        if (which == InequalityKind::ETA_LOWER)
            rep.note = "lower bound: fitted C3 = 1/bound";
    }
    return rep;
}

}  // namespace hk
