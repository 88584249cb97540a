#include "hk/kato.hpp"

#include <sstream>

#include "hk/profiles.hpp"
#include "hk/quadrature.hpp"

namespace hk {

namespace {

double halton(int index, int base) {
    double f = 1.0, r = 0.0;
    int i = index;
    while (i > 0) {
        f /= base;
        r += f * (i % base);
        i /= base;
    }
    return r;
}

std::vector<std::pair<double, Pt>> probe_set(int n, int d, double T, double L) {
    std::vector<std::pair<double, Pt>> probes;
    const int bases[4] = {2, 3, 5, 7};
    for (int i = 1; i <= n; ++i) {
        double t = T * halton(i, bases[0]);
        Pt x;
        for (int k = 0; k < d; ++k) x[k] = L * (2.0 * halton(i, bases[k + 1]) - 1.0);
        probes.emplace_back(t, x);
    }
    return probes;
}

// weight kernel and the time-singularity exponent of its spatial mass
struct KatoWeight {
    KatoFamily family;
    double idx;
    int d;
    double operator()(double s, double r) const {
        switch (family) {
            case KatoFamily::K_ALPHA: return eta(idx, idx - 1.0, d, s, r * r);
            case KatoFamily::KBAR_ALPHA: return eta(idx, 0.0, d, s, r * r);
            case KatoFamily::N_LAMBDA: return xi(idx, -1.0, d, s, r * r);
        }
        return 0.0;
    }
    double time_exponent() const {
        // exponent g with integral_y w(s, y) dy ~ s^{g/2}
        switch (family) {
            case KatoFamily::K_ALPHA: return -1.0;
            case KatoFamily::KBAR_ALPHA: return -idx;
            case KatoFamily::N_LAMBDA: return -1.0;
        }
        return 0.0;
    }
};

}  // namespace

double kato_norm(const ScalarField& f, int d, KatoFamily family, double alpha_or_lambda,
                 double delta, const KatoQuad& quad) {
    if (d != 2) throw ConfigError("kato_norm: d = 2 supported");
    if (!(delta > 0.0)) throw DomainError("kato_norm: delta must be positive");
    const KatoWeight w{family, alpha_or_lambda, d};

    const auto probes = probe_set(quad.n_probes, d, quad.probe_T, quad.probe_L);
    const QuadRule ts = beta_singular_time_rule(w.time_exponent(), 0.0, quad.time_nodes, 0.0, delta);
    const QuadRule ang = gauss_legendre(quad.angular_nodes, 0.0, 2.0 * kPi);

    double worst = 0.0;
    bool diverged = false;
#pragma omp parallel for schedule(dynamic) reduction(max : worst)
    for (int pi = 0; pi < int(probes.size()); ++pi) {
        const auto& [t0, x0] = probes[size_t(pi)];
        double acc = 0.0;
        for (size_t it = 0; it < ts.nodes.size(); ++it) {
            const double s = ts.nodes[it];
            const double wt = ts.weights[it] * std::pow(s, -w.time_exponent() / 2.0);
            const double r_lo = 1e-4 * std::sqrt(s);
            const double r_hi = quad.space_radius;
            const int decades = int(std::ceil(std::log10(r_hi / r_lo)));
            double sp = 0.0;
            for (int dec = 0; dec < decades; ++dec) {
                const double a = r_lo * std::pow(10.0, dec);
                const double b = std::min(a * 10.0, r_hi);
                const QuadRule rad = gauss_legendre(quad.radial_nodes, a, b);
                for (size_t ir = 0; ir < rad.nodes.size(); ++ir) {
                    const double rr = rad.nodes[ir];
                    const double env = w(s, rr);
                    if (env <= 0.0) continue;
                    double angsum = 0.0;
                    for (size_t ia = 0; ia < ang.nodes.size(); ++ia) {
                        Pt y(rr * std::cos(ang.nodes[ia]), rr * std::sin(ang.nodes[ia]));
                        // the four-term +- abbreviation
                        angsum += ang.weights[ia] *
                                  (std::abs(f(t0 + s, x0 + y)) + std::abs(f(t0 - s, x0 + y)) +
                                   std::abs(f(t0 + s, x0 - y)) + std::abs(f(t0 - s, x0 - y)));
                    }
                    sp += rad.weights[ir] * rr * env * angsum;
                }
                if (b >= r_hi) break;
            }
            acc += wt * sp;
        }
        worst = std::max(worst, acc);
        if (!std::isfinite(acc)) diverged = true;
    }
    if (diverged) return std::numeric_limits<double>::quiet_NaN();
    return worst;
}

std::string KatoReport::to_json() const {
    std::ostringstream os;
    os.precision(10);
    os << "{\"family\":\""
       << (family == KatoFamily::K_ALPHA ? "K_alpha"
                                         : family == KatoFamily::KBAR_ALPHA ? "Kbar_alpha"
                                                                            : "N_lambda")
       << "\",\"index\":" << alpha_or_lambda << ",\"delta_grid\":[";
    for (size_t i = 0; i < delta_grid.size(); ++i)
        os << (i ? "," : "") << delta_grid[i];
    os << "],\"norms\":[";
    for (size_t i = 0; i < norms.size(); ++i) os << (i ? "," : "") << norms[i];
    os << "],\"verdict\":\"" << verdict << "\"}";
    return os.str();
}

KatoReport kato_membership(const ScalarField& f, int d, KatoFamily family, double alpha_or_lambda,
                           const std::vector<double>& delta_grid, const KatoQuad& quad) {
    KatoReport rep;
    rep.family = family;
    rep.alpha_or_lambda = alpha_or_lambda;
    rep.delta_grid = delta_grid;
    for (double dl : delta_grid)
        rep.norms.push_back(kato_norm(f, d, family, alpha_or_lambda, dl, quad));
    for (size_t i = 1; i < rep.delta_grid.size(); ++i)
        if (!(rep.delta_grid[i] > rep.delta_grid[i - 1]))
            throw ConfigError("kato_membership: delta grid must be increasing");
    bool finite = true;
    for (double v : rep.norms)
        if (!std::isfinite(v)) finite = false;
    if (!finite) {
        rep.verdict = "inconclusive";
        return rep;
    }
    // membership: norms shrink toward zero with delta
    const double lo = rep.norms.front(), hi = rep.norms.back();
    if (hi <= 0.0) {
        rep.verdict = "member";
    } else if (lo < 0.5 * hi) {
        rep.verdict = "member";
    } else if (lo > 0.9 * hi && hi > 1e-12) {
        rep.verdict = "nonmember";
    } else {
        rep.verdict = "inconclusive";
    }
    return rep;
}

KatoSubadditivityReport kato_subadditivity_check(const ScalarField& f, int d, double alpha,
                                                 double delta, int j_max, const KatoQuad& quad) {
    KatoSubadditivityReport rep;
    rep.delta = delta;
    rep.j_max = j_max;
    const double base = kato_norm(f, d, KatoFamily::K_ALPHA, alpha, delta, quad);
    for (int j = 1; j <= j_max; ++j) {
        const double kj = kato_norm(f, d, KatoFamily::K_ALPHA, alpha, j * delta, quad);
        rep.ratios.push_back(base > 0.0 ? kj / (double(j) * base) : 0.0);
    }
    double mx = 0.0;
    for (double r : rep.ratios) mx = std::max(mx, r);
    rep.fitted_c = mx * 1.05;
    rep.pass = std::isfinite(mx);
    return rep;
}

double drift_kato_k2(const ModelSpec& spec, double r, const KatoQuad& quad) {
    if (spec.b.is_zero) return 0.0;
    ScalarField babs = [&spec](double t, const Pt& x) { return spec.b.eval(t, x).norm(); };
    if (spec.b.is_constant) {
        // closed form in d = 2: K^c_2(r) = c * 4 * (2 pi / 6) * 2 sqrt(r)
        const double c = spec.b.const_value.norm();
        return c * (8.0 * kPi / 3.0) * std::sqrt(r);
    }
    return kato_norm(babs, spec.d, KatoFamily::K_ALPHA, 2.0, r, quad);
}

}  // namespace hk
