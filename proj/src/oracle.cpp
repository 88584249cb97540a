#include "hk/oracle.hpp"

#include <algorithm>
#include <random>

#include "hk/convolve.hpp"
#include "hk/gaussian.hpp"
#include "hk/nonlocal.hpp"
#include "hk/quadrature.hpp"

namespace hk {

KernelTable fourier_reference(int d, double alpha, double kappa0, double t,
                              const SpaceTimeGrid& grid) {
    if (d != 2 || grid.d != 2) throw ConfigError("fourier_reference: d = 2 supported");
    if (!(t > 0.0)) throw DomainError("fourier_reference: t must be positive");
    const double knorm = kappa0 / stable_normalizer(d, alpha);

    const double rho_max = std::sqrt(2.0 * 90.0 / t);
    const double r_diag = grid.R * std::sqrt(2.0) + grid.h;
    const int panels = std::max(48, int(std::ceil(r_diag * rho_max / 2.0)));
    const int nodes_per_panel = 8;

    // radial profile of p on a fine radius table, then map to the lattice
    const int nr = 4 * grid.per_axis;
    std::vector<double> radii(size_t(nr)), vals(size_t(nr), 0.0);
    for (int i = 0; i < nr; ++i) radii[size_t(i)] = r_diag * double(i) / double(nr - 1);

#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < nr; ++i) {
        const double r = radii[size_t(i)];
        double acc = 0.0;
        for (int p = 0; p < panels; ++p) {
            const double a = rho_max * double(p) / panels;
            const double b = rho_max * double(p + 1) / panels;
            const QuadRule gl = gauss_legendre(nodes_per_panel, a, b);
            for (size_t q = 0; q < gl.nodes.size(); ++q) {
                const double rho = gl.nodes[q];
                const double sym = 0.5 * rho * rho + knorm * std::pow(rho, alpha);
                acc += gl.weights[q] * rho * std::cyl_bessel_j(0.0, rho * r) *
                       std::exp(-t * sym);
            }
        }
        vals[size_t(i)] = acc / (2.0 * kPi);
    }

    KernelTable tab;
    tab.grid = grid;
    tab.t = 0.0;
    tab.s = t;
    tab.kind = TableKind::ORACLE_FOURIER;
    tab.source = grid.center;
    tab.values.assign(size_t(grid.n_points), 0.0);
    const double dr = radii[1] - radii[0];
    for (long i = 0; i < grid.n_points; ++i) {
        const double r = (grid.point(i) - grid.center).norm();
        const double u = std::min(r / dr, double(nr - 2));
        const size_t i0 = size_t(u);
        const double w = u - double(i0);
        tab.values[size_t(i)] = (1.0 - w) * vals[i0] + w * vals[i0 + 1];
    }
    return tab;
}

namespace {

struct JumpSampler {
    const ModelSpec* spec;
    double eps = 0.05;
    double majorant_rate = 0.0;  // Lambda_max = ||kappa|| 2 pi eps^{-alpha} / alpha

    JumpSampler(const ModelSpec& s, double eps_jump) : spec(&s), eps(eps_jump) {
        majorant_rate =
            s.kappa.sup * 2.0 * kPi * std::pow(eps, -s.alpha) / s.alpha;
    }

    // propose from the power-law majorant, accept with kappa/||kappa||
    std::optional<Pt> sample(std::mt19937_64& rng, double t, const Pt& x) const {
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        const double r = eps * std::pow(u01(rng), -1.0 / spec->alpha);
        const double th = 2.0 * kPi * u01(rng);
        Pt z(r * std::cos(th), r * std::sin(th));
        const double acc = spec->kappa.eval(t, x, z) / spec->kappa.sup;
        if (u01(rng) <= acc) return z;
        return std::nullopt;
    }
};

// drift that reproduces the generator's 1_{|z|<=1} recentering once jumps with
// |z| > eps are simulated explicitly
Pt effective_drift(const ModelSpec& spec, double t, const Pt& x, double eps) {
    Pt b = spec.b.eval(t, x);
    if (spec.kappa.is_zero) return b;
    const JKernel J = j_from_kappa(spec.kappa, t, x);
    if (J.even) return b;
    const Pt m = first_moment_annulus(J, spec.d, spec.alpha, eps, 1.0);
    return b - m;
}

struct StepContext {
    bool iso = false;
    double sqrt_dt = 0.0;
};

}  // namespace

Pt simulate_endpoint(const ModelSpec& spec, double t0, const Pt& x0, double s,
                     const PathConfig& cfg, uint64_t path_index) {
    if (spec.d != 2) throw ConfigError("simulate: d = 2 supported");
    if (!spec.kappa.is_zero && spec.kappa.inf < 0.0)
        throw ConfigError("simulate: sign-changing kappa cannot be simulated");
    std::mt19937_64 rng(derive_seed(cfg.rng_seed, path_index));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> u01(0.0, 1.0);

    const JumpSampler js(spec, cfg.eps_jump);
    double dt = cfg.dt;
    int sub = 1;
    if (!spec.kappa.is_zero && js.majorant_rate * dt > 0.1) {
        sub = int(std::ceil(js.majorant_rate * dt / 0.1));
        dt /= sub;
    }
    const long steps = std::lround((s - t0) / dt);
    const bool iso = spec.a.is_isotropic;
    const bool drift_cheap = spec.b.is_constant && (spec.kappa.is_zero || spec.kappa.even_in_z);
    Pt beff = drift_cheap ? effective_drift(spec, t0, x0, cfg.eps_jump) : Pt{};

    Pt x = x0;
    double t = t0;
    std::poisson_distribution<int> pois(spec.kappa.is_zero ? 0.0 : js.majorant_rate * dt);
    for (long k = 0; k < steps; ++k) {
        const double z1 = gauss(rng), z2 = gauss(rng);
        if (iso) {
            const double sig = std::sqrt(spec.a.iso(t, x) * dt);
            x[0] += sig * z1;
            x[1] += sig * z2;
        } else {
            const SymMat sg = matrix_sqrt(spec.a.eval(t, x));
            const double sq = std::sqrt(dt);
            x[0] += sq * (sg(0, 0) * z1 + sg(0, 1) * z2);
            x[1] += sq * (sg(1, 0) * z1 + sg(1, 1) * z2);
        }
        const Pt bd = drift_cheap ? beff : effective_drift(spec, t, x, cfg.eps_jump);
        x[0] += bd[0] * dt;
        x[1] += bd[1] * dt;
        if (!spec.kappa.is_zero) {
            const int nj = pois(rng);
            for (int j = 0; j < nj; ++j) {
                auto z = js.sample(rng, t, x);
                if (z) {
                    x[0] += (*z)[0];
                    x[1] += (*z)[1];
                }
            }
        }
        t += dt;
        (void)u01;
    }
    return x;
}

PathStats simulate_batch(const ModelSpec& spec, double t0, const Pt& x0, double s,
                         const PathConfig& cfg) {
    if (spec.d != 2) throw ConfigError("simulate: d = 2 supported");
    if (!spec.kappa.is_zero && spec.kappa.inf < 0.0)
        throw ConfigError("simulate: sign-changing kappa cannot be simulated");
    PathStats out;
    out.endpoints.assign(size_t(cfg.n_paths), Pt{});
    out.jump_counts.assign(size_t(cfg.n_paths), 0);

    const JumpSampler js(spec, cfg.eps_jump);
    out.majorant_rate = js.majorant_rate;
    if (!spec.kappa.is_zero) {
        // variance of the discarded small jumps, per unit time (trace of the
        // second moment over |z| <= eps)
        const SymMat m2 =
            inner_second_moment(j_from_kappa(spec.kappa, 0.0, Pt{}), spec.d, spec.alpha,
                                cfg.eps_jump);
        out.discarded_variance = m2(0, 0) + m2(1, 1);
    }

    double dt = cfg.dt;
    int sub = 1;
    if (!spec.kappa.is_zero && js.majorant_rate * dt > 0.1) {
        sub = int(std::ceil(js.majorant_rate * dt / 0.1));
        dt /= sub;
    }
    const long steps = std::lround((s - t0) / dt);
    const bool iso = spec.a.is_isotropic;
    const bool a_const = spec.a.is_constant;
    const bool drift_cheap = spec.b.is_constant && (spec.kappa.is_zero || spec.kappa.even_in_z);
    const Pt beff0 = drift_cheap ? effective_drift(spec, t0, x0, cfg.eps_jump) : Pt{};

#pragma omp parallel for schedule(static)
    for (long pi = 0; pi < cfg.n_paths; ++pi) {
        std::mt19937_64 rng(derive_seed(cfg.rng_seed, uint64_t(pi)));
        std::normal_distribution<double> gauss(0.0, 1.0);
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        std::poisson_distribution<int> pois(spec.kappa.is_zero ? 0.0 : js.majorant_rate * dt);
        Pt x = x0;
        double t = t0;
        int jumps = 0;
        const double sig_const = a_const && iso ? std::sqrt(spec.a.iso(0.0, Pt{})) : 0.0;
        for (long k = 0; k < steps; ++k) {
            const double z1 = gauss(rng), z2 = gauss(rng);
            if (a_const && iso) {
                const double sig = sig_const * std::sqrt(dt);
                x[0] += sig * z1;
                x[1] += sig * z2;
            } else if (iso) {
                const double sig = std::sqrt(spec.a.iso(t, x) * dt);
                x[0] += sig * z1;
                x[1] += sig * z2;
            } else {
                const SymMat sg = matrix_sqrt(spec.a.eval(t, x));
                const double sq = std::sqrt(dt);
                x[0] += sq * (sg(0, 0) * z1 + sg(0, 1) * z2);
                x[1] += sq * (sg(1, 0) * z1 + sg(1, 1) * z2);
            }
            const Pt bd = drift_cheap ? beff0 : effective_drift(spec, t, x, cfg.eps_jump);
            x[0] += bd[0] * dt;
            x[1] += bd[1] * dt;
            if (!spec.kappa.is_zero) {
                const int nj = pois(rng);
                for (int j = 0; j < nj; ++j) {
                    auto z = js.sample(rng, t, x);
                    if (z) {
                        x[0] += (*z)[0];
                        x[1] += (*z)[1];
                        ++jumps;
                    }
                }
            }
            t += dt;
        }
        out.endpoints[size_t(pi)] = x;
        out.jump_counts[size_t(pi)] = jumps;
        (void)u01;
    }
    return out;
}

KdeResult density_mc(const std::vector<Pt>& cloud, const SpaceTimeGrid& grid, double bandwidth,
                     int bootstrap_chunks) {
    if (cloud.empty()) throw ConfigError("density_mc: empty cloud");
    if (grid.d != 2) throw ConfigError("density_mc: d = 2 supported");
    const long n = long(cloud.size());

    if (bandwidth <= 0.0) {
        // Silverman's rule with the average marginal spread
        double mean0 = 0.0, mean1 = 0.0;
        for (const Pt& p : cloud) {
            mean0 += p[0];
            mean1 += p[1];
        }
        mean0 /= double(n);
        mean1 /= double(n);
        double var = 0.0;
        for (const Pt& p : cloud)
            var += (p[0] - mean0) * (p[0] - mean0) + (p[1] - mean1) * (p[1] - mean1);
        var /= double(2 * n);
        bandwidth = std::sqrt(var) * std::pow(double(n), -1.0 / 6.0);
    }

    const double cell = grid.h * grid.h;
    const int nax = grid.per_axis;
    auto bin_points = [&](long lo, long hi) {
        std::vector<double> dens(size_t(grid.n_points), 0.0);
        long used = 0;
        for (long i = lo; i < hi; ++i) {
            const Pt& p = cloud[size_t(i)];
            const double ux = (p[0] - grid.center[0] + grid.R) / grid.h;
            const double uy = (p[1] - grid.center[1] + grid.R) / grid.h;
            if (ux < 0.0 || ux > nax - 1 || uy < 0.0 || uy > nax - 1) continue;
            const int ix = std::min(int(ux), nax - 2), iy = std::min(int(uy), nax - 2);
            const double fx = ux - ix, fy = uy - iy;
            dens[size_t(long(ix) * nax + iy)] += (1.0 - fx) * (1.0 - fy);
            dens[size_t(long(ix + 1) * nax + iy)] += fx * (1.0 - fy);
            dens[size_t(long(ix) * nax + iy + 1)] += (1.0 - fx) * fy;
            dens[size_t(long(ix + 1) * nax + iy + 1)] += fx * fy;
            ++used;
        }
        for (double& v : dens) v /= double(hi - lo) * cell;
        return std::make_pair(dens, used);
    };

    // Gaussian smoothing kernel on the offset lattice
    std::vector<double> ker(size_t(grid.n_points), 0.0);
    const int half = (nax - 1) / 2;
    const double h2 = bandwidth * bandwidth;
    for (long i = 0; i < grid.n_points; ++i) {
        const auto m = grid.multi_index(i);
        const double dx = (m[0] - half) * grid.h, dy = (m[1] - half) * grid.h;
        ker[size_t(i)] = std::exp(-0.5 * (dx * dx + dy * dy) / h2) / (2.0 * kPi * h2);
    }

    LatticeFft fft(grid.d, nax);
    const auto ker_spec = fft.forward(ker);
    auto smooth = [&](const std::vector<double>& dens) {
        auto out = fft.convolve_spectra(fft.forward(dens), ker_spec);
        for (double& v : out) v *= cell;
        return out;
    };

    auto [full_dens, used] = bin_points(0, n);
    KdeResult res;
    res.bandwidth = bandwidth;
    res.effective_n = double(used);
    res.table.grid = grid;
    res.table.kind = TableKind::ORACLE_MC;
    res.table.source = grid.center;
    res.table.values = smooth(full_dens);
    res.table.truncated_mass = 1.0 - double(used) / double(n);

    if (bootstrap_chunks > 1) {
        const long chunk = n / bootstrap_chunks;
        std::vector<std::vector<double>> chunk_vals;
        for (int c = 0; c < bootstrap_chunks; ++c) {
            auto [d0, u0] = bin_points(c * chunk, (c + 1) * chunk);
            (void)u0;
            chunk_vals.push_back(smooth(d0));
        }
        res.bootstrap_se.assign(size_t(grid.n_points), 0.0);
        for (long i = 0; i < grid.n_points; ++i) {
            double mean = 0.0;
            for (const auto& cv : chunk_vals) mean += cv[size_t(i)];
            mean /= double(bootstrap_chunks);
            double var = 0.0;
            for (const auto& cv : chunk_vals)
                var += (cv[size_t(i)] - mean) * (cv[size_t(i)] - mean);
            var /= double(bootstrap_chunks - 1);
            res.bootstrap_se[size_t(i)] = std::sqrt(var / double(bootstrap_chunks));
        }
    }
    return res;
}

namespace {

ExitStats ball_event_prob(const ModelSpec& spec, double t0, const Pt& x0, const Pt& target,
                          double delta, double gamma, const PathConfig& cfg, bool exit_mode) {
    if (spec.d != 2) throw ConfigError("exit stats: d = 2 supported");
    if (!spec.kappa.is_zero && spec.kappa.inf < 0.0)
        throw ConfigError("exit stats: kappa must be nonnegative");
    const double horizon = gamma * delta * delta;
    const JumpSampler js(spec, cfg.eps_jump);
    double dt = std::min(cfg.dt, horizon / 64.0);
    if (!spec.kappa.is_zero && js.majorant_rate * dt > 0.1)
        dt = 0.1 / js.majorant_rate;
    const long steps = std::max(1L, std::lround(horizon / dt));
    const bool iso = spec.a.is_isotropic;
    const bool drift_cheap = spec.b.is_constant && (spec.kappa.is_zero || spec.kappa.even_in_z);
    const Pt beff0 = drift_cheap ? effective_drift(spec, t0, x0, cfg.eps_jump) : Pt{};

    long hits = 0;
#pragma omp parallel for schedule(static) reduction(+ : hits)
    for (long pi = 0; pi < cfg.n_paths; ++pi) {
        std::mt19937_64 rng(derive_seed(cfg.rng_seed ^ 0x5151, uint64_t(pi)));
        std::normal_distribution<double> gauss(0.0, 1.0);
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        std::poisson_distribution<int> pois(spec.kappa.is_zero ? 0.0 : js.majorant_rate * dt);
        Pt x = x0;
        double t = t0;
        bool event = false;
        for (long k = 0; k < steps && !event; ++k) {
            const double z1 = gauss(rng), z2 = gauss(rng);
            if (iso) {
                const double sig = std::sqrt(spec.a.iso(t, x) * dt);
                x[0] += sig * z1;
                x[1] += sig * z2;
            } else {
                const SymMat sg = matrix_sqrt(spec.a.eval(t, x));
                const double sq = std::sqrt(dt);
                x[0] += sq * (sg(0, 0) * z1 + sg(0, 1) * z2);
                x[1] += sq * (sg(1, 0) * z1 + sg(1, 1) * z2);
            }
            const Pt bd = drift_cheap ? beff0 : effective_drift(spec, t, x, cfg.eps_jump);
            x[0] += bd[0] * dt;
            x[1] += bd[1] * dt;
            if (!spec.kappa.is_zero) {
                const int nj = pois(rng);
                for (int j = 0; j < nj; ++j) {
                    auto z = js.sample(rng, t, x);
                    if (z) {
                        x[0] += (*z)[0];
                        x[1] += (*z)[1];
                    }
                    if (exit_mode ? (x - x0).norm() > delta : (x - target).norm() < delta) {
                        event = true;
                        break;
                    }
                }
            }
            if (exit_mode ? (x - x0).norm() > delta : (x - target).norm() < delta) event = true;
            t += dt;
        }
        if (event) ++hits;
        (void)u01;
    }
    ExitStats st;
    st.n_paths = cfg.n_paths;
    st.probability = double(hits) / double(cfg.n_paths);
    st.std_error = std::sqrt(std::max(1e-12, st.probability * (1.0 - st.probability)) /
                             double(cfg.n_paths));
    return st;
}

}  // namespace

ExitStats exit_time_prob(const ModelSpec& spec, double t, const Pt& x, double delta, double gamma,
                         const PathConfig& cfg) {
    return ball_event_prob(spec, t, x, x, delta, gamma, cfg, true);
}

ExitStats hitting_prob(const ModelSpec& spec, double t, const Pt& x, const Pt& y, double delta,
                       double gamma, const PathConfig& cfg) {
    return ball_event_prob(spec, t, x, y, delta, gamma, cfg, false);
}

}  // namespace hk
