#include "hk/harness.hpp"

#include <chrono>
#include <cmath>
#include <map>
#include <mutex>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hk/kato.hpp"
#include "hk/profiles.hpp"
#include "hk/quadrature.hpp"

namespace hk {

using nlohmann::json;

namespace {

ModelConstants default_constants(double kappa_sup, double kappa_inf) {
    ModelConstants c;
    c.c1 = 0.0;
    c.beta = 0.9;
    c.c2 = 1.0;
    c.kappa_sup = kappa_sup;
    c.kappa_inf = kappa_inf;
    c.b_in_k1 = true;
    c.b_in_kbar_alpha = true;
    return c;
}

}  // namespace

std::vector<std::string> scenario_names() {
    return {"gaussian-exact", "holder-diffusion", "const-jump",
            "signed-jump",    "truncated-jump",   "kato-drift"};
}

Scenario make_scenario(const std::string& name, double alpha) {
    Scenario sc;
    sc.name = name;
    ModelSpec& m = sc.spec;
    m.d = 2;
    if (name == "gaussian-exact") {
        m.alpha = alpha > 0.0 ? alpha : 1.0;
        m.T = 1.0;
        m.a = diffusion_identity(2);
        m.b = drift_zero(2);
        m.kappa = kappa_zero();
        m.constants = default_constants(0.0, 0.0);
        sc.kappa_nonneg = true;
    } else if (name == "const-jump") {
        m.alpha = alpha > 0.0 ? alpha : 1.0;
        m.T = 0.25;
        m.a = diffusion_identity(2);
        m.b = drift_zero(2);
        m.kappa = kappa_constant(1.0);
        m.constants = default_constants(1.0, 1.0);
        sc.kappa_nonneg = true;
        sc.has_fourier_oracle = true;
        sc.fourier_kappa0 = 1.0;
    } else if (name == "holder-diffusion") {
        m.alpha = alpha > 0.0 ? alpha : 1.0;
        m.T = 0.25;
        m.a = diffusion_iso_trig(2, 1.0, 0.2);
        m.b = drift_zero(2);
        m.kappa = kappa_constant(0.5);
        m.constants = default_constants(0.5, 0.5);
        m.constants.c1 = 0.6;
        m.constants.c2 = 1.25;
        sc.kappa_nonneg = true;
    } else if (name == "signed-jump") {
        m.alpha = alpha > 0.0 ? alpha : 1.5;
        m.T = 0.25;
        m.a = diffusion_identity(2);
        m.b = drift_zero(2);
        m.kappa = kappa_sin(0.5);
        m.constants = default_constants(0.5, -0.5);
    } else if (name == "truncated-jump") {
        m.alpha = alpha > 0.0 ? alpha : 1.0;
        m.T = 0.25;
        m.a = diffusion_identity(2);
        m.b = drift_zero(2);
        m.kappa = kappa_truncated(1.0, 1.0);
        m.constants = default_constants(1.0, 0.0);
        m.constants.kappa_trunc_radius = 1.0;
        sc.kappa_nonneg = true;
        sc.truncated_upper = true;
        sc.truncated_lower = true;
    } else if (name == "kato-drift") {
        m.alpha = alpha > 0.0 ? alpha : 1.0;
        m.T = 0.25;
        m.a = diffusion_identity(2);
        m.b = drift_constant(2, Pt{0.3, 0.0});
        m.kappa = kappa_constant(0.25);
        m.constants = default_constants(0.25, 0.25);
        sc.kappa_nonneg = true;
        sc.has_fourier_oracle = true;
        sc.fourier_kappa0 = 0.25;
        sc.fourier_shift = Pt{0.3, 0.0};  // per unit time
    } else {
        throw ConfigError("unknown scenario: " + name);
    }
    return sc;
}

bool ScenarioReport::all_pass() const {
    for (const auto& c : checks)
        if (!c.skipped && !c.pass) return false;
    return true;
}

std::string ScenarioReport::to_json() const {
    json j;
    j["scenario"] = scenario;
    j["seed"] = seed;
    j["grid_tol"] = grid_tol;
    j["horizon"] = horizon;
    j["runtime_sec"] = runtime_sec;
    json arr = json::array();
    for (const auto& c : checks) {
        json cj;
        cj["name"] = c.name;
        cj["anchor"] = c.anchor;
        cj["value"] = c.value;
        cj["tol"] = c.tol;
        cj["pass"] = c.pass;
        cj["skipped"] = c.skipped;
        cj["witness"] = c.witness;
        arr.push_back(cj);
    }
    j["checks"] = arr;
    return j.dump(2);
}

std::string CompareReport::to_json() const {
    json j;
    j["sup_rel"] = sup_rel;
    j["sup_abs"] = sup_abs;
    j["l1"] = l1;
    j["region"] = region_radius;
    return j.dump();
}

CompareReport compare_tables(const KernelTable& a, const KernelTable& b, double region_radius) {
    CompareReport rep;
    rep.region_radius = region_radius;
    double l1 = 0.0;
    for (long i = 0; i < a.grid.n_points; ++i) {
        const Pt y = a.grid.point(i);
        if ((y - a.grid.center).norm() > region_radius) continue;
        double bv;
        try {
            bv = b.grid.contains(y) ? b.interpolate(y) : 0.0;
        } catch (const DomainError&) {
            bv = 0.0;
        }
        const double av = a.values[size_t(i)];
        const double diff = std::abs(av - bv);
        rep.sup_abs = std::max(rep.sup_abs, diff);
        if (std::abs(bv) > 1e-14) rep.sup_rel = std::max(rep.sup_rel, diff / std::abs(bv));
        l1 += diff;
    }
    rep.l1 = l1 * a.grid.h * a.grid.h;
    return rep;
}

// ---------------------------------------------------------------------------

namespace {

double slice_peak(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

// Catmull-Rom evaluation of a two-point stage kernel
double two_point_cr(const DuhamelState& st, size_t stage_idx, const Pt& z, const Pt& y) {
    const StageResult& s = st.stages.at(stage_idx);
    const SpaceTimeGrid& g = s.grid;
    auto cr_w = [](double u, int k) {
        switch (k) {
            case 0: return 0.5 * (-u * u * u + 2.0 * u * u - u);
            case 1: return 0.5 * (3.0 * u * u * u - 5.0 * u * u + 2.0);
            case 2: return 0.5 * (-3.0 * u * u * u + 4.0 * u * u + u);
            default: return 0.5 * (u * u * u - u * u);
        }
    };
    auto axis_setup = [&](double coord, int& i0, std::array<double, 4>& w) {
        const int n = g.per_axis;
        double u = (coord + g.R) / g.h;
        u = std::clamp(u, 0.0, double(n - 1));
        int i = std::min(int(std::floor(u)), n - 2);
        const double f = u - i;
        i0 = i;
        for (int k = 0; k < 4; ++k) w[size_t(k)] = cr_w(f, k);
    };
    const int n = g.per_axis;
    auto clampi = [n](int v) { return std::clamp(v, 0, n - 1); };

    if (st.translation_invariant) {
        const Pt q = y - z;
        if (std::abs(q[0]) > g.R || std::abs(q[1]) > g.R) return 0.0;
        int i0, j0;
        std::array<double, 4> wi, wj;
        axis_setup(q[0], i0, wi);
        axis_setup(q[1], j0, wj);
        double acc = 0.0;
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b)
                acc += wi[size_t(a)] * wj[size_t(b)] *
                       s.p[size_t(long(clampi(i0 - 1 + a)) * n + clampi(j0 - 1 + b))];
        return acc;
    }
    const auto& mat = st.stage_matrix.at(stage_idx);
    const long N = g.n_points;
    const Pt zc = z - g.center, yc = y - g.center;
    if (std::abs(zc[0]) > g.R || std::abs(zc[1]) > g.R || std::abs(yc[0]) > g.R ||
        std::abs(yc[1]) > g.R)
        return 0.0;
    int zi0, zj0, yi0, yj0;
    std::array<double, 4> wzi, wzj, wyi, wyj;
    axis_setup(zc[0], zi0, wzi);
    axis_setup(zc[1], zj0, wzj);
    axis_setup(yc[0], yi0, wyi);
    axis_setup(yc[1], yj0, wyj);
    double acc = 0.0;
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) {
            const double wz = wzi[size_t(a)] * wzj[size_t(b)];
            if (wz == 0.0) continue;
            const long row = long(clampi(zi0 - 1 + a)) * n + clampi(zj0 - 1 + b);
            const double* rp = mat.data() + size_t(row) * size_t(N);
            double v = 0.0;
            for (int c = 0; c < 4; ++c)
                for (int e = 0; e < 4; ++e)
                    v += wyi[size_t(c)] * wyj[size_t(e)] *
                         rp[size_t(long(clampi(yi0 - 1 + c)) * n + clampi(yj0 - 1 + e))];
            acc += wz * v;
        }
    return acc;
}

// midpoint Chapman-Kolmogorov residual at random probes, relative to the
// final-slice peak
double ck_midpoint_residual(const DuhamelState& st, int n_probes, uint64_t seed,
                            std::string* witness = nullptr) {
    if (st.stages.size() < 2) throw ConfigError("ck residual needs at least two stages");
    const size_t K = st.stages.size() - 1;
    const StageResult& half = st.stages[K - 1];
    const StageResult& full = st.stages[K];
    const double tau = full.tau;
    const double cell = half.grid.h * half.grid.h;
    const double peak = slice_peak(full.p);

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    auto draw_ball = [&](double radius) {
        const double r = radius * std::sqrt(u01(rng));
        const double th = 2.0 * kPi * u01(rng);
        return Pt{r * std::cos(th), r * std::sin(th)};
    };

    double worst = 0.0;
    Pt wx, wy;
    for (int i = 0; i < n_probes; ++i) {
        const Pt x = st.x0 + draw_ball(0.75 * std::sqrt(tau));
        const Pt y = st.x0 + draw_ball(2.0 * std::sqrt(tau));
        double lhs = 0.0;
        for (long zi = 0; zi < half.grid.n_points; ++zi) {
            const Pt z = half.grid.point(zi);
            lhs += two_point_cr(st, K - 1, x, z) * two_point_cr(st, K - 1, z, y);
        }
        lhs *= cell;
        const double rhs = two_point_cr(st, K, x, y);
        const double res = std::abs(lhs - rhs);
        if (res > worst) {
            worst = res;
            wx = x;
            wy = y;
        }
    }
    if (witness) {
        std::ostringstream os;
        os.precision(4);
        os << "x=(" << wx[0] << "," << wx[1] << ") y=(" << wy[0] << "," << wy[1] << ")";
        *witness = os.str();
    }
    return worst / std::max(peak, 1e-300);
}

struct EnvelopeFit {
    double constant = 0.0;
    double lambda = 0.0;
    bool finite = false;
};

// fit sup over nodes of |values| / (xi_{lam,g} + kap * eta_{a,geta}) over a
// lambda grid, 5% margin
EnvelopeFit fit_envelope(const SpaceTimeGrid& g, const std::vector<double>& values, double tau,
                         const Pt& center, double gamma_xi, double kap, double alpha,
                         double gamma_eta, double floor_rel = 0.0) {
    EnvelopeFit best;
    double peak = slice_peak(values);
    for (double lam : {0.125, 0.2, 0.3, 0.4, 0.5, 0.7, 1.0}) {
        double cmax = 0.0;
        bool ok = true;
        for (long i = 0; i < g.n_points; ++i) {
            const double v = std::abs(values[size_t(i)]);
            if (v <= floor_rel * peak) continue;
            const double r2 = (g.point(i) - center).norm2();
            double env = xi(lam, gamma_xi, g.d, tau, r2);
            if (kap != 0.0) env += kap * eta(alpha, gamma_eta, g.d, tau, r2);
            if (!(env > 0.0) || !std::isfinite(env)) {
                ok = false;
                break;
            }
            cmax = std::max(cmax, v / env);
        }
        if (ok && std::isfinite(cmax) && (best.constant == 0.0 || cmax < best.constant)) {
            best.constant = cmax;
            best.lambda = lam;
            best.finite = true;
        }
    }
    best.constant *= 1.05;
    return best;
}

// two-sided sandwich fit: smallest C with
//   C^{-1}(xi_{lam,0} + m eta_{a,2}) <= p <= C (xi_{1/lam,0} + M eta_{a,2})
EnvelopeFit fit_sandwich(const SpaceTimeGrid& g, const std::vector<double>& values, double tau,
                         const Pt& center, double m_low, double m_up, double alpha) {
    EnvelopeFit best;
    const double peak = slice_peak(values);
    for (double lam : {1.0, 1.5, 2.0, 3.0, 4.0, 6.0}) {
        double c_up = 0.0, c_lo = 0.0;
        bool ok = true;
        for (long i = 0; i < g.n_points; ++i) {
            const double v = values[size_t(i)];
            const double r2 = (g.point(i) - center).norm2();
            double env_up = xi(1.0 / (2.0 * lam), 0.0, g.d, tau, r2);
            double env_lo = xi(lam / 2.0, 0.0, g.d, tau, r2);
            if (m_up != 0.0) env_up += m_up * eta(alpha, 2.0, g.d, tau, r2);
            if (m_low != 0.0) env_lo += m_low * eta(alpha, 2.0, g.d, tau, r2);
            if (v > 1e-10 * peak) {
                c_up = std::max(c_up, v / env_up);
                c_lo = std::max(c_lo, env_lo / v);
            } else if (env_lo > 1e-6 * peak) {
                // the lower envelope is substantial but p is not positive there
                ok = false;
                break;
            }
        }
        const double c = std::max({c_up, c_lo, 1.0});
        if (ok && std::isfinite(c) && (best.constant == 0.0 || c < best.constant)) {
            best.constant = c;
            best.lambda = lam;
            best.finite = true;
        }
    }
    best.constant *= 1.05;
    return best;
}

CheckResult make_check(const std::string& name, const std::string& anchor, double value,
                       double tol, bool pass, const std::string& witness = "") {
    CheckResult c;
    c.name = name;
    c.anchor = anchor;
    c.value = value;
    c.tol = tol;
    c.pass = pass;
    c.witness = witness;
    return c;
}

CheckResult make_skip(const std::string& name, const std::string& anchor,
                      const std::string& why) {
    CheckResult c;
    c.name = name;
    c.anchor = anchor;
    c.skipped = true;
    c.pass = true;
    c.witness = why;
    return c;
}

std::mutex g_tol_mutex;
std::map<std::string, double> g_tol_cache;

}  // namespace

double calibrate_grid_tol(bool general_path, const VerifyOptions& opt) {
    std::ostringstream key;
    key << general_path << ":" << opt.engine.per_axis_ti << ":" << opt.engine.per_axis_gen << ":"
        << opt.engine.time_cells << ":" << opt.engine.extent_sigmas;
    {
        std::lock_guard<std::mutex> lk(g_tol_mutex);
        auto it = g_tol_cache.find(key.str());
        if (it != g_tol_cache.end()) return it->second;
    }
    Scenario sc = make_scenario("gaussian-exact");
    sc.spec.T = 0.25;
    EngineConfig cfg = opt.engine;
    cfg.force_general = general_path;
    cfg.window_override = sc.spec.T / 16.0;  // exercise the full dyadic cascade
    Engine eng(sc.spec, cfg);
    DuhamelState st = eng.build(0.0, Pt{0.1, -0.07}, sc.spec.T);
    const double resid = ck_midpoint_residual(st, std::min(opt.ck_probes, 100), opt.seed ^ 77);
    const double tol = std::max(3.0 * resid, 1e-7);
    {
        std::lock_guard<std::mutex> lk(g_tol_mutex);
        g_tol_cache[key.str()] = tol;
    }
    return tol;
}

ScenarioReport verify_scenario(const std::string& name, const VerifyOptions& opt) {
    const auto t_start = std::chrono::steady_clock::now();
    Scenario sc = make_scenario(name);
    const ModelSpec& spec = sc.spec;
    ScenarioReport rep;
    rep.scenario = name;
    rep.seed = opt.seed;
    rep.horizon = spec.T;

    Engine eng(spec, opt.engine);
    const bool general = !spec.translation_invariant() || opt.engine.force_general;
    rep.grid_tol = opt.grid_tol_override ? *opt.grid_tol_override
                                         : calibrate_grid_tol(general, opt);
    const double gt = rep.grid_tol;

    const Pt x0 = general ? Pt{0.3, -0.2} : Pt{0.0, 0.0};
    DuhamelState st = eng.build(0.0, x0, spec.T);
    const StageResult& fin = st.final_stage();
    const double tau = fin.tau;
    const double peak = slice_peak(fin.p);

    // 1. Duhamel fixed-point defect over the window slice
    {
        ResidualField rf = eng.duhamel_residual(st);
        const double rel = rf.sup / std::max(rf.kernel_scale, 1e-300);
        rep.checks.push_back(
            make_check("duhamel_residual", "duhamel_fixed_point", rel, 3.0 * gt, rel <= 3.0 * gt));
    }

    // 2. midpoint Chapman-Kolmogorov at random probes
    if (st.stages.size() >= 2) {
        std::string wit;
        const double r = ck_midpoint_residual(st, opt.ck_probes, opt.seed ^ 1234, &wit);
        rep.checks.push_back(
            make_check("ck_midpoint", "chapman_kolmogorov", r, 3.0 * gt, r <= 3.0 * gt, wit));
    } else {
        rep.checks.push_back(make_skip("ck_midpoint", "chapman_kolmogorov",
                                       "single-window build, no composition stages"));
    }

    // 3. conservativeness
    {
        const double defect = std::abs(fin.mass - 1.0);
        const double tol = 2.0 * gt + fin.trunc_tail;
        rep.checks.push_back(
            make_check("conservativeness", "unit_mass", defect, tol, defect <= tol));
    }

    // 4. upper envelope
    {
        EnvelopeFit f = fit_envelope(fin.grid, fin.p, tau, st.x0, 0.0, spec.kappa.sup, spec.alpha,
                                     2.0, 1e-12);
        rep.checks.push_back(make_check("upper_envelope", "upper_bound_estimate", f.constant,
                                        0.0, f.finite,
                                        "lambda=" + std::to_string(f.lambda)));
    }

    // 5. two-sided sandwich + refinement stability
    if (sc.kappa_nonneg && !spec.kappa.is_zero) {
        EnvelopeFit f = fit_sandwich(fin.grid, fin.p, tau, st.x0, spec.constants.kappa_inf,
                                     spec.kappa.sup, spec.alpha);
        rep.checks.push_back(make_check("two_sided_sandwich", "two_sided_bounds", f.constant, 0.0,
                                        f.finite, "lambda=" + std::to_string(f.lambda)));

        // refinement stability on the window slice
        EngineConfig fine = opt.engine;
        fine.per_axis_ti = 2 * opt.engine.per_axis_ti - 1;
        fine.per_axis_gen = 2 * opt.engine.per_axis_gen - 1;
        fine.build_companions = false;
        Engine eng2(spec, fine);
        const double w = st.window.window;
        EngineConfig coarse_one = opt.engine;
        coarse_one.window_override = w;
        coarse_one.build_companions = false;
        Engine eng1(spec, coarse_one);
        fine.window_override = w;
        Engine eng2b(spec, fine);
        DuhamelState s1 = eng1.build(0.0, st.x0, w);
        DuhamelState s2 = eng2b.build(0.0, st.x0, w);
        EnvelopeFit f1 = fit_sandwich(s1.stages[0].grid, s1.stages[0].p, w, st.x0,
                                      spec.constants.kappa_inf, spec.kappa.sup, spec.alpha);
        EnvelopeFit f2 = fit_sandwich(s2.stages[0].grid, s2.stages[0].p, w, st.x0,
                                      spec.constants.kappa_inf, spec.kappa.sup, spec.alpha);
        const double drift = std::abs(f2.constant - f1.constant) / std::max(f1.constant, 1e-12);
        rep.checks.push_back(make_check("sandwich_refinement", "two_sided_bounds_stability",
                                        drift, 0.25, f1.finite && f2.finite && drift <= 0.25));
        (void)eng2;
    } else {
        rep.checks.push_back(
            make_skip("two_sided_sandwich", "two_sided_bounds", "kappa not nonnegative"));
    }

    // 6/7. gradient companions: finite-difference agreement and envelope
    if (fin.has_companions) {
        const SpaceTimeGrid& g = fin.grid;
        const int n = g.per_axis;
        double worst = 0.0;
        for (long i = 0; i < g.n_points; ++i) {
            const auto m = g.multi_index(i);
            if (m[0] < 2 || m[0] > n - 3 || m[1] < 2 || m[1] > n - 3) continue;
            const Pt y = g.point(i);
            if ((y - st.x0).norm() > 2.0 * std::sqrt(tau)) continue;
            if (std::abs(fin.p[size_t(i)]) < 1e-3 * peak) continue;
            auto at = [&](int a, int b) { return fin.p[size_t(long(a) * n + b)]; };
            const double fdx = (-at(m[0] + 2, m[1]) + 8.0 * at(m[0] + 1, m[1]) -
                                8.0 * at(m[0] - 1, m[1]) + at(m[0] - 2, m[1])) /
                               (12.0 * g.h);
            const double fdy = (-at(m[0], m[1] + 2) + 8.0 * at(m[0], m[1] + 1) -
                                8.0 * at(m[0], m[1] - 1) + at(m[0], m[1] - 2)) /
                               (12.0 * g.h);
            // gradient in x equals minus the gradient in y for the leading slot?
            // no: the companions are d/dx0; compare against -d/dy only in the
            // translation-invariant case, else skip the sign mapping
            double gx = fin.grad[0][size_t(i)], gy = fin.grad[1][size_t(i)];
            double ref_x, ref_y;
            if (st.translation_invariant) {
                ref_x = -fdx;
                ref_y = -fdy;
            } else {
                // general case: no closed relation between x- and y-derivatives;
                // compare magnitudes only through the envelope check below
                continue;
            }
            const double mag = std::max({std::abs(ref_x), std::abs(ref_y), 1e-3 * peak});
            worst = std::max(worst, std::max(std::abs(gx - ref_x), std::abs(gy - ref_y)) / mag);
        }
        if (st.translation_invariant) {
            const double tol = std::max(1e-3, 5.0 * gt);
            rep.checks.push_back(
                make_check("gradient_fd", "gradient_vs_finite_difference", worst, tol,
                           worst <= tol));
        } else {
            rep.checks.push_back(make_skip("gradient_fd", "gradient_vs_finite_difference",
                                           "x-gradient not comparable to y-differences"));
        }
        std::vector<double> gmag(size_t(g.n_points), 0.0);
        for (long i = 0; i < g.n_points; ++i)
            gmag[size_t(i)] = std::hypot(fin.grad[0][size_t(i)], fin.grad[1][size_t(i)]);
        EnvelopeFit f = fit_envelope(g, gmag, tau, st.x0, -1.0, spec.kappa.sup, spec.alpha, 1.0,
                                     1e-10);
        rep.checks.push_back(make_check("gradient_envelope", "gradient_estimate", f.constant, 0.0,
                                        f.finite, "lambda=" + std::to_string(f.lambda)));
    }

    // 8. fractional derivative companion envelope
    if (fin.has_frac) {
        EnvelopeFit f;
        {
            // envelope eta_{alpha,0} only
            double cmax = 0.0;
            for (long i = 0; i < fin.grid.n_points; ++i) {
                const double v = std::abs(fin.frac[size_t(i)]);
                if (v < 1e-10 * peak) continue;
                const double r2 = (fin.grid.point(i) - st.x0).norm2();
                cmax = std::max(cmax, v / eta(spec.alpha, 0.0, 2, tau, r2));
            }
            f.constant = cmax * 1.05;
            f.finite = std::isfinite(cmax);
        }
        rep.checks.push_back(make_check("fractional_envelope", "fractional_derivative_estimate",
                                        f.constant, 0.0, f.finite));
    } else if (!spec.b.is_zero && !(spec.alpha <= 1.0 ? spec.constants.b_in_k1
                                                      : spec.constants.b_in_kbar_alpha)) {
        rep.checks.push_back(make_skip("fractional_envelope", "fractional_derivative_estimate",
                                       "drift lacks the declared stricter Kato membership"));
    }

    // 9. positivity / signed minimum
    {
        const double mn = fin.grid.n_points ? *std::min_element(fin.p.begin(), fin.p.end()) : 0.0;
        if (sc.kappa_nonneg) {
            const double tol = 1e-8 * std::max(1.0, peak);
            rep.checks.push_back(
                make_check("positivity", "nonnegative_kernel", mn, -tol, mn >= -tol));
        } else {
            std::ostringstream os;
            os << "min p = " << mn << " (sign-changing kappa: no positivity assertion)";
            rep.checks.push_back(make_check("signed_min_reported", "signed_kernel_scope", mn, 0.0,
                                            true, os.str()));
        }
    }

    // 10. on-diagonal lower bound
    if (sc.kappa_nonneg) {
        double mn = 1e300;
        for (long i = 0; i < fin.grid.n_points; ++i) {
            if ((fin.grid.point(i) - st.x0).norm() > std::sqrt(tau)) continue;
            mn = std::min(mn, fin.p[size_t(i)] * tau);
        }
        rep.checks.push_back(
            make_check("on_diagonal", "on_diagonal_lower_bound", mn, 0.0, mn > 0.0));
    }

    // 11. truncated-case envelopes and decay slope
    if (sc.truncated_upper || sc.truncated_lower) {
        // superpolynomial slope fit: log p = c r log(tau/r) + const over r in {1,2,3}
        std::vector<std::pair<double, double>> pts;  // (r log(tau/r), log p)
        for (double r : {1.0, 2.0, 3.0}) {
            // average p over lattice nodes near radius r
            double acc = 0.0;
            int cnt = 0;
            for (long i = 0; i < fin.grid.n_points; ++i) {
                const double rr = (fin.grid.point(i) - st.x0).norm();
                if (std::abs(rr - r) < fin.grid.h && fin.p[size_t(i)] > 0.0) {
                    acc += fin.p[size_t(i)];
                    ++cnt;
                }
            }
            if (cnt > 0) pts.emplace_back(r * std::log(tau / r), std::log(acc / cnt));
        }
        if (pts.size() >= 2) {
            double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
            for (auto [xx, yy] : pts) {
                sx += xx;
                sy += yy;
                sxx += xx * xx;
                sxy += xx * yy;
            }
            const double nn = double(pts.size());
            const double slope = (nn * sxy - sx * sy) / (nn * sxx - sx * sx);
            rep.checks.push_back(make_check("truncated_slope", "truncated_superpolynomial_decay",
                                            slope, 8.0,
                                            slope >= 1.0 / 8.0 && slope <= 8.0));
        } else {
            rep.checks.push_back(make_check("truncated_slope", "truncated_superpolynomial_decay",
                                            0.0, 0.0, false, "kernel not positive at range"));
        }
        // envelope fits against the truncated comparison family
        auto fit_bar = [&](double lam_bar, bool upper) {
            double c = 0.0;
            bool ok = true;
            for (long i = 0; i < fin.grid.n_points; ++i) {
                const double v = fin.p[size_t(i)];
                const double r2 = (fin.grid.point(i) - st.x0).norm2();
                const double env =
                    xi(0.25, 0.0, 2, tau, r2) + eta_bar(spec.alpha, lam_bar, 2, tau, r2);
                if (upper) {
                    if (v > 1e-12) c = std::max(c, v / env);
                } else {
                    if (v > 1e-12)
                        c = std::max(c, env / v);
                    else if (env > 1e-9)
                        ok = false;
                }
            }
            return std::make_pair(c * 1.05, ok);
        };
        if (sc.truncated_upper) {
            auto [c, ok] = fit_bar(1.0 / 8.0, true);
            rep.checks.push_back(make_check("truncated_upper", "truncated_upper_envelope", c, 0.0,
                                            ok && std::isfinite(c)));
        }
        if (sc.truncated_lower) {
            auto [c, ok] = fit_bar(8.0, false);
            rep.checks.push_back(make_check("truncated_lower", "truncated_lower_envelope", c, 0.0,
                                            ok && std::isfinite(c)));
        }
    }

    // 12. semigroup continuity
    {
        auto f = [](const Pt& y) { return std::cos(y[0]); };
        std::vector<double> metrics;
        const SpaceTimeGrid& g = st.window.grid;
        for (size_t m = 1; m < st.window.mesh.size(); m += 3) {
            double worst = 0.0;
            // || P_{t,r} f - f ||_inf estimated at the source point
            double acc = 0.0;
            for (long i = 0; i < g.n_points; ++i)
                acc += st.window.u_mesh[m][size_t(i)] * f(g.point(i));
            acc *= g.h * g.h;
            worst = std::abs(acc - f(st.x0));
            metrics.push_back(worst);
        }
        const bool to_zero = metrics.size() >= 2 && metrics.front() <= 0.5 * metrics.back() + gt;
        rep.checks.push_back(make_check("semigroup_continuity", "strong_continuity",
                                        metrics.empty() ? 0.0 : metrics.front(), 0.0, to_zero));
    }

    // 13. generator identity at the source point
    {
        C2Field f;
        f.value = [](const Pt& y) { return std::cos(y[0]); };
        f.grad = [](const Pt& y) { return Pt{-std::sin(y[0]), 0.0}; };
        f.hess = [](const Pt& y) {
            SymMat h;
            h.d = 2;
            h(0, 0) = -std::cos(y[0]);
            return h;
        };
        const double r = eng.generator_residual(st, f);
        rep.checks.push_back(
            make_check("generator", "generator_identity", r, 5.0 * gt, r <= 5.0 * gt));
    }

    // 14. oracle comparisons
    if (name == "gaussian-exact") {
        double worst = 0.0;
        for (long i = 0; i < fin.grid.n_points; ++i) {
            const double r2 = (fin.grid.point(i) - st.x0).norm2();
            if (r2 > 16.0) continue;
            const double exact = std::exp(-0.5 * r2 / tau) / (2.0 * kPi * tau);
            worst = std::max(worst, std::abs(fin.p[size_t(i)] - exact) / exact);
        }
        rep.checks.push_back(
            make_check("gaussian_exact", "exact_gaussian_kernel", worst, 1e-3, worst <= 1e-3));
    }
    if (sc.has_fourier_oracle) {
        KernelTable oracle = fourier_reference(2, spec.alpha, sc.fourier_kappa0, tau, fin.grid);
        double worst = 0.0;
        const double region = 3.0 * std::sqrt(tau);
        for (long i = 0; i < fin.grid.n_points; ++i) {
            const Pt y = fin.grid.point(i);
            Pt shifted = y - st.x0 - sc.fourier_shift * tau;
            if (shifted.norm() > region) continue;
            const double ov = oracle.interpolate(fin.grid.center + shifted);
            if (ov <= 0.0) continue;
            worst = std::max(worst, std::abs(fin.p[size_t(i)] - ov) / ov);
        }
        rep.checks.push_back(
            make_check("fourier_oracle", "constant_coefficient_reference", worst, 0.03,
                       worst <= 0.03));
    }

    // 15. Monte Carlo cross-checks
    if (opt.with_mc && sc.kappa_nonneg && !spec.kappa.is_zero) {
        PathConfig pc;
        pc.n_paths = opt.mc_paths;
        pc.dt = 1e-3;
        pc.eps_jump = 0.05;
        pc.rng_seed = opt.seed ^ 0xabcd;
        PathStats ps = simulate_batch(spec, 0.0, st.x0, tau, pc);
        KdeResult kde = density_mc(ps.endpoints, fin.grid, -1.0);
        double worst_gap = -1e300;
        const double region = 2.0 * std::sqrt(tau);
        for (long i = 0; i < fin.grid.n_points; ++i) {
            if ((fin.grid.point(i) - st.x0).norm() > region) continue;
            const double diff = std::abs(fin.p[size_t(i)] - kde.table.values[size_t(i)]);
            const double tol_i =
                3.0 * (kde.bootstrap_se[size_t(i)] + gt * peak) + 0.5 * kde.bandwidth *
                kde.bandwidth * peak / tau;  // KDE smoothing bias allowance
            worst_gap = std::max(worst_gap, diff - tol_i);
        }
        rep.checks.push_back(make_check("mc_agreement", "transition_density_mc", worst_gap, 0.0,
                                        worst_gap <= 0.0));
    } else if (opt.with_mc && !sc.kappa_nonneg) {
        rep.checks.push_back(
            make_skip("mc_agreement", "transition_density_mc", "sign-changing kappa"));
    }

    // 16. iterate decay against the contraction estimate
    if (!spec.kappa.is_zero || !spec.b.is_zero) {
        const auto& sups = st.window.level_sup;
        double worst_ratio = 0.0;
        for (size_t i = 2; i + 1 < sups.size(); ++i)
            if (sups[i] > 0.0) worst_ratio = std::max(worst_ratio, sups[i + 1] / sups[i]);
        const double ell = st.window.ell_hat;
        rep.checks.push_back(make_check("iterate_decay", "series_contraction", worst_ratio,
                                        std::max(0.5, opt.engine.chat * ell),
                                        worst_ratio < 1.0,
                                        "ell_hat=" + std::to_string(ell)));
    }

    const auto t_end = std::chrono::steady_clock::now();
    rep.runtime_sec = std::chrono::duration<double>(t_end - t_start).count();
    return rep;
}

std::vector<ScenarioReport> verify_all(const VerifyOptions& opt) {
    std::vector<ScenarioReport> out;
    for (const auto& n : scenario_names()) out.push_back(verify_scenario(n, opt));
    return out;
}

std::string reports_to_json(const std::vector<ScenarioReport>& reports, uint64_t seed) {
    json j;
    j["seed"] = seed;
    json arr = json::array();
    for (const auto& r : reports) arr.push_back(json::parse(r.to_json()));
    j["reports"] = arr;
    return j.dump(2);
}

}  // namespace hk
