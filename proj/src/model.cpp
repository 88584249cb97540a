#include "hk/model.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hk/profiles.hpp"
#include "hk/quadrature.hpp"

namespace hk {

using nlohmann::json;

double GriddedScalarField::eval(double t, const Pt& x) const {
    // clamp t to the node range, locate bracketing slice pair
    if (t_nodes.empty()) throw ConfigError("gridded field: no time nodes");
    size_t hi = 1;
    double tc = std::clamp(t, t_nodes.front(), t_nodes.back());
    while (hi + 1 < t_nodes.size() && t_nodes[hi] < tc) ++hi;
    if (t_nodes.size() == 1) return interpolate_field(grid, slices[0], x);
    const size_t lo = hi - 1;
    const double w = (tc - t_nodes[lo]) / (t_nodes[hi] - t_nodes[lo]);
    const double v0 = interpolate_field(grid, slices[lo], x);
    const double v1 = interpolate_field(grid, slices[hi], x);
    return (1.0 - w) * v0 + w * v1;
}

GriddedScalarField gridded_field_from_csv(const std::string& path, int d) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open " + path);
    std::string line;
    std::getline(is, line);  // header
    struct Row {
        double t;
        Pt x;
        double v;
    };
    std::vector<Row> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        Row r;
        std::string tok;
        std::getline(ls, tok, ',');
        r.t = std::stod(tok);
        for (int k = 0; k < d; ++k) {
            std::getline(ls, tok, ',');
            r.x[k] = std::stod(tok);
        }
        std::getline(ls, tok, ',');
        r.v = std::stod(tok);
        rows.push_back(r);
    }
    if (rows.empty()) throw ConfigError("gridded field: empty csv");

    GriddedScalarField f;
    f.d = d;
    std::vector<double> ts;
    for (const auto& r : rows) ts.push_back(r.t);
    std::sort(ts.begin(), ts.end());
    ts.erase(std::unique(ts.begin(), ts.end(),
                         [](double a, double b) { return std::abs(a - b) < 1e-12; }),
             ts.end());
    f.t_nodes = ts;

    // infer the lattice from distinct x1 coordinates (uniform, centered)
    std::vector<double> xs;
    for (const auto& r : rows) xs.push_back(r.x[0]);
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end(),
                         [](double a, double b) { return std::abs(a - b) < 1e-12; }),
             xs.end());
    if (xs.size() < 2) throw ConfigError("gridded field: need at least 2 lattice nodes");
    const double h = xs[1] - xs[0];
    const double R = 0.5 * (xs.back() - xs.front());
    Pt center;
    center[0] = 0.5 * (xs.back() + xs.front());
    for (int k = 1; k < d; ++k) center[k] = center[0];
    f.grid = SpaceTimeGrid(d, h, R, center);
    f.slices.assign(f.t_nodes.size(), std::vector<double>(size_t(f.grid.n_points), 0.0));
    for (const auto& r : rows) {
        size_t ti = 0;
        while (ti + 1 < f.t_nodes.size() && std::abs(f.t_nodes[ti] - r.t) > 1e-12) ++ti;
        f.slices[ti][size_t(f.grid.nearest_index(r.x))] = r.v;
    }
    return f;
}

DiffusionField diffusion_constant(int d, const SymMat& a) {
    DiffusionField f;
    f.kind = "constant";
    f.is_constant = true;
    bool iso = true;
    for (int i = 0; i < d && iso; ++i)
        for (int j = 0; j < d; ++j)
            if (std::abs(a(i, j) - (i == j ? a(0, 0) : 0.0)) > 1e-14) {
                iso = false;
                break;
            }
    f.is_isotropic = iso;
    const double scale = a(0, 0);
    f.eval = [a](double, const Pt&) { return a; };
    if (iso) {
        f.iso = [scale](double, const Pt&) { return scale; };
        f.iso_grad = [](double, const Pt&) { return Pt{}; };
        f.iso_lap = [](double, const Pt&) { return 0.0; };
    }
    return f;
}

DiffusionField diffusion_identity(int d, double scale) {
    return diffusion_constant(d, SymMat::identity(d, scale));
}

namespace {
DiffusionField iso_field(int d, std::string kind, std::function<double(double, const Pt&)> phi,
                         std::function<Pt(double, const Pt&)> grad,
                         std::function<double(double, const Pt&)> lap, bool time_dep) {
    DiffusionField f;
    f.kind = std::move(kind);
    f.is_constant = false;
    f.is_isotropic = true;
    f.time_dependent = time_dep;
    f.iso = phi;
    f.iso_grad = std::move(grad);
    f.iso_lap = std::move(lap);
    f.eval = [d, phi](double t, const Pt& x) { return SymMat::identity(d, phi(t, x)); };
    return f;
}
}  // namespace

DiffusionField diffusion_iso_trig(int d, double base, double amp, int axis) {
    return iso_field(
        d, "iso_trig",
        [base, amp, axis](double, const Pt& x) { return base + amp * std::sin(x[axis]); },
        [amp, axis](double, const Pt& x) {
            Pt g;
            g[axis] = amp * std::cos(x[axis]);
            return g;
        },
        [amp, axis](double, const Pt& x) { return -amp * std::sin(x[axis]); }, false);
}

DiffusionField diffusion_iso_bump(int d, double base, double amp, double radius) {
    auto bump = [radius](const Pt& x) {
        const double u2 = x.norm2() / (radius * radius);
        if (u2 >= 1.0) return 0.0;
        return std::exp(-1.0 / (1.0 - u2));
    };
    auto phi = [base, amp, bump](double, const Pt& x) { return base + amp * bump(x); };
    // derivatives by central differences; the bump is smooth
    auto grad = [phi](double t, const Pt& x) {
        const double hh = 1e-5;
        Pt g;
        for (int k = 0; k < 3; ++k) {
            Pt xp = x, xm = x;
            xp[k] += hh;
            xm[k] -= hh;
            g[k] = (phi(t, xp) - phi(t, xm)) / (2.0 * hh);
        }
        return g;
    };
    auto lap = [phi, d](double t, const Pt& x) {
        const double hh = 1e-4;
        double acc = 0.0;
        for (int k = 0; k < d; ++k) {
            Pt xp = x, xm = x;
            xp[k] += hh;
            xm[k] -= hh;
            acc += (phi(t, xp) - 2.0 * phi(t, x) + phi(t, xm)) / (hh * hh);
        }
        return acc;
    };
    return iso_field(d, "iso_bump", phi, grad, lap, false);
}

DiffusionField diffusion_iso_linear_t(int d, double base, double amp) {
    return iso_field(
        d, "iso_linear_t", [base, amp](double t, const Pt&) { return base + amp * t; },
        [](double, const Pt&) { return Pt{}; }, [](double, const Pt&) { return 0.0; }, true);
}

DiffusionField diffusion_iso_gridded(int d, GriddedScalarField f0) {
    auto shared = std::make_shared<GriddedScalarField>(std::move(f0));
    auto phi = [shared](double t, const Pt& x) { return shared->eval(t, x); };
    auto grad = [shared](double t, const Pt& x) {
        const double hh = 0.5 * shared->grid.h;
        Pt g;
        for (int k = 0; k < shared->d; ++k) {
            Pt xp = x, xm = x;
            xp[k] += hh;
            xm[k] -= hh;
            g[k] = (shared->eval(t, xp) - shared->eval(t, xm)) / (2.0 * hh);
        }
        return g;
    };
    auto lap = [shared](double t, const Pt& x) {
        const double hh = shared->grid.h;
        double acc = 0.0;
        for (int k = 0; k < shared->d; ++k) {
            Pt xp = x, xm = x;
            xp[k] += hh;
            xm[k] -= hh;
            acc += (shared->eval(t, xp) - 2.0 * shared->eval(t, x) + shared->eval(t, xm)) / (hh * hh);
        }
        return acc;
    };
    DiffusionField f = iso_field(d, "iso_gridded", phi, grad, lap, shared->t_nodes.size() > 1);
    return f;
}

DriftField drift_zero(int d) {
    (void)d;
    DriftField f;
    f.kind = "zero";
    f.is_zero = true;
    f.is_constant = true;
    f.eval = [](double, const Pt&) { return Pt{}; };
    return f;
}

DriftField drift_constant(int d, const Pt& b) {
    (void)d;
    DriftField f;
    f.kind = "constant";
    f.is_zero = b.norm2() == 0.0;
    f.is_constant = true;
    f.const_value = b;
    f.eval = [b](double, const Pt&) { return b; };
    return f;
}

DriftField drift_kato_singular(int d, double c, int axis) {
    (void)d;
    DriftField f;
    f.kind = "kato_singular";
    f.is_zero = (c == 0.0);
    f.is_constant = false;
    f.eval = [c, axis](double, const Pt& x) {
        Pt b;
        const double r = x.norm();
        if (r < 1e-12 || r > 1.0) return b;
        b[axis] = c / std::sqrt(r);
        return b;
    };
    return f;
}

KappaField kappa_zero() {
    KappaField f;
    f.kind = "zero";
    f.is_zero = true;
    f.eval = [](double, const Pt&, const Pt&) { return 0.0; };
    return f;
}

KappaField kappa_constant(double k0) {
    KappaField f;
    f.kind = "constant";
    f.is_zero = (k0 == 0.0);
    f.sup = std::abs(k0);
    f.inf = k0;
    f.eval = [k0](double, const Pt&, const Pt&) { return k0; };
    return f;
}

KappaField kappa_truncated(double k0, double radius) {
    KappaField f;
    f.kind = "truncated";
    f.is_zero = (k0 == 0.0);
    f.sup = std::abs(k0);
    f.inf = 0.0;
    f.trunc_radius = radius;
    f.eval = [k0, radius](double, const Pt&, const Pt& z) {
        return z.norm() <= radius ? k0 : 0.0;
    };
    return f;
}

KappaField kappa_sin(double c, int axis) {
    KappaField f;
    f.kind = "sin";
    f.is_zero = (c == 0.0);
    f.even_in_z = false;
    f.radial_in_z = false;
    f.sup = std::abs(c);
    f.inf = -std::abs(c);
    f.eval = [c, axis](double, const Pt&, const Pt& z) { return c * std::sin(z[axis]); };
    return f;
}

KappaField kappa_angular(double k0, double a) {
    KappaField f;
    f.kind = "angular";
    f.is_zero = (k0 == 0.0);
    f.even_in_z = false;
    f.radial_in_z = false;
    f.sup = std::abs(k0) * (1.0 + std::abs(a));
    f.inf = k0 * (1.0 - std::abs(a));
    f.eval = [k0, a](double, const Pt&, const Pt& z) {
        const double r = z.norm();
        if (r < 1e-300) return k0;
        return k0 * (1.0 + a * z[0] / r);
    };
    return f;
}

void ModelSpec::validate_basic() const {
    if (d < 1 || d > 3) throw ConfigError("model: d must be in {1,2,3}");
    if (!(alpha > 0.0 && alpha < 2.0)) throw ConfigError("model: alpha must lie in (0,2)");
    if (!(T > 0.0)) throw ConfigError("model: T must be positive");
    if (!(constants.c2 >= 1.0)) throw ConfigError("model: c2 must be >= 1");
    if (!(constants.beta > 0.0 && constants.beta < 1.0))
        throw ConfigError("model: beta must lie in (0,1)");
}

namespace {

ModelSpec spec_from_json(const json& j) {
    ModelSpec spec;
    spec.d = j.at("d").get<int>();
    spec.alpha = j.at("alpha").get<double>();
    spec.T = j.at("T").get<double>();

    const auto& ja = j.at("a");
    const std::string akind = ja.at("kind").get<std::string>();
    if (akind == "identity") {
        spec.a = diffusion_identity(spec.d, ja.value("scale", 1.0));
    } else if (akind == "constant") {
        SymMat m = SymMat::identity(spec.d);
        const auto& rows = ja.at("matrix");
        for (int i = 0; i < spec.d; ++i)
            for (int k = 0; k < spec.d; ++k) m(i, k) = rows[size_t(i)][size_t(k)].get<double>();
        spec.a = diffusion_constant(spec.d, m);
    } else if (akind == "iso_trig") {
        spec.a = diffusion_iso_trig(spec.d, ja.value("base", 1.0), ja.value("amp", 0.2),
                                    ja.value("axis", 0));
    } else if (akind == "iso_bump") {
        spec.a = diffusion_iso_bump(spec.d, ja.value("base", 1.0), ja.value("amp", 0.2),
                                    ja.value("radius", 1.0));
    } else if (akind == "iso_linear_t") {
        spec.a = diffusion_iso_linear_t(spec.d, ja.value("base", 1.0), ja.value("amp", 0.5));
    } else if (akind == "iso_gridded") {
        spec.a = diffusion_iso_gridded(spec.d,
                                       gridded_field_from_csv(ja.at("csv").get<std::string>(), spec.d));
    } else {
        throw ConfigError("model: unknown a.kind " + akind);
    }

    const auto& jb = j.at("b");
    const std::string bkind = jb.at("kind").get<std::string>();
    if (bkind == "zero") {
        spec.b = drift_zero(spec.d);
    } else if (bkind == "constant") {
        Pt b;
        for (int k = 0; k < spec.d; ++k) b[k] = jb.at("value")[size_t(k)].get<double>();
        spec.b = drift_constant(spec.d, b);
    } else if (bkind == "kato_singular") {
        spec.b = drift_kato_singular(spec.d, jb.value("c", 0.1), jb.value("axis", 0));
    } else {
        throw ConfigError("model: unknown b.kind " + bkind);
    }

    const auto& jk = j.at("kappa");
    const std::string kkind = jk.at("kind").get<std::string>();
    if (kkind == "zero") {
        spec.kappa = kappa_zero();
    } else if (kkind == "constant") {
        spec.kappa = kappa_constant(jk.at("k0").get<double>());
    } else if (kkind == "truncated") {
        spec.kappa = kappa_truncated(jk.at("k0").get<double>(), jk.value("radius", 1.0));
    } else if (kkind == "sin") {
        spec.kappa = kappa_sin(jk.at("c").get<double>(), jk.value("axis", 0));
    } else if (kkind == "angular") {
        spec.kappa = kappa_angular(jk.at("k0").get<double>(), jk.value("a", 0.5));
    } else {
        throw ConfigError("model: unknown kappa.kind " + kkind);
    }

    if (j.contains("constants")) {
        const auto& jc = j.at("constants");
        spec.constants.c1 = jc.value("c1", 0.0);
        spec.constants.beta = jc.value("beta", 0.5);
        spec.constants.c2 = jc.value("c2", 1.0);
        spec.constants.kappa_sup = jc.value("kappa_sup", spec.kappa.sup);
        spec.constants.kappa_inf = jc.value("kappa_inf", spec.kappa.inf);
        if (jc.contains("kappa_trunc_radius"))
            spec.constants.kappa_trunc_radius = jc.at("kappa_trunc_radius").get<double>();
        spec.constants.b_in_k1 = jc.value("b_in_k1", false);
        spec.constants.b_in_kbar_alpha = jc.value("b_in_kbar_alpha", false);
    } else {
        spec.constants.kappa_sup = spec.kappa.sup;
        spec.constants.kappa_inf = spec.kappa.inf;
    }
    spec.validate_basic();
    return spec;
}

}  // namespace

ModelSpec model_spec_from_json_text(const std::string& text) {
    return spec_from_json(json::parse(text));
}

ModelSpec model_spec_from_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open " + path);
    json j;
    is >> j;
    return spec_from_json(j);
}

std::string ValidationReport::to_json() const {
    json j;
    j["pass"] = pass;
    j["hard_failure"] = hard_failure;
    j["failure_reason"] = failure_reason;
    j["max_holder_quotient"] = max_holder_quotient;
    j["min_eigenvalue"] = min_eigenvalue;
    j["max_eigenvalue"] = max_eigenvalue;
    j["sup_kappa_observed"] = sup_kappa_observed;
    j["inf_kappa_observed"] = inf_kappa_observed;
    j["symmetry_residual"] = symmetry_residual;
    j["witness"] = {witness[0], witness[1], witness[2]};
    return j.dump();
}

ValidationReport validate_hypotheses(const ModelSpec& spec, int n_samples, uint64_t rng_seed,
                                     double sym_tol) {
    spec.validate_basic();
    ValidationReport rep;
    rep.min_eigenvalue = 1e300;
    rep.max_eigenvalue = -1e300;
    rep.inf_kappa_observed = 1e300;
    const double L = 3.0 * std::sqrt(spec.T) + 3.0;

    std::mt19937_64 rng(rng_seed);
    std::uniform_real_distribution<double> ut(0.0, spec.T);
    std::uniform_real_distribution<double> ux(-L, L);
    std::uniform_real_distribution<double> uz(-4.0, 4.0);

    Eigen::MatrixXd A(spec.d, spec.d);
    for (int i = 0; i < n_samples; ++i) {
        const double t = ut(rng);
        Pt x, y, z;
        for (int k = 0; k < spec.d; ++k) {
            x[k] = ux(rng);
            y[k] = ux(rng);
            z[k] = uz(rng);
        }
        const SymMat a = spec.a.eval(t, x);
        for (int r = 0; r < spec.d; ++r)
            for (int c = 0; c < spec.d; ++c) {
                A(r, c) = a(r, c);
                if (std::abs(a(r, c) - a(c, r)) > 1e-12) {
                    rep.hard_failure = true;
                    rep.failure_reason = "non-symmetric diffusion sample";
                    rep.witness = x;
                    return rep;
                }
            }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
        rep.min_eigenvalue = std::min(rep.min_eigenvalue, es.eigenvalues().minCoeff());
        rep.max_eigenvalue = std::max(rep.max_eigenvalue, es.eigenvalues().maxCoeff());

        // Holder quotient |a(t,y)-a(t,x)| / |y-x|^beta (Frobenius norm)
        const SymMat ay = spec.a.eval(t, y);
        double diff2 = 0.0;
        for (int r = 0; r < spec.d; ++r)
            for (int c = 0; c < spec.d; ++c) diff2 += (ay(r, c) - a(r, c)) * (ay(r, c) - a(r, c));
        const double dist = (y - x).norm();
        if (dist > 1e-9) {
            const double q = std::sqrt(diff2) / std::pow(dist, spec.constants.beta);
            if (q > rep.max_holder_quotient) {
                rep.max_holder_quotient = q;
                rep.witness = x;
            }
        }

        const double kv = spec.kappa.eval(t, x, z);
        rep.sup_kappa_observed = std::max(rep.sup_kappa_observed, std::abs(kv));
        rep.inf_kappa_observed = std::min(rep.inf_kappa_observed, kv);
    }

    if (spec.alpha == 1.0 && !spec.kappa.is_zero) {
        // ring average of z kappa(t,x,z) |z|^{-d-1} over random (r, R) annuli
        std::uniform_real_distribution<double> ur(0.05, 1.0);
        const QuadRule ang = gauss_legendre(64, 0.0, 2.0 * kPi);
        for (int trial = 0; trial < 16; ++trial) {
            const double t = ut(rng);
            Pt x;
            for (int k = 0; k < spec.d; ++k) x[k] = ux(rng);
            const double r0 = ur(rng);
            const double r1 = r0 * (1.5 + 3.0 * ur(rng));
            const QuadRule rad = gauss_legendre(24, r0, r1);
            Pt acc;
            for (size_t ir = 0; ir < rad.nodes.size(); ++ir) {
                const double rr = rad.nodes[ir];
                for (size_t ia = 0; ia < ang.nodes.size(); ++ia) {
                    const double th = ang.nodes[ia];
                    Pt z(rr * std::cos(th), rr * std::sin(th));
                    const double w =
                        rad.weights[ir] * ang.weights[ia] * rr;  // area element
                    const double val = spec.kappa.eval(t, x, z) * std::pow(rr, -spec.d - 1.0);
                    acc[0] += w * z[0] * val;
                    acc[1] += w * z[1] * val;
                }
            }
            rep.symmetry_residual = std::max(rep.symmetry_residual, acc.norm());
        }
        if (rep.symmetry_residual > sym_tol) {
            rep.hard_failure = true;
            rep.failure_reason = "alpha=1 ring symmetry violated";
            return rep;
        }
    }

    const bool eig_ok = rep.min_eigenvalue >= 1.0 / spec.constants.c2 - 1e-9 &&
                        rep.max_eigenvalue <= spec.constants.c2 + 1e-9;
    const bool holder_ok =
        spec.a.is_constant || rep.max_holder_quotient <= spec.constants.c1 + 1e-9;
    const bool kappa_ok = rep.sup_kappa_observed <= spec.constants.kappa_sup + 1e-9;
    rep.pass = eig_ok && holder_ok && kappa_ok;
    if (!rep.pass) {
        rep.failure_reason = !eig_ok     ? "eigenvalues outside [1/c2, c2]"
                             : !holder_ok ? "Holder quotient exceeds declared c1"
                                          : "sup |kappa| exceeds declared bound";
    }
    return rep;
}

Pt compensated_drift(const ModelSpec& spec, double t, const Pt& x, int radial_nodes,
                     int angular_nodes, double outer_radius) {
    Pt out = spec.b.eval(t, x);
    if (spec.kappa.is_zero || spec.alpha == 1.0) return out;
    if (spec.d != 2) throw ConfigError("compensated_drift: d = 2 supported");

    const QuadRule ang = gauss_legendre(angular_nodes, 0.0, kPi);  // antipodal pairing below
    auto accumulate = [&](double r_lo, double r_hi, double sign) {
        const int decades = std::max(1, int(std::ceil(std::log10(r_hi / r_lo))));
        for (int dec = 0; dec < decades; ++dec) {
            const double a = r_lo * std::pow(10.0, dec);
            const double b = std::min(a * 10.0, r_hi);
            if (a >= r_hi) break;
            const QuadRule rad = gauss_legendre(radial_nodes, a, b);
            for (size_t ir = 0; ir < rad.nodes.size(); ++ir) {
                const double rr = rad.nodes[ir];
                const double wr = rad.weights[ir] * rr * std::pow(rr, -spec.d - spec.alpha);
                for (size_t ia = 0; ia < ang.nodes.size(); ++ia) {
                    const double th = ang.nodes[ia];
                    Pt z(rr * std::cos(th), rr * std::sin(th));
                    Pt zm = z * -1.0;
                    const double w = wr * ang.weights[ia];
                    const double kp = spec.kappa.eval(t, x, z);
                    const double km = spec.kappa.eval(t, x, zm);
                    // antipodal pair: z kp + (-z) km = z (kp - km)
                    out[0] += sign * w * z[0] * (kp - km);
                    out[1] += sign * w * z[1] * (kp - km);
                }
            }
        }
    };
    const double zr = spec.kappa.trunc_radius > 0.0 ? spec.kappa.trunc_radius : outer_radius;
    if (spec.alpha > 1.0) {
        if (zr > 1.0) accumulate(1.0, zr, +1.0);
    } else {
        accumulate(1e-8, 1.0, -1.0);
    }
    return out;
}

SymMat matrix_sqrt(const SymMat& a) {
    Eigen::MatrixXd A(a.d, a.d);
    for (int i = 0; i < a.d; ++i)
        for (int j = 0; j < a.d; ++j) A(i, j) = a(i, j);
    if (!A.isApprox(A.transpose(), 1e-12)) throw DomainError("matrix_sqrt: not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
    if (es.eigenvalues().minCoeff() <= 0.0) throw DomainError("matrix_sqrt: not positive definite");
    Eigen::MatrixXd S = es.operatorSqrt();
    SymMat r;
    r.d = a.d;
    for (int i = 0; i < a.d; ++i)
        for (int j = 0; j < a.d; ++j) r(i, j) = S(i, j);
    return r;
}

namespace {
double bump_unnormalized(double u2) {
    if (u2 >= 1.0) return 0.0;
    return std::exp(-1.0 / (1.0 - u2));
}
}  // namespace

ScalarField mollify(const ScalarField& f, int d, double epsilon, int nodes_per_axis) {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw ConfigError("mollify: epsilon in (0,1)");
    // tensor rule over the unit cube [-1,1]^{d+1}; the bump vanishes outside
    // the unit ball so the cube rule integrates it cleanly
    const QuadRule ax = gauss_legendre(nodes_per_axis, -1.0, 1.0);
    struct Node {
        double t;
        Pt x;
        double w;
    };
    auto nodes = std::make_shared<std::vector<Node>>();
    double mass = 0.0;
    const int n = nodes_per_axis;
    std::vector<int> idx(size_t(d) + 1, 0);
    const long total = long(std::pow(double(n), d + 1));
    for (long flat = 0; flat < total; ++flat) {
        long rem = flat;
        double u2 = 0.0, w = 1.0;
        Node nd;
        for (int k = 0; k <= d; ++k) {
            const int i = int(rem % n);
            rem /= n;
            const double u = ax.nodes[size_t(i)];
            w *= ax.weights[size_t(i)];
            if (k == 0)
                nd.t = u;
            else
                nd.x[k - 1] = u;
            u2 += u * u;
        }
        const double rho = bump_unnormalized(u2);
        if (rho <= 0.0) continue;
        nd.w = w * rho;
        mass += nd.w;
        nodes->push_back(nd);
    }
    for (auto& nd : *nodes) nd.w /= mass;

    return [f, epsilon, nodes](double t, const Pt& x) {
        double acc = 0.0;
        for (const auto& nd : *nodes) {
            Pt xx = x;
            for (int k = 0; k < 3; ++k) xx[k] -= epsilon * nd.x[k];
            acc += nd.w * f(t - epsilon * nd.t, xx);
        }
        return acc;
    };
}

MollifierConvergenceReport mollifier_convergence_check(
    const ScalarField& f, int d, double alpha, const std::vector<double>& eps_grid,
    const std::vector<std::pair<double, Pt>>& probes) {
    if (d != 2) throw ConfigError("mollifier_convergence_check: d = 2 supported");
    MollifierConvergenceReport rep;
    rep.epsilons = eps_grid;

    const QuadRule ts = beta_singular_time_rule(alpha - 1.0, 0.0, 12, 0.0, 1.0);
    const QuadRule ang = gauss_legendre(16, 0.0, 2.0 * kPi);

    for (double eps : eps_grid) {
        ScalarField fe = mollify(f, d, eps);
        double metric = 0.0;
        for (const auto& [t0, x0] : probes) {
            double acc = 0.0;
            for (size_t it = 0; it < ts.nodes.size(); ++it) {
                const double s = ts.nodes[it];
                const double wt = ts.weights[it] * std::pow(s, -(alpha - 1.0) / 2.0);
                // radial integral of |f_eps - f| eta_{alpha,alpha-1}(s, y)
                double sp = 0.0;
                const double r_lo = 1e-3 * std::sqrt(s), r_hi = 30.0;
                const int decades = int(std::ceil(std::log10(r_hi / r_lo)));
                for (int dec = 0; dec < decades; ++dec) {
                    const double a = r_lo * std::pow(10.0, dec);
                    const double b = std::min(a * 10.0, r_hi);
                    const QuadRule rad = gauss_legendre(8, a, b);
                    for (size_t ir = 0; ir < rad.nodes.size(); ++ir) {
                        const double rr = rad.nodes[ir];
                        const double env = eta(alpha, alpha - 1.0, 2, s, rr * rr);
                        double angsum = 0.0;
                        for (size_t ia = 0; ia < ang.nodes.size(); ++ia) {
                            Pt y(rr * std::cos(ang.nodes[ia]), rr * std::sin(ang.nodes[ia]));
                            for (double st : {-1.0, 1.0})
                                for (int sy = 0; sy < 2; ++sy) {
                                    Pt xx = sy ? x0 - y : x0 + y;
                                    const double tt = t0 + st * s;
                                    angsum += ang.weights[ia] *
                                              std::abs(fe(tt, xx) - f(tt, xx));
                                }
                        }
                        sp += rad.weights[ir] * rr * env * angsum;
                    }
                    if (b >= r_hi) break;
                }
                acc += wt * sp;
            }
            metric = std::max(metric, acc);
        }
        rep.metrics.push_back(metric);
    }
    for (size_t i = 1; i < rep.metrics.size(); ++i)
        if (rep.metrics[i] > rep.metrics[i - 1] * 1.05) rep.decreasing = false;
    return rep;
}

}  // namespace hk
