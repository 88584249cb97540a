#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "hk/gaussian.hpp"

using namespace hk;

namespace {
ModelSpec spec_with(DiffusionField a) {
    ModelSpec m;
    m.d = 2;
    m.alpha = 1.0;
    m.T = 2.0;
    m.a = std::move(a);
    m.b = drift_zero(2);
    m.kappa = kappa_zero();
    m.constants.c2 = 2.0;
    return m;
}
}  // namespace

TEST_CASE("z0 closed-form values") {
    ModelSpec m = spec_with(diffusion_identity(2));
    FrozenGaussian fg(&m);
    CHECK(fg.z0(0.0, Pt{0.3, -0.1}, 1.0, Pt{0.3, -0.1}) ==
          doctest::Approx(1.0 / (2.0 * kPi)).epsilon(1e-12));

    ModelSpec m2 = spec_with(diffusion_identity(2, 2.0));
    FrozenGaussian fg2(&m2);
    CHECK(fg2.z0(0.0, Pt{0.0, 0.0}, 1.0, Pt{0.0, 0.0}) ==
          doctest::Approx(1.0 / (4.0 * kPi)).epsilon(1e-12));

    // time-dependent isotropic: A = int_0^1 (1+r) dr = 1.5 I
    ModelSpec m3 = spec_with(diffusion_iso_linear_t(2, 1.0, 1.0));
    FrozenGaussian fg3(&m3);
    CHECK(fg3.z0(0.0, Pt{0.0, 0.0}, 1.0, Pt{0.0, 0.0}) ==
          doctest::Approx(1.0 / (3.0 * kPi)).epsilon(1e-12));

    CHECK_THROWS_AS(fg.z0(1.0, Pt{}, 1.0, Pt{}), DomainError);
}

TEST_CASE("covariance eigenvalue envelope") {
    ModelSpec m = spec_with(diffusion_iso_trig(2, 1.0, 0.2));
    FrozenGaussian fg(&m);
    for (double s : {0.1, 0.5, 2.0}) {
        const SymMat A = fg.covariance(0.0, s, Pt{0.7, -0.4});
        CHECK(A(0, 0) >= s / m.constants.c2 - 1e-12);
        CHECK(A(0, 0) <= s * m.constants.c2 + 1e-12);
    }
}

TEST_CASE("gradient and Hessian at the center") {
    ModelSpec m = spec_with(diffusion_identity(2));
    FrozenGaussian fg(&m);
    const Pt g = fg.grad_z0(0.0, Pt{0.4, 0.2}, 1.0, Pt{0.4, 0.2});
    CHECK(std::abs(g[0]) < 1e-14);
    CHECK(std::abs(g[1]) < 1e-14);
    const SymMat h = fg.hess_z0(0.0, Pt{0.0, 0.0}, 1.0, Pt{0.0, 0.0});
    CHECK(h(0, 0) == doctest::Approx(-1.0 / (2.0 * kPi)).epsilon(1e-12));
    CHECK(h(1, 1) == doctest::Approx(-1.0 / (2.0 * kPi)).epsilon(1e-12));
    CHECK(std::abs(h(0, 1)) < 1e-14);
}

TEST_CASE("derivatives match finite differences at random points") {
    ModelSpec m = spec_with(diffusion_iso_trig(2, 1.0, 0.2));
    FrozenGaussian fg(&m);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0), ut(0.1, 0.8);
    for (int k = 0; k < 20; ++k) {
        const double t = ut(rng), s = t + ut(rng);
        Pt x{u(rng), u(rng)}, y{u(rng), u(rng)};
        const double hh = 1e-5;
        const Pt g = fg.grad_z0(t, x, s, y);
        const SymMat hess = fg.hess_z0(t, x, s, y);
        for (int i = 0; i < 2; ++i) {
            Pt xp = x, xm = x;
            xp[i] += hh;
            xm[i] -= hh;
            const double fd = (fg.z0(t, xp, s, y) - fg.z0(t, xm, s, y)) / (2.0 * hh);
            CHECK(g[i] == doctest::Approx(fd).epsilon(1e-6));
            const double fdd =
                (fg.z0(t, xp, s, y) - 2.0 * fg.z0(t, x, s, y) + fg.z0(t, xm, s, y)) / (hh * hh);
            CHECK(hess(i, i) == doctest::Approx(fdd).epsilon(1e-4));
        }
        // cross derivative
        Pt xpp = x, xpm = x, xmp = x, xmm = x;
        xpp[0] += hh;
        xpp[1] += hh;
        xpm[0] += hh;
        xpm[1] -= hh;
        xmp[0] -= hh;
        xmp[1] += hh;
        xmm[0] -= hh;
        xmm[1] -= hh;
        const double fdxy = (fg.z0(t, xpp, s, y) - fg.z0(t, xpm, s, y) - fg.z0(t, xmp, s, y) +
                             fg.z0(t, xmm, s, y)) /
                            (4.0 * hh * hh);
        CHECK(hess(0, 1) == doctest::Approx(fdxy).epsilon(1e-4));
    }
}

TEST_CASE("frozen defect kernel") {
    ModelSpec mc = spec_with(diffusion_identity(2));
    FrozenGaussian fgc(&mc);
    CHECK(fgc.q0(0.0, Pt{0.4, 0.1}, 0.7, Pt{-0.3, 0.2}) == 0.0);  // constant coefficients

    ModelSpec m = spec_with(diffusion_iso_trig(2, 1.0, 0.2));
    FrozenGaussian fg(&m);
    // vanishes on the diagonal x = y
    CHECK(fg.q0(0.1, Pt{0.5, -0.2}, 0.6, Pt{0.5, -0.2}) == doctest::Approx(0.0).epsilon(1e-15));
    // matches the direct contraction of the Hessian
    const Pt x{0.3, 0.8}, y{-0.4, 0.1};
    const double t = 0.05, s = 0.75;
    const SymMat hess = fg.hess_z0(t, x, s, y);
    const double phi_x = 1.0 + 0.2 * std::sin(x[0]);
    const double phi_y = 1.0 + 0.2 * std::sin(y[0]);
    const double expect = 0.5 * (phi_x - phi_y) * (hess(0, 0) + hess(1, 1));
    CHECK(fg.q0(t, x, s, y) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("sym helpers") {
    SymMat a;
    a.d = 2;
    a(0, 0) = 2.0;
    a(0, 1) = a(1, 0) = 0.3;
    a(1, 1) = 1.0;
    const SymMat inv = sym_inverse(a);
    // a * inv = I
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            double acc = 0.0;
            for (int k = 0; k < 2; ++k) acc += a(i, k) * inv(k, j);
            CHECK(acc == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-12));
        }
    CHECK(sym_det(a) == doctest::Approx(2.0 - 0.09).epsilon(1e-14));
    CHECK(quad_form(a, Pt{1.0, -1.0}) == doctest::Approx(2.0 - 0.6 + 1.0).epsilon(1e-14));
}
