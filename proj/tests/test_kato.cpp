#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hk/kato.hpp"
#include "hk/quadrature.hpp"

using namespace hk;

TEST_CASE("zero field has zero norm") {
    ScalarField z = [](double, const Pt&) { return 0.0; };
    CHECK(kato_norm(z, 2, KatoFamily::K_ALPHA, 2.0, 0.1) == doctest::Approx(0.0));
}

TEST_CASE("constant field: K^1_2 matches the closed form") {
    // K^1_2(delta) = 4 * (pi/3) * 2 sqrt(delta) = (8 pi / 3) sqrt(delta) in d = 2
    ScalarField one = [](double, const Pt&) { return 1.0; };
    for (double delta : {0.04, 0.16}) {
        const double got = kato_norm(one, 2, KatoFamily::K_ALPHA, 2.0, delta);
        const double expect = (8.0 * kPi / 3.0) * std::sqrt(delta);
        CHECK(got == doctest::Approx(expect).epsilon(0.02));
    }
}

TEST_CASE("sqrt-delta decay of the constant-field norm") {
    ScalarField one = [](double, const Pt&) { return 1.0; };
    const double k16 = kato_norm(one, 2, KatoFamily::K_ALPHA, 2.0, 0.16);
    const double k04 = kato_norm(one, 2, KatoFamily::K_ALPHA, 2.0, 0.04);
    const double k01 = kato_norm(one, 2, KatoFamily::K_ALPHA, 2.0, 0.01);
    CHECK(k04 / k16 == doctest::Approx(0.5).epsilon(0.3));
    CHECK(k01 / k04 == doctest::Approx(0.5).epsilon(0.3));
}

TEST_CASE("norm nondecreasing in delta") {
    ScalarField f = [](double t, const Pt& x) {
        return std::abs(std::sin(3.0 * t)) + std::exp(-x.norm2());
    };
    double prev = 0.0;
    for (double delta : {0.01, 0.04, 0.16, 0.64}) {
        const double v = kato_norm(f, 2, KatoFamily::K_ALPHA, 2.0, delta);
        CHECK(v >= prev - 1e-12);
        prev = v;
    }
}

TEST_CASE("singular L^p example is Kato-class") {
    // f(x) = |x|^{-1/2} 1_{|x| <= 1}: norms decrease to zero along the grid
    ScalarField f = [](double, const Pt& x) {
        const double r = x.norm();
        if (r > 1.0 || r < 1e-9) return 0.0;
        return 1.0 / std::sqrt(r);
    };
    auto rep = kato_membership(f, 2, KatoFamily::K_ALPHA, 2.0, {0.01, 0.04, 0.16});
    CHECK(rep.verdict == "member");
    CHECK(rep.norms[0] < rep.norms[2]);
    const std::string j = rep.to_json();
    CHECK(j.find("K_alpha") != std::string::npos);
}

TEST_CASE("subadditivity with a finite fitted constant") {
    ScalarField one = [](double, const Pt&) { return 1.0; };
    auto rep = kato_subadditivity_check(one, 2, 2.0, 0.05, 4);
    CHECK(rep.pass);
    CHECK(std::isfinite(rep.fitted_c));
    for (double r : rep.ratios) CHECK(r <= rep.fitted_c);

    // thin slab indicator
    ScalarField slab = [](double, const Pt& x) { return std::abs(x[0]) < 0.05 ? 1.0 : 0.0; };
    auto rep2 = kato_subadditivity_check(slab, 2, 2.0, 0.05, 3);
    CHECK(rep2.pass);
}

TEST_CASE("mollified field does not increase the Kato norm") {
    ScalarField slab = [](double, const Pt& x) { return std::abs(x[0]) < 0.3 ? 1.0 : 0.0; };
    ScalarField se = mollify(slab, 2, 0.1, 8);
    KatoQuad quad;
    quad.n_probes = 8;
    const double k_raw = kato_norm(slab, 2, KatoFamily::K_ALPHA, 2.0, 0.05, quad);
    const double k_mol = kato_norm(se, 2, KatoFamily::K_ALPHA, 2.0, 0.05, quad);
    CHECK(k_mol <= k_raw * 1.02);
}

TEST_CASE("constant drift closed-form K2 shortcut") {
    ModelSpec m;
    m.d = 2;
    m.alpha = 1.0;
    m.T = 1.0;
    m.a = diffusion_identity(2);
    m.b = drift_constant(2, Pt{0.5, 0.0});
    m.kappa = kappa_zero();
    const double got = drift_kato_k2(m, 0.09);
    CHECK(got == doctest::Approx(0.5 * (8.0 * kPi / 3.0) * 0.3).epsilon(1e-12));
    m.b = drift_zero(2);
    CHECK(drift_kato_k2(m, 0.09) == 0.0);
}
