#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hk/quadrature.hpp"

using namespace hk;

TEST_CASE("beta function values") {
    CHECK(beta_function(1.0, 1.0) == doctest::Approx(1.0));
    CHECK(beta_function(0.5, 0.5) == doctest::Approx(kPi));
    CHECK(beta_function(2.0, 3.0) == doctest::Approx(1.0 / 12.0));
    CHECK_THROWS_AS(beta_function(-1.0, 2.0), DomainError);
    CHECK_THROWS_AS(beta_function(1.0, 0.0), DomainError);
}

TEST_CASE("gauss-legendre integrates polynomials exactly") {
    const QuadRule gl = gauss_legendre(6, -1.0, 2.0);
    const double got = gl.integrate([](double x) { return x * x * x * x * x; });
    // integral of x^5 over [-1,2] = (64 - 1)/6
    CHECK(got == doctest::Approx(63.0 / 6.0).epsilon(1e-12));
}

TEST_CASE("beta singular rule: plain interval") {
    const QuadRule r = beta_singular_time_rule(0.0, 0.0, 2, 0.3, 0.9);
    CHECK(r.integrate([](double) { return 1.0; }) == doctest::Approx(0.6).epsilon(1e-13));
}

TEST_CASE("beta singular rule: left square-root singularity") {
    // integral_0^1 r^{-1/2} dr = 2
    const QuadRule r = beta_singular_time_rule(-1.0, 0.0, 8, 0.0, 1.0);
    CHECK(r.integrate([](double) { return 1.0; }) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("beta singular rule: both endpoints, Beta identity") {
    // integral_0^1 r^{-1/2}(1-r)^{-1/2} dr = B(1/2, 1/2) = pi
    const QuadRule r = beta_singular_time_rule(-1.0, -1.0, 8, 0.0, 1.0);
    CHECK(r.integrate([](double) { return 1.0; }) == doctest::Approx(kPi).epsilon(1e-12));
}

TEST_CASE("beta singular rule: weight mass matches the Beta function") {
    const double g1 = -0.8, g2 = 0.6, t = 0.2, s = 1.4;
    const QuadRule r = beta_singular_time_rule(g1, g2, 12, t, s);
    const double mass = r.integrate([](double) { return 1.0; });
    const double expect = beta_function(g1 / 2.0 + 1.0, g2 / 2.0 + 1.0) *
                          std::pow(s - t, 1.0 + (g1 + g2) / 2.0);
    CHECK(mass == doctest::Approx(expect).epsilon(1e-12));
    CHECK_THROWS_AS(beta_singular_time_rule(-2.1, 0.0, 4, 0.0, 1.0), DomainError);
}

TEST_CASE("beta singular rule integrates smooth factors to high order") {
    // integral_0^1 r^{1/2} (1-r)^{-1/2} cos(r) dr computed two ways
    const QuadRule r1 = beta_singular_time_rule(1.0, -1.0, 24, 0.0, 1.0);
    const QuadRule r2 = beta_singular_time_rule(1.0, -1.0, 48, 0.0, 1.0);
    const double a = r1.integrate([](double x) { return std::cos(x); });
    const double b = r2.integrate([](double x) { return std::cos(x); });
    CHECK(a == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("graded mesh endpooints and monotonicity") {
    auto mesh = graded_mesh(0.5, 1.5, 10);
    CHECK(mesh.front() == 0.5);
    CHECK(mesh.back() == 1.5);
    for (size_t i = 1; i < mesh.size(); ++i) CHECK(mesh[i] > mesh[i - 1]);
    // end cells are finer than interior ones
    CHECK(mesh[1] - mesh[0] < mesh[5] - mesh[4]);
}

TEST_CASE("product weights reproduce piecewise-linear integrals") {
    auto mesh = graded_mesh(0.0, 1.0, 8);
    auto w = product_weights(mesh, 0.0, 0.0);
    double total = 0.0;
    for (size_t i = 0; i < mesh.size(); ++i) total += w[i] * (2.0 * mesh[i] + 1.0);
    CHECK(total == doctest::Approx(2.0).epsilon(1e-12));  // integral of 2r+1
}

TEST_CASE("product weights with singular right factor") {
    // F(r) = (1-r)^{-1/2} P(r) with P linear: exact through the weights
    auto mesh = graded_mesh(0.0, 1.0, 12);
    auto w = product_weights(mesh, 0.0, -0.5);
    double total = 0.0;
    for (size_t i = 0; i < mesh.size(); ++i) total += w[i] * (3.0 * mesh[i]);
    // integral_0^1 3r (1-r)^{-1/2} dr = 3 B(2, 1/2) = 3 * (4/3) = 4
    CHECK(total == doctest::Approx(4.0).epsilon(1e-10));
}
