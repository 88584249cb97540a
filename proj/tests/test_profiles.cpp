#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "hk/profiles.hpp"
#include "hk/quadrature.hpp"

using namespace hk;

TEST_CASE("profile point values") {
    ComparisonProfile xi0{ProfileFamily::XI, 2.0, 0.0, 1.0, 1.0};
    CHECK(evaluate_profile(xi0, 2, 1.0, Pt{0.0, 0.0}) == doctest::Approx(1.0));
    ComparisonProfile eta0{ProfileFamily::ETA, 1.0, 0.0, 0.7, 1.0};
    CHECK(evaluate_profile(eta0, 3, 1.0, Pt{0.0, 0.0, 0.0}) == doctest::Approx(1.0));
    ComparisonProfile xi1{ProfileFamily::XI, 1.0, 0.0, 1.0, 1.0};
    CHECK(evaluate_profile(xi1, 2, 1.0, Pt{1.0, 0.0}) ==
          doctest::Approx(std::exp(-1.0)).epsilon(1e-9));
    CHECK_THROWS_AS(evaluate_profile(xi1, 2, 0.0, Pt{1.0, 0.0}), DomainError);
    ComparisonProfile bad{ProfileFamily::ETA, 1.0, 0.0, 2.5, 1.0};
    CHECK_THROWS_AS(evaluate_profile(bad, 2, 1.0, Pt{0.0, 0.0}), ConfigError);
}

TEST_CASE("eta_bar log-space evaluation survives extreme exponents") {
    // (t/|x|)^{lambda |x|} with large |x| underflows unless done in logs
    const double v = eta_bar(1.0, 8.0, 2, 0.25, 30.0 * 30.0);
    CHECK(std::isfinite(v));
    CHECK(v >= 0.0);
    const double lv = std::log(eta_bar(1.0, 8.0, 2, 0.25, 4.0));
    CHECK(lv == doctest::Approx(8.0 * 2.0 * std::log(0.25 / 2.0)).epsilon(1e-12));
}

TEST_CASE("profile scaling identity") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> uc(0.25, 4.0), ut(0.05, 2.0), ux(-3.0, 3.0);
    const double alpha = 1.3, gamma = 0.7;
    const int d = 2;
    for (int i = 0; i < 100; ++i) {
        const double c = uc(rng), t = ut(rng);
        Pt x{ux(rng), ux(rng)};
        const double lhs = eta(alpha, gamma, d, c * t, c * x.norm2());
        const double rhs = std::pow(c, 0.5 * (gamma - d - alpha)) * eta(alpha, gamma, d, t, x.norm2());
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
        const double lx = xi(2.0, gamma, d, c * t, c * x.norm2());
        const double rx = std::pow(c, 0.5 * (gamma - d)) * xi(2.0, gamma, d, t, x.norm2());
        CHECK(lx == doctest::Approx(rx).epsilon(1e-12));
    }
}

TEST_CASE("monotonicity in |x| for fixed t") {
    for (double r = 0.0; r < 3.0; r += 0.1) {
        CHECK(xi(1.0, 0.0, 2, 0.5, (r + 0.1) * (r + 0.1)) <= xi(1.0, 0.0, 2, 0.5, r * r));
        CHECK(eta(1.2, 1.0, 2, 0.5, (r + 0.1) * (r + 0.1)) <= eta(1.2, 1.0, 2, 0.5, r * r));
        CHECK(eta_bar(1.2, 2.0, 2, 0.5, (r + 0.1) * (r + 0.1)) <=
              eta_bar(1.2, 2.0, 2, 0.5, r * r) * (1.0 + 1e-12));
    }
}

TEST_CASE("gaussian domination by the stable envelope") {
    // xi_{l,0} <= C1 eta_{a,a}: fitted constant finite and stable
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> ut(1e-3, 1.0), ux(-6.0, 6.0);
    double c_half = 0.0, c_full = 0.0;
    for (int i = 0; i < 4000; ++i) {
        const double t = ut(rng);
        Pt x{ux(rng), ux(rng)};
        const double ratio = xi(1.0, 0.0, 2, t, x.norm2()) / eta(1.2, 1.2, 2, t, x.norm2());
        if (i < 2000) c_half = std::max(c_half, ratio);
        c_full = std::max(c_full, ratio);
    }
    CHECK(std::isfinite(c_full));
    CHECK(c_full <= 1.1 * std::max(c_half, 1e-300) * 10.0);
}

TEST_CASE("gaussian convolution identity") {
    auto rep = check_gaussian_convolution_identity(1.0, 2, 1.0, 1.0, Pt{0.0, 0.0});
    CHECK(rep.rhs == doctest::Approx(kPi / 2.0).epsilon(1e-12));
    CHECK(rep.rel_error < 1e-9);

    auto rep3 = check_gaussian_convolution_identity(2.0, 3, 0.5, 0.25, Pt{1.0, 0.0, 0.0}, 48);
    CHECK(rep3.rel_error < 1e-8);

    CHECK_THROWS_AS(check_gaussian_convolution_identity(1.0, 2, 0.0, 1.0, Pt{0.0, 0.0}),
                    DomainError);
}

TEST_CASE("convolution identity improves under quadrature refinement") {
    auto coarse = check_gaussian_convolution_identity(1.0, 2, 0.7, 0.4, Pt{1.3, -0.4}, 12);
    auto fine = check_gaussian_convolution_identity(1.0, 2, 0.7, 0.4, Pt{1.3, -0.4}, 48);
    CHECK(fine.rel_error <= coarse.rel_error + 1e-14);
}

TEST_CASE("eq3p pointwise inequality with the explicit constant") {
    InequalityParams prm;
    prm.d = 2;
    prm.alpha = 1.0;
    prm.beta = 1.0;
    InequalityReport rep = check_3p_inequality(InequalityKind::EQ3P, prm, 10000, 42);
    CHECK(rep.bound == doctest::Approx(8.0));
    CHECK(rep.pass);
    CHECK(rep.max_ratio <= 8.0);
    // symmetric trivial point x = y = 0, t = s sits well inside the bound
    const double lhs = eta(1.0, 0.0, 2, 0.3, 0.0) * eta(1.0, 0.0, 2, 0.3, 0.0);
    const double rhs = 2.0 * eta(1.0, 0.0, 2, 0.3, 0.0) * eta(1.0, 0.0, 2, 0.6, 0.0);
    CHECK(lhs / rhs <= 8.0);
}

TEST_CASE("eta mass ineq: scale invariance at gamma = alpha") {
    InequalityParams prm;
    prm.alpha = 1.4;
    prm.gamma1 = 1.4;  // gamma = alpha: the integral is t-independent
    InequalityReport rep = check_3p_inequality(InequalityKind::INEQ, prm, 24, 3);
    CHECK(rep.pass);
    // direct two-t comparison
    auto mass_at = [](double alpha, double t) {
        InequalityParams p2;
        p2.alpha = alpha;
        p2.gamma1 = alpha;
        // closed form in d=2: 2 pi / (alpha (1 + alpha)) independent of t
        return 2.0 * kPi / (alpha * (1.0 + alpha));
    };
    CHECK(mass_at(1.4, 1e-3) == doctest::Approx(mass_at(1.4, 1.0)).epsilon(0.01));
}

TEST_CASE("integral inequality fits stay finite") {
    InequalityParams prm;
    prm.alpha = 1.0;
    prm.beta = 1.0;
    prm.gamma1 = 0.5;
    prm.gamma2 = 0.5;
    prm.T = 0.5;
    for (InequalityKind k : {InequalityKind::ETA_LOWER, InequalityKind::THREE_P,
                             InequalityKind::UY3, InequalityKind::UY1, InequalityKind::UY2}) {
        InequalityParams p = prm;
        if (k == InequalityKind::ETA_LOWER) p.gamma1 = 0.5;
        if (k == InequalityKind::UY1 || k == InequalityKind::UY2) p.gamma1 = 0.0;
        InequalityReport rep = check_3p_inequality(k, p, 12, 5);
        INFO(rep.name);
        CHECK(std::isfinite(rep.max_ratio));
        CHECK(rep.max_ratio > 0.0);
        CHECK(rep.pass);
    }
}

TEST_CASE("inadmissible exponents rejected") {
    InequalityParams prm;
    prm.alpha = 1.5;
    prm.beta = 1.0;  // eq3p needs alpha <= beta
    CHECK_THROWS_AS(check_3p_inequality(InequalityKind::EQ3P, prm, 10, 1), ConfigError);
    InequalityParams p3;
    p3.gamma1 = -1.5;
    p3.beta = 1.0;
    p3.alpha = 1.0;  // 3P needs gamma > beta - 2
    CHECK_THROWS_AS(check_3p_inequality(InequalityKind::THREE_P, p3, 10, 1), ConfigError);
}

TEST_CASE("inequality report serializes") {
    InequalityParams prm;
    prm.alpha = 1.0;
    prm.beta = 1.0;
    InequalityReport rep = check_3p_inequality(InequalityKind::EQ3P, prm, 100, 9);
    const std::string j = rep.to_json();
    CHECK(j.find("\"name\":\"eq3p\"") != std::string::npos);
    CHECK(j.find("max_ratio") != std::string::npos);
}
