#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hk/harness.hpp"
#include "hk/oracle.hpp"
#include "hk/quadrature.hpp"

using namespace hk;

namespace {
ModelSpec bm_spec() {
    ModelSpec m;
    m.d = 2;
    m.alpha = 1.0;
    m.T = 1.0;
    m.a = diffusion_identity(2);
    m.b = drift_zero(2);
    m.kappa = kappa_zero();
    return m;
}
}  // namespace

TEST_CASE("fourier reference: pure gaussian case") {
    SpaceTimeGrid g(2, 0.125, 4.0, Pt{0.0, 0.0});
    KernelTable tab = fourier_reference(2, 1.0, 0.0, 1.0, g);
    const long c = g.nearest_index(Pt{0.0, 0.0});
    CHECK(tab.values[size_t(c)] == doctest::Approx(1.0 / (2.0 * kPi)).epsilon(1e-6));
    for (double r : {0.5, 1.0, 2.0}) {
        const long i = g.nearest_index(Pt{r, 0.0});
        const double exact = std::exp(-0.5 * r * r) / (2.0 * kPi);
        CHECK(tab.values[size_t(i)] == doctest::Approx(exact).epsilon(1e-6));
    }
    CHECK(tab.lattice_mass() == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("fourier reference: jump part mass and envelope") {
    SpaceTimeGrid g(2, 0.0625, 4.0, Pt{0.0, 0.0});
    const double t = 0.25, kappa0 = 1.0, alpha = 1.0;
    KernelTable tab = fourier_reference(2, alpha, kappa0, t, g);
    CHECK(tab.lattice_mass() == doctest::Approx(1.0).epsilon(1e-3));
    // sandwiched by fitted multiples of xi + kappa eta_{alpha,2}
    double c_up = 0.0, c_lo = 0.0;
    for (long i = 0; i < g.n_points; ++i) {
        const double r2 = g.point(i).norm2();
        if (r2 > 36.0 * t) continue;
        const double env_up = xi(0.25, 0.0, 2, t, r2) + kappa0 * eta(alpha, 2.0, 2, t, r2);
        const double env_lo = xi(2.0, 0.0, 2, t, r2) + kappa0 * eta(alpha, 2.0, 2, t, r2);
        const double v = tab.values[size_t(i)];
        CHECK(v > 0.0);
        c_up = std::max(c_up, v / env_up);
        c_lo = std::max(c_lo, env_lo / v);
    }
    CHECK(std::isfinite(c_up));
    CHECK(std::isfinite(c_lo));
}

TEST_CASE("brownian endpoint moments") {
    ModelSpec m = bm_spec();
    PathConfig pc;
    pc.n_paths = 40000;
    pc.dt = 1e-2;
    pc.rng_seed = 11;
    PathStats ps = simulate_batch(m, 0.0, Pt{0.3, -0.1}, 1.0, pc);
    double m1x = 0.0, m1y = 0.0, v = 0.0;
    for (const Pt& p : ps.endpoints) {
        m1x += p[0] - 0.3;
        m1y += p[1] + 0.1;
    }
    m1x /= double(pc.n_paths);
    m1y /= double(pc.n_paths);
    for (const Pt& p : ps.endpoints)
        v += (p[0] - 0.3 - m1x) * (p[0] - 0.3 - m1x) + (p[1] + 0.1 - m1y) * (p[1] + 0.1 - m1y);
    v /= double(2 * pc.n_paths);
    const double se = 1.0 / std::sqrt(double(pc.n_paths));
    CHECK(std::abs(m1x) < 3.0 * se);
    CHECK(std::abs(m1y) < 3.0 * se);
    CHECK(v == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("constant drift shifts the mean") {
    ModelSpec m = bm_spec();
    m.b = drift_constant(2, Pt{0.8, -0.4});
    PathConfig pc;
    pc.n_paths = 20000;
    pc.dt = 1e-2;
    pc.rng_seed = 5;
    PathStats ps = simulate_batch(m, 0.0, Pt{0.0, 0.0}, 0.5, pc);
    double m1x = 0.0, m1y = 0.0;
    for (const Pt& p : ps.endpoints) {
        m1x += p[0];
        m1y += p[1];
    }
    m1x /= double(pc.n_paths);
    m1y /= double(pc.n_paths);
    const double se = std::sqrt(0.5) / std::sqrt(double(pc.n_paths));
    CHECK(std::abs(m1x - 0.4) < 4.0 * se);
    CHECK(std::abs(m1y + 0.2) < 4.0 * se);
}

TEST_CASE("jump counts are Poisson with the closed-form rate") {
    ModelSpec m = bm_spec();
    m.kappa = kappa_constant(1.0);
    m.constants.kappa_sup = 1.0;
    PathConfig pc;
    pc.n_paths = 30000;
    pc.dt = 5e-4;
    pc.eps_jump = 0.1;
    pc.rng_seed = 17;
    const double horizon = 0.5;
    PathStats ps = simulate_batch(m, 0.0, Pt{0.0, 0.0}, horizon, pc);
    // Lambda = kappa0 * 2 pi * eps^{-alpha} / alpha (d = 2, alpha = 1)
    const double lam = 2.0 * kPi * 10.0 * horizon;
    double mean = 0.0;
    for (int c : ps.jump_counts) mean += c;
    mean /= double(pc.n_paths);
    CHECK(mean == doctest::Approx(lam).epsilon(0.02));
    // variance of a Poisson equals its mean
    double var = 0.0;
    for (int c : ps.jump_counts) var += (c - mean) * (c - mean);
    var /= double(pc.n_paths - 1);
    CHECK(var == doctest::Approx(lam).epsilon(0.05));
}

TEST_CASE("angular thinning matches the direction profile") {
    ModelSpec m = bm_spec();
    m.kappa = kappa_angular(1.0, 0.5);  // kappa = 1 + 0.5 cos(theta)
    m.constants.kappa_sup = 1.5;
    PathConfig pc;
    pc.n_paths = 4000;
    pc.dt = 1e-3;
    pc.eps_jump = 0.2;
    pc.rng_seed = 23;
    PathStats ps = simulate_batch(m, 0.0, Pt{0.0, 0.0}, 0.5, pc);
    // with few diffusive steps between jumps the endpoint angle statistics are
    // dominated by single large jumps; use endpoints with a large radius
    int right = 0, left = 0;
    for (const Pt& p : ps.endpoints) {
        if (p.norm() < 1.0) continue;
        (p[0] > 0.0 ? right : left)++;
    }
    REQUIRE(right + left > 200);
    // P(cos-weighted right half) = 1/2 + (integral of 0.5 cos over half) /
    // (2 pi) = 0.5 + 0.5*2/(2 pi) approx 0.659 for pure jumps; diffusion mixes
    // it toward 1/2, so only check the sign of the asymmetry
    CHECK(right > left);
}

TEST_CASE("reproducibility with a fixed seed") {
    ModelSpec m = bm_spec();
    m.kappa = kappa_constant(0.5);
    m.constants.kappa_sup = 0.5;
    PathConfig pc;
    pc.n_paths = 100;
    pc.dt = 1e-3;
    pc.rng_seed = 99;
    PathStats a = simulate_batch(m, 0.0, Pt{0.0, 0.0}, 0.25, pc);
    PathStats b = simulate_batch(m, 0.0, Pt{0.0, 0.0}, 0.25, pc);
    for (size_t i = 0; i < a.endpoints.size(); ++i) {
        CHECK(a.endpoints[i][0] == b.endpoints[i][0]);
        CHECK(a.endpoints[i][1] == b.endpoints[i][1]);
    }
    CHECK(simulate_endpoint(m, 0.0, Pt{0.0, 0.0}, 0.25, pc, 3)[0] != 0.0);
}

TEST_CASE("sign-changing kappa is refused by the simulator") {
    ModelSpec m = bm_spec();
    m.kappa = kappa_sin(0.5);
    PathConfig pc;
    pc.n_paths = 10;
    CHECK_THROWS_AS(simulate_batch(m, 0.0, Pt{0.0, 0.0}, 0.1, pc), ConfigError);
}

TEST_CASE("kde of a gaussian cloud") {
    ModelSpec m = bm_spec();
    PathConfig pc;
    pc.n_paths = 200000;
    pc.dt = 0.05;  // exact for Brownian motion
    pc.rng_seed = 31;
    PathStats ps = simulate_batch(m, 0.0, Pt{0.0, 0.0}, 1.0, pc);
    SpaceTimeGrid g(2, 0.125, 4.0, Pt{0.0, 0.0});
    KdeResult kde = density_mc(ps.endpoints, g, -1.0);
    CHECK(kde.bandwidth > 0.0);
    CHECK(kde.table.lattice_mass() == doctest::Approx(1.0).epsilon(0.02));
    double worst = 0.0;
    for (long i = 0; i < g.n_points; ++i) {
        if (g.point(i).norm() > 3.0) continue;
        const double r2 = g.point(i).norm2();
        const double hb2 = kde.bandwidth * kde.bandwidth;
        // KDE of a gaussian is a gaussian with inflated variance
        const double exact = std::exp(-0.5 * r2 / (1.0 + hb2)) / (2.0 * kPi * (1.0 + hb2));
        worst = std::max(worst, std::abs(kde.table.values[size_t(i)] - exact));
    }
    CHECK(worst < 0.02 * (1.0 / (2.0 * kPi)));
    CHECK(kde.bootstrap_se.size() == size_t(g.n_points));
    const long c = g.nearest_index(Pt{0.0, 0.0});
    CHECK(kde.bootstrap_se[size_t(c)] > 0.0);
    CHECK(kde.bootstrap_se[size_t(c)] < 0.05);
}

TEST_CASE("kde error rate improves with the sample size") {
    ModelSpec m = bm_spec();
    PathConfig pc;
    pc.dt = 0.05;
    pc.rng_seed = 57;
    SpaceTimeGrid g(2, 0.125, 4.0, Pt{0.0, 0.0});
    auto ise = [&](long n) {
        PathConfig c2 = pc;
        c2.n_paths = n;
        PathStats ps = simulate_batch(m, 0.0, Pt{0.0, 0.0}, 1.0, c2);
        KdeResult kde = density_mc(ps.endpoints, g, -1.0, 0);
        double acc = 0.0;
        for (long i = 0; i < g.n_points; ++i) {
            const double exact = std::exp(-0.5 * g.point(i).norm2()) / (2.0 * kPi);
            const double d = kde.table.values[size_t(i)] - exact;
            acc += d * d;
        }
        return acc * g.h * g.h;
    };
    const double e1 = ise(25000), e2 = ise(100000);
    CHECK(e2 < e1);  // 4x the data must reduce the integrated squared error
}

TEST_CASE("exit probabilities behave like the theory") {
    ModelSpec m = bm_spec();
    m.kappa = kappa_constant(1.0);
    m.constants.kappa_sup = 1.0;
    PathConfig pc;
    pc.n_paths = 4000;
    pc.dt = 1e-4;
    pc.eps_jump = 0.05;
    pc.rng_seed = 41;
    // small gamma keeps mass near the start: exit prob well below 1/2
    ExitStats ex = exit_time_prob(m, 0.0, Pt{0.0, 0.0}, 0.2, 0.05, pc);
    CHECK(ex.probability < 0.5);
    // hitting a far ball is rarer than exiting the local one
    ExitStats hit = hitting_prob(m, 0.0, Pt{0.0, 0.0}, Pt{1.0, 0.0}, 0.2, 0.05, pc);
    CHECK(hit.probability < ex.probability);
    // with kappa = 0 the far ball is essentially unreachable at these times
    ModelSpec m0 = bm_spec();
    ExitStats hit0 = hitting_prob(m0, 0.0, Pt{0.0, 0.0}, Pt{1.0, 0.0}, 0.2, 0.05, pc);
    CHECK(hit0.probability * 10.0 <= std::max(hit.probability, 1e-4));
}
