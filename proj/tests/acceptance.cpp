// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one pass/fail line per criterion.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "hk/harness.hpp"
#include "hk/kato.hpp"
#include "hk/profiles.hpp"
#include "hk/quadrature.hpp"

using namespace hk;

namespace {

struct Criterion {
    std::string id;
    bool pass = false;
    double value = 0.0;
    double tol = 0.0;
    double seconds = 0.0;
    std::string note;
};

std::vector<Criterion> g_results;

template <class F>
void run(const std::string& id, F&& body) {
    Criterion c;
    c.id = id;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        body(c);
    } catch (const std::exception& e) {
        c.pass = false;
        c.note = std::string("exception: ") + e.what();
    }
    c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    g_results.push_back(c);
    std::printf("[%s] %-38s value=%.4g tol=%.4g (%.1fs)%s%s\n", c.pass ? "PASS" : "FAIL",
                c.id.c_str(), c.value, c.tol, c.seconds, c.note.empty() ? "" : " -- ",
                c.note.c_str());
    std::fflush(stdout);
}

const CheckResult* find_check(const ScenarioReport& rep, const std::string& name) {
    for (const auto& c : rep.checks)
        if (c.name == name) return &c;
    return nullptr;
}

}  // namespace

int main() {
    VerifyOptions opt;
    opt.seed = 20240817;

    // shared scenario runs
    std::printf("== building and verifying scenario catalog ==\n");
    ScenarioReport rep_gauss = verify_scenario("gaussian-exact", opt);
    ScenarioReport rep_holder = verify_scenario("holder-diffusion", opt);
    ScenarioReport rep_signed = verify_scenario("signed-jump", opt);
    ScenarioReport rep_trunc = verify_scenario("truncated-jump", opt);

    // 1. gaussian exactness
    run("1-gaussian-exactness", [&](Criterion& c) {
        const auto* chk = find_check(rep_gauss, "gaussian_exact");
        c.value = chk ? chk->value : 1.0;
        c.tol = 1e-3;
        c.pass = chk && chk->pass;
        c.note = "sup rel error vs (2 pi)^{-1} exp(-|v|^2/2) on |v|<=4";
    });

    // 2. constant-jump Fourier oracle for three stability indices
    for (double alpha : {0.5, 1.0, 1.5}) {
        run("2-const-jump-fourier-alpha=" + std::to_string(alpha).substr(0, 3),
            [&](Criterion& c) {
                VerifyOptions o2 = opt;
                o2.with_mc = false;
                Scenario sc = make_scenario("const-jump", alpha);
                EngineConfig cfg = o2.engine;
                Engine eng(sc.spec, cfg);
                DuhamelState st = eng.build(0.0, Pt{0.0, 0.0}, sc.spec.T);
                const StageResult& fin = st.final_stage();
                KernelTable oracle =
                    fourier_reference(2, alpha, 1.0, fin.tau, fin.grid);
                double worst = 0.0;
                for (long i = 0; i < fin.grid.n_points; ++i) {
                    const Pt v = fin.grid.point(i);
                    if (v.norm() > 3.0 * std::sqrt(fin.tau)) continue;
                    const double ov = oracle.values[size_t(i)];
                    worst = std::max(worst, std::abs(fin.p[size_t(i)] - ov) / ov);
                }
                c.value = worst;
                c.tol = 0.03;
                c.pass = worst <= c.tol;
            });
    }

    // 3. Chapman-Kolmogorov for the Holder scenario
    run("3-chapman-kolmogorov-holder", [&](Criterion& c) {
        const auto* chk = find_check(rep_holder, "ck_midpoint");
        c.value = chk ? chk->value : 1.0;
        c.tol = chk ? chk->tol : 0.0;
        c.pass = chk && chk->pass;
        c.note = "grid tol " + std::to_string(rep_holder.grid_tol);
    });

    // 4. conservativeness across scenarios
    run("4-conservativeness", [&](Criterion& c) {
        c.pass = true;
        for (const auto* rep : {&rep_gauss, &rep_holder, &rep_signed, &rep_trunc}) {
            const auto* chk = find_check(*rep, "conservativeness");
            if (!chk) continue;
            c.value = std::max(c.value, chk->value);
            c.tol = std::max(c.tol, chk->tol);
            if (!chk->pass) {
                c.pass = false;
                c.note += rep->scenario + " ";
            }
        }
    });

    // 5. two-sided sandwich with refinement stability
    run("5-two-sided-sandwich", [&](Criterion& c) {
        const auto* fit = find_check(rep_holder, "two_sided_sandwich");
        const auto* stab = find_check(rep_holder, "sandwich_refinement");
        c.value = stab ? stab->value : 1.0;
        c.tol = 0.25;
        c.pass = fit && fit->pass && stab && stab->pass;
        if (fit) c.note = "C = " + std::to_string(fit->value);
    });

    // 6. gradient: finite differences + envelope
    run("6-gradient-check", [&](Criterion& c) {
        VerifyOptions o2 = opt;
        o2.with_mc = false;
        ScenarioReport rep_cj = verify_scenario("const-jump", o2);
        const auto* fd = find_check(rep_cj, "gradient_fd");
        const auto* env = find_check(rep_cj, "gradient_envelope");
        c.value = fd ? fd->value : 1.0;
        c.tol = fd ? fd->tol : 1e-3;
        c.pass = fd && fd->pass && env && env->pass;
    });

    // 7. comparison-kernel property suite
    run("7-profiles-suite", [&](Criterion& c) {
        InequalityParams prm;
        prm.d = 2;
        prm.alpha = 1.0;
        prm.beta = 1.0;
        InequalityReport eq3p = check_3p_inequality(InequalityKind::EQ3P, prm, 10000, opt.seed);
        auto cke = check_gaussian_convolution_identity(1.0, 2, 1.0, 1.0, Pt{0.0, 0.0});
        auto cke2 = check_gaussian_convolution_identity(2.0, 3, 0.5, 0.25, Pt{1.0, 0.0, 0.0}, 48);
        c.value = std::max(eq3p.max_ratio, cke.rel_error * 1e6);
        c.tol = 8.0;
        c.pass = eq3p.pass && cke.rel_error <= 1e-6 && cke2.rel_error <= 1e-6;
        c.note = "max eq3p ratio " + std::to_string(eq3p.max_ratio);
    });

    // 8. Monte Carlo agreement for the Holder scenario
    run("8-monte-carlo-agreement", [&](Criterion& c) {
        const auto* chk = find_check(rep_holder, "mc_agreement");
        c.value = chk ? chk->value : 1.0;
        c.tol = 0.0;
        c.pass = chk && chk->pass;
        c.note = "sup gap beyond 3(SE + grid tol)";
    });

    // 9. exit-time bound
    run("9-exit-time-bound", [&](Criterion& c) {
        Scenario sc = make_scenario("const-jump");
        PathConfig pc;
        pc.n_paths = 20000;
        pc.dt = 2e-4;
        pc.rng_seed = opt.seed ^ 0x7777;
        // pilot fit of gamma0 at delta = 0.1
        double gamma0 = 0.4;
        for (double g : {0.4, 0.2, 0.1, 0.05}) {
            ExitStats e = exit_time_prob(sc.spec, 0.0, Pt{0.0, 0.0}, 0.1, g, pc);
            gamma0 = g;
            if (e.probability <= 0.35) break;
        }
        bool pass = true;
        double worst = 0.0;
        for (double delta : {0.1, 0.2}) {
            ExitStats e = exit_time_prob(sc.spec, 0.0, Pt{0.0, 0.0}, delta, gamma0, pc);
            worst = std::max(worst, e.probability - 3.0 * e.std_error);
            if (e.probability > 0.5 + 3.0 * e.std_error) pass = false;
        }
        Scenario hold = make_scenario("holder-diffusion");
        ExitStats e3 = exit_time_prob(hold.spec, 0.0, Pt{0.3, -0.2}, 0.1, gamma0, pc);
        if (e3.probability > 0.5 + 3.0 * e3.std_error) pass = false;
        c.value = worst;
        c.tol = 0.5;
        c.pass = pass;
        c.note = "gamma0 = " + std::to_string(gamma0);
    });

    // 10. truncated case decay
    run("10-truncated-decay", [&](Criterion& c) {
        const auto* slope = find_check(rep_trunc, "truncated_slope");
        const auto* up = find_check(rep_trunc, "truncated_upper");
        const auto* lo = find_check(rep_trunc, "truncated_lower");
        c.value = slope ? slope->value : 0.0;
        c.tol = 8.0;
        c.pass = slope && slope->pass && up && up->pass && lo && lo->pass;
        c.note = "fitted slope (band [1/8, 8])";
    });

    // 11. signed-kappa robustness
    run("11-signed-kappa", [&](Criterion& c) {
        const auto* res = find_check(rep_signed, "duhamel_residual");
        const auto* mn = find_check(rep_signed, "signed_min_reported");
        c.value = res ? res->value : 1.0;
        c.tol = res ? res->tol : 0.0;
        c.pass = res && res->pass && mn != nullptr;
        if (mn) c.note = mn->witness;
    });

    // 12. Kato module decay
    run("12-kato-decay", [&](Criterion& c) {
        ScalarField one = [](double, const Pt&) { return 1.0; };
        const double k16 = kato_norm(one, 2, KatoFamily::K_ALPHA, 2.0, 0.16);
        const double k04 = kato_norm(one, 2, KatoFamily::K_ALPHA, 2.0, 0.04);
        const double k01 = kato_norm(one, 2, KatoFamily::K_ALPHA, 2.0, 0.01);
        const double r1 = k04 / k16, r2 = k01 / k04;
        ScalarField lp = [](double, const Pt& x) {
            const double r = x.norm();
            if (r > 1.0 || r < 1e-9) return 0.0;
            return 1.0 / std::sqrt(r);
        };
        auto mem = kato_membership(lp, 2, KatoFamily::K_ALPHA, 2.0, {0.01, 0.04, 0.16});
        c.value = std::max(std::abs(r1 - 0.5), std::abs(r2 - 0.5));
        c.tol = 0.15;  // sqrt-decay ratio 0.5 within 30%
        c.pass = c.value <= c.tol && mem.verdict == "member" && mem.norms[0] < mem.norms[2];
    });

    int failures = 0;
    for (const auto& c : g_results)
        if (!c.pass) ++failures;
    std::printf("== acceptance: %zu criteria, %d failures ==\n", g_results.size(), failures);
    return failures == 0 ? 0 : 1;
}
