// Acceptance gate: one line per criterion, [PASS]/[FAIL], exit code equals
// the number of failed criteria. Tolerances are pinned here, next to each
// check. Every random instance is seeded, so reruns are bit-identical.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <rrmdp/actor_critic.hpp>
#include <rrmdp/experiment.hpp>
#include <rrmdp/mdp.hpp>
#include <rrmdp/oracle.hpp>
#include <rrmdp/policy_gradient.hpp>
#include <rrmdp/rng.hpp>
#include <rrmdp/uncertainty.hpp>

#include "fixtures.hpp"

using namespace rrmdp;

namespace {

int g_failures = 0;

void report(int number, bool pass, const std::string& what, const std::string& detail) {
    std::printf("[%s] AC%d: %s (%s)\n", pass ? "PASS" : "FAIL", number, what.c_str(),
                detail.c_str());
    if (!pass) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, pattern, a, b, c);
    return buf;
}

double table_dot(const Mat& a, const Mat& b) { return (a.array() * b.array()).sum(); }

// AC1: closed-form worst reward vs the certified projected-gradient oracle.
// 20 seeded MDPs per exponent, |<d, R_closed> - <d, R_oracle>| <= 1e-6 with
// every oracle run certified by the primal Holder conditions; under 2 min.
void ac1() {
    auto t0 = std::chrono::steady_clock::now();
    const std::vector<double> ps = {1.0, 1.5, 2.0, 4.0, kInf};
    const double alphas[3] = {0.1, 0.5, 1.0};
    double worst_dev = 0.0;
    int uncertified = 0;
    for (double p : ps) {
        for (int i = 0; i < 20; ++i) {
            int S = 2 + i % 7; // 2..8
            int A = 1 + i % 4; // 1..4
            uint64_t seed = 100 * static_cast<uint64_t>(p == kInf ? 99 : p * 10) + i;
            TabularMdp m = sample_random_mdp(seed, S, A, 0.9);
            Rng rng = Rng::derive(seed, 17);
            Policy pi = fixtures::interior_policy(rng, S, A);
            UncertaintySpec spec = UncertaintySpec::coupled(alphas[i % 3], p);

            WorstCaseReport closed = worst_case_reward(m, pi, spec);
            OracleResult oracle = brute_force_worst_reward(m, pi, spec);
            if (!oracle.certified) ++uncertified;

            OccupancyMeasure occ = occupancy_of(m, pi);
            double dev = std::abs(table_dot(occ.state_action, closed.worst_reward) -
                                  table_dot(occ.state_action, oracle.report.worst_reward));
            worst_dev = std::max(worst_dev, dev);
        }
    }
    double secs = seconds_since(t0);
    bool pass = worst_dev <= 1e-6 && uncertified == 0 && secs < 120.0;
    report(1, pass, "closed-form worst reward matches the certified oracle on 100 instances",
           fmt("max return deviation %.3g, tol 1e-6; uncertified runs %.0f; %.1fs of 120s",
               worst_dev, double(uncertified), secs));
}

// AC2: the frequency-regularization identity rho_0 - alpha ||d||_q = <d, R_worst>
// on 200 seeded (mdp, policy, spec) tuples, tolerance 1e-9.
void ac2() {
    const std::vector<double> ps = {1.0, 1.5, 2.0, 3.0, kInf};
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
        int S = 2 + i % 6;
        int A = 1 + i % 3;
        double gammas[3] = {0.85, 0.9, 0.95};
        TabularMdp m = sample_random_mdp(1000 + i, S, A, gammas[i % 3]);
        Rng rng = Rng::derive(2000 + i, 3);
        Policy pi = fixtures::interior_policy(rng, S, A);
        double alpha = 0.1 + 0.9 * rng.uniform();
        UncertaintySpec spec = UncertaintySpec::coupled(alpha, ps[i % 5]);

        OccupancyMeasure occ = occupancy_of(m, pi);
        Vec flat(S * A);
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a) flat(s * A + a) = occ.state_action(s, a);
        double lhs = return_of(m, pi, m.r0) - alpha * lp_norm(flat, holder_conjugate(ps[i % 5]));
        double rhs = table_dot(occ.state_action, worst_case_reward(m, pi, spec).worst_reward);
        worst = std::max(worst, std::abs(lhs - rhs));
    }
    report(2, worst <= 1e-9, "return identity rho_0 - alpha ||d||_q on 200 tuples",
           fmt("max |lhs - rhs| = %.3g, tol 1e-9", worst));
}

// AC3: robust value iteration agrees with the exact solve under the
// substituted worst reward (1e-8 sup norm) and every measured residual
// contracts by at most gamma + 1e-12; 100 instances.
void ac3() {
    double worst_gap = 0.0;
    double worst_ratio_excess = -1.0;
    for (int i = 0; i < 100; ++i) {
        int S = 2 + i % 7;
        int A = 1 + i % 4;
        double gamma = 0.6 + 0.35 * ((i * 7) % 10) / 10.0;
        TabularMdp m = sample_random_mdp(3000 + i, S, A, gamma);
        Rng rng = Rng::derive(4000 + i, 5);
        Policy pi = fixtures::interior_policy(rng, S, A);
        const std::vector<double> ps = {1.0, 1.5, 2.0, 4.0, kInf};
        UncertaintySpec spec = UncertaintySpec::coupled(0.1 + 0.5 * rng.uniform(), ps[i % 5]);

        ValueIterationResult vi = robust_value_iteration(m, pi, spec, 1e-10);
        Vec exact = robust_value(m, pi, spec);
        worst_gap = std::max(worst_gap, (vi.v - exact).lpNorm<Eigen::Infinity>());
        for (size_t k = 1; k < vi.residual_history.size(); ++k) {
            double prev = vi.residual_history[k - 1];
            if (prev <= 0.0) continue;
            double ratio = vi.residual_history[k] / prev;
            worst_ratio_excess = std::max(worst_ratio_excess, ratio - (gamma + 1e-12));
        }
    }
    bool pass = worst_gap <= 1e-8 && worst_ratio_excess <= 0.0;
    report(3, pass, "robust VI fixed point and per-iteration contraction on 100 instances",
           fmt("max |vi - exact| = %.3g (tol 1e-8); max residual ratio excess over gamma + 1e-12 "
               "= %.3g",
               worst_gap, worst_ratio_excess));
}

// AC4: occupancy iteration stays inside the L1 contraction envelope
// ||d_n - d*||_1 <= gamma^n ||d_0 - d*||_1 for every n <= 200; 50 instances.
void ac4() {
    double worst_excess = -1.0;
    for (int i = 0; i < 50; ++i) {
        int S = 2 + i % 7;
        int A = 1 + i % 4;
        double gamma = 0.5 + 0.47 * (i % 10) / 10.0;
        TabularMdp m = sample_random_mdp(5000 + i, S, A, gamma);
        Rng rng = Rng::derive(6000 + i, 7);
        Policy pi = fixtures::interior_policy(rng, S, A);

        Vec d_star = occupancy_exact(m, pi).state;
        Mat kernel = policy_kernel(m, pi);
        Vec d = m.mu;
        double envelope = (d - d_star).cwiseAbs().sum();
        for (int n = 1; n <= 200; ++n) {
            d = occupancy_step(kernel, m.mu, gamma, d);
            envelope *= gamma;
            double err = (d - d_star).cwiseAbs().sum();
            worst_excess = std::max(worst_excess, err - envelope);
        }
    }
    report(4, worst_excess <= 1e-12,
           "occupancy iterates obey the gamma^n L1 envelope for n <= 200 on 50 instances",
           fmt("max excess over envelope = %.3g (allowance 1e-12)", worst_excess));
}

// AC5: analytic robust gradients vs central finite differences, relative
// error <= 1e-4, p in {1.5, 2, 4}, both parametrizations; 50 instances.
void ac5() {
    const double h = 1e-6;
    const std::vector<double> ps = {1.5, 2.0, 4.0};
    double worst_rel = 0.0;
    for (int i = 0; i < 50; ++i) {
        int S = 2 + i % 4;
        int A = 2 + i % 2;
        TabularMdp m = sample_random_mdp(7000 + i, S, A, 0.9);
        Rng rng = Rng::derive(8000 + i, 11);
        Policy pi = fixtures::interior_policy(rng, S, A);
        UncertaintySpec spec = UncertaintySpec::coupled(0.1 + 0.4 * rng.uniform(), ps[i % 3]);

        // Direct: compare tangent-projected analytic entries against central
        // differences along the tangent directions e_{sa} - uniform.
        Mat g = robust_policy_gradient(m, pi, spec);
        Mat fd = Mat::Zero(S, A);
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a) {
                Policy up = pi, dn = pi;
                for (int b = 0; b < A; ++b) {
                    double delta = (b == a ? 1.0 : 0.0) - 1.0 / A;
                    up.probs(s, b) += h * delta;
                    dn.probs(s, b) -= h * delta;
                }
                fd(s, a) = (robust_return_of(m, up, spec) - robust_return_of(m, dn, spec)) / (2 * h);
            }
        Mat tangent = g;
        for (int s = 0; s < S; ++s) tangent.row(s).array() -= g.row(s).mean();
        double scale = std::max(1.0, tangent.cwiseAbs().maxCoeff());
        worst_rel = std::max(worst_rel, (fd - tangent).cwiseAbs().maxCoeff() / scale);

        // Softmax: plain coordinate central differences on the logits.
        Mat theta = Mat::Zero(S, A);
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a) theta(s, a) = rng.uniform(-1.0, 1.0);
        Mat gs = robust_policy_gradient_softmax(m, theta, spec);
        Mat fds = Mat::Zero(S, A);
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a) {
                Mat up = theta, dn = theta;
                up(s, a) += h;
                dn(s, a) -= h;
                fds(s, a) = (robust_return_of(m, softmax_policy(up), spec) -
                             robust_return_of(m, softmax_policy(dn), spec)) /
                            (2 * h);
            }
        double sscale = std::max(1.0, gs.cwiseAbs().maxCoeff());
        worst_rel = std::max(worst_rel, (fds - gs).cwiseAbs().maxCoeff() / sscale);
    }
    report(5, worst_rel <= 1e-4,
           "analytic gradients match finite differences in both parametrizations on 50 instances",
           fmt("max relative error = %.3g, tol 1e-4", worst_rel));
}

// AC6: projected PG with Armijo on 10 seeded 3x2 MDPs (p=2, alpha=0.3):
// monotone trace, saddle-certificate gap <= 1e-4, under 60 s per instance.
void ac6() {
    double worst_gap = -1.0;
    double worst_secs = 0.0;
    bool monotone = true;
    for (uint64_t i = 1; i <= 10; ++i) {
        auto t0 = std::chrono::steady_clock::now();
        TabularMdp m = sample_random_mdp(i, 3, 2, 0.9);
        UncertaintySpec spec = UncertaintySpec::coupled(0.3, 2.0);
        PgConfig cfg;
        cfg.max_iters = 50000;
        cfg.grad_tol = 1e-8;
        TrainResult res = train_projected_pg(m, spec, cfg);
        for (size_t k = 1; k < res.trace.size(); ++k)
            if (res.trace[k].robust_return < res.trace[k - 1].robust_return - 1e-12)
                monotone = false;
        SaddleCertificate cert = saddle_certificate(m, res.policy, spec);
        worst_gap = std::max(worst_gap, cert.gap);
        if (cert.gap < -1e-9) monotone = false; // a negative gap means a broken certificate
        worst_secs = std::max(worst_secs, seconds_since(t0));
    }
    bool pass = monotone && worst_gap <= 1e-4 && worst_secs < 60.0;
    report(6, pass, "Armijo PG closes the saddle gap on 10 seeded 3x2 MDPs",
           fmt("max gap %.3g (tol 1e-4); monotone traces; slowest instance %.2fs of 60s",
               worst_gap, worst_secs));
}

// AC7: conservatism ordering sa-rect <= s-rect <= coupled (slack 1e-9) at
// matched radii on 100 instances, and the rectangularized fixed point equals
// the s-rect evaluation within 1e-8.
void ac7() {
    double worst_order = -1.0;
    double worst_rect = 0.0;
    const std::vector<double> ps = {1.0, 1.5, 2.0, 4.0, kInf};
    for (int i = 0; i < 100; ++i) {
        int S = 2 + i % 6;
        int A = 1 + i % 3;
        TabularMdp m = sample_random_mdp(9000 + i, S, A, 0.9);
        Rng rng = Rng::derive(10000 + i, 13);
        Policy pi = fixtures::interior_policy(rng, S, A);
        double alpha = 0.05 + 0.95 * rng.uniform();
        double p = ps[i % 5];

        double coupled = robust_return_of(m, pi, UncertaintySpec::coupled(alpha, p));
        double s_rect = robust_return_of(m, pi, UncertaintySpec::s_rect_uniform(alpha, p, S));
        double sa_rect = robust_return_of(m, pi, UncertaintySpec::sa_rect_uniform(alpha, S, A));
        worst_order = std::max(worst_order, s_rect - coupled);
        worst_order = std::max(worst_order, sa_rect - s_rect);

        Vec rect = rectangularized_value(m, pi, alpha, p, 1e-12).v;
        Vec s_rect_v = robust_value(m, pi, UncertaintySpec::s_rect_uniform(alpha, p, S));
        worst_rect = std::max(worst_rect, (rect - s_rect_v).lpNorm<Eigen::Infinity>());
    }
    bool pass = worst_order <= 1e-9 && worst_rect <= 1e-8;
    report(7, pass, "conservatism ordering and rectangularized fixed point on 100 instances",
           fmt("max ordering violation %.3g (slack 1e-9); max |rectangularized - s-rect| = %.3g "
               "(tol 1e-8)",
               worst_order, worst_rect));
}

// AC8: the reference tabular protocol (seed 1, S in {5,10,15}, A=5,
// gamma=0.99, 1000 Gaussian samples, CVaR 5%): finishes < 15 min, the
// alpha = 0 column collapses all methods within 1e-6, and some alpha has the
// coupled method's CVaR strictly above the s-rect method's.
void ac8() {
    auto t0 = std::chrono::steady_clock::now();
    SweepConfig cfg; // defaults are exactly the reference protocol
    cfg.pg.max_iters = 2000;
    cfg.pg.grad_tol = 1e-6;
    SweepResult res = run_alpha_sweep(cfg);
    double secs = seconds_since(t0);

    bool all_ok = true;
    for (const SweepCell& c : res.cells)
        if (!c.ok()) all_ok = false;

    double collapse = 0.0;
    for (const SweepCell& a : res.cells)
        if (a.alpha == 0.0)
            for (const SweepCell& b : res.cells)
                if (b.alpha == 0.0 && b.num_states == a.num_states)
                    collapse = std::max(collapse, std::abs(a.cvar - b.cvar));

    double best_margin = -1e300;
    for (const SweepCell& a : res.cells)
        if (a.method == "coupled")
            for (const SweepCell& b : res.cells)
                if (b.method == "s-rect" && b.alpha == a.alpha && b.num_states == a.num_states)
                    best_margin = std::max(best_margin, a.cvar - b.cvar);

    bool pass = all_ok && secs < 900.0 && collapse <= 1e-6 && best_margin > 0.0;
    report(8, pass, "reference CVaR sweep: zero-radius collapse and coupled tail dominance",
           fmt("alpha=0 spread %.3g (tol 1e-6); best coupled - s-rect CVaR margin %.3g (> 0); "
               "%.1fs of 900s",
               collapse, best_margin, secs));
}

// AC9: on the two-state chain (alpha=0.2, p=2) the online actor-critic lands
// within 0.05 |rho*| of the model-based PG optimum on 5 seeds, and with the
// actor frozen the occupancy tracker reaches absolute L1 error <= 0.05.
void ac9() {
    TabularMdp m = fixtures::two_state_chain();
    UncertaintySpec spec = UncertaintySpec::coupled(0.2, 2.0);

    PgConfig pg;
    pg.max_iters = 20000;
    pg.grad_tol = 1e-7;
    double rho_star = train_projected_pg(m, spec, pg).trace.back().robust_return;

    double worst_rel = 0.0;
    for (uint64_t seed = 1; seed <= 5; ++seed) {
        ActorCriticConfig cfg;
        cfg.seed = seed;
        cfg.total_steps = 320000;
        ActorCriticResult res = tabular_actor_critic(m, spec, cfg);
        double rho = robust_return_of(m, res.policy, spec);
        worst_rel = std::max(worst_rel, std::abs(rho - rho_star) / std::abs(rho_star));
    }

    Vec d = occupancy_exact(m, Policy::uniform(2, 2)).state;
    double worst_l1 = 0.0;
    for (uint64_t seed = 1; seed <= 5; ++seed) {
        ActorCriticConfig frozen;
        frozen.seed = seed;
        frozen.actor_scale = 0.0;
        frozen.batch_size = 256;
        frozen.total_steps = 25600000;
        ActorCriticResult res = tabular_actor_critic(m, spec, frozen);
        worst_l1 = std::max(worst_l1, (res.state.zeta - d).cwiseAbs().sum());
    }

    bool pass = worst_rel <= 0.05 && worst_l1 <= 0.05;
    report(9, pass, "actor-critic return accuracy and frozen-actor occupancy tracking",
           fmt("worst |rho_ac - rho*| / |rho*| = %.4f (tol 0.05); worst zeta L1 = %.4f (tol 0.05)",
               worst_rel, worst_l1));
}

// AC10: robust evaluation at S=500, A=10 via one iterative occupancy solve
// plus penalized value iteration, under 5 s, with the Cor-1 identity as the
// correctness cross-check.
void ac10() {
    TabularMdp m = sample_random_mdp(77, 500, 10, 0.9);
    Policy pi = Policy::uniform(500, 10);
    UncertaintySpec spec = UncertaintySpec::coupled(0.5, 2.0);

    auto t0 = std::chrono::steady_clock::now();
    OccupancyIterationResult occ_it = occupancy_iterative(m, pi, 1e-10);
    const OccupancyMeasure& occ = occ_it.occ;
    Mat penalty = coupled_penalty(spec, occ);
    Mat worst = m.r0 - penalty;
    ValueIterationResult vi = value_iteration(m, pi, worst, 1e-9);
    double robust_return = m.mu.dot(vi.v);
    double secs = seconds_since(t0);

    double identity_dev = std::abs(robust_return - table_dot(occ.state_action, worst));
    bool pass = secs < 5.0 && vi.converged && occ_it.converged && identity_dev <= 1e-6;
    report(10, pass, "robust evaluation at S=500, A=10 via occupancy + penalized VI",
           fmt("%.2fs of 5s; identity deviation %.3g (tol 1e-6)", secs, identity_dev));
}

} // namespace

int main() {
    ac1();
    ac2();
    ac3();
    ac4();
    ac5();
    ac6();
    ac7();
    ac8();
    ac9();
    ac10();
    std::printf("%d of 10 criteria passed\n", 10 - g_failures);
    return g_failures;
}
