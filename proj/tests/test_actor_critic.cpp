#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <stdexcept>

#include <rrmdp/actor_critic.hpp>
#include <rrmdp/mdp.hpp>
#include <rrmdp/policy_gradient.hpp>
#include <rrmdp/uncertainty.hpp>

#include "fixtures.hpp"

using namespace rrmdp;

namespace {

ActorCriticConfig quick_config(uint64_t seed, int total_steps) {
    ActorCriticConfig cfg;
    cfg.seed = seed;
    cfg.total_steps = total_steps;
    return cfg;
}

} // namespace

TEST_CASE("actor-critic config validation", "[actor-critic]") {
    TabularMdp m = fixtures::two_state_chain();
    UncertaintySpec spec = UncertaintySpec::coupled(0.1, 2.0);

    ActorCriticConfig bad = quick_config(0, 1000);
    bad.batch_size = 0;
    CHECK_THROWS_AS(tabular_actor_critic(m, spec, bad), ValidationError);

    bad = quick_config(0, 1000);
    bad.critic_scale = 1.5;
    CHECK_THROWS_AS(tabular_actor_critic(m, spec, bad), ValidationError);

    bad = quick_config(0, 1000);
    bad.actor_exp = 0.4; // faster than the critic
    CHECK_THROWS_AS(tabular_actor_critic(m, spec, bad), ValidationError);

    bad = quick_config(0, 0);
    CHECK_THROWS_AS(tabular_actor_critic(m, spec, bad), ValidationError);
}

TEST_CASE("simulator restart chain visits states with occupancy frequencies", "[actor-critic]") {
    TabularMdp m = fixtures::two_state_chain();
    Policy pi = Policy::uniform(m.num_states, m.num_actions);
    Simulator sim(m, 7);

    const int n = 200000;
    Vec counts = Vec::Zero(m.num_states);
    int starts = 0;
    for (int i = 0; i < n; ++i) {
        Transition t = sim.step(pi);
        counts(t.s) += 1.0;
        if (t.episode_start) ++starts;
    }
    Vec freq = counts / static_cast<double>(n);
    Vec expected = (1.0 - m.gamma) * occupancy_of(m, pi).state;
    for (int s = 0; s < m.num_states; ++s)
        CHECK(freq(s) == Catch::Approx(expected(s)).margin(5e-3));
    // Episodes end with probability 1 - gamma per step.
    CHECK(static_cast<double>(starts) / n == Catch::Approx(1.0 - m.gamma).margin(5e-3));
}

TEST_CASE("actor-critic runs are reproducible per seed", "[actor-critic]") {
    TabularMdp m = fixtures::two_state_chain();
    UncertaintySpec spec = UncertaintySpec::coupled(0.2, 2.0);

    ActorCriticResult a = tabular_actor_critic(m, spec, quick_config(11, 4000));
    ActorCriticResult b = tabular_actor_critic(m, spec, quick_config(11, 4000));
    ActorCriticResult c = tabular_actor_critic(m, spec, quick_config(12, 4000));

    CHECK((a.state.theta - b.state.theta).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.state.omega - b.state.omega).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.state.zeta - b.state.zeta).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.state.omega - c.state.omega).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("frozen actor: occupancy tracker and critic settle at their targets", "[actor-critic]") {
    TabularMdp m = fixtures::two_state_chain();
    UncertaintySpec spec = UncertaintySpec::coupled(0.2, 2.0);
    Policy uniform = Policy::uniform(m.num_states, m.num_actions);

    ActorCriticConfig cfg = quick_config(3, 256000);
    cfg.actor_scale = 0.0; // policy stays uniform
    ActorCriticResult res = tabular_actor_critic(m, spec, cfg);

    Vec d = occupancy_of(m, uniform).state;
    double zeta_err = (res.state.zeta - d).cwiseAbs().sum() / d.sum();
    CHECK(zeta_err <= 0.05);

    QFunction q = robust_q(m, uniform, spec);
    double q_err = (res.state.omega - q.q).cwiseAbs().maxCoeff() / q.q.cwiseAbs().maxCoeff();
    CHECK(q_err <= 0.05);
}

TEST_CASE("actor-critic reaches the nominal optimum when the ball is empty", "[actor-critic]") {
    TabularMdp m = fixtures::two_state_chain();
    UncertaintySpec spec = UncertaintySpec::coupled(0.0, 2.0);
    double rho_star = return_of(m, optimal_value_iteration(m, m.r0, 1e-12).greedy, m.r0);

    ActorCriticResult res = tabular_actor_critic(m, spec, quick_config(1, 320000));
    double rho = return_of(m, res.policy, m.r0);
    CHECK(std::abs(rho - rho_star) <= 0.02 * std::abs(rho_star));
}

TEST_CASE("actor-critic matches the projected-gradient optimum on the robust return",
          "[actor-critic]") {
    TabularMdp m = fixtures::two_state_chain();
    UncertaintySpec spec = UncertaintySpec::coupled(0.2, 2.0);

    PgConfig pg;
    pg.max_iters = 20000;
    pg.grad_tol = 1e-7;
    double rho_star = train_projected_pg(m, spec, pg).trace.back().robust_return;

    for (uint64_t seed : {1ull, 2ull}) {
        ActorCriticConfig cfg = quick_config(seed, 320000);
        cfg.trace_every = 2000;
        ActorCriticResult res = tabular_actor_critic(m, spec, cfg);
        double rho = robust_return_of(m, res.policy, spec);
        INFO("seed " << seed << ": ac " << rho << " vs optimum " << rho_star);
        CHECK(std::abs(rho - rho_star) <= 0.05 * std::abs(rho_star));
        CHECK_FALSE(res.trace.empty());
        CHECK(res.trace.back().step == res.steps);
    }
}

TEST_CASE("critic divergence aborts with a diagnostic", "[actor-critic]") {
    TabularMdp m = fixtures::two_state_chain();
    UncertaintySpec spec = UncertaintySpec::coupled(0.2, 2.0);
    ActorCriticConfig cfg = quick_config(0, 4000);
    cfg.divergence_threshold = 1e-9;
    CHECK_THROWS_WITH(tabular_actor_critic(m, spec, cfg),
                      Catch::Matchers::ContainsSubstring("diverged"));
}
