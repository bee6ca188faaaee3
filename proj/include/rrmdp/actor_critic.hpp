#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mdp.hpp"
#include "policy_gradient.hpp"
#include "rng.hpp"
#include "uncertainty.hpp"

namespace rrmdp {

struct Transition {
    int s = 0;
    int a = 0;
    double r = 0.0;
    int s_next = 0;
    bool episode_start = false;
};

/**
Restart-chain sampler: trajectories follow the MDP and restart from mu with
probability 1 - gamma after every step, so visited states are distributed as
(1 - gamma) d^pi. The reported successor is always the MDP successor; the
restart only decides where the next sample begins.
*/
class Simulator {
public:
    Simulator(const TabularMdp& m, uint64_t seed) : m_(&m), rng_(Rng::derive(seed, 0x73696d)) {}

    Transition step(const Policy& pi) {
        Transition t;
        if (fresh_) {
            state_ = sample(m_->mu);
            fresh_ = false;
            t.episode_start = true;
        }
        t.s = state_;
        t.a = sample(pi.probs.row(state_).transpose());
        t.r = m_->r0(t.s, t.a);
        t.s_next = sample(m_->kernel[t.s].row(t.a).transpose());
        if (rng_.uniform() < m_->gamma) state_ = t.s_next;
        else fresh_ = true;
        return t;
    }

private:
    int sample(const Vec& probs) {
        double u = rng_.uniform();
        double acc = 0.0;
        for (Eigen::Index i = 0; i < probs.size(); ++i) {
            acc += probs(i);
            if (u < acc) return static_cast<int>(i);
        }
        return static_cast<int>(probs.size()) - 1;
    }

    const TabularMdp* m_;
    Rng rng_;
    int state_ = 0;
    bool fresh_ = true;
};

struct ActorCriticConfig {
    int total_steps = 200000;
    int batch_size = 32;
    double critic_scale = 0.5; // eta_omega = eta_zeta = critic_scale / (1 + t)^critic_exp
    double critic_exp = 0.6;
    double actor_scale = 0.1;  // eta_theta = actor_scale / (1 + t)^actor_exp; 0 freezes the actor
    double actor_exp = 0.9;
    double divergence_threshold = 0.0; // 0: derived from reward scale
    int trace_every = 0;               // batches between exact-return snapshots; 0 disables
    uint64_t seed = 0;
};

/// Tabular learner state: softmax logits, state-action critic, occupancy tracker.
struct ActorCriticState {
    Mat theta;
    Mat omega;
    Vec zeta;
};

struct AcTraceRow {
    long step = 0;
    double robust_return = 0.0; // exact evaluation of the current policy
};

struct ActorCriticResult {
    ActorCriticState state;
    Policy policy;
    std::vector<AcTraceRow> trace;
    long steps = 0;
};

namespace detail {

inline void validate_ac_config(const ActorCriticConfig& cfg) {
    if (cfg.total_steps <= 0) throw ValidationError("actor-critic: total_steps must be positive");
    if (cfg.batch_size <= 0) throw ValidationError("actor-critic: batch_size must be positive");
    if (!(cfg.critic_scale > 0.0 && cfg.critic_scale <= 1.0))
        throw ValidationError("actor-critic: critic_scale must lie in (0, 1]");
    if (!(cfg.actor_scale >= 0.0)) throw ValidationError("actor-critic: actor_scale must be >= 0");
    if (cfg.actor_exp < cfg.critic_exp)
        throw ValidationError("actor-critic: the actor must run on the slower timescale "
                              "(actor_exp >= critic_exp)");
}

} // namespace detail

/**
Two-timescale tabular actor-critic for the robust return, learned from
sampled transitions only.

Per batch of transitions under the current softmax policy:
 - the critic applies expected-SARSA TD steps toward the penalized reward
   r - penalty_zeta(s, a), where the penalty table is the closed-form worst
   case evaluated at the tracked occupancy zeta instead of the exact one;
 - zeta tracks the discounted occupancy through
   zeta <- zeta + eta (freq / (1 - gamma) - zeta) with freq the batch's state
   visitation frequencies. Restart-chain states are distributed as
   (1 - gamma) d^pi, so the fixed point is exactly d^pi;
 - the actor ascends the score-function estimate
   theta(s_i, .) += eta A(s_i, a_i) (e_{a_i} - pi(. | s_i)) with the
   advantage read from the critic.

A critic iterate above the divergence threshold (default: 10 x the largest
possible penalized value) aborts with a diagnostic, since a blown critic
poisons every later actor step.
*/
inline ActorCriticResult tabular_actor_critic(const TabularMdp& m, const UncertaintySpec& spec,
                                              const ActorCriticConfig& cfg) {
    require_valid(m);
    require_valid(m, spec);
    detail::validate_ac_config(cfg);

    const int S = m.num_states, A = m.num_actions;
    ActorCriticResult res;
    res.state.theta = Mat::Zero(S, A);
    res.state.omega = Mat::Zero(S, A);
    res.state.zeta = m.mu;
    res.policy = softmax_policy(res.state.theta);

    double reward_peak = m.r0.cwiseAbs().maxCoeff();
    double radius_peak = spec.alpha;
    if (spec.flavor == UncertaintyFlavor::s_rect) radius_peak = spec.state_radii.maxCoeff();
    if (spec.flavor == UncertaintyFlavor::sa_rect) radius_peak = spec.state_action_radii.maxCoeff();
    double divergence = cfg.divergence_threshold > 0.0
                            ? cfg.divergence_threshold
                            : 10.0 * (reward_peak + radius_peak + 1.0) / (1.0 - m.gamma);

    Simulator sim(m, cfg.seed);
    std::vector<Transition> batch(cfg.batch_size);
    const long batches = (cfg.total_steps + cfg.batch_size - 1) / cfg.batch_size;

    for (long t = 0; t < batches; ++t) {
        const double eta_critic = cfg.critic_scale / std::pow(1.0 + t, cfg.critic_exp);
        const double eta_actor = cfg.actor_scale / std::pow(1.0 + t, cfg.actor_exp);

        for (int i = 0; i < cfg.batch_size; ++i) batch[i] = sim.step(res.policy);

        // Penalty at the tracked occupancy, fixed for the batch.
        OccupancyMeasure tracked{res.state.zeta.cwiseMax(0.0),
                                 state_action_occupancy(res.policy, res.state.zeta.cwiseMax(0.0))};
        Mat penalty = penalty_table(spec, tracked, res.policy);

        Vec freq = Vec::Zero(S);
        for (const Transition& tr : batch) {
            double target = tr.r - penalty(tr.s, tr.a) +
                            m.gamma * res.policy.probs.row(tr.s_next).dot(res.state.omega.row(tr.s_next));
            double delta = target - res.state.omega(tr.s, tr.a);
            res.state.omega(tr.s, tr.a) += eta_critic * delta;
            freq(tr.s) += 1.0;
        }
        freq /= static_cast<double>(cfg.batch_size);
        res.state.zeta += eta_critic * (freq / (1.0 - m.gamma) - res.state.zeta);

        if (!res.state.omega.allFinite() || res.state.omega.cwiseAbs().maxCoeff() > divergence)
            throw std::runtime_error("actor-critic: critic diverged at step " +
                                     std::to_string((t + 1) * cfg.batch_size) + " (|omega| > " +
                                     std::to_string(divergence) + "); lower the learning rates");

        if (eta_actor > 0.0) {
            for (const Transition& tr : batch) {
                double baseline = res.policy.probs.row(tr.s).dot(res.state.omega.row(tr.s));
                double advantage = res.state.omega(tr.s, tr.a) - baseline;
                double scale = eta_actor * advantage;
                res.state.theta.row(tr.s) -= scale * res.policy.probs.row(tr.s);
                res.state.theta(tr.s, tr.a) += scale;
            }
            res.policy = softmax_policy(res.state.theta);
        }

        res.steps = (t + 1) * static_cast<long>(cfg.batch_size);
        if (cfg.trace_every > 0 && (t + 1) % cfg.trace_every == 0)
            res.trace.push_back({res.steps, robust_return_of(m, res.policy, spec)});
    }
    return res;
}

} // namespace rrmdp
