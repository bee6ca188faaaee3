#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "mdp.hpp"
#include "uncertainty.hpp"

namespace rrmdp {

/**
Euclidean projection onto the probability simplex by the sorted-threshold
rule: out_i = max(x_i - tau, 0) with tau chosen so the result sums to one.
*/
inline Vec project_simplex(const Vec& x) {
    const Eigen::Index n = x.size();
    std::vector<double> sorted(x.data(), x.data() + n);
    std::sort(sorted.begin(), sorted.end(), std::greater<double>());
    double acc = 0.0, tau = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
        acc += sorted[k];
        double cand = (acc - 1.0) / static_cast<double>(k + 1);
        if (k + 1 == n || cand >= sorted[k + 1]) {
            tau = cand;
            break;
        }
    }
    return (x.array() - tau).cwiseMax(0.0).matrix();
}

/// Row-wise simplex projection of a policy-shaped table.
inline Mat project_policy(const Mat& x) {
    Mat out(x.rows(), x.cols());
    for (Eigen::Index s = 0; s < x.rows(); ++s)
        out.row(s) = project_simplex(x.row(s).transpose()).transpose();
    return out;
}

/// pi_theta(a | s) = exp(theta(s, a) / temperature), normalized per state.
/// Rows are shifted by their max before exponentiating, so any finite theta is safe.
inline Policy softmax_policy(const Mat& theta, double temperature = 1.0) {
    Mat p(theta.rows(), theta.cols());
    for (Eigen::Index s = 0; s < theta.rows(); ++s) {
        Eigen::ArrayXd row = (theta.row(s).array() - theta.row(s).maxCoeff()) / temperature;
        Eigen::ArrayXd e = row.exp();
        p.row(s) = (e / e.sum()).matrix().transpose();
    }
    return {std::move(p)};
}

/// Occupancy, worst-case report, robust value, and robust Q of one policy,
/// from a single occupancy solve and a single value solve.
struct RobustEvaluation {
    OccupancyMeasure occ;
    WorstCaseReport report;
    Vec v;
    Mat q;
};

inline RobustEvaluation robust_evaluate(const TabularMdp& m, const Policy& pi,
                                        const UncertaintySpec& spec) {
    require_valid(m, spec);
    RobustEvaluation ev;
    ev.occ = occupancy_of(m, pi);
    ev.report.spec = spec;
    ev.report.penalty = penalty_table(spec, ev.occ, pi);
    ev.report.worst_reward = m.r0 - ev.report.penalty;
    ev.report.regularizer_value = regularizer_value(spec, ev.occ, pi);
    ev.report.robust_return = return_from_occupancy(ev.occ, m.r0) - ev.report.regularizer_value;
    ev.v = value_of(m, pi, ev.report.worst_reward);
    ev.q = q_from_v(m, ev.report.worst_reward, ev.v).q;
    return ev;
}

namespace detail {

/// p = 1 makes the worst case a jumping vertex of the ball (the occupancy
/// argmax), so the robust return is not differentiable and gradient-based
/// training is refused.
inline void require_differentiable(const UncertaintySpec& spec) {
    if (spec.flavor != UncertaintyFlavor::sa_rect && spec.p == 1.0)
        throw ValidationError(
            "robust gradients are undefined for p = 1: the worst case concentrates on the "
            "occupancy argmax and jumps as the policy moves; use p > 1 or the sa-rect flavor");
}

} // namespace detail

/**
Gradient of the robust return in the direct parametrization,
G(s, a) = d(s) Q_robust(s, a).

By Danskin's theorem the worst-case reward may be held fixed while
differentiating, so the expression is the classic policy gradient evaluated
under the worst-case reward; it represents the derivative up to a per-state
constant, which the simplex projection discards anyway. For p = inf the
penalty is the constant alpha and the formula stays exact.
*/
inline Mat robust_policy_gradient(const TabularMdp& m, const Policy& pi, const UncertaintySpec& spec) {
    detail::require_differentiable(spec);
    RobustEvaluation ev = robust_evaluate(m, pi, spec);
    return ev.q.array().colwise() * ev.occ.state.array();
}

/**
Gradient of the robust return with respect to softmax logits,
G(s, a) = d(s) pi(a | s) (Q_robust(s, a) - v_robust(s)) / temperature.
Rows sum to zero.
*/
inline Mat robust_policy_gradient_softmax(const TabularMdp& m, const Mat& theta,
                                          const UncertaintySpec& spec, double temperature = 1.0) {
    detail::require_differentiable(spec);
    Policy pi = softmax_policy(theta, temperature);
    RobustEvaluation ev = robust_evaluate(m, pi, spec);
    Mat advantage = ev.q.array().colwise() - ev.v.array();
    return (advantage.array() * pi.probs.array()).colwise() * (ev.occ.state.array() / temperature);
}

enum class SmoothnessExponent { conjugate, primal };

/**
Smoothness constant of the robust return over the product of simplices,
beta = L + alpha Phi_r with L = 2 gamma A / (1 - gamma)^3,
K = A / (1 - gamma)^2, N = S A and
Phi_r = 2 N^((r+1)/r) (r - 1) K^2 + N^(1/r) L.

The bound presumes rewards normalized to [0, 1]. r defaults to the conjugate
exponent q; the primal variant r = p is kept behind the switch because both
appear in intermediate inequalities and the conjugate one is the sharper
default. p = 1 and p = inf have no finite constant here and are refused.
*/
inline double smoothness_constant(const TabularMdp& m, const UncertaintySpec& spec,
                                  SmoothnessExponent choice = SmoothnessExponent::conjugate) {
    if (spec.p == 1.0 || spec.p == kInf)
        throw ValidationError("smoothness constant requires p in (1, inf)");
    const double A = m.num_actions;
    const double N = static_cast<double>(m.num_states) * m.num_actions;
    const double g = 1.0 - m.gamma;
    const double L = 2.0 * m.gamma * A / (g * g * g);
    const double K = A / (g * g);
    const double r = choice == SmoothnessExponent::conjugate ? holder_conjugate(spec.p) : spec.p;
    const double phi = 2.0 * std::pow(N, (r + 1.0) / r) * (r - 1.0) * K * K + std::pow(N, 1.0 / r) * L;
    return L + spec.alpha * phi;
}

enum class Parametrization { direct, softmax };
enum class StepRule { armijo, fixed_beta };

struct PgConfig {
    Parametrization parametrization = Parametrization::direct;
    StepRule step_rule = StepRule::armijo;
    int max_iters = 2000;
    double grad_tol = 1e-6;
    double softmax_temperature = 1.0;
    SmoothnessExponent smoothness = SmoothnessExponent::conjugate;
    double armijo_c1 = 1e-4;
    double armijo_backtrack = 0.5;
    double armijo_init = 1.0;
    uint64_t seed = 0; // echoed into checkpoints; training itself is deterministic
};

struct TraceRow {
    int iter = 0;
    double robust_return = 0.0;
    double grad_norm = 0.0;   // infinity norm of the gradient table
    double step_size = 0.0;
    double update_norm = 0.0; // Frobenius norm of the parameter move
};

struct TrainResult {
    Policy policy;
    Mat theta;       // empty for the direct parametrization
    std::vector<TraceRow> trace;
    int iterations = 0;
    bool converged = false; // gradient-mapping norm fell below grad_tol
};

/**
Robust policy gradient ascent. The direct parametrization performs projected
ascent over the product of simplices; the softmax one plain ascent on logits.

Armijo steps accept pi' = proj(pi + eta G) once
rho(pi') >= rho(pi) + c1 <G, pi' - pi>, halving eta until acceptance and
re-expanding from double the last accepted step, which makes the recorded
robust returns non-decreasing by construction. The fixed rule uses 1 / beta
with the smoothness constant above (so it refuses p in {1, inf}).

Stops once ||pi' - pi||_F / eta <= grad_tol (the gradient mapping at the
current step), the Armijo search stalls at machine scale, or max_iters runs
out; converged reflects the gradient-mapping test.
*/
inline TrainResult train_projected_pg(const TabularMdp& m, const UncertaintySpec& spec,
                                      const PgConfig& config, const Policy* start = nullptr) {
    detail::require_differentiable(spec);
    require_valid(m, spec);
    const bool direct = config.parametrization == Parametrization::direct;
    const double temp = config.softmax_temperature;

    TrainResult res;
    Mat theta;
    if (direct) {
        res.policy = start ? *start : Policy::uniform(m.num_states, m.num_actions);
        require_valid(m, res.policy);
    } else {
        theta = Mat::Zero(m.num_states, m.num_actions);
        if (start) {
            // Logits reproducing the requested start (floored to keep logs finite).
            theta = start->probs.array().max(1e-300).log().matrix();
        }
        res.policy = softmax_policy(theta, temp);
    }

    double fixed_step = 0.0;
    if (config.step_rule == StepRule::fixed_beta)
        fixed_step = 1.0 / smoothness_constant(m, spec, config.smoothness);

    auto objective = [&](const Policy& pi) { return robust_return_of(m, pi, spec); };

    double rho = objective(res.policy);
    double eta = config.step_rule == StepRule::fixed_beta ? fixed_step : config.armijo_init;

    for (int k = 0; k < config.max_iters; ++k) {
        Mat grad = direct ? robust_policy_gradient(m, res.policy, spec)
                          : robust_policy_gradient_softmax(m, theta, spec, temp);

        TraceRow row;
        row.iter = k;
        row.robust_return = rho;
        row.grad_norm = grad.cwiseAbs().maxCoeff();

        Mat cur = direct ? res.policy.probs : theta;

        // Stationarity first: the gradient mapping at unit step costs one
        // projection and no solves, and is immune to objective-level noise
        // that can stall the line search near the optimum.
        double mapping = direct ? (project_policy(cur + grad) - cur).norm() : grad.norm();
        if (mapping <= config.grad_tol) {
            res.trace.push_back(row);
            res.converged = true;
            break;
        }

        Mat next;
        double next_rho = rho;
        bool accepted = false;

        if (config.step_rule == StepRule::fixed_beta) {
            eta = fixed_step;
            next = direct ? project_policy(cur + eta * grad) : (cur + eta * grad).eval();
            next_rho = objective(direct ? Policy{next} : softmax_policy(next, temp));
            accepted = true;
        } else {
            while (true) {
                next = direct ? project_policy(cur + eta * grad) : (cur + eta * grad).eval();
                double predicted = (grad.array() * (next - cur).array()).sum();
                next_rho = objective(direct ? Policy{next} : softmax_policy(next, temp));
                if (next_rho >= rho + config.armijo_c1 * predicted) {
                    accepted = true;
                    break;
                }
                eta *= config.armijo_backtrack;
                if (eta < 1e-18) break; // improvement is below objective noise
            }
        }

        if (!accepted) {
            res.trace.push_back(row);
            break;
        }

        double move = (next - cur).norm();
        row.step_size = eta;
        row.update_norm = move;
        res.trace.push_back(row);

        if (direct) res.policy.probs = next;
        else {
            theta = next;
            res.policy = softmax_policy(theta, temp);
        }
        rho = next_rho;
        res.iterations = k + 1;
        if (config.step_rule == StepRule::armijo) eta *= 2.0;
    }

    // Final state of the trace: one row for the last iterate.
    if (res.trace.empty() || res.trace.back().iter != res.iterations) {
        TraceRow last;
        last.iter = res.iterations;
        last.robust_return = rho;
        Mat grad_final = direct ? robust_policy_gradient(m, res.policy, spec)
                                : robust_policy_gradient_softmax(m, theta, spec, temp);
        last.grad_norm = grad_final.cwiseAbs().maxCoeff();
        res.trace.push_back(last);
    }

    if (!direct) res.theta = theta;
    return res;
}

/**
Duality-gap certificate at a trained policy: the worst-case reward of pi is
frozen, the best response to it is planned exactly, and the certificate is
gap = max_pi' rho(pi', R_worst) - rho_robust(pi) >= 0,
which vanishes exactly at a saddle point of the robust objective.
*/
struct SaddleCertificate {
    double gap = 0.0;
    double best_response_return = 0.0;
    double robust_return = 0.0;
};

inline SaddleCertificate saddle_certificate(const TabularMdp& m, const Policy& pi,
                                            const UncertaintySpec& spec, double plan_tol = 1e-10) {
    WorstCaseReport rep = worst_case_reward(m, pi, spec);
    auto plan = optimal_value_iteration(m, rep.worst_reward, plan_tol);
    double best = m.mu.dot(solve_value_exact(m, plan.greedy, rep.worst_reward).v);
    SaddleCertificate cert;
    cert.best_response_return = best;
    cert.robust_return = rep.robust_return;
    cert.gap = best - rep.robust_return;
    return cert;
}

} // namespace rrmdp
