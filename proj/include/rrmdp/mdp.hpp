#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace rrmdp {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Input data failed validation; callers map this to a usage error, not a crash.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Row sums of kernels and distributions must hold to this tolerance.
inline constexpr double kStochasticTol = 1e-12;
/// Policy rows are allowed a slightly looser tolerance (they pass through optimizers).
inline constexpr double kPolicyTol = 1e-10;

/// Counters for cost assertions in tests (batch evaluation must not re-solve).
struct Stats {
    inline static std::atomic<uint64_t> occupancy_solves{0};
    inline static std::atomic<uint64_t> linear_solves{0};
};

/**
Finite discounted MDP. kernel[s] is the A x S matrix of transition
probabilities out of state s, r0 is the S x A nominal reward table, mu the
initial state distribution. All probability rows sum to one within
kStochasticTol and mu is strictly positive.
*/
struct TabularMdp {
    int num_states = 0;
    int num_actions = 0;
    double gamma = 0.0;
    Vec mu;
    std::vector<Mat> kernel; // kernel[s](a, s') = P(s' | s, a)
    Mat r0;                  // r0(s, a)
};

/// Stationary randomized policy; probs(s, a) = pi(a | s).
struct Policy {
    Mat probs;

    static Policy uniform(int num_states, int num_actions) {
        return {Mat::Constant(num_states, num_actions, 1.0 / num_actions)};
    }
};

struct ValueFunction {
    Vec v;
};

struct QFunction {
    Mat q; // q(s, a)
};

/**
Discounted state and state-action occupancy of a policy,
d(s) = sum_t gamma^t P(s_t = s), d(s, a) = d(s) pi(a | s).
Total state mass is 1 / (1 - gamma); returns satisfy rho = <d_sa, R>.
*/
struct OccupancyMeasure {
    Vec state;        // d(s)
    Mat state_action; // d(s, a)

    double mass() const { return state.sum(); }
};

struct ValidationReport {
    std::vector<std::string> problems;

    bool ok() const { return problems.empty(); }

    std::string to_string() const {
        std::string out;
        for (const auto& p : problems) {
            out += p;
            out += '\n';
        }
        return out;
    }
};

/// Structural and stochasticity checks; collects every violation instead of stopping at the first.
inline ValidationReport validate_mdp(const TabularMdp& m) {
    ValidationReport rep;
    auto complain = [&rep](const std::string& s) { rep.problems.push_back(s); };

    if (m.num_states <= 0) complain("num_states must be positive");
    if (m.num_actions <= 0) complain("num_actions must be positive");
    if (!(m.gamma >= 0.0 && m.gamma < 1.0)) complain("gamma must lie in [0, 1)");
    if (!rep.ok()) return rep; // shape checks below would read garbage

    const int S = m.num_states, A = m.num_actions;
    if (m.mu.size() != S) complain("mu has wrong length");
    if (static_cast<int>(m.kernel.size()) != S) complain("kernel has wrong number of states");
    if (m.r0.rows() != S || m.r0.cols() != A) complain("r0 has wrong shape");
    if (!rep.ok()) return rep;

    if (!m.mu.allFinite()) complain("mu has non-finite entries");
    if ((m.mu.array() <= 0.0).any()) complain("mu must be strictly positive everywhere");
    if (std::abs(m.mu.sum() - 1.0) > kStochasticTol) complain("mu does not sum to 1 within 1e-12");
    if (!m.r0.allFinite()) complain("r0 has non-finite entries");

    for (int s = 0; s < S; ++s) {
        const Mat& rows = m.kernel[s];
        if (rows.rows() != A || rows.cols() != S) {
            complain("kernel[" + std::to_string(s) + "] has wrong shape");
            continue;
        }
        if (!rows.allFinite()) complain("kernel[" + std::to_string(s) + "] has non-finite entries");
        for (int a = 0; a < A; ++a) {
            if ((rows.row(a).array() < 0.0).any())
                complain("P(. | " + std::to_string(s) + ", " + std::to_string(a) + ") has negative entries");
            if (std::abs(rows.row(a).sum() - 1.0) > kStochasticTol)
                complain("P(. | " + std::to_string(s) + ", " + std::to_string(a) +
                         ") does not sum to 1 within 1e-12");
        }
    }
    return rep;
}

inline ValidationReport validate_policy(const TabularMdp& m, const Policy& pi) {
    ValidationReport rep;
    if (pi.probs.rows() != m.num_states || pi.probs.cols() != m.num_actions) {
        rep.problems.push_back("policy has wrong shape");
        return rep;
    }
    if (!pi.probs.allFinite()) rep.problems.push_back("policy has non-finite entries");
    for (int s = 0; s < m.num_states; ++s) {
        if ((pi.probs.row(s).array() < 0.0).any())
            rep.problems.push_back("pi(. | " + std::to_string(s) + ") has negative entries");
        if (std::abs(pi.probs.row(s).sum() - 1.0) > kPolicyTol)
            rep.problems.push_back("pi(. | " + std::to_string(s) + ") does not sum to 1 within 1e-10");
    }
    return rep;
}

inline void require_valid(const TabularMdp& m) {
    auto rep = validate_mdp(m);
    if (!rep.ok()) throw ValidationError("invalid MDP:\n" + rep.to_string());
}

inline void require_valid(const TabularMdp& m, const Policy& pi) {
    auto rep = validate_policy(m, pi);
    if (!rep.ok()) throw ValidationError("invalid policy:\n" + rep.to_string());
}

/**
State-to-state kernel of the Markov chain induced by pi,
P_pi(s' | s) = sum_a pi(a | s) P(s' | s, a).

Rows are renormalized by their computed sum (a 1 + O(1e-12) correction) so the
result is row-stochastic to machine precision even when the inputs sit at the
validation tolerance edge.
*/
inline Mat policy_kernel(const TabularMdp& m, const Policy& pi) {
    const int S = m.num_states;
    Mat k(S, S);
    for (int s = 0; s < S; ++s) {
        k.row(s) = pi.probs.row(s) * m.kernel[s];
        double rowsum = k.row(s).sum();
        if (std::abs(rowsum - 1.0) < 1e-9) k.row(s) /= rowsum;
    }
    return k;
}

/// r_pi(s) = sum_a pi(a | s) R(s, a).
inline Vec expected_reward(const TabularMdp& m, const Policy& pi, const Mat& reward) {
    return (pi.probs.array() * reward.array()).rowwise().sum().matrix();
}

namespace detail {

/// Solves (I - gamma K) x = b by partial-pivot LU; the matrix is strictly
/// row-diagonally dominant for gamma < 1, so no pivoting trouble arises.
inline Vec discounted_solve(const Mat& k, double gamma, const Vec& b) {
    Stats::linear_solves.fetch_add(1, std::memory_order_relaxed);
    Mat sys = Mat::Identity(k.rows(), k.cols()) - gamma * k;
    return sys.partialPivLu().solve(b);
}

} // namespace detail

/**
Exact policy evaluation: solves (I - gamma P_pi) v = r_pi directly.

\param reward Reward table to evaluate under (not necessarily the nominal one).
\throw std::runtime_error if the residual exceeds 1e-10, which for a valid
       model indicates a numerical breakdown rather than bad input.
*/
inline ValueFunction solve_value_exact(const TabularMdp& m, const Policy& pi, const Mat& reward) {
    Mat k = policy_kernel(m, pi);
    Vec r_pi = expected_reward(m, pi, reward);
    Vec v = detail::discounted_solve(k, m.gamma, r_pi);
    double resid = (v - m.gamma * (k * v) - r_pi).lpNorm<Eigen::Infinity>();
    if (!(resid <= 1e-10))
        throw std::runtime_error("policy evaluation residual " + std::to_string(resid) + " exceeds 1e-10");
    return {std::move(v)};
}

struct ValueIterationResult {
    Vec v;
    std::vector<double> residual_history; // ||v_{n+1} - v_n||_inf, one entry per sweep
    int iterations = 0;
    bool converged = false;
};

/**
Value iteration for a fixed policy, run in difference form: the update
increment w_{n+1} = gamma P_pi w_n is propagated instead of recomputing
T v - v, so each recorded residual is exactly gamma-contracted by
construction (up to machine rounding) and the sequence is meaningful all the
way down to the stopping threshold.

Stops when ||w||_inf <= tol (1 - gamma) / gamma, which bounds
||v - v*||_inf <= tol.
*/
inline ValueIterationResult value_iteration(const TabularMdp& m, const Policy& pi, const Mat& reward,
                                            double tol, const Vec* v0 = nullptr, int max_iters = 1000000) {
    Mat k = policy_kernel(m, pi);
    Vec r_pi = expected_reward(m, pi, reward);
    ValueIterationResult res;
    res.v = v0 ? *v0 : Vec::Zero(m.num_states);
    Vec w = r_pi + m.gamma * (k * res.v) - res.v;
    double threshold = m.gamma > 0.0 ? tol * (1.0 - m.gamma) / m.gamma
                                     : std::numeric_limits<double>::infinity();
    for (int n = 0; n < max_iters; ++n) {
        double wn = w.lpNorm<Eigen::Infinity>();
        res.residual_history.push_back(wn);
        res.v += w;
        ++res.iterations;
        if (wn <= threshold) {
            res.converged = true;
            break;
        }
        w = m.gamma * (k * w);
    }
    return res;
}

struct OccupancyIterationResult {
    OccupancyMeasure occ;
    std::vector<double> residual_history; // ||d_{n+1} - d_n||_1
    int iterations = 0;
    bool converged = false;
};

inline Mat state_action_occupancy(const Policy& pi, const Vec& d_state) {
    return pi.probs.array().colwise() * d_state.array();
}

/**
Exact discounted occupancy: solves (I - gamma P_pi^T) d = mu. Mass comes out
to 1 / (1 - gamma) automatically; the residual is checked like the value solve.
*/
inline OccupancyMeasure occupancy_exact(const TabularMdp& m, const Policy& pi) {
    Stats::occupancy_solves.fetch_add(1, std::memory_order_relaxed);
    Mat k = policy_kernel(m, pi);
    Vec d = detail::discounted_solve(k.transpose(), m.gamma, m.mu);
    double resid = (d - m.gamma * (k.transpose() * d) - m.mu).lpNorm<Eigen::Infinity>();
    if (!(resid <= 1e-10))
        throw std::runtime_error("occupancy residual " + std::to_string(resid) + " exceeds 1e-10");
    return {d, state_action_occupancy(pi, d)};
}

/// One step of the occupancy fixed-point map, d <- mu + gamma P_pi^T d.
inline Vec occupancy_step(const Mat& policy_kernel_matrix, const Vec& mu, double gamma, const Vec& d) {
    return mu + gamma * (policy_kernel_matrix.transpose() * d);
}

/**
Fixed-point iteration d_{n+1} = mu + gamma P_pi^T d_n from d_0 = mu. The map
contracts in L1 norm by gamma, so ||d_n - d*||_1 <= gamma^n ||d_0 - d*||_1.
Sets converged = false when n_max runs out before the tolerance is met.
*/
inline OccupancyIterationResult occupancy_iterative(const TabularMdp& m, const Policy& pi, double tol,
                                                    int n_max = 1000000) {
    Stats::occupancy_solves.fetch_add(1, std::memory_order_relaxed);
    Mat k = policy_kernel(m, pi);
    OccupancyIterationResult res;
    Vec d = m.mu;
    double threshold = m.gamma > 0.0 ? tol * (1.0 - m.gamma) / m.gamma
                                     : std::numeric_limits<double>::infinity();
    for (int n = 0; n < n_max; ++n) {
        Vec next = occupancy_step(k, m.mu, m.gamma, d);
        double r = (next - d).lpNorm<1>();
        res.residual_history.push_back(r);
        d = std::move(next);
        ++res.iterations;
        if (r <= threshold) {
            res.converged = true;
            break;
        }
    }
    res.occ = {d, state_action_occupancy(pi, d)};
    return res;
}

/// Threshold above which evaluation routines switch from the dense direct
/// solve to the iterative fixed point.
inline constexpr int kDirectSolveLimit = 2000;

/// Policy value under an arbitrary reward table; direct solve for small state
/// spaces, iterative (tol 1e-10) above kDirectSolveLimit.
inline Vec value_of(const TabularMdp& m, const Policy& pi, const Mat& reward) {
    if (m.num_states <= kDirectSolveLimit) return solve_value_exact(m, pi, reward).v;
    return value_iteration(m, pi, reward, 1e-10).v;
}

inline OccupancyMeasure occupancy_of(const TabularMdp& m, const Policy& pi) {
    if (m.num_states <= kDirectSolveLimit) return occupancy_exact(m, pi);
    return occupancy_iterative(m, pi, 1e-10).occ;
}

/// rho(pi, R) = <mu, v_pi> = <d_sa, R>.
inline double return_of(const TabularMdp& m, const Policy& pi, const Mat& reward) {
    return m.mu.dot(value_of(m, pi, reward));
}

inline double return_from_occupancy(const OccupancyMeasure& occ, const Mat& reward) {
    return (occ.state_action.array() * reward.array()).sum();
}

/// Q(s, a) = R(s, a) + gamma <P(. | s, a), v>.
inline QFunction q_from_v(const TabularMdp& m, const Mat& reward, const Vec& v) {
    Mat q(m.num_states, m.num_actions);
    for (int s = 0; s < m.num_states; ++s)
        q.row(s) = reward.row(s) + m.gamma * (m.kernel[s] * v).transpose();
    return {std::move(q)};
}

struct OptimalPlanResult {
    Vec v;
    Policy greedy; // deterministic, ties broken toward the lowest action index
    int iterations = 0;
    bool converged = false;
};

/**
Optimal value iteration, v_{n+1}(s) = max_a [R(s, a) + gamma <P, v_n>].
The greedy policy is extracted from the final value function; argmax ties go
to the lowest action index so the result is deterministic.
*/
inline OptimalPlanResult optimal_value_iteration(const TabularMdp& m, const Mat& reward, double tol,
                                                 int max_iters = 1000000) {
    const int S = m.num_states, A = m.num_actions;
    OptimalPlanResult res;
    res.v = Vec::Zero(S);
    double threshold = m.gamma > 0.0 ? tol * (1.0 - m.gamma) / m.gamma
                                     : std::numeric_limits<double>::infinity();
    for (int n = 0; n < max_iters; ++n) {
        Mat q = q_from_v(m, reward, res.v).q;
        Vec next = q.rowwise().maxCoeff();
        double r = (next - res.v).lpNorm<Eigen::Infinity>();
        res.v = std::move(next);
        ++res.iterations;
        if (r <= threshold) {
            res.converged = true;
            break;
        }
    }
    Mat q = q_from_v(m, reward, res.v).q;
    res.greedy.probs = Mat::Zero(S, A);
    for (int s = 0; s < S; ++s) {
        int best = 0;
        for (int a = 1; a < A; ++a)
            if (q(s, a) > q(s, best)) best = a;
        res.greedy.probs(s, best) = 1.0;
    }
    return res;
}

} // namespace rrmdp
