#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "mdp.hpp"

namespace rrmdp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
/// Relative tolerance for argmax ties in the p = 1 worst case.
inline constexpr double kTieTol = 1e-9;

/// Holder conjugate q = p / (p - 1), with q(1) = inf and q(inf) = 1.
inline double holder_conjugate(double p) {
    if (p == kInf) return 1.0;
    if (!(p >= 1.0)) throw ValidationError("ball exponent p must lie in [1, inf]");
    if (p == 1.0) return kInf;
    return p / (p - 1.0);
}

/// ||x||_p over any Eigen expression, p in [1, inf]; power sums are scaled by
/// the max entry so large exponents cannot overflow.
template <typename Derived>
double lp_norm(const Eigen::MatrixBase<Derived>& x, double p) {
    if (p == kInf) return x.size() == 0 ? 0.0 : x.cwiseAbs().maxCoeff();
    if (!(p >= 1.0)) throw ValidationError("ball exponent p must lie in [1, inf]");
    if (x.size() == 0) return 0.0;
    if (p == 1.0) return x.cwiseAbs().sum();
    double peak = x.cwiseAbs().maxCoeff();
    if (peak == 0.0) return 0.0;
    double acc = (x.cwiseAbs() / peak).array().pow(p).sum();
    return peak * std::pow(acc, 1.0 / p);
}

enum class UncertaintyFlavor { coupled, s_rect, sa_rect };

inline std::string flavor_name(UncertaintyFlavor f) {
    switch (f) {
        case UncertaintyFlavor::coupled: return "coupled";
        case UncertaintyFlavor::s_rect: return "s-rect";
        case UncertaintyFlavor::sa_rect: return "sa-rect";
    }
    return "?";
}

/**
Reward uncertainty set description. The coupled flavor is a single Lp ball of
radius alpha around R0 over all state-action pairs jointly, optionally in the
weighted norm (sum_i w_i |x_i|^p)^(1/p); the rectangular flavors carry one
radius per state (s-rect, an Lp ball over that state's action row) or per
state-action pair (sa-rect, an interval). Radius tables are present exactly
for the matching flavor.
*/
struct UncertaintySpec {
    UncertaintyFlavor flavor = UncertaintyFlavor::coupled;
    double alpha = 0.0; // coupled radius; rectangular flavors use the tables below
    double p = 2.0;
    Mat weights;            // coupled only; empty = unweighted
    Vec state_radii;        // s-rect only
    Mat state_action_radii; // sa-rect only

    static UncertaintySpec coupled(double alpha, double p) {
        UncertaintySpec s;
        s.flavor = UncertaintyFlavor::coupled;
        s.alpha = alpha;
        s.p = p;
        return s;
    }

    static UncertaintySpec coupled_weighted(double alpha, double p, Mat weights) {
        UncertaintySpec s = coupled(alpha, p);
        s.weights = std::move(weights);
        return s;
    }

    static UncertaintySpec s_rect(Vec radii, double p) {
        UncertaintySpec s;
        s.flavor = UncertaintyFlavor::s_rect;
        s.p = p;
        s.state_radii = std::move(radii);
        return s;
    }

    static UncertaintySpec s_rect_uniform(double alpha, double p, int num_states) {
        return s_rect(Vec::Constant(num_states, alpha), p);
    }

    static UncertaintySpec sa_rect(Mat radii) {
        UncertaintySpec s;
        s.flavor = UncertaintyFlavor::sa_rect;
        s.state_action_radii = std::move(radii);
        return s;
    }

    static UncertaintySpec sa_rect_uniform(double alpha, int num_states, int num_actions) {
        return sa_rect(Mat::Constant(num_states, num_actions, alpha));
    }
};

inline ValidationReport validate_spec(const UncertaintySpec& spec, int num_states, int num_actions) {
    ValidationReport rep;
    auto complain = [&rep](const std::string& s) { rep.problems.push_back(s); };
    if (!(spec.p >= 1.0) && spec.p != kInf) complain("spec.p must lie in [1, inf]");
    switch (spec.flavor) {
        case UncertaintyFlavor::coupled:
            if (!(spec.alpha >= 0.0)) complain("spec.alpha must be >= 0");
            if (spec.state_radii.size() != 0 || spec.state_action_radii.size() != 0)
                complain("radius tables are only valid for rectangular flavors");
            if (spec.weights.size() != 0) {
                if (spec.weights.rows() != num_states || spec.weights.cols() != num_actions)
                    complain("spec.weights has wrong shape");
                else if (!(spec.weights.array() > 0.0).all())
                    complain("spec.weights must be strictly positive");
            }
            break;
        case UncertaintyFlavor::s_rect:
            if (spec.state_radii.size() != num_states) complain("spec.state_radii has wrong length");
            else if ((spec.state_radii.array() < 0.0).any()) complain("spec.state_radii must be >= 0");
            if (spec.weights.size() != 0) complain("weighted norms are only supported for the coupled flavor");
            if (spec.state_action_radii.size() != 0) complain("state_action_radii is not an s-rect field");
            break;
        case UncertaintyFlavor::sa_rect:
            if (spec.state_action_radii.rows() != num_states ||
                spec.state_action_radii.cols() != num_actions)
                complain("spec.state_action_radii has wrong shape");
            else if ((spec.state_action_radii.array() < 0.0).any())
                complain("spec.state_action_radii must be >= 0");
            if (spec.weights.size() != 0) complain("weighted norms are only supported for the coupled flavor");
            if (spec.state_radii.size() != 0) complain("state_radii is not an sa-rect field");
            break;
    }
    return rep;
}

inline void require_valid(const TabularMdp& m, const UncertaintySpec& spec) {
    auto rep = validate_spec(spec, m.num_states, m.num_actions);
    if (!rep.ok()) throw ValidationError("invalid uncertainty spec:\n" + rep.to_string());
}

namespace detail {

/// Optimal per-unit-radius penalty profile for minimizing <b, u> over
/// ||u||_p <= 1: entry i gets (b_i / ||b||_q)^(q - 1), with the q = 1 and
/// q = inf limits taken explicitly (never 0^0). b must be entrywise >= 0.
inline Mat holder_penalty_profile(const Mat& b, double q) {
    if (q == 1.0) return Mat::Ones(b.rows(), b.cols());
    if (q == kInf) {
        double peak = b.maxCoeff();
        Mat profile = Mat::Zero(b.rows(), b.cols());
        if (peak <= 0.0) return profile;
        int ties = 0;
        for (Eigen::Index r = 0; r < b.rows(); ++r)
            for (Eigen::Index c = 0; c < b.cols(); ++c)
                if (b(r, c) >= (1.0 - kTieTol) * peak) ++ties;
        for (Eigen::Index r = 0; r < b.rows(); ++r)
            for (Eigen::Index c = 0; c < b.cols(); ++c)
                if (b(r, c) >= (1.0 - kTieTol) * peak) profile(r, c) = 1.0 / ties;
        return profile;
    }
    double norm = lp_norm(b, q);
    if (norm == 0.0) return Mat::Zero(b.rows(), b.cols());
    return (b / norm).array().pow(q - 1.0).matrix();
}

/// Weight factor w^(1/p); identity for unweighted specs and for p = inf,
/// where the weighted norm degenerates to the plain sup norm.
inline Mat weight_scale(const UncertaintySpec& spec, int num_states, int num_actions) {
    if (spec.weights.size() == 0 || spec.p == kInf) return Mat::Ones(num_states, num_actions);
    return spec.weights.array().pow(1.0 / spec.p).matrix();
}

} // namespace detail

/**
Penalty table of the closed-form worst-case reward for a coupled Lp ball:
penalty(s, a) = alpha (dhat(s, a) / ||dhat||_q)^(q - 1) / w(s, a)^(1/p) with
dhat = d / w^(1/p). Handed the occupancy so evaluation pipelines solve for it
exactly once.
*/
inline Mat coupled_penalty(const UncertaintySpec& spec, const OccupancyMeasure& occ) {
    double q = holder_conjugate(spec.p);
    Mat scale = detail::weight_scale(spec, occ.state_action.rows(), occ.state_action.cols());
    Mat dhat = occ.state_action.cwiseQuotient(scale);
    return spec.alpha * detail::holder_penalty_profile(dhat, q).cwiseQuotient(scale);
}

/// Per-flavor penalty table (worst reward = R0 - penalty).
inline Mat penalty_table(const UncertaintySpec& spec, const OccupancyMeasure& occ, const Policy& pi) {
    switch (spec.flavor) {
        case UncertaintyFlavor::coupled: return coupled_penalty(spec, occ);
        case UncertaintyFlavor::s_rect: {
            double q = holder_conjugate(spec.p);
            Mat pen(pi.probs.rows(), pi.probs.cols());
            for (Eigen::Index s = 0; s < pi.probs.rows(); ++s) {
                Mat row = pi.probs.row(s);
                pen.row(s) = spec.state_radii(s) * detail::holder_penalty_profile(row, q);
            }
            return pen;
        }
        case UncertaintyFlavor::sa_rect: return spec.state_action_radii;
    }
    throw std::logic_error("unreachable");
}

/**
Value of the regularizer that the worst case subtracts from the nominal
return: alpha ||dhat||_q (coupled), sum_s d(s) alpha_s ||pi_s||_q (s-rect),
or <d, alpha> (sa-rect).
*/
inline double regularizer_value(const UncertaintySpec& spec, const OccupancyMeasure& occ,
                                const Policy& pi) {
    double q = holder_conjugate(spec.p);
    switch (spec.flavor) {
        case UncertaintyFlavor::coupled: {
            Mat scale = detail::weight_scale(spec, occ.state_action.rows(), occ.state_action.cols());
            return spec.alpha * lp_norm(occ.state_action.cwiseQuotient(scale), q);
        }
        case UncertaintyFlavor::s_rect: {
            double acc = 0.0;
            for (Eigen::Index s = 0; s < pi.probs.rows(); ++s)
                acc += occ.state(s) * spec.state_radii(s) * lp_norm(pi.probs.row(s), q);
            return acc;
        }
        case UncertaintyFlavor::sa_rect:
            return (occ.state_action.array() * spec.state_action_radii.array()).sum();
    }
    throw std::logic_error("unreachable");
}

/**
Everything the closed-form worst case produces for one (policy, spec) pair.
robust_return equals both the nominal return minus the regularizer and
<d_sa, worst_reward>; the identity holds to 1e-9 and is covered by tests.
*/
struct WorstCaseReport {
    Mat penalty;
    Mat worst_reward;
    double robust_return = 0.0;
    double regularizer_value = 0.0;
    UncertaintySpec spec;
};

/// Closed-form worst-case reward; one occupancy solve, no iteration.
inline WorstCaseReport worst_case_reward(const TabularMdp& m, const Policy& pi,
                                         const UncertaintySpec& spec) {
    require_valid(m, spec);
    OccupancyMeasure occ = occupancy_of(m, pi);
    WorstCaseReport rep;
    rep.spec = spec;
    rep.penalty = penalty_table(spec, occ, pi);
    rep.worst_reward = m.r0 - rep.penalty;
    rep.regularizer_value = regularizer_value(spec, occ, pi);
    rep.robust_return = return_from_occupancy(occ, m.r0) - rep.regularizer_value;
    return rep;
}

/// rho_robust(pi) = rho_R0(pi) - regularizer; the cheap path for optimizer
/// inner loops (no penalty table is materialized).
inline double robust_return_of(const TabularMdp& m, const Policy& pi, const UncertaintySpec& spec) {
    OccupancyMeasure occ = occupancy_of(m, pi);
    return return_from_occupancy(occ, m.r0) - regularizer_value(spec, occ, pi);
}

/**
Robust policy evaluation by value iteration: the occupancy-dependent penalty
is fixed up front from one occupancy solve, after which the worst-case reward
is an ordinary reward table and the usual gamma-contraction applies sweep by
sweep.
*/
inline ValueIterationResult robust_value_iteration(const TabularMdp& m, const Policy& pi,
                                                   const UncertaintySpec& spec, double tol,
                                                   int max_iters = 1000000) {
    require_valid(m, spec);
    OccupancyMeasure occ = occupancy_of(m, pi);
    Mat worst = m.r0 - penalty_table(spec, occ, pi);
    return value_iteration(m, pi, worst, tol, nullptr, max_iters);
}

/// Robust state value via the direct solve under the worst-case reward.
inline Vec robust_value(const TabularMdp& m, const Policy& pi, const UncertaintySpec& spec) {
    require_valid(m, spec);
    OccupancyMeasure occ = occupancy_of(m, pi);
    return value_of(m, pi, m.r0 - penalty_table(spec, occ, pi));
}

/**
Robust Q function, Q(s, a) = R0(s, a) - penalty(s, a) + gamma <P(.|s, a), v>
with v the robust value of pi. Satisfies v(s) = <pi_s, Q(s, .)>.
*/
inline QFunction robust_q(const TabularMdp& m, const Policy& pi, const UncertaintySpec& spec) {
    require_valid(m, spec);
    OccupancyMeasure occ = occupancy_of(m, pi);
    Mat worst = m.r0 - penalty_table(spec, occ, pi);
    return q_from_v(m, worst, value_of(m, pi, worst));
}

/**
Value of the state-wise rectangularization of a coupled ball of radius alpha:
each sweep applies the per-state inner minimum analytically,
v <- T_pi v - alpha ||pi_s||_q, by feeding plain value iteration the reward
R0(s, a) - alpha ||pi_s||_q. Agrees with s-rect evaluation at uniform radii;
the two compute different penalty tables with equal policy averages, which is
what makes the cross-check in the tests meaningful.
*/
inline ValueIterationResult rectangularized_value(const TabularMdp& m, const Policy& pi, double alpha,
                                                  double p, double tol, int max_iters = 1000000) {
    double q = holder_conjugate(p);
    Mat shifted = m.r0;
    for (Eigen::Index s = 0; s < shifted.rows(); ++s)
        shifted.row(s).array() -= alpha * lp_norm(pi.probs.row(s), q);
    return value_iteration(m, pi, shifted, tol, nullptr, max_iters);
}

} // namespace rrmdp
