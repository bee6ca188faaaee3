#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "mdp.hpp"
#include "uncertainty.hpp"

namespace rrmdp {

/**
Euclidean projection onto the Lp ball of the given radius.

p = 1 uses the sorted soft-threshold, p = inf clamps, and 1 < p < inf solves
the KKT system: u_i = sign(x_i) t_i with t_i + lambda p t_i^(p-1) = |x_i|,
lambda bisected until ||t||_p hits the radius. The inner scalar equation is
solved by bracketed Newton, so the routine has no tuning knobs.
*/
inline Vec project_lp_ball(const Vec& x, double p, double radius) {
    if (!(radius >= 0.0)) throw ValidationError("project_lp_ball: radius must be >= 0");
    if (radius == 0.0) return Vec::Zero(x.size());
    if (lp_norm(x, p) <= radius) return x;

    const Eigen::Index n = x.size();
    Vec mag = x.cwiseAbs();

    if (p == kInf) return x.cwiseMax(-radius).cwiseMin(radius);
    if (p == 2.0) return x * (radius / x.norm());

    if (p == 1.0) {
        // Threshold tau with sum_i max(|x_i| - tau, 0) = radius.
        std::vector<double> sorted(mag.data(), mag.data() + n);
        std::sort(sorted.begin(), sorted.end(), std::greater<double>());
        double acc = 0.0, tau = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) {
            acc += sorted[k];
            double cand = (acc - radius) / static_cast<double>(k + 1);
            if (k + 1 == n || cand >= sorted[k + 1]) {
                tau = cand;
                break;
            }
        }
        Vec out(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            double t = std::max(mag(i) - tau, 0.0);
            out(i) = x(i) < 0.0 ? -t : t;
        }
        return out;
    }

    // t_i(lambda) by safeguarded Newton on f(t) = t + c t^(p-1) - b, f increasing on [0, b].
    auto solve_t = [p](double c, double b) {
        if (b == 0.0) return 0.0;
        double lo = 0.0, hi = b, t = b / (1.0 + c * std::pow(b, p - 2.0));
        if (!(t > lo && t < hi)) t = 0.5 * b;
        for (int it = 0; it < 100; ++it) {
            double tp = std::pow(t, p - 1.0);
            double f = t + c * tp - b;
            if (f > 0.0) hi = t;
            else lo = t;
            double df = 1.0 + c * (p - 1.0) * (t > 0.0 ? tp / t : 0.0);
            double step = f / df;
            double next = t - step;
            if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
            if (std::abs(next - t) <= 1e-16 * (1.0 + t)) {
                t = next;
                break;
            }
            t = next;
        }
        return t;
    };

    auto norm_at = [&](double lambda, Vec& t) {
        double c = lambda * p;
        for (Eigen::Index i = 0; i < n; ++i) t(i) = solve_t(c, mag(i));
        return lp_norm(t, p);
    };

    Vec t(n);
    double lo = 0.0, hi = 1.0;
    while (norm_at(hi, t) > radius) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e18) break; // radius ~ 0 relative to x; t is already ~ 0
    }
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        if (norm_at(mid, t) > radius) lo = mid;
        else hi = mid;
        if (hi - lo <= 1e-16 * hi) break;
    }
    norm_at(hi, t); // feasible endpoint: ||t||_p <= radius
    Vec out(n);
    for (Eigen::Index i = 0; i < n; ++i) out(i) = x(i) < 0.0 ? -t(i) : t(i);
    return out;
}

struct OracleConfig {
    double step = 1e-2;
    int max_iters = 100000;
    double stop_tol = 1e-13;  // fixed-point residual per unit radius
    double cert_tol = 1e-6;   // optimality-condition slack
};

/**
Optimality conditions for min <b, u> over ||u||_p <= radius, checked on the
candidate u itself: opposite signs to b, |u_i|^p shares proportional to
b_i^q shares (support on the argmax of b when p = 1, |u_i| = radius on the
support of b when p = inf), and a binding budget. Everything is primal; the
closed form being validated is never consulted.
*/
struct HolderCertificate {
    bool sign_ok = false;
    bool proportionality_ok = false;
    bool budget_ok = false;
    double max_deviation = 0.0;

    bool certified() const { return sign_ok && proportionality_ok && budget_ok; }
};

inline HolderCertificate check_holder_certificate(const Vec& b, const Vec& u, double p, double radius,
                                                  double tol) {
    HolderCertificate cert;
    const Eigen::Index n = b.size();
    if (radius == 0.0) {
        cert.sign_ok = cert.proportionality_ok = true;
        cert.budget_ok = u.cwiseAbs().maxCoeff() <= tol;
        return cert;
    }

    cert.sign_ok = true;
    for (Eigen::Index i = 0; i < n; ++i)
        if (b(i) * u(i) > tol * radius) cert.sign_ok = false;

    double bmax = b.cwiseAbs().maxCoeff();
    if (bmax == 0.0) { // any feasible point is optimal
        cert.proportionality_ok = cert.budget_ok = true;
        return cert;
    }

    cert.budget_ok = std::abs(lp_norm(u, p) - radius) <= tol * radius;

    if (p == 1.0) {
        // All mass on the argmax set of |b|.
        double off = 0.0;
        for (Eigen::Index i = 0; i < n; ++i)
            if (std::abs(b(i)) < (1.0 - kTieTol) * bmax) off += std::abs(u(i));
        cert.max_deviation = off / radius;
        cert.proportionality_ok = cert.max_deviation <= tol;
    } else if (p == kInf) {
        double dev = 0.0;
        for (Eigen::Index i = 0; i < n; ++i)
            if (std::abs(b(i)) > tol * bmax) dev = std::max(dev, std::abs(std::abs(u(i)) - radius));
        cert.max_deviation = dev / radius;
        cert.proportionality_ok = cert.max_deviation <= tol;
    } else {
        double q = holder_conjugate(p);
        double us = 0.0, bs = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            us += std::pow(std::abs(u(i)), p);
            bs += std::pow(std::abs(b(i)) / bmax, q);
        }
        double dev = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            double share_u = us > 0.0 ? std::pow(std::abs(u(i)), p) / us : 0.0;
            double share_b = std::pow(std::abs(b(i)) / bmax, q) / bs;
            dev = std::max(dev, std::abs(share_u - share_b));
        }
        cert.max_deviation = dev;
        cert.proportionality_ok = dev <= tol;
    }
    return cert;
}

struct OracleResult {
    WorstCaseReport report;
    int iterations = 0;
    bool certified = false;
    double fixed_point_residual = 0.0;
};

namespace detail {

/// Row-major flattening (index s * A + a), shared with the covariance layout.
inline Vec flatten(const Mat& m) {
    Vec out(m.rows() * m.cols());
    for (Eigen::Index s = 0; s < m.rows(); ++s)
        for (Eigen::Index a = 0; a < m.cols(); ++a) out(s * m.cols() + a) = m(s, a);
    return out;
}

inline Mat unflatten(const Vec& v, Eigen::Index rows, Eigen::Index cols) {
    Mat out(rows, cols);
    for (Eigen::Index s = 0; s < rows; ++s)
        for (Eigen::Index a = 0; a < cols; ++a) out(s, a) = v(s * cols + a);
    return out;
}

} // namespace detail

/**
Numerical worst case by projected gradient descent on the reward
perturbation. The objective <d, pert> is linear, so iterating
pert <- proj(pert - step d) converges to the constrained minimum; the loop
stops once the move per iteration is at machine scale and then certifies the
candidate with the primal Holder conditions. Weighted coupled balls run in
the substituted variable w^(1/p) pert, where the ball is unweighted and the
linear coefficient becomes dhat.

Independent of the closed form: only the projection and the raw objective
appear anywhere in the loop.
*/
inline OracleResult brute_force_worst_reward(const TabularMdp& m, const Policy& pi,
                                             const UncertaintySpec& spec,
                                             const OracleConfig& config = {}) {
    require_valid(m, spec);
    OccupancyMeasure occ = occupancy_of(m, pi);
    const int S = m.num_states, A = m.num_actions;
    OracleResult res;

    // Per-block linear coefficients and projections; coupled = one block.
    struct Block {
        Vec coeff;
        double radius = 0.0;
        double p = 2.0;
        Vec pert;
    };
    std::vector<Block> blocks;
    Mat scale = detail::weight_scale(spec, S, A);
    switch (spec.flavor) {
        case UncertaintyFlavor::coupled:
            blocks.push_back({detail::flatten(occ.state_action.cwiseQuotient(scale)), spec.alpha,
                              spec.p, Vec::Zero(S * A)});
            break;
        case UncertaintyFlavor::s_rect:
            for (int s = 0; s < S; ++s)
                blocks.push_back({occ.state(s) * pi.probs.row(s).transpose(), spec.state_radii(s),
                                  spec.p, Vec::Zero(A)});
            break;
        case UncertaintyFlavor::sa_rect:
            for (int s = 0; s < S; ++s)
                for (int a = 0; a < A; ++a)
                    blocks.push_back({Vec::Constant(1, occ.state_action(s, a)),
                                      spec.state_action_radii(s, a), kInf, Vec::Zero(1)});
            break;
    }

    auto all_certified = [&]() {
        for (const auto& blk : blocks)
            if (!check_holder_certificate(blk.coeff, blk.pert, blk.p, blk.radius, config.cert_tol)
                     .certified())
                return false;
        return true;
    };

    double residual = 0.0;
    int iters = 0;
    bool certified = false;
    for (; iters < config.max_iters; ++iters) {
        residual = 0.0;
        for (auto& blk : blocks) {
            Vec next = project_lp_ball(blk.pert - config.step * blk.coeff, blk.p, blk.radius);
            residual = std::max(residual, (next - blk.pert).lpNorm<Eigen::Infinity>());
            blk.pert = std::move(next);
        }
        if (residual <= config.stop_tol * (1.0 + spec.alpha)) {
            ++iters;
            break;
        }
        // Optimality can be recognized long before the iterates stop moving.
        if ((iters + 1) % 1000 == 0 && all_certified()) {
            ++iters;
            certified = true;
            break;
        }
    }
    certified = certified || all_certified();

    Mat pert(S, A);
    switch (spec.flavor) {
        case UncertaintyFlavor::coupled:
            pert = detail::unflatten(blocks[0].pert, S, A).cwiseQuotient(scale);
            break;
        case UncertaintyFlavor::s_rect:
            for (int s = 0; s < S; ++s) pert.row(s) = blocks[s].pert.transpose();
            break;
        case UncertaintyFlavor::sa_rect:
            for (int s = 0; s < S; ++s)
                for (int a = 0; a < A; ++a) pert(s, a) = blocks[s * A + a].pert(0);
            break;
    }

    res.report.spec = spec;
    res.report.penalty = -pert;
    res.report.worst_reward = m.r0 + pert;
    res.report.regularizer_value = -(occ.state_action.array() * pert.array()).sum();
    res.report.robust_return = return_from_occupancy(occ, m.r0) - res.report.regularizer_value;
    res.iterations = iters;
    res.certified = certified;
    res.fixed_point_residual = residual;
    return res;
}

} // namespace rrmdp
