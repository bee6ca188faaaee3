#pragma once

#include <cmath>
#include <utility>

#include "rrmdp/experiment.hpp"
#include "rrmdp/mdp.hpp"
#include "rrmdp/rng.hpp"

namespace fixtures {

using namespace rrmdp;

/// Two-state chain with a clear nominal optimum (commit to state 1 and stay).
inline TabularMdp two_state_chain() {
    TabularMdp m;
    m.num_states = 2;
    m.num_actions = 2;
    m.gamma = 0.9;
    m.mu = Vec(2);
    m.mu << 0.8, 0.2;
    Mat s0(2, 2), s1(2, 2);
    s0 << 1.0, 0.0, // stay
        0.0, 1.0;   // go
    s1 << 0.0, 1.0, // stay
        1.0, 0.0;   // go back
    m.kernel = {s0, s1};
    m.r0.resize(2, 2);
    m.r0 << 0.1, 0.3, 0.9, 0.2;
    return m;
}

/// Single state, single action, unit reward: v = 1 / (1 - gamma), d = 1 / (1 - gamma).
inline TabularMdp one_state() {
    TabularMdp m;
    m.num_states = 1;
    m.num_actions = 1;
    m.gamma = 0.9;
    m.mu = Vec::Ones(1);
    m.kernel = {Mat::Ones(1, 1)};
    m.r0 = Mat::Ones(1, 1);
    return m;
}

/// Random policy bounded away from the simplex boundary.
inline Policy interior_policy(Rng& rng, int num_states, int num_actions) {
    Mat p(num_states, num_actions);
    for (int s = 0; s < num_states; ++s) {
        for (int a = 0; a < num_actions; ++a) p(s, a) = 0.1 + rng.uniform();
        p.row(s) /= p.row(s).sum();
    }
    return {p};
}

inline int sample_discrete(Rng& rng, const Eigen::Ref<const Eigen::RowVectorXd>& probs) {
    double u = rng.uniform();
    double acc = 0.0;
    for (int i = 0; i < probs.size(); ++i) {
        acc += probs(i);
        if (u < acc) return i;
    }
    return static_cast<int>(probs.size()) - 1;
}

/// Monte-Carlo return estimate using termination as discounting: rewards are
/// summed undiscounted along trajectories that continue with probability
/// gamma, an unbiased estimator of the discounted return.
inline std::pair<double, double> mc_return(const TabularMdp& m, const Policy& pi, const Mat& reward,
                                           int n_traj, uint64_t seed) {
    Rng rng = Rng::derive(seed, 0x6d63);
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n_traj; ++i) {
        int s = sample_discrete(rng, m.mu.transpose());
        double total = 0.0;
        while (true) {
            int a = sample_discrete(rng, pi.probs.row(s));
            total += reward(s, a);
            if (rng.uniform() >= m.gamma) break;
            s = sample_discrete(rng, m.kernel[s].row(a));
        }
        sum += total;
        sumsq += total * total;
    }
    double mean = sum / n_traj;
    double var = (sumsq - n_traj * mean * mean) / (n_traj - 1);
    return {mean, std::sqrt(var / n_traj)};
}

} // namespace fixtures
