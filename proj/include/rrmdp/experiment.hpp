#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "mdp.hpp"
#include "policy_gradient.hpp"
#include "rng.hpp"
#include "uncertainty.hpp"

namespace rrmdp {

/**
Dense random MDP: every transition row and the initial distribution are
normalized i.i.d. U(0,1) draws, rewards are i.i.d. U(0,1). Dense rows keep
every policy's chain irreducible, so occupancies stay strictly positive.
Draw order is fixed (P by (s, a, s'), then R0, then mu), so a seed pins the
model bit-for-bit.
*/
inline TabularMdp sample_random_mdp(uint64_t seed, int num_states, int num_actions, double gamma) {
    if (num_states <= 0 || num_actions <= 0) throw ValidationError("sample_random_mdp: empty model");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ValidationError("sample_random_mdp: gamma outside [0, 1)");
    Rng rng = Rng::derive(seed, 0x6d6470);
    TabularMdp m;
    m.num_states = num_states;
    m.num_actions = num_actions;
    m.gamma = gamma;
    m.kernel.reserve(num_states);
    for (int s = 0; s < num_states; ++s) {
        Mat rows(num_actions, num_states);
        for (int a = 0; a < num_actions; ++a) {
            for (int t = 0; t < num_states; ++t) rows(a, t) = rng.uniform();
            rows.row(a) /= rows.row(a).sum();
        }
        m.kernel.push_back(std::move(rows));
    }
    m.r0.resize(num_states, num_actions);
    for (int s = 0; s < num_states; ++s)
        for (int a = 0; a < num_actions; ++a) m.r0(s, a) = rng.uniform();
    m.mu.resize(num_states);
    for (int s = 0; s < num_states; ++s) m.mu(s) = 0.5 + rng.uniform();
    m.mu /= m.mu.sum();
    return m;
}

/**
Random PSD covariance for reward perturbations: Sigma = c M M^T with M
entries i.i.d. U(-1, 1), scaled so the largest diagonal entry equals sigma2.
*/
inline Mat sample_psd_covariance(uint64_t seed, int dim, double sigma2) {
    if (dim <= 0) throw ValidationError("sample_psd_covariance: dim must be positive");
    if (!(sigma2 >= 0.0)) throw ValidationError("sample_psd_covariance: sigma2 must be >= 0");
    Rng rng = Rng::derive(seed, 0x636f76);
    Mat m(dim, dim);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) m(i, j) = rng.uniform(-1.0, 1.0);
    Mat g = m * m.transpose();
    g = 0.5 * (g + g.transpose()); // exact symmetry
    double peak = g.diagonal().maxCoeff();
    if (peak > 0.0) g *= sigma2 / peak;
    return g;
}

/**
Gaussian reward perturbation model, R ~ N(R0, cov) over rewards flattened
row-major (index s * A + a).
*/
struct GaussianRewardModel {
    Mat r0;
    Mat cov;
};

namespace detail {

/// Cholesky factor when cov is definite; eigenvalue square root with negative
/// eigenvalues clamped to zero when it is merely semidefinite.
inline Mat covariance_factor(const Mat& cov) {
    Eigen::LLT<Mat> llt(cov);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    Eigen::SelfAdjointEigenSolver<Mat> es(cov);
    if (es.info() != Eigen::Success) throw std::runtime_error("covariance factorization failed");
    Vec clamped = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * clamped.asDiagonal();
}

} // namespace detail

/// n correlated reward tables R0 + L z, z ~ N(0, I); one fixed draw order per seed.
inline std::vector<Mat> sample_perturbed_rewards(const GaussianRewardModel& model, int n, uint64_t seed) {
    const int S = static_cast<int>(model.r0.rows());
    const int A = static_cast<int>(model.r0.cols());
    const int dim = S * A;
    if (model.cov.rows() != dim || model.cov.cols() != dim)
        throw ValidationError("sample_perturbed_rewards: covariance shape does not match reward table");
    Mat factor = detail::covariance_factor(model.cov);
    Rng rng = Rng::derive(seed, 0x726577);
    std::vector<Mat> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        Vec z(dim);
        for (int k = 0; k < dim; ++k) z(k) = rng.normal();
        Vec flat = factor * z;
        Mat r = model.r0;
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a) r(s, a) += flat(s * A + a);
        out.push_back(std::move(r));
    }
    return out;
}

struct CvarResult {
    double cvar = 0.0;
    double mean = 0.0;
    std::vector<double> returns; // in sample order
    int tail_count = 0;          // ceil(level * n)
};

/**
Empirical CVaR of a policy's return over sampled reward tables: the mean of
the ceil(level * n) smallest returns, ties broken by sample index. Costs one
occupancy solve plus one dot product per sample.
*/
inline CvarResult evaluate_cvar(const TabularMdp& m, const Policy& pi, const std::vector<Mat>& rewards,
                                double level) {
    if (rewards.empty()) throw ValidationError("evaluate_cvar: no reward samples");
    if (!(level > 0.0 && level <= 1.0)) throw ValidationError("evaluate_cvar: level outside (0, 1]");
    OccupancyMeasure occ = occupancy_of(m, pi);
    CvarResult res;
    res.returns.reserve(rewards.size());
    for (const Mat& r : rewards) res.returns.push_back(return_from_occupancy(occ, r));
    const int n = static_cast<int>(res.returns.size());
    res.tail_count = static_cast<int>(std::ceil(level * n));
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return res.returns[a] < res.returns[b]; });
    double tail = 0.0;
    for (int i = 0; i < res.tail_count; ++i) tail += res.returns[order[i]];
    res.cvar = tail / res.tail_count;
    res.mean = std::accumulate(res.returns.begin(), res.returns.end(), 0.0) / n;
    return res;
}

/**
Alpha-sweep protocol: per state count, one seeded random MDP, one Gaussian
reward model, one shared set of perturbation draws; per (alpha, method), a
policy trained by projected gradient ascent and scored by empirical CVaR on
the shared draws. Defaults mirror the reference tabular protocol (seed 1,
S in {5, 10, 15}, A = 5, gamma = 0.99, 1000 samples, CVaR level 5%).
*/
struct SweepConfig {
    uint64_t seed = 1;
    std::vector<int> state_counts = {5, 10, 15};
    int num_actions = 5;
    double gamma = 0.99;
    double p = 2.0;
    std::vector<double> alpha_grid = {0.0, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0};
    int n_samples = 1000;
    double cvar_level = 0.05;
    double sigma2 = 0.1;
    std::vector<std::string> methods = {"nominal", "s-rect", "coupled"};
    PgConfig pg;
};

struct SweepCell {
    double alpha = 0.0;
    std::string method;
    int num_states = 0;
    int num_actions = 0;
    uint64_t seed = 0; // cell-owned derived seed
    double cvar = 0.0;
    double mean = 0.0;
    Policy policy;     // empty when the cell failed
    std::string error; // empty on success
    bool ok() const { return error.empty(); }
};

struct SweepResult {
    SweepConfig config;
    std::vector<SweepCell> cells;
};

inline void validate_sweep_config(const SweepConfig& cfg) {
    if (cfg.state_counts.empty()) throw ValidationError("sweep: state_counts is empty");
    for (int s : cfg.state_counts)
        if (s < 1) throw ValidationError("sweep: state counts must be >= 1");
    if (cfg.num_actions < 1) throw ValidationError("sweep: num_actions must be >= 1");
    if (!(cfg.gamma >= 0.0 && cfg.gamma < 1.0)) throw ValidationError("sweep: gamma outside [0, 1)");
    if (!(cfg.p > 1.0)) throw ValidationError("sweep: p must exceed 1 (gradient training)");
    if (cfg.alpha_grid.empty()) throw ValidationError("sweep: alpha_grid is empty");
    for (size_t i = 0; i < cfg.alpha_grid.size(); ++i) {
        if (!(cfg.alpha_grid[i] >= 0.0)) throw ValidationError("sweep: radii must be >= 0");
        if (i > 0 && !(cfg.alpha_grid[i] > cfg.alpha_grid[i - 1]))
            throw ValidationError("sweep: alpha_grid must be strictly increasing");
    }
    if (cfg.n_samples < 1) throw ValidationError("sweep: n_samples must be >= 1");
    if (!(cfg.cvar_level > 0.0 && cfg.cvar_level <= 1.0))
        throw ValidationError("sweep: cvar_level outside (0, 1]");
    if (!(cfg.sigma2 >= 0.0)) throw ValidationError("sweep: sigma2 must be >= 0");
    if (cfg.methods.empty()) throw ValidationError("sweep: methods is empty");
    for (const std::string& m : cfg.methods)
        if (m != "nominal" && m != "coupled" && m != "s-rect" && m != "sa-rect")
            throw ValidationError("sweep: unknown method \"" + m + "\"");
}

/// The uncertainty set a sweep method trains against; "nominal" is the empty ball.
inline UncertaintySpec sweep_method_spec(const std::string& method, double alpha, double p, int S,
                                         int A) {
    if (method == "nominal") return UncertaintySpec::coupled(0.0, p);
    if (method == "coupled") return UncertaintySpec::coupled(alpha, p);
    if (method == "s-rect") return UncertaintySpec::s_rect_uniform(alpha, p, S);
    if (method == "sa-rect") return UncertaintySpec::sa_rect_uniform(alpha, S, A);
    throw ValidationError("sweep: unknown method \"" + method + "\"");
}

/// One state-count's shared material: the model and the perturbation draws
/// every method and radius is scored on.
struct SweepInstance {
    TabularMdp mdp;
    GaussianRewardModel reward_model;
    std::vector<Mat> draws;
};

inline SweepInstance build_sweep_instance(const SweepConfig& cfg, int num_states) {
    SweepInstance inst;
    uint64_t model_seed = Rng::derive(cfg.seed, 0x6d6f64656c, num_states).next_u64();
    uint64_t cov_seed = Rng::derive(cfg.seed, 0x636f76, num_states).next_u64();
    uint64_t draw_seed = Rng::derive(cfg.seed, 0x64726177, num_states).next_u64();
    inst.mdp = sample_random_mdp(model_seed, num_states, cfg.num_actions, cfg.gamma);
    inst.reward_model.r0 = inst.mdp.r0;
    inst.reward_model.cov =
        sample_psd_covariance(cov_seed, num_states * cfg.num_actions, cfg.sigma2);
    inst.draws = sample_perturbed_rewards(inst.reward_model, cfg.n_samples, draw_seed);
    return inst;
}

/**
Runs the full grid. Cells are independent: each owns a derived seed, so the
result is bit-identical whether cells run serially or across jobs threads.
A cell that throws records the message and the sweep continues.
*/
inline SweepResult run_alpha_sweep(const SweepConfig& cfg, int jobs = 1) {
    validate_sweep_config(cfg);
    SweepResult res;
    res.config = cfg;

    std::vector<SweepInstance> instances;
    instances.reserve(cfg.state_counts.size());
    for (int S : cfg.state_counts) instances.push_back(build_sweep_instance(cfg, S));

    // Row order: state count, then radius, then method.
    std::vector<int> cell_instance;
    for (size_t si = 0; si < cfg.state_counts.size(); ++si)
        for (double alpha : cfg.alpha_grid)
            for (const std::string& method : cfg.methods) {
                SweepCell cell;
                cell.alpha = alpha;
                cell.method = method;
                cell.num_states = cfg.state_counts[si];
                cell.num_actions = cfg.num_actions;
                cell.seed = Rng::derive(cfg.seed, 0x63656c6c, res.cells.size()).next_u64();
                res.cells.push_back(std::move(cell));
                cell_instance.push_back(static_cast<int>(si));
            }

    auto run_cell = [&](size_t idx) {
        SweepCell& cell = res.cells[idx];
        const SweepInstance& inst = instances[cell_instance[idx]];
        try {
            UncertaintySpec spec = sweep_method_spec(cell.method, cell.alpha, cfg.p,
                                                     cell.num_states, cell.num_actions);
            PgConfig pc = cfg.pg;
            pc.seed = cell.seed;
            TrainResult trained = train_projected_pg(inst.mdp, spec, pc);
            CvarResult cv = evaluate_cvar(inst.mdp, trained.policy, inst.draws, cfg.cvar_level);
            cell.policy = trained.policy;
            cell.cvar = cv.cvar;
            cell.mean = cv.mean;
        } catch (const std::exception& e) {
            cell.error = e.what();
            cell.cvar = std::numeric_limits<double>::quiet_NaN();
            cell.mean = std::numeric_limits<double>::quiet_NaN();
        }
    };

    if (jobs <= 1 || res.cells.size() <= 1) {
        for (size_t i = 0; i < res.cells.size(); ++i) run_cell(i);
        return res;
    }
    std::atomic<size_t> next{0};
    auto worker = [&] {
        for (size_t i = next.fetch_add(1); i < res.cells.size(); i = next.fetch_add(1)) run_cell(i);
    };
    std::vector<std::thread> pool;
    size_t n_threads = std::min<size_t>(jobs, res.cells.size());
    pool.reserve(n_threads);
    for (size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    return res;
}

} // namespace rrmdp
