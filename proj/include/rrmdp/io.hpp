#pragma once

#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "actor_critic.hpp"
#include "experiment.hpp"
#include "mdp.hpp"
#include "policy_gradient.hpp"
#include "uncertainty.hpp"
#include "version.hpp"

namespace rrmdp {

using json = nlohmann::json;

inline json mat_to_json(const Mat& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline json vec_to_json(const Vec& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

inline Mat json_to_mat(const json& j, const std::string& what) {
    if (!j.is_array() || j.empty() || !j[0].is_array())
        throw ValidationError(what + ": expected a 2-d array");
    const size_t rows = j.size(), cols = j[0].size();
    Mat m(rows, cols);
    for (size_t r = 0; r < rows; ++r) {
        if (!j[r].is_array() || j[r].size() != cols)
            throw ValidationError(what + ": ragged rows");
        for (size_t c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
    }
    return m;
}

inline Vec json_to_vec(const json& j, const std::string& what) {
    if (!j.is_array()) throw ValidationError(what + ": expected an array");
    Vec v(j.size());
    for (size_t i = 0; i < j.size(); ++i) v(i) = j[i].get<double>();
    return v;
}

/// Rejects keys outside the documented schema so config typos fail loudly
/// instead of being ignored.
inline void reject_unknown_keys(const json& j, const std::vector<std::string>& allowed,
                                const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const auto& k : allowed)
            if (it.key() == k) {
                known = true;
                break;
            }
        if (!known) throw ValidationError(where + ": unknown key \"" + it.key() + "\"");
    }
}

inline void require_key(const json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key)) throw ValidationError(where + ": missing key \"" + key + "\"");
}

inline json mdp_to_json(const TabularMdp& m) {
    json p = json::array();
    for (const auto& rows : m.kernel) p.push_back(mat_to_json(rows));
    return json{{"num_states", m.num_states},
                {"num_actions", m.num_actions},
                {"gamma", m.gamma},
                {"mu", vec_to_json(m.mu)},
                {"P", std::move(p)},
                {"R0", mat_to_json(m.r0)}};
}

inline TabularMdp mdp_from_json(const json& j) {
    reject_unknown_keys(j, {"num_states", "num_actions", "gamma", "mu", "P", "R0"}, "mdp");
    for (const char* k : {"num_states", "num_actions", "gamma", "mu", "P", "R0"})
        require_key(j, k, "mdp");
    TabularMdp m;
    m.num_states = j["num_states"].get<int>();
    m.num_actions = j["num_actions"].get<int>();
    m.gamma = j["gamma"].get<double>();
    m.mu = json_to_vec(j["mu"], "mdp.mu");
    if (!j["P"].is_array() || static_cast<int>(j["P"].size()) != m.num_states)
        throw ValidationError("mdp.P: expected num_states entries");
    m.kernel.reserve(m.num_states);
    for (int s = 0; s < m.num_states; ++s) m.kernel.push_back(json_to_mat(j["P"][s], "mdp.P"));
    m.r0 = json_to_mat(j["R0"], "mdp.R0");
    return m;
}

inline json policy_to_json(const Policy& pi) { return json{{"probs", mat_to_json(pi.probs)}}; }

inline Policy policy_from_json(const json& j) {
    reject_unknown_keys(j, {"probs"}, "policy");
    require_key(j, "probs", "policy");
    return {json_to_mat(j["probs"], "policy.probs")};
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ValidationError(path + ": " + e.what());
    }
    return j;
}

inline void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << '\n';
}

/// Loads and validates; a malformed or non-stochastic model throws ValidationError.
inline TabularMdp load_mdp(const std::string& path) {
    TabularMdp m = mdp_from_json(read_json_file(path));
    require_valid(m);
    return m;
}

inline Policy load_policy(const std::string& path, const TabularMdp& m) {
    Policy pi = policy_from_json(read_json_file(path));
    require_valid(m, pi);
    return pi;
}

// Exponents serialize as numbers except p = infinity, which JSON cannot
// represent; that case is the string "inf".
inline json p_to_json(double p) {
    if (p == kInf) return json("inf");
    return json(p);
}

inline double p_from_json(const json& j, const std::string& where) {
    if (j.is_string()) {
        if (j.get<std::string>() == "inf") return kInf;
        throw ValidationError(where + ": expected a number or \"inf\"");
    }
    if (!j.is_number()) throw ValidationError(where + ": expected a number or \"inf\"");
    return j.get<double>();
}

inline json spec_to_json(const UncertaintySpec& spec) {
    json j{{"flavor", flavor_name(spec.flavor)},
           {"alpha", spec.alpha},
           {"p", p_to_json(spec.p)}};
    if (spec.weights.size() > 0) j["weights"] = mat_to_json(spec.weights);
    if (spec.flavor == UncertaintyFlavor::s_rect) j["state_radii"] = vec_to_json(spec.state_radii);
    if (spec.flavor == UncertaintyFlavor::sa_rect)
        j["state_action_radii"] = mat_to_json(spec.state_action_radii);
    return j;
}

inline UncertaintySpec spec_from_json(const json& j) {
    reject_unknown_keys(j, {"flavor", "alpha", "p", "weights", "state_radii", "state_action_radii"},
                        "spec");
    require_key(j, "flavor", "spec");
    UncertaintySpec spec;
    const std::string flavor = j["flavor"].get<std::string>();
    if (flavor == "coupled") spec.flavor = UncertaintyFlavor::coupled;
    else if (flavor == "s-rect") spec.flavor = UncertaintyFlavor::s_rect;
    else if (flavor == "sa-rect") spec.flavor = UncertaintyFlavor::sa_rect;
    else throw ValidationError("spec.flavor: unknown flavor \"" + flavor + "\"");
    if (j.contains("alpha")) spec.alpha = j["alpha"].get<double>();
    if (j.contains("p")) spec.p = p_from_json(j["p"], "spec.p");
    if (j.contains("weights")) spec.weights = json_to_mat(j["weights"], "spec.weights");
    if (j.contains("state_radii")) spec.state_radii = json_to_vec(j["state_radii"], "spec.state_radii");
    if (j.contains("state_action_radii"))
        spec.state_action_radii = json_to_mat(j["state_action_radii"], "spec.state_action_radii");
    return spec;
}

inline json report_to_json(const WorstCaseReport& report) {
    return json{{"penalty", mat_to_json(report.penalty)},
                {"worst_reward", mat_to_json(report.worst_reward)},
                {"robust_return", report.robust_return},
                {"regularizer_value", report.regularizer_value},
                {"spec", spec_to_json(report.spec)}};
}

/// Trained-policy snapshot; theta is present only for softmax training runs.
struct Checkpoint {
    std::string version = kVersion;
    uint64_t seed = 0;
    UncertaintySpec spec;
    Policy policy;
    Mat theta; // 0x0 when the parametrization was direct
};

inline json checkpoint_to_json(const Checkpoint& c) {
    json j{{"version", c.version},
           {"seed", c.seed},
           {"spec", spec_to_json(c.spec)},
           {"policy", policy_to_json(c.policy)}};
    if (c.theta.size() > 0) j["theta"] = mat_to_json(c.theta);
    return j;
}

inline Checkpoint checkpoint_from_json(const json& j) {
    reject_unknown_keys(j, {"version", "seed", "spec", "policy", "theta"}, "checkpoint");
    for (const char* k : {"version", "seed", "spec", "policy"}) require_key(j, k, "checkpoint");
    Checkpoint c;
    c.version = j["version"].get<std::string>();
    c.seed = j["seed"].get<uint64_t>();
    c.spec = spec_from_json(j["spec"]);
    c.policy = policy_from_json(j["policy"]);
    if (j.contains("theta")) c.theta = json_to_mat(j["theta"], "checkpoint.theta");
    return c;
}

namespace detail {

/// Shortest exact decimal for a double; CSV cells round-trip bit-for-bit.
inline std::string csv_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

} // namespace detail

inline std::string trace_to_csv(const std::vector<TraceRow>& trace) {
    std::string out = "iter,robust_return,grad_norm,step_size\n";
    for (const TraceRow& row : trace) {
        out += std::to_string(row.iter);
        out += ',';
        out += detail::csv_double(row.robust_return);
        out += ',';
        out += detail::csv_double(row.grad_norm);
        out += ',';
        out += detail::csv_double(row.step_size);
        out += '\n';
    }
    return out;
}

inline std::string ac_trace_to_csv(const std::vector<AcTraceRow>& trace) {
    std::string out = "step,robust_return\n";
    for (const AcTraceRow& row : trace) {
        out += std::to_string(row.step);
        out += ',';
        out += detail::csv_double(row.robust_return);
        out += '\n';
    }
    return out;
}

inline json sweep_config_to_json(const SweepConfig& cfg) {
    return json{{"seed", cfg.seed},
                {"S_list", cfg.state_counts},
                {"A", cfg.num_actions},
                {"gamma", cfg.gamma},
                {"p", p_to_json(cfg.p)},
                {"alpha_grid", cfg.alpha_grid},
                {"n_samples", cfg.n_samples},
                {"cvar_level", cfg.cvar_level},
                {"sigma2", cfg.sigma2},
                {"methods", cfg.methods},
                {"pg",
                 json{{"step_rule", cfg.pg.step_rule == StepRule::armijo ? "armijo" : "fixed_beta"},
                      {"max_iters", cfg.pg.max_iters},
                      {"grad_tol", cfg.pg.grad_tol}}}};
}

/// Missing keys keep their defaults (the reference tabular protocol); unknown
/// keys are rejected.
inline SweepConfig sweep_config_from_json(const json& j) {
    reject_unknown_keys(j,
                        {"seed", "S_list", "A", "gamma", "p", "alpha_grid", "n_samples",
                         "cvar_level", "sigma2", "methods", "pg"},
                        "sweep config");
    SweepConfig cfg;
    if (j.contains("seed")) cfg.seed = j["seed"].get<uint64_t>();
    if (j.contains("S_list")) cfg.state_counts = j["S_list"].get<std::vector<int>>();
    if (j.contains("A")) cfg.num_actions = j["A"].get<int>();
    if (j.contains("gamma")) cfg.gamma = j["gamma"].get<double>();
    if (j.contains("p")) cfg.p = p_from_json(j["p"], "sweep config.p");
    if (j.contains("alpha_grid")) cfg.alpha_grid = j["alpha_grid"].get<std::vector<double>>();
    if (j.contains("n_samples")) cfg.n_samples = j["n_samples"].get<int>();
    if (j.contains("cvar_level")) cfg.cvar_level = j["cvar_level"].get<double>();
    if (j.contains("sigma2")) cfg.sigma2 = j["sigma2"].get<double>();
    if (j.contains("methods")) cfg.methods = j["methods"].get<std::vector<std::string>>();
    if (j.contains("pg")) {
        const json& pg = j["pg"];
        reject_unknown_keys(pg, {"step_rule", "max_iters", "grad_tol"}, "sweep config.pg");
        if (pg.contains("step_rule")) {
            const std::string rule = pg["step_rule"].get<std::string>();
            if (rule == "armijo") cfg.pg.step_rule = StepRule::armijo;
            else if (rule == "fixed_beta") cfg.pg.step_rule = StepRule::fixed_beta;
            else throw ValidationError("sweep config.pg.step_rule: unknown rule \"" + rule + "\"");
        }
        if (pg.contains("max_iters")) cfg.pg.max_iters = pg["max_iters"].get<int>();
        if (pg.contains("grad_tol")) cfg.pg.grad_tol = pg["grad_tol"].get<double>();
    }
    return cfg;
}

inline json sweep_result_to_json(const SweepResult& res) {
    json cells = json::array();
    for (const SweepCell& c : res.cells) {
        json cell{{"alpha", c.alpha}, {"method", c.method}, {"S", c.num_states},
                  {"A", c.num_actions}, {"seed", c.seed}};
        if (c.ok()) {
            cell["cvar"] = c.cvar;
            cell["mean"] = c.mean;
            cell["policy"] = policy_to_json(c.policy);
        } else {
            cell["error"] = c.error;
        }
        cells.push_back(std::move(cell));
    }
    return json{{"config", sweep_config_to_json(res.config)}, {"cells", std::move(cells)}};
}

inline SweepResult sweep_result_from_json(const json& j) {
    reject_unknown_keys(j, {"config", "cells"}, "sweep result");
    require_key(j, "config", "sweep result");
    require_key(j, "cells", "sweep result");
    SweepResult res;
    res.config = sweep_config_from_json(j["config"]);
    for (const json& cj : j["cells"]) {
        reject_unknown_keys(cj, {"alpha", "method", "S", "A", "seed", "cvar", "mean", "policy", "error"},
                            "sweep cell");
        SweepCell c;
        c.alpha = cj["alpha"].get<double>();
        c.method = cj["method"].get<std::string>();
        c.num_states = cj["S"].get<int>();
        c.num_actions = cj["A"].get<int>();
        c.seed = cj["seed"].get<uint64_t>();
        if (cj.contains("error")) {
            c.error = cj["error"].get<std::string>();
            c.cvar = std::numeric_limits<double>::quiet_NaN();
            c.mean = std::numeric_limits<double>::quiet_NaN();
        } else {
            c.cvar = cj["cvar"].get<double>();
            c.mean = cj["mean"].get<double>();
            c.policy = policy_from_json(cj["policy"]);
        }
        res.cells.push_back(std::move(c));
    }
    return res;
}

inline std::string sweep_to_csv(const SweepResult& res) {
    std::string out = "alpha,method,S,A,seed,cvar,mean\n";
    for (const SweepCell& c : res.cells) {
        out += detail::csv_double(c.alpha);
        out += ',';
        out += c.method;
        out += ',';
        out += std::to_string(c.num_states);
        out += ',';
        out += std::to_string(c.num_actions);
        out += ',';
        out += std::to_string(c.seed);
        out += ',';
        out += detail::csv_double(c.cvar);
        out += ',';
        out += detail::csv_double(c.mean);
        out += '\n';
    }
    return out;
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

} // namespace rrmdp
