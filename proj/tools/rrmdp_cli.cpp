// Command-line binding for the robust-reward MDP toolkit. Every subcommand is
// a thin wrapper over one library entry point; outputs are byte-identical to
// serializing the corresponding library result. Exit codes: 0 success,
// 1 validation failure (bad flags, malformed config or model), 2 runtime or
// numerical failure.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>

#include <rrmdp/actor_critic.hpp>
#include <rrmdp/experiment.hpp>
#include <rrmdp/io.hpp>
#include <rrmdp/mdp.hpp>
#include <rrmdp/policy_gradient.hpp>
#include <rrmdp/uncertainty.hpp>
#include <rrmdp/version.hpp>

namespace {

using rrmdp::json;
using rrmdp::ValidationError;

struct CommonFlags {
    std::string config_path;
    std::string out_dir = ".";
    uint64_t seed = 0;
    bool seed_set = false;
    int jobs = 1;
    double alpha = 0.0;
    bool alpha_set = false;
    std::string p_text;
    std::string flavor;
};

json load_config(const CommonFlags& f) {
    if (f.config_path.empty()) return json::object();
    return rrmdp::read_json_file(f.config_path);
}

/// A model reference is a file path, an inline model object, or a sampling
/// descriptor {"random": {"seed", "S", "A", "gamma"}}.
rrmdp::TabularMdp resolve_mdp(const json& v) {
    if (v.is_string()) return rrmdp::load_mdp(v.get<std::string>());
    if (v.is_object() && v.contains("random")) {
        rrmdp::reject_unknown_keys(v, {"random"}, "mdp");
        const json& r = v["random"];
        rrmdp::reject_unknown_keys(r, {"seed", "S", "A", "gamma"}, "mdp.random");
        for (const char* k : {"S", "A", "gamma"}) rrmdp::require_key(r, k, "mdp.random");
        uint64_t seed = r.contains("seed") ? r["seed"].get<uint64_t>() : 0;
        return rrmdp::sample_random_mdp(seed, r["S"].get<int>(), r["A"].get<int>(),
                                        r["gamma"].get<double>());
    }
    if (v.is_object()) {
        rrmdp::TabularMdp m = rrmdp::mdp_from_json(v);
        rrmdp::require_valid(m);
        return m;
    }
    throw ValidationError("mdp: expected a path, an inline model, or {\"random\": ...}");
}

rrmdp::Policy resolve_policy(const json& v, const rrmdp::TabularMdp& m) {
    if (v.is_null() || (v.is_string() && v.get<std::string>() == "uniform"))
        return rrmdp::Policy::uniform(m.num_states, m.num_actions);
    if (v.is_string()) return rrmdp::load_policy(v.get<std::string>(), m);
    if (v.is_object()) {
        rrmdp::Policy pi = rrmdp::policy_from_json(v);
        rrmdp::require_valid(m, pi);
        return pi;
    }
    throw ValidationError("policy: expected a path, an inline policy, or \"uniform\"");
}

/// Scalar (flavor, alpha, p) resolved against the model dimensions; the
/// rectangular flavors take uniform radius tables at level alpha.
rrmdp::UncertaintySpec resolve_spec(const std::string& flavor, double alpha, double p, int S,
                                    int A) {
    if (flavor == "coupled") return rrmdp::UncertaintySpec::coupled(alpha, p);
    if (flavor == "s-rect") return rrmdp::UncertaintySpec::s_rect_uniform(alpha, p, S);
    if (flavor == "sa-rect") return rrmdp::UncertaintySpec::sa_rect_uniform(alpha, S, A);
    throw ValidationError("flavor: expected coupled, s-rect, or sa-rect, got \"" + flavor + "\"");
}

double parse_p(const std::string& text) {
    if (text == "inf") return rrmdp::kInf;
    try {
        size_t used = 0;
        double value = std::stod(text, &used);
        if (used == text.size()) return value;
    } catch (const std::exception&) {
    }
    throw ValidationError("--p: expected a number or \"inf\", got \"" + text + "\"");
}

std::string out_file(const CommonFlags& f, const std::string& name) {
    std::filesystem::create_directories(f.out_dir);
    return (std::filesystem::path(f.out_dir) / name).string();
}

void write_manifest(const CommonFlags& f, const std::string& subcommand, const json& resolved,
                    const json& seed) {
    json manifest{{"version", rrmdp::kVersion},
                  {"subcommand", subcommand},
                  {"seed", seed},
                  {"config", resolved}};
    rrmdp::write_json_file(out_file(f, "manifest.json"), manifest);
}

void print_kv(const char* key, double value) { std::printf("%s %.17g\n", key, value); }

// Shared scaffolding for evaluate and worst-reward: both resolve (model,
// policy, spec), compute the closed-form worst case, and persist the report.
struct EvaluationRun {
    rrmdp::TabularMdp mdp;
    rrmdp::Policy policy;
    rrmdp::UncertaintySpec spec;
    rrmdp::WorstCaseReport report;
    json resolved;
    json seed = nullptr;
    std::string report_path;
};

EvaluationRun run_evaluation(const CommonFlags& f, const std::string& subcommand) {
    json cfg = load_config(f);
    rrmdp::reject_unknown_keys(cfg, {"mdp", "policy", "alpha", "p", "flavor", "seed"},
                               subcommand + " config");
    rrmdp::require_key(cfg, "mdp", subcommand + " config");

    EvaluationRun run;
    run.mdp = resolve_mdp(cfg["mdp"]);
    run.policy = resolve_policy(cfg.contains("policy") ? cfg["policy"] : json(), run.mdp);
    double alpha = f.alpha_set ? f.alpha : (cfg.contains("alpha") ? cfg["alpha"].get<double>() : 0.0);
    double p = !f.p_text.empty() ? parse_p(f.p_text)
                                 : (cfg.contains("p") ? rrmdp::p_from_json(cfg["p"], "config.p") : 2.0);
    std::string flavor = !f.flavor.empty()
                             ? f.flavor
                             : (cfg.contains("flavor") ? cfg["flavor"].get<std::string>() : "coupled");
    run.spec = resolve_spec(flavor, alpha, p, run.mdp.num_states, run.mdp.num_actions);
    rrmdp::require_valid(run.mdp, run.spec);
    run.report = rrmdp::worst_case_reward(run.mdp, run.policy, run.spec);

    if (f.seed_set) run.seed = f.seed;
    else if (cfg.contains("seed")) run.seed = cfg["seed"];
    run.resolved = json{{"mdp", cfg["mdp"]},
                        {"policy", cfg.contains("policy") ? cfg["policy"] : json("uniform")},
                        {"alpha", alpha},
                        {"p", rrmdp::p_to_json(p)},
                        {"flavor", flavor}};
    run.report_path = out_file(f, "report.json");
    rrmdp::write_json_file(run.report_path, rrmdp::report_to_json(run.report));
    write_manifest(f, subcommand, run.resolved, run.seed);
    return run;
}

int cmd_evaluate(const CommonFlags& f) {
    EvaluationRun run = run_evaluation(f, "evaluate");
    print_kv("nominal_return", rrmdp::return_of(run.mdp, run.policy, run.mdp.r0));
    print_kv("robust_return", run.report.robust_return);
    print_kv("regularizer_value", run.report.regularizer_value);
    std::printf("penalty_table %s\n", run.report_path.c_str());
    return 0;
}

int cmd_worst_reward(const CommonFlags& f) {
    EvaluationRun run = run_evaluation(f, "worst-reward");
    print_kv("robust_return", run.report.robust_return);
    print_kv("regularizer_value", run.report.regularizer_value);
    std::printf("report %s\n", run.report_path.c_str());
    return 0;
}

int cmd_train(const CommonFlags& f) {
    json cfg = load_config(f);
    rrmdp::reject_unknown_keys(cfg, {"mdp", "alpha", "p", "flavor", "seed", "pg"}, "train config");
    rrmdp::require_key(cfg, "mdp", "train config");

    rrmdp::TabularMdp m = resolve_mdp(cfg["mdp"]);
    double alpha = f.alpha_set ? f.alpha : (cfg.contains("alpha") ? cfg["alpha"].get<double>() : 0.0);
    double p = !f.p_text.empty() ? parse_p(f.p_text)
                                 : (cfg.contains("p") ? rrmdp::p_from_json(cfg["p"], "config.p") : 2.0);
    std::string flavor = !f.flavor.empty()
                             ? f.flavor
                             : (cfg.contains("flavor") ? cfg["flavor"].get<std::string>() : "coupled");
    rrmdp::UncertaintySpec spec = resolve_spec(flavor, alpha, p, m.num_states, m.num_actions);
    rrmdp::require_valid(m, spec);

    rrmdp::PgConfig pc;
    std::string parametrization = "direct";
    std::string step_rule = "armijo";
    if (cfg.contains("pg")) {
        const json& pg = cfg["pg"];
        rrmdp::reject_unknown_keys(pg, {"parametrization", "step_rule", "max_iters", "grad_tol"},
                                   "train config.pg");
        if (pg.contains("parametrization")) parametrization = pg["parametrization"].get<std::string>();
        if (pg.contains("step_rule")) step_rule = pg["step_rule"].get<std::string>();
        if (pg.contains("max_iters")) pc.max_iters = pg["max_iters"].get<int>();
        if (pg.contains("grad_tol")) pc.grad_tol = pg["grad_tol"].get<double>();
    }
    if (parametrization == "direct") pc.parametrization = rrmdp::Parametrization::direct;
    else if (parametrization == "softmax") pc.parametrization = rrmdp::Parametrization::softmax;
    else throw ValidationError("train config.pg.parametrization: unknown \"" + parametrization + "\"");
    if (step_rule == "armijo") pc.step_rule = rrmdp::StepRule::armijo;
    else if (step_rule == "fixed_beta") pc.step_rule = rrmdp::StepRule::fixed_beta;
    else throw ValidationError("train config.pg.step_rule: unknown rule \"" + step_rule + "\"");
    pc.seed = f.seed_set ? f.seed : (cfg.contains("seed") ? cfg["seed"].get<uint64_t>() : 0);

    rrmdp::TrainResult result = rrmdp::train_projected_pg(m, spec, pc);

    rrmdp::Checkpoint checkpoint;
    checkpoint.seed = pc.seed;
    checkpoint.spec = spec;
    checkpoint.policy = result.policy;
    checkpoint.theta = result.theta;
    rrmdp::write_json_file(out_file(f, "checkpoint.json"), rrmdp::checkpoint_to_json(checkpoint));
    rrmdp::write_text_file(out_file(f, "trace.csv"), rrmdp::trace_to_csv(result.trace));

    json resolved{{"mdp", cfg["mdp"]},         {"alpha", alpha},
                  {"p", rrmdp::p_to_json(p)},  {"flavor", flavor},
                  {"seed", pc.seed},           {"pg",
                   json{{"parametrization", parametrization},
                        {"step_rule", step_rule},
                        {"max_iters", pc.max_iters},
                        {"grad_tol", pc.grad_tol}}}};
    write_manifest(f, "train", resolved, pc.seed);

    print_kv("robust_return", result.trace.back().robust_return);
    std::printf("iterations %d\nconverged %s\n", result.iterations,
                result.converged ? "true" : "false");
    return 0;
}

int cmd_sweep(const CommonFlags& f) {
    if (f.alpha_set || !f.flavor.empty())
        throw ValidationError("sweep: radii and methods come from the config grid, not "
                              "--alpha/--flavor");
    json cfg_json = load_config(f);
    rrmdp::SweepConfig cfg = rrmdp::sweep_config_from_json(cfg_json);
    if (f.seed_set) cfg.seed = f.seed;
    if (!f.p_text.empty()) cfg.p = parse_p(f.p_text);

    rrmdp::SweepResult result = rrmdp::run_alpha_sweep(cfg, f.jobs);

    rrmdp::write_json_file(out_file(f, "sweep.json"), rrmdp::sweep_result_to_json(result));
    rrmdp::write_text_file(out_file(f, "sweep.csv"), rrmdp::sweep_to_csv(result));
    write_manifest(f, "sweep", rrmdp::sweep_config_to_json(cfg), cfg.seed);

    int failed = 0;
    for (const rrmdp::SweepCell& c : result.cells)
        if (!c.ok()) ++failed;
    std::printf("cells %zu\nfailed %d\n", result.cells.size(), failed);
    return failed == 0 ? 0 : 2;
}

int cmd_ac(const CommonFlags& f) {
    json cfg = load_config(f);
    rrmdp::reject_unknown_keys(cfg, {"mdp", "alpha", "p", "flavor", "seed", "ac"}, "ac config");
    rrmdp::require_key(cfg, "mdp", "ac config");

    rrmdp::TabularMdp m = resolve_mdp(cfg["mdp"]);
    double alpha = f.alpha_set ? f.alpha : (cfg.contains("alpha") ? cfg["alpha"].get<double>() : 0.0);
    double p = !f.p_text.empty() ? parse_p(f.p_text)
                                 : (cfg.contains("p") ? rrmdp::p_from_json(cfg["p"], "config.p") : 2.0);
    std::string flavor = !f.flavor.empty()
                             ? f.flavor
                             : (cfg.contains("flavor") ? cfg["flavor"].get<std::string>() : "coupled");
    rrmdp::UncertaintySpec spec = resolve_spec(flavor, alpha, p, m.num_states, m.num_actions);
    rrmdp::require_valid(m, spec);

    rrmdp::ActorCriticConfig ac;
    if (cfg.contains("ac")) {
        const json& a = cfg["ac"];
        rrmdp::reject_unknown_keys(a,
                                   {"total_steps", "batch_size", "critic_scale", "critic_exp",
                                    "actor_scale", "actor_exp", "trace_every",
                                    "divergence_threshold"},
                                   "ac config.ac");
        if (a.contains("total_steps")) ac.total_steps = a["total_steps"].get<int>();
        if (a.contains("batch_size")) ac.batch_size = a["batch_size"].get<int>();
        if (a.contains("critic_scale")) ac.critic_scale = a["critic_scale"].get<double>();
        if (a.contains("critic_exp")) ac.critic_exp = a["critic_exp"].get<double>();
        if (a.contains("actor_scale")) ac.actor_scale = a["actor_scale"].get<double>();
        if (a.contains("actor_exp")) ac.actor_exp = a["actor_exp"].get<double>();
        if (a.contains("trace_every")) ac.trace_every = a["trace_every"].get<int>();
        if (a.contains("divergence_threshold"))
            ac.divergence_threshold = a["divergence_threshold"].get<double>();
    }
    ac.seed = f.seed_set ? f.seed : (cfg.contains("seed") ? cfg["seed"].get<uint64_t>() : 0);

    rrmdp::ActorCriticResult result = rrmdp::tabular_actor_critic(m, spec, ac);

    rrmdp::Checkpoint checkpoint;
    checkpoint.seed = ac.seed;
    checkpoint.spec = spec;
    checkpoint.policy = result.policy;
    checkpoint.theta = result.state.theta;
    rrmdp::write_json_file(out_file(f, "checkpoint.json"), rrmdp::checkpoint_to_json(checkpoint));
    rrmdp::write_text_file(out_file(f, "trace.csv"), rrmdp::ac_trace_to_csv(result.trace));

    json resolved{{"mdp", cfg["mdp"]},        {"alpha", alpha},
                  {"p", rrmdp::p_to_json(p)}, {"flavor", flavor},
                  {"seed", ac.seed},          {"ac",
                   json{{"total_steps", ac.total_steps},
                        {"batch_size", ac.batch_size},
                        {"critic_scale", ac.critic_scale},
                        {"critic_exp", ac.critic_exp},
                        {"actor_scale", ac.actor_scale},
                        {"actor_exp", ac.actor_exp},
                        {"trace_every", ac.trace_every},
                        {"divergence_threshold", ac.divergence_threshold}}}};
    write_manifest(f, "ac", resolved, ac.seed);

    print_kv("robust_return", rrmdp::robust_return_of(m, result.policy, spec));
    std::printf("steps %ld\n", result.steps);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reward-robust MDP toolkit: worst-case rewards over coupled Lp balls, robust "
                 "evaluation and policy gradients, rectangular baselines, CVaR sweeps"};
    app.require_subcommand(1);
    app.fallthrough();

    CommonFlags f;
    app.add_option("--config", f.config_path, "JSON configuration file");
    auto* seed_opt = app.add_option("--seed", f.seed, "Override the config seed");
    app.add_option("--out", f.out_dir, "Output directory (default: current)");
    app.add_option("--jobs", f.jobs, "Worker threads for sweep cells")->check(CLI::PositiveNumber);
    auto* alpha_opt = app.add_option("--alpha", f.alpha, "Override the uncertainty radius");
    app.add_option("--p", f.p_text, "Override the ball exponent (number or \"inf\")");
    app.add_option("--flavor", f.flavor, "Override the uncertainty flavor")
        ->check(CLI::IsMember({"coupled", "s-rect", "sa-rect"}));

    CLI::App* evaluate = app.add_subcommand("evaluate", "Robust evaluation of a fixed policy");
    CLI::App* worst = app.add_subcommand("worst-reward", "Closed-form worst-case reward table");
    CLI::App* train = app.add_subcommand("train", "Projected robust policy gradient");
    CLI::App* sweep = app.add_subcommand("sweep", "CVaR sweep over radii and methods");
    CLI::App* ac = app.add_subcommand("ac", "Online two-timescale actor-critic");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    f.seed_set = seed_opt->count() > 0;
    f.alpha_set = alpha_opt->count() > 0;

    try {
        if (evaluate->parsed()) return cmd_evaluate(f);
        if (worst->parsed()) return cmd_worst_reward(f);
        if (train->parsed()) return cmd_train(f);
        if (sweep->parsed()) return cmd_sweep(f);
        if (ac->parsed()) return cmd_ac(f);
        return 1;
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "validation error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
