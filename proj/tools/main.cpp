// Command-line front end: closed-form tail bounds, gradient verification,
// approximation-vs-depth sweeps, training runs, ground-truth oracles, and
// multi-configuration comparisons.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ctdqn/ctdqn.hpp"

namespace fs = std::filesystem;
using namespace ctdqn;

namespace {

RunConfig load_run_config(const std::string& config_path, const std::string& builtin_name) {
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw std::runtime_error("cannot open config file: " + config_path);
        nlohmann::json j;
        in >> j;
        return j.get<RunConfig>();
    }
    return builtin_config(builtin_name.empty() ? "Baseline" : builtin_name);
}

std::vector<std::string> split_csv_list(const std::string& joined) {
    std::vector<std::string> out;
    std::stringstream ss(joined);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

// key=value,... architecture description for gradcheck.
NetArch parse_arch_desc(const std::string& desc) {
    NetArch arch;
    arch.state_dim = 1;
    arch.mode = QMode::multi_head;
    arch.n_actions = 3;
    arch.hidden_dim = 8;
    arch.n_blocks = 2;
    arch.activation = Activation::tanh_fn;
    for (const std::string& kv : split_csv_list(desc)) {
        const size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("arch entries must be key=value, got '" + kv + "'");
        const std::string key = kv.substr(0, eq);
        const std::string val = kv.substr(eq + 1);
        if (key == "mode") {
            arch.mode = parse_qmode(val);
        } else if (key == "act" || key == "activation") {
            arch.activation = parse_activation(val);
        } else if (key == "hidden") {
            arch.hidden_dim = std::stoi(val);
        } else if (key == "blocks") {
            arch.n_blocks = std::stoi(val);
        } else if (key == "heads") {
            arch.n_actions = std::stoi(val);
        } else if (key == "state") {
            arch.state_dim = std::stoi(val);
        } else if (key == "time") {
            arch.time_feature = val == "1" || val == "true";
        } else {
            throw std::invalid_argument("unknown arch key '" + key + "'");
        }
    }
    if (arch.mode == QMode::action_in) {
        arch.action_dim = 1;
        arch.n_actions = 1;
    }
    return arch;
}

BoxTarget named_target(const std::string& name) {
    if (name == "sin3") return [](const Vec& x) { return std::sin(3.0 * x[0]); };
    if (name == "quadratic") return [](const Vec& x) { return x[0] * x[0]; };
    if (name == "abs") return [](const Vec& x) { return std::abs(x[0]); };
    if (name == "runge") return [](const Vec& x) { return 1.0 / (1.0 + 25.0 * x[0] * x[0]); };
    throw std::invalid_argument("unknown target '" + name +
                                "' (valid: sin3, quadratic, abs, runge)");
}

int run_ldp(double lh, double lsigma, double k, int n, double horizon, double x0, double delta,
            int mc_trials, uint64_t seed) {
    const LdpConstants c = ldp_radius(lh, lsigma, k, n, horizon, x0, delta);
    const double bound = ldp_bound(c);
    std::cout << "c1,c2,c3,r1,bound,empirical\n";
    std::cout << format_double(c.c1) << ',' << format_double(c.c2) << ',' << format_double(c.c3)
              << ',' << format_double(c.r1) << ',' << format_double(bound) << ',';
    if (mc_trials > 0) {
        if (n != 1)
            throw std::invalid_argument("Monte-Carlo check runs the built-in 1-D environment; "
                                        "use --n 1 with --mc-trials");
        auto [model, actions] = make_stabilization_env();
        model.clip_active = false;  // sup statistics need unconfined paths
        const double dt = 0.1;
        const int steps = static_cast<int>(std::ceil(horizon / dt));
        const double freq = empirical_exceedance(
            model, actions, [](double, const Vec&) { return 1; }, c.r1, mc_trials, seed, {x0},
            steps, dt);
        std::cout << format_double(freq);
    }
    std::cout << '\n';
    return 0;
}

int run_gradcheck(uint64_t seed, const std::string& arch_desc) {
    const NetArch arch = parse_arch_desc(arch_desc);
    const QNetwork net = init_network(arch, seed);
    Rng rng = Rng::stream(seed, Rng::kTagInit, 1);
    Vec s(static_cast<size_t>(arch.state_dim));
    for (double& v : s) v = rng.uniform(-1.0, 1.0);
    Vec a;
    if (arch.mode == QMode::action_in) a = {rng.uniform(-1.0, 1.0)};
    double worst = 0.0;
    int checked = 0, excluded = 0;
    for (int head = 0; head < arch.out_dim(); ++head) {
        const GradCheckResult res = gradient_check(net, 0.0, s, a, head);
        worst = std::max(worst, res.max_rel_error);
        checked += res.n_checked;
        excluded += res.n_excluded;
    }
    std::cout << "max_rel_error,n_checked,n_excluded\n";
    std::cout << format_double(worst) << ',' << checked << ',' << excluded << '\n';
    return 0;
}

int run_uat(const std::string& target_name, const std::string& depths_csv, int width, long budget,
            uint64_t seed) {
    const BoxTarget target = named_target(target_name);
    std::cout << "depth,width,sup_error\n";
    for (const std::string& tok : split_csv_list(depths_csv)) {
        const int depth = std::stoi(tok);
        const FitResult res = fit_supervised(target, {-1.0}, {1.0}, depth, width, budget, seed);
        std::cout << depth << ',' << width << ','
                  << (res.diverged ? "diverged" : format_double(res.sup_error)) << '\n';
    }
    return 0;
}

int run_train(const std::string& config_path, const std::string& builtin_name, uint64_t seed,
              bool seed_given, const std::string& out_dir, bool with_oracle) {
    RunConfig config = load_run_config(config_path, builtin_name);
    if (seed_given) config.seed = seed;
    const RunArtifacts art = run_config(config, out_dir, with_oracle);
    const size_t n = art.log.episodes.size();
    std::cout << "config=" << config.name << " episodes=" << n << '\n';
    if (n > 0) {
        Vec rewards;
        rewards.reserve(n);
        for (const EpisodeRecord& r : art.log.episodes) rewards.push_back(r.total_reward);
        const Vec smoothed = smooth_rewards(rewards, kSmoothingWindow);
        std::cout << "final_smoothed_reward=" << format_double(smoothed.back()) << '\n';
    }
    for (const CheckpointRecord& c : art.log.checkpoints)
        if (c.has_sup_error)
            std::cout << "checkpoint step=" << c.step
                      << " sup_error=" << format_double(c.sup_error_vs_oracle) << '\n';
    if (art.log.failed) {
        std::cerr << "training diverged at step " << art.log.failed_step << ": " << art.log.failure
                  << '\n';
        return 1;
    }
    std::cout << "artifacts written to " << art.out_dir.string() << '\n';
    return 0;
}

int run_oracle(const std::string& config_path, const std::string& builtin_name, int states,
               const std::string& mode, double tol, const std::string& out_path) {
    const RunConfig config = load_run_config(config_path, builtin_name);
    auto [model, actions] =
        make_stabilization_env(config.env.sigma, config.env.action_cost, config.env.dt);
    model.discount_rate = config.train.gamma;
    model.horizon = config.env.max_t * config.env.dt;
    GridMdp grid = build_grid_mdp(model, actions, states, config.env.dt, 11,
                                  parse_target_mode(config.train.target_mode));
    SolveResult sol;
    if (mode == "stationary") {
        sol = solve_q_star(grid, tol, SolveMode::stationary);
    } else if (mode == "finite_horizon") {
        grid.horizon_steps = config.env.max_t;
        sol = solve_q_star(grid, tol, SolveMode::finite_horizon);
    } else {
        throw std::invalid_argument("mode must be stationary | finite_horizon");
    }
    std::ofstream out = open_output(out_path);
    out << "s,a,q_star,v_star\n";
    for (int s = 0; s < grid.n_states(); ++s)
        for (int a = 0; a < grid.n_actions(); ++a)
            out << format_double(grid.grid[static_cast<size_t>(s)]) << ','
                << format_double(grid.actions.action(a)[0]) << ','
                << format_double(sol.q.at(0, s, a)) << ',' << format_double(sol.v.at(0, s)) << '\n';
    if (!out) throw std::runtime_error("failed writing " + out_path);
    std::cout << "states=" << grid.n_states() << " actions=" << grid.n_actions()
              << " sweeps=" << sol.iterations << " written=" << out_path << '\n';
    return 0;
}

int run_oracle_contraction(const std::string& config_path, const std::string& builtin_name,
                           int states, int pairs, uint64_t seed) {
    const RunConfig config = load_run_config(config_path, builtin_name);
    auto [model, actions] =
        make_stabilization_env(config.env.sigma, config.env.action_cost, config.env.dt);
    model.discount_rate = config.train.gamma;
    const GridMdp grid = build_grid_mdp(model, actions, states, config.env.dt, 11,
                                        parse_target_mode(config.train.target_mode));
    Rng rng(seed);
    double worst = 0.0;
    int degenerate = 0;
    for (int i = 0; i < pairs; ++i) {
        QTable q1(1, grid.n_states(), grid.n_actions());
        QTable q2(1, grid.n_states(), grid.n_actions());
        for (double& v : q1.data) v = rng.uniform(-5.0, 5.0);
        for (double& v : q2.data) v = rng.uniform(-5.0, 5.0);
        const ContractionResult res = contraction_ratio(grid, q1, q2);
        if (res.degenerate) {
            ++degenerate;
            continue;
        }
        worst = std::max(worst, res.ratio);
    }
    std::cout << "pairs=" << pairs << " max_ratio=" << format_double(worst)
              << " gamma_eff=" << format_double(grid.gamma_eff) << " degenerate=" << degenerate
              << '\n';
    return worst <= grid.gamma_eff + 1e-12 ? 0 : 1;
}

int run_compare(const std::string& configs_csv, const std::string& out_dir, bool with_oracle) {
    const std::vector<std::string> names = split_csv_list(configs_csv);
    const ComparisonReport report = compare_configs(names, out_dir, with_oracle);
    bool any_failed = false;
    for (const ComparisonEntry& entry : report.entries) {
        if (entry.completed) {
            std::cout << entry.name << ": ok (" << entry.log.episodes.size() << " episodes)\n";
        } else {
            any_failed = true;
            std::cout << entry.name << ": FAILED (" << entry.error << ")\n";
        }
    }
    std::cout << "comparison written to " << (fs::path(out_dir) / "comparison.csv").string()
              << '\n';
    return any_failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Continuous-time Q-learning testbench"};
    app.require_subcommand(1);

    // ldp
    double lh = 1.0, lsigma = 1.0, growth_k = 1.0, horizon = 1.0, x0 = 0.0, delta = 0.1;
    int ldp_n = 1, mc_trials = 0;
    uint64_t ldp_seed = 17;
    CLI::App* ldp = app.add_subcommand(
        "ldp", "Closed-form sup-norm tail radius/bound, optionally checked by Monte Carlo");
    ldp->add_option("--lh", lh, "Drift Lipschitz constant")->capture_default_str();
    ldp->add_option("--lsigma", lsigma, "Diffusion Lipschitz constant")->capture_default_str();
    ldp->add_option("--k", growth_k, "Linear growth constant")->capture_default_str();
    ldp->add_option("--n", ldp_n, "State dimension")->capture_default_str();
    ldp->add_option("--t", horizon, "Time horizon")->capture_default_str();
    ldp->add_option("--x0", x0, "Start-state norm")->capture_default_str();
    ldp->add_option("--delta", delta, "Target tail probability in (0,1)")->capture_default_str();
    ldp->add_option("--mc-trials", mc_trials,
                    "Monte-Carlo trajectories on the unclipped built-in environment (0 = skip)")
        ->capture_default_str();
    ldp->add_option("--seed", ldp_seed, "Monte-Carlo seed")->capture_default_str();

    // gradcheck
    uint64_t gc_seed = 1;
    std::string arch_desc;
    CLI::App* gradcheck =
        app.add_subcommand("gradcheck", "Verify analytic gradients against central differences");
    gradcheck->add_option("--seed", gc_seed, "Init/probe seed")->capture_default_str();
    gradcheck->add_option(
        "--arch", arch_desc,
        "Architecture as key=value list: mode=,act=,hidden=,blocks=,heads=,state=,time=");

    // uat
    std::string target_name = "sin3", depths_csv = "1,2,4,8";
    int uat_width = 64;
    long uat_budget = 200000;
    uint64_t uat_seed = 3;
    CLI::App* uat =
        app.add_subcommand("uat", "Sup-error of supervised fits across residual depths");
    uat->add_option("--target", target_name, "Target function: sin3 | quadratic | abs | runge")
        ->capture_default_str();
    uat->add_option("--depths", depths_csv, "Comma-separated block counts")->capture_default_str();
    uat->add_option("--width", uat_width, "Hidden width")->capture_default_str();
    uat->add_option("--budget", uat_budget, "Training samples per fit")->capture_default_str();
    uat->add_option("--seed", uat_seed, "Fit seed")->capture_default_str();

    // train
    std::string train_config_path, train_builtin, train_out = "out";
    uint64_t train_seed = 0;
    bool train_no_oracle = false;
    CLI::App* train = app.add_subcommand("train", "Train one configuration and write artifacts");
    train->add_option("--config", train_config_path, "RunConfig JSON file");
    train->add_option("--builtin", train_builtin,
                      "Built-in configuration name (used when --config is absent)");
    CLI::Option* train_seed_opt =
        train->add_option("--seed", train_seed, "Override the configuration seed");
    train->add_option("--out", train_out, "Output directory")->capture_default_str();
    train->add_flag("--no-oracle", train_no_oracle,
                    "Skip the ground-truth oracle (no checkpoint sup errors)");

    // oracle (+ contraction)
    std::string oracle_config_path, oracle_builtin, oracle_mode = "stationary",
                oracle_out = "qstar.csv";
    int oracle_states = 201, contraction_pairs = 100;
    double oracle_tol = 1e-10;
    uint64_t oracle_seed = 11;
    CLI::App* oracle = app.add_subcommand("oracle", "Ground-truth tables via value iteration");
    oracle->add_option("--config", oracle_config_path, "RunConfig JSON file");
    oracle->add_option("--builtin", oracle_builtin,
                       "Built-in configuration name (used when --config is absent)");
    oracle->add_option("--states", oracle_states, "Grid resolution")->capture_default_str();
    oracle->add_option("--mode", oracle_mode, "stationary | finite_horizon")
        ->capture_default_str();
    oracle->add_option("--tol", oracle_tol, "Value-iteration stopping tolerance")
        ->capture_default_str();
    oracle->add_option("--out", oracle_out, "Output CSV path")->capture_default_str();
    CLI::App* contraction = oracle->add_subcommand(
        "contraction", "Measure Bellman contraction ratios on random table pairs");
    contraction->add_option("--pairs", contraction_pairs, "Number of random pairs")
        ->capture_default_str();
    contraction->add_option("--seed", oracle_seed, "Table seed")->capture_default_str();

    // compare
    std::string compare_csv = "Baseline,HighLR,FewerResBlocks,HighNoise,SlowTargetUpdate";
    std::string compare_out = "out";
    bool compare_no_oracle = false;
    CLI::App* compare =
        app.add_subcommand("compare", "Run several built-in configurations and tabulate them");
    compare->add_option("--configs", compare_csv, "Comma-separated configuration names")
        ->capture_default_str();
    compare->add_option("--out", compare_out, "Output directory")->capture_default_str();
    compare->add_flag("--no-oracle", compare_no_oracle,
                      "Skip the ground-truth oracle (no checkpoint sup errors)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(ldp))
            return run_ldp(lh, lsigma, growth_k, ldp_n, horizon, x0, delta, mc_trials, ldp_seed);
        if (app.got_subcommand(gradcheck)) return run_gradcheck(gc_seed, arch_desc);
        if (app.got_subcommand(uat))
            return run_uat(target_name, depths_csv, uat_width, uat_budget, uat_seed);
        if (app.got_subcommand(train))
            return run_train(train_config_path, train_builtin, train_seed,
                             train_seed_opt->count() > 0, train_out, !train_no_oracle);
        if (app.got_subcommand(oracle)) {
            if (oracle->got_subcommand(contraction))
                return run_oracle_contraction(oracle_config_path, oracle_builtin, oracle_states,
                                              contraction_pairs, oracle_seed);
            return run_oracle(oracle_config_path, oracle_builtin, oracle_states, oracle_mode,
                              oracle_tol, oracle_out);
        }
        if (app.got_subcommand(compare))
            return run_compare(compare_csv, compare_out, !compare_no_oracle);
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return 2;
    }
    return 0;
}
