#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ctdqn/dp.hpp"
#include "ctdqn/io.hpp"
#include "ctdqn/qlearn.hpp"

namespace ctdqn {

inline constexpr int kSmoothingWindow = 20;
inline constexpr int kPolicyGridPoints = 201;
inline constexpr int kOracleStates = 201;
inline constexpr double kOracleTol = 1e-8;
inline constexpr double kSupErrorRadius = 1.0;

/// Resolves one of the five built-in experiment configurations. Names are
/// matched ignoring case, spaces, hyphens and underscores.
inline RunConfig builtin_config(const std::string& name) {
    std::string key;
    for (char ch : name) {
        if (ch == ' ' || ch == '-' || ch == '_') continue;
        key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
    RunConfig c;  // defaults are the baseline
    if (key == "baseline") {
        c.name = "Baseline";
    } else if (key == "highlr") {
        c.name = "HighLR";
        c.train.lr_schedule.alpha0 = 1e-3;
    } else if (key == "fewerresblocks") {
        c.name = "FewerResBlocks";
        c.net.n_blocks = 0;
    } else if (key == "highnoise") {
        c.name = "HighNoise";
        c.env.sigma = 0.3;
    } else if (key == "slowtargetupdate") {
        c.name = "SlowTargetUpdate";
        c.train.target_update = 500;
    } else {
        throw std::invalid_argument(
            "unknown configuration '" + name +
            "' (valid: Baseline, HighLR, FewerResBlocks, HighNoise, SlowTargetUpdate)");
    }
    return c;
}

/// Trailing moving average; the first window-1 entries average the available
/// prefix so the curve starts at element 0.
inline Vec smooth_rewards(const Vec& rewards, int window) {
    if (window < 1) throw std::invalid_argument("smooth_rewards: window must be >= 1");
    Vec out(rewards.size(), 0.0);
    double acc = 0.0;
    for (size_t i = 0; i < rewards.size(); ++i) {
        acc += rewards[i];
        if (i >= static_cast<size_t>(window)) acc -= rewards[i - static_cast<size_t>(window)];
        const size_t n = std::min(i + 1, static_cast<size_t>(window));
        out[i] = acc / static_cast<double>(n);
    }
    return out;
}

/// Greedy action index per state over a uniform grid on [-1, 1].
inline std::vector<std::pair<double, int>> extract_policy(const QNetwork& net, int n_points) {
    if (n_points < 2) throw std::invalid_argument("extract_policy: n_points must be >= 2");
    std::vector<std::pair<double, int>> out;
    out.reserve(static_cast<size_t>(n_points));
    GradientTape tape;
    Vec s(1);
    for (int i = 0; i < n_points; ++i) {
        s[0] = -1.0 + 2.0 * i / (n_points - 1);
        forward_into(net, 0.0, s, {}, tape);
        out.emplace_back(s[0], greedy_action(tape.q));
    }
    return out;
}

/// Stationary ground-truth tables for a run's environment settings.
struct OracleBundle {
    GridMdp grid;
    QTable q_star;
    VTable v_star;
};

inline OracleBundle make_oracle(const RunConfig& config, int n_states = kOracleStates,
                                double tol = kOracleTol) {
    auto [model, actions] =
        make_stabilization_env(config.env.sigma, config.env.action_cost, config.env.dt);
    model.discount_rate = config.train.gamma;
    model.horizon = config.env.max_t * config.env.dt;
    OracleBundle b;
    b.grid = build_grid_mdp(model, actions, n_states, config.env.dt, 11,
                            parse_target_mode(config.train.target_mode));
    SolveResult sol = solve_q_star(b.grid, tol, SolveMode::stationary);
    b.q_star = std::move(sol.q);
    b.v_star = std::move(sol.v);
    return b;
}

struct RunArtifacts {
    TrainLog log;
    QNetwork net;
    std::filesystem::path out_dir;
};

inline void write_episodes_csv(const std::filesystem::path& path, const TrainLog& log) {
    std::ofstream out = open_output(path);
    out << "episode,total_reward,smoothed_reward,mean_loss,epsilon\n";
    Vec rewards;
    rewards.reserve(log.episodes.size());
    for (const EpisodeRecord& r : log.episodes) rewards.push_back(r.total_reward);
    const Vec smoothed = smooth_rewards(rewards, kSmoothingWindow);
    for (size_t i = 0; i < log.episodes.size(); ++i) {
        const EpisodeRecord& r = log.episodes[i];
        out << r.episode << ',' << format_double(r.total_reward) << ',' << format_double(smoothed[i])
            << ',' << format_double(r.mean_loss) << ',' << format_double(r.epsilon) << '\n';
    }
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

inline void write_policy_csv(const std::filesystem::path& path, const QNetwork& net,
                             int n_points = kPolicyGridPoints) {
    std::ofstream out = open_output(path);
    out << "s,action\n";
    for (const auto& [s, a] : extract_policy(net, n_points))
        out << format_double(s) << ',' << a << '\n';
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

inline void write_checkpoints_csv(const std::filesystem::path& path, const TrainLog& log) {
    std::ofstream out = open_output(path);
    out << "step,sup_error_vs_oracle\n";
    for (const CheckpointRecord& c : log.checkpoints) {
        out << c.step << ',';
        if (c.has_sup_error) out << format_double(c.sup_error_vs_oracle);
        out << '\n';
    }
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

/// Executes one configuration and writes its artifacts under out_dir:
/// episodes.csv, policy.csv, config.json, checkpoints.csv and
/// checkpoints/step_<k>.params (including the final state). When
/// with_oracle is set, each checkpoint records its sup error against the
/// stationary ground truth on states inside the unit radius.
inline RunArtifacts run_config(const RunConfig& config, const std::filesystem::path& out_dir,
                               bool with_oracle = true) {
    validate(config);
    std::error_code ec;
    std::filesystem::create_directories(out_dir / "checkpoints", ec);
    if (ec)
        throw std::runtime_error("cannot create output directory " + (out_dir / "checkpoints").string() +
                                 ": " + ec.message());
    std::optional<OracleBundle> oracle;
    if (with_oracle) oracle.emplace(make_oracle(config));
    const CheckpointHook hook = [&](long step, const QNetwork& net) -> std::optional<double> {
        save_checkpoint(out_dir / "checkpoints" / ("step_" + std::to_string(step) + ".params"),
                        net);
        if (!oracle) return std::nullopt;
        return sup_error(net, oracle->grid, oracle->q_star, kSupErrorRadius);
    };
    TrainResult res = train_run(config, config.seed, hook);
    {
        std::ofstream out = open_output(out_dir / "config.json");
        out << nlohmann::json(config).dump(2) << '\n';
        if (!out) throw std::runtime_error("failed writing " + (out_dir / "config.json").string());
    }
    write_episodes_csv(out_dir / "episodes.csv", res.log);
    write_policy_csv(out_dir / "policy.csv", res.net);
    write_checkpoints_csv(out_dir / "checkpoints.csv", res.log);
    return {std::move(res.log), std::move(res.net), out_dir};
}

struct ComparisonEntry {
    std::string name;
    bool completed = false;
    std::string error;  // set when the run failed to execute
    TrainLog log;
    std::vector<std::pair<double, int>> policy;
};

struct ComparisonReport {
    std::vector<ComparisonEntry> entries;
};

/// Runs each named configuration at its built-in seed and writes
/// comparison.csv (config,episode,smoothed_reward,mean_loss) plus per-config
/// artifact directories. Failures are recorded per entry; the report and CSV
/// still cover every completed run.
inline ComparisonReport compare_configs(const std::vector<std::string>& names,
                                        const std::filesystem::path& out_dir,
                                        bool with_oracle = true) {
    if (names.empty()) throw std::invalid_argument("compare_configs: no configuration names");
    std::vector<RunConfig> configs;
    configs.reserve(names.size());
    for (const std::string& n : names) configs.push_back(builtin_config(n));
    for (size_t i = 0; i < configs.size(); ++i)
        for (size_t j = i + 1; j < configs.size(); ++j)
            if (configs[i].name == configs[j].name)
                throw std::invalid_argument("compare_configs: duplicate configuration '" +
                                            configs[i].name + "'");
    ComparisonReport report;
    for (const RunConfig& config : configs) {
        ComparisonEntry entry;
        entry.name = config.name;
        try {
            RunArtifacts art = run_config(config, out_dir / config.name, with_oracle);
            entry.completed = true;
            entry.log = std::move(art.log);
            entry.policy = extract_policy(art.net, kPolicyGridPoints);
        } catch (const std::exception& ex) {
            entry.error = ex.what();
        }
        report.entries.push_back(std::move(entry));
    }
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    std::ofstream out = open_output(out_dir / "comparison.csv");
    out << "config,episode,smoothed_reward,mean_loss\n";
    for (const ComparisonEntry& entry : report.entries) {
        if (!entry.completed) continue;
        Vec rewards;
        rewards.reserve(entry.log.episodes.size());
        for (const EpisodeRecord& r : entry.log.episodes) rewards.push_back(r.total_reward);
        const Vec smoothed = smooth_rewards(rewards, kSmoothingWindow);
        for (size_t i = 0; i < entry.log.episodes.size(); ++i)
            out << entry.name << ',' << entry.log.episodes[i].episode << ','
                << format_double(smoothed[i]) << ','
                << format_double(entry.log.episodes[i].mean_loss) << '\n';
    }
    if (!out) throw std::runtime_error("failed writing " + (out_dir / "comparison.csv").string());
    return report;
}

}  // namespace ctdqn
