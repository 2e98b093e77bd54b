#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "ctdqn/resnet.hpp"
#include "ctdqn/sde.hpp"

namespace ctdqn {

/// Environment parameters of a run. Defaults are the baseline experiment.
struct EnvConfig {
    double sigma = 0.1;
    double action_cost = 0.01;
    double dt = 0.1;
    int max_t = 200;  // steps per episode
};

struct NetConfig {
    int hidden_dim = 64;
    int n_blocks = 2;
    std::string activation = "relu";    // relu | tanh
    std::string mode = "multi_head";    // multi_head | action_in
    bool time_feature = false;
};

struct LrConfig {
    std::string kind = "constant";  // constant | robbins_monro
    double alpha0 = 5e-4;
    double exponent = 1.0;  // robbins_monro decay power, in (0.5, 1]
};

struct TrainConfig {
    LrConfig lr_schedule;
    double gamma = 0.99;
    int buffer_size = 10000;
    int batch_size = 64;
    int target_update = 100;  // environment steps between hard target syncs
    double eps_start = 1.0;
    double eps_end = 0.01;
    double eps_decay_factor = 0.99;
    int n_episodes = 300;
    std::string target_mode = "discrete_gamma";  // discrete_gamma | continuous_exp
    bool bootstrap_on_truncation = true;
    std::string optimizer_mode = "sgd";  // sgd | adam
    long checkpoint_every = 5000;        // environment steps between checkpoints
};

struct RunConfig {
    std::string name = "Baseline";
    EnvConfig env;
    NetConfig net;
    TrainConfig train;
    uint64_t seed = 42;
};

inline Activation parse_activation(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh_fn;
    throw std::invalid_argument("unknown activation '" + s + "' (expected relu | tanh)");
}

inline QMode parse_qmode(const std::string& s) {
    if (s == "multi_head") return QMode::multi_head;
    if (s == "action_in") return QMode::action_in;
    throw std::invalid_argument("unknown network mode '" + s + "' (expected multi_head | action_in)");
}

inline TargetMode parse_target_mode(const std::string& s) {
    if (s == "discrete_gamma") return TargetMode::discrete_gamma;
    if (s == "continuous_exp") return TargetMode::continuous_exp;
    throw std::invalid_argument("unknown target mode '" + s +
                                "' (expected discrete_gamma | continuous_exp)");
}

inline void validate(const RunConfig& c) {
    if (c.env.sigma < 0.0) throw std::invalid_argument("config: env.sigma must be >= 0");
    if (!(c.env.dt > 0.0)) throw std::invalid_argument("config: env.dt must be positive");
    if (c.env.max_t < 1) throw std::invalid_argument("config: env.max_t must be >= 1");
    if (c.net.hidden_dim < 1) throw std::invalid_argument("config: net.hidden_dim must be >= 1");
    if (c.net.n_blocks < 0) throw std::invalid_argument("config: net.n_blocks must be >= 0");
    parse_activation(c.net.activation);
    parse_qmode(c.net.mode);
    parse_target_mode(c.train.target_mode);
    if (!(c.train.gamma > 0.0 && c.train.gamma < 1.0))
        throw std::invalid_argument("config: train.gamma must lie in (0,1)");
    if (c.train.buffer_size < 1) throw std::invalid_argument("config: buffer_size must be >= 1");
    if (c.train.batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
    if (c.train.target_update < 1) throw std::invalid_argument("config: target_update must be >= 1");
    if (c.train.n_episodes < 0) throw std::invalid_argument("config: n_episodes must be >= 0");
    if (!(c.train.eps_start >= 0.0 && c.train.eps_start <= 1.0))
        throw std::invalid_argument("config: eps_start must lie in [0,1]");
    if (!(c.train.eps_end >= 0.0 && c.train.eps_end <= 1.0))
        throw std::invalid_argument("config: eps_end must lie in [0,1]");
    if (!(c.train.eps_decay_factor > 0.0 && c.train.eps_decay_factor <= 1.0))
        throw std::invalid_argument("config: eps_decay_factor must lie in (0,1]");
    if (!(c.train.lr_schedule.alpha0 > 0.0))
        throw std::invalid_argument("config: lr_schedule.alpha0 must be positive");
    if (c.train.lr_schedule.kind == "robbins_monro") {
        const double p = c.train.lr_schedule.exponent;
        if (!(p > 0.5 && p <= 1.0))
            throw std::invalid_argument("config: robbins_monro exponent must lie in (0.5, 1]");
    } else if (c.train.lr_schedule.kind != "constant") {
        throw std::invalid_argument("config: unknown lr_schedule.kind '" + c.train.lr_schedule.kind +
                                    "'");
    }
    if (c.train.optimizer_mode != "sgd" && c.train.optimizer_mode != "adam")
        throw std::invalid_argument("config: optimizer_mode must be sgd | adam");
    if (c.train.checkpoint_every < 0)
        throw std::invalid_argument("config: checkpoint_every must be >= 0");
}

inline void to_json(nlohmann::json& j, const LrConfig& c) {
    j = {{"kind", c.kind}, {"alpha0", c.alpha0}, {"exponent", c.exponent}};
}
inline void from_json(const nlohmann::json& j, LrConfig& c) {
    c.kind = j.value("kind", c.kind);
    c.alpha0 = j.value("alpha0", c.alpha0);
    c.exponent = j.value("exponent", c.exponent);
}

inline void to_json(nlohmann::json& j, const EnvConfig& c) {
    j = {{"sigma", c.sigma}, {"action_cost", c.action_cost}, {"dt", c.dt}, {"max_t", c.max_t}};
}
inline void from_json(const nlohmann::json& j, EnvConfig& c) {
    c.sigma = j.value("sigma", c.sigma);
    c.action_cost = j.value("action_cost", c.action_cost);
    c.dt = j.value("dt", c.dt);
    c.max_t = j.value("max_t", c.max_t);
}

inline void to_json(nlohmann::json& j, const NetConfig& c) {
    j = {{"hidden_dim", c.hidden_dim},
         {"n_blocks", c.n_blocks},
         {"activation", c.activation},
         {"mode", c.mode},
         {"time_feature", c.time_feature}};
}
inline void from_json(const nlohmann::json& j, NetConfig& c) {
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.n_blocks = j.value("n_blocks", c.n_blocks);
    c.activation = j.value("activation", c.activation);
    c.mode = j.value("mode", c.mode);
    c.time_feature = j.value("time_feature", c.time_feature);
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"lr_schedule", c.lr_schedule},
         {"gamma", c.gamma},
         {"buffer_size", c.buffer_size},
         {"batch_size", c.batch_size},
         {"target_update", c.target_update},
         {"eps_start", c.eps_start},
         {"eps_end", c.eps_end},
         {"eps_decay_factor", c.eps_decay_factor},
         {"n_episodes", c.n_episodes},
         {"target_mode", c.target_mode},
         {"bootstrap_on_truncation", c.bootstrap_on_truncation},
         {"optimizer_mode", c.optimizer_mode},
         {"checkpoint_every", c.checkpoint_every}};
}
inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    if (j.contains("lr_schedule")) j.at("lr_schedule").get_to(c.lr_schedule);
    c.gamma = j.value("gamma", c.gamma);
    c.buffer_size = j.value("buffer_size", c.buffer_size);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.target_update = j.value("target_update", c.target_update);
    c.eps_start = j.value("eps_start", c.eps_start);
    c.eps_end = j.value("eps_end", c.eps_end);
    c.eps_decay_factor = j.value("eps_decay_factor", c.eps_decay_factor);
    c.n_episodes = j.value("n_episodes", c.n_episodes);
    c.target_mode = j.value("target_mode", c.target_mode);
    c.bootstrap_on_truncation = j.value("bootstrap_on_truncation", c.bootstrap_on_truncation);
    c.optimizer_mode = j.value("optimizer_mode", c.optimizer_mode);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
}

inline void to_json(nlohmann::json& j, const RunConfig& c) {
    j = {{"name", c.name}, {"env", c.env}, {"net", c.net}, {"train", c.train}, {"seed", c.seed}};
}
inline void from_json(const nlohmann::json& j, RunConfig& c) {
    c.name = j.value("name", c.name);
    if (j.contains("env")) j.at("env").get_to(c.env);
    if (j.contains("net")) j.at("net").get_to(c.net);
    if (j.contains("train")) j.at("train").get_to(c.train);
    c.seed = j.value("seed", c.seed);
}

/// Network architecture implied by a run configuration (one Q head per
/// discrete action, block scale 1).
inline NetArch arch_from_config(const RunConfig& c, int n_actions) {
    NetArch arch;
    arch.state_dim = 1;
    arch.mode = parse_qmode(c.net.mode);
    arch.n_actions = n_actions;
    arch.action_dim = arch.mode == QMode::action_in ? 1 : 0;
    arch.hidden_dim = c.net.hidden_dim;
    arch.n_blocks = c.net.n_blocks;
    arch.activation = parse_activation(c.net.activation);
    arch.time_feature = c.net.time_feature;
    arch.horizon = c.env.max_t * c.env.dt;
    arch.dt = 1.0;
    return arch;
}

}  // namespace ctdqn
