#pragma once

#include <bit>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctdqn/config.hpp"
#include "ctdqn/resnet.hpp"

namespace ctdqn {

/// Shortest decimal string that round-trips the exact double.
inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc())
        throw std::invalid_argument("parse_double: malformed number '" + s + "'");
    return v;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    return out;
}

inline std::string activation_name(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }
inline std::string qmode_name(QMode m) {
    return m == QMode::multi_head ? "multi_head" : "action_in";
}

inline nlohmann::json arch_to_json(const NetArch& a) {
    return {{"format", "float64-le"},
            {"state_dim", a.state_dim},
            {"mode", qmode_name(a.mode)},
            {"n_actions", a.n_actions},
            {"action_dim", a.action_dim},
            {"hidden_dim", a.hidden_dim},
            {"n_blocks", a.n_blocks},
            {"activation", activation_name(a.activation)},
            {"time_feature", a.time_feature},
            {"horizon", a.horizon},
            {"dt", a.dt},
            {"action_in_input", a.action_in_input},
            {"param_count", param_count(a)}};
}

inline NetArch arch_from_json(const nlohmann::json& j) {
    NetArch a;
    a.state_dim = j.at("state_dim").get<int>();
    a.mode = parse_qmode(j.at("mode").get<std::string>());
    a.n_actions = j.at("n_actions").get<int>();
    a.action_dim = j.at("action_dim").get<int>();
    a.hidden_dim = j.at("hidden_dim").get<int>();
    a.n_blocks = j.at("n_blocks").get<int>();
    a.activation = parse_activation(j.at("activation").get<std::string>());
    a.time_feature = j.at("time_feature").get<bool>();
    a.horizon = j.at("horizon").get<double>();
    a.dt = j.at("dt").get<double>();
    a.action_in_input = j.at("action_in_input").get<bool>();
    return a;
}

/// Parameter dump: one JSON architecture header line, then the flattened
/// parameter vector as little-endian float64, in the documented order.
inline void save_checkpoint(const std::filesystem::path& path, const QNetwork& net) {
    std::ofstream out = open_output(path);
    out << arch_to_json(net.arch).dump() << '\n';
    const Vec params = get_params(net);
    std::vector<unsigned char> bytes(params.size() * 8);
    for (size_t i = 0; i < params.size(); ++i) {
        const uint64_t u = std::bit_cast<uint64_t>(params[i]);
        for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<unsigned char>(u >> (8 * b));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("failed writing checkpoint: " + path.string());
}

inline QNetwork load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
    std::string header;
    if (!std::getline(in, header))
        throw std::runtime_error("checkpoint missing header line: " + path.string());
    const nlohmann::json j = nlohmann::json::parse(header);
    const NetArch arch = arch_from_json(j);
    QNetwork net = init_network(arch, 0);
    const size_t n = param_count(arch);
    if (j.contains("param_count") && j.at("param_count").get<size_t>() != n)
        throw std::runtime_error("checkpoint header param_count mismatch: " + path.string());
    std::vector<unsigned char> bytes(n * 8);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<size_t>(in.gcount()) != bytes.size())
        throw std::runtime_error("checkpoint truncated: " + path.string());
    Vec params(n, 0.0);
    for (size_t i = 0; i < n; ++i) {
        uint64_t u = 0;
        for (int b = 0; b < 8; ++b) u |= static_cast<uint64_t>(bytes[i * 8 + b]) << (8 * b);
        params[i] = std::bit_cast<double>(u);
    }
    set_params(net, params);
    return net;
}

}  // namespace ctdqn
