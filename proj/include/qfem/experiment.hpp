// Copyright 2026 The qfem Authors.
//
//    Licensed under the Apache License, Version 2.0 (the "License");
//    you may not use this file except in compliance with the License.
//    You may obtain a copy of the License at
//
//        http://www.apache.org/licenses/LICENSE-2.0
//
//    Unless required by applicable law or agreed to in writing, software
//    distributed under the License is distributed on an "AS IS" BASIS,
//    WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
//    See the License for the specific language governing permissions and
//    limitations under the License.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>

#include "json.hpp"
#include "qfem/acoustics.hpp"
#include "qfem/error.hpp"
#include "qfem/optimizer.hpp"
#include "qfem/solver.hpp"

namespace qfem {

struct MeshSettings {
    std::size_t n_theta = 4;
    std::size_t n_phi = 12;
};

/// One experiment: initial lattice, source, receiver, optimiser and solver.
/// Defaults reproduce the monopole-at-(2.5, 0, 0) setup.
struct ExperimentConfig {
    MeshSettings mesh{};
    Monopole monopole{{2.5, 0.0, 0.0}};
    Microphone microphone{{2.0, 0.0, 0.0}, {0.0, 2.0, 0.0}, {0.0, 0.0, 1.15}};
    OptimizerParams optimizer{};
    bool shadow_test = false;
    std::string output_dir = "qfem_out";

    OptimizerContext context() const { return {monopole, microphone, shadow_test}; }
    AcousticSetup acoustic_setup() const { return make_setup(optimizer, context()); }

    void validate() const {
        if (mesh.n_theta < 3 || mesh.n_phi < 3)
            throw ConfigError("mesh lattice needs n_theta >= 3 and n_phi >= 3");
        if (!is_finite(monopole.position)) throw ConfigError("monopole position must be finite");
        try {
            microphone.validate();
        } catch (const Error& e) {
            throw ConfigError(e.what());
        }
        optimizer.validate();
        if (optimizer.solver.num_reads < 1) throw ConfigError("solver.num_reads must be positive");
        if (!(optimizer.solver.remote.timeout_seconds > 0.0)) throw ConfigError("solver.timeout_s must be positive");
        if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
    }
};

namespace detail {

using nlohmann::json;

inline Vec3 vec3_from_json(const json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 3) throw ConfigError(where + " must be an array of 3 numbers");
    for (const auto& x : j)
        if (!x.is_number()) throw ConfigError(where + " must be an array of 3 numbers");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline json vec3_to_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

inline void reject_unknown(const json& j, const std::string& where, std::initializer_list<const char*> known) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    const std::set<std::string> names(known.begin(), known.end());
    for (const auto& [key, value] : j.items())
        if (!names.count(key)) throw ConfigError("unknown config field '" + (where.empty() ? key : where + "." + key) + "'");
}

template <class T>
void read_field(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key) || j.at(key).is_null()) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config field '" + where + "." + key + "' has the wrong type");
    }
}

template <class T>
void read_optional(const json& j, const char* key, std::optional<T>& out, const std::string& where) {
    if (!j.contains(key) || j.at(key).is_null()) return;
    T value{};
    read_field(j, key, value, where);
    out = value;
}

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    using detail::read_field;
    ExperimentConfig cfg;
    detail::reject_unknown(j, "", {"mesh", "monopole", "microphone", "optimizer", "solver", "output_dir", "shadow_test"});
    if (j.contains("mesh")) {
        const auto& m = j.at("mesh");
        detail::reject_unknown(m, "mesh", {"n_theta", "n_phi"});
        read_field(m, "n_theta", cfg.mesh.n_theta, "mesh");
        read_field(m, "n_phi", cfg.mesh.n_phi, "mesh");
    }
    if (j.contains("monopole")) cfg.monopole.position = detail::vec3_from_json(j.at("monopole"), "monopole");
    if (j.contains("microphone")) {
        const auto& m = j.at("microphone");
        detail::reject_unknown(m, "microphone", {"center", "half_axis_u", "half_axis_v"});
        if (m.contains("center")) cfg.microphone.center = detail::vec3_from_json(m.at("center"), "microphone.center");
        if (m.contains("half_axis_u"))
            cfg.microphone.half_axis_u = detail::vec3_from_json(m.at("half_axis_u"), "microphone.half_axis_u");
        if (m.contains("half_axis_v"))
            cfg.microphone.half_axis_v = detail::vec3_from_json(m.at("half_axis_v"), "microphone.half_axis_v");
    }
    auto& opt = cfg.optimizer;
    if (j.contains("optimizer")) {
        const auto& o = j.at("optimizer");
        detail::reject_unknown(o, "optimizer",
                               {"K", "beta", "mu", "iterations", "search_mode", "rays_per_simplex", "seed",
                                "solve_attempts", "converge_after", "threads"});
        read_field(o, "K", opt.k, "optimizer");
        read_field(o, "beta", opt.beta, "optimizer");
        read_field(o, "mu", opt.mu, "optimizer");
        read_field(o, "iterations", opt.iterations, "optimizer");
        std::string mode = to_string(opt.search_mode);
        read_field(o, "search_mode", mode, "optimizer");
        opt.search_mode = parse_search_mode(mode);
        read_field(o, "rays_per_simplex", opt.rays_per_simplex, "optimizer");
        read_field(o, "seed", opt.seed, "optimizer");
        read_field(o, "solve_attempts", opt.solve_attempts, "optimizer");
        read_field(o, "converge_after", opt.converge_after, "optimizer");
        read_field(o, "threads", opt.threads, "optimizer");
    }
    auto& sol = opt.solver;
    if (j.contains("solver")) {
        const auto& s = j.at("solver");
        detail::reject_unknown(s, "solver",
                               {"backend", "num_reads", "sweeps", "restarts", "initial_temperature",
                                "final_temperature", "remote_endpoint", "timeout_s"});
        std::string backend = to_string(sol.backend);
        read_field(s, "backend", backend, "solver");
        sol.backend = parse_backend(backend);
        read_field(s, "num_reads", sol.num_reads, "solver");
        read_field(s, "sweeps", sol.annealer.sweeps, "solver");
        read_field(s, "restarts", sol.annealer.restarts, "solver");
        detail::read_optional(s, "initial_temperature", sol.annealer.initial_temperature, "solver");
        detail::read_optional(s, "final_temperature", sol.annealer.final_temperature, "solver");
        read_field(s, "remote_endpoint", sol.remote.endpoint, "solver");
        read_field(s, "timeout_s", sol.remote.timeout_seconds, "solver");
    }
    read_field(j, "output_dir", cfg.output_dir, "");
    read_field(j, "shadow_test", cfg.shadow_test, "");
    return cfg;
}

/// Every field, defaults included.
inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    using nlohmann::json;
    const auto& opt = cfg.optimizer;
    const auto& sol = opt.solver;
    json j;
    j["mesh"] = {{"n_theta", cfg.mesh.n_theta}, {"n_phi", cfg.mesh.n_phi}};
    j["monopole"] = detail::vec3_to_json(cfg.monopole.position);
    j["microphone"] = {{"center", detail::vec3_to_json(cfg.microphone.center)},
                       {"half_axis_u", detail::vec3_to_json(cfg.microphone.half_axis_u)},
                       {"half_axis_v", detail::vec3_to_json(cfg.microphone.half_axis_v)}};
    j["optimizer"] = {{"K", opt.k},
                      {"beta", opt.beta},
                      {"mu", opt.mu},
                      {"iterations", opt.iterations},
                      {"search_mode", to_string(opt.search_mode)},
                      {"rays_per_simplex", opt.rays_per_simplex},
                      {"seed", opt.seed},
                      {"solve_attempts", opt.solve_attempts},
                      {"converge_after", opt.converge_after},
                      {"threads", opt.threads}};
    j["solver"] = {{"backend", to_string(sol.backend)},
                   {"num_reads", sol.num_reads},
                   {"sweeps", sol.annealer.sweeps},
                   {"restarts", sol.annealer.restarts},
                   {"initial_temperature", sol.annealer.initial_temperature ? json(*sol.annealer.initial_temperature) : json()},
                   {"final_temperature", sol.annealer.final_temperature ? json(*sol.annealer.final_temperature) : json()},
                   {"remote_endpoint", sol.remote.endpoint},
                   {"timeout_s", sol.remote.timeout_seconds}};
    j["output_dir"] = cfg.output_dir;
    j["shadow_test"] = cfg.shadow_test;
    return j;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

}  // namespace qfem
