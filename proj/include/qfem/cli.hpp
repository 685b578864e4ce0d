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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <string>

#include "json.hpp"
#include "qfem/acoustics.hpp"
#include "qfem/error.hpp"
#include "qfem/experiment.hpp"
#include "qfem/mesh.hpp"
#include "qfem/optimizer.hpp"

namespace qfem::cli {

/// Command-line flags that take precedence over the config file.
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> backend;
    std::optional<std::size_t> iterations;
    std::optional<double> beta;
    std::optional<double> mu;
    std::optional<std::string> out;
};

inline ExperimentConfig resolve(ExperimentConfig cfg, const Overrides& ov) {
    if (ov.seed) cfg.optimizer.seed = *ov.seed;
    if (ov.backend) cfg.optimizer.solver.backend = parse_backend(*ov.backend);
    if (ov.iterations) cfg.optimizer.iterations = *ov.iterations;
    if (ov.beta) cfg.optimizer.beta = *ov.beta;
    if (ov.mu) cfg.optimizer.mu = *ov.mu;
    if (ov.out) cfg.output_dir = *ov.out;
    cfg.validate();
    return cfg;
}

namespace detail {

inline std::filesystem::path prepare_output(const ExperimentConfig& cfg) {
    const std::filesystem::path dir(cfg.output_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
    return dir;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

inline Mesh initial_mesh(const ExperimentConfig& cfg) {
    Mesh mesh = generate_sphere_mesh(cfg.mesh.n_theta, cfg.mesh.n_phi);
    if (!outside_convex_mesh(mesh, cfg.monopole.position))
        throw ConfigError("monopole must lie outside the initial shape");
    return mesh;
}

}  // namespace detail

/// Writes initial.obj and resolved_config.json; prints counts and the Euler check.
inline Mesh cmd_generate(const ExperimentConfig& cfg, std::ostream& log) {
    cfg.validate();
    const Mesh mesh = detail::initial_mesh(cfg);
    const auto dir = detail::prepare_output(cfg);
    detail::write_json(dir / "resolved_config.json", config_to_json(cfg));
    export_mesh(mesh, (dir / "initial.obj").string());
    const long chi = mesh.euler_characteristic();
    log << "V=" << mesh.num_vertices() << " E=" << mesh.num_edges() << " S=" << mesh.num_simplices() << '\n';
    log << "euler V-E+S=" << chi << ' ' << (chi == 2 ? "PASS" : "FAIL") << '\n';
    log << "wrote " << (dir / "initial.obj").string() << '\n';
    return mesh;
}

/// Total loss of a mesh file plus the per-simplex shading CSV.
inline double cmd_evaluate(const ExperimentConfig& cfg, const std::string& mesh_path, std::ostream& log) {
    cfg.validate();
    const Mesh mesh = import_mesh(mesh_path, false);
    const auto dir = detail::prepare_output(cfg);
    detail::write_json(dir / "resolved_config.json", config_to_json(cfg));
    const AcousticSetup setup = cfg.acoustic_setup();
    const std::uint64_t seed = qfem::detail::evaluation_seed(cfg.optimizer.seed);
    const auto rows = shade_partial_loss(mesh, setup, seed);
    double total = 0.0;
    for (const auto& r : rows) total += r.loss;
    std::ofstream csv(dir / "shading.csv", std::ios::binary);
    if (!csv) throw IoError("cannot open '" + (dir / "shading.csv").string() + "' for writing");
    write_shading_csv(rows, csv);
    log << std::setprecision(17) << "total_loss=" << total << '\n';
    log << "wrote " << (dir / "shading.csv").string() << " (" << rows.size() << " simplices)\n";
    return total;
}

/// Full run: snapshots, history.csv, final.obj and summary.json. Throws
/// after writing the partial outputs if an iteration failed.
inline RunHistory cmd_optimize(const ExperimentConfig& cfg, std::ostream& log, bool with_timing = false) {
    cfg.validate();
    const Mesh mesh = detail::initial_mesh(cfg);
    const auto dir = detail::prepare_output(cfg);
    detail::write_json(dir / "resolved_config.json", config_to_json(cfg));
    export_mesh(mesh, (dir / "initial.obj").string());

    log << std::setprecision(6);
    RunHistory history = optimize(mesh, cfg.optimizer, cfg.context(), [&](const IterationRecord& rec, const Mesh& m) {
        export_mesh(m, (dir / ("iter_" + std::to_string(rec.t) + ".obj")).string());
        log << "t=" << rec.t << " loss " << rec.loss_before << " -> " << rec.loss_after
            << (rec.feasible ? "" : " (fallback)") << '\n';
    });

    {
        std::ofstream csv(dir / "history.csv", std::ios::binary);
        if (!csv) throw IoError("cannot open '" + (dir / "history.csv").string() + "' for writing");
        write_history_csv(history, csv, with_timing);
    }
    export_mesh(history.final_mesh, (dir / "final.obj").string());

    const double final_loss = history.records.empty() ? history.initial_loss : history.records.back().loss_after;
    nlohmann::json summary = {{"initial_loss", history.initial_loss},
                              {"final_loss", final_loss},
                              {"iterations_run", history.records.size()},
                              {"converged", history.converged},
                              {"seed", cfg.optimizer.seed},
                              {"backend", to_string(cfg.optimizer.solver.backend)}};
    if (history.error) summary["error"] = *history.error;
    detail::write_json(dir / "summary.json", summary);
    log << "initial_loss=" << history.initial_loss << " final_loss=" << final_loss
        << " iterations=" << history.records.size() << (history.converged ? " (converged)" : "") << '\n';

    if (history.error) throw TaggedError(history.error_kind.value_or("error"), *history.error);
    return history;
}

}  // namespace qfem::cli
