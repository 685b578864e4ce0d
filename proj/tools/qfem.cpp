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

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "qfem/cli.hpp"

namespace {

void add_overrides(CLI::App* cmd, qfem::cli::Overrides& ov, bool with_run_flags) {
    cmd->add_option("--seed", ov.seed, "RNG seed");
    cmd->add_option("--out", ov.out, "Output directory");
    if (!with_run_flags) return;
    cmd->add_option("--backend", ov.backend, "Solver backend: exhaustive | annealer | remote");
    cmd->add_option("--iterations", ov.iterations, "Iteration budget");
    cmd->add_option("--beta", ov.beta, "Step-size control");
    cmd->add_option("--mu", ov.mu, "Radius decay exponent");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Ray-acoustic shape optimisation with a per-iteration QUBO selection step"};
    app.require_subcommand(1);

    std::string config_path;
    qfem::cli::Overrides ov;
    std::string mesh_path;
    bool timing = false;

    auto* generate = app.add_subcommand("generate", "Write the initial sphere mesh");
    auto* evaluate = app.add_subcommand("evaluate", "Total loss and per-simplex shading of a mesh file");
    auto* optimize = app.add_subcommand("optimize", "Run the optimisation loop");
    for (auto* cmd : {generate, evaluate, optimize}) cmd->add_option("-c,--config", config_path, "JSON config file");
    add_overrides(generate, ov, false);
    add_overrides(evaluate, ov, false);
    add_overrides(optimize, ov, true);
    evaluate->add_option("--mesh", mesh_path, "Mesh file (.obj)")->required();
    optimize->add_flag("--timing", timing, "Record wall-clock times in history.csv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        qfem::ExperimentConfig cfg = config_path.empty() ? qfem::ExperimentConfig{} : qfem::load_config(config_path);
        cfg = qfem::cli::resolve(std::move(cfg), ov);
        if (*generate) {
            qfem::cli::cmd_generate(cfg, std::cout);
        } else if (*evaluate) {
            qfem::cli::cmd_evaluate(cfg, mesh_path, std::cout);
        } else {
            qfem::cli::cmd_optimize(cfg, std::cout, timing);
        }
    } catch (const qfem::Error& e) {
        std::cerr << "error[" << e.kind() << "]: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error[internal]: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
