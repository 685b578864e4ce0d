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

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "qfem/acoustics.hpp"
#include "qfem/error.hpp"
#include "qfem/mesh.hpp"
#include "qfem/qubo.hpp"
#include "qfem/random.hpp"
#include "qfem/solve.hpp"

namespace qfem {

/// comma: all K mutations random. plus: mutation 0 is the zero displacement,
/// so the current shape is always a candidate.
enum class SearchMode { comma, plus };

inline const char* to_string(SearchMode m) { return m == SearchMode::plus ? "plus" : "comma"; }

inline SearchMode parse_search_mode(const std::string& name) {
    if (name == "comma") return SearchMode::comma;
    if (name == "plus") return SearchMode::plus;
    throw ConfigError("unknown search mode '" + name + "' (expected comma or plus)");
}

struct OptimizerParams {
    std::size_t k = 3;
    double beta = 0.7;
    double mu = 0.18;
    std::size_t iterations = 30;
    SearchMode search_mode = SearchMode::comma;
    std::size_t rays_per_simplex = 50;
    std::uint64_t seed = 1;
    std::size_t solve_attempts = 3;  // solver calls per mutation set before falling back
    std::size_t converge_after = 3;  // consecutive zero-loss iterations that end the run
    std::size_t threads = 1;
    SolveRequest solver{};

    void validate() const {
        if (k < 1) throw ConfigError("K must be at least 1");
        if (search_mode == SearchMode::plus && k < 2) throw ConfigError("plus search needs K >= 2");
        if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be positive");
        if (!(mu > 0.0) || !std::isfinite(mu)) throw ConfigError("mu must be positive");
        if (iterations < 1) throw ConfigError("iterations must be at least 1");
        if (rays_per_simplex < 1) throw ConfigError("rays_per_simplex must be at least 1");
        if (solve_attempts < 1) throw ConfigError("solve_attempts must be at least 1");
        solver.annealer.validate();
    }
};

/// Source and receiver the shape is optimised against.
struct OptimizerContext {
    Monopole monopole{};
    Microphone microphone{};
    bool shadow_test = false;
};

inline AcousticSetup make_setup(const OptimizerParams& params, const OptimizerContext& ctx) {
    return {ctx.monopole, ctx.microphone, params.rays_per_simplex, ctx.shadow_test, params.threads};
}

/// A third of the shortest edge from the vertex to a one-ring neighbour.
inline double convexity_bound(const Mesh& mesh, std::size_t vertex,
                              const std::vector<std::vector<std::size_t>>& neighbors) {
    if (vertex >= mesh.num_vertices()) throw MeshError("vertex " + std::to_string(vertex) + " does not exist");
    if (neighbors[vertex].empty()) throw MeshError("vertex " + std::to_string(vertex) + " is isolated");
    double shortest = std::numeric_limits<double>::infinity();
    for (std::size_t w : neighbors[vertex]) shortest = std::min(shortest, norm(mesh.vertices[vertex] - mesh.vertices[w]));
    return shortest / 3.0;
}

inline double convexity_bound(const Mesh& mesh, std::size_t vertex) {
    return convexity_bound(mesh, vertex, vertex_neighbors(mesh));
}

inline std::vector<double> convexity_bounds(const Mesh& mesh) {
    const auto nb = vertex_neighbors(mesh);
    std::vector<double> out(mesh.num_vertices());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = convexity_bound(mesh, i, nb);
    return out;
}

/// beta * rho * t^-mu, t counted from 1.
inline double mutation_radius(std::size_t t, double beta, double mu, double rho) {
    if (t < 1) throw ConfigError("iteration index starts at 1");
    return beta * rho * std::pow(static_cast<double>(t), -mu);
}

/// K displacements per vertex: polar angle uniform in [0, pi], azimuth
/// uniform in [0, 2 pi), length uniform in [0, R_i).
inline MutationSet generate_mutations(const Mesh& mesh, std::size_t t, const OptimizerParams& params,
                                      std::uint64_t seed) {
    const auto rho = convexity_bounds(mesh);
    MutationSet out(mesh.num_vertices(), params.k);
    for (std::size_t i = 0; i < mesh.num_vertices(); ++i) {
        Rng rng(derive_seed(seed, {i}));
        const double radius = mutation_radius(t, params.beta, params.mu, rho[i]);
        for (std::size_t j = 0; j < params.k; ++j) {
            if (params.search_mode == SearchMode::plus && j == 0) continue;
            const double theta = std::numbers::pi * rng.uniform();
            const double phi = 2.0 * std::numbers::pi * rng.uniform();
            double r = radius * rng.uniform();
            if (r >= radius) r = std::nextafter(radius, 0.0);
            out.at(i, j) = r * Vec3{std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta)};
        }
    }
    return out;
}

struct IterationRecord {
    std::size_t t = 0;
    double loss_before = 0.0;
    double loss_after = 0.0;
    Configuration chosen;
    double solver_energy = 0.0;
    bool feasible = false;  // false when a fallback configuration was applied
    double alpha = 1.0;
    double lambda = 0.0;
    double wall_ms = 0.0;
    MutationSet mutations;
    PartialLossTable table;
};

struct RunHistory {
    std::vector<IterationRecord> records;
    Mesh final_mesh;
    double initial_loss = 0.0;
    bool converged = false;
    std::optional<std::string> error;       // set when an iteration failed
    std::optional<std::string> error_kind;
};

namespace detail {

inline std::uint64_t evaluation_seed(std::uint64_t run_seed) { return derive_seed(run_seed, {0xe7a1}); }

struct Selection {
    Configuration chosen;
    double energy = 0.0;
    bool feasible = false;
};

/// Lowest-energy feasible sample over up to `attempts` solver calls.
inline std::optional<Selection> select_configuration(const QuboInstance& q, const OptimizerParams& params,
                                                     std::size_t t, std::size_t reroll) {
    for (std::size_t attempt = 0; attempt < params.solve_attempts; ++attempt) {
        SolveRequest request = params.solver;
        request.seed = derive_seed(params.seed, {3, t, reroll, attempt});
        if (request.threads < params.threads) request.threads = params.threads;
        const SolveResult result = solve(q, request);
        for (const auto& s : result.samples)  // ascending energy
            if (auto c = try_decode_bitstring(s.bits, q.index_map())) return Selection{std::move(*c), s.energy, true};
    }
    return std::nullopt;
}

}  // namespace detail

/// Loss table, QUBO, solve and update for a given mutation set. Infeasible
/// solves fall back to the identity configuration (mutation 0 everywhere);
/// callers in comma mode re-roll instead, see run_iteration.
inline std::pair<Mesh, IterationRecord> iterate_with_mutations(const Mesh& mesh, std::size_t t,
                                                               MutationSet mutations, const OptimizerParams& params,
                                                               const OptimizerContext& ctx, std::size_t reroll = 0) {
    const AcousticSetup setup = make_setup(params, ctx);
    IterationRecord rec;
    rec.t = t;
    rec.loss_before = total_loss(mesh, setup, detail::evaluation_seed(params.seed));
    rec.table = build_partial_loss_table(mesh, mutations, setup, derive_seed(params.seed, {2, t, reroll}));
    const QuboInstance q = build_default_qubo(mesh, rec.table);
    rec.alpha = q.alpha;
    rec.lambda = q.lambda;

    if (auto sel = detail::select_configuration(q, params, t, reroll)) {
        rec.chosen = std::move(sel->chosen);
        rec.solver_energy = sel->energy;
        rec.feasible = true;
    } else {
        rec.chosen.assignment.assign(mesh.num_vertices(), 0);
        rec.solver_energy = feasible_objective(q, rec.chosen);
        rec.feasible = false;
    }
    Mesh next = apply_configuration(mesh, mutations, rec.chosen.assignment);
    rec.loss_after = total_loss(next, setup, detail::evaluation_seed(params.seed));
    rec.mutations = std::move(mutations);
    return {std::move(next), std::move(rec)};
}

/// One full step at iteration t (>= 1). Errors are rethrown as
/// IterationError carrying t.
inline std::pair<Mesh, IterationRecord> run_iteration(const Mesh& mesh, std::size_t t, const OptimizerParams& params,
                                                      const OptimizerContext& ctx) {
    const auto start = std::chrono::steady_clock::now();
    try {
        params.validate();
        if (mesh.edges.empty()) throw MeshError("mesh has no edge adjacency");
        // comma mode re-rolls the mutation set when no feasible sample appears
        const std::size_t rerolls = params.search_mode == SearchMode::comma ? params.solve_attempts : 1;
        std::pair<Mesh, IterationRecord> out;
        for (std::size_t reroll = 0; reroll < rerolls; ++reroll) {
            MutationSet m = generate_mutations(mesh, t, params, derive_seed(params.seed, {1, t, reroll}));
            out = iterate_with_mutations(mesh, t, std::move(m), params, ctx, reroll);
            if (out.second.feasible || params.search_mode == SearchMode::plus) break;
        }
        if (!out.second.feasible && params.search_mode == SearchMode::comma) {
            // nothing feasible after every re-roll: keep the shape
            out.first = mesh;
            out.second.loss_after = out.second.loss_before;
        }
        out.second.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        return out;
    } catch (const IterationError&) {
        throw;
    } catch (const Error& e) {
        throw IterationError(t, e.kind(), e.what());
    } catch (const std::exception& e) {
        throw IterationError(t, "error", e.what());
    }
}

using IterationCallback = std::function<void(const IterationRecord&, const Mesh&)>;

/// Iterates until the budget is spent or the loss stays zero for
/// `converge_after` consecutive iterations. A failing iteration ends the run
/// with the history so far and `error` set.
inline RunHistory optimize(const Mesh& initial, const OptimizerParams& params, const OptimizerContext& ctx,
                           const IterationCallback& on_iteration = {}) {
    params.validate();
    RunHistory history;
    history.final_mesh = initial;
    history.initial_loss = total_loss(initial, make_setup(params, ctx), detail::evaluation_seed(params.seed));
    std::size_t zero_streak = 0;
    for (std::size_t t = 1; t <= params.iterations; ++t) {
        try {
            auto [next, rec] = run_iteration(history.final_mesh, t, params, ctx);
            history.final_mesh = std::move(next);
            zero_streak = rec.loss_after == 0.0 ? zero_streak + 1 : 0;
            history.records.push_back(std::move(rec));
            if (on_iteration) on_iteration(history.records.back(), history.final_mesh);
        } catch (const Error& e) {
            history.error = e.what();
            history.error_kind = e.kind();
            return history;
        }
        if (zero_streak >= params.converge_after) {
            history.converged = true;
            break;
        }
    }
    return history;
}

/// Header t,loss_before,loss_after,solver_energy,feasible,wall_ms. Without
/// `with_timing` the wall_ms column is written as 0 so reruns are
/// byte-identical.
inline void write_history_csv(const RunHistory& history, std::ostream& os, bool with_timing = false) {
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    os << "t,loss_before,loss_after,solver_energy,feasible,wall_ms\n";
    for (const auto& r : history.records)
        os << r.t << ',' << r.loss_before << ',' << r.loss_after << ',' << r.solver_energy << ','
           << (r.feasible ? 1 : 0) << ',' << (with_timing ? r.wall_ms : 0.0) << '\n';
}

}  // namespace qfem
