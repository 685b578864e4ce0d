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

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "qfem/error.hpp"
#include "qfem/qubo.hpp"
#include "qfem/random.hpp"

namespace qfem {

enum class Backend { exhaustive, annealer, remote };

inline const char* to_string(Backend b) {
    switch (b) {
        case Backend::exhaustive: return "exhaustive";
        case Backend::annealer: return "annealer";
        case Backend::remote: return "remote";
    }
    return "unknown";
}

inline Backend parse_backend(const std::string& name) {
    if (name == "exhaustive") return Backend::exhaustive;
    if (name == "annealer") return Backend::annealer;
    if (name == "remote") return Backend::remote;
    throw ConfigError("unknown solver backend '" + name + "'");
}

/// Unset temperatures default to (max|Q|, 1e-3 max|Q|).
struct AnnealerParams {
    std::size_t sweeps = 200;
    std::size_t restarts = 20;
    std::optional<double> initial_temperature;
    std::optional<double> final_temperature;

    void validate() const {
        if (sweeps < 1) throw ConfigError("annealer needs sweeps >= 1");
        if (restarts < 1) throw ConfigError("annealer needs restarts >= 1");
        if (initial_temperature && !(*initial_temperature > 0.0))
            throw ConfigError("initial temperature must be positive");
        if (final_temperature && !(*final_temperature > 0.0)) throw ConfigError("final temperature must be positive");
        if (initial_temperature && final_temperature && *initial_temperature < *final_temperature)
            throw ConfigError("initial temperature must not be below the final temperature");
    }
};

inline constexpr const char* kRemoteEndpointEnv = "QFEM_REMOTE_ENDPOINT";

struct RemoteParams {
    std::string endpoint;  // http://host:port/path
    double timeout_seconds = 30.0;

    /// The environment variable, when set and non-empty, wins over `endpoint`.
    std::string resolved_endpoint() const {
        if (const char* env = std::getenv(kRemoteEndpointEnv); env && *env) return env;
        return endpoint;
    }
};

/// Everything about a solve except the instance itself.
struct SolveRequest {
    Backend backend = Backend::annealer;
    std::size_t num_reads = 20;  // forwarded to the remote sampler
    AnnealerParams annealer{};
    RemoteParams remote{};
    std::uint64_t seed = 0;
    std::size_t threads = 1;
};

struct Sample {
    Bits bits;
    double energy = 0.0;
    std::size_t multiplicity = 1;
};

struct SolveResult {
    Bits best_bits;
    double best_energy = 0.0;
    std::vector<Sample> samples;  // ascending energy, ties by bits_less
    Backend backend_used = Backend::annealer;
    std::chrono::nanoseconds wall_time{0};
};

/// Tie-break order on equal-length bit vectors: compares them as integers
/// with bit i weighted 2^i, i.e. the enumeration order of the exhaustive
/// solver.
inline bool bits_less(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
    for (std::size_t i = a.size(); i-- > 0;)
        if (a[i] != b[i]) return a[i] < b[i];
    return false;
}

inline bool sample_less(const Sample& a, const Sample& b) {
    if (a.energy != b.energy) return a.energy < b.energy;
    return bits_less(a.bits, b.bits);
}

/// Groups identical bit vectors, sorts, and fills best_* from the front.
inline SolveResult finalize_samples(std::vector<Sample> raw, Backend backend) {
    std::sort(raw.begin(), raw.end(), [](const Sample& a, const Sample& b) { return bits_less(a.bits, b.bits); });
    std::vector<Sample> merged;
    for (auto& s : raw) {
        if (!merged.empty() && merged.back().bits == s.bits)
            merged.back().multiplicity += s.multiplicity;
        else
            merged.push_back(std::move(s));
    }
    std::sort(merged.begin(), merged.end(), sample_less);
    SolveResult out;
    out.backend_used = backend;
    if (!merged.empty()) {
        out.best_bits = merged.front().bits;
        out.best_energy = merged.front().energy;
    }
    out.samples = std::move(merged);
    return out;
}

/// QUBO in adjacency form with an assignment and O(degree) flip updates.
class IncrementalQubo {
public:
    explicit IncrementalQubo(const QuboInstance& q) : n_(q.size()), diag_(n_, 0.0), offsets_(n_ + 1, 0) {
        std::vector<std::size_t> degree(n_, 0);
        for (const auto& [key, v] : q.entries())
            if (key.first != key.second) ++degree[key.first], ++degree[key.second];
        for (std::size_t i = 0; i < n_; ++i) offsets_[i + 1] = offsets_[i] + degree[i];
        nbr_.resize(offsets_[n_]);
        weight_.resize(offsets_[n_]);
        std::vector<std::size_t> fill(offsets_.begin(), offsets_.end() - 1);
        for (const auto& [key, v] : q.entries()) {
            const auto [r, c] = key;
            if (r == c) {
                diag_[r] += v;
                continue;
            }
            nbr_[fill[r]] = c, weight_[fill[r]++] = v;
            nbr_[fill[c]] = r, weight_[fill[c]++] = v;
        }
        assign(Bits(n_, 0));
    }

    std::size_t size() const { return n_; }
    const Bits& bits() const { return x_; }
    double energy() const { return energy_; }

    void assign(Bits x) {
        x_ = std::move(x);
        field_.assign(n_, 0.0);
        energy_ = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
            if (!x_[i]) continue;
            energy_ += diag_[i];
            for (std::size_t e = offsets_[i]; e < offsets_[i + 1]; ++e) {
                field_[nbr_[e]] += weight_[e];
                if (nbr_[e] < i && x_[nbr_[e]]) energy_ += weight_[e];
            }
        }
    }

    /// Energy change if bit b were flipped.
    double delta(std::size_t b) const {
        const double local = diag_[b] + field_[b];
        return x_[b] ? -local : local;
    }

    void flip(std::size_t b) {
        energy_ += delta(b);
        x_[b] ^= 1;
        const double sign = x_[b] ? 1.0 : -1.0;
        for (std::size_t e = offsets_[b]; e < offsets_[b + 1]; ++e) field_[nbr_[e]] += sign * weight_[e];
    }

private:
    std::size_t n_;
    std::vector<double> diag_;
    std::vector<std::size_t> offsets_;
    std::vector<std::size_t> nbr_;
    std::vector<double> weight_;
    Bits x_;
    std::vector<double> field_;  // sum of couplings to currently set bits
    double energy_ = 0.0;
};

inline constexpr std::size_t kExhaustiveMaxVariables = 26;

/// Global minimum by Gray-code enumeration of all 2^n vectors; ties go to
/// the smallest vector under bits_less.
inline SolveResult solve_exhaustive(const QuboInstance& q) {
    const std::size_t n = q.size();
    if (n > kExhaustiveMaxVariables)
        throw SolverError("exhaustive search is capped at " + std::to_string(kExhaustiveMaxVariables) +
                          " variables, instance has " + std::to_string(n));
    const auto start = std::chrono::steady_clock::now();
    double scale = 1.0;
    for (const auto& [key, v] : q.entries()) scale += std::abs(v);
    const double tol = 1e-12 * scale;

    auto bits_of = [n](std::uint64_t code) {
        Bits x(n, 0);
        for (std::size_t i = 0; i < n; ++i) x[i] = (code >> i) & 1U;
        return x;
    };

    IncrementalQubo state(q);
    std::uint64_t best_code = 0;
    double best_exact = 0.0;
    const std::uint64_t total = std::uint64_t{1} << n;
    for (std::uint64_t g = 1; g < total; ++g) {
        state.flip(static_cast<std::size_t>(std::countr_zero(g)));
        const std::uint64_t code = g ^ (g >> 1);
        if ((g & 0xFFFF) == 0) state.assign(bits_of(code));  // bound drift
        if (state.energy() > best_exact + tol) continue;
        const double exact = qubo_objective(q, state.bits());
        if (exact < best_exact - tol || (exact <= best_exact + tol && code < best_code)) {
            best_code = code;
            best_exact = exact;
        }
    }
    Sample best{bits_of(best_code), 0.0, 1};
    best.energy = qubo_objective(q, best.bits);
    SolveResult out = finalize_samples({std::move(best)}, Backend::exhaustive);
    out.wall_time = std::chrono::steady_clock::now() - start;
    return out;
}

/// Best state of one single-flip Metropolis chain over a geometric schedule.
inline Sample anneal_chain(const QuboInstance& q, const AnnealerParams& params, double t_hot, double t_cold,
                           std::uint64_t seed) {
    const std::size_t n = q.size();
    Rng rng(seed);
    IncrementalQubo state(q);
    Bits start(n);
    for (auto& b : start) b = static_cast<std::uint8_t>(rng() >> 63);
    state.assign(std::move(start));

    Bits best = state.bits();
    double best_energy = state.energy();
    const double ratio = t_cold / t_hot;
    for (std::size_t sweep = 0; sweep < params.sweeps; ++sweep) {
        const double frac =
            params.sweeps == 1 ? 1.0 : static_cast<double>(sweep) / static_cast<double>(params.sweeps - 1);
        const double temperature = t_hot * std::pow(ratio, frac);
        for (std::size_t b = 0; b < n; ++b) {
            const double d = state.delta(b);
            if (d <= 0.0 || rng.uniform() < std::exp(-d / temperature)) {
                state.flip(b);
                if (state.energy() < best_energy) {
                    best_energy = state.energy();
                    best = state.bits();
                }
            }
        }
    }
    Sample out{std::move(best), 0.0, 1};
    out.energy = qubo_objective(q, out.bits);
    return out;
}

/// Independent annealing chains (one derived seed per restart); the result
/// keeps every chain's best state as a sample.
inline SolveResult solve_annealer(const QuboInstance& q, const AnnealerParams& params, std::uint64_t seed,
                                  std::size_t threads = 1) {
    params.validate();
    const auto start = std::chrono::steady_clock::now();
    const double peak = q.max_abs_entry();
    double t_hot = params.initial_temperature.value_or(peak > 0.0 ? peak : 1.0);
    double t_cold = params.final_temperature.value_or(peak > 0.0 ? 1e-3 * peak : 1e-3);
    if (t_cold > t_hot) t_cold = t_hot;

    std::vector<Sample> chains(params.restarts);
    parallel_for(params.restarts, threads,
                 [&](std::size_t r) { chains[r] = anneal_chain(q, params, t_hot, t_cold, derive_seed(seed, {r})); });
    SolveResult out = finalize_samples(std::move(chains), Backend::annealer);
    out.wall_time = std::chrono::steady_clock::now() - start;
    return out;
}

/// Parses "energy multiplicity bitstring" lines. Energies are recomputed
/// locally; the stated ones are ignored.
inline SolveResult parse_remote_samples(const QuboInstance& q, const std::string& body) {
    std::istringstream in(body);
    std::string line;
    std::vector<Sample> samples;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ls(line);
        double stated = 0.0;
        long long mult = 0;
        std::string bitstring, extra;
        if (!(ls >> stated >> mult >> bitstring) || (ls >> extra))
            throw SolverError("malformed remote response on line " + std::to_string(lineno));
        if (mult < 1) throw SolverError("remote sample multiplicity must be positive (line " + std::to_string(lineno) + ")");
        if (bitstring.size() != q.size())
            throw SolverError("remote bitstring has length " + std::to_string(bitstring.size()) + ", expected " +
                              std::to_string(q.size()));
        Sample s;
        s.bits.resize(q.size());
        for (std::size_t i = 0; i < bitstring.size(); ++i) {
            if (bitstring[i] != '0' && bitstring[i] != '1')
                throw SolverError("remote bitstring holds a character other than 0/1 (line " + std::to_string(lineno) + ")");
            s.bits[i] = bitstring[i] == '1';
        }
        s.energy = qubo_objective(q, s.bits);
        s.multiplicity = static_cast<std::size_t>(mult);
        samples.push_back(std::move(s));
    }
    if (samples.empty()) throw SolverError("remote response holds no samples");
    return finalize_samples(std::move(samples), Backend::remote);
}

}  // namespace qfem
