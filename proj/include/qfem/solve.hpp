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
#include <string>

#include "httplib.h"
#include "qfem/error.hpp"
#include "qfem/qubo.hpp"
#include "qfem/solver.hpp"

namespace qfem {

struct ParsedEndpoint {
    std::string scheme_host_port;  // "http://host:port"
    std::string path;              // "/..." (defaults to "/")
};

inline ParsedEndpoint parse_endpoint(const std::string& url) {
    const std::string prefix = "http://";
    if (url.rfind(prefix, 0) != 0) throw ConfigError("remote endpoint must be an http:// URL, got '" + url + "'");
    const auto slash = url.find('/', prefix.size());
    ParsedEndpoint out;
    out.scheme_host_port = url.substr(0, slash);
    out.path = slash == std::string::npos ? "/" : url.substr(slash);
    if (out.scheme_host_port.size() == prefix.size()) throw ConfigError("remote endpoint has no host: '" + url + "'");
    return out;
}

/// POSTs the text-serialised instance to the configured sampler and reads
/// back "energy multiplicity bitstring" lines.
inline SolveResult solve_remote(const QuboInstance& q, const SolveRequest& request) {
    const std::string url = request.remote.resolved_endpoint();
    if (url.empty())
        throw ConfigError(std::string("remote backend selected but no endpoint configured (set solver.remote_endpoint or ") +
                          kRemoteEndpointEnv + ")");
    const ParsedEndpoint ep = parse_endpoint(url);
    if (request.num_reads < 1) throw ConfigError("num_reads must be positive");

    const auto start = std::chrono::steady_clock::now();
    httplib::Client client(ep.scheme_host_port);
    const double timeout = request.remote.timeout_seconds;
    const auto sec = static_cast<time_t>(std::floor(timeout));
    const auto usec = static_cast<time_t>((timeout - std::floor(timeout)) * 1e6);
    client.set_connection_timeout(sec, usec);
    client.set_read_timeout(sec, usec);
    client.set_write_timeout(sec, usec);

    const std::string target = ep.path + (ep.path.find('?') == std::string::npos ? "?" : "&") +
                               "num_reads=" + std::to_string(request.num_reads);
    auto res = client.Post(target, qubo_to_text(q), "text/plain");
    if (!res) throw SolverError("remote sampler at " + url + " unreachable: " + httplib::to_string(res.error()));
    if (res->status != 200)
        throw SolverError("remote sampler at " + url + " answered HTTP " + std::to_string(res->status));
    SolveResult out = parse_remote_samples(q, res->body);
    out.wall_time = std::chrono::steady_clock::now() - start;
    return out;
}

/// Dispatches to the selected backend. best_energy always equals the local
/// objective of best_bits.
inline SolveResult solve(const QuboInstance& q, const SolveRequest& request) {
    const auto start = std::chrono::steady_clock::now();
    SolveResult out;
    switch (request.backend) {
        case Backend::exhaustive: out = solve_exhaustive(q); break;
        case Backend::annealer: out = solve_annealer(q, request.annealer, request.seed, request.threads); break;
        case Backend::remote: out = solve_remote(q, request); break;
        default: throw ConfigError("unknown solver backend");
    }
    for (auto& s : out.samples) s.energy = qubo_objective(q, s.bits);
    SolveResult checked = finalize_samples(std::move(out.samples), out.backend_used);
    checked.wall_time = std::chrono::steady_clock::now() - start;
    return checked;
}

}  // namespace qfem
