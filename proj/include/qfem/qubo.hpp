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
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "qfem/acoustics.hpp"
#include "qfem/error.hpp"
#include "qfem/mesh.hpp"

namespace qfem {

using Bits = std::vector<std::uint8_t>;

/// Bijection (vertex, mutation) <-> flat variable index, vertex-major.
struct IndexMap {
    std::size_t num_vertices = 0;
    std::size_t k = 1;

    std::size_t size() const { return num_vertices * k; }
    std::size_t flat(std::size_t vertex, std::size_t mutation) const { return vertex * k + mutation; }
    std::size_t vertex_of(std::size_t flat_index) const { return flat_index / k; }
    std::size_t mutation_of(std::size_t flat_index) const { return flat_index % k; }
    friend bool operator==(const IndexMap&, const IndexMap&) = default;
};

/// Upper-triangular QUBO matrix, minimised as x^T Q x over binary x.
class QuboInstance {
public:
    using Key = std::pair<std::size_t, std::size_t>;

    QuboInstance() = default;
    explicit QuboInstance(std::size_t size) : index_map_{size, 1} {}
    explicit QuboInstance(IndexMap map) : index_map_(map) {}

    std::size_t size() const { return index_map_.size(); }
    const IndexMap& index_map() const { return index_map_; }

    /// Adds v to entry (r, c); (c, r) folds onto the upper triangle.
    void add(std::size_t r, std::size_t c, double v) {
        if (r > c) std::swap(r, c);
        if (c >= size()) throw QuboError("entry (" + std::to_string(r) + "," + std::to_string(c) + ") out of range");
        if (!std::isfinite(v)) throw QuboError("non-finite QUBO entry");
        entries_[{r, c}] += v;
    }

    double at(std::size_t r, std::size_t c) const {
        if (r > c) std::swap(r, c);
        auto it = entries_.find({r, c});
        return it == entries_.end() ? 0.0 : it->second;
    }

    const std::map<Key, double>& entries() const { return entries_; }

    std::size_t nnz() const {
        return static_cast<std::size_t>(
            std::count_if(entries_.begin(), entries_.end(), [](const auto& e) { return e.second != 0.0; }));
    }

    double max_abs_entry() const {
        double m = 0.0;
        for (const auto& [key, v] : entries_) m = std::max(m, std::abs(v));
        return m;
    }

    double alpha = 1.0;
    double lambda = 0.0;

private:
    IndexMap index_map_{};
    std::map<Key, double> entries_;
};

/// Complete assignment of one mutation index (0-based) per vertex.
struct Configuration {
    std::vector<std::size_t> assignment;
    friend bool operator==(const Configuration&, const Configuration&) = default;
};

namespace detail {

/// Positions (within the simplex) of edge endpoints a, b and of the third vertex.
inline std::array<std::size_t, 3> edge_roles(const Simplex& s, std::size_t a, std::size_t b) {
    std::array<std::size_t, 3> roles{3, 3, 3};
    for (std::size_t p = 0; p < 3; ++p) {
        if (s.vertex_indices[p] == a)
            roles[0] = p;
        else if (s.vertex_indices[p] == b)
            roles[1] = p;
        else
            roles[2] = p;
    }
    if (roles[0] == 3 || roles[1] == 3 || roles[2] == 3) throw QuboError("edge is not part of its adjacent simplex");
    return roles;
}

inline void check_table(const Mesh& mesh, const PartialLossTable& table) {
    if (mesh.edges.empty()) throw QuboError("mesh has no edge adjacency");
    if (table.num_simplices != mesh.num_simplices())
        throw QuboError("loss table covers " + std::to_string(table.num_simplices) + " simplices, mesh has " +
                        std::to_string(mesh.num_simplices()));
    if (table.k < 1 || table.values.size() != table.num_simplices * table.k * table.k * table.k)
        throw QuboError("loss table is incomplete");
}

}  // namespace detail

/// Loss-derived entries only: for every edge (a, b) and mutation pair
/// (j1, j2), alpha times the table summed over both adjacent simplices and
/// every mutation of each simplex's third vertex. The diagonal stays empty.
inline QuboInstance build_loss_qubo(const Mesh& mesh, const PartialLossTable& table, double alpha) {
    detail::check_table(mesh, table);
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw QuboError("alpha must be positive and finite");
    const std::size_t k = table.k;
    QuboInstance q(IndexMap{mesh.num_vertices(), k});
    q.alpha = alpha;
    for (const auto& edge : mesh.edges) {
        const std::size_t a = edge.vertices[0], b = edge.vertices[1];
        for (std::size_t j1 = 0; j1 < k; ++j1)
            for (std::size_t j2 = 0; j2 < k; ++j2) {
                double sum = 0.0;
                for (std::size_t s : edge.simplices) {
                    const auto roles = detail::edge_roles(mesh.simplices[s], a, b);
                    std::array<std::size_t, 3> j{};
                    j[roles[0]] = j1;
                    j[roles[1]] = j2;
                    for (std::size_t third = 0; third < k; ++third) {
                        j[roles[2]] = third;
                        sum += table.at(s, j);
                    }
                }
                if (sum != 0.0) q.add(q.index_map().flat(a, j1), q.index_map().flat(b, j2), alpha * sum);
            }
    }
    return q;
}

/// Adds lambda * (sum_j x_ij - 1)^2 per vertex, dropping the constant:
/// -lambda on the diagonal, +2 lambda between mutations of one vertex.
inline void add_one_hot_penalty(QuboInstance& q, double lambda) {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw QuboError("lambda must be positive and finite");
    const auto& map = q.index_map();
    for (std::size_t i = 0; i < map.num_vertices; ++i)
        for (std::size_t j = 0; j < map.k; ++j) {
            q.add(map.flat(i, j), map.flat(i, j), -lambda);
            for (std::size_t j2 = j + 1; j2 < map.k; ++j2) q.add(map.flat(i, j), map.flat(i, j2), 2.0 * lambda);
        }
    q.lambda = lambda;
}

inline QuboInstance build_qubo(const Mesh& mesh, const PartialLossTable& table, double alpha, double lambda) {
    QuboInstance q = build_loss_qubo(mesh, table, alpha);
    add_one_hot_penalty(q, lambda);
    return q;
}

/// 1 + sum of |loss-derived entries|: no one-hot violation can be repaid by
/// loss, so every minimiser of the penalised instance is feasible.
inline double choose_penalty(const QuboInstance& loss_part) {
    double sum = 0.0;
    for (const auto& [key, v] : loss_part.entries()) sum += std::abs(v);
    return 1.0 + sum;
}

/// Scale that maps the largest loss-derived entry to 1 (1 for an all-zero table).
inline double default_alpha(const Mesh& mesh, const PartialLossTable& table) {
    const double peak = build_loss_qubo(mesh, table, 1.0).max_abs_entry();
    return peak > 0.0 ? 1.0 / peak : 1.0;
}

/// Instance with the default alpha and the certified penalty.
inline QuboInstance build_default_qubo(const Mesh& mesh, const PartialLossTable& table) {
    QuboInstance q = build_loss_qubo(mesh, table, default_alpha(mesh, table));
    add_one_hot_penalty(q, choose_penalty(q));
    return q;
}

/// x^T Q x with each stored (upper-triangular) entry counted once.
inline double qubo_objective(const QuboInstance& q, std::span<const std::uint8_t> x) {
    if (x.size() != q.size())
        throw QuboError("bit vector has length " + std::to_string(x.size()) + ", expected " + std::to_string(q.size()));
    double e = 0.0;
    for (const auto& [key, v] : q.entries())
        if (x[key.first] && x[key.second]) e += v;
    return e;
}

inline Bits encode_configuration(const Configuration& c, const IndexMap& map) {
    if (c.assignment.size() != map.num_vertices) throw QuboError("configuration does not cover every vertex");
    Bits x(map.size(), 0);
    for (std::size_t i = 0; i < c.assignment.size(); ++i) {
        if (c.assignment[i] >= map.k) throw QuboError("mutation index out of range for vertex " + std::to_string(i));
        x[map.flat(i, c.assignment[i])] = 1;
    }
    return x;
}

/// Objective of the one-hot encoding of c. The penalty contributes exactly
/// -lambda per vertex.
inline double feasible_objective(const QuboInstance& q, const Configuration& c) {
    return qubo_objective(q, encode_configuration(c, q.index_map()));
}

/// Vertices whose block is not exactly one-hot.
inline std::vector<std::size_t> one_hot_violations(std::span<const std::uint8_t> x, const IndexMap& map) {
    std::vector<std::size_t> bad;
    for (std::size_t i = 0; i < map.num_vertices; ++i) {
        std::size_t ones = 0;
        for (std::size_t j = 0; j < map.k; ++j) ones += x[map.flat(i, j)] ? 1 : 0;
        if (ones != 1) bad.push_back(i);
    }
    return bad;
}

inline std::optional<Configuration> try_decode_bitstring(std::span<const std::uint8_t> x, const IndexMap& map) {
    if (x.size() != map.size()) return std::nullopt;
    if (!one_hot_violations(x, map).empty()) return std::nullopt;
    Configuration c;
    c.assignment.resize(map.num_vertices);
    for (std::size_t f = 0; f < x.size(); ++f)
        if (x[f]) c.assignment[map.vertex_of(f)] = map.mutation_of(f);
    return c;
}

inline Configuration decode_bitstring(std::span<const std::uint8_t> x, const IndexMap& map) {
    if (x.size() != map.size())
        throw QuboError("bitstring has length " + std::to_string(x.size()) + ", expected " + std::to_string(map.size()));
    auto bad = one_hot_violations(x, map);
    if (!bad.empty()) {
        std::string what = "infeasible bitstring: vertex blocks not one-hot:";
        for (auto v : bad) what += " " + std::to_string(v);
        throw InfeasibleError(what, std::move(bad));
    }
    return *try_decode_bitstring(x, map);
}

/// sum_i h_i s_i + sum_{i<j} J_ij s_i s_j + offset over spins s in {-1, +1}.
struct IsingInstance {
    std::vector<double> h;
    std::map<std::pair<std::size_t, std::size_t>, double> couplings;
    double offset = 0.0;
};

/// Substitutes x = (s + 1) / 2.
inline IsingInstance qubo_to_ising(const QuboInstance& q) {
    IsingInstance out;
    out.h.assign(q.size(), 0.0);
    for (const auto& [key, v] : q.entries()) {
        const auto [r, c] = key;
        if (r == c) {
            out.h[r] += v / 2.0;
            out.offset += v / 2.0;
        } else {
            out.couplings[{r, c}] += v / 4.0;
            out.h[r] += v / 4.0;
            out.h[c] += v / 4.0;
            out.offset += v / 4.0;
        }
    }
    return out;
}

inline double ising_energy(const IsingInstance& ising, std::span<const std::int8_t> spins) {
    if (spins.size() != ising.h.size()) throw QuboError("spin vector length mismatch");
    double e = ising.offset;
    for (std::size_t i = 0; i < spins.size(); ++i) e += ising.h[i] * spins[i];
    for (const auto& [key, v] : ising.couplings) e += v * spins[key.first] * spins[key.second];
    return e;
}

inline std::vector<std::int8_t> spins_from_bits(std::span<const std::uint8_t> x) {
    std::vector<std::int8_t> s(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) s[i] = x[i] ? 1 : -1;
    return s;
}

/// Header "NK nnz" followed by "i j value" per non-zero entry, i <= j.
inline void write_qubo_text(const QuboInstance& q, std::ostream& os) {
    os << q.size() << ' ' << q.nnz() << '\n';
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& [key, v] : q.entries())
        if (v != 0.0) os << key.first << ' ' << key.second << ' ' << v << '\n';
}

inline std::string qubo_to_text(const QuboInstance& q) {
    std::ostringstream os;
    write_qubo_text(q, os);
    return os.str();
}

/// Inverse of write_qubo_text. The block structure is not part of the text;
/// pass `map` to restore it.
inline QuboInstance read_qubo_text(std::istream& is, std::optional<IndexMap> map = std::nullopt) {
    std::size_t n = 0, nnz = 0;
    if (!(is >> n >> nnz)) throw QuboError("QUBO text: missing 'NK nnz' header");
    if (map && map->size() != n) throw QuboError("QUBO text: size does not match the index map");
    QuboInstance q = map ? QuboInstance(*map) : QuboInstance(n);
    for (std::size_t e = 0; e < nnz; ++e) {
        std::size_t i = 0, j = 0;
        double v = 0.0;
        if (!(is >> i >> j >> v)) throw QuboError("QUBO text: truncated at entry " + std::to_string(e));
        if (i > j || j >= n) throw QuboError("QUBO text: entry (" + std::to_string(i) + "," + std::to_string(j) + ") is not upper-triangular in range");
        q.add(i, j, v);
    }
    return q;
}

/// Total table loss of c: sum over simplices of the entry selected by c.
inline double configuration_loss(const Mesh& mesh, const PartialLossTable& table, const Configuration& c) {
    double sum = 0.0;
    for (std::size_t s = 0; s < mesh.num_simplices(); ++s) {
        const auto& v = mesh.simplices[s].vertex_indices;
        sum += table.at(s, c.assignment[v[0]], c.assignment[v[1]], c.assignment[v[2]]);
    }
    return sum;
}

/// Loss summed over all K^N configurations by enumeration.
inline double loss_partition_by_enumeration(const Mesh& mesh, const PartialLossTable& table) {
    const std::size_t n = mesh.num_vertices(), k = table.k;
    if (std::pow(static_cast<double>(k), static_cast<double>(n)) > 1e8)
        throw QuboError("configuration space too large to enumerate");
    Configuration c;
    c.assignment.assign(n, 0);
    double z = 0.0;
    while (true) {
        z += configuration_loss(mesh, table, c);
        std::size_t i = 0;
        while (i < n && ++c.assignment[i] == k) c.assignment[i++] = 0;
        if (i == n) break;
    }
    return z;
}

/// The same sum regrouped by edges: K^(N-3)/3 times the sum, over edges and
/// their two simplices, of every table entry of that simplex.
inline double loss_partition_by_edges(const Mesh& mesh, const PartialLossTable& table) {
    detail::check_table(mesh, table);
    double sum = 0.0;
    const std::size_t cells = table.k * table.k * table.k;
    for (const auto& edge : mesh.edges)
        for (std::size_t s : edge.simplices)
            for (std::size_t cell = 0; cell < cells; ++cell) sum += table.values[s * cells + cell];
    const double multiplicity = std::pow(static_cast<double>(table.k), static_cast<double>(mesh.num_vertices()) - 3.0);
    return multiplicity * sum / 3.0;
}

}  // namespace qfem
