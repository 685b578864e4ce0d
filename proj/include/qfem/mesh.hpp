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
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "qfem/error.hpp"
#include "qfem/vec3.hpp"

namespace qfem {

/// Triangles with area below this are degenerate.
inline constexpr double kDegenerateArea = 1e-12;

/// Triangular surface element. Vertices wind counter-clockwise seen from the
/// side `outward_normal` points to.
struct Simplex {
    std::array<std::size_t, 3> vertex_indices{};
    Vec3 outward_normal{};
};

/// Undirected edge (vertices[0] < vertices[1]) and its two adjacent simplices.
struct Edge {
    std::array<std::size_t, 2> vertices{};
    std::array<std::size_t, 2> simplices{};
};

/// Triangle surface mesh. A vertex's index is its position in `vertices`.
/// `edges` is sorted by vertex pair and is empty until build_edge_adjacency.
struct Mesh {
    std::vector<Vec3> vertices;
    std::vector<Simplex> simplices;
    std::vector<Edge> edges;

    std::size_t num_vertices() const { return vertices.size(); }
    std::size_t num_simplices() const { return simplices.size(); }
    std::size_t num_edges() const { return edges.size(); }

    std::array<Vec3, 3> triangle(std::size_t s) const {
        const auto& idx = simplices[s].vertex_indices;
        return {vertices[idx[0]], vertices[idx[1]], vertices[idx[2]]};
    }

    Vec3 vertex_centroid() const {
        Vec3 c;
        for (const auto& v : vertices) c += v;
        return vertices.empty() ? c : c / static_cast<double>(vertices.size());
    }

    long euler_characteristic() const {
        return static_cast<long>(vertices.size()) - static_cast<long>(edges.size()) +
               static_cast<long>(simplices.size());
    }
};

/// K candidate displacements per vertex, stored vertex-major.
struct MutationSet {
    std::size_t num_vertices = 0;
    std::size_t k = 0;
    std::vector<Vec3> displacements;

    MutationSet() = default;
    MutationSet(std::size_t n, std::size_t k_) : num_vertices(n), k(k_), displacements(n * k_) {}

    Vec3& at(std::size_t vertex, std::size_t mutation) { return displacements[vertex * k + mutation]; }
    const Vec3& at(std::size_t vertex, std::size_t mutation) const {
        return displacements[vertex * k + mutation];
    }

    MutationSet negated() const {
        MutationSet out = *this;
        for (auto& d : out.displacements) d = -d;
        return out;
    }
};

namespace detail {

inline double max_abs_coordinate(std::span<const Vec3> pts) {
    double m = 0.0;
    for (const auto& p : pts) m = std::max({m, std::abs(p.x), std::abs(p.y), std::abs(p.z)});
    return m;
}

struct HullFace {
    std::array<std::size_t, 3> v;
    Vec3 normal;
    double offset;
    bool alive = true;
};

inline HullFace make_hull_face(std::span<const Vec3> pts, std::size_t a, std::size_t b, std::size_t c) {
    Vec3 n = area_vector(pts[a], pts[b], pts[c]);
    double len = norm(n);
    if (len > 0.0) n = n / len;
    return {{a, b, c}, n, dot(n, pts[a]), true};
}

}  // namespace detail

/// Triangles of the 3D convex hull of `points`, wound outward. Every input
/// point must be a hull vertex (true for distinct points on a sphere).
/// Coplanar hull facets are split into triangles deterministically by
/// insertion order.
inline std::vector<Simplex> triangulate(std::span<const Vec3> points) {
    const std::size_t n = points.size();
    if (n < 4) throw GeometryError("triangulate: need at least 4 points, got " + std::to_string(n));
    for (std::size_t i = 0; i < n; ++i)
        if (!is_finite(points[i])) throw GeometryError("triangulate: point " + std::to_string(i) + " is not finite");

    const double scale = std::max(1.0, detail::max_abs_coordinate(points));
    const double eps = 1e-12 * scale;

    // Initial tetrahedron from extreme choices.
    std::size_t i0 = 0, i1 = 0, i2 = 0, i3 = 0;
    double best = 0.0;
    for (std::size_t i = 1; i < n; ++i) {
        double d = norm(points[i] - points[i0]);
        if (d > best) best = d, i1 = i;
    }
    if (best <= eps) throw GeometryError("triangulate: all points coincide");
    best = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double d = norm(cross(points[i1] - points[i0], points[i] - points[i0]));
        if (d > best) best = d, i2 = i;
    }
    if (best <= eps * scale) throw GeometryError("triangulate: points are collinear");
    const Vec3 plane_n = normalized(area_vector(points[i0], points[i1], points[i2]));
    best = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double d = std::abs(dot(plane_n, points[i] - points[i0]));
        if (d > best) best = d, i3 = i;
    }
    if (best <= 1e-10 * scale) throw GeometryError("triangulate: points are coplanar");

    std::vector<detail::HullFace> faces;
    const Vec3 interior = (points[i0] + points[i1] + points[i2] + points[i3]) / 4.0;
    auto add_face = [&](std::size_t a, std::size_t b, std::size_t c) {
        auto f = detail::make_hull_face(points, a, b, c);
        if (dot(f.normal, interior) - f.offset > 0.0) f = detail::make_hull_face(points, a, c, b);
        faces.push_back(f);
    };
    add_face(i0, i1, i2);
    add_face(i0, i1, i3);
    add_face(i0, i2, i3);
    add_face(i1, i2, i3);

    std::vector<bool> on_hull(n, false);
    on_hull[i0] = on_hull[i1] = on_hull[i2] = on_hull[i3] = true;

    std::map<std::pair<std::size_t, std::size_t>, std::size_t> directed;
    auto rebuild_directed = [&] {
        directed.clear();
        for (std::size_t f = 0; f < faces.size(); ++f) {
            if (!faces[f].alive) continue;
            const auto& v = faces[f].v;
            for (int e = 0; e < 3; ++e) directed[{v[e], v[(e + 1) % 3]}] = f;
        }
    };

    for (std::size_t p = 0; p < n; ++p) {
        if (on_hull[p]) continue;
        std::vector<std::size_t> visible;
        for (std::size_t f = 0; f < faces.size(); ++f)
            if (faces[f].alive && dot(faces[f].normal, points[p]) - faces[f].offset > eps) visible.push_back(f);
        if (visible.empty())
            throw GeometryError("triangulate: point " + std::to_string(p) + " is not a hull vertex");

        rebuild_directed();
        std::vector<bool> is_visible(faces.size(), false);
        for (auto f : visible) is_visible[f] = true;

        std::vector<std::pair<std::size_t, std::size_t>> horizon;
        for (auto f : visible) {
            const auto& v = faces[f].v;
            for (int e = 0; e < 3; ++e) {
                std::size_t a = v[e], b = v[(e + 1) % 3];
                auto it = directed.find({b, a});
                if (it == directed.end() || !is_visible[it->second]) horizon.emplace_back(a, b);
            }
        }
        for (auto f : visible) faces[f].alive = false;
        for (auto [a, b] : horizon) faces.push_back(detail::make_hull_face(points, a, b, p));
        on_hull[p] = true;
    }

    std::vector<Simplex> out;
    for (const auto& f : faces)
        if (f.alive) out.push_back({f.v, f.normal});
    return out;
}

/// Recomputes every simplex normal from its winding. With `orient_outward`,
/// windings are first flipped where needed so each normal points away from
/// the vertex centroid (valid for convex meshes).
inline Mesh compute_normals(Mesh mesh, bool orient_outward = true) {
    const Vec3 center = mesh.vertex_centroid();
    for (std::size_t s = 0; s < mesh.simplices.size(); ++s) {
        auto& simplex = mesh.simplices[s];
        auto [a, b, c] = mesh.triangle(s);
        Vec3 av = area_vector(a, b, c);
        double len = norm(av);
        if (!(0.5 * len >= kDegenerateArea))
            throw MeshError("degenerate simplex " + std::to_string(s) + " (area " + std::to_string(0.5 * len) + ")");
        Vec3 nrm = av / len;
        if (orient_outward && dot(nrm, centroid(a, b, c) - center) < 0.0) {
            std::swap(simplex.vertex_indices[1], simplex.vertex_indices[2]);
            nrm = -nrm;
        }
        simplex.outward_normal = nrm;
    }
    return mesh;
}

/// Fills `edges`; every edge must border exactly two simplices.
inline Mesh build_edge_adjacency(Mesh mesh) {
    std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> slots;
    for (std::size_t s = 0; s < mesh.simplices.size(); ++s) {
        const auto& v = mesh.simplices[s].vertex_indices;
        if (v[0] == v[1] || v[1] == v[2] || v[0] == v[2])
            throw MeshError("simplex " + std::to_string(s) + " repeats a vertex");
        for (int e = 0; e < 3; ++e) {
            std::size_t a = v[e], b = v[(e + 1) % 3];
            slots[{std::min(a, b), std::max(a, b)}].push_back(s);
        }
    }
    std::string open;
    mesh.edges.clear();
    for (const auto& [key, adj] : slots) {
        if (adj.size() != 2) {
            open += " (" + std::to_string(key.first) + "," + std::to_string(key.second) + ")";
            continue;
        }
        mesh.edges.push_back({{key.first, key.second}, {adj[0], adj[1]}});
    }
    if (!open.empty()) {
        mesh.edges.clear();
        throw MeshError("mesh not closed: edges without exactly two simplices:" + open);
    }
    return mesh;
}

/// Normals plus adjacency for a closed triangle set.
inline Mesh make_mesh(std::vector<Vec3> vertices, std::vector<std::array<std::size_t, 3>> faces,
                      bool orient_outward = true) {
    Mesh mesh;
    mesh.vertices = std::move(vertices);
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i)
        if (!is_finite(mesh.vertices[i])) throw MeshError("vertex " + std::to_string(i) + " is not finite");
    for (const auto& f : faces) {
        for (auto idx : f)
            if (idx >= mesh.vertices.size()) throw MeshError("face references missing vertex " + std::to_string(idx));
        mesh.simplices.push_back({f, {}});
    }
    return build_edge_adjacency(compute_normals(std::move(mesh), orient_outward));
}

/// Closed unit sphere from a (theta, phi) lattice. Theta spans [0, pi] in
/// n_theta rows; the pole rows collapse to one vertex each. Phi takes n_phi
/// values in [0, 2 pi), so the seam closes without duplicate points.
inline Mesh generate_sphere_mesh(std::size_t n_theta, std::size_t n_phi) {
    if (n_theta < 3 || n_phi < 3)
        throw MeshError("sphere lattice needs n_theta >= 3 and n_phi >= 3 (got " + std::to_string(n_theta) + ", " +
                        std::to_string(n_phi) + ")");
    std::vector<Vec3> points;
    points.reserve((n_theta - 2) * n_phi + 2);
    points.push_back({0.0, 0.0, 1.0});
    for (std::size_t i = 1; i + 1 < n_theta; ++i) {
        const double theta = std::numbers::pi * static_cast<double>(i) / static_cast<double>(n_theta - 1);
        for (std::size_t j = 0; j < n_phi; ++j) {
            const double phi = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n_phi);
            points.push_back({std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta)});
        }
    }
    points.push_back({0.0, 0.0, -1.0});
    if (points.size() < 4) throw MeshError("sphere lattice produces fewer than 4 distinct vertices");

    Mesh mesh;
    mesh.simplices = triangulate(points);
    mesh.vertices = std::move(points);
    return build_edge_adjacency(compute_normals(std::move(mesh), true));
}

/// One-ring neighbours of every vertex, sorted. Requires edges.
inline std::vector<std::vector<std::size_t>> vertex_neighbors(const Mesh& mesh) {
    std::vector<std::vector<std::size_t>> out(mesh.num_vertices());
    for (const auto& e : mesh.edges) {
        out[e.vertices[0]].push_back(e.vertices[1]);
        out[e.vertices[1]].push_back(e.vertices[0]);
    }
    for (auto& nb : out) std::sort(nb.begin(), nb.end());
    return out;
}

/// Moves vertex i by mutations.at(i, chosen[i]). The winding and adjacency
/// are kept; normals are recomputed from the new positions.
inline Mesh apply_configuration(const Mesh& mesh, const MutationSet& mutations, std::span<const std::size_t> chosen) {
    if (mutations.num_vertices != mesh.num_vertices() || chosen.size() != mesh.num_vertices())
        throw MeshError("configuration size does not match the mesh vertex count");
    Mesh out = mesh;
    for (std::size_t i = 0; i < chosen.size(); ++i) {
        if (chosen[i] >= mutations.k)
            throw MeshError("mutation index " + std::to_string(chosen[i]) + " out of range for vertex " +
                            std::to_string(i) + " (K=" + std::to_string(mutations.k) + ")");
        out.vertices[i] += mutations.at(i, chosen[i]);
    }
    return compute_normals(std::move(out), false);
}

/// Vertex ("v x y z") and face ("f i j k", 1-based) lines.
inline void write_obj(const Mesh& mesh, std::ostream& os) {
    if (mesh.vertices.empty() || mesh.simplices.empty()) throw MeshError("refusing to write an empty mesh");
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& v : mesh.vertices) os << "v " << v.x << ' ' << v.y << ' ' << v.z << '\n';
    for (const auto& s : mesh.simplices)
        os << "f " << s.vertex_indices[0] + 1 << ' ' << s.vertex_indices[1] + 1 << ' ' << s.vertex_indices[2] + 1
           << '\n';
}

inline void export_mesh(const Mesh& mesh, const std::string& path) {
    if (mesh.vertices.empty() || mesh.simplices.empty()) throw MeshError("refusing to write an empty mesh");
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    write_obj(mesh, out);
    out.flush();
    if (!out) throw IoError("write to '" + path + "' failed");
}

/// Reads "v" and "f" lines; other lines are ignored. Face entries may use the
/// "i/t/n" form. Fails on open meshes unless `require_closed` is false.
inline Mesh read_obj(std::istream& is, bool require_closed = true) {
    std::vector<Vec3> vertices;
    std::vector<std::array<std::size_t, 3>> faces;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) continue;
        if (tag == "v") {
            Vec3 v;
            if (!(ls >> v.x >> v.y >> v.z)) throw MeshError("malformed vertex on line " + std::to_string(lineno));
            vertices.push_back(v);
        } else if (tag == "f") {
            std::array<std::size_t, 3> f{};
            for (auto& idx : f) {
                std::string tok;
                if (!(ls >> tok)) throw MeshError("face on line " + std::to_string(lineno) + " is not a triangle");
                long value = 0;
                try {
                    value = std::stol(tok.substr(0, tok.find('/')));
                } catch (const std::exception&) {
                    throw MeshError("malformed face index on line " + std::to_string(lineno));
                }
                if (value < 1) throw MeshError("face index must be 1-based on line " + std::to_string(lineno));
                idx = static_cast<std::size_t>(value - 1);
            }
            std::string extra;
            if (ls >> extra) throw MeshError("face on line " + std::to_string(lineno) + " is not a triangle");
            faces.push_back(f);
        }
    }
    if (vertices.empty() || faces.empty()) throw MeshError("mesh file holds no geometry");

    Mesh mesh;
    mesh.vertices = std::move(vertices);
    for (const auto& f : faces) {
        for (auto idx : f)
            if (idx >= mesh.vertices.size()) throw MeshError("face references missing vertex " + std::to_string(idx + 1));
        mesh.simplices.push_back({f, {}});
    }
    mesh = compute_normals(std::move(mesh), false);
    return require_closed ? build_edge_adjacency(std::move(mesh)) : mesh;
}

inline Mesh import_mesh(const std::string& path, bool require_closed = true) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    return read_obj(in, require_closed);
}

}  // namespace qfem
