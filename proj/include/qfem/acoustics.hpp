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
#include <iostream>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "qfem/error.hpp"
#include "qfem/mesh.hpp"
#include "qfem/random.hpp"
#include "qfem/vec3.hpp"

namespace qfem {

/// Point sound source.
struct Monopole {
    Vec3 position{};
};

/// Rectangle center +/- half_axis_u +/- half_axis_v. Rays are counted from
/// either side of the plane.
struct Microphone {
    Vec3 center{};
    Vec3 half_axis_u{};
    Vec3 half_axis_v{};

    Vec3 plane_normal() const { return normalized(cross(half_axis_u, half_axis_v)); }

    void validate() const {
        const double lu = norm(half_axis_u), lv = norm(half_axis_v);
        if (!(lu > 0.0) || !(lv > 0.0)) throw GeometryError("microphone half axes must be non-zero");
        if (std::abs(dot(half_axis_u, half_axis_v)) > 1e-9 * lu * lv)
            throw GeometryError("microphone half axes must be orthogonal");
        if (!is_finite(center) || !is_finite(half_axis_u) || !is_finite(half_axis_v))
            throw GeometryError("microphone geometry must be finite");
    }
};

struct Ray {
    Vec3 origin{};
    Vec3 direction{};  // unit length
};

struct RayHit {
    double t = 0.0;
    Vec3 point{};
};

/// Everything the loss model needs besides the shape itself.
struct AcousticSetup {
    Monopole monopole{};
    Microphone microphone{};
    std::size_t rays_per_simplex = 50;
    bool shadow_test = false;  // block incoming rays by other simplices of the base mesh
    std::size_t threads = 1;
};

inline constexpr double kRayEpsilon = 1e-9;
inline constexpr double kBarycentricSlack = 1e-12;

/// Bit-exact reflection r = d - 2 (d.n) n.
constexpr Vec3 reflect(const Vec3& direction, const Vec3& normal) {
    return direction - 2.0 * dot(direction, normal) * normal;
}

/// Uniform point on triangle (a, b, c) by folded barycentric sampling.
inline Vec3 sample_triangle_point(const std::array<Vec3, 3>& tri, Rng& rng) {
    double u = rng.uniform();
    double v = rng.uniform();
    if (u + v > 1.0) {
        u = 1.0 - u;
        v = 1.0 - v;
    }
    return tri[0] + u * (tri[1] - tri[0]) + v * (tri[2] - tri[0]);
}

/// n_rays rays from the source toward uniform points of the triangle.
inline std::vector<Ray> sample_rays(const Monopole& monopole, const std::array<Vec3, 3>& tri, std::size_t n_rays,
                                    Rng& rng) {
    if (triangle_area(tri[0], tri[1], tri[2]) < kDegenerateArea)
        throw GeometryError("cannot sample rays toward a degenerate triangle");
    std::vector<Ray> rays;
    rays.reserve(n_rays);
    for (std::size_t r = 0; r < n_rays; ++r) {
        const Vec3 target = sample_triangle_point(tri, rng);
        rays.push_back({monopole.position, normalized(target - monopole.position)});
    }
    return rays;
}

/// Moller-Trumbore; nearest hit with t > 1e-9, edges inclusive.
inline std::optional<RayHit> ray_triangle_intersect(const Ray& ray, const std::array<Vec3, 3>& tri) {
    const Vec3 e1 = tri[1] - tri[0];
    const Vec3 e2 = tri[2] - tri[0];
    const Vec3 p = cross(ray.direction, e2);
    const double det = dot(e1, p);
    if (std::abs(det) < std::numeric_limits<double>::min() * 1e3) return std::nullopt;
    const double inv = 1.0 / det;
    const Vec3 s = ray.origin - tri[0];
    const double u = dot(s, p) * inv;
    if (u < -kBarycentricSlack || u > 1.0 + kBarycentricSlack) return std::nullopt;
    const Vec3 q = cross(s, e1);
    const double v = dot(ray.direction, q) * inv;
    if (v < -kBarycentricSlack || u + v > 1.0 + kBarycentricSlack) return std::nullopt;
    const double t = dot(e2, q) * inv;
    if (!(t > kRayEpsilon)) return std::nullopt;
    return RayHit{t, ray.origin + t * ray.direction};
}

inline bool ray_hits_microphone(const Ray& ray, const Microphone& mic) {
    const Vec3 nrm = cross(mic.half_axis_u, mic.half_axis_v);
    const double denom = dot(ray.direction, nrm);
    if (std::abs(denom) <= 1e-12 * norm(nrm)) return false;
    const double t = dot(mic.center - ray.origin, nrm) / denom;
    if (!(t > kRayEpsilon)) return false;
    const Vec3 rel = ray.origin + t * ray.direction - mic.center;
    const double au = dot(rel, mic.half_axis_u) / dot(mic.half_axis_u, mic.half_axis_u);
    const double av = dot(rel, mic.half_axis_v) / dot(mic.half_axis_v, mic.half_axis_v);
    return std::abs(au) <= 1.0 && std::abs(av) <= 1.0;
}

/// Other simplices of a mesh that may block incoming rays.
struct Occluders {
    const Mesh& mesh;
    std::size_t self;
};

namespace detail {

inline bool is_blocked(const Ray& ray, double t_target, const Occluders& occ) {
    for (std::size_t s = 0; s < occ.mesh.num_simplices(); ++s) {
        if (s == occ.self) continue;
        if (auto hit = ray_triangle_intersect(ray, occ.mesh.triangle(s)); hit && hit->t < t_target - kRayEpsilon)
            return true;
    }
    return false;
}

}  // namespace detail

/// Fraction of n_rays rays cast at the triangle (given in winding order) that
/// reflect into the microphone. Back-facing triangles return 0 without
/// consuming random numbers; so do degenerate ones, with a warning.
inline double partial_loss(const std::array<Vec3, 3>& tri, const Monopole& monopole, const Microphone& mic,
                           std::size_t n_rays, Rng& rng, const Occluders* occluders = nullptr) {
    if (n_rays == 0) throw GeometryError("partial_loss needs at least one ray");
    const Vec3 av = area_vector(tri[0], tri[1], tri[2]);
    const double len = norm(av);
    if (!(0.5 * len >= kDegenerateArea)) {
        std::cerr << "warning: degenerate configured triangle reflects nothing\n";
        return 0.0;
    }
    const Vec3 nrm = av / len;
    if (dot(nrm, monopole.position - centroid(tri[0], tri[1], tri[2])) <= 0.0) return 0.0;

    std::size_t hits = 0;
    for (std::size_t r = 0; r < n_rays; ++r) {
        const Vec3 target = sample_triangle_point(tri, rng);
        const Vec3 to_target = target - monopole.position;
        const Ray incoming{monopole.position, normalized(to_target)};
        if (occluders && detail::is_blocked(incoming, norm(to_target), *occluders)) continue;
        const Ray outgoing{target, reflect(incoming.direction, nrm)};
        if (ray_hits_microphone(outgoing, mic)) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(n_rays);
}

/// Seed of the loss cell (simplex, mutation triple). The identity cell
/// (0, 0, 0) also seeds the unmutated loss of the simplex.
inline std::uint64_t loss_cell_seed(std::uint64_t seed, std::size_t simplex, std::size_t j0, std::size_t j1,
                                    std::size_t j2) {
    return derive_seed(seed, {simplex, j0, j1, j2});
}

/// Unmutated loss of each simplex.
inline std::vector<double> simplex_losses(const Mesh& mesh, const AcousticSetup& setup, std::uint64_t seed) {
    std::vector<double> out(mesh.num_simplices(), 0.0);
    parallel_for(mesh.num_simplices(), setup.threads, [&](std::size_t s) {
        Rng rng(loss_cell_seed(seed, s, 0, 0, 0));
        Occluders occ{mesh, s};
        out[s] = partial_loss(mesh.triangle(s), setup.monopole, setup.microphone, setup.rays_per_simplex, rng,
                              setup.shadow_test ? &occ : nullptr);
    });
    return out;
}

/// Sum of unmutated partial losses over all simplices.
inline double total_loss(const Mesh& mesh, const AcousticSetup& setup, std::uint64_t seed) {
    double sum = 0.0;
    for (double l : simplex_losses(mesh, setup, seed)) sum += l;
    return sum;
}

/// Partial losses of every simplex under every mutation triple of its
/// vertices (taken in winding order).
struct PartialLossTable {
    std::size_t num_simplices = 0;
    std::size_t k = 0;
    std::size_t rays_per_sample = 0;
    std::vector<double> values;

    PartialLossTable() = default;
    PartialLossTable(std::size_t s, std::size_t k_, std::size_t rays)
        : num_simplices(s), k(k_), rays_per_sample(rays), values(s * k_ * k_ * k_, 0.0) {}

    std::size_t index(std::size_t s, std::size_t j0, std::size_t j1, std::size_t j2) const {
        return ((s * k + j0) * k + j1) * k + j2;
    }
    double& at(std::size_t s, std::size_t j0, std::size_t j1, std::size_t j2) { return values[index(s, j0, j1, j2)]; }
    double at(std::size_t s, std::size_t j0, std::size_t j1, std::size_t j2) const {
        return values[index(s, j0, j1, j2)];
    }
    /// Entry for the mutation chosen by each of the simplex's three vertices.
    double at(std::size_t s, const std::array<std::size_t, 3>& j) const { return at(s, j[0], j[1], j[2]); }
};

inline PartialLossTable build_partial_loss_table(const Mesh& mesh, const MutationSet& mutations,
                                                 const AcousticSetup& setup, std::uint64_t seed) {
    if (mutations.k < 1) throw GeometryError("loss table needs K >= 1");
    if (mutations.num_vertices != mesh.num_vertices())
        throw GeometryError("mutation set does not match the mesh vertex count");
    const std::size_t k = mutations.k;
    PartialLossTable table(mesh.num_simplices(), k, setup.rays_per_simplex);
    parallel_for(mesh.num_simplices(), setup.threads, [&](std::size_t s) {
        const auto& idx = mesh.simplices[s].vertex_indices;
        Occluders occ{mesh, s};
        for (std::size_t j0 = 0; j0 < k; ++j0)
            for (std::size_t j1 = 0; j1 < k; ++j1)
                for (std::size_t j2 = 0; j2 < k; ++j2) {
                    const std::array<Vec3, 3> tri{mesh.vertices[idx[0]] + mutations.at(idx[0], j0),
                                                  mesh.vertices[idx[1]] + mutations.at(idx[1], j1),
                                                  mesh.vertices[idx[2]] + mutations.at(idx[2], j2)};
                    Rng rng(loss_cell_seed(seed, s, j0, j1, j2));
                    table.at(s, j0, j1, j2) = partial_loss(tri, setup.monopole, setup.microphone,
                                                           setup.rays_per_simplex, rng,
                                                           setup.shadow_test ? &occ : nullptr);
                }
    });
    return table;
}

struct ShadeRow {
    double loss = 0.0;
    double normalized_loss = 0.0;
};

/// Per-simplex unmutated loss, also scaled so the largest equals 1.
inline std::vector<ShadeRow> shade_partial_loss(const Mesh& mesh, const AcousticSetup& setup, std::uint64_t seed) {
    const auto losses = simplex_losses(mesh, setup, seed);
    const double peak = losses.empty() ? 0.0 : *std::max_element(losses.begin(), losses.end());
    std::vector<ShadeRow> rows;
    rows.reserve(losses.size());
    for (double l : losses) rows.push_back({l, peak > 0.0 ? l / peak : 0.0});
    return rows;
}

inline void write_shading_csv(std::span<const ShadeRow> rows, std::ostream& os) {
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    os << "simplex_id,loss,normalized_loss\n";
    for (std::size_t s = 0; s < rows.size(); ++s) os << s << ',' << rows[s].loss << ',' << rows[s].normalized_loss << '\n';
}

/// True if p lies strictly in front of at least one face plane. Exact
/// inside/outside test for convex meshes only.
inline bool outside_convex_mesh(const Mesh& mesh, const Vec3& p) {
    for (std::size_t s = 0; s < mesh.num_simplices(); ++s) {
        const auto tri = mesh.triangle(s);
        if (dot(mesh.simplices[s].outward_normal, p - tri[0]) > 0.0) return true;
    }
    return false;
}

}  // namespace qfem
