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

#include <cmath>
#include <sstream>

#include "catch_amalgamated.hpp"
#include "oracles.hpp"
#include "qfem/acoustics.hpp"

using namespace qfem;

namespace {

const Monopole kSource{{2.5, 0.0, 0.0}};
const Microphone kMic{{2.0, 0.0, 0.0}, {0.0, 2.0, 0.0}, {0.0, 0.0, 1.15}};

// Source above a small horizontal triangle; every reflection lands in a
// large mic far overhead.
struct Mirror {
    std::array<Vec3, 3> tri{Vec3{-0.1, -0.1, 0.0}, Vec3{0.1, -0.1, 0.0}, Vec3{0.0, 0.1, 0.0}};
    Monopole src{{0.0, 0.0, 5.0}};
    Microphone mic{{0.0, 0.0, 10.0}, {1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}};
};

Vec3 rotate(const Vec3& p, const std::array<Vec3, 3>& rows) { return {dot(rows[0], p), dot(rows[1], p), dot(rows[2], p)}; }

std::array<Vec3, 3> random_rotation(Rng& rng) {
    const Vec3 a = oracle::random_unit(rng);
    Vec3 b = oracle::random_unit(rng);
    b = normalized(b - dot(a, b) * a);
    return {a, b, cross(a, b)};
}

AcousticSetup default_setup(std::size_t rays = 50) {
    AcousticSetup s;
    s.monopole = kSource;
    s.microphone = kMic;
    s.rays_per_simplex = rays;
    return s;
}

}  // namespace

TEST_CASE("reflect examples") {
    CHECK(reflect({0, 0, -1}, {0, 0, 1}) == Vec3{0, 0, 1});
    const double h = 1.0 / std::sqrt(2.0);
    const Vec3 r = reflect({h, -h, 0}, {0, 1, 0});
    CHECK(r.x == h);
    CHECK(r.y == h);
    CHECK(r.z == 0.0);
    CHECK(reflect({1, 0, 0}, {0, 1, 0}) == Vec3{1, 0, 0});
}

TEST_CASE("reflect preserves norm, mirrors the incidence angle and is an involution") {
    Rng rng(3);
    for (int i = 0; i < 10000; ++i) {
        const Vec3 d = oracle::random_unit(rng), n = oracle::random_unit(rng);
        const Vec3 r = reflect(d, n);
        CHECK(std::abs(norm(r) - 1.0) < 1e-12);
        CHECK(std::abs(dot(d, n) + dot(r, n)) < 1e-12);
        CHECK(norm(reflect(r, n) - d) < 1e-12);
        CHECK(norm(r - oracle::householder(d, n)) < 1e-12);
    }
}

TEST_CASE("ray/triangle intersection examples") {
    const std::array<Vec3, 3> tri{Vec3{-1, -1, 0}, Vec3{1, -1, 0}, Vec3{0, 1, 0}};
    const auto hit = ray_triangle_intersect({{0, 0, -5}, {0, 0, 1}}, tri);
    REQUIRE(hit);
    CHECK(hit->t == Catch::Approx(5.0).margin(1e-12));
    CHECK(norm(hit->point) < 1e-12);
    CHECK_FALSE(ray_triangle_intersect({{0, 0, -5}, {0, 0, -1}}, tri));
    // in-plane ray
    CHECK_FALSE(ray_triangle_intersect({{-3, 0, 0}, {1, 0, 0}}, tri));
}

TEST_CASE("ray/triangle intersection agrees with a linear-system solve") {
    Rng rng(5);
    int hits = 0;
    for (int i = 0; i < 1000; ++i) {
        std::array<Vec3, 3> tri;
        for (auto& v : tri) v = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        const Vec3 origin{rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)};
        const Vec3 aim = centroid(tri[0], tri[1], tri[2]) + 0.6 * Vec3{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        const Ray ray{origin, normalized(aim - origin)};
        const auto a = ray_triangle_intersect(ray, tri);
        const auto b = oracle::intersect_linear(ray, tri);
        REQUIRE(a.has_value() == b.has_value());
        if (a) {
            ++hits;
            CHECK(std::abs(a->t - b->t) < 1e-9 * (1.0 + b->t));
            CHECK(norm(a->point - b->point) < 1e-9);
        }
    }
    CHECK(hits > 100);
    CHECK(hits < 1000);
}

TEST_CASE("microphone hit examples") {
    CHECK(ray_hits_microphone({{0, 0, 0}, {1, 0, 0}}, kMic));
    CHECK_FALSE(ray_hits_microphone({{0, 3, 0}, {1, 0, 0}}, kMic));
    CHECK_FALSE(ray_hits_microphone({{2, -5, 0}, {0, 1, 0}}, kMic));
    // behind the ray origin
    CHECK_FALSE(ray_hits_microphone({{3, 0, 0}, {1, 0, 0}}, kMic));
    // hits from either side count
    CHECK(ray_hits_microphone({{4, 0.5, 0.5}, {-1, 0, 0}}, kMic));
}

TEST_CASE("microphone hit agrees with a linear-system solve") {
    Rng rng(9);
    int hits = 0;
    for (int i = 0; i < 2000; ++i) {
        const Vec3 o{rng.uniform(-2, 1.5), rng.uniform(-3, 3), rng.uniform(-3, 3)};
        const Ray ray{o, oracle::random_unit(rng)};
        const bool a = ray_hits_microphone(ray, kMic);
        CHECK(a == oracle::mic_hit_linear(ray, kMic));
        hits += a;
    }
    CHECK(hits > 50);
}

TEST_CASE("microphone validation") {
    Microphone skew = kMic;
    skew.half_axis_v = {0.0, 1.0, 1.0};
    CHECK_THROWS_AS(skew.validate(), GeometryError);
    Microphone flat = kMic;
    flat.half_axis_u = {};
    CHECK_THROWS_AS(flat.validate(), GeometryError);
    CHECK_NOTHROW(kMic.validate());
}

TEST_CASE("sample_rays") {
    const std::array<Vec3, 3> tri{Vec3{0, 0, 0}, Vec3{1, 0, 0}, Vec3{0, 1, 0}};
    Rng rng(1);
    CHECK(sample_rays(kSource, tri, 0, rng).empty());

    Rng a(2), b(2);
    const auto one = sample_rays(kSource, tri, 1, a);
    REQUIRE(one.size() == 1);
    const Vec3 target = sample_triangle_point(tri, b);
    CHECK(one[0].origin == kSource.position);
    CHECK(std::abs(norm(one[0].direction) - 1.0) < 1e-12);
    CHECK(norm(one[0].direction - normalized(target - kSource.position)) < 1e-15);

    const std::array<Vec3, 3> line{Vec3{0, 0, 0}, Vec3{1, 0, 0}, Vec3{2, 0, 0}};
    CHECK_THROWS_AS(sample_rays(kSource, line, 3, rng), GeometryError);
}

TEST_CASE("triangle samples are uniform: their mean is the centroid") {
    const std::array<Vec3, 3> tri{Vec3{1, 2, 3}, Vec3{4, 2, 1}, Vec3{2, 5, 2}};
    Rng rng(123);
    Vec3 mean;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const Vec3 p = sample_triangle_point(tri, rng);
        // inside the triangle
        const Vec3 w = area_vector(tri[0], tri[1], tri[2]);
        CHECK(std::abs(dot(p - tri[0], w)) < 1e-9);
        mean += p / n;
    }
    const Vec3 c = centroid(tri[0], tri[1], tri[2]);
    CHECK(norm(mean - c) <= 0.01 * norm(c));
    CHECK(std::abs(mean.x - c.x) <= 0.01 * std::abs(c.x));
    CHECK(std::abs(mean.y - c.y) <= 0.01 * std::abs(c.y));
    CHECK(std::abs(mean.z - c.z) <= 0.01 * std::abs(c.z));
}

TEST_CASE("partial_loss: aligned mirror, rear face, degenerate face") {
    const Mirror m;
    Rng rng(4);
    CHECK(partial_loss(m.tri, m.src, m.mic, 64, rng) == 1.0);

    // reversed winding faces away from the source
    const std::array<Vec3, 3> back{m.tri[0], m.tri[2], m.tri[1]};
    Rng r1(4), r2(4);
    CHECK(partial_loss(back, m.src, m.mic, 64, r1) == 0.0);
    CHECK(r1() == r2());  // nothing was drawn

    const std::array<Vec3, 3> flat{Vec3{0, 0, 0}, Vec3{1, 0, 0}, Vec3{2, 0, 0}};
    CHECK(partial_loss(flat, m.src, m.mic, 10, rng) == 0.0);
    CHECK_THROWS_AS(partial_loss(m.tri, m.src, m.mic, 0, rng), GeometryError);
}

TEST_CASE("total loss of a single aligned mirror equals its partial loss") {
    const Mirror m;
    Mesh one;
    one.vertices = {m.tri[0], m.tri[1], m.tri[2]};
    one.simplices = {Simplex{{0, 1, 2}, {0, 0, 1}}};
    AcousticSetup setup;
    setup.monopole = m.src;
    setup.microphone = m.mic;
    setup.rays_per_simplex = 20;
    Rng rng(loss_cell_seed(77, 0, 0, 0, 0));
    CHECK(total_loss(one, setup, 77) == partial_loss(m.tri, m.src, m.mic, 20, rng));
    CHECK(total_loss(one, setup, 77) == 1.0);
}

TEST_CASE("rear simplices of the sphere have zero loss") {
    const Mesh sphere = generate_sphere_mesh(8, 12);
    const auto rows = shade_partial_loss(sphere, default_setup(), 5);
    for (std::size_t s = 0; s < sphere.num_simplices(); ++s) {
        const auto tri = sphere.triangle(s);
        if (dot(sphere.simplices[s].outward_normal, kSource.position - centroid(tri[0], tri[1], tri[2])) <= 0.0)
            CHECK(rows[s].loss == 0.0);
    }
}

TEST_CASE("per-simplex sphere losses match an independent tracer") {
    const Mesh sphere = generate_sphere_mesh(4, 12);
    const auto setup = default_setup();
    const auto losses = simplex_losses(sphere, setup, 2024);
    double sum = 0.0;
    for (std::size_t s = 0; s < sphere.num_simplices(); ++s) {
        Rng rng(loss_cell_seed(2024, s, 0, 0, 0));
        CHECK(losses[s] == oracle::trace_partial_loss(sphere.triangle(s), kSource, kMic, 50, rng));
        sum += losses[s];
    }
    CHECK(total_loss(sphere, setup, 2024) == sum);
    CHECK(sum > 0.0);
}

TEST_CASE("partial_loss is invariant under a rigid rotation") {
    Rng rng(31);
    const std::size_t n = 400;
    int nonzero = 0;
    for (int trial = 0; trial < 60; ++trial) {
        const Mesh sphere = generate_sphere_mesh(4, 12);
        const std::size_t s = rng.below(sphere.num_simplices());
        const auto tri = sphere.triangle(s);
        const auto rot = random_rotation(rng);
        const std::array<Vec3, 3> rtri{rotate(tri[0], rot), rotate(tri[1], rot), rotate(tri[2], rot)};
        const Monopole rsrc{rotate(kSource.position, rot)};
        const Microphone rmic{rotate(kMic.center, rot), rotate(kMic.half_axis_u, rot), rotate(kMic.half_axis_v, rot)};
        const std::uint64_t seed = rng();
        Rng a(seed), b(seed);
        const double l0 = partial_loss(tri, kSource, kMic, n, a);
        const double l1 = partial_loss(rtri, rsrc, rmic, n, b);
        CHECK(std::abs(l0 - l1) <= 2.0 / n);
        nonzero += l0 > 0.0;
    }
    CHECK(nonzero > 0);
}

TEST_CASE("loss table") {
    const Mesh sphere = generate_sphere_mesh(4, 12);
    const auto setup = default_setup();

    SECTION("K=1 with zero displacement equals the unmutated losses") {
        const auto table = build_partial_loss_table(sphere, MutationSet(sphere.num_vertices(), 1), setup, 8);
        const auto losses = simplex_losses(sphere, setup, 8);
        for (std::size_t s = 0; s < sphere.num_simplices(); ++s) CHECK(table.at(s, 0, 0, 0) == losses[s]);
    }

    SECTION("entries are counts over rays_per_sample") {
        Rng rng(6);
        MutationSet mut(sphere.num_vertices(), 3);
        for (auto& d : mut.displacements) d = 0.1 * rng.uniform() * oracle::random_unit(rng);
        const auto table = build_partial_loss_table(sphere, mut, setup, 8);
        CHECK(table.values.size() == sphere.num_simplices() * 27);
        for (double v : table.values) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
            const double c = std::round(v * 50.0);
            CHECK(c / 50.0 == v);
        }
    }

    SECTION("threads do not change the table") {
        Rng rng(7);
        MutationSet mut(sphere.num_vertices(), 2);
        for (auto& d : mut.displacements) d = 0.1 * rng.uniform() * oracle::random_unit(rng);
        auto threaded = setup;
        threaded.threads = 3;
        CHECK(build_partial_loss_table(sphere, mut, setup, 9).values ==
              build_partial_loss_table(sphere, mut, threaded, 9).values);
    }

    SECTION("mismatched mutation set") {
        CHECK_THROWS_AS(build_partial_loss_table(sphere, MutationSet(3, 2), setup, 1), GeometryError);
    }
}

TEST_CASE("tetrahedron K=2 table matches a hand-driven trace") {
    const Mesh tet = oracle::unit_sphere_tetrahedron();
    // source and mic straight out from face (0,1,2)
    const Vec3 n = normalized(Vec3{1, 1, -1});
    AcousticSetup setup;
    setup.monopole = {3.0 * n};
    setup.microphone = {2.5 * n, 2.0 * normalized(Vec3{1, -1, 0}), 2.0 * normalized(Vec3{1, 1, 2})};
    setup.rays_per_simplex = 50;
    Rng rng(12);
    MutationSet mut(4, 2);
    for (std::size_t v = 0; v < 4; ++v) mut.at(v, 1) = 0.1 * oracle::random_unit(rng);
    const auto table = build_partial_loss_table(tet, mut, setup, 55);
    REQUIRE(table.values.size() == 32);
    int nonzero = 0;
    for (std::size_t s = 0; s < 4; ++s) {
        const auto& idx = tet.simplices[s].vertex_indices;
        for (std::size_t j0 = 0; j0 < 2; ++j0)
            for (std::size_t j1 = 0; j1 < 2; ++j1)
                for (std::size_t j2 = 0; j2 < 2; ++j2) {
                    const std::array<Vec3, 3> tri{tet.vertices[idx[0]] + mut.at(idx[0], j0),
                                                  tet.vertices[idx[1]] + mut.at(idx[1], j1),
                                                  tet.vertices[idx[2]] + mut.at(idx[2], j2)};
                    Rng cell(derive_seed(55, {s, j0, j1, j2}));
                    const double expect = oracle::trace_partial_loss(tri, setup.monopole, setup.microphone, 50, cell);
                    CHECK(table.at(s, j0, j1, j2) == expect);
                    nonzero += expect > 0.0;
                }
    }
    CHECK(nonzero >= 4);
}

TEST_CASE("loss cells are order-independent streams") {
    CHECK(loss_cell_seed(1, 0, 0, 0, 1) != loss_cell_seed(1, 0, 0, 1, 0));
    CHECK(loss_cell_seed(1, 2, 0, 0, 0) == loss_cell_seed(1, 2, 0, 0, 0));
    CHECK(loss_cell_seed(1, 2, 0, 0, 0) != loss_cell_seed(2, 2, 0, 0, 0));
}

TEST_CASE("shading") {
    const Mesh sphere = generate_sphere_mesh(4, 12);
    const auto rows = shade_partial_loss(sphere, default_setup(), 3);
    double peak = 0.0;
    for (const auto& r : rows) peak = std::max(peak, r.normalized_loss);
    CHECK(peak == 1.0);
    for (const auto& r : rows) CHECK(r.normalized_loss <= 1.0);

    AcousticSetup far = default_setup();
    far.microphone.center = {100.0, 100.0, 100.0};
    for (const auto& r : shade_partial_loss(sphere, far, 3)) {
        CHECK(r.loss == 0.0);
        CHECK(r.normalized_loss == 0.0);
    }

    std::ostringstream os;
    write_shading_csv(rows, os);
    std::istringstream in(os.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "simplex_id,loss,normalized_loss");
    std::size_t count = 0;
    while (std::getline(in, line)) ++count;
    CHECK(count == sphere.num_simplices());
}

TEST_CASE("source at (0,3,2) lights the mic from a localized region") {
    const Mesh sphere = generate_sphere_mesh(4, 12);
    AcousticSetup setup = default_setup(200);
    setup.monopole = {{0.0, 3.0, 2.0}};
    const auto rows = shade_partial_loss(sphere, setup, 1);
    std::size_t lit = 0;
    for (std::size_t s = 0; s < rows.size(); ++s) {
        if (rows[s].loss == 0.0) continue;
        ++lit;
        const auto tri = sphere.triangle(s);
        const Vec3 c = centroid(tri[0], tri[1], tri[2]);
        CHECK(dot(sphere.simplices[s].outward_normal, setup.monopole.position - c) > 0.0);
        // faces [the mic side]
        CHECK(sphere.simplices[s].outward_normal.x > 0.0);
    }
    CHECK(lit > 0);
    CHECK(lit < rows.size() / 4);
}

TEST_CASE("shadow test only removes light") {
    // a concave mesh: sphere with one pole pushed far inward
    Mesh m = generate_sphere_mesh(6, 10);
    m.vertices[0] = {0.0, 0.0, 0.2};
    m = compute_normals(m, false);
    AcousticSetup plain = default_setup(100);
    plain.monopole = {{0.0, 0.0, 3.0}};
    plain.microphone = {{0.0, 0.0, 2.0}, {3.0, 0.0, 0.0}, {0.0, 3.0, 0.0}};
    AcousticSetup shadow = plain;
    shadow.shadow_test = true;
    const auto a = simplex_losses(m, plain, 4), b = simplex_losses(m, shadow, 4);
    for (std::size_t s = 0; s < a.size(); ++s) CHECK(b[s] <= a[s]);
}

TEST_CASE("outside_convex_mesh") {
    const Mesh sphere = generate_sphere_mesh(4, 12);
    CHECK(outside_convex_mesh(sphere, kSource.position));
    CHECK_FALSE(outside_convex_mesh(sphere, {0.1, 0.0, 0.0}));
}
