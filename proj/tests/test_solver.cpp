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

#include <cstdlib>
#include <thread>

#include "catch_amalgamated.hpp"
#include "oracles.hpp"
#include "qfem/solve.hpp"

using namespace qfem;

namespace {

double energy_tol(const QuboInstance& q) {
    double s = 1.0;
    for (const auto& [key, v] : q.entries()) s += std::abs(v);
    return 1e-12 * s;
}

// Local stand-in for a remote sampler. The handler sees the request body and
// the num_reads parameter.
class FakeSampler {
public:
    explicit FakeSampler(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
        server_.Post("/sample", std::move(handler));
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeSampler() {
        server_.stop();
        thread_.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/sample"; }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

SolveRequest remote_request(const std::string& url) {
    SolveRequest r;
    r.backend = Backend::remote;
    r.remote.endpoint = url;
    r.remote.timeout_seconds = 2.0;
    r.num_reads = 7;
    return r;
}

}  // namespace

TEST_CASE("exhaustive: degenerate one-hot ties and a single variable") {
    QuboInstance q(IndexMap{2, 2});
    add_one_hot_penalty(q, 1.5);
    const auto r = solve_exhaustive(q);
    CHECK(r.best_bits == Bits{1, 0, 1, 0});
    CHECK(r.best_energy == -3.0);
    CHECK(r.backend_used == Backend::exhaustive);

    QuboInstance one(1);
    one.add(0, 0, -1.0);
    const auto r1 = solve_exhaustive(one);
    CHECK(r1.best_bits == Bits{1});
    CHECK(r1.best_energy == -1.0);

    QuboInstance empty(3);
    CHECK(solve_exhaustive(empty).best_bits == Bits{0, 0, 0});
    CHECK_THROWS_AS(solve_exhaustive(QuboInstance(27)), SolverError);
}

TEST_CASE("tie-break order") {
    CHECK(bits_less(Bits{1, 0, 1, 0}, Bits{0, 1, 1, 0}));
    CHECK(bits_less(Bits{0, 1, 1, 0}, Bits{1, 0, 0, 1}));
    CHECK_FALSE(bits_less(Bits{1, 0}, Bits{1, 0}));
}

TEST_CASE("exhaustive matches an independent brute-force enumerator") {
    Rng rng(10);
    for (int trial = 0; trial < 40; ++trial) {
        const QuboInstance q = oracle::random_qubo({5, 2}, rng, 0.7);
        REQUIRE(q.size() == 10);
        const auto r = solve_exhaustive(q);
        const auto brute = oracle::brute_minimum(q, energy_tol(q));
        CHECK(std::abs(r.best_energy - brute.energy) <= energy_tol(q));
        CHECK(r.best_energy == qubo_objective(q, r.best_bits));
        // the chosen minimiser is the smallest of the tied ones
        Bits smallest = brute.minimisers.front();
        for (const auto& x : brute.minimisers)
            if (bits_less(x, smallest)) smallest = x;
        CHECK(r.best_bits == smallest);
    }
}

TEST_CASE("exhaustive ignores the order entries were added in") {
    Rng rng(12);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<std::tuple<std::size_t, std::size_t, double>> items;
        for (std::size_t i = 0; i < 12; ++i)
            for (std::size_t j = i; j < 12; ++j)
                if (rng.uniform() < 0.5) items.emplace_back(i, j, std::round(rng.uniform(-8, 8)) / 4.0);
        QuboInstance a(IndexMap{4, 3}), b(IndexMap{4, 3});
        for (const auto& [i, j, v] : items) a.add(i, j, v);
        std::shuffle(items.begin(), items.end(), rng);
        for (const auto& [i, j, v] : items) b.add(j, i, v);
        const auto ra = solve_exhaustive(a), rb = solve_exhaustive(b);
        CHECK(ra.best_bits == rb.best_bits);
        CHECK(ra.best_energy == rb.best_energy);
    }
}

TEST_CASE("incremental deltas match full re-evaluation") {
    Rng rng(13);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t v = 1 + rng.below(6), k = 1 + rng.below(3);
        const QuboInstance q = oracle::random_qubo({v, k}, rng, rng.uniform());
        Bits x(q.size());
        for (auto& b : x) b = rng.below(2);
        IncrementalQubo state(q);
        state.assign(x);
        CHECK(std::abs(state.energy() - qubo_objective(q, x)) < 1e-12);
        const std::size_t bit = rng.below(q.size());
        const double d = state.delta(bit);
        Bits y = x;
        y[bit] ^= 1U;
        CHECK(std::abs(d - (qubo_objective(q, y) - qubo_objective(q, x))) < 1e-12);
        state.flip(bit);
        CHECK(state.bits() == y);
        CHECK(std::abs(state.energy() - qubo_objective(q, y)) < 1e-12);
    }
}

TEST_CASE("annealer finds an isolated all-zeros minimum") {
    QuboInstance q(12);
    for (std::size_t i = 0; i < 12; ++i) q.add(i, i, 5.0);
    for (std::size_t i = 0; i + 1 < 12; ++i) q.add(i, i + 1, -1.0);
    const auto r = solve_annealer(q, {}, 3);
    CHECK(r.best_bits == Bits(12, 0));
    CHECK(r.best_energy == 0.0);
}

TEST_CASE("annealer is deterministic and thread-count independent") {
    Rng rng(14);
    const QuboInstance q = oracle::random_qubo({6, 3}, rng);
    const auto a = solve_annealer(q, {}, 42);
    const auto b = solve_annealer(q, {}, 42);
    const auto c = solve_annealer(q, {}, 42, 3);
    for (const auto* other : {&b, &c}) {
        CHECK(other->best_bits == a.best_bits);
        CHECK(other->best_energy == a.best_energy);
        REQUIRE(other->samples.size() == a.samples.size());
        for (std::size_t i = 0; i < a.samples.size(); ++i) {
            CHECK(other->samples[i].bits == a.samples[i].bits);
            CHECK(other->samples[i].energy == a.samples[i].energy);
            CHECK(other->samples[i].multiplicity == a.samples[i].multiplicity);
        }
    }
    std::size_t total = 0;
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        total += a.samples[i].multiplicity;
        if (i > 0) CHECK(sample_less(a.samples[i - 1], a.samples[i]));
    }
    CHECK(total == 20);
}

TEST_CASE("annealer best energy never rises with more restarts") {
    Rng rng(15);
    for (int trial = 0; trial < 10; ++trial) {
        const QuboInstance q = oracle::random_qubo({5, 3}, rng);
        AnnealerParams p;
        p.sweeps = 5;
        double last = std::numeric_limits<double>::infinity();
        for (std::size_t r = 1; r <= 12; ++r) {
            p.restarts = r;
            const double e = solve_annealer(q, p, 77).best_energy;
            CHECK(e <= last);
            last = e;
        }
    }
}

TEST_CASE("annealer matches exhaustive on nearly all small instances") {
    Rng rng(16);
    int matches = 0;
    for (int trial = 0; trial < 100; ++trial) {
        QuboInstance q;
        if (trial % 2 == 0) {
            q = oracle::random_qubo({4 + rng.below(5), 2}, rng);
        } else {
            const Mesh tet = oracle::unit_tetrahedron();
            const std::size_t k = 2 + rng.below(3);
            q = build_default_qubo(tet, oracle::random_table(4, k, 50, rng));
        }
        REQUIRE(q.size() <= 16);
        const auto ex = solve_exhaustive(q);
        const auto an = solve_annealer(q, {}, rng());
        CHECK(an.best_energy >= ex.best_energy - energy_tol(q));
        if (an.best_energy <= ex.best_energy + energy_tol(q)) ++matches;
    }
    CHECK(matches >= 95);
}

TEST_CASE("annealer parameter validation") {
    AnnealerParams p;
    p.sweeps = 0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = {};
    p.initial_temperature = 0.1;
    p.final_temperature = 1.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p.final_temperature = -1.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("solve dispatch re-evaluates energies") {
    Rng rng(17);
    const QuboInstance q = oracle::random_qubo({3, 3}, rng);
    SolveRequest req;
    req.backend = Backend::exhaustive;
    const auto a = solve(q, req);
    const auto b = solve_exhaustive(q);
    CHECK(a.best_bits == b.best_bits);
    CHECK(a.best_energy == b.best_energy);
    req.backend = Backend::annealer;
    req.seed = 5;
    const auto c = solve(q, req);
    CHECK(c.best_energy == qubo_objective(q, c.best_bits));
    CHECK(parse_backend("annealer") == Backend::annealer);
    CHECK_THROWS_AS(parse_backend("qpu"), ConfigError);
}

TEST_CASE("remote backend") {
    unsetenv(kRemoteEndpointEnv);
    QuboInstance q(IndexMap{2, 2});
    add_one_hot_penalty(q, 1.0);
    q.add(1, 2, 0.5);

    SECTION("unset endpoint is a configuration error") {
        CHECK_THROWS_AS(solve(q, remote_request("")), ConfigError);
    }

    SECTION("non-http endpoint is a configuration error") {
        CHECK_THROWS_AS(solve(q, remote_request("https://example.invalid/x")), ConfigError);
    }

    SECTION("stated energies are replaced by local ones") {
        std::string seen_body, seen_reads;
        FakeSampler fake([&](const httplib::Request& req, httplib::Response& res) {
            seen_body = req.body;
            seen_reads = req.get_param_value("num_reads");
            // first line lies about its energy
            res.set_content("-100 3 1001\n-1.5 4 0110\n", "text/plain");
        });
        const auto r = solve(q, remote_request(fake.url()));
        CHECK(seen_reads == "7");
        CHECK(seen_body == qubo_to_text(q));
        REQUIRE(r.samples.size() == 2);
        CHECK(r.backend_used == Backend::remote);
        CHECK(r.best_bits == Bits{1, 0, 0, 1});
        CHECK(r.best_energy == qubo_objective(q, Bits{1, 0, 0, 1}));
        CHECK(r.best_energy == -2.0);
        CHECK(r.samples[0].multiplicity == 3);
        CHECK(r.samples[1].energy == -1.5);
    }

    SECTION("environment variable overrides the configured endpoint") {
        FakeSampler fake([](const httplib::Request&, httplib::Response& res) {
            res.set_content("0 1 0110\n", "text/plain");
        });
        setenv(kRemoteEndpointEnv, fake.url().c_str(), 1);
        const auto r = solve(q, remote_request("http://127.0.0.1:1/wrong"));
        unsetenv(kRemoteEndpointEnv);
        CHECK(r.best_bits == Bits{0, 1, 1, 0});
    }

    SECTION("malformed responses and HTTP errors raise") {
        for (const std::string body : {"", "abc\n", "1 1 01\n", "1 1 0120\n", "1 0 0110\n", "1 1 0110 x\n"}) {
            FakeSampler fake([body](const httplib::Request&, httplib::Response& res) {
                res.set_content(body, "text/plain");
            });
            CHECK_THROWS_AS(solve(q, remote_request(fake.url())), SolverError);
        }
        FakeSampler failing([](const httplib::Request&, httplib::Response& res) { res.status = 503; });
        CHECK_THROWS_AS(solve(q, remote_request(failing.url())), SolverError);
    }

    SECTION("unreachable sampler raises") {
        // grab a free port, then close it
        int port = 0;
        {
            httplib::Server probe;
            port = probe.bind_to_any_port("127.0.0.1");
        }
        auto req = remote_request("http://127.0.0.1:" + std::to_string(port) + "/sample");
        req.remote.timeout_seconds = 1.0;
        CHECK_THROWS_AS(solve(q, req), SolverError);
    }
}
