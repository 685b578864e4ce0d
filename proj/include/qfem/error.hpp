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
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qfem {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;

    /// Short machine-readable category, printed by the CLI as the error prefix.
    virtual const char* kind() const noexcept { return "error"; }
};

class MeshError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "mesh"; }
};

class GeometryError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "geometry"; }
};

class QuboError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "qubo"; }
};

/// A solver bitstring whose vertex blocks are not all one-hot.
class InfeasibleError : public QuboError {
public:
    InfeasibleError(const std::string& what, std::vector<std::size_t> vertices)
        : QuboError(what), violating_vertices_(std::move(vertices)) {}

    const char* kind() const noexcept override { return "infeasible"; }
    const std::vector<std::size_t>& violating_vertices() const noexcept { return violating_vertices_; }

private:
    std::vector<std::size_t> violating_vertices_;
};

class SolverError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "solver"; }
};

class ConfigError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "config"; }
};

class IoError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "io"; }
};

/// Error raised inside one optimizer iteration; carries the iteration index.
class IterationError : public Error {
public:
    IterationError(std::size_t iteration, const std::string& kind, const std::string& what)
        : Error("iteration " + std::to_string(iteration) + ": " + what),
          iteration_(iteration),
          inner_kind_(kind) {}

    const char* kind() const noexcept override { return inner_kind_.c_str(); }
    std::size_t iteration() const noexcept { return iteration_; }

private:
    std::size_t iteration_;
    std::string inner_kind_;
};

/// Error re-raised with the category of an earlier failure.
class TaggedError : public Error {
public:
    TaggedError(std::string kind, const std::string& what) : Error(what), kind_(std::move(kind)) {}
    const char* kind() const noexcept override { return kind_.c_str(); }

private:
    std::string kind_;
};

}  // namespace qfem
