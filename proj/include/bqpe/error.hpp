// Copyright 2026 The bqpe Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace bqpe {

/// Process exit codes used by the command line runner. Library errors carry one
/// of these so the CLI can map an exception to a status without a lookup table.
enum class ExitCode : int {
    ok = 0,
    config = 2,
    dimension = 3,
    integrator = 4,
    selection = 5,
};

class Error : public std::runtime_error {
   public:
    Error(const std::string &kind, const std::string &what, ExitCode code)
        : std::runtime_error(what), kind_(kind), code_(code) {
    }
    const std::string &kind() const noexcept {
        return kind_;
    }
    ExitCode exit_code() const noexcept {
        return code_;
    }

   private:
    std::string kind_;
    ExitCode code_;
};

struct InvalidDimension : Error {
    explicit InvalidDimension(const std::string &w) : Error("invalid-dimension", w, ExitCode::dimension) {
    }
};

/// Truncation too small for the requested state or channel. `leaked` is the
/// probability weight that fell outside the truncated space.
struct InsufficientDimension : Error {
    InsufficientDimension(const std::string &w, double leaked_weight)
        : Error("insufficient-dimension", w, ExitCode::dimension), leaked(leaked_weight) {
    }
    double leaked;
};

struct CutoffError : Error {
    explicit CutoffError(const std::string &w) : Error("cutoff", w, ExitCode::dimension) {
    }
};

struct InvalidState : Error {
    explicit InvalidState(const std::string &w) : Error("invalid-state", w, ExitCode::dimension) {
    }
};

struct NumericError : Error {
    explicit NumericError(const std::string &w) : Error("numeric", w, ExitCode::integrator) {
    }
};

struct IntegratorError : Error {
    explicit IntegratorError(const std::string &w) : Error("integrator", w, ExitCode::integrator) {
    }
};

struct InvalidArgument : Error {
    explicit InvalidArgument(const std::string &w) : Error("invalid-argument", w, ExitCode::config) {
    }
};

struct ConfigError : Error {
    explicit ConfigError(const std::string &w) : Error("config", w, ExitCode::config) {
    }
};

struct PlanError : Error {
    explicit PlanError(const std::string &w) : Error("plan", w, ExitCode::config) {
    }
};

struct UnreachableTrajectory : Error {
    UnreachableTrajectory(const std::string &w, double p)
        : Error("unreachable-trajectory", w, ExitCode::selection), probability(p) {
    }
    double probability;
};

struct SelectionFailure : Error {
    SelectionFailure(const std::string &w, std::size_t attempts_made, std::size_t accepted_count)
        : Error("selection-failure", w, ExitCode::selection), attempts(attempts_made), accepted(accepted_count) {
    }
    std::size_t attempts;
    std::size_t accepted;
};

struct UndefinedReference : Error {
    explicit UndefinedReference(const std::string &w) : Error("undefined-reference", w, ExitCode::dimension) {
    }
};

struct EnumerationCost : Error {
    explicit EnumerationCost(const std::string &w) : Error("enumeration-cost", w, ExitCode::config) {
    }
};

/// A staged detection whose outcome sits between residue bins.
struct LowConfidence : Error {
    LowConfidence(const std::string &w, std::vector<double> raw_thetas)
        : Error("low-confidence", w, ExitCode::selection), thetas(std::move(raw_thetas)) {
    }
    std::vector<double> thetas;
};

}  // namespace bqpe
