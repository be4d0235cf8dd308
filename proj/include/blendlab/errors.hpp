// Copyright (C) 2026 blendlab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace blendlab {

/// Invalid user-supplied configuration. `field` is a dotted path such as
/// "concepts[1].covariances"; `line` is set when the failure is syntactic.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field, const std::string& message, std::optional<std::size_t> line = {})
        : std::runtime_error(format(field, message, line)), field_(std::move(field)), line_(line)
    {
    }

    const std::string& field() const noexcept { return field_; }
    std::optional<std::size_t> line() const noexcept { return line_; }

private:
    static std::string format(const std::string& field, const std::string& message,
                              std::optional<std::size_t> line)
    {
        std::string out;
        if (line) {
            out += "line " + std::to_string(*line) + ": ";
        }
        if (!field.empty()) {
            out += field + ": ";
        }
        return out + message;
    }

    std::string field_;
    std::optional<std::size_t> line_;
};

/// A latent went non-finite. Carries the chain and timestep when known.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& message) : std::runtime_error(message) {}

    NumericalError(std::size_t chain, int timestep, const std::string& message)
        : std::runtime_error("chain " + std::to_string(chain) + ", timestep " + std::to_string(timestep) +
                             ": " + message),
          chain_(chain), timestep_(timestep)
    {
    }

    std::optional<std::size_t> chain() const noexcept { return chain_; }
    std::optional<int> timestep() const noexcept { return timestep_; }

private:
    std::optional<std::size_t> chain_;
    std::optional<int> timestep_;
};

} // namespace blendlab
