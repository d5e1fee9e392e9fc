#pragma once

// Error taxonomy shared by the library and the CLI. Each class maps to one
// process exit code so scripted runs can tell misconfiguration from bad data
// from numerical failure.

#include <stdexcept>
#include <string>

namespace swapvae {

// Invalid configuration: bad schema, unknown keys, inconsistent sizes. Exit 2.
struct config_error : std::runtime_error {
  explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

// Shape mismatch between tensors; a configuration/programming contract breach. Exit 2.
struct shape_error : config_error {
  explicit shape_error(const std::string& what) : config_error(what) {}
};

// Unreadable, malformed, or semantically invalid input data. Exit 3.
struct data_error : std::runtime_error {
  explicit data_error(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values, divergence, domain violations during compute. Exit 4.
struct numeric_error : std::runtime_error {
  explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace swapvae
