#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

namespace daf {

using Index = Eigen::Index;

// All dense storage is row-major f64: samples are rows, matmul follows the
// mathematical (rows x cols) convention without transposition surprises.
using RowMatrixXd =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Dimension mismatch between operands; message names both shapes.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A precondition stated by the API contract was violated by the caller.
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// Invalid or inconsistent user-facing configuration (maps to exit code 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite value produced at runtime (maps to exit code 3).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

[[nodiscard]] inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Derives an independent seed stream from (base, salt, index). Used so that
// per-task, per-purpose RNG draws do not shift when unrelated draws are added.
[[nodiscard]] inline std::uint64_t derive_seed(std::uint64_t base,
                                               std::uint64_t salt,
                                               std::uint64_t index = 0) {
  return splitmix64(splitmix64(base ^ (salt * 0x9e3779b97f4a7c15ull)) + index);
}

[[nodiscard]] inline std::uint64_t fnv1a64(const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

[[nodiscard]] std::string shape_string(std::span<const Index> shape);

// %.17g rendering: shortest text that round-trips an f64 on reparse.
[[nodiscard]] std::string format_double(double v);

}  // namespace daf
