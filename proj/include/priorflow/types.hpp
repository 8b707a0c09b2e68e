#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace priorflow {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Points are stored column-wise: one column per sample.
using PointBatch = Eigen::MatrixXd;

using AttributeId = std::string;

/// Every randomized operation draws from a caller-owned stream of this type.
using Rng = std::mt19937_64;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class UnknownAttributeError : public std::invalid_argument {
 public:
  explicit UnknownAttributeError(const AttributeId& id)
      : std::invalid_argument("unknown attribute '" + id + "'"), id_(id) {}
  const AttributeId& id() const noexcept { return id_; }

 private:
  AttributeId id_;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (dataset files, model files).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void require_dimension(std::size_t expected, std::size_t actual, const char* what);

}  // namespace priorflow
