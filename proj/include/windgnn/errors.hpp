// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace windgnn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

/// Raised when a tensor acquires a NaN or Inf entry, or a gradient goes non-finite.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Softmax requested over an empty neighborhood. Callers that own a fallback
/// (zero output for front-row turbines) never let this escape.
class DegenerateNeighborhood : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class GeometryError : public Error {
 public:
  using Error::Error;
};

class InfeasibleLayout : public Error {
 public:
  InfeasibleLayout(std::size_t farm, const std::string& what)
      : Error(what), farm_index(farm) {}
  std::size_t farm_index;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

class NoAttentionError : public Error {
 public:
  using Error::Error;
};

}  // namespace windgnn
