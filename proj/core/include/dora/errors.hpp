#pragma once

#include <stdexcept>
#include <string>

namespace dora {

/// Bad configuration values or malformed config files.
class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Missing, unreadable or malformed input data (frames, checkpoints, ...).
class data_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values encountered during numeric computation.
/// `layer` is the transformer block index when the failure happened inside
/// the encoder, -1 otherwise.
class numeric_error : public std::runtime_error {
 public:
  explicit numeric_error(const std::string& msg, int layer_index = -1)
      : std::runtime_error(msg), layer(layer_index) {}
  int layer;
};

}  // namespace dora
