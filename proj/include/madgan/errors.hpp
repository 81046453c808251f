#pragma once

#include <stdexcept>
#include <string>

namespace madgan {

// Error taxonomy shared by the whole pipeline. Catch sites usually only
// distinguish "bad input data" from "bad configuration" from "math blew up",
// so these stay flat.

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error("io: " + msg) {}
};

struct DataContractError : std::runtime_error {
  explicit DataContractError(const std::string& msg)
      : std::runtime_error("data contract: " + msg) {}
};

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error("shape: " + msg) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error("config: " + msg) {}
};

struct ProtocolError : std::runtime_error {
  explicit ProtocolError(const std::string& msg) : std::runtime_error("protocol: " + msg) {}
};

struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& msg) : std::runtime_error("numerical: " + msg) {}
};

}  // namespace madgan
