#pragma once

#include <stdexcept>
#include <string>

namespace hetcomm {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  ShapeError(std::string op, std::string shapes)
      : Error("shape mismatch in " + op + ": " + shapes),
        op_(std::move(op)),
        shapes_(std::move(shapes)) {}

  const std::string& op() const noexcept { return op_; }
  const std::string& shapes() const noexcept { return shapes_; }

 private:
  std::string op_;
  std::string shapes_;
};

class GraphError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class EnvError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace hetcomm
