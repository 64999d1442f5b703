#pragma once

#include <stdexcept>
#include <string>

namespace ifsdf {

// Bad user input: files, configs, argument preconditions. CLI maps this to exit 2.
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure while optimizing. CLI maps this to exit 3.
class TrainingError : public std::runtime_error {
 public:
  explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

// Vanishing field gradient where a normal is required; signals field collapse.
class DegenerateGradientError : public TrainingError {
 public:
  explicit DegenerateGradientError(const std::string& msg) : TrainingError(msg) {}
};

}  // namespace ifsdf
