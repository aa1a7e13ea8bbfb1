#pragma once

#include <stdexcept>
#include <string>

namespace respose {

// Malformed input files, schema violations, mismatched dimensions.
class SchemaError : public std::runtime_error {
 public:
  explicit SchemaError(const std::string& what) : std::runtime_error(what) {}
};

// Checksum or version mismatch on serialized artifacts.
class FileIntegrityError : public std::runtime_error {
 public:
  explicit FileIntegrityError(const std::string& what) : std::runtime_error(what) {}
};

// A single sample that cannot be lifted (trunk precondition unmet).
class UnprocessableSample : public std::runtime_error {
 public:
  explicit UnprocessableSample(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values, singular matrices, diverging training.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace respose
