#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace shrinkclock {

// Input text could not be understood (Newick, FASTA, config).
class Parse_error : public std::runtime_error {
 public:
  Parse_error(const std::string& what, std::size_t offset)
      : std::runtime_error{what + " (at offset " + std::to_string(offset) + ")"}, offset_{offset} {}

  auto offset() const -> std::size_t { return offset_; }

 private:
  std::size_t offset_;
};

// Inputs are well-formed but inconsistent or out of domain.
class Data_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failure during evaluation (underflow, overflow, divergence).
class Numeric_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace shrinkclock
