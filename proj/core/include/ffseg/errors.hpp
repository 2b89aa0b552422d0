#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ffseg {

// Input data violates a value invariant (non-finite depth, negative
// confidence, ...).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes or counts of inputs do not line up (mismatched grids, missing view).
class StructuralError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller-supplied arguments are malformed (duplicate ids, bad prompt).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BehindCameraError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InsufficientDataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class OptimizationError : public std::runtime_error {
 public:
  OptimizationError(int iteration, std::string block, const std::string& what)
      : std::runtime_error(what), iteration_(iteration),
        block_(std::move(block)) {}

  int iteration() const { return iteration_; }
  const std::string& block() const { return block_; }

 private:
  int iteration_;
  std::string block_;
};

// Malformed persisted data. Carries the byte offset where decoding failed and
// the logical block being read.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& block, std::uint64_t offset,
              const std::string& detail)
      : std::runtime_error("format error in " + block + " at byte " +
                           std::to_string(offset) + ": " + detail),
        block_(block), offset_(offset) {}

  const std::string& block() const { return block_; }
  std::uint64_t offset() const { return offset_; }

 private:
  std::string block_;
  std::uint64_t offset_;
};

}  // namespace ffseg
