#pragma once

#include <stdexcept>
#include <string>

namespace secsel {

inline constexpr const char* kLibraryVersion = "0.1.0";

// Error taxonomy. Everything thrown by the library derives from secsel::error.
struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Mismatched shapes: classes from different lattices, wrong vector arity.
struct structural_error : error {
  using error::error;
};

// Invalid configuration: bad lattice declarations, missing label rules,
// inconsistent scenario/requirements documents.
struct config_error : error {
  using error::error;
};

// Malformed input documents and files (JSON, CSV, checkpoints).
struct parse_error : error {
  using error::error;
};

// Constraint evaluation on incompatible operand types.
struct eval_error : error {
  using error::error;
};

// API misuse: acting on a terminal episode, sampling an empty buffer.
struct contract_error : error {
  using error::error;
};

}  // namespace secsel
