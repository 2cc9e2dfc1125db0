#pragma once

#include <stdexcept>
#include <string>

namespace gridsync {

// Invalid configuration or violated call contract; raised before any state changes.
struct config_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A non-finite value reached a control block. NaNs must never circulate in the loop.
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// An operation ran before its inputs exist (e.g. PLL stepped before the first
// frequency estimate).
struct not_ready_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// The loop pinned its frequency command at the clamp for too long; the chosen
// gains do not stabilize it.
struct divergence_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// No validated zero crossing arrived before the configured deadline.
struct timeout_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File output failure; message carries the path.
struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace gridsync
