#pragma once

#include <cstdint>

namespace readout {

/// Work limits for the exact algorithms. Exceeding one raises WorkCapExceeded
/// before any heavy computation starts.
struct RunCaps {
  double max_sequences = 1e7;  // output sequences an enumeration may visit
  double max_nodes = 1e8;      // belief nodes a tree search may visit
};

/// Execution mode for the data-parallel kernels. Serial runs the identical
/// task decomposition sequentially and must produce bit-identical results;
/// it is kept as the reference implementation for the tests and benchmarks.
enum class Exec { serial, parallel };

}  // namespace readout
