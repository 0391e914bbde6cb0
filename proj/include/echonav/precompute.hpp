#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>

#include "echonav/acoustics.hpp"
#include "echonav/grid.hpp"

namespace echonav {

struct PrecomputeOptions {
  int threads = 0;
  /// Called after every appended pair with (pairs in container, total pairs).
  std::function<void(std::size_t, std::size_t)> progress;
  /// Stop after this many newly computed pairs, leaving the container unfinalized (0 = no limit).
  /// Used to exercise resumption.
  std::size_t max_new_pairs = 0;
};

struct PrecomputeStats {
  std::size_t computed = 0;
  std::size_t skipped = 0;
  bool finished = false;
};

/// Computes the IR of every ordered (source, listener) node pair into the SSIR container at
/// `out`, resuming from whatever the container already holds. Pairs are written in source-major
/// order regardless of thread count, so output bytes do not depend on `threads`.
PrecomputeStats precompute_grid(const AcousticScene& scene, const NavGraph& graph, const SimParams& params,
                                const std::filesystem::path& out, const PrecomputeOptions& options = {});

}  // namespace echonav
