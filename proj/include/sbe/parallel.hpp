#pragma once

#include <cstddef>
#include <functional>

namespace sbe {

/// Caps the number of worker threads used by every parallel section.
/// Zero restores the default (hardware concurrency).
void set_max_threads(unsigned n);
unsigned max_threads();

/// Runs body(begin, end) over a static partition of [0, n). Work items must
/// be independent; results never depend on the partition.
void parallel_for(std::size_t n,
                  const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace sbe
