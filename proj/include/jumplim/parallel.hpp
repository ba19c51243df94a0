#pragma once

#include <cstddef>
#include <functional>

namespace jumplim {

//! Run body(i) for i in [0, n) on up to `threads` workers.
//! Tasks are claimed dynamically; the body must write results by index so the
//! outcome does not depend on scheduling. threads <= 1 runs inline.
void parallel_for(std::size_t n, unsigned threads,
                  const std::function<void(std::size_t)>& body);

//! Worker count from the hardware, at least 1.
unsigned default_threads();

} // namespace jumplim
