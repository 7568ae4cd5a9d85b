#pragma once

namespace msno {

// Worker count for data-parallel loops. Honors MSNO_THREADS and
// MSNO_STRICT_DETERMINISM=1 (the latter forces 1).
int worker_count();

// True when MSNO_STRICT_DETERMINISM=1: all reductions must run single-threaded.
bool strict_determinism();

// Applies the policy above to OpenMP and Eigen. Idempotent; call at entry points.
void configure_threading();

}  // namespace msno
