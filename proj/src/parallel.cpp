#include "msno/parallel.hpp"

#include <cstdlib>
#include <string>

#include <Eigen/Core>
#ifdef _OPENMP
#include <omp.h>
#endif

namespace msno {

bool strict_determinism() {
  const char* v = std::getenv("MSNO_STRICT_DETERMINISM");
  return v != nullptr && std::string(v) == "1";
}

int worker_count() {
  if (strict_determinism()) return 1;
  if (const char* v = std::getenv("MSNO_THREADS")) {
    int n = std::atoi(v);
    if (n >= 1) return n;
  }
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void configure_threading() {
#ifdef _OPENMP
  omp_set_num_threads(worker_count());
#endif
  // Outer loops own the parallelism; Eigen products stay serial.
  Eigen::setNbThreads(1);
}

}  // namespace msno
