#pragma once

namespace defocus {

// Worker count for OpenMP regions: omp_get_max_threads() capped by the
// DEFOCUS_RESTORE_THREADS environment variable (read once). Always >= 1.
int max_threads();

}  // namespace defocus
