#include "defocus/threading.hpp"

#include <omp.h>

#include <cstdlib>
#include <string>

namespace defocus {

namespace {

int compute_max_threads() {
    int n = omp_get_max_threads();
    if (const char* env = std::getenv("DEFOCUS_RESTORE_THREADS")) {
        try {
            int cap = std::stoi(env);
            if (cap >= 1 && cap < n) n = cap;
        } catch (...) {
            // Unparsable cap: ignore and keep the OpenMP default.
        }
    }
    return n < 1 ? 1 : n;
}

}  // namespace

int max_threads() {
    static const int cached = compute_max_threads();
    return cached;
}

}  // namespace defocus
