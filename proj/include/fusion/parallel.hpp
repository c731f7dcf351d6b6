#pragma once

#include <exception>

#include "fusion/kernel.hpp"

namespace fusion {

// Runs f(0..n-1) serially or with an OpenMP loop; the first exception thrown
// inside the parallel region is rethrown afterwards.
template <class F>
void for_each_index(long n, Exec exec, F&& f) {
  if (exec == Exec::serial) {
    for (long i = 0; i < n; ++i) f(i);
    return;
  }
  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic, 8)
  for (long i = 0; i < n; ++i) {
    try {
      f(i);
    } catch (...) {
#pragma omp critical(fusion_for_each_error)
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
}

}  // namespace fusion
