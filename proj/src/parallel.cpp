#include "manno/parallel.hpp"

#include <algorithm>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace manno {

namespace {

Exec g_default_exec =
#ifdef _OPENMP
    Exec::OpenMP;
#else
    Exec::Serial;
#endif

int g_threads = 0;

bool use_openmp(Exec ex) {
#ifdef _OPENMP
  return ex == Exec::OpenMP;
#else
  (void)ex;
  return false;
#endif
}

}  // namespace

Exec default_exec() { return g_default_exec; }
void set_default_exec(Exec e) { g_default_exec = e; }

int exec_threads() { return g_threads; }
void set_exec_threads(int n) { g_threads = n < 0 ? 0 : n; }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                  Exec ex) {
  if (n == 0) return;
  if (use_openmp(ex)) {
#ifdef _OPENMP
    // exceptions may not unwind out of the parallel region; stash the first
    // one and rethrow it on the calling thread
    std::exception_ptr err;
    auto guarded = [&](long long i) {
      try {
        fn(static_cast<std::size_t>(i));
      } catch (...) {
#pragma omp critical(manno_parallel_for_err)
        if (!err) err = std::current_exception();
      }
    };
    const long long m = static_cast<long long>(n);
    if (g_threads > 0) {
#pragma omp parallel for schedule(static) num_threads(g_threads)
      for (long long i = 0; i < m; ++i) guarded(i);
    } else {
#pragma omp parallel for schedule(static)
      for (long long i = 0; i < m; ++i) guarded(i);
    }
    if (err) std::rethrow_exception(err);
    return;
#endif
  }
  for (std::size_t i = 0; i < n; ++i) fn(i);
}

void chunked_accumulate(
    std::size_t items, std::size_t width, std::size_t chunk_size,
    const std::function<void(std::size_t item, double* acc)>& add_item,
    double* out, Exec ex) {
  if (items == 0 || width == 0) return;
  if (chunk_size == 0) chunk_size = 1;

  const std::size_t n_chunks = (items + chunk_size - 1) / chunk_size;

  // Cap the scratch to a wave of chunks so memory stays O(wave * width)
  // instead of O(n_chunks * width). The fold into `out` always walks chunks
  // in ascending index, which pins the floating-point summation order.
  std::size_t wave = std::min<std::size_t>(n_chunks, 64);
  std::vector<double> scratch(wave * width);

  for (std::size_t wave_start = 0; wave_start < n_chunks; wave_start += wave) {
    const std::size_t wave_count = std::min(wave, n_chunks - wave_start);
    std::memset(scratch.data(), 0, wave_count * width * sizeof(double));

    parallel_for(
        wave_count,
        [&](std::size_t w) {
          const std::size_t c = wave_start + w;
          double* acc = scratch.data() + w * width;
          const std::size_t begin = c * chunk_size;
          const std::size_t end = std::min(items, begin + chunk_size);
          for (std::size_t item = begin; item < end; ++item)
            add_item(item, acc);
        },
        ex);

    for (std::size_t w = 0; w < wave_count; ++w) {
      const double* acc = scratch.data() + w * width;
      for (std::size_t j = 0; j < width; ++j) out[j] += acc[j];
    }
  }
}

}  // namespace manno
