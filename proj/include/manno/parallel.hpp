#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace manno {

// Execution mode for the data-parallel kernels. Serial is the reference
// implementation; OpenMP distributes work across threads. Both modes share
// the same chunk structure and combine partial results in chunk order, so
// results are bit-identical regardless of mode or thread count.
enum class Exec { Serial, OpenMP };

Exec default_exec();
void set_default_exec(Exec e);

// Thread cap for OpenMP regions (0 = runtime default).
int exec_threads();
void set_exec_threads(int n);

// Runs fn(i) for i in [0, n). Results must be written to disjoint slots;
// there is no reduction here.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                  Exec ex = default_exec());

// Deterministic sum-reduction: conceptually
//   for item in [0, items): add_item(item, acc)
// where acc is a zeroed double[width] scratch per fixed-size chunk of items.
// Chunk partials are added into out[0..width) in ascending chunk index, so
// the floating-point reduction tree depends only on (items, chunk_size),
// never on the execution mode or thread count.
void chunked_accumulate(
    std::size_t items, std::size_t width, std::size_t chunk_size,
    const std::function<void(std::size_t item, double* acc)>& add_item,
    double* out, Exec ex = default_exec());

}  // namespace manno
