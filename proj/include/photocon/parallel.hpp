#pragma once

#include <vector>

namespace photocon {

/// Loop driver for the per-row kernels. `serial` is the reference path; `parallel`
/// spreads rows over OpenMP threads. Both produce bitwise-identical results because
/// every kernel writes per-row outputs and row partials are summed in row order.
enum class Exec { serial, parallel };

/// Process-wide default used by operations that do not take an explicit policy.
Exec default_exec();
void set_default_exec(Exec exec);

namespace detail {
void for_rows_omp(int rows, void (*thunk)(void*, int), void* ctx);
}

template <typename Fn>
void for_rows(int rows, Exec exec, Fn&& fn) {
  if (exec == Exec::serial || rows < 2) {
    for (int i = 0; i < rows; ++i) fn(i);
    return;
  }
  auto thunk = [](void* ctx, int i) { (*static_cast<Fn*>(ctx))(i); };
  detail::for_rows_omp(rows, thunk, &fn);
}

/// Sums per-row partials in row order; deterministic regardless of thread count.
template <typename Fn>
double reduce_rows(int rows, Exec exec, Fn&& row_sum) {
  std::vector<double> partial(static_cast<std::size_t>(rows), 0.0);
  for_rows(rows, exec, [&](int i) { partial[static_cast<std::size_t>(i)] = row_sum(i); });
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

}  // namespace photocon
