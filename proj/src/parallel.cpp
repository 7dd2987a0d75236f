#include "photocon/parallel.hpp"

#include <atomic>

#include "photocon/grid.hpp"

namespace photocon {

namespace {
std::atomic<Exec> g_default_exec{Exec::parallel};
}

Exec default_exec() { return g_default_exec.load(); }
void set_default_exec(Exec exec) { g_default_exec.store(exec); }

namespace detail {
void for_rows_omp(int rows, void (*thunk)(void*, int), void* ctx) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < rows; ++i) thunk(ctx, i);
}
}  // namespace detail

double ErrorMap::valid_mean() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < value.size(); ++k) {
    if (valid[k]) {
      sum += value[k];
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

std::size_t ErrorMap::valid_count() const {
  std::size_t n = 0;
  for (auto v : valid.data) n += v ? 1 : 0;
  return n;
}

}  // namespace photocon
