#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace lab {

// SplitMix64 stream. Distribution code is written out explicitly so that
// identical seeds give identical doubles on every platform; std::
// distributions are implementation-defined and would break byte-level
// reproducibility of reports.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0,1)
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  // standard normal, Box-Muller on explicit uniforms
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  int uniform_int(int n) {  // in [0, n)
    return int(next_u64() % std::uint64_t(n));
  }

  // Derive an independent stream; used for per-chunk RNGs so results do not
  // depend on the number of worker threads.
  static Rng stream(std::uint64_t seed, std::uint64_t index) {
    Rng mix(seed ^ (0x8f1bbcdcbfa53e0bULL * (index + 1)));
    mix.next_u64();
    return mix;
  }

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Number of worker threads: LAB_THREADS if set, else hardware concurrency.
int worker_count();

// Runs fn(chunk_index) for chunk_index in [0, n_chunks) on the worker pool.
// Chunk decomposition is fixed by the caller, so results are identical for
// any thread count as long as fn(i) writes only to slot i of its output.
void parallel_chunks(int n_chunks, const std::function<void(int)>& fn);

}  // namespace lab
