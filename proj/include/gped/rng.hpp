#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace gped {

// Derives an independent stream seed from a master seed and a role label
// ("data", "teacher", "student", "eval", ...). FNV-1a over the label feeds a
// splitmix64 finalizer so that distinct labels decorrelate even for adjacent
// master seeds.
std::uint64_t derive_seed(std::uint64_t master, std::string_view label);

struct NamedSeeds {
  std::uint64_t data = 0;
  std::uint64_t teacher = 0;
  std::uint64_t student = 0;
  std::uint64_t eval = 0;
};

NamedSeeds split_seeds(std::uint64_t master);

// Deterministic random source. All real-valued mappings are implemented here
// rather than with std distributions so that streams are reproducible by
// construction, not by standard-library implementation detail.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // [0, 1), 53-bit resolution
  double uniform();
  double uniform(double lo, double hi);

  // standard normal via Box-Muller, no spare caching: every call consumes
  // exactly two uniforms, which keeps replayed streams aligned.
  double normal();
  double normal(double mean, double stddev);

  // unbiased draw from [0, n) by rejection
  std::size_t uniform_index(std::size_t n);

  // uniform random subset of size k from [0, n); k == n yields a permutation
  // covering every index exactly once. Output order is deterministic.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

  void fill_normal(double* out, std::size_t count, double mean, double stddev);

 private:
  std::mt19937_64 engine_;
};

}  // namespace gped
