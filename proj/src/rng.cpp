#include "gped/rng.hpp"

#include <cmath>
#include <numbers>
#include <unordered_set>

#include "gped/errors.hpp"

namespace gped {

namespace {

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::string_view label) {
  return splitmix64(splitmix64(master) ^ fnv1a64(label));
}

NamedSeeds split_seeds(std::uint64_t master) {
  NamedSeeds s;
  s.data = derive_seed(master, "data");
  s.teacher = derive_seed(master, "teacher");
  s.student = derive_seed(master, "student");
  s.eval = derive_seed(master, "eval");
  return s;
}

double SeededRng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double SeededRng::uniform(double lo, double hi) {
  require(lo < hi, ErrorKind::Range, "uniform(lo, hi) needs lo < hi");
  return lo + (hi - lo) * uniform();
}

double SeededRng::normal() {
  // 1 - u keeps the log argument in (0, 1]
  double u1 = 1.0 - uniform();
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double SeededRng::normal(double mean, double stddev) {
  return mean + stddev * normal();
}

std::size_t SeededRng::uniform_index(std::size_t n) {
  require(n > 0, ErrorKind::Range, "uniform_index needs n > 0");
  const std::uint64_t span = n;
  const std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % span;
  std::uint64_t draw;
  do {
    draw = engine_();
  } while (draw >= limit);
  return static_cast<std::size_t>(draw % span);
}

std::vector<std::size_t> SeededRng::sample_without_replacement(std::size_t n, std::size_t k) {
  require(k <= n, ErrorKind::Range, "sample_without_replacement needs k <= n");
  std::vector<std::size_t> out;
  out.reserve(k);
  if (k * 2 <= n) {
    // Floyd's algorithm: O(k) draws, exactly uniform over subsets.
    std::unordered_set<std::size_t> seen;
    seen.reserve(k * 2);
    for (std::size_t j = n - k; j < n; ++j) {
      std::size_t t = uniform_index(j + 1);
      if (seen.insert(t).second) {
        out.push_back(t);
      } else {
        seen.insert(j);
        out.push_back(j);
      }
    }
  } else {
    // partial Fisher-Yates; k == n yields a uniformly random permutation
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    for (std::size_t i = 0; i < k; ++i) {
      std::size_t j = i + uniform_index(n - i);
      std::swap(pool[i], pool[j]);
      out.push_back(pool[i]);
    }
  }
  return out;
}

void SeededRng::fill_normal(double* out, std::size_t count, double mean, double stddev) {
  for (std::size_t i = 0; i < count; ++i) out[i] = mean + stddev * normal();
}

}  // namespace gped
