#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gped/rng.hpp"
#include "gped/tensor.hpp"

namespace gped {

struct Dataset {
  std::string name;
  Tensor features;          // instance axis first: (N, D) or (N, C, H, W)
  std::vector<int> labels;  // empty for unlabeled collections
  int num_classes = 0;      // 0 when unlabeled

  std::size_t size() const { return features.rank() ? features.dim(0) : 0; }
  bool labeled() const { return !labels.empty(); }
};

void validate_dataset(const Dataset& d);

// IDX containers, big-endian: images magic 0x00000803 with dims (N, H, W),
// labels magic 0x00000801 with dim (N). Pixels load as doubles, divided by
// 255 when `normalize`. Features come out as (N, 1, H, W).
Dataset load_idx(const std::string& images_path, const std::string& labels_path = "",
                 const std::string& name = "", bool normalize = true);

// Writes features quantized back to bytes (round(v * 255), clamped).
void save_idx(const Dataset& d, const std::string& images_path,
              const std::string& labels_path = "");

// (N, C, H, W) -> (N, C*H*W); no data movement beyond the copy
Dataset flatten_features(const Dataset& d);

Dataset subsample(const Dataset& d, std::size_t n, std::uint64_t seed);
Dataset strip_labels(const Dataset& d);

// Zeroes a side x side patch at a uniformly random position per image,
// drawn once at construction. Masking rate r = side^2 / (H * W).
Dataset apply_mask(const Dataset& d, std::size_t side, std::uint64_t seed);

// k isotropic Gaussian blobs with means spread on a circle of `radius` in
// the first two feature axes (remaining axes are pure noise).
Dataset gaussian_mixture(std::size_t classes, std::size_t dim, std::size_t n_per_class,
                         double radius, double sigma, std::uint64_t seed);

// Deterministic 28x28 ten-class digit corpus: seven-segment style glyphs
// with per-image shift, stroke thickness, intensity, and additive noise.
Dataset synthetic_digits(std::size_t n, std::uint64_t seed, double noise = 0.15);

std::vector<std::size_t> minibatch_indices(SeededRng& rng, std::size_t n, std::size_t m);

// Synthetic-data interchange: header feature_0,...,feature_{D-1},label.
void export_csv(const Dataset& d, const std::string& path);

}  // namespace gped
