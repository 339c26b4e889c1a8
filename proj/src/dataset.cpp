#include "gped/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "gped/errors.hpp"
#include "gped/textio.hpp"

namespace gped {

void validate_dataset(const Dataset& d) {
  require(d.features.rank() >= 2, ErrorKind::Dimension,
          "dataset '" + d.name + "' needs an instance axis plus features");
  require(d.features.dim(0) >= 1, ErrorKind::Dimension, "dataset '" + d.name + "' is empty");
  if (d.labeled()) {
    require(d.labels.size() == d.features.dim(0), ErrorKind::Contract,
            "dataset '" + d.name + "' has " + std::to_string(d.labels.size()) + " labels for " +
                std::to_string(d.features.dim(0)) + " instances");
    require(d.num_classes >= 1, ErrorKind::Contract,
            "labeled dataset '" + d.name + "' needs num_classes");
    for (int y : d.labels) {
      require(y >= 0 && y < d.num_classes, ErrorKind::Range,
              "dataset '" + d.name + "' label " + std::to_string(y) + " outside " +
                  std::to_string(d.num_classes) + " classes");
    }
  }
}

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& path, const char* field) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  require(in.gcount() == 4, ErrorKind::Format, "'" + path + "': truncated " + field);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
         std::uint32_t(b[3]);
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 const std::string& name, bool normalize) {
  std::ifstream in(images_path, std::ios::binary);
  require(in.good(), ErrorKind::Format, "cannot open image file '" + images_path + "'");
  const std::uint32_t magic = read_be32(in, images_path, "magic");
  require(magic == kImagesMagic, ErrorKind::Format,
          "'" + images_path + "': image magic is " + std::to_string(magic) + ", expected " +
              std::to_string(kImagesMagic));
  const std::uint32_t n = read_be32(in, images_path, "count");
  const std::uint32_t h = read_be32(in, images_path, "height");
  const std::uint32_t w = read_be32(in, images_path, "width");
  require(n >= 1 && h >= 1 && w >= 1, ErrorKind::Format,
          "'" + images_path + "': degenerate dimensions");

  Dataset d;
  d.name = name.empty() ? images_path : name;
  d.features = Tensor({n, 1, h, w});
  std::vector<unsigned char> row(static_cast<std::size_t>(h) * w);
  for (std::uint32_t i = 0; i < n; ++i) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
    require(in.gcount() == static_cast<std::streamsize>(row.size()), ErrorKind::Format,
            "'" + images_path + "': truncated pixel data at image " + std::to_string(i));
    double* dst = d.features.ptr() + static_cast<std::size_t>(i) * row.size();
    // true division: b / 255.0 is the canonical pixel value, and quantized
    // sources reproduce bit for bit only without the reciprocal shortcut
    if (normalize) {
      for (std::size_t p = 0; p < row.size(); ++p) dst[p] = row[p] / 255.0;
    } else {
      for (std::size_t p = 0; p < row.size(); ++p) dst[p] = row[p];
    }
  }

  if (!labels_path.empty()) {
    std::ifstream lin(labels_path, std::ios::binary);
    require(lin.good(), ErrorKind::Format, "cannot open label file '" + labels_path + "'");
    const std::uint32_t lmagic = read_be32(lin, labels_path, "magic");
    require(lmagic == kLabelsMagic, ErrorKind::Format,
            "'" + labels_path + "': label magic is " + std::to_string(lmagic) + ", expected " +
                std::to_string(kLabelsMagic));
    const std::uint32_t ln = read_be32(lin, labels_path, "count");
    require(ln == n, ErrorKind::Format,
            "'" + labels_path + "' holds " + std::to_string(ln) + " labels but '" + images_path +
                "' holds " + std::to_string(n) + " images");
    std::vector<unsigned char> raw(ln);
    lin.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    require(lin.gcount() == static_cast<std::streamsize>(raw.size()), ErrorKind::Format,
            "'" + labels_path + "': truncated label data");
    int max_label = 0;
    d.labels.reserve(ln);
    for (unsigned char c : raw) {
      d.labels.push_back(c);
      max_label = std::max(max_label, static_cast<int>(c));
    }
    d.num_classes = max_label + 1;
  }
  validate_dataset(d);
  return d;
}

void save_idx(const Dataset& d, const std::string& images_path, const std::string& labels_path) {
  validate_dataset(d);
  require(d.features.rank() == 4 && d.features.dim(1) == 1, ErrorKind::Dimension,
          "save_idx expects single-channel image features (N, 1, H, W)");
  const std::size_t n = d.features.dim(0), h = d.features.dim(2), w = d.features.dim(3);
  std::ofstream out(images_path, std::ios::binary);
  require(out.good(), ErrorKind::Format, "cannot open '" + images_path + "' for writing");
  write_be32(out, kImagesMagic);
  write_be32(out, static_cast<std::uint32_t>(n));
  write_be32(out, static_cast<std::uint32_t>(h));
  write_be32(out, static_cast<std::uint32_t>(w));
  std::vector<unsigned char> row(h * w);
  for (std::size_t i = 0; i < n; ++i) {
    const double* src = d.features.ptr() + i * h * w;
    for (std::size_t p = 0; p < row.size(); ++p) {
      const double v = std::round(src[p] * 255.0);
      row[p] = static_cast<unsigned char>(v < 0.0 ? 0.0 : (v > 255.0 ? 255.0 : v));
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  require(out.good(), ErrorKind::Format, "failed writing '" + images_path + "'");

  if (!labels_path.empty()) {
    require(d.labeled(), ErrorKind::Contract, "save_idx: dataset '" + d.name + "' has no labels");
    std::ofstream lout(labels_path, std::ios::binary);
    require(lout.good(), ErrorKind::Format, "cannot open '" + labels_path + "' for writing");
    write_be32(lout, kLabelsMagic);
    write_be32(lout, static_cast<std::uint32_t>(n));
    std::vector<unsigned char> raw(n);
    for (std::size_t i = 0; i < n; ++i) raw[i] = static_cast<unsigned char>(d.labels[i]);
    lout.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    require(lout.good(), ErrorKind::Format, "failed writing '" + labels_path + "'");
  }
}

Dataset flatten_features(const Dataset& d) {
  validate_dataset(d);
  Dataset out = d;
  out.features.shape = {d.features.dim(0), d.features.row_width()};
  return out;
}

Dataset subsample(const Dataset& d, std::size_t n, std::uint64_t seed) {
  validate_dataset(d);
  require(n >= 1 && n <= d.size(), ErrorKind::Range,
          "subsample of " + std::to_string(n) + " from " + std::to_string(d.size()));
  SeededRng rng(seed);
  const auto idx = rng.sample_without_replacement(d.size(), n);
  Dataset out;
  out.name = d.name;
  out.num_classes = d.num_classes;
  out.features = gather_rows(d.features, idx);
  if (d.labeled()) {
    out.labels.reserve(n);
    for (std::size_t i : idx) out.labels.push_back(d.labels[i]);
  }
  return out;
}

Dataset strip_labels(const Dataset& d) {
  Dataset out = d;
  out.labels.clear();
  out.num_classes = 0;
  return out;
}

Dataset apply_mask(const Dataset& d, std::size_t side, std::uint64_t seed) {
  validate_dataset(d);
  require(d.features.rank() >= 3, ErrorKind::Dimension,
          "apply_mask needs image features with spatial axes");
  const std::size_t h = d.features.dim(d.features.rank() - 2);
  const std::size_t w = d.features.dim(d.features.rank() - 1);
  require(side <= h && side <= w, ErrorKind::Range,
          "mask side " + std::to_string(side) + " exceeds image " + std::to_string(h) + "x" +
              std::to_string(w));
  Dataset out = d;
  if (side == 0) return out;
  const std::size_t n = d.size();
  const std::size_t channels = d.features.size() / (n * h * w);
  SeededRng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t y0 = rng.uniform_index(h - side + 1);
    const std::size_t x0 = rng.uniform_index(w - side + 1);
    for (std::size_t c = 0; c < channels; ++c) {
      double* img = out.features.ptr() + (i * channels + c) * h * w;
      for (std::size_t y = 0; y < side; ++y) {
        for (std::size_t x = 0; x < side; ++x) img[(y0 + y) * w + x0 + x] = 0.0;
      }
    }
  }
  return out;
}

Dataset gaussian_mixture(std::size_t classes, std::size_t dim, std::size_t n_per_class,
                         double radius, double sigma, std::uint64_t seed) {
  require(classes >= 2, ErrorKind::Range, "gaussian_mixture needs at least two classes");
  require(dim >= 2, ErrorKind::Range, "gaussian_mixture needs at least two dimensions");
  require(n_per_class >= 1, ErrorKind::Range, "gaussian_mixture needs instances per class");
  require(sigma > 0.0, ErrorKind::Range, "gaussian_mixture needs positive sigma");
  const std::size_t n = classes * n_per_class;
  Dataset d;
  d.name = "gaussian_mixture";
  d.num_classes = static_cast<int>(classes);
  d.features = Tensor({n, dim});
  d.labels.resize(n);
  SeededRng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = i % classes;
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / classes;
    d.labels[i] = static_cast<int>(k);
    double* row = d.features.ptr() + i * dim;
    row[0] = radius * std::cos(angle) + sigma * rng.normal();
    row[1] = radius * std::sin(angle) + sigma * rng.normal();
    for (std::size_t j = 2; j < dim; ++j) row[j] = sigma * rng.normal();
  }
  return d;
}

namespace {

// seven-segment layout: bit order A B C D E F G
constexpr unsigned char kDigitSegments[10] = {
    0b1111110,  // 0: ABCDEF
    0b0110000,  // 1: BC
    0b1101101,  // 2: ABDEG
    0b1111001,  // 3: ABCDG
    0b0110011,  // 4: BCFG
    0b1011011,  // 5: ACDFG
    0b1011111,  // 6: ACDEFG
    0b1110000,  // 7: ABC
    0b1111111,  // 8: all
    0b1111011,  // 9: ABCDFG
};

void fill_rect(double* img, std::size_t w, std::size_t y0, std::size_t x0, std::size_t rows,
               std::size_t cols, double value) {
  for (std::size_t y = 0; y < rows; ++y) {
    for (std::size_t x = 0; x < cols; ++x) img[(y0 + y) * w + x0 + x] = value;
  }
}

}  // namespace

Dataset synthetic_digits(std::size_t n, std::uint64_t seed, double noise) {
  require(n >= 1, ErrorKind::Range, "synthetic_digits needs at least one instance");
  require(noise >= 0.0 && noise < 1.0, ErrorKind::Range, "noise level must lie in [0, 1)");
  constexpr std::size_t kH = 28, kW = 28;
  constexpr std::size_t glyph_h = 18, glyph_w = 10;
  Dataset d;
  d.name = "synthetic_digits";
  d.num_classes = 10;
  d.features = Tensor({n, 1, kH, kW});
  d.labels.resize(n);
  SeededRng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const int digit = static_cast<int>(rng.uniform_index(10));
    const std::size_t y0 = 2 + rng.uniform_index(7);   // glyph top in [2, 8]
    const std::size_t x0 = 5 + rng.uniform_index(9);   // glyph left in [5, 13]
    const std::size_t t = 2 + rng.uniform_index(2);    // stroke thickness 2 or 3
    const double ink = rng.uniform(0.65, 1.0);
    d.labels[i] = digit;
    double* img = d.features.ptr() + i * kH * kW;

    const unsigned char segs = kDigitSegments[digit];
    const std::size_t half = glyph_h / 2;
    if (segs & 0b1000000) fill_rect(img, kW, y0, x0, t, glyph_w, ink);                        // A
    if (segs & 0b0100000) fill_rect(img, kW, y0, x0 + glyph_w - t, half, t, ink);             // B
    if (segs & 0b0010000) fill_rect(img, kW, y0 + half, x0 + glyph_w - t, half, t, ink);      // C
    if (segs & 0b0001000) fill_rect(img, kW, y0 + glyph_h - t, x0, t, glyph_w, ink);          // D
    if (segs & 0b0000100) fill_rect(img, kW, y0 + half, x0, half, t, ink);                    // E
    if (segs & 0b0000010) fill_rect(img, kW, y0, x0, half, t, ink);                           // F
    if (segs & 0b0000001) fill_rect(img, kW, y0 + half - t / 2, x0, t, glyph_w, ink);         // G

    if (noise > 0.0) {
      for (std::size_t p = 0; p < kH * kW; ++p) {
        img[p] = std::min(1.0, img[p] + rng.uniform(0.0, noise));
      }
    }
    // quantize so IDX round-trips reproduce the corpus exactly
    for (std::size_t p = 0; p < kH * kW; ++p) img[p] = std::round(img[p] * 255.0) / 255.0;
  }
  return d;
}

std::vector<std::size_t> minibatch_indices(SeededRng& rng, std::size_t n, std::size_t m) {
  require(m >= 1 && m <= n, ErrorKind::Range,
          "minibatch of " + std::to_string(m) + " from " + std::to_string(n));
  return rng.sample_without_replacement(n, m);
}

void export_csv(const Dataset& d, const std::string& path) {
  validate_dataset(d);
  require(d.labeled(), ErrorKind::Contract, "csv export needs a labeled dataset");
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::Format, "cannot open '" + path + "' for writing");
  const std::size_t width = d.features.row_width();
  for (std::size_t j = 0; j < width; ++j) out << "feature_" << j << ",";
  out << "label\n";
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double* row = d.features.ptr() + i * width;
    for (std::size_t j = 0; j < width; ++j) out << format_g17(row[j]) << ",";
    out << d.labels[i] << "\n";
  }
  require(out.good(), ErrorKind::Format, "failed writing '" + path + "'");
}

}  // namespace gped
