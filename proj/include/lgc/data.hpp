// SPDX-License-Identifier: Apache-2.0
/**
 * @file   data.hpp
 * @brief  CIFAR-10 binary ingestion, augmentation, normalization and a
 *         procedural 6-class 64x64 dataset.
 *
 * Images are kept in [0, 1]; normalization statistics travel with the
 * dataset and are applied when a batch is assembled, after augmentation.
 */
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lgc/error.hpp"
#include "lgc/tensor.hpp"

namespace lgc {

struct LabeledImage {
  Tensor pixels; // (1, 3, H, W), values in [0, 1]
  int label = 0;
};

enum class Split { Train, Test };

/// Per-channel statistics, always taken from the training split.
struct Normalization {
  std::vector<double> mean;
  std::vector<double> stddev;
};

struct Dataset {
  std::vector<LabeledImage> images;
  Split split = Split::Train;
  int num_classes = 10;
  std::optional<Normalization> normalization;

  std::size_t size() const { return images.size(); }
  bool empty() const { return images.empty(); }
};

// ---------------------------------------------------------------------------
// CIFAR-10 binary format: records of 1 label byte followed by 3072 pixel
// bytes, channel-major (R, G, B), row-major 32x32 within each channel.

inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarPixels = 3 * kCifarSide * kCifarSide;
inline constexpr std::size_t kCifarRecord = 1 + kCifarPixels;
inline constexpr std::size_t kCifarRecordsPerFile = 10000;

inline LabeledImage decode_cifar_record(std::span<const std::uint8_t> record,
                                        const std::string &source = "") {
  if (record.size() != kCifarRecord)
    throw IngestionError("CIFAR record must be 3073 bytes");
  if (record[0] > 9)
    throw IngestionError("corrupt CIFAR record" +
                         (source.empty() ? "" : " in " + source) +
                         ": label byte " + std::to_string(record[0]));
  LabeledImage img{Tensor(Shape{1, 3, kCifarSide, kCifarSide}), record[0]};
  for (std::size_t i = 0; i < kCifarPixels; ++i)
    img.pixels[i] = static_cast<float>(record[1 + i]) / 255.0f;
  return img;
}

/// Inverse of decode_cifar_record for images whose pixels are k/255.
inline std::vector<std::uint8_t> encode_cifar_record(const LabeledImage &img) {
  if (img.pixels.shape() != Shape{1, 3, kCifarSide, kCifarSide})
    throw ShapeError("CIFAR records hold 3x32x32 images");
  std::vector<std::uint8_t> out(kCifarRecord);
  out[0] = static_cast<std::uint8_t>(img.label);
  for (std::size_t i = 0; i < kCifarPixels; ++i)
    out[1 + i] = static_cast<std::uint8_t>(
        std::lround(std::clamp(img.pixels[i], 0.0f, 1.0f) * 255.0f));
  return out;
}

/// Reads one batch file. `expected_records` of 0 accepts any whole number.
inline std::vector<LabeledImage>
load_cifar_batch(const std::filesystem::path &file,
                 std::size_t expected_records = kCifarRecordsPerFile) {
  std::ifstream in(file, std::ios::binary);
  if (!in)
    throw IngestionError("cannot open CIFAR batch " + file.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  const std::size_t want = expected_records * kCifarRecord;
  if ((expected_records && bytes.size() != want) || bytes.empty() ||
      bytes.size() % kCifarRecord != 0)
    throw IngestionError("CIFAR batch " + file.string() + " has " +
                         std::to_string(bytes.size()) + " bytes, expected " +
                         (expected_records ? std::to_string(want)
                                           : "a multiple of 3073"));
  std::vector<LabeledImage> images;
  images.reserve(bytes.size() / kCifarRecord);
  for (std::size_t off = 0; off < bytes.size(); off += kCifarRecord)
    images.push_back(decode_cifar_record(
        std::span<const std::uint8_t>(bytes.data() + off, kCifarRecord),
        file.string()));
  return images;
}

inline void write_cifar_batch(const std::filesystem::path &file,
                              std::span<const LabeledImage> images) {
  std::ofstream out(file, std::ios::binary);
  if (!out)
    throw IngestionError("cannot write " + file.string());
  for (const auto &img : images) {
    const auto rec = encode_cifar_record(img);
    out.write(reinterpret_cast<const char *>(rec.data()),
              static_cast<std::streamsize>(rec.size()));
  }
}

/// Loads data_batch_1..5.bin and test_batch.bin from `dir` (or from its
/// cifar-10-batches-bin subdirectory).
inline std::pair<Dataset, Dataset>
load_cifar10(const std::filesystem::path &dir) {
  std::filesystem::path root = dir;
  if (!std::filesystem::exists(root / "test_batch.bin") &&
      std::filesystem::exists(root / "cifar-10-batches-bin"))
    root /= "cifar-10-batches-bin";
  Dataset train{{}, Split::Train, 10, {}};
  Dataset test{{}, Split::Test, 10, {}};
  for (int b = 1; b <= 5; ++b) {
    const auto file = root / ("data_batch_" + std::to_string(b) + ".bin");
    if (!std::filesystem::exists(file))
      throw IngestionError("missing CIFAR-10 file " + file.string());
    auto imgs = load_cifar_batch(file);
    std::move(imgs.begin(), imgs.end(), std::back_inserter(train.images));
  }
  const auto test_file = root / "test_batch.bin";
  if (!std::filesystem::exists(test_file))
    throw IngestionError("missing CIFAR-10 file " + test_file.string());
  test.images = load_cifar_batch(test_file);
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// Normalization

inline Normalization fit_normalization(const Dataset &train) {
  if (train.empty())
    throw DataError("cannot compute statistics of an empty dataset");
  const Shape s = train.images.front().pixels.shape();
  std::vector<double> sum(s.c, 0.0), sq(s.c, 0.0);
  double count = 0;
  for (const auto &img : train.images) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const float *p = img.pixels.channel(0, c);
      for (std::size_t i = 0; i < s.plane(); ++i) {
        sum[c] += p[i];
        sq[c] += double(p[i]) * p[i];
      }
    }
    count += double(s.plane());
  }
  Normalization n;
  for (std::size_t c = 0; c < s.c; ++c) {
    const double mean = sum[c] / count;
    const double var = std::max(0.0, sq[c] / count - mean * mean);
    if (!(var > 0.0))
      throw DataError("degenerate channel " + std::to_string(c) +
                      ": zero standard deviation");
    n.mean.push_back(mean);
    n.stddev.push_back(std::sqrt(var));
  }
  return n;
}

inline void normalize_in_place(Tensor &pixels, const Normalization &n) {
  const Shape s = pixels.shape();
  for (std::size_t b = 0; b < s.n; ++b)
    for (std::size_t c = 0; c < s.c; ++c) {
      float *p = pixels.channel(b, c);
      const float mean = float(n.mean[c]);
      const float inv = float(1.0 / n.stddev[c]);
      for (std::size_t i = 0; i < s.plane(); ++i)
        p[i] = (p[i] - mean) * inv;
    }
}

/// Returns `ds` with pixels mapped to (x - mean) / std using `stats`.
inline Dataset apply_normalization(const Dataset &ds,
                                   const Normalization &stats) {
  Dataset out = ds;
  for (auto &img : out.images)
    normalize_in_place(img.pixels, stats);
  out.normalization.reset();
  return out;
}

/// Attaches the training split's statistics to both splits; make_batch
/// applies them after augmentation.
inline std::pair<Dataset, Dataset> normalize(Dataset train, Dataset test) {
  const Normalization stats = fit_normalization(train);
  train.normalization = stats;
  test.normalization = stats;
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// Augmentation

/// Zero-pads by `pad`, takes the HxW window at (off_y, off_x) of the padded
/// image, optionally mirrored horizontally.
inline LabeledImage crop_flip(const LabeledImage &img, int off_y, int off_x,
                              bool flip, int pad = 4) {
  const Shape s = img.pixels.shape();
  LabeledImage out{Tensor(s), img.label};
  const long H = long(s.h), W = long(s.w);
  for (std::size_t c = 0; c < s.c; ++c) {
    const float *src = img.pixels.channel(0, c);
    float *dst = out.pixels.channel(0, c);
    for (long y = 0; y < H; ++y) {
      const long sy = y + off_y - pad;
      for (long x = 0; x < W; ++x) {
        const long cx = flip ? W - 1 - x : x;
        const long sx = cx + off_x - pad;
        dst[y * W + x] = (sy >= 0 && sy < H && sx >= 0 && sx < W)
                             ? src[sy * W + sx]
                             : 0.0f;
      }
    }
  }
  return out;
}

/// Pad 4, uniform random crop back to the original size, flip with p = 0.5.
template <typename Rng>
LabeledImage augment_cifar(const LabeledImage &img, Rng &rng) {
  std::uniform_int_distribution<int> offset(0, 8);
  std::bernoulli_distribution coin(0.5);
  const int oy = offset(rng);
  const int ox = offset(rng);
  const bool flip = coin(rng);
  return crop_flip(img, oy, ox, flip);
}

struct AffineParams {
  double rotation_deg = 0.0;
  int translate_x = 0; // positive moves content right
  int translate_y = 0; // positive moves content down
  double scale = 1.0;
};

/// Parameter grids of the face-expression augmentation. Zero rotation is
/// admitted as the untransformed member.
struct AffineGrid {
  static constexpr std::array<double, 9> rotations{-7, -5, -3, -1, 0,
                                                   1,  3,  5,  7};
  static constexpr int max_translate = 3;
  static constexpr std::array<double, 5> scales{0.90, 0.95, 1.00, 1.05, 1.10};

  static void validate(const AffineParams &p) {
    auto in = [](const auto &grid, double v) {
      return std::any_of(grid.begin(), grid.end(),
                         [&](double g) { return std::abs(g - v) < 1e-9; });
    };
    if (!in(rotations, p.rotation_deg))
      throw AugmentationConfigError("rotation " +
                                    std::to_string(p.rotation_deg) +
                                    " deg is not on the grid");
    if (std::abs(p.translate_x) > max_translate ||
        std::abs(p.translate_y) > max_translate)
      throw AugmentationConfigError("translation outside [-3, 3] px");
    if (!in(scales, p.scale))
      throw AugmentationConfigError("scale " + std::to_string(p.scale) +
                                    " is not on the grid");
  }
};

template <typename Rng> AffineParams random_affine_params(Rng &rng) {
  std::uniform_int_distribution<std::size_t> rot(0, AffineGrid::rotations.size() - 1);
  std::uniform_int_distribution<int> shift(-AffineGrid::max_translate,
                                           AffineGrid::max_translate);
  std::uniform_int_distribution<std::size_t> sc(0, AffineGrid::scales.size() - 1);
  AffineParams p;
  p.rotation_deg = AffineGrid::rotations[rot(rng)];
  p.translate_x = shift(rng); // per-axis draws
  p.translate_y = shift(rng);
  p.scale = AffineGrid::scales[sc(rng)];
  return p;
}

/// Rotation (about the image center), scaling and translation with bilinear
/// sampling and zero fill. No grid check; see augment_affine.
inline LabeledImage warp_affine(const LabeledImage &img, const AffineParams &p) {
  const Shape s = img.pixels.shape();
  LabeledImage out{Tensor(s), img.label};
  const double cy = (double(s.h) - 1) / 2, cx = (double(s.w) - 1) / 2;
  const double th = p.rotation_deg * std::numbers::pi / 180.0;
  const double cs = std::cos(th), sn = std::sin(th);
  const long H = long(s.h), W = long(s.w);
  for (long y = 0; y < H; ++y) {
    for (long x = 0; x < W; ++x) {
      // Inverse map: undo translation, rotation, then scale.
      const double u = (x - cx - p.translate_x) / p.scale;
      const double v = (y - cy - p.translate_y) / p.scale;
      const double sx = cs * u + sn * v + cx;
      const double sy = -sn * u + cs * v + cy;
      const long x0 = long(std::floor(sx)), y0 = long(std::floor(sy));
      const double fx = sx - x0, fy = sy - y0;
      for (std::size_t c = 0; c < s.c; ++c) {
        const float *src = img.pixels.channel(0, c);
        auto at = [&](long yy, long xx) -> double {
          return (yy >= 0 && yy < H && xx >= 0 && xx < W) ? src[yy * W + xx]
                                                          : 0.0;
        };
        const double val = (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) +
                           fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
        out.pixels.channel(0, c)[y * W + x] = float(val);
      }
    }
  }
  return out;
}

/// Grid-checked affine augmentation for 3x64x64 face-shaped images.
inline LabeledImage augment_affine(const LabeledImage &img,
                                   const AffineParams &p) {
  AffineGrid::validate(p);
  const Shape s = img.pixels.shape();
  if (s.c != 3 || s.h != 64 || s.w != 64)
    throw ShapeError("affine augmentation expects 1x3x64x64, got " +
                     to_string(s));
  return warp_affine(img, p);
}

// ---------------------------------------------------------------------------
// Procedural datasets

/// One image of class `label` (0..9): an oriented or radial texture with a
/// random phase, position, tint and pixel noise.
template <typename Rng>
LabeledImage synthetic_image(int label, std::size_t side, Rng &rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.08);
  const double n = double(side);
  const double period = n / (3.0 + 2.0 * unit(rng));
  const double phase = unit(rng) * 2 * std::numbers::pi;
  const double cy = n * (0.35 + 0.3 * unit(rng));
  const double cx = n * (0.35 + 0.3 * unit(rng));
  const double radius = n * (0.18 + 0.1 * unit(rng));
  std::array<double, 3> fg, bg;
  for (int c = 0; c < 3; ++c) {
    fg[c] = 0.55 + 0.45 * unit(rng);
    bg[c] = 0.35 * unit(rng);
  }
  const double k = 2 * std::numbers::pi / period;
  LabeledImage img{Tensor(Shape{1, 3, side, side}), label};
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) {
      const double dy = double(y) - cy, dx = double(x) - cx;
      const double r = std::sqrt(dx * dx + dy * dy);
      double m = 0;
      switch (label % 10) {
      case 0: m = std::sin(k * y + phase) > 0; break;
      case 1: m = std::sin(k * x + phase) > 0; break;
      case 2: m = r < radius; break;
      case 3: m = std::abs(r - radius) < n / 16; break;
      case 4: m = std::sin(k * (x + y) / std::numbers::sqrt2 + phase) > 0; break;
      case 5: m = (std::sin(k * x + phase) > 0) != (std::sin(k * y + phase) > 0); break;
      case 6: m = std::sin(k * (x - double(y)) / std::numbers::sqrt2 + phase) > 0; break;
      case 7: m = std::abs(dx) < n / 12 || std::abs(dy) < n / 12; break;
      case 8: m = std::clamp((dx + dy) / n + 0.5, 0.0, 1.0); break;
      case 9: m = std::sin(k * x + phase) * std::sin(k * y + phase) > 0.5; break;
      }
      for (int c = 0; c < 3; ++c) {
        const double v = bg[c] + (fg[c] - bg[c]) * m + noise(rng);
        img.pixels.channel(0, c)[y * side + x] = float(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return img;
}

/// `count` images with labels cycling through 0..classes-1.
inline std::vector<LabeledImage> synthetic_images(std::uint64_t seed,
                                                  std::size_t count,
                                                  int classes,
                                                  std::size_t side) {
  std::mt19937_64 rng(seed);
  std::vector<LabeledImage> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i)
    out.push_back(synthetic_image(int(i % classes), side, rng));
  return out;
}

/// 6-class 3x64x64 stand-in for face-expression data; deterministic per seed.
inline std::pair<Dataset, Dataset>
make_synthetic_faceset(std::uint64_t seed, std::size_t n_train,
                       std::size_t n_test) {
  if (n_train < 1 || n_test < 1)
    throw DataError("synthetic dataset needs at least one image per split");
  Dataset train{synthetic_images(seed, n_train, 6, 64), Split::Train, 6, {}};
  Dataset test{synthetic_images(seed ^ 0x5eed7e57ULL, n_test, 6, 64),
               Split::Test, 6, {}};
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// Batching

enum class Augmentation { None, Cifar, Affine };

/// Stacks ds.images[indices] into one tensor, augmenting (train split only)
/// and then normalizing with ds.normalization when present.
template <typename Rng>
std::pair<Tensor, std::vector<int>>
make_batch(const Dataset &ds, std::span<const std::size_t> indices,
           Augmentation aug, Rng &rng) {
  if (indices.empty())
    throw DataError("empty batch");
  const Shape s = ds.images.at(indices[0]).pixels.shape();
  Tensor x(Shape{indices.size(), s.c, s.h, s.w});
  std::vector<int> labels;
  labels.reserve(indices.size());
  const bool augment = ds.split == Split::Train && aug != Augmentation::None;
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const LabeledImage &src = ds.images.at(indices[b]);
    if (src.pixels.shape() != s)
      throw ShapeError("dataset mixes image shapes");
    LabeledImage img;
    const LabeledImage *use = &src;
    if (augment) {
      img = aug == Augmentation::Cifar
                ? augment_cifar(src, rng)
                : warp_affine(src, random_affine_params(rng));
      use = &img;
    }
    std::copy(use->pixels.vec().begin(), use->pixels.vec().end(),
              x.data() + b * s.sample());
    labels.push_back(use->label);
  }
  if (ds.normalization)
    normalize_in_place(x, *ds.normalization);
  return {std::move(x), std::move(labels)};
}

} // namespace lgc
