#pragma once

// Turning two person images into one square network input: resize each to
// S x S/2, stitch side by side, then optionally mirror each half, exchange the
// halves, and crop.

#include <array>
#include <string>
#include <vector>

#include "deeprank/tensor.hpp"

namespace deeprank {

struct PersonImage {
  int identity = 0;
  std::string camera;
  int index = 0;
  Tensor<float> pixels;  // [3, h, w], values in [0, 1]
};

struct PairVariant {
  bool flip_left = false;
  bool flip_right = false;
  bool swapped = false;

  bool canonical() const { return !flip_left && !flip_right && !swapped; }
  /// Lexicographic position of (flip_left, flip_right, swapped) in [0, 8).
  int ordinal() const { return (flip_left ? 4 : 0) + (flip_right ? 2 : 0) + (swapped ? 1 : 0); }
  static PairVariant from_ordinal(int ordinal);

  bool operator==(const PairVariant&) const = default;
};

struct StitchedPair {
  Tensor<float> image;  // [3, S, S]
  int left_identity = 0;   // first image of the canonical pair (the probe)
  int right_identity = 0;  // second image of the canonical pair
  PairVariant variant;
};

/// Bilinear resize with half-pixel centers and edge clamping.
Tensor<float> resize_bilinear(const Tensor<float>& image, std::size_t height, std::size_t width);

/// Resizes both images to side x side/2 and places `a` on the left, `b` on the right.
StitchedPair stitch(const PersonImage& a, const PersonImage& b, std::size_t side);

/// Mirrors the displayed left and/or right half about its own vertical axis,
/// then exchanges the halves when `swap` is set. Flags compose with any
/// variant already applied, so the eight flag triples act as a group.
StitchedPair augment_variant(const StitchedPair& pair, PairVariant flags);

Tensor<float> crop(const Tensor<float>& image, std::size_t crop_side, std::size_t top, std::size_t left);
Tensor<float> random_crop(const Tensor<float>& image, std::size_t crop_side, Rng& rng);
/// Offset floor((S - C) / 2) on both axes.
Tensor<float> central_crop(const Tensor<float>& image, std::size_t crop_side);

/// The eight flip/swap variants of stitch(a, b), centrally cropped, in ordinal order.
std::vector<Tensor<float>> test_time_inputs(const PersonImage& a, const PersonImage& b, std::size_t side,
                                            std::size_t crop_side);

/// Per-channel mean over every pixel of every image.
std::array<float, 3> channel_mean(const std::vector<PersonImage>& images);

}  // namespace deeprank
