#include "deeprank/image_ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace deeprank {

PairVariant PairVariant::from_ordinal(int ordinal) {
  if (ordinal < 0 || ordinal >= 8) throw std::out_of_range("pair variant ordinal must lie in [0, 8)");
  return {(ordinal & 4) != 0, (ordinal & 2) != 0, (ordinal & 1) != 0};
}

Tensor<float> resize_bilinear(const Tensor<float>& image, std::size_t height, std::size_t width) {
  if (image.rank() != 3) throw ShapeError("resize_bilinear: expected [C,H,W], got " + shape_string(image.shape()));
  if (height == 0 || width == 0) throw ShapeError("resize_bilinear: target extents must be positive");
  const std::size_t channels = image.extent(0), in_h = image.extent(1), in_w = image.extent(2);
  if (in_h == height && in_w == width) return image;
  Tensor<float> out({channels, height, width});

  const double sy = static_cast<double>(in_h) / static_cast<double>(height);
  const double sx = static_cast<double>(in_w) / static_cast<double>(width);
  auto coord = [](std::size_t dst, double scale, std::size_t limit, std::size_t& lo, std::size_t& hi, double& frac) {
    double src = (static_cast<double>(dst) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(limit - 1));
    lo = static_cast<std::size_t>(std::floor(src));
    hi = std::min(lo + 1, limit - 1);
    frac = src - static_cast<double>(lo);
  };
  std::vector<std::size_t> x0(width), x1(width);
  std::vector<double> fx(width);
  for (std::size_t x = 0; x < width; ++x) coord(x, sx, in_w, x0[x], x1[x], fx[x]);
  for (std::size_t y = 0; y < height; ++y) {
    std::size_t y0, y1;
    double fy;
    coord(y, sy, in_h, y0, y1, fy);
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t x = 0; x < width; ++x) {
        const double top = image.at(c, y0, x0[x]) * (1.0 - fx[x]) + image.at(c, y0, x1[x]) * fx[x];
        const double bottom = image.at(c, y1, x0[x]) * (1.0 - fx[x]) + image.at(c, y1, x1[x]) * fx[x];
        out.at(c, y, x) = static_cast<float>(top * (1.0 - fy) + bottom * fy);
      }
    }
  }
  return out;
}

StitchedPair stitch(const PersonImage& a, const PersonImage& b, std::size_t side) {
  if (side < 16 || side % 2 != 0) throw std::invalid_argument("stitch: side must be even and at least 16");
  for (const auto* img : {&a, &b}) {
    if (img->pixels.rank() != 3 || img->pixels.extent(0) != 3 || img->pixels.extent(1) < 2 ||
        img->pixels.extent(2) < 2) {
      throw ShapeError("stitch: degenerate source image " + shape_string(img->pixels.shape()));
    }
  }
  const std::size_t half = side / 2;
  const Tensor<float> left = resize_bilinear(a.pixels, side, half);
  const Tensor<float> right = resize_bilinear(b.pixels, side, half);
  StitchedPair pair{Tensor<float>({3, side, side}), a.identity, b.identity, {}};
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < side; ++y) {
      float* row = &pair.image.at(c, y, 0);
      std::copy_n(&left.at(c, y, 0), half, row);
      std::copy_n(&right.at(c, y, 0), half, row + half);
    }
  }
  return pair;
}

StitchedPair augment_variant(const StitchedPair& pair, PairVariant flags) {
  const auto& src = pair.image;
  const std::size_t side = src.extent(1), width = src.extent(2), half = width / 2;
  StitchedPair out{Tensor<float>(src.shape()), pair.left_identity, pair.right_identity, {}};
  for (std::size_t c = 0; c < src.extent(0); ++c) {
    for (std::size_t y = 0; y < side; ++y) {
      const float* in = &src.at(c, y, 0);
      float* dst = &out.image.at(c, y, 0);
      // displayed half h (0 = left) lands at position (h ^ swap), mirrored if its flag is set
      for (std::size_t h = 0; h < 2; ++h) {
        const bool flip = h == 0 ? flags.flip_left : flags.flip_right;
        const std::size_t target = (h ^ (flags.swapped ? 1 : 0)) * half;
        const float* from = in + h * half;
        for (std::size_t x = 0; x < half; ++x) dst[target + x] = flip ? from[half - 1 - x] : from[x];
      }
    }
  }
  const PairVariant& v = pair.variant;
  if (!v.swapped) {
    out.variant = {v.flip_left != flags.flip_left, v.flip_right != flags.flip_right, flags.swapped};
  } else {
    // the displayed left half currently holds the canonical right image
    out.variant = {v.flip_left != flags.flip_right, v.flip_right != flags.flip_left, !flags.swapped};
  }
  return out;
}

Tensor<float> crop(const Tensor<float>& image, std::size_t crop_side, std::size_t top, std::size_t left) {
  if (image.rank() != 3) throw ShapeError("crop: expected [C,H,W]");
  if (top + crop_side > image.extent(1) || left + crop_side > image.extent(2) || crop_side == 0) {
    throw std::invalid_argument("crop: " + std::to_string(crop_side) + "px window at (" + std::to_string(top) + "," +
                                std::to_string(left) + ") does not fit " + shape_string(image.shape()));
  }
  Tensor<float> out({image.extent(0), crop_side, crop_side});
  for (std::size_t c = 0; c < image.extent(0); ++c) {
    for (std::size_t y = 0; y < crop_side; ++y) {
      std::copy_n(&image.at(c, top + y, left), crop_side, &out.at(c, y, 0));
    }
  }
  return out;
}

Tensor<float> random_crop(const Tensor<float>& image, std::size_t crop_side, Rng& rng) {
  if (image.rank() != 3 || crop_side > image.extent(1) || crop_side > image.extent(2)) {
    throw std::invalid_argument("random_crop: crop " + std::to_string(crop_side) + " larger than image " +
                                shape_string(image.shape()));
  }
  const std::size_t range_y = image.extent(1) - crop_side + 1;
  const std::size_t range_x = image.extent(2) - crop_side + 1;
  const std::size_t top = static_cast<std::size_t>(rng() % range_y);
  const std::size_t left = static_cast<std::size_t>(rng() % range_x);
  return crop(image, crop_side, top, left);
}

Tensor<float> central_crop(const Tensor<float>& image, std::size_t crop_side) {
  if (image.rank() != 3 || crop_side > image.extent(1) || crop_side > image.extent(2)) {
    throw std::invalid_argument("central_crop: crop " + std::to_string(crop_side) + " larger than image " +
                                shape_string(image.shape()));
  }
  return crop(image, crop_side, (image.extent(1) - crop_side) / 2, (image.extent(2) - crop_side) / 2);
}

std::vector<Tensor<float>> test_time_inputs(const PersonImage& a, const PersonImage& b, std::size_t side,
                                            std::size_t crop_side) {
  const StitchedPair base = stitch(a, b, side);
  std::vector<Tensor<float>> inputs;
  inputs.reserve(8);
  for (int v = 0; v < 8; ++v) {
    inputs.push_back(central_crop(augment_variant(base, PairVariant::from_ordinal(v)).image, crop_side));
  }
  return inputs;
}

std::array<float, 3> channel_mean(const std::vector<PersonImage>& images) {
  std::array<double, 3> sum{};
  std::array<double, 3> count{};
  for (const auto& img : images) {
    const std::size_t plane = img.pixels.extent(1) * img.pixels.extent(2);
    for (std::size_t c = 0; c < 3; ++c) {
      const float* p = img.pixels.data() + c * plane;
      for (std::size_t i = 0; i < plane; ++i) sum[c] += p[i];
      count[c] += static_cast<double>(plane);
    }
  }
  std::array<float, 3> mean{};
  for (std::size_t c = 0; c < 3; ++c) mean[c] = count[c] > 0 ? static_cast<float>(sum[c] / count[c]) : 0.0f;
  return mean;
}

}  // namespace deeprank
