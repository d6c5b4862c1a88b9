#pragma once

#include <cstdint>
#include <string>

#include "deeprank/dataset.hpp"

namespace deeprank {

/// Cross-view synthetic pedestrians. Each identity has a fixed appearance
/// (hair, skin, torso with optional stripes, sleeves, legs, shoes, optional bag).
/// Every image gets its own background clutter, figure jitter and pixel noise;
/// camera "b" additionally applies a per-image brightness scale and hue rotation.
struct SynthParams {
  std::size_t identities = 64;
  std::size_t images_per_view = 2;
  std::size_t height = 64;
  std::size_t width = 32;
  double brightness_shift = 0.2;  // camera b scales intensities by U[1-b, 1+b]
  double hue_shift = 0.3;         // camera b rotates hue by U[-h, h] radians
  std::size_t jitter = 3;         // figure offset U{-j..j} pixels on both axes
  double noise = 0.03;            // per-pixel gaussian sigma
  double clutter = 0.0;           // background colour spread and distractor strength
  std::uint64_t seed = 1;
  std::string name = "synth";
};

/// In-memory dataset with cameras "a" and "b"; a pure function of the params.
DatasetIndex synth_generate(const SynthParams& params);

}  // namespace deeprank
