#pragma once

#include <filesystem>

#include "deeprank/tensor.hpp"

namespace deeprank {

/// Decodes any PNG into [3, h, w] RGB floats in [0, 1]; alpha is dropped.
Tensor<float> read_png(const std::filesystem::path& path);

/// Writes an 8-bit RGB PNG, rounding clamp(v, 0, 1) * 255.
void write_png(const Tensor<float>& image, const std::filesystem::path& path);

}  // namespace deeprank
