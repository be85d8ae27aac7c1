#pragma once

#include <filesystem>

#include <torch/torch.h>

namespace fogflow::io {

/// Middlebury .flo sentinel, stored as a little-endian float32.
inline constexpr float kFloMagic = 202021.25f;

/// Reads a .flo file into a [2,H,W] float32 tensor (u, v).
/// Throws FormatError (with byte offset) on a bad magic, bad header or truncation.
torch::Tensor read_flo(const std::filesystem::path& path);

/// Writes a [2,H,W] (or [1,2,H,W]) flow; values are converted to float32.
void write_flo(const std::filesystem::path& path, const torch::Tensor& flow);

/// 8-bit PNG/JPEG -> [3,H,W] float32 RGB in [0,1].
torch::Tensor read_image(const std::filesystem::path& path);

/// [3,H,W] values in [0,1] -> 8-bit PNG (RGB), rounding to nearest.
void write_png(const std::filesystem::path& path, const torch::Tensor& img);

/// Depth map -> [H,W] float32 metres. 16-bit PNG stores metres * 256; files
/// ending in .bin/.raw/.depth hold an int32 width, int32 height, then float32
/// row-major values (little-endian).
torch::Tensor read_depth(const std::filesystem::path& path);

torch::Tensor read_depth_raw(const std::filesystem::path& path);
void write_depth_raw(const std::filesystem::path& path, const torch::Tensor& depth);

/// Binary validity mask: nonzero pixels of any single-channel image are valid.
torch::Tensor read_mask(const std::filesystem::path& path);

}  // namespace fogflow::io
