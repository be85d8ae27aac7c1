#pragma once

// Fog formation and chromaticity geometry.
//
// Layouts: images are [3,H,W] or [N,3,H,W]; depth and alpha maps are [H,W],
// [1,H,W] or [N,1,H,W]. Every function is a pure tensor expression, so the
// chromaticity/hazeline path is differentiable and usable inside losses.

#include <array>
#include <torch/torch.h>

namespace fogflow::fogphys {

using Rgb = std::array<double, 3>;

/// Atmospheric light colour and attenuation coefficient (per metre of depth).
struct FogParameters {
    Rgb atmo{1.0, 1.0, 1.0};
    double beta = 0.0;

    /// Throws InputError unless every channel is in [0,1] and beta >= 0 is finite.
    void validate() const;
};

/// Chromaticity of the atmospheric light; components sum to one.
struct AtmoChroma {
    Rgb a{1.0 / 3, 1.0 / 3, 1.0 / 3};
};

inline constexpr double kChromaEps = 1e-6;
inline constexpr double kHazelineMinNorm = 1e-5;
inline constexpr int kDefaultAtmoPatch = 15;

/// alpha = exp(-beta * depth). Depth must be finite and non-negative.
torch::Tensor alpha_from_depth(const torch::Tensor& depth, double beta);

/// x_f = x_c * alpha + (1 - alpha) * A, per pixel and channel.
torch::Tensor render_fog(const torch::Tensor& clean, const torch::Tensor& alpha, const Rgb& atmo);

/// Same blend with A given as a [3] or [N,3] tensor.
torch::Tensor render_fog(const torch::Tensor& clean, const torch::Tensor& alpha,
                         const torch::Tensor& atmo);

/// x_ch / (x_R + x_G + x_B + eps). Black pixels map to (0,0,0).
torch::Tensor chromaticity(const torch::Tensor& img);

torch::Tensor chromaticity_of(const Rgb& color);

struct PatchLocation {
    int row = 0;
    int col = 0;
};

/// Top-left corner of the patch x patch window with maximal mean R+G+B.
/// Ties resolve to the first window in raster order. `img` is [3,H,W].
PatchLocation brightest_patch(const torch::Tensor& img, int patch);

/// Chromaticity of the mean colour of the brightest window, per image.
/// Returns [3] for a [3,H,W] input, [N,3] for [N,3,H,W]. Differentiable with
/// respect to the pixels of the selected window.
torch::Tensor atmospheric_light_chroma(const torch::Tensor& fog, int patch = kDefaultAtmoPatch);

AtmoChroma atmospheric_light_chroma_value(const torch::Tensor& fog, int patch = kDefaultAtmoPatch);

struct HazelineResidual {
    torch::Tensor residual;  // [N,H,W], in [0,2]; 0 where excluded
    torch::Tensor valid;     // [N,H,W] bool; false where either difference is ~0
};

/// Per-pixel 1 - cos angle between (sigma - a) and (gamma - a).
/// gamma/sigma are chromaticity maps ([3,H,W] or [N,3,H,W]); a is [3] or [N,3].
HazelineResidual hazeline_residual(const torch::Tensor& gamma, const torch::Tensor& sigma,
                                   const torch::Tensor& a);

}  // namespace fogflow::fogphys
