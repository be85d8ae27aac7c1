#include "fogflow/fogphys.hpp"

#include <cmath>
#include <vector>

#include "fogflow/errors.hpp"
#include "tensor_util.hpp"

namespace fogflow::fogphys {

void FogParameters::validate() const {
    for (double c : atmo) {
        if (!std::isfinite(c) || c < 0.0 || c > 1.0)
            throw InputError("FogParameters: atmospheric light channels must lie in [0,1]");
    }
    if (!std::isfinite(beta) || beta < 0.0)
        throw InputError("FogParameters: beta must be finite and non-negative");
}

torch::Tensor alpha_from_depth(const torch::Tensor& depth, double beta) {
    if (!std::isfinite(beta) || beta < 0.0)
        throw InputError("alpha_from_depth: beta must be finite and non-negative");
    if (!detail::all_finite(depth))
        throw InputError("alpha_from_depth: depth contains non-finite values");
    if (depth.numel() > 0 && depth.min().item<double>() < 0.0)
        throw InputError("alpha_from_depth: depth contains negative values");
    return torch::exp(depth * (-beta));
}

namespace {

torch::Tensor atmo_view(const torch::Tensor& atmo, int64_t batch) {
    if (atmo.dim() == 1 && atmo.size(0) == 3) return atmo.view({1, 3, 1, 1});
    if (atmo.dim() == 2 && atmo.size(1) == 3 && (atmo.size(0) == batch || atmo.size(0) == 1))
        return atmo.view({atmo.size(0), 3, 1, 1});
    throw InputError("atmospheric light must be a [3] or [N,3] tensor");
}

}  // namespace

torch::Tensor render_fog(const torch::Tensor& clean, const torch::Tensor& alpha,
                         const torch::Tensor& atmo) {
    const bool unbatched = clean.dim() == 3;
    auto x = detail::as_batch(clean, "render_fog");
    auto a = detail::as_map_batch(alpha, "render_fog");
    if (x.size(1) != 3) throw InputError("render_fog: clean image must have 3 channels");
    if (a.size(1) != 1 || a.size(2) != x.size(2) || a.size(3) != x.size(3) ||
        (a.size(0) != 1 && a.size(0) != x.size(0))) {
        throw InputError("render_fog: alpha " + detail::shape_str(alpha) +
                         " does not match image " + detail::shape_str(clean));
    }
    auto A = atmo_view(atmo.to(x.dtype()), x.size(0));
    a = a.to(x.dtype());
    auto out = x * a + (1 - a) * A;
    return unbatched ? out.squeeze(0) : out;
}

torch::Tensor render_fog(const torch::Tensor& clean, const torch::Tensor& alpha, const Rgb& atmo) {
    auto A = torch::tensor({atmo[0], atmo[1], atmo[2]}, torch::kFloat64);
    return render_fog(clean, alpha, A);
}

torch::Tensor chromaticity(const torch::Tensor& img) {
    auto x = detail::as_batch(img, "chromaticity");
    auto out = x / (x.sum(1, /*keepdim=*/true) + kChromaEps);
    return img.dim() == 3 ? out.squeeze(0) : out;
}

torch::Tensor chromaticity_of(const Rgb& color) {
    auto c = torch::tensor({color[0], color[1], color[2]}, torch::kFloat64);
    return c / (c.sum() + kChromaEps);
}

PatchLocation brightest_patch(const torch::Tensor& img, int patch) {
    if (img.dim() != 3 || img.size(0) != 3) throw InputError("brightest_patch: expected a [3,H,W] image");
    const int64_t h = img.size(1), w = img.size(2);
    if (patch <= 0 || patch > h || patch > w)
        throw InputError("brightest_patch: patch size " + std::to_string(patch) +
                         " does not fit a " + std::to_string(h) + "x" + std::to_string(w) + " image");

    auto x = img.detach().to(torch::kFloat64).contiguous();
    auto px = x.accessor<double, 3>();
    std::vector<double> lum(static_cast<size_t>(h * w));
    for (int64_t r = 0; r < h; ++r)
        for (int64_t c = 0; c < w; ++c) lum[r * w + c] = px[0][r][c] + px[1][r][c] + px[2][r][c];

    // Each window sum is accumulated in the same order from its own corner, so
    // windows with identical content compare exactly equal.
    const int64_t rows = h - patch + 1, cols = w - patch + 1;
    std::vector<double> column(static_cast<size_t>(rows * w));
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < w; ++c) {
            double s = 0.0;
            for (int k = 0; k < patch; ++k) s += lum[(r + k) * w + c];
            column[r * w + c] = s;
        }

    PatchLocation best;
    double best_sum = -1.0;
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) {
            double s = 0.0;
            for (int k = 0; k < patch; ++k) s += column[r * w + c + k];
            if (s > best_sum) {
                best_sum = s;
                best = {static_cast<int>(r), static_cast<int>(c)};
            }
        }
    return best;
}

torch::Tensor atmospheric_light_chroma(const torch::Tensor& fog, int patch) {
    auto x = detail::as_batch(fog, "atmospheric_light_chroma");
    std::vector<torch::Tensor> chromas;
    chromas.reserve(static_cast<size_t>(x.size(0)));
    for (int64_t n = 0; n < x.size(0); ++n) {
        const auto loc = brightest_patch(x[n], patch);
        auto window = x[n].slice(1, loc.row, loc.row + patch).slice(2, loc.col, loc.col + patch);
        auto mean = window.mean({1, 2});
        chromas.push_back(mean / (mean.sum() + kChromaEps));
    }
    auto out = torch::stack(chromas);
    return fog.dim() == 3 ? out.squeeze(0) : out;
}

AtmoChroma atmospheric_light_chroma_value(const torch::Tensor& fog, int patch) {
    if (fog.dim() != 3) throw InputError("atmospheric_light_chroma_value: expected a [3,H,W] image");
    auto a = atmospheric_light_chroma(fog.detach(), patch).to(torch::kFloat64);
    return {{a[0].item<double>(), a[1].item<double>(), a[2].item<double>()}};
}

HazelineResidual hazeline_residual(const torch::Tensor& gamma, const torch::Tensor& sigma,
                                   const torch::Tensor& a) {
    auto g = detail::as_batch(gamma, "hazeline_residual").to(torch::kFloat64);
    auto s = detail::as_batch(sigma, "hazeline_residual").to(torch::kFloat64);
    if (!g.sizes().equals(s.sizes()) || g.size(1) != 3)
        throw InputError("hazeline_residual: gamma " + detail::shape_str(gamma) +
                         " and sigma " + detail::shape_str(sigma) + " must agree");
    auto av = atmo_view(a.to(torch::kFloat64), g.size(0));

    auto to_sigma = s - av;
    auto to_gamma = g - av;
    auto n_sigma = torch::linalg_vector_norm(to_sigma, 2, {1});
    auto n_gamma = torch::linalg_vector_norm(to_gamma, 2, {1});
    auto valid = (n_sigma >= kHazelineMinNorm) & (n_gamma >= kHazelineMinNorm);
    auto denom = torch::where(valid, n_sigma * n_gamma, torch::ones_like(n_sigma));
    auto cosine = (to_sigma * to_gamma).sum(1) / denom;
    auto residual = torch::where(valid, (1 - cosine).clamp(0.0, 2.0), torch::zeros_like(cosine));
    return {residual, valid};
}

}  // namespace fogflow::fogphys
