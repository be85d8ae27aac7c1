#pragma once

// Training objectives and the photometric consistency mask. Images are
// [N,3,H,W] (or [3,H,W]), flows [N,2,H,W], masks [N,1,H,W] with values in
// {0,1}. Every loss returns a 0-dim tensor so it can be back-propagated.

#include <array>
#include <map>
#include <string>

#include <torch/torch.h>

#include "fogflow/nets.hpp"

namespace fogflow::losses {

/// Mean end-point error at full resolution. With `level_weights` (levels 2..6)
/// the per-level EPE against area-downsampled, rescaled ground truth is added.
struct EpeTerms {
    torch::Tensor final;  // final-scale mean EPE
    torch::Tensor total;  // final + weighted per-level terms
};
EpeTerms loss_epe_supervised(const nets::MultiScaleFlow& pred, const torch::Tensor& gt,
                             const std::array<double, 5>* level_weights = nullptr);

/// Mean absolute difference over pixels and channels.
torch::Tensor loss_l1_transform(const torch::Tensor& rendered, const torch::Tensor& gt);

/// |x1 - cyc1|_1 + |x2 - cyc2|_1, each a per-frame mean.
torch::Tensor loss_transform_consistency(const torch::Tensor& orig1, const torch::Tensor& orig2,
                                         const torch::Tensor& cyc1, const torch::Tensor& cyc2);

inline constexpr double kDefaultMaskTau = 0.05;

/// 1 where img2 warped by `flow` reproduces img1 within `tau` (mean over
/// channels of the absolute error), 0 elsewhere and wherever the flow
/// points outside the image. No gradient flows through the mask.
torch::Tensor photometric_consistency_mask(const torch::Tensor& img1, const torch::Tensor& img2,
                                           const torch::Tensor& flow, double tau = kDefaultMaskTau);

enum class StopTarget { A, B, None };

/// Masked mean EPE between two flows. `skipped` is set when the mask is empty;
/// the loss is then a constant zero.
struct MaskedEpe {
    torch::Tensor value;
    bool skipped = false;
};
MaskedEpe loss_epe_cross_domain(const torch::Tensor& flow_a, const torch::Tensor& flow_b,
                                const torch::Tensor& mask, StopTarget stop_target);

/// Same masked EPE; gradients reach both flows.
MaskedEpe loss_flow_consistency(const torch::Tensor& flow_f, const torch::Tensor& flow_c, const torch::Tensor& mask);

/// Non-saturating generator loss: mean softplus(-score_fake).
torch::Tensor loss_gan_generator(const torch::Tensor& scores_fake);

/// mean softplus(-score_real) + mean softplus(score_fake).
torch::Tensor loss_gan_discriminator(const torch::Tensor& scores_real, const torch::Tensor& scores_fake);

/// Mean hazeline residual over non-degenerate pixels; the atmospheric
/// chromaticity is taken from the brightest patch of `rendered_fog`.
torch::Tensor loss_hazeline(const torch::Tensor& clean, const torch::Tensor& rendered_fog, int atmo_patch = 15);

/// Same, with an explicitly supplied atmospheric chromaticity ([3] or [N,3]).
torch::Tensor loss_hazeline_with_atmo(const torch::Tensor& clean, const torch::Tensor& rendered_fog,
                                      const torch::Tensor& atmo_chroma);

/// Named scalar losses for one training step.
struct LossReport {
    std::string stage;
    int64_t step = 0;
    std::map<std::string, double> values;
    std::map<std::string, bool> skipped;
    double total = 0.0;

    bool has(const std::string& name) const { return values.count(name) > 0; }
    double at(const std::string& name) const { return values.at(name); }
};

/// Fixed CSV column order used by the loss log.
const std::array<const char*, 8>& report_columns();
std::string report_csv_header();
std::string report_csv_row(const LossReport& report);

}  // namespace fogflow::losses
