#pragma once

// Flow evaluation metrics and flow visualisation.

#include <map>
#include <optional>

#include <torch/torch.h>

namespace fogflow::eval {

/// Mean end-point error over valid pixels. Flows are [2,H,W] (or [1,2,H,W]);
/// `valid` is [H,W] with nonzero marking ground-truth pixels. Throws
/// InputError on shape mismatch or an empty mask.
double metric_epe(const torch::Tensor& pred, const torch::Tensor& gt, const torch::Tensor& valid);

/// Fraction of valid pixels whose end-point error is strictly greater than delta.
double metric_bad_pixel(const torch::Tensor& pred, const torch::Tensor& gt, const torch::Tensor& valid, double delta);

struct MetricReport {
    double epe = 0.0;
    std::map<double, double> bad_pixel;
    int64_t n_valid = 0;
};

MetricReport evaluate_flow(const torch::Tensor& pred, const torch::Tensor& gt, const torch::Tensor& valid,
                           const std::vector<double>& deltas);

/// Colour-wheel rendering: hue from direction, saturation from magnitude
/// normalised by max_mag (default: 99th-percentile magnitude). Zero flow is
/// white; magnitudes beyond max_mag are darkened. Returns [3,H,W] in [0,1].
torch::Tensor flow_to_color(const torch::Tensor& flow, std::optional<double> max_mag = std::nullopt);

/// The 55-entry wheel (RY 15, YG 6, GC 4, CB 11, BM 13, MR 6) as [55,3] in [0,1].
torch::Tensor color_wheel();

}  // namespace fogflow::eval
