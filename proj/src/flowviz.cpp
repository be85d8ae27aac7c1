#include <cmath>
#include <numbers>
#include <vector>

#include "fogflow/errors.hpp"
#include "fogflow/metrics.hpp"
#include "tensor_util.hpp"

namespace fogflow::eval {

torch::Tensor color_wheel() {
    constexpr int RY = 15, YG = 6, GC = 4, CB = 11, BM = 13, MR = 6;
    std::vector<double> rgb;
    auto push = [&](double r, double g, double b) {
        rgb.push_back(r / 255.0);
        rgb.push_back(g / 255.0);
        rgb.push_back(b / 255.0);
    };
    for (int i = 0; i < RY; ++i) push(255, std::floor(255.0 * i / RY), 0);
    for (int i = 0; i < YG; ++i) push(255 - std::floor(255.0 * i / YG), 255, 0);
    for (int i = 0; i < GC; ++i) push(0, 255, std::floor(255.0 * i / GC));
    for (int i = 0; i < CB; ++i) push(0, 255 - std::floor(255.0 * i / CB), 255);
    for (int i = 0; i < BM; ++i) push(std::floor(255.0 * i / BM), 0, 255);
    for (int i = 0; i < MR; ++i) push(255, 0, 255 - std::floor(255.0 * i / MR));
    const auto n = static_cast<int64_t>(rgb.size() / 3);
    return torch::tensor(rgb, torch::kFloat64).view({n, 3});
}

torch::Tensor flow_to_color(const torch::Tensor& flow, std::optional<double> max_mag) {
    auto f = flow.dim() == 4 && flow.size(0) == 1 ? flow.squeeze(0) : flow;
    if (f.dim() != 3 || f.size(0) != 2) throw InputError("flow_to_color: expected a [2,H,W] flow");
    f = f.detach().to(torch::kFloat64).contiguous();
    if (!detail::all_finite(f)) throw InputError("flow_to_color: flow contains non-finite values");

    auto u = f[0], v = f[1];
    auto mag = torch::sqrt(u * u + v * v);
    double scale = max_mag.value_or(0.0);
    if (!max_mag) scale = mag.numel() > 0 ? torch::quantile(mag.flatten(), 0.99).item<double>() : 0.0;
    if (!(scale > 0)) scale = 1.0;

    const auto wheel = color_wheel();
    const auto ncols = wheel.size(0);
    auto angle = torch::atan2(-v, -u) / std::numbers::pi;           // [-1, 1]
    auto fk = (angle + 1.0) / 2.0 * static_cast<double>(ncols - 1);  // [0, ncols-1]
    auto k0 = fk.floor().to(torch::kLong).clamp(0, ncols - 1);
    auto k1 = (k0 + 1).remainder(ncols);
    auto frac = (fk - k0.to(torch::kFloat64)).unsqueeze(-1);
    auto col = (1 - frac) * wheel.index({k0}) + frac * wheel.index({k1});  // [H,W,3]

    auto rad = (mag / scale).unsqueeze(-1);
    auto inside = rad.le(1.0);
    col = torch::where(inside, 1 - rad * (1 - col), col * 0.75);
    return col.permute({2, 0, 1}).contiguous().to(torch::kFloat32);
}

}  // namespace fogflow::eval
