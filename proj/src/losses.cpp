#include "fogflow/losses.hpp"

#include <cstdio>

#include "fogflow/errors.hpp"
#include "fogflow/fogphys.hpp"
#include "tensor_util.hpp"

namespace fogflow::losses {

namespace F = torch::nn::functional;

namespace {

torch::Tensor endpoint_norm(const torch::Tensor& a, const torch::Tensor& b) {
    return torch::linalg_vector_norm(a - b, 2, {1});
}

void require_same(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
    if (!a.sizes().equals(b.sizes()))
        throw InputError(std::string(what) + ": shapes " + detail::shape_str(a) + " and " + detail::shape_str(b) +
                         " disagree");
}

void require_flow(const torch::Tensor& f, const char* what) {
    if (f.dim() != 4 || f.size(1) != 2) throw InputError(std::string(what) + ": flows must be [N,2,H,W]");
}

MaskedEpe masked_epe(const torch::Tensor& a, const torch::Tensor& b, const torch::Tensor& mask, const char* what) {
    require_flow(a, what);
    require_same(a, b, what);
    auto m = detail::as_map_batch(mask, what);
    if (m.size(0) != a.size(0) || m.size(2) != a.size(2) || m.size(3) != a.size(3))
        throw InputError(std::string(what) + ": mask " + detail::shape_str(mask) + " does not match flow " +
                         detail::shape_str(a));
    m = m.squeeze(1).to(a.dtype()).detach();
    const auto count = m.sum();
    if (count.item<double>() <= 0.0) return {torch::zeros({}, a.options().requires_grad(false)), true};
    return {(endpoint_norm(a, b) * m).sum() / count, false};
}

}  // namespace

EpeTerms loss_epe_supervised(const nets::MultiScaleFlow& pred, const torch::Tensor& gt,
                             const std::array<double, 5>* level_weights) {
    require_flow(gt, "loss_epe_supervised");
    require_same(pred.final, gt, "loss_epe_supervised");
    if (!detail::all_finite(gt)) throw InputError("loss_epe_supervised: ground truth contains non-finite values");

    EpeTerms out;
    out.final = endpoint_norm(pred.final, gt).mean();
    out.total = out.final;
    if (level_weights) {
        for (int l = nets::kFinestFlowLevel; l <= nets::kPyramidLevels; ++l) {
            auto it = pred.levels.find(l);
            if (it == pred.levels.end()) continue;
            const int64_t factor = int64_t{1} << l;
            auto gt_l = F::avg_pool2d(gt, F::AvgPool2dFuncOptions(factor).stride(factor)) / static_cast<double>(factor);
            const double w = (*level_weights)[static_cast<size_t>(l - nets::kFinestFlowLevel)];
            out.total = out.total + w * endpoint_norm(it->second, gt_l).mean();
        }
    }
    return out;
}

torch::Tensor loss_l1_transform(const torch::Tensor& rendered, const torch::Tensor& gt) {
    require_same(rendered, gt, "loss_l1_transform");
    return (rendered - gt).abs().mean();
}

torch::Tensor loss_transform_consistency(const torch::Tensor& orig1, const torch::Tensor& orig2,
                                         const torch::Tensor& cyc1, const torch::Tensor& cyc2) {
    return loss_l1_transform(cyc1, orig1) + loss_l1_transform(cyc2, orig2);
}

torch::Tensor photometric_consistency_mask(const torch::Tensor& img1, const torch::Tensor& img2,
                                           const torch::Tensor& flow, double tau) {
    torch::NoGradGuard no_grad;
    auto a = detail::as_batch(img1, "photometric_consistency_mask").detach();
    auto b = detail::as_batch(img2, "photometric_consistency_mask").detach();
    require_same(a, b, "photometric_consistency_mask");
    require_flow(flow, "photometric_consistency_mask");
    if (flow.size(0) != a.size(0) || flow.size(2) != a.size(2) || flow.size(3) != a.size(3))
        throw InputError("photometric_consistency_mask: flow must be at image resolution");

    auto f = flow.detach().to(a.dtype());
    auto residual = (a - nets::warp(b, f)).abs().mean(1, /*keepdim=*/true);
    const int64_t h = a.size(2), w = a.size(3);
    auto xs = torch::arange(w, f.options()).view({1, 1, w}) + f.select(1, 0);
    auto ys = torch::arange(h, f.options()).view({1, h, 1}) + f.select(1, 1);
    auto inside = ((xs >= 0) & (xs <= w - 1) & (ys >= 0) & (ys <= h - 1)).unsqueeze(1);
    return ((residual < tau) & inside).to(a.dtype());
}

MaskedEpe loss_epe_cross_domain(const torch::Tensor& flow_a, const torch::Tensor& flow_b, const torch::Tensor& mask,
                                StopTarget stop_target) {
    const auto a = stop_target == StopTarget::A ? flow_a.detach() : flow_a;
    const auto b = stop_target == StopTarget::B ? flow_b.detach() : flow_b;
    return masked_epe(a, b, mask, "loss_epe_cross_domain");
}

MaskedEpe loss_flow_consistency(const torch::Tensor& flow_f, const torch::Tensor& flow_c, const torch::Tensor& mask) {
    return masked_epe(flow_f, flow_c, mask, "loss_flow_consistency");
}

torch::Tensor loss_gan_generator(const torch::Tensor& scores_fake) { return F::softplus(-scores_fake).mean(); }

torch::Tensor loss_gan_discriminator(const torch::Tensor& scores_real, const torch::Tensor& scores_fake) {
    return F::softplus(-scores_real).mean() + F::softplus(scores_fake).mean();
}

torch::Tensor loss_hazeline_with_atmo(const torch::Tensor& clean, const torch::Tensor& rendered_fog,
                                      const torch::Tensor& atmo_chroma) {
    require_same(clean, rendered_fog, "loss_hazeline");
    auto res = fogphys::hazeline_residual(fogphys::chromaticity(clean), fogphys::chromaticity(rendered_fog),
                                          atmo_chroma);
    auto count = res.valid.sum().clamp_min(1).to(torch::kFloat64);
    return (res.residual.sum() / count).to(clean.scalar_type());
}

torch::Tensor loss_hazeline(const torch::Tensor& clean, const torch::Tensor& rendered_fog, int atmo_patch) {
    return loss_hazeline_with_atmo(clean, rendered_fog, fogphys::atmospheric_light_chroma(rendered_fog, atmo_patch));
}

const std::array<const char*, 8>& report_columns() {
    static const std::array<const char*, 8> cols{"epe_sup", "l1_sup",  "con",      "epe_cross",
                                                 "gan_g",   "gan_d",   "hazeline", "flow_con"};
    return cols;
}

std::string report_csv_header() {
    std::string s = "step,stage";
    for (const char* c : report_columns()) s += std::string(",") + c;
    return s + ",total";
}

std::string report_csv_row(const LossReport& report) {
    char buf[64];
    std::string s = std::to_string(report.step) + "," + report.stage;
    for (const char* c : report_columns()) {
        s += ",";
        if (auto it = report.values.find(c); it != report.values.end()) {
            std::snprintf(buf, sizeof buf, "%.9g", it->second);
            s += buf;
        }
    }
    std::snprintf(buf, sizeof buf, ",%.9g", report.total);
    return s + buf;
}

}  // namespace fogflow::losses
