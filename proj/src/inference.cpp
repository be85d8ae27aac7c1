#include "fogflow/inference.hpp"

#include "fogflow/errors.hpp"

namespace fogflow::infer {

namespace F = torch::nn::functional;

namespace {

int64_t round_up(int64_t n) { return (n + nets::kDivisor - 1) / nets::kDivisor * nets::kDivisor; }

torch::Tensor pad_to_grid(const torch::Tensor& img) {
    if (img.dim() != 3 || img.size(0) != 3) throw InputError("expected a [3,H,W] image");
    const int64_t h = img.size(1), w = img.size(2);
    auto x = img.unsqueeze(0).to(torch::kFloat32);
    const int64_t ph = round_up(h) - h, pw = round_up(w) - w;
    if (ph == 0 && pw == 0) return x;
    return F::pad(x, F::PadFuncOptions({0, pw, 0, ph}).mode(torch::kReplicate));
}

}  // namespace

torch::Tensor estimate_flow(const nets::ParameterStore& params, nets::Domain domain, const torch::Tensor& frame1,
                            const torch::Tensor& frame2) {
    if (!frame1.sizes().equals(frame2.sizes())) throw InputError("estimate_flow: frame sizes differ");
    torch::NoGradGuard no_grad;
    const int64_t h = frame1.size(1), w = frame1.size(2);
    auto p1 = nets::encode(params, domain, pad_to_grid(frame1));
    auto p2 = nets::encode(params, domain, pad_to_grid(frame2));
    auto flow = nets::estimate_flow(params, p1, p2).final;
    return flow.squeeze(0).narrow(1, 0, h).narrow(2, 0, w).contiguous();
}

torch::Tensor transform(const nets::ParameterStore& params, nets::Domain from, const torch::Tensor& image) {
    torch::NoGradGuard no_grad;
    const int64_t h = image.size(1), w = image.size(2);
    auto x = pad_to_grid(image);
    auto pyr = nets::encode(params, from, x);
    const auto to = from == nets::Domain::Fog ? nets::Domain::Clean : nets::Domain::Fog;
    auto out = nets::decode_image(params, to, pyr, x);
    return out.squeeze(0).narrow(1, 0, h).narrow(2, 0, w).contiguous();
}

}  // namespace fogflow::infer
