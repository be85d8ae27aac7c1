#include "fogflow/metrics.hpp"

#include "fogflow/errors.hpp"
#include "tensor_util.hpp"

namespace fogflow::eval {

namespace {

torch::Tensor unbatch_flow(const torch::Tensor& f, const char* what) {
    auto t = f.dim() == 4 && f.size(0) == 1 ? f.squeeze(0) : f;
    if (t.dim() != 3 || t.size(0) != 2) throw InputError(std::string(what) + ": expected a [2,H,W] flow");
    return t;
}

/// Per-pixel end-point error of the valid pixels, in double precision.
torch::Tensor valid_errors(const torch::Tensor& pred, const torch::Tensor& gt, const torch::Tensor& valid,
                           const char* what) {
    auto p = unbatch_flow(pred, what).detach().to(torch::kFloat64);
    auto g = unbatch_flow(gt, what).detach().to(torch::kFloat64);
    if (!p.sizes().equals(g.sizes()))
        throw InputError(std::string(what) + ": prediction " + detail::shape_str(pred) + " and ground truth " +
                         detail::shape_str(gt) + " disagree");
    auto v = valid.detach();
    while (v.dim() > 2 && v.size(0) == 1) v = v.squeeze(0);
    if (v.dim() != 2 || v.size(0) != g.size(1) || v.size(1) != g.size(2))
        throw InputError(std::string(what) + ": validity mask does not match the flow");
    auto sel = v.ne(0);
    if (!sel.any().item<bool>()) throw InputError(std::string(what) + ": validity mask is empty");
    auto err = torch::sqrt((p - g).pow(2).sum(0));
    return err.masked_select(sel);
}

}  // namespace

double metric_epe(const torch::Tensor& pred, const torch::Tensor& gt, const torch::Tensor& valid) {
    return valid_errors(pred, gt, valid, "metric_epe").mean().item<double>();
}

double metric_bad_pixel(const torch::Tensor& pred, const torch::Tensor& gt, const torch::Tensor& valid, double delta) {
    if (!(delta > 0)) throw InputError("metric_bad_pixel: delta must be positive");
    auto err = valid_errors(pred, gt, valid, "metric_bad_pixel");
    return err.gt(delta).to(torch::kFloat64).mean().item<double>();
}

MetricReport evaluate_flow(const torch::Tensor& pred, const torch::Tensor& gt, const torch::Tensor& valid,
                           const std::vector<double>& deltas) {
    auto err = valid_errors(pred, gt, valid, "evaluate_flow");
    MetricReport r;
    r.n_valid = err.numel();
    r.epe = err.mean().item<double>();
    for (double d : deltas) {
        if (!(d > 0)) throw InputError("evaluate_flow: delta must be positive");
        r.bad_pixel[d] = err.gt(d).to(torch::kFloat64).mean().item<double>();
    }
    return r;
}

}  // namespace fogflow::eval
