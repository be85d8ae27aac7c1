#pragma once

#include <torch/torch.h>

#include "fogflow/nets.hpp"

namespace fogflow::infer {

/// Full-resolution flow [2,H,W] for two [3,H,W] frames of one domain. Frames
/// of any size are edge-padded to a multiple of 64 and the result cropped back.
torch::Tensor estimate_flow(const nets::ParameterStore& params, nets::Domain domain, const torch::Tensor& frame1,
                            const torch::Tensor& frame2);

/// Domain transfer of a single [3,H,W] image: fog -> clean is D_c[E_f[x]],
/// clean -> fog is D_f[E_c[x]].
torch::Tensor transform(const nets::ParameterStore& params, nets::Domain from, const torch::Tensor& image);

}  // namespace fogflow::infer
