#pragma once

#include <string>
#include <torch/torch.h>

#include "fogflow/errors.hpp"

namespace fogflow::detail {

/// [C,H,W] -> [1,C,H,W]; [N,C,H,W] passes through.
inline torch::Tensor as_batch(const torch::Tensor& t, const char* what) {
    if (t.dim() == 3) return t.unsqueeze(0);
    if (t.dim() == 4) return t;
    throw InputError(std::string(what) + ": expected a [C,H,W] or [N,C,H,W] tensor");
}

/// Map-like input ([H,W], [1,H,W], [N,1,H,W]) -> [N,1,H,W].
inline torch::Tensor as_map_batch(const torch::Tensor& t, const char* what) {
    switch (t.dim()) {
        case 2: return t.unsqueeze(0).unsqueeze(0);
        case 3: return t.unsqueeze(1);
        case 4: return t;
        default: throw InputError(std::string(what) + ": expected a 2-4 dimensional map");
    }
}

inline bool all_finite(const torch::Tensor& t) {
    return torch::isfinite(t).all().item<bool>();
}

inline std::string shape_str(const torch::Tensor& t) {
    std::string s = "[";
    for (int64_t i = 0; i < t.dim(); ++i) {
        if (i) s += ",";
        s += std::to_string(t.size(i));
    }
    return s + "]";
}

}  // namespace fogflow::detail
