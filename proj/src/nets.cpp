#include "fogflow/nets.hpp"

#include <cmath>

#include "fogflow/errors.hpp"
#include "tensor_util.hpp"

namespace fogflow::nets {

namespace F = torch::nn::functional;
using torch::nn::Conv2d;
using torch::nn::Conv2dOptions;
using torch::nn::ConvTranspose2d;
using torch::nn::ConvTranspose2dOptions;
using torch::nn::LeakyReLU;
using torch::nn::LeakyReLUOptions;
using torch::nn::Sequential;

namespace {

constexpr double kFeatureSlope = 0.1;
constexpr double kDiscSlope = 0.2;

Conv2d conv(int64_t in, int64_t out, int64_t k, int64_t stride, int64_t pad) {
    return Conv2d(Conv2dOptions(in, out, k).stride(stride).padding(pad));
}

LeakyReLU leaky(double slope = kFeatureSlope) { return LeakyReLU(LeakyReLUOptions().negative_slope(slope)); }

}  // namespace

std::string_view component_name(Component c) {
    switch (c) {
        case Component::EncoderFog: return "E_f";
        case Component::EncoderClean: return "E_c";
        case Component::FlowDecoder: return "D_of";
        case Component::DecoderFog: return "D_f";
        case Component::DecoderClean: return "D_c";
        case Component::DiscFog: return "Dis_f";
        case Component::DiscClean: return "Dis_c";
    }
    return "?";
}

std::optional<Component> component_from_name(std::string_view name) {
    for (auto c : kAllComponents)
        if (component_name(c) == name) return c;
    return std::nullopt;
}

std::string_view domain_name(Domain d) { return d == Domain::Fog ? "fog" : "clean"; }

// ---------------------------------------------------------------------------

EncoderImpl::EncoderImpl(const std::vector<int64_t>& channels) {
    int64_t in = 3;
    for (size_t l = 0; l < channels.size(); ++l) {
        const int64_t out = channels[l];
        Sequential stage(conv(in, out, 3, 2, 1), leaky(), conv(out, out, 3, 1, 1), leaky());
        stages_.push_back(register_module("stage" + std::to_string(l + 1), stage));
        in = out;
    }
}

std::vector<torch::Tensor> EncoderImpl::forward(const torch::Tensor& img) {
    std::vector<torch::Tensor> levels;
    levels.reserve(stages_.size());
    auto x = img;
    for (auto& stage : stages_) {
        x = stage->forward(x);
        levels.push_back(x);
    }
    return levels;
}

// ---------------------------------------------------------------------------

FlowDecoderImpl::FlowDecoderImpl(const std::vector<int64_t>& encoder_channels,
                                 const std::vector<int64_t>& head_channels, int search_radius)
    : radius_(search_radius) {
    const int64_t corr = (2 * radius_ + 1) * (2 * radius_ + 1);
    for (int l = kPyramidLevels; l >= kFinestFlowLevel; --l) {
        Sequential head;
        int64_t in = corr + encoder_channels.at(static_cast<size_t>(l - 1)) + 2;
        for (int64_t width : head_channels) {
            head->push_back(conv(in, width, 3, 1, 1));
            head->push_back(leaky());
            in = width;
        }
        head->push_back(conv(in, 2, 3, 1, 1));
        heads_[l] = register_module("level" + std::to_string(l), head);
    }
}

MultiScaleFlow FlowDecoderImpl::forward(const FeaturePyramid& pyr1, const FeaturePyramid& pyr2) {
    MultiScaleFlow out;
    torch::Tensor flow;
    for (int l = kPyramidLevels; l >= kFinestFlowLevel; --l) {
        const auto& f1 = pyr1.level(l);
        const auto& f2 = pyr2.level(l);
        torch::Tensor up;
        if (flow.defined()) {
            up = F::interpolate(flow, F::InterpolateFuncOptions()
                                          .size(std::vector<int64_t>{f1.size(2), f1.size(3)})
                                          .mode(torch::kBilinear)
                                          .align_corners(false)) *
                 2.0;
        } else {
            up = torch::zeros({f1.size(0), 2, f1.size(2), f1.size(3)}, f1.options());
        }
        auto corr = F::leaky_relu(cost_volume(f1, warp(f2, up), radius_),
                                  F::LeakyReLUFuncOptions().negative_slope(kFeatureSlope));
        flow = up + heads_.at(l)->forward(torch::cat({corr, f1, up}, 1));
        out.levels[l] = flow;
    }
    const int64_t scale = int64_t{1} << kFinestFlowLevel;
    out.final = F::interpolate(flow, F::InterpolateFuncOptions()
                                         .size(std::vector<int64_t>{flow.size(2) * scale, flow.size(3) * scale})
                                         .mode(torch::kBilinear)
                                         .align_corners(false)) *
                static_cast<double>(scale);
    return out;
}

// ---------------------------------------------------------------------------

TransformDecoderImpl::TransformDecoderImpl(const std::vector<int64_t>& encoder_channels, int resnet_blocks,
                                           const std::vector<int64_t>& upsample_channels) {
    const int64_t c3 = encoder_channels.at(2);
    // Image, level-1 and level-2 features are brought to the level-3 grid.
    project_src_ = register_module("project_src", conv(3, c3, 8, 8, 0));
    project_l1_ = register_module("project_l1", conv(encoder_channels.at(0), c3, 4, 4, 0));
    project_l2_ = register_module("project_l2", conv(encoder_channels.at(1), c3, 2, 2, 0));
    const int64_t width = 4 * c3;
    for (int b = 0; b < resnet_blocks; ++b) {
        auto a = register_module("block" + std::to_string(b + 1) + "_a", conv(width, width, 3, 1, 1));
        auto c = register_module("block" + std::to_string(b + 1) + "_b", conv(width, width, 3, 1, 1));
        blocks_.emplace_back(a, c);
    }
    Sequential up;
    int64_t in = width;
    for (int64_t out : upsample_channels) {
        up->push_back(ConvTranspose2d(ConvTranspose2dOptions(in, out, 4).stride(2).padding(1)));
        up->push_back(leaky());
        in = out;
    }
    up->push_back(conv(in, 3, 3, 1, 1));
    upsample_ = register_module("upsample", up);
}

torch::Tensor TransformDecoderImpl::forward(const FeaturePyramid& pyr, const torch::Tensor& src) {
    const auto slope = F::LeakyReLUFuncOptions().negative_slope(kFeatureSlope);
    auto x = torch::cat({F::leaky_relu(project_src_->forward(src), slope),
                         F::leaky_relu(project_l1_->forward(pyr.level(1)), slope),
                         F::leaky_relu(project_l2_->forward(pyr.level(2)), slope), pyr.level(3)},
                        1);
    for (auto& [a, b] : blocks_) x = x + b->forward(F::leaky_relu(a->forward(x), slope));
    return torch::sigmoid(upsample_->forward(x));
}

// ---------------------------------------------------------------------------

DiscriminatorImpl::DiscriminatorImpl(const std::vector<int64_t>& channels) {
    const std::array<int64_t, 5> strides{2, 2, 2, 1, 1};
    Sequential body;
    int64_t in = 3;
    for (size_t i = 0; i < 5; ++i) {
        const int64_t out = i < 4 ? channels.at(i) : 1;
        body->push_back(conv(in, out, 4, strides[i], 1));
        if (i < 4) body->push_back(leaky(kDiscSlope));
        in = out;
    }
    body_ = register_module("body", body);
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& img) { return body_->forward(img); }

int64_t patch_score_extent(int64_t n) {
    for (int64_t s : {2, 2, 2, 1, 1}) n = (n + 2 - 4) / s + 1;
    return n;
}

// ---------------------------------------------------------------------------

ParameterStore::ParameterStore(const NetConfig& config) : config_(config) {
    enc_fog_ = Encoder(config.encoder_channels);
    enc_clean_ = Encoder(config.encoder_channels);
    flow_ = FlowDecoder(config.encoder_channels, config.flow_head_channels, config.search_radius);
    dec_fog_ = TransformDecoder(config.encoder_channels, config.resnet_blocks, config.upsample_channels);
    dec_clean_ = TransformDecoder(config.encoder_channels, config.resnet_blocks, config.upsample_channels);
    dis_fog_ = Discriminator(config.disc_channels);
    dis_clean_ = Discriminator(config.disc_channels);
}

torch::nn::Module& ParameterStore::module(Component c) const {
    switch (c) {
        case Component::EncoderFog: return *enc_fog_.ptr();
        case Component::EncoderClean: return *enc_clean_.ptr();
        case Component::FlowDecoder: return *flow_.ptr();
        case Component::DecoderFog: return *dec_fog_.ptr();
        case Component::DecoderClean: return *dec_clean_.ptr();
        case Component::DiscFog: return *dis_fog_.ptr();
        case Component::DiscClean: return *dis_clean_.ptr();
    }
    throw std::logic_error("unknown component");
}

std::vector<torch::Tensor> ParameterStore::parameters(Component c) const { return module(c).parameters(); }

NamedTensors ParameterStore::named_parameters(Component c) const {
    NamedTensors out;
    const std::string prefix = std::string(component_name(c)) + "/";
    for (const auto& item : module(c).named_parameters()) out.emplace_back(prefix + item.key(), item.value());
    return out;
}

NamedTensors ParameterStore::named_parameters() const {
    NamedTensors out;
    for (auto c : kAllComponents) {
        auto part = named_parameters(c);
        out.insert(out.end(), part.begin(), part.end());
    }
    return out;
}

int64_t ParameterStore::parameter_count(Component c) const {
    int64_t n = 0;
    for (const auto& p : parameters(c)) n += p.numel();
    return n;
}

void ParameterStore::set_trainable(Component c, bool on) {
    trainable_.at(static_cast<size_t>(c)) = on;
    for (auto& p : parameters(c)) p.set_requires_grad(on);
}

std::map<std::string, torch::Tensor> ParameterStore::snapshot() const {
    std::map<std::string, torch::Tensor> out;
    for (const auto& [name, t] : named_parameters()) out[name] = t.detach().clone();
    return out;
}

ParameterStore ParameterStore::clone() const {
    ParameterStore copy(config_);
    copy.copy_from(*this);
    copy.trainable_ = trainable_;
    for (auto c : kAllComponents) copy.set_trainable(c, trainable_.at(static_cast<size_t>(c)));
    return copy;
}

void ParameterStore::copy_from(const ParameterStore& other) {
    auto dst = named_parameters();
    auto src = other.named_parameters();
    if (dst.size() != src.size()) throw InputError("ParameterStore::copy_from: architectures differ");
    torch::NoGradGuard no_grad;
    for (size_t i = 0; i < dst.size(); ++i) {
        if (dst[i].first != src[i].first || !dst[i].second.sizes().equals(src[i].second.sizes()))
            throw InputError("ParameterStore::copy_from: parameter mismatch at " + dst[i].first);
        dst[i].second.copy_(src[i].second);
    }
}

ParameterStore init_network(std::uint64_t seed, const NetConfig& config) {
    ParameterStore store(config);
    auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
    torch::NoGradGuard no_grad;
    const double gain2 = 2.0 / (1.0 + kFeatureSlope * kFeatureSlope);
    auto init = [&](torch::Tensor& weight, torch::Tensor& bias, double fan_in) {
        const double bound = std::sqrt(3.0 * gain2 / fan_in);
        weight.uniform_(-bound, bound, gen);
        if (bias.defined()) bias.zero_();
    };
    for (auto c : kAllComponents) {
        torch::nn::Module* root = nullptr;
        switch (c) {
            case Component::EncoderFog: root = store.encoder(Domain::Fog).get(); break;
            case Component::EncoderClean: root = store.encoder(Domain::Clean).get(); break;
            case Component::FlowDecoder: root = store.flow_decoder().get(); break;
            case Component::DecoderFog: root = store.transform_decoder(Domain::Fog).get(); break;
            case Component::DecoderClean: root = store.transform_decoder(Domain::Clean).get(); break;
            case Component::DiscFog: root = store.discriminator(Domain::Fog).get(); break;
            case Component::DiscClean: root = store.discriminator(Domain::Clean).get(); break;
        }
        for (auto& m : root->modules(/*include_self=*/false)) {
            if (auto* cv = m->as<torch::nn::Conv2d>()) {
                const auto& w = cv->weight;
                init(cv->weight, cv->bias, static_cast<double>(w.size(1) * w.size(2) * w.size(3)));
            } else if (auto* tc = m->as<torch::nn::ConvTranspose2d>()) {
                // Weight is [in, out, k, k]; each output sums in * (k/stride)^2 taps.
                const auto& w = tc->weight;
                const double stride = static_cast<double>(tc->options.stride()->at(0));
                init(tc->weight, tc->bias, static_cast<double>(w.size(0) * w.size(2) * w.size(3)) / (stride * stride));
            }
        }
    }
    return store;
}

// ---------------------------------------------------------------------------

FeaturePyramid encode(const ParameterStore& params, Domain domain, const torch::Tensor& img) {
    auto x = detail::as_batch(img, "encode");
    if (x.size(1) != 3) throw InputError("encode: image must have 3 channels");
    if (x.size(2) % kDivisor || x.size(3) % kDivisor || x.size(2) == 0 || x.size(3) == 0)
        throw InputError("encode: image size " + std::to_string(x.size(2)) + "x" + std::to_string(x.size(3)) +
                         " is not a multiple of 64");
    return {params.encoder(domain)->forward(x)};
}

torch::Tensor warp(const torch::Tensor& feat, const torch::Tensor& flow) {
    if (feat.dim() != 4 || flow.dim() != 4 || flow.size(1) != 2 || feat.size(0) != flow.size(0) ||
        feat.size(2) != flow.size(2) || feat.size(3) != flow.size(3)) {
        throw InputError("warp: feature " + detail::shape_str(feat) + " and flow " + detail::shape_str(flow) +
                         " shapes disagree");
    }
    const int64_t n = feat.size(0), c = feat.size(1), h = feat.size(2), w = feat.size(3);
    auto opts = flow.options();
    auto xs = torch::arange(w, opts).view({1, 1, w});
    auto ys = torch::arange(h, opts).view({1, h, 1});
    auto gx = xs + flow.select(1, 0);
    auto gy = ys + flow.select(1, 1);
    auto x0 = gx.detach().floor();
    auto y0 = gy.detach().floor();
    auto fx = gx - x0;
    auto fy = gy - y0;

    auto flat = feat.reshape({n, c, h * w});
    auto sample = [&](const torch::Tensor& xi, const torch::Tensor& yi, const torch::Tensor& weight) {
        auto inside = (xi >= 0) & (xi <= w - 1) & (yi >= 0) & (yi <= h - 1);
        auto idx = (yi.clamp(0, h - 1) * w + xi.clamp(0, w - 1)).to(torch::kLong).view({n, 1, h * w});
        auto vals = flat.gather(2, idx.expand({n, c, h * w})).view({n, c, h, w});
        return vals * (weight * inside.to(weight.dtype())).unsqueeze(1);
    };
    return sample(x0, y0, (1 - fx) * (1 - fy)) + sample(x0 + 1, y0, fx * (1 - fy)) +
           sample(x0, y0 + 1, (1 - fx) * fy) + sample(x0 + 1, y0 + 1, fx * fy);
}

torch::Tensor cost_volume(const torch::Tensor& f1, const torch::Tensor& f2_warped, int radius) {
    if (f1.dim() != 4 || !f1.sizes().equals(f2_warped.sizes()))
        throw InputError("cost_volume: feature shapes " + detail::shape_str(f1) + " and " +
                         detail::shape_str(f2_warped) + " disagree");
    if (radius < 0) throw InputError("cost_volume: radius must be non-negative");
    const auto norm = F::NormalizeFuncOptions().p(2).dim(1).eps(1e-8);
    auto a = F::normalize(f1, norm);
    auto b = F::pad(F::normalize(f2_warped, norm), F::PadFuncOptions({radius, radius, radius, radius}));
    const int64_t h = f1.size(2), w = f1.size(3);
    std::vector<torch::Tensor> channels;
    channels.reserve(static_cast<size_t>((2 * radius + 1) * (2 * radius + 1)));
    for (int dv = -radius; dv <= radius; ++dv)
        for (int du = -radius; du <= radius; ++du) {
            auto shifted = b.slice(2, radius + dv, radius + dv + h).slice(3, radius + du, radius + du + w);
            channels.push_back((a * shifted).sum(1));
        }
    return torch::stack(channels, 1);
}

MultiScaleFlow estimate_flow(const ParameterStore& params, const FeaturePyramid& pyr1, const FeaturePyramid& pyr2) {
    if (pyr1.levels.size() != kPyramidLevels || pyr2.levels.size() != kPyramidLevels)
        throw InputError("estimate_flow: pyramids must have 6 levels");
    for (int l = 1; l <= kPyramidLevels; ++l) {
        if (!pyr1.level(l).sizes().equals(pyr2.level(l).sizes()))
            throw InputError("estimate_flow: pyramid level " + std::to_string(l) + " shapes disagree: " +
                             detail::shape_str(pyr1.level(l)) + " vs " + detail::shape_str(pyr2.level(l)));
    }
    return params.flow_decoder()->forward(pyr1, pyr2);
}

torch::Tensor decode_image(const ParameterStore& params, Domain domain, const FeaturePyramid& pyr,
                           const torch::Tensor& src) {
    auto x = detail::as_batch(src, "decode_image");
    if (x.size(2) != pyr.image_height() || x.size(3) != pyr.image_width())
        throw InputError("decode_image: source image does not match the pyramid");
    return params.transform_decoder(domain)->forward(pyr, x);
}

torch::Tensor discriminate(const ParameterStore& params, Domain domain, const torch::Tensor& img) {
    return params.discriminator(domain)->forward(detail::as_batch(img, "discriminate"));
}

}  // namespace fogflow::nets
