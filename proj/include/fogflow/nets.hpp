#pragma once

// Learnable components: two pyramid encoders (fog/clean), the coarse-to-fine
// flow decoder, two domain-transformation decoders and two patch
// discriminators. Tensors are NCHW float; flows are [N,2,H,W] with channel 0
// the horizontal (u) and channel 1 the vertical (v) displacement in pixels.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <torch/torch.h>

#include "fogflow/config.hpp"

namespace fogflow::nets {

enum class Domain { Fog, Clean };

enum class Component { EncoderFog, EncoderClean, FlowDecoder, DecoderFog, DecoderClean, DiscFog, DiscClean };

inline constexpr std::array<Component, 7> kAllComponents{
    Component::EncoderFog,   Component::EncoderClean, Component::FlowDecoder, Component::DecoderFog,
    Component::DecoderClean, Component::DiscFog,      Component::DiscClean,
};

inline constexpr int kPyramidLevels = 6;
inline constexpr int kFinestFlowLevel = 2;
inline constexpr int kDivisor = 64;

std::string_view component_name(Component c);
std::optional<Component> component_from_name(std::string_view name);
std::string_view domain_name(Domain d);

/// Six feature levels; level l (1-based) is [N, C_l, H/2^l, W/2^l].
struct FeaturePyramid {
    std::vector<torch::Tensor> levels;

    const torch::Tensor& level(int l) const { return levels.at(static_cast<size_t>(l - 1)); }
    int64_t image_height() const { return level(1).size(2) * 2; }
    int64_t image_width() const { return level(1).size(3) * 2; }
};

/// Flow estimates at levels 6..2 (in that level's pixel units) plus the
/// full-resolution result.
struct MultiScaleFlow {
    std::map<int, torch::Tensor> levels;
    torch::Tensor final;
};

class EncoderImpl : public torch::nn::Module {
public:
    EncoderImpl(const std::vector<int64_t>& channels);
    std::vector<torch::Tensor> forward(const torch::Tensor& img);

private:
    std::vector<torch::nn::Sequential> stages_;
};
TORCH_MODULE(Encoder);

class FlowDecoderImpl : public torch::nn::Module {
public:
    FlowDecoderImpl(const std::vector<int64_t>& encoder_channels, const std::vector<int64_t>& head_channels,
                    int search_radius);
    MultiScaleFlow forward(const FeaturePyramid& pyr1, const FeaturePyramid& pyr2);

    int search_radius() const { return radius_; }

private:
    int radius_;
    std::map<int, torch::nn::Sequential> heads_;
};
TORCH_MODULE(FlowDecoder);

class TransformDecoderImpl : public torch::nn::Module {
public:
    TransformDecoderImpl(const std::vector<int64_t>& encoder_channels, int resnet_blocks,
                         const std::vector<int64_t>& upsample_channels);
    torch::Tensor forward(const FeaturePyramid& pyr, const torch::Tensor& src);

private:
    torch::nn::Conv2d project_src_{nullptr}, project_l1_{nullptr}, project_l2_{nullptr};
    std::vector<std::pair<torch::nn::Conv2d, torch::nn::Conv2d>> blocks_;
    torch::nn::Sequential upsample_{nullptr};
};
TORCH_MODULE(TransformDecoder);

class DiscriminatorImpl : public torch::nn::Module {
public:
    explicit DiscriminatorImpl(const std::vector<int64_t>& channels);
    torch::Tensor forward(const torch::Tensor& img);

private:
    torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(Discriminator);

using NamedTensors = std::vector<std::pair<std::string, torch::Tensor>>;

/// The seven named weight collections with per-component trainable flags.
class ParameterStore {
public:
    explicit ParameterStore(const NetConfig& config);

    const NetConfig& config() const { return config_; }

    Encoder encoder(Domain d) const { return d == Domain::Fog ? enc_fog_ : enc_clean_; }
    FlowDecoder flow_decoder() const { return flow_; }
    TransformDecoder transform_decoder(Domain d) const { return d == Domain::Fog ? dec_fog_ : dec_clean_; }
    Discriminator discriminator(Domain d) const { return d == Domain::Fog ? dis_fog_ : dis_clean_; }

    std::vector<torch::Tensor> parameters(Component c) const;
    /// Parameter names prefixed with the component name, e.g. "E_f/stage1.0.weight".
    NamedTensors named_parameters(Component c) const;
    NamedTensors named_parameters() const;
    int64_t parameter_count(Component c) const;

    bool trainable(Component c) const { return trainable_.at(static_cast<size_t>(c)); }
    void set_trainable(Component c, bool on);

    /// Deep copies of every parameter, keyed by qualified name.
    std::map<std::string, torch::Tensor> snapshot() const;
    /// Independent store with identical weights.
    ParameterStore clone() const;
    /// Copies values from `other` (same config); names must match exactly.
    void copy_from(const ParameterStore& other);

private:
    torch::nn::Module& module(Component c) const;

    NetConfig config_;
    Encoder enc_fog_{nullptr}, enc_clean_{nullptr};
    FlowDecoder flow_{nullptr};
    TransformDecoder dec_fog_{nullptr}, dec_clean_{nullptr};
    Discriminator dis_fog_{nullptr}, dis_clean_{nullptr};
    std::array<bool, 7> trainable_{true, true, true, true, true, true, true};
};

/// Deterministic initialisation: fan-in scaled uniform weights, zero biases.
ParameterStore init_network(std::uint64_t seed, const NetConfig& config);

/// H and W must be multiples of 64.
FeaturePyramid encode(const ParameterStore& params, Domain domain, const torch::Tensor& img);

/// Backward bilinear warp: out(x) = feat(x + flow(x)); samples outside the grid are zero.
torch::Tensor warp(const torch::Tensor& feat, const torch::Tensor& flow);

/// Correlation of per-pixel unit-normalised features over a (2r+1)^2 window.
/// Channel k = (dv + r) * (2r + 1) + (du + r).
torch::Tensor cost_volume(const torch::Tensor& f1, const torch::Tensor& f2_warped, int radius);

MultiScaleFlow estimate_flow(const ParameterStore& params, const FeaturePyramid& pyr1,
                             const FeaturePyramid& pyr2);

torch::Tensor decode_image(const ParameterStore& params, Domain domain, const FeaturePyramid& pyr,
                           const torch::Tensor& src);

torch::Tensor discriminate(const ParameterStore& params, Domain domain, const torch::Tensor& img);

/// Score-map size for a given input extent: five k=4, pad=1 stages with strides 2,2,2,1,1.
int64_t patch_score_extent(int64_t n);

}  // namespace fogflow::nets
