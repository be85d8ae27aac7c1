#pragma once

// The three-stage alternating training protocol.
//
// Every loss carries the set of components its backward pass may update
// (its freeze schedule). Gradients are taken per set with
// torch::autograd::grad, so a component only ever receives gradient from
// losses whose set names it, and only components that received gradient
// take an optimizer step.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "fogflow/config.hpp"
#include "fogflow/datapipe.hpp"
#include "fogflow/losses.hpp"
#include "fogflow/nets.hpp"

namespace fogflow::train {

using nets::Component;
using ComponentSet = std::set<Component>;

/// Loss term name -> components updated by that term's backward pass.
struct FreezeSchedule {
    std::map<std::string, ComponentSet> sets;

    const ComponentSet& trainable_for(const std::string& term) const;
    static FreezeSchedule for_stage(data::Stage stage);
};

struct TrainState {
    Config config;
    nets::ParameterStore params;
    std::array<std::unique_ptr<torch::optim::Adam>, 7> optimizers;
    int64_t step = 0;
    std::string scheduler_state;
    /// Most recent frames of each domain, used as "real" samples by the discriminators.
    torch::Tensor fog_reference, clean_reference;
    bool fog_reference_real = false, clean_reference_real = false;

    TrainState(Config cfg, nets::ParameterStore store);
    TrainState(TrainState&&) = default;
    TrainState& operator=(TrainState&&) = default;

    /// Fresh network from config.train.seed with one Adam per component.
    static TrainState create(const Config& cfg);

    torch::optim::Adam& optimizer(Component c) { return *optimizers.at(static_cast<size_t>(c)); }
};

/// Term names used inside steps (several terms may share one report column).
namespace terms {
inline constexpr const char* kEpeSupFog = "epe_sup/fog";
inline constexpr const char* kEpeSupClean = "epe_sup/clean";
inline constexpr const char* kL1FogToClean = "l1_sup/fog_to_clean";
inline constexpr const char* kL1CleanToFog = "l1_sup/clean_to_fog";
inline constexpr const char* kGanGFog = "gan_g/fog";
inline constexpr const char* kGanGClean = "gan_g/clean";
inline constexpr const char* kGanDFog = "gan_d/fog";
inline constexpr const char* kGanDClean = "gan_d/clean";
inline constexpr const char* kCon = "con";
inline constexpr const char* kEpeCross = "epe_cross";
inline constexpr const char* kHazeline = "hazeline";
inline constexpr const char* kFlowCon = "flow_con";
}  // namespace terms

/// Supervised stage on synthetic fog/clean pairs with flow ground truth.
losses::LossReport step_synthetic(TrainState& state, const data::SyntheticBatch& batch);

/// Real clean pairs: cycle clean -> fog -> clean, masked cross-domain EPE
/// against the (constant) clean-branch flow, adversarial and hazeline losses.
losses::LossReport step_real_clean(TrainState& state, const data::PairBatch& batch);

/// Real fog pairs: cycle fog -> clean -> fog, adversarial and hazeline losses
/// on the rendered clean frames, flow consistency updating only the encoders.
losses::LossReport step_real_fog(TrainState& state, const data::PairBatch& batch);

/// Dispatches one scheduled batch and advances state.step.
losses::LossReport train_step(TrainState& state, const data::ScheduledBatch& batch);

/// Final-scale EPE of the network on synthetic pairs (no gradient).
struct SyntheticEval {
    double epe_fog = 0.0;
    double epe_clean = 0.0;
};
SyntheticEval evaluate_synthetic(const TrainState& state, const data::SyntheticBatch& batch);

using ReportSink = std::function<void(const losses::LossReport&)>;

/// Runs `cfg.train.steps` total steps (counting any restored ones), logging
/// every report to cfg.train.loss_log (when non-empty) and checkpointing every
/// cfg.train.checkpoint_every steps into cfg.train.checkpoint_dir.
TrainState train(const Config& cfg, const data::Datasets& datasets,
                 const std::optional<std::filesystem::path>& resume = std::nullopt, const ReportSink& sink = {});

/// Loads the datasets named in the config, then trains.
TrainState train(const Config& cfg, const std::optional<std::filesystem::path>& resume = std::nullopt);

// Checkpoints ---------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Single-file archive: header, JSON metadata (config, step, scheduler state,
/// optimizer step counts), every named parameter, optimizer moments and the
/// discriminator reference frames, followed by a CRC-32 of all prior bytes.
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);

/// Throws CheckpointError on a bad magic, version mismatch, CRC failure or
/// malformed content; nothing is modified on failure.
TrainState load_checkpoint(const std::filesystem::path& path);

/// Only the network weights (for inference commands).
nets::ParameterStore load_weights(const std::filesystem::path& path);

}  // namespace fogflow::train
