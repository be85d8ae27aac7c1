#pragma once

// Dataset ingestion, synthetic fog sample construction, cropping and the
// stage scheduler that alternates synthetic, real-clean and real-fog batches.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "fogflow/config.hpp"
#include "fogflow/fogphys.hpp"

namespace fogflow::data {

using Rng = std::mt19937_64;

/// A clean frame pair with depth and flow, before fog is applied.
/// Images [3,H,W], depths [H,W] (metres), flow [2,H,W].
struct SyntheticSource {
    torch::Tensor clean1, clean2;
    torch::Tensor depth1, depth2;
    torch::Tensor flow;
};

/// Clean pair, its rendered fog pair, the shared flow ground truth and the
/// fog parameters used for both frames.
struct SyntheticSample {
    torch::Tensor clean1, clean2;
    torch::Tensor fog1, fog2;
    torch::Tensor depth1, depth2;
    torch::Tensor flow;
    fogphys::FogParameters fog;
};

/// Two consecutive frames without ground truth (real clean or real fog).
struct FramePair {
    torch::Tensor frame1, frame2;
};

/// Draws beta and a near-achromatic atmospheric light from the configured ranges.
fogphys::FogParameters sample_fog_parameters(const FogSamplingConfig& cfg, Rng& rng);

/// Renders both frames with one shared set of fog parameters.
SyntheticSample render_sample(const SyntheticSource& src, const fogphys::FogParameters& fog);

SyntheticSample synthesize_sample(const SyntheticSource& src, const FogSamplingConfig& cfg, Rng& rng);

struct CropWindow {
    int64_t row = 0, col = 0, height = 0, width = 0;
};

/// Uniformly placed window; throws InputError if the source is smaller than the crop.
CropWindow random_crop_window(int64_t height, int64_t width, int64_t crop_h, int64_t crop_w, Rng& rng);

/// Applies one window to every image, depth and flow of the sample. Flow values are unchanged.
SyntheticSample crop(const SyntheticSample& s, const CropWindow& w);
SyntheticSource crop(const SyntheticSource& s, const CropWindow& w);
FramePair crop(const FramePair& p, const CropWindow& w);

SyntheticSample random_crop_pair(const SyntheticSample& s, Rng& rng, int64_t crop_h = 256, int64_t crop_w = 512);
FramePair random_crop_pair(const FramePair& p, Rng& rng, int64_t crop_h = 256, int64_t crop_w = 512);

/// One manifest line: frame1 frame2 [depth1 depth2 flow.flo]. Paths are
/// resolved against the manifest's directory. '#' starts a comment.
struct ManifestEntry {
    std::filesystem::path frame1, frame2;
    std::optional<std::filesystem::path> depth1, depth2, flow;
};
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

struct Datasets {
    std::vector<SyntheticSource> synthetic;
    std::vector<FramePair> real_clean;
    std::vector<FramePair> real_fog;

    /// Loads all three manifests. Throws ConfigError for an empty dataset and
    /// InputError for synthetic entries without depth or flow.
    static Datasets load(const DataConfig& cfg);
    void validate() const;
};

enum class Stage { Synthetic, RealClean, RealFog };
const char* stage_name(Stage s);

struct SyntheticBatch {
    torch::Tensor clean1, clean2, fog1, fog2;  // [N,3,H,W]
    torch::Tensor flow;                        // [N,2,H,W]
    std::vector<fogphys::FogParameters> fog;
};

struct PairBatch {
    torch::Tensor frame1, frame2;  // [N,3,H,W]
};

SyntheticBatch collate(const std::vector<SyntheticSample>& samples);
PairBatch collate(const std::vector<FramePair>& pairs);

struct ScheduledBatch {
    Stage stage = Stage::Synthetic;
    SyntheticBatch synthetic;  // set when stage == Synthetic
    PairBatch pair;            // set otherwise
    /// Dataset indices drawn for this batch.
    std::vector<size_t> indices;
};

/// Infinite stage-cycled batch stream: synthetic -> real-clean -> real-fog.
/// Each dataset is reshuffled per epoch and consumed without replacement.
/// Deterministic for a fixed seed; the full position can be saved and restored.
class BatchScheduler {
public:
    BatchScheduler(const Datasets& data, const DataConfig& data_cfg, const FogSamplingConfig& fog_cfg,
                   std::uint64_t seed);

    ScheduledBatch next();
    Stage peek_stage() const { return static_cast<Stage>(position_ % 3); }

    std::string save_state() const;
    void load_state(const std::string& state);

private:
    struct Order {
        std::vector<size_t> perm;
        size_t cursor = 0;
    };
    std::vector<size_t> draw(Order& order, size_t size);

    const Datasets* data_;
    DataConfig data_cfg_;
    FogSamplingConfig fog_cfg_;
    Rng rng_;
    std::uint64_t position_ = 0;
    Order syn_, clean_, fog_;
};

}  // namespace fogflow::data
