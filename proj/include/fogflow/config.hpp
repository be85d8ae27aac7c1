#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace fogflow {

struct NetConfig {
    std::vector<int64_t> encoder_channels{16, 32, 64, 96, 128, 196};
    std::vector<int64_t> flow_head_channels{128, 128, 96, 64, 32};
    int search_radius = 4;
    int resnet_blocks = 6;
    std::vector<int64_t> upsample_channels{128, 64, 32};
    std::vector<int64_t> disc_channels{64, 128, 256, 512};

    /// Narrow widths for CPU-scale tests and smoke runs.
    static NetConfig compact();
};

struct FogSamplingConfig {
    double beta_min = 0.02;
    double beta_max = 0.12;
    double atmo_min = 0.6;
    double atmo_max = 1.0;
    double atmo_spread = 0.1;
};

/// Names used for every loss in reports, weights and enable switches.
namespace loss_names {
inline constexpr const char* kEpeSup = "epe_sup";
inline constexpr const char* kL1Sup = "l1_sup";
inline constexpr const char* kCon = "con";
inline constexpr const char* kEpeCross = "epe_cross";
inline constexpr const char* kGanG = "gan_g";
inline constexpr const char* kGanD = "gan_d";
inline constexpr const char* kHazeline = "hazeline";
inline constexpr const char* kFlowCon = "flow_con";
}  // namespace loss_names

struct LossConfig {
    std::map<std::string, double> weights{
        {"epe_sup", 1.0}, {"l1_sup", 1.0},  {"con", 10.0},     {"epe_cross", 1.0},
        {"gan", 0.5},     {"hazeline", 1.0}, {"flow_con", 1.0},
    };
    double mask_tau = 0.05;
    bool mask_real_clean = true;
    bool mask_real_fog = true;
    bool use_hazeline = true;
    bool use_transform = true;
    bool multiscale_epe = true;
    std::array<double, 5> multiscale_weights{0.32, 0.08, 0.02, 0.01, 0.005};  // levels 2..6
    int atmo_patch = 15;
    /// Losses switched off entirely (e.g. "gan_g"). Empty means all active.
    std::set<std::string> disabled;

    double weight(const std::string& loss) const;
    bool active(const std::string& loss) const;
};

struct OptimConfig {
    double lr = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
};

struct DataConfig {
    std::string synthetic_manifest;
    std::string real_clean_manifest;
    std::string real_fog_manifest;
    int batch_size = 3;
    int crop_height = 256;
    int crop_width = 512;
};

struct TrainConfig {
    std::uint64_t seed = 0;
    int64_t steps = 3000;
    int64_t checkpoint_every = 1000;
    int keep_checkpoints = 3;
    std::string checkpoint_dir = "checkpoints";
    std::string loss_log = "losses.csv";
    bool update_discriminators = true;
};

struct Config {
    NetConfig net;
    FogSamplingConfig fog;
    LossConfig loss;
    OptimConfig optim;
    DataConfig data;
    TrainConfig train;

    nlohmann::json to_json() const;
    static Config from_json(const nlohmann::json& j);

    /// Reads a JSON config; relative manifest paths resolve against the file's directory.
    static Config load(const std::filesystem::path& path);

    /// Applies FOGFLOW_<SECTION>_<KEY>=value overrides from the environment,
    /// e.g. FOGFLOW_OPTIM_LR=1e-4 or FOGFLOW_LOSS_USE_HAZELINE=false.
    void apply_env_overrides(const std::string& prefix = "FOGFLOW_");

    void validate() const;
};

}  // namespace fogflow
