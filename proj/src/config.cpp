#include "fogflow/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>

#include "fogflow/errors.hpp"

namespace fogflow {

using nlohmann::json;

NetConfig NetConfig::compact() {
    NetConfig c;
    c.encoder_channels = {8, 12, 16, 20, 24, 32};
    c.flow_head_channels = {32, 32, 24, 16, 8};
    c.resnet_blocks = 6;
    c.upsample_channels = {16, 12, 8};
    c.disc_channels = {8, 16, 32, 32};
    return c;
}

double LossConfig::weight(const std::string& loss) const {
    // Both adversarial terms share one weight.
    const std::string key = (loss == loss_names::kGanG || loss == loss_names::kGanD) ? "gan" : loss;
    auto it = weights.find(key);
    if (it == weights.end()) throw ConfigError("no weight configured for loss '" + loss + "'");
    return it->second;
}

bool LossConfig::active(const std::string& loss) const {
    if (disabled.count(loss)) return false;
    if (loss == loss_names::kHazeline && !use_hazeline) return false;
    return true;
}

json Config::to_json() const {
    json j;
    j["net"] = {
        {"encoder_channels", net.encoder_channels},
        {"flow_head_channels", net.flow_head_channels},
        {"search_radius", net.search_radius},
        {"resnet_blocks", net.resnet_blocks},
        {"upsample_channels", net.upsample_channels},
        {"disc_channels", net.disc_channels},
    };
    j["fog"] = {
        {"beta_min", fog.beta_min},   {"beta_max", fog.beta_max},
        {"atmo_min", fog.atmo_min},   {"atmo_max", fog.atmo_max},
        {"atmo_spread", fog.atmo_spread},
    };
    j["loss"] = {
        {"weights", loss.weights},
        {"mask_tau", loss.mask_tau},
        {"mask_real_clean", loss.mask_real_clean},
        {"mask_real_fog", loss.mask_real_fog},
        {"use_hazeline", loss.use_hazeline},
        {"use_transform", loss.use_transform},
        {"multiscale_epe", loss.multiscale_epe},
        {"multiscale_weights", loss.multiscale_weights},
        {"atmo_patch", loss.atmo_patch},
        {"disabled", loss.disabled},
    };
    j["optim"] = {{"lr", optim.lr}, {"beta1", optim.beta1}, {"beta2", optim.beta2}};
    j["data"] = {
        {"synthetic_manifest", data.synthetic_manifest},
        {"real_clean_manifest", data.real_clean_manifest},
        {"real_fog_manifest", data.real_fog_manifest},
        {"batch_size", data.batch_size},
        {"crop_height", data.crop_height},
        {"crop_width", data.crop_width},
    };
    j["train"] = {
        {"seed", train.seed},
        {"steps", train.steps},
        {"checkpoint_every", train.checkpoint_every},
        {"keep_checkpoints", train.keep_checkpoints},
        {"checkpoint_dir", train.checkpoint_dir},
        {"loss_log", train.loss_log},
        {"update_discriminators", train.update_discriminators},
    };
    return j;
}

namespace {

template <typename T>
void read(const json& section, const char* key, T& out) {
    if (section.contains(key)) section.at(key).get_to(out);
}

const json& section(const json& j, const char* name) {
    static const json empty = json::object();
    if (!j.contains(name)) return empty;
    const auto& s = j.at(name);
    if (!s.is_object()) throw ConfigError(std::string("config section '") + name + "' must be an object");
    return s;
}

}  // namespace

Config Config::from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    const json known = Config{}.to_json();
    for (const auto& [sec, body] : j.items()) {
        if (!known.contains(sec)) throw ConfigError("unknown config section '" + sec + "'");
        if (!body.is_object()) continue;
        for (const auto& [key, value] : body.items())
            if (!known.at(sec).contains(key)) throw ConfigError("unknown config key '" + sec + "." + key + "'");
    }
    Config c;
    try {
        const auto& n = section(j, "net");
        read(n, "encoder_channels", c.net.encoder_channels);
        read(n, "flow_head_channels", c.net.flow_head_channels);
        read(n, "search_radius", c.net.search_radius);
        read(n, "resnet_blocks", c.net.resnet_blocks);
        read(n, "upsample_channels", c.net.upsample_channels);
        read(n, "disc_channels", c.net.disc_channels);

        const auto& f = section(j, "fog");
        read(f, "beta_min", c.fog.beta_min);
        read(f, "beta_max", c.fog.beta_max);
        read(f, "atmo_min", c.fog.atmo_min);
        read(f, "atmo_max", c.fog.atmo_max);
        read(f, "atmo_spread", c.fog.atmo_spread);

        const auto& l = section(j, "loss");
        if (l.contains("weights"))
            for (auto& [k, v] : l.at("weights").items()) c.loss.weights[k] = v.get<double>();
        read(l, "mask_tau", c.loss.mask_tau);
        read(l, "mask_real_clean", c.loss.mask_real_clean);
        read(l, "mask_real_fog", c.loss.mask_real_fog);
        read(l, "use_hazeline", c.loss.use_hazeline);
        read(l, "use_transform", c.loss.use_transform);
        read(l, "multiscale_epe", c.loss.multiscale_epe);
        read(l, "multiscale_weights", c.loss.multiscale_weights);
        read(l, "atmo_patch", c.loss.atmo_patch);
        read(l, "disabled", c.loss.disabled);

        const auto& o = section(j, "optim");
        read(o, "lr", c.optim.lr);
        read(o, "beta1", c.optim.beta1);
        read(o, "beta2", c.optim.beta2);

        const auto& d = section(j, "data");
        read(d, "synthetic_manifest", c.data.synthetic_manifest);
        read(d, "real_clean_manifest", c.data.real_clean_manifest);
        read(d, "real_fog_manifest", c.data.real_fog_manifest);
        read(d, "batch_size", c.data.batch_size);
        read(d, "crop_height", c.data.crop_height);
        read(d, "crop_width", c.data.crop_width);

        const auto& t = section(j, "train");
        read(t, "seed", c.train.seed);
        read(t, "steps", c.train.steps);
        read(t, "checkpoint_every", c.train.checkpoint_every);
        read(t, "keep_checkpoints", c.train.keep_checkpoints);
        read(t, "checkpoint_dir", c.train.checkpoint_dir);
        read(t, "loss_log", c.train.loss_log);
        read(t, "update_discriminators", c.train.update_discriminators);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    return c;
}

Config Config::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("cannot parse " + path.string() + ": " + e.what());
    }
    Config c = from_json(j);
    const auto base = path.parent_path();
    for (std::string* p : {&c.data.synthetic_manifest, &c.data.real_clean_manifest,
                           &c.data.real_fog_manifest}) {
        if (!p->empty() && std::filesystem::path(*p).is_relative()) *p = (base / *p).string();
    }
    return c;
}

void Config::apply_env_overrides(const std::string& prefix) {
    json j = to_json();
    for (auto& [sec, body] : j.items()) {
        for (auto& [key, value] : body.items()) {
            std::string name = prefix + sec + "_" + key;
            std::transform(name.begin(), name.end(), name.begin(),
                           [](unsigned char ch) { return static_cast<char>(std::toupper(ch)); });
            const char* env = std::getenv(name.c_str());
            if (!env) continue;
            json parsed = json::parse(env, nullptr, /*allow_exceptions=*/false);
            if (parsed.is_discarded() || (value.is_string() && !parsed.is_string())) parsed = std::string(env);
            value = parsed;
        }
    }
    *this = from_json(j);
}

void Config::validate() const {
    if (net.encoder_channels.size() != 6) throw ConfigError("net.encoder_channels needs 6 entries");
    if (net.flow_head_channels.empty()) throw ConfigError("net.flow_head_channels must not be empty");
    if (net.upsample_channels.size() != 3) throw ConfigError("net.upsample_channels needs 3 entries");
    if (net.disc_channels.size() != 4) throw ConfigError("net.disc_channels needs 4 entries");
    if (net.search_radius < 0) throw ConfigError("net.search_radius must be >= 0");
    if (fog.beta_min < 0 || fog.beta_max < fog.beta_min) throw ConfigError("fog beta range is invalid");
    if (fog.atmo_min < 0 || fog.atmo_max > 1 || fog.atmo_max < fog.atmo_min || fog.atmo_spread < 0)
        throw ConfigError("fog atmospheric light range is invalid");
    if (!(loss.mask_tau > 0)) throw ConfigError("loss.mask_tau must be positive");
    if (loss.atmo_patch <= 0) throw ConfigError("loss.atmo_patch must be positive");
    if (data.batch_size <= 0) throw ConfigError("data.batch_size must be positive");
    if (data.crop_height % 64 || data.crop_width % 64 || data.crop_height <= 0 || data.crop_width <= 0)
        throw ConfigError("crop size must be a positive multiple of 64");
    if (optim.lr <= 0) throw ConfigError("optim.lr must be positive");
    if (train.steps < 0 || train.checkpoint_every <= 0 || train.keep_checkpoints <= 0)
        throw ConfigError("train step/checkpoint settings are invalid");
}

}  // namespace fogflow
