#include "fogflow/datapipe.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fogflow/errors.hpp"
#include "fogflow/io.hpp"

namespace fogflow::data {

fogphys::FogParameters sample_fog_parameters(const FogSamplingConfig& cfg, Rng& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    fogphys::FogParameters p;
    p.beta = cfg.beta_min + (cfg.beta_max - cfg.beta_min) * unit(rng);
    const double base = cfg.atmo_min + (cfg.atmo_max - cfg.atmo_min) * unit(rng);
    for (double& ch : p.atmo) {
        const double jitter = (unit(rng) - 0.5) * cfg.atmo_spread;
        ch = std::clamp(base + jitter, cfg.atmo_min, cfg.atmo_max);
    }
    return p;
}

SyntheticSample render_sample(const SyntheticSource& src, const fogphys::FogParameters& fog) {
    fog.validate();
    if (!src.depth1.defined() || !src.depth2.defined())
        throw InputError("synthesize_sample: both frames need a depth map");
    if (!src.flow.defined()) throw InputError("synthesize_sample: flow ground truth is missing");
    const auto h = src.clean1.size(1), w = src.clean1.size(2);
    for (const auto* t : {&src.clean2}) {
        if (!t->sizes().equals(src.clean1.sizes())) throw InputError("synthesize_sample: frame sizes differ");
    }
    for (const auto* t : {&src.depth1, &src.depth2}) {
        if (t->dim() != 2 || t->size(0) != h || t->size(1) != w)
            throw InputError("synthesize_sample: depth map does not match the frames");
    }
    if (src.flow.dim() != 3 || src.flow.size(0) != 2 || src.flow.size(1) != h || src.flow.size(2) != w)
        throw InputError("synthesize_sample: flow does not match the frames");

    SyntheticSample s;
    s.clean1 = src.clean1;
    s.clean2 = src.clean2;
    s.depth1 = src.depth1;
    s.depth2 = src.depth2;
    s.flow = src.flow;
    s.fog = fog;
    s.fog1 = fogphys::render_fog(src.clean1, fogphys::alpha_from_depth(src.depth1, fog.beta), fog.atmo);
    s.fog2 = fogphys::render_fog(src.clean2, fogphys::alpha_from_depth(src.depth2, fog.beta), fog.atmo);
    return s;
}

SyntheticSample synthesize_sample(const SyntheticSource& src, const FogSamplingConfig& cfg, Rng& rng) {
    return render_sample(src, sample_fog_parameters(cfg, rng));
}

CropWindow random_crop_window(int64_t height, int64_t width, int64_t crop_h, int64_t crop_w, Rng& rng) {
    if (height < crop_h || width < crop_w)
        throw InputError("random_crop: source " + std::to_string(height) + "x" + std::to_string(width) +
                         " is smaller than the " + std::to_string(crop_h) + "x" + std::to_string(crop_w) + " crop");
    std::uniform_int_distribution<int64_t> rows(0, height - crop_h);
    std::uniform_int_distribution<int64_t> cols(0, width - crop_w);
    CropWindow w;
    w.row = rows(rng);
    w.col = cols(rng);
    w.height = crop_h;
    w.width = crop_w;
    return w;
}

namespace {

torch::Tensor cut(const torch::Tensor& t, const CropWindow& w) {
    if (!t.defined()) return t;
    const int64_t hd = t.dim() - 2;
    return t.narrow(hd, w.row, w.height).narrow(hd + 1, w.col, w.width).contiguous();
}

}  // namespace

SyntheticSample crop(const SyntheticSample& s, const CropWindow& w) {
    SyntheticSample out = s;
    out.clean1 = cut(s.clean1, w);
    out.clean2 = cut(s.clean2, w);
    out.fog1 = cut(s.fog1, w);
    out.fog2 = cut(s.fog2, w);
    out.depth1 = cut(s.depth1, w);
    out.depth2 = cut(s.depth2, w);
    out.flow = cut(s.flow, w);
    return out;
}

SyntheticSource crop(const SyntheticSource& s, const CropWindow& w) {
    return {cut(s.clean1, w), cut(s.clean2, w), cut(s.depth1, w), cut(s.depth2, w), cut(s.flow, w)};
}

FramePair crop(const FramePair& p, const CropWindow& w) { return {cut(p.frame1, w), cut(p.frame2, w)}; }

SyntheticSample random_crop_pair(const SyntheticSample& s, Rng& rng, int64_t crop_h, int64_t crop_w) {
    return crop(s, random_crop_window(s.clean1.size(1), s.clean1.size(2), crop_h, crop_w, rng));
}

FramePair random_crop_pair(const FramePair& p, Rng& rng, int64_t crop_h, int64_t crop_w) {
    return crop(p, random_crop_window(p.frame1.size(1), p.frame1.size(2), crop_h, crop_w, rng));
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open manifest " + path.string());
    const auto base = path.parent_path();
    auto resolve = [&](const std::string& p) {
        std::filesystem::path fp(p);
        return fp.is_relative() ? base / fp : fp;
    };
    std::vector<ManifestEntry> entries;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream fields(line);
        std::vector<std::string> cols;
        for (std::string f; fields >> f;) cols.push_back(f);
        if (cols.empty()) continue;
        if (cols.size() != 2 && cols.size() != 5)
            throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected 2 or 5 fields, got " +
                              std::to_string(cols.size()));
        ManifestEntry e;
        e.frame1 = resolve(cols[0]);
        e.frame2 = resolve(cols[1]);
        if (cols.size() == 5) {
            e.depth1 = resolve(cols[2]);
            e.depth2 = resolve(cols[3]);
            e.flow = resolve(cols[4]);
        }
        entries.push_back(std::move(e));
    }
    return entries;
}

Datasets Datasets::load(const DataConfig& cfg) {
    Datasets d;
    if (cfg.synthetic_manifest.empty() || cfg.real_clean_manifest.empty() || cfg.real_fog_manifest.empty())
        throw ConfigError("data: all three manifests (synthetic, real clean, real fog) are required");
    for (const auto& e : read_manifest(cfg.synthetic_manifest)) {
        if (!e.depth1 || !e.depth2 || !e.flow)
            throw InputError("synthetic manifest entry " + e.frame1.string() + " lacks depth maps or flow");
        d.synthetic.push_back({io::read_image(e.frame1), io::read_image(e.frame2), io::read_depth(*e.depth1),
                               io::read_depth(*e.depth2), io::read_flo(*e.flow)});
    }
    for (const auto& e : read_manifest(cfg.real_clean_manifest))
        d.real_clean.push_back({io::read_image(e.frame1), io::read_image(e.frame2)});
    for (const auto& e : read_manifest(cfg.real_fog_manifest))
        d.real_fog.push_back({io::read_image(e.frame1), io::read_image(e.frame2)});
    d.validate();
    return d;
}

void Datasets::validate() const {
    if (synthetic.empty()) throw ConfigError("synthetic dataset is empty");
    if (real_clean.empty()) throw ConfigError("real clean dataset is empty");
    if (real_fog.empty()) throw ConfigError("real fog dataset is empty");
    for (const auto& s : synthetic)
        if (!s.depth1.defined() || !s.depth2.defined() || !s.flow.defined())
            throw InputError("synthetic sample lacks depth maps or flow");
}

const char* stage_name(Stage s) {
    switch (s) {
        case Stage::Synthetic: return "synthetic";
        case Stage::RealClean: return "real_clean";
        case Stage::RealFog: return "real_fog";
    }
    return "?";
}

SyntheticBatch collate(const std::vector<SyntheticSample>& samples) {
    std::vector<torch::Tensor> c1, c2, f1, f2, fl;
    SyntheticBatch b;
    for (const auto& s : samples) {
        c1.push_back(s.clean1);
        c2.push_back(s.clean2);
        f1.push_back(s.fog1);
        f2.push_back(s.fog2);
        fl.push_back(s.flow);
        b.fog.push_back(s.fog);
    }
    b.clean1 = torch::stack(c1).to(torch::kFloat32);
    b.clean2 = torch::stack(c2).to(torch::kFloat32);
    b.fog1 = torch::stack(f1).to(torch::kFloat32);
    b.fog2 = torch::stack(f2).to(torch::kFloat32);
    b.flow = torch::stack(fl).to(torch::kFloat32);
    return b;
}

PairBatch collate(const std::vector<FramePair>& pairs) {
    std::vector<torch::Tensor> a, b;
    for (const auto& p : pairs) {
        a.push_back(p.frame1);
        b.push_back(p.frame2);
    }
    return {torch::stack(a).to(torch::kFloat32), torch::stack(b).to(torch::kFloat32)};
}

// ---------------------------------------------------------------------------

BatchScheduler::BatchScheduler(const Datasets& data, const DataConfig& data_cfg, const FogSamplingConfig& fog_cfg,
                               std::uint64_t seed)
    : data_(&data), data_cfg_(data_cfg), fog_cfg_(fog_cfg), rng_(seed) {
    data.validate();
    if (data_cfg.batch_size <= 0) throw ConfigError("batch size must be positive");
}

std::vector<size_t> BatchScheduler::draw(Order& order, size_t size) {
    std::vector<size_t> picked;
    picked.reserve(static_cast<size_t>(data_cfg_.batch_size));
    while (picked.size() < static_cast<size_t>(data_cfg_.batch_size)) {
        if (order.cursor >= order.perm.size()) {
            order.perm.resize(size);
            std::iota(order.perm.begin(), order.perm.end(), size_t{0});
            std::shuffle(order.perm.begin(), order.perm.end(), rng_);
            order.cursor = 0;
        }
        picked.push_back(order.perm[order.cursor++]);
    }
    return picked;
}

ScheduledBatch BatchScheduler::next() {
    ScheduledBatch out;
    out.stage = peek_stage();
    ++position_;
    const int64_t ch = data_cfg_.crop_height, cw = data_cfg_.crop_width;
    switch (out.stage) {
        case Stage::Synthetic: {
            out.indices = draw(syn_, data_->synthetic.size());
            std::vector<SyntheticSample> samples;
            for (size_t i : out.indices) {
                const auto& src = data_->synthetic[i];
                auto window = random_crop_window(src.clean1.size(1), src.clean1.size(2), ch, cw, rng_);
                samples.push_back(synthesize_sample(crop(src, window), fog_cfg_, rng_));
            }
            out.synthetic = collate(samples);
            break;
        }
        case Stage::RealClean:
        case Stage::RealFog: {
            const bool clean = out.stage == Stage::RealClean;
            const auto& set = clean ? data_->real_clean : data_->real_fog;
            out.indices = draw(clean ? clean_ : fog_, set.size());
            std::vector<FramePair> pairs;
            for (size_t i : out.indices) pairs.push_back(random_crop_pair(set[i], rng_, ch, cw));
            out.pair = collate(pairs);
            break;
        }
    }
    return out;
}

std::string BatchScheduler::save_state() const {
    std::ostringstream rng_state;
    rng_state << rng_;
    nlohmann::json j;
    j["rng"] = rng_state.str();
    j["position"] = position_;
    auto put = [](const Order& o) { return nlohmann::json{{"perm", o.perm}, {"cursor", o.cursor}}; };
    j["synthetic"] = put(syn_);
    j["real_clean"] = put(clean_);
    j["real_fog"] = put(fog_);
    return j.dump();
}

void BatchScheduler::load_state(const std::string& state) {
    try {
        const auto j = nlohmann::json::parse(state);
        std::istringstream rng_state(j.at("rng").get<std::string>());
        Rng rng;
        rng_state >> rng;
        if (!rng_state) throw InputError("scheduler state: corrupt rng");
        auto get = [](const nlohmann::json& o) {
            Order out;
            o.at("perm").get_to(out.perm);
            o.at("cursor").get_to(out.cursor);
            return out;
        };
        auto syn = get(j.at("synthetic")), clean = get(j.at("real_clean")), fog = get(j.at("real_fog"));
        rng_ = rng;
        position_ = j.at("position").get<std::uint64_t>();
        syn_ = std::move(syn);
        clean_ = std::move(clean);
        fog_ = std::move(fog);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("scheduler state: ") + e.what());
    }
}

}  // namespace fogflow::data
