#include "scenes.hpp"

#include <fstream>
#include <random>

#include "fogflow/fogphys.hpp"
#include "fogflow/io.hpp"

namespace fs = std::filesystem;

namespace fogflow::testing {

namespace {

struct Grid {
    torch::Tensor x, y;  // [H,W] float64 sample coordinates
};

Grid sample_grid(int64_t h, int64_t w, const torch::Tensor& flow) {
    auto opts = torch::TensorOptions().dtype(torch::kFloat64);
    auto ys = torch::arange(h, opts).view({h, 1}).expand({h, w});
    auto xs = torch::arange(w, opts).view({1, w}).expand({h, w});
    if (flow.defined()) {
        auto f = flow.to(torch::kFloat64);
        return {xs + f[0], ys + f[1]};
    }
    return {xs.clone(), ys.clone()};
}

}  // namespace

torch::Tensor smooth_flow(int64_t h, int64_t w, double max_disp, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    auto g = sample_grid(h, w, {});
    auto xn = g.x / static_cast<double>(w) - 0.5, yn = g.y / static_cast<double>(h) - 0.5;
    auto u = U(rng) + U(rng) * xn + U(rng) * yn + 0.5 * U(rng) * torch::sin(6.0 * yn + U(rng));
    auto v = U(rng) + U(rng) * xn + U(rng) * yn + 0.5 * U(rng) * torch::cos(6.0 * xn + U(rng));
    auto f = torch::stack({u, v});
    const double peak = f.abs().max().item<double>();
    return (f * (max_disp / std::max(peak, 1e-9))).to(torch::kFloat32);
}

torch::Tensor texture(int64_t h, int64_t w, std::uint64_t seed, const torch::Tensor& flow) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    auto g = sample_grid(h, w, flow);
    std::vector<torch::Tensor> chans;
    std::array<double, 3> base{U(rng), U(rng), U(rng)};
    for (int c = 0; c < 3; ++c) {
        auto acc = torch::zeros_like(g.x);
        for (int k = 0; k < 6; ++k) {
            const double period = 6.0 + 26.0 * U(rng);
            const double th = 2.0 * M_PI * U(rng), ph = 2.0 * M_PI * U(rng);
            acc = acc + torch::sin((std::cos(th) * g.x + std::sin(th) * g.y) * (2.0 * M_PI / period) + ph);
        }
        chans.push_back(0.5 * base[c] + 0.25 + 0.18 * torch::tanh(acc / 2.0));
    }
    return torch::stack(chans).clamp(0.05, 0.95).to(torch::kFloat32);
}

torch::Tensor depth_map(int64_t h, int64_t w, std::uint64_t seed, const torch::Tensor& flow) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    auto g = sample_grid(h, w, flow);
    auto yn = (g.y / static_cast<double>(h)).clamp(0.0, 1.0);
    const double horizon = 0.2 + 0.1 * U(rng);
    // Ground: near at the bottom, receding towards the horizon.
    auto ground = 4.0 + 60.0 * torch::pow((1.0 - yn) / (1.0 - horizon), 2.0) +
                  2.0 * torch::sin(g.x / (10.0 + 10.0 * U(rng)));
    auto sky = torch::full_like(yn, 400.0);
    return torch::where(yn < horizon, sky, ground.clamp_min(1.0)).to(torch::kFloat32);
}

data::SyntheticSource make_source(int64_t h, int64_t w, std::uint64_t seed, double max_disp) {
    data::SyntheticSource s;
    s.flow = smooth_flow(h, w, max_disp, seed * 7 + 1);
    s.clean2 = texture(h, w, seed);
    s.clean1 = texture(h, w, seed, s.flow);
    s.depth2 = depth_map(h, w, seed);
    s.depth1 = depth_map(h, w, seed, s.flow);
    return s;
}

data::FramePair make_pair(int64_t h, int64_t w, std::uint64_t seed, double beta) {
    auto s = make_source(h, w, seed);
    if (beta <= 0) return {s.clean1, s.clean2};
    fogphys::Rgb A{0.85, 0.86, 0.88};
    return {fogphys::render_fog(s.clean1, fogphys::alpha_from_depth(s.depth1, beta), A),
            fogphys::render_fog(s.clean2, fogphys::alpha_from_depth(s.depth2, beta), A)};
}

data::FramePair make_occluded_pair(int64_t h, int64_t w, std::uint64_t seed, double beta) {
    auto s = make_source(h, w, seed);
    std::mt19937_64 rng(seed * 7919 + 13);
    std::uniform_int_distribution<int64_t> py(h / 6, h / 2), px(w / 6, w / 2);
    const int64_t side = h / 3;
    auto obj = texture(side + 16, side + 16, seed + 9000);
    // The object moves opposite to the background by 6 px horizontally and 3 px vertically.
    const int64_t y1 = py(rng), x1 = px(rng), y2 = y1 + 3, x2 = x1 + 6;
    auto paste = [&](torch::Tensor img, torch::Tensor depth, int64_t y, int64_t x, int64_t oy, int64_t ox) {
        img.narrow(1, y, side).narrow(2, x, side).copy_(obj.narrow(1, oy, side).narrow(2, ox, side));
        depth.narrow(0, y, side).narrow(1, x, side).fill_(2.0);
    };
    auto c1 = s.clean1.clone(), c2 = s.clean2.clone(), d1 = s.depth1.clone(), d2 = s.depth2.clone();
    paste(c1, d1, y1, x1, 8, 8);
    paste(c2, d2, y2, x2, 8, 8);
    if (beta <= 0) return {c1, c2};
    fogphys::Rgb A{0.85, 0.86, 0.88};
    return {fogphys::render_fog(c1, fogphys::alpha_from_depth(d1, beta), A),
            fogphys::render_fog(c2, fogphys::alpha_from_depth(d2, beta), A)};
}

Config write_dataset(const fs::path& dir, int n_synthetic, int n_clean, int n_fog, int64_t h, int64_t w,
                     std::uint64_t seed) {
    fs::create_directories(dir);
    auto name = [&](const std::string& p, int i, const char* ext) { return p + std::to_string(i) + ext; };
    {
        std::ofstream m(dir / "synthetic.txt");
        m << "# frame1 frame2 depth1 depth2 flow\n";
        for (int i = 0; i < n_synthetic; ++i) {
            auto s = make_source(h, w, seed + 100 + i);
            io::write_png(dir / name("syn1_", i, ".png"), s.clean1);
            io::write_png(dir / name("syn2_", i, ".png"), s.clean2);
            io::write_depth_raw(dir / name("dep1_", i, ".bin"), s.depth1);
            io::write_depth_raw(dir / name("dep2_", i, ".bin"), s.depth2);
            io::write_flo(dir / name("flow_", i, ".flo"), s.flow);
            m << name("syn1_", i, ".png") << ' ' << name("syn2_", i, ".png") << ' ' << name("dep1_", i, ".bin")
              << ' ' << name("dep2_", i, ".bin") << ' ' << name("flow_", i, ".flo") << '\n';
        }
    }
    auto write_pairs = [&](const char* manifest, const std::string& prefix, int n, double beta, int offset) {
        std::ofstream m(dir / manifest);
        for (int i = 0; i < n; ++i) {
            auto p = make_pair(h, w, seed + offset + i, beta);
            io::write_png(dir / name(prefix + "a", i, ".png"), p.frame1);
            io::write_png(dir / name(prefix + "b", i, ".png"), p.frame2);
            m << name(prefix + "a", i, ".png") << ' ' << name(prefix + "b", i, ".png") << '\n';
        }
    };
    write_pairs("real_clean.txt", "clean_", n_clean, 0.0, 200);
    write_pairs("real_fog.txt", "fog_", n_fog, 0.06, 300);

    Config cfg;
    cfg.net = NetConfig::compact();
    cfg.data.synthetic_manifest = (dir / "synthetic.txt").string();
    cfg.data.real_clean_manifest = (dir / "real_clean.txt").string();
    cfg.data.real_fog_manifest = (dir / "real_fog.txt").string();
    cfg.data.crop_height = static_cast<int>(h);
    cfg.data.crop_width = static_cast<int>(w);
    cfg.data.batch_size = 2;
    cfg.train.seed = seed;
    cfg.train.checkpoint_dir = (dir / "ckpt").string();
    cfg.train.loss_log = (dir / "losses.csv").string();
    return cfg;
}

fs::path scratch_dir(const std::string& name) {
    auto d = fs::temp_directory_path() / ("fogflow_test_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

}  // namespace fogflow::testing
