#include <doctest.h>

#include <fstream>
#include <set>

#include "fogflow/datapipe.hpp"
#include "fogflow/errors.hpp"
#include "fogflow/fogphys.hpp"
#include "scenes.hpp"

using namespace fogflow;
using namespace fogflow::data;

namespace {

double max_abs(const torch::Tensor& a, const torch::Tensor& b) {
    return (a.to(torch::kFloat64) - b.to(torch::kFloat64)).abs().max().item<double>();
}

// Per-pixel evaluation of the fog blend for one frame.
double physics_error(const torch::Tensor& clean, const torch::Tensor& depth, const torch::Tensor& fog,
                     const fogphys::FogParameters& p) {
    auto c = clean.to(torch::kFloat64).contiguous(), d = depth.to(torch::kFloat64).contiguous(),
         f = fog.to(torch::kFloat64).contiguous();
    auto C = c.accessor<double, 3>(), Fo = f.accessor<double, 3>();
    auto D = d.accessor<double, 2>();
    double worst = 0;
    for (int64_t y = 0; y < c.size(1); ++y)
        for (int64_t x = 0; x < c.size(2); ++x) {
            const double a = std::exp(-p.beta * D[y][x]);
            for (int ch = 0; ch < 3; ++ch)
                worst = std::max(worst, std::abs(Fo[ch][y][x] - (C[ch][y][x] * a + (1 - a) * p.atmo[ch])));
        }
    return worst;
}

Datasets toy_datasets(int n_syn, int n_clean, int n_fog, int64_t h = 64, int64_t w = 64) {
    Datasets d;
    for (int i = 0; i < n_syn; ++i) d.synthetic.push_back(testing::make_source(h, w, 10 + i));
    for (int i = 0; i < n_clean; ++i) d.real_clean.push_back(testing::make_pair(h, w, 40 + i, 0));
    for (int i = 0; i < n_fog; ++i) d.real_fog.push_back(testing::make_pair(h, w, 70 + i, 0.05));
    return d;
}

}  // namespace

TEST_SUITE("datapipe") {

TEST_CASE("fog parameters stay in the configured ranges") {
    FogSamplingConfig cfg;
    Rng rng(1);
    for (int i = 0; i < 200; ++i) {
        auto p = sample_fog_parameters(cfg, rng);
        CHECK(p.beta >= cfg.beta_min);
        CHECK(p.beta <= cfg.beta_max);
        const auto [lo, hi] = std::minmax({p.atmo[0], p.atmo[1], p.atmo[2]});
        CHECK(lo >= cfg.atmo_min);
        CHECK(hi <= cfg.atmo_max);
        CHECK(hi - lo <= cfg.atmo_spread + 1e-12);
    }
}

TEST_CASE("synthesize_sample with beta forced to zero leaves frames clean") {
    FogSamplingConfig cfg;
    cfg.beta_min = cfg.beta_max = 0.0;
    Rng rng(2);
    auto s = synthesize_sample(testing::make_source(32, 48, 1), cfg, rng);
    CHECK(max_abs(s.fog1, s.clean1) == 0.0);
    CHECK(max_abs(s.fog2, s.clean2) == 0.0);
}

TEST_CASE("synthesize_sample is deterministic and physically consistent") {
    FogSamplingConfig cfg;
    auto src = testing::make_source(32, 48, 2);
    Rng r1(5), r2(5);
    auto a = synthesize_sample(src, cfg, r1), b = synthesize_sample(src, cfg, r2);
    CHECK(a.fog1.equal(b.fog1));
    CHECK(a.fog.beta == b.fog.beta);
    CHECK(physics_error(a.clean1, a.depth1, a.fog1, a.fog) < 1e-6);
    CHECK(physics_error(a.clean2, a.depth2, a.fog2, a.fog) < 1e-6);
    CHECK(a.flow.equal(src.flow));
}

TEST_CASE("synthesize_sample rejects missing depth") {
    auto src = testing::make_source(32, 48, 3);
    src.depth2 = torch::Tensor();
    Rng rng(1);
    CHECK_THROWS_AS(synthesize_sample(src, FogSamplingConfig{}, rng), InputError);
}

TEST_CASE("cropping") {
    FogSamplingConfig cfg;
    Rng rng(3);
    auto s = synthesize_sample(testing::make_source(256, 512, 4, 3.0), cfg, rng);
    auto same = random_crop_pair(s, rng);
    CHECK(same.fog1.equal(s.fog1));
    CHECK(same.flow.equal(s.flow));

    auto big = synthesize_sample(testing::make_source(100, 140, 5), cfg, rng);
    Rng c1(9), c2(9);
    auto w1 = random_crop_window(100, 140, 64, 64, c1), w2 = random_crop_window(100, 140, 64, 64, c2);
    CHECK(w1.row == w2.row);
    CHECK(w1.col == w2.col);
    auto cropped = crop(big, w1);
    for (int y = 0; y < 64; y += 9)
        for (int x = 0; x < 64; x += 7) {
            CHECK(cropped.flow[0][y][x].item<float>() == big.flow[0][w1.row + y][w1.col + x].item<float>());
            CHECK(cropped.flow[1][y][x].item<float>() == big.flow[1][w1.row + y][w1.col + x].item<float>());
            CHECK(cropped.depth2[y][x].item<float>() == big.depth2[w1.row + y][w1.col + x].item<float>());
        }
    CHECK_THROWS_AS(random_crop_pair(big, rng, 128, 128), InputError);
}

TEST_CASE("cropping commutes with fog rendering") {
    auto src = testing::make_source(80, 96, 6);
    fogphys::FogParameters p{{0.8, 0.85, 0.9}, 0.07};
    Rng rng(4);
    auto w = random_crop_window(80, 96, 64, 64, rng);
    auto a = crop(render_sample(src, p), w);
    auto b = render_sample(crop(src, w), p);
    CHECK(a.fog1.equal(b.fog1));
    CHECK(a.fog2.equal(b.fog2));
}

TEST_CASE("manifest parsing") {
    auto dir = testing::scratch_dir("manifest");
    std::ofstream(dir / "m.txt") << "# comment\n\na.png b.png\nsub/c.png d.png e.bin f.bin g.flo  # trailing\n";
    auto m = read_manifest(dir / "m.txt");
    REQUIRE(m.size() == 2);
    CHECK(m[0].frame1 == dir / "a.png");
    CHECK_FALSE(m[0].flow.has_value());
    CHECK(m[1].frame1 == dir / "sub/c.png");
    CHECK(*m[1].flow == dir / "g.flo");
    std::ofstream(dir / "bad.txt") << "a.png b.png c.png\n";
    CHECK_THROWS(read_manifest(dir / "bad.txt"));
}

TEST_CASE("datasets load from manifests") {
    auto dir = testing::scratch_dir("datasets");
    auto cfg = testing::write_dataset(dir, 2, 1, 1, 64, 64, 3);
    auto d = Datasets::load(cfg.data);
    CHECK(d.synthetic.size() == 2);
    CHECK(d.real_clean.size() == 1);
    CHECK(d.synthetic[0].flow.sizes().vec() == std::vector<int64_t>{2, 64, 64});
    std::ofstream(dir / "empty.txt") << "# nothing\n";
    auto bad = cfg.data;
    bad.real_fog_manifest = (dir / "empty.txt").string();
    CHECK_THROWS_AS(Datasets::load(bad), ConfigError);
    bad = cfg.data;
    bad.synthetic_manifest = cfg.data.real_clean_manifest;
    CHECK_THROWS_AS(Datasets::load(bad), InputError);
}

TEST_CASE("scheduler cycles stages") {
    auto d = toy_datasets(3, 2, 2);
    DataConfig dc;
    dc.batch_size = 1;
    dc.crop_height = dc.crop_width = 64;
    BatchScheduler s(d, dc, FogSamplingConfig{}, 1);
    const Stage expect[] = {Stage::Synthetic, Stage::RealClean, Stage::RealFog,
                            Stage::Synthetic, Stage::RealClean, Stage::RealFog};
    for (auto e : expect) CHECK(s.next().stage == e);
}

TEST_CASE("scheduler covers each dataset once per epoch") {
    auto d = toy_datasets(5, 2, 2);
    DataConfig dc;
    dc.batch_size = 1;
    dc.crop_height = dc.crop_width = 64;
    BatchScheduler s(d, dc, FogSamplingConfig{}, 2);
    for (int epoch = 0; epoch < 3; ++epoch) {
        std::set<size_t> seen;
        for (int i = 0; i < 5; ++i) {
            auto b = s.next();
            REQUIRE(b.stage == Stage::Synthetic);
            seen.insert(b.indices.at(0));
            s.next();
            s.next();
        }
        CHECK(seen.size() == 5);
    }
}

TEST_CASE("scheduler is deterministic and its state round-trips") {
    auto d = toy_datasets(3, 2, 2);
    DataConfig dc;
    dc.batch_size = 2;
    dc.crop_height = dc.crop_width = 64;
    BatchScheduler a(d, dc, FogSamplingConfig{}, 7), b(d, dc, FogSamplingConfig{}, 7);
    for (int i = 0; i < 4; ++i) {
        auto x = a.next(), y = b.next();
        CHECK(x.indices == y.indices);
        if (x.stage == Stage::Synthetic) CHECK(x.synthetic.fog1.equal(y.synthetic.fog1));
    }
    const auto state = a.save_state();
    auto expect = a.next();
    BatchScheduler c(d, dc, FogSamplingConfig{}, 99);
    c.load_state(state);
    auto got = c.next();
    CHECK(got.stage == expect.stage);
    CHECK(got.indices == expect.indices);
    CHECK(got.pair.frame1.equal(expect.pair.frame1));
    CHECK_THROWS_AS(c.load_state("{}"), InputError);
}

TEST_CASE("scheduler rejects empty datasets") {
    auto d = toy_datasets(1, 0, 1);
    CHECK_THROWS_AS(BatchScheduler(d, DataConfig{}, FogSamplingConfig{}, 1), ConfigError);
}

}  // TEST_SUITE
