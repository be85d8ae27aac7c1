#include <doctest.h>

#include <cmath>

#include "fogflow/errors.hpp"
#include "fogflow/fogphys.hpp"
#include "fogflow/losses.hpp"
#include "scenes.hpp"

using namespace fogflow;
using namespace fogflow::losses;

namespace {

nets::MultiScaleFlow only_final(const torch::Tensor& f) {
    nets::MultiScaleFlow m;
    m.final = f;
    return m;
}

torch::Tensor uniform_flow(int64_t n, int64_t h, int64_t w, double u, double v) {
    auto f = torch::empty({n, 2, h, w}, torch::kFloat64);
    f.select(1, 0).fill_(u);
    f.select(1, 1).fill_(v);
    return f;
}

double softplus(double x) { return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0); }

// Masked mean of per-pixel end-point distances, one pixel at a time.
double masked_epe_loop(const torch::Tensor& a, const torch::Tensor& b, const torch::Tensor& m) {
    auto A = a.accessor<double, 4>(), B = b.accessor<double, 4>(), M = m.accessor<double, 4>();
    double num = 0, den = 0;
    for (int64_t n = 0; n < a.size(0); ++n)
        for (int64_t y = 0; y < a.size(2); ++y)
            for (int64_t x = 0; x < a.size(3); ++x) {
                const double du = A[n][0][y][x] - B[n][0][y][x], dv = A[n][1][y][x] - B[n][1][y][x];
                num += M[n][0][y][x] * std::sqrt(du * du + dv * dv);
                den += M[n][0][y][x];
            }
    return num / den;
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("supervised EPE examples") {
    auto gt = torch::randn({2, 2, 8, 8}, torch::kFloat64);
    CHECK(loss_epe_supervised(only_final(gt.clone()), gt).final.item<double>() == 0.0);
    auto pred = gt + uniform_flow(2, 8, 8, 3, 4);
    CHECK(loss_epe_supervised(only_final(pred), gt).final.item<double>() == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("supervised EPE matches a per-pixel loop") {
    torch::manual_seed(1);
    auto a = torch::randn({1, 2, 8, 8}, torch::kFloat64), b = torch::randn({1, 2, 8, 8}, torch::kFloat64);
    const double ref = masked_epe_loop(a, b, torch::ones({1, 1, 8, 8}, torch::kFloat64));
    CHECK(std::abs(loss_epe_supervised(only_final(a), b).final.item<double>() - ref) < 1e-6);
}

TEST_CASE("multiscale EPE adds weighted per-level terms") {
    torch::manual_seed(2);
    auto gt = torch::randn({1, 2, 64, 64}, torch::kFloat64);
    nets::MultiScaleFlow m;
    m.final = gt.clone();
    std::array<double, 5> w{0.32, 0.08, 0.02, 0.01, 0.005};
    double expect = 0;
    for (int l = 2; l <= 6; ++l) {
        const int64_t s = 64 >> l;
        m.levels[l] = torch::zeros({1, 2, s, s}, torch::kFloat64);
        // Area mean of each block divided by the scale factor.
        auto g = gt.view({1, 2, s, 1 << l, s, 1 << l}).mean({3, 5}) / static_cast<double>(1 << l);
        expect += w[static_cast<size_t>(l - 2)] * g.pow(2).sum(1).sqrt().mean().item<double>();
    }
    auto t = loss_epe_supervised(m, gt, &w);
    CHECK(t.final.item<double>() == 0.0);
    CHECK(t.total.item<double>() == doctest::Approx(expect).epsilon(1e-9));
    auto bad = gt.clone();
    bad[0][0][0][0] = NAN;
    CHECK_THROWS_AS(loss_epe_supervised(m, bad), InputError);
}

TEST_CASE("L1 transform examples") {
    auto gt = torch::rand({1, 3, 6, 6}, torch::kFloat64) * 0.8 + 0.05;
    CHECK(loss_l1_transform(gt, gt).item<double>() == 0.0);
    CHECK(loss_l1_transform(gt + 0.1, gt).item<double>() == doctest::Approx(0.1).epsilon(1e-12));
    auto r = torch::rand({1, 3, 6, 6}, torch::kFloat64);
    auto A = r.accessor<double, 4>(), G = gt.accessor<double, 4>();
    double s = 0;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 6; ++y)
            for (int x = 0; x < 6; ++x) s += std::abs(A[0][c][y][x] - G[0][c][y][x]);
    CHECK(std::abs(loss_l1_transform(r, gt).item<double>() - s / 108) < 1e-7);
}

TEST_CASE("transform consistency examples") {
    auto x1 = torch::rand({1, 3, 8, 8}, torch::kFloat64) * 0.5, x2 = torch::rand({1, 3, 8, 8}, torch::kFloat64) * 0.5;
    CHECK(loss_transform_consistency(x1, x2, x1, x2).item<double>() == 0.0);
    CHECK(loss_transform_consistency(x1, x2, x1 + 0.2, x2).item<double>() == doctest::Approx(0.2).epsilon(1e-12));
    auto c1 = torch::rand({1, 3, 8, 8}, torch::kFloat64), c2 = torch::rand({1, 3, 8, 8}, torch::kFloat64);
    const double ref = (x1 - c1).abs().sum().item<double>() / 192 + (x2 - c2).abs().sum().item<double>() / 192;
    CHECK(std::abs(loss_transform_consistency(x1, x2, c1, c2).item<double>() - ref) < 1e-7);
}

TEST_CASE("consistency mask on a translated pair") {
    auto img2 = testing::texture(32, 48, 3).unsqueeze(0);
    auto flow = torch::zeros({1, 2, 32, 48});
    flow.select(1, 0).fill_(5.0);
    auto img1 = nets::warp(img2, flow);  // img1(x) = img2(x + 5)
    auto m = photometric_consistency_mask(img1, img2, flow);
    CHECK(m.size(1) == 1);
    CHECK(m.slice(3, 0, 43).min().item<double>() == 1.0);
    CHECK(m.slice(3, 44).max().item<double>() == 0.0);
    CHECK(((m == 0) | (m == 1)).all().item<bool>());

    auto m0 = photometric_consistency_mask(img1, img2, torch::zeros_like(flow));
    auto err = (img1 - img2).abs().mean(1, true);
    CHECK(m0.masked_select(err >= 0.05).max().item<double>() == 0.0);
    CHECK(m0.masked_select(err < 0.05).min().item<double>() == 1.0);
}

TEST_CASE("consistency mask on a constant image") {
    auto img = torch::full({1, 3, 16, 16}, 0.4);
    auto flow = torch::zeros({1, 2, 16, 16});
    flow.select(1, 0).fill_(0.5);
    flow.select(1, 0).slice(2, 12).fill_(-3.0);
    CHECK(photometric_consistency_mask(img, img, flow).min().item<double>() == 1.0);
}

TEST_CASE("cross-domain EPE examples and oracle") {
    auto a = torch::randn({1, 2, 8, 8}, torch::kFloat64);
    auto full = torch::ones({1, 1, 8, 8}, torch::kFloat64);
    CHECK(loss_epe_cross_domain(a, a.clone(), full, StopTarget::B).value.item<double>() == 0.0);

    auto b = a.clone();
    auto mask = torch::zeros({1, 1, 8, 8}, torch::kFloat64);
    mask.slice(2, 0, 4).fill_(1.0);  // 32 masked pixels
    b.select(1, 1).slice(1, 0, 2).add_(1.0);  // 16 of them differ by (0,1)
    b.select(1, 0).slice(1, 5).add_(7.0);      // outside the mask
    CHECK(loss_epe_cross_domain(a, b, mask, StopTarget::A).value.item<double>() == doctest::Approx(0.5));

    torch::manual_seed(3);
    auto x = torch::randn({2, 2, 8, 8}, torch::kFloat64), y = torch::randn({2, 2, 8, 8}, torch::kFloat64);
    auto m = (torch::rand({2, 1, 8, 8}) > 0.5).to(torch::kFloat64);
    CHECK(std::abs(loss_epe_cross_domain(x, y, m, StopTarget::None).value.item<double>() - masked_epe_loop(x, y, m)) <
          1e-6);
}

TEST_CASE("cross-domain EPE with an empty mask is skipped") {
    auto a = torch::randn({1, 2, 4, 4}, torch::kFloat64);
    auto r = loss_epe_cross_domain(a, a + 1, torch::zeros({1, 1, 4, 4}), StopTarget::B);
    CHECK(r.skipped);
    CHECK(r.value.item<double>() == 0.0);
}

TEST_CASE("cross-domain EPE stop-gradient side receives no gradient") {
    auto a = torch::randn({1, 2, 6, 6}, torch::kFloat64).requires_grad_();
    auto b = torch::randn({1, 2, 6, 6}, torch::kFloat64).requires_grad_();
    auto m = torch::ones({1, 1, 6, 6}, torch::kFloat64);
    auto l = loss_epe_cross_domain(a, b, m, StopTarget::B).value;
    auto g = torch::autograd::grad({l}, {a, b}, {}, false, false, true);
    CHECK(g[0].defined());
    CHECK_FALSE(g[1].defined());

    // Changing the target changes the value but never produces gradient on it.
    auto l2 = loss_epe_cross_domain(a, b * 2, m, StopTarget::B).value;
    auto g2 = torch::autograd::grad({l2}, {b}, {}, false, false, true);
    CHECK_FALSE(g2[0].defined());
}

TEST_CASE("cross-domain EPE is invariant to a joint pixel permutation") {
    torch::manual_seed(4);
    auto a = torch::randn({1, 2, 8, 8}, torch::kFloat64), b = torch::randn({1, 2, 8, 8}, torch::kFloat64);
    auto m = (torch::rand({1, 1, 8, 8}) > 0.3).to(torch::kFloat64);
    auto perm = torch::randperm(64);
    auto p = [&](const torch::Tensor& t) { return t.flatten(2).index_select(2, perm).view(t.sizes()); };
    const double v1 = loss_epe_cross_domain(a, b, m, StopTarget::None).value.item<double>();
    const double v2 = loss_epe_cross_domain(p(a), p(b), p(m), StopTarget::None).value.item<double>();
    CHECK(v1 == doctest::Approx(v2).epsilon(1e-12));
}

TEST_CASE("flow consistency examples") {
    auto f = torch::randn({1, 2, 8, 8}, torch::kFloat64);
    auto full = torch::ones({1, 1, 8, 8}, torch::kFloat64);
    CHECK(loss_flow_consistency(f, f.clone(), full).value.item<double>() == 0.0);
    CHECK(loss_flow_consistency(f + uniform_flow(1, 8, 8, 3, 4), f, full).value.item<double>() ==
          doctest::Approx(5.0));
    torch::manual_seed(5);
    auto x = torch::randn({1, 2, 8, 8}, torch::kFloat64), y = torch::randn({1, 2, 8, 8}, torch::kFloat64);
    auto m = (torch::rand({1, 1, 8, 8}) > 0.5).to(torch::kFloat64);
    CHECK(std::abs(loss_flow_consistency(x, y, m).value.item<double>() - masked_epe_loop(x, y, m)) < 1e-6);
    auto xr = x.clone().requires_grad_(), yr = y.clone().requires_grad_();
    auto g = torch::autograd::grad({loss_flow_consistency(xr, yr, m).value}, {xr, yr});
    CHECK(g[0].abs().sum().item<double>() > 0);
    CHECK(g[1].abs().sum().item<double>() > 0);
}

TEST_CASE("GAN losses") {
    CHECK(loss_gan_generator(torch::full({1, 1, 4, 4}, 50.0)).item<double>() < 1e-20);
    CHECK(loss_gan_discriminator(torch::zeros({1, 1, 3, 3}), torch::zeros({1, 1, 3, 3})).item<double>() ==
          doctest::Approx(2 * std::log(2.0)));
    torch::manual_seed(6);
    auto r = torch::randn({2, 1, 4, 5}, torch::kFloat64) * 3, f = torch::randn({2, 1, 4, 5}, torch::kFloat64) * 3;
    double gref = 0, dref = 0;
    auto R = r.flatten(), Fk = f.flatten();
    for (int64_t i = 0; i < R.numel(); ++i) {
        gref += softplus(-Fk[i].item<double>());
        dref += softplus(-R[i].item<double>()) + softplus(Fk[i].item<double>());
    }
    CHECK(std::abs(loss_gan_generator(f).item<double>() - gref / 40) < 1e-6);
    CHECK(std::abs(loss_gan_discriminator(r, f).item<double>() - dref / 40) < 1e-6);
}

TEST_CASE("hazeline loss examples") {
    auto s = testing::make_source(64, 64, 31);
    fogphys::Rgb A{0.9, 0.85, 0.8};
    auto clean = s.clean1.unsqueeze(0);
    auto fog = fogphys::render_fog(clean, fogphys::alpha_from_depth(s.depth1, 0.06), A);
    CHECK(loss_hazeline(clean, fog).item<double>() < 1e-4);
    CHECK(loss_hazeline(clean, clean).item<double>() < 1e-6);
    auto permuted = fog.index_select(1, torch::tensor({2, 0, 1}));
    CHECK(loss_hazeline(clean, permuted).item<double>() > 1e-3);
    const double v = loss_hazeline(clean, fog).item<double>();
    CHECK(v >= 0.0);
    CHECK(v <= 2.0);
}

TEST_CASE("hazeline loss: a perpendicular pixel contributes one") {
    auto a = torch::tensor({1.0 / 3, 1.0 / 3, 1.0 / 3}, torch::kFloat64);
    // gamma - a = (0.1,-0.1,0), sigma - a = (0.05,0.05,-0.1): orthogonal, both in the unit-sum plane.
    auto clean = (a + torch::tensor({0.1, -0.1, 0.0}, torch::kFloat64)).view({1, 3, 1, 1});
    auto fog = (a + torch::tensor({0.05, 0.05, -0.1}, torch::kFloat64)).view({1, 3, 1, 1});
    CHECK(loss_hazeline_with_atmo(clean, fog, a).item<double>() == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("hazeline loss does not depend on pixel arrangement for a fixed atmosphere") {
    torch::manual_seed(7);
    auto clean = torch::rand({1, 3, 8, 8}, torch::kFloat64) * 0.8 + 0.1;
    auto fog = torch::rand({1, 3, 8, 8}, torch::kFloat64) * 0.8 + 0.1;
    auto a = torch::tensor({0.3, 0.33, 0.37}, torch::kFloat64);
    auto perm = torch::randperm(64);
    auto p = [&](const torch::Tensor& t) { return t.flatten(2).index_select(2, perm).view(t.sizes()); };
    CHECK(loss_hazeline_with_atmo(clean, fog, a).item<double>() ==
          doctest::Approx(loss_hazeline_with_atmo(p(clean), p(fog), a).item<double>()).epsilon(1e-12));
}

TEST_CASE("loss report CSV layout") {
    LossReport r;
    r.stage = "real_clean";
    r.step = 12;
    r.values = {{"con", 0.25}, {"gan_d", 1.5}};
    r.total = 4.0;
    CHECK(report_csv_header() == "step,stage,epe_sup,l1_sup,con,epe_cross,gan_g,gan_d,hazeline,flow_con,total");
    CHECK(report_csv_row(r) == "12,real_clean,,,0.25,,,1.5,,,4");
}

}  // TEST_SUITE
