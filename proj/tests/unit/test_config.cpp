#include <doctest.h>

#include <cstdlib>
#include <fstream>

#include "fogflow/config.hpp"
#include "fogflow/errors.hpp"
#include "scenes.hpp"

using namespace fogflow;

TEST_SUITE("config") {

TEST_CASE("defaults") {
    Config c;
    CHECK(c.optim.lr == 2e-4);
    CHECK(c.optim.beta1 == 0.5);
    CHECK(c.optim.beta2 == 0.999);
    CHECK(c.data.batch_size == 3);
    CHECK(c.data.crop_height == 256);
    CHECK(c.data.crop_width == 512);
    CHECK(c.loss.mask_tau == 0.05);
    CHECK(c.loss.weight("con") == 10.0);
    CHECK(c.loss.weight("gan_g") == 0.5);
    CHECK(c.loss.weight("gan_d") == 0.5);
    CHECK(c.train.checkpoint_every == 1000);
    CHECK(c.train.keep_checkpoints == 3);
    CHECK(c.net.encoder_channels == std::vector<int64_t>{16, 32, 64, 96, 128, 196});
    CHECK(c.net.search_radius == 4);
    CHECK(c.fog.beta_min == 0.02);
    CHECK(c.fog.beta_max == 0.12);
    CHECK_NOTHROW(c.validate());
}

TEST_CASE("switches") {
    LossConfig l;
    CHECK(l.active("hazeline"));
    l.use_hazeline = false;
    CHECK_FALSE(l.active("hazeline"));
    l.disabled.insert("gan_g");
    CHECK_FALSE(l.active("gan_g"));
    CHECK(l.active("gan_d"));
    CHECK_THROWS_AS(l.weight("bogus"), ConfigError);
}

TEST_CASE("JSON round-trip") {
    Config c;
    c.net = NetConfig::compact();
    c.loss.disabled = {"gan_g"};
    c.optim.lr = 1e-3;
    c.train.seed = 42;
    auto back = Config::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
}

TEST_CASE("unknown keys and bad values are rejected") {
    CHECK_THROWS_AS(Config::from_json(nlohmann::json::parse(R"({"optim": {"lrr": 1}})")), ConfigError);
    CHECK_THROWS_AS(Config::from_json(nlohmann::json::parse(R"({"opt": {}})")), ConfigError);
    CHECK_THROWS_AS(Config::from_json(nlohmann::json::parse(R"({"optim": {"lr": "fast"}})")), ConfigError);
    Config c;
    c.data.crop_height = 100;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = Config{};
    c.fog.beta_max = 0.01;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("load resolves manifests next to the config file") {
    auto dir = fogflow::testing::scratch_dir("cfg_load");
    std::ofstream(dir / "c.json") << R"({"data": {"synthetic_manifest": "syn.txt", "batch_size": 2}})";
    auto c = Config::load(dir / "c.json");
    CHECK(c.data.synthetic_manifest == (dir / "syn.txt").string());
    CHECK(c.data.batch_size == 2);
    CHECK_THROWS_AS(Config::load(dir / "missing.json"), ConfigError);
    std::ofstream(dir / "bad.json") << "{ not json";
    CHECK_THROWS_AS(Config::load(dir / "bad.json"), ConfigError);
}

TEST_CASE("environment overrides") {
    Config c;
    setenv("FFTEST_OPTIM_LR", "0.001", 1);
    setenv("FFTEST_LOSS_USE_HAZELINE", "false", 1);
    setenv("FFTEST_TRAIN_LOSS_LOG", "run.csv", 1);
    setenv("FFTEST_NET_ENCODER_CHANNELS", "[8,8,8,8,8,8]", 1);
    c.apply_env_overrides("FFTEST_");
    CHECK(c.optim.lr == 0.001);
    CHECK_FALSE(c.loss.use_hazeline);
    CHECK(c.train.loss_log == "run.csv");
    CHECK(c.net.encoder_channels == std::vector<int64_t>(6, 8));
    setenv("FFTEST_OPTIM_LR", "abc", 1);
    CHECK_THROWS_AS(c.apply_env_overrides("FFTEST_"), ConfigError);
    for (const char* v : {"FFTEST_OPTIM_LR", "FFTEST_LOSS_USE_HAZELINE", "FFTEST_TRAIN_LOSS_LOG",
                          "FFTEST_NET_ENCODER_CHANNELS"})
        unsetenv(v);
}

}  // TEST_SUITE
