#include "fogflow/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "fogflow/config.hpp"
#include "fogflow/errors.hpp"
#include "fogflow/fogphys.hpp"
#include "fogflow/inference.hpp"
#include "fogflow/io.hpp"
#include "fogflow/metrics.hpp"
#include "fogflow/trainloop.hpp"

namespace fs = std::filesystem;

namespace fogflow {

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

fogphys::Rgb parse_rgb(const std::string& s) {
    fogphys::Rgb out{};
    std::stringstream ss(s);
    std::string tok;
    size_t n = 0;
    while (std::getline(ss, tok, ',')) {
        if (n == 3) throw UsageError("--atmo expects three comma-separated values");
        try {
            size_t used = 0;
            out[n] = std::stod(tok, &used);
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw UsageError("--atmo: cannot parse '" + tok + "'");
        }
        ++n;
    }
    if (n != 3) throw UsageError("--atmo expects three comma-separated values");
    return out;
}

std::string format_delta(double d) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", d);
    return buf;
}

// train ---------------------------------------------------------------------

struct TrainArgs {
    std::string config;
    std::string resume;
    std::optional<uint64_t> seed;
    int log_every = 50;
};

int run_train(const TrainArgs& a) {
    auto cfg = Config::load(a.config);
    cfg.apply_env_overrides("FOGFLOW_");
    if (a.seed) cfg.train.seed = *a.seed;
    cfg.validate();
    std::optional<fs::path> resume;
    if (!a.resume.empty()) resume = fs::path(a.resume);
    const int every = std::max(1, a.log_every);
    auto sink = [&](const losses::LossReport& r) {
        if (r.step % every == 0 || r.step == cfg.train.steps)
            std::cerr << "step " << r.step << " [" << r.stage << "] total " << r.total << "\n";
    };
    auto state = train::train(cfg, data::Datasets::load(cfg.data), resume, sink);
    std::cout << "finished at step " << state.step << "\n";
    return 0;
}

// eval ----------------------------------------------------------------------

struct EvalArgs {
    std::string pred_dir, gt_dir, mask_dir, csv;
    std::vector<double> deltas;
};

int run_eval(EvalArgs a) {
    if (a.deltas.empty()) a.deltas = {3.0, 5.0};
    for (double d : a.deltas)
        if (!(d > 0)) throw UsageError("--delta must be positive");

    std::vector<fs::path> gts;
    for (const auto& e : fs::directory_iterator(a.gt_dir))
        if (e.is_regular_file() && e.path().extension() == ".flo") gts.push_back(e.path());
    std::sort(gts.begin(), gts.end());
    if (gts.empty()) throw InputError("no .flo files in " + a.gt_dir);

    std::ostringstream out;
    out << "image_id,epe";
    for (double d : a.deltas) out << ",bad" << format_delta(d);
    out << "\n";

    double sum_epe = 0.0;
    std::vector<double> sum_bad(a.deltas.size(), 0.0);
    char buf[64];
    for (const auto& gt_path : gts) {
        const auto id = gt_path.stem().string();
        const auto pred_path = fs::path(a.pred_dir) / gt_path.filename();
        if (!fs::exists(pred_path)) throw InputError("missing prediction " + pred_path.string());
        auto gt = io::read_flo(gt_path);
        auto pred = io::read_flo(pred_path);
        torch::Tensor valid = torch::ones({gt.size(1), gt.size(2)}, torch::kBool);
        if (!a.mask_dir.empty()) {
            const auto mp = fs::path(a.mask_dir) / (id + ".png");
            if (fs::exists(mp)) valid = io::read_mask(mp);
        }
        auto r = eval::evaluate_flow(pred, gt, valid, a.deltas);
        sum_epe += r.epe;
        std::snprintf(buf, sizeof buf, "%.6f", r.epe);
        out << id << "," << buf;
        for (size_t i = 0; i < a.deltas.size(); ++i) {
            const double b = r.bad_pixel.at(a.deltas[i]);
            sum_bad[i] += b;
            std::snprintf(buf, sizeof buf, "%.6f", b);
            out << "," << buf;
        }
        out << "\n";
    }
    const double n = static_cast<double>(gts.size());
    std::snprintf(buf, sizeof buf, "%.6f", sum_epe / n);
    out << "mean," << buf;
    for (double s : sum_bad) {
        std::snprintf(buf, sizeof buf, "%.6f", s / n);
        out << "," << buf;
    }
    out << "\n";

    if (a.csv.empty()) {
        std::cout << out.str();
    } else {
        std::ofstream f(a.csv);
        if (!f) throw std::runtime_error("cannot write " + a.csv);
        f << out.str();
    }
    return 0;
}

// render-fog ----------------------------------------------------------------

struct RenderArgs {
    std::string clean, depth, atmo, out = "fog.png";
    double beta = 0.0;
};

int run_render_fog(const RenderArgs& a) {
    if (!(a.beta >= 0)) throw UsageError("--beta must be non-negative");
    fogphys::FogParameters p{parse_rgb(a.atmo), a.beta};
    p.validate();
    auto clean = io::read_image(a.clean);
    auto depth = io::read_depth(a.depth);
    if (depth.size(0) != clean.size(1) || depth.size(1) != clean.size(2))
        throw InputError("depth map size does not match the image");
    auto fog = fogphys::render_fog(clean, fogphys::alpha_from_depth(depth, p.beta), p.atmo);
    io::write_png(a.out, fog);
    return 0;
}

// estimate-flow / defog / visualize ----------------------------------------

struct FlowArgs {
    std::string ckpt, frame1, frame2, domain = "fog", out_flo = "flow.flo", out_png = "flow.png";
};

int run_estimate_flow(const FlowArgs& a) {
    auto params = train::load_weights(a.ckpt);
    const auto domain = a.domain == "clean" ? nets::Domain::Clean : nets::Domain::Fog;
    auto f1 = io::read_image(a.frame1);
    auto f2 = io::read_image(a.frame2);
    auto flow = infer::estimate_flow(params, domain, f1, f2);
    io::write_flo(a.out_flo, flow);
    if (!a.out_png.empty()) io::write_png(a.out_png, eval::flow_to_color(flow));
    return 0;
}

struct DefogArgs {
    std::string ckpt, image, out = "defog.png";
};

int run_defog(const DefogArgs& a) {
    auto params = train::load_weights(a.ckpt);
    io::write_png(a.out, infer::transform(params, nets::Domain::Fog, io::read_image(a.image)));
    return 0;
}

struct VisArgs {
    std::string flo, out = "flow.png";
    std::optional<double> max_mag;
};

int run_visualize(const VisArgs& a) {
    if (a.max_mag && !(*a.max_mag > 0)) throw UsageError("--max-mag must be positive");
    io::write_png(a.out, eval::flow_to_color(io::read_flo(a.flo), a.max_mag));
    return 0;
}

}  // namespace

int cli_main(int argc, char** argv) {
    CLI::App app{"Optical flow estimation in dense fog", "fogflow"};
    app.require_subcommand(1);

    TrainArgs ta;
    auto* train_cmd = app.add_subcommand("train", "Run the alternating training schedule");
    train_cmd->add_option("--config", ta.config, "JSON config file")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--resume", ta.resume, "Checkpoint to resume from")->check(CLI::ExistingFile);
    train_cmd->add_option("--seed", ta.seed, "Override train.seed");
    train_cmd->add_option("--log-every", ta.log_every, "Progress print interval in steps");

    EvalArgs ea;
    auto* eval_cmd = app.add_subcommand("eval", "EPE and bad-pixel metrics for a directory of .flo predictions");
    eval_cmd->add_option("--pred-dir", ea.pred_dir)->required()->check(CLI::ExistingDirectory);
    eval_cmd->add_option("--gt-dir", ea.gt_dir)->required()->check(CLI::ExistingDirectory);
    eval_cmd->add_option("--mask-dir", ea.mask_dir, "Optional <id>.png validity masks")->check(CLI::ExistingDirectory);
    eval_cmd->add_option("--delta", ea.deltas, "Bad-pixel threshold (repeatable, default 3 and 5)")
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    eval_cmd->add_option("--csv", ea.csv, "Write the table here instead of stdout");

    RenderArgs ra;
    auto* fog_cmd = app.add_subcommand("render-fog", "Render fog onto a clean image from its depth map");
    fog_cmd->add_option("--clean", ra.clean)->required()->check(CLI::ExistingFile);
    fog_cmd->add_option("--depth", ra.depth)->required()->check(CLI::ExistingFile);
    fog_cmd->add_option("--beta", ra.beta)->required();
    fog_cmd->add_option("--atmo", ra.atmo, "Atmospheric light r,g,b in [0,1]")->required();
    fog_cmd->add_option("--out", ra.out);

    FlowArgs fa;
    auto* flow_cmd = app.add_subcommand("estimate-flow", "Estimate flow between two frames");
    flow_cmd->add_option("--ckpt", fa.ckpt)->required()->check(CLI::ExistingFile);
    flow_cmd->add_option("--frame1", fa.frame1)->required()->check(CLI::ExistingFile);
    flow_cmd->add_option("--frame2", fa.frame2)->required()->check(CLI::ExistingFile);
    flow_cmd->add_option("--domain", fa.domain)->check(CLI::IsMember({"fog", "clean"}));
    flow_cmd->add_option("--out", fa.out_flo, ".flo output");
    flow_cmd->add_option("--png", fa.out_png, "Colour-coded output (empty to skip)");

    DefogArgs da;
    auto* defog_cmd = app.add_subcommand("defog", "Translate a fog image to the clean domain");
    defog_cmd->add_option("--ckpt", da.ckpt)->required()->check(CLI::ExistingFile);
    defog_cmd->add_option("--image", da.image)->required()->check(CLI::ExistingFile);
    defog_cmd->add_option("--out", da.out);

    VisArgs va;
    auto* vis_cmd = app.add_subcommand("visualize", "Colour-code a .flo file");
    vis_cmd->add_option("--flo", va.flo)->required()->check(CLI::ExistingFile);
    vis_cmd->add_option("--out", va.out);
    vis_cmd->add_option("--max-mag", va.max_mag, "Saturation scale (default: 99th percentile)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n";
        const auto subs = app.get_subcommands();
        std::cerr << (subs.empty() ? app.help() : subs.front()->help());
        return 2;
    }

    try {
        if (*train_cmd) return run_train(ta);
        if (*eval_cmd) return run_eval(ea);
        if (*fog_cmd) return run_render_fog(ra);
        if (*flow_cmd) return run_estimate_flow(fa);
        if (*defog_cmd) return run_defog(da);
        if (*vis_cmd) return run_visualize(va);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace fogflow
