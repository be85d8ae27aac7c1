#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <torch/torch.h>

#include "fogflow/cli.hpp"
#include "fogflow/config.hpp"
#include "fogflow/errors.hpp"
#include "fogflow/fogphys.hpp"
#include "fogflow/inference.hpp"
#include "fogflow/io.hpp"
#include "fogflow/losses.hpp"
#include "fogflow/metrics.hpp"
#include "fogflow/nets.hpp"
#include "fogflow/trainloop.hpp"

namespace py = pybind11;
using namespace fogflow;

namespace {

using Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

torch::Tensor to_tensor(const Array& a) {
    std::vector<int64_t> shape(a.shape(), a.shape() + a.ndim());
    return torch::from_blob(const_cast<float*>(a.data()), shape, torch::kFloat32).clone();
}

Array to_array(const torch::Tensor& t) {
    auto c = t.detach().to(torch::kFloat32).contiguous();
    std::vector<py::ssize_t> shape(c.sizes().begin(), c.sizes().end());
    Array out(shape);
    std::memcpy(out.mutable_data(), c.data_ptr<float>(), static_cast<size_t>(c.numel()) * sizeof(float));
    return out;
}

torch::Tensor to_bool(const std::optional<Array>& valid, int64_t h, int64_t w) {
    if (!valid) return torch::ones({h, w}, torch::kBool);
    return to_tensor(*valid).gt(0.5);
}

nets::Domain parse_domain(const std::string& d) {
    if (d == "fog") return nets::Domain::Fog;
    if (d == "clean") return nets::Domain::Clean;
    throw InputError("domain must be 'fog' or 'clean'");
}

// Network weights from a checkpoint, for inference.
class Model {
public:
    explicit Model(const std::filesystem::path& ckpt) : params_(train::load_weights(ckpt)) {}
    Array estimate_flow(const Array& f1, const Array& f2, const std::string& domain) const {
        return to_array(infer::estimate_flow(params_, parse_domain(domain), to_tensor(f1), to_tensor(f2)));
    }
    Array defog(const Array& img) const { return to_array(infer::transform(params_, nets::Domain::Fog, to_tensor(img))); }
    Array render_fog(const Array& img) const {
        return to_array(infer::transform(params_, nets::Domain::Clean, to_tensor(img)));
    }

private:
    nets::ParameterStore params_;
};

}  // namespace

PYBIND11_MODULE(_fogflow, m) {
    m.doc() = "Fog optical flow: physics, losses, metrics, I/O and inference";
    torch::set_num_threads(1);

    // InputError derives from std::invalid_argument and surfaces as ValueError.
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_RuntimeError);
    py::register_exception<NonFiniteLossError>(m, "NonFiniteLossError", PyExc_ArithmeticError);

    m.def("alpha_from_depth", [](const Array& depth, double beta) {
        return to_array(fogphys::alpha_from_depth(to_tensor(depth), beta));
    }, py::arg("depth"), py::arg("beta"));
    m.def("render_fog", [](const Array& clean, const Array& depth, double beta, std::array<double, 3> atmo) {
        fogphys::FogParameters p{atmo, beta};
        p.validate();
        auto d = to_tensor(depth).to(torch::kFloat64);
        return to_array(fogphys::render_fog(to_tensor(clean).to(torch::kFloat64), fogphys::alpha_from_depth(d, beta), atmo));
    }, py::arg("clean"), py::arg("depth"), py::arg("beta"), py::arg("atmo"));
    m.def("chromaticity", [](const Array& img) { return to_array(fogphys::chromaticity(to_tensor(img))); });
    m.def("atmospheric_light_chroma", [](const Array& fog, int patch) {
        return to_array(fogphys::atmospheric_light_chroma(to_tensor(fog).to(torch::kFloat64), patch));
    }, py::arg("fog"), py::arg("patch") = fogphys::kDefaultAtmoPatch);
    m.def("hazeline_loss", [](const Array& clean, const Array& fog, int patch) {
        return losses::loss_hazeline(to_tensor(clean).to(torch::kFloat64), to_tensor(fog).to(torch::kFloat64), patch)
            .item<double>();
    }, py::arg("clean"), py::arg("rendered_fog"), py::arg("patch") = fogphys::kDefaultAtmoPatch);
    m.def("consistency_mask", [](const Array& img1, const Array& img2, const Array& flow, double tau) {
        return to_array(losses::photometric_consistency_mask(to_tensor(img1), to_tensor(img2),
                                                             to_tensor(flow).unsqueeze(0), tau)
                            .squeeze(0)
                            .squeeze(0));
    }, py::arg("img1"), py::arg("img2"), py::arg("flow"), py::arg("tau") = losses::kDefaultMaskTau);

    m.def("warp", [](const Array& feat, const Array& flow) {
        return to_array(nets::warp(to_tensor(feat).unsqueeze(0), to_tensor(flow).unsqueeze(0)).squeeze(0));
    }, py::arg("feat"), py::arg("flow"));
    m.def("cost_volume", [](const Array& f1, const Array& f2, int radius) {
        return to_array(nets::cost_volume(to_tensor(f1).unsqueeze(0), to_tensor(f2).unsqueeze(0), radius).squeeze(0));
    }, py::arg("f1"), py::arg("f2"), py::arg("radius") = 4);

    m.def("metric_epe", [](const Array& pred, const Array& gt, const std::optional<Array>& valid) {
        auto g = to_tensor(gt);
        return eval::metric_epe(to_tensor(pred), g, to_bool(valid, g.size(1), g.size(2)));
    }, py::arg("pred"), py::arg("gt"), py::arg("valid") = py::none());
    m.def("metric_bad_pixel", [](const Array& pred, const Array& gt, double delta, const std::optional<Array>& valid) {
        auto g = to_tensor(gt);
        return eval::metric_bad_pixel(to_tensor(pred), g, to_bool(valid, g.size(1), g.size(2)), delta);
    }, py::arg("pred"), py::arg("gt"), py::arg("delta"), py::arg("valid") = py::none());
    m.def("flow_to_color", [](const Array& flow, std::optional<double> max_mag) {
        return to_array(eval::flow_to_color(to_tensor(flow), max_mag));
    }, py::arg("flow"), py::arg("max_mag") = py::none());

    m.def("read_flo", [](const std::filesystem::path& p) { return to_array(io::read_flo(p)); });
    m.def("write_flo", [](const std::filesystem::path& p, const Array& flow) { io::write_flo(p, to_tensor(flow)); });
    m.def("read_image", [](const std::filesystem::path& p) { return to_array(io::read_image(p)); });
    m.def("write_png", [](const std::filesystem::path& p, const Array& img) { io::write_png(p, to_tensor(img)); });
    m.def("read_depth", [](const std::filesystem::path& p) { return to_array(io::read_depth(p)); });

    m.def("default_config", [] { return Config{}.to_json().dump(2); }, "Default configuration as JSON text");
    m.def("train", [](const std::filesystem::path& config, std::optional<std::filesystem::path> resume) {
        auto cfg = Config::load(config);
        cfg.apply_env_overrides("FOGFLOW_");
        cfg.validate();
        py::gil_scoped_release release;
        return train::train(cfg, resume).step;
    }, py::arg("config"), py::arg("resume") = py::none(), "Train from a JSON config; returns the final step");
    m.def("save_initial_checkpoint", [](const std::filesystem::path& path, std::uint64_t seed, bool compact) {
        Config cfg;
        cfg.train.seed = seed;
        if (compact) cfg.net = NetConfig::compact();
        train::save_checkpoint(train::TrainState::create(cfg), path);
    }, py::arg("path"), py::arg("seed") = 0, py::arg("compact") = true);

    py::class_<Model>(m, "Model")
        .def(py::init<const std::filesystem::path&>(), py::arg("checkpoint"))
        .def("estimate_flow", &Model::estimate_flow, py::arg("frame1"), py::arg("frame2"), py::arg("domain") = "fog")
        .def("defog", &Model::defog, py::arg("image"))
        .def("render_fog", &Model::render_fog, py::arg("image"));

    m.def("cli", [](std::vector<std::string> args) {
        args.insert(args.begin(), "fogflow");
        std::vector<char*> argv;
        for (auto& a : args) argv.push_back(a.data());
        return cli_main(static_cast<int>(argv.size()), argv.data());
    }, py::arg("args"), "Run the command-line interface in-process; returns the exit code");
}
