#include "fogflow/trainloop.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>

#include "fogflow/errors.hpp"

namespace fogflow::train {

using data::Stage;
using nets::Domain;

const ComponentSet& FreezeSchedule::trainable_for(const std::string& term) const {
    auto it = sets.find(term);
    if (it == sets.end()) throw std::logic_error("no freeze schedule for loss term '" + term + "'");
    return it->second;
}

FreezeSchedule FreezeSchedule::for_stage(Stage stage) {
    using C = Component;
    FreezeSchedule s;
    switch (stage) {
        case Stage::Synthetic:
            s.sets = {
                {terms::kEpeSupFog, {C::EncoderFog, C::FlowDecoder}},
                {terms::kEpeSupClean, {C::EncoderClean, C::FlowDecoder}},
                {terms::kL1FogToClean, {C::EncoderFog, C::DecoderClean}},
                {terms::kL1CleanToFog, {C::EncoderClean, C::DecoderFog}},
                {terms::kGanGClean, {C::EncoderFog, C::DecoderClean}},
                {terms::kGanGFog, {C::EncoderClean, C::DecoderFog}},
                {terms::kGanDFog, {C::DiscFog}},
                {terms::kGanDClean, {C::DiscClean}},
            };
            break;
        case Stage::RealClean:
            s.sets = {
                {terms::kCon, {C::EncoderFog, C::EncoderClean, C::DecoderFog, C::DecoderClean}},
                {terms::kEpeCross, {C::EncoderFog, C::FlowDecoder}},
                {terms::kGanGFog, {C::EncoderClean, C::DecoderFog}},
                {terms::kHazeline, {C::EncoderClean, C::DecoderFog}},
                {terms::kGanDFog, {C::DiscFog}},
            };
            break;
        case Stage::RealFog:
            s.sets = {
                {terms::kCon, {C::EncoderFog, C::EncoderClean, C::DecoderFog, C::DecoderClean}},
                {terms::kGanGClean, {C::EncoderFog, C::DecoderClean}},
                {terms::kHazeline, {C::EncoderFog, C::DecoderClean}},
                {terms::kFlowCon, {C::EncoderFog, C::EncoderClean}},
                {terms::kGanDClean, {C::DiscClean}},
            };
            break;
    }
    return s;
}

// ---------------------------------------------------------------------------

TrainState::TrainState(Config cfg, nets::ParameterStore store) : config(std::move(cfg)), params(std::move(store)) {
    const auto opts = torch::optim::AdamOptions(config.optim.lr)
                          .betas(std::make_tuple(config.optim.beta1, config.optim.beta2));
    for (auto c : nets::kAllComponents)
        optimizers.at(static_cast<size_t>(c)) = std::make_unique<torch::optim::Adam>(params.parameters(c), opts);
}

TrainState TrainState::create(const Config& cfg) {
    cfg.validate();
    return TrainState(cfg, nets::init_network(cfg.train.seed, cfg.net));
}

namespace {

std::string column_of(const std::string& term) { return term.substr(0, term.find('/')); }

struct LossTerm {
    std::string name;
    torch::Tensor value;
    bool skipped = false;
};

class TermCollector {
public:
    explicit TermCollector(const LossConfig& cfg) : cfg_(cfg) {}

    bool wants(const std::string& term) const {
        return cfg_.active(column_of(term)) && !cfg_.disabled.count(term);
    }

    void add(const std::string& term, torch::Tensor value, bool skipped = false) {
        if (wants(term)) terms_.push_back({term, std::move(value), skipped});
    }

    const std::vector<LossTerm>& terms() const { return terms_; }

private:
    const LossConfig& cfg_;
    std::vector<LossTerm> terms_;
};

struct PyramidPair {
    nets::FeaturePyramid joint, first, second;
};

/// Encodes both frames in one batch and splits the pyramid back per frame.
PyramidPair encode_pair(const nets::ParameterStore& params, Domain d, const torch::Tensor& x1,
                        const torch::Tensor& x2) {
    PyramidPair p;
    p.joint = nets::encode(params, d, torch::cat({x1, x2}, 0));
    const int64_t n = x1.size(0);
    for (const auto& lvl : p.joint.levels) {
        p.first.levels.push_back(lvl.narrow(0, 0, n));
        p.second.levels.push_back(lvl.narrow(0, n, n));
    }
    return p;
}

std::vector<torch::Tensor> split_frames(const torch::Tensor& joint) { return joint.chunk(2, 0); }

/// Reports every term, then takes one gradient per distinct trainable set and
/// steps each component that received gradient.
void apply_terms(TrainState& state, Stage stage, const std::vector<LossTerm>& terms, losses::LossReport& report) {
    const auto schedule = FreezeSchedule::for_stage(stage);
    const auto& lcfg = state.config.loss;

    for (const auto& t : terms) {
        const double v = t.value.item<double>();
        if (!std::isfinite(v))
            throw NonFiniteLossError(std::string(data::stage_name(stage)) + " step " + std::to_string(state.step) +
                                     ": loss term '" + t.name + "' is non-finite (" + std::to_string(v) + ")");
        const auto col = column_of(t.name);
        report.values[col] += v;
        if (t.skipped) report.skipped[col] = true;
        report.total += lcfg.weight(col) * v;
    }

    std::map<ComponentSet, torch::Tensor> objectives;
    for (const auto& t : terms) {
        const double w = lcfg.weight(column_of(t.name));
        if (t.skipped || w == 0.0 || !t.value.requires_grad()) continue;
        auto& obj = objectives[schedule.trainable_for(t.name)];
        obj = obj.defined() ? obj + w * t.value : w * t.value;
    }

    std::map<torch::TensorImpl*, torch::Tensor> grads;
    for (auto& [set, objective] : objectives) {
        std::vector<torch::Tensor> inputs;
        for (auto c : set) {
            if (!state.params.trainable(c)) continue;
            for (auto& p : state.params.parameters(c))
                if (p.requires_grad()) inputs.push_back(p);
        }
        if (inputs.empty()) continue;
        auto g = torch::autograd::grad({objective}, inputs, {}, /*retain_graph=*/true, /*create_graph=*/false,
                                       /*allow_unused=*/true);
        for (size_t i = 0; i < inputs.size(); ++i) {
            if (!g[i].defined()) continue;
            auto& slot = grads[inputs[i].unsafeGetTensorImpl()];
            slot = slot.defined() ? slot + g[i] : g[i];
        }
    }
    for (auto& [impl, g] : grads) {
        if (!torch::isfinite(g).all().item<bool>())
            throw NonFiniteLossError(std::string(data::stage_name(stage)) + " step " + std::to_string(state.step) +
                                     ": non-finite gradient");
    }

    for (auto c : nets::kAllComponents) {
        auto params = state.params.parameters(c);
        bool any = false;
        for (auto& p : params) {
            auto it = grads.find(p.unsafeGetTensorImpl());
            if (it == grads.end()) continue;
            p.mutable_grad() = it->second;
            any = true;
        }
        if (!any) continue;
        state.optimizer(c).step();
        for (auto& p : params) p.mutable_grad().reset();
    }
}

// NaN pixels would reach index computations inside the flow decoder before
// any loss is formed, so inputs are screened first.
void check_inputs(const TrainState& state, Stage stage, std::initializer_list<const torch::Tensor*> xs) {
    for (const auto* x : xs)
        if (x->defined() && !torch::isfinite(*x).all().item<bool>())
            throw NonFiniteLossError(std::string(data::stage_name(stage)) + " step " + std::to_string(state.step) +
                                     ": batch contains non-finite values");
}

losses::LossReport start_report(const TrainState& state, Stage stage) {
    losses::LossReport r;
    r.stage = data::stage_name(stage);
    r.step = state.step;
    return r;
}

torch::Tensor ones_mask(const torch::Tensor& flow) {
    return torch::ones({flow.size(0), 1, flow.size(2), flow.size(3)}, flow.options().requires_grad(false));
}

}  // namespace

losses::LossReport step_synthetic(TrainState& state, const data::SyntheticBatch& batch) {
    const auto& cfg = state.config;
    const auto& P = state.params;
    check_inputs(state, Stage::Synthetic, {&batch.fog1, &batch.fog2, &batch.clean1, &batch.clean2, &batch.flow});
    auto report = start_report(state, Stage::Synthetic);
    TermCollector c(cfg.loss);
    const auto* level_w = cfg.loss.multiscale_epe ? &cfg.loss.multiscale_weights : nullptr;

    auto pf = encode_pair(P, Domain::Fog, batch.fog1, batch.fog2);
    auto pc = encode_pair(P, Domain::Clean, batch.clean1, batch.clean2);
    if (c.wants(terms::kEpeSupFog))
        c.add(terms::kEpeSupFog, losses::loss_epe_supervised(nets::estimate_flow(P, pf.first, pf.second), batch.flow,
                                                             level_w).total);
    if (c.wants(terms::kEpeSupClean))
        c.add(terms::kEpeSupClean, losses::loss_epe_supervised(nets::estimate_flow(P, pc.first, pc.second),
                                                               batch.flow, level_w).total);

    if (cfg.loss.use_transform) {
        const auto fog = torch::cat({batch.fog1, batch.fog2}, 0);
        const auto clean = torch::cat({batch.clean1, batch.clean2}, 0);
        auto rendered_clean = nets::decode_image(P, Domain::Clean, pf.joint, fog);
        auto rendered_fog = nets::decode_image(P, Domain::Fog, pc.joint, clean);
        c.add(terms::kL1FogToClean, losses::loss_l1_transform(rendered_clean, clean));
        c.add(terms::kL1CleanToFog, losses::loss_l1_transform(rendered_fog, fog));
        if (c.wants(terms::kGanGClean))
            c.add(terms::kGanGClean, losses::loss_gan_generator(nets::discriminate(P, Domain::Clean, rendered_clean)));
        if (c.wants(terms::kGanGFog))
            c.add(terms::kGanGFog, losses::loss_gan_generator(nets::discriminate(P, Domain::Fog, rendered_fog)));
        if (cfg.train.update_discriminators) {
            if (c.wants(terms::kGanDFog))
                c.add(terms::kGanDFog,
                      losses::loss_gan_discriminator(nets::discriminate(P, Domain::Fog, fog),
                                                     nets::discriminate(P, Domain::Fog, rendered_fog.detach())));
            if (c.wants(terms::kGanDClean))
                c.add(terms::kGanDClean,
                      losses::loss_gan_discriminator(nets::discriminate(P, Domain::Clean, clean),
                                                     nets::discriminate(P, Domain::Clean, rendered_clean.detach())));
        }
    }

    apply_terms(state, Stage::Synthetic, c.terms(), report);
    if (!state.fog_reference_real) state.fog_reference = batch.fog1.detach().clone();
    if (!state.clean_reference_real) state.clean_reference = batch.clean1.detach().clone();
    return report;
}

losses::LossReport step_real_clean(TrainState& state, const data::PairBatch& batch) {
    const auto& cfg = state.config;
    const auto& P = state.params;
    check_inputs(state, Stage::RealClean, {&batch.frame1, &batch.frame2});
    auto report = start_report(state, Stage::RealClean);
    if (!cfg.loss.use_transform) return report;
    TermCollector c(cfg.loss);

    const auto& x1 = batch.frame1;
    const auto& x2 = batch.frame2;
    auto pc = encode_pair(P, Domain::Clean, x1, x2);
    auto flow_clean = nets::estimate_flow(P, pc.first, pc.second).final;

    const auto clean = torch::cat({x1, x2}, 0);
    auto rendered_fog = nets::decode_image(P, Domain::Fog, pc.joint, clean);
    auto rf = split_frames(rendered_fog);
    auto pf = encode_pair(P, Domain::Fog, rf[0], rf[1]);
    auto cycled = split_frames(nets::decode_image(P, Domain::Clean, pf.joint, rendered_fog));

    c.add(terms::kCon, losses::loss_transform_consistency(x1, x2, cycled[0], cycled[1]));
    if (c.wants(terms::kEpeCross)) {
        auto flow_rendered = nets::estimate_flow(P, pf.first, pf.second).final;
        auto mask = cfg.loss.mask_real_clean
                        ? losses::photometric_consistency_mask(x1, x2, flow_clean, cfg.loss.mask_tau)
                        : ones_mask(flow_clean);
        auto epe = losses::loss_epe_cross_domain(flow_clean, flow_rendered, mask, losses::StopTarget::A);
        c.add(terms::kEpeCross, epe.value, epe.skipped);
    }
    if (c.wants(terms::kGanGFog))
        c.add(terms::kGanGFog, losses::loss_gan_generator(nets::discriminate(P, Domain::Fog, rendered_fog)));
    if (c.wants(terms::kHazeline))
        c.add(terms::kHazeline, losses::loss_hazeline(clean, rendered_fog, cfg.loss.atmo_patch));
    if (cfg.train.update_discriminators && c.wants(terms::kGanDFog) && state.fog_reference.defined())
        c.add(terms::kGanDFog, losses::loss_gan_discriminator(nets::discriminate(P, Domain::Fog, state.fog_reference),
                                                              nets::discriminate(P, Domain::Fog, rendered_fog.detach())));

    apply_terms(state, Stage::RealClean, c.terms(), report);
    state.clean_reference = x1.detach().clone();
    state.clean_reference_real = true;
    return report;
}

losses::LossReport step_real_fog(TrainState& state, const data::PairBatch& batch) {
    const auto& cfg = state.config;
    const auto& P = state.params;
    check_inputs(state, Stage::RealFog, {&batch.frame1, &batch.frame2});
    auto report = start_report(state, Stage::RealFog);
    if (!cfg.loss.use_transform) return report;
    TermCollector c(cfg.loss);

    const auto& x1 = batch.frame1;
    const auto& x2 = batch.frame2;
    auto pf = encode_pair(P, Domain::Fog, x1, x2);
    auto flow_fog = nets::estimate_flow(P, pf.first, pf.second).final;

    const auto fog = torch::cat({x1, x2}, 0);
    auto rendered_clean = nets::decode_image(P, Domain::Clean, pf.joint, fog);
    auto rc = split_frames(rendered_clean);
    auto pc = encode_pair(P, Domain::Clean, rc[0], rc[1]);
    auto cycled = split_frames(nets::decode_image(P, Domain::Fog, pc.joint, rendered_clean));

    c.add(terms::kCon, losses::loss_transform_consistency(x1, x2, cycled[0], cycled[1]));
    if (c.wants(terms::kGanGClean))
        c.add(terms::kGanGClean, losses::loss_gan_generator(nets::discriminate(P, Domain::Clean, rendered_clean)));
    if (c.wants(terms::kHazeline))
        c.add(terms::kHazeline, losses::loss_hazeline(rendered_clean, fog, cfg.loss.atmo_patch));
    if (c.wants(terms::kFlowCon)) {
        auto flow_rendered = nets::estimate_flow(P, pc.first, pc.second).final;
        auto mask = cfg.loss.mask_real_fog ? losses::photometric_consistency_mask(x1, x2, flow_fog, cfg.loss.mask_tau)
                                           : ones_mask(flow_fog);
        auto fc = losses::loss_flow_consistency(flow_fog, flow_rendered, mask);
        c.add(terms::kFlowCon, fc.value, fc.skipped);
    }
    if (cfg.train.update_discriminators && c.wants(terms::kGanDClean) && state.clean_reference.defined())
        c.add(terms::kGanDClean,
              losses::loss_gan_discriminator(nets::discriminate(P, Domain::Clean, state.clean_reference),
                                             nets::discriminate(P, Domain::Clean, rendered_clean.detach())));

    apply_terms(state, Stage::RealFog, c.terms(), report);
    state.fog_reference = x1.detach().clone();
    state.fog_reference_real = true;
    return report;
}

losses::LossReport train_step(TrainState& state, const data::ScheduledBatch& batch) {
    losses::LossReport r;
    switch (batch.stage) {
        case Stage::Synthetic: r = step_synthetic(state, batch.synthetic); break;
        case Stage::RealClean: r = step_real_clean(state, batch.pair); break;
        case Stage::RealFog: r = step_real_fog(state, batch.pair); break;
    }
    ++state.step;
    return r;
}

SyntheticEval evaluate_synthetic(const TrainState& state, const data::SyntheticBatch& batch) {
    torch::NoGradGuard no_grad;
    const auto& P = state.params;
    auto pf = encode_pair(P, Domain::Fog, batch.fog1, batch.fog2);
    auto pc = encode_pair(P, Domain::Clean, batch.clean1, batch.clean2);
    SyntheticEval e;
    e.epe_fog =
        losses::loss_epe_supervised(nets::estimate_flow(P, pf.first, pf.second), batch.flow).final.item<double>();
    e.epe_clean =
        losses::loss_epe_supervised(nets::estimate_flow(P, pc.first, pc.second), batch.flow).final.item<double>();
    return e;
}

// ---------------------------------------------------------------------------

namespace {

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, int64_t step) {
    char name[48];
    std::snprintf(name, sizeof name, "step_%09lld.ckpt", static_cast<long long>(step));
    return dir / name;
}

void prune_checkpoints(const std::filesystem::path& dir, int keep) {
    std::vector<std::filesystem::path> found;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        const auto name = e.path().filename().string();
        if (name.rfind("step_", 0) == 0 && e.path().extension() == ".ckpt") found.push_back(e.path());
    }
    std::sort(found.begin(), found.end());
    for (size_t i = 0; i + static_cast<size_t>(keep) < found.size(); ++i) std::filesystem::remove(found[i]);
}

}  // namespace

TrainState train(const Config& cfg, const data::Datasets& datasets, const std::optional<std::filesystem::path>& resume,
                 const ReportSink& sink) {
    cfg.validate();
    datasets.validate();

    TrainState state = resume ? load_checkpoint(*resume) : TrainState::create(cfg);
    if (resume) {
        if (state.config.to_json()["net"] != cfg.to_json()["net"])
            throw ConfigError("checkpoint network architecture does not match the config");
        state.config = cfg;
    }

    data::BatchScheduler scheduler(datasets, cfg.data, cfg.fog, cfg.train.seed + 0x5eed);
    if (resume && !state.scheduler_state.empty()) scheduler.load_state(state.scheduler_state);

    std::ofstream log;
    if (!cfg.train.loss_log.empty()) {
        const bool append = resume && std::filesystem::exists(cfg.train.loss_log);
        log.open(cfg.train.loss_log, append ? std::ios::app : std::ios::trunc);
        if (!log) throw ConfigError("cannot open loss log " + cfg.train.loss_log);
        if (!append) log << losses::report_csv_header() << '\n';
    }
    if (!cfg.train.checkpoint_dir.empty()) std::filesystem::create_directories(cfg.train.checkpoint_dir);

    while (state.step < cfg.train.steps) {
        const auto batch = scheduler.next();
        const auto report = train_step(state, batch);
        state.scheduler_state = scheduler.save_state();
        if (log.is_open()) log << losses::report_csv_row(report) << '\n' << std::flush;
        if (sink) sink(report);
        const bool last = state.step == cfg.train.steps;
        if (!cfg.train.checkpoint_dir.empty() && (state.step % cfg.train.checkpoint_every == 0 || last)) {
            save_checkpoint(state, checkpoint_path(cfg.train.checkpoint_dir, state.step));
            prune_checkpoints(cfg.train.checkpoint_dir, cfg.train.keep_checkpoints);
        }
    }
    return state;
}

TrainState train(const Config& cfg, const std::optional<std::filesystem::path>& resume) {
    cfg.validate();
    const auto datasets = data::Datasets::load(cfg.data);
    return train(cfg, datasets, resume);
}

}  // namespace fogflow::train
