#include "diffspec/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <json.hpp>

namespace diffspec {

namespace {

void check_finite(const std::vector<RealGrid>& grids, const char* stage) {
    for (std::size_t l = 0; l < grids.size(); ++l)
        for (double v : grids[l].span())
            if (!std::isfinite(v))
                throw PropagationError(std::string("backward: non-finite ") + stage + " gradient (layer " +
                                       std::to_string(l + 1) + ")");
}

double mean_of(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace

BackwardResult backward(const OpticalEngine& engine, EngineWorkspace& ws, const RealGrid& object, int label,
                        const LossWeights& weights, bool object_gradient, std::span<const LayerShift> shifts) {
    ForwardTrace trace;
    const auto powers = engine.forward(object, shifts, ws, &trace);
    PowerGradients pg;
    BackwardResult out;
    out.loss = evaluate_loss(engine.model().plan, powers, label, weights, &pg);
    if (!std::isfinite(out.loss.total)) throw PropagationError("backward: non-finite loss");
    std::vector<double> raw(powers.size());
    for (std::size_t k = 0; k < powers.size(); ++k) raw[k] = powers[k].detected;
    out.scores = aggregate_scores(engine.model().plan, std::move(raw));

    const auto& g = engine.model().geometry;
    out.grads.latent.assign(engine.model().layers.size(), RealGrid(g.ny, g.nx, 0.0));
    RealGrid* og = nullptr;
    if (object_gradient) {
        out.grads.object = RealGrid(g.ny, g.nx, 0.0);
        og = &*out.grads.object;
    }
    engine.backward(trace, pg, ws, &out.grads.latent, og);
    check_finite(out.grads.latent, "latent");
    if (og)
        for (double v : og->span())
            if (!std::isfinite(v)) throw PropagationError("backward: non-finite object gradient");
    return out;
}

BackwardResult backward(const DiffractiveModel& model, const ObjectImage& object, int label, const LossWeights& weights,
                        bool object_gradient, std::span<const LayerShift> shifts) {
    object.validate();
    OpticalEngine engine(model);
    auto ws = engine.make_workspace();
    return backward(engine, ws, object.amplitude, label, weights, object_gradient, shifts);
}

void VaccinationPlan::validate(int layer_count) const {
    if (!std::isfinite(delta) || delta < 0.0) throw Error("vaccination: delta must be finite and >= 0");
    for (int l : layers)
        if (l < 0 || l >= layer_count) throw Error("vaccination: layer index out of range");
}

std::vector<LayerShift> VaccinationPlan::draw(std::mt19937_64& rng, int layer_count, double pitch) const {
    std::vector<LayerShift> shifts(static_cast<std::size_t>(layer_count));
    std::uniform_real_distribution<double> u(-delta, delta);
    auto one = [&] { return delta > 0.0 ? static_cast<int>(std::lround(u(rng) / pitch)) : 0; };
    if (layers.empty()) {
        for (auto& s : shifts) {
            s.dx = one();
            s.dy = one();
        }
    } else {
        for (int l : layers) {
            shifts[static_cast<std::size_t>(l)].dx = one();
            shifts[static_cast<std::size_t>(l)].dy = one();
        }
    }
    return shifts;
}

std::string to_jsonl(const EpochRecord& r) {
    nlohmann::json j;
    j["epoch"] = r.epoch;
    j["loss"] = r.loss;
    j["loss_inference"] = r.inference;
    j["loss_efficiency"] = r.efficiency;
    j["loss_purity"] = r.purity;
    j["train_accuracy"] = r.train_accuracy;
    j["test_accuracy"] = r.test_accuracy ? nlohmann::json(*r.test_accuracy) : nlohmann::json(nullptr);
    j["eta_mean"] = r.eta_mean;
    j["eta_std"] = r.eta_std;
    return j.dump();
}

void TrainConfig::validate(int layer_count) const {
    if (epochs < 0) throw Error("train: epochs must be >= 0");
    if (batch < 1) throw Error("train: batch must be >= 1");
    if (eval_every < 1) throw Error("train: eval_every must be >= 1");
    adam.validate();
    if (!(lr_final_fraction > 0.0 && lr_final_fraction <= 1.0)) throw Error("train: lr_final_fraction must be in (0, 1]");
    weights.validate();
    if (vaccination) vaccination->validate(layer_count);
}

std::vector<double> flatten_latents(const std::vector<ThicknessMap>& layers) {
    std::vector<double> flat;
    for (const auto& l : layers) flat.insert(flat.end(), l.latent.span().begin(), l.latent.span().end());
    return flat;
}

void unflatten_latents(std::span<const double> flat, std::vector<ThicknessMap>& layers) {
    std::size_t at = 0;
    for (auto& l : layers) {
        const std::size_t n = l.latent.size();
        if (at + n > flat.size()) throw ShapeError("unflatten: parameter vector too short");
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(at), flat.begin() + static_cast<std::ptrdiff_t>(at + n),
                  l.latent.data());
        at += n;
    }
    if (at != flat.size()) throw ShapeError("unflatten: parameter vector too long");
}

double epoch_learning_rate(const TrainConfig& cfg, int epoch) {
    if (cfg.epochs <= 1 || cfg.lr_final_fraction == 1.0) return cfg.adam.lr;
    const double t = static_cast<double>(epoch - 1) / static_cast<double>(cfg.epochs - 1);
    const double f = cfg.lr_final_fraction;
    return cfg.adam.lr * (f + (1.0 - f) * 0.5 * (1.0 + std::cos(std::numbers::pi * t)));
}

TrainResult train(const DiffractiveModel& model, const ImageSet& train_set, const ObjectEncoder& encoder,
                  const TrainConfig& cfg, const ImageSet* test_set) {
    const int L = model.geometry.layer_count();
    cfg.validate(L);
    if (train_set.size() == 0) throw Error("train: empty training set");
    if (train_set.class_count > model.plan.class_count) throw Error("train: dataset has more classes than the plan");

    TrainResult result{model, {}};
    OpticalEngine engine(model);
    auto ws = engine.make_workspace();
    std::mt19937_64 rng(cfg.seed);
    // Separate stream so that a zero-width vaccination leaves the data order untouched.
    std::mt19937_64 shift_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

    std::vector<double> params = flatten_latents(result.model.layers);
    std::vector<double> grad(params.size());
    AdamState adam;
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    RealGrid object(model.geometry.ny, model.geometry.nx);
    std::vector<RealGrid> sample_grads;
    std::int64_t iteration = 0;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        AdamConfig step_cfg = cfg.adam;
        step_cfg.lr = epoch_learning_rate(cfg, epoch);
        EpochRecord rec;
        rec.epoch = epoch;
        std::vector<double> etas;
        etas.reserve(order.size());
        std::size_t correct = 0;

        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
            const double scale = 1.0 / static_cast<double>(stop - start);
            std::vector<LayerShift> shifts;
            if (cfg.vaccination) shifts = cfg.vaccination->draw(shift_rng, L, model.geometry.pitch);
            std::fill(grad.begin(), grad.end(), 0.0);

            for (std::size_t b = start; b < stop; ++b) {
                const std::size_t idx = order[b];
                const int label = train_set.labels[idx];
                encoder.encode_into(train_set.image(idx), object);
                ForwardTrace trace;
                const auto powers = engine.forward(object, shifts, ws, &trace);
                PowerGradients pg;
                const LossBreakdown lb = evaluate_loss(model.plan, powers, label, cfg.weights, &pg, scale);
                if (!std::isfinite(lb.total)) throw DivergenceError("train: non-finite loss", iteration);
                for (auto& g : sample_grads) std::fill(g.data(), g.data() + g.size(), 0.0);
                engine.backward(trace, pg, ws, &sample_grads, nullptr);
                std::size_t at = 0;
                for (const auto& g : sample_grads)
                    for (double v : g.span()) grad[at++] += v;

                rec.loss += lb.total;
                rec.inference += lb.inference;
                rec.efficiency += lb.efficiency;
                rec.purity += lb.purity;
                etas.push_back(lb.eta);
                std::vector<double> raw(powers.size());
                for (std::size_t k = 0; k < powers.size(); ++k) raw[k] = powers[k].detected;
                if (classify(aggregate_scores(model.plan, std::move(raw))) == label) ++correct;
            }
            for (double v : grad)
                if (!std::isfinite(v)) throw DivergenceError("train: non-finite gradient", iteration);
            adam_step(params, grad, adam, step_cfg);
            unflatten_latents(params, result.model.layers);
            engine.set_layers(result.model.layers);
            ++iteration;
        }

        const double n = static_cast<double>(order.size());
        rec.loss /= n;
        rec.inference /= n;
        rec.efficiency /= n;
        rec.purity /= n;
        rec.train_accuracy = static_cast<double>(correct) / n;
        rec.eta_mean = mean_of(etas);
        rec.eta_std = std_of(etas);
        if (test_set && test_set->size() > 0 && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs)) {
            const auto ev = evaluate_optical(engine, *test_set, encoder);
            rec.test_accuracy = ev.accuracy;
            rec.eta_mean = ev.eta_mean;
            rec.eta_std = ev.eta_std;
        }
        if (cfg.on_epoch) cfg.on_epoch(rec);
        result.history.push_back(rec);
    }
    return result;
}

OpticalEvaluation evaluate_optical(const OpticalEngine& engine, const ImageSet& set, const ObjectEncoder& encoder,
                                   std::span<const LayerShift> shifts) {
    const auto& plan = engine.model().plan;
    auto ws = engine.make_workspace();
    RealGrid object(engine.model().geometry.ny, engine.model().geometry.nx);
    OpticalEvaluation out;
    out.samples.reserve(set.size());
    std::vector<double> etas;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < set.size(); ++i) {
        encoder.encode_into(set.image(i), object);
        const auto powers = engine.forward(object, shifts, ws);
        SampleOutcome s;
        s.label = set.labels[i];
        s.eta = efficiency_from_powers(powers);
        s.raw.resize(powers.size());
        for (std::size_t k = 0; k < powers.size(); ++k) s.raw[k] = powers[k].detected;
        s.predicted = classify(aggregate_scores(plan, s.raw));
        if (s.predicted == s.label) ++correct;
        etas.push_back(s.eta);
        out.samples.push_back(std::move(s));
    }
    out.accuracy = set.size() ? static_cast<double>(correct) / static_cast<double>(set.size()) : 0.0;
    out.eta_mean = mean_of(etas);
    out.eta_std = std_of(etas);
    return out;
}

OpticalEvaluation evaluate_optical(const DiffractiveModel& model, const ImageSet& set, const ObjectEncoder& encoder,
                                   std::span<const LayerShift> shifts) {
    return evaluate_optical(OpticalEngine(model), set, encoder, shifts);
}

std::string to_string(SweepProtocol p) { return p == SweepProtocol::middle_layer ? "middle-layer" : "all-layers"; }

SweepProtocol sweep_protocol_from_string(const std::string& s) {
    if (s == "middle-layer" || s == "middle_layer") return SweepProtocol::middle_layer;
    if (s == "all-layers" || s == "all_layers") return SweepProtocol::all_layers;
    throw Error("unknown sweep protocol '" + s + "'");
}

std::vector<SweepPoint> misalignment_sweep(const DiffractiveModel& model, const ImageSet& test_set,
                                           const ObjectEncoder& encoder, std::span<const double> deltas, int trials,
                                           std::uint64_t seed, SweepProtocol protocol) {
    if (trials < 1) throw Error("sweep: trials must be >= 1");
    const int L = model.geometry.layer_count();
    OpticalEngine engine(model);
    std::vector<SweepPoint> out;
    for (std::size_t di = 0; di < deltas.size(); ++di) {
        VaccinationPlan vp;
        vp.delta = deltas[di];
        if (protocol == SweepProtocol::middle_layer) vp.layers = {L / 2};
        vp.validate(L);
        std::mt19937_64 rng(seed + 1000003ULL * di);
        SweepPoint pt;
        pt.delta = deltas[di];
        for (int t = 0; t < trials; ++t) {
            const auto shifts = vp.draw(rng, L, model.geometry.pitch);
            pt.trial_accuracies.push_back(evaluate_optical(engine, test_set, encoder, shifts).accuracy);
        }
        pt.mean_accuracy = mean_of(pt.trial_accuracies);
        if (std::all_of(pt.trial_accuracies.begin(), pt.trial_accuracies.end(),
                        [&](double a) { return a == pt.trial_accuracies.front(); }))
            pt.mean_accuracy = pt.trial_accuracies.front();
        pt.std_accuracy = std_of(pt.trial_accuracies);
        out.push_back(std::move(pt));
    }
    return out;
}

}  // namespace diffspec
