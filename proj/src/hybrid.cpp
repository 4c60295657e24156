#include "diffspec/hybrid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <json.hpp>

namespace diffspec {

using Eigen::MatrixXd;

std::string to_string(BackEnd b) { return b == BackEnd::reconstructor ? "reconstructor" : "classifier"; }

BackEnd back_end_from_string(const std::string& s) {
    if (s == "reconstructor" || s == "reconstruction") return BackEnd::reconstructor;
    if (s == "classifier" || s == "classification") return BackEnd::classifier;
    throw Error("unknown back end '" + s + "'");
}

void JointConfig::validate() const {
    if (!(xi >= 0.0 && xi <= 1.0)) throw Error("joint: xi must lie in [0, 1]");
    if (epochs < 0 || batch < 1) throw Error("joint: epochs must be >= 0 and batch >= 1");
    if (!(temperature > 0.0)) throw Error("joint: temperature must be > 0");
    optical_adam.validate();
    decoder_adam.validate();
    recon.validate();
}

std::string to_jsonl(const JointEpochRecord& r) {
    nlohmann::json j;
    j["epoch"] = r.epoch;
    j["loss"] = r.loss;
    j["optical_loss"] = r.optical_loss;
    j["back_loss"] = r.back_loss;
    j["optical_accuracy"] = r.optical_accuracy;
    j["electronic_accuracy"] = r.electronic_accuracy ? nlohmann::json(*r.electronic_accuracy) : nlohmann::json(nullptr);
    return j.dump();
}

void set_joint_standardization(DecoderMlp& net, const WavelengthPlan& plan) {
    const auto n = static_cast<std::size_t>(net.inputs());
    if (plan.mode == EncodingMode::differential) {
        net.input_shift.assign(n, 0.0);
        net.input_scale.assign(n, 1.0);
    } else {
        net.input_shift.assign(n, 1.0 / plan.class_count);
        net.input_scale.assign(n, static_cast<double>(plan.class_count));
    }
}

JointResult joint_train(const DiffractiveModel& model, const DecoderMlp& net, const ImageSet& train_set,
                        const ObjectEncoder& encoder, const JointConfig& cfg) {
    cfg.validate();
    net.validate();
    const auto& plan = model.plan;
    const int C = plan.class_count;
    const bool classifier = cfg.back_end == BackEnd::classifier;
    if (net.inputs() != C) throw Error("joint: decoder input width does not match the class count");
    if (classifier && (net.head != DecoderHead::classification || net.outputs() != C))
        throw Error("joint: classifier back end needs a classification head with one output per class");
    if (!classifier && (net.head != DecoderHead::reconstruction || net.outputs() != encoder.rows() * encoder.cols()))
        throw Error("joint: reconstructor back end needs a reconstruction head sized to the image");
    if (train_set.size() == 0) throw Error("joint: empty training set");

    JointResult result{model, net, {}};
    if (result.net.input_shift.empty()) set_joint_standardization(result.net, plan);
    OpticalEngine engine(model);
    auto ws = engine.make_workspace();
    std::mt19937_64 rng(cfg.seed);
    std::vector<double> params = flatten_latents(result.model.layers);
    std::vector<double> ograd(params.size());
    std::vector<double> dgrad;
    AdamState oadam, dadam;
    const LossWeights lw{0.0, 0.0, cfg.temperature};
    const double xi = cfg.xi;
    const bool optical_update = true;
    const bool decoder_update = xi < 1.0;

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    RealGrid object(model.geometry.ny, model.geometry.nx);
    std::vector<RealGrid> sample_grads;
    std::int64_t iteration = 0;
    const int P = net.outputs();

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        JointEpochRecord rec;
        rec.epoch = epoch;
        std::size_t correct_opt = 0, correct_el = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
            const auto B = static_cast<Eigen::Index>(stop - start);
            const double scale = 1.0 / static_cast<double>(B);
            std::vector<ForwardTrace> traces(static_cast<std::size_t>(B));
            std::vector<PowerGradients> pgs(static_cast<std::size_t>(B));
            std::vector<std::vector<double>> raws(static_cast<std::size_t>(B));
            MatrixXd x(C, B);

            for (Eigen::Index j = 0; j < B; ++j) {
                const std::size_t idx = order[start + static_cast<std::size_t>(j)];
                const int label = train_set.labels[idx];
                encoder.encode_into(train_set.image(idx), object);
                const auto powers = engine.forward(object, {}, ws, &traces[static_cast<std::size_t>(j)]);
                const LossBreakdown lb = evaluate_loss(plan, powers, label, lw, &pgs[static_cast<std::size_t>(j)], xi * scale);
                rec.optical_loss += lb.inference;
                auto& raw = raws[static_cast<std::size_t>(j)];
                raw.resize(powers.size());
                for (std::size_t k = 0; k < powers.size(); ++k) raw[k] = powers[k].detected;
                if (classify(aggregate_scores(plan, raw)) == label) ++correct_opt;
                const auto f = decoder_features(plan, raw);
                for (int r = 0; r < C; ++r) x(r, j) = f[static_cast<std::size_t>(r)];
            }

            MlpCache cache;
            const MatrixXd y = mlp_forward_batch(result.net, x, &cache);
            MatrixXd dy(P, B);
            if (classifier) {
                std::vector<double> g;
                for (Eigen::Index j = 0; j < B; ++j) {
                    const int label = train_set.labels[order[start + static_cast<std::size_t>(j)]];
                    const std::span<const double> col(y.col(j).data(), static_cast<std::size_t>(P));
                    rec.back_loss += softmax_cross_entropy(col, label, &g);
                    if (std::max_element(col.begin(), col.end()) - col.begin() == label) ++correct_el;
                    for (int r = 0; r < P; ++r) dy(r, j) = (1.0 - xi) * scale * g[static_cast<std::size_t>(r)];
                }
            } else {
                MatrixXd truth(P, B);
                for (Eigen::Index j = 0; j < B; ++j) {
                    const auto t = target_image(encoder, train_set.image(order[start + static_cast<std::size_t>(j)]));
                    for (int r = 0; r < P; ++r) truth(r, j) = t[static_cast<std::size_t>(r)];
                }
                const double c = cfg.recon.berhu_fraction * (y - truth).cwiseAbs().maxCoeff();
                std::vector<double> g;
                for (Eigen::Index j = 0; j < B; ++j) {
                    rec.back_loss += loss_structural(std::span<const double>(y.col(j).data(), static_cast<std::size_t>(P)),
                                                     std::span<const double>(truth.col(j).data(), static_cast<std::size_t>(P)),
                                                     cfg.recon.structural, c, &g);
                    for (int r = 0; r < P; ++r) dy(r, j) = (1.0 - xi) * scale * g[static_cast<std::size_t>(r)];
                }
            }

            MatrixXd dx;
            mlp_backward(result.net, cache, dy, dgrad, &dx);

            std::fill(ograd.begin(), ograd.end(), 0.0);
            for (Eigen::Index j = 0; j < B; ++j) {
                auto& pg = pgs[static_cast<std::size_t>(j)];
                if (xi < 1.0) {
                    std::vector<double> d_raw(pg.detected.size(), 0.0);
                    normalized_scores_backward(plan, raws[static_cast<std::size_t>(j)],
                                               std::span<const double>(dx.col(j).data(), static_cast<std::size_t>(C)), d_raw);
                    for (std::size_t k = 0; k < d_raw.size(); ++k) pg.detected[k] += d_raw[k];
                }
                for (auto& g : sample_grads) std::fill(g.data(), g.data() + g.size(), 0.0);
                engine.backward(traces[static_cast<std::size_t>(j)], pg, ws, &sample_grads, nullptr);
                std::size_t at = 0;
                for (const auto& g : sample_grads)
                    for (double v : g.span()) ograd[at++] += v;
            }
            for (double v : ograd)
                if (!std::isfinite(v)) throw DivergenceError("joint: non-finite optical gradient", iteration);
            for (double v : dgrad)
                if (!std::isfinite(v)) throw DivergenceError("joint: non-finite decoder gradient", iteration);
            if (optical_update) {
                adam_step(params, ograd, oadam, cfg.optical_adam);
                unflatten_latents(params, result.model.layers);
                engine.set_layers(result.model.layers);
            }
            if (decoder_update) adam_step(result.net.params, dgrad, dadam, cfg.decoder_adam);
            ++iteration;
        }
        const double n = static_cast<double>(order.size());
        rec.optical_loss /= n;
        rec.back_loss /= n;
        rec.loss = xi * rec.optical_loss + (1.0 - xi) * rec.back_loss;
        if (!std::isfinite(rec.loss)) throw DivergenceError("joint: non-finite loss", iteration);
        rec.optical_accuracy = static_cast<double>(correct_opt) / n;
        if (classifier) rec.electronic_accuracy = static_cast<double>(correct_el) / n;
        if (cfg.on_epoch) cfg.on_epoch(rec);
        result.history.push_back(rec);
    }
    return result;
}

JointMetrics evaluate_joint(const DiffractiveModel& model, const DecoderMlp& net, const ImageSet& set,
                            const ObjectEncoder& encoder) {
    const OpticalEngine engine(model);
    const auto ev = evaluate_optical(engine, set, encoder);
    JointMetrics m;
    m.optical_accuracy = ev.accuracy;
    m.eta_mean = ev.eta_mean;
    m.eta_std = ev.eta_std;
    std::size_t correct = 0;
    double mae = 0.0;
    for (std::size_t i = 0; i < ev.samples.size(); ++i) {
        const auto& s = ev.samples[i];
        JointSampleLog log{s.label, s.predicted, std::nullopt, std::nullopt};
        const auto f = decoder_features(model.plan, s.raw);
        if (net.head == DecoderHead::classification) {
            log.electronic_class = classify_electronic(net, f);
            if (*log.electronic_class == s.label) ++correct;
        } else {
            const auto y = mlp_forward(net, f);
            const auto t = target_image(encoder, set.image(i));
            log.reconstruction_mae = loss_structural(y, t, StructuralLoss::mae, 0.0);
            mae += *log.reconstruction_mae;
        }
        m.samples.push_back(log);
    }
    const double n = static_cast<double>(std::max<std::size_t>(1, ev.samples.size()));
    if (net.head == DecoderHead::classification)
        m.electronic_accuracy = static_cast<double>(correct) / n;
    else
        m.reconstruction_mae = mae / n;
    return m;
}

}  // namespace diffspec
