#include "diffspec/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <json.hpp>

namespace diffspec {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using CMap = Eigen::Map<const MatrixXd>;
using CVec = Eigen::Map<const VectorXd>;

struct Offsets {
    std::size_t w1, b1, w2, b2, w3, b3, end;
};

Offsets offsets(const std::vector<int>& w) {
    Offsets o{};
    const auto n = [&](int i) { return static_cast<std::size_t>(w[static_cast<std::size_t>(i)]); };
    o.w1 = 0;
    o.b1 = o.w1 + n(1) * n(0);
    o.w2 = o.b1 + n(1);
    o.b2 = o.w2 + n(2) * n(1);
    o.w3 = o.b2 + n(2);
    o.b3 = o.w3 + n(3) * n(2);
    o.end = o.b3 + n(3);
    return o;
}

MatrixXd standardize(const DecoderMlp& net, const MatrixXd& x) {
    MatrixXd out = x;
    if (net.input_shift.empty()) return out;
    for (Eigen::Index r = 0; r < out.rows(); ++r)
        out.row(r) = (out.row(r).array() - net.input_shift[static_cast<std::size_t>(r)]) *
                     net.input_scale[static_cast<std::size_t>(r)];
    return out;
}

}  // namespace

std::string to_string(DecoderHead h) { return h == DecoderHead::reconstruction ? "reconstruction" : "classification"; }

DecoderHead decoder_head_from_string(const std::string& s) {
    if (s == "reconstruction" || s == "reconstructor") return DecoderHead::reconstruction;
    if (s == "classification" || s == "classifier") return DecoderHead::classification;
    throw Error("unknown decoder head '" + s + "'");
}

std::string to_string(StructuralLoss l) { return l == StructuralLoss::mae ? "mae" : "berhu"; }

StructuralLoss structural_loss_from_string(const std::string& s) {
    if (s == "mae" || s == "MAE") return StructuralLoss::mae;
    if (s == "berhu" || s == "BerHu") return StructuralLoss::berhu;
    throw Error("unknown structural loss '" + s + "'");
}

std::size_t DecoderMlp::parameter_count(const std::vector<int>& widths) {
    if (widths.size() != 4) throw ShapeError("decoder: expected four layer widths");
    return offsets(widths).end;
}

void DecoderMlp::validate() const {
    if (widths.size() != 4) throw ShapeError("decoder: expected four layer widths");
    for (int w : widths)
        if (w < 1) throw ShapeError("decoder: layer widths must be positive");
    if (params.size() != parameter_count(widths)) throw ShapeError("decoder: parameter count does not match widths");
    if (!input_shift.empty() || !input_scale.empty()) {
        if (input_shift.size() != static_cast<std::size_t>(inputs()) || input_scale.size() != input_shift.size())
            throw ShapeError("decoder: input standardization does not match input width");
    }
    for (double p : params)
        if (!std::isfinite(p)) throw Error("decoder: non-finite weight");
}

DecoderMlp make_decoder(DecoderHead head, int inputs, int outputs, std::uint64_t seed, int hidden1, int hidden2) {
    DecoderMlp net;
    net.head = head;
    net.widths = {inputs, hidden1, hidden2, outputs};
    net.params.assign(DecoderMlp::parameter_count(net.widths), 0.0);
    const Offsets o = offsets(net.widths);
    std::mt19937_64 rng(seed);
    auto fill = [&](std::size_t at, int fan_out, int fan_in, double gain) {
        const double limit = gain * std::sqrt(6.0 / fan_in);
        std::uniform_real_distribution<double> u(-limit, limit);
        for (std::size_t i = 0; i < static_cast<std::size_t>(fan_out) * fan_in; ++i) net.params[at + i] = u(rng);
    };
    fill(o.w1, hidden1, inputs, 1.0);
    fill(o.w2, hidden2, hidden1, 1.0);
    fill(o.w3, outputs, hidden2, 1.0 / std::sqrt(2.0));
    return net;
}

MatrixXd mlp_forward_batch(const DecoderMlp& net, const MatrixXd& inputs, MlpCache* cache) {
    if (inputs.rows() != net.inputs()) throw ShapeError("decoder: input length does not match network");
    const Offsets o = offsets(net.widths);
    const int h1 = net.widths[1], h2 = net.widths[2], out = net.widths[3];
    const double* p = net.params.data();
    const CMap W1(p + o.w1, h1, net.inputs()), W2(p + o.w2, h2, h1), W3(p + o.w3, out, h2);
    const CVec b1(p + o.b1, h1), b2(p + o.b2, h2), b3(p + o.b3, out);

    MatrixXd x = standardize(net, inputs);
    MatrixXd z1 = (W1 * x).colwise() + b1;
    MatrixXd a1 = z1.cwiseMax(0.0);
    MatrixXd z2 = (W2 * a1).colwise() + b2;
    MatrixXd a2 = z2.cwiseMax(0.0);
    MatrixXd y = (W3 * a2).colwise() + b3;
    // Clamped so the output stays strictly inside (0, 1) in double precision.
    if (net.head == DecoderHead::reconstruction)
        y = y.unaryExpr([](double v) { return sigmoid(std::clamp(v, -36.0, 36.0)); });
    if (cache) {
        cache->x = std::move(x);
        cache->z1 = std::move(z1);
        cache->a1 = std::move(a1);
        cache->z2 = std::move(z2);
        cache->a2 = std::move(a2);
        cache->y = y;
    }
    return y;
}

std::vector<double> mlp_forward(const DecoderMlp& net, std::span<const double> input) {
    MatrixXd x(net.inputs(), 1);
    if (input.size() != static_cast<std::size_t>(net.inputs())) throw ShapeError("decoder: input length does not match network");
    for (std::size_t i = 0; i < input.size(); ++i) x(static_cast<Eigen::Index>(i), 0) = input[i];
    const MatrixXd y = mlp_forward_batch(net, x);
    return {y.data(), y.data() + y.size()};
}

void mlp_backward(const DecoderMlp& net, const MlpCache& cache, const MatrixXd& d_output, std::vector<double>& grad,
                  MatrixXd* d_input) {
    const Offsets o = offsets(net.widths);
    const int in = net.inputs(), h1 = net.widths[1], h2 = net.widths[2], out = net.widths[3];
    const double* p = net.params.data();
    const CMap W1(p + o.w1, h1, in), W2(p + o.w2, h2, h1), W3(p + o.w3, out, h2);
    grad.assign(o.end, 0.0);
    auto gmat = [&](std::size_t at, int r, int c) { return Eigen::Map<MatrixXd>(grad.data() + at, r, c); };
    auto gvec = [&](std::size_t at, int r) { return Eigen::Map<VectorXd>(grad.data() + at, r); };

    MatrixXd dz3 = d_output;
    if (net.head == DecoderHead::reconstruction) dz3 = dz3.cwiseProduct(cache.y.cwiseProduct((1.0 - cache.y.array()).matrix()));
    gmat(o.w3, out, h2) = dz3 * cache.a2.transpose();
    gvec(o.b3, out) = dz3.rowwise().sum();
    MatrixXd dz2 = (W3.transpose() * dz3).cwiseProduct((cache.z2.array() > 0.0).cast<double>().matrix());
    gmat(o.w2, h2, h1) = dz2 * cache.a1.transpose();
    gvec(o.b2, h2) = dz2.rowwise().sum();
    MatrixXd dz1 = (W2.transpose() * dz2).cwiseProduct((cache.z1.array() > 0.0).cast<double>().matrix());
    gmat(o.w1, h1, in) = dz1 * cache.x.transpose();
    gvec(o.b1, h1) = dz1.rowwise().sum();
    if (d_input) {
        *d_input = W1.transpose() * dz1;
        if (!net.input_scale.empty())
            for (Eigen::Index r = 0; r < d_input->rows(); ++r)
                d_input->row(r) *= net.input_scale[static_cast<std::size_t>(r)];
    }
}

void fit_input_standardization(DecoderMlp& net, const std::vector<std::vector<double>>& features) {
    const auto n = static_cast<std::size_t>(net.inputs());
    net.input_shift.assign(n, 0.0);
    net.input_scale.assign(n, 1.0);
    if (features.empty()) return;
    for (std::size_t i = 0; i < n; ++i) {
        double m = 0.0;
        for (const auto& f : features) m += f.at(i);
        m /= static_cast<double>(features.size());
        double v = 0.0;
        for (const auto& f : features) v += (f[i] - m) * (f[i] - m);
        v /= static_cast<double>(features.size());
        net.input_shift[i] = m;
        net.input_scale[i] = v > 0.0 ? 1.0 / std::sqrt(v) : 1.0;
    }
}

void ReconLossConfig::validate() const {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw Error("reconstruction loss: gamma must lie in [0, 1]");
    if (!(berhu_fraction > 0.0)) throw Error("reconstruction loss: BerHu fraction must be > 0");
    if (!(temperature > 0.0)) throw Error("reconstruction loss: temperature must be > 0");
}

double berhu(double e, double c) {
    const double a = std::abs(e);
    if (a <= c) return a;
    return (e * e + c * c) / (2.0 * c);
}

double loss_structural(std::span<const double> recon, std::span<const double> truth, StructuralLoss kind, double c,
                       std::vector<double>* grad) {
    if (recon.size() != truth.size()) throw ShapeError("structural loss: image sizes differ");
    if (recon.empty()) return 0.0;
    const double n = static_cast<double>(recon.size());
    if (grad) grad->assign(recon.size(), 0.0);
    double sum = 0.0;
    for (std::size_t i = 0; i < recon.size(); ++i) {
        const double e = recon[i] - truth[i];
        const double a = std::abs(e);
        const double sgn = e > 0.0 ? 1.0 : (e < 0.0 ? -1.0 : 0.0);
        if (kind == StructuralLoss::mae || a <= c) {
            sum += a;
            if (grad) (*grad)[i] = sgn / n;
        } else {
            sum += (e * e + c * c) / (2.0 * c);
            if (grad) (*grad)[i] = e / (c * n);
        }
    }
    return sum / n;
}

double loss_structural(const ObjectImage& recon, const ObjectImage& truth, const ReconLossConfig& cfg) {
    require_same_shape(recon.amplitude, truth.amplitude, "structural loss");
    double emax = 0.0;
    for (std::size_t i = 0; i < recon.amplitude.size(); ++i)
        emax = std::max(emax, std::abs(recon.amplitude[i] - truth.amplitude[i]));
    return loss_structural(recon.amplitude.span(), truth.amplitude.span(), cfg.structural, cfg.berhu_fraction * emax);
}

std::vector<double> decoder_features(const WavelengthPlan& plan, std::span<const double> raw) {
    const auto sc = aggregate_scores(plan, std::vector<double>(raw.begin(), raw.end()));
    if (plan.mode != EncodingMode::differential && !(std::accumulate(sc.s.begin(), sc.s.end(), 0.0) > 0.0))
        return std::vector<double>(static_cast<std::size_t>(plan.class_count), 1.0 / plan.class_count);
    return normalized_scores(sc);
}

ScoreSet compute_scores(const OpticalEngine& engine, const ImageSet& set, const ObjectEncoder& encoder) {
    const auto ev = evaluate_optical(engine, set, encoder);
    ScoreSet out{engine.model().plan, {}};
    out.samples.reserve(ev.samples.size());
    for (const auto& s : ev.samples) {
        ScoreSample ss;
        ss.label = s.label;
        ss.optical_class = s.predicted;
        ss.raw = s.raw;
        ss.features = decoder_features(out.plan, s.raw);
        out.samples.push_back(std::move(ss));
    }
    return out;
}

std::vector<double> target_image(const ObjectEncoder& encoder, std::span<const float> image) {
    const auto& e = encoder.encoding();
    std::vector<double> t(image.size());
    for (std::size_t i = 0; i < image.size(); ++i)
        t[i] = e.binarize ? (image[i] >= e.threshold ? 1.0 : 0.0) : std::clamp(static_cast<double>(image[i]), 0.0, 1.0);
    return t;
}

std::string to_jsonl(const DecoderEpochRecord& r) {
    nlohmann::json j;
    j["epoch"] = r.epoch;
    j["loss"] = r.loss;
    j["loss_structural"] = r.structural;
    j["loss_inference"] = r.inference;
    j["accuracy"] = r.accuracy;
    return j.dump();
}

void DecoderTrainConfig::validate() const {
    if (epochs < 0) throw Error("decoder training: epochs must be >= 0");
    if (batch < 1) throw Error("decoder training: batch must be >= 1");
    adam.validate();
    recon.validate();
}

ReconBatchLoss reconstruction_batch_loss(const DecoderMlp& net, const OpticalEngine& engine, EngineWorkspace& ws,
                                         const ObjectEncoder& encoder, const MatrixXd& x, const MatrixXd& truth,
                                         std::span<const int> labels, const ReconLossConfig& cfg,
                                         std::vector<double>* grad, std::optional<double> berhu_c) {
    const Eigen::Index B = x.cols();
    const int P = net.outputs();
    if (truth.rows() != P || truth.cols() != B || labels.size() != static_cast<std::size_t>(B))
        throw ShapeError("reconstruction loss: batch shapes disagree");
    const bool coupled = cfg.gamma < 1.0;
    const double gamma = cfg.gamma;
    const LossWeights lw{0.0, 0.0, cfg.temperature};

    MlpCache cache;
    const MatrixXd y = mlp_forward_batch(net, x, &cache);
    const double c = berhu_c ? *berhu_c : cfg.berhu_fraction * (y - truth).cwiseAbs().maxCoeff();
    ReconBatchLoss out;
    MatrixXd dy(P, B);
    std::vector<double> g;
    const double inv_b = 1.0 / static_cast<double>(B);
    for (Eigen::Index j = 0; j < B; ++j) {
        const std::span<const double> col(y.col(j).data(), static_cast<std::size_t>(P));
        const double ls =
            loss_structural(col, std::span<const double>(truth.col(j).data(), static_cast<std::size_t>(P)),
                            cfg.structural, c, &g);
        out.structural += ls * inv_b;
        out.loss += gamma * ls * inv_b;
        for (int r = 0; r < P; ++r) dy(r, j) = gamma * g[static_cast<std::size_t>(r)] * inv_b;
        if (coupled) {
            const int label = labels[static_cast<std::size_t>(j)];
            const ObjectImage obj = encoder.encode_amplitude(col);
            const BackwardResult br = backward(engine, ws, obj.amplitude, label, lw, true);
            out.inference += br.loss.inference * inv_b;
            out.loss += (1.0 - gamma) * br.loss.inference * inv_b;
            if (classify(br.scores) == label) ++out.optical_correct;
            const auto gi = encoder.pullback(*br.grads.object);
            for (int r = 0; r < P; ++r) dy(r, j) += (1.0 - gamma) * gi[static_cast<std::size_t>(r)] * inv_b;
        }
    }
    if (grad) mlp_backward(net, cache, dy, *grad);
    return out;
}

DecoderTrainResult train_reconstructor(const DecoderMlp& net, const DiffractiveModel& frozen, const ImageSet& train_set,
                                       const ObjectEncoder& encoder, const DecoderTrainConfig& cfg,
                                       const ScoreSet* scores) {
    cfg.validate();
    net.validate();
    if (net.head != DecoderHead::reconstruction) throw Error("train_reconstructor: decoder has a classification head");
    if (net.inputs() != frozen.plan.class_count)
        throw Error("train_reconstructor: decoder input width does not match the model's class count");
    if (net.outputs() != encoder.rows() * encoder.cols())
        throw Error("train_reconstructor: decoder output size does not match the image size");
    if (train_set.size() == 0) throw Error("train_reconstructor: empty training set");

    OpticalEngine engine(frozen);
    ScoreSet local;
    if (!scores) {
        local = compute_scores(engine, train_set, encoder);
        scores = &local;
    }
    if (scores->plan != frozen.plan || scores->samples.size() != train_set.size())
        throw Error("train_reconstructor: score set does not match the frozen model and dataset");

    DecoderTrainResult result{net, {}};
    if (result.net.input_shift.empty()) {
        std::vector<std::vector<double>> feats;
        for (const auto& s : scores->samples) feats.push_back(s.features);
        fit_input_standardization(result.net, feats);
    }
    const bool coupled = cfg.recon.gamma < 1.0;
    auto ws = engine.make_workspace();

    std::mt19937_64 rng(cfg.seed);
    AdamState adam;
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const int C = net.inputs();
    const int P = net.outputs();
    std::vector<double> grad;
    std::int64_t iteration = 0;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        DecoderEpochRecord rec;
        rec.epoch = epoch;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
            const auto B = static_cast<Eigen::Index>(stop - start);
            MatrixXd x(C, B);
            MatrixXd truth(P, B);
            for (Eigen::Index j = 0; j < B; ++j) {
                const std::size_t idx = order[start + static_cast<std::size_t>(j)];
                const auto& f = scores->samples[idx].features;
                for (int r = 0; r < C; ++r) x(r, j) = f[static_cast<std::size_t>(r)];
                const auto t = target_image(encoder, train_set.image(idx));
                for (int r = 0; r < P; ++r) truth(r, j) = t[static_cast<std::size_t>(r)];
            }
            std::vector<int> labels(static_cast<std::size_t>(B));
            for (Eigen::Index j = 0; j < B; ++j)
                labels[static_cast<std::size_t>(j)] = train_set.labels[order[start + static_cast<std::size_t>(j)]];
            const ReconBatchLoss bl =
                reconstruction_batch_loss(result.net, engine, ws, encoder, x, truth, labels, cfg.recon, &grad);
            rec.loss += bl.loss * static_cast<double>(B);
            rec.structural += bl.structural * static_cast<double>(B);
            rec.inference += bl.inference * static_cast<double>(B);
            correct += bl.optical_correct;
            if (!std::isfinite(rec.loss)) throw DivergenceError("train_reconstructor: non-finite loss", iteration);
            adam_step(result.net.params, grad, adam, cfg.adam);
            ++iteration;
        }
        const double n = static_cast<double>(order.size());
        rec.loss /= n;
        rec.structural /= n;
        rec.inference /= n;
        rec.accuracy = coupled ? static_cast<double>(correct) / n : 0.0;
        if (cfg.on_epoch) cfg.on_epoch(rec);
        result.history.push_back(rec);
    }
    return result;
}

DecoderTrainResult train_classifier(const DecoderMlp& net, const ScoreSet& train_scores, const DecoderTrainConfig& cfg) {
    cfg.validate();
    net.validate();
    if (net.head != DecoderHead::classification) throw Error("train_classifier: decoder has a reconstruction head");
    if (train_scores.samples.empty()) throw Error("train_classifier: empty training set");
    const int C = net.inputs();
    const int K = net.outputs();
    for (const auto& s : train_scores.samples) {
        if (s.features.size() != static_cast<std::size_t>(C))
            throw Error("train_classifier: feature length does not match decoder input");
        if (s.label < 0 || s.label >= K) throw Error("train_classifier: label out of range");
    }

    DecoderTrainResult result{net, {}};
    if (result.net.input_shift.empty()) {
        std::vector<std::vector<double>> feats;
        for (const auto& s : train_scores.samples) feats.push_back(s.features);
        fit_input_standardization(result.net, feats);
    }
    std::mt19937_64 rng(cfg.seed);
    AdamState adam;
    std::vector<std::size_t> order(train_scores.samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> grad;
    std::int64_t iteration = 0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        DecoderEpochRecord rec;
        rec.epoch = epoch;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
            const auto B = static_cast<Eigen::Index>(stop - start);
            MatrixXd x(C, B);
            for (Eigen::Index j = 0; j < B; ++j) {
                const auto& f = train_scores.samples[order[start + static_cast<std::size_t>(j)]].features;
                for (int r = 0; r < C; ++r) x(r, j) = f[static_cast<std::size_t>(r)];
            }
            MlpCache cache;
            const MatrixXd logits = mlp_forward_batch(result.net, x, &cache);
            MatrixXd dl(K, B);
            std::vector<double> g;
            for (Eigen::Index j = 0; j < B; ++j) {
                const int label = train_scores.samples[order[start + static_cast<std::size_t>(j)]].label;
                const std::span<const double> col(logits.col(j).data(), static_cast<std::size_t>(K));
                rec.loss += softmax_cross_entropy(col, label, &g);
                if (std::max_element(col.begin(), col.end()) - col.begin() == label) ++correct;
                for (int r = 0; r < K; ++r) dl(r, j) = g[static_cast<std::size_t>(r)] / static_cast<double>(B);
            }
            if (!std::isfinite(rec.loss)) throw DivergenceError("train_classifier: non-finite loss", iteration);
            mlp_backward(result.net, cache, dl, grad);
            adam_step(result.net.params, grad, adam, cfg.adam);
            ++iteration;
        }
        rec.loss /= static_cast<double>(order.size());
        rec.inference = rec.loss;
        rec.accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
        if (cfg.on_epoch) cfg.on_epoch(rec);
        result.history.push_back(rec);
    }
    return result;
}

FeedbackResult feedback_classify(const DecoderMlp& net, const OpticalEngine& engine, const ObjectEncoder& encoder,
                                 std::span<const double> raw, EngineWorkspace& ws) {
    const auto& plan = engine.model().plan;
    if (raw.size() != plan.size()) throw Error("feedback: score length does not match plan");
    if (net.head != DecoderHead::reconstruction) throw Error("feedback: decoder has a classification head");
    FeedbackResult out;
    out.reconstruction = mlp_forward(net, decoder_features(plan, raw));
    const ObjectImage obj = encoder.encode_amplitude(out.reconstruction);
    const auto powers = engine.forward(obj.amplitude, {}, ws);
    std::vector<double> r(powers.size());
    for (std::size_t k = 0; k < powers.size(); ++k) r[k] = powers[k].detected;
    out.scores = aggregate_scores(plan, std::move(r));
    out.predicted = classify(out.scores);
    return out;
}

FeedbackResult feedback_classify(const DecoderMlp& net, const DiffractiveModel& model, const ObjectEncoder& encoder,
                                 std::span<const double> raw) {
    OpticalEngine engine(model);
    auto ws = engine.make_workspace();
    return feedback_classify(net, engine, encoder, raw, ws);
}

int classify_electronic(const DecoderMlp& net, std::span<const double> features) {
    const auto logits = mlp_forward(net, features);
    return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

}  // namespace diffspec
