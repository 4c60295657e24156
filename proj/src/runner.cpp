#include "diffspec/runner.hpp"

#include <fstream>
#include <sstream>

namespace diffspec {

namespace {

std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t stream) { return seed * 1000003ULL + stream; }

void write_jsonl(const std::filesystem::path& path, const std::vector<std::string>& lines) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& l : lines) out << l << "\n";
}

/// Line-delimited history written as epochs complete, so long runs can be followed.
class JsonlLog {
public:
    explicit JsonlLog(const std::filesystem::path& path) : out_(path) {
        if (!out_) throw Error("cannot write " + path.string());
    }
    void add(const std::string& line) { out_ << line << '\n' << std::flush; }

private:
    std::ofstream out_;
};

ConfusionMatrix optical_confusion(const OpticalEvaluation& ev, int classes) {
    ConfusionMatrix m(classes);
    for (const auto& s : ev.samples) m.add(s.label, s.predicted);
    return m;
}

void add_optical(RunReport& r, const OpticalEvaluation& ev, int classes) {
    r.optical = optical_confusion(ev, classes);
    r.scalars["optical_accuracy"] = r.optical->accuracy();
    r.scalars["eta_mean"] = ev.eta_mean;
    r.scalars["eta_std"] = ev.eta_std;
    r.scalars["test_samples"] = static_cast<double>(ev.samples.size());
}

RunReport cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& out) {
    const Datasets data = load_datasets(cfg.dataset);
    const ObjectEncoder encoder(cfg.geometry, cfg.encoding, data.train.rows, data.train.cols);
    JsonlLog log(out / "history.jsonl");
    TrainConfig tc = training_config(cfg);
    tc.on_epoch = [&](const EpochRecord& r) { log.add(to_jsonl(r)); };
    const TrainResult tr = train(initial_model(cfg), data.train, encoder, tc, &data.test);
    save_model(out / "model.ckpt", tr.model, to_json(cfg));

    RunReport r;
    r.command = "train";
    const auto ev = evaluate_optical(tr.model, data.test, encoder);
    add_optical(r, ev, tr.model.plan.class_count);
    for (std::size_t i = 0; i < ev.samples.size(); ++i)
        r.samples.push_back({i, ev.samples[i].label, ev.samples[i].predicted, std::nullopt, std::nullopt});
    if (!tr.history.empty()) {
        r.scalars["final_loss"] = tr.history.back().loss;
        r.scalars["final_train_accuracy"] = tr.history.back().train_accuracy;
    }
    r.scalars["epochs"] = tc.epochs;
    return r;
}

RunReport cmd_eval(const ExperimentConfig& cfg, const std::filesystem::path&) {
    const Datasets data = load_datasets(cfg.dataset);
    const ObjectEncoder encoder(cfg.geometry, cfg.encoding, data.test.rows, data.test.cols);
    const DiffractiveModel model = resolve_model(cfg);
    const auto ev = evaluate_optical(model, data.test, encoder);
    RunReport r;
    r.command = "eval";
    add_optical(r, ev, model.plan.class_count);
    for (std::size_t i = 0; i < ev.samples.size(); ++i)
        r.samples.push_back({i, ev.samples[i].label, ev.samples[i].predicted, std::nullopt, std::nullopt});
    if (cfg.eval.noise_sigma > 0.0) {
        std::mt19937_64 rng(sub_seed(cfg.seed, 5));
        ConfusionMatrix noisy(model.plan.class_count);
        for (const auto& s : ev.samples)
            noisy.add(s.label, classify(aggregate_scores(model.plan, apply_power_noise(s.raw, cfg.eval.noise_sigma, rng))));
        r.scalars["noisy_accuracy"] = noisy.accuracy();
        r.scalars["noise_sigma"] = cfg.eval.noise_sigma;
        r.scalars["decision_match"] = 0.0;
        std::mt19937_64 rng2(sub_seed(cfg.seed, 5));
        std::int64_t match = 0;
        for (const auto& s : ev.samples)
            if (classify(aggregate_scores(model.plan, apply_power_noise(s.raw, cfg.eval.noise_sigma, rng2))) == s.predicted)
                ++match;
        r.scalars["decision_match"] = static_cast<double>(match) / static_cast<double>(std::max<std::size_t>(1, ev.samples.size()));
    }
    return r;
}

RunReport cmd_decode(const ExperimentConfig& cfg, const std::filesystem::path& out) {
    const Datasets data = load_datasets(cfg.dataset);
    const ObjectEncoder encoder(cfg.geometry, cfg.encoding, data.train.rows, data.train.cols);
    const DiffractiveModel model = resolve_model(cfg);
    const OpticalEngine engine(model);
    const ScoreSet train_scores = compute_scores(engine, data.train, encoder);
    std::vector<DecoderEpochRecord> history;
    std::vector<std::string> lines;
    RunReport r;
    if (cfg.decoder.head == DecoderHead::classification) {
        DecoderTrainConfig dc;
        dc.epochs = cfg.decoder.epochs;
        dc.batch = cfg.decoder.batch;
        dc.adam = cfg.decoder.adam;
        dc.seed = sub_seed(cfg.seed, 3);
        dc.on_epoch = [&](const DecoderEpochRecord& e) { lines.push_back(to_jsonl(e)); };
        const DecoderMlp net0 = make_decoder(DecoderHead::classification, model.plan.class_count, model.plan.class_count,
                                             sub_seed(cfg.seed, 2), cfg.decoder.hidden1, cfg.decoder.hidden2);
        const auto res = train_classifier(net0, train_scores, dc);
        save_decoder(out / "decoder.ckpt", res.net, to_json(cfg));
        const ScoreSet test_scores = compute_scores(engine, data.test, encoder);
        r.optical = ConfusionMatrix(model.plan.class_count);
        r.electronic = ConfusionMatrix(model.plan.class_count);
        for (std::size_t i = 0; i < test_scores.samples.size(); ++i) {
            const auto& s = test_scores.samples[i];
            const int e = classify_electronic(res.net, s.features);
            r.optical->add(s.label, s.optical_class);
            r.electronic->add(s.label, e);
            r.samples.push_back({i, s.label, s.optical_class, std::nullopt, e});
        }
        r.scalars["optical_accuracy"] = r.optical->accuracy();
        r.scalars["electronic_accuracy"] = r.electronic->accuracy();
    } else {
        const DecoderMlp net = train_decoder(cfg, model, data.train, encoder, train_scores, &history);
        for (const auto& h : history) lines.push_back(to_jsonl(h));
        save_decoder(out / "decoder.ckpt", net, to_json(cfg));
        r = feedback_report(model, net, data.test, encoder);
    }
    write_jsonl(out / "decoder_history.jsonl", lines);
    r.command = "decode";
    return r;
}

RunReport cmd_feedback(const ExperimentConfig& cfg, const std::filesystem::path&) {
    if (cfg.decoder_checkpoint.empty()) throw ConfigError("feedback: decoder_checkpoint is required");
    const Datasets data = load_datasets(cfg.dataset);
    const ObjectEncoder encoder(cfg.geometry, cfg.encoding, data.test.rows, data.test.cols);
    RunReport r = feedback_report(resolve_model(cfg), load_decoder(cfg.decoder_checkpoint), data.test, encoder);
    r.command = "feedback";
    return r;
}

RunReport cmd_joint(const ExperimentConfig& cfg, const std::filesystem::path& out) {
    const Datasets data = load_datasets(cfg.dataset);
    const ObjectEncoder encoder(cfg.geometry, cfg.encoding, data.train.rows, data.train.cols);
    const DiffractiveModel model = resolve_model(cfg);
    const bool cls = cfg.joint.back_end == BackEnd::classifier;
    const int outputs = cls ? model.plan.class_count : encoder.rows() * encoder.cols();
    const DecoderMlp net0 = make_decoder(cls ? DecoderHead::classification : DecoderHead::reconstruction,
                                         model.plan.class_count, outputs, sub_seed(cfg.seed, 2), cfg.decoder.hidden1,
                                         cfg.decoder.hidden2);
    JsonlLog log(out / "joint_history.jsonl");
    JointConfig jc = joint_config(cfg);
    jc.on_epoch = [&](const JointEpochRecord& e) { log.add(to_jsonl(e)); };
    const JointResult res = joint_train(model, net0, data.train, encoder, jc);
    save_checkpoint(out / "joint.ckpt", Checkpoint{res.model, res.net, to_json(cfg)});
    save_model(out / "model.ckpt", res.model, to_json(cfg));
    save_decoder(out / "decoder.ckpt", res.net, to_json(cfg));

    const JointMetrics m = evaluate_joint(res.model, res.net, data.test, encoder);
    RunReport r;
    r.command = "joint";
    r.optical = ConfusionMatrix(model.plan.class_count);
    if (cls) r.electronic = ConfusionMatrix(model.plan.class_count);
    for (std::size_t i = 0; i < m.samples.size(); ++i) {
        const auto& s = m.samples[i];
        r.optical->add(s.label, s.optical_class);
        if (cls) r.electronic->add(s.label, *s.electronic_class);
        r.samples.push_back({i, s.label, s.optical_class, std::nullopt, s.electronic_class});
    }
    r.scalars["optical_accuracy"] = m.optical_accuracy;
    if (m.electronic_accuracy) r.scalars["electronic_accuracy"] = *m.electronic_accuracy;
    if (m.reconstruction_mae) r.scalars["reconstruction_mae"] = *m.reconstruction_mae;
    r.scalars["eta_mean"] = m.eta_mean;
    r.scalars["eta_std"] = m.eta_std;
    r.scalars["xi"] = cfg.joint.xi;
    return r;
}

RunReport cmd_sweep(const ExperimentConfig& cfg, const std::filesystem::path& out) {
    const Datasets data = load_datasets(cfg.dataset);
    const ObjectEncoder encoder(cfg.geometry, cfg.encoding, data.test.rows, data.test.cols);
    const DiffractiveModel model = resolve_model(cfg);
    const auto pts =
        misalignment_sweep(model, data.test, encoder, cfg.sweep.deltas, cfg.sweep.trials, sub_seed(cfg.seed, 4), cfg.sweep.protocol);
    write_sweep_csv(out / "sweep.csv", pts);
    RunReport r;
    r.command = "sweep";
    for (const auto& p : pts) {
        std::ostringstream k;
        k << "accuracy_at_" << p.delta;
        r.scalars[k.str()] = p.mean_accuracy;
    }
    return r;
}

RunReport cmd_export_spectra(const ExperimentConfig& cfg, const std::filesystem::path& out) {
    const Datasets data = load_datasets(cfg.dataset);
    const ObjectEncoder encoder(cfg.geometry, cfg.encoding, data.test.rows, data.test.cols);
    const DiffractiveModel model = resolve_model(cfg);
    const ImageSet subset = data.test.head(cfg.eval.spectra_samples);
    const auto ev = evaluate_optical(model, subset, encoder);
    write_spectra_csv(out / "spectra.csv", model.plan, ev.samples, ev.samples.size());
    RunReport r;
    r.command = "export-spectra";
    r.scalars["samples"] = static_cast<double>(ev.samples.size());
    r.scalars["rows"] = static_cast<double>(ev.samples.size() * model.plan.size());
    return r;
}

}  // namespace

const std::vector<std::string> kCommands = {"train", "eval", "decode", "feedback", "joint", "sweep", "export-spectra"};

Datasets load_datasets(const DatasetSpec& spec) {
    const auto dir = spec.resolved_dir();
    Datasets d;
    d.train = load_idx(dir / spec.train_images, dir / spec.train_labels, spec.kind, spec.train_size);
    d.test = load_idx(dir / spec.test_images, dir / spec.test_labels, spec.kind, spec.test_size);
    return d;
}

DiffractiveModel initial_model(const ExperimentConfig& cfg) {
    const WavelengthPlan plan = cfg.plan.build();
    auto m = make_model(cfg.geometry, plan, resolve_dispersion(cfg.dispersion, plan.min_wavelength()), cfg.seed, cfg.init);
    m.dispersion_source = cfg.dispersion;
    return m;
}

DiffractiveModel resolve_model(const ExperimentConfig& cfg) {
    if (cfg.model_checkpoint.empty()) return initial_model(cfg);
    return load_model(cfg.model_checkpoint);
}

TrainConfig training_config(const ExperimentConfig& cfg) {
    TrainConfig tc;
    tc.epochs = cfg.training.epochs;
    tc.batch = cfg.training.batch;
    tc.adam = cfg.training.adam;
    tc.lr_final_fraction = cfg.training.lr_final_fraction;
    tc.weights = cfg.training.weights;
    tc.eval_every = cfg.training.eval_every;
    if (cfg.vaccination.enabled) tc.vaccination = cfg.vaccination.plan;
    tc.seed = sub_seed(cfg.seed, 1);
    return tc;
}

JointConfig joint_config(const ExperimentConfig& cfg) {
    JointConfig jc;
    jc.xi = cfg.joint.xi;
    jc.back_end = cfg.joint.back_end;
    jc.epochs = cfg.joint.epochs;
    jc.batch = cfg.joint.batch;
    jc.optical_adam = cfg.joint.optical_adam;
    jc.decoder_adam = cfg.joint.decoder_adam;
    jc.recon = cfg.decoder.recon;
    jc.temperature = cfg.training.weights.temperature;
    jc.seed = sub_seed(cfg.seed, 6);
    return jc;
}

DecoderMlp train_decoder(const ExperimentConfig& cfg, const DiffractiveModel& model, const ImageSet& train,
                         const ObjectEncoder& encoder, const ScoreSet& scores, std::vector<DecoderEpochRecord>* history) {
    DecoderMlp net = make_decoder(DecoderHead::reconstruction, model.plan.class_count, encoder.rows() * encoder.cols(),
                                  sub_seed(cfg.seed, 2), cfg.decoder.hidden1, cfg.decoder.hidden2);
    DecoderTrainConfig dc;
    dc.batch = cfg.decoder.batch;
    dc.adam = cfg.decoder.adam;
    dc.recon = cfg.decoder.recon;
    if (history) dc.on_epoch = [&](const DecoderEpochRecord& e) { history->push_back(e); };
    if (cfg.decoder.pretrain_epochs > 0) {
        DecoderTrainConfig pre = dc;
        pre.epochs = cfg.decoder.pretrain_epochs;
        pre.recon.gamma = 1.0;
        pre.seed = sub_seed(cfg.seed, 7);
        net = train_reconstructor(net, model, train, encoder, pre, &scores).net;
    }
    dc.epochs = cfg.decoder.epochs;
    dc.seed = sub_seed(cfg.seed, 3);
    return train_reconstructor(net, model, train, encoder, dc, &scores).net;
}

RunReport feedback_report(const DiffractiveModel& model, const DecoderMlp& net, const ImageSet& test,
                          const ObjectEncoder& encoder) {
    const OpticalEngine engine(model);
    auto ws = engine.make_workspace();
    const auto ev = evaluate_optical(engine, test, encoder);
    RunReport r;
    r.optical = ConfusionMatrix(model.plan.class_count);
    r.feedback = ConfusionMatrix(model.plan.class_count);
    double mae = 0.0;
    for (std::size_t i = 0; i < ev.samples.size(); ++i) {
        const auto& s = ev.samples[i];
        const FeedbackResult fb = feedback_classify(net, engine, encoder, s.raw, ws);
        mae += loss_structural(fb.reconstruction, target_image(encoder, test.image(i)), StructuralLoss::mae, 0.0);
        r.optical->add(s.label, s.predicted);
        r.feedback->add(s.label, fb.predicted);
        r.samples.push_back({i, s.label, s.predicted, fb.predicted, std::nullopt});
    }
    const FeedbackGain g = feedback_gain(r.samples);
    r.scalars["optical_accuracy"] = r.optical->accuracy();
    r.scalars["feedback_accuracy"] = r.feedback->accuracy();
    r.scalars["corrected"] = static_cast<double>(g.corrected);
    r.scalars["lost"] = static_cast<double>(g.lost);
    r.scalars["gain"] = static_cast<double>(g.gain());
    r.scalars["reconstruction_mae"] = ev.samples.empty() ? 0.0 : mae / static_cast<double>(ev.samples.size());
    r.scalars["eta_mean"] = ev.eta_mean;
    r.scalars["eta_std"] = ev.eta_std;
    return r;
}

RunReport run(const std::string& command, const ExperimentConfig& cfg) {
    cfg.validate();
    const std::filesystem::path out = cfg.output_dir;
    std::filesystem::create_directories(out);
    save_config(out / "config.json", cfg);
    RunReport r;
    if (command == "train")
        r = cmd_train(cfg, out);
    else if (command == "eval")
        r = cmd_eval(cfg, out);
    else if (command == "decode")
        r = cmd_decode(cfg, out);
    else if (command == "feedback")
        r = cmd_feedback(cfg, out);
    else if (command == "joint")
        r = cmd_joint(cfg, out);
    else if (command == "sweep")
        r = cmd_sweep(cfg, out);
    else if (command == "export-spectra")
        r = cmd_export_spectra(cfg, out);
    else
        throw ConfigError("unknown command '" + command + "'");
    r.command = command;
    r.write(out);
    return r;
}

}  // namespace diffspec
