#include "diffspec/config.hpp"

#include <cstdlib>
#include <fstream>
#include <initializer_list>
#include <set>

namespace diffspec {

using nlohmann::json;

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : j.items())
        if (!ok.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
}

template <class T>
void get(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

json opt_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_from(const json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

json to_json(const ModelInit& m) { return {{"h_base", m.h_base}, {"h_range", m.h_range}, {"latent_spread", m.latent_spread}}; }

ModelInit init_from_json(const json& j) {
    check_keys(j, {"h_base", "h_range", "latent_spread"}, "init");
    ModelInit m;
    get(j, "h_base", m.h_base);
    get(j, "h_range", m.h_range);
    get(j, "latent_spread", m.latent_spread);
    return m;
}

json to_json(const ObjectEncoding& e) {
    return {{"window", e.window}, {"binarize", e.binarize}, {"threshold", e.threshold}};
}

ObjectEncoding encoding_from_json(const json& j) {
    check_keys(j, {"window", "binarize", "threshold"}, "encoding");
    ObjectEncoding e;
    get(j, "window", e.window);
    get(j, "binarize", e.binarize);
    get(j, "threshold", e.threshold);
    return e;
}

json to_json(const LossWeights& w) {
    return {{"alpha", w.alpha}, {"beta", w.beta}, {"temperature", w.temperature}};
}

LossWeights weights_from_json(const json& j) {
    check_keys(j, {"alpha", "beta", "temperature"}, "weights");
    LossWeights w;
    get(j, "alpha", w.alpha);
    get(j, "beta", w.beta);
    get(j, "temperature", w.temperature);
    return w;
}

}  // namespace

std::filesystem::path DatasetSpec::resolved_dir() const {
    if (!dir.empty()) return dir;
    if (const char* env = std::getenv("MNIST_DIR"); env && *env) return env;
    return "/root/data/mnist";
}

WavelengthPlan PlanSpec::build() const {
    return WavelengthPlan::uniform(class_count, mode, wavelengths_per_class, lambda_min, lambda_max);
}

json to_json(const AdamConfig& a) {
    return {{"lr", a.lr}, {"beta1", a.beta1}, {"beta2", a.beta2}, {"eps", a.eps}};
}

AdamConfig adam_from_json(const json& j) {
    check_keys(j, {"lr", "beta1", "beta2", "eps"}, "adam");
    AdamConfig a;
    get(j, "lr", a.lr);
    get(j, "beta1", a.beta1);
    get(j, "beta2", a.beta2);
    get(j, "eps", a.eps);
    return a;
}

json to_json(const ReconLossConfig& r) {
    return {{"gamma", r.gamma},
            {"structural", to_string(r.structural)},
            {"berhu_fraction", r.berhu_fraction},
            {"temperature", r.temperature}};
}

ReconLossConfig recon_from_json(const json& j) {
    check_keys(j, {"gamma", "structural", "berhu_fraction", "temperature"}, "recon");
    ReconLossConfig r;
    get(j, "gamma", r.gamma);
    if (j.contains("structural")) r.structural = structural_loss_from_string(j.at("structural").get<std::string>());
    get(j, "berhu_fraction", r.berhu_fraction);
    get(j, "temperature", r.temperature);
    return r;
}

json to_json(const Geometry& g) {
    json det = {{"width", g.detector.width},
                {"center_x", g.detector.center_x},
                {"center_y", g.detector.center_y},
                {"guard_band", g.detector.guard_band}};
    json slab = g.slab ? json{{"thickness", g.slab->thickness}, {"n", g.slab->n}} : json(nullptr);
    return {{"ny", g.ny},
            {"nx", g.nx},
            {"pitch", g.pitch},
            {"spacings", g.spacings},
            {"input_aperture_width", g.input_aperture_width},
            {"output_aperture_width", opt_number(g.output_aperture_width)},
            {"detector", det},
            {"slab", slab},
            {"propagation", {{"pad_factor", g.propagation.pad_factor}, {"anti_alias", g.propagation.anti_alias}}}};
}

Geometry geometry_from_json(const json& j) {
    check_keys(j,
               {"ny", "nx", "pitch", "spacings", "input_aperture_width", "output_aperture_width", "detector", "slab",
                "propagation"},
               "geometry");
    Geometry g;
    get(j, "ny", g.ny);
    get(j, "nx", g.nx);
    get(j, "pitch", g.pitch);
    get(j, "spacings", g.spacings);
    get(j, "input_aperture_width", g.input_aperture_width);
    if (j.contains("output_aperture_width")) g.output_aperture_width = opt_from(j.at("output_aperture_width"));
    if (j.contains("detector")) {
        const json& d = j.at("detector");
        check_keys(d, {"width", "center_x", "center_y", "guard_band"}, "geometry.detector");
        get(d, "width", g.detector.width);
        get(d, "center_x", g.detector.center_x);
        get(d, "center_y", g.detector.center_y);
        get(d, "guard_band", g.detector.guard_band);
    }
    if (j.contains("slab")) {
        const json& s = j.at("slab");
        if (s.is_null()) {
            g.slab.reset();
        } else {
            check_keys(s, {"thickness", "n"}, "geometry.slab");
            SiliconSlab slab;
            get(s, "thickness", slab.thickness);
            get(s, "n", slab.n);
            g.slab = slab;
        }
    }
    if (j.contains("propagation")) {
        const json& p = j.at("propagation");
        check_keys(p, {"pad_factor", "anti_alias"}, "geometry.propagation");
        get(p, "pad_factor", g.propagation.pad_factor);
        get(p, "anti_alias", g.propagation.anti_alias);
    }
    return g;
}

json to_json(const WavelengthPlan& p) {
    return {{"class_count", p.class_count},
            {"wavelengths_per_class", p.wavelengths_per_class},
            {"mode", to_string(p.mode)},
            {"wavelengths", p.wavelengths}};
}

WavelengthPlan plan_from_json(const json& j) {
    check_keys(j, {"class_count", "wavelengths_per_class", "mode", "wavelengths"}, "plan");
    WavelengthPlan p;
    p.class_count = j.at("class_count").get<int>();
    p.wavelengths_per_class = j.at("wavelengths_per_class").get<int>();
    p.mode = encoding_mode_from_string(j.at("mode").get<std::string>());
    p.wavelengths = j.at("wavelengths").get<std::vector<double>>();
    p.validate();
    return p;
}

DispersionModel resolve_dispersion(const std::string& source, double lambda_min) {
    if (source == "builtin:polymer") return DispersionModel::default_polymer(lambda_min);
    return load_dispersion_table(source);
}

void ExperimentConfig::validate() const {
    geometry.validate();
    plan.build().validate();
    training.adam.validate();
    training.weights.validate();
    if (!(training.lr_final_fraction > 0.0 && training.lr_final_fraction <= 1.0))
        throw ConfigError("training: lr_final_fraction must be in (0, 1]");
    if (training.epochs < 0 || training.batch < 1 || training.eval_every < 1)
        throw ConfigError("training: epochs must be >= 0, batch and eval_every >= 1");
    if (vaccination.enabled) vaccination.plan.validate(geometry.layer_count());
    decoder.adam.validate();
    decoder.recon.validate();
    if (decoder.epochs < 0 || decoder.pretrain_epochs < 0 || decoder.batch < 1)
        throw ConfigError("decoder: epochs must be >= 0 and batch >= 1");
    if (decoder.hidden1 < 1 || decoder.hidden2 < 1) throw ConfigError("decoder: hidden widths must be positive");
    if (!(joint.xi >= 0.0 && joint.xi <= 1.0)) throw ConfigError("joint: xi must lie in [0, 1]");
    if (joint.epochs < 0 || joint.batch < 1) throw ConfigError("joint: epochs must be >= 0 and batch >= 1");
    joint.optical_adam.validate();
    joint.decoder_adam.validate();
    if (sweep.trials < 1) throw ConfigError("sweep: trials must be >= 1");
    for (double d : sweep.deltas)
        if (!(d >= 0.0)) throw ConfigError("sweep: deltas must be >= 0");
    if (!(eval.noise_sigma >= 0.0)) throw ConfigError("eval: noise_sigma must be >= 0");
    if (dataset.kind == DatasetKind::emnist_letters && plan.class_count != 26)
        throw ConfigError("EMNIST letters need a 26-class plan");
    if (dataset.kind == DatasetKind::mnist && plan.class_count != 10) throw ConfigError("MNIST needs a 10-class plan");
}

json to_json(const ExperimentConfig& c) {
    json j;
    j["dataset"] = {{"kind", to_string(c.dataset.kind)},
                    {"dir", c.dataset.dir},
                    {"train_images", c.dataset.train_images},
                    {"train_labels", c.dataset.train_labels},
                    {"test_images", c.dataset.test_images},
                    {"test_labels", c.dataset.test_labels},
                    {"train_size", c.dataset.train_size},
                    {"test_size", c.dataset.test_size}};
    j["geometry"] = to_json(c.geometry);
    j["plan"] = {{"class_count", c.plan.class_count},
                 {"mode", to_string(c.plan.mode)},
                 {"wavelengths_per_class", c.plan.wavelengths_per_class},
                 {"lambda_min", c.plan.lambda_min},
                 {"lambda_max", c.plan.lambda_max}};
    j["dispersion"] = c.dispersion;
    j["init"] = to_json(c.init);
    j["encoding"] = to_json(c.encoding);
    j["training"] = {{"epochs", c.training.epochs},
                     {"batch", c.training.batch},
                     {"adam", to_json(c.training.adam)},
                     {"lr_final_fraction", c.training.lr_final_fraction},
                     {"weights", to_json(c.training.weights)},
                     {"eval_every", c.training.eval_every}};
    j["vaccination"] = {{"enabled", c.vaccination.enabled},
                        {"delta", c.vaccination.plan.delta},
                        {"layers", c.vaccination.plan.layers}};
    j["decoder"] = {{"head", to_string(c.decoder.head)},
                    {"hidden1", c.decoder.hidden1},
                    {"hidden2", c.decoder.hidden2},
                    {"pretrain_epochs", c.decoder.pretrain_epochs},
                    {"epochs", c.decoder.epochs},
                    {"batch", c.decoder.batch},
                    {"adam", to_json(c.decoder.adam)},
                    {"recon", to_json(c.decoder.recon)}};
    j["joint"] = {{"xi", c.joint.xi},
                  {"back_end", to_string(c.joint.back_end)},
                  {"epochs", c.joint.epochs},
                  {"batch", c.joint.batch},
                  {"optical_adam", to_json(c.joint.optical_adam)},
                  {"decoder_adam", to_json(c.joint.decoder_adam)}};
    j["sweep"] = {{"deltas", c.sweep.deltas}, {"trials", c.sweep.trials}, {"protocol", to_string(c.sweep.protocol)}};
    j["eval"] = {{"noise_sigma", c.eval.noise_sigma}, {"spectra_samples", c.eval.spectra_samples}};
    j["model_checkpoint"] = c.model_checkpoint;
    j["decoder_checkpoint"] = c.decoder_checkpoint;
    j["seed"] = c.seed;
    j["output_dir"] = c.output_dir;
    return j;
}

ExperimentConfig config_from_json(const json& j) {
    try {
        check_keys(j,
                   {"dataset", "geometry", "plan", "dispersion", "init", "encoding", "training", "vaccination", "decoder",
                    "joint", "sweep", "eval", "model_checkpoint", "decoder_checkpoint", "seed", "output_dir"},
                   "config");
        ExperimentConfig c;
        if (j.contains("dataset")) {
            const json& d = j.at("dataset");
            check_keys(d,
                       {"kind", "dir", "train_images", "train_labels", "test_images", "test_labels", "train_size",
                        "test_size"},
                       "dataset");
            if (d.contains("kind")) c.dataset.kind = dataset_kind_from_string(d.at("kind").get<std::string>());
            if (c.dataset.kind == DatasetKind::emnist_letters) {
                c.dataset.train_images = "emnist-letters-train-images-idx3-ubyte";
                c.dataset.train_labels = "emnist-letters-train-labels-idx1-ubyte";
                c.dataset.test_images = "emnist-letters-test-images-idx3-ubyte";
                c.dataset.test_labels = "emnist-letters-test-labels-idx1-ubyte";
                c.plan.class_count = 26;
            }
            get(d, "dir", c.dataset.dir);
            get(d, "train_images", c.dataset.train_images);
            get(d, "train_labels", c.dataset.train_labels);
            get(d, "test_images", c.dataset.test_images);
            get(d, "test_labels", c.dataset.test_labels);
            get(d, "train_size", c.dataset.train_size);
            get(d, "test_size", c.dataset.test_size);
        }
        if (j.contains("geometry")) c.geometry = geometry_from_json(j.at("geometry"));
        if (j.contains("plan")) {
            const json& p = j.at("plan");
            check_keys(p, {"class_count", "mode", "wavelengths_per_class", "lambda_min", "lambda_max"}, "plan");
            get(p, "class_count", c.plan.class_count);
            if (p.contains("mode")) c.plan.mode = encoding_mode_from_string(p.at("mode").get<std::string>());
            if (c.plan.mode == EncodingMode::differential) c.plan.wavelengths_per_class = 2;
            get(p, "wavelengths_per_class", c.plan.wavelengths_per_class);
            get(p, "lambda_min", c.plan.lambda_min);
            get(p, "lambda_max", c.plan.lambda_max);
        }
        get(j, "dispersion", c.dispersion);
        if (j.contains("init")) c.init = init_from_json(j.at("init"));
        if (j.contains("encoding")) c.encoding = encoding_from_json(j.at("encoding"));
        if (j.contains("training")) {
            const json& t = j.at("training");
            check_keys(t, {"epochs", "batch", "adam", "lr_final_fraction", "weights", "eval_every"}, "training");
            get(t, "epochs", c.training.epochs);
            get(t, "batch", c.training.batch);
            if (t.contains("adam")) c.training.adam = adam_from_json(t.at("adam"));
            if (t.contains("weights")) c.training.weights = weights_from_json(t.at("weights"));
            get(t, "lr_final_fraction", c.training.lr_final_fraction);
            get(t, "eval_every", c.training.eval_every);
        }
        if (j.contains("vaccination")) {
            const json& v = j.at("vaccination");
            check_keys(v, {"enabled", "delta", "layers"}, "vaccination");
            get(v, "enabled", c.vaccination.enabled);
            get(v, "delta", c.vaccination.plan.delta);
            get(v, "layers", c.vaccination.plan.layers);
        }
        if (j.contains("decoder")) {
            const json& d = j.at("decoder");
            check_keys(d, {"head", "hidden1", "hidden2", "pretrain_epochs", "epochs", "batch", "adam", "recon"}, "decoder");
            if (d.contains("head")) c.decoder.head = decoder_head_from_string(d.at("head").get<std::string>());
            get(d, "hidden1", c.decoder.hidden1);
            get(d, "hidden2", c.decoder.hidden2);
            get(d, "pretrain_epochs", c.decoder.pretrain_epochs);
            get(d, "epochs", c.decoder.epochs);
            get(d, "batch", c.decoder.batch);
            if (d.contains("adam")) c.decoder.adam = adam_from_json(d.at("adam"));
            if (d.contains("recon")) c.decoder.recon = recon_from_json(d.at("recon"));
        }
        if (j.contains("joint")) {
            const json& d = j.at("joint");
            check_keys(d, {"xi", "back_end", "epochs", "batch", "optical_adam", "decoder_adam"}, "joint");
            get(d, "xi", c.joint.xi);
            if (d.contains("back_end")) c.joint.back_end = back_end_from_string(d.at("back_end").get<std::string>());
            get(d, "epochs", c.joint.epochs);
            get(d, "batch", c.joint.batch);
            if (d.contains("optical_adam")) c.joint.optical_adam = adam_from_json(d.at("optical_adam"));
            if (d.contains("decoder_adam")) c.joint.decoder_adam = adam_from_json(d.at("decoder_adam"));
        }
        if (j.contains("sweep")) {
            const json& s = j.at("sweep");
            check_keys(s, {"deltas", "trials", "protocol"}, "sweep");
            get(s, "deltas", c.sweep.deltas);
            get(s, "trials", c.sweep.trials);
            if (s.contains("protocol")) c.sweep.protocol = sweep_protocol_from_string(s.at("protocol").get<std::string>());
        }
        if (j.contains("eval")) {
            const json& e = j.at("eval");
            check_keys(e, {"noise_sigma", "spectra_samples"}, "eval");
            get(e, "noise_sigma", c.eval.noise_sigma);
            get(e, "spectra_samples", c.eval.spectra_samples);
        }
        get(j, "model_checkpoint", c.model_checkpoint);
        get(j, "decoder_checkpoint", c.decoder_checkpoint);
        if (!j.contains("seed")) throw ConfigError("config: 'seed' is required");
        get(j, "seed", c.seed);
        get(j, "output_dir", c.output_dir);
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

void save_config(const std::filesystem::path& path, const ExperimentConfig& c) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write config " + path.string());
    out << to_json(c).dump(2) << "\n";
}

}  // namespace diffspec
