#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "diffspec/decoder.hpp"
#include "diffspec/hybrid.hpp"
#include "diffspec/training.hpp"

namespace diffspec {

class ConfigError : public Error {
public:
    using Error::Error;
};

struct DatasetSpec {
    DatasetKind kind = DatasetKind::mnist;
    /// Directory holding the IDX files; empty means $MNIST_DIR, then /root/data/mnist.
    std::string dir;
    std::string train_images = "train-images-idx3-ubyte";
    std::string train_labels = "train-labels-idx1-ubyte";
    std::string test_images = "t10k-images-idx3-ubyte";
    std::string test_labels = "t10k-labels-idx1-ubyte";
    std::size_t train_size = 10000;
    std::size_t test_size = 2000;

    std::filesystem::path resolved_dir() const;
    bool operator==(const DatasetSpec&) const = default;
};

struct PlanSpec {
    int class_count = 10;
    EncodingMode mode = EncodingMode::plain;
    /// Wavelengths per class for band plans (plain uses 1, differential 2).
    int wavelengths_per_class = 1;
    double lambda_min = 1.0;
    double lambda_max = 1.45;

    WavelengthPlan build() const;
    bool operator==(const PlanSpec&) const = default;
};

struct TrainingSpec {
    int epochs = 20;
    int batch = 32;
    AdamConfig adam{.lr = 0.05};
    double lr_final_fraction = 1.0;
    LossWeights weights;
    int eval_every = 1;
    bool operator==(const TrainingSpec&) const = default;
};

struct VaccinationSpec {
    bool enabled = false;
    VaccinationPlan plan{1.0, {1}};
    bool operator==(const VaccinationSpec&) const = default;
};

struct DecoderSpec {
    DecoderHead head = DecoderHead::reconstruction;
    int hidden1 = 256;
    int hidden2 = 256;
    /// Epochs of pure structural-loss training before the coupled phase (reconstructor only).
    int pretrain_epochs = 0;
    int epochs = 20;
    int batch = 32;
    AdamConfig adam;
    ReconLossConfig recon;
    bool operator==(const DecoderSpec&) const = default;
};

struct JointSpec {
    double xi = 0.5;
    BackEnd back_end = BackEnd::classifier;
    int epochs = 20;
    int batch = 32;
    AdamConfig optical_adam{.lr = 0.05};
    AdamConfig decoder_adam;
    bool operator==(const JointSpec&) const = default;
};

struct SweepSpec {
    std::vector<double> deltas = {0.0, 0.5, 1.0, 1.5, 2.0};
    int trials = 10;
    SweepProtocol protocol = SweepProtocol::middle_layer;
    bool operator==(const SweepSpec&) const = default;
};

struct EvalSpec {
    /// Relative std of multiplicative per-wavelength power noise (0 disables).
    double noise_sigma = 0.0;
    /// Number of leading test samples whose spectra are exported.
    std::size_t spectra_samples = 100;
    bool operator==(const EvalSpec&) const = default;
};

struct ExperimentConfig {
    DatasetSpec dataset;
    Geometry geometry;
    PlanSpec plan;
    /// "builtin:polymer" or a dispersion table file.
    std::string dispersion = "builtin:polymer";
    ModelInit init;
    ObjectEncoding encoding;
    TrainingSpec training;
    VaccinationSpec vaccination;
    DecoderSpec decoder;
    JointSpec joint;
    SweepSpec sweep;
    EvalSpec eval;
    /// Checkpoint consumed by eval / decode / feedback / sweep / export-spectra.
    std::string model_checkpoint;
    /// Decoder checkpoint consumed by feedback.
    std::string decoder_checkpoint;
    std::uint64_t seed = 1;
    std::string output_dir = "out";

    void validate() const;
    bool operator==(const ExperimentConfig&) const = default;
};

DispersionModel resolve_dispersion(const std::string& source, double lambda_min);

nlohmann::json to_json(const ExperimentConfig& c);
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const ExperimentConfig& c);

nlohmann::json to_json(const Geometry& g);
Geometry geometry_from_json(const nlohmann::json& j);
nlohmann::json to_json(const WavelengthPlan& p);
WavelengthPlan plan_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AdamConfig& a);
AdamConfig adam_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ReconLossConfig& r);
ReconLossConfig recon_from_json(const nlohmann::json& j);

}  // namespace diffspec
