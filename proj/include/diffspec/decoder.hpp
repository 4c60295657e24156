#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "diffspec/training.hpp"

namespace diffspec {

enum class DecoderHead { reconstruction, classification };
enum class StructuralLoss { mae, berhu };

std::string to_string(DecoderHead h);
DecoderHead decoder_head_from_string(const std::string& s);
std::string to_string(StructuralLoss l);
StructuralLoss structural_loss_from_string(const std::string& s);

/// Fully connected network: affine -> ReLU -> affine -> ReLU -> affine, with a sigmoid on the
/// reconstruction head. Inputs are standardized with a fixed per-feature (shift, scale) first.
struct DecoderMlp {
    DecoderHead head = DecoderHead::reconstruction;
    std::vector<int> widths;  // {inputs, hidden1, hidden2, outputs}
    /// W1, b1, W2, b2, W3, b3; each W stored column-major as (fan_out x fan_in).
    std::vector<double> params;
    std::vector<double> input_shift;
    std::vector<double> input_scale;

    int inputs() const { return widths.at(0); }
    int outputs() const { return widths.at(3); }
    static std::size_t parameter_count(const std::vector<int>& widths);
    void validate() const;
    bool operator==(const DecoderMlp&) const = default;
};

DecoderMlp make_decoder(DecoderHead head, int inputs, int outputs, std::uint64_t seed, int hidden1 = 256,
                        int hidden2 = 256);

/// Intermediate activations of a batch forward pass (one column per sample).
struct MlpCache {
    Eigen::MatrixXd x, z1, a1, z2, a2, y;
};

std::vector<double> mlp_forward(const DecoderMlp& net, std::span<const double> input);
Eigen::MatrixXd mlp_forward_batch(const DecoderMlp& net, const Eigen::MatrixXd& inputs, MlpCache* cache = nullptr);

/// Gradient of a loss with respect to the parameters given dL/d(output) for the cached batch.
/// `grad` is overwritten; `d_input` (optional) receives dL/d(raw input).
void mlp_backward(const DecoderMlp& net, const MlpCache& cache, const Eigen::MatrixXd& d_output,
                  std::vector<double>& grad, Eigen::MatrixXd* d_input = nullptr);

/// Set the input standardization from a set of feature vectors (zero-variance features get scale 1).
void fit_input_standardization(DecoderMlp& net, const std::vector<std::vector<double>>& features);

struct ReconLossConfig {
    double gamma = 0.95;
    StructuralLoss structural = StructuralLoss::mae;
    /// BerHu threshold c = berhu_fraction * max |e| over the batch.
    double berhu_fraction = 0.2;
    /// Softmax temperature of the coupled inference term.
    double temperature = 0.1;

    void validate() const;
    bool operator==(const ReconLossConfig&) const = default;
};

/// Reversed Huber: |e| for |e| <= c, (e^2 + c^2) / (2c) above.
double berhu(double e, double c);

/// Mean structural loss over pixels. `c` is only used by BerHu. `grad` receives dL/drecon.
double loss_structural(std::span<const double> recon, std::span<const double> truth, StructuralLoss kind, double c,
                       std::vector<double>* grad = nullptr);
/// Single-pair convenience form; the BerHu threshold is taken from this pair alone.
double loss_structural(const ObjectImage& recon, const ObjectImage& truth, const ReconLossConfig& cfg);

/// Frozen-model outputs for a dataset: raw detector powers, decoder features and targets.
struct ScoreSample {
    int label = 0;
    int optical_class = 0;
    std::vector<double> raw;
    std::vector<double> features;
};

struct ScoreSet {
    WavelengthPlan plan;
    std::vector<ScoreSample> samples;
};

/// Decoder input statistic: the normalized scores seen by the inference loss (uniform when dark).
std::vector<double> decoder_features(const WavelengthPlan& plan, std::span<const double> raw);

ScoreSet compute_scores(const OpticalEngine& engine, const ImageSet& set, const ObjectEncoder& encoder);

/// Reconstruction target in image space: the binary (or grayscale) object before upsampling.
std::vector<double> target_image(const ObjectEncoder& encoder, std::span<const float> image);

struct DecoderEpochRecord {
    int epoch = 0;
    double loss = 0.0;
    double structural = 0.0;
    double inference = 0.0;
    double accuracy = 0.0;  // classifier head: train accuracy; reconstructor: feedback accuracy on batches seen
};

std::string to_jsonl(const DecoderEpochRecord& r);

struct DecoderTrainConfig {
    int epochs = 20;
    int batch = 32;
    AdamConfig adam;
    std::uint64_t seed = 0;
    ReconLossConfig recon;
    std::function<void(const DecoderEpochRecord&)> on_epoch;

    void validate() const;
};

struct DecoderTrainResult {
    DecoderMlp net;
    std::vector<DecoderEpochRecord> history;
};

struct ReconBatchLoss {
    double loss = 0.0;        // gamma * L_S + (1 - gamma) * L_I, mean over the batch
    double structural = 0.0;  // mean L_S
    double inference = 0.0;   // mean L_I of the re-imaged reconstructions (0 when gamma = 1)
    std::size_t optical_correct = 0;
};

/// Coupled reconstruction loss of a batch (one column of `x` / `truth` per sample) and, when
/// `grad` is given, its gradient with respect to the decoder parameters. The BerHu threshold is
/// 0.2 * max |e| over the batch unless `berhu_c` is given, and is held constant when differentiating.
ReconBatchLoss reconstruction_batch_loss(const DecoderMlp& net, const OpticalEngine& engine, EngineWorkspace& ws,
                                         const ObjectEncoder& encoder, const Eigen::MatrixXd& x,
                                         const Eigen::MatrixXd& truth, std::span<const int> labels,
                                         const ReconLossConfig& cfg, std::vector<double>* grad = nullptr,
                                         std::optional<double> berhu_c = std::nullopt);

/// Minimize gamma * L_S + (1 - gamma) * L_I(s') with s' the frozen model's scores of the
/// reconstruction. With gamma = 1 the optical model is never evaluated. `scores`, when given, must
/// be compute_scores(frozen, train_set, encoder).
DecoderTrainResult train_reconstructor(const DecoderMlp& net, const DiffractiveModel& frozen, const ImageSet& train_set,
                                       const ObjectEncoder& encoder, const DecoderTrainConfig& cfg,
                                       const ScoreSet* scores = nullptr);

/// Softmax cross-entropy training of a classification head on frozen score features.
DecoderTrainResult train_classifier(const DecoderMlp& net, const ScoreSet& train_scores, const DecoderTrainConfig& cfg);

struct FeedbackResult {
    int predicted = 0;
    std::vector<double> reconstruction;
    SpectralScores scores;
};

/// Reconstruct from s, re-image the reconstruction as a grayscale object and classify by max(s').
FeedbackResult feedback_classify(const DecoderMlp& net, const OpticalEngine& engine, const ObjectEncoder& encoder,
                                 std::span<const double> raw, EngineWorkspace& ws);
FeedbackResult feedback_classify(const DecoderMlp& net, const DiffractiveModel& model, const ObjectEncoder& encoder,
                                 std::span<const double> raw);

int classify_electronic(const DecoderMlp& net, std::span<const double> features);

}  // namespace diffspec
