#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "diffspec/decoder.hpp"

namespace diffspec {

enum class BackEnd { reconstructor, classifier };
std::string to_string(BackEnd b);
BackEnd back_end_from_string(const std::string& s);

struct JointConfig {
    /// Weight of the optical inference loss; the back-end loss gets 1 - xi.
    double xi = 0.5;
    BackEnd back_end = BackEnd::classifier;
    int epochs = 20;
    int batch = 32;
    AdamConfig optical_adam;
    AdamConfig decoder_adam;
    /// Structural loss used by a reconstructor back-end (gamma is ignored here).
    ReconLossConfig recon;
    double temperature = 0.1;
    std::uint64_t seed = 0;
    std::function<void(const struct JointEpochRecord&)> on_epoch;

    void validate() const;
};

struct JointEpochRecord {
    int epoch = 0;
    double loss = 0.0;
    double optical_loss = 0.0;
    double back_loss = 0.0;
    double optical_accuracy = 0.0;
    std::optional<double> electronic_accuracy;
};

std::string to_jsonl(const JointEpochRecord& r);

struct JointResult {
    DiffractiveModel model;
    DecoderMlp net;
    std::vector<JointEpochRecord> history;
};

/// Fixed input standardization used when a decoder is trained jointly from scratch: the
/// statistics of the scores are not known ahead of time because the optics are still changing.
void set_joint_standardization(DecoderMlp& net, const WavelengthPlan& plan);

/// Simultaneous Adam updates of the layer latents and the decoder weights on
/// xi * L_I(s) + (1 - xi) * L_back(net(s~)).
JointResult joint_train(const DiffractiveModel& model, const DecoderMlp& net, const ImageSet& train_set,
                        const ObjectEncoder& encoder, const JointConfig& cfg);

struct JointSampleLog {
    int label = 0;
    int optical_class = 0;
    std::optional<int> electronic_class;
    std::optional<double> reconstruction_mae;
};

struct JointMetrics {
    double optical_accuracy = 0.0;
    std::optional<double> electronic_accuracy;
    std::optional<double> reconstruction_mae;
    double eta_mean = 0.0;
    double eta_std = 0.0;
    std::vector<JointSampleLog> samples;
};

JointMetrics evaluate_joint(const DiffractiveModel& model, const DecoderMlp& net, const ImageSet& set,
                            const ObjectEncoder& encoder);

}  // namespace diffspec
