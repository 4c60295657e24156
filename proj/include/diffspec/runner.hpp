#pragma once

#include <string>
#include <vector>

#include "diffspec/checkpoint.hpp"
#include "diffspec/config.hpp"
#include "diffspec/report.hpp"

namespace diffspec {

struct Datasets {
    ImageSet train;
    ImageSet test;
};

Datasets load_datasets(const DatasetSpec& spec);

/// Untrained model described by the config (latents drawn from the config seed).
DiffractiveModel initial_model(const ExperimentConfig& cfg);
/// The model checkpoint named in the config, or the untrained model when none is given.
DiffractiveModel resolve_model(const ExperimentConfig& cfg);

TrainConfig training_config(const ExperimentConfig& cfg);
JointConfig joint_config(const ExperimentConfig& cfg);

/// Train a reconstruction decoder: `pretrain_epochs` at gamma = 1, then `epochs` at the configured gamma.
DecoderMlp train_decoder(const ExperimentConfig& cfg, const DiffractiveModel& model, const ImageSet& train,
                         const ObjectEncoder& encoder, const ScoreSet& scores, std::vector<DecoderEpochRecord>* history);

/// Optical and feedback decisions on a test set.
RunReport feedback_report(const DiffractiveModel& model, const DecoderMlp& net, const ImageSet& test,
                          const ObjectEncoder& encoder);

extern const std::vector<std::string> kCommands;

/// Execute one pipeline and write its artifacts under cfg.output_dir.
RunReport run(const std::string& command, const ExperimentConfig& cfg);

}  // namespace diffspec
