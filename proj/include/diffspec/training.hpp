#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "diffspec/adam.hpp"
#include "diffspec/dataset.hpp"
#include "diffspec/engine.hpp"
#include "diffspec/losses.hpp"

namespace diffspec {

class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, std::int64_t iteration)
        : Error(what + " at iteration " + std::to_string(iteration)), iteration_(iteration) {}
    std::int64_t iteration() const { return iteration_; }

private:
    std::int64_t iteration_;
};

struct GradientBundle {
    std::vector<RealGrid> latent;
    std::optional<RealGrid> object;
};

struct BackwardResult {
    LossBreakdown loss;
    SpectralScores scores;
    GradientBundle grads;
};

/// Loss and its exact gradient with respect to every layer latent (and optionally the object
/// amplitude) for one sample.
BackwardResult backward(const DiffractiveModel& model, const ObjectImage& object, int label, const LossWeights& weights,
                        bool object_gradient = false, std::span<const LayerShift> shifts = {});

/// Same, reusing a prepared engine and workspace.
BackwardResult backward(const OpticalEngine& engine, EngineWorkspace& ws, const RealGrid& object, int label,
                        const LossWeights& weights, bool object_gradient = false,
                        std::span<const LayerShift> shifts = {});

/// Random lateral layer misalignment: each selected layer gets D_x, D_y ~ U(-delta, delta),
/// rounded to whole pixels.
struct VaccinationPlan {
    double delta = 0.0;
    /// Layers to perturb (0-based); empty means every layer.
    std::vector<int> layers;

    void validate(int layer_count) const;
    std::vector<LayerShift> draw(std::mt19937_64& rng, int layer_count, double pitch) const;
    bool operator==(const VaccinationPlan&) const = default;
};

struct EpochRecord {
    int epoch = 0;
    double loss = 0.0;
    double inference = 0.0;
    double efficiency = 0.0;
    double purity = 0.0;
    double train_accuracy = 0.0;
    std::optional<double> test_accuracy;
    double eta_mean = 0.0;
    double eta_std = 0.0;
};

std::string to_jsonl(const EpochRecord& r);

struct TrainConfig {
    int epochs = 20;
    int batch = 32;
    AdamConfig adam;
    /// Cosine decay per epoch from adam.lr down to adam.lr * lr_final_fraction at the last epoch.
    double lr_final_fraction = 1.0;
    LossWeights weights;
    std::optional<VaccinationPlan> vaccination;
    std::uint64_t seed = 0;
    /// Evaluate the test set (if any) every this many epochs and after the last one.
    int eval_every = 1;
    std::function<void(const EpochRecord&)> on_epoch;

    void validate(int layer_count) const;
};

struct TrainResult {
    DiffractiveModel model;
    std::vector<EpochRecord> history;
};

double epoch_learning_rate(const TrainConfig& cfg, int epoch);

/// Mini-batch Adam over the layer latents. Fully determined by (model, data, config).
TrainResult train(const DiffractiveModel& model, const ImageSet& train_set, const ObjectEncoder& encoder,
                  const TrainConfig& cfg, const ImageSet* test_set = nullptr);

struct SampleOutcome {
    int label = 0;
    int predicted = 0;
    double eta = 0.0;
    std::vector<double> raw;
};

struct OpticalEvaluation {
    std::vector<SampleOutcome> samples;
    double accuracy = 0.0;
    double eta_mean = 0.0;
    double eta_std = 0.0;
};

OpticalEvaluation evaluate_optical(const OpticalEngine& engine, const ImageSet& set, const ObjectEncoder& encoder,
                                   std::span<const LayerShift> shifts = {});
OpticalEvaluation evaluate_optical(const DiffractiveModel& model, const ImageSet& set, const ObjectEncoder& encoder,
                                   std::span<const LayerShift> shifts = {});

enum class SweepProtocol { middle_layer, all_layers };

std::string to_string(SweepProtocol p);
SweepProtocol sweep_protocol_from_string(const std::string& s);

struct SweepPoint {
    double delta = 0.0;
    double mean_accuracy = 0.0;
    double std_accuracy = 0.0;
    std::vector<double> trial_accuracies;
};

/// Test accuracy under random layer misalignment. For each delta, `trials` independent shift
/// draws are made, each applied to the whole test set.
std::vector<SweepPoint> misalignment_sweep(const DiffractiveModel& model, const ImageSet& test_set,
                                           const ObjectEncoder& encoder, std::span<const double> deltas, int trials,
                                           std::uint64_t seed, SweepProtocol protocol = SweepProtocol::middle_layer);

/// Flatten / restore all layer latents (layer-major, row-major) for the optimizer.
std::vector<double> flatten_latents(const std::vector<ThicknessMap>& layers);
void unflatten_latents(std::span<const double> flat, std::vector<ThicknessMap>& layers);

}  // namespace diffspec
