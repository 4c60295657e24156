#pragma once

#include <span>
#include <vector>

#include "diffspec/engine.hpp"
#include "diffspec/model.hpp"

namespace diffspec {

struct LossWeights {
    double alpha = 0.0;  // efficiency
    double beta = 0.0;   // purity
    double temperature = 0.1;

    void validate() const;
    bool operator==(const LossWeights&) const = default;
};

struct LossBreakdown {
    double inference = 0.0;
    double efficiency = 0.0;
    double purity = 0.0;
    double total = 0.0;
    double eta = 0.0;
};

inline constexpr double kEfficiencyEpsilon = 1e-12;

/// Scores seen by the inference loss and the electronic classifier: s / sum(s) for plain and
/// band plans, Delta s for differential plans. Throws on an all-zero plain/band score vector.
std::vector<double> normalized_scores(const SpectralScores& scores);

/// Softmax cross-entropy of `logits` against `label`; `grad` (optional) receives dL/dlogits.
double softmax_cross_entropy(std::span<const double> logits, int label, std::vector<double>* grad = nullptr);

/// L_I: cross-entropy of softmax(normalized_scores / temperature).
double loss_inference(const SpectralScores& scores, int label, double temperature);

/// L_E = -ln(eta + eps).
double loss_efficiency(double eta);
double loss_efficiency(const DiffractiveModel& model, const ObjectImage& object);

/// L_P: mean over wavelengths of guard-annulus power / output-plane power (0 when dark).
double loss_purity(std::span<const Wavefield> output_fields, const DetectorGeometry& det);

double total_loss(double inference, double efficiency, double purity, const LossWeights& w);

/// Mean over wavelengths of detected / input power.
double efficiency_from_powers(std::span<const PlanePowers> powers);

/// All three loss terms from one forward pass, and (optionally) their gradient with respect to
/// each wavelength's plane powers, scaled by `scale`. When no light reaches the detector at the
/// class wavelengths the inference term is reported as ln(C) and contributes no gradient.
LossBreakdown evaluate_loss(const WavelengthPlan& plan, std::span<const PlanePowers> powers, int label,
                            const LossWeights& w, PowerGradients* grads = nullptr, double scale = 1.0);

/// Gradient of L_I (scaled) with respect to raw detector powers; returns L_I.
double inference_gradient(const WavelengthPlan& plan, std::span<const double> raw, int label, double temperature,
                          std::vector<double>* d_raw, double scale = 1.0);

/// Chain rule through normalized_scores: adds dL/draw into `d_raw` given dL/d(normalized).
void normalized_scores_backward(const WavelengthPlan& plan, std::span<const double> raw, std::span<const double> d_norm,
                                std::vector<double>& d_raw);

}  // namespace diffspec
