#include "diffspec/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace diffspec {

void LossWeights::validate() const {
    if (!std::isfinite(alpha) || alpha < 0.0) throw Error("loss weights: alpha must be finite and >= 0");
    if (!std::isfinite(beta) || beta < 0.0) throw Error("loss weights: beta must be finite and >= 0");
    if (!(temperature > 0.0) || !std::isfinite(temperature)) throw Error("loss weights: temperature must be > 0");
}

std::vector<double> normalized_scores(const SpectralScores& scores) {
    if (scores.mode == EncodingMode::differential) return scores.s;
    const double total = std::accumulate(scores.s.begin(), scores.s.end(), 0.0);
    if (!(total > 0.0)) throw Error("normalized scores: no detected class power");
    std::vector<double> out(scores.s.size());
    for (std::size_t c = 0; c < out.size(); ++c) out[c] = scores.s[c] / total;
    return out;
}

double softmax_cross_entropy(std::span<const double> logits, int label, std::vector<double>* grad) {
    if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) throw Error("cross-entropy: label out of range");
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - mx);
    const double lse = mx + std::log(z);
    if (grad) {
        grad->resize(logits.size());
        for (std::size_t c = 0; c < logits.size(); ++c) (*grad)[c] = std::exp(logits[c] - lse);
        (*grad)[static_cast<std::size_t>(label)] -= 1.0;
    }
    return lse - logits[static_cast<std::size_t>(label)];
}

double loss_inference(const SpectralScores& scores, int label, double temperature) {
    if (!(temperature > 0.0)) throw Error("loss_inference: temperature must be > 0");
    auto z = normalized_scores(scores);
    for (double& v : z) v /= temperature;
    return softmax_cross_entropy(z, label);
}

double loss_efficiency(double eta) { return -std::log(eta + kEfficiencyEpsilon); }

double loss_efficiency(const DiffractiveModel& model, const ObjectImage& object) {
    return loss_efficiency(power_efficiency(model, object));
}

double loss_purity(std::span<const Wavefield> output_fields, const DetectorGeometry& det) {
    if (output_fields.empty()) return 0.0;
    DetectorGeometry outer = det;
    outer.width = det.width + 2.0 * det.guard_band;
    outer.guard_band = 0.0;
    double sum = 0.0;
    for (const auto& f : output_fields) {
        const double full = total_power(f);
        if (!(full > 0.0)) continue;
        sum += (detector_integrate(f, outer) - detector_integrate(f, det)) / full;
    }
    return sum / static_cast<double>(output_fields.size());
}

double total_loss(double inference, double efficiency, double purity, const LossWeights& w) {
    return inference + w.alpha * efficiency + w.beta * purity;
}

double efficiency_from_powers(std::span<const PlanePowers> powers) {
    double eta = 0.0;
    for (const auto& p : powers) {
        if (!(p.input > 0.0)) throw Error("efficiency: zero input power");
        eta += p.detected / p.input;
    }
    return eta / static_cast<double>(powers.size());
}

double inference_gradient(const WavelengthPlan& plan, std::span<const double> raw, int label, double temperature,
                          std::vector<double>* d_raw, double scale) {
    const int C = plan.class_count;
    const auto sc = aggregate_scores(plan, std::vector<double>(raw.begin(), raw.end()));
    if (d_raw) d_raw->assign(raw.size(), 0.0);

    std::vector<double> z(static_cast<std::size_t>(C));
    double total = 0.0;
    if (plan.mode == EncodingMode::differential) {
        z = sc.s;
    } else {
        total = std::accumulate(sc.s.begin(), sc.s.end(), 0.0);
        if (!(total > 0.0)) return std::log(static_cast<double>(C));
        for (int c = 0; c < C; ++c) z[static_cast<std::size_t>(c)] = sc.s[static_cast<std::size_t>(c)] / total;
    }
    for (double& v : z) v /= temperature;
    std::vector<double> dz;
    const double loss = softmax_cross_entropy(z, label, d_raw ? &dz : nullptr);
    if (!d_raw) return loss;

    std::vector<double> dn(static_cast<std::size_t>(C));
    for (int c = 0; c < C; ++c) dn[static_cast<std::size_t>(c)] = scale * dz[static_cast<std::size_t>(c)] / temperature;
    normalized_scores_backward(plan, raw, dn, *d_raw);
    return loss;
}

void normalized_scores_backward(const WavelengthPlan& plan, std::span<const double> raw, std::span<const double> d_norm,
                                std::vector<double>& d_raw) {
    const int C = plan.class_count;
    if (d_raw.size() != raw.size()) d_raw.assign(raw.size(), 0.0);
    if (plan.mode == EncodingMode::differential) {
        for (int c = 0; c < C; ++c) {
            const auto ip = static_cast<std::size_t>(plan.index(c, 0));
            const auto im = static_cast<std::size_t>(plan.index(c, 1));
            const double p = raw[ip], m = raw[im], d = p + m;
            if (!(d > 0.0)) continue;
            d_raw[ip] += d_norm[static_cast<std::size_t>(c)] * 2.0 * m / (d * d);
            d_raw[im] -= d_norm[static_cast<std::size_t>(c)] * 2.0 * p / (d * d);
        }
        return;
    }
    const auto sc = aggregate_scores(plan, std::vector<double>(raw.begin(), raw.end()));
    const double total = std::accumulate(sc.s.begin(), sc.s.end(), 0.0);
    if (!(total > 0.0)) return;
    // n_c = s_c / S  =>  dL/ds_c = (dn_c - sum_j dn_j n_j) / S
    double dot = 0.0;
    for (int c = 0; c < C; ++c) dot += d_norm[static_cast<std::size_t>(c)] * sc.s[static_cast<std::size_t>(c)] / total;
    for (int c = 0; c < C; ++c) {
        const double ds = (d_norm[static_cast<std::size_t>(c)] - dot) / total;
        for (int j = 0; j < plan.wavelengths_per_class; ++j)
            d_raw[static_cast<std::size_t>(plan.index(c, j))] += ds / plan.wavelengths_per_class;
    }
}

LossBreakdown evaluate_loss(const WavelengthPlan& plan, std::span<const PlanePowers> powers, int label,
                            const LossWeights& w, PowerGradients* grads, double scale) {
    w.validate();
    const std::size_t K = powers.size();
    if (K != plan.size()) throw Error("loss: power count does not match plan");
    std::vector<double> raw(K);
    for (std::size_t k = 0; k < K; ++k) raw[k] = powers[k].detected;

    LossBreakdown out;
    std::vector<double> d_raw;
    out.inference = inference_gradient(plan, raw, label, w.temperature, grads ? &d_raw : nullptr, scale);
    out.eta = efficiency_from_powers(powers);
    out.efficiency = loss_efficiency(out.eta);

    double purity = 0.0;
    for (const auto& p : powers)
        if (p.full > 0.0) purity += p.guard / p.full;
    out.purity = purity / static_cast<double>(K);
    out.total = total_loss(out.inference, out.efficiency, out.purity, w);

    if (grads) {
        grads->detected = std::move(d_raw);
        grads->guard.assign(K, 0.0);
        grads->full.assign(K, 0.0);
        const double de = -scale * w.alpha / (out.eta + kEfficiencyEpsilon) / static_cast<double>(K);
        for (std::size_t k = 0; k < K; ++k) {
            if (w.alpha != 0.0) grads->detected[k] += de / powers[k].input;
            if (w.beta != 0.0 && powers[k].full > 0.0) {
                const double f = powers[k].full;
                grads->guard[k] = scale * w.beta / (static_cast<double>(K) * f);
                grads->full[k] = -scale * w.beta * powers[k].guard / (static_cast<double>(K) * f * f);
            }
        }
    }
    return out;
}

}  // namespace diffspec
