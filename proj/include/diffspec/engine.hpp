#pragma once

#include <memory>
#include <span>
#include <vector>

#include "diffspec/model.hpp"

namespace diffspec {

/// Per-thread scratch space for OpticalEngine.
class EngineWorkspace {
public:
    EngineWorkspace(int ny, int nx, int pad_factor);

    PaddedFft fft;
    std::vector<cplx> a;
    std::vector<cplx> b;
};

/// Per-wavelength quantities measured in the output plane.
struct PlanePowers {
    double detected = 0.0;  // inside the detector, after the output aperture
    double guard = 0.0;     // inside the guard annulus, before the output aperture
    double full = 0.0;      // whole output plane, before the output aperture
    double input = 0.0;     // power leaving the input aperture
};

/// Intermediate fields kept by a forward pass for the reverse sweep.
struct ForwardTrace {
    std::vector<LayerShift> shifts;
    /// fields[k][0] is the field just after the object; fields[k][l + 1] the field arriving at
    /// layer l (l < L); fields[k][L + 1] the output-plane field.
    std::vector<std::vector<std::vector<cplx>>> fields;
    std::vector<PlanePowers> powers;
};

/// Upstream derivatives of a scalar loss with respect to each wavelength's PlanePowers.
struct PowerGradients {
    std::vector<double> detected;
    std::vector<double> guard;
    std::vector<double> full;
};

/// Precomputed propagators and layer transmissions for a fixed geometry and plan.
/// After construction, forward() and backward() are const and may be called concurrently
/// with distinct workspaces. set_layers() must not race with them.
class OpticalEngine {
public:
    explicit OpticalEngine(const DiffractiveModel& model);

    /// Recompute the layer transmission tables from new thickness maps.
    void set_layers(const std::vector<ThicknessMap>& layers);

    EngineWorkspace make_workspace() const;

    /// Run all wavelengths. `trace`, when given, receives what backward() needs.
    std::vector<PlanePowers> forward(const RealGrid& object, std::span<const LayerShift> shifts, EngineWorkspace& ws,
                                     ForwardTrace* trace = nullptr) const;

    /// Reverse sweep. Latent gradients are added into `latent_grads` (one grid per layer, may be
    /// null); the object-amplitude gradient is added into `object_grad` when non-null.
    void backward(const ForwardTrace& trace, const PowerGradients& grads, EngineWorkspace& ws,
                  std::vector<RealGrid>* latent_grads, RealGrid* object_grad) const;

    /// Output-plane field for one wavelength (before the output aperture).
    std::vector<cplx> output_plane(const RealGrid& object, std::span<const LayerShift> shifts, std::size_t k,
                                   EngineWorkspace& ws) const;

    const DiffractiveModel& model() const { return model_; }
    std::size_t wavelength_count() const { return per_lambda_.size(); }
    const std::vector<double>& input_powers() const { return input_power_; }

private:
    struct Lambda {
        double wavelength = 0.0;
        cplx dt_dh{};                      // (1/t) dt/dh
        std::vector<cplx> illumination;    // incident field in the object plane
        std::vector<AsmPropagator> props;  // object->L1, ..., L_L->output
        std::vector<std::vector<cplx>> transmission;  // per layer
    };

    void check_shifts(std::span<const LayerShift> shifts) const;
    void transmit(const std::vector<cplx>& t, LayerShift shift, cplx* field) const;
    PlanePowers measure(const std::vector<cplx>& out, double input_power) const;

    DiffractiveModel model_;
    int ny_, nx_;
    std::vector<Lambda> per_lambda_;
    std::vector<double> input_power_;
    std::vector<double> out_aperture_;  // amplitude transmission squared of the output aperture
    std::vector<std::size_t> detector_px_;
    std::vector<std::size_t> guard_px_;
    std::vector<double> sig_slope_;  // scratch: dh/dv per pixel per layer, rebuilt in set_layers
};

}  // namespace diffspec
