#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "diffspec/optics.hpp"

namespace diffspec {

/// Learnable thickness of one diffractive layer: h = h_base + h_range * sigmoid(latent).
struct ThicknessMap {
    RealGrid latent;
    double h_base = 0.2;
    double h_range = 1.0;

    RealGrid thickness() const;
    bool operator==(const ThicknessMap&) const = default;
};

double sigmoid(double v);

enum class EncodingMode { plain, differential, band };

std::string to_string(EncodingMode mode);
EncodingMode encoding_mode_from_string(const std::string& s);

/// Class <-> wavelength assignment. Class c owns wavelengths
/// [c * wavelengths_per_class, (c + 1) * wavelengths_per_class); in differential mode the
/// first of the pair is s_{c,+} and the second s_{c,-}.
struct WavelengthPlan {
    int class_count = 10;
    int wavelengths_per_class = 1;
    EncodingMode mode = EncodingMode::plain;
    std::vector<double> wavelengths;

    /// class_count * wavelengths_per_class wavelengths uniform on [lambda_lo, lambda_hi].
    static WavelengthPlan uniform(int class_count, EncodingMode mode, int wavelengths_per_class = 1,
                                  double lambda_lo = 1.0, double lambda_hi = 1.45);

    std::size_t size() const { return wavelengths.size(); }
    int index(int cls, int member) const { return cls * wavelengths_per_class + member; }
    double min_wavelength() const { return wavelengths.front(); }
    void validate() const;
    bool operator==(const WavelengthPlan&) const = default;
};

/// Square single-pixel detector. The purity guard region is the square of side
/// width + 2 * guard_band around the detector, minus the detector itself.
struct DetectorGeometry {
    double width = 2.0;
    double center_x = 0.0;
    double center_y = 0.0;
    double guard_band = 2.0;

    void validate() const;
    bool operator==(const DetectorGeometry&) const = default;
};

/// Optional achromatic slab in front of the detector. A uniform phase, so it never changes
/// detected power.
struct SiliconSlab {
    double thickness = 5.0;
    double n = 3.4;
    bool operator==(const SiliconSlab&) const = default;
};

struct Geometry {
    int ny = 64;
    int nx = 64;
    double pitch = 0.5;
    /// input aperture -> object, object -> layer 1, ..., layer L -> output plane (mm).
    std::vector<double> spacings = {3.0, 30.0, 30.0, 30.0, 30.0};
    double input_aperture_width = 10.0;
    /// Square aperture in the output plane; nullopt leaves the plane open.
    std::optional<double> output_aperture_width = 2.0;
    DetectorGeometry detector;
    std::optional<SiliconSlab> slab;
    PropagationOptions propagation;

    int layer_count() const { return static_cast<int>(spacings.size()) - 2; }
    void validate() const;
    bool operator==(const Geometry&) const = default;
};

struct ObjectImage {
    RealGrid amplitude;
    double pitch = 0.5;

    void validate() const;
};

/// Detected spectra. `s` holds the decision scores: per-class powers in plain mode,
/// band means in band mode, and the differential scores Delta s in differential mode.
struct SpectralScores {
    EncodingMode mode = EncodingMode::plain;
    std::vector<double> raw;
    std::vector<double> s;
};

/// Integer-pixel lateral displacement of one layer.
struct LayerShift {
    int dx = 0;
    int dy = 0;
    bool operator==(const LayerShift&) const = default;
};

struct DiffractiveModel {
    Geometry geometry;
    std::vector<ThicknessMap> layers;
    DispersionModel dispersion = DispersionModel::default_polymer();
    /// Where the dispersion table came from ("builtin:polymer" or a file path); informational.
    std::string dispersion_source = "builtin:polymer";
    WavelengthPlan plan;

    void validate() const;
    bool operator==(const DiffractiveModel&) const = default;
};

struct ModelInit {
    double h_base = 0.2;
    double h_range = 1.0;
    /// Latents drawn from U(-latent_spread, latent_spread).
    double latent_spread = 2.0;
    bool operator==(const ModelInit&) const = default;
};

DiffractiveModel make_model(const Geometry& geometry, const WavelengthPlan& plan, DispersionModel dispersion,
                            std::uint64_t seed, const ModelInit& init = {});

/// Aggregate per-wavelength detector powers into decision scores for the plan's mode.
SpectralScores aggregate_scores(const WavelengthPlan& plan, std::vector<double> raw);

/// Argmax over s; ties go to the lowest class index.
int classify(const SpectralScores& scores);

/// Sum |u|^2 pitch^2 over pixels whose centers lie inside the detector square.
double detector_integrate(const Wavefield& field, const DetectorGeometry& det);

/// Full multi-wavelength forward pass. `shifts` is empty or has one entry per layer.
SpectralScores forward(const DiffractiveModel& model, const ObjectImage& object, std::span<const LayerShift> shifts = {});

/// Mean over plan wavelengths of detected / input-aperture power.
double power_efficiency(const DiffractiveModel& model, const ObjectImage& object);

/// Complex field in the output plane at one plan wavelength (before the output aperture).
Wavefield output_field(const DiffractiveModel& model, const ObjectImage& object, std::size_t wavelength_index,
                       std::span<const LayerShift> shifts = {});

}  // namespace diffspec
