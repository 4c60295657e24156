#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "diffspec/fft.hpp"
#include "diffspec/grid.hpp"

namespace diffspec {

class PropagationError : public Error {
public:
    using Error::Error;
};

class DispersionRangeError : public Error {
public:
    using Error::Error;
};

class ThicknessError : public Error {
public:
    using Error::Error;
};

/// Complex scalar field sampled on a regular grid at a single wavelength.
/// Lengths are in millimetres throughout.
class Wavefield {
public:
    Wavefield(ComplexGrid values, double pitch, double wavelength);

    /// Unit-amplitude plane wave at normal incidence.
    static Wavefield plane_wave(int ny, int nx, double pitch, double wavelength);

    const ComplexGrid& values() const { return values_; }
    double pitch() const { return pitch_; }
    double wavelength() const { return wavelength_; }
    int ny() const { return values_.ny(); }
    int nx() const { return values_.nx(); }

    Wavefield with_values(ComplexGrid values) const { return Wavefield(std::move(values), pitch_, wavelength_); }

private:
    ComplexGrid values_;
    double pitch_;
    double wavelength_;
};

struct MaterialIndex {
    double n = 1.0;
    double kappa = 0.0;
};

struct DispersionSample {
    double wavelength = 0.0;
    double n = 1.0;
    double kappa = 0.0;
    bool operator==(const DispersionSample&) const = default;
};

/// Tabulated refractive index n(lambda) and extinction coefficient kappa(lambda),
/// linearly interpolated between knots.
class DispersionModel {
public:
    explicit DispersionModel(std::vector<DispersionSample> samples);

    /// Stand-in for the printing polymer: n = 1.7, kappa = 0.01 * lambda / lambda_min,
    /// tabulated on [0.9, 1.6] mm.
    static DispersionModel default_polymer(double lambda_min = 1.0);
    static DispersionModel constant(double n, double kappa, double lambda_lo, double lambda_hi);

    MaterialIndex lookup(double wavelength) const;
    double min_wavelength() const { return samples_.front().wavelength; }
    double max_wavelength() const { return samples_.back().wavelength; }
    const std::vector<DispersionSample>& samples() const { return samples_; }

    bool operator==(const DispersionModel&) const = default;

private:
    std::vector<DispersionSample> samples_;
};

MaterialIndex dispersion_lookup(const DispersionModel& model, double wavelength);

/// Text table: one `lambda n kappa` triple per line, `#` starts a comment.
DispersionModel parse_dispersion_table(std::istream& in);
DispersionModel load_dispersion_table(const std::filesystem::path& path);
void write_dispersion_table(std::ostream& out, const DispersionModel& model);

/// Real amplitude transmission in [0, 1].
struct ApertureMask {
    RealGrid transmission;
    double pitch = 0.0;
    double offset_x = 0.0;
    double offset_y = 0.0;

    void validate() const;
};

/// True when the pixel center at index `i` lies in [center - width/2, center + width/2).
bool pixel_in_window(int i, int n, double pitch, double center, double width);

/// Open square of side `width` centered at (offset_x, offset_y), opaque elsewhere.
ApertureMask square_aperture(int ny, int nx, double pitch, double width, double offset_x = 0.0,
                             double offset_y = 0.0);

struct PropagationOptions {
    /// Zero-padding factor per axis applied before the transform.
    int pad_factor = 2;
    /// Also drop spatial frequencies whose transfer-function phase is undersampled on the
    /// padded grid; these are the components that would otherwise wrap around.
    bool anti_alias = true;

    bool operator==(const PropagationOptions&) const = default;
};

/// Band-limited angular-spectrum transfer function for a fixed grid, wavelength and distance.
/// Propagating by -d applies the complex conjugate of the +d transfer function, so
/// apply(-d) is the exact adjoint of apply(+d).
class AsmPropagator {
public:
    AsmPropagator(int ny, int nx, double pitch, double wavelength, double distance, PropagationOptions opts = {});

    int ny() const { return ny_; }
    int nx() const { return nx_; }
    double distance() const { return distance_; }
    const PropagationOptions& options() const { return opts_; }

    /// out may alias in. `adjoint` applies the conjugate transfer function.
    void apply(const cplx* in, cplx* out, PaddedFft& ws, bool adjoint = false) const;

    /// Fraction of padded-grid frequencies that are passed.
    double passband_fraction() const;

private:
    int ny_, nx_;
    double pitch_, wavelength_, distance_;
    PropagationOptions opts_;
    std::vector<cplx> transfer_;
};

Wavefield propagate(const Wavefield& field, double distance, const PropagationOptions& opts = {});

/// t = exp(i 2 pi (n - 1) h / lambda) * exp(-2 pi kappa h / lambda)
cplx transmission_coefficient(MaterialIndex index, double thickness, double wavelength);

/// Multiply each pixel by the transmission of a material slab of local thickness `thickness` (mm).
Wavefield layer_transmit(const Wavefield& field, const RealGrid& thickness, const DispersionModel& dispersion);

Wavefield apply_aperture(const Wavefield& field, const ApertureMask& mask);

/// Sum |u|^2 * pitch^2.
double total_power(const Wavefield& field);

/// Sum u * conj(v) * pitch^2.
cplx inner_product(const Wavefield& u, const Wavefield& v);

}  // namespace diffspec
