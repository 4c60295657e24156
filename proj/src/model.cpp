#include "diffspec/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "diffspec/engine.hpp"

namespace diffspec {

double sigmoid(double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
}

RealGrid ThicknessMap::thickness() const {
    RealGrid h(latent.ny(), latent.nx());
    for (std::size_t i = 0; i < h.size(); ++i) h[i] = h_base + h_range * sigmoid(latent[i]);
    return h;
}

std::string to_string(EncodingMode mode) {
    switch (mode) {
        case EncodingMode::plain: return "plain";
        case EncodingMode::differential: return "differential";
        case EncodingMode::band: return "band";
    }
    return "plain";
}

EncodingMode encoding_mode_from_string(const std::string& s) {
    if (s == "plain") return EncodingMode::plain;
    if (s == "differential") return EncodingMode::differential;
    if (s == "band") return EncodingMode::band;
    throw Error("unknown encoding mode '" + s + "'");
}

WavelengthPlan WavelengthPlan::uniform(int class_count, EncodingMode mode, int wavelengths_per_class, double lambda_lo,
                                       double lambda_hi) {
    if (mode == EncodingMode::plain) wavelengths_per_class = 1;
    if (mode == EncodingMode::differential) wavelengths_per_class = 2;
    WavelengthPlan p{class_count, wavelengths_per_class, mode, {}};
    const int k = class_count * wavelengths_per_class;
    if (k < 1) throw Error("wavelength plan: no wavelengths");
    p.wavelengths.resize(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i)
        p.wavelengths[static_cast<std::size_t>(i)] = k == 1 ? lambda_lo : lambda_lo + (lambda_hi - lambda_lo) * i / (k - 1);
    p.validate();
    return p;
}

void WavelengthPlan::validate() const {
    if (class_count < 1) throw Error("wavelength plan: class_count must be >= 1");
    if (wavelengths_per_class < 1) throw Error("wavelength plan: wavelengths_per_class must be >= 1");
    if (mode == EncodingMode::plain && wavelengths_per_class != 1)
        throw Error("wavelength plan: plain mode uses one wavelength per class");
    if (mode == EncodingMode::differential && wavelengths_per_class != 2)
        throw Error("wavelength plan: differential mode uses two wavelengths per class");
    if (wavelengths.size() != static_cast<std::size_t>(class_count) * wavelengths_per_class)
        throw Error("wavelength plan: expected class_count * wavelengths_per_class wavelengths");
    for (std::size_t i = 0; i < wavelengths.size(); ++i) {
        if (!(wavelengths[i] > 0.0) || !std::isfinite(wavelengths[i]))
            throw Error("wavelength plan: wavelengths must be positive");
        if (i > 0 && !(wavelengths[i] > wavelengths[i - 1]))
            throw Error("wavelength plan: wavelengths must be strictly increasing");
    }
}

void DetectorGeometry::validate() const {
    if (!(width > 0.0)) throw Error("detector: width must be positive");
    if (!(guard_band >= 0.0)) throw Error("detector: guard band must be >= 0");
}

void Geometry::validate() const {
    if (ny < 2 || nx < 2) throw ShapeError("geometry: grid must be at least 2x2");
    if (!(pitch > 0.0)) throw Error("geometry: pitch must be positive");
    if (spacings.size() < 2) throw Error("geometry: need at least the aperture->object and ->output spacings");
    for (double d : spacings)
        if (!(d > 0.0) || !std::isfinite(d)) throw Error("geometry: spacings must be positive");
    if (!(input_aperture_width > 0.0)) throw Error("geometry: input aperture width must be positive");
    if (output_aperture_width && !(*output_aperture_width > 0.0))
        throw Error("geometry: output aperture width must be positive");
    if (propagation.pad_factor < 1) throw Error("geometry: pad factor must be >= 1");
    detector.validate();
}

void ObjectImage::validate() const {
    for (double a : amplitude)
        if (!(a >= 0.0 && a <= 1.0)) throw Error("object: amplitude outside [0, 1]");
}

void DiffractiveModel::validate() const {
    geometry.validate();
    plan.validate();
    if (static_cast<int>(layers.size()) != geometry.layer_count())
        throw Error("model: layer count does not match the spacing list");
    for (const auto& l : layers) {
        if (l.latent.ny() != geometry.ny || l.latent.nx() != geometry.nx)
            throw ShapeError("model: layer grid does not match geometry");
        if (!(l.h_base >= 0.0) || !(l.h_range >= 0.0)) throw ThicknessError("model: thickness range must be >= 0");
        for (double v : l.latent)
            if (!std::isfinite(v)) throw Error("model: non-finite latent");
    }
}

DiffractiveModel make_model(const Geometry& geometry, const WavelengthPlan& plan, DispersionModel dispersion,
                            std::uint64_t seed, const ModelInit& init) {
    DiffractiveModel m{geometry, {}, std::move(dispersion), "builtin:polymer", plan};
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-init.latent_spread, init.latent_spread);
    for (int l = 0; l < geometry.layer_count(); ++l) {
        ThicknessMap t{RealGrid(geometry.ny, geometry.nx), init.h_base, init.h_range};
        for (double& v : t.latent) v = init.latent_spread > 0.0 ? u(rng) : 0.0;
        m.layers.push_back(std::move(t));
    }
    m.validate();
    return m;
}

SpectralScores aggregate_scores(const WavelengthPlan& plan, std::vector<double> raw) {
    if (raw.size() != plan.size()) throw ShapeError("scores: raw length does not match plan");
    SpectralScores sc{plan.mode, std::move(raw), std::vector<double>(static_cast<std::size_t>(plan.class_count), 0.0)};
    for (int c = 0; c < plan.class_count; ++c) {
        auto& out = sc.s[static_cast<std::size_t>(c)];
        if (plan.mode == EncodingMode::differential) {
            const double p = sc.raw[static_cast<std::size_t>(plan.index(c, 0))];
            const double m = sc.raw[static_cast<std::size_t>(plan.index(c, 1))];
            out = (p + m) > 0.0 ? (p - m) / (p + m) : 0.0;
        } else {
            double sum = 0.0;
            for (int j = 0; j < plan.wavelengths_per_class; ++j) sum += sc.raw[static_cast<std::size_t>(plan.index(c, j))];
            out = sum / plan.wavelengths_per_class;
        }
    }
    return sc;
}

int classify(const SpectralScores& scores) {
    if (scores.s.empty()) throw Error("classify: empty scores");
    // max_element returns the first maximum.
    return static_cast<int>(std::max_element(scores.s.begin(), scores.s.end()) - scores.s.begin());
}

double detector_integrate(const Wavefield& field, const DetectorGeometry& det) {
    det.validate();
    const double hx = 0.5 * field.nx() * field.pitch();
    const double hy = 0.5 * field.ny() * field.pitch();
    constexpr double slack = 1e-9;
    if (det.center_x - 0.5 * det.width < -hx - slack || det.center_x + 0.5 * det.width > hx + slack ||
        det.center_y - 0.5 * det.width < -hy - slack || det.center_y + 0.5 * det.width > hy + slack)
        throw Error("detector: square extends outside the output grid");
    double sum = 0.0;
    for (int y = 0; y < field.ny(); ++y) {
        if (!pixel_in_window(y, field.ny(), field.pitch(), det.center_y, det.width)) continue;
        for (int x = 0; x < field.nx(); ++x)
            if (pixel_in_window(x, field.nx(), field.pitch(), det.center_x, det.width)) sum += std::norm(field.values()(y, x));
    }
    return sum * field.pitch() * field.pitch();
}

namespace {

void check_object(const DiffractiveModel& model, const ObjectImage& object) {
    if (object.amplitude.ny() != model.geometry.ny || object.amplitude.nx() != model.geometry.nx)
        throw ShapeError("object grid does not match model geometry");
    if (std::abs(object.pitch - model.geometry.pitch) > 1e-12) throw Error("object pitch does not match model pitch");
    object.validate();
}

}  // namespace

SpectralScores forward(const DiffractiveModel& model, const ObjectImage& object, std::span<const LayerShift> shifts) {
    check_object(model, object);
    OpticalEngine engine(model);
    auto ws = engine.make_workspace();
    const auto powers = engine.forward(object.amplitude, shifts, ws);
    std::vector<double> raw(powers.size());
    for (std::size_t k = 0; k < powers.size(); ++k) raw[k] = powers[k].detected;
    return aggregate_scores(model.plan, std::move(raw));
}

double power_efficiency(const DiffractiveModel& model, const ObjectImage& object) {
    check_object(model, object);
    OpticalEngine engine(model);
    auto ws = engine.make_workspace();
    const auto powers = engine.forward(object.amplitude, {}, ws);
    double eta = 0.0;
    for (const auto& p : powers) {
        if (!(p.input > 0.0)) throw Error("power efficiency: zero input power");
        eta += p.detected / p.input;
    }
    return eta / static_cast<double>(powers.size());
}

Wavefield output_field(const DiffractiveModel& model, const ObjectImage& object, std::size_t wavelength_index,
                       std::span<const LayerShift> shifts) {
    check_object(model, object);
    if (wavelength_index >= model.plan.size()) throw Error("output_field: wavelength index out of range");
    OpticalEngine engine(model);
    auto ws = engine.make_workspace();
    auto out = engine.output_plane(object.amplitude, shifts, wavelength_index, ws);
    return Wavefield(ComplexGrid(model.geometry.ny, model.geometry.nx, std::move(out)), model.geometry.pitch,
                     model.plan.wavelengths[wavelength_index]);
}

}  // namespace diffspec
