#include "diffspec/optics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

namespace diffspec {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

bool all_finite(const ComplexGrid& g) {
    return std::all_of(g.begin(), g.end(), [](const cplx& z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); });
}

// Signed FFT frequency of bin k on an m-point axis with sample spacing `pitch`.
double fft_frequency(int k, int m, double pitch) {
    const int signed_k = (k < (m + 1) / 2) ? k : k - m;
    return signed_k / (m * pitch);
}

}  // namespace

Wavefield::Wavefield(ComplexGrid values, double pitch, double wavelength)
    : values_(std::move(values)), pitch_(pitch), wavelength_(wavelength) {
    if (values_.ny() < 2 || values_.nx() < 2) throw ShapeError("wavefield: grid must be at least 2x2");
    if (!(pitch > 0.0) || !std::isfinite(pitch)) throw Error("wavefield: pitch must be positive");
    if (!(wavelength > 0.0) || !std::isfinite(wavelength)) throw Error("wavefield: wavelength must be positive");
}

Wavefield Wavefield::plane_wave(int ny, int nx, double pitch, double wavelength) {
    return Wavefield(ComplexGrid(ny, nx, cplx{1.0, 0.0}), pitch, wavelength);
}

// ---------------------------------------------------------------------------
// Dispersion

DispersionModel::DispersionModel(std::vector<DispersionSample> samples) : samples_(std::move(samples)) {
    if (samples_.empty()) throw Error("dispersion: table is empty");
    for (std::size_t i = 0; i < samples_.size(); ++i) {
        const auto& s = samples_[i];
        if (!std::isfinite(s.wavelength) || !(s.wavelength > 0.0))
            throw Error("dispersion: wavelength must be positive and finite");
        if (!std::isfinite(s.n) || s.n < 1.0) throw Error("dispersion: refractive index must be >= 1");
        if (!std::isfinite(s.kappa) || s.kappa < 0.0) throw Error("dispersion: extinction coefficient must be >= 0");
        if (i > 0 && !(s.wavelength > samples_[i - 1].wavelength))
            throw Error("dispersion: wavelengths must be strictly increasing");
    }
}

DispersionModel DispersionModel::default_polymer(double lambda_min) {
    std::vector<DispersionSample> s;
    for (int i = 0; i <= 14; ++i) {
        const double lambda = 0.9 + 0.05 * i;
        s.push_back({lambda, 1.7, 0.01 * lambda / lambda_min});
    }
    return DispersionModel(std::move(s));
}

DispersionModel DispersionModel::constant(double n, double kappa, double lambda_lo, double lambda_hi) {
    if (!(lambda_hi > lambda_lo)) return DispersionModel({{lambda_lo, n, kappa}});
    return DispersionModel({{lambda_lo, n, kappa}, {lambda_hi, n, kappa}});
}

MaterialIndex DispersionModel::lookup(double wavelength) const {
    if (!(wavelength >= samples_.front().wavelength && wavelength <= samples_.back().wavelength)) {
        std::ostringstream msg;
        msg << "dispersion: wavelength " << wavelength << " mm outside tabulated range [" << samples_.front().wavelength
            << ", " << samples_.back().wavelength << "]";
        throw DispersionRangeError(msg.str());
    }
    auto hi = std::lower_bound(samples_.begin(), samples_.end(), wavelength,
                               [](const DispersionSample& s, double w) { return s.wavelength < w; });
    if (hi->wavelength == wavelength) return {hi->n, hi->kappa};
    auto lo = hi - 1;
    const double t = (wavelength - lo->wavelength) / (hi->wavelength - lo->wavelength);
    return {lo->n + t * (hi->n - lo->n), lo->kappa + t * (hi->kappa - lo->kappa)};
}

MaterialIndex dispersion_lookup(const DispersionModel& model, double wavelength) { return model.lookup(wavelength); }

DispersionModel parse_dispersion_table(std::istream& in) {
    std::vector<DispersionSample> samples;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream fields(line);
        DispersionSample s;
        if (!(fields >> s.wavelength)) continue;
        if (!(fields >> s.n >> s.kappa)) throw Error("dispersion table line " + std::to_string(line_no) + ": expected `lambda n kappa`");
        std::string extra;
        if (fields >> extra) throw Error("dispersion table line " + std::to_string(line_no) + ": trailing field");
        samples.push_back(s);
    }
    return DispersionModel(std::move(samples));
}

DispersionModel load_dispersion_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("dispersion table: cannot open " + path.string());
    return parse_dispersion_table(in);
}

void write_dispersion_table(std::ostream& out, const DispersionModel& model) {
    out << "# lambda_mm n kappa\n" << std::setprecision(17);
    for (const auto& s : model.samples()) out << s.wavelength << ' ' << s.n << ' ' << s.kappa << '\n';
}

// ---------------------------------------------------------------------------
// Apertures

void ApertureMask::validate() const {
    for (double t : transmission)
        if (!(t >= 0.0 && t <= 1.0)) throw Error("aperture: transmission outside [0, 1]");
}

bool pixel_in_window(int i, int n, double pitch, double center, double width) {
    // Work in pixel units; the small slack absorbs rounding of the edges.
    const double c = 0.5 * (n - 1) + center / pitch;
    const double half = 0.5 * width / pitch;
    constexpr double eps = 1e-9;
    return i >= c - half - eps && i < c + half - eps;
}

ApertureMask square_aperture(int ny, int nx, double pitch, double width, double offset_x, double offset_y) {
    ApertureMask m{RealGrid(ny, nx, 0.0), pitch, offset_x, offset_y};
    for (int y = 0; y < ny; ++y) {
        if (!pixel_in_window(y, ny, pitch, offset_y, width)) continue;
        for (int x = 0; x < nx; ++x)
            if (pixel_in_window(x, nx, pitch, offset_x, width)) m.transmission(y, x) = 1.0;
    }
    return m;
}

// ---------------------------------------------------------------------------
// Propagation

AsmPropagator::AsmPropagator(int ny, int nx, double pitch, double wavelength, double distance, PropagationOptions opts)
    : ny_(ny), nx_(nx), pitch_(pitch), wavelength_(wavelength), distance_(distance), opts_(opts) {
    if (opts.pad_factor < 1) throw PropagationError("propagate: pad factor must be >= 1");
    if (!std::isfinite(distance)) throw PropagationError("propagate: distance is not finite");
    const int my = ny * opts.pad_factor;
    const int mx = nx * opts.pad_factor;
    if (distance == 0.0) {
        // Evanescent waves decay as exp(-2 pi |d| ...), which is 1 at d = 0.
        transfer_.assign(static_cast<std::size_t>(my) * mx, cplx{1.0, 0.0});
        return;
    }
    transfer_.assign(static_cast<std::size_t>(my) * mx, cplx{});

    const double inv_l2 = 1.0 / (wavelength * wavelength);
    const double ad = std::abs(distance);
    auto band_limit = [&](int m) {
        const double df = 1.0 / (m * pitch);
        return 1.0 / (wavelength * std::sqrt(std::pow(2.0 * df * ad, 2) + 1.0));
    };
    const double fy_lim = band_limit(my);
    const double fx_lim = band_limit(mx);

    for (int ky = 0; ky < my; ++ky) {
        const double fy = fft_frequency(ky, my, pitch);
        for (int kx = 0; kx < mx; ++kx) {
            const double fx = fft_frequency(kx, mx, pitch);
            const double arg = inv_l2 - fx * fx - fy * fy;
            if (arg <= 0.0) continue;  // evanescent
            if (opts.anti_alias && (std::abs(fx) >= fx_lim || std::abs(fy) >= fy_lim)) continue;
            transfer_[static_cast<std::size_t>(ky) * mx + kx] = std::polar(1.0, kTwoPi * distance * std::sqrt(arg));
        }
    }
}

void AsmPropagator::apply(const cplx* in, cplx* out, PaddedFft& ws, bool adjoint) const {
    if (ws.ny() != ny_ || ws.nx() != nx_ || ws.pad_factor() != opts_.pad_factor)
        throw ShapeError("propagate: workspace does not match propagator grid");
    ws.load(in);
    ws.forward();
    cplx* spec = ws.spectrum();
    const std::size_t n = transfer_.size();
    if (adjoint) {
        for (std::size_t i = 0; i < n; ++i) spec[i] *= std::conj(transfer_[i]);
    } else {
        for (std::size_t i = 0; i < n; ++i) spec[i] *= transfer_[i];
    }
    ws.inverse();
    ws.store(out);
}

double AsmPropagator::passband_fraction() const {
    const auto passed = std::count_if(transfer_.begin(), transfer_.end(), [](const cplx& h) { return h != cplx{}; });
    return static_cast<double>(passed) / static_cast<double>(transfer_.size());
}

Wavefield propagate(const Wavefield& field, double distance, const PropagationOptions& opts) {
    if (!all_finite(field.values())) throw PropagationError("propagate: field contains non-finite values");
    if (!std::isfinite(distance)) throw PropagationError("propagate: distance is not finite");
    AsmPropagator prop(field.ny(), field.nx(), field.pitch(), field.wavelength(), distance, opts);
    PaddedFft ws(field.ny(), field.nx(), opts.pad_factor);
    ComplexGrid out(field.ny(), field.nx());
    prop.apply(field.values().data(), out.data(), ws);
    return field.with_values(std::move(out));
}

// ---------------------------------------------------------------------------
// Materials and masks

cplx transmission_coefficient(MaterialIndex index, double thickness, double wavelength) {
    const double k = kTwoPi * thickness / wavelength;
    return std::polar(std::exp(-index.kappa * k), (index.n - 1.0) * k);
}

Wavefield layer_transmit(const Wavefield& field, const RealGrid& thickness, const DispersionModel& dispersion) {
    require_same_shape(field.values(), thickness, "layer_transmit");
    const MaterialIndex idx = dispersion.lookup(field.wavelength());
    ComplexGrid out = field.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double h = thickness[i];
        if (!(h >= 0.0)) throw ThicknessError("layer_transmit: negative or non-finite thickness");
        out[i] *= transmission_coefficient(idx, h, field.wavelength());
    }
    return field.with_values(std::move(out));
}

Wavefield apply_aperture(const Wavefield& field, const ApertureMask& mask) {
    require_same_shape(field.values(), mask.transmission, "apply_aperture");
    mask.validate();
    ComplexGrid out = field.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask.transmission[i];
    return field.with_values(std::move(out));
}

double total_power(const Wavefield& field) {
    double sum = 0.0;
    for (const cplx& u : field.values()) sum += std::norm(u);
    return sum * field.pitch() * field.pitch();
}

cplx inner_product(const Wavefield& u, const Wavefield& v) {
    require_same_shape(u.values(), v.values(), "inner_product");
    cplx sum{};
    for (std::size_t i = 0; i < u.values().size(); ++i) sum += u.values()[i] * std::conj(v.values()[i]);
    return sum * (u.pitch() * u.pitch());
}

}  // namespace diffspec
