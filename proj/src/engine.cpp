#include "diffspec/engine.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace diffspec {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

}  // namespace

EngineWorkspace::EngineWorkspace(int ny, int nx, int pad_factor)
    : fft(ny, nx, pad_factor),
      a(static_cast<std::size_t>(ny) * nx),
      b(static_cast<std::size_t>(ny) * nx) {}

OpticalEngine::OpticalEngine(const DiffractiveModel& model) : model_(model), ny_(model.geometry.ny), nx_(model.geometry.nx) {
    model_.validate();
    const Geometry& g = model_.geometry;
    const std::size_t n = static_cast<std::size_t>(ny_) * nx_;
    const int L = g.layer_count();

    const ApertureMask in_ap = square_aperture(ny_, nx_, g.pitch, g.input_aperture_width);
    out_aperture_.assign(n, 1.0);
    if (g.output_aperture_width) {
        const ApertureMask out_ap =
            square_aperture(ny_, nx_, g.pitch, *g.output_aperture_width, g.detector.center_x, g.detector.center_y);
        for (std::size_t i = 0; i < n; ++i) out_aperture_[i] = out_ap.transmission[i] * out_ap.transmission[i];
    }

    // Validates that the detector lies inside the grid.
    detector_integrate(Wavefield::plane_wave(ny_, nx_, g.pitch, 1.0), g.detector);
    const double guard_width = g.detector.width + 2.0 * g.detector.guard_band;
    for (int y = 0; y < ny_; ++y) {
        for (int x = 0; x < nx_; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * nx_ + x;
            const bool in_det = pixel_in_window(y, ny_, g.pitch, g.detector.center_y, g.detector.width) &&
                                pixel_in_window(x, nx_, g.pitch, g.detector.center_x, g.detector.width);
            const bool in_guard = pixel_in_window(y, ny_, g.pitch, g.detector.center_y, guard_width) &&
                                  pixel_in_window(x, nx_, g.pitch, g.detector.center_x, guard_width);
            if (in_det)
                detector_px_.push_back(i);
            else if (in_guard)
                guard_px_.push_back(i);
        }
    }

    PaddedFft ws(ny_, nx_, g.propagation.pad_factor);
    for (double lambda : model_.plan.wavelengths) {
        Lambda pl;
        pl.wavelength = lambda;
        const MaterialIndex idx = model_.dispersion.lookup(lambda);
        pl.dt_dh = cplx(-kTwoPi * idx.kappa / lambda, kTwoPi * (idx.n - 1.0) / lambda);

        std::vector<cplx> aperture(n);
        double p_in = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            aperture[i] = in_ap.transmission[i];
            p_in += in_ap.transmission[i] * in_ap.transmission[i];
        }
        input_power_.push_back(p_in * g.pitch * g.pitch);

        AsmPropagator to_object(ny_, nx_, g.pitch, lambda, g.spacings[0], g.propagation);
        pl.illumination.resize(n);
        to_object.apply(aperture.data(), pl.illumination.data(), ws);

        for (int l = 0; l <= L; ++l)
            pl.props.emplace_back(ny_, nx_, g.pitch, lambda, g.spacings[static_cast<std::size_t>(l) + 1], g.propagation);
        per_lambda_.push_back(std::move(pl));
    }
    set_layers(model_.layers);
}

void OpticalEngine::set_layers(const std::vector<ThicknessMap>& layers) {
    if (layers.size() != model_.layers.size()) throw Error("engine: layer count changed");
    const std::size_t n = static_cast<std::size_t>(ny_) * nx_;
    for (const auto& l : layers)
        if (l.latent.ny() != ny_ || l.latent.nx() != nx_) throw ShapeError("engine: layer grid does not match geometry");
    model_.layers = layers;
    sig_slope_.assign(layers.size() * n, 0.0);
    std::vector<RealGrid> thickness;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        thickness.push_back(layers[l].thickness());
        for (std::size_t i = 0; i < n; ++i) {
            const double s = sigmoid(layers[l].latent[i]);
            sig_slope_[l * n + i] = layers[l].h_range * s * (1.0 - s);
        }
    }
    for (auto& pl : per_lambda_) {
        const MaterialIndex idx = model_.dispersion.lookup(pl.wavelength);
        pl.transmission.assign(layers.size(), std::vector<cplx>(n));
        for (std::size_t l = 0; l < layers.size(); ++l)
            for (std::size_t i = 0; i < n; ++i)
                pl.transmission[l][i] = transmission_coefficient(idx, thickness[l][i], pl.wavelength);
    }
}

EngineWorkspace OpticalEngine::make_workspace() const {
    return EngineWorkspace(ny_, nx_, model_.geometry.propagation.pad_factor);
}

void OpticalEngine::check_shifts(std::span<const LayerShift> shifts) const {
    if (shifts.empty()) return;
    if (shifts.size() != model_.layers.size()) throw Error("forward: expected one shift per layer");
    for (const auto& s : shifts)
        if (std::abs(s.dx) >= nx_ || std::abs(s.dy) >= ny_) throw Error("forward: layer shift pushes the layer off the grid");
}

void OpticalEngine::transmit(const std::vector<cplx>& t, LayerShift shift, cplx* field) const {
    if (shift.dx == 0 && shift.dy == 0) {
        for (std::size_t i = 0; i < t.size(); ++i) field[i] *= t[i];
        return;
    }
    // Shifted layer: T(y, x) = t(y - dy, x - dx); uncovered pixels are opaque.
    for (int y = 0; y < ny_; ++y) {
        const int sy = y - shift.dy;
        cplx* row = field + static_cast<std::size_t>(y) * nx_;
        if (sy < 0 || sy >= ny_) {
            std::fill(row, row + nx_, cplx{});
            continue;
        }
        const cplx* trow = t.data() + static_cast<std::size_t>(sy) * nx_;
        for (int x = 0; x < nx_; ++x) {
            const int sx = x - shift.dx;
            row[x] = (sx < 0 || sx >= nx_) ? cplx{} : row[x] * trow[sx];
        }
    }
}

PlanePowers OpticalEngine::measure(const std::vector<cplx>& out, double input_power) const {
    const double area = model_.geometry.pitch * model_.geometry.pitch;
    PlanePowers p;
    p.input = input_power;
    double full = 0.0;
    for (const cplx& u : out) full += std::norm(u);
    double det = 0.0;
    for (std::size_t i : detector_px_) det += out_aperture_[i] * std::norm(out[i]);
    double guard = 0.0;
    for (std::size_t i : guard_px_) guard += std::norm(out[i]);
    p.full = full * area;
    p.detected = det * area;
    p.guard = guard * area;
    return p;
}

std::vector<PlanePowers> OpticalEngine::forward(const RealGrid& object, std::span<const LayerShift> shifts,
                                                EngineWorkspace& ws, ForwardTrace* trace) const {
    if (object.ny() != ny_ || object.nx() != nx_) throw ShapeError("forward: object grid does not match geometry");
    check_shifts(shifts);
    const std::size_t n = static_cast<std::size_t>(ny_) * nx_;
    const std::size_t L = model_.layers.size();
    std::vector<PlanePowers> powers(per_lambda_.size());
    if (trace) {
        trace->shifts.assign(shifts.begin(), shifts.end());
        trace->fields.resize(per_lambda_.size());
    }
    std::vector<cplx>& cur = ws.a;
    for (std::size_t k = 0; k < per_lambda_.size(); ++k) {
        const Lambda& pl = per_lambda_[k];
        for (std::size_t i = 0; i < n; ++i) cur[i] = pl.illumination[i] * object[i];
        if (trace) {
            trace->fields[k].resize(L + 2);
            trace->fields[k][0] = cur;
        }
        for (std::size_t l = 0; l < L; ++l) {
            pl.props[l].apply(cur.data(), cur.data(), ws.fft);
            if (trace) trace->fields[k][l + 1] = cur;
            transmit(pl.transmission[l], shifts.empty() ? LayerShift{} : shifts[l], cur.data());
        }
        pl.props[L].apply(cur.data(), cur.data(), ws.fft);
        for (const cplx& u : cur)
            if (!std::isfinite(u.real()) || !std::isfinite(u.imag()))
                throw PropagationError("forward: non-finite output field at wavelength " + std::to_string(pl.wavelength));
        if (trace) trace->fields[k][L + 1] = cur;
        powers[k] = measure(cur, input_power_[k]);
    }
    if (trace) trace->powers = powers;
    return powers;
}

void OpticalEngine::backward(const ForwardTrace& trace, const PowerGradients& grads, EngineWorkspace& ws,
                             std::vector<RealGrid>* latent_grads, RealGrid* object_grad) const {
    const std::size_t K = per_lambda_.size();
    const std::size_t L = model_.layers.size();
    const std::size_t n = static_cast<std::size_t>(ny_) * nx_;
    if (trace.fields.size() != K) throw Error("backward: trace does not match engine");
    if (grads.detected.size() != K || grads.guard.size() != K || grads.full.size() != K)
        throw Error("backward: gradient vectors must have one entry per wavelength");
    if (latent_grads) {
        latent_grads->resize(L);
        for (auto& g : *latent_grads)
            if (g.ny() != ny_ || g.nx() != nx_) g = RealGrid(ny_, nx_, 0.0);
    }
    if (object_grad && (object_grad->ny() != ny_ || object_grad->nx() != nx_)) *object_grad = RealGrid(ny_, nx_, 0.0);
    if (!latent_grads && !object_grad) return;

    const double two_area = 2.0 * model_.geometry.pitch * model_.geometry.pitch;
    std::vector<cplx>& bar = ws.a;
    for (std::size_t k = 0; k < K; ++k) {
        const Lambda& pl = per_lambda_[k];
        const auto& f = trace.fields[k];
        const std::vector<cplx>& g = f[L + 1];

        // d(power)/d(conj field) seeds.
        const double cf = two_area * grads.full[k];
        for (std::size_t i = 0; i < n; ++i) bar[i] = cf * g[i];
        const double cg = two_area * grads.guard[k];
        if (cg != 0.0)
            for (std::size_t i : guard_px_) bar[i] += cg * g[i];
        const double cd = two_area * grads.detected[k];
        if (cd != 0.0)
            for (std::size_t i : detector_px_) bar[i] += cd * out_aperture_[i] * g[i];

        pl.props[L].apply(bar.data(), bar.data(), ws.fft, true);
        for (std::size_t l = L; l-- > 0;) {
            const std::vector<cplx>& arriving = f[l + 1];
            const std::vector<cplx>& t = pl.transmission[l];
            const LayerShift s = trace.shifts.empty() ? LayerShift{} : trace.shifts[l];
            RealGrid* lg = latent_grads ? &(*latent_grads)[l] : nullptr;
            const double* slope = sig_slope_.data() + l * n;
            for (int y = 0; y < ny_; ++y) {
                const int sy = y - s.dy;
                for (int x = 0; x < nx_; ++x) {
                    const std::size_t p = static_cast<std::size_t>(y) * nx_ + x;
                    const int sx = x - s.dx;
                    if (sy < 0 || sy >= ny_ || sx < 0 || sx >= nx_) {
                        bar[p] = cplx{};
                        continue;
                    }
                    const std::size_t q = static_cast<std::size_t>(sy) * nx_ + sx;
                    if (lg) {
                        // dL/dh = Re(conj(tbar) * dt/dh), tbar = conj(arriving) * bar.
                        const cplx dt = t[q] * pl.dt_dh;
                        (*lg)[q] += (arriving[p] * std::conj(bar[p]) * dt).real() * slope[q];
                    }
                    bar[p] *= std::conj(t[q]);
                }
            }
            if (l == 0 && !object_grad) break;
            pl.props[l].apply(bar.data(), bar.data(), ws.fft, true);
        }
        if (object_grad) {
            for (std::size_t i = 0; i < n; ++i) (*object_grad)[i] += (bar[i] * std::conj(pl.illumination[i])).real();
        }
    }
}

std::vector<cplx> OpticalEngine::output_plane(const RealGrid& object, std::span<const LayerShift> shifts, std::size_t k,
                                              EngineWorkspace& ws) const {
    if (k >= per_lambda_.size()) throw Error("output_plane: wavelength index out of range");
    check_shifts(shifts);
    const std::size_t n = static_cast<std::size_t>(ny_) * nx_;
    const Lambda& pl = per_lambda_[k];
    std::vector<cplx> cur(n);
    for (std::size_t i = 0; i < n; ++i) cur[i] = pl.illumination[i] * object[i];
    for (std::size_t l = 0; l < model_.layers.size(); ++l) {
        pl.props[l].apply(cur.data(), cur.data(), ws.fft);
        transmit(pl.transmission[l], shifts.empty() ? LayerShift{} : shifts[l], cur.data());
    }
    pl.props.back().apply(cur.data(), cur.data(), ws.fft);
    if (const auto& slab = model_.geometry.slab) {
        // Uniform phase over the output plane; detected power is unaffected.
        const cplx phase = std::polar(1.0, kTwoPi * (slab->n - 1.0) * slab->thickness / pl.wavelength);
        for (auto& u : cur) u *= phase;
    }
    return cur;
}

}  // namespace diffspec
