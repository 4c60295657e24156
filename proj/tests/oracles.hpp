#pragma once

// Brute-force reference implementations. Deliberately slow and written without the library's
// FFT, aperture or detector helpers.

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "diffspec/engine.hpp"
#include "diffspec/model.hpp"

namespace oracle {

using diffspec::cplx;
using diffspec::ComplexGrid;
using diffspec::RealGrid;

inline constexpr double kPi = std::numbers::pi;

/// First Rayleigh-Sommerfeld integral evaluated by direct summation on the same grid.
/// Kernel for exp(+ikr) waves: z / (2 pi r^2) (1 / r - i k) exp(i k r).
inline ComplexGrid rs_direct(const ComplexGrid& u, double pitch, double lambda, double z) {
    const int ny = u.ny(), nx = u.nx();
    const double k = 2.0 * kPi / lambda;
    ComplexGrid out(ny, nx);
    for (int oy = 0; oy < ny; ++oy)
        for (int ox = 0; ox < nx; ++ox) {
            cplx acc{};
            for (int sy = 0; sy < ny; ++sy)
                for (int sx = 0; sx < nx; ++sx) {
                    const double dx = (ox - sx) * pitch, dy = (oy - sy) * pitch;
                    const double r = std::sqrt(dx * dx + dy * dy + z * z);
                    const cplx h = z / (2.0 * kPi * r * r) * cplx(1.0 / r, -k) * std::polar(1.0, k * r);
                    acc += u(sy, sx) * h;
                }
            out(oy, ox) = acc * pitch * pitch;
        }
    return out;
}

/// Band-limited random field: a few low-frequency plane-wave components under a Hann window.
inline ComplexGrid smooth_field(int n, double pitch, double lambda, std::uint64_t seed, double max_freq_fraction = 0.3) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double fmax = max_freq_fraction / lambda;
    struct Mode {
        double fx, fy;
        cplx a;
    };
    std::vector<Mode> modes;
    for (int m = 0; m < 6; ++m) modes.push_back({fmax * u(rng), fmax * u(rng), cplx(u(rng), u(rng))});
    ComplexGrid g(n, n);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            const double wy = 0.5 - 0.5 * std::cos(2.0 * kPi * (y + 1) / (n + 1));
            const double wx = 0.5 - 0.5 * std::cos(2.0 * kPi * (x + 1) / (n + 1));
            cplx v{};
            for (const auto& md : modes) v += md.a * std::polar(1.0, 2.0 * kPi * (md.fx * x + md.fy * y) * pitch);
            g(y, x) = v * wx * wy;
        }
    return g;
}

inline double rel_l2(const ComplexGrid& a, const ComplexGrid& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += std::norm(a[i] - b[i]);
        den += std::norm(b[i]);
    }
    return std::sqrt(num / den);
}

/// Naive 2-D DFT (sign -1 forward, +1 inverse, unnormalized).
inline std::vector<cplx> dft2(const std::vector<cplx>& in, int my, int mx, int sign) {
    std::vector<cplx> tmp(in.size()), out(in.size());
    for (int y = 0; y < my; ++y)
        for (int k = 0; k < mx; ++k) {
            cplx acc{};
            for (int x = 0; x < mx; ++x) acc += in[y * mx + x] * std::polar(1.0, sign * 2.0 * kPi * k * x / mx);
            tmp[y * mx + k] = acc;
        }
    for (int k = 0; k < my; ++k)
        for (int x = 0; x < mx; ++x) {
            cplx acc{};
            for (int y = 0; y < my; ++y) acc += tmp[y * mx + x] * std::polar(1.0, sign * 2.0 * kPi * k * y / my);
            out[k * mx + x] = acc;
        }
    return out;
}

/// Angular-spectrum propagation by naive DFT: centered zero padding, evanescent cut and the
/// optional aliasing band limit |f| < 1 / (lambda sqrt((2 d df)^2 + 1)).
inline std::vector<cplx> asm_direct(const std::vector<cplx>& u, int ny, int nx, double pitch, double lambda, double d,
                                    int pad, bool anti_alias) {
    const int my = ny * pad, mx = nx * pad, oy = (my - ny) / 2, ox = (mx - nx) / 2;
    std::vector<cplx> buf(static_cast<std::size_t>(my) * mx);
    for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x) buf[(y + oy) * mx + x + ox] = u[y * nx + x];
    auto spec = dft2(buf, my, mx, -1);
    auto freq = [&](int k, int m) {
        const int s = (2 * k < m) ? k : k - m;
        return s / (m * pitch);
    };
    const double lim_y = 1.0 / (lambda * std::sqrt(std::pow(2.0 * std::abs(d) / (my * pitch), 2) + 1.0));
    const double lim_x = 1.0 / (lambda * std::sqrt(std::pow(2.0 * std::abs(d) / (mx * pitch), 2) + 1.0));
    for (int ky = 0; ky < my; ++ky)
        for (int kx = 0; kx < mx; ++kx) {
            const double fy = freq(ky, my), fx = freq(kx, mx);
            const double arg = 1.0 / (lambda * lambda) - fx * fx - fy * fy;
            cplx h{};
            if (arg > 0.0 && !(anti_alias && (std::abs(fx) >= lim_x || std::abs(fy) >= lim_y)))
                h = std::polar(1.0, 2.0 * kPi * d * std::sqrt(arg));
            spec[ky * mx + kx] *= h;
        }
    auto back = dft2(spec, my, mx, +1);
    std::vector<cplx> out(static_cast<std::size_t>(ny) * nx);
    for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x) out[y * nx + x] = back[(y + oy) * mx + x + ox] / double(my * mx);
    return out;
}

/// Pixel-center membership in a centered window, by explicit coordinates.
inline bool inside(int i, int n, double pitch, double center, double width) {
    const double c = (i - 0.5 * (n - 1)) * pitch;
    return c >= center - 0.5 * width - 1e-9 * pitch && c < center + 0.5 * width - 1e-9 * pitch;
}

/// Full forward chain rebuilt from scratch: aperture -> object -> layers -> output plane.
inline std::vector<diffspec::PlanePowers> forward_chain(const diffspec::DiffractiveModel& m, const RealGrid& object,
                                                        const std::vector<diffspec::LayerShift>& shifts = {}) {
    const auto& g = m.geometry;
    const int ny = g.ny, nx = g.nx, L = g.layer_count();
    const double p = g.pitch;
    std::vector<diffspec::PlanePowers> res;
    for (double lambda : m.plan.wavelengths) {
        const auto idx = m.dispersion.lookup(lambda);
        std::vector<cplx> u(static_cast<std::size_t>(ny) * nx);
        double p_in = 0.0;
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x)
                if (inside(y, ny, p, 0.0, g.input_aperture_width) && inside(x, nx, p, 0.0, g.input_aperture_width)) {
                    u[y * nx + x] = 1.0;
                    p_in += p * p;
                }
        auto prop = [&](std::size_t s) {
            u = asm_direct(u, ny, nx, p, lambda, g.spacings[s], g.propagation.pad_factor, g.propagation.anti_alias);
        };
        prop(0);
        for (std::size_t i = 0; i < u.size(); ++i) u[i] *= object[i];
        for (int l = 0; l < L; ++l) {
            prop(static_cast<std::size_t>(l) + 1);
            const auto& tm = m.layers[l];
            const diffspec::LayerShift sh = shifts.empty() ? diffspec::LayerShift{} : shifts[l];
            for (int y = 0; y < ny; ++y)
                for (int x = 0; x < nx; ++x) {
                    const int sy = y - sh.dy, sx = x - sh.dx;
                    cplx t{};
                    if (sy >= 0 && sy < ny && sx >= 0 && sx < nx) {
                        const double v = tm.latent(sy, sx);
                        const double h = tm.h_base + tm.h_range / (1.0 + std::exp(-v));
                        t = std::exp(cplx(-2.0 * kPi * idx.kappa * h / lambda, 2.0 * kPi * (idx.n - 1.0) * h / lambda));
                    }
                    u[y * nx + x] *= t;
                }
        }
        prop(static_cast<std::size_t>(L) + 1);
        diffspec::PlanePowers pw;
        pw.input = p_in;
        const auto& det = g.detector;
        const double gw = det.width + 2.0 * det.guard_band;
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x) {
                const double I = std::norm(u[y * nx + x]) * p * p;
                pw.full += I;
                const bool in_det = inside(y, ny, p, det.center_y, det.width) && inside(x, nx, p, det.center_x, det.width);
                const bool in_guard = inside(y, ny, p, det.center_y, gw) && inside(x, nx, p, det.center_x, gw);
                bool in_ap = true;
                if (g.output_aperture_width)
                    in_ap = inside(y, ny, p, det.center_y, *g.output_aperture_width) &&
                            inside(x, nx, p, det.center_x, *g.output_aperture_width);
                if (in_det && in_ap) pw.detected += I;
                if (in_guard && !in_det) pw.guard += I;
            }
        res.push_back(pw);
    }
    return res;
}

/// Small model for exhaustive checks: n x n grid at pitch 0.5, `layers` layers, `wl` wavelengths.
inline diffspec::DiffractiveModel toy_model(int n, int layers, int wl, std::uint64_t seed, double kappa = 0.01,
                                            double detector = 1.0) {
    diffspec::Geometry g;
    g.ny = g.nx = n;
    g.pitch = 0.5;
    g.spacings.assign(static_cast<std::size_t>(layers) + 2, 2.0);
    g.spacings.front() = 1.0;
    g.input_aperture_width = n * 0.5;
    g.output_aperture_width = std::nullopt;
    g.detector.width = detector;
    g.detector.guard_band = 0.5;
    const int classes = wl;
    auto plan = diffspec::WavelengthPlan::uniform(classes, diffspec::EncodingMode::plain, 1, 1.0, 1.0 + 0.2 * (wl - 1));
    if (wl == 1) plan.wavelengths = {1.0};
    auto disp = diffspec::DispersionModel::constant(1.7, kappa, 0.9, 1.6);
    return diffspec::make_model(g, plan, disp, seed);
}

}  // namespace oracle
