#include "diffspec/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cstring>
#include <mutex>
#include <utility>

namespace diffspec {

namespace {

// FFTW planning is not re-entrant.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

// FFTW_ESTIMATE keeps the chosen algorithm, and therefore every rounding, identical
// from one process to the next.
constexpr unsigned kPlanFlags = FFTW_ESTIMATE;

fftw_plan as_plan(void* p) { return static_cast<fftw_plan>(p); }

}  // namespace

PaddedFft::PaddedFft(int ny, int nx, int pad_factor) : ny_(ny), nx_(nx), pad_(pad_factor) {
    if (ny < 1 || nx < 1) throw ShapeError("fft: empty grid");
    if (pad_factor < 1) throw Error("fft: pad factor must be >= 1");
    my_ = ny * pad_factor;
    mx_ = nx * pad_factor;
    oy_ = (my_ - ny) / 2;
    ox_ = (mx_ - nx) / 2;

    std::lock_guard lock(planner_mutex());
    buf_ = reinterpret_cast<cplx*>(fftw_malloc(sizeof(fftw_complex) * static_cast<std::size_t>(my_) * mx_));
    if (!buf_) throw Error("fft: allocation failed");
    auto* b = reinterpret_cast<fftw_complex*>(buf_);
    auto* block_rows = b + static_cast<std::size_t>(oy_) * mx_;
    int n_row[] = {mx_};
    int n_col[] = {my_};
    rows_fwd_ = fftw_plan_many_dft(1, n_row, ny_, block_rows, nullptr, 1, mx_, block_rows, nullptr, 1, mx_,
                                   FFTW_FORWARD, kPlanFlags);
    cols_fwd_ = fftw_plan_many_dft(1, n_col, mx_, b, nullptr, mx_, 1, b, nullptr, mx_, 1, FFTW_FORWARD, kPlanFlags);
    cols_inv_ = fftw_plan_many_dft(1, n_col, mx_, b, nullptr, mx_, 1, b, nullptr, mx_, 1, FFTW_BACKWARD, kPlanFlags);
    rows_inv_ = fftw_plan_many_dft(1, n_row, ny_, block_rows, nullptr, 1, mx_, block_rows, nullptr, 1, mx_,
                                   FFTW_BACKWARD, kPlanFlags);
    if (!rows_fwd_ || !cols_fwd_ || !cols_inv_ || !rows_inv_) {
        release();
        throw Error("fft: planning failed");
    }
}

PaddedFft::~PaddedFft() { release(); }

PaddedFft::PaddedFft(PaddedFft&& o) noexcept { *this = std::move(o); }

PaddedFft& PaddedFft::operator=(PaddedFft&& o) noexcept {
    if (this != &o) {
        release();
        ny_ = o.ny_, nx_ = o.nx_, pad_ = o.pad_, my_ = o.my_, mx_ = o.mx_, oy_ = o.oy_, ox_ = o.ox_;
        buf_ = std::exchange(o.buf_, nullptr);
        rows_fwd_ = std::exchange(o.rows_fwd_, nullptr);
        cols_fwd_ = std::exchange(o.cols_fwd_, nullptr);
        cols_inv_ = std::exchange(o.cols_inv_, nullptr);
        rows_inv_ = std::exchange(o.rows_inv_, nullptr);
    }
    return *this;
}

void PaddedFft::release() {
    if (!buf_ && !rows_fwd_) return;
    std::lock_guard lock(planner_mutex());
    for (void** p : {&rows_fwd_, &cols_fwd_, &cols_inv_, &rows_inv_}) {
        if (*p) fftw_destroy_plan(as_plan(*p));
        *p = nullptr;
    }
    if (buf_) fftw_free(buf_);
    buf_ = nullptr;
}

void PaddedFft::load(const cplx* field) {
    std::memset(static_cast<void*>(buf_), 0, sizeof(cplx) * static_cast<std::size_t>(my_) * mx_);
    for (int y = 0; y < ny_; ++y)
        std::copy_n(field + static_cast<std::size_t>(y) * nx_, nx_, buf_ + static_cast<std::size_t>(y + oy_) * mx_ + ox_);
}

void PaddedFft::forward() {
    fftw_execute(as_plan(rows_fwd_));
    fftw_execute(as_plan(cols_fwd_));
}

void PaddedFft::inverse() {
    fftw_execute(as_plan(cols_inv_));
    fftw_execute(as_plan(rows_inv_));
}

void PaddedFft::store(cplx* out) const {
    const double scale = 1.0 / (static_cast<double>(my_) * mx_);
    for (int y = 0; y < ny_; ++y) {
        const cplx* src = buf_ + static_cast<std::size_t>(y + oy_) * mx_ + ox_;
        cplx* dst = out + static_cast<std::size_t>(y) * nx_;
        for (int x = 0; x < nx_; ++x) dst[x] = src[x] * scale;
    }
}

}  // namespace diffspec
