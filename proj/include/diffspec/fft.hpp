#pragma once

#include "diffspec/grid.hpp"

namespace diffspec {

/// Zero-padded 2-D FFT workspace for an ny x nx field embedded at the center of a
/// (pad*ny) x (pad*nx) buffer. Row transforms skip the all-zero padding rows on the
/// way in and the discarded rows on the way out.
///
/// Not thread-safe: use one workspace per thread.
class PaddedFft {
public:
    PaddedFft(int ny, int nx, int pad_factor);
    ~PaddedFft();
    PaddedFft(const PaddedFft&) = delete;
    PaddedFft& operator=(const PaddedFft&) = delete;
    PaddedFft(PaddedFft&&) noexcept;
    PaddedFft& operator=(PaddedFft&&) noexcept;

    int ny() const { return ny_; }
    int nx() const { return nx_; }
    int padded_ny() const { return my_; }
    int padded_nx() const { return mx_; }
    int pad_factor() const { return pad_; }

    /// Zero the buffer and place `field` (ny*nx, row-major) at the center.
    void load(const cplx* field);
    void forward();
    void inverse();
    /// Copy the central ny x nx block to `out`, applying the inverse-transform 1/(my*mx) scale.
    void store(cplx* out) const;

    cplx* spectrum() { return buf_; }
    const cplx* spectrum() const { return buf_; }

private:
    void release();

    int ny_ = 0, nx_ = 0, pad_ = 0, my_ = 0, mx_ = 0, oy_ = 0, ox_ = 0;
    cplx* buf_ = nullptr;
    void* rows_fwd_ = nullptr;
    void* cols_fwd_ = nullptr;
    void* cols_inv_ = nullptr;
    void* rows_inv_ = nullptr;
};

}  // namespace diffspec
