#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace diffspec {

using cplx = std::complex<double>;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

/// Dense row-major 2-D array. Index as g(y, x).
template <typename T>
class Grid {
public:
    Grid() = default;
    Grid(int ny, int nx, T fill = T{}) : ny_(ny), nx_(nx), data_(static_cast<std::size_t>(check(ny, nx)), fill) {}
    Grid(int ny, int nx, std::vector<T> values) : ny_(ny), nx_(nx), data_(std::move(values)) {
        if (data_.size() != static_cast<std::size_t>(check(ny, nx)))
            throw ShapeError("grid: value count does not match " + std::to_string(ny) + "x" + std::to_string(nx));
    }

    int ny() const { return ny_; }
    int nx() const { return nx_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T& operator()(int y, int x) { return data_[static_cast<std::size_t>(y) * nx_ + x]; }
    const T& operator()(int y, int x) const { return data_[static_cast<std::size_t>(y) * nx_ + x]; }
    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    std::span<T> span() { return data_; }
    std::span<const T> span() const { return data_; }
    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    const std::vector<T>& values() const { return data_; }

    auto begin() { return data_.begin(); }
    auto end() { return data_.end(); }
    auto begin() const { return data_.begin(); }
    auto end() const { return data_.end(); }

    template <typename U>
    bool same_shape(const Grid<U>& o) const {
        return ny_ == o.ny() && nx_ == o.nx();
    }

    bool operator==(const Grid&) const = default;

private:
    static long check(int ny, int nx) {
        if (ny < 0 || nx < 0) throw ShapeError("grid: negative dimension");
        return static_cast<long>(ny) * nx;
    }

    int ny_ = 0;
    int nx_ = 0;
    std::vector<T> data_;
};

using RealGrid = Grid<double>;
using ComplexGrid = Grid<cplx>;

template <typename A, typename B>
void require_same_shape(const Grid<A>& a, const Grid<B>& b, const char* what) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(what) + ": grid shapes differ (" + std::to_string(a.ny()) + "x" +
                         std::to_string(a.nx()) + " vs " + std::to_string(b.ny()) + "x" + std::to_string(b.nx()) + ")");
}

/// Physical coordinate (mm) of pixel center `i` on an axis of `n` pixels, origin at the grid center.
inline double pixel_center(int i, int n, double pitch) { return (i - 0.5 * (n - 1)) * pitch; }

}  // namespace diffspec
