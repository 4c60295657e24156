#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "diffspec/model.hpp"

namespace diffspec {

class DatasetError : public Error {
public:
    using Error::Error;
};

/// Raw IDX container: big-endian magic (0x0000 | type | rank), rank dimension sizes, payload.
struct IdxArray {
    std::uint8_t type = 0x08;
    std::vector<std::uint32_t> dims;
    std::vector<std::uint8_t> data;
};

IdxArray read_idx(const std::filesystem::path& path);
IdxArray parse_idx(std::span<const std::uint8_t> bytes, const std::string& name = "idx");

enum class DatasetKind { mnist, emnist_letters };

std::string to_string(DatasetKind kind);
DatasetKind dataset_kind_from_string(const std::string& s);

/// Grayscale images scaled to [0, 1] with integer labels.
struct ImageSet {
    int rows = 28;
    int cols = 28;
    int class_count = 10;
    std::vector<float> pixels;
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
    std::span<const float> image(std::size_t i) const {
        return {pixels.data() + i * static_cast<std::size_t>(rows) * cols, static_cast<std::size_t>(rows) * cols};
    }
    /// First `n` samples (or all, if fewer).
    ImageSet head(std::size_t n) const;
    /// Samples [begin, begin + n).
    ImageSet slice(std::size_t begin, std::size_t n) const;
};

/// Load an images/labels IDX pair. EMNIST letters are transposed back to the MNIST orientation
/// and their labels shifted from 1..26 to 0..25.
ImageSet load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, DatasetKind kind,
                  std::optional<std::size_t> limit = std::nullopt);

struct ObjectEncoding {
    /// Side of the square input window the image is mapped onto (mm).
    double window = 10.0;
    /// Binary amplitude mask (threshold) or direct grayscale amplitude.
    bool binarize = true;
    double threshold = 0.5;

    bool operator==(const ObjectEncoding&) const = default;
};

/// Nearest-neighbour map from a rows x cols image onto the centered input window of the
/// object-plane grid. Pixels outside the window are opaque.
class ObjectEncoder {
public:
    ObjectEncoder(const Geometry& geometry, const ObjectEncoding& encoding, int rows = 28, int cols = 28);

    ObjectImage encode(std::span<const float> image) const;
    /// Grayscale encoding of a real-valued image regardless of the binarize flag.
    ObjectImage encode_amplitude(std::span<const double> image) const;
    void encode_into(std::span<const float> image, RealGrid& out) const;

    /// Pull an object-grid gradient back onto image pixels (sum over each pixel's footprint).
    std::vector<double> pullback(const RealGrid& object_grad) const;

    int window_pixels() const { return window_px_; }
    const ObjectEncoding& encoding() const { return enc_; }
    int rows() const { return rows_; }
    int cols() const { return cols_; }

private:
    ObjectEncoding enc_;
    int ny_, nx_, rows_, cols_, window_px_;
    double pitch_;
    std::vector<int> source_;  // per object pixel: image index or -1
};

/// Single-image convenience wrapper around ObjectEncoder.
ObjectImage prepare_object(std::span<const float> image, int rows, int cols, const Geometry& geometry,
                           const ObjectEncoding& encoding = {});

}  // namespace diffspec
