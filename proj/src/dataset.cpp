#include "diffspec/dataset.hpp"

#include <cmath>
#include <fstream>
#include <iterator>

namespace diffspec {

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t at) {
    return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
           std::uint32_t{b[at + 3]};
}

}  // namespace

IdxArray parse_idx(std::span<const std::uint8_t> bytes, const std::string& name) {
    if (bytes.size() < 4) throw DatasetError(name + ": truncated header");
    if (bytes[0] != 0 || bytes[1] != 0) throw DatasetError(name + ": bad magic number");
    IdxArray out;
    out.type = bytes[2];
    if (out.type != 0x08) throw DatasetError(name + ": only unsigned-byte IDX payloads are supported");
    const std::size_t rank = bytes[3];
    if (rank == 0) throw DatasetError(name + ": bad magic number (rank 0)");
    const std::size_t header = 4 + 4 * rank;
    if (bytes.size() < header) throw DatasetError(name + ": truncated header");
    std::size_t count = 1;
    for (std::size_t d = 0; d < rank; ++d) {
        out.dims.push_back(read_be32(bytes, 4 + 4 * d));
        count *= out.dims.back();
    }
    if (bytes.size() - header < count)
        throw DatasetError(name + ": truncated payload (expected " + std::to_string(count) + " bytes, found " +
                           std::to_string(bytes.size() - header) + ")");
    if (bytes.size() - header > count) throw DatasetError(name + ": trailing bytes after payload");
    out.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
    return out;
}

IdxArray read_idx(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_idx(bytes, path.filename().string());
}

std::string to_string(DatasetKind kind) { return kind == DatasetKind::mnist ? "mnist" : "emnist-letters"; }

DatasetKind dataset_kind_from_string(const std::string& s) {
    if (s == "mnist") return DatasetKind::mnist;
    if (s == "emnist-letters" || s == "emnist_letters") return DatasetKind::emnist_letters;
    throw DatasetError("unknown dataset kind '" + s + "'");
}

ImageSet ImageSet::head(std::size_t n) const { return slice(0, n); }

ImageSet ImageSet::slice(std::size_t begin, std::size_t n) const {
    if (begin > size()) begin = size();
    n = std::min(n, size() - begin);
    const std::size_t px = static_cast<std::size_t>(rows) * cols;
    ImageSet out{rows, cols, class_count, {}, {}};
    out.pixels.assign(pixels.begin() + static_cast<std::ptrdiff_t>(begin * px),
                      pixels.begin() + static_cast<std::ptrdiff_t>((begin + n) * px));
    out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin),
                      labels.begin() + static_cast<std::ptrdiff_t>(begin + n));
    return out;
}

ImageSet load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, DatasetKind kind,
                  std::optional<std::size_t> limit) {
    const IdxArray im = read_idx(images);
    const IdxArray lb = read_idx(labels);
    if (im.dims.size() != 3) throw DatasetError(images.filename().string() + ": expected a rank-3 image array (magic 0x00000803)");
    if (lb.dims.size() != 1) throw DatasetError(labels.filename().string() + ": expected a rank-1 label array (magic 0x00000801)");
    if (im.dims[0] != lb.dims[0])
        throw DatasetError("image/label count mismatch: " + std::to_string(im.dims[0]) + " images, " +
                           std::to_string(lb.dims[0]) + " labels");

    ImageSet out;
    out.rows = static_cast<int>(im.dims[1]);
    out.cols = static_cast<int>(im.dims[2]);
    out.class_count = kind == DatasetKind::mnist ? 10 : 26;
    std::size_t n = im.dims[0];
    if (limit) n = std::min(n, *limit);
    const std::size_t px = static_cast<std::size_t>(out.rows) * out.cols;
    out.pixels.resize(n * px);
    out.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t* src = im.data.data() + i * px;
        float* dst = out.pixels.data() + i * px;
        if (kind == DatasetKind::emnist_letters) {
            // EMNIST stores images transposed relative to MNIST.
            for (int r = 0; r < out.rows; ++r)
                for (int c = 0; c < out.cols; ++c)
                    dst[static_cast<std::size_t>(r) * out.cols + c] = src[static_cast<std::size_t>(c) * out.rows + r] / 255.0f;
        } else {
            for (std::size_t p = 0; p < px; ++p) dst[p] = src[p] / 255.0f;
        }
        int label = lb.data[i];
        if (kind == DatasetKind::emnist_letters) label -= 1;
        if (label < 0 || label >= out.class_count)
            throw DatasetError("label " + std::to_string(lb.data[i]) + " out of range for " + to_string(kind));
        out.labels[i] = label;
    }
    return out;
}

ObjectEncoder::ObjectEncoder(const Geometry& geometry, const ObjectEncoding& encoding, int rows, int cols)
    : enc_(encoding), ny_(geometry.ny), nx_(geometry.nx), rows_(rows), cols_(cols), pitch_(geometry.pitch) {
    if (rows < 1 || cols < 1) throw DatasetError("object encoder: empty image");
    window_px_ = static_cast<int>(std::lround(encoding.window / geometry.pitch));
    if (window_px_ < 1 || window_px_ > std::min(ny_, nx_))
        throw DatasetError("object encoder: input window does not fit the object grid");
    const int oy = (ny_ - window_px_) / 2;
    const int ox = (nx_ - window_px_) / 2;
    source_.assign(static_cast<std::size_t>(ny_) * nx_, -1);
    for (int wy = 0; wy < window_px_; ++wy) {
        const int r = static_cast<int>(static_cast<long>(wy) * rows / window_px_);
        for (int wx = 0; wx < window_px_; ++wx) {
            const int c = static_cast<int>(static_cast<long>(wx) * cols / window_px_);
            source_[static_cast<std::size_t>(wy + oy) * nx_ + (wx + ox)] = r * cols + c;
        }
    }
}

void ObjectEncoder::encode_into(std::span<const float> image, RealGrid& out) const {
    if (image.size() != static_cast<std::size_t>(rows_) * cols_) throw ShapeError("object encoder: image size mismatch");
    if (out.ny() != ny_ || out.nx() != nx_) out = RealGrid(ny_, nx_);
    for (std::size_t i = 0; i < source_.size(); ++i) {
        const int s = source_[i];
        if (s < 0) {
            out[i] = 0.0;
            continue;
        }
        const double v = image[static_cast<std::size_t>(s)];
        out[i] = enc_.binarize ? (v >= enc_.threshold ? 1.0 : 0.0) : std::clamp(v, 0.0, 1.0);
    }
}

ObjectImage ObjectEncoder::encode(std::span<const float> image) const {
    ObjectImage o{RealGrid(ny_, nx_), pitch_};
    encode_into(image, o.amplitude);
    return o;
}

ObjectImage ObjectEncoder::encode_amplitude(std::span<const double> image) const {
    if (image.size() != static_cast<std::size_t>(rows_) * cols_) throw ShapeError("object encoder: image size mismatch");
    ObjectImage o{RealGrid(ny_, nx_, 0.0), pitch_};
    for (std::size_t i = 0; i < source_.size(); ++i)
        if (source_[i] >= 0) o.amplitude[i] = std::clamp(image[static_cast<std::size_t>(source_[i])], 0.0, 1.0);
    return o;
}

std::vector<double> ObjectEncoder::pullback(const RealGrid& object_grad) const {
    if (object_grad.ny() != ny_ || object_grad.nx() != nx_) throw ShapeError("object encoder: gradient grid mismatch");
    std::vector<double> g(static_cast<std::size_t>(rows_) * cols_, 0.0);
    for (std::size_t i = 0; i < source_.size(); ++i)
        if (source_[i] >= 0) g[static_cast<std::size_t>(source_[i])] += object_grad[i];
    return g;
}

ObjectImage prepare_object(std::span<const float> image, int rows, int cols, const Geometry& geometry,
                           const ObjectEncoding& encoding) {
    return ObjectEncoder(geometry, encoding, rows, cols).encode(image);
}

}  // namespace diffspec
