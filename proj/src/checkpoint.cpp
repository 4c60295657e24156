#include "diffspec/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "diffspec/config.hpp"

namespace diffspec {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'D', 'F', 'S', 'P', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little, "checkpoint blobs are written in native little-endian order");

struct BlobWriter {
    std::vector<double> data;
    json index = json::array();

    void add(const std::string& name, std::span<const double> values) {
        index.push_back({{"name", name}, {"offset", data.size()}, {"count", values.size()}});
        data.insert(data.end(), values.begin(), values.end());
    }
};

struct BlobReader {
    const std::vector<double>& data;
    std::map<std::string, std::pair<std::size_t, std::size_t>> index;

    BlobReader(const std::vector<double>& d, const json& idx) : data(d) {
        for (const auto& e : idx) {
            const auto off = e.at("offset").get<std::size_t>();
            const auto n = e.at("count").get<std::size_t>();
            if (off + n > data.size()) throw CheckpointError("checkpoint: blob '" + e.at("name").get<std::string>() + "' out of range");
            index[e.at("name").get<std::string>()] = {off, n};
        }
    }

    std::vector<double> get(const std::string& name, std::size_t expected) const {
        auto it = index.find(name);
        if (it == index.end()) throw CheckpointError("checkpoint: missing blob '" + name + "'");
        if (it->second.second != expected) throw CheckpointError("checkpoint: blob '" + name + "' has the wrong size");
        return {data.begin() + static_cast<std::ptrdiff_t>(it->second.first),
                data.begin() + static_cast<std::ptrdiff_t>(it->second.first + it->second.second)};
    }
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    json header;
    header["format_version"] = kCheckpointFormatVersion;
    header["meta"] = ckpt.meta;
    BlobWriter blobs;
    if (ckpt.model) {
        const DiffractiveModel& m = *ckpt.model;
        m.validate();
        json jm;
        jm["geometry"] = to_json(m.geometry);
        jm["plan"] = to_json(m.plan);
        jm["dispersion_source"] = m.dispersion_source;
        jm["dispersion_samples"] = m.dispersion.samples().size();
        json layers = json::array();
        for (std::size_t l = 0; l < m.layers.size(); ++l) {
            layers.push_back({{"h_base", m.layers[l].h_base}, {"h_range", m.layers[l].h_range}});
            blobs.add("layer" + std::to_string(l), m.layers[l].latent.span());
        }
        jm["layers"] = layers;
        std::vector<double> disp;
        for (const auto& s : m.dispersion.samples()) {
            disp.push_back(s.wavelength);
            disp.push_back(s.n);
            disp.push_back(s.kappa);
        }
        blobs.add("dispersion", disp);
        header["model"] = jm;
    }
    if (ckpt.decoder) {
        const DecoderMlp& d = *ckpt.decoder;
        d.validate();
        header["decoder"] = {{"head", to_string(d.head)}, {"widths", d.widths}, {"standardized", !d.input_shift.empty()}};
        blobs.add("decoder.params", d.params);
        if (!d.input_shift.empty()) {
            blobs.add("decoder.input_shift", d.input_shift);
            blobs.add("decoder.input_scale", d.input_scale);
        }
    }
    header["blobs"] = blobs.index;
    const std::string text = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
    out.write(kMagic, sizeof kMagic);
    const std::uint32_t version = kCheckpointFormatVersion;
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.write(reinterpret_cast<const char*>(blobs.data.data()), static_cast<std::streamsize>(blobs.data.size() * sizeof(double)));
    if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
    char magic[8];
    std::uint32_t version = 0;
    std::uint64_t len = 0;
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw CheckpointError(path.string() + ": not a checkpoint file");
    in.read(reinterpret_cast<char*>(&version), sizeof version);
    in.read(reinterpret_cast<char*>(&len), sizeof len);
    if (!in) throw CheckpointError(path.string() + ": truncated header");
    if (version != kCheckpointFormatVersion)
        throw CheckpointError(path.string() + ": unsupported format version " + std::to_string(version));
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) throw CheckpointError(path.string() + ": truncated header");
    std::vector<char> rest((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (rest.size() % sizeof(double) != 0) throw CheckpointError(path.string() + ": truncated payload");
    std::vector<double> data(rest.size() / sizeof(double));
    std::memcpy(data.data(), rest.data(), rest.size());

    Checkpoint ck;
    try {
        const json header = json::parse(text);
        ck.meta = header.value("meta", json::object());
        const BlobReader blobs(data, header.at("blobs"));
        if (header.contains("model")) {
            const json& jm = header.at("model");
            DiffractiveModel m;
            m.geometry = geometry_from_json(jm.at("geometry"));
            m.plan = plan_from_json(jm.at("plan"));
            m.dispersion_source = jm.at("dispersion_source").get<std::string>();
            const auto ns = jm.at("dispersion_samples").get<std::size_t>();
            const auto disp = blobs.get("dispersion", 3 * ns);
            std::vector<DispersionSample> samples;
            for (std::size_t i = 0; i < ns; ++i) samples.push_back({disp[3 * i], disp[3 * i + 1], disp[3 * i + 2]});
            m.dispersion = DispersionModel(std::move(samples));
            const json& layers = jm.at("layers");
            const std::size_t n = static_cast<std::size_t>(m.geometry.ny) * m.geometry.nx;
            for (std::size_t l = 0; l < layers.size(); ++l) {
                ThicknessMap t;
                t.h_base = layers[l].at("h_base").get<double>();
                t.h_range = layers[l].at("h_range").get<double>();
                t.latent = RealGrid(m.geometry.ny, m.geometry.nx);
                const auto v = blobs.get("layer" + std::to_string(l), n);
                std::copy(v.begin(), v.end(), t.latent.data());
                m.layers.push_back(std::move(t));
            }
            m.validate();
            ck.model = std::move(m);
        }
        if (header.contains("decoder")) {
            const json& jd = header.at("decoder");
            DecoderMlp d;
            d.head = decoder_head_from_string(jd.at("head").get<std::string>());
            d.widths = jd.at("widths").get<std::vector<int>>();
            d.params = blobs.get("decoder.params", DecoderMlp::parameter_count(d.widths));
            if (jd.at("standardized").get<bool>()) {
                d.input_shift = blobs.get("decoder.input_shift", static_cast<std::size_t>(d.inputs()));
                d.input_scale = blobs.get("decoder.input_scale", static_cast<std::size_t>(d.inputs()));
            }
            d.validate();
            ck.decoder = std::move(d);
        }
    } catch (const json::exception& e) {
        throw CheckpointError(path.string() + ": malformed header: " + e.what());
    }
    return ck;
}

void save_model(const std::filesystem::path& path, const DiffractiveModel& model, const json& meta) {
    save_checkpoint(path, Checkpoint{model, std::nullopt, meta});
}

DiffractiveModel load_model(const std::filesystem::path& path) {
    auto ck = load_checkpoint(path);
    if (!ck.model) throw CheckpointError(path.string() + ": no diffractive model in checkpoint");
    return std::move(*ck.model);
}

void save_decoder(const std::filesystem::path& path, const DecoderMlp& net, const json& meta) {
    save_checkpoint(path, Checkpoint{std::nullopt, net, meta});
}

DecoderMlp load_decoder(const std::filesystem::path& path) {
    auto ck = load_checkpoint(path);
    if (!ck.decoder) throw CheckpointError(path.string() + ": no decoder in checkpoint");
    return std::move(*ck.decoder);
}

}  // namespace diffspec
