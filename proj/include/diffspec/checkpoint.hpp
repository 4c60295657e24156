#pragma once

#include <filesystem>
#include <optional>

#include <json.hpp>

#include "diffspec/decoder.hpp"

namespace diffspec {

class CheckpointError : public Error {
public:
    using Error::Error;
};

inline constexpr int kCheckpointFormatVersion = 1;

/// Container for a diffractive model and/or a decoder. Layout: 8-byte magic, u32 format version,
/// u64 header length, JSON header, then little-endian float64 blobs described by the header.
struct Checkpoint {
    std::optional<DiffractiveModel> model;
    std::optional<DecoderMlp> decoder;
    /// Free-form metadata (training config, metrics, ...).
    nlohmann::json meta = nlohmann::json::object();
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

void save_model(const std::filesystem::path& path, const DiffractiveModel& model,
                const nlohmann::json& meta = nlohmann::json::object());
DiffractiveModel load_model(const std::filesystem::path& path);
void save_decoder(const std::filesystem::path& path, const DecoderMlp& net,
                  const nlohmann::json& meta = nlohmann::json::object());
DecoderMlp load_decoder(const std::filesystem::path& path);

}  // namespace diffspec
