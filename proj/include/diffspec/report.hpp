#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "diffspec/training.hpp"

namespace diffspec {

/// counts[true * C + predicted].
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(int classes = 10);

    void add(int truth, int predicted);
    int classes() const { return classes_; }
    std::int64_t at(int truth, int predicted) const;
    std::int64_t row_sum(int truth) const;
    std::int64_t total() const;
    std::int64_t trace() const;
    double accuracy() const;
    void write_csv(const std::filesystem::path& path) const;
    bool operator==(const ConfusionMatrix&) const = default;

private:
    int classes_;
    std::vector<std::int64_t> counts_;
};

struct SampleLog {
    std::size_t index = 0;
    int label = 0;
    int optical_class = 0;
    std::optional<int> feedback_class;
    std::optional<int> electronic_class;
};

/// Corrections (optically wrong, fixed by feedback) and losses (optically right, broken by feedback).
struct FeedbackGain {
    std::int64_t corrected = 0;
    std::int64_t lost = 0;
    std::int64_t gain() const { return corrected - lost; }
};

FeedbackGain feedback_gain(const std::vector<SampleLog>& logs);

struct RunReport {
    std::string command;
    std::map<std::string, double> scalars;
    std::optional<ConfusionMatrix> optical;
    std::optional<ConfusionMatrix> feedback;
    std::optional<ConfusionMatrix> electronic;
    std::vector<SampleLog> samples;

    nlohmann::json to_json() const;
    /// report.json, confusion_*.csv and samples.csv under `dir`.
    void write(const std::filesystem::path& dir) const;
};

std::vector<SampleLog> read_sample_logs(const std::filesystem::path& csv);

/// Multiplicative per-wavelength detector noise: p -> max(0, p * (1 + sigma * N(0, 1))).
std::vector<double> apply_power_noise(std::span<const double> raw, double sigma, std::mt19937_64& rng);

void write_spectra_csv(const std::filesystem::path& path, const WavelengthPlan& plan,
                       const std::vector<SampleOutcome>& samples, std::size_t limit);
void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepPoint>& points);

}  // namespace diffspec
