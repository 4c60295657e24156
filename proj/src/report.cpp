#include "diffspec/report.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace diffspec {

ConfusionMatrix::ConfusionMatrix(int classes) : classes_(classes) {
    if (classes < 1) throw Error("confusion matrix: needs at least one class");
    counts_.assign(static_cast<std::size_t>(classes) * classes, 0);
}

void ConfusionMatrix::add(int truth, int predicted) {
    if (truth < 0 || truth >= classes_ || predicted < 0 || predicted >= classes_)
        throw Error("confusion matrix: class index out of range");
    ++counts_[static_cast<std::size_t>(truth) * classes_ + predicted];
}

std::int64_t ConfusionMatrix::at(int truth, int predicted) const {
    return counts_.at(static_cast<std::size_t>(truth) * classes_ + predicted);
}

std::int64_t ConfusionMatrix::row_sum(int truth) const {
    std::int64_t s = 0;
    for (int p = 0; p < classes_; ++p) s += at(truth, p);
    return s;
}

std::int64_t ConfusionMatrix::total() const {
    std::int64_t s = 0;
    for (auto c : counts_) s += c;
    return s;
}

std::int64_t ConfusionMatrix::trace() const {
    std::int64_t s = 0;
    for (int c = 0; c < classes_; ++c) s += at(c, c);
    return s;
}

double ConfusionMatrix::accuracy() const {
    const auto t = total();
    return t ? static_cast<double>(trace()) / static_cast<double>(t) : 0.0;
}

void ConfusionMatrix::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "true\\predicted";
    for (int p = 0; p < classes_; ++p) out << "," << p;
    out << "\n";
    for (int t = 0; t < classes_; ++t) {
        out << t;
        for (int p = 0; p < classes_; ++p) out << "," << at(t, p);
        out << "\n";
    }
}

FeedbackGain feedback_gain(const std::vector<SampleLog>& logs) {
    FeedbackGain g;
    for (const auto& s : logs) {
        if (!s.feedback_class) continue;
        const bool before = s.optical_class == s.label;
        const bool after = *s.feedback_class == s.label;
        if (!before && after) ++g.corrected;
        if (before && !after) ++g.lost;
    }
    return g;
}

nlohmann::json RunReport::to_json() const {
    nlohmann::json j;
    j["command"] = command;
    j["scalars"] = scalars;
    auto cm = [](const ConfusionMatrix& m) {
        nlohmann::json rows = nlohmann::json::array();
        for (int t = 0; t < m.classes(); ++t) {
            nlohmann::json r = nlohmann::json::array();
            for (int p = 0; p < m.classes(); ++p) r.push_back(m.at(t, p));
            rows.push_back(r);
        }
        return rows;
    };
    if (optical) j["confusion_optical"] = cm(*optical);
    if (feedback) j["confusion_feedback"] = cm(*feedback);
    if (electronic) j["confusion_electronic"] = cm(*electronic);
    return j;
}

void RunReport::write(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "report.json");
        if (!out) throw Error("cannot write " + (dir / "report.json").string());
        out << to_json().dump(2) << "\n";
    }
    if (optical) optical->write_csv(dir / "confusion_optical.csv");
    if (feedback) feedback->write_csv(dir / "confusion_feedback.csv");
    if (electronic) electronic->write_csv(dir / "confusion_electronic.csv");
    if (!samples.empty()) {
        std::ofstream out(dir / "samples.csv");
        out << "index,label,optical_class,feedback_class,electronic_class\n";
        for (const auto& s : samples) {
            out << s.index << "," << s.label << "," << s.optical_class << ",";
            if (s.feedback_class) out << *s.feedback_class;
            out << ",";
            if (s.electronic_class) out << *s.electronic_class;
            out << "\n";
        }
    }
}

std::vector<SampleLog> read_sample_logs(const std::filesystem::path& csv) {
    std::ifstream in(csv);
    if (!in) throw Error("cannot open " + csv.string());
    std::string line;
    std::getline(in, line);
    if (line != "index,label,optical_class,feedback_class,electronic_class")
        throw Error(csv.string() + ": unexpected header");
    std::vector<SampleLog> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) f.push_back(tok);
        while (f.size() < 5) f.emplace_back();
        SampleLog s;
        s.index = std::stoull(f[0]);
        s.label = std::stoi(f[1]);
        s.optical_class = std::stoi(f[2]);
        if (!f[3].empty()) s.feedback_class = std::stoi(f[3]);
        if (!f[4].empty()) s.electronic_class = std::stoi(f[4]);
        out.push_back(s);
    }
    return out;
}

std::vector<double> apply_power_noise(std::span<const double> raw, double sigma, std::mt19937_64& rng) {
    std::vector<double> out(raw.begin(), raw.end());
    if (sigma <= 0.0) return out;
    std::normal_distribution<double> n(0.0, 1.0);
    for (double& p : out) p = std::max(0.0, p * (1.0 + sigma * n(rng)));
    return out;
}

void write_spectra_csv(const std::filesystem::path& path, const WavelengthPlan& plan,
                       const std::vector<SampleOutcome>& samples, std::size_t limit) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << std::setprecision(17);
    out << "sample,label,wavelength_index,wavelength_mm,power\n";
    for (std::size_t i = 0; i < std::min(limit, samples.size()); ++i)
        for (std::size_t k = 0; k < plan.size(); ++k)
            out << i << "," << samples[i].label << "," << k << "," << plan.wavelengths[k] << "," << samples[i].raw[k] << "\n";
}

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepPoint>& points) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << std::setprecision(17);
    out << "delta_mm,mean_accuracy,std_accuracy,trials\n";
    for (const auto& p : points)
        out << p.delta << "," << p.mean_accuracy << "," << p.std_accuracy << "," << p.trial_accuracies.size() << "\n";
}

}  // namespace diffspec
