#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>

#include "diffspec/runner.hpp"

using namespace diffspec;

namespace {

std::string error_kind(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return "config";
    if (dynamic_cast<const DatasetError*>(&e)) return "dataset";
    if (dynamic_cast<const CheckpointError*>(&e)) return "checkpoint";
    if (dynamic_cast<const DivergenceError*>(&e)) return "divergence";
    if (dynamic_cast<const PropagationError*>(&e)) return "propagation";
    if (dynamic_cast<const Error*>(&e)) return "diffspec";
    return "internal";
}

ExperimentConfig read_config(const std::string& path, std::optional<std::uint64_t> seed) {
    nlohmann::json j = nlohmann::json::object();
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file " + path);
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("malformed JSON: ") + e.what());
        }
    }
    if (seed) j["seed"] = *seed;
    return config_from_json(j);
}

const char* describe(const std::string& command) {
    if (command == "train") return "train the diffractive layers";
    if (command == "eval") return "optical accuracy and efficiency on the test split";
    if (command == "decode") return "train an electronic decoder on frozen optical scores";
    if (command == "feedback") return "feedback loop through a trained reconstruction decoder";
    if (command == "joint") return "train optics and decoder together";
    if (command == "sweep") return "accuracy under random lateral layer shifts";
    if (command == "export-spectra") return "per-sample detected power at every wavelength";
    return "";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spectrally encoded diffractive network harness"};
    app.require_subcommand(1);

    std::string config_path, out_dir, model_ckpt, decoder_ckpt;
    std::optional<std::uint64_t> seed;

    std::vector<CLI::App*> subs;
    for (const auto& name : kCommands) {
        auto* sub = app.add_subcommand(name, describe(name));
        sub->add_option("--config", config_path, "experiment config (JSON)");
        sub->add_option("--seed", seed, "overrides the config seed");
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--model", model_ckpt, "model checkpoint");
        sub->add_option("--decoder", decoder_ckpt, "decoder checkpoint");
        subs.push_back(sub);
    }
    auto* print = app.add_subcommand("print-config", "write the fully resolved config to stdout");
    print->add_option("--config", config_path, "experiment config (JSON)");
    print->add_option("--seed", seed, "overrides the config seed");

    CLI11_PARSE(app, argc, argv);

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        if (command == "print-config") {
            if (!seed && config_path.empty()) seed = 1;
            std::cout << to_json(read_config(config_path, seed)).dump(2) << "\n";
            return 0;
        }
        ExperimentConfig cfg = read_config(config_path, seed);
        if (!out_dir.empty()) cfg.output_dir = out_dir;
        if (!model_ckpt.empty()) cfg.model_checkpoint = model_ckpt;
        if (!decoder_ckpt.empty()) cfg.decoder_checkpoint = decoder_ckpt;
        const RunReport r = run(command, cfg);
        std::cout << r.to_json().dump(2) << "\n";
        return 0;
    } catch (const std::exception& e) {
        nlohmann::json err = {{"status", "error"},
                              {"command", command},
                              {"config", config_path},
                              {"kind", error_kind(e)},
                              {"message", e.what()}};
        std::cerr << err.dump() << "\n";
        return 2;
    }
}
