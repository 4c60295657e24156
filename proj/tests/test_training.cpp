#include <doctest.h>

#include "diffspec/training.hpp"
#include "synthetic.hpp"

using namespace diffspec;

namespace {

TrainConfig quick(int epochs, std::uint64_t seed = 3) {
    TrainConfig c;
    c.epochs = epochs;
    c.batch = 8;
    c.adam.lr = 0.05;
    c.seed = seed;
    return c;
}

}  // namespace

TEST_CASE("zero epochs leave the model unchanged") {
    const auto m = synthetic::model(1);
    const ObjectEncoder enc(m.geometry, synthetic::encoding(), 6, 6);
    const auto r = train(m, synthetic::bars(24, 1), enc, quick(0));
    CHECK(r.model == m);
    CHECK(r.history.empty());
}

TEST_CASE("training is reproducible from the seed") {
    const auto m = synthetic::model(2);
    const ObjectEncoder enc(m.geometry, synthetic::encoding(), 6, 6);
    const auto data = synthetic::bars(40, 2);
    const auto a = train(m, data, enc, quick(2));
    const auto b = train(m, data, enc, quick(2));
    CHECK(a.model == b.model);
    CHECK(a.history.back().loss == b.history.back().loss);
    const auto c = train(m, data, enc, quick(2, 99));
    CHECK(!(c.model == a.model));
}

TEST_CASE("vaccination with zero delta is identical to no vaccination") {
    const auto m = synthetic::model(3);
    const ObjectEncoder enc(m.geometry, synthetic::encoding(), 6, 6);
    const auto data = synthetic::bars(24, 3);
    auto cfg = quick(2);
    const auto plain = train(m, data, enc, cfg);
    cfg.vaccination = VaccinationPlan{0.0, {}};
    const auto vacc = train(m, data, enc, cfg);
    CHECK(plain.model == vacc.model);
}

TEST_CASE("vaccination draws are pixel-snapped and bounded") {
    std::mt19937_64 rng(4);
    const VaccinationPlan p{1.2, {1}};
    bool moved = false;
    for (int t = 0; t < 200; ++t) {
        const auto s = p.draw(rng, 3, 0.5);
        REQUIRE(s.size() == 3);
        CHECK(s[0] == LayerShift{});
        CHECK(s[2] == LayerShift{});
        CHECK(std::abs(s[1].dx) <= 2);
        CHECK(std::abs(s[1].dy) <= 2);
        moved |= s[1].dx != 0;
    }
    CHECK(moved);
    CHECK_THROWS(VaccinationPlan{1.0, {3}}.validate(3));
    CHECK_THROWS(VaccinationPlan{-1.0, {}}.validate(3));
}

TEST_CASE("training lowers the loss and records history") {
    const auto m = synthetic::model(5);
    const ObjectEncoder enc(m.geometry, synthetic::encoding(), 6, 6);
    const auto data = synthetic::bars(60, 5), test = synthetic::bars(30, 6);
    std::vector<std::string> lines;
    auto cfg = quick(4);
    cfg.on_epoch = [&](const EpochRecord& r) { lines.push_back(to_jsonl(r)); };
    const auto r = train(m, data, enc, cfg, &test);
    REQUIRE(r.history.size() == 4);
    CHECK(lines.size() == 4);
    CHECK(r.history.back().loss < r.history.front().loss);
    CHECK(r.history.back().test_accuracy.has_value());
    CHECK(lines.front().find("\"epoch\":1") != std::string::npos);
    for (const auto& h : r.history) CHECK(h.eta_mean > 0.0);
}

TEST_CASE("evaluation agrees with per-sample forward passes") {
    const auto m = synthetic::model(6);
    const ObjectEncoder enc(m.geometry, synthetic::encoding(), 6, 6);
    const auto data = synthetic::bars(12, 7);
    const auto ev = evaluate_optical(m, data, enc);
    int correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto s = forward(m, enc.encode(data.image(i)));
        CHECK(ev.samples[i].raw == s.raw);
        CHECK(ev.samples[i].predicted == classify(s));
        correct += classify(s) == data.labels[i];
    }
    CHECK(ev.accuracy == static_cast<double>(correct) / 12.0);
}

TEST_CASE("misalignment sweep") {
    const auto m = synthetic::model(7);
    const ObjectEncoder enc(m.geometry, synthetic::encoding(), 6, 6);
    const auto data = synthetic::bars(15, 8);
    const std::vector<double> deltas = {0.0, 1.0};
    const auto a = misalignment_sweep(m, data, enc, deltas, 3, 11);
    const auto b = misalignment_sweep(m, data, enc, deltas, 3, 11);
    CHECK(a[0].mean_accuracy == evaluate_optical(m, data, enc).accuracy);
    CHECK(a[0].std_accuracy == 0.0);
    CHECK(a[1].trial_accuracies == b[1].trial_accuracies);
    const auto all = misalignment_sweep(m, data, enc, deltas, 3, 11, SweepProtocol::all_layers);
    CHECK(all[0].mean_accuracy == a[0].mean_accuracy);
}

TEST_CASE("cosine learning-rate schedule") {
    auto c = quick(5);
    CHECK(epoch_learning_rate(c, 3) == 0.05);
    c.lr_final_fraction = 0.1;
    CHECK(epoch_learning_rate(c, 1) == doctest::Approx(0.05).epsilon(1e-15));
    CHECK(epoch_learning_rate(c, 3) == doctest::Approx(0.0275).epsilon(1e-14));
    CHECK(epoch_learning_rate(c, 5) == doctest::Approx(0.005).epsilon(1e-14));
    c.lr_final_fraction = 0.0;
    CHECK_THROWS(c.validate(2));
}

TEST_CASE("latent flattening round trip") {
    auto m = synthetic::model(8);
    const auto flat = flatten_latents(m.layers);
    CHECK(flat.size() == 2 * 16 * 16);
    auto copy = m.layers;
    for (auto& l : copy) l.latent = RealGrid(16, 16, 0.0);
    unflatten_latents(flat, copy);
    CHECK(copy == m.layers);
}
