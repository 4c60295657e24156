#include <doctest.h>

#include "diffspec/hybrid.hpp"
#include "synthetic.hpp"

using namespace diffspec;

namespace {

JointConfig quick(BackEnd b, double xi) {
    JointConfig c;
    c.back_end = b;
    c.xi = xi;
    c.epochs = 2;
    c.batch = 8;
    c.optical_adam.lr = 0.05;
    c.decoder_adam.lr = 1e-3;
    c.seed = 5;
    return c;
}

}  // namespace

TEST_CASE("xi = 1 leaves the decoder untouched and matches optical-only training") {
    const auto m = synthetic::model(1);
    const ObjectEncoder enc(m.geometry, synthetic::encoding(), 6, 6);
    const auto data = synthetic::bars(24, 1);
    for (auto b : {BackEnd::classifier, BackEnd::reconstructor}) {
        auto net = make_decoder(b == BackEnd::classifier ? DecoderHead::classification : DecoderHead::reconstruction, 3,
                                b == BackEnd::classifier ? 3 : 36, 2, 16, 16);
        set_joint_standardization(net, m.plan);
        const auto r = joint_train(m, net, data, enc, quick(b, 1.0));
        CHECK(r.net == net);

        TrainConfig tc;
        tc.epochs = 2;
        tc.batch = 8;
        tc.adam.lr = 0.05;
        tc.seed = 5;
        const auto opt = train(m, data, enc, tc);
        CHECK(r.model == opt.model);
    }
}

TEST_CASE("joint training updates both parameter sets") {
    const auto m = synthetic::model(2);
    const ObjectEncoder enc(m.geometry, synthetic::encoding(), 6, 6);
    const auto data = synthetic::bars(24, 2);
    for (auto b : {BackEnd::classifier, BackEnd::reconstructor}) {
        const auto net = make_decoder(b == BackEnd::classifier ? DecoderHead::classification : DecoderHead::reconstruction,
                                      3, b == BackEnd::classifier ? 3 : 36, 3, 16, 16);
        std::vector<std::string> lines;
        auto cfg = quick(b, 0.5);
        cfg.on_epoch = [&](const JointEpochRecord& e) { lines.push_back(to_jsonl(e)); };
        const auto r = joint_train(m, net, data, enc, cfg);
        CHECK(!(r.net == net));
        CHECK(!(r.model == m));
        CHECK(r.history.size() == 2);
        CHECK(lines.size() == 2);
        CHECK(r.history.back().electronic_accuracy.has_value() == (b == BackEnd::classifier));
        const auto again = joint_train(m, net, data, enc, quick(b, 0.5));
        CHECK(again.net == r.net);
        CHECK(again.model == r.model);
    }
}

TEST_CASE("xi = 0 leaves the optics driven only by the back-end") {
    const auto m = synthetic::model(3);
    const ObjectEncoder enc(m.geometry, synthetic::encoding(), 6, 6);
    const auto data = synthetic::bars(16, 3);
    const auto net = make_decoder(DecoderHead::classification, 3, 3, 3, 8, 8);
    const auto r = joint_train(m, net, data, enc, quick(BackEnd::classifier, 0.0));
    CHECK(!(r.model == m));
    for (const auto& h : r.history) CHECK(h.loss == doctest::Approx(h.back_loss).epsilon(1e-12));
}

TEST_CASE("joint metrics are recomputable from the per-sample logs") {
    const auto m = synthetic::model(4);
    const ObjectEncoder enc(m.geometry, synthetic::encoding(), 6, 6);
    const auto data = synthetic::bars(18, 4);
    auto net = make_decoder(DecoderHead::classification, 3, 3, 4, 8, 8);
    set_joint_standardization(net, m.plan);
    const auto metrics = evaluate_joint(m, net, data, enc);
    REQUIRE(metrics.samples.size() == 18);
    int opt = 0, el = 0;
    for (const auto& s : metrics.samples) {
        opt += s.optical_class == s.label;
        el += *s.electronic_class == s.label;
    }
    CHECK(metrics.optical_accuracy == opt / 18.0);
    CHECK(*metrics.electronic_accuracy == el / 18.0);
    CHECK(metrics.optical_accuracy == evaluate_optical(m, data, enc).accuracy);

    auto rnet = make_decoder(DecoderHead::reconstruction, 3, 36, 4, 8, 8);
    set_joint_standardization(rnet, m.plan);
    const auto rm = evaluate_joint(m, rnet, data, enc);
    double mae = 0.0;
    for (const auto& s : rm.samples) mae += *s.reconstruction_mae;
    CHECK(*rm.reconstruction_mae == doctest::Approx(mae / 18.0).epsilon(1e-12));
    CHECK(!rm.electronic_accuracy.has_value());
}

TEST_CASE("band plans train jointly") {
    const auto m = synthetic::model(5, 3, EncodingMode::band);
    CHECK(m.plan.size() == 6);
    const ObjectEncoder enc(m.geometry, synthetic::encoding(), 6, 6);
    const auto r = joint_train(m, make_decoder(DecoderHead::classification, 3, 3, 5, 8, 8), synthetic::bars(12, 5), enc,
                               quick(BackEnd::classifier, 0.5));
    CHECK(std::isfinite(r.history.back().loss));
}

TEST_CASE("joint config validation") {
    auto c = quick(BackEnd::classifier, 1.2);
    CHECK_THROWS(c.validate());
    const auto m = synthetic::model(6);
    const ObjectEncoder enc(m.geometry, synthetic::encoding(), 6, 6);
    CHECK_THROWS(joint_train(m, make_decoder(DecoderHead::reconstruction, 3, 36, 1, 4, 4), synthetic::bars(6, 1), enc,
                             quick(BackEnd::classifier, 0.5)));
    CHECK(back_end_from_string(to_string(BackEnd::reconstructor)) == BackEnd::reconstructor);
    CHECK_THROWS(back_end_from_string("cnn"));
}
