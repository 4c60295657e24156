#include <doctest.h>

#include <cmath>

#include "diffspec/decoder.hpp"
#include "synthetic.hpp"

using namespace diffspec;

namespace {

double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }

DecoderMlp tiny(DecoderHead head) {
    DecoderMlp n;
    n.head = head;
    n.widths = {1, 1, 1, 1};
    n.params = {2.0, 0.5, 3.0, -1.0, 0.5, 0.25};
    return n;
}

}  // namespace

TEST_CASE("zero weights give sigmoid(0) reconstructions") {
    auto net = make_decoder(DecoderHead::reconstruction, 10, 784, 1);
    std::fill(net.params.begin(), net.params.end(), 0.0);
    for (double v : mlp_forward(net, std::vector<double>(10, 0.3))) CHECK(v == 0.5);
}

TEST_CASE("1-1-1-1 network by hand") {
    const auto r = tiny(DecoderHead::reconstruction);
    // z1 = 2 * 1 + 0.5 = 2.5, z2 = 3 * 2.5 - 1 = 6.5, z3 = 0.5 * 6.5 + 0.25 = 3.5
    CHECK(mlp_forward(r, std::vector<double>{1.0})[0] == doctest::Approx(sig(3.5)).epsilon(1e-15));
    CHECK(mlp_forward(tiny(DecoderHead::classification), std::vector<double>{1.0})[0] == doctest::Approx(3.5));
    // z1 = -1.5 and z2 = -1 are cut by the ReLUs, leaving only b3
    CHECK(mlp_forward(r, std::vector<double>{-1.0})[0] == doctest::Approx(sig(0.25)).epsilon(1e-15));
    auto st = r;
    st.input_shift = {3.0};
    st.input_scale = {0.5};
    CHECK(mlp_forward(st, std::vector<double>{5.0})[0] == doctest::Approx(sig(3.5)).epsilon(1e-15));
}

TEST_CASE("reconstruction outputs are finite and in (0, 1)") {
    const auto net = make_decoder(DecoderHead::reconstruction, 10, 784, 2);
    for (double scale : {1e-3, 1.0, 1e3}) {
        std::vector<double> in(10);
        for (int i = 0; i < 10; ++i) in[i] = scale * (i - 4.5);
        for (double v : mlp_forward(net, in)) {
            CHECK(std::isfinite(v));
            CHECK(v > 0.0);
            CHECK(v < 1.0);
        }
    }
    CHECK(net.outputs() >= 780);
}

TEST_CASE("MLP parameter and input gradients match central differences") {
    for (auto head : {DecoderHead::reconstruction, DecoderHead::classification}) {
        auto net = make_decoder(head, 4, 5, 3, 6, 7);
        net.input_shift = {0.1, 0.2, 0.3, 0.4};
        net.input_scale = {2.0, 1.0, 0.5, 3.0};
        Eigen::MatrixXd x(4, 3), w(5, 3);
        for (int i = 0; i < 12; ++i) x(i % 4, i / 4) = std::sin(1.3 * i);
        for (int i = 0; i < 15; ++i) w(i % 5, i / 5) = std::cos(0.7 * i);
        auto objective = [&](const DecoderMlp& n, const Eigen::MatrixXd& in) { return (mlp_forward_batch(n, in).array() * w.array()).sum(); };
        MlpCache cache;
        mlp_forward_batch(net, x, &cache);
        std::vector<double> grad;
        Eigen::MatrixXd dx;
        mlp_backward(net, cache, w, grad, &dx);
        REQUIRE(grad.size() == net.params.size());
        const double h = 1e-6;
        for (std::size_t i = 0; i < net.params.size(); ++i) {
            auto p = net, m = net;
            p.params[i] += h;
            m.params[i] -= h;
            CHECK(grad[i] == doctest::Approx((objective(p, x) - objective(m, x)) / (2 * h)).epsilon(1e-6));
        }
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            Eigen::MatrixXd xp = x, xm = x;
            xp(i) += h;
            xm(i) -= h;
            CHECK(dx(i) == doctest::Approx((objective(net, xp) - objective(net, xm)) / (2 * h)).epsilon(1e-6));
        }
    }
}

TEST_CASE("structural losses") {
    const std::vector<double> a = {0.2, 0.7, 1.0};
    CHECK(loss_structural(a, a, StructuralLoss::mae, 0.0) == 0.0);
    CHECK(loss_structural(std::vector<double>{0.5, 1.0}, std::vector<double>{0.0, 0.5}, StructuralLoss::mae, 0.0) == 0.5);
    CHECK(berhu(0.1, 0.2) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(berhu(0.4, 0.2) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(loss_structural(std::vector<double>{0.1, 0.4}, std::vector<double>{0.0, 0.0}, StructuralLoss::berhu, 0.2) ==
          doctest::Approx(0.3).epsilon(1e-15));
    for (double c : {0.05, 0.2, 1.7}) {
        CHECK(std::abs(berhu(c, c) - c) < 1e-12);
        CHECK(std::abs(berhu(std::nextafter(c, 2 * c), c) - c) < 1e-12);
        CHECK(std::abs(berhu(-c, c) - c) < 1e-12);
    }
}

TEST_CASE("coupled reconstruction loss gradient matches central differences") {
    const auto model = synthetic::model(4);
    const ObjectEncoder enc(model.geometry, synthetic::encoding(), 6, 6);
    const OpticalEngine engine(model);
    auto ws = engine.make_workspace();
    const auto data = synthetic::bars(3, 4);
    auto net = make_decoder(DecoderHead::reconstruction, 3, 36, 5, 8, 8);
    Eigen::MatrixXd x(3, 3), truth(36, 3);
    std::vector<int> labels;
    for (int j = 0; j < 3; ++j) {
        const auto s = forward(model, enc.encode(data.image(j)));
        const auto f = decoder_features(model.plan, s.raw);
        for (int r = 0; r < 3; ++r) x(r, j) = f[r];
        const auto t = target_image(enc, data.image(j));
        for (int r = 0; r < 36; ++r) truth(r, j) = t[r];
        labels.push_back(data.labels[j]);
    }
    fit_input_standardization(net, {{x(0, 0), x(1, 0), x(2, 0)}, {x(0, 1), x(1, 1), x(2, 1)}, {x(0, 2), x(1, 2), x(2, 2)}});
    for (auto kind : {StructuralLoss::mae, StructuralLoss::berhu}) {
        ReconLossConfig cfg;
        cfg.gamma = 0.6;
        cfg.structural = kind;
        const std::optional<double> c = kind == StructuralLoss::berhu ? std::optional<double>(0.15) : std::nullopt;
        std::vector<double> grad;
        reconstruction_batch_loss(net, engine, ws, enc, x, truth, labels, cfg, &grad, c);
        const double h = 1e-6;
        double worst = 0.0;
        for (std::size_t i = 0; i < net.params.size(); i += 7) {
            auto p = net, m = net;
            p.params[i] += h;
            m.params[i] -= h;
            const double fd = (reconstruction_batch_loss(p, engine, ws, enc, x, truth, labels, cfg, nullptr, c).loss -
                               reconstruction_batch_loss(m, engine, ws, enc, x, truth, labels, cfg, nullptr, c).loss) /
                              (2 * h);
            const double mag = std::max({std::abs(fd), std::abs(grad[i]), 1e-9});
            worst = std::max(worst, std::abs(fd - grad[i]) / mag);
        }
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("gamma = 1 never touches the optics") {
    const auto data = synthetic::bars(24, 9);
    const auto m1 = synthetic::model(1);
    auto m2 = synthetic::model(2);
    const ObjectEncoder enc(m1.geometry, synthetic::encoding(), 6, 6);
    const auto scores = compute_scores(OpticalEngine(m1), data, enc);
    DecoderTrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch = 8;
    cfg.recon.gamma = 1.0;
    cfg.seed = 4;
    const auto net = make_decoder(DecoderHead::reconstruction, 3, 36, 6, 16, 16);
    const auto a = train_reconstructor(net, m1, data, enc, cfg, &scores);
    auto scores2 = scores;
    scores2.plan = m2.plan;
    const auto b = train_reconstructor(net, m2, data, enc, cfg, &scores2);
    CHECK(a.net == b.net);
    for (const auto& r : a.history) {
        CHECK(r.inference == 0.0);
        CHECK(r.loss == doctest::Approx(r.structural).epsilon(1e-15));
    }
    cfg.recon.gamma = 0.9;
    const auto c = train_reconstructor(net, m1, data, enc, cfg, &scores);
    CHECK(!(c.net == a.net));
    CHECK(c.history.back().inference > 0.0);
}

TEST_CASE("feedback with an exact reconstruction reproduces the optical decision") {
    const auto model = synthetic::model(3);
    const ObjectEncoder enc(model.geometry, synthetic::encoding(), 6, 6);
    const auto data = synthetic::bars(6, 3);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto target = target_image(enc, data.image(i));
        const auto s = forward(model, enc.encode(data.image(i)));
        const auto s2 = forward(model, enc.encode_amplitude(target));
        CHECK(s.raw == s2.raw);
        CHECK(classify(s) == classify(s2));
    }
    // an oracle decoder that always emits the first target
    auto net = make_decoder(DecoderHead::reconstruction, 3, 36, 1, 2, 2);
    std::fill(net.params.begin(), net.params.end(), 0.0);
    const auto t0 = target_image(enc, data.image(0));
    const std::size_t b3 = DecoderMlp::parameter_count(net.widths) - 36;
    for (int r = 0; r < 36; ++r) net.params[b3 + r] = t0[r] > 0.5 ? 40.0 : -40.0;
    const auto s = forward(model, enc.encode(data.image(0)));
    const auto fb = feedback_classify(net, model, enc, s.raw);
    CHECK(fb.predicted == classify(s));
    for (std::size_t k = 0; k < s.raw.size(); ++k) CHECK(fb.scores.raw[k] == doctest::Approx(s.raw[k]).epsilon(1e-12));
}

TEST_CASE("classifier reaches full accuracy on separable scores") {
    ScoreSet set;
    set.plan = WavelengthPlan::uniform(3, EncodingMode::plain);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 0.2);
    for (int i = 0; i < 90; ++i) {
        ScoreSample s;
        s.label = i % 3;
        s.features = {u(rng), u(rng), u(rng)};
        s.features[static_cast<std::size_t>(s.label)] += 0.6;
        set.samples.push_back(s);
    }
    DecoderTrainConfig cfg;
    cfg.epochs = 30;
    cfg.batch = 10;
    cfg.adam.lr = 1e-2;
    const auto r = train_classifier(make_decoder(DecoderHead::classification, 3, 3, 2, 16, 16), set, cfg);
    int correct = 0;
    for (const auto& s : set.samples) correct += classify_electronic(r.net, s.features) == s.label;
    CHECK(correct == 90);
    CHECK(r.history.back().accuracy == 1.0);
}

TEST_CASE("decoder features are normalized scores") {
    const auto plan = WavelengthPlan::uniform(4, EncodingMode::plain);
    const auto f = decoder_features(plan, std::vector<double>{1, 1, 2, 4});
    CHECK(f == std::vector<double>{0.125, 0.125, 0.25, 0.5});
    CHECK(decoder_features(plan, std::vector<double>(4, 0.0)) == std::vector<double>(4, 0.25));
    const auto d = WavelengthPlan::uniform(2, EncodingMode::differential, 2);
    const auto fd = decoder_features(d, std::vector<double>{3, 1, 0, 2});
    CHECK(fd == std::vector<double>{0.5, -1.0});
}

TEST_CASE("decoder validation") {
    auto n = make_decoder(DecoderHead::reconstruction, 10, 784, 1);
    CHECK_NOTHROW(n.validate());
    n.params.pop_back();
    CHECK_THROWS(n.validate());
    auto m = make_decoder(DecoderHead::reconstruction, 10, 784, 1);
    m.params[3] = std::nan("");
    CHECK_THROWS(m.validate());
    ReconLossConfig bad;
    bad.gamma = 1.5;
    CHECK_THROWS(bad.validate());
}
