#include <doctest.h>

#include <random>

#include "diffspec/engine.hpp"
#include "diffspec/model.hpp"
#include "oracles.hpp"

using namespace diffspec;

namespace {

ObjectImage random_object(int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ObjectImage o{RealGrid(n, n), 0.5};
    for (auto& v : o.amplitude) v = u(rng);
    return o;
}

ObjectImage open_object(int n) { return {RealGrid(n, n, 1.0), 0.5}; }

}  // namespace

TEST_CASE("4x4 forward pass matches the from-scratch chain oracle") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        auto m = oracle::toy_model(4, 2, 2, seed);
        m.geometry.output_aperture_width = 1.0;
        const auto obj = random_object(4, 100 + seed);
        const OpticalEngine engine(m);
        auto ws = engine.make_workspace();
        const auto got = engine.forward(obj.amplitude, {}, ws);
        const auto ref = oracle::forward_chain(m, obj.amplitude);
        REQUIRE(got.size() == 2);
        for (std::size_t k = 0; k < 2; ++k) {
            CHECK(got[k].detected == doctest::Approx(ref[k].detected).epsilon(1e-6));
            CHECK(got[k].guard == doctest::Approx(ref[k].guard).epsilon(1e-6));
            CHECK(got[k].full == doctest::Approx(ref[k].full).epsilon(1e-6));
            CHECK(got[k].input == doctest::Approx(ref[k].input).epsilon(1e-12));
        }
        const auto s = forward(m, obj);
        for (std::size_t k = 0; k < 2; ++k) CHECK(s.raw[k] == doctest::Approx(ref[k].detected).epsilon(1e-6));
    }
}

TEST_CASE("shifted layers match the chain oracle") {
    auto m = oracle::toy_model(6, 3, 2, 9);
    const auto obj = random_object(6, 7);
    const std::vector<LayerShift> shifts = {{1, 0}, {-2, 1}, {0, -1}};
    const OpticalEngine engine(m);
    auto ws = engine.make_workspace();
    const auto got = engine.forward(obj.amplitude, shifts, ws);
    const auto ref = oracle::forward_chain(m, obj.amplitude, shifts);
    for (std::size_t k = 0; k < got.size(); ++k) CHECK(got[k].detected == doctest::Approx(ref[k].detected).epsilon(1e-6));
}

TEST_CASE("zero shifts are bit-identical to no shifts") {
    auto m = oracle::toy_model(8, 3, 3, 4);
    const auto obj = random_object(8, 5);
    const std::vector<LayerShift> zeros(3);
    const auto a = forward(m, obj);
    const auto b = forward(m, obj, zeros);
    CHECK(a.raw == b.raw);
}

TEST_CASE("opaque object gives zero scores") {
    const auto m = oracle::toy_model(8, 2, 3, 1);
    const auto s = forward(m, ObjectImage{RealGrid(8, 8, 0.0), 0.5});
    for (double r : s.raw) CHECK(r == 0.0);
    for (double v : s.s) CHECK(v == 0.0);
    CHECK(power_efficiency(m, ObjectImage{RealGrid(8, 8, 0.0), 0.5}) == 0.0);
}

TEST_CASE("uniform thickness with kappa = 0 is a global phase") {
    auto m = oracle::toy_model(8, 3, 3, 2, 0.0);
    const auto obj = random_object(8, 3);
    for (auto& l : m.layers) l.latent = RealGrid(8, 8, 0.0);
    const auto a = forward(m, obj);
    for (auto& l : m.layers) l.h_base = 0.73;
    const auto b = forward(m, obj);
    for (std::size_t k = 0; k < a.raw.size(); ++k) CHECK(b.raw[k] == doctest::Approx(a.raw[k]).epsilon(1e-9));
}

TEST_CASE("adding a constant thickness to every layer leaves raw powers unchanged") {
    auto m = oracle::toy_model(8, 3, 3, 6, 0.0);
    const auto obj = random_object(8, 8);
    const auto a = forward(m, obj);
    for (auto& l : m.layers) l.h_base += 0.31;
    const auto b = forward(m, obj);
    for (std::size_t k = 0; k < a.raw.size(); ++k) CHECK(b.raw[k] == doctest::Approx(a.raw[k]).epsilon(1e-9));
}

TEST_CASE("raw powers are non-negative") {
    for (std::uint64_t s = 0; s < 5; ++s) {
        const auto m = oracle::toy_model(8, 3, 3, s);
        for (double r : forward(m, random_object(8, s + 50)).raw) CHECK(r >= 0.0);
    }
}

TEST_CASE("lossless model with a full-plane detector conserves power") {
    Geometry g;
    g.ny = g.nx = 96;
    g.spacings = {1.0, 2.0, 2.0, 2.0};
    g.input_aperture_width = 24.0;
    g.output_aperture_width = std::nullopt;
    g.detector.width = 48.0;
    g.detector.guard_band = 0.0;
    const auto plan = WavelengthPlan::uniform(2, EncodingMode::plain, 1, 1.0, 1.2);
    auto m = make_model(g, plan, DispersionModel::constant(1.7, 0.0, 0.9, 1.6), 1);
    for (auto& l : m.layers) l.latent = RealGrid(96, 96, 0.0);
    const double eta = power_efficiency(m, open_object(96));
    CHECK(eta >= 0.99);
    CHECK(eta <= 1.0 + 1e-12);
}

TEST_CASE("detector integration") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 1.0);
    ComplexGrid g(16, 16);
    for (auto& v : g) v = cplx(n(rng), n(rng));
    const Wavefield f(g, 0.5, 1.0);

    DetectorGeometry whole{8.0, 0.0, 0.0, 0.0};
    CHECK(detector_integrate(f, whole) == doctest::Approx(total_power(f)).epsilon(1e-14));

    DetectorGeometry one{0.5, 0.25, -0.25, 0.0};  // pixel (7, 8)
    CHECK(detector_integrate(f, one) == doctest::Approx(std::norm(g(7, 8)) * 0.25).epsilon(1e-14));

    DetectorGeometry two_mm{2.0, 0.0, 0.0, 0.0};
    double manual = 0.0;
    for (int y = 6; y < 10; ++y)
        for (int x = 6; x < 10; ++x) manual += std::norm(g(y, x)) * 0.25;
    CHECK(detector_integrate(f, two_mm) == doctest::Approx(manual).epsilon(1e-14));

    DetectorGeometry outside{2.0, 7.5, 0.0, 0.0};
    CHECK_THROWS(detector_integrate(f, outside));
}

TEST_CASE("classify") {
    const auto plain = WavelengthPlan::uniform(10, EncodingMode::plain);
    std::vector<double> raw(10, 0.0);
    raw[8] = 1.0;
    CHECK(classify(aggregate_scores(plain, raw)) == 8);
    CHECK(classify(aggregate_scores(plain, std::vector<double>(10, 0.4))) == 0);

    SpectralScores d;
    d.mode = EncodingMode::differential;
    d.s = {-0.2, 0.5, 0.1, -1.0};
    CHECK(classify(d) == 1);

    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 20; ++t) {
        std::vector<double> r(10);
        for (auto& v : r) v = u(rng);
        const int c = classify(aggregate_scores(plain, r));
        std::vector<double> r2(10);
        for (std::size_t i = 0; i < 10; ++i) r2[i] = std::exp(3.0 * r[i]) + 7.0;
        CHECK(classify(aggregate_scores(plain, r2)) == c);
    }
}

TEST_CASE("differential scores are bounded and vanish on balanced pairs") {
    const auto plan = WavelengthPlan::uniform(3, EncodingMode::differential, 2);
    const auto s = aggregate_scores(plan, {0.2, 0.2, 1.0, 0.0, 0.0, 3.0});
    CHECK(s.s[0] == 0.0);
    CHECK(s.s[1] == 1.0);
    CHECK(s.s[2] == -1.0);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> r(6);
        for (auto& v : r) v = u(rng);
        for (double v : aggregate_scores(plan, r).s) {
            CHECK(v >= -1.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("band scores are member means") {
    const auto plan = WavelengthPlan::uniform(2, EncodingMode::band, 5);
    std::vector<double> r = {1, 2, 3, 4, 5, 0.5, 0.5, 0.5, 0.5, 3.0};
    const auto s = aggregate_scores(plan, r);
    CHECK(s.s[0] == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(s.s[1] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("wavelength plans") {
    const auto p = WavelengthPlan::uniform(10, EncodingMode::plain);
    REQUIRE(p.size() == 10);
    CHECK(p.wavelengths.front() == 1.0);
    CHECK(p.wavelengths.back() == doctest::Approx(1.45));
    CHECK(WavelengthPlan::uniform(10, EncodingMode::differential, 2).size() == 20);
    CHECK(WavelengthPlan::uniform(26, EncodingMode::band, 2).size() == 52);
    WavelengthPlan bad = p;
    bad.wavelengths.pop_back();
    CHECK_THROWS(bad.validate());
}

TEST_CASE("model validation") {
    auto m = oracle::toy_model(8, 2, 2, 1);
    CHECK_NOTHROW(m.validate());
    auto bad = m;
    bad.layers.pop_back();
    CHECK_THROWS(bad.validate());
    bad = m;
    bad.geometry.spacings[1] = -1.0;
    CHECK_THROWS(bad.validate());
    CHECK_THROWS(forward(m, ObjectImage{RealGrid(7, 8, 1.0), 0.5}));
}

TEST_CASE("optional silicon slab does not change detected power") {
    auto m = oracle::toy_model(8, 2, 2, 3);
    const auto obj = random_object(8, 1);
    const auto a = forward(m, obj);
    m.geometry.slab = SiliconSlab{};
    const auto b = forward(m, obj);
    for (std::size_t k = 0; k < a.raw.size(); ++k) CHECK(b.raw[k] == doctest::Approx(a.raw[k]).epsilon(1e-12));
}

TEST_CASE("output field is the pre-aperture plane") {
    auto m = oracle::toy_model(6, 2, 2, 4);
    m.geometry.output_aperture_width = 1.0;
    const auto obj = random_object(6, 2);
    const auto ref = oracle::forward_chain(m, obj.amplitude);
    for (std::size_t k = 0; k < 2; ++k) CHECK(total_power(output_field(m, obj, k)) == doctest::Approx(ref[k].full).epsilon(1e-9));
}
