#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "confbound/sampleset.hpp"
#include "confbound/synthetic.hpp"

using namespace confbound;
using namespace confbound::synthetic;

TEST_CASE("make_weights: log profile at s = 2 spans the full range") {
    const auto w = make_weights({ProfileKind::log, 2, 0});
    REQUIRE(w.dim() == 2);
    CHECK(w.weights[0] == doctest::Approx(0.02));
    CHECK(w.weights[1] == doctest::Approx(0.98));
}

TEST_CASE("make_weights: single coordinate degenerates to the midpoint") {
    const auto w = make_weights({ProfileKind::cos, 1, 0});
    CHECK(w.weights[0] == 0.5);
}

TEST_CASE("make_weights: rand profile is reproducible and in range") {
    const auto a = make_weights({ProfileKind::rand, 10, 42});
    const auto b = make_weights({ProfileKind::rand, 10, 42});
    const auto c = make_weights({ProfileKind::rand, 10, 43});
    CHECK(a.weights == b.weights);
    CHECK(a.weights != c.weights);
    for (double x : a.weights) {
        CHECK(x >= 0.02);
        CHECK(x <= 0.98);
    }
}

TEST_CASE("raw profiles match their defining formulas") {
    const auto log_raw = raw_profile({ProfileKind::log, 4, 0});
    for (std::size_t k = 0; k < 4; ++k) CHECK(log_raw[k] == doctest::Approx(std::log(2.0 + k) / 4.0));
    const auto cos_raw = raw_profile({ProfileKind::cos, 3, 0});
    for (std::size_t k = 0; k < 3; ++k) {
        const double c = std::cos(std::numbers::pi / (1e-4 + static_cast<double>(k + 1)));
        CHECK(cos_raw[k] == doctest::Approx(c * c));
    }
}

TEST_CASE("rescale degenerate cases") {
    CHECK(rescale(std::vector<double>{0.0, 0.0, 0.0}) == std::vector<double>{0.02, 0.02, 0.02});
    CHECK(rescale(std::vector<double>{3.0, 3.0}) == std::vector<double>{0.5, 0.5});
    const auto r = rescale(std::vector<double>{1.0, 2.0, 3.0});
    CHECK(r[1] == doctest::Approx(0.5));
}

TEST_CASE("perturbations") {
    SUBCASE("cosine perturbation of 0.25 is zero before rescale") {
        const auto raw = raw_perturbation(ProductBernoulli{{0.25, 0.5}}, ProfileKind::cos, 0);
        CHECK(std::abs(raw[0]) < 1e-15);
        CHECK(raw[1] == doctest::Approx(-1.0));
    }
    SUBCASE("output stays inside (0, 1) for every kind over 100 seeds") {
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            for (auto pk : {ProfileKind::log, ProfileKind::rand, ProfileKind::cos}) {
                for (auto ek : {ProfileKind::log, ProfileKind::rand, ProfileKind::cos}) {
                    const auto w = make_weights({pk, 12, seed});
                    const auto v = perturb(w, ek, seed);
                    for (double x : v.weights) {
                        REQUIRE(x > 0.0);
                        REQUIRE(x < 1.0);
                    }
                }
            }
        }
    }
}

TEST_CASE("closed_form_dbc") {
    const ProductBernoulli a{{0.9}}, b{{0.1}};
    CHECK(closed_form_dbc(a, a) == doctest::Approx(0.0));
    CHECK(closed_form_dbc(a, b) == doctest::Approx(-std::log(0.6)).epsilon(1e-12));
    CHECK(closed_form_dbc(a, b) == doctest::Approx(0.5108256).epsilon(1e-6));
    CHECK_THROWS_AS(closed_form_dbc(a, ProductBernoulli{{0.5, 0.5}}), std::invalid_argument);
}

TEST_CASE("property: closed form agrees with the enumerated joint for s <= 10") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.02, 0.98);
    for (std::size_t s = 1; s <= 10; ++s) {
        for (int t = 0; t < 3; ++t) {
            ProductBernoulli w, v;
            for (std::size_t i = 0; i < s; ++i) {
                w.weights.push_back(u(rng));
                v.weights.push_back(u(rng));
            }
            const double bc = sampleset::exact_bc(enumerate_joint(w), enumerate_joint(v));
            CHECK(closed_form_dbc(w, v) == doctest::Approx(-std::log(bc)).epsilon(1e-10));
            CHECK(closed_form_dbc(w, v) == doctest::Approx(closed_form_dbc(v, w)).epsilon(1e-14));
            CHECK(closed_form_dbc(w, v) > 0.0);
        }
    }
}

TEST_CASE("sample: determinism and per-bit means") {
    const ProductBernoulli w{{0.1, 0.5, 0.9}};
    CHECK(sample(w, 50, 9) == sample(w, 50, 9));
    const auto m = sample(w, 10000, 1);
    for (std::size_t i = 0; i < 3; ++i) {
        double mean = 0.0;
        for (std::size_t r = 0; r < m.rows(); ++r) mean += m.at(r, i);
        mean /= 10000.0;
        const double p = w.weights[i];
        CHECK(std::abs(mean - p) <= 4.0 * std::sqrt(p * (1.0 - p) / 10000.0));
    }
    const auto ones = sample(ProductBernoulli{{kWeightHi, kWeightHi}}, 10, 0);
    CHECK(ones.rows() == 10);
}

TEST_CASE("near-deterministic weight gives all ones") {
    const auto m = sample(ProductBernoulli{{1.0 - 1e-9}}, 10, 3);
    for (std::size_t r = 0; r < 10; ++r) CHECK(m.at(r, 0) == 1);
}

TEST_CASE("JSON round trip of weights") {
    const ProductBernoulli w{{0.25, 0.75}};
    CHECK(product_bernoulli_from_json(to_json(w)).weights == w.weights);
    CHECK_THROWS(product_bernoulli_from_json(nlohmann::json::array({0.5, 1.0})));
}
