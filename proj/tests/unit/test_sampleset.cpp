#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "confbound/error.hpp"
#include "confbound/sampleset.hpp"
#include "confbound/synthetic.hpp"

using namespace confbound;
using namespace confbound::sampleset;

namespace {

// Random distribution over all 2^s keys, drawn from a Dirichlet(1) law.
EmpiricalDistribution random_distribution(std::size_t s, std::mt19937_64& rng) {
    std::exponential_distribution<double> e(1.0);
    std::map<std::string, double> probs;
    double total = 0.0;
    std::vector<double> w(std::size_t{1} << s);
    for (auto& x : w) total += (x = e(rng));
    for (std::size_t k = 0; k < w.size(); ++k) {
        std::string key(s, '0');
        for (std::size_t i = 0; i < s; ++i) key[i] = ((k >> (s - 1 - i)) & 1U) ? '1' : '0';
        probs[key] = w[k] / total;
    }
    EmpiricalDistribution d;
    d.support_dim = s;
    d.probs = std::move(probs);
    return d;
}

}  // namespace

TEST_CASE("ShotMatrix validates entries and shape") {
    CHECK_THROWS_AS(ShotMatrix({0, 1, 2, 0}, 2), DataError);
    CHECK_THROWS_AS(ShotMatrix({0, 1, 1}, 2), DataError);
    const auto m = ShotMatrix::from_rows({"01", "10", "11"});
    CHECK(m.rows() == 3);
    CHECK(m.width() == 2);
    CHECK(m.key(1) == "10");
    CHECK(m.at(1, 0) == 1);
}

TEST_CASE("empirical_distribution counts frequencies") {
    SUBCASE("constant sample") {
        const auto d = empirical_distribution(ShotMatrix::from_rows({"01", "01", "01", "01"}));
        CHECK(d.probs.size() == 1);
        CHECK(d("01") == 1.0);
    }
    SUBCASE("symmetric sample") {
        const auto d = empirical_distribution(ShotMatrix::from_rows({"00", "00", "11", "11"}));
        CHECK(d("00") == 0.5);
        CHECK(d("11") == 0.5);
        CHECK(d("01") == 0.0);
    }
    SUBCASE("fair coin within a binomial interval") {
        const auto shots = synthetic::sample(synthetic::ProductBernoulli{{0.5}}, 1000, 11);
        const auto d = empirical_distribution(shots);
        CHECK(std::abs(d("0") - 0.5) <= 0.05);
        CHECK(std::abs(d("1") - 0.5) <= 0.05);
    }
    SUBCASE("empty matrix") {
        CHECK_THROWS_WITH_AS(empirical_distribution(ShotMatrix{}), "no samples", DataError);
    }
}

TEST_CASE("exact_bc on hand-computed cases") {
    const auto p = make_distribution(1, {{"0", 0.9}, {"1", 0.1}});
    const auto q = make_distribution(1, {{"0", 0.1}, {"1", 0.9}});
    CHECK(exact_bc(p, p) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(exact_bc(make_distribution(1, {{"0", 1.0}}), make_distribution(1, {{"1", 1.0}})) == 0.0);
    CHECK(exact_bc(p, q) == doctest::Approx(2.0 * std::sqrt(0.09)).epsilon(1e-14));
    CHECK_THROWS_AS(exact_bc(p, make_distribution(2, {{"00", 1.0}})), std::invalid_argument);
}

TEST_CASE("exact_divergences on hand-computed cases") {
    const auto p = make_distribution(1, {{"0", 0.9}, {"1", 0.1}});
    const auto q = make_distribution(1, {{"0", 0.1}, {"1", 0.9}});
    const auto same = exact_divergences(p, p);
    CHECK(same.d_bc == doctest::Approx(0.0));
    CHECK(same.d_h2 == doctest::Approx(0.0));
    CHECK(same.d_tv == 0.0);
    CHECK(same.d_kl == 0.0);

    const auto d = exact_divergences(p, q);
    CHECK(d.d_tv == doctest::Approx(0.8));
    CHECK(d.d_h2 == doctest::Approx(0.4));
    CHECK(d.d_bc == doctest::Approx(-std::log(0.6)));
    // KL(q || p) = 0.1 log(0.1/0.9) + 0.9 log(0.9/0.1)
    CHECK(d.d_kl == doctest::Approx(0.8 * std::log(9.0)));

    const auto support_gap = exact_divergences(make_distribution(1, {{"0", 1.0}}), q);
    CHECK(std::isinf(support_gap.d_kl));
}

TEST_CASE("distance chain holds on random 3-bit pairs against brute force") {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 200; ++t) {
        const auto p = random_distribution(3, rng);
        const auto q = random_distribution(3, rng);
        double bc = 0.0, tv = 0.0;
        for (const auto& [k, pv] : p.probs) {
            bc += std::sqrt(pv * q(k));
            tv += 0.5 * std::abs(pv - q(k));
        }
        const auto d = exact_divergences(p, q);
        CHECK(d.d_h2 == doctest::Approx(1.0 - bc).epsilon(1e-12));
        CHECK(d.d_tv == doctest::Approx(tv).epsilon(1e-12));
        CHECK(d.d_h2 <= 2.0 * d.d_tv + 1e-12);
        CHECK(d.d_tv <= std::sqrt(2.0) * std::sqrt(d.d_h2) + 1e-12);
    }
}

TEST_CASE("property: BC in [0, 1] and the Hellinger/TV chain on 1000 random pairs") {
    std::mt19937_64 rng(17);
    for (int t = 0; t < 1000; ++t) {
        const std::size_t s = 1 + static_cast<std::size_t>(t % 6);
        const auto p = random_distribution(s, rng);
        const auto q = random_distribution(s, rng);
        const double bc = exact_bc(p, q);
        REQUIRE(bc >= 0.0);
        REQUIRE(bc <= 1.0 + 1e-12);
        const auto d = exact_divergences(p, q);
        const double dh = std::sqrt(std::max(0.0, d.d_h2));
        REQUIRE(d.d_h2 <= 2.0 * d.d_tv + 1e-12);
        REQUIRE(d.d_tv <= std::sqrt(2.0) * dh + 1e-12);
        REQUIRE(d.d_kl >= -1e-12);
        REQUIRE(exact_bc(p, p) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("property: empirical divergences shrink as M grows") {
    const synthetic::ProductBernoulli w{{0.2, 0.7, 0.5}};
    const auto truth = synthetic::enumerate_joint(w);
    auto median_tv = [&](std::size_t m) {
        std::vector<double> v;
        for (std::uint64_t seed = 0; seed < 50; ++seed) {
            v.push_back(exact_divergences(truth, empirical_distribution(synthetic::sample(w, m, 100 + seed))).d_tv);
        }
        std::nth_element(v.begin(), v.begin() + 25, v.end());
        return v[25];
    };
    CHECK(median_tv(10000) < median_tv(100));
}

TEST_CASE("make_distribution rejects bad input") {
    CHECK_THROWS(make_distribution(2, {{"0", 1.0}}));
    CHECK_THROWS(make_distribution(1, {{"0", 0.5}, {"1", 0.4}}));
    CHECK_NOTHROW(make_distribution(1, {{"0", 0.5}, {"1", 0.5}}));
}

TEST_CASE("dimension guard above 20 bits") {
    const std::string k(21, '0');
    EmpiricalDistribution d;
    d.support_dim = 21;
    d.probs[k] = 1.0;
    CHECK_THROWS_AS(exact_bc(d, d), std::invalid_argument);
}

TEST_CASE("shot CSV round trip and validation") {
    const auto m = ShotMatrix::from_rows({"010", "111", "000"});
    std::stringstream ss;
    write_shots_csv(ss, m);
    CHECK(ss.str() == "bit_0,bit_1,bit_2\n0,1,0\n1,1,1\n0,0,0\n");
    const auto back = read_shots_csv(ss);
    CHECK(back == m);

    std::stringstream bad("bit_0,bit_1\n0,1\n2,0\n");
    CHECK_THROWS_WITH_AS(read_shots_csv(bad), doctest::Contains("line 3"), DataError);

    std::stringstream no_header("0,1\n1,0\n");
    CHECK_THROWS_AS(read_shots_csv(no_header), DataError);

    std::stringstream ragged("bit_0,bit_1\n0,1\n1\n");
    CHECK_THROWS_AS(read_shots_csv(ragged), DataError);
}
