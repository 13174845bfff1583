#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "confbound/error.hpp"
#include "confbound/ratio.hpp"
#include "confbound/sampleset.hpp"
#include "confbound/synthetic.hpp"

using namespace confbound;
using namespace confbound::ratio;

namespace {

// Exactly n0 zeros and n1 ones in a 1-bit matrix.
sampleset::ShotMatrix one_bit(std::size_t n0, std::size_t n1) {
    std::vector<std::uint8_t> bits(n0, 0);
    bits.insert(bits.end(), n1, 1);
    return sampleset::ShotMatrix(std::move(bits), 1);
}

double norm_without_bias(const RatioModel& m) {
    double s = 0.0;
    for (std::size_t k = 1; k < m.theta.size(); ++k) s += m.theta[k] * m.theta[k];
    return std::sqrt(s);
}

}  // namespace

TEST_CASE("feature map layout") {
    const RatioFeatureMap lin{FeatureKind::linear, 3};
    const RatioFeatureMap quad{FeatureKind::quadratic, 3};
    CHECK(lin.dim() == 4);
    CHECK(quad.dim() == 7);
    const std::vector<std::uint8_t> row{1, 0, 1};
    CHECK(lin.map(row) == std::vector<double>{1, 1, 0, 1});
    // pairs (0,1), (0,2), (1,2)
    CHECK(quad.map(row) == std::vector<double>{1, 1, 0, 1, 0, 1, 0});
}

TEST_CASE("identical samples give a ratio of one") {
    const auto shots = synthetic::sample(synthetic::ProductBernoulli{{0.3, 0.6, 0.5}}, 1000, 4);
    const auto model = fit_ratio(shots, shots);
    for (std::size_t r = 0; r < shots.rows(); ++r) CHECK(std::abs(model.ratio(shots.row(r)) - 1.0) <= 0.1);
    CHECK(estimate_bc(model, shots).value == doctest::Approx(1.0).epsilon(0.1));
    for (auto k : {Divergence::bc, Divergence::kl, Divergence::tv}) {
        CHECK(estimate_divergence(model, shots, k) <= 0.05);
    }
}

TEST_CASE("1-bit 0.9/0.1 pair recovers the closed-form ratio") {
    const auto ideal = one_bit(4500, 500);
    const auto noisy = one_bit(500, 4500);
    const auto model = fit_ratio(ideal, noisy);
    const std::uint8_t zero = 0, one = 1;
    CHECK(model.ratio({&zero, 1}) == doctest::Approx(9.0).epsilon(0.2));
    CHECK(model.ratio({&one, 1}) == doctest::Approx(1.0 / 9.0).epsilon(0.2));
    CHECK(estimate_bc(model, noisy).value == doctest::Approx(0.6).epsilon(0.1 / 0.6));
    CHECK(std::abs(estimate_divergence(model, noisy, Divergence::tv) - 0.8) <= 0.1);  // exact: (1/2) sum |p - q|
    CHECK(std::abs(estimate_divergence(model, noisy, Divergence::bc) - 0.51) <= 0.1);
}

TEST_CASE("class-size imbalance is corrected by the prior offset") {
    // Same distribution, twice as many noisy rows: the ratio must stay ~1.
    const auto ideal = one_bit(300, 700);
    const auto noisy = one_bit(600, 1400);
    const auto model = fit_ratio(ideal, noisy);
    CHECK(model.log_prior_offset == doctest::Approx(std::log(2.0)));
    const std::uint8_t zero = 0;
    CHECK(model.ratio({&zero, 1}) == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("analytic gradient matches central finite differences") {
    const auto ideal = synthetic::sample(synthetic::ProductBernoulli{{0.2, 0.7, 0.4}}, 300, 1);
    const auto noisy = synthetic::sample(synthetic::ProductBernoulli{{0.5, 0.5, 0.6}}, 250, 2);
    const RatioFeatureMap fm{FeatureKind::quadratic, 3};
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n01(0.0, 0.5);
    std::vector<double> theta(fm.dim());
    for (auto& t : theta) t = n01(rng);
    std::vector<double> grad;
    training_loss(ideal, noisy, fm, 0.55, theta, &grad);
    for (std::size_t k = 0; k < theta.size(); ++k) {
        const double h = 1e-5;
        auto plus = theta, minus = theta;
        plus[k] += h;
        minus[k] -= h;
        const double fd = (training_loss(ideal, noisy, fm, 0.55, plus) - training_loss(ideal, noisy, fm, 0.55, minus)) /
                          (2.0 * h);
        CHECK(grad[k] == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("optimiser converges and the loss trace never increases") {
    const auto ideal = synthetic::sample(synthetic::ProductBernoulli{{0.2, 0.7, 0.4, 0.5}}, 800, 3);
    const auto noisy = synthetic::sample(synthetic::ProductBernoulli{{0.4, 0.5, 0.6, 0.5}}, 800, 4);
    for (auto kind : {FeatureKind::linear, FeatureKind::quadratic}) {
        const RatioFeatureMap fm{kind, 4};
        const double reg = default_regularization(ideal, noisy);
        for (std::size_t newton_max : {std::size_t{512}, std::size_t{0}}) {
            FitOptions opt;
            opt.newton_max_dim = newton_max;  // 0 forces L-BFGS
            const auto model = fit_ratio(ideal, noisy, fm, reg, opt);
            CHECK(model.converged);
            for (std::size_t i = 1; i < model.train_loss_trace.size(); ++i) {
                CHECK(model.train_loss_trace[i] <= model.train_loss_trace[i - 1] + 1e-8);
            }
            std::vector<double> grad;
            training_loss(ideal, noisy, fm, reg, model.theta, &grad);
            double gn = 0.0;
            for (double g : grad) gn += g * g;
            CHECK(std::sqrt(gn) <= 1e-6 * 1600.0);
        }
    }
}

TEST_CASE("Newton and L-BFGS reach the same optimum") {
    const auto ideal = synthetic::sample(synthetic::ProductBernoulli{{0.1, 0.8, 0.4}}, 500, 5);
    const auto noisy = synthetic::sample(synthetic::ProductBernoulli{{0.3, 0.6, 0.5}}, 500, 6);
    const RatioFeatureMap fm{FeatureKind::quadratic, 3};
    FitOptions lbfgs;
    lbfgs.newton_max_dim = 0;
    const auto a = fit_ratio(ideal, noisy, fm, 1.0);
    const auto b = fit_ratio(ideal, noisy, fm, 1.0, lbfgs);
    for (std::size_t k = 0; k < a.theta.size(); ++k) CHECK(a.theta[k] == doctest::Approx(b.theta[k]).epsilon(1e-4));
}

TEST_CASE("property: pointwise ratio consistency on small supports") {
    const synthetic::ProductBernoulli p{{0.3, 0.65, 0.5, 0.4}};
    const synthetic::ProductBernoulli q{{0.45, 0.5, 0.35, 0.55}};
    const auto ideal = synthetic::sample(p, 20000, 31);
    const auto noisy = synthetic::sample(q, 20000, 32);
    const auto model = fit_ratio(ideal, noisy);
    const auto pj = synthetic::enumerate_joint(p), qj = synthetic::enumerate_joint(q);
    for (const auto& [key, qv] : qj.probs) {
        if (qv < 0.05) continue;
        std::vector<std::uint8_t> row;
        for (char ch : key) row.push_back(ch == '1');
        const double truth = pj(key) / qv;
        CHECK(std::abs(model.ratio(row) - truth) <= 0.15 * truth);
    }
}

TEST_CASE("property: null BC estimates rarely exceed 1.1 before clipping") {
    const synthetic::ProductBernoulli w{{0.3, 0.5, 0.7}};
    int above = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto a = synthetic::sample(w, 1000, 2 * seed);
        const auto b = synthetic::sample(w, 1000, 2 * seed + 1);
        if (estimate_bc(fit_ratio(a, b), b).raw > 1.1) ++above;
    }
    CHECK(above < 5);
}

TEST_CASE("property: larger regularisation shrinks theta") {
    const auto ideal = synthetic::sample(synthetic::ProductBernoulli{{0.2, 0.7, 0.4}}, 500, 7);
    const auto noisy = synthetic::sample(synthetic::ProductBernoulli{{0.6, 0.3, 0.5}}, 500, 8);
    const RatioFeatureMap fm{FeatureKind::quadratic, 3};
    double previous = std::numeric_limits<double>::infinity();
    for (double reg : {0.01, 0.1, 1.0, 10.0, 100.0}) {
        const double n = norm_without_bias(fit_ratio(ideal, noisy, fm, reg));
        CHECK(n < previous);
        previous = n;
    }
}

TEST_CASE("estimates ignore the row order of the noisy sample") {
    const auto ideal = synthetic::sample(synthetic::ProductBernoulli{{0.2, 0.7}}, 400, 1);
    const auto noisy = synthetic::sample(synthetic::ProductBernoulli{{0.5, 0.5}}, 400, 2);
    std::vector<std::string> rows;
    for (std::size_t r = 0; r < noisy.rows(); ++r) rows.push_back(noisy.key(r));
    std::reverse(rows.begin(), rows.end());
    const auto shuffled = sampleset::ShotMatrix::from_rows(rows);
    const auto model = fit_ratio(ideal, noisy);
    for (auto k : {Divergence::bc, Divergence::kl, Divergence::tv}) {
        CHECK(estimate_divergence(model, noisy, k) == doctest::Approx(estimate_divergence(model, shuffled, k)));
    }
}

TEST_CASE("input errors") {
    const auto a = sampleset::ShotMatrix::from_rows({"01", "10"});
    const auto b = sampleset::ShotMatrix::from_rows({"1", "0"});
    CHECK_THROWS_AS(fit_ratio(a, b), DataError);
    CHECK_THROWS_AS(fit_ratio(a, sampleset::ShotMatrix{}), DataError);
    const auto model = fit_ratio(a, a);
    CHECK_THROWS_AS(estimate_bc(model, b), DataError);
    CHECK_THROWS_AS(parse_divergence("js"), DataError);
}

TEST_CASE("model JSON round trip") {
    const auto ideal = synthetic::sample(synthetic::ProductBernoulli{{0.2, 0.7}}, 200, 1);
    const auto noisy = synthetic::sample(synthetic::ProductBernoulli{{0.5, 0.5}}, 300, 2);
    const auto model = fit_ratio(ideal, noisy);
    const auto back = ratio_model_from_json(to_json(model));
    CHECK(back.theta == model.theta);
    CHECK(back.log_prior_offset == model.log_prior_offset);
    CHECK(estimate_divergence(back, noisy, Divergence::tv) == estimate_divergence(model, noisy, Divergence::tv));
}
