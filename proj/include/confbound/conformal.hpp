#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "confbound/shift_model.hpp"

namespace confbound::conformal {

/// One calibration unit: a circuit run with its divergence score and the
/// ordinal feature (size or depth) used for stratified selection.
struct CalibrationRecord {
    std::string circuit_id;
    std::string machine_id;
    double ordinal = 0.0;
    double score = 0.0;
    shift::MomentFeatures features;
};

enum class Setup { all, mondrian, shift, shift_mondrian };

Setup parse_setup(const std::string& name);  // accepts "shift+mondrian" and "shift_mondrian"
std::string to_string(Setup s);

enum class Direction { upper, lower };
enum class Residual { signed_, absolute };

Residual parse_residual(const std::string& name);
std::string to_string(Residual r);

struct ConformalBound {
    double alpha = 0.1;
    Setup setup = Setup::all;
    std::string kind;
    double q_alpha = 0.0;
    double bound = 0.0;  // one-sided upper bound (or lower bound on BC in the lower direction)
    double lower = 0.0;  // lower interval end for absolute residuals, clipped at 0
    bool has_lower = false;
    std::size_t n_cal_used = 0;
    std::size_t n_discarded = 0;
    bool infeasible = false;         // ceil((1 - alpha)(N + 1)) > N: bound is +-inf
    bool selection_warning = false;  // mondrian fell back to all records

    /// Bound length: the bound itself, or upper - max(0, lower) for intervals.
    double size() const;
};

/// ceil((1 - alpha)(N + 1)), computed with a small guard so that products
/// like 0.9 * 10 do not round up past the exact integer.
std::size_t quantile_index(std::size_t n, double alpha);

/// Upper: the k-th smallest score; lower: the k-th largest. Returns +inf /
/// -inf when k > N. Throws std::invalid_argument on empty scores or alpha
/// outside (0, 1).
double conformal_quantile(std::span<const double> scores, double alpha, Direction direction = Direction::upper);

ConformalBound calibrate_plain(std::span<const CalibrationRecord> records, double alpha, const std::string& kind = {},
                               Direction direction = Direction::upper);

enum class SelectionRule { second_largest, optimize };

SelectionRule parse_selection_rule(const std::string& name);

struct Selection {
    std::vector<CalibrationRecord> kept;
    double s_min = -std::numeric_limits<double>::infinity();  // smallest kept ordinal
    double objective = 0.0;  // weighted distance term for the kept set
    bool warning = false;
};

/// Weighted distance term sum 1(S > t)|S - S_test| / (1 + sum 1(S > t)).
double ordering_objective(std::span<const double> ordinals, double threshold, double test_ordinal);

/// second_largest keeps the records at the largest ordinal below the test
/// ordinal (the test stratum counts as the largest). optimize scans the
/// thresholds below each distinct ordinal and keeps the minimiser of
/// ordering_objective, preferring the smaller threshold on ties.
Selection mondrian_select(std::span<const CalibrationRecord> records, SelectionRule rule, double test_ordinal);

ConformalBound calibrate_mondrian(std::span<const CalibrationRecord> records, double test_ordinal, double alpha,
                                  SelectionRule rule = SelectionRule::second_largest, const std::string& kind = {});

/// Shift calibration with precomputed predictions g(features_n) and g(test).
/// Signed: residuals A - g, bound = g_test + q. Absolute: residuals |A - g|,
/// interval [max(0, g_test - q), g_test + q].
ConformalBound calibrate_shift(std::span<const CalibrationRecord> records, std::span<const double> predictions,
                               double g_test, double alpha, Residual residual = Residual::signed_,
                               const std::string& kind = {}, Setup setup = Setup::shift);

ConformalBound calibrate_shift(std::span<const CalibrationRecord> records, const shift::ShiftRegressor& g,
                               const shift::MomentFeatures& test_features, double alpha,
                               Residual residual = Residual::signed_, const std::string& kind = {},
                               Setup setup = Setup::shift);

nlohmann::json to_json(const ConformalBound& b);

// ---------------------------------------------------------------------------
// Validity-gap diagnostics. Usable only when the score distributions are
// known, i.e. in synthetic studies.

/// Density sampled on the uniform grid lo + k * (hi - lo) / (n - 1).
struct GridDensity {
    double lo = 0.0;
    double hi = 1.0;
    std::vector<double> values;

    double step() const { return (hi - lo) / static_cast<double>(values.size() - 1); }
};

/// Default number of grid points for Gaussian densities: a step of about
/// 1e-5 of the support range.
inline constexpr std::size_t kDefaultGridPoints = 100001;

GridDensity gaussian_density(double mu, double sigma, double lo, double hi, std::size_t points = kDefaultGridPoints);

/// Trapezoid integral of the density.
double integrate(const GridDensity& d);

/// (1/2) integral |p - q| by the trapezoid rule. Both densities must share
/// the grid and integrate to 1 +- 1e-6 (std::invalid_argument otherwise).
double total_variation(const GridDensity& p, const GridDensity& q);

/// (1 / (N + 1)) * sum_n TV(cal_n, test).
double gap_estimate(std::span<const GridDensity> cal, const GridDensity& test);

/// TV between N(mu1, sigma^2) and N(mu2, sigma^2) by numerical integration
/// on a grid symmetric about the crossing point.
double gaussian_tv_numeric(double mu1, double mu2, double sigma = 1.0);

/// Closed form erf(|mu1 - mu2| / (2 sqrt(2) sigma)), used as the oracle.
double gaussian_tv_exact(double mu1, double mu2, double sigma = 1.0);

struct Lemma1Result {
    double gap_all_proxy = 0.0;
    double gap_selected_proxy = 0.0;
    double gap_all_exact = 0.0;
    double gap_selected_exact = 0.0;
    bool in_regime = false;        // |s3 - s1| < 1/40
    bool premise_n_is_nbar = false;  // condition read with n = n_bar
    bool premise_n_is_one = false;   // condition read with n = 1, the weakest factor
    bool selection_helps_proxy = false;  // gap_selected < gap_all
    bool selection_helps_exact = false;
};

/// Two calibration strata (n_bar records at s1, N - n_bar at s2) and a test
/// circuit at s3, scores N(S, 1). The proxy gap uses TV = (gamma / 2)|dS|
/// with gamma = 1/5; the exact gap integrates the Gaussian TV.
Lemma1Result verify_lemma1(double s1, double s2, double s3, std::size_t n_bar, std::size_t n, bool exact = true);

struct Theorem1Result {
    double c = 0.0;
    double big_c = 0.0;               // |c - 1/c|
    double factor_as_written = 1.0;   // 1 - 2 exp(-2 t^2 / (M C)), 1 when C < 1e-12
    double tail_as_written = 0.0;     // 2 exp(-2 t^2 / (M C))
    double tail_hoeffding = 0.0;      // 2 exp(-2 M t^2 / (1/c - c)^2)
};

/// c in (0, 1) is the square root of the smallest probability of either
/// distribution. Throws std::invalid_argument outside the domain.
Theorem1Result verify_theorem1(double c, std::size_t m, double t);

struct Theorem1MonteCarlo {
    double bc = 0.0;
    double violation_rate = 0.0;
    double standard_error = 0.0;
    std::size_t trials = 0;
    Theorem1Result bounds;
};

/// Draws `trials` batches of M noisy outcomes from q, forms the empirical
/// mean of sqrt(p(y)/q(y)) and counts |BC_hat - BC| > t. p and q are
/// distributions over the same finite outcome set with all entries > 0.
Theorem1MonteCarlo theorem1_monte_carlo(std::span<const double> p, std::span<const double> q, std::size_t m,
                                        double t, std::size_t trials, std::uint64_t seed);

}  // namespace confbound::conformal
