#include "confbound/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <stdexcept>

#include "confbound/error.hpp"
#include "confbound/rng.hpp"

namespace confbound::conformal {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

Setup parse_setup(const std::string& name) {
    if (name == "all") return Setup::all;
    if (name == "mondrian") return Setup::mondrian;
    if (name == "shift") return Setup::shift;
    if (name == "shift+mondrian" || name == "shift_mondrian") return Setup::shift_mondrian;
    throw DataError("unknown setup '" + name + "' (expected all, mondrian, shift or shift+mondrian)");
}

std::string to_string(Setup s) {
    switch (s) {
        case Setup::all: return "all";
        case Setup::mondrian: return "mondrian";
        case Setup::shift: return "shift";
        case Setup::shift_mondrian: return "shift+mondrian";
    }
    return "?";
}

Residual parse_residual(const std::string& name) {
    if (name == "signed") return Residual::signed_;
    if (name == "absolute") return Residual::absolute;
    throw DataError("unknown residual kind '" + name + "' (expected signed or absolute)");
}

std::string to_string(Residual r) { return r == Residual::signed_ ? "signed" : "absolute"; }

SelectionRule parse_selection_rule(const std::string& name) {
    if (name == "second_largest") return SelectionRule::second_largest;
    if (name == "optimize") return SelectionRule::optimize;
    throw DataError("unknown selection rule '" + name + "'");
}

double ConformalBound::size() const {
    if (has_lower) return bound - std::max(0.0, lower);
    return bound;
}

std::size_t quantile_index(std::size_t n, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
    const double x = (1.0 - alpha) * static_cast<double>(n + 1);
    return static_cast<std::size_t>(std::ceil(x - 1e-9));
}

double conformal_quantile(std::span<const double> scores, double alpha, Direction direction) {
    if (scores.empty()) throw std::invalid_argument("conformal_quantile: empty scores");
    const std::size_t n = scores.size();
    const std::size_t k = quantile_index(n, alpha);
    if (k > n) return direction == Direction::upper ? kInf : -kInf;
    std::vector<double> sorted(scores.begin(), scores.end());
    if (direction == Direction::upper) {
        std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k - 1), sorted.end());
        return sorted[k - 1];
    }
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k - 1), sorted.end(),
                     std::greater<>());
    return sorted[k - 1];
}

namespace {

std::vector<double> scores_of(std::span<const CalibrationRecord> records) {
    std::vector<double> s;
    s.reserve(records.size());
    for (const auto& r : records) {
        if (!std::isfinite(r.score)) throw DataError("calibration score for '" + r.circuit_id + "' is not finite");
        s.push_back(r.score);
    }
    return s;
}

}  // namespace

ConformalBound calibrate_plain(std::span<const CalibrationRecord> records, double alpha, const std::string& kind,
                               Direction direction) {
    if (records.empty()) throw DataError("calibration set is empty");
    const auto scores = scores_of(records);
    ConformalBound b;
    b.alpha = alpha;
    b.setup = Setup::all;
    b.kind = kind;
    b.q_alpha = conformal_quantile(scores, alpha, direction);
    b.bound = b.q_alpha;
    b.n_cal_used = records.size();
    b.infeasible = !std::isfinite(b.q_alpha);
    return b;
}

double ordering_objective(std::span<const double> ordinals, double threshold, double test_ordinal) {
    double acc = 0.0, count = 0.0;
    for (double s : ordinals) {
        if (s > threshold) {
            acc += std::abs(s - test_ordinal);
            count += 1.0;
        }
    }
    return acc / (1.0 + count);
}

Selection mondrian_select(std::span<const CalibrationRecord> records, SelectionRule rule, double test_ordinal) {
    if (records.empty()) throw DataError("mondrian selection on an empty calibration set");
    std::vector<double> ordinals;
    std::set<double> distinct;
    for (const auto& r : records) {
        ordinals.push_back(r.ordinal);
        distinct.insert(r.ordinal);
    }

    Selection sel;
    auto keep_above = [&](double threshold) {
        sel.kept.clear();
        for (const auto& r : records) {
            if (r.ordinal > threshold) sel.kept.push_back(r);
        }
        sel.s_min = kInf;
        for (const auto& r : sel.kept) sel.s_min = std::min(sel.s_min, r.ordinal);
        sel.objective = ordering_objective(ordinals, threshold, test_ordinal);
    };

    if (rule == SelectionRule::second_largest) {
        auto it = distinct.lower_bound(test_ordinal);  // first ordinal >= test
        if (it == distinct.begin()) {
            keep_above(-kInf);
            sel.warning = true;
            return sel;
        }
        const double target = *std::prev(it);
        sel.kept.clear();
        for (const auto& r : records) {
            if (r.ordinal == target) sel.kept.push_back(r);
        }
        sel.s_min = target;
        std::vector<double> kept_ordinals(sel.kept.size(), target);
        sel.objective = ordering_objective(kept_ordinals, -kInf, test_ordinal);
        return sel;
    }

    // Candidate thresholds: -inf (keep all) and each distinct ordinal except
    // the largest, which would discard everything.
    double best_t = -kInf;
    double best = ordering_objective(ordinals, best_t, test_ordinal);
    for (auto it = distinct.begin(); it != distinct.end() && std::next(it) != distinct.end(); ++it) {
        const double v = ordering_objective(ordinals, *it, test_ordinal);
        if (v < best) {
            best = v;
            best_t = *it;
        }
    }
    keep_above(best_t);
    return sel;
}

ConformalBound calibrate_mondrian(std::span<const CalibrationRecord> records, double test_ordinal, double alpha,
                                  SelectionRule rule, const std::string& kind) {
    const Selection sel = mondrian_select(records, rule, test_ordinal);
    ConformalBound b = calibrate_plain(sel.kept, alpha, kind);
    b.setup = Setup::mondrian;
    b.n_discarded = records.size() - sel.kept.size();
    b.selection_warning = sel.warning;
    return b;
}

ConformalBound calibrate_shift(std::span<const CalibrationRecord> records, std::span<const double> predictions,
                               double g_test, double alpha, Residual residual, const std::string& kind, Setup setup) {
    if (records.empty()) throw DataError("calibration set is empty");
    if (predictions.size() != records.size()) throw std::invalid_argument("calibrate_shift: prediction count mismatch");
    const auto scores = scores_of(records);
    std::vector<double> resid(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        resid[i] = scores[i] - predictions[i];
        if (residual == Residual::absolute) resid[i] = std::abs(resid[i]);
    }
    ConformalBound b;
    b.alpha = alpha;
    b.setup = setup;
    b.kind = kind;
    b.q_alpha = conformal_quantile(resid, alpha, Direction::upper);
    b.bound = g_test + b.q_alpha;
    if (residual == Residual::absolute) {
        b.has_lower = true;
        b.lower = std::max(0.0, g_test - b.q_alpha);
    }
    b.n_cal_used = records.size();
    b.infeasible = !std::isfinite(b.q_alpha);
    return b;
}

ConformalBound calibrate_shift(std::span<const CalibrationRecord> records, const shift::ShiftRegressor& g,
                               const shift::MomentFeatures& test_features, double alpha, Residual residual,
                               const std::string& kind, Setup setup) {
    std::vector<double> pred;
    pred.reserve(records.size());
    for (const auto& r : records) pred.push_back(shift::predict_shift(g, r.features));
    return calibrate_shift(records, pred, shift::predict_shift(g, test_features), alpha, residual, kind, setup);
}

nlohmann::json to_json(const ConformalBound& b) {
    auto num = [](double v) -> nlohmann::json {
        if (std::isfinite(v)) return v;
        return v > 0 ? "inf" : "-inf";
    };
    nlohmann::json j = {{"setup", to_string(b.setup)},
                        {"kind", b.kind},
                        {"alpha", b.alpha},
                        {"q_alpha", num(b.q_alpha)},
                        {"bound", num(b.bound)},
                        {"size", num(b.size())},
                        {"n_cal", b.n_cal_used},
                        {"n_discarded", b.n_discarded},
                        {"infeasible", b.infeasible}};
    if (b.has_lower) j["lower"] = num(b.lower);
    if (b.selection_warning) j["selection_warning"] = true;
    return j;
}

// ---------------------------------------------------------------------------

GridDensity gaussian_density(double mu, double sigma, double lo, double hi, std::size_t points) {
    if (!(sigma > 0.0) || !(hi > lo) || points < 3) throw std::invalid_argument("gaussian_density: bad arguments");
    GridDensity d{lo, hi, std::vector<double>(points)};
    const double h = d.step();
    const double norm = 1.0 / (sigma * std::sqrt(2.0 * std::numbers::pi));
    for (std::size_t k = 0; k < points; ++k) {
        const double z = (lo + h * static_cast<double>(k) - mu) / sigma;
        d.values[k] = norm * std::exp(-0.5 * z * z);
    }
    return d;
}

double integrate(const GridDensity& d) {
    if (d.values.size() < 2) throw std::invalid_argument("density grid needs at least 2 points");
    double acc = 0.5 * (d.values.front() + d.values.back());
    for (std::size_t k = 1; k + 1 < d.values.size(); ++k) acc += d.values[k];
    return acc * d.step();
}

namespace {

void check_density(const GridDensity& d) {
    const double mass = integrate(d);
    if (std::abs(mass - 1.0) > 1e-6) {
        throw std::invalid_argument("density integrates to " + std::to_string(mass) + ", not 1 +- 1e-6");
    }
}

}  // namespace

double total_variation(const GridDensity& p, const GridDensity& q) {
    if (p.values.size() != q.values.size() || p.lo != q.lo || p.hi != q.hi) {
        throw std::invalid_argument("total_variation: densities are on different grids");
    }
    check_density(p);
    check_density(q);
    GridDensity diff{p.lo, p.hi, std::vector<double>(p.values.size())};
    for (std::size_t k = 0; k < diff.values.size(); ++k) diff.values[k] = std::abs(p.values[k] - q.values[k]);
    return 0.5 * integrate(diff);
}

double gap_estimate(std::span<const GridDensity> cal, const GridDensity& test) {
    if (cal.empty()) throw std::invalid_argument("gap_estimate: no calibration densities");
    double acc = 0.0;
    for (const auto& d : cal) acc += total_variation(d, test);
    return acc / static_cast<double>(cal.size() + 1);
}

double gaussian_tv_numeric(double mu1, double mu2, double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be > 0");
    if (mu1 == mu2) return 0.0;
    // Grid symmetric about the midpoint, where |p - q| has its kink, so the
    // trapezoid rule only ever sees smooth pieces.
    const double mid = 0.5 * (mu1 + mu2);
    const double half = 0.5 * std::abs(mu1 - mu2) + 12.0 * sigma;
    const std::size_t points = 2 * 120000 + 1;
    const double h = 2.0 * half / static_cast<double>(points - 1);
    const double norm = 1.0 / (sigma * std::sqrt(2.0 * std::numbers::pi));
    double acc = 0.0;
    for (std::size_t k = 0; k < points; ++k) {
        const double x = mid - half + h * static_cast<double>(k);
        const double z1 = (x - mu1) / sigma, z2 = (x - mu2) / sigma;
        const double v = std::abs(std::exp(-0.5 * z1 * z1) - std::exp(-0.5 * z2 * z2)) * norm;
        acc += (k == 0 || k + 1 == points) ? 0.5 * v : v;
    }
    return 0.5 * acc * h;
}

double gaussian_tv_exact(double mu1, double mu2, double sigma) {
    return std::erf(std::abs(mu1 - mu2) / (2.0 * std::numbers::sqrt2 * sigma));
}

Lemma1Result verify_lemma1(double s1, double s2, double s3, std::size_t n_bar, std::size_t n, bool exact) {
    if (!(s1 <= s2 && s2 <= s3)) throw std::invalid_argument("verify_lemma1: need s1 <= s2 <= s3");
    if (n == 0 || n_bar > n) throw std::invalid_argument("verify_lemma1: need 0 <= n_bar <= N, N >= 1");
    constexpr double gamma = 1.0 / 5.0;
    const double nb = static_cast<double>(n_bar), nn = static_cast<double>(n);
    const double d13 = std::abs(s1 - s3), d23 = std::abs(s2 - s3), d12 = std::abs(s2 - s1);

    Lemma1Result r;
    auto gap_all = [&](double tv13, double tv23) { return (nb * tv13 + (nn - nb) * tv23) / (nn + 1.0); };
    auto gap_sel = [&](double tv23) { return (nn - nb) * tv23 / (nn - nb + 1.0); };

    r.gap_all_proxy = gap_all(0.5 * gamma * d13, 0.5 * gamma * d23);
    r.gap_selected_proxy = n_bar == 0 ? r.gap_all_proxy : gap_sel(0.5 * gamma * d23);
    if (exact) {
        const double tv13 = gaussian_tv_numeric(s1, s3), tv23 = gaussian_tv_numeric(s2, s3);
        r.gap_all_exact = gap_all(tv13, tv23);
        r.gap_selected_exact = n_bar == 0 ? r.gap_all_exact : gap_sel(tv23);
    }
    r.in_regime = d13 < 1.0 / 40.0;
    r.premise_n_is_nbar = d13 > ((nn - nb) / (nn - nb + 1.0)) * d12;
    r.premise_n_is_one = d13 > ((nn - 1.0) / (nn - nb + 1.0)) * d12;
    r.selection_helps_proxy = r.gap_selected_proxy < r.gap_all_proxy;
    r.selection_helps_exact = r.gap_selected_exact < r.gap_all_exact;
    return r;
}

Theorem1Result verify_theorem1(double c, std::size_t m, double t) {
    if (!(c > 0.0 && c < 1.0)) throw std::invalid_argument("verify_theorem1: c must lie in (0, 1)");
    if (m == 0) throw std::invalid_argument("verify_theorem1: M must be >= 1");
    if (!(t > 0.0)) throw std::invalid_argument("verify_theorem1: t must be > 0");
    Theorem1Result r;
    r.c = c;
    r.big_c = std::abs(c - 1.0 / c);
    const double md = static_cast<double>(m);
    if (r.big_c < 1e-12) {
        r.factor_as_written = 1.0;
        r.tail_as_written = 0.0;
    } else {
        r.tail_as_written = 2.0 * std::exp(-2.0 * t * t / (md * r.big_c));
        r.factor_as_written = 1.0 - r.tail_as_written;
    }
    const double range = 1.0 / c - c;
    r.tail_hoeffding = std::min(1.0, 2.0 * std::exp(-2.0 * md * t * t / (range * range)));
    return r;
}

Theorem1MonteCarlo theorem1_monte_carlo(std::span<const double> p, std::span<const double> q, std::size_t m,
                                        double t, std::size_t trials, std::uint64_t seed) {
    if (p.size() != q.size() || p.empty()) throw std::invalid_argument("theorem1_monte_carlo: size mismatch");
    double min_prob = 1.0, bc = 0.0;
    std::vector<double> root_ratio(p.size());
    for (std::size_t y = 0; y < p.size(); ++y) {
        if (!(p[y] > 0.0 && q[y] > 0.0)) throw std::invalid_argument("theorem1_monte_carlo: probabilities must be > 0");
        min_prob = std::min({min_prob, p[y], q[y]});
        root_ratio[y] = std::sqrt(p[y] / q[y]);
        bc += std::sqrt(p[y] * q[y]);
    }
    Theorem1MonteCarlo out;
    out.bc = bc;
    out.trials = trials;
    out.bounds = verify_theorem1(std::sqrt(min_prob), m, t);

    std::discrete_distribution<std::size_t> draw(q.begin(), q.end());
    std::size_t violations = 0;
    for (std::size_t k = 0; k < trials; ++k) {
        Rng rng(derive_seed(seed, {0x71, k}));
        double acc = 0.0;
        for (std::size_t i = 0; i < m; ++i) acc += root_ratio[draw(rng)];
        if (std::abs(acc / static_cast<double>(m) - bc) > t) ++violations;
    }
    const double rate = static_cast<double>(violations) / static_cast<double>(trials);
    out.violation_rate = rate;
    out.standard_error = std::sqrt(rate * (1.0 - rate) / static_cast<double>(trials));
    return out;
}

}  // namespace confbound::conformal
