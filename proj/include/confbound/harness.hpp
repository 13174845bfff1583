#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "confbound/conformal.hpp"
#include "confbound/qsim.hpp"
#include "confbound/ratio.hpp"
#include "confbound/shift_model.hpp"

namespace confbound::harness {

inline constexpr std::uint64_t kDefaultSeed = 20240917;

/// A family swept over build parameters (size, or depth for walker) and
/// circuit seeds. The build parameter doubles as the ordinal feature.
struct CircuitGroup {
    qsim::Family family = qsim::Family::ghz;
    std::vector<int> params;
    std::vector<std::uint64_t> seeds{0};
};

/// Which score is compared with the bound on test circuits.
enum class Oracle {
    estimator,  // the same ratio-model estimate used for calibration scores
    empirical,  // exact divergence between the empirical ideal and noisy distributions
};

struct ExperimentManifest {
    std::string name = "experiment";
    std::vector<CircuitGroup> circuits;
    std::vector<double> machines{0.5, 0.75, 1.0, 1.25, 1.5};  // noise multipliers k
    std::size_t shots = 1000;
    std::size_t runs = 5;
    double alpha = 0.1;
    std::vector<ratio::Divergence> kinds{ratio::Divergence::bc, ratio::Divergence::kl, ratio::Divergence::tv};
    std::vector<conformal::Setup> setups{conformal::Setup::all, conformal::Setup::mondrian, conformal::Setup::shift,
                                         conformal::Setup::shift_mondrian};
    std::uint64_t master_seed = kDefaultSeed;
    double shift_train_fraction = 0.5;  // random split for the plain shift setup
    ratio::FeatureKind feature_map = ratio::FeatureKind::quadratic;
    std::size_t feature_width = shift::kDefaultWidth;
    shift::ForestOptions forest{};
    conformal::Residual residual = conformal::Residual::signed_;
    Oracle oracle = Oracle::estimator;

    /// Throws DataError on an unusable manifest.
    void validate() const;
};

ExperimentManifest manifest_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentManifest& m);
ExperimentManifest load_manifest(const std::string& path);

struct CircuitSpec {
    qsim::Family family = qsim::Family::ghz;
    int param = 0;
    std::uint64_t seed = 0;
    std::string id;  // e.g. "random_n7_s2"
    double ordinal = 0.0;
};

std::vector<CircuitSpec> expand_circuits(const ExperimentManifest& m);

std::string machine_id(std::size_t machine);

/// Ideal and noisy shots of one circuit on one machine for one run.
struct ShotPair {
    sampleset::ShotMatrix ideal;
    sampleset::ShotMatrix noisy;
};

ShotPair generate_shots(const ExperimentManifest& m, const CircuitSpec& c, std::size_t circuit_index,
                        std::size_t machine, std::size_t run);

/// One circuit run on one machine, reduced to scores and features.
struct RunRecord {
    std::size_t circuit_index = 0;
    std::string circuit_id;
    std::size_t machine = 0;
    std::size_t run = 0;
    double ordinal = 0.0;
    std::size_t width = 0;
    std::array<double, 3> estimate{};   // ratio-model estimate, indexed by Divergence
    std::array<double, 3> empirical{};  // exact divergence of the empirical distributions
    shift::MomentFeatures features;
    bool fit_converged = true;

    std::string run_id() const;  // circuit_id + "_r" + run
};

RunRecord score_run(const ExperimentManifest& m, const CircuitSpec& c, std::size_t circuit_index, std::size_t machine,
                    std::size_t run, const ShotPair& shots);

/// Generates and scores every circuit x machine x run; jobs = 0 uses all cores.
std::vector<RunRecord> generate_records(const ExperimentManifest& m, std::size_t jobs = 0);

struct Metric {
    double coverage = 0.0;
    double size = 0.0;
    bool size_infinite = false;
};

/// Coverage = fraction of oracle <= bound (closed bound); size = mean of
/// `sizes`. Throws std::invalid_argument on empty or mismatched input.
Metric coverage_and_size(std::span<const double> bounds, std::span<const double> oracle,
                         std::span<const double> sizes);
Metric coverage_and_size(std::span<const double> bounds, std::span<const double> oracle);

struct Aggregate {
    double coverage_mean = 0.0;
    double coverage_sd = 0.0;
    double size_mean = 0.0;
    double size_sd = 0.0;
    bool size_infinite = false;
};

/// Mean and sample standard deviation (n - 1 denominator) across folds.
Aggregate aggregate(std::span<const Metric> folds);

struct FoldResult {
    std::size_t fold = 0;
    std::size_t machine_left_out = 0;
    ratio::Divergence kind = ratio::Divergence::bc;
    conformal::Setup setup = conformal::Setup::all;
    Metric metric;
    double test_ordinal = 0.0;
    double q_alpha = 0.0;
    std::size_t n_discarded = 0;
    bool infeasible = false;
    // Indices into the record list, kept for leakage audits.
    std::vector<std::size_t> train;
    std::vector<std::size_t> calibration;
    std::vector<std::size_t> test;
    std::vector<double> bounds;
    std::vector<double> oracle;
};

struct SummaryRow {
    ratio::Divergence kind = ratio::Divergence::bc;
    conformal::Setup setup = conformal::Setup::all;
    Aggregate value;
};

struct ExperimentResult {
    std::vector<FoldResult> folds;
    std::vector<SummaryRow> summary;

    const SummaryRow& row(ratio::Divergence kind, conformal::Setup setup) const;
};

/// Leave-one-machine-out evaluation of every kind x setup on scored records.
ExperimentResult evaluate(const ExperimentManifest& m, const std::vector<RunRecord>& records, std::size_t jobs = 0);

ExperimentResult run_pipeline(const ExperimentManifest& m, std::size_t jobs = 0);

void write_results_csv(std::ostream& out, const ExperimentResult& r);
nlohmann::json summary_json(const ExperimentManifest& m, const ExperimentResult& r);
void write_summary_csv(std::ostream& out, const ExperimentResult& r);
void write_plot_csv(std::ostream& out, const ExperimentManifest& m, const std::vector<RunRecord>& records);

nlohmann::json to_json(const RunRecord& r);
RunRecord run_record_from_json(const nlohmann::json& j);

}  // namespace confbound::harness
