#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "confbound/sampleset.hpp"

namespace confbound::ratio {

enum class Divergence { bc, kl, tv };

Divergence parse_divergence(const std::string& name);  // "bc" | "kl" | "tv"
std::string to_string(Divergence kind);

enum class FeatureKind { linear, quadratic };

FeatureKind parse_feature_kind(const std::string& name);
std::string to_string(FeatureKind kind);

/// Fixed map from a bitstring to [1, y_1..y_s] (linear) or
/// [1, y_1..y_s, y_i y_j for i < j] (quadratic).
struct RatioFeatureMap {
    FeatureKind kind = FeatureKind::quadratic;
    std::size_t width = 0;

    std::size_t dim() const;
    void map(std::span<const std::uint8_t> row, std::span<double> out) const;
    std::vector<double> map(std::span<const std::uint8_t> row) const;
};

/// Logistic classifier f = sigma(theta^T phi) separating ideal (label 1) from
/// noisy (label 0) rows; the density ratio P_ideal / P_noisy is the
/// classifier odds times M_noisy / M_ideal.
struct RatioModel {
    RatioFeatureMap features;
    std::vector<double> theta;
    double log_prior_offset = 0.0;  // log(M_noisy / M_ideal)
    std::vector<double> train_loss_trace;
    bool converged = false;

    double log_ratio(std::span<const std::uint8_t> row) const;
    double ratio(std::span<const std::uint8_t> row) const;
};

struct FitOptions {
    std::size_t max_iterations = 10000;
    double gradient_tolerance = 1e-6;  // per training row: stop at |grad| <= tol * (M_ideal + M_noisy)
    /// Above this many features the solver switches from damped Newton to
    /// L-BFGS; both use backtracking so the loss never increases.
    std::size_t newton_max_dim = 512;
};

/// Default regularisation strength: 1e-3 * (M_ideal + M_noisy).
double default_regularization(const sampleset::ShotMatrix& ideal, const sampleset::ShotMatrix& noisy);

/// Minimises sum of per-row cross-entropy + (reg / 2) * ||theta without bias||^2.
RatioModel fit_ratio(const sampleset::ShotMatrix& ideal, const sampleset::ShotMatrix& noisy,
                     const RatioFeatureMap& fm, double reg, const FitOptions& options = {});

/// Convenience overload: quadratic features, default regularisation.
RatioModel fit_ratio(const sampleset::ShotMatrix& ideal, const sampleset::ShotMatrix& noisy);

/// Objective value and gradient at theta (exposed for finite-difference tests).
double training_loss(const sampleset::ShotMatrix& ideal, const sampleset::ShotMatrix& noisy,
                     const RatioFeatureMap& fm, double reg, std::span<const double> theta,
                     std::vector<double>* gradient = nullptr);

struct BcEstimate {
    double value = 0.0;  // clipped to [0, 1]
    double raw = 0.0;    // mean of sqrt(r) before clipping
};

/// BC ~ mean over noisy rows of sqrt(r(row)).
BcEstimate estimate_bc(const RatioModel& model, const sampleset::ShotMatrix& noisy);

/// d_BC = -log(max(BC, 1e-12)); d_KL = max(0, -mean log r); d_TV = mean |r - 1| / 2.
double estimate_divergence(const RatioModel& model, const sampleset::ShotMatrix& noisy, Divergence kind);

nlohmann::json to_json(const RatioModel& model);
RatioModel ratio_model_from_json(const nlohmann::json& j);

}  // namespace confbound::ratio
