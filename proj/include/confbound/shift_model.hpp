#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "confbound/sampleset.hpp"

namespace confbound::shift {

/// Default padded feature width: a 16-bit output has 16 + 16^2 moments.
inline constexpr std::size_t kDefaultWidth = 16 + 16 * 16;

/// First and second empirical moments of a noisy sample set.
struct MomentFeatures {
    std::size_t s = 0;
    std::vector<double> mean;       // length s
    std::vector<double> second;     // s x s row-major
    bool centered = false;          // second holds the covariance when set
    std::size_t width = 0;          // padded length W
    std::vector<double> flattened;  // [mean, second], zero-padded to W
};

/// Throws DataError if s + s^2 exceeds `width`.
MomentFeatures moment_features(const sampleset::ShotMatrix& noisy, std::size_t width = kDefaultWidth,
                               bool centered = false);

struct ForestOptions {
    std::size_t trees = 100;
    std::size_t min_leaf = 2;
    double feature_frac = 1.0 / 3.0;
    bool bootstrap = true;
    std::uint64_t seed = 0;
};

/// Flat CART tree; a node with feature < 0 is a leaf.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;  // go left when x[feature] <= threshold
    int left = -1;
    int right = -1;
    double value = 0.0;  // leaf mean (also kept on internal nodes)
    std::size_t count = 0;
};

struct RegressionTree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root

    double predict(std::span<const double> x) const;
};

struct ShiftRegressor {
    ForestOptions options;
    std::size_t width = 0;
    std::vector<RegressionTree> trees;

    double predict(std::span<const double> x) const;
};

struct TrainingPoint {
    std::vector<double> x;
    double target = 0.0;
};

/// Random forest of variance-reduction regression trees. Each split samples
/// ceil(feature_frac * W) candidate features and keeps scanning the rest of
/// the permutation only if none of them admits a split. Ties go to the lowest
/// feature index, then the lowest threshold.
ShiftRegressor fit_forest(const std::vector<TrainingPoint>& data, const ForestOptions& options = {});

ShiftRegressor fit_shift(const std::vector<MomentFeatures>& features, std::span<const double> scores,
                         const ForestOptions& options = {});

/// Throws DataError on a width mismatch.
double predict_shift(const ShiftRegressor& g, const MomentFeatures& f);

nlohmann::json to_json(const ShiftRegressor& g);
ShiftRegressor shift_regressor_from_json(const nlohmann::json& j);

nlohmann::json to_json(const MomentFeatures& f);
MomentFeatures moment_features_from_json(const nlohmann::json& j);

}  // namespace confbound::shift
