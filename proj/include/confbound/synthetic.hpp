#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "confbound/sampleset.hpp"

namespace confbound::synthetic {

/// Factorised distribution over {0,1}^s; bit i is Bernoulli(weights[i]).
struct ProductBernoulli {
    std::vector<double> weights;

    std::size_t dim() const { return weights.size(); }
};

enum class ProfileKind { log, rand, cos };

struct WeightProfile {
    ProfileKind kind = ProfileKind::log;
    std::size_t dim = 10;
    std::uint64_t seed = 0;  // used by rand only
};

/// Interior range every generated weight vector is mapped into.
inline constexpr double kWeightLo = 0.02;
inline constexpr double kWeightHi = 0.98;

/// Min-max affine map of `raw` onto [kWeightLo, kWeightHi]. A constant vector
/// maps to 0.5 everywhere, except the all-zero vector which maps to kWeightLo.
std::vector<double> rescale(std::span<const double> raw);

ProductBernoulli make_weights(const WeightProfile& profile);

/// Builds the perturbed weights from the raw perturbation of `w`:
///   log:  log(1e-4 + w_i)
///   rand: w_i * V_i, V_i ~ N(0, 1) i.i.d.
///   cos:  cos(2 pi w_i)
/// followed by `rescale`.
ProductBernoulli perturb(const ProductBernoulli& w, ProfileKind kind, std::uint64_t seed);

/// Raw (pre-rescale) perturbation, exposed for tests.
std::vector<double> raw_perturbation(const ProductBernoulli& w, ProfileKind kind, std::uint64_t seed);
std::vector<double> raw_profile(const WeightProfile& profile);

/// -log prod_i (sqrt(w_i v_i) + sqrt((1 - w_i)(1 - v_i)))
double closed_form_dbc(const ProductBernoulli& w, const ProductBernoulli& v);

sampleset::ShotMatrix sample(const ProductBernoulli& w, std::size_t shots, std::uint64_t seed);

/// Full joint over {0,1}^s for s <= kMaxExactDim (test oracle support).
sampleset::EmpiricalDistribution enumerate_joint(const ProductBernoulli& w);

ProfileKind parse_profile_kind(const std::string& name);
std::string to_string(ProfileKind kind);

nlohmann::json to_json(const ProductBernoulli& w);
ProductBernoulli product_bernoulli_from_json(const nlohmann::json& j);

}  // namespace confbound::synthetic
