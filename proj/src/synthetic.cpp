#include "confbound/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "confbound/error.hpp"
#include "confbound/rng.hpp"

namespace confbound::synthetic {

namespace {

constexpr double kEps = 1e-4;

void check_weights(const ProductBernoulli& w) {
    for (double x : w.weights) {
        if (!(x > 0.0 && x < 1.0)) throw std::invalid_argument("Bernoulli weights must lie in (0, 1)");
    }
}

}  // namespace

std::vector<double> rescale(std::span<const double> raw) {
    std::vector<double> out(raw.size(), 0.5);
    if (raw.empty()) return out;
    const auto [lo_it, hi_it] = std::minmax_element(raw.begin(), raw.end());
    const double lo = *lo_it, hi = *hi_it;
    if (!(hi > lo)) {
        if (lo == 0.0) std::fill(out.begin(), out.end(), kWeightLo);
        return out;
    }
    for (std::size_t i = 0; i < raw.size(); ++i) {
        out[i] = kWeightLo + (kWeightHi - kWeightLo) * (raw[i] - lo) / (hi - lo);
    }
    return out;
}

std::vector<double> raw_profile(const WeightProfile& profile) {
    if (profile.dim == 0) throw std::invalid_argument("weight profile dimension must be >= 1");
    const auto s = static_cast<double>(profile.dim);
    std::vector<double> raw(profile.dim);
    Rng rng(derive_seed(profile.seed, {0x77}));
    for (std::size_t k = 0; k < profile.dim; ++k) {
        const double i = static_cast<double>(k + 1);
        switch (profile.kind) {
            case ProfileKind::log:
                raw[k] = std::log(1.0 + i) / s;
                break;
            case ProfileKind::rand:
                raw[k] = uniform01(rng) * i / s;
                break;
            case ProfileKind::cos: {
                const double c = std::cos(std::numbers::pi / (kEps + i));
                raw[k] = c * c;
                break;
            }
        }
    }
    return raw;
}

ProductBernoulli make_weights(const WeightProfile& profile) {
    const auto raw = raw_profile(profile);
    return ProductBernoulli{rescale(raw)};
}

std::vector<double> raw_perturbation(const ProductBernoulli& w, ProfileKind kind, std::uint64_t seed) {
    std::vector<double> raw(w.dim());
    Rng rng(derive_seed(seed, {0x99}));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i < w.dim(); ++i) {
        const double wi = w.weights[i];
        switch (kind) {
            case ProfileKind::log:
                raw[i] = std::log(kEps + wi);
                break;
            case ProfileKind::rand:
                raw[i] = wi * normal(rng);
                break;
            case ProfileKind::cos:
                raw[i] = std::cos(wi * 2.0 * std::numbers::pi);
                break;
        }
    }
    return raw;
}

ProductBernoulli perturb(const ProductBernoulli& w, ProfileKind kind, std::uint64_t seed) {
    const auto raw = raw_perturbation(w, kind, seed);
    return ProductBernoulli{rescale(raw)};
}

double closed_form_dbc(const ProductBernoulli& w, const ProductBernoulli& v) {
    if (w.dim() != v.dim()) throw std::invalid_argument("closed_form_dbc: dimension mismatch");
    check_weights(w);
    check_weights(v);
    // Sum of logs rather than log of the product: stays finite for s = 80.
    double d = 0.0;
    for (std::size_t i = 0; i < w.dim(); ++i) {
        const double a = w.weights[i], b = v.weights[i];
        d -= std::log(std::sqrt(a * b) + std::sqrt((1.0 - a) * (1.0 - b)));
    }
    return std::max(d, 0.0);
}

sampleset::ShotMatrix sample(const ProductBernoulli& w, std::size_t shots, std::uint64_t seed) {
    if (shots == 0) throw std::invalid_argument("sample: M must be >= 1");
    if (w.dim() == 0) throw std::invalid_argument("sample: empty weight vector");
    Rng rng(seed);
    std::vector<std::uint8_t> bits(shots * w.dim());
    for (std::size_t m = 0; m < shots; ++m) {
        for (std::size_t i = 0; i < w.dim(); ++i) {
            bits[m * w.dim() + i] = uniform01(rng) < w.weights[i] ? 1 : 0;
        }
    }
    return sampleset::ShotMatrix(std::move(bits), w.dim());
}

sampleset::EmpiricalDistribution enumerate_joint(const ProductBernoulli& w) {
    if (w.dim() == 0 || w.dim() > sampleset::kMaxExactDim) {
        throw std::invalid_argument("enumerate_joint: dimension out of range");
    }
    sampleset::EmpiricalDistribution d;
    d.support_dim = w.dim();
    const std::size_t n = std::size_t{1} << w.dim();
    for (std::size_t x = 0; x < n; ++x) {
        std::string key(w.dim(), '0');
        double p = 1.0;
        for (std::size_t i = 0; i < w.dim(); ++i) {
            // Character i is bit i of the row, the leftmost character being bit 0.
            const bool one = (x >> (w.dim() - 1 - i)) & 1U;
            key[i] = one ? '1' : '0';
            p *= one ? w.weights[i] : 1.0 - w.weights[i];
        }
        if (p > 0.0) d.probs.emplace(std::move(key), p);
    }
    return d;
}

ProfileKind parse_profile_kind(const std::string& name) {
    if (name == "log") return ProfileKind::log;
    if (name == "rand") return ProfileKind::rand;
    if (name == "cos") return ProfileKind::cos;
    throw DataError("unknown profile kind '" + name + "'");
}

std::string to_string(ProfileKind kind) {
    switch (kind) {
        case ProfileKind::log: return "log";
        case ProfileKind::rand: return "rand";
        case ProfileKind::cos: return "cos";
    }
    return "?";
}

nlohmann::json to_json(const ProductBernoulli& w) { return nlohmann::json(w.weights); }

ProductBernoulli product_bernoulli_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw DataError("weight vector must be a JSON array");
    ProductBernoulli w{j.get<std::vector<double>>()};
    for (double x : w.weights) {
        if (!(x > 0.0 && x < 1.0)) throw DataError("weight outside (0, 1)");
    }
    return w;
}

}  // namespace confbound::synthetic
