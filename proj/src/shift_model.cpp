#include "confbound/shift_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "confbound/error.hpp"
#include "confbound/rng.hpp"

namespace confbound::shift {

MomentFeatures moment_features(const sampleset::ShotMatrix& noisy, std::size_t width, bool centered) {
    if (noisy.empty()) throw DataError("moment_features: no samples");
    const std::size_t s = noisy.width();
    if (s + s * s > width) {
        throw DataError("moment features of a " + std::to_string(s) + "-bit output need " +
                        std::to_string(s + s * s) + " entries, more than the padded width W = " +
                        std::to_string(width));
    }
    MomentFeatures f;
    f.s = s;
    f.centered = centered;
    f.width = width;
    f.mean.assign(s, 0.0);
    f.second.assign(s * s, 0.0);
    const auto m_rows = noisy.rows();
    std::vector<std::size_t> ones;
    for (std::size_t m = 0; m < m_rows; ++m) {
        auto r = noisy.row(m);
        ones.clear();
        for (std::size_t i = 0; i < s; ++i) {
            if (r[i]) {
                f.mean[i] += 1.0;
                ones.push_back(i);
            }
        }
        for (auto a : ones) {
            for (auto b : ones) f.second[a * s + b] += 1.0;
        }
    }
    const double inv = 1.0 / static_cast<double>(m_rows);
    for (double& v : f.mean) v *= inv;
    for (double& v : f.second) v *= inv;
    if (centered) {
        for (std::size_t i = 0; i < s; ++i) {
            for (std::size_t j = 0; j < s; ++j) f.second[i * s + j] -= f.mean[i] * f.mean[j];
        }
    }
    f.flattened.assign(width, 0.0);
    std::copy(f.mean.begin(), f.mean.end(), f.flattened.begin());
    std::copy(f.second.begin(), f.second.end(), f.flattened.begin() + static_cast<std::ptrdiff_t>(s));
    return f;
}

double RegressionTree::predict(std::span<const double> x) const {
    std::size_t k = 0;
    while (nodes[k].feature >= 0) {
        const auto& n = nodes[k];
        k = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
    }
    return nodes[k].value;
}

double ShiftRegressor::predict(std::span<const double> x) const {
    if (x.size() != width) {
        throw DataError("shift model expects " + std::to_string(width) + " features, got " +
                        std::to_string(x.size()));
    }
    if (trees.empty()) throw std::logic_error("shift model has no trees");
    double acc = 0.0;
    for (const auto& t : trees) acc += t.predict(x);
    return acc / static_cast<double>(trees.size());
}

namespace {

struct Split {
    int feature = -1;
    double threshold = 0.0;
    double sse = 0.0;
};

class TreeBuilder {
public:
    TreeBuilder(const std::vector<TrainingPoint>& data, const ForestOptions& opt, Rng& rng)
        : data_(data), opt_(opt), rng_(rng), width_(data.front().x.size()) {
        n_try_ = static_cast<std::size_t>(std::ceil(opt.feature_frac * static_cast<double>(width_)));
        n_try_ = std::clamp<std::size_t>(n_try_, 1, width_);
        perm_.resize(width_);
    }

    RegressionTree build(std::vector<std::size_t> idx) {
        RegressionTree tree;
        tree.nodes.emplace_back();
        grow(tree, 0, idx);
        return tree;
    }

private:
    void grow(RegressionTree& tree, std::size_t node, std::vector<std::size_t>& idx) {
        double sum = 0.0;
        for (auto i : idx) sum += data_[i].target;
        const double mean = sum / static_cast<double>(idx.size());
        tree.nodes[node].value = mean;
        tree.nodes[node].count = idx.size();

        if (idx.size() < 2 * opt_.min_leaf) return;
        const bool constant = std::all_of(idx.begin(), idx.end(),
                                          [&](std::size_t i) { return data_[i].target == data_[idx[0]].target; });
        if (constant) return;

        const Split best = find_split(idx);
        if (best.feature < 0) return;

        std::vector<std::size_t> left, right;
        for (auto i : idx) {
            (data_[i].x[static_cast<std::size_t>(best.feature)] <= best.threshold ? left : right).push_back(i);
        }
        idx.clear();
        idx.shrink_to_fit();

        const auto l = tree.nodes.size();
        tree.nodes.emplace_back();
        const auto r = tree.nodes.size();
        tree.nodes.emplace_back();
        tree.nodes[node].feature = best.feature;
        tree.nodes[node].threshold = best.threshold;
        tree.nodes[node].left = static_cast<int>(l);
        tree.nodes[node].right = static_cast<int>(r);
        grow(tree, l, left);
        grow(tree, r, right);
    }

    Split find_split(const std::vector<std::size_t>& idx) {
        std::iota(perm_.begin(), perm_.end(), 0);
        std::shuffle(perm_.begin(), perm_.end(), rng_);
        Split best;
        bool found = false;
        // The first n_try_ features are always inspected; further ones only
        // until a valid split exists.
        for (std::size_t k = 0; k < width_; ++k) {
            if (k >= n_try_ && found) break;
            Split cand;
            if (best_for_feature(idx, perm_[k], cand)) {
                if (!found || better(cand, best)) best = cand;
                found = true;
            }
        }
        return best;
    }

    static bool better(const Split& a, const Split& b) {
        const double tol = 1e-12 * std::max(1.0, std::abs(b.sse));
        if (a.sse < b.sse - tol) return true;
        if (a.sse > b.sse + tol) return false;
        if (a.feature != b.feature) return a.feature < b.feature;
        return a.threshold < b.threshold;
    }

    bool best_for_feature(const std::vector<std::size_t>& idx, std::size_t f, Split& out) {
        pairs_.clear();
        for (auto i : idx) pairs_.emplace_back(data_[i].x[f], data_[i].target);
        std::sort(pairs_.begin(), pairs_.end());
        if (pairs_.front().first == pairs_.back().first) return false;

        const std::size_t n = pairs_.size();
        double total = 0.0, total_sq = 0.0;
        for (const auto& p : pairs_) {
            total += p.second;
            total_sq += p.second * p.second;
        }
        double left = 0.0, left_sq = 0.0;
        bool found = false;
        for (std::size_t k = 0; k + 1 < n; ++k) {
            left += pairs_[k].second;
            left_sq += pairs_[k].second * pairs_[k].second;
            const std::size_t nl = k + 1, nr = n - nl;
            if (pairs_[k].first == pairs_[k + 1].first) continue;
            if (nl < opt_.min_leaf || nr < opt_.min_leaf) continue;
            const double right = total - left, right_sq = total_sq - left_sq;
            const double sse = (left_sq - left * left / static_cast<double>(nl)) +
                               (right_sq - right * right / static_cast<double>(nr));
            Split cand{static_cast<int>(f), 0.5 * (pairs_[k].first + pairs_[k + 1].first), sse};
            if (!found || better(cand, out)) {
                out = cand;
                found = true;
            }
        }
        return found;
    }

    const std::vector<TrainingPoint>& data_;
    const ForestOptions& opt_;
    Rng& rng_;
    std::size_t width_;
    std::size_t n_try_ = 1;
    std::vector<std::size_t> perm_;
    std::vector<std::pair<double, double>> pairs_;
};

}  // namespace

ShiftRegressor fit_forest(const std::vector<TrainingPoint>& data, const ForestOptions& options) {
    if (data.size() < 2) throw DataError("shift model needs at least 2 training records");
    if (options.trees == 0 || options.min_leaf == 0) throw std::invalid_argument("forest: trees and min_leaf must be >= 1");
    if (!(options.feature_frac > 0.0 && options.feature_frac <= 1.0)) {
        throw std::invalid_argument("forest: feature_frac must lie in (0, 1]");
    }
    const std::size_t width = data.front().x.size();
    for (const auto& p : data) {
        if (p.x.size() != width) throw DataError("shift model training features have mixed widths");
        if (!std::isfinite(p.target)) throw DataError("shift model training target is not finite");
    }

    ShiftRegressor g;
    g.options = options;
    g.width = width;
    g.trees.reserve(options.trees);
    const std::size_t n = data.size();
    for (std::size_t t = 0; t < options.trees; ++t) {
        Rng rng(derive_seed(options.seed, {0x7733, t}));
        std::vector<std::size_t> idx(n);
        if (options.bootstrap) {
            std::uniform_int_distribution<std::size_t> pick(0, n - 1);
            for (auto& i : idx) i = pick(rng);
        } else {
            std::iota(idx.begin(), idx.end(), 0);
        }
        TreeBuilder builder(data, options, rng);
        g.trees.push_back(builder.build(std::move(idx)));
    }
    return g;
}

ShiftRegressor fit_shift(const std::vector<MomentFeatures>& features, std::span<const double> scores,
                         const ForestOptions& options) {
    if (features.size() != scores.size()) throw std::invalid_argument("fit_shift: features/scores length mismatch");
    if (features.size() < 2) throw DataError("shift model needs at least 2 training records");
    std::vector<TrainingPoint> data;
    data.reserve(features.size());
    for (std::size_t i = 0; i < features.size(); ++i) data.push_back({features[i].flattened, scores[i]});
    return fit_forest(data, options);
}

double predict_shift(const ShiftRegressor& g, const MomentFeatures& f) {
    if (f.width != g.width || f.flattened.size() != g.width) {
        throw DataError("shift model width W = " + std::to_string(g.width) + " does not match features of width " +
                        std::to_string(f.flattened.size()));
    }
    return g.predict(f.flattened);
}

nlohmann::json to_json(const ShiftRegressor& g) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : g.trees) {
        nlohmann::json nodes = nlohmann::json::array();
        for (const auto& n : t.nodes) {
            if (n.feature < 0) {
                nodes.push_back({{"leaf_value", n.value}, {"count", n.count}});
            } else {
                nodes.push_back({{"feature", n.feature},
                                 {"threshold", n.threshold},
                                 {"left", n.left},
                                 {"right", n.right},
                                 {"count", n.count}});
            }
        }
        trees.push_back(std::move(nodes));
    }
    return {{"width", g.width},
            {"trees_count", g.options.trees},
            {"min_leaf", g.options.min_leaf},
            {"feature_frac", g.options.feature_frac},
            {"bootstrap", g.options.bootstrap},
            {"seed", g.options.seed},
            {"trees", std::move(trees)}};
}

ShiftRegressor shift_regressor_from_json(const nlohmann::json& j) {
    try {
        ShiftRegressor g;
        g.width = j.at("width").get<std::size_t>();
        g.options.trees = j.value("trees_count", std::size_t{0});
        g.options.min_leaf = j.value("min_leaf", std::size_t{2});
        g.options.feature_frac = j.value("feature_frac", 1.0 / 3.0);
        g.options.bootstrap = j.value("bootstrap", true);
        g.options.seed = j.value("seed", std::uint64_t{0});
        for (const auto& jt : j.at("trees")) {
            RegressionTree t;
            for (const auto& jn : jt) {
                TreeNode n;
                if (jn.contains("leaf_value")) {
                    n.value = jn.at("leaf_value").get<double>();
                } else {
                    n.feature = jn.at("feature").get<int>();
                    n.threshold = jn.at("threshold").get<double>();
                    n.left = jn.at("left").get<int>();
                    n.right = jn.at("right").get<int>();
                    if (n.feature < 0 || static_cast<std::size_t>(n.feature) >= g.width) {
                        throw DataError("shift model node feature out of range");
                    }
                }
                n.count = jn.value("count", std::size_t{0});
                t.nodes.push_back(n);
            }
            const auto size = static_cast<int>(t.nodes.size());
            if (size == 0) throw DataError("shift model has an empty tree");
            for (const auto& n : t.nodes) {
                if (n.feature >= 0 && (n.left <= 0 || n.left >= size || n.right <= 0 || n.right >= size)) {
                    throw DataError("shift model node child index out of range");
                }
            }
            g.trees.push_back(std::move(t));
        }
        if (g.trees.empty()) throw DataError("shift model has no trees");
        g.options.trees = g.trees.size();
        return g;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed shift model JSON: ") + e.what());
    }
}

nlohmann::json to_json(const MomentFeatures& f) {
    return {{"s", f.s}, {"width", f.width}, {"centered", f.centered}, {"mean", f.mean}, {"second", f.second}};
}

MomentFeatures moment_features_from_json(const nlohmann::json& j) {
    try {
        MomentFeatures f;
        f.s = j.at("s").get<std::size_t>();
        f.width = j.at("width").get<std::size_t>();
        f.centered = j.value("centered", false);
        f.mean = j.at("mean").get<std::vector<double>>();
        f.second = j.at("second").get<std::vector<double>>();
        if (f.mean.size() != f.s || f.second.size() != f.s * f.s) throw DataError("moment feature sizes do not match s");
        if (f.s + f.s * f.s > f.width) throw DataError("moment features exceed the padded width W = " + std::to_string(f.width));
        f.flattened.assign(f.width, 0.0);
        std::copy(f.mean.begin(), f.mean.end(), f.flattened.begin());
        std::copy(f.second.begin(), f.second.end(), f.flattened.begin() + static_cast<std::ptrdiff_t>(f.s));
        return f;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed moment features JSON: ") + e.what());
    }
}

}  // namespace confbound::shift
