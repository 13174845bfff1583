#include "confbound/ratio.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>
#include <unordered_map>

#include <Eigen/Dense>

#include "confbound/error.hpp"

namespace confbound::ratio {

Divergence parse_divergence(const std::string& name) {
    if (name == "bc" || name == "d_BC") return Divergence::bc;
    if (name == "kl" || name == "d_KL") return Divergence::kl;
    if (name == "tv" || name == "d_TV") return Divergence::tv;
    throw DataError("unknown divergence kind '" + name + "' (expected bc, kl or tv)");
}

std::string to_string(Divergence kind) {
    switch (kind) {
        case Divergence::bc: return "bc";
        case Divergence::kl: return "kl";
        case Divergence::tv: return "tv";
    }
    return "?";
}

FeatureKind parse_feature_kind(const std::string& name) {
    if (name == "linear") return FeatureKind::linear;
    if (name == "quadratic") return FeatureKind::quadratic;
    throw DataError("unknown feature map '" + name + "'");
}

std::string to_string(FeatureKind kind) { return kind == FeatureKind::linear ? "linear" : "quadratic"; }

std::size_t RatioFeatureMap::dim() const {
    const std::size_t s = width;
    return kind == FeatureKind::linear ? 1 + s : 1 + s + s * (s - 1) / 2;
}

void RatioFeatureMap::map(std::span<const std::uint8_t> row, std::span<double> out) const {
    if (row.size() != width) throw std::invalid_argument("feature map width mismatch");
    out[0] = 1.0;
    for (std::size_t i = 0; i < width; ++i) out[1 + i] = row[i];
    if (kind == FeatureKind::quadratic) {
        std::size_t k = 1 + width;
        for (std::size_t i = 0; i < width; ++i) {
            for (std::size_t j = i + 1; j < width; ++j) out[k++] = static_cast<double>(row[i] & row[j]);
        }
    }
}

std::vector<double> RatioFeatureMap::map(std::span<const std::uint8_t> row) const {
    std::vector<double> out(dim());
    map(row, out);
    return out;
}

double RatioModel::log_ratio(std::span<const std::uint8_t> row) const {
    const auto phi = features.map(row);
    double z = log_prior_offset;
    for (std::size_t k = 0; k < phi.size(); ++k) z += theta[k] * phi[k];
    return z;
}

double RatioModel::ratio(std::span<const std::uint8_t> row) const { return std::exp(log_ratio(row)); }

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Duplicate rows collapse into one design row with per-class counts; the
// weighted objective equals the per-row one exactly.
struct Dataset {
    MatrixXd x;
    VectorXd pos;    // ideal count per unique row
    VectorXd total;  // ideal + noisy count per unique row
};

// The loss is a sum over rows, so roundoff in the gradient grows with M.
double scaled_tolerance(const Dataset& d, const FitOptions& opt) {
    return opt.gradient_tolerance * std::max(1.0, d.total.sum());
}

Dataset build_dataset(const sampleset::ShotMatrix& ideal, const sampleset::ShotMatrix& noisy,
                      const RatioFeatureMap& fm) {
    std::unordered_map<std::string, std::pair<double, double>> counts;
    std::vector<std::string> order;
    auto add = [&](const sampleset::ShotMatrix& shots, bool positive) {
        for (std::size_t m = 0; m < shots.rows(); ++m) {
            auto r = shots.row(m);
            std::string key(r.begin(), r.end());
            auto [it, inserted] = counts.try_emplace(key, 0.0, 0.0);
            if (inserted) order.push_back(std::move(key));
            (positive ? it->second.first : it->second.second) += 1.0;
        }
    };
    add(ideal, true);
    add(noisy, false);

    Dataset d;
    const auto n = static_cast<Eigen::Index>(order.size());
    d.x.resize(n, static_cast<Eigen::Index>(fm.dim()));
    d.pos.resize(n);
    d.total.resize(n);
    std::vector<double> phi(fm.dim());
    for (Eigen::Index u = 0; u < n; ++u) {
        const std::string& key = order[static_cast<std::size_t>(u)];
        fm.map({reinterpret_cast<const std::uint8_t*>(key.data()), key.size()}, phi);
        for (std::size_t k = 0; k < phi.size(); ++k) d.x(u, static_cast<Eigen::Index>(k)) = phi[k];
        const auto& c = counts[key];
        d.pos(u) = c.first;
        d.total(u) = c.first + c.second;
    }
    return d;
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }
double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double loss_at(const Dataset& d, double reg, const VectorXd& theta, VectorXd* grad, VectorXd* curvature) {
    const VectorXd z = d.x * theta;
    double loss = 0.0;
    VectorXd resid(z.size());
    if (curvature) curvature->resize(z.size());
    for (Eigen::Index u = 0; u < z.size(); ++u) {
        const double neg = d.total(u) - d.pos(u);
        loss += d.pos(u) * softplus(-z(u)) + neg * softplus(z(u));
        const double s = sigmoid(z(u));
        resid(u) = d.total(u) * s - d.pos(u);
        if (curvature) (*curvature)(u) = d.total(u) * s * (1.0 - s);
    }
    const double penalty = theta.tail(theta.size() - 1).squaredNorm();
    loss += 0.5 * reg * penalty;
    if (grad) {
        *grad = d.x.transpose() * resid;
        grad->tail(theta.size() - 1) += reg * theta.tail(theta.size() - 1);
    }
    return loss;
}

// Armijo backtracking along `dir`; returns false when no decrease is found.
bool line_search(const Dataset& d, double reg, VectorXd& theta, double& loss, const VectorXd& grad,
                 const VectorXd& dir) {
    const double slope = grad.dot(dir);
    if (!(slope < 0.0)) return false;
    double t = 1.0;
    for (int k = 0; k < 60; ++k) {
        const VectorXd cand = theta + t * dir;
        const double l = loss_at(d, reg, cand, nullptr, nullptr);
        if (l <= loss + 1e-4 * t * slope) {
            theta = cand;
            loss = l;
            return true;
        }
        t *= 0.5;
    }
    return false;
}

void solve_newton(const Dataset& d, double reg, const FitOptions& opt, VectorXd& theta, RatioModel& model) {
    const double tol = scaled_tolerance(d, opt);
    const Eigen::Index p = theta.size();
    VectorXd grad, curv;
    double loss = loss_at(d, reg, theta, &grad, &curv);
    model.train_loss_trace.push_back(loss);
    for (std::size_t it = 0; it < opt.max_iterations; ++it) {
        if (grad.norm() <= tol) {
            model.converged = true;
            return;
        }
        MatrixXd h = d.x.transpose() * curv.asDiagonal() * d.x;
        for (Eigen::Index k = 1; k < p; ++k) h(k, k) += reg;
        h.diagonal().array() += 1e-10;
        const VectorXd dir = -h.ldlt().solve(grad);
        if (!line_search(d, reg, theta, loss, grad, dir)) break;
        loss = loss_at(d, reg, theta, &grad, &curv);
        model.train_loss_trace.push_back(loss);
    }
    model.converged = grad.norm() <= tol;
}

void solve_lbfgs(const Dataset& d, double reg, const FitOptions& opt, VectorXd& theta, RatioModel& model) {
    const double tol = scaled_tolerance(d, opt);
    constexpr std::size_t kHistory = 10;
    std::deque<std::pair<VectorXd, VectorXd>> hist;  // (s, y) pairs
    VectorXd grad;
    double loss = loss_at(d, reg, theta, &grad, nullptr);
    model.train_loss_trace.push_back(loss);
    for (std::size_t it = 0; it < opt.max_iterations; ++it) {
        if (grad.norm() <= tol) {
            model.converged = true;
            return;
        }
        VectorXd q = grad;
        std::vector<double> alphas(hist.size());
        for (std::size_t k = hist.size(); k-- > 0;) {
            const auto& [s, y] = hist[k];
            alphas[k] = s.dot(q) / y.dot(s);
            q -= alphas[k] * y;
        }
        if (!hist.empty()) {
            const auto& [s, y] = hist.back();
            q *= s.dot(y) / y.squaredNorm();
        } else {
            q /= std::max(1.0, grad.norm());
        }
        for (std::size_t k = 0; k < hist.size(); ++k) {
            const auto& [s, y] = hist[k];
            const double beta = y.dot(q) / y.dot(s);
            q += s * (alphas[k] - beta);
        }
        VectorXd dir = -q;
        const VectorXd prev_theta = theta, prev_grad = grad;
        if (!line_search(d, reg, theta, loss, grad, dir)) {
            if (hist.empty()) break;
            hist.clear();  // restart from steepest descent
            continue;
        }
        loss_at(d, reg, theta, &grad, nullptr);
        model.train_loss_trace.push_back(loss);
        VectorXd s = theta - prev_theta, y = grad - prev_grad;
        if (s.dot(y) > 1e-12) {
            hist.emplace_back(std::move(s), std::move(y));
            if (hist.size() > kHistory) hist.pop_front();
        }
    }
    model.converged = grad.norm() <= tol;
}

void check_inputs(const sampleset::ShotMatrix& ideal, const sampleset::ShotMatrix& noisy,
                  const RatioFeatureMap& fm) {
    if (ideal.empty() || noisy.empty()) throw DataError("fit_ratio: one class is empty");
    if (ideal.width() != noisy.width()) {
        throw DataError("fit_ratio: width mismatch (" + std::to_string(ideal.width()) + " vs " +
                        std::to_string(noisy.width()) + ")");
    }
    if (fm.width != ideal.width()) throw std::invalid_argument("fit_ratio: feature map width mismatch");
}

}  // namespace

double default_regularization(const sampleset::ShotMatrix& ideal, const sampleset::ShotMatrix& noisy) {
    return 1e-3 * static_cast<double>(ideal.rows() + noisy.rows());
}

double training_loss(const sampleset::ShotMatrix& ideal, const sampleset::ShotMatrix& noisy,
                     const RatioFeatureMap& fm, double reg, std::span<const double> theta,
                     std::vector<double>* gradient) {
    check_inputs(ideal, noisy, fm);
    if (theta.size() != fm.dim()) throw std::invalid_argument("training_loss: theta size mismatch");
    const Dataset d = build_dataset(ideal, noisy, fm);
    const VectorXd th = Eigen::Map<const VectorXd>(theta.data(), static_cast<Eigen::Index>(theta.size()));
    VectorXd g;
    const double l = loss_at(d, reg, th, gradient ? &g : nullptr, nullptr);
    if (gradient) gradient->assign(g.data(), g.data() + g.size());
    return l;
}

RatioModel fit_ratio(const sampleset::ShotMatrix& ideal, const sampleset::ShotMatrix& noisy,
                     const RatioFeatureMap& fm, double reg, const FitOptions& options) {
    check_inputs(ideal, noisy, fm);
    if (!(reg >= 0.0)) throw std::invalid_argument("fit_ratio: regularisation must be >= 0");
    const Dataset d = build_dataset(ideal, noisy, fm);

    RatioModel model;
    model.features = fm;
    model.log_prior_offset =
        std::log(static_cast<double>(noisy.rows()) / static_cast<double>(ideal.rows()));

    VectorXd theta = VectorXd::Zero(static_cast<Eigen::Index>(fm.dim()));
    if (fm.dim() <= options.newton_max_dim) {
        solve_newton(d, reg, options, theta, model);
    } else {
        solve_lbfgs(d, reg, options, theta, model);
    }
    model.theta.assign(theta.data(), theta.data() + theta.size());
    return model;
}

RatioModel fit_ratio(const sampleset::ShotMatrix& ideal, const sampleset::ShotMatrix& noisy) {
    return fit_ratio(ideal, noisy, RatioFeatureMap{FeatureKind::quadratic, ideal.width()},
                     default_regularization(ideal, noisy));
}

namespace {

std::vector<double> log_ratios(const RatioModel& model, const sampleset::ShotMatrix& noisy) {
    if (noisy.width() != model.features.width) {
        throw DataError("ratio model expects width " + std::to_string(model.features.width) + ", got " +
                        std::to_string(noisy.width()));
    }
    std::unordered_map<std::string, double> cache;
    std::vector<double> out(noisy.rows());
    for (std::size_t m = 0; m < noisy.rows(); ++m) {
        auto r = noisy.row(m);
        std::string key(r.begin(), r.end());
        auto it = cache.find(key);
        if (it == cache.end()) it = cache.emplace(std::move(key), model.log_ratio(r)).first;
        out[m] = it->second;
    }
    return out;
}

}  // namespace

BcEstimate estimate_bc(const RatioModel& model, const sampleset::ShotMatrix& noisy) {
    const auto lr = log_ratios(model, noisy);
    double acc = 0.0;
    for (double l : lr) acc += std::exp(0.5 * l);
    BcEstimate e;
    e.raw = acc / static_cast<double>(lr.size());
    e.value = std::clamp(e.raw, 0.0, 1.0);
    return e;
}

double estimate_divergence(const RatioModel& model, const sampleset::ShotMatrix& noisy, Divergence kind) {
    switch (kind) {
        case Divergence::bc:
            return -std::log(std::max(estimate_bc(model, noisy).value, 1e-12));
        case Divergence::kl: {
            const auto lr = log_ratios(model, noisy);
            double acc = 0.0;
            for (double l : lr) acc += l;
            return std::max(0.0, -acc / static_cast<double>(lr.size()));
        }
        case Divergence::tv: {
            const auto lr = log_ratios(model, noisy);
            double acc = 0.0;
            for (double l : lr) acc += std::abs(std::exp(l) - 1.0);
            return 0.5 * acc / static_cast<double>(lr.size());
        }
    }
    return 0.0;
}

nlohmann::json to_json(const RatioModel& model) {
    return {{"kind", to_string(model.features.kind)},
            {"width", model.features.width},
            {"log_prior_offset", model.log_prior_offset},
            {"theta", model.theta},
            {"converged", model.converged},
            {"iterations", model.train_loss_trace.empty() ? 0 : model.train_loss_trace.size() - 1}};
}

RatioModel ratio_model_from_json(const nlohmann::json& j) {
    try {
        RatioModel m;
        m.features.kind = parse_feature_kind(j.at("kind").get<std::string>());
        m.features.width = j.at("width").get<std::size_t>();
        m.log_prior_offset = j.value("log_prior_offset", 0.0);
        m.theta = j.at("theta").get<std::vector<double>>();
        m.converged = j.value("converged", false);
        if (m.theta.size() != m.features.dim()) throw DataError("ratio model theta has wrong length");
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed ratio model JSON: ") + e.what());
    }
}

}  // namespace confbound::ratio
