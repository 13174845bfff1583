#include "confbound/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "confbound/error.hpp"
#include "confbound/parallel.hpp"
#include "confbound/rng.hpp"

namespace confbound::harness {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::size_t kind_index(ratio::Divergence k) { return static_cast<std::size_t>(k); }

std::string oracle_name(Oracle o) { return o == Oracle::estimator ? "estimator" : "empirical"; }

Oracle parse_oracle(const std::string& s) {
    if (s == "estimator") return Oracle::estimator;
    if (s == "empirical") return Oracle::empirical;
    throw DataError("unknown oracle '" + s + "' (expected estimator or empirical)");
}

nlohmann::json number(double v) {
    if (std::isfinite(v)) return v;
    if (std::isnan(v)) return "nan";
    return v > 0 ? "inf" : "-inf";
}

double number_from(const nlohmann::json& j) {
    if (j.is_number()) return j.get<double>();
    const auto s = j.get<std::string>();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    throw DataError("expected a number, got '" + s + "'");
}

std::string fmt(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// Manifest

void ExperimentManifest::validate() const {
    if (circuits.empty()) throw DataError("manifest has no circuits");
    for (const auto& g : circuits) {
        if (g.params.empty()) throw DataError("manifest circuit group '" + qsim::to_string(g.family) + "' has no sizes");
        if (g.seeds.empty()) throw DataError("manifest circuit group has no seeds");
        for (int p : g.params) {
            if (p < 1) throw DataError("manifest circuit parameter must be >= 1");
            if (g.family != qsim::Family::walker && p > qsim::kMaxQubits) {
                throw DataError("manifest circuit size " + std::to_string(p) + " exceeds " +
                                std::to_string(qsim::kMaxQubits) + " qubits");
            }
        }
    }
    if (machines.empty()) throw DataError("manifest has no machines");
    for (double k : machines) {
        if (!(k >= 0.0) || 0.02 * k > 0.5 || 0.01 * k > 1.0) throw DataError("machine noise multiplier out of range");
    }
    if (shots == 0) throw DataError("manifest shots must be >= 1");
    if (runs == 0) throw DataError("manifest runs must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw DataError("manifest alpha must lie in (0, 1)");
    if (kinds.empty()) throw DataError("manifest has no divergence kinds");
    if (setups.empty()) throw DataError("manifest has no setups");
    if (!(shift_train_fraction > 0.0 && shift_train_fraction < 1.0)) {
        throw DataError("manifest shift_train_fraction must lie in (0, 1)");
    }
}

ExperimentManifest manifest_from_json(const nlohmann::json& j) {
    try {
        if (!j.is_object()) throw DataError("manifest must be a JSON object");
        static const std::set<std::string> known{"name",      "circuits",     "machines",   "shots",
                                                 "runs",      "alpha",        "kinds",      "setups",
                                                 "seed",      "feature_map",  "feature_width", "forest",
                                                 "residual",  "oracle",       "shift_train_fraction"};
        for (const auto& [key, _] : j.items()) {
            if (!known.count(key)) throw DataError("unknown manifest field '" + key + "'");
        }
        ExperimentManifest m;
        m.name = j.value("name", m.name);
        for (const auto& jc : j.at("circuits")) {
            CircuitGroup g;
            g.family = qsim::parse_family(jc.at("family").get<std::string>());
            if (jc.contains("sizes")) g.params = jc.at("sizes").get<std::vector<int>>();
            if (jc.contains("depths")) {
                const auto d = jc.at("depths").get<std::vector<int>>();
                g.params.insert(g.params.end(), d.begin(), d.end());
            }
            if (jc.contains("seeds")) g.seeds = jc.at("seeds").get<std::vector<std::uint64_t>>();
            m.circuits.push_back(std::move(g));
        }
        if (j.contains("machines")) m.machines = j.at("machines").get<std::vector<double>>();
        m.shots = j.value("shots", m.shots);
        m.runs = j.value("runs", m.runs);
        m.alpha = j.value("alpha", m.alpha);
        if (j.contains("kinds")) {
            m.kinds.clear();
            for (const auto& k : j.at("kinds")) m.kinds.push_back(ratio::parse_divergence(k.get<std::string>()));
        }
        if (j.contains("setups")) {
            m.setups.clear();
            for (const auto& s : j.at("setups")) m.setups.push_back(conformal::parse_setup(s.get<std::string>()));
        }
        m.master_seed = j.value("seed", m.master_seed);
        if (j.contains("feature_map")) m.feature_map = ratio::parse_feature_kind(j.at("feature_map").get<std::string>());
        m.feature_width = j.value("feature_width", m.feature_width);
        if (j.contains("forest")) {
            const auto& f = j.at("forest");
            m.forest.trees = f.value("trees", m.forest.trees);
            m.forest.min_leaf = f.value("min_leaf", m.forest.min_leaf);
            m.forest.feature_frac = f.value("feature_frac", m.forest.feature_frac);
            m.forest.bootstrap = f.value("bootstrap", m.forest.bootstrap);
        }
        if (j.contains("residual")) m.residual = conformal::parse_residual(j.at("residual").get<std::string>());
        if (j.contains("oracle")) m.oracle = parse_oracle(j.at("oracle").get<std::string>());
        m.shift_train_fraction = j.value("shift_train_fraction", m.shift_train_fraction);
        m.validate();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed manifest: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw DataError(std::string("malformed manifest: ") + e.what());
    }
}

nlohmann::json to_json(const ExperimentManifest& m) {
    nlohmann::json circuits = nlohmann::json::array();
    for (const auto& g : m.circuits) {
        circuits.push_back({{"family", qsim::to_string(g.family)},
                            {g.family == qsim::Family::walker ? "depths" : "sizes", g.params},
                            {"seeds", g.seeds}});
    }
    nlohmann::json kinds = nlohmann::json::array(), setups = nlohmann::json::array();
    for (auto k : m.kinds) kinds.push_back(ratio::to_string(k));
    for (auto s : m.setups) setups.push_back(conformal::to_string(s));
    return {{"name", m.name},
            {"circuits", circuits},
            {"machines", m.machines},
            {"shots", m.shots},
            {"runs", m.runs},
            {"alpha", m.alpha},
            {"kinds", kinds},
            {"setups", setups},
            {"seed", m.master_seed},
            {"feature_map", ratio::to_string(m.feature_map)},
            {"feature_width", m.feature_width},
            {"forest",
             {{"trees", m.forest.trees},
              {"min_leaf", m.forest.min_leaf},
              {"feature_frac", m.forest.feature_frac},
              {"bootstrap", m.forest.bootstrap}}},
            {"residual", conformal::to_string(m.residual)},
            {"oracle", oracle_name(m.oracle)},
            {"shift_train_fraction", m.shift_train_fraction}};
}

ExperimentManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read manifest '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("manifest '" + path + "' is not valid JSON: " + e.what());
    }
    return manifest_from_json(j);
}

std::vector<CircuitSpec> expand_circuits(const ExperimentManifest& m) {
    std::vector<CircuitSpec> out;
    for (const auto& g : m.circuits) {
        const bool seeded = g.family == qsim::Family::random || g.family == qsim::Family::deep_random;
        for (auto seed : g.seeds) {
            for (int p : g.params) {
                CircuitSpec c;
                c.family = g.family;
                c.param = p;
                c.seed = seed;
                c.ordinal = p;
                c.id = qsim::to_string(g.family) + (g.family == qsim::Family::walker ? "_d" : "_n") + std::to_string(p);
                if (seeded || g.seeds.size() > 1) c.id += "_s" + std::to_string(seed);
                out.push_back(std::move(c));
            }
        }
    }
    return out;
}

std::string machine_id(std::size_t machine) { return "m" + std::to_string(machine); }

std::string RunRecord::run_id() const { return circuit_id + "_r" + std::to_string(run); }

ShotPair generate_shots(const ExperimentManifest& m, const CircuitSpec& c, std::size_t circuit_index,
                        std::size_t machine, std::size_t run) {
    const qsim::Circuit circuit = qsim::build_circuit(c.family, c.param, c.seed);
    const auto nm = qsim::NoiseModel::scaled(m.machines.at(machine), machine_id(machine));
    // Ideal and noisy runs share one stream. Any noise event desynchronises
    // them within the first gate, and a noiseless machine reproduces the ideal
    // shots exactly, so its divergence scores are exactly zero.
    const std::uint64_t seed = derive_seed(m.master_seed, {0x5407, circuit_index, machine, run});
    ShotPair p;
    p.ideal = qsim::run_ideal(circuit, m.shots, seed);
    p.noisy = qsim::run_noisy(circuit, nm, m.shots, seed);
    return p;
}

RunRecord score_run(const ExperimentManifest& m, const CircuitSpec& c, std::size_t circuit_index, std::size_t machine,
                    std::size_t run, const ShotPair& shots) {
    RunRecord r;
    r.circuit_index = circuit_index;
    r.circuit_id = c.id;
    r.machine = machine;
    r.run = run;
    r.ordinal = c.ordinal;
    r.width = shots.noisy.width();

    const ratio::RatioFeatureMap fm{m.feature_map, shots.noisy.width()};
    const auto model = ratio::fit_ratio(shots.ideal, shots.noisy, fm,
                                        ratio::default_regularization(shots.ideal, shots.noisy));
    r.fit_converged = model.converged;
    for (auto k : {ratio::Divergence::bc, ratio::Divergence::kl, ratio::Divergence::tv}) {
        r.estimate[kind_index(k)] = ratio::estimate_divergence(model, shots.noisy, k);
    }
    const auto d = sampleset::exact_divergences(sampleset::empirical_distribution(shots.ideal),
                                                sampleset::empirical_distribution(shots.noisy));
    r.empirical = {d.d_bc, d.d_kl, d.d_tv};
    r.features = shift::moment_features(shots.noisy, m.feature_width);
    return r;
}

std::vector<RunRecord> generate_records(const ExperimentManifest& m, std::size_t jobs) {
    m.validate();
    const auto circuits = expand_circuits(m);
    const std::size_t per_circuit = m.machines.size() * m.runs;
    std::vector<RunRecord> out(circuits.size() * per_circuit);
    parallel_for(out.size(), jobs, [&](std::size_t i) {
        const std::size_t ci = i / per_circuit;
        const std::size_t machine = (i % per_circuit) / m.runs;
        const std::size_t run = i % m.runs;
        const auto shots = generate_shots(m, circuits[ci], ci, machine, run);
        out[i] = score_run(m, circuits[ci], ci, machine, run, shots);
    });
    return out;
}

// ---------------------------------------------------------------------------
// Metrics

Metric coverage_and_size(std::span<const double> bounds, std::span<const double> oracle,
                         std::span<const double> sizes) {
    if (bounds.empty()) throw std::invalid_argument("coverage_and_size: no test points");
    if (bounds.size() != oracle.size() || bounds.size() != sizes.size()) {
        throw std::invalid_argument("coverage_and_size: length mismatch");
    }
    Metric out;
    std::size_t covered = 0;
    double size = 0.0;
    for (std::size_t i = 0; i < bounds.size(); ++i) {
        if (oracle[i] <= bounds[i]) ++covered;
        if (std::isinf(sizes[i])) out.size_infinite = true;
        size += sizes[i];
    }
    out.coverage = static_cast<double>(covered) / static_cast<double>(bounds.size());
    out.size = out.size_infinite ? kInf : size / static_cast<double>(bounds.size());
    return out;
}

Metric coverage_and_size(std::span<const double> bounds, std::span<const double> oracle) {
    return coverage_and_size(bounds, oracle, bounds);
}

Aggregate aggregate(std::span<const Metric> folds) {
    if (folds.empty()) throw std::invalid_argument("aggregate: no folds");
    Aggregate a;
    const double n = static_cast<double>(folds.size());
    for (const auto& f : folds) {
        a.coverage_mean += f.coverage / n;
        if (f.size_infinite) a.size_infinite = true;
        a.size_mean += f.size / n;
    }
    if (folds.size() > 1) {
        double vc = 0.0, vs = 0.0;
        for (const auto& f : folds) {
            vc += (f.coverage - a.coverage_mean) * (f.coverage - a.coverage_mean);
            if (!a.size_infinite) vs += (f.size - a.size_mean) * (f.size - a.size_mean);
        }
        a.coverage_sd = std::sqrt(vc / (n - 1.0));
        a.size_sd = a.size_infinite ? kInf : std::sqrt(vs / (n - 1.0));
    }
    if (a.size_infinite) a.size_mean = kInf;
    return a;
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

struct FoldSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> calibration;
};

conformal::CalibrationRecord to_calibration(const RunRecord& r, ratio::Divergence kind) {
    return {r.run_id(), machine_id(r.machine), r.ordinal, r.estimate[kind_index(kind)], r.features};
}

std::string describe(const char* stratum, std::size_t fold, double ordinal) {
    return std::string(stratum) + " stratum is empty in fold " + std::to_string(fold) + " (test ordinal " +
           fmt(ordinal) + ")";
}

FoldResult evaluate_one(const ExperimentManifest& m, const std::vector<RunRecord>& records,
                        const std::vector<std::size_t>& fold_idx, std::size_t fold, std::size_t left_out,
                        ratio::Divergence kind, conformal::Setup setup) {
    FoldResult res;
    res.fold = fold;
    res.machine_left_out = left_out;
    res.kind = kind;
    res.setup = setup;

    double test_ordinal = -kInf;
    for (auto i : fold_idx) test_ordinal = std::max(test_ordinal, records[i].ordinal);
    res.test_ordinal = test_ordinal;

    std::vector<std::size_t> pool;
    for (auto i : fold_idx) (records[i].ordinal == test_ordinal ? res.test : pool).push_back(i);
    if (pool.empty()) throw DataError(describe("calibration", fold, test_ordinal));

    double second = -kInf;
    for (auto i : pool) second = std::max(second, records[i].ordinal);

    switch (setup) {
        case conformal::Setup::all:
            res.calibration = pool;
            break;
        case conformal::Setup::mondrian:
            for (auto i : pool) {
                if (records[i].ordinal == second) res.calibration.push_back(i);
            }
            res.n_discarded = pool.size() - res.calibration.size();
            break;
        case conformal::Setup::shift: {
            std::vector<std::size_t> shuffled = pool;
            Rng rng(derive_seed(m.master_seed, {0x5b11, fold}));
            std::shuffle(shuffled.begin(), shuffled.end(), rng);
            const auto n_train = static_cast<std::size_t>(
                std::floor(m.shift_train_fraction * static_cast<double>(shuffled.size())));
            res.train.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(n_train));
            res.calibration.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(n_train), shuffled.end());
            std::sort(res.train.begin(), res.train.end());
            std::sort(res.calibration.begin(), res.calibration.end());
            break;
        }
        case conformal::Setup::shift_mondrian:
            for (auto i : pool) (records[i].ordinal == second ? res.calibration : res.train).push_back(i);
            break;
    }
    if (res.calibration.empty()) throw DataError(describe("calibration", fold, test_ordinal));

    std::vector<conformal::CalibrationRecord> cal;
    for (auto i : res.calibration) cal.push_back(to_calibration(records[i], kind));
    const std::string kname = ratio::to_string(kind);

    auto oracle_of = [&](const RunRecord& r) {
        return m.oracle == Oracle::estimator ? r.estimate[kind_index(kind)] : r.empirical[kind_index(kind)];
    };

    std::vector<double> sizes;
    const bool shifted = setup == conformal::Setup::shift || setup == conformal::Setup::shift_mondrian;
    if (!shifted) {
        auto b = conformal::calibrate_plain(cal, m.alpha, kname);
        res.q_alpha = b.q_alpha;
        res.infeasible = b.infeasible;
        for (auto i : res.test) {
            res.bounds.push_back(b.bound);
            sizes.push_back(b.size());
            res.oracle.push_back(oracle_of(records[i]));
        }
    } else {
        if (res.train.size() < 2) throw DataError(describe("shift training", fold, test_ordinal));
        std::vector<shift::MomentFeatures> feats;
        std::vector<double> targets;
        for (auto i : res.train) {
            feats.push_back(records[i].features);
            targets.push_back(records[i].estimate[kind_index(kind)]);
        }
        shift::ForestOptions opt = m.forest;
        opt.seed = derive_seed(m.master_seed, {0xf07e, fold, kind_index(kind), static_cast<std::uint64_t>(setup)});
        const auto g = shift::fit_shift(feats, targets, opt);
        std::vector<double> pred;
        for (const auto& c : cal) pred.push_back(shift::predict_shift(g, c.features));
        for (auto i : res.test) {
            const double g_test = shift::predict_shift(g, records[i].features);
            auto b = conformal::calibrate_shift(cal, pred, g_test, m.alpha, m.residual, kname, setup);
            res.q_alpha = b.q_alpha;
            res.infeasible = b.infeasible;
            res.bounds.push_back(b.bound);
            sizes.push_back(b.size());
            res.oracle.push_back(oracle_of(records[i]));
        }
    }
    res.metric = coverage_and_size(res.bounds, res.oracle, sizes);
    return res;
}

}  // namespace

const SummaryRow& ExperimentResult::row(ratio::Divergence kind, conformal::Setup setup) const {
    for (const auto& r : summary) {
        if (r.kind == kind && r.setup == setup) return r;
    }
    throw std::out_of_range("no summary row for " + ratio::to_string(kind) + "/" + conformal::to_string(setup));
}

ExperimentResult evaluate(const ExperimentManifest& m, const std::vector<RunRecord>& records, std::size_t jobs) {
    if (records.empty()) throw DataError("no records to evaluate");
    // One fold per machine left out; a single machine gives one fold on all data.
    std::vector<std::size_t> machines;
    for (const auto& r : records) machines.push_back(r.machine);
    std::sort(machines.begin(), machines.end());
    machines.erase(std::unique(machines.begin(), machines.end()), machines.end());

    std::vector<std::vector<std::size_t>> folds;
    std::vector<std::size_t> left_out;
    if (machines.size() == 1) {
        folds.emplace_back(records.size());
        std::iota(folds.back().begin(), folds.back().end(), 0);
        left_out.push_back(machines.front());
    } else {
        for (auto mach : machines) {
            std::vector<std::size_t> idx;
            for (std::size_t i = 0; i < records.size(); ++i) {
                if (records[i].machine != mach) idx.push_back(i);
            }
            folds.push_back(std::move(idx));
            left_out.push_back(mach);
        }
    }

    const std::size_t nk = m.kinds.size(), ns = m.setups.size();
    ExperimentResult result;
    result.folds.resize(folds.size() * nk * ns);
    parallel_for(result.folds.size(), jobs, [&](std::size_t t) {
        const std::size_t f = t / (nk * ns);
        const std::size_t k = (t / ns) % nk;
        const std::size_t s = t % ns;
        result.folds[t] = evaluate_one(m, records, folds[f], f, left_out[f], m.kinds[k], m.setups[s]);
    });

    for (std::size_t k = 0; k < nk; ++k) {
        for (std::size_t s = 0; s < ns; ++s) {
            std::vector<Metric> metrics;
            for (std::size_t f = 0; f < folds.size(); ++f) metrics.push_back(result.folds[(f * nk + k) * ns + s].metric);
            result.summary.push_back({m.kinds[k], m.setups[s], aggregate(metrics)});
        }
    }
    return result;
}

ExperimentResult run_pipeline(const ExperimentManifest& m, std::size_t jobs) {
    return evaluate(m, generate_records(m, jobs), jobs);
}

// ---------------------------------------------------------------------------
// Output

void write_results_csv(std::ostream& out, const ExperimentResult& r) {
    out << "fold,machine_left_out,kind,setup,coverage,size,n_train,n_cal,n_discarded,n_test,test_ordinal,q_alpha,"
           "infeasible\n";
    for (const auto& f : r.folds) {
        out << f.fold << ',' << machine_id(f.machine_left_out) << ',' << ratio::to_string(f.kind) << ','
            << conformal::to_string(f.setup) << ',' << fmt(f.metric.coverage) << ',' << fmt(f.metric.size) << ','
            << f.train.size() << ',' << f.calibration.size() << ',' << f.n_discarded << ',' << f.test.size() << ','
            << fmt(f.test_ordinal) << ',' << fmt(f.q_alpha) << ',' << (f.infeasible ? 1 : 0) << '\n';
    }
}

void write_summary_csv(std::ostream& out, const ExperimentResult& r) {
    out << "kind,setup,coverage,coverage_sd,size,size_sd\n";
    for (const auto& row : r.summary) {
        out << ratio::to_string(row.kind) << ',' << conformal::to_string(row.setup) << ','
            << fmt(row.value.coverage_mean) << ',' << fmt(row.value.coverage_sd) << ',' << fmt(row.value.size_mean)
            << ',' << fmt(row.value.size_sd) << '\n';
    }
}

nlohmann::json summary_json(const ExperimentManifest& m, const ExperimentResult& r) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.summary) {
        rows.push_back({{"kind", ratio::to_string(row.kind)},
                        {"setup", conformal::to_string(row.setup)},
                        {"coverage", number(row.value.coverage_mean)},
                        {"coverage_sd", number(row.value.coverage_sd)},
                        {"size", number(row.value.size_mean)},
                        {"size_sd", number(row.value.size_sd)},
                        {"size_infinite", row.value.size_infinite}});
    }
    std::size_t n_folds = 0;
    for (const auto& f : r.folds) n_folds = std::max(n_folds, f.fold + 1);
    return {{"manifest", to_json(m)}, {"folds", n_folds}, {"summary", rows}};
}

void write_plot_csv(std::ostream& out, const ExperimentManifest& m, const std::vector<RunRecord>& records) {
    out << "run_id,machine_id,ordinal,kind,oracle,estimate\n";
    for (const auto& r : records) {
        for (auto k : m.kinds) {
            out << r.run_id() << ',' << machine_id(r.machine) << ',' << fmt(r.ordinal) << ',' << ratio::to_string(k)
                << ',' << fmt(r.empirical[kind_index(k)]) << ',' << fmt(r.estimate[kind_index(k)]) << '\n';
        }
    }
}

nlohmann::json to_json(const RunRecord& r) {
    return {{"circuit_index", r.circuit_index},
            {"circuit_id", r.circuit_id},
            {"machine", r.machine},
            {"machine_id", machine_id(r.machine)},
            {"run", r.run},
            {"ordinal", r.ordinal},
            {"width", r.width},
            {"estimate", {{"bc", number(r.estimate[0])}, {"kl", number(r.estimate[1])}, {"tv", number(r.estimate[2])}}},
            {"empirical",
             {{"bc", number(r.empirical[0])}, {"kl", number(r.empirical[1])}, {"tv", number(r.empirical[2])}}},
            {"features", shift::to_json(r.features)},
            {"fit_converged", r.fit_converged}};
}

RunRecord run_record_from_json(const nlohmann::json& j) {
    try {
        RunRecord r;
        r.circuit_index = j.value("circuit_index", std::size_t{0});
        r.circuit_id = j.at("circuit_id").get<std::string>();
        r.machine = j.at("machine").get<std::size_t>();
        r.run = j.value("run", std::size_t{0});
        r.ordinal = j.at("ordinal").get<double>();
        r.width = j.value("width", std::size_t{0});
        const auto& e = j.at("estimate");
        r.estimate = {number_from(e.at("bc")), number_from(e.at("kl")), number_from(e.at("tv"))};
        if (j.contains("empirical")) {
            const auto& x = j.at("empirical");
            r.empirical = {number_from(x.at("bc")), number_from(x.at("kl")), number_from(x.at("tv"))};
        }
        r.features = shift::moment_features_from_json(j.at("features"));
        r.fit_converged = j.value("fit_converged", true);
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed calibration record: ") + e.what());
    }
}

}  // namespace confbound::harness
