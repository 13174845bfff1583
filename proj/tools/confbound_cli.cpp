// confbound: command-line front end.
//
// Exit codes: 0 success, 1 usage, 2 data validation, 3 internal error.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "confbound/conformal.hpp"
#include "confbound/error.hpp"
#include "confbound/harness.hpp"
#include "confbound/parallel.hpp"
#include "confbound/ratio.hpp"
#include "confbound/sampleset.hpp"
#include "confbound/shift_model.hpp"

namespace fs = std::filesystem;
using namespace confbound;
using nlohmann::json;

namespace {

constexpr int kUsage = 1;
constexpr int kData = 2;
constexpr int kInternal = 3;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw DataError("cannot create output directory '" + dir + "'");
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream out(p);
    if (!out) throw DataError("cannot write '" + p.string() + "'");
    return out;
}

json read_json(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw DataError("cannot read '" + p.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw DataError("'" + p.string() + "' is not valid JSON: " + e.what());
    }
}

json number(double v) {
    if (std::isfinite(v)) return v;
    return v > 0 ? "inf" : "-inf";
}

harness::ExperimentManifest manifest_with_overrides(const std::string& path, const std::optional<std::uint64_t>& seed) {
    auto m = harness::load_manifest(path);
    if (seed) m.master_seed = *seed;
    return m;
}

std::vector<harness::RunRecord> read_records(const fs::path& p) {
    const json j = read_json(p);
    if (!j.is_array()) throw DataError("'" + p.string() + "' must hold a JSON array of records");
    std::vector<harness::RunRecord> out;
    for (const auto& jr : j) out.push_back(harness::run_record_from_json(jr));
    return out;
}

std::size_t kind_index(ratio::Divergence k) { return static_cast<std::size_t>(k); }

// --- subcommands -------------------------------------------------------------

struct Common {
    std::optional<std::uint64_t> seed;
    std::size_t jobs = 0;
};

int cmd_generate(const std::string& manifest_path, const std::string& out_dir, const Common& common) {
    const auto m = manifest_with_overrides(manifest_path, common.seed);
    ensure_dir(out_dir);
    const auto circuits = harness::expand_circuits(m);
    const std::size_t per_circuit = m.machines.size() * m.runs;
    parallel_for(circuits.size() * per_circuit, common.jobs, [&](std::size_t i) {
        const std::size_t ci = i / per_circuit, mach = (i % per_circuit) / m.runs, run = i % m.runs;
        const auto shots = harness::generate_shots(m, circuits[ci], ci, mach, run);
        const std::string stem = circuits[ci].id + "_r" + std::to_string(run) + "_" + harness::machine_id(mach);
        auto ideal = open_out(fs::path(out_dir) / (stem + "_ideal.csv"));
        sampleset::write_shots_csv(ideal, shots.ideal);
        auto noisy = open_out(fs::path(out_dir) / (stem + "_noisy.csv"));
        sampleset::write_shots_csv(noisy, shots.noisy);
    });
    open_out(fs::path(out_dir) / "manifest.json") << harness::to_json(m).dump(2) << '\n';
    std::cout << json{{"circuits", circuits.size()},
                      {"machines", m.machines.size()},
                      {"runs", m.runs},
                      {"files", 2 * circuits.size() * m.machines.size() * m.runs},
                      {"out", out_dir}}
                     .dump()
              << '\n';
    return 0;
}

int cmd_estimate(const std::string& ideal_path, const std::string& noisy_path, const std::string& kind_name,
                 const std::string& feature_name) {
    const auto kind = ratio::parse_divergence(kind_name);
    const auto fkind = ratio::parse_feature_kind(feature_name);
    const auto ideal = sampleset::read_shots_csv(ideal_path);
    const auto noisy = sampleset::read_shots_csv(noisy_path);
    if (ideal.width() != noisy.width()) {
        throw DataError("width mismatch: ideal has " + std::to_string(ideal.width()) + " columns, noisy has " +
                        std::to_string(noisy.width()));
    }
    const ratio::RatioFeatureMap fm{fkind, ideal.width()};
    const auto model = ratio::fit_ratio(ideal, noisy, fm, ratio::default_regularization(ideal, noisy));
    json out{{"kind", ratio::to_string(kind)},
             {"estimate", number(ratio::estimate_divergence(model, noisy, kind))},
             {"M", noisy.rows()},
             {"M_ideal", ideal.rows()},
             {"feature_map", ratio::to_string(fkind)},
             {"converged", model.converged}};
    if (kind == ratio::Divergence::bc) out["bc_raw"] = ratio::estimate_bc(model, noisy).raw;
    std::cout << out.dump() << '\n';
    return 0;
}

int cmd_score(const std::string& manifest_path, const std::string& out_dir, const Common& common) {
    const auto m = manifest_with_overrides(manifest_path, common.seed);
    ensure_dir(out_dir);
    const auto records = harness::generate_records(m, common.jobs);
    json arr = json::array();
    for (const auto& r : records) arr.push_back(harness::to_json(r));
    open_out(fs::path(out_dir) / "records.json") << arr.dump() << '\n';
    auto plot = open_out(fs::path(out_dir) / "plot_data.csv");
    harness::write_plot_csv(plot, m, records);
    std::cout << json{{"records", records.size()}, {"out", out_dir}}.dump() << '\n';
    return 0;
}

int cmd_fit_shift(const std::string& records_path, const std::string& kind_name, const std::string& out_path,
                  const Common& common) {
    const auto kind = ratio::parse_divergence(kind_name);
    const auto records = read_records(records_path);
    std::vector<shift::MomentFeatures> feats;
    std::vector<double> targets;
    for (const auto& r : records) {
        feats.push_back(r.features);
        targets.push_back(r.estimate[kind_index(kind)]);
    }
    shift::ForestOptions opt;
    opt.seed = common.seed.value_or(harness::kDefaultSeed);
    const auto g = shift::fit_shift(feats, targets, opt);
    json j = shift::to_json(g);
    j["kind"] = ratio::to_string(kind);
    open_out(out_path) << j.dump() << '\n';
    std::cout << json{{"trees", g.trees.size()}, {"width", g.width}, {"kind", ratio::to_string(kind)}, {"out", out_path}}
                     .dump()
              << '\n';
    return 0;
}

int cmd_bound(const std::string& dir, const std::string& setup_name, double alpha, const std::string& kind_name,
              const std::string& residual_name, std::optional<double> test_ordinal_flag, bool similarity,
              const std::string& format) {
    const auto setup = conformal::parse_setup(setup_name);
    const auto kind = ratio::parse_divergence(kind_name);
    const auto residual = conformal::parse_residual(residual_name);
    if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("--alpha must lie in (0, 1)");
    const fs::path root(dir);

    const auto records = read_records(root / "calibration.json");
    if (records.empty()) throw DataError("calibration.json holds no records");
    const fs::path test_csv = root / "test_noisy.csv";
    if (!fs::exists(test_csv)) throw DataError("missing test noisy CSV '" + test_csv.string() + "'");
    const auto test_noisy = sampleset::read_shots_csv(test_csv.string());

    std::optional<double> test_ordinal = test_ordinal_flag;
    if (!test_ordinal && fs::exists(root / "test.json")) {
        const json t = read_json(root / "test.json");
        if (t.contains("ordinal")) test_ordinal = t.at("ordinal").get<double>();
    }

    std::vector<conformal::CalibrationRecord> cal;
    for (const auto& r : records) {
        double score = r.estimate[kind_index(kind)];
        if (similarity) score = std::exp(-score);
        cal.push_back({r.run_id(), harness::machine_id(r.machine), r.ordinal, score, r.features});
    }
    const std::string kname = ratio::to_string(kind);
    const bool shifted = setup == conformal::Setup::shift || setup == conformal::Setup::shift_mondrian;
    const bool select = setup == conformal::Setup::mondrian || setup == conformal::Setup::shift_mondrian;
    if (similarity && (kind != ratio::Divergence::bc || shifted)) {
        throw UsageError("--similarity needs --kind bc and a non-shift setup");
    }

    std::size_t discarded = 0;
    bool warning = false;
    if (select) {
        if (!test_ordinal) throw DataError("setup " + setup_name + " needs the test ordinal (test.json or --test-ordinal)");
        const auto sel = conformal::mondrian_select(cal, conformal::SelectionRule::second_largest, *test_ordinal);
        discarded = cal.size() - sel.kept.size();
        warning = sel.warning;
        cal = sel.kept;
    }

    conformal::ConformalBound b;
    if (!shifted) {
        b = conformal::calibrate_plain(cal, alpha, kname,
                                       similarity ? conformal::Direction::lower : conformal::Direction::upper);
        b.setup = setup;
    } else {
        const fs::path model_path = root / "shift_model.json";
        if (!fs::exists(model_path)) throw DataError("missing shift model '" + model_path.string() + "'");
        const auto g = shift::shift_regressor_from_json(read_json(model_path));
        const auto tf = shift::moment_features(test_noisy, g.width);
        b = conformal::calibrate_shift(cal, g, tf, alpha, residual, kname, setup);
    }
    b.n_discarded = discarded;
    b.selection_warning = warning;

    json out = conformal::to_json(b);
    if (similarity) out["direction"] = "lower";
    if (test_ordinal) out["test_ordinal"] = *test_ordinal;
    if (format == "csv") {
        std::cout << "setup,kind,alpha,q_alpha,bound,n_cal,n_discarded,infeasible\n";
        std::cout << out["setup"].get<std::string>() << ',' << kname << ',' << alpha << ','
                  << (out["q_alpha"].is_number() ? std::to_string(b.q_alpha) : out["q_alpha"].get<std::string>()) << ','
                  << (out["bound"].is_number() ? std::to_string(b.bound) : out["bound"].get<std::string>()) << ','
                  << b.n_cal_used << ',' << b.n_discarded << ',' << (b.infeasible ? 1 : 0) << '\n';
    } else {
        std::cout << out.dump() << '\n';
    }
    return 0;
}

int cmd_experiment(const std::string& manifest_path, const std::string& out_dir, const std::string& format,
                   const Common& common) {
    const auto m = manifest_with_overrides(manifest_path, common.seed);
    const auto records = harness::generate_records(m, common.jobs);
    const auto result = harness::evaluate(m, records, common.jobs);
    if (!out_dir.empty()) {
        ensure_dir(out_dir);
        auto results = open_out(fs::path(out_dir) / "results.csv");
        harness::write_results_csv(results, result);
        open_out(fs::path(out_dir) / "summary.json") << harness::summary_json(m, result).dump(2) << '\n';
        auto plot = open_out(fs::path(out_dir) / "plot_data.csv");
        harness::write_plot_csv(plot, m, records);
    }
    if (format == "json") {
        std::cout << harness::summary_json(m, result).dump(2) << '\n';
    } else {
        harness::write_summary_csv(std::cout, result);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Conformal upper bounds on the divergence between noisy and ideal sampler outputs"};
    app.require_subcommand(1);

    Common common;
    std::uint64_t seed_value = harness::kDefaultSeed;
    std::string format = "csv";

    auto add_seed = [&](CLI::App* sub) {
        sub->add_option("--seed", seed_value, "Master seed (default: the manifest seed, else 20240917)");
    };
    auto add_jobs = [&](CLI::App* sub) {
        sub->add_option("--jobs", common.jobs, "Worker threads (default: number of cores)");
    };

    std::string manifest, out_dir, ideal, noisy, kind = "bc", features = "quadratic", records_dir, setup = "all",
                                                  residual = "signed";
    double alpha = 0.1;
    std::optional<double> test_ordinal;
    bool similarity = false;

    auto* gen = app.add_subcommand("generate", "Simulate ideal/noisy shot CSVs for every circuit in a manifest");
    gen->add_option("--manifest", manifest, "Manifest JSON")->required();
    gen->add_option("--out", out_dir, "Output directory")->required();
    add_seed(gen);
    add_jobs(gen);

    auto* est = app.add_subcommand("estimate", "Estimate a divergence between two shot CSVs");
    est->add_option("--ideal", ideal, "Ideal shots CSV")->required();
    est->add_option("--noisy", noisy, "Noisy shots CSV")->required();
    est->add_option("--kind", kind, "bc | kl | tv")->check(CLI::IsMember({"bc", "kl", "tv"}));
    est->add_option("--features", features, "linear | quadratic")->check(CLI::IsMember({"linear", "quadratic"}));
    est->add_option("--format", format, "Output format (json only)")->check(CLI::IsMember({"json"}));
    add_seed(est);

    auto* score = app.add_subcommand("score", "Simulate and score a manifest; writes records.json and plot_data.csv");
    score->add_option("--manifest", manifest, "Manifest JSON")->required();
    score->add_option("--out", out_dir, "Output directory")->required();
    add_seed(score);
    add_jobs(score);

    auto* fit = app.add_subcommand("fit-shift", "Train the shift regressor on scored records");
    fit->add_option("--records", records_dir, "records.json or calibration.json")->required();
    fit->add_option("--kind", kind, "bc | kl | tv")->check(CLI::IsMember({"bc", "kl", "tv"}));
    fit->add_option("--out", out_dir, "Output model JSON")->required();
    add_seed(fit);

    auto* bnd = app.add_subcommand("bound", "Conformal bound for a test circuit from calibration records");
    bnd->add_option("--records", records_dir,
                    "Directory with calibration.json, test_noisy.csv, optional test.json and shift_model.json")
        ->required();
    bnd->add_option("--setup", setup, "all | mondrian | shift | shift+mondrian")
        ->check(CLI::IsMember({"all", "mondrian", "shift", "shift+mondrian"}));
    bnd->add_option("--alpha", alpha, "Miscoverage level");
    bnd->add_option("--kind", kind, "bc | kl | tv")->check(CLI::IsMember({"bc", "kl", "tv"}));
    bnd->add_option("--residual", residual, "signed | absolute")->check(CLI::IsMember({"signed", "absolute"}));
    bnd->add_option("--test-ordinal", test_ordinal, "Test ordinal, overriding test.json");
    bnd->add_flag("--similarity", similarity, "Lower bound on the coefficient BC instead of an upper bound on d_BC");
    bnd->add_option("--format", format, "csv | json")->check(CLI::IsMember({"csv", "json"}));
    add_seed(bnd);

    auto* exp = app.add_subcommand("experiment", "Run the full leave-one-machine-out evaluation");
    exp->add_option("--manifest", manifest, "Manifest JSON")->required();
    exp->add_option("--out", out_dir, "Directory for results.csv, summary.json and plot_data.csv");
    exp->add_option("--format", format, "csv | json")->check(CLI::IsMember({"csv", "json"}));
    add_seed(exp);
    add_jobs(exp);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    for (auto* sub : app.get_subcommands()) {
        if (sub->count("--seed") > 0) common.seed = seed_value;
    }

    try {
        if (gen->parsed()) return cmd_generate(manifest, out_dir, common);
        if (est->parsed()) return cmd_estimate(ideal, noisy, kind, features);
        if (score->parsed()) return cmd_score(manifest, out_dir, common);
        if (fit->parsed()) return cmd_fit_shift(records_dir, kind, out_dir, common);
        if (bnd->parsed()) {
            if (bnd->count("--format") == 0) format = "json";
            return cmd_bound(records_dir, setup, alpha, kind, residual, test_ordinal, similarity, format);
        }
        if (exp->parsed()) return cmd_experiment(manifest, out_dir, format, common);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kUsage;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kData;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kData;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return kInternal;
    }
    return kUsage;
}
