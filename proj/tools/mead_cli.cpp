// Command-line front end: deconv, depnet, downstream, identify, simulate, bench.

#include "mead/core.hpp"
#include "mead/deconv.hpp"
#include "mead/depnet.hpp"
#include "mead/downstream.hpp"
#include "mead/identify.hpp"
#include "mead/json_io.hpp"
#include "mead/pipeline.hpp"
#include "mead/reference.hpp"
#include "mead/sim.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <omp.h>
#include <openssl/evp.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

/// Raised for option combinations CLI11 cannot express; reported with usage text and exit code 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw mead::Error("cannot read " + path);
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof buf);
        if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return os.str();
}

class Manifest {
public:
    Manifest(std::string command, std::vector<std::string> argv)
        : command_(std::move(command)), argv_(std::move(argv)), start_(std::chrono::steady_clock::now()) {}

    void input(const std::string& path) { inputs_[path] = sha256_file(path); }
    json& options() { return options_; }
    void seed(std::uint64_t s) { seed_ = s; }

    void write(const fs::path& dir) const {
        json j;
        j["command"] = command_;
        j["argv"] = argv_;
        j["options"] = options_;
        json digests = json::object();
        for (const auto& [path, digest] : inputs_) digests[path] = {{"sha256", digest}};
        j["inputs"] = digests;
        j["seed"] = seed_ ? json(*seed_) : json(nullptr);
        j["tool_version"] = kVersion;
        j["threads"] = omp_get_max_threads();
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        j["wall_time_seconds"] = seconds;
        mead::write_json(j, (dir / "manifest.json").string());
    }

private:
    std::string command_;
    std::vector<std::string> argv_;
    std::map<std::string, std::string> inputs_;
    json options_ = json::object();
    std::optional<std::uint64_t> seed_;
    std::chrono::steady_clock::time_point start_;
};

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw mead::Error("cannot create output directory " + dir + ": " + ec.message());
}

json interval_json(const mead::Interval& iv) {
    return {{"lower", iv.lower}, {"upper", iv.upper}, {"lower_raw", iv.lower_raw}, {"upper_raw", iv.upper_raw}};
}

// ---------------------------------------------------------------- deconv

struct DeconvArgs {
    std::string bulk, ref, weights = "eb", dep_file, external, out;
    std::optional<double> dep_alpha;
    bool dep_none = false;
    int cv_folds = 10;
    bool no_cv = false;
    double level = 0.95;
    bool no_truncation = false;
    bool allow_single = false;
    double min_mean = 0.0;
    double max_quantile = 1.0;
};

int run_deconv(const DeconvArgs& a, std::uint64_t seed, Manifest& manifest) {
    if (!(a.level > 0.0 && a.level < 1.0)) throw UsageError("--level must lie in (0, 1)");
    if (a.dep_alpha && !(*a.dep_alpha > 0.0 && *a.dep_alpha <= 1.0)) throw UsageError("--dep-alpha must lie in (0, 1]");
    if (!a.no_cv && a.cv_folds < 2) throw UsageError("--cv-folds must be at least 2");
    if (!(a.max_quantile > 0.0 && a.max_quantile <= 1.0)) throw UsageError("--max-quantile must lie in (0, 1]");

    manifest.input(a.bulk);
    manifest.input(a.ref);
    const mead::BulkPanel bulk_in = mead::load_bulk(a.bulk);
    const mead::ReferencePanel ref_in = mead::load_reference(a.ref);
    mead::AlignedPanels aligned = mead::align_genes(bulk_in, ref_in);
    if (a.min_mean > 0.0 || a.max_quantile < 1.0) {
        const auto kept = mead::filter_genes(aligned.reference, a.min_mean, a.max_quantile);
        aligned = mead::align_genes(mead::select_genes(aligned.bulk, kept), aligned.reference);
    }
    const mead::SignatureEstimate sig = mead::estimate_reference(aligned.reference, a.allow_single);
    const bool inference = sig.m >= 2;

    mead::WeightChoice choice = mead::parse_weight_choice(a.weights);
    if (choice.mode == mead::WeightMode::marker) manifest.input(a.weights.substr(7));
    bool weights_forced = false;
    if (!inference && choice.mode == mead::WeightMode::eb) {
        // Shrinkage needs reference variances, which one individual cannot provide.
        choice.mode = mead::WeightMode::equal;
        weights_forced = true;
        std::cerr << "warning: single reference individual, using equal weights instead of eb\n";
    }
    mead::EbFit eb;
    mead::GeneWeights weights = mead::compute_weights(sig, choice, &eb);

    const mead::Index G = sig.genes();
    mead::DependenceSet dep;
    std::string dep_source = "none";
    if (!a.dep_file.empty()) {
        manifest.input(a.dep_file);
        dep = mead::load_dependence(a.dep_file, aligned.bulk.gene_ids);
        dep_source = "file";
    } else if (a.dep_alpha) {
        mead::BulkPanel source = aligned.bulk;
        if (!a.external.empty()) {
            manifest.input(a.external);
            source = mead::select_genes(mead::load_bulk(a.external), aligned.bulk.gene_ids);
        }
        dep = mead::select_pairs(mead::pair_statistics(source), *a.dep_alpha);
        dep_source = a.external.empty() ? "estimated from bulk" : "estimated from external panel";
    } else {
        dep.genes = G;
    }

    mead::DeconvOptions opt;
    opt.inference = inference;
    opt.cv = !a.no_cv;
    opt.cv_folds = a.cv_folds;
    opt.seed = seed;
    opt.level = a.level;
    opt.basis = a.no_truncation ? mead::InferenceBasis::beta_hat : mead::InferenceBasis::beta_star;
    if (opt.cv && opt.cv_folds > G) throw UsageError("--cv-folds exceeds the number of aligned genes");
    const mead::Deconvolver dec(sig, weights, dep, opt);

    const mead::Index N = aligned.bulk.samples();
    std::vector<json> per_sample(static_cast<std::size_t>(N));
    std::vector<std::string> errors(static_cast<std::size_t>(N));
    std::vector<mead::DeconvolutionFit> fits(static_cast<std::size_t>(N));
#pragma omp parallel for schedule(dynamic)
    for (mead::Index i = 0; i < N; ++i) {
        try {
            fits[static_cast<std::size_t>(i)] = dec.fit(aligned.bulk.counts.col(i));
        } catch (const mead::Error& e) {
            errors[static_cast<std::size_t>(i)] = e.what();
        }
    }

    json samples = json::array();
    std::ostringstream summary;
    summary << "sample_id\tcell_type\tp\tlower\tupper\tse\n";
    mead::Index failed = 0;
    for (mead::Index i = 0; i < N; ++i) {
        const auto iu = static_cast<std::size_t>(i);
        const std::string& id = aligned.bulk.sample_ids[iu];
        json s;
        s["sample_id"] = id;
        if (!errors[iu].empty()) {
            ++failed;
            s["error"] = errors[iu];
            samples.push_back(s);
            continue;
        }
        const mead::DeconvolutionFit& f = fits[iu];
        s["p_hat"] = mead::to_json(f.p_hat);
        s["beta_hat"] = mead::to_json(f.beta_hat);
        s["beta_star"] = mead::to_json(f.beta_star);
        json diag = {{"truncation_active", f.truncation_active},
                     {"inference_basis", f.inference_basis == mead::InferenceBasis::beta_star ? "beta_star" : "beta_hat"},
                     {"score_residual", f.score_residual}};
        if (inference) {
            s["cov_p"] = mead::to_json(f.cov_p);
            s["sigma_hat"] = mead::to_json(f.sigma_hat);
            s["se"] = mead::to_json(f.se);
            json ivs = json::array();
            for (const auto& iv : f.intervals) ivs.push_back(interval_json(iv));
            s["intervals"] = ivs;
            diag["cv_applied"] = f.cv_applied;
            diag["sigma_clip"] = f.sigma_clip;
            diag["warning"] = f.warning;
        }
        s["diagnostics"] = diag;
        samples.push_back(s);
        for (mead::Index k = 0; k < sig.types(); ++k) {
            summary << id << '\t' << sig.cell_types[static_cast<std::size_t>(k)] << '\t' << mead::format_real(f.p_hat(k));
            if (inference) {
                const auto& iv = f.intervals[static_cast<std::size_t>(k)];
                summary << '\t' << mead::format_real(iv.lower) << '\t' << mead::format_real(iv.upper) << '\t'
                        << mead::format_real(f.se(k));
            } else {
                summary << "\tNA\tNA\tNA";
            }
            summary << '\n';
        }
    }

    json result;
    result["cell_types"] = sig.cell_types;
    result["genes"] = G;
    result["reference_individuals"] = sig.m;
    result["level"] = a.level;
    result["omega_hat"] = mead::to_json(dec.omega());
    result["reciprocal_condition"] = mead::reciprocal_condition(dec.omega());
    result["alignment"] = {{"dropped_from_bulk", aligned.report.dropped_from_bulk.size()},
                           {"dropped_from_reference", aligned.report.dropped_from_reference.size()}};
    json wj = {{"mode", a.weights}};
    if (weights_forced) wj["mode"] = "equal";
    if (choice.mode == mead::WeightMode::eb) {
        wj["prior_mode"] = eb.prior_mode;
        wj["em_iterations"] = eb.iterations;
        wj["em_converged"] = eb.converged;
        wj["zero_variances_replaced"] = eb.zero_count;
    }
    result["weights"] = wj;
    result["dependence"] = {{"source", dep_source}, {"pairs", dep.size()}, {"threshold", dep.t_hat},
                            {"fallback_threshold", dep.fallback_threshold}};
    result["cross_validation"] = {{"requested", opt.cv && inference}, {"feasible", dec.cv_feasible()},
                                  {"folds", opt.cv ? opt.cv_folds : 0}, {"message", dec.cv_message()}};
    if (!inference)
        result["note"] = std::string("single reference individual: point estimates only") +
                         (weights_forced ? "; eb weights replaced by equal weights" : "");
    result["failed_samples"] = failed;
    result["samples"] = samples;

    ensure_dir(a.out);
    mead::write_json(result, (fs::path(a.out) / "results.json").string());
    std::ofstream(fs::path(a.out) / "summary.tsv") << summary.str();
    mead::save_weights(sig.gene_ids, dec.weights(), (fs::path(a.out) / "weights.tsv").string());
    manifest.options() = {{"bulk", a.bulk}, {"ref", a.ref}, {"weights", a.weights}, {"dep", a.dep_file},
                          {"dep_alpha", a.dep_alpha ? json(*a.dep_alpha) : json(nullptr)},
                          {"dep_none", dep_source == "none"}, {"external", a.external},
                          {"cv_folds", opt.cv ? a.cv_folds : 0}, {"level", a.level},
                          {"inference_basis", a.no_truncation ? "beta_hat" : "beta_star"},
                          {"min_mean", a.min_mean}, {"max_quantile", a.max_quantile}};
    manifest.seed(seed);
    manifest.write(a.out);
    if (failed > 0) {
        std::cerr << "mead deconv: " << failed << " of " << N << " samples failed; see results.json\n";
        return 1;
    }
    return 0;
}

// ---------------------------------------------------------------- depnet

int run_depnet(const std::string& bulk, const std::string& external, double alpha, const std::string& out,
               Manifest& manifest) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw UsageError("--alpha must lie in (0, 1]");
    const std::string& path = bulk.empty() ? external : bulk;
    manifest.input(path);
    const mead::BulkPanel panel = mead::load_bulk(path);
    const mead::DependenceSet dep = mead::select_pairs(mead::pair_statistics(panel), alpha);
    ensure_dir(out);
    const fs::path dir(out);
    mead::save_dependence(dep, panel.gene_ids, (dir / "dependence.tsv").string(), (dir / "results.json").string());
    std::ofstream(dir / "summary.tsv") << "genes\tsamples\tpairs\tthreshold\tfallback\n"
                                       << dep.genes << '\t' << dep.samples << '\t' << dep.size() << '\t'
                                       << mead::format_real(dep.t_hat) << '\t' << (dep.fallback_threshold ? 1 : 0)
                                       << '\n';
    manifest.options() = {{"input", path}, {"alpha", alpha}};
    manifest.write(dir);
    return 0;
}

// ---------------------------------------------------------------- downstream

struct ProportionTable {
    std::vector<std::string> sample_ids;
    std::vector<std::string> cell_types;
    mead::Matrix p;
    mead::Index genes = 0;
};

ProportionTable load_proportions(const std::string& path) {
    ProportionTable t;
    if (fs::path(path).extension() == ".json") {
        const json j = mead::read_json(path);
        try {
            t.cell_types = j.at("cell_types").get<std::vector<std::string>>();
            t.genes = j.value("genes", mead::Index{0});
            std::vector<mead::Vector> rows;
            for (const auto& s : j.at("samples")) {
                if (s.contains("error")) continue;
                t.sample_ids.push_back(s.at("sample_id").get<std::string>());
                rows.push_back(mead::vector_from_json(s.at("p_hat")));
            }
            t.p.resize(static_cast<mead::Index>(rows.size()), static_cast<mead::Index>(t.cell_types.size()));
            for (std::size_t i = 0; i < rows.size(); ++i) t.p.row(static_cast<mead::Index>(i)) = rows[i].transpose();
        } catch (const json::exception& e) {
            throw mead::FormatError(path + ": not a deconvolution result (" + e.what() + ")");
        }
        return t;
    }
    // Wide TSV: sample_id then one column per cell type.
    const mead::CovariateTable table = mead::load_covariates(path);
    t.sample_ids = table.sample_ids;
    t.cell_types = table.names;
    t.p = table.values;
    return t;
}

int run_downstream(const std::string& proportions, const std::string& covariates, double level,
                   mead::Index genes_flag, const std::string& out, Manifest& manifest) {
    if (!(level > 0.0 && level < 1.0)) throw UsageError("--level must lie in (0, 1)");
    manifest.input(proportions);
    manifest.input(covariates);
    const ProportionTable props = load_proportions(proportions);
    const mead::CovariateTable cov = mead::match_samples(mead::load_covariates(covariates), props.sample_ids);
    const mead::Index G = genes_flag > 0 ? genes_flag : props.genes;
    mead::DownstreamFit fit = mead::fit_regression(props.p, cov.values);
    fit.covariates = cov.names;
    fit.cell_types = props.cell_types;
    mead::regression_inference(fit, level, G, props.p.rows());
    json result = mead::to_json(fit);
    result["samples"] = props.p.rows();
    result["genes"] = G;
    ensure_dir(out);
    mead::write_json(result, (fs::path(out) / "results.json").string());
    mead::save_downstream_tsv(fit, (fs::path(out) / "summary.tsv").string());
    manifest.options() = {{"proportions", proportions}, {"covariates", covariates}, {"level", level}, {"genes", G}};
    manifest.write(out);
    if (fit.regime_warning) std::cerr << "warning: " << fit.warning << '\n';
    return 0;
}

// ---------------------------------------------------------------- identify

int run_identify(const std::string& signature, const std::string& ref, double tol, int max_genes, double floor,
                 const std::string& out, Manifest& manifest) {
    if (!(tol > 0.0)) throw UsageError("--tol must be positive");
    std::vector<std::string> genes;
    mead::Matrix u;
    if (!signature.empty()) {
        manifest.input(signature);
        const mead::BulkPanel table = mead::load_bulk(signature);  // gene_id then one column per cell type
        genes = table.gene_ids;
        u = table.counts;
    } else {
        manifest.input(ref);
        const mead::SignatureEstimate sig = mead::estimate_reference(mead::load_reference(ref), true);
        genes = sig.gene_ids;
        u = sig.u_hat;
    }
    mead::IdentifyOptions opt;
    opt.tol = tol;
    opt.max_genes = max_genes;
    opt.support_floor = floor;
    const mead::IdentifiabilityReport report = mead::check_identifiability(u, opt);
    const json result = mead::to_json(report, genes);
    std::cout << "verdict: " << report.verdict() << '\n' << mead::dump_json(result) << '\n';
    if (!out.empty()) {
        ensure_dir(out);
        mead::write_json(result, (fs::path(out) / "results.json").string());
        std::ofstream(fs::path(out) / "summary.tsv") << "verdict\trank\tcondition_a\tcondition_b\tmethod\n"
                                                     << report.verdict() << '\t' << report.rank_u << '\t'
                                                     << report.condition_a << '\t'
                                                     << mead::to_string(report.condition_b) << '\t'
                                                     << result["method"].get<std::string>() << '\n';
        manifest.options() = {{"tol", tol}, {"max_genes", max_genes}, {"support_floor", floor}};
        manifest.write(out);
    }
    return 0;
}

// ---------------------------------------------------------------- simulate / bench

mead::SimConfig resolve_config(const std::string& path, std::optional<std::uint64_t> seed, Manifest& manifest) {
    manifest.input(path);
    const json j = mead::read_json(path);
    if (!seed && !(j.is_object() && j.contains("seed")))
        throw UsageError("a seed is required: set \"seed\" in the config or pass --seed");
    mead::SimConfig cfg = mead::sim_config_from_json(j);
    if (seed) cfg.seed = *seed;
    if (cfg.signature_source == "file") manifest.input(cfg.signature_file);
    manifest.seed(cfg.seed);
    return cfg;
}

int run_simulate(const std::string& config, std::optional<std::uint64_t> seed, const std::string& out,
                 Manifest& manifest) {
    const mead::SimConfig cfg = resolve_config(config, seed, manifest);
    const mead::SimDataset data = mead::simulate_dataset(cfg);
    ensure_dir(out);
    const fs::path dir(out);
    mead::save_bulk(data.bulk, (dir / "bulk.tsv").string());
    mead::save_reference(data.reference, (dir / "reference.tsv").string());
    if (cfg.external_samples > 0) mead::save_bulk(data.external, (dir / "external.tsv").string());
    mead::write_json(mead::truth_to_json(data, cfg), (dir / "truth.json").string());
    const mead::DependenceSet dep = mead::true_dependence(cfg);
    {
        std::ofstream os(dir / "true_dependence.tsv");
        os << "gene_id_1\tgene_id_2\n";
        for (const auto& [g1, g2] : dep.pairs)
            os << data.bulk.gene_ids[static_cast<std::size_t>(g1)] << '\t'
               << data.bulk.gene_ids[static_cast<std::size_t>(g2)] << '\n';
    }
    manifest.options() = mead::to_json(cfg);
    manifest.write(dir);
    return 0;
}

json parse_options_arg(const std::string& text) {
    if (text.empty()) return json::object();
    if (fs::exists(text)) return mead::read_json(text);
    try {
        return json::parse(text);
    } catch (const json::exception&) {
        throw UsageError("--options must be a JSON object or the path of a JSON file");
    }
}

mead::WeightMode weight_mode(const std::string& name) {
    if (name == "eb") return mead::WeightMode::eb;
    if (name == "equal") return mead::WeightMode::equal;
    throw UsageError("weight mode '" + name + "' is not available in benchmarks (use eb or equal)");
}

int run_bench(const std::string& kind, const std::string& config, mead::Index replicates, const std::string& options,
              std::optional<std::uint64_t> seed, const std::string& out, Manifest& manifest) {
    if (replicates < 1) throw UsageError("--replicates must be at least 1");
    const mead::SimConfig cfg = resolve_config(config, seed, manifest);
    const json o = parse_options_arg(options);
    json result;
    std::ostringstream summary;
    if (kind == "rmse") {
        std::vector<mead::WeightMode> modes;
        for (const auto& m : o.value("methods", std::vector<std::string>{"eb", "equal"})) modes.push_back(weight_mode(m));
        const mead::RmseReport report = mead::run_rmse(cfg, modes, replicates);
        result = mead::to_json(report);
        summary << "method\tmean_rmse\tfailures\n";
        for (const auto& m : report.methods)
            summary << m.name << '\t' << mead::format_real(m.mean) << '\t' << m.failures << '\n';
    } else {
        if (replicates < 2) throw UsageError("coverage benchmarks need at least 2 replicates");
        mead::CoverageOptions co;
        const std::string dep = o.value("dep", std::string("truth"));
        if (dep == "none") co.dep = mead::DepSource::none;
        else if (dep == "truth") co.dep = mead::DepSource::truth;
        else if (dep == "estimated") co.dep = mead::DepSource::estimated;
        else throw UsageError("options.dep must be none, truth or estimated");
        co.alpha = o.value("alpha", co.alpha);
        co.cv = o.value("cv", co.cv);
        co.cv_folds = o.value("cv_folds", co.cv_folds);
        co.weights = weight_mode(o.value("weights", std::string("eb")));
        const std::string basis = o.value("basis", std::string("beta_star"));
        if (basis != "beta_star" && basis != "beta_hat") throw UsageError("options.basis must be beta_star or beta_hat");
        co.basis = basis == "beta_star" ? mead::InferenceBasis::beta_star : mead::InferenceBasis::beta_hat;
        co.level = o.value("level", co.level);
        if (!(co.level > 0.0 && co.level < 1.0)) throw UsageError("options.level must lie in (0, 1)");
        const mead::CoverageReport report = mead::run_coverage(cfg, co, replicates);
        result = mead::to_json(report);
        summary << "dep\tcv\tlevel\tmean_coverage\tsd\tfailures\n"
                << dep << '\t' << (co.cv ? 1 : 0) << '\t' << mead::format_real(co.level) << '\t'
                << mead::format_real(report.mean) << '\t' << mead::format_real(report.sd) << '\t' << report.failures
                << '\n';
    }
    result["config"] = mead::to_json(cfg);
    result["options"] = o;
    ensure_dir(out);
    mead::write_json(result, (fs::path(out) / "results.json").string());
    std::ofstream(fs::path(out) / "summary.tsv") << summary.str();
    manifest.options() = {{"kind", kind}, {"replicates", replicates}, {"options", o}};
    manifest.write(out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mead: cell-type deconvolution with confidence intervals"};
    app.require_subcommand(1);
    app.fallthrough();  // global options may follow the subcommand
    app.set_version_flag("--version", kVersion);

    int threads = 0;
    std::optional<std::uint64_t> seed;
    app.add_option("--threads", threads, "worker threads (default: MEAD_THREADS or all cores)")->check(CLI::PositiveNumber);
    app.add_option("--seed", seed, "random seed for every stochastic step");

    DeconvArgs da;
    auto* deconv = app.add_subcommand("deconv", "estimate proportions and confidence intervals per bulk sample");
    deconv->add_option("--bulk", da.bulk, "bulk expression, wide TSV")->required()->check(CLI::ExistingFile);
    deconv->add_option("--ref", da.ref, "reference panel, long TSV")->required()->check(CLI::ExistingFile);
    deconv->add_option("--weights", da.weights, "eb | equal | marker:FILE")->capture_default_str();
    auto* dep_file = deconv->add_option("--dep", da.dep_file, "dependent gene pairs TSV")->check(CLI::ExistingFile);
    auto* dep_alpha = deconv->add_option("--dep-alpha", da.dep_alpha, "estimate dependent pairs at this FDR level");
    auto* dep_none = deconv->add_flag("--dep-none", da.dep_none, "assume independent genes (default)");
    dep_file->excludes(dep_alpha)->excludes(dep_none);
    dep_alpha->excludes(dep_none);
    deconv->add_option("--external", da.external, "external bulk panel for --dep-alpha")
        ->check(CLI::ExistingFile)
        ->needs(dep_alpha);
    auto* folds = deconv->add_option("--cv-folds", da.cv_folds, "cross-validation folds")->capture_default_str();
    auto* no_cv = deconv->add_flag("--no-cv", da.no_cv, "skip the cross-validation correction");
    folds->excludes(no_cv);
    deconv->add_option("--level", da.level, "confidence level")->capture_default_str();
    deconv->add_flag("--no-truncation", da.no_truncation, "base inference on the unconstrained coefficients");
    deconv->add_flag("--allow-single-individual", da.allow_single, "accept M = 1 (point estimates only)");
    deconv->add_option("--min-mean", da.min_mean, "drop genes whose largest type mean is below this");
    deconv->add_option("--max-quantile", da.max_quantile, "drop genes above this quantile of type means");
    deconv->add_option("--out", da.out, "output directory")->required();

    std::string dn_bulk, dn_external, dn_out;
    double dn_alpha = 0.1;
    auto* depnet = app.add_subcommand("depnet", "select dependent gene pairs by FDR-controlled testing");
    auto* dn_b = depnet->add_option("--bulk", dn_bulk, "bulk expression, wide TSV")->check(CLI::ExistingFile);
    auto* dn_e = depnet->add_option("--external", dn_external, "external expression panel")->check(CLI::ExistingFile);
    dn_b->excludes(dn_e);
    depnet->add_option("--alpha", dn_alpha, "FDR level")->capture_default_str();
    depnet->add_option("--out", dn_out, "output directory")->required();

    std::string ds_props, ds_cov, ds_out;
    double ds_level = 0.95;
    mead::Index ds_genes = 0;
    auto* downstream = app.add_subcommand("downstream", "regress proportions on covariates");
    downstream->add_option("--proportions", ds_props, "deconv results.json or wide TSV")
        ->required()
        ->check(CLI::ExistingFile);
    downstream->add_option("--covariates", ds_cov, "covariates, wide TSV")->required()->check(CLI::ExistingFile);
    downstream->add_option("--level", ds_level, "confidence level")->capture_default_str();
    downstream->add_option("--genes", ds_genes, "number of genes behind the proportions (regime check)");
    downstream->add_option("--out", ds_out, "output directory")->required();

    std::string id_sig, id_ref, id_out;
    double id_tol = 1e-8, id_floor = 0.0;
    int id_max = 10;
    auto* identify = app.add_subcommand("identify", "check identifiability of a signature matrix");
    auto* id_s = identify->add_option("--signature", id_sig, "signature matrix, wide TSV")->check(CLI::ExistingFile);
    auto* id_r = identify->add_option("--ref", id_ref, "reference panel; its estimated signature is checked")
                     ->check(CLI::ExistingFile);
    id_s->excludes(id_r);
    identify->add_option("--tol", id_tol, "relative singular-value tolerance")->capture_default_str();
    identify->add_option("--max-genes", id_max, "largest gene count for exhaustive partition checks")
        ->capture_default_str();
    identify->add_option("--support-floor", id_floor, "treat |u| at or below this as zero");
    identify->add_option("--out", id_out, "optional output directory");

    std::string sim_config, sim_out;
    auto* simulate = app.add_subcommand("simulate", "generate a synthetic data set");
    simulate->add_option("--config", sim_config, "SimConfig JSON")->required()->check(CLI::ExistingFile);
    simulate->add_option("--out", sim_out, "output directory")->required();

    std::string bench_kind, bench_config, bench_options, bench_out;
    mead::Index bench_reps = 20;
    auto* bench = app.add_subcommand("bench", "simulation benchmarks");
    bench->add_option("kind", bench_kind, "rmse | coverage")->required()->check(CLI::IsMember({"rmse", "coverage"}));
    bench->add_option("--config", bench_config, "SimConfig JSON")->required()->check(CLI::ExistingFile);
    bench->add_option("--replicates", bench_reps, "number of replicates")->capture_default_str();
    bench->add_option("--options", bench_options, "JSON object (string or file) with benchmark options");
    bench->add_option("--out", bench_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "error: " << e.what() << "\n\n";
        const auto subs = app.get_subcommands();
        std::cerr << (subs.empty() ? app.help() : subs.front()->help());
        return 2;
    }

    if (threads == 0) {
        if (const char* env = std::getenv("MEAD_THREADS")) {
            try {
                threads = std::stoi(env);
            } catch (const std::exception&) {
                threads = 0;
            }
        }
    }
    if (threads > 0) omp_set_num_threads(threads);

    std::vector<std::string> args(argv, argv + argc);
    CLI::App* sub = app.get_subcommands().front();
    Manifest manifest(sub->get_name(), args);
    try {
        if (sub == deconv) return run_deconv(da, seed.value_or(0), manifest);
        if (sub == depnet) {
            if (dn_bulk.empty() && dn_external.empty()) throw UsageError("one of --bulk or --external is required");
            return run_depnet(dn_bulk, dn_external, dn_alpha, dn_out, manifest);
        }
        if (sub == downstream) return run_downstream(ds_props, ds_cov, ds_level, ds_genes, ds_out, manifest);
        if (sub == identify) {
            if (id_sig.empty() && id_ref.empty()) throw UsageError("one of --signature or --ref is required");
            return run_identify(id_sig, id_ref, id_tol, id_max, id_floor, id_out, manifest);
        }
        if (sub == simulate) return run_simulate(sim_config, seed, sim_out, manifest);
        if (sub == bench) return run_bench(bench_kind, bench_config, bench_reps, bench_options, seed, bench_out, manifest);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << sub->help();
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "mead " << sub->get_name() << ": " << e.what() << '\n';
        return 1;
    }
    return 0;
}
