#include "mead/sim.hpp"
#include "mead/depnet.hpp"
#include "mead/downstream.hpp"
#include "mead/json_io.hpp"
#include "mead/reference.hpp"
#include "mead/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>

namespace mead {

namespace {

constexpr std::uint64_t kSignatureStream = 0x7369676e6174ULL;

std::string padded(const std::string& prefix, Index i, Index n) {
    const int width = static_cast<int>(std::to_string(n).size());
    char buf[32];
    std::snprintf(buf, sizeof buf, "%0*lld", width, static_cast<long long>(i + 1));
    return prefix + buf;
}

void check_simplex(const Vector& p, Index K, const std::string& name) {
    if (p.size() != K) throw ParameterError(name + " must have one entry per cell type");
    if ((p.array() < 0.0).any() || !p.allFinite()) throw ParameterError(name + " entries must be non-negative");
    if (std::abs(p.sum() - 1.0) > 1e-8) throw ParameterError(name + " must sum to 1");
}

// Lognormal expressions with mean U and banded log-scale correlation. The moving average of
// d consecutive standard normals, scaled by 1/sqrt(d), has correlation max(1 - lag/d, 0).
Matrix draw_expression(Rng& rng, const SimSignature& sig, Index bandwidth, double variance_scale) {
    const Index G = sig.u.rows();
    const Index K = sig.u.cols();
    const Index d = bandwidth;
    const double root_d = std::sqrt(static_cast<double>(d));
    Matrix x(G, K);
    std::vector<double> eps(static_cast<std::size_t>(G + d - 1));
    for (Index k = 0; k < K; ++k) {
        for (auto& e : eps) e = rng.normal();
        double window = 0.0;
        for (Index l = 0; l < d; ++l) window += eps[static_cast<std::size_t>(l)];
        for (Index g = 0; g < G; ++g) {
            if (g > 0) window += eps[static_cast<std::size_t>(g + d - 1)] - eps[static_cast<std::size_t>(g - 1)];
            const double s2 = sig.sigma2(g, k) * variance_scale;
            x(g, k) = sig.u(g, k) * std::exp(-0.5 * s2 + std::sqrt(s2) * window / root_d);
        }
    }
    return x;
}

struct BulkDraw {
    Vector y;
    double normalizer = 0.0;
};

BulkDraw draw_bulk(Rng& rng, const Matrix& x, const Vector& p, const Vector& lambda, double library) {
    const Vector rate = lambda.cwiseProduct(x * p);
    BulkDraw out;
    out.normalizer = rate.sum();
    out.y.resize(rate.size());
    for (Index g = 0; g < rate.size(); ++g) out.y(g) = rng.poisson(library * rate(g) / out.normalizer);
    return out;
}

double mean_of(const std::vector<double>& v, Index* count = nullptr) {
    double s = 0.0;
    Index n = 0;
    for (double x : v)
        if (std::isfinite(x)) { s += x; ++n; }
    if (count) *count = n;
    return n ? s / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

Vector group_base(const SimConfig& cfg, int group) {
    return group == 1 && cfg.group2_base ? *cfg.group2_base : cfg.dirichlet_base;
}

const char* mode_name(WeightMode m) {
    switch (m) {
        case WeightMode::eb: return "eb";
        case WeightMode::equal: return "equal";
        case WeightMode::marker: return "marker";
    }
    return "eb";
}

DependenceSet dependence_for(const SimConfig& cfg, const SimDataset& data, const CoverageOptions& options,
                             const DependenceSet& truth) {
    switch (options.dep) {
        case DepSource::none: {
            DependenceSet empty;
            empty.genes = cfg.genes;
            return empty;
        }
        case DepSource::truth: return truth;
        case DepSource::estimated: break;
    }
    if (data.external.counts.cols() < 3) throw ParameterError("estimated dependence needs an external panel");
    return select_pairs(PairStatistics(data.external.counts), options.alpha);
}

}  // namespace

void SimConfig::validate() const {
    if (types < 2) throw ParameterError("simulation needs at least two cell types");
    if (genes < types) throw ParameterError("simulation needs at least as many genes as cell types");
    if (samples < 1) throw ParameterError("simulation needs at least one bulk sample");
    if (individuals < 1) throw ParameterError("simulation needs at least one reference individual");
    if (bandwidth < 1 || bandwidth >= genes) throw ParameterError("bandwidth must lie in [1, G)");
    if (!(gamma_shape > 0.0)) throw ParameterError("gamma_shape must be positive");
    if (!(library_per_gene > 0.0)) throw ParameterError("library_per_gene must be positive");
    if (!(lambda_sd >= 0.0) || !std::isfinite(lambda_mean)) throw ParameterError("invalid lambda law");
    check_simplex(dirichlet_base, types, "dirichlet_base");
    if (group2_base) check_simplex(*group2_base, types, "group2_base");
    if (!(dirichlet_scale > 0.0)) throw ParameterError("dirichlet_scale must be positive");
    if (group1_size > samples) throw ParameterError("group1_size exceeds the number of samples");
    if (!(variance_scale > 0.0)) throw ParameterError("variance_scale must be positive");
    if (!(sigma2_min > 0.0) || !(sigma2_max >= sigma2_min)) throw ParameterError("invalid sigma2 range");
    if (!(signature_log_sd >= 0.0) || !(signature_type_sd >= 0.0))
        throw ParameterError("signature spreads must be non-negative");
    if (external_samples < 0 || external_samples == 1 || external_samples == 2)
        throw ParameterError("external_samples must be 0 or at least 3");
    if (signature_source != "synthetic" && signature_source != "file")
        throw ParameterError("signature_source must be 'synthetic' or 'file'");
    if (signature_source == "file" && signature_file.empty())
        throw ParameterError("signature_source 'file' requires signature_file");
}

SimConfig full_scale_config() {
    SimConfig c;
    c.genes = 9496;
    c.samples = 50;
    c.individuals = 10;
    c.bandwidth = 500;
    return c;
}

SimConfig sim_config_from_json(const nlohmann::json& j) {
    static const std::set<std::string> known = {
        "preset", "G", "K", "N", "M", "bandwidth", "gamma_shape", "library_per_gene", "lambda_mean", "lambda_sd",
        "dirichlet_base", "dirichlet_scale", "group2_base", "group1_size", "fixed_proportions", "seed",
        "signature_source", "signature_file", "signature_log_sd", "signature_type_sd", "sigma2_min", "sigma2_max", "variance_scale",
        "external_samples", "max_true_pairs"};
    if (!j.is_object()) throw ParameterError("simulation config must be a JSON object");
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) throw ParameterError("unknown simulation config key '" + key + "'");
    SimConfig c;
    try {
        if (j.contains("preset")) {
            const std::string preset = j.at("preset").get<std::string>();
            if (preset == "full") c = full_scale_config();
            else if (preset != "default") throw ParameterError("unknown preset '" + preset + "' (use 'default' or 'full')");
        }
        c.genes = j.value("G", c.genes);
        c.types = j.value("K", c.types);
        c.samples = j.value("N", c.samples);
        c.individuals = j.value("M", c.individuals);
        c.bandwidth = j.value("bandwidth", c.bandwidth);
        c.gamma_shape = j.value("gamma_shape", c.gamma_shape);
        c.library_per_gene = j.value("library_per_gene", c.library_per_gene);
        c.lambda_mean = j.value("lambda_mean", c.lambda_mean);
        c.lambda_sd = j.value("lambda_sd", c.lambda_sd);
        if (j.contains("dirichlet_base")) {
            c.dirichlet_base = vector_from_json(j.at("dirichlet_base"));
        } else if (c.types != 4) {
            c.dirichlet_base = Vector::Constant(c.types, 1.0 / static_cast<double>(c.types));
        }
        c.dirichlet_scale = j.value("dirichlet_scale", c.dirichlet_scale);
        if (j.contains("group2_base") && !j.at("group2_base").is_null())
            c.group2_base = vector_from_json(j.at("group2_base"));
        c.group1_size = j.value("group1_size", c.group1_size);
        c.fixed_proportions = j.value("fixed_proportions", c.fixed_proportions);
        c.seed = j.value("seed", c.seed);
        c.signature_source = j.value("signature_source", c.signature_source);
        c.signature_file = j.value("signature_file", c.signature_file);
        c.signature_log_sd = j.value("signature_log_sd", c.signature_log_sd);
        c.signature_type_sd = j.value("signature_type_sd", c.signature_type_sd);
        c.sigma2_min = j.value("sigma2_min", c.sigma2_min);
        c.sigma2_max = j.value("sigma2_max", c.sigma2_max);
        c.variance_scale = j.value("variance_scale", c.variance_scale);
        c.external_samples = j.value("external_samples", c.external_samples);
        c.max_true_pairs = j.value("max_true_pairs", c.max_true_pairs);
    } catch (const nlohmann::json::exception& e) {
        throw ParameterError(std::string("invalid simulation config: ") + e.what());
    }
    c.validate();
    return c;
}

nlohmann::json to_json(const SimConfig& c) {
    nlohmann::json j;
    j["G"] = c.genes;
    j["K"] = c.types;
    j["N"] = c.samples;
    j["M"] = c.individuals;
    j["bandwidth"] = c.bandwidth;
    j["gamma_shape"] = c.gamma_shape;
    j["library_per_gene"] = c.library_per_gene;
    j["lambda_mean"] = c.lambda_mean;
    j["lambda_sd"] = c.lambda_sd;
    j["dirichlet_base"] = to_json(c.dirichlet_base);
    j["dirichlet_scale"] = c.dirichlet_scale;
    j["group2_base"] = c.group2_base ? to_json(*c.group2_base) : nlohmann::json(nullptr);
    j["group1_size"] = c.group1_size;
    j["fixed_proportions"] = c.fixed_proportions;
    j["seed"] = c.seed;
    j["signature_source"] = c.signature_source;
    j["signature_file"] = c.signature_file;
    j["signature_log_sd"] = c.signature_log_sd;
    j["signature_type_sd"] = c.signature_type_sd;
    j["sigma2_min"] = c.sigma2_min;
    j["sigma2_max"] = c.sigma2_max;
    j["variance_scale"] = c.variance_scale;
    j["external_samples"] = c.external_samples;
    j["max_true_pairs"] = c.max_true_pairs;
    return j;
}

SimConfig load_sim_config(const std::string& path) { return sim_config_from_json(read_json(path)); }

SimSignature make_signature(const SimConfig& cfg) {
    if (cfg.signature_source == "file") {
        SimSignature sig = load_signature(cfg.signature_file);
        if (sig.u.rows() != cfg.genes || sig.u.cols() != cfg.types)
            throw ParameterError("signature file dimensions do not match G and K of the config");
        return sig;
    }
    Rng rng(cfg.seed, kSignatureStream);
    SimSignature sig;
    sig.u.resize(cfg.genes, cfg.types);
    sig.sigma2.resize(cfg.genes, cfg.types);
    const double lo = std::log(cfg.sigma2_min);
    const double hi = std::log(cfg.sigma2_max);
    // Heavy-tailed gene levels times milder cell-type contrasts.
    for (Index g = 0; g < cfg.genes; ++g) {
        const double level = cfg.signature_log_sd * rng.normal();
        for (Index k = 0; k < cfg.types; ++k) {
            sig.u(g, k) = std::exp(level + cfg.signature_type_sd * rng.normal());
            sig.sigma2(g, k) = std::exp(lo + (hi - lo) * rng.uniform());
        }
    }
    sig.u /= sig.u.mean();
    return sig;
}

void save_signature(const SimSignature& sig, const std::string& path) {
    write_json({{"u", to_json(sig.u)}, {"sigma2", to_json(sig.sigma2)}}, path);
}

SimSignature load_signature(const std::string& path) {
    const auto j = read_json(path);
    SimSignature sig;
    try {
        sig.u = matrix_from_json(j.at("u"));
        sig.sigma2 = matrix_from_json(j.at("sigma2"));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
    if (sig.u.rows() != sig.sigma2.rows() || sig.u.cols() != sig.sigma2.cols())
        throw FormatError(path + ": u and sigma2 have different shapes");
    if (!(sig.u.array() > 0.0).all() || !(sig.sigma2.array() > 0.0).all())
        throw FormatError(path + ": u and sigma2 entries must be positive");
    return sig;
}

SimDataset simulate_dataset(const SimConfig& cfg, std::uint64_t replicate, bool keep_expressions) {
    cfg.validate();
    return simulate_dataset(cfg, make_signature(cfg), replicate, keep_expressions);
}

SimDataset simulate_dataset(const SimConfig& cfg, const SimSignature& signature, std::uint64_t replicate,
                            bool keep_expressions) {
    cfg.validate();
    const Index G = cfg.genes;
    const Index K = cfg.types;
    const Index N = cfg.samples;
    const Index M = cfg.individuals;
    const double v = cfg.variance_scale;
    Rng rng(cfg.seed, replicate + 1);

    SimDataset data;
    data.truth.signature = signature;
    std::vector<std::string> genes(static_cast<std::size_t>(G));
    for (Index g = 0; g < G; ++g) genes[static_cast<std::size_t>(g)] = padded("gene", g, G);
    std::vector<std::string> types(static_cast<std::size_t>(K));
    for (Index k = 0; k < K; ++k) types[static_cast<std::size_t>(k)] = "type" + std::to_string(k + 1);

    data.truth.lambda.resize(G);
    const double lambda_sd = cfg.lambda_sd * std::sqrt(v);
    for (Index g = 0; g < G; ++g) data.truth.lambda(g) = std::max(1e-3, cfg.lambda_mean + lambda_sd * rng.normal());

    ReferencePanel& ref = data.reference;
    ref.gene_ids = genes;
    ref.cell_types = types;
    const double shape = cfg.gamma_shape / v;
    for (Index j = 0; j < M; ++j) {
        ref.individual_ids.push_back(padded("ref", j, M));
        const Matrix x = draw_expression(rng, signature, cfg.bandwidth, v);
        Matrix means(G, K);
        for (Index g = 0; g < G; ++g)
            for (Index k = 0; k < K; ++k) means(g, k) = rng.gamma(shape, x(g, k) / shape);
        ref.means.push_back(std::move(means));
        ref.cell_counts.push_back(Eigen::VectorXi::Constant(K, 100));
    }

    const double library = cfg.library_per_gene * static_cast<double>(G);
    const Index group1 = cfg.group2_base ? (cfg.group1_size >= 0 ? cfg.group1_size : N / 2) : N;
    BulkPanel& bulk = data.bulk;
    bulk.gene_ids = genes;
    bulk.counts.resize(G, N);
    data.truth.proportions.resize(N, K);
    data.truth.beta_true.resize(N, K);
    data.truth.library = Vector::Constant(N, library);
    data.truth.groups.assign(static_cast<std::size_t>(N), 0);
    for (Index i = 0; i < N; ++i) {
        bulk.sample_ids.push_back(padded("bulk", i, N));
        const int group = i < group1 ? 0 : 1;
        data.truth.groups[static_cast<std::size_t>(i)] = group;
        const Vector base = group_base(cfg, group);
        const Vector p = cfg.fixed_proportions ? base : rng.dirichlet(cfg.dirichlet_scale * base);
        const Matrix x = draw_expression(rng, signature, cfg.bandwidth, v);
        const BulkDraw draw = draw_bulk(rng, x, p, data.truth.lambda, library);
        bulk.counts.col(i) = draw.y;
        data.truth.proportions.row(i) = p.transpose();
        data.truth.beta_true.row(i) = (library / draw.normalizer) * p.transpose();
        if (keep_expressions) data.truth.bulk_expression.push_back(x);
    }

    if (cfg.external_samples > 0) {
        BulkPanel& ext = data.external;
        ext.gene_ids = genes;
        ext.counts.resize(G, cfg.external_samples);
        const Vector flat = Vector::Ones(K);
        for (Index i = 0; i < cfg.external_samples; ++i) {
            ext.sample_ids.push_back(padded("ext", i, cfg.external_samples));
            const Vector p = rng.dirichlet(flat);
            const Matrix x = draw_expression(rng, signature, cfg.bandwidth, v);
            ext.counts.col(i) = draw_bulk(rng, x, p, data.truth.lambda, library).y;
        }
    }
    return data;
}

DependenceSet true_dependence(const SimConfig& cfg) {
    return banded_dependence(cfg.genes, cfg.bandwidth, cfg.max_true_pairs);
}

nlohmann::json truth_to_json(const SimDataset& data, const SimConfig& cfg) {
    nlohmann::json j;
    j["config"] = to_json(cfg);
    j["sample_ids"] = data.bulk.sample_ids;
    j["cell_types"] = data.reference.cell_types;
    j["proportions"] = to_json(data.truth.proportions);
    j["beta_true"] = to_json(data.truth.beta_true);
    j["groups"] = data.truth.groups;
    j["library"] = to_json(data.truth.library);
    j["lambda"] = to_json(data.truth.lambda);
    j["signature"] = {{"u", to_json(data.truth.signature.u)}, {"sigma2", to_json(data.truth.signature.sigma2)}};
    j["true_dependence"] = {{"rule", "|g1 - g2| < bandwidth"}, {"bandwidth", cfg.bandwidth}};
    return j;
}

RmseReport run_rmse(const SimConfig& cfg_in, const std::vector<WeightMode>& methods, Index replicates,
                    std::uint64_t replicate_offset) {
    if (replicates < 1) throw ParameterError("at least one replicate is required");
    if (methods.empty()) throw ParameterError("at least one weight mode is required");
    for (WeightMode m : methods)
        if (m == WeightMode::marker) throw ParameterError("marker weights are not available in simulations");
    SimConfig cfg = cfg_in;
    cfg.external_samples = 0;
    cfg.validate();
    const SimSignature signature = make_signature(cfg);
    const std::size_t R = static_cast<std::size_t>(replicates);
    const std::size_t P = methods.size();
    std::vector<double> rmse(R * P, std::numeric_limits<double>::quiet_NaN());
    std::vector<std::string> errors(R * P);
    std::vector<double> residual(R, 0.0);
    std::vector<double> max_err(R, 0.0);

#pragma omp parallel for schedule(dynamic)
    for (Index r = 0; r < replicates; ++r) {
        const auto ru = static_cast<std::size_t>(r);
        const SimDataset data = simulate_dataset(cfg, signature, replicate_offset + static_cast<std::uint64_t>(r));
        SignatureEstimate sig;
        try {
            sig = estimate_reference(data.reference, cfg.individuals < 2);
        } catch (const Error& e) {
            for (std::size_t m = 0; m < P; ++m) errors[ru * P + m] = e.what();
            continue;
        }
        for (std::size_t m = 0; m < P; ++m) {
            try {
                GeneWeights w = compute_weights(sig, WeightChoice{methods[m], {}});
                DeconvOptions opt;
                opt.inference = false;
                Deconvolver dec(sig, w, DependenceSet{}, opt);
                double ss = 0.0;
                for (Index i = 0; i < cfg.samples; ++i) {
                    const Vector y = data.bulk.counts.col(i);
                    const DeconvolutionFit fit = dec.fit(y);
                    const Vector err = fit.p_hat - data.truth.proportions.row(i).transpose();
                    ss += err.squaredNorm();
                    max_err[ru] = std::max(max_err[ru], err.cwiseAbs().maxCoeff());
                    residual[ru] = std::max(residual[ru], scaled_score_residual(y, sig, dec.weights(), fit.beta_hat));
                }
                rmse[ru * P + m] = std::sqrt(ss / static_cast<double>(cfg.samples * cfg.types));
            } catch (const Error& e) {
                errors[ru * P + m] = e.what();
            }
        }
    }

    RmseReport report;
    report.replicates = replicates;
    for (std::size_t m = 0; m < P; ++m) {
        RmseMethod method;
        method.name = mode_name(methods[m]);
        for (std::size_t r = 0; r < R; ++r) {
            method.per_replicate.push_back(rmse[r * P + m]);
            if (!errors[r * P + m].empty()) {
                ++method.failures;
                method.errors.push_back(errors[r * P + m]);
            }
        }
        method.mean = mean_of(method.per_replicate);
        report.methods.push_back(std::move(method));
    }
    for (std::size_t r = 0; r < R; ++r) {
        report.max_score_residual = std::max(report.max_score_residual, residual[r]);
        report.max_abs_error = std::max(report.max_abs_error, max_err[r]);
    }
    return report;
}

CoverageReport run_coverage(const SimConfig& cfg_in, const CoverageOptions& options, Index replicates,
                            std::uint64_t replicate_offset) {
    if (replicates < 1) throw ParameterError("at least one replicate is required");
    if (!(options.level > 0.0 && options.level < 1.0)) throw ParameterError("level must lie in (0, 1)");
    if (options.weights == WeightMode::marker) throw ParameterError("marker weights are not available in simulations");
    SimConfig cfg = cfg_in;
    if (options.dep != DepSource::estimated) cfg.external_samples = 0;
    cfg.validate();
    const SimSignature signature = make_signature(cfg);
    const DependenceSet truth = options.dep == DepSource::truth ? true_dependence(cfg) : DependenceSet{};
    const Index K = cfg.types;
    const std::size_t R = static_cast<std::size_t>(replicates);

    std::vector<double> coverage(R, std::numeric_limits<double>::quiet_NaN());
    std::vector<std::string> errors(R);
    std::vector<Vector> covered_by_type(R, Vector::Zero(K));
    std::vector<double> trace(R, 0.0), pairs(R, 0.0), residual(R, 0.0);
    std::vector<char> fallback(R, 0);

#pragma omp parallel for schedule(dynamic)
    for (Index r = 0; r < replicates; ++r) {
        const auto ru = static_cast<std::size_t>(r);
        try {
            const SimDataset data = simulate_dataset(cfg, signature, replicate_offset + static_cast<std::uint64_t>(r));
            const SignatureEstimate sig = estimate_reference(data.reference);
            GeneWeights w = compute_weights(sig, WeightChoice{options.weights, {}});
            DependenceSet dep = dependence_for(cfg, data, options, truth);
            pairs[ru] = static_cast<double>(dep.size());
            DeconvOptions opt;
            opt.cv = options.cv;
            opt.cv_folds = options.cv_folds;
            opt.seed = cfg.seed;
            opt.level = options.level;
            opt.basis = options.basis;
            Deconvolver dec(sig, std::move(w), std::move(dep), opt);
            if (options.cv && !dec.cv_feasible()) fallback[ru] = 1;
            Index hits = 0;
            for (Index i = 0; i < cfg.samples; ++i) {
                const Vector y = data.bulk.counts.col(i);
                DeconvolutionFit fit = dec.fit(y);
                residual[ru] = std::max(residual[ru], scaled_score_residual(y, sig, dec.weights(), fit.beta_hat));
                if (options.oracle_sigma) {
                    const Vector& basis =
                        options.basis == InferenceBasis::beta_star ? fit.beta_star : fit.beta_hat;
                    fit.sigma_hat = *options.oracle_sigma;
                    fit.cov_p = proportion_covariance(dec.omega(), fit.sigma_hat, basis, sig.genes());
                    Matrix c = fit.cov_p;
                    for (Index k = 0; k < K; ++k) c(k, k) = std::max(0.0, c(k, k));
                    fit.intervals = confidence_intervals(fit.p_hat, c, options.level);
                }
                trace[ru] += fit.sigma_hat.trace() / static_cast<double>(cfg.samples);
                for (Index k = 0; k < K; ++k) {
                    const double truth_p = data.truth.proportions(i, k);
                    const Interval& iv = fit.intervals[static_cast<std::size_t>(k)];
                    if (truth_p >= iv.lower && truth_p <= iv.upper) {
                        ++hits;
                        covered_by_type[ru](k) += 1.0;
                    }
                }
            }
            coverage[ru] = static_cast<double>(hits) / static_cast<double>(cfg.samples * K);
        } catch (const Error& e) {
            errors[ru] = e.what();
        }
    }

    CoverageReport report;
    report.per_replicate = coverage;
    Index ok = 0;
    report.mean = mean_of(coverage, &ok);
    double ss = 0.0;
    report.per_type = Vector::Zero(K);
    for (std::size_t r = 0; r < R; ++r) {
        if (!errors[r].empty()) {
            ++report.failures;
            report.errors.push_back(errors[r]);
            continue;
        }
        ss += (coverage[r] - report.mean) * (coverage[r] - report.mean);
        report.per_type += covered_by_type[r];
        report.mean_sigma_trace += trace[r];
        report.mean_dep_pairs += pairs[r];
        report.max_score_residual = std::max(report.max_score_residual, residual[r]);
        report.cv_fallbacks += fallback[r];
    }
    if (ok > 0) {
        report.per_type /= static_cast<double>(ok * cfg.samples);
        report.mean_sigma_trace /= static_cast<double>(ok);
        report.mean_dep_pairs /= static_cast<double>(ok);
    }
    report.sd = ok > 1 ? std::sqrt(ss / static_cast<double>(ok - 1)) : 0.0;
    return report;
}

SandwichCheck run_sandwich_check(const SimConfig& cfg_in, const CoverageOptions& options, Index replicates,
                                 std::uint64_t replicate_offset) {
    if (replicates < 2) throw ParameterError("at least two replicates are required");
    SimConfig cfg = cfg_in;
    if (!cfg.fixed_proportions) throw ParameterError("the sandwich check needs fixed proportions");
    if (options.dep != DepSource::estimated) cfg.external_samples = 0;
    cfg.validate();
    const SimSignature signature = make_signature(cfg);
    const DependenceSet truth = options.dep == DepSource::truth ? true_dependence(cfg) : DependenceSet{};
    const Index K = cfg.types;
    const Index N = cfg.samples;
    const std::size_t R = static_cast<std::size_t>(replicates);

    std::vector<Matrix> p_hat(R), scores(R);
    std::vector<Matrix> cov_sum(R, Matrix::Zero(K, K)), sigma_sum(R, Matrix::Zero(K, K));
    std::vector<double> residual(R, 0.0);
    std::vector<char> failed(R, 0);

#pragma omp parallel for schedule(dynamic)
    for (Index r = 0; r < replicates; ++r) {
        const auto ru = static_cast<std::size_t>(r);
        try {
            const SimDataset data = simulate_dataset(cfg, signature, replicate_offset + static_cast<std::uint64_t>(r));
            const SignatureEstimate sig = estimate_reference(data.reference);
            GeneWeights w = compute_weights(sig, WeightChoice{options.weights, {}});
            DependenceSet dep = dependence_for(cfg, data, options, truth);
            DeconvOptions opt;
            opt.cv = options.cv;
            opt.cv_folds = options.cv_folds;
            opt.seed = cfg.seed;
            opt.basis = options.basis;
            Deconvolver dec(sig, std::move(w), std::move(dep), opt);
            p_hat[ru].resize(N, K);
            scores[ru].resize(N, K);
            const double root_g = std::sqrt(static_cast<double>(cfg.genes));
            for (Index i = 0; i < N; ++i) {
                const Vector y = data.bulk.counts.col(i);
                const DeconvolutionFit fit = dec.fit(y);
                residual[ru] = std::max(residual[ru], scaled_score_residual(y, sig, dec.weights(), fit.beta_hat));
                p_hat[ru].row(i) = fit.p_hat.transpose();
                cov_sum[ru] += fit.cov_p;
                sigma_sum[ru] += fit.sigma_hat;
                const Vector beta = data.truth.beta_true.row(i).transpose();
                scores[ru].row(i) = score_terms(y, sig, dec.weights(), beta).colwise().sum() / root_g;
            }
        } catch (const Error&) {
            failed[ru] = 1;
        }
    }

    SandwichCheck out;
    out.mean_cov_p = Matrix::Zero(K, K);
    out.mean_sigma = Matrix::Zero(K, K);
    std::vector<Vector> ps, phis;
    for (std::size_t r = 0; r < R; ++r) {
        if (failed[r]) {
            ++out.failures;
            continue;
        }
        out.mean_cov_p += cov_sum[r];
        out.mean_sigma += sigma_sum[r];
        out.max_score_residual = std::max(out.max_score_residual, residual[r]);
        for (Index i = 0; i < N; ++i) {
            ps.push_back(p_hat[r].row(i).transpose());
            phis.push_back(scores[r].row(i).transpose());
        }
    }
    out.fits = static_cast<Index>(ps.size());
    if (out.fits < 2) throw DegenerateError("too few successful fits for the sandwich check");
    out.mean_cov_p /= static_cast<double>(out.fits);
    out.mean_sigma /= static_cast<double>(out.fits);
    auto covariance = [](const std::vector<Vector>& xs) {
        Vector mean = Vector::Zero(xs.front().size());
        for (const auto& x : xs) mean += x;
        mean /= static_cast<double>(xs.size());
        Matrix c = Matrix::Zero(mean.size(), mean.size());
        for (const auto& x : xs) c += (x - mean) * (x - mean).transpose();
        return Matrix(c / static_cast<double>(xs.size() - 1));
    };
    out.empirical_cov_p = covariance(ps);
    out.oracle_sigma = covariance(phis);
    out.relative_frobenius = (out.mean_cov_p - out.empirical_cov_p).norm() / out.empirical_cov_p.norm();
    out.sigma_relative_frobenius = (out.mean_sigma - out.oracle_sigma).norm() / out.oracle_sigma.norm();
    return out;
}

DownstreamCoverage run_downstream_coverage(const SimConfig& cfg_in, WeightMode weights, Index replicates, double level,
                                           std::uint64_t replicate_offset) {
    if (replicates < 1) throw ParameterError("at least one replicate is required");
    SimConfig cfg = cfg_in;
    if (!cfg.group2_base) throw ParameterError("downstream coverage needs a two-group design (group2_base)");
    cfg.external_samples = 0;
    cfg.validate();
    const SimSignature signature = make_signature(cfg);
    const Vector difference = *cfg.group2_base - cfg.dirichlet_base;
    const Index K = cfg.types;
    const std::size_t R = static_cast<std::size_t>(replicates);
    std::vector<double> coverage(R, std::numeric_limits<double>::quiet_NaN());
    std::vector<double> residual(R, 0.0), warned(R, 0.0);

#pragma omp parallel for schedule(dynamic)
    for (Index r = 0; r < replicates; ++r) {
        const auto ru = static_cast<std::size_t>(r);
        try {
            const SimDataset data = simulate_dataset(cfg, signature, replicate_offset + static_cast<std::uint64_t>(r));
            const SignatureEstimate sig = estimate_reference(data.reference);
            DeconvOptions opt;
            opt.inference = false;
            Deconvolver dec(sig, compute_weights(sig, WeightChoice{weights, {}}), DependenceSet{}, opt);
            Matrix p(cfg.samples, K);
            Matrix z(cfg.samples, 1);
            for (Index i = 0; i < cfg.samples; ++i) {
                const Vector y = data.bulk.counts.col(i);
                const DeconvolutionFit fit = dec.fit(y);
                residual[ru] = std::max(residual[ru], scaled_score_residual(y, sig, dec.weights(), fit.beta_hat));
                p.row(i) = fit.p_hat.transpose();
                z(i, 0) = data.truth.groups[static_cast<std::size_t>(i)];
            }
            DownstreamFit fit = fit_regression(p, z);
            regression_inference(fit, level, cfg.genes, cfg.samples);
            Index hits = 0;
            for (Index k = 0; k < K; ++k)
                if (difference(k) >= fit.lower(0, k) && difference(k) <= fit.upper(0, k)) ++hits;
            coverage[ru] = static_cast<double>(hits) / static_cast<double>(K);
            warned[ru] = fit.regime_warning ? 1.0 : 0.0;
        } catch (const Error&) {
        }
    }

    DownstreamCoverage out;
    out.per_replicate = coverage;
    Index ok = 0;
    out.mean = mean_of(coverage, &ok);
    out.failures = replicates - ok;
    for (std::size_t r = 0; r < R; ++r) {
        if (!std::isfinite(coverage[r])) continue;
        out.max_score_residual = std::max(out.max_score_residual, residual[r]);
        out.mean_regime_warning += warned[r] / static_cast<double>(ok);
    }
    return out;
}

nlohmann::json to_json(const RmseReport& report) {
    nlohmann::json j;
    j["replicates"] = report.replicates;
    j["max_scaled_score_residual"] = report.max_score_residual;
    for (const auto& m : report.methods) {
        j["methods"][m.name] = {{"mean_rmse", m.mean},
                                {"per_replicate", m.per_replicate},
                                {"failures", m.failures},
                                {"errors", m.errors}};
    }
    return j;
}

nlohmann::json to_json(const CoverageReport& report) {
    return {{"mean", report.mean},
            {"sd", report.sd},
            {"per_replicate", report.per_replicate},
            {"per_type", to_json(report.per_type)},
            {"failures", report.failures},
            {"errors", report.errors},
            {"mean_sigma_trace", report.mean_sigma_trace},
            {"mean_dependence_pairs", report.mean_dep_pairs},
            {"cv_fallbacks", report.cv_fallbacks},
            {"max_scaled_score_residual", report.max_score_residual}};
}

}  // namespace mead
