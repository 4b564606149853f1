#ifndef MEAD_SIM_HPP
#define MEAD_SIM_HPP

#include "mead/core.hpp"
#include "mead/deconv.hpp"
#include "mead/pipeline.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mead {

/**
 * Parameters of the synthetic generative process.
 *
 * Per-individual expressions follow a lognormal law with mean U and a banded log-scale
 * correlation max(1 - |g1 - g2| / d, 0). Reference means are Gamma around X, bulk counts
 * Poisson with a cross-platform bias per gene.
 */
struct SimConfig {
    Index genes = 2000;
    Index types = 4;
    Index samples = 20;        // bulk individuals N
    Index individuals = 10;    // reference individuals M
    Index bandwidth = 50;
    double gamma_shape = 5.0;
    double library_per_gene = 500.0;
    double lambda_mean = 1.0;
    double lambda_sd = 0.1;
    Vector dirichlet_base = (Vector(4) << 0.5, 0.3, 0.1, 0.1).finished();
    double dirichlet_scale = 10.0;
    std::optional<Vector> group2_base;  // second group for two-group designs
    Index group1_size = -1;             // default: half of the samples
    bool fixed_proportions = false;     // every individual gets its group base exactly
    std::uint64_t seed = 1;

    std::string signature_source = "synthetic";  // or "file"
    std::string signature_file;
    double signature_log_sd = 0.6;   // spread of per-gene expression levels (log scale)
    double signature_type_sd = 0.3;  // spread of cell-type contrasts within a gene (log scale)
    double sigma2_min = 0.1;         // log-uniform range of per-gene log-scale variances
    double sigma2_max = 1.0;
    double variance_scale = 1.0;     // multiplies every noise variance; small values approach noiseless data
    Index external_samples = 100;    // independent panel for dependence estimation, 0 to skip
    std::size_t max_true_pairs = 0;  // cap on the true dependence set, 0 for none

    void validate() const;
};

/// Full-scale design: G = 9496, N = 50, M = 10, bandwidth 500; other fields keep their defaults.
SimConfig full_scale_config();

/// Keys override the defaults, or the full-scale design when "preset" is "full".
SimConfig sim_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SimConfig& cfg);
SimConfig load_sim_config(const std::string& path);

/// Generative signature: U (G x K, grand mean 1 for synthetic draws) and log-scale variances.
struct SimSignature {
    Matrix u;
    Matrix sigma2;
};

/// Synthetic signature (seeded independently of replicates) or the one named by the config file.
SimSignature make_signature(const SimConfig& cfg);

void save_signature(const SimSignature& sig, const std::string& path);
SimSignature load_signature(const std::string& path);

struct SimTruth {
    Matrix proportions;   // N x K
    Vector lambda;        // G
    Vector library;       // N
    Matrix beta_true;     // N x K: coefficients on the population signature scale
    std::vector<int> groups;
    std::vector<Matrix> bulk_expression;  // per bulk individual, G x K (only when requested)
    SimSignature signature;
};

struct SimDataset {
    BulkPanel bulk;
    ReferencePanel reference;
    BulkPanel external;   // empty when external_samples = 0
    SimTruth truth;
};

/// Replicate r draws from stream (seed, r + 1). keep_expressions retains per-individual X.
SimDataset simulate_dataset(const SimConfig& cfg, std::uint64_t replicate = 0, bool keep_expressions = false);

/// Same as simulate_dataset but reuses an already generated signature.
SimDataset simulate_dataset(const SimConfig& cfg, const SimSignature& signature, std::uint64_t replicate,
                            bool keep_expressions = false);

/// Pairs within the generative bandwidth.
DependenceSet true_dependence(const SimConfig& cfg);

nlohmann::json truth_to_json(const SimDataset& data, const SimConfig& cfg);

// ---- benchmarks ----

struct RmseMethod {
    std::string name;
    std::vector<double> per_replicate;  // NaN when the replicate failed
    double mean = 0.0;
    Index failures = 0;
    std::vector<std::string> errors;
};

struct RmseReport {
    std::vector<RmseMethod> methods;
    Index replicates = 0;
    double max_score_residual = 0.0;  // scaled first-order condition over all fits
    double max_abs_error = 0.0;       // largest |p_hat - p| over all fits and methods
};

/// RMSE of p_hat over individuals and types, per replicate and weight mode.
RmseReport run_rmse(const SimConfig& cfg, const std::vector<WeightMode>& methods, Index replicates,
                    std::uint64_t replicate_offset = 0);

enum class DepSource { none, truth, estimated };

struct CoverageOptions {
    DepSource dep = DepSource::truth;
    double alpha = 0.1;  // estimated mode
    bool cv = true;
    int cv_folds = 10;
    WeightMode weights = WeightMode::eb;
    InferenceBasis basis = InferenceBasis::beta_star;
    double level = 0.95;
    std::optional<Matrix> oracle_sigma;  // replaces the sandwich when set (fixed-proportion designs)
};

struct CoverageReport {
    std::vector<double> per_replicate;
    double mean = 0.0;
    double sd = 0.0;
    Index failures = 0;
    std::vector<std::string> errors;
    Vector per_type;               // coverage by cell type, pooled over replicates
    double mean_sigma_trace = 0.0; // average trace of the sigma used for intervals
    double mean_dep_pairs = 0.0;
    double max_score_residual = 0.0;
    Index cv_fallbacks = 0;
};

CoverageReport run_coverage(const SimConfig& cfg, const CoverageOptions& options, Index replicates,
                            std::uint64_t replicate_offset = 0);

/// Monte-Carlo comparison of the plug-in proportion covariance with the spread of p_hat.
struct SandwichCheck {
    Matrix mean_cov_p;        // average estimated cov_p
    Matrix empirical_cov_p;   // covariance of p_hat - p across replicates and individuals
    double relative_frobenius = 0.0;
    Matrix oracle_sigma;      // covariance of sum_g phi_g(beta_true) / sqrt(G)
    Matrix mean_sigma;        // average estimated sigma
    double sigma_relative_frobenius = 0.0;
    Index fits = 0;
    Index failures = 0;
    double max_score_residual = 0.0;
};

/// Requires fixed_proportions; uses the true dependence set and the given options.
SandwichCheck run_sandwich_check(const SimConfig& cfg, const CoverageOptions& options, Index replicates,
                                 std::uint64_t replicate_offset = 0);

struct DownstreamCoverage {
    std::vector<double> per_replicate;  // fraction of cell types whose interval covers the true difference
    double mean = 0.0;
    Index failures = 0;
    double max_score_residual = 0.0;
    double mean_regime_warning = 0.0;
};

/// Two-group design: regress p_hat on the group indicator and check the difference intervals.
DownstreamCoverage run_downstream_coverage(const SimConfig& cfg, WeightMode weights, Index replicates, double level,
                                           std::uint64_t replicate_offset = 0);

nlohmann::json to_json(const RmseReport& report);
nlohmann::json to_json(const CoverageReport& report);

}  // namespace mead

#endif  // MEAD_SIM_HPP
