#ifndef MEAD_WEIGHTS_HPP
#define MEAD_WEIGHTS_HPP

#include "mead/core.hpp"

#include <span>
#include <string>
#include <vector>

namespace mead {

enum class WeightMode { eb, equal, marker };

/**
 * Fitted inverse-gamma mixture prior for per-gene variances, plus the posterior means.
 *
 * Component k is InvGamma(shape[k], scale[k]); all components share the same mode.
 */
struct EbFit {
    Vector shrunk;
    Vector shape;
    Vector scale;
    Vector pi;
    double prior_mode = 0.0;
    int df = 0;
    std::vector<double> loglik_trace;
    int iterations = 0;
    bool converged = false;
    double zero_replacement = 0.0;
    Index zero_count = 0;

    /// Mean of the fitted mixture prior.
    double prior_mean() const;
    /// Posterior mean of the variance given an observed sample variance under this prior.
    double posterior_mean(double s2) const;
};

struct GeneWeights {
    WeightMode mode = WeightMode::eb;
    Vector raw_s2;
    Vector shrunk_s2;
    Vector w;
    int df = 0;
};

/// Quadratic form 1' V_g 1 for each gene.
Vector raw_variances(const std::vector<Matrix>& v_hat);

/**
 * Empirical-Bayes shrinkage of sample variances with df degrees of freedom.
 *
 * Genes marked in `exclude` (if non-empty) are left out of the prior fit but still
 * receive a posterior mean. Throws DegenerateError when fewer than two included genes
 * have a positive variance.
 */
EbFit eb_shrink(const Vector& raw_s2, int df, std::span<const bool> exclude = {});

/// w = 1 / shrunk_s2, zero for flagged genes.
GeneWeights make_weights(const Vector& shrunk_s2, const std::vector<bool>& flags);

/// All ones, zero for flagged genes.
GeneWeights equal_weights(Index genes, const std::vector<bool>& flags = {});

/// Indicator of membership in `markers`; throws ParameterError when no marker is in `gene_ids`.
GeneWeights marker_weights(const std::vector<std::string>& gene_ids, const std::vector<std::string>& markers);

/// Read a marker list: one gene id per line (first tab-separated field), '#' comments allowed.
std::vector<std::string> load_marker_list(const std::string& path);

void save_weights(const std::vector<std::string>& gene_ids, const GeneWeights& weights, const std::string& path);

}  // namespace mead

#endif  // MEAD_WEIGHTS_HPP
