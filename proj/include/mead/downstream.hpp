#ifndef MEAD_DOWNSTREAM_HPP
#define MEAD_DOWNSTREAM_HPP

#include "mead/core.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace mead {

struct WaldTest {
    double statistic = 0.0;
    int dof = 0;
    double p_value = 1.0;
    bool reduced_rank = false;        // residual covariance singular; test on its range
    bool dropped_last_type = false;   // proportions sum to one, last column left out
};

/**
 * Regression of estimated proportions on centered covariates: p_i = p0 + A' z_i + e_i.
 *
 * a_hat is S x K, residuals N x K. Inference fields are filled by regression_inference().
 */
struct DownstreamFit {
    std::vector<std::string> covariates;
    std::vector<std::string> cell_types;
    Matrix a_hat;
    Vector p0_hat;
    Matrix resid_cov;
    Matrix residuals;
    Matrix centered_z;
    Matrix ztz_inverse;
    Vector z_mean;

    Matrix se;
    Matrix lower;
    Matrix upper;
    double level = 0.95;
    WaldTest global_wald;
    bool regime_warning = false;
    std::string warning;
};

/// Point estimates. p_hats is N x K; z is N x S (uncentered). Requires N > S + 1.
DownstreamFit fit_regression(const Matrix& p_hats, const Matrix& z);

/// Standard errors, t intervals, the global Wald test and the regime diagnostic.
void regression_inference(DownstreamFit& fit, double level, Index genes, Index samples);

nlohmann::json to_json(const DownstreamFit& fit);

/// Flat table `covariate cell_type estimate se lower upper`.
void save_downstream_tsv(const DownstreamFit& fit, const std::string& path);

}  // namespace mead

#endif  // MEAD_DOWNSTREAM_HPP
