#ifndef MEAD_DECONV_HPP
#define MEAD_DECONV_HPP

#include "mead/core.hpp"
#include "mead/depnet.hpp"
#include "mead/reference.hpp"
#include "mead/weights.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mead {

/// Which coefficient vector feeds the proportions, the score and the delta method.
enum class InferenceBasis { beta_star, beta_hat };

struct Interval {
    double lower = 0.0;
    double upper = 0.0;
    double lower_raw = 0.0;  // before clipping to [0, 1]
    double upper_raw = 0.0;
};

struct PointFit {
    Vector beta_hat;
    Vector beta_star;
    Vector p_hat;
    bool truncation_active = false;
    bool quadratic_refinement = false;  // false: plain truncation at zero
};

struct DeconvolutionFit {
    Vector beta_hat;
    Vector beta_star;
    Vector p_hat;
    Matrix omega_hat;
    Matrix sigma_hat;
    Matrix cov_p;
    Vector se;
    std::vector<Interval> intervals;
    bool truncation_active = false;
    InferenceBasis inference_basis = InferenceBasis::beta_star;
    bool cv_applied = false;
    std::string warning;
    double sigma_clip = 0.0;     // magnitude of negative eigenvalues removed from sigma
    double score_residual = 0.0; // |sum_g phi_g(beta_hat)|
};

/// U'WU - sum_g w_g V_g, i.e. G times the estimate of Omega.
Matrix adjusted_hessian(const SignatureEstimate& sig, const Vector& w);

/**
 * (U'WU - V) / G.
 *
 * Throws DegenerateError when the reciprocal condition number is below 1e-12.
 */
Matrix omega_hat(const SignatureEstimate& sig, const GeneWeights& w);

/// Reciprocal condition number of a symmetric matrix (smallest over largest |eigenvalue|).
double reciprocal_condition(const Matrix& symmetric);

/// Bias-corrected coefficients, their non-negative refinement and the normalized proportions.
PointFit fit_point(const Vector& y, const SignatureEstimate& sig, const GeneWeights& w);

/// Per-gene summands of the estimating equation at beta; G x K, row g is phi_g.
Matrix score_terms(const Vector& y, const SignatureEstimate& sig, const GeneWeights& w, const Vector& beta);

/// (1/G)(sum_g phi_g phi_g' + sum over dependent pairs of both cross products). Not clipped.
Matrix sandwich_sigma(const Matrix& scores, const DependenceSet& dep, Index genes);

struct PsdClip {
    Matrix matrix;
    double clipped = 0.0;  // sum of |negative eigenvalues|
};

/// Symmetrize and set negative eigenvalues to zero.
PsdClip clip_psd(const Matrix& symmetric);

/**
 * Fold assignment for clustering-based cross-validation.
 *
 * Dependence-connected components are never split while there are at least C of them;
 * otherwise components are split by k-medoids on the 0/1 dissimilarity.
 */
std::vector<int> cv_folds(const DependenceSet& dep, Index genes, int folds, std::uint64_t seed);

/// Leave-fold-out coefficients, one column per fold. Throws DegenerateError when a fold is infeasible.
Matrix cv_fold_betas(const Vector& y, const SignatureEstimate& sig, const GeneWeights& w, const DependenceSet& dep,
                     const std::vector<int>& folds, InferenceBasis basis = InferenceBasis::beta_star);

/// Sandwich with each gene's score evaluated at its own fold's leave-out coefficients.
Matrix cv_corrected_sigma(const Vector& y, const SignatureEstimate& sig, const GeneWeights& w,
                          const DependenceSet& dep, const std::vector<int>& folds,
                          InferenceBasis basis = InferenceBasis::beta_star);

/// Jacobian of x -> x / (1'x): (I - x 1' / 1'x) / 1'x. Entry (i, j) is d f_i / d x_j.
Matrix proportion_jacobian(const Vector& beta);

/// J Omega^-1 Sigma Omega^-1 J' / G.
Matrix proportion_covariance(const Matrix& omega, const Matrix& sigma, const Vector& beta, Index genes);

/// Wald intervals at the given level, clipped to [0, 1].
std::vector<Interval> confidence_intervals(const Vector& p_hat, const Matrix& cov_p, double level);

struct DeconvOptions {
    bool inference = true;
    bool cv = true;
    int cv_folds = 10;
    std::uint64_t seed = 0;
    double level = 0.95;
    InferenceBasis basis = InferenceBasis::beta_star;
};

/**
 * Per-individual fitting against a fixed signature, weights and dependence set.
 *
 * Everything that does not depend on the bulk sample (Omega, folds, leave-out
 * Hessians) is computed once at construction; fit() is const and thread-safe.
 */
class Deconvolver {
public:
    Deconvolver(const SignatureEstimate& sig, GeneWeights weights, DependenceSet dep, DeconvOptions options);

    DeconvolutionFit fit(const Vector& y) const;

    const Matrix& omega() const { return omega_; }
    const std::vector<int>& folds() const { return folds_; }
    bool cv_feasible() const { return cv_feasible_; }
    const std::string& cv_message() const { return cv_message_; }
    const GeneWeights& weights() const { return weights_; }
    const DependenceSet& dependence() const { return dep_; }
    const DeconvOptions& options() const { return options_; }

private:
    struct Fold {
        std::vector<Index> members;
        Matrix hessian;       // leave-out adjusted Hessian
        std::vector<Index> eligible;
    };

    Vector weighted_cross(const Vector& y, const std::vector<Index>* genes) const;

    const SignatureEstimate& sig_;
    GeneWeights weights_;
    DependenceSet dep_;
    DeconvOptions options_;
    Matrix hessian_;
    Matrix omega_;
    bool hessian_pd_ = false;
    std::vector<int> folds_;
    std::vector<Fold> fold_plan_;
    bool cv_feasible_ = false;
    std::string cv_message_;
};

/// Solve the adjusted normal equations and refine to the non-negative orthant.
PointFit solve_point(const Matrix& hessian, const Vector& cross);

}  // namespace mead

#endif  // MEAD_DECONV_HPP
