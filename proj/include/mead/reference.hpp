#ifndef MEAD_REFERENCE_HPP
#define MEAD_REFERENCE_HPP

#include "mead/core.hpp"

#include <vector>

namespace mead {

/**
 * Population signature estimated from a reference panel.
 *
 * u_hat is G x K with rows equal to the scaled per-gene mean vectors. v_hat[g] is the
 * K x K covariance of row g of u_hat (sample covariance divided by M). zero_signal
 * marks genes whose u_hat row is identically zero.
 */
struct SignatureEstimate {
    std::vector<std::string> gene_ids;
    std::vector<std::string> cell_types;
    Vector gamma_hat;
    Matrix u_hat;
    std::vector<Matrix> v_hat;
    std::vector<bool> zero_signal;
    Index m = 0;

    Index genes() const { return u_hat.rows(); }
    Index types() const { return u_hat.cols(); }
};

/// Per-individual scaling: grand mean of each individual's G x K matrix.
Vector estimate_scaling(const ReferencePanel& ref);

/// Average of the individual matrices after dividing each by its scaling factor.
Matrix estimate_signature(const ReferencePanel& ref, const Vector& gamma_hat);

/// Per-gene covariance of the scaled means, divisor M(M-1). Requires M >= 2.
std::vector<Matrix> estimate_covariances(const ReferencePanel& ref, const Vector& gamma_hat, const Matrix& u_hat);

/**
 * All three estimates in one pass.
 *
 * With allow_single_individual and M = 1 the covariances are zero matrices; point
 * estimation still works but inference and shrinkage weights are unavailable.
 */
SignatureEstimate estimate_reference(const ReferencePanel& ref, bool allow_single_individual = false);

}  // namespace mead

#endif  // MEAD_REFERENCE_HPP
