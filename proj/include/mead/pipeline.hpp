#ifndef MEAD_PIPELINE_HPP
#define MEAD_PIPELINE_HPP

#include "mead/core.hpp"
#include "mead/reference.hpp"
#include "mead/weights.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mead {

struct WeightChoice {
    WeightMode mode = WeightMode::eb;
    std::vector<std::string> markers;  // marker mode only
};

/// Parse "eb", "equal" or "marker:FILE".
WeightChoice parse_weight_choice(const std::string& text);

/**
 * Gene weights for a signature estimate.
 *
 * Genes with an all-zero signature row are left out of the shrinkage prior and get weight zero.
 * When eb is given, the shrinkage fit is copied there.
 */
GeneWeights compute_weights(const SignatureEstimate& sig, const WeightChoice& choice, EbFit* eb = nullptr);

/// ||sum_g phi_g(beta)|| divided by ||U_hat||_F * ||y||; zero when either norm is zero.
double scaled_score_residual(const Vector& y, const SignatureEstimate& sig, const GeneWeights& w,
                             const Vector& beta);

}  // namespace mead

#endif  // MEAD_PIPELINE_HPP
