#include "mead/pipeline.hpp"
#include "mead/deconv.hpp"

#include <memory>

namespace mead {

WeightChoice parse_weight_choice(const std::string& text) {
    WeightChoice choice;
    if (text == "eb") {
        choice.mode = WeightMode::eb;
    } else if (text == "equal") {
        choice.mode = WeightMode::equal;
    } else if (text.rfind("marker:", 0) == 0 && text.size() > 7) {
        choice.mode = WeightMode::marker;
        choice.markers = load_marker_list(text.substr(7));
    } else {
        throw ParameterError("unknown weight mode '" + text + "' (expected eb, equal or marker:FILE)");
    }
    return choice;
}

GeneWeights compute_weights(const SignatureEstimate& sig, const WeightChoice& choice, EbFit* eb) {
    const Index G = sig.genes();
    switch (choice.mode) {
        case WeightMode::equal: return equal_weights(G, sig.zero_signal);
        case WeightMode::marker: return marker_weights(sig.gene_ids, choice.markers);
        case WeightMode::eb: break;
    }
    if (sig.m < 2) throw DegenerateError("shrinkage weights need at least two reference individuals");
    const Vector raw = raw_variances(sig.v_hat);
    auto exclude = std::make_unique<bool[]>(static_cast<std::size_t>(G));
    for (Index g = 0; g < G; ++g) exclude[static_cast<std::size_t>(g)] = sig.zero_signal[static_cast<std::size_t>(g)];
    EbFit fit = eb_shrink(raw, static_cast<int>(sig.m - 1), std::span<const bool>(exclude.get(), static_cast<std::size_t>(G)));
    GeneWeights w = make_weights(fit.shrunk, sig.zero_signal);
    w.raw_s2 = raw;
    w.df = fit.df;
    if (eb) *eb = std::move(fit);
    return w;
}

double scaled_score_residual(const Vector& y, const SignatureEstimate& sig, const GeneWeights& w,
                             const Vector& beta) {
    const double scale = sig.u_hat.norm() * y.norm();
    if (!(scale > 0.0)) return 0.0;
    return score_terms(y, sig, w, beta).colwise().sum().norm() / scale;
}

}  // namespace mead
