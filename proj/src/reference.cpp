#include "mead/reference.hpp"


namespace mead {

Vector estimate_scaling(const ReferencePanel& ref) {
    const Index M = ref.individuals();
    Vector gamma(M);
    for (Index j = 0; j < M; ++j) {
        const Matrix& m = ref.means[static_cast<std::size_t>(j)];
        gamma(j) = m.sum() / static_cast<double>(m.size());
        if (!(gamma(j) > 0.0)) {
            throw DegenerateError("reference individual '" + ref.individual_ids[static_cast<std::size_t>(j)] +
                                  "' has zero total expression; its scaling factor is undefined");
        }
    }
    return gamma;
}

Matrix estimate_signature(const ReferencePanel& ref, const Vector& gamma_hat) {
    const Index M = ref.individuals();
    if (gamma_hat.size() != M) throw ParameterError("estimate_signature: one scaling factor per individual required");
    if ((gamma_hat.array() <= 0.0).any()) throw ParameterError("estimate_signature: scaling factors must be positive");
    Matrix u = Matrix::Zero(ref.genes(), ref.types());
    for (Index j = 0; j < M; ++j) u += ref.means[static_cast<std::size_t>(j)] / gamma_hat(j);
    return u / static_cast<double>(M);
}

std::vector<Matrix> estimate_covariances(const ReferencePanel& ref, const Vector& gamma_hat, const Matrix& u_hat) {
    const Index M = ref.individuals();
    if (M < 2) throw DegenerateError("covariance estimation needs at least two reference individuals");
    if (gamma_hat.size() != M) throw ParameterError("estimate_covariances: one scaling factor per individual required");
    const Index G = u_hat.rows();
    const Index K = u_hat.cols();
    const double divisor = static_cast<double>(M) * static_cast<double>(M - 1);

    std::vector<Matrix> v(static_cast<std::size_t>(G), Matrix::Zero(K, K));
#pragma omp parallel for schedule(static)
    for (Index g = 0; g < G; ++g) {
        Matrix& vg = v[static_cast<std::size_t>(g)];
        for (Index j = 0; j < M; ++j) {
            Vector dev = ref.means[static_cast<std::size_t>(j)].row(g).transpose() / gamma_hat(j) -
                         u_hat.row(g).transpose();
            vg.noalias() += dev * dev.transpose();
        }
        vg /= divisor;
    }
    return v;
}

SignatureEstimate estimate_reference(const ReferencePanel& ref, bool allow_single_individual) {
    validate(ref, allow_single_individual);
    SignatureEstimate sig;
    sig.gene_ids = ref.gene_ids;
    sig.cell_types = ref.cell_types;
    sig.gamma_hat = estimate_scaling(ref);
    sig.u_hat = estimate_signature(ref, sig.gamma_hat);
    sig.m = ref.individuals();
    if (sig.m >= 2) {
        sig.v_hat = estimate_covariances(ref, sig.gamma_hat, sig.u_hat);
    } else {
        sig.v_hat.assign(static_cast<std::size_t>(ref.genes()), Matrix::Zero(ref.types(), ref.types()));
    }
    sig.zero_signal.resize(static_cast<std::size_t>(ref.genes()));
    for (Index g = 0; g < ref.genes(); ++g)
        sig.zero_signal[static_cast<std::size_t>(g)] = (sig.u_hat.row(g).array() == 0.0).all();
    return sig;
}

}  // namespace mead
