#include "mead/deconv.hpp"
#include "mead/nnls.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace mead {

namespace {

constexpr double kMinReciprocalCondition = 1e-12;

void check_dimensions(const SignatureEstimate& sig, Index weights) {
    if (weights != sig.genes()) throw ParameterError("weights and signature have different gene counts");
    if (static_cast<Index>(sig.v_hat.size()) != sig.genes())
        throw ParameterError("signature covariances missing or mismatched");
}

Vector linear_solve(const Matrix& a, const Vector& b) {
    Eigen::ColPivHouseholderQR<Matrix> qr(a);
    Vector x = qr.solve(b);
    // One step of iterative refinement keeps the estimating-equation residual at rounding level.
    Vector r = b - a * x;
    x += qr.solve(r);
    return x;
}

bool positive_definite(const Matrix& h) {
    Eigen::LLT<Matrix> llt(h);
    return llt.info() == Eigen::Success;
}

Vector nonnegative_refinement(const Matrix& hessian, const Vector& cross, const Vector& beta, bool pd, bool* used_qp) {
    if ((beta.array() >= 0.0).all()) {
        if (used_qp) *used_qp = false;
        return beta;
    }
    if (pd) {
        if (used_qp) *used_qp = true;
        return nonnegative_quadratic(hessian, cross).x;
    }
    if (used_qp) *used_qp = false;
    return beta.cwiseMax(0.0);
}

double z_multiplier(double level) {
    boost::math::normal standard;
    return boost::math::quantile(standard, 0.5 * (1.0 + level));
}

}  // namespace

Matrix adjusted_hessian(const SignatureEstimate& sig, const Vector& w) {
    check_dimensions(sig, w.size());
    const Index K = sig.types();
    Matrix h = sig.u_hat.transpose() * w.asDiagonal() * sig.u_hat;
    Matrix v = Matrix::Zero(K, K);
    for (Index g = 0; g < sig.genes(); ++g)
        if (w(g) != 0.0) v += w(g) * sig.v_hat[static_cast<std::size_t>(g)];
    h -= v;
    return 0.5 * (h + h.transpose());
}

double reciprocal_condition(const Matrix& symmetric) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetric, Eigen::EigenvaluesOnly);
    const Vector abs = eig.eigenvalues().cwiseAbs();
    const double mx = abs.maxCoeff();
    if (!(mx > 0.0)) return 0.0;
    return abs.minCoeff() / mx;
}

Matrix omega_hat(const SignatureEstimate& sig, const GeneWeights& w) {
    Matrix omega = adjusted_hessian(sig, w.w) / static_cast<double>(sig.genes());
    const double rcond = reciprocal_condition(omega);
    if (rcond < kMinReciprocalCondition) {
        std::ostringstream msg;
        msg << "bias-corrected signature Gram matrix is numerically singular (reciprocal condition " << rcond
            << "); filter genes or merge indistinguishable cell types";
        throw DegenerateError(msg.str());
    }
    return omega;
}

PointFit solve_point(const Matrix& hessian, const Vector& cross) {
    PointFit fit;
    fit.beta_hat = linear_solve(hessian, cross);
    fit.truncation_active = (fit.beta_hat.array() < 0.0).any();
    fit.beta_star = nonnegative_refinement(hessian, cross, fit.beta_hat, positive_definite(hessian),
                                           &fit.quadratic_refinement);
    const double total = fit.beta_star.sum();
    if (!(total > 0.0)) {
        std::ostringstream msg;
        msg << "all coefficients are non-positive after the non-negative refinement; beta_hat = ["
            << fit.beta_hat.transpose() << "]";
        throw DegenerateError(msg.str());
    }
    fit.p_hat = fit.beta_star / total;
    return fit;
}

PointFit fit_point(const Vector& y, const SignatureEstimate& sig, const GeneWeights& w) {
    if (y.size() != sig.genes()) throw ParameterError("bulk sample and signature have different gene counts");
    omega_hat(sig, w);  // singularity check
    const Vector cross = sig.u_hat.transpose() * w.w.cwiseProduct(y);
    return solve_point(adjusted_hessian(sig, w.w), cross);
}

Matrix score_terms(const Vector& y, const SignatureEstimate& sig, const GeneWeights& w, const Vector& beta) {
    check_dimensions(sig, w.w.size());
    const Index G = sig.genes();
    // phi_g = w_g (mu_g (y_g - mu_g' beta) + V_g beta)
    const Vector resid = w.w.cwiseProduct(y - sig.u_hat * beta);
    Matrix phi = resid.asDiagonal() * sig.u_hat;
    for (Index g = 0; g < G; ++g)
        if (w.w(g) != 0.0) phi.row(g) += w.w(g) * (sig.v_hat[static_cast<std::size_t>(g)] * beta).transpose();
    return phi;
}

Matrix sandwich_sigma(const Matrix& scores, const DependenceSet& dep, Index genes) {
    const Index K = scores.cols();
    Matrix cross = Matrix::Zero(K, K);
    for (const auto& [a, b] : dep.pairs) {
        if (a < 0 || b < 0 || a >= scores.rows() || b >= scores.rows())
            throw ParameterError("dependence pair index out of range");
        cross.noalias() += scores.row(a).transpose() * scores.row(b);
    }
    Matrix sigma = scores.transpose() * scores + cross + cross.transpose();
    return 0.5 * (sigma + sigma.transpose()) / static_cast<double>(genes);
}

PsdClip clip_psd(const Matrix& symmetric) {
    Matrix sym = 0.5 * (symmetric + symmetric.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
    Vector values = eig.eigenvalues();
    PsdClip out;
    if ((values.array() >= 0.0).all()) {
        out.matrix = sym;
        return out;
    }
    for (Index k = 0; k < values.size(); ++k) {
        if (values(k) < 0.0) {
            out.clipped += -values(k);
            values(k) = 0.0;
        }
    }
    out.matrix = eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
    out.matrix = 0.5 * (out.matrix + out.matrix.transpose());
    return out;
}

Matrix cv_fold_betas(const Vector& y, const SignatureEstimate& sig, const GeneWeights& w, const DependenceSet& dep,
                     const std::vector<int>& folds, InferenceBasis basis) {
    const Index G = sig.genes();
    const Index K = sig.types();
    if (static_cast<Index>(folds.size()) != G) throw ParameterError("fold assignment has the wrong length");
    const int C = folds.empty() ? 0 : *std::max_element(folds.begin(), folds.end()) + 1;
    const auto adj = adjacency(dep, G);
    Matrix betas(K, C);
    std::vector<char> excluded(static_cast<std::size_t>(G));
    for (int s = 0; s < C; ++s) {
        std::fill(excluded.begin(), excluded.end(), 0);
        for (Index g = 0; g < G; ++g) {
            if (folds[static_cast<std::size_t>(g)] != s) continue;
            excluded[static_cast<std::size_t>(g)] = 1;
            for (int n : adj[static_cast<std::size_t>(g)]) excluded[static_cast<std::size_t>(n)] = 1;
        }
        Vector wk = w.w;
        for (Index g = 0; g < G; ++g)
            if (excluded[static_cast<std::size_t>(g)]) wk(g) = 0.0;
        const Matrix h = adjusted_hessian(sig, wk);
        if (!(wk.array() != 0.0).any() || reciprocal_condition(h) < kMinReciprocalCondition) {
            throw DegenerateError("cross-validation fold " + std::to_string(s) +
                                  " leaves too few eligible genes for an invertible leave-out fit");
        }
        const Vector cross = sig.u_hat.transpose() * wk.cwiseProduct(y);
        Vector beta = linear_solve(h, cross);
        if (basis == InferenceBasis::beta_star) beta = nonnegative_refinement(h, cross, beta, positive_definite(h), nullptr);
        betas.col(s) = beta;
    }
    return betas;
}

Matrix cv_corrected_sigma(const Vector& y, const SignatureEstimate& sig, const GeneWeights& w,
                          const DependenceSet& dep, const std::vector<int>& folds, InferenceBasis basis) {
    const Matrix betas = cv_fold_betas(y, sig, w, dep, folds, basis);
    const Index G = sig.genes();
    Matrix phi(G, sig.types());
    for (int s = 0; s < betas.cols(); ++s) {
        const Matrix fold_phi = score_terms(y, sig, w, betas.col(s));
        for (Index g = 0; g < G; ++g)
            if (folds[static_cast<std::size_t>(g)] == s) phi.row(g) = fold_phi.row(g);
    }
    return sandwich_sigma(phi, dep, G);
}

Matrix proportion_jacobian(const Vector& beta) {
    const double total = beta.sum();
    if (!(std::abs(total) > 0.0)) throw DegenerateError("proportion Jacobian undefined for coefficients summing to zero");
    const Index K = beta.size();
    Matrix j = Matrix::Identity(K, K) - beta * Vector::Ones(K).transpose() / total;
    return j / total;
}

Matrix proportion_covariance(const Matrix& omega, const Matrix& sigma, const Vector& beta, Index genes) {
    const Matrix jac = proportion_jacobian(beta);
    Eigen::ColPivHouseholderQR<Matrix> qr(omega);
    if (qr.rank() < omega.rows()) throw DegenerateError("Omega is singular; proportion covariance undefined");
    // Omega^-1 J'
    const Matrix a = qr.solve(jac.transpose());
    Matrix cov = a.transpose() * sigma * a / static_cast<double>(genes);
    return 0.5 * (cov + cov.transpose());
}

std::vector<Interval> confidence_intervals(const Vector& p_hat, const Matrix& cov_p, double level) {
    if (!(level > 0.0 && level < 1.0)) throw ParameterError("confidence level must lie in (0, 1)");
    const double z = z_multiplier(level);
    std::vector<Interval> out(static_cast<std::size_t>(p_hat.size()));
    for (Index k = 0; k < p_hat.size(); ++k) {
        const double var = cov_p(k, k);
        if (var < 0.0) throw ParameterError("negative variance on the proportion covariance diagonal");
        const double half = z * std::sqrt(var);
        Interval& iv = out[static_cast<std::size_t>(k)];
        iv.lower_raw = p_hat(k) - half;
        iv.upper_raw = p_hat(k) + half;
        iv.lower = std::clamp(iv.lower_raw, 0.0, 1.0);
        iv.upper = std::clamp(iv.upper_raw, 0.0, 1.0);
    }
    return out;
}

Deconvolver::Deconvolver(const SignatureEstimate& sig, GeneWeights weights, DependenceSet dep, DeconvOptions options)
    : sig_(sig), weights_(std::move(weights)), dep_(std::move(dep)), options_(options) {
    check_dimensions(sig_, weights_.w.size());
    if (options_.inference && !(options_.level > 0.0 && options_.level < 1.0))
        throw ParameterError("confidence level must lie in (0, 1)");
    omega_ = omega_hat(sig_, weights_);
    hessian_ = omega_ * static_cast<double>(sig_.genes());
    hessian_pd_ = positive_definite(hessian_);

    if (!options_.inference || !options_.cv) return;
    const Index G = sig_.genes();
    if (options_.cv_folds < 2 || options_.cv_folds > G) {
        cv_message_ = "cross-validation disabled: fold count must lie in [2, G]";
        return;
    }
    folds_ = cv_folds(dep_, G, options_.cv_folds, options_.seed);
    const auto adj = adjacency(dep_, G);
    fold_plan_.assign(static_cast<std::size_t>(options_.cv_folds), Fold{});
    std::vector<char> excluded(static_cast<std::size_t>(G));
    cv_feasible_ = true;
    for (int s = 0; s < options_.cv_folds; ++s) {
        Fold& fold = fold_plan_[static_cast<std::size_t>(s)];
        std::fill(excluded.begin(), excluded.end(), 0);
        for (Index g = 0; g < G; ++g) {
            if (folds_[static_cast<std::size_t>(g)] != s) continue;
            fold.members.push_back(g);
            excluded[static_cast<std::size_t>(g)] = 1;
            for (int n : adj[static_cast<std::size_t>(g)]) excluded[static_cast<std::size_t>(n)] = 1;
        }
        Vector wk = weights_.w;
        for (Index g = 0; g < G; ++g) {
            if (excluded[static_cast<std::size_t>(g)]) {
                wk(g) = 0.0;
            } else if (wk(g) != 0.0) {
                fold.eligible.push_back(g);
            }
        }
        fold.hessian = adjusted_hessian(sig_, wk);
        if (fold.eligible.empty() || reciprocal_condition(fold.hessian) < kMinReciprocalCondition) {
            cv_feasible_ = false;
            cv_message_ = "cross-validation infeasible: fold " + std::to_string(s) +
                          " leaves too few eligible genes; using the uncorrected sandwich";
            fold_plan_.clear();
            return;
        }
    }
}

Vector Deconvolver::weighted_cross(const Vector& y, const std::vector<Index>* genes) const {
    const Index K = sig_.types();
    if (!genes) return sig_.u_hat.transpose() * weights_.w.cwiseProduct(y);
    Vector out = Vector::Zero(K);
    for (Index g : *genes) out += (weights_.w(g) * y(g)) * sig_.u_hat.row(g).transpose();
    return out;
}

DeconvolutionFit Deconvolver::fit(const Vector& y) const {
    if (y.size() != sig_.genes()) throw ParameterError("bulk sample and signature have different gene counts");
    const Index G = sig_.genes();
    DeconvolutionFit out;
    out.omega_hat = omega_;
    out.inference_basis = options_.basis;

    const Vector cross = weighted_cross(y, nullptr);
    out.beta_hat = linear_solve(hessian_, cross);
    out.truncation_active = (out.beta_hat.array() < 0.0).any();
    out.beta_star = nonnegative_refinement(hessian_, cross, out.beta_hat, hessian_pd_, nullptr);
    out.score_residual = (cross - hessian_ * out.beta_hat).norm();

    const Vector& basis = options_.basis == InferenceBasis::beta_star ? out.beta_star : out.beta_hat;
    const double total = basis.sum();
    if (!(total > 0.0)) {
        std::ostringstream msg;
        msg << "coefficients do not have a positive total; beta_hat = [" << out.beta_hat.transpose() << "]";
        throw DegenerateError(msg.str());
    }
    out.p_hat = basis / total;
    if (!options_.inference) return out;

    Matrix phi;
    if (options_.cv && cv_feasible_) {
        phi.resize(G, sig_.types());
        for (const Fold& fold : fold_plan_) {
            const Vector fold_cross = weighted_cross(y, &fold.eligible);
            Vector beta = linear_solve(fold.hessian, fold_cross);
            if (options_.basis == InferenceBasis::beta_star)
                beta = nonnegative_refinement(fold.hessian, fold_cross, beta, positive_definite(fold.hessian), nullptr);
            for (Index g : fold.members) {
                const double r = weights_.w(g) * (y(g) - sig_.u_hat.row(g).dot(beta));
                phi.row(g) = r * sig_.u_hat.row(g);
                if (weights_.w(g) != 0.0)
                    phi.row(g) += weights_.w(g) * (sig_.v_hat[static_cast<std::size_t>(g)] * beta).transpose();
            }
        }
        out.cv_applied = true;
    } else {
        phi = score_terms(y, sig_, weights_, basis);
        if (options_.cv) out.warning = cv_message_;
    }
    PsdClip clipped = clip_psd(sandwich_sigma(phi, dep_, G));
    out.sigma_hat = std::move(clipped.matrix);
    out.sigma_clip = clipped.clipped;
    out.cov_p = proportion_covariance(omega_, out.sigma_hat, basis, G);
    out.se = out.cov_p.diagonal().cwiseMax(0.0).cwiseSqrt();
    Matrix cov_for_intervals = out.cov_p;
    for (Index k = 0; k < cov_for_intervals.rows(); ++k)
        cov_for_intervals(k, k) = std::max(0.0, cov_for_intervals(k, k));
    out.intervals = confidence_intervals(out.p_hat, cov_for_intervals, options_.level);
    return out;
}

}  // namespace mead
