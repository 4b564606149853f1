#include "mead/downstream.hpp"
#include "mead/json_io.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <fstream>

namespace mead {

DownstreamFit fit_regression(const Matrix& p_hats, const Matrix& z) {
    const Index N = p_hats.rows();
    const Index S = z.cols();
    if (z.rows() != N) throw ParameterError("covariate rows do not match the number of proportion rows");
    if (S < 1) throw ParameterError("at least one covariate is required");
    if (N <= S + 1) {
        throw ParameterError("downstream regression needs more individuals (" + std::to_string(N) +
                             ") than covariates plus one (" + std::to_string(S + 1) + ")");
    }
    if (!p_hats.allFinite() || !z.allFinite()) throw ParameterError("downstream inputs must be finite");

    DownstreamFit fit;
    fit.z_mean = z.colwise().mean().transpose();
    fit.centered_z = z.rowwise() - fit.z_mean.transpose();
    const Matrix ztz = fit.centered_z.transpose() * fit.centered_z;
    Eigen::ColPivHouseholderQR<Matrix> qr(fit.centered_z);
    qr.setThreshold(1e-10);
    if (qr.rank() < S) throw DegenerateError("covariates are collinear after centering (Z'Z is singular)");

    fit.ztz_inverse = ztz.ldlt().solve(Matrix::Identity(S, S));
    fit.a_hat = qr.solve(p_hats);
    fit.p0_hat = p_hats.colwise().mean().transpose();
    const Matrix fitted = (fit.centered_z * fit.a_hat).rowwise() + fit.p0_hat.transpose();
    fit.residuals = p_hats - fitted;
    fit.resid_cov = fit.residuals.transpose() * fit.residuals / static_cast<double>(N - S - 1);
    fit.resid_cov = (0.5 * (fit.resid_cov + fit.resid_cov.transpose())).eval();
    return fit;
}

void regression_inference(DownstreamFit& fit, double level, Index genes, Index samples) {
    if (!(level > 0.0 && level < 1.0)) throw ParameterError("confidence level must lie in (0, 1)");
    const Index S = fit.a_hat.rows();
    const Index K = fit.a_hat.cols();
    const Index N = fit.residuals.rows();
    fit.level = level;

    const double dof = static_cast<double>(N - S - 1);
    const double q = boost::math::quantile(boost::math::students_t(dof), 0.5 + level / 2.0);
    fit.se.resize(S, K);
    for (Index s = 0; s < S; ++s)
        for (Index k = 0; k < K; ++k)
            fit.se(s, k) = std::sqrt(std::max(0.0, fit.resid_cov(k, k)) * fit.ztz_inverse(s, s));
    fit.lower = fit.a_hat - q * fit.se;
    fit.upper = fit.a_hat + q * fit.se;

    // Proportion rows sum to one, so the residual covariance is singular along 1; drop the last type.
    WaldTest& wald = fit.global_wald;
    Index kk = K;
    if (K >= 2) {
        const double spread = (fit.a_hat.rowwise().sum()).cwiseAbs().maxCoeff();
        const double p0_gap = std::abs(fit.p0_hat.sum() - 1.0);
        if (spread < 1e-8 && p0_gap < 1e-8) {
            kk = K - 1;
            wald.dropped_last_type = true;
        }
    }
    const Matrix sigma = fit.resid_cov.topLeftCorner(kk, kk);
    const Matrix a = fit.a_hat.leftCols(kk);

    // vec(A)' (Sigma kron (Z'Z)^-1)^-1 vec(A) = tr(Sigma^-1 A' Z'Z A), evaluated on the range of Sigma.
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sigma);
    const Vector& ev = eig.eigenvalues();
    const double top = ev.size() ? ev.cwiseAbs().maxCoeff() : 0.0;
    Index rank = 0;
    Vector inv_ev = Vector::Zero(kk);
    for (Index k = 0; k < kk; ++k) {
        if (ev(k) > 1e-12 * top && ev(k) > 0.0) {
            inv_ev(k) = 1.0 / ev(k);
            ++rank;
        }
    }
    wald.reduced_rank = rank < kk;
    const Matrix ztz = fit.centered_z.transpose() * fit.centered_z;
    const Matrix rotated = a * eig.eigenvectors();  // S x kk
    double stat = 0.0;
    for (Index k = 0; k < kk; ++k) {
        if (inv_ev(k) == 0.0) continue;
        stat += inv_ev(k) * rotated.col(k).dot(ztz * rotated.col(k));
    }
    wald.statistic = stat;
    wald.dof = static_cast<int>(S * rank);
    if (wald.dof > 0) {
        wald.p_value = boost::math::cdf(boost::math::complement(boost::math::chi_squared(wald.dof), stat));
    } else {
        wald.p_value = 1.0;
    }

    fit.regime_warning = false;
    fit.warning.clear();
    if (genes > 0) {
        const double ratio = static_cast<double>(samples) / static_cast<double>(genes);
        if (ratio > 0.1 && wald.dof > 0 && wald.p_value < 0.05) {
            fit.regime_warning = true;
            fit.warning = "N/G = " + format_real(ratio) +
                          " exceeds 0.1 and the global null is rejected; ignoring estimating uncertainties in the "
                          "proportions will likely introduce false positives";
        }
    }
}

nlohmann::json to_json(const DownstreamFit& fit) {
    nlohmann::json out;
    out["covariates"] = fit.covariates;
    out["cell_types"] = fit.cell_types;
    out["a_hat"] = to_json(fit.a_hat);
    out["p0_hat"] = to_json(fit.p0_hat);
    out["resid_cov"] = to_json(fit.resid_cov);
    out["se"] = to_json(fit.se);
    out["lower"] = to_json(fit.lower);
    out["upper"] = to_json(fit.upper);
    out["level"] = fit.level;
    out["global_wald"] = {{"statistic", fit.global_wald.statistic},
                          {"dof", fit.global_wald.dof},
                          {"p_value", fit.global_wald.p_value},
                          {"reduced_rank", fit.global_wald.reduced_rank},
                          {"dropped_last_cell_type", fit.global_wald.dropped_last_type}};
    out["regime_warning"] = fit.regime_warning;
    out["warning"] = fit.warning;
    return out;
}

void save_downstream_tsv(const DownstreamFit& fit, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path);
    os << "covariate\tcell_type\testimate\tse\tlower\tupper\n";
    for (Index s = 0; s < fit.a_hat.rows(); ++s) {
        for (Index k = 0; k < fit.a_hat.cols(); ++k) {
            const std::string cov = s < static_cast<Index>(fit.covariates.size())
                                        ? fit.covariates[static_cast<std::size_t>(s)]
                                        : "z" + std::to_string(s + 1);
            const std::string type = k < static_cast<Index>(fit.cell_types.size())
                                         ? fit.cell_types[static_cast<std::size_t>(k)]
                                         : "type" + std::to_string(k + 1);
            os << cov << '\t' << type << '\t' << format_real(fit.a_hat(s, k)) << '\t' << format_real(fit.se(s, k))
               << '\t' << format_real(fit.lower(s, k)) << '\t' << format_real(fit.upper(s, k)) << '\n';
        }
    }
}

}  // namespace mead
