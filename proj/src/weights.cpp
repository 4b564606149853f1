#include "mead/weights.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <unordered_set>

namespace mead {

namespace {

constexpr int kGridSize = 16;
constexpr double kShapeMin = 1.1;
constexpr double kShapeMax = 512.0;
constexpr int kMaxIterations = 500;
constexpr double kLoglikTolerance = 1e-8;

// log density of s2 ~ sigma2 * chi2_df / df, integrated over sigma2 ~ InvGamma(a, b).
double log_marginal(double s2, double a, double b, double df) {
    const double h = 0.5 * df;
    return h * std::log(h) - std::lgamma(h) + (h - 1.0) * std::log(s2) + a * std::log(b) - std::lgamma(a) +
           std::lgamma(a + h) - (a + h) * std::log(b + h * s2);
}

double log_sum_exp(const Vector& x) {
    const double mx = x.maxCoeff();
    if (!std::isfinite(mx)) return mx;
    return mx + std::log((x.array() - mx).exp().sum());
}

}  // namespace

double EbFit::prior_mean() const {
    double m = 0.0;
    for (Index k = 0; k < shape.size(); ++k) m += pi(k) * scale(k) / (shape(k) - 1.0);
    return m;
}

double EbFit::posterior_mean(double s2) const {
    const double h = 0.5 * df;
    Vector logr(shape.size());
    for (Index k = 0; k < shape.size(); ++k)
        logr(k) = (pi(k) > 0.0 ? std::log(pi(k)) : -std::numeric_limits<double>::infinity()) +
                  log_marginal(s2, shape(k), scale(k), df);
    const double norm = log_sum_exp(logr);
    double mean = 0.0;
    for (Index k = 0; k < shape.size(); ++k)
        mean += std::exp(logr(k) - norm) * (scale(k) + h * s2) / (shape(k) + h - 1.0);
    return mean;
}

Vector raw_variances(const std::vector<Matrix>& v_hat) {
    Vector s2(static_cast<Index>(v_hat.size()));
    for (std::size_t g = 0; g < v_hat.size(); ++g) s2(static_cast<Index>(g)) = std::max(0.0, v_hat[g].sum());
    return s2;
}

EbFit eb_shrink(const Vector& raw_s2, int df, std::span<const bool> exclude) {
    if (df < 1) throw ParameterError("eb_shrink: degrees of freedom must be at least 1");
    const Index G = raw_s2.size();
    if (!exclude.empty() && static_cast<Index>(exclude.size()) != G)
        throw ParameterError("eb_shrink: exclusion mask has the wrong length");
    auto included = [&](Index g) { return exclude.empty() || !exclude[static_cast<std::size_t>(g)]; };

    double min_positive = std::numeric_limits<double>::infinity();
    Index n_positive = 0;
    for (Index g = 0; g < G; ++g) {
        if (!std::isfinite(raw_s2(g)) || raw_s2(g) < 0.0)
            throw ParameterError("eb_shrink: sample variances must be finite and non-negative");
        if (included(g) && raw_s2(g) > 0.0) {
            ++n_positive;
            min_positive = std::min(min_positive, raw_s2(g));
        }
    }
    if (n_positive < 2) {
        throw DegenerateError(
            "reference variances are zero for (almost) all genes; shrinkage weights are undefined, use equal weights");
    }

    EbFit fit;
    fit.df = df;
    fit.zero_replacement = min_positive * 1e-3;
    Vector s2 = raw_s2;
    for (Index g = 0; g < G; ++g) {
        if (s2(g) == 0.0) {
            s2(g) = fit.zero_replacement;
            if (included(g)) ++fit.zero_count;
        }
    }

    // Common mode from a moment-matched single inverse gamma, after removing the
    // chi-square sampling variance from the spread of s2.
    double sum = 0.0;
    Index n = 0;
    for (Index g = 0; g < G; ++g)
        if (included(g) && raw_s2(g) > 0.0) { sum += raw_s2(g); ++n; }
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (Index g = 0; g < G; ++g)
        if (included(g) && raw_s2(g) > 0.0) ss += (raw_s2(g) - mean) * (raw_s2(g) - mean);
    const double var = ss / static_cast<double>(n - 1);
    const double d = static_cast<double>(df);
    const double prior_var = (var - 2.0 * mean * mean / d) / (1.0 + 2.0 / d);
    if (prior_var > 0.0) {
        const double a = 2.0 + mean * mean / prior_var;
        fit.prior_mode = mean * (a - 1.0) / (a + 1.0);
    } else {
        fit.prior_mode = mean;
    }

    fit.shape.resize(kGridSize);
    fit.scale.resize(kGridSize);
    const double ratio = std::pow(kShapeMax / kShapeMin, 1.0 / (kGridSize - 1));
    for (int k = 0; k < kGridSize; ++k) {
        fit.shape(k) = k == kGridSize - 1 ? kShapeMax : kShapeMin * std::pow(ratio, k);
        fit.scale(k) = fit.prior_mode * (fit.shape(k) + 1.0);
    }

    std::vector<Index> fit_genes;
    for (Index g = 0; g < G; ++g)
        if (included(g)) fit_genes.push_back(g);
    const Index F = static_cast<Index>(fit_genes.size());
    Matrix loglik(F, kGridSize);
    for (Index r = 0; r < F; ++r)
        for (int k = 0; k < kGridSize; ++k)
            loglik(r, k) = log_marginal(s2(fit_genes[static_cast<std::size_t>(r)]), fit.shape(k), fit.scale(k), d);

    // EM over mixture weights; gene-indexed summation keeps the result schedule-free.
    fit.pi = Vector::Constant(kGridSize, 1.0 / kGridSize);
    double previous = -std::numeric_limits<double>::infinity();
    Vector row(kGridSize);
    for (int it = 0; it < kMaxIterations; ++it) {
        Vector next = Vector::Zero(kGridSize);
        double total = 0.0;
        for (Index r = 0; r < F; ++r) {
            for (int k = 0; k < kGridSize; ++k)
                row(k) = (fit.pi(k) > 0.0 ? std::log(fit.pi(k)) : -std::numeric_limits<double>::infinity()) +
                         loglik(r, k);
            const double norm = log_sum_exp(row);
            total += norm;
            next.array() += (row.array() - norm).exp();
        }
        fit.loglik_trace.push_back(total);
        fit.pi = next / static_cast<double>(F);
        fit.iterations = it + 1;
        if (std::abs(total - previous) < kLoglikTolerance) {
            fit.converged = true;
            break;
        }
        previous = total;
    }

    fit.shrunk.resize(G);
    for (Index g = 0; g < G; ++g) fit.shrunk(g) = fit.posterior_mean(s2(g));
    return fit;
}

GeneWeights make_weights(const Vector& shrunk_s2, const std::vector<bool>& flags) {
    GeneWeights out;
    out.mode = WeightMode::eb;
    out.shrunk_s2 = shrunk_s2;
    out.w.resize(shrunk_s2.size());
    for (Index g = 0; g < shrunk_s2.size(); ++g) {
        const bool flagged = !flags.empty() && flags[static_cast<std::size_t>(g)];
        const double s = shrunk_s2(g);
        if (!(s > 0.0)) throw ParameterError("make_weights: shrunk variances must be positive");
        out.w(g) = (flagged || std::isinf(s)) ? 0.0 : 1.0 / s;
    }
    return out;
}

GeneWeights equal_weights(Index genes, const std::vector<bool>& flags) {
    GeneWeights out;
    out.mode = WeightMode::equal;
    out.w = Vector::Ones(genes);
    for (Index g = 0; g < genes; ++g)
        if (!flags.empty() && flags[static_cast<std::size_t>(g)]) out.w(g) = 0.0;
    return out;
}

GeneWeights marker_weights(const std::vector<std::string>& gene_ids, const std::vector<std::string>& markers) {
    std::unordered_set<std::string> set(markers.begin(), markers.end());
    GeneWeights out;
    out.mode = WeightMode::marker;
    out.w = Vector::Zero(static_cast<Index>(gene_ids.size()));
    Index hits = 0;
    for (std::size_t g = 0; g < gene_ids.size(); ++g) {
        if (set.count(gene_ids[g])) {
            out.w(static_cast<Index>(g)) = 1.0;
            ++hits;
        }
    }
    if (hits == 0) throw ParameterError("marker list shares no genes with the aligned gene set");
    return out;
}

std::vector<std::string> load_marker_list(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError(path + ": cannot open file");
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        out.push_back(line.substr(0, line.find('\t')));
    }
    return out;
}

void save_weights(const std::vector<std::string>& gene_ids, const GeneWeights& weights, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    out << "gene_id\tweight\n";
    for (std::size_t g = 0; g < gene_ids.size(); ++g)
        out << gene_ids[g] << '\t' << format_real(weights.w(static_cast<Index>(g))) << '\n';
    if (!out) throw FormatError(path + ": write failed");
}

}  // namespace mead
