#include "mead/depnet.hpp"
#include "mead/json_io.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>

namespace mead {

namespace {

constexpr Index kBlockRows = 256;
constexpr double kDegenerateTolerance = 1e-12;

struct Evaluated {
    double t;
    double theta;
    double covariance;
    bool degenerate;
};

// s = sum of products of standardized values, q = sum of squared products.
Evaluated evaluate(double s, double q, double n, double scale) {
    const double mean = s / n;
    double theta = q / n - mean * mean;
    const bool degenerate = q == 0.0 || theta <= kDegenerateTolerance * (q / n);
    Evaluated out{};
    out.covariance = mean * scale;
    if (degenerate) {
        out.theta = 0.0;
        out.degenerate = true;
        out.t = s == 0.0 || std::abs(mean) < 1e-12 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), s);
    } else {
        out.theta = theta * scale * scale;
        out.t = s / std::sqrt(n * theta);
        out.degenerate = false;
    }
    return out;
}

}  // namespace

PairStatistics::PairStatistics(const Matrix& data) {
    const Index N = data.cols();
    if (N < 3) throw ParameterError("dependence testing needs at least 3 samples");
    z_ = data.colwise() - data.rowwise().mean();
    scale_.resize(data.rows());
    for (Index g = 0; g < z_.rows(); ++g) {
        const double sd = std::sqrt(z_.row(g).squaredNorm() / static_cast<double>(N));
        scale_(g) = sd;
        if (sd > 0.0) {
            z_.row(g) /= sd;
        } else {
            z_.row(g).setZero();
        }
    }
    z2_ = z_.array().square().matrix();
}

PairStatistic PairStatistics::pair(int g1, int g2) const {
    if (g1 == g2) throw ParameterError("pair statistics are defined for distinct genes only");
    const double s = z_.row(g1).dot(z_.row(g2));
    const double q = z2_.row(g1).dot(z2_.row(g2));
    Evaluated e = evaluate(s, q, static_cast<double>(samples()), scale_(g1) * scale_(g2));
    return {std::min(g1, g2), std::max(g1, g2), e.t, e.theta, e.covariance, e.degenerate};
}

void PairStatistics::for_each(const std::function<void(int, int, double, bool, double)>& visit) const {
    const Index G = genes();
    const double n = static_cast<double>(samples());
    Matrix s_block, q_block;
    for (Index r0 = 0; r0 < G; r0 += kBlockRows) {
        const Index rows = std::min(kBlockRows, G - r0);
        // Only columns to the right of the block start are needed.
        const Index c0 = r0 + 1;
        if (c0 >= G) break;
        s_block.noalias() = z_.middleRows(r0, rows) * z_.bottomRows(G - c0).transpose();
        q_block.noalias() = z2_.middleRows(r0, rows) * z2_.bottomRows(G - c0).transpose();
        for (Index a = 0; a < rows; ++a) {
            const Index g1 = r0 + a;
            for (Index g2 = g1 + 1; g2 < G; ++g2) {
                Evaluated e = evaluate(s_block(a, g2 - c0), q_block(a, g2 - c0), n, scale_(g1) * scale_(g2));
                visit(static_cast<int>(g1), static_cast<int>(g2), e.t, e.degenerate, e.covariance);
            }
        }
    }
}

std::vector<PairStatistic> PairStatistics::all() const {
    std::vector<PairStatistic> out;
    const Index G = genes();
    out.reserve(static_cast<std::size_t>(G * (G - 1) / 2));
    for (int g1 = 0; g1 < G; ++g1)
        for (int g2 = g1 + 1; g2 < G; ++g2) out.push_back(pair(g1, g2));
    return out;
}

PairStatistics pair_statistics(const BulkPanel& panel) { return PairStatistics(panel.counts); }

double threshold_cap(Index genes) {
    const double lg = std::log(static_cast<double>(genes));
    if (genes < 2) return 0.0;
    return std::sqrt(4.0 * lg - 2.0 * std::log(lg));
}

DependenceSet select_pairs(const PairStatistics& stats, double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ParameterError("FDR level alpha must lie in (0, 1]");
    const Index G = stats.genes();
    DependenceSet dep;
    dep.alpha = alpha;
    dep.genes = G;
    dep.samples = stats.samples();

    // Pass 1: the multiset of |T| over non-degenerate pairs. Values are kept in single
    // precision and every later comparison uses the same rounded values.
    std::vector<float> magnitudes;
    magnitudes.reserve(static_cast<std::size_t>(G * (G - 1) / 2));
    stats.for_each([&](int, int, double t, bool degenerate, double) {
        if (!degenerate) magnitudes.push_back(static_cast<float>(std::abs(t)));
    });
    dep.tested_pairs = static_cast<Index>(magnitudes.size());
    std::sort(magnitudes.begin(), magnitudes.end());

    const double total = 0.5 * static_cast<double>(G) * static_cast<double>(G - 1);
    const double cap = threshold_cap(G);
    const std::size_t m = magnitudes.size();
    boost::math::normal standard;
    auto proxy = [&](double t, std::size_t rejections) {
        return 2.0 * boost::math::cdf(boost::math::complement(standard, t)) * total /
               static_cast<double>(std::max<std::size_t>(rejections, 1));
    };

    // R(t) is constant on (u_{i-1}, u_i]; within each piece the proxy decreases in t, so
    // the infimum is the crossing point of the first piece whose right end qualifies.
    bool found = false;
    double lo = 0.0;
    std::size_t below = 0;
    while (true) {
        const std::size_t rejections = m - below;
        const double hi = below < m ? static_cast<double>(magnitudes[below]) : std::numeric_limits<double>::infinity();
        const double right = std::min(hi, cap);
        if (right >= lo && proxy(right, rejections) <= alpha) {
            const double target = alpha * static_cast<double>(std::max<std::size_t>(rejections, 1)) / (2.0 * total);
            double crossing = target >= 0.5 ? 0.0 : boost::math::quantile(boost::math::complement(standard, target));
            dep.t_hat = std::clamp(crossing, lo, right);
            found = true;
            break;
        }
        if (hi >= cap) break;
        lo = hi;
        while (below < m && static_cast<double>(magnitudes[below]) == hi) ++below;
    }
    if (!found) {
        dep.t_hat = 2.0 * std::sqrt(std::log(static_cast<double>(std::max<Index>(G, 2))));
        dep.fallback_threshold = true;
    }
    magnitudes.clear();
    magnitudes.shrink_to_fit();

    // Pass 2: materialize the rejections.
    stats.for_each([&](int g1, int g2, double t, bool degenerate, double) {
        if (degenerate) {
            if (t != 0.0) {
                dep.pairs.emplace_back(g1, g2);
                dep.t.push_back(t);
                ++dep.degenerate_included;
            }
            return;
        }
        if (static_cast<double>(static_cast<float>(std::abs(t))) >= dep.t_hat) {
            dep.pairs.emplace_back(g1, g2);
            dep.t.push_back(t);
        }
    });
    return dep;
}

std::vector<std::vector<int>> adjacency(const DependenceSet& dep, Index genes) {
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(genes));
    for (const auto& [a, b] : dep.pairs) {
        if (a < 0 || b < 0 || a >= genes || b >= genes) throw ParameterError("dependence pair index out of range");
        adj[static_cast<std::size_t>(a)].push_back(b);
        adj[static_cast<std::size_t>(b)].push_back(a);
    }
    for (auto& list : adj) std::sort(list.begin(), list.end());
    return adj;
}

DependenceSet banded_dependence(Index genes, Index bandwidth, std::size_t max_pairs) {
    DependenceSet dep;
    dep.genes = genes;
    for (Index g1 = 0; g1 < genes; ++g1) {
        for (Index g2 = g1 + 1; g2 < std::min(genes, g1 + bandwidth); ++g2) {
            if (max_pairs > 0 && dep.pairs.size() >= max_pairs) break;
            dep.pairs.emplace_back(static_cast<int>(g1), static_cast<int>(g2));
        }
    }
    std::sort(dep.pairs.begin(), dep.pairs.end());
    dep.t.assign(dep.pairs.size(), std::numeric_limits<double>::quiet_NaN());
    return dep;
}

DependenceSet make_dependence(Index genes, std::vector<std::pair<int, int>> pairs) {
    DependenceSet dep;
    dep.genes = genes;
    for (auto& [a, b] : pairs) {
        if (a < 0 || b < 0 || a >= genes || b >= genes) throw ParameterError("dependence pair index out of range");
        if (a > b) std::swap(a, b);
    }
    std::erase_if(pairs, [](const auto& p) { return p.first == p.second; });
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
    dep.pairs = std::move(pairs);
    dep.t.assign(dep.pairs.size(), std::numeric_limits<double>::quiet_NaN());
    return dep;
}

void save_dependence(const DependenceSet& dep, const std::vector<std::string>& gene_ids, const std::string& tsv_path,
                     const std::string& json_path) {
    std::ofstream out(tsv_path, std::ios::binary);
    out << "gene_id_1\tgene_id_2\tT\n";
    for (std::size_t p = 0; p < dep.pairs.size(); ++p) {
        out << gene_ids[static_cast<std::size_t>(dep.pairs[p].first)] << '\t'
            << gene_ids[static_cast<std::size_t>(dep.pairs[p].second)] << '\t'
            << (p < dep.t.size() && !std::isnan(dep.t[p]) ? format_real(dep.t[p]) : std::string("NA")) << '\n';
    }
    if (!out) throw FormatError(tsv_path + ": write failed");
    if (!json_path.empty()) {
        nlohmann::json j;
        j["alpha"] = dep.alpha;
        j["t_hat"] = dep.t_hat;
        j["G"] = dep.genes;
        j["N"] = dep.samples;
        j["pairs"] = dep.pairs.size();
        j["tested_pairs"] = dep.tested_pairs;
        j["degenerate_included"] = dep.degenerate_included;
        j["fallback_threshold"] = dep.fallback_threshold;
        write_json(j, json_path);
    }
}

DependenceSet load_dependence(const std::string& path, const std::vector<std::string>& gene_ids) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(path + ": cannot open file");
    std::unordered_map<std::string, int> index;
    for (std::size_t g = 0; g < gene_ids.size(); ++g) index.emplace(gene_ids[g], static_cast<int>(g));
    std::string line;
    std::size_t lineno = 0;
    std::vector<std::pair<int, int>> pairs;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string a, b;
        std::getline(fields, a, '\t');
        std::getline(fields, b, '\t');
        if (lineno == 1 && a == "gene_id_1") continue;
        if (b.empty()) throw FormatError(path + ": line " + std::to_string(lineno) + " needs two gene ids");
        auto ia = index.find(a);
        auto ib = index.find(b);
        if (ia == index.end() || ib == index.end()) continue;
        pairs.emplace_back(ia->second, ib->second);
    }
    return make_dependence(static_cast<Index>(gene_ids.size()), std::move(pairs));
}

}  // namespace mead
