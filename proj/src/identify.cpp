#include "mead/identify.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cstdint>
#include <numeric>

namespace mead {

namespace {

double largest_singular_value(const Matrix& u) {
    if (u.size() == 0) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(u);
    return svd.singularValues()(0);
}

Index count_above(const Matrix& m, double threshold) {
    if (m.size() == 0) return 0;
    Eigen::JacobiSVD<Matrix> svd(m);
    return (svd.singularValues().array() > threshold).count();
}

}  // namespace

std::string to_string(ConditionB value) {
    switch (value) {
        case ConditionB::holds: return "holds";
        case ConditionB::fails: return "fails";
        case ConditionB::not_checked: return "not_checked";
    }
    return "not_checked";
}

std::string IdentifiabilityReport::verdict() const {
    if (!condition_a || condition_b == ConditionB::fails) return "not identifiable";
    if (condition_b == ConditionB::holds) return "identifiable";
    return "undetermined";
}

RankResult check_rank(const Matrix& u, double tol) {
    RankResult r;
    const double top = largest_singular_value(u);
    r.rank = top > 0.0 ? count_above(u, tol * top) : 0;
    r.condition_a = r.rank == u.cols();
    return r;
}

Index block_rank(const Matrix& u, const std::vector<int>& rows, double threshold) {
    Matrix sub(static_cast<Index>(rows.size()), u.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) sub.row(static_cast<Index>(i)) = u.row(rows[i]);
    return count_above(sub, threshold);
}

ScreenResult bipartite_screen(const Matrix& u, double tol) {
    const Index G = u.rows();
    const Index K = u.cols();
    const double threshold = tol * largest_singular_value(u);

    // Union-find over cell types; each gene joins every type in its support.
    std::vector<Index> parent(static_cast<std::size_t>(K));
    std::iota(parent.begin(), parent.end(), Index{0});
    auto find = [&](Index x) {
        while (parent[static_cast<std::size_t>(x)] != x) {
            parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
            x = parent[static_cast<std::size_t>(x)];
        }
        return x;
    };
    std::vector<Index> first_type(static_cast<std::size_t>(G), -1);
    for (Index g = 0; g < G; ++g) {
        for (Index k = 0; k < K; ++k) {
            if (std::abs(u(g, k)) <= threshold) continue;
            if (first_type[static_cast<std::size_t>(g)] < 0) {
                first_type[static_cast<std::size_t>(g)] = k;
            } else {
                parent[static_cast<std::size_t>(find(k))] = find(first_type[static_cast<std::size_t>(g)]);
            }
        }
    }

    std::vector<Index> block_of_root(static_cast<std::size_t>(K), -1);
    Index blocks = 0;
    for (Index k = 0; k < K; ++k) {
        const Index root = find(k);
        if (block_of_root[static_cast<std::size_t>(root)] < 0) block_of_root[static_cast<std::size_t>(root)] = blocks++;
    }
    ScreenResult result;
    result.pass = blocks <= 1;
    if (result.pass) return result;

    result.witness.assign(static_cast<std::size_t>(blocks), {});
    std::vector<int> unsupported;
    for (Index g = 0; g < G; ++g) {
        const Index t = first_type[static_cast<std::size_t>(g)];
        if (t < 0) {
            unsupported.push_back(static_cast<int>(g));
        } else {
            result.witness[static_cast<std::size_t>(block_of_root[static_cast<std::size_t>(find(t))])].push_back(
                static_cast<int>(g));
        }
    }
    // Blocks without genes come from cell types no gene expresses; such a U already fails the rank check.
    std::erase_if(result.witness, [](const std::vector<int>& b) { return b.empty(); });
    if (result.witness.empty()) result.witness.emplace_back();
    // Zero rows add no rank wherever they go.
    auto& head = result.witness.front();
    head.insert(head.end(), unsupported.begin(), unsupported.end());
    std::sort(head.begin(), head.end());
    if (result.witness.size() < 2) {
        // Only one block carries genes: the split is not a valid witness.
        result.witness.clear();
    }
    return result;
}

ConditionBResult brute_force_condition_b(const Matrix& u, double tol, int max_genes) {
    ConditionBResult result;
    const Index G = u.rows();
    const Index K = u.cols();
    if (G > max_genes || G > 24) return result;
    if (G < 2) {
        // No partition with two or more blocks exists.
        result.status = ConditionB::holds;
        return result;
    }
    const double threshold = tol * largest_singular_value(u);

    const std::size_t subsets = std::size_t{1} << G;
    std::vector<int> rank_cache(subsets, -1);
    auto subset_rank = [&](std::uint32_t mask) {
        int& r = rank_cache[mask];
        if (r < 0) {
            std::vector<int> rows;
            for (Index g = 0; g < G; ++g)
                if (mask & (1u << g)) rows.push_back(static_cast<int>(g));
            r = static_cast<int>(block_rank(u, rows, threshold));
        }
        return r;
    };

    // Restricted growth strings enumerate each set partition exactly once.
    std::vector<int> a(static_cast<std::size_t>(G), 0);
    std::vector<int> prefix_max(static_cast<std::size_t>(G), 0);
    while (true) {
        const int blocks = prefix_max.back() + 1;
        if (blocks >= 2) {
            ++result.partitions_checked;
            std::vector<std::uint32_t> masks(static_cast<std::size_t>(blocks), 0);
            for (Index g = 0; g < G; ++g) masks[static_cast<std::size_t>(a[static_cast<std::size_t>(g)])] |= 1u << g;
            int total = 0;
            for (auto m : masks) total += subset_rank(m);
            if (total <= K) {
                result.status = ConditionB::fails;
                result.witness.assign(static_cast<std::size_t>(blocks), {});
                for (Index g = 0; g < G; ++g)
                    result.witness[static_cast<std::size_t>(a[static_cast<std::size_t>(g)])].push_back(
                        static_cast<int>(g));
                return result;
            }
        }
        // Next restricted growth string.
        Index i = G - 1;
        while (i >= 1 && a[static_cast<std::size_t>(i)] > prefix_max[static_cast<std::size_t>(i - 1)]) --i;
        if (i < 1) break;
        ++a[static_cast<std::size_t>(i)];
        prefix_max[static_cast<std::size_t>(i)] =
            std::max(prefix_max[static_cast<std::size_t>(i - 1)], a[static_cast<std::size_t>(i)]);
        for (Index j = i + 1; j < G; ++j) {
            a[static_cast<std::size_t>(j)] = 0;
            prefix_max[static_cast<std::size_t>(j)] = prefix_max[static_cast<std::size_t>(i)];
        }
    }
    result.status = ConditionB::holds;
    return result;
}

IdentifiabilityReport check_identifiability(const Matrix& u_in, const IdentifyOptions& options) {
    if (u_in.rows() < 1 || u_in.cols() < 1) throw ParameterError("signature matrix must be non-empty");
    if (!u_in.allFinite()) throw ParameterError("signature matrix must be finite");
    if (!(options.tol > 0.0)) throw ParameterError("tolerance must be positive");
    Matrix u = u_in;
    if (options.support_floor > 0.0) u = (u.array().abs() <= options.support_floor).select(0.0, u);

    IdentifiabilityReport report;
    report.tolerance = options.tol;
    const RankResult rank = check_rank(u, options.tol);
    report.rank_u = rank.rank;
    report.condition_a = rank.condition_a;
    if (!report.condition_a) {
        report.note = "U has rank " + std::to_string(rank.rank) + " < K = " + std::to_string(u.cols()) +
                      "; the partition condition was not examined";
        return report;
    }

    const ScreenResult screen = bipartite_screen(u, options.tol);
    report.screen_pass = screen.pass;
    if (!screen.pass && !screen.witness.empty()) {
        report.condition_b = ConditionB::fails;
        report.witness = screen.witness;
        report.method = IdentifyMethod::screen_only;
        report.note = "cell types split into disconnected groups of supporting genes";
        return report;
    }

    const ConditionBResult brute = brute_force_condition_b(u, options.tol, options.max_genes);
    if (brute.status == ConditionB::not_checked) {
        report.method = IdentifyMethod::screen_only;
        report.note = "connectivity screen passed; it is a necessary condition only and does not certify the "
                      "partition condition. Brute force skipped: " +
                      std::to_string(u.rows()) + " genes exceed the limit of " + std::to_string(options.max_genes);
        return report;
    }
    report.method = IdentifyMethod::brute_force;
    report.condition_b = brute.status;
    report.witness = brute.witness;
    report.note = "checked " + std::to_string(brute.partitions_checked) + " partitions";
    return report;
}

nlohmann::json to_json(const IdentifiabilityReport& report, const std::vector<std::string>& gene_ids) {
    nlohmann::json out;
    out["verdict"] = report.verdict();
    out["rank_u"] = report.rank_u;
    out["condition_a"] = report.condition_a;
    out["screen_pass"] = report.screen_pass;
    out["condition_b"] = to_string(report.condition_b);
    out["tolerance"] = report.tolerance;
    out["method"] = report.method == IdentifyMethod::brute_force ? "brute_force" : "screen_only";
    out["note"] = report.note;
    nlohmann::json witness = nlohmann::json::array();
    for (const auto& block : report.witness) {
        nlohmann::json b = nlohmann::json::array();
        for (int g : block)
            b.push_back(static_cast<std::size_t>(g) < gene_ids.size() ? gene_ids[static_cast<std::size_t>(g)]
                                                                       : std::to_string(g));
        witness.push_back(b);
    }
    out["witness"] = witness;
    return out;
}

}  // namespace mead
