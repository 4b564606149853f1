#ifndef MEAD_IDENTIFY_HPP
#define MEAD_IDENTIFY_HPP

#include "mead/core.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace mead {

enum class ConditionB { holds, fails, not_checked };
enum class IdentifyMethod { screen_only, brute_force };

/// A partition of gene row indices into blocks.
using Partition = std::vector<std::vector<int>>;

struct RankResult {
    Index rank = 0;
    bool condition_a = false;
};

struct ScreenResult {
    bool pass = false;
    Partition witness;  // set when the screen fails
};

struct ConditionBResult {
    ConditionB status = ConditionB::not_checked;
    Partition witness;
    long long partitions_checked = 0;
};

struct IdentifiabilityReport {
    Index rank_u = 0;
    bool condition_a = false;
    bool screen_pass = false;
    ConditionB condition_b = ConditionB::not_checked;
    Partition witness;
    double tolerance = 1e-8;
    IdentifyMethod method = IdentifyMethod::screen_only;
    std::string note;

    /// "identifiable", "not identifiable" or "undetermined".
    std::string verdict() const;
};

struct IdentifyOptions {
    double tol = 1e-8;          // relative to the largest singular value of U
    int max_genes = 10;         // brute-force limit
    double support_floor = 0.0; // entries with |u| <= floor are treated as exact zeros
};

/// Numerical rank: singular values above tol * sigma_max.
RankResult check_rank(const Matrix& u, double tol = 1e-8);

/// Rank of the rows of u listed in rows, counting singular values above an absolute threshold.
Index block_rank(const Matrix& u, const std::vector<int>& rows, double threshold);

/**
 * Connectivity of the bipartite gene / cell-type support graph.
 *
 * When the cell types split into several components, genes grouped by the component of
 * their support form a partition whose sub-ranks sum to at most K.
 */
ScreenResult bipartite_screen(const Matrix& u, double tol = 1e-8);

/// Exhaustive check over all set partitions of the rows with at least two blocks.
ConditionBResult brute_force_condition_b(const Matrix& u, double tol = 1e-8, int max_genes = 10);

IdentifiabilityReport check_identifiability(const Matrix& u, const IdentifyOptions& options = {});

nlohmann::json to_json(const IdentifiabilityReport& report, const std::vector<std::string>& gene_ids);

std::string to_string(ConditionB value);

}  // namespace mead

#endif  // MEAD_IDENTIFY_HPP
