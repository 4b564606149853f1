#ifndef MEAD_DEPNET_HPP
#define MEAD_DEPNET_HPP

#include "mead/core.hpp"

#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace mead {

/// Unordered set of dependent gene pairs, stored as (g1, g2) with g1 < g2, sorted.
struct DependenceSet {
    std::vector<std::pair<int, int>> pairs;
    std::vector<double> t;  // test statistic per pair, NaN when not from a test
    double alpha = 0.0;
    double t_hat = 0.0;
    Index genes = 0;
    Index samples = 0;
    bool fallback_threshold = false;
    Index degenerate_included = 0;
    Index tested_pairs = 0;

    bool empty() const { return pairs.empty(); }
    std::size_t size() const { return pairs.size(); }
};

struct PairStatistic {
    int g1 = 0;
    int g2 = 0;
    double t = 0.0;
    double theta = 0.0;
    double covariance = 0.0;
    bool degenerate = false;
};

/**
 * Pairwise covariance test statistics over the genes of a sample matrix.
 *
 * Statistics are produced block by block so that only the selected pairs need to be
 * kept; the standardized data is held once (G x N).
 */
class PairStatistics {
public:
    /// data is G x N (genes by samples). Requires N >= 3.
    explicit PairStatistics(const Matrix& data);

    Index genes() const { return z_.rows(); }
    Index samples() const { return z_.cols(); }

    /// Direct evaluation for one pair (g1 != g2).
    PairStatistic pair(int g1, int g2) const;

    /// Visit every pair g1 < g2 in row-block order; the callback sees (g1, g2, t, degenerate, covariance).
    void for_each(const std::function<void(int, int, double, bool, double)>& visit) const;

    /// Materialize all pairs; intended for small G.
    std::vector<PairStatistic> all() const;

private:
    Matrix z_;        // centered, unit-variance rows (zero rows for constant genes)
    Matrix z2_;       // elementwise squares of z_
    Vector scale_;    // per-gene standard deviation used for standardization
};

PairStatistics pair_statistics(const BulkPanel& panel);

/// Upper end of the threshold search: sqrt(4 log G - 2 log log G).
double threshold_cap(Index genes);

/// FDR-controlled selection of dependent pairs at level alpha in (0, 1].
DependenceSet select_pairs(const PairStatistics& stats, double alpha);

/// Neighbour lists (both directions) of each gene.
std::vector<std::vector<int>> adjacency(const DependenceSet& dep, Index genes);

/// Pairs with |g1 - g2| < bandwidth, optionally capped at max_pairs (in index order).
DependenceSet banded_dependence(Index genes, Index bandwidth, std::size_t max_pairs = 0);

/// Build a set from arbitrary pairs: drops self-pairs, orders and deduplicates.
DependenceSet make_dependence(Index genes, std::vector<std::pair<int, int>> pairs);

void save_dependence(const DependenceSet& dep, const std::vector<std::string>& gene_ids, const std::string& tsv_path,
                     const std::string& json_path);

/// Read `gene_id_1 gene_id_2 [T]` rows; pairs naming genes outside gene_ids are skipped.
DependenceSet load_dependence(const std::string& path, const std::vector<std::string>& gene_ids);

}  // namespace mead

#endif  // MEAD_DEPNET_HPP
