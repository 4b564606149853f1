#ifndef MEAD_CORE_HPP
#define MEAD_CORE_HPP

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace mead {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input file.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Gene sets of bulk and reference panels cannot be aligned.
class AlignmentError : public Error {
public:
    using Error::Error;
};

/// Invalid argument or option value.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Numerical problem that makes the requested estimate undefined.
class DegenerateError : public Error {
public:
    using Error::Error;
};

/**
 * Observed bulk expression, one column per sample.
 *
 * counts is G x N; gene_ids and sample_ids index rows and columns.
 */
struct BulkPanel {
    std::vector<std::string> gene_ids;
    std::vector<std::string> sample_ids;
    Matrix counts;

    Index genes() const { return counts.rows(); }
    Index samples() const { return counts.cols(); }
};

/**
 * Per-individual, per-cell-type mean expression from single-cell reference data.
 *
 * means[j] is G x K for reference individual j. cell_counts[j] holds the number of
 * cells per type for that individual and is carried as metadata only.
 */
struct ReferencePanel {
    std::vector<std::string> gene_ids;
    std::vector<std::string> cell_types;
    std::vector<std::string> individual_ids;
    std::vector<Matrix> means;
    std::vector<Eigen::VectorXi> cell_counts;

    Index genes() const { return static_cast<Index>(gene_ids.size()); }
    Index types() const { return static_cast<Index>(cell_types.size()); }
    Index individuals() const { return static_cast<Index>(individual_ids.size()); }
};

/// Individual-level covariates, N x S, uncentered.
struct CovariateTable {
    std::vector<std::string> sample_ids;
    std::vector<std::string> names;
    Matrix values;
};

struct AlignmentReport {
    std::vector<std::string> dropped_from_bulk;
    std::vector<std::string> dropped_from_reference;
};

struct AlignedPanels {
    BulkPanel bulk;
    ReferencePanel reference;
    AlignmentReport report;
};

// Validation. Each throws FormatError on violation.
void validate(const BulkPanel& panel);
void validate(const ReferencePanel& panel, bool allow_single_individual = false);
void validate(const CovariateTable& table);

BulkPanel load_bulk(const std::string& path);
ReferencePanel load_reference(const std::string& path);
CovariateTable load_covariates(const std::string& path);

void save_bulk(const BulkPanel& panel, const std::string& path);
void save_reference(const ReferencePanel& panel, const std::string& path);
void save_covariates(const CovariateTable& table, const std::string& path);

/// Restrict both panels to their common genes, in bulk order.
AlignedPanels align_genes(const BulkPanel& bulk, const ReferencePanel& ref);

/// Reorder covariate rows to follow sample_ids; every id must be present exactly once.
CovariateTable match_samples(const CovariateTable& table, const std::vector<std::string>& sample_ids);

/// Subset a bulk panel to the listed genes (in the given order).
BulkPanel select_genes(const BulkPanel& panel, const std::vector<std::string>& gene_ids);

/**
 * Optional expression filters on the reference panel.
 *
 * min_mean drops genes whose largest pooled type mean is below the threshold;
 * max_quantile (in (0,1]) drops genes exceeding that quantile of pooled means in any
 * cell type. Returns the kept gene ids in reference order.
 */
std::vector<std::string> filter_genes(const ReferencePanel& ref, double min_mean, double max_quantile);

/// Decimal text with 17 significant digits; round-trips any finite double.
std::string format_real(double value);

}  // namespace mead

#endif  // MEAD_CORE_HPP
