#include "mead/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace mead {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find('\t', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

struct TsvFile {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;
};

TsvFile read_tsv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(path + ": cannot open file");
    TsvFile file;
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!have_header) {
            file.header = split_tabs(line);
            have_header = true;
            continue;
        }
        file.rows.push_back(split_tabs(line));
        file.line_numbers.push_back(lineno);
    }
    if (!have_header) throw FormatError(path + ": empty file");
    if (file.rows.empty()) throw FormatError(path + ": no data rows");
    return file;
}

double parse_real(const std::string& text, const std::string& path, std::size_t line, std::size_t column) {
    double value = 0.0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    if (first != last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || text.empty() || !std::isfinite(value)) {
        std::ostringstream msg;
        msg << path << ": non-numeric value '" << text << "' at line " << line << ", column " << column;
        throw FormatError(msg.str());
    }
    return value;
}

void check_unique(const std::vector<std::string>& ids, const std::string& what, const std::string& context) {
    std::unordered_set<std::string> seen;
    for (const auto& id : ids) {
        if (!seen.insert(id).second) throw FormatError(context + ": duplicate " + what + " '" + id + "'");
    }
}

void write_or_throw(std::ofstream& out, const std::string& path) {
    if (!out) throw FormatError(path + ": write failed");
}

}  // namespace

std::string format_real(double value) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

void validate(const BulkPanel& panel) {
    if (panel.counts.rows() < 1 || panel.counts.cols() < 1) throw FormatError("bulk panel: empty matrix");
    if (static_cast<Index>(panel.gene_ids.size()) != panel.counts.rows() ||
        static_cast<Index>(panel.sample_ids.size()) != panel.counts.cols())
        throw FormatError("bulk panel: id lists do not match matrix shape");
    check_unique(panel.gene_ids, "gene id", "bulk panel");
    check_unique(panel.sample_ids, "sample id", "bulk panel");
    if (!panel.counts.allFinite() || (panel.counts.array() < 0.0).any())
        throw FormatError("bulk panel: entries must be finite and non-negative");
}

void validate(const ReferencePanel& panel, bool allow_single_individual) {
    const Index G = panel.genes();
    const Index K = panel.types();
    const Index M = panel.individuals();
    if (G < 1) throw FormatError("reference panel: no genes");
    if (K < 2) throw FormatError("reference panel: at least two cell types are required");
    if (M < 1 || (M < 2 && !allow_single_individual))
        throw FormatError("reference panel: at least two reference individuals are required");
    check_unique(panel.gene_ids, "gene id", "reference panel");
    check_unique(panel.cell_types, "cell type", "reference panel");
    check_unique(panel.individual_ids, "individual id", "reference panel");
    if (static_cast<Index>(panel.means.size()) != M) throw FormatError("reference panel: wrong number of matrices");
    for (Index j = 0; j < M; ++j) {
        const Matrix& m = panel.means[j];
        if (m.rows() != G || m.cols() != K) throw FormatError("reference panel: matrix shape mismatch");
        if (!m.allFinite() || (m.array() < 0.0).any())
            throw FormatError("reference panel: mean counts must be finite and non-negative");
    }
}

void validate(const CovariateTable& table) {
    if (static_cast<Index>(table.sample_ids.size()) != table.values.rows() ||
        static_cast<Index>(table.names.size()) != table.values.cols())
        throw FormatError("covariate table: id lists do not match matrix shape");
    check_unique(table.sample_ids, "sample id", "covariate table");
    check_unique(table.names, "covariate name", "covariate table");
    if (!table.values.allFinite()) throw FormatError("covariate table: entries must be finite");
}

BulkPanel load_bulk(const std::string& path) {
    TsvFile file = read_tsv(path);
    if (file.header.size() < 2 || file.header[0] != "gene_id")
        throw FormatError(path + ": header must be 'gene_id' followed by sample ids");
    BulkPanel panel;
    panel.sample_ids.assign(file.header.begin() + 1, file.header.end());
    check_unique(panel.sample_ids, "sample id", path);
    const std::size_t N = panel.sample_ids.size();
    panel.counts.resize(static_cast<Index>(file.rows.size()), static_cast<Index>(N));
    std::unordered_set<std::string> seen;
    for (std::size_t r = 0; r < file.rows.size(); ++r) {
        const auto& row = file.rows[r];
        const std::size_t line = file.line_numbers[r];
        if (row.size() != N + 1) {
            std::ostringstream msg;
            msg << path << ": line " << line << " has " << row.size() << " fields, expected " << N + 1;
            throw FormatError(msg.str());
        }
        if (!seen.insert(row[0]).second) throw FormatError(path + ": duplicate gene id '" + row[0] + "'");
        panel.gene_ids.push_back(row[0]);
        for (std::size_t c = 0; c < N; ++c) {
            double v = parse_real(row[c + 1], path, line, c + 2);
            if (v < 0.0) {
                std::ostringstream msg;
                msg << path << ": negative count at line " << line << ", column " << c + 2;
                throw FormatError(msg.str());
            }
            panel.counts(static_cast<Index>(r), static_cast<Index>(c)) = v;
        }
    }
    return panel;
}

ReferencePanel load_reference(const std::string& path) {
    TsvFile file = read_tsv(path);
    const std::vector<std::string> expected = {"gene_id", "individual_id", "cell_type", "mean_count", "n_cells"};
    if (file.header != expected)
        throw FormatError(path + ": header must be 'gene_id individual_id cell_type mean_count n_cells'");

    ReferencePanel panel;
    std::unordered_map<std::string, std::size_t> gene_index, ind_index, type_index;
    auto intern = [](std::unordered_map<std::string, std::size_t>& index, std::vector<std::string>& order,
                     const std::string& key) {
        auto [it, inserted] = index.emplace(key, order.size());
        if (inserted) order.push_back(key);
        return it->second;
    };

    struct Entry {
        std::size_t gene, ind, type;
        double mean;
        int cells;
        std::size_t line;
    };
    std::vector<Entry> entries;
    entries.reserve(file.rows.size());
    for (std::size_t r = 0; r < file.rows.size(); ++r) {
        const auto& row = file.rows[r];
        const std::size_t line = file.line_numbers[r];
        if (row.size() != 5) {
            std::ostringstream msg;
            msg << path << ": line " << line << " has " << row.size() << " fields, expected 5";
            throw FormatError(msg.str());
        }
        double mean = parse_real(row[3], path, line, 4);
        if (mean < 0.0) {
            std::ostringstream msg;
            msg << path << ": negative mean_count at line " << line;
            throw FormatError(msg.str());
        }
        double cells = parse_real(row[4], path, line, 5);
        if (cells < 1.0 || cells != std::floor(cells)) {
            std::ostringstream msg;
            msg << path << ": n_cells must be a positive integer at line " << line;
            throw FormatError(msg.str());
        }
        entries.push_back({intern(gene_index, panel.gene_ids, row[0]), intern(ind_index, panel.individual_ids, row[1]),
                           intern(type_index, panel.cell_types, row[2]), mean, static_cast<int>(cells), line});
    }

    const std::size_t G = panel.gene_ids.size();
    const std::size_t M = panel.individual_ids.size();
    const std::size_t K = panel.cell_types.size();
    panel.means.assign(M, Matrix::Constant(static_cast<Index>(G), static_cast<Index>(K), -1.0));
    panel.cell_counts.assign(M, Eigen::VectorXi::Zero(static_cast<Index>(K)));
    std::vector<std::vector<bool>> gene_present(M, std::vector<bool>(G, false));

    for (const Entry& e : entries) {
        double& slot = panel.means[e.ind](static_cast<Index>(e.gene), static_cast<Index>(e.type));
        if (slot >= 0.0) {
            std::ostringstream msg;
            msg << path << ": duplicate entry (gene=" << panel.gene_ids[e.gene]
                << ", individual=" << panel.individual_ids[e.ind] << ", cell_type=" << panel.cell_types[e.type]
                << ") at line " << e.line;
            throw FormatError(msg.str());
        }
        slot = e.mean;
        gene_present[e.ind][e.gene] = true;
        int& cells = panel.cell_counts[e.ind](static_cast<Index>(e.type));
        if (cells == 0) {
            cells = e.cells;
        } else if (cells != e.cells) {
            std::ostringstream msg;
            msg << path << ": inconsistent n_cells for individual " << panel.individual_ids[e.ind] << ", cell type "
                << panel.cell_types[e.type] << " at line " << e.line;
            throw FormatError(msg.str());
        }
    }

    for (std::size_t j = 0; j < M; ++j) {
        for (std::size_t g = 0; g < G; ++g) {
            if (!gene_present[j][g]) {
                throw FormatError(path + ": inconsistent gene sets across individuals: gene '" + panel.gene_ids[g] +
                                  "' missing for individual '" + panel.individual_ids[j] + "'");
            }
        }
    }
    for (std::size_t g = 0; g < G; ++g) {
        for (std::size_t j = 0; j < M; ++j) {
            for (std::size_t k = 0; k < K; ++k) {
                if (panel.means[j](static_cast<Index>(g), static_cast<Index>(k)) < 0.0) {
                    throw FormatError(path + ": missing entry (gene=" + panel.gene_ids[g] + ", individual=" +
                                      panel.individual_ids[j] + ", cell_type=" + panel.cell_types[k] + ")");
                }
            }
        }
    }
    return panel;
}

CovariateTable load_covariates(const std::string& path) {
    TsvFile file = read_tsv(path);
    if (file.header.size() < 2 || file.header[0] != "sample_id")
        throw FormatError(path + ": header must be 'sample_id' followed by covariate names");
    CovariateTable table;
    table.names.assign(file.header.begin() + 1, file.header.end());
    check_unique(table.names, "covariate name", path);
    const std::size_t S = table.names.size();
    table.values.resize(static_cast<Index>(file.rows.size()), static_cast<Index>(S));
    for (std::size_t r = 0; r < file.rows.size(); ++r) {
        const auto& row = file.rows[r];
        const std::size_t line = file.line_numbers[r];
        if (row.size() != S + 1) {
            std::ostringstream msg;
            msg << path << ": line " << line << " has " << row.size() << " fields, expected " << S + 1;
            throw FormatError(msg.str());
        }
        table.sample_ids.push_back(row[0]);
        for (std::size_t c = 0; c < S; ++c)
            table.values(static_cast<Index>(r), static_cast<Index>(c)) = parse_real(row[c + 1], path, line, c + 2);
    }
    check_unique(table.sample_ids, "sample id", path);
    return table;
}

void save_bulk(const BulkPanel& panel, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    out << "gene_id";
    for (const auto& s : panel.sample_ids) out << '\t' << s;
    out << '\n';
    for (Index g = 0; g < panel.counts.rows(); ++g) {
        out << panel.gene_ids[static_cast<std::size_t>(g)];
        for (Index i = 0; i < panel.counts.cols(); ++i) out << '\t' << format_real(panel.counts(g, i));
        out << '\n';
    }
    write_or_throw(out, path);
}

void save_reference(const ReferencePanel& panel, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    out << "gene_id\tindividual_id\tcell_type\tmean_count\tn_cells\n";
    for (Index j = 0; j < panel.individuals(); ++j) {
        for (Index g = 0; g < panel.genes(); ++g) {
            for (Index k = 0; k < panel.types(); ++k) {
                out << panel.gene_ids[static_cast<std::size_t>(g)] << '\t'
                    << panel.individual_ids[static_cast<std::size_t>(j)] << '\t'
                    << panel.cell_types[static_cast<std::size_t>(k)] << '\t'
                    << format_real(panel.means[static_cast<std::size_t>(j)](g, k)) << '\t'
                    << std::max(1, panel.cell_counts[static_cast<std::size_t>(j)](k)) << '\n';
            }
        }
    }
    write_or_throw(out, path);
}

void save_covariates(const CovariateTable& table, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    out << "sample_id";
    for (const auto& n : table.names) out << '\t' << n;
    out << '\n';
    for (Index i = 0; i < table.values.rows(); ++i) {
        out << table.sample_ids[static_cast<std::size_t>(i)];
        for (Index s = 0; s < table.values.cols(); ++s) out << '\t' << format_real(table.values(i, s));
        out << '\n';
    }
    write_or_throw(out, path);
}

AlignedPanels align_genes(const BulkPanel& bulk, const ReferencePanel& ref) {
    std::unordered_map<std::string, Index> ref_index;
    for (Index g = 0; g < ref.genes(); ++g) ref_index.emplace(ref.gene_ids[static_cast<std::size_t>(g)], g);
    std::unordered_set<std::string> bulk_set(bulk.gene_ids.begin(), bulk.gene_ids.end());

    AlignedPanels out;
    std::vector<Index> bulk_rows, ref_rows;
    for (Index g = 0; g < bulk.genes(); ++g) {
        const std::string& id = bulk.gene_ids[static_cast<std::size_t>(g)];
        auto it = ref_index.find(id);
        if (it == ref_index.end()) {
            out.report.dropped_from_bulk.push_back(id);
        } else {
            bulk_rows.push_back(g);
            ref_rows.push_back(it->second);
        }
    }
    for (const auto& id : ref.gene_ids)
        if (!bulk_set.count(id)) out.report.dropped_from_reference.push_back(id);

    if (static_cast<Index>(bulk_rows.size()) < std::max<Index>(ref.types(), 1)) {
        std::ostringstream msg;
        msg << "only " << bulk_rows.size() << " genes shared between bulk and reference panels; at least "
            << ref.types() << " (the number of cell types) are required";
        throw AlignmentError(msg.str());
    }

    const Index G = static_cast<Index>(bulk_rows.size());
    out.bulk.sample_ids = bulk.sample_ids;
    out.bulk.counts.resize(G, bulk.samples());
    out.reference.cell_types = ref.cell_types;
    out.reference.individual_ids = ref.individual_ids;
    out.reference.cell_counts = ref.cell_counts;
    out.reference.means.assign(ref.means.size(), Matrix(G, ref.types()));
    for (Index r = 0; r < G; ++r) {
        out.bulk.gene_ids.push_back(bulk.gene_ids[static_cast<std::size_t>(bulk_rows[static_cast<std::size_t>(r)])]);
        out.bulk.counts.row(r) = bulk.counts.row(bulk_rows[static_cast<std::size_t>(r)]);
        for (std::size_t j = 0; j < ref.means.size(); ++j)
            out.reference.means[j].row(r) = ref.means[j].row(ref_rows[static_cast<std::size_t>(r)]);
    }
    out.reference.gene_ids = out.bulk.gene_ids;
    return out;
}

CovariateTable match_samples(const CovariateTable& table, const std::vector<std::string>& sample_ids) {
    std::unordered_map<std::string, Index> index;
    for (Index i = 0; i < table.values.rows(); ++i) index.emplace(table.sample_ids[static_cast<std::size_t>(i)], i);
    if (index.size() != sample_ids.size())
        throw FormatError("covariate table: sample ids do not match the proportions one-to-one");
    CovariateTable out;
    out.names = table.names;
    out.sample_ids = sample_ids;
    out.values.resize(static_cast<Index>(sample_ids.size()), table.values.cols());
    for (std::size_t i = 0; i < sample_ids.size(); ++i) {
        auto it = index.find(sample_ids[i]);
        if (it == index.end()) throw FormatError("covariate table: no row for sample '" + sample_ids[i] + "'");
        out.values.row(static_cast<Index>(i)) = table.values.row(it->second);
    }
    return out;
}

BulkPanel select_genes(const BulkPanel& panel, const std::vector<std::string>& gene_ids) {
    std::unordered_map<std::string, Index> index;
    for (Index g = 0; g < panel.genes(); ++g) index.emplace(panel.gene_ids[static_cast<std::size_t>(g)], g);
    BulkPanel out;
    out.sample_ids = panel.sample_ids;
    out.gene_ids = gene_ids;
    out.counts.resize(static_cast<Index>(gene_ids.size()), panel.samples());
    for (std::size_t g = 0; g < gene_ids.size(); ++g) {
        auto it = index.find(gene_ids[g]);
        if (it == index.end()) throw AlignmentError("gene '" + gene_ids[g] + "' not present in panel");
        out.counts.row(static_cast<Index>(g)) = panel.counts.row(it->second);
    }
    return out;
}

std::vector<std::string> filter_genes(const ReferencePanel& ref, double min_mean, double max_quantile) {
    if (!(max_quantile > 0.0 && max_quantile <= 1.0)) throw ParameterError("max_quantile must lie in (0, 1]");
    const Index G = ref.genes();
    const Index K = ref.types();
    Matrix pooled = Matrix::Zero(G, K);
    for (const Matrix& m : ref.means) pooled += m;
    pooled /= static_cast<double>(ref.means.size());

    Vector cutoff = Vector::Constant(K, std::numeric_limits<double>::infinity());
    if (max_quantile < 1.0) {
        for (Index k = 0; k < K; ++k) {
            std::vector<double> col(pooled.col(k).data(), pooled.col(k).data() + G);
            std::sort(col.begin(), col.end());
            auto pos = static_cast<std::size_t>(std::ceil(max_quantile * static_cast<double>(G))) - 1;
            cutoff(k) = col[std::min(pos, col.size() - 1)];
        }
    }
    std::vector<std::string> kept;
    for (Index g = 0; g < G; ++g) {
        if (pooled.row(g).maxCoeff() < min_mean) continue;
        if ((pooled.row(g).transpose().array() > cutoff.array()).any()) continue;
        kept.push_back(ref.gene_ids[static_cast<std::size_t>(g)]);
    }
    return kept;
}

}  // namespace mead
