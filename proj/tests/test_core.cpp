#include "test_util.hpp"

#include "mead/core.hpp"
#include "mead/json_io.hpp"

#include <cmath>
#include <limits>

using namespace mead;
using testutil::TempDir;
using testutil::write_text;

TEST_CASE("bulk file parses in row and column order") {
    TempDir dir("bulk");
    write_text(dir.file("b.tsv"), "gene_id\ts1\ts2\nG1\t1\t2\nG2\t3\t4\nG3\t5\t6\n");
    const BulkPanel b = load_bulk(dir.file("b.tsv"));
    CHECK(b.gene_ids == std::vector<std::string>{"G1", "G2", "G3"});
    CHECK(b.sample_ids == std::vector<std::string>{"s1", "s2"});
    Matrix expected(3, 2);
    expected << 1, 2, 3, 4, 5, 6;
    CHECK(b.counts == expected);
}

TEST_CASE("bulk file errors") {
    TempDir dir("bulk_err");
    write_text(dir.file("h.tsv"), "gene_id\ts1\n");
    CHECK_THROWS_WITH_AS(load_bulk(dir.file("h.tsv")), doctest::Contains("no data rows"), FormatError);
    write_text(dir.file("d.tsv"), "gene_id\ts1\nG1\t1\nG1\t2\n");
    CHECK_THROWS_WITH_AS(load_bulk(dir.file("d.tsv")), doctest::Contains("G1"), FormatError);
    write_text(dir.file("n.tsv"), "gene_id\ts1\nG1\tabc\n");
    CHECK_THROWS_AS(load_bulk(dir.file("n.tsv")), FormatError);
    CHECK_THROWS_AS(load_bulk(dir.file("missing.tsv")), Error);
}

TEST_CASE("reference file pivots to per-individual matrices") {
    TempDir dir("ref");
    write_text(dir.file("r.tsv"),
               "gene_id\tindividual_id\tcell_type\tmean_count\tn_cells\n"
               "G1\tA\tT1\t1\t5\nG1\tA\tT2\t2\t5\nG2\tA\tT1\t3\t5\nG2\tA\tT2\t4\t5\n"
               "G1\tB\tT1\t5\t7\nG1\tB\tT2\t6\t7\nG2\tB\tT1\t7\t7\nG2\tB\tT2\t8\t7\n");
    const ReferencePanel r = load_reference(dir.file("r.tsv"));
    REQUIRE(r.individuals() == 2);
    CHECK(r.cell_types == std::vector<std::string>{"T1", "T2"});
    Matrix a(2, 2), b(2, 2);
    a << 1, 2, 3, 4;
    b << 5, 6, 7, 8;
    CHECK(r.means[0] == a);
    CHECK(r.means[1] == b);
    CHECK(r.cell_counts[1](0) == 7);
}

TEST_CASE("reference file errors") {
    TempDir dir("ref_err");
    const std::string header = "gene_id\tindividual_id\tcell_type\tmean_count\tn_cells\n";
    write_text(dir.file("m.tsv"), header + "G1\tA\tT1\t1\t5\nG1\tA\tT2\t2\t5\nG2\tA\tT1\t3\t5\n");
    CHECK_THROWS_WITH_AS(load_reference(dir.file("m.tsv")), doctest::Contains("G2"), FormatError);
    write_text(dir.file("neg.tsv"), header + "G1\tA\tT1\t-1\t5\n");
    CHECK_THROWS_AS(load_reference(dir.file("neg.tsv")), FormatError);
    write_text(dir.file("cells.tsv"), header + "G1\tA\tT1\t1\t0\n");
    CHECK_THROWS_AS(load_reference(dir.file("cells.tsv")), FormatError);
}

namespace {

BulkPanel bulk_of(std::vector<std::string> genes) {
    BulkPanel b;
    b.gene_ids = std::move(genes);
    b.sample_ids = {"s1"};
    b.counts = Matrix::Ones(static_cast<Index>(b.gene_ids.size()), 1);
    return b;
}

ReferencePanel ref_of(std::vector<std::string> genes) {
    ReferencePanel r;
    r.gene_ids = std::move(genes);
    r.cell_types = {"T1", "T2"};
    r.individual_ids = {"A", "B"};
    const Index G = static_cast<Index>(r.gene_ids.size());
    r.means = {Matrix::Constant(G, 2, 1.0), Matrix::Constant(G, 2, 2.0)};
    r.cell_counts = {Eigen::VectorXi::Ones(2), Eigen::VectorXi::Ones(2)};
    return r;
}

}  // namespace

TEST_CASE("gene alignment") {
    SUBCASE("identical sets are unchanged") {
        const auto a = align_genes(bulk_of({"a", "b", "c"}), ref_of({"a", "b", "c"}));
        CHECK(a.bulk.gene_ids == std::vector<std::string>{"a", "b", "c"});
        CHECK(a.report.dropped_from_bulk.empty());
        CHECK(a.report.dropped_from_reference.empty());
    }
    SUBCASE("extra bulk gene is dropped from bulk only") {
        const auto a = align_genes(bulk_of({"a", "x", "b", "c"}), ref_of({"c", "b", "a"}));
        CHECK(a.bulk.gene_ids == std::vector<std::string>{"a", "b", "c"});
        CHECK(a.reference.gene_ids == std::vector<std::string>{"a", "b", "c"});
        CHECK(a.report.dropped_from_bulk == std::vector<std::string>{"x"});
        CHECK(a.report.dropped_from_reference.empty());
    }
    SUBCASE("disjoint sets") {
        CHECK_THROWS_AS(align_genes(bulk_of({"a", "b"}), ref_of({"c", "d"})), AlignmentError);
    }
}

TEST_CASE("panels round trip through files") {
    TempDir dir("roundtrip");
    BulkPanel b = bulk_of({"a", "b", "c"});
    b.counts << 0.1, 1.0 / 3.0, 12345.678901234567;
    save_bulk(b, dir.file("b.tsv"));
    const BulkPanel b2 = load_bulk(dir.file("b.tsv"));
    CHECK(b2.counts == b.counts);
    CHECK(b2.gene_ids == b.gene_ids);

    const ReferencePanel r = ref_of({"a", "b"});
    save_reference(r, dir.file("r.tsv"));
    const ReferencePanel r2 = load_reference(dir.file("r.tsv"));
    CHECK(r2.means[1] == r.means[1]);
    CHECK(r2.individual_ids == r.individual_ids);
}

TEST_CASE("real formatting round trips") {
    for (double x : {0.1, 1.0 / 3.0, 1e-300, 6.02214076e23, -2.5}) CHECK(std::stod(format_real(x)) == x);
}

TEST_CASE("json matrix round trip and non-finite values") {
    Matrix m(2, 3);
    m << 1, 2, 3, 4.5, 1.0 / 7.0, -1e-9;
    CHECK(matrix_from_json(nlohmann::json::parse(dump_json(to_json(m)))) == m);
    Vector v(2);
    v << std::numeric_limits<double>::quiet_NaN(), 1.0;
    CHECK(dump_json(to_json(v), -1) == "[null,1]");
}
