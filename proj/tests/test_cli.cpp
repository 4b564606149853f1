#include "test_util.hpp"

#include "mead/json_io.hpp"

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>

using testutil::TempDir;
using testutil::read_text;
using testutil::write_text;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(MEAD_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// One simulated data set shared by the end-to-end cases.
const TempDir& simulated() {
    static TempDir dir = [] {
        TempDir d("cli_sim");
        write_text(d.file("c.json"),
                   R"({"G": 1000, "N": 10, "M": 6, "bandwidth": 20, "external_samples": 30, "seed": 7})");
        REQUIRE(run("simulate --config " + d.file("c.json") + " --out " + d.file("data")) == 0);
        return d;
    }();
    return dir;
}

std::string data(const std::string& name) { return simulated().file("data/" + name); }

}  // namespace

TEST_CASE("usage errors exit with status 2") {
    TempDir dir("cli_usage");
    CHECK(run("deconv --ref x.tsv --out " + dir.file("o")) == 2);
    CHECK(run("no-such-command") == 2);
    CHECK(run("deconv --bulk " + data("bulk.tsv") + " --ref " + data("reference.tsv") + " --dep-none --dep-alpha 0.1 --out " +
              dir.file("o")) == 2);
}

TEST_CASE("runtime errors exit with status 1") {
    TempDir dir("cli_runtime");
    write_text(dir.file("bad.tsv"), "gene_id\ts1\nG1\t1\nG1\t2\n");
    CHECK(run("deconv --bulk " + dir.file("bad.tsv") + " --ref " + data("reference.tsv") + " --out " + dir.file("o")) == 1);
}

TEST_CASE("simulate writes the data set") {
    for (const char* f : {"bulk.tsv", "reference.tsv", "external.tsv", "truth.json", "manifest.json", "true_dependence.tsv"})
        CHECK(fs::exists(data(f)));
    TempDir dir("cli_sim_seed");
    write_text(dir.file("c.json"), R"({"G": 100, "N": 3, "M": 3, "bandwidth": 5, "seed": 7})");
    REQUIRE(run("simulate --config " + dir.file("c.json") + " --out " + dir.file("again")) == 0);
    REQUIRE(run("simulate --config " + dir.file("c.json") + " --out " + dir.file("twice")) == 0);
    CHECK(read_text(dir.file("again/bulk.tsv")) == read_text(dir.file("twice/bulk.tsv")));
}

TEST_CASE("end to end deconvolution with the true dependence") {
    TempDir dir("cli_deconv");
    const std::string base = "deconv --bulk " + data("bulk.tsv") + " --ref " + data("reference.tsv") + " --dep " +
                             data("true_dependence.tsv") + " --seed 3";
    REQUIRE(run(base + " --threads 1 --out " + dir.file("a")) == 0);
    const auto j = mead::read_json(dir.file("a/results.json"));
    const auto& samples = j.at("samples");
    REQUIRE(samples.size() == 10u);
    for (const auto& s : samples) {
        REQUIRE(s.at("intervals").size() == 4u);
        double total = 0.0;
        for (const auto& v : s.at("p_hat")) total += v.get<double>();
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
        for (const auto& iv : s.at("intervals")) CHECK(iv.at("lower").get<double>() <= iv.at("upper").get<double>());
    }
    CHECK(j.at("dependence").at("pairs").get<int>() > 0);
    for (const char* f : {"summary.tsv", "weights.tsv", "manifest.json"}) CHECK(fs::exists(dir.file(std::string("a/") + f)));

    REQUIRE(run(base + " --threads 1 --out " + dir.file("b")) == 0);
    CHECK(read_text(dir.file("a/results.json")) == read_text(dir.file("b/results.json")));
    REQUIRE(run(base + " --threads 3 --out " + dir.file("c")) == 0);
    CHECK(read_text(dir.file("a/results.json")) == read_text(dir.file("c/results.json")));

    const auto manifest = mead::read_json(dir.file("a/manifest.json"));
    CHECK(manifest.at("seed").get<int>() == 3);
    CHECK(manifest.dump().find("sha256") != std::string::npos);
}

TEST_CASE("estimated dependence and downstream regression") {
    TempDir dir("cli_chain");
    REQUIRE(run("depnet --external " + data("external.tsv") + " --alpha 0.2 --out " + dir.file("dep")) == 0);
    CHECK(fs::exists(dir.file("dep/dependence.tsv")));
    REQUIRE(run("deconv --bulk " + data("bulk.tsv") + " --ref " + data("reference.tsv") + " --dep-alpha 0.2 --external " +
                data("external.tsv") + " --no-cv --seed 1 --out " + dir.file("fit")) == 0);

    std::string cov = "sample_id\tgroup\n";
    const auto truth = mead::read_json(data("truth.json"));
    const auto& ids = truth.at("sample_ids");
    for (std::size_t i = 0; i < ids.size(); ++i) cov += ids[i].get<std::string>() + "\t" + std::to_string(i % 2) + "\n";
    write_text(dir.file("cov.tsv"), cov);
    REQUIRE(run("downstream --proportions " + dir.file("fit/results.json") + " --covariates " + dir.file("cov.tsv") +
                " --genes 1000 --out " + dir.file("ds")) == 0);
    const auto ds = mead::read_json(dir.file("ds/results.json"));
    CHECK(ds.dump().find("wald") != std::string::npos);
}

TEST_CASE("identify reports a verdict") {
    TempDir dir("cli_identify");
    write_text(dir.file("u.tsv"), "gene_id\tA\tB\nG1\t1\t0\nG2\t2\t0\nG3\t0\t3\nG4\t0\t1\n");
    REQUIRE(run("identify --signature " + dir.file("u.tsv") + " --out " + dir.file("o")) == 0);
    CHECK(mead::read_json(dir.file("o/results.json")).at("verdict") == "not identifiable");
    CHECK(run("identify --signature " + dir.file("u.tsv") + " --ref " + data("reference.tsv")) == 2);
}

TEST_CASE("benchmarks run from the command line") {
    TempDir dir("cli_bench");
    write_text(dir.file("c.json"), R"({"G": 150, "N": 4, "M": 4, "bandwidth": 4, "external_samples": 0, "seed": 2})");
    REQUIRE(run("bench rmse --config " + dir.file("c.json") + " --replicates 2 --out " + dir.file("r")) == 0);
    REQUIRE(run("bench coverage --config " + dir.file("c.json") + " --replicates 2 --options '{\"dep\":\"truth\",\"cv_folds\":3}' --out " +
                dir.file("c")) == 0);
    const auto j = mead::read_json(dir.file("c/results.json"));
    CHECK(j.dump().find("mean") != std::string::npos);
}

TEST_CASE("single reference individual gives point estimates with equal weights") {
    TempDir dir("cli_single");
    write_text(dir.file("c.json"), R"({"G": 200, "N": 3, "M": 1, "bandwidth": 5, "external_samples": 0, "seed": 4})");
    REQUIRE(run("simulate --config " + dir.file("c.json") + " --out " + dir.file("d")) == 0);
    const std::string base = "deconv --bulk " + dir.file("d/bulk.tsv") + " --ref " + dir.file("d/reference.tsv");
    CHECK(run(base + " --out " + dir.file("refused")) == 1);
    REQUIRE(run(base + " --allow-single-individual --out " + dir.file("o")) == 0);
    const auto j = mead::read_json(dir.file("o/results.json"));
    CHECK(j.at("weights").at("mode") == "equal");
    CHECK_FALSE(j.at("samples")[0].contains("intervals"));
}
