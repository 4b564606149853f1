#include "test_util.hpp"

#include "mead/deconv.hpp"
#include "mead/rng.hpp"

#include <algorithm>
#include <map>
#include <set>

using namespace mead;

namespace {

std::vector<std::pair<int, int>> clique(int first, int size) {
    std::vector<std::pair<int, int>> out;
    for (int a = first; a < first + size; ++a)
        for (int b = a + 1; b < first + size; ++b) out.emplace_back(a, b);
    return out;
}

std::vector<int> fold_sizes(const std::vector<int>& folds, int C) {
    std::vector<int> sizes(static_cast<std::size_t>(C), 0);
    for (int f : folds) {
        REQUIRE(f >= 0);
        REQUIRE(f < C);
        ++sizes[static_cast<std::size_t>(f)];
    }
    return sizes;
}

bool component_intact(const std::vector<int>& folds, int first, int size) {
    for (int g = first; g < first + size; ++g)
        if (folds[static_cast<std::size_t>(g)] != folds[static_cast<std::size_t>(first)]) return false;
    return true;
}

}  // namespace

TEST_CASE("disjoint cliques become one fold each") {
    std::vector<std::pair<int, int>> pairs;
    for (int c = 0; c < 4; ++c) {
        auto q = clique(5 * c, 5);
        pairs.insert(pairs.end(), q.begin(), q.end());
    }
    const auto folds = cv_folds(make_dependence(20, pairs), 20, 4, 1);
    std::set<int> used;
    for (int c = 0; c < 4; ++c) {
        CHECK(component_intact(folds, 5 * c, 5));
        used.insert(folds[static_cast<std::size_t>(5 * c)]);
    }
    CHECK(used.size() == 4u);
}

TEST_CASE("no dependence gives balanced folds") {
    for (int C : {2, 3, 7, 10}) {
        const auto sizes = fold_sizes(cv_folds(make_dependence(53, {}), 53, C, 5), C);
        CHECK(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()) <= 1);
    }
}

TEST_CASE("three components into two folds merge the smallest two") {
    std::vector<std::pair<int, int>> pairs = clique(0, 6);
    for (auto p : clique(6, 3)) pairs.push_back(p);
    for (auto p : clique(9, 2)) pairs.push_back(p);
    const auto folds = cv_folds(make_dependence(11, pairs), 11, 2, 3);
    CHECK(component_intact(folds, 0, 6));
    CHECK(component_intact(folds, 6, 3));
    CHECK(component_intact(folds, 9, 2));
    CHECK(folds[6] == folds[9]);
    CHECK(folds[0] != folds[6]);
}

TEST_CASE("components are never split while there are enough of them") {
    Rng rng(17);
    std::vector<std::pair<int, int>> pairs;
    std::vector<std::pair<int, int>> comps;
    int g = 0;
    for (int c = 0; c < 25; ++c) {
        const int size = 1 + static_cast<int>(rng.uniform() * 8);
        for (int a = g; a + 1 < g + size; ++a) pairs.emplace_back(a, a + 1);  // a path keeps it connected
        comps.emplace_back(g, size);
        g += size;
    }
    const auto folds = cv_folds(make_dependence(g, pairs), g, 10, 2);
    for (auto [first, size] : comps) CHECK(component_intact(folds, first, size));
    for (int s : fold_sizes(folds, 10)) CHECK(s > 0);
}

TEST_CASE("a single large component is split into non-empty folds") {
    const Index G = 60;
    const DependenceSet band = banded_dependence(G, 4);
    const auto folds = cv_folds(band, G, 5, 9);
    for (int s : fold_sizes(folds, 5)) CHECK(s > 0);
    // Folds of a band are contiguous runs, so few band pairs cross folds.
    std::size_t crossing = 0;
    for (const auto& [a, b] : band.pairs) crossing += folds[static_cast<std::size_t>(a)] != folds[static_cast<std::size_t>(b)];
    CHECK(crossing < band.size() / 2);
}

TEST_CASE("fold assignment is a function of the seed") {
    const DependenceSet band = banded_dependence(80, 6);
    CHECK(cv_folds(band, 80, 4, 11) == cv_folds(band, 80, 4, 11));
}

TEST_CASE("invalid fold counts") {
    CHECK_THROWS_AS(cv_folds(make_dependence(5, {}), 5, 1, 0), ParameterError);
    CHECK_THROWS_AS(cv_folds(make_dependence(5, {}), 5, 6, 0), ParameterError);
}
