#include "mead/deconv.hpp"
#include "mead/rng.hpp"

#include <algorithm>
#include <numeric>

namespace mead {

namespace {

using Graph = std::vector<std::vector<int>>;

std::vector<std::vector<int>> components(const Graph& adj) {
    const int n = static_cast<int>(adj.size());
    std::vector<int> seen(static_cast<std::size_t>(n), 0);
    std::vector<std::vector<int>> out;
    for (int start = 0; start < n; ++start) {
        if (seen[static_cast<std::size_t>(start)]) continue;
        std::vector<int> comp{start};
        seen[static_cast<std::size_t>(start)] = 1;
        for (std::size_t head = 0; head < comp.size(); ++head) {
            for (int nb : adj[static_cast<std::size_t>(comp[head])]) {
                if (!seen[static_cast<std::size_t>(nb)]) {
                    seen[static_cast<std::size_t>(nb)] = 1;
                    comp.push_back(nb);
                }
            }
        }
        std::sort(comp.begin(), comp.end());
        out.push_back(std::move(comp));
    }
    return out;
}

// Largest component first into the currently smallest fold; ties go to the lower fold index.
std::vector<int> pack_components(const std::vector<std::vector<int>>& comps, Index genes, int folds) {
    std::vector<std::size_t> order(comps.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return comps[a].size() > comps[b].size(); });
    std::vector<std::size_t> load(static_cast<std::size_t>(folds), 0);
    std::vector<int> assignment(static_cast<std::size_t>(genes), 0);
    for (std::size_t c : order) {
        const auto target = static_cast<std::size_t>(std::min_element(load.begin(), load.end()) - load.begin());
        load[target] += comps[c].size();
        for (int g : comps[c]) assignment[static_cast<std::size_t>(g)] = static_cast<int>(target);
    }
    return assignment;
}

// Medoid search on one component under the 0/1 dissimilarity. The cost of a medoid set
// is the number of genes outside every medoid's closed neighbourhood.
class MedoidSearch {
public:
    MedoidSearch(const Graph& adj, const std::vector<int>& members, const std::vector<int>& priority)
        : adj_(adj), members_(members), priority_(priority), cover_(adj.size(), 0) {}

    std::vector<int> run(int k, int max_swaps) {
        std::vector<int> medoids;
        std::vector<char> is_medoid(adj_.size(), 0);
        for (int step = 0; step < k; ++step) {
            int best = -1;
            int best_gain = -1;
            for (int h : members_) {
                if (is_medoid[static_cast<std::size_t>(h)]) continue;
                int gain = 0;
                visit_closed(h, [&](int i) { gain += cover_[static_cast<std::size_t>(i)] == 0; });
                if (gain > best_gain || (gain == best_gain && better(h, best))) {
                    best = h;
                    best_gain = gain;
                }
            }
            medoids.push_back(best);
            is_medoid[static_cast<std::size_t>(best)] = 1;
            visit_closed(best, [&](int i) { ++cover_[static_cast<std::size_t>(i)]; });
        }

        std::vector<char> in_m(adj_.size(), 0);
        for (int iter = 0; iter < max_swaps; ++iter) {
            int best_delta = 0;
            std::size_t best_slot = 0;
            int best_in = -1;
            for (std::size_t slot = 0; slot < medoids.size(); ++slot) {
                const int m = medoids[slot];
                int loss = 0;
                visit_closed(m, [&](int i) {
                    in_m[static_cast<std::size_t>(i)] = 1;
                    loss += cover_[static_cast<std::size_t>(i)] == 1;
                });
                for (int h : members_) {
                    if (is_medoid[static_cast<std::size_t>(h)]) continue;
                    int gain = 0;
                    visit_closed(h, [&](int i) {
                        const int c = cover_[static_cast<std::size_t>(i)] - in_m[static_cast<std::size_t>(i)];
                        gain += c == 0;
                    });
                    const int delta = loss - gain;  // change in cost
                    if (delta < best_delta || (delta == best_delta && best_in >= 0 && delta < 0 &&
                                               better(h, best_in))) {
                        best_delta = delta;
                        best_slot = slot;
                        best_in = h;
                    }
                }
                visit_closed(m, [&](int i) { in_m[static_cast<std::size_t>(i)] = 0; });
            }
            if (best_in < 0) break;
            const int out = medoids[best_slot];
            visit_closed(out, [&](int i) { --cover_[static_cast<std::size_t>(i)]; });
            visit_closed(best_in, [&](int i) { ++cover_[static_cast<std::size_t>(i)]; });
            is_medoid[static_cast<std::size_t>(out)] = 0;
            is_medoid[static_cast<std::size_t>(best_in)] = 1;
            medoids[best_slot] = best_in;
        }
        return medoids;
    }

private:
    template <class F>
    void visit_closed(int g, F&& f) const {
        f(g);
        for (int nb : adj_[static_cast<std::size_t>(g)]) f(nb);
    }

    bool better(int a, int b) const {
        return b < 0 || priority_[static_cast<std::size_t>(a)] < priority_[static_cast<std::size_t>(b)];
    }

    const Graph& adj_;
    const std::vector<int>& members_;
    const std::vector<int>& priority_;
    std::vector<int> cover_;
};

// Multi-source BFS from the medoids; equal hop distance resolves to the medoid with the better priority.
void assign_to_medoids(const Graph& adj, const std::vector<int>& medoids, const std::vector<int>& priority,
                       int first_fold, std::vector<int>& assignment) {
    std::vector<int> owner(adj.size(), -1);
    std::vector<int> frontier;
    for (std::size_t s = 0; s < medoids.size(); ++s) {
        owner[static_cast<std::size_t>(medoids[s])] = static_cast<int>(s);
        frontier.push_back(medoids[s]);
    }
    auto rank = [&](int slot) { return priority[static_cast<std::size_t>(medoids[static_cast<std::size_t>(slot)])]; };
    std::vector<char> in_next(adj.size(), 0);
    while (!frontier.empty()) {
        std::vector<int> next;
        for (int g : frontier) {
            const int mine = owner[static_cast<std::size_t>(g)];
            for (int nb : adj[static_cast<std::size_t>(g)]) {
                auto& o = owner[static_cast<std::size_t>(nb)];
                if (o < 0) {
                    o = mine;
                    in_next[static_cast<std::size_t>(nb)] = 1;
                    next.push_back(nb);
                } else if (in_next[static_cast<std::size_t>(nb)] && rank(mine) < rank(o)) {
                    o = mine;
                }
            }
        }
        for (int g : next) in_next[static_cast<std::size_t>(g)] = 0;
        frontier = std::move(next);
    }
    for (std::size_t g = 0; g < adj.size(); ++g)
        if (owner[g] >= 0) assignment[g] = first_fold + owner[g];
}

}  // namespace

std::vector<int> cv_folds(const DependenceSet& dep, Index genes, int folds, std::uint64_t seed) {
    if (folds < 2) throw ParameterError("cross-validation needs at least 2 folds");
    if (folds > genes) {
        throw ParameterError("cross-validation fold count " + std::to_string(folds) + " exceeds the number of genes (" +
                             std::to_string(genes) + ")");
    }
    const Graph adj = adjacency(dep, genes);
    const auto comps = components(adj);
    if (comps.size() >= static_cast<std::size_t>(folds)) return pack_components(comps, genes, folds);

    // Fewer components than folds: every component gets at least one fold, the rest go
    // to components in proportion to their size (highest-averages allocation).
    std::vector<int> share(comps.size(), 1);
    for (int extra = folds - static_cast<int>(comps.size()); extra > 0; --extra) {
        std::size_t pick = comps.size();
        double best = -1.0;
        for (std::size_t c = 0; c < comps.size(); ++c) {
            if (share[c] >= static_cast<int>(comps[c].size())) continue;
            const double q = static_cast<double>(comps[c].size()) / share[c];
            if (q > best) {
                best = q;
                pick = c;
            }
        }
        ++share[pick];
    }

    Rng rng(seed, 0x666f6c6473ULL);
    const std::vector<int> perm = rng.permutation(static_cast<int>(genes));
    std::vector<int> priority(static_cast<std::size_t>(genes));
    for (int i = 0; i < static_cast<int>(genes); ++i) priority[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = i;

    std::vector<int> assignment(static_cast<std::size_t>(genes), 0);
    int next_fold = 0;
    for (std::size_t c = 0; c < comps.size(); ++c) {
        const auto& members = comps[c];
        if (share[c] == 1) {
            for (int g : members) assignment[static_cast<std::size_t>(g)] = next_fold;
        } else {
            MedoidSearch search(adj, members, priority);
            const auto medoids = search.run(share[c], 100);
            assign_to_medoids(adj, medoids, priority, next_fold, assignment);
        }
        next_fold += share[c];
    }
    return assignment;
}

}  // namespace mead
