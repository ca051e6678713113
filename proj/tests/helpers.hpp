#pragma once
// Shared test utilities and independent oracles. Everything here only ever
// drives forward passes or recomputes results from first principles, so the
// checks stay independent of the code paths under test.

#include <algorithm>
#include <functional>
#include <numeric>
#include <sstream>
#include <vector>

#include "kepler/gradcheck.hpp"
#include "kepler/kg.hpp"
#include "kepler/rng.hpp"
#include "kepler/tape.hpp"

namespace kepler::test {

inline Tensor random_tensor(int rows, int cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(rows, cols);
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// max finite-difference error of d value(build) / d params over all params
inline double max_grad_err(ParameterSet& params,
                           const std::function<Tape::Id(Tape&)>& build, double h = 1e-5,
                           int checks_per_param = 24, std::uint64_t seed = 1) {
    auto loss = [&]() {
        Tape tape(&params);
        return tape.value(build(tape)).item();
    };
    auto grads = [&]() {
        Tape tape(&params);
        tape.backward(build(tape));
    };
    return finite_diff_check(params, loss, grads, h, checks_per_param, seed).max_rel_err;
}

// mean-tie rank by explicit sorting, independent of rank_query's counting
inline double sorted_rank_oracle(const std::vector<double>& scores, std::size_t answer,
                                 const std::vector<char>& filtered) {
    struct Entry {
        double score;
        bool is_answer;
    };
    std::vector<Entry> entries;
    for (std::size_t i = 0; i < scores.size(); ++i)
        if (!filtered[i]) entries.push_back({scores[i], i == answer});
    std::stable_sort(entries.begin(), entries.end(),
                     [](const Entry& a, const Entry& b) { return a.score > b.score; });
    std::size_t pos = 0;
    while (pos < entries.size() && !entries[pos].is_answer) ++pos;
    // tied block around the answer
    std::size_t lo = pos, hi = pos;
    while (lo > 0 && entries[lo - 1].score == entries[pos].score) --lo;
    while (hi + 1 < entries.size() && entries[hi + 1].score == entries[pos].score) ++hi;
    double sum = 0.0;
    for (std::size_t r = lo; r <= hi; ++r) sum += static_cast<double>(r + 1);
    return sum / static_cast<double>(hi - lo + 1);
}

// brute-force known_true: linear scan over the triplet list
inline std::vector<std::int32_t> scan_known_true(const std::vector<Triplet>& triplets,
                                                 bool tail_query, std::int32_t anchor,
                                                 std::int32_t relation) {
    std::vector<std::int32_t> out;
    for (const Triplet& t : triplets) {
        if (t.relation != relation) continue;
        if (tail_query && t.head == anchor) out.push_back(t.tail);
        if (!tail_query && t.tail == anchor) out.push_back(t.head);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

// random graph with dense ids, no duplicate triplets
inline KnowledgeGraph random_graph(int n_entities, int n_relations, int n_triplets, Rng& rng) {
    IdCatalog ents, rels;
    for (int i = 0; i < n_entities; ++i) ents.get_or_add("E" + std::to_string(i));
    for (int i = 0; i < n_relations; ++i) rels.get_or_add("R" + std::to_string(i));
    TripletSet seen;
    std::vector<Triplet> triplets;
    int guard = 0;
    while (static_cast<int>(triplets.size()) < n_triplets && ++guard < n_triplets * 100) {
        Triplet t{rng.index(static_cast<std::size_t>(n_entities)),
                  rng.index(static_cast<std::size_t>(n_relations)),
                  rng.index(static_cast<std::size_t>(n_entities))};
        if (seen.insert(t).second) triplets.push_back(t);
    }
    return KnowledgeGraph(ents, rels, triplets);
}

inline std::vector<std::int32_t> entity_set(const std::vector<Triplet>& ts) {
    return occurring_entities(ts);
}

inline bool disjoint(const std::vector<std::int32_t>& a, const std::vector<std::int32_t>& b) {
    std::vector<std::int32_t> inter;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
    return inter.empty();
}

// connectivity of a node set within the given triplets (undirected)
inline bool connected_in(const std::vector<std::int32_t>& nodes,
                         const std::vector<Triplet>& triplets) {
    if (nodes.empty()) return true;
    std::unordered_map<std::int32_t, std::vector<std::int32_t>> adj;
    std::unordered_set<std::int32_t> node_set(nodes.begin(), nodes.end());
    for (const Triplet& t : triplets)
        if (node_set.count(t.head) && node_set.count(t.tail)) {
            adj[t.head].push_back(t.tail);
            adj[t.tail].push_back(t.head);
        }
    std::unordered_set<std::int32_t> seen{nodes[0]};
    std::vector<std::int32_t> stack{nodes[0]};
    while (!stack.empty()) {
        const std::int32_t u = stack.back();
        stack.pop_back();
        for (std::int32_t v : adj[u])
            if (seen.insert(v).second) stack.push_back(v);
    }
    return seen.size() == nodes.size();
}

} // namespace kepler::test
