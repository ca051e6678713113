#pragma once
// Canonical knowledge-graph data model: dense-indexed entities and relations,
// triplet storage, and (entity, relation) adjacency for negative-sampling
// filters and filtered evaluation. Graphs are immutable after build() and
// safe to share read-only across threads.

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace kepler {

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dense id <-> external string id, first-seen order, bijective.
class IdCatalog {
public:
    std::int32_t get_or_add(const std::string& external) {
        auto it = index_.find(external);
        if (it != index_.end()) return it->second;
        const auto id = static_cast<std::int32_t>(names_.size());
        names_.push_back(external);
        index_.emplace(external, id);
        return id;
    }

    std::int32_t find(const std::string& external) const {
        auto it = index_.find(external);
        return it == index_.end() ? -1 : it->second;
    }

    const std::string& name(std::int32_t id) const { return names_[static_cast<std::size_t>(id)]; }
    std::int32_t size() const { return static_cast<std::int32_t>(names_.size()); }
    bool empty() const { return names_.empty(); }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, std::int32_t> index_;
};

struct Triplet {
    std::int32_t head = 0;
    std::int32_t relation = 0;
    std::int32_t tail = 0;

    bool operator==(const Triplet& o) const {
        return head == o.head && relation == o.relation && tail == o.tail;
    }
};

struct TripletHash {
    std::size_t operator()(const Triplet& t) const {
        std::uint64_t h = static_cast<std::uint32_t>(t.head);
        h = h * 0x9e3779b97f4a7c15ULL + static_cast<std::uint32_t>(t.relation);
        h = h * 0x9e3779b97f4a7c15ULL + static_cast<std::uint32_t>(t.tail);
        return static_cast<std::size_t>(h ^ (h >> 32));
    }
};

using TripletSet = std::unordered_set<Triplet, TripletHash>;

struct ParsedTriplets {
    std::vector<Triplet> triplets;
    IdCatalog entities;
    IdCatalog relations;
    std::uint64_t duplicates = 0;
};

// One triplet per line, "head<TAB>relation<TAB>tail". Duplicate lines are
// dropped and counted; malformed lines raise ParseError with the line number.
ParsedTriplets parse_triplets(std::istream& in);

class KnowledgeGraph {
public:
    KnowledgeGraph() = default;
    // Validates ids against the catalogs and builds both adjacency indices.
    KnowledgeGraph(IdCatalog entities, IdCatalog relations, std::vector<Triplet> triplets);

    static KnowledgeGraph from_parsed(ParsedTriplets p) {
        return KnowledgeGraph(std::move(p.entities), std::move(p.relations),
                              std::move(p.triplets));
    }

    const IdCatalog& entities() const { return entities_; }
    const IdCatalog& relations() const { return relations_; }
    const std::vector<Triplet>& triplets() const { return triplets_; }
    std::int64_t n_triplets() const { return static_cast<std::int64_t>(triplets_.size()); }

    // Sorted tail ids t with (h, r, t) present; empty when none.
    const std::vector<std::int32_t>& tails_of(std::int32_t h, std::int32_t r) const;
    // Sorted head ids h with (h, r, t) present.
    const std::vector<std::int32_t>& heads_of(std::int32_t t, std::int32_t r) const;

    bool contains(const Triplet& t) const;

    std::int64_t out_degree_total() const;
    std::int64_t in_degree_total() const;

private:
    static std::uint64_t key(std::int32_t ent, std::int32_t rel) {
        return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(ent)) << 32) |
               static_cast<std::uint32_t>(rel);
    }

    IdCatalog entities_;
    IdCatalog relations_;
    std::vector<Triplet> triplets_;
    std::unordered_map<std::uint64_t, std::vector<std::int32_t>> out_index_;
    std::unordered_map<std::uint64_t, std::vector<std::int32_t>> in_index_;
};

enum class QueryDirection { TailQuery, HeadQuery }; // (h, r, ?) vs (?, r, t)

// All entities completing the query to a true triplet in kg_union. Unknown
// ids yield an empty set.
std::vector<std::int32_t> known_true(const KnowledgeGraph& kg_union, QueryDirection dir,
                                     std::int32_t anchor, std::int32_t relation);

enum class SplitSetting { Transductive, Inductive };

struct DataSplit {
    SplitSetting setting = SplitSetting::Transductive;
    // Train graph; its catalogs span every entity/relation in the split, so
    // valid/test triplets below resolve in the same dense id space (inductive
    // eval entities are present in the catalogs but in no train triplet).
    KnowledgeGraph train;
    std::vector<Triplet> valid;
    std::vector<Triplet> test;
    // Node sets of the individual sampled connected subgraphs, inductive only.
    std::vector<std::vector<std::int32_t>> valid_subgraphs;
    std::vector<std::vector<std::int32_t>> test_subgraphs;
};

// Distinct entity ids occurring in the given triplets, sorted.
std::vector<std::int32_t> occurring_entities(const std::vector<Triplet>& triplets);
std::vector<std::int32_t> occurring_relations(const std::vector<Triplet>& triplets);

} // namespace kepler
