#pragma once
// Corpus ingestion (description-length filtering) and construction of
// transductive / inductive link-prediction splits with verified invariants.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "kepler/kg.hpp"
#include "kepler/rng.hpp"

namespace kepler {

struct SplitError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EntityCatalog {
    // Indexed by the owning graph's dense entity ids.
    std::vector<std::string> descriptions;
    // (external id, reason) for every entity removed during ingestion.
    std::vector<std::pair<std::string, std::string>> dropped;
    std::uint64_t triplets_dropped = 0;
    std::uint64_t duplicate_triplets = 0;

    const std::string& description_of(std::int32_t id) const {
        return descriptions[static_cast<std::size_t>(id)];
    }
};

// Relation descriptions are optional per relation; only the variants that
// encode relation text require them.
struct RelationCatalog {
    std::vector<std::optional<std::string>> descriptions;

    bool has(std::int32_t id) const {
        return id >= 0 && id < static_cast<std::int32_t>(descriptions.size()) &&
               descriptions[static_cast<std::size_t>(id)].has_value();
    }
    const std::string& description_of(std::int32_t id) const {
        return *descriptions[static_cast<std::size_t>(id)];
    }
};

struct IngestResult {
    KnowledgeGraph graph;
    EntityCatalog catalog;
};

int count_words(const std::string& text);

// Description stream: "id<TAB>free text" per line, split on the first tab.
// Entities whose description is missing or shorter than min_words are
// dropped together with every triplet touching them.
IngestResult ingest_corpus(std::istream& triplet_stream, std::istream& description_stream,
                           int min_words = 5);

// Loads relation descriptions (same file format) against a relation catalog.
RelationCatalog load_relation_descriptions(std::istream& in, const IdCatalog& relations);

// Aligns a description file to an existing entity catalog (evaluation-time
// loading for splits read from disk). Entities without a description line get
// an empty string; encoder models reject them when asked to embed.
EntityCatalog load_entity_descriptions(std::istream& in, const IdCatalog& entities);

// Uniform eval sampling constrained so every eval entity/relation keeps at
// least one train triplet; deterministic under seed.
DataSplit split_transductive(const KnowledgeGraph& kg, std::int64_t n_valid, std::int64_t n_test,
                             std::uint64_t seed);

// Connected-subgraph sampling: uniform random root, breadth-first growth over
// the undirected view until the induced triplet budget is met, fresh roots
// for additional subgraphs. Entity and triplet sets of train/valid/test are
// mutually disjoint; every triplet incident to an eval entity leaves train.
DataSplit split_inductive(const KnowledgeGraph& kg, std::int64_t target_valid,
                          std::int64_t target_test, std::uint64_t seed);

struct SplitStats {
    std::int64_t n_entities = 0;
    std::int64_t n_relations = 0;
    std::int64_t n_train = 0;
    std::int64_t n_valid = 0;
    std::int64_t n_test = 0;
};

SplitStats split_stats(const DataSplit& split);

// train.txt / valid.txt / test.txt in the triplet file format plus
// stats.tsv ("key<TAB>value"). Byte-identical for identical splits.
void write_split(const DataSplit& split, const std::string& dir);
DataSplit read_split(const std::string& dir, SplitSetting setting);

std::string stats_to_tsv(const SplitStats& s);

} // namespace kepler
