#include "kepler/kg.hpp"

#include <algorithm>
#include <istream>

namespace kepler {

ParsedTriplets parse_triplets(std::istream& in) {
    ParsedTriplets out;
    TripletSet seen;
    std::string line;
    std::int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;

        const std::size_t t1 = line.find('\t');
        const std::size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
        const std::size_t t3 = t2 == std::string::npos ? std::string::npos : line.find('\t', t2 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos || t3 != std::string::npos)
            throw ParseError("triplet parse error at line " + std::to_string(line_no) +
                             ": expected 3 tab-separated fields");
        const std::string h = line.substr(0, t1);
        const std::string r = line.substr(t1 + 1, t2 - t1 - 1);
        const std::string t = line.substr(t2 + 1);
        if (h.empty() || r.empty() || t.empty())
            throw ParseError("triplet parse error at line " + std::to_string(line_no) +
                             ": empty field");

        Triplet trip;
        trip.head = out.entities.get_or_add(h);
        trip.relation = out.relations.get_or_add(r);
        trip.tail = out.entities.get_or_add(t);
        if (!seen.insert(trip).second) {
            ++out.duplicates;
            continue;
        }
        out.triplets.push_back(trip);
    }
    return out;
}

KnowledgeGraph::KnowledgeGraph(IdCatalog entities, IdCatalog relations,
                               std::vector<Triplet> triplets)
    : entities_(std::move(entities)), relations_(std::move(relations)),
      triplets_(std::move(triplets)) {
    TripletSet seen;
    seen.reserve(triplets_.size());
    for (const Triplet& t : triplets_) {
        if (t.head < 0 || t.head >= entities_.size())
            throw std::invalid_argument("build_graph: dangling head id " + std::to_string(t.head));
        if (t.tail < 0 || t.tail >= entities_.size())
            throw std::invalid_argument("build_graph: dangling tail id " + std::to_string(t.tail));
        if (t.relation < 0 || t.relation >= relations_.size())
            throw std::invalid_argument("build_graph: dangling relation id " +
                                        std::to_string(t.relation));
        if (!seen.insert(t).second)
            throw std::invalid_argument("build_graph: duplicate triplet (" +
                                        std::to_string(t.head) + "," + std::to_string(t.relation) +
                                        "," + std::to_string(t.tail) + ")");
        out_index_[key(t.head, t.relation)].push_back(t.tail);
        in_index_[key(t.tail, t.relation)].push_back(t.head);
    }
    for (auto& [k, v] : out_index_) std::sort(v.begin(), v.end());
    for (auto& [k, v] : in_index_) std::sort(v.begin(), v.end());
}

namespace {
const std::vector<std::int32_t> kEmpty;
}

const std::vector<std::int32_t>& KnowledgeGraph::tails_of(std::int32_t h, std::int32_t r) const {
    auto it = out_index_.find(key(h, r));
    return it == out_index_.end() ? kEmpty : it->second;
}

const std::vector<std::int32_t>& KnowledgeGraph::heads_of(std::int32_t t, std::int32_t r) const {
    auto it = in_index_.find(key(t, r));
    return it == in_index_.end() ? kEmpty : it->second;
}

bool KnowledgeGraph::contains(const Triplet& t) const {
    const auto& tails = tails_of(t.head, t.relation);
    return std::binary_search(tails.begin(), tails.end(), t.tail);
}

std::int64_t KnowledgeGraph::out_degree_total() const {
    std::int64_t n = 0;
    for (const auto& [k, v] : out_index_) n += static_cast<std::int64_t>(v.size());
    return n;
}

std::int64_t KnowledgeGraph::in_degree_total() const {
    std::int64_t n = 0;
    for (const auto& [k, v] : in_index_) n += static_cast<std::int64_t>(v.size());
    return n;
}

std::vector<std::int32_t> known_true(const KnowledgeGraph& kg_union, QueryDirection dir,
                                     std::int32_t anchor, std::int32_t relation) {
    if (anchor < 0 || anchor >= kg_union.entities().size() || relation < 0 ||
        relation >= kg_union.relations().size())
        return {};
    return dir == QueryDirection::TailQuery ? kg_union.tails_of(anchor, relation)
                                            : kg_union.heads_of(anchor, relation);
}

std::vector<std::int32_t> occurring_entities(const std::vector<Triplet>& triplets) {
    std::vector<std::int32_t> ids;
    ids.reserve(triplets.size() * 2);
    for (const Triplet& t : triplets) {
        ids.push_back(t.head);
        ids.push_back(t.tail);
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

std::vector<std::int32_t> occurring_relations(const std::vector<Triplet>& triplets) {
    std::vector<std::int32_t> ids;
    ids.reserve(triplets.size());
    for (const Triplet& t : triplets) ids.push_back(t.relation);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

} // namespace kepler
