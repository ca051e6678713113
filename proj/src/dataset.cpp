#include "kepler/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <istream>
#include <sstream>
#include <unordered_set>

namespace kepler {

int count_words(const std::string& text) {
    int n = 0;
    bool in_word = false;
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            in_word = false;
        } else if (!in_word) {
            in_word = true;
            ++n;
        }
    }
    return n;
}

namespace {

// "id<TAB>free text", splitting only on the first tab. First occurrence wins.
std::unordered_map<std::string, std::string> parse_descriptions(std::istream& in) {
    std::unordered_map<std::string, std::string> out;
    std::string line;
    std::int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos || tab == 0)
            throw ParseError("description parse error at line " + std::to_string(line_no) +
                             ": expected \"id<TAB>text\"");
        out.emplace(line.substr(0, tab), line.substr(tab + 1));
    }
    return out;
}

} // namespace

IngestResult ingest_corpus(std::istream& triplet_stream, std::istream& description_stream,
                           int min_words) {
    const auto desc = parse_descriptions(description_stream);
    ParsedTriplets parsed = parse_triplets(triplet_stream);

    EntityCatalog catalog;
    catalog.duplicate_triplets = parsed.duplicates;

    // Retention status per parsed entity id: 1 keep, 0 short, -1 missing.
    std::vector<int> status(static_cast<std::size_t>(parsed.entities.size()), -2);
    auto entity_status = [&](std::int32_t id) {
        int& s = status[static_cast<std::size_t>(id)];
        if (s == -2) {
            auto it = desc.find(parsed.entities.name(id));
            if (it == desc.end())
                s = -1;
            else
                s = count_words(it->second) >= min_words ? 1 : 0;
        }
        return s;
    };

    IdCatalog entities, relations;
    std::vector<Triplet> kept;
    std::vector<std::string> descriptions;
    std::unordered_set<std::string> dropped_seen;
    auto record_drop = [&](std::int32_t id, int s) {
        const std::string& name = parsed.entities.name(id);
        if (dropped_seen.insert(name).second)
            catalog.dropped.emplace_back(name, s == -1 ? "missing_description"
                                                       : "short_description");
    };

    for (const Triplet& t : parsed.triplets) {
        const int sh = entity_status(t.head);
        const int st = entity_status(t.tail);
        if (sh != 1 || st != 1) {
            if (sh != 1) record_drop(t.head, sh);
            if (st != 1) record_drop(t.tail, st);
            ++catalog.triplets_dropped;
            continue;
        }
        Triplet out;
        const std::string& hname = parsed.entities.name(t.head);
        const std::string& tname = parsed.entities.name(t.tail);
        out.head = entities.get_or_add(hname);
        if (out.head == static_cast<std::int32_t>(descriptions.size()))
            descriptions.push_back(desc.at(hname));
        out.tail = entities.get_or_add(tname);
        if (out.tail == static_cast<std::int32_t>(descriptions.size()))
            descriptions.push_back(desc.at(tname));
        out.relation = relations.get_or_add(parsed.relations.name(t.relation));
        kept.push_back(out);
    }

    catalog.descriptions = std::move(descriptions);
    IngestResult result{KnowledgeGraph(std::move(entities), std::move(relations), std::move(kept)),
                        std::move(catalog)};
    return result;
}

RelationCatalog load_relation_descriptions(std::istream& in, const IdCatalog& relations) {
    const auto desc = parse_descriptions(in);
    RelationCatalog out;
    out.descriptions.resize(static_cast<std::size_t>(relations.size()));
    for (std::int32_t r = 0; r < relations.size(); ++r) {
        auto it = desc.find(relations.name(r));
        if (it != desc.end()) out.descriptions[static_cast<std::size_t>(r)] = it->second;
    }
    return out;
}

EntityCatalog load_entity_descriptions(std::istream& in, const IdCatalog& entities) {
    const auto desc = parse_descriptions(in);
    EntityCatalog out;
    out.descriptions.resize(static_cast<std::size_t>(entities.size()));
    for (std::int32_t e = 0; e < entities.size(); ++e) {
        auto it = desc.find(entities.name(e));
        if (it != desc.end()) out.descriptions[static_cast<std::size_t>(e)] = it->second;
    }
    return out;
}

DataSplit split_transductive(const KnowledgeGraph& kg, std::int64_t n_valid, std::int64_t n_test,
                             std::uint64_t seed) {
    const auto& triplets = kg.triplets();
    const std::int64_t n = kg.n_triplets();
    const std::int64_t target = n_valid + n_test;
    if (n_valid < 0 || n_test < 0) throw SplitError("split_transductive: negative sizes");
    if (target > 0 && target >= n)
        throw SplitError("split_transductive: n_valid + n_test = " + std::to_string(target) +
                         " must be < " + std::to_string(n) + " triplets");

    // Remaining train memberships per entity / relation (entity counted once
    // per triplet, self-loops included once).
    std::vector<std::int64_t> ent_left(static_cast<std::size_t>(kg.entities().size()), 0);
    std::vector<std::int64_t> rel_left(static_cast<std::size_t>(kg.relations().size()), 0);
    for (const Triplet& t : triplets) {
        ent_left[static_cast<std::size_t>(t.head)]++;
        if (t.tail != t.head) ent_left[static_cast<std::size_t>(t.tail)]++;
        rel_left[static_cast<std::size_t>(t.relation)]++;
    }

    Rng rng(seed);
    std::vector<char> removed(static_cast<std::size_t>(n), 0);
    std::vector<std::int64_t> picked;
    std::string bottleneck;
    const std::int64_t max_attempts = 100 * target;
    std::int64_t attempts = 0;
    while (static_cast<std::int64_t>(picked.size()) < target) {
        if (attempts >= max_attempts)
            throw SplitError(
                "split_transductive: eval sampling constraint unsatisfiable after " +
                std::to_string(attempts) + " attempts; bottleneck " +
                (bottleneck.empty() ? std::string("unknown") : bottleneck));
        ++attempts;
        const auto i = static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(n)));
        if (removed[static_cast<std::size_t>(i)]) continue;
        const Triplet& t = triplets[static_cast<std::size_t>(i)];
        if (ent_left[static_cast<std::size_t>(t.head)] < 2) {
            bottleneck = "entity " + kg.entities().name(t.head);
            continue;
        }
        if (t.tail != t.head && ent_left[static_cast<std::size_t>(t.tail)] < 2) {
            bottleneck = "entity " + kg.entities().name(t.tail);
            continue;
        }
        if (rel_left[static_cast<std::size_t>(t.relation)] < 2) {
            bottleneck = "relation " + kg.relations().name(t.relation);
            continue;
        }
        removed[static_cast<std::size_t>(i)] = 1;
        ent_left[static_cast<std::size_t>(t.head)]--;
        if (t.tail != t.head) ent_left[static_cast<std::size_t>(t.tail)]--;
        rel_left[static_cast<std::size_t>(t.relation)]--;
        picked.push_back(i);
    }

    DataSplit split;
    split.setting = SplitSetting::Transductive;
    std::vector<Triplet> train;
    train.reserve(static_cast<std::size_t>(n - target));
    for (std::int64_t i = 0; i < n; ++i)
        if (!removed[static_cast<std::size_t>(i)]) train.push_back(triplets[static_cast<std::size_t>(i)]);
    for (std::int64_t k = 0; k < target; ++k) {
        const Triplet& t = triplets[static_cast<std::size_t>(picked[static_cast<std::size_t>(k)])];
        (k < n_valid ? split.valid : split.test).push_back(t);
    }
    split.train = KnowledgeGraph(kg.entities(), kg.relations(), std::move(train));
    return split;
}

namespace {

struct UndirectedView {
    // neighbors[e]: sorted distinct adjacent entities; incident[e]: triplet indices
    std::vector<std::vector<std::int32_t>> neighbors;
    std::vector<std::vector<std::int64_t>> incident;

    explicit UndirectedView(const KnowledgeGraph& kg) {
        const auto n_ent = static_cast<std::size_t>(kg.entities().size());
        neighbors.resize(n_ent);
        incident.resize(n_ent);
        const auto& ts = kg.triplets();
        for (std::size_t i = 0; i < ts.size(); ++i) {
            const Triplet& t = ts[i];
            neighbors[static_cast<std::size_t>(t.head)].push_back(t.tail);
            incident[static_cast<std::size_t>(t.head)].push_back(static_cast<std::int64_t>(i));
            if (t.tail != t.head) {
                neighbors[static_cast<std::size_t>(t.tail)].push_back(t.head);
                incident[static_cast<std::size_t>(t.tail)].push_back(static_cast<std::int64_t>(i));
            }
        }
        for (auto& v : neighbors) {
            std::sort(v.begin(), v.end());
            v.erase(std::unique(v.begin(), v.end()), v.end());
        }
    }
};

// Largest connected component size in triplets, for the precondition check.
std::int64_t largest_component_triplets(const KnowledgeGraph& kg, const UndirectedView& view) {
    const auto n_ent = static_cast<std::size_t>(kg.entities().size());
    std::vector<std::int32_t> comp(n_ent, -1);
    std::int32_t n_comp = 0;
    for (std::size_t root = 0; root < n_ent; ++root) {
        if (comp[root] >= 0) continue;
        std::vector<std::int32_t> queue{static_cast<std::int32_t>(root)};
        comp[root] = n_comp;
        while (!queue.empty()) {
            const std::int32_t u = queue.back();
            queue.pop_back();
            for (std::int32_t v : view.neighbors[static_cast<std::size_t>(u)])
                if (comp[static_cast<std::size_t>(v)] < 0) {
                    comp[static_cast<std::size_t>(v)] = n_comp;
                    queue.push_back(v);
                }
        }
        ++n_comp;
    }
    std::vector<std::int64_t> counts(static_cast<std::size_t>(n_comp), 0);
    for (const Triplet& t : kg.triplets()) counts[static_cast<std::size_t>(comp[static_cast<std::size_t>(t.head)])]++;
    std::int64_t best = 0;
    for (std::int64_t c : counts) best = std::max(best, c);
    return best;
}

} // namespace

DataSplit split_inductive(const KnowledgeGraph& kg, std::int64_t target_valid,
                          std::int64_t target_test, std::uint64_t seed) {
    if (target_valid < 0 || target_test < 0) throw SplitError("split_inductive: negative targets");
    const UndirectedView view(kg);
    if (target_valid + target_test > 0 &&
        largest_component_triplets(kg, view) <= target_valid + target_test)
        throw SplitError("split_inductive: no connected component larger than " +
                         std::to_string(target_valid + target_test) + " triplets");

    Rng rng(seed);
    const auto n_ent = static_cast<std::size_t>(kg.entities().size());
    std::vector<char> used(n_ent, 0); // claimed by any sampled subgraph
    std::vector<char> counted(kg.triplets().size(), 0);

    auto sample_set = [&](std::int64_t target, std::vector<std::vector<std::int32_t>>& subgraphs,
                          const char* which) {
        std::int64_t total = 0;
        while (total < target) {
            // fresh eligible roots: unclaimed entities with at least one edge
            std::vector<std::int32_t> roots;
            for (std::size_t e = 0; e < n_ent; ++e)
                if (!used[e] && !view.incident[e].empty()) roots.push_back(static_cast<std::int32_t>(e));
            if (roots.empty())
                throw SplitError(std::string("split_inductive: exhausted graph while sampling ") +
                                 which + "; achieved " + std::to_string(total) + " of " +
                                 std::to_string(target) + " triplets");
            const std::int32_t root = roots[static_cast<std::size_t>(rng.uniform_int(roots.size()))];

            std::vector<std::int32_t> nodes;
            std::unordered_set<std::int32_t> in_set;
            std::vector<std::int32_t> queue{root};
            std::size_t q_head = 0;
            std::int64_t grown = 0;
            while (q_head < queue.size() && total < target) {
                const std::int32_t u = queue[q_head++];
                if (used[static_cast<std::size_t>(u)]) continue;
                used[static_cast<std::size_t>(u)] = 1;
                in_set.insert(u);
                nodes.push_back(u);
                // newly induced triplets: both endpoints now inside
                for (std::int64_t ti : view.incident[static_cast<std::size_t>(u)]) {
                    if (counted[static_cast<std::size_t>(ti)]) continue;
                    const Triplet& t = kg.triplets()[static_cast<std::size_t>(ti)];
                    const std::int32_t other = t.head == u ? t.tail : t.head;
                    if (other == u || in_set.count(other)) {
                        counted[static_cast<std::size_t>(ti)] = 1;
                        ++total;
                        ++grown;
                    }
                }
                for (std::int32_t v : view.neighbors[static_cast<std::size_t>(u)])
                    if (!used[static_cast<std::size_t>(v)]) queue.push_back(v);
            }
            if (grown > 0) {
                std::sort(nodes.begin(), nodes.end());
                subgraphs.push_back(std::move(nodes));
            }
        }
    };

    DataSplit split;
    split.setting = SplitSetting::Inductive;
    sample_set(target_valid, split.valid_subgraphs, "valid");
    sample_set(target_test, split.test_subgraphs, "test");

    std::unordered_set<std::int32_t> valid_nodes, test_nodes;
    for (const auto& sg : split.valid_subgraphs) valid_nodes.insert(sg.begin(), sg.end());
    for (const auto& sg : split.test_subgraphs) test_nodes.insert(sg.begin(), sg.end());

    std::vector<Triplet> train;
    for (const Triplet& t : kg.triplets()) {
        const bool h_valid = valid_nodes.count(t.head) > 0;
        const bool t_valid = valid_nodes.count(t.tail) > 0;
        const bool h_test = test_nodes.count(t.head) > 0;
        const bool t_test = test_nodes.count(t.tail) > 0;
        if (h_valid && t_valid)
            split.valid.push_back(t);
        else if (h_test && t_test)
            split.test.push_back(t);
        else if (!h_valid && !t_valid && !h_test && !t_test)
            train.push_back(t);
        // cross triplets (eval entity on one side only) are dropped
    }
    split.train = KnowledgeGraph(kg.entities(), kg.relations(), std::move(train));
    return split;
}

SplitStats split_stats(const DataSplit& split) {
    SplitStats s;
    s.n_train = split.train.n_triplets();
    s.n_valid = static_cast<std::int64_t>(split.valid.size());
    s.n_test = static_cast<std::int64_t>(split.test.size());
    std::vector<Triplet> all = split.train.triplets();
    all.insert(all.end(), split.valid.begin(), split.valid.end());
    all.insert(all.end(), split.test.begin(), split.test.end());
    s.n_entities = static_cast<std::int64_t>(occurring_entities(all).size());
    s.n_relations = static_cast<std::int64_t>(occurring_relations(all).size());
    return s;
}

std::string stats_to_tsv(const SplitStats& s) {
    std::ostringstream out;
    out << "n_entities\t" << s.n_entities << "\n"
        << "n_relations\t" << s.n_relations << "\n"
        << "n_train\t" << s.n_train << "\n"
        << "n_valid\t" << s.n_valid << "\n"
        << "n_test\t" << s.n_test << "\n";
    return out.str();
}

namespace {
void write_triplet_file(const std::string& path, const std::vector<Triplet>& ts,
                        const IdCatalog& ents, const IdCatalog& rels) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw SplitError("cannot write " + path);
    for (const Triplet& t : ts)
        out << ents.name(t.head) << '\t' << rels.name(t.relation) << '\t' << ents.name(t.tail)
            << '\n';
}
} // namespace

void write_split(const DataSplit& split, const std::string& dir) {
    std::filesystem::create_directories(dir);
    const auto& ents = split.train.entities();
    const auto& rels = split.train.relations();
    write_triplet_file(dir + "/train.txt", split.train.triplets(), ents, rels);
    write_triplet_file(dir + "/valid.txt", split.valid, ents, rels);
    write_triplet_file(dir + "/test.txt", split.test, ents, rels);
    std::ofstream stats(dir + "/stats.tsv", std::ios::binary | std::ios::trunc);
    if (!stats) throw SplitError("cannot write " + dir + "/stats.tsv");
    stats << stats_to_tsv(split_stats(split));
}

namespace {
// Connected components of the triplet list, as sorted node sets.
std::vector<std::vector<std::int32_t>> components_of(const std::vector<Triplet>& ts) {
    std::unordered_map<std::int32_t, std::vector<std::int32_t>> adj;
    for (const Triplet& t : ts) {
        adj[t.head].push_back(t.tail);
        adj[t.tail].push_back(t.head);
    }
    std::unordered_set<std::int32_t> done;
    std::vector<std::vector<std::int32_t>> comps;
    for (const Triplet& t : ts) {
        if (done.count(t.head)) continue;
        std::vector<std::int32_t> comp, stack{t.head};
        done.insert(t.head);
        while (!stack.empty()) {
            const std::int32_t u = stack.back();
            stack.pop_back();
            comp.push_back(u);
            for (std::int32_t v : adj[u])
                if (done.insert(v).second) stack.push_back(v);
        }
        std::sort(comp.begin(), comp.end());
        comps.push_back(std::move(comp));
    }
    return comps;
}
} // namespace

DataSplit read_split(const std::string& dir, SplitSetting setting) {
    IdCatalog ents, rels;
    auto read_file = [&](const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw SplitError("cannot open " + path);
        ParsedTriplets p = parse_triplets(in);
        std::vector<Triplet> out;
        out.reserve(p.triplets.size());
        for (const Triplet& t : p.triplets) {
            Triplet m;
            m.head = ents.get_or_add(p.entities.name(t.head));
            m.relation = rels.get_or_add(p.relations.name(t.relation));
            m.tail = ents.get_or_add(p.entities.name(t.tail));
            out.push_back(m);
        }
        return out;
    };
    std::vector<Triplet> train = read_file(dir + "/train.txt");
    std::vector<Triplet> valid = read_file(dir + "/valid.txt");
    std::vector<Triplet> test = read_file(dir + "/test.txt");

    DataSplit split;
    split.setting = setting;
    split.valid = std::move(valid);
    split.test = std::move(test);

    if (setting == SplitSetting::Transductive) {
        TripletSet train_set(train.begin(), train.end());
        std::unordered_set<std::int32_t> train_ents, train_rels;
        for (const Triplet& t : train) {
            train_ents.insert(t.head);
            train_ents.insert(t.tail);
            train_rels.insert(t.relation);
        }
        auto check = [&](const std::vector<Triplet>& ts, const char* name) {
            for (const Triplet& t : ts) {
                if (train_set.count(t))
                    throw SplitError(std::string("read_split: ") + name +
                                     " triplet also present in train");
                if (!train_ents.count(t.head) || !train_ents.count(t.tail) ||
                    !train_rels.count(t.relation))
                    throw SplitError(std::string("read_split: ") + name +
                                     " references an entity/relation missing from train");
            }
        };
        check(split.valid, "valid");
        check(split.test, "test");
    } else {
        std::unordered_set<std::int32_t> train_ents;
        for (const Triplet& t : train) {
            train_ents.insert(t.head);
            train_ents.insert(t.tail);
        }
        auto check = [&](const std::vector<Triplet>& ts, const char* name) {
            for (const Triplet& t : ts)
                if (train_ents.count(t.head) || train_ents.count(t.tail))
                    throw SplitError(std::string("read_split: ") + name +
                                     " shares entities with train in an inductive split");
        };
        check(split.valid, "valid");
        check(split.test, "test");
        std::unordered_set<std::int32_t> valid_ents;
        for (const Triplet& t : split.valid) {
            valid_ents.insert(t.head);
            valid_ents.insert(t.tail);
        }
        for (const Triplet& t : split.test)
            if (valid_ents.count(t.head) || valid_ents.count(t.tail))
                throw SplitError("read_split: valid and test share entities");
        split.valid_subgraphs = components_of(split.valid);
        split.test_subgraphs = components_of(split.test);
    }

    split.train = KnowledgeGraph(std::move(ents), std::move(rels), std::move(train));
    return split;
}

} // namespace kepler
