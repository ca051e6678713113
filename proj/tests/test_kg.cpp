#include <doctest.h>

#include <sstream>

#include "helpers.hpp"
#include "kepler/kg.hpp"

using namespace kepler;

TEST_CASE("parse a single triplet line") {
    std::istringstream in("Q1\tP1\tQ2\n");
    const ParsedTriplets p = parse_triplets(in);
    CHECK(p.triplets.size() == 1);
    CHECK(p.entities.size() == 2);
    CHECK(p.relations.size() == 1);
    CHECK(p.duplicates == 0);
    CHECK(p.entities.name(0) == "Q1");
    CHECK(p.entities.name(1) == "Q2");
}

TEST_CASE("arity violations report the line number") {
    std::istringstream two("Q1\tP1\n");
    CHECK_THROWS_WITH_AS(parse_triplets(two), doctest::Contains("line 1"), ParseError);
    std::istringstream four("Q1\tP1\tQ2\nQ1\tP1\tQ2\textra\n");
    CHECK_THROWS_WITH_AS(parse_triplets(four), doctest::Contains("line 2"), ParseError);
}

TEST_CASE("duplicate lines are dropped and counted") {
    std::istringstream in("Q1\tP1\tQ2\nQ1\tP1\tQ2\n");
    const ParsedTriplets p = parse_triplets(in);
    CHECK(p.triplets.size() == 1);
    CHECK(p.duplicates == 1);
}

TEST_CASE("empty input is a valid empty graph") {
    std::istringstream in("");
    const KnowledgeGraph kg = KnowledgeGraph::from_parsed(parse_triplets(in));
    CHECK(kg.n_triplets() == 0);
    CHECK(kg.entities().size() == 0);
    CHECK(kg.tails_of(0, 0).empty());
}

TEST_CASE("adjacency indices cover exactly the triplet list") {
    IdCatalog ents, rels;
    for (const char* n : {"a", "b", "c"}) ents.get_or_add(n);
    rels.get_or_add("r");
    const KnowledgeGraph kg(ents, rels, {{0, 0, 1}, {0, 0, 2}});
    CHECK(kg.tails_of(0, 0) == std::vector<std::int32_t>{1, 2});
    CHECK(kg.heads_of(1, 0) == std::vector<std::int32_t>{0});
    CHECK(kg.heads_of(0, 0).empty());
    CHECK(kg.contains({0, 0, 2}));
    CHECK_FALSE(kg.contains({2, 0, 0}));
}

TEST_CASE("dangling ids and duplicates are construction errors") {
    IdCatalog ents, rels;
    ents.get_or_add("a");
    rels.get_or_add("r");
    CHECK_THROWS_WITH_AS(KnowledgeGraph(ents, rels, {{0, 0, 7}}), doctest::Contains("7"),
                         std::invalid_argument);
    CHECK_THROWS_WITH_AS(KnowledgeGraph(ents, rels, {{0, 0, 0}, {0, 0, 0}}),
                         doctest::Contains("duplicate"), std::invalid_argument);
}

TEST_CASE("known_true on direct examples") {
    IdCatalog ents, rels;
    for (int i = 0; i < 6; ++i) ents.get_or_add("e" + std::to_string(i));
    rels.get_or_add("r");
    const KnowledgeGraph kg(ents, rels, {{0, 0, 1}, {0, 0, 2}});
    CHECK(known_true(kg, QueryDirection::TailQuery, 0, 0) == std::vector<std::int32_t>{1, 2});
    CHECK(known_true(kg, QueryDirection::TailQuery, 5, 0).empty());
    CHECK(known_true(kg, QueryDirection::TailQuery, 99, 0).empty()); // unknown id
}

TEST_CASE("known_true equals a brute-force scan on random graphs") {
    Rng rng(19);
    const KnowledgeGraph kg = test::random_graph(12, 3, 20, rng);
    for (std::int32_t e = 0; e < 12; ++e)
        for (std::int32_t r = 0; r < 3; ++r) {
            CHECK(known_true(kg, QueryDirection::TailQuery, e, r) ==
                  test::scan_known_true(kg.triplets(), true, e, r));
            CHECK(known_true(kg, QueryDirection::HeadQuery, e, r) ==
                  test::scan_known_true(kg.triplets(), false, e, r));
        }
}

TEST_CASE("index sizes and membership are exhaustive on random graphs") {
    Rng rng(23);
    for (int trial = 0; trial < 5; ++trial) {
        const KnowledgeGraph kg = test::random_graph(30, 4, 200, rng);
        CHECK(kg.out_degree_total() == kg.n_triplets());
        CHECK(kg.in_degree_total() == kg.n_triplets());
        // (h,r,?) contains t exactly when (h,r,t) is a triplet
        for (const Triplet& t : kg.triplets()) {
            const auto tails = known_true(kg, QueryDirection::TailQuery, t.head, t.relation);
            CHECK(std::binary_search(tails.begin(), tails.end(), t.tail));
        }
    }
}

TEST_CASE("dense and external ids round trip bijectively") {
    IdCatalog cat;
    for (const char* n : {"Q42", "Q7", "Q42", "P5"}) cat.get_or_add(n);
    CHECK(cat.size() == 3);
    for (std::int32_t i = 0; i < cat.size(); ++i) CHECK(cat.find(cat.name(i)) == i);
    CHECK(cat.find("missing") == -1);
}

TEST_CASE("self loops are permitted") {
    std::istringstream in("Q1\tP1\tQ1\n");
    const KnowledgeGraph kg = KnowledgeGraph::from_parsed(parse_triplets(in));
    CHECK(kg.n_triplets() == 1);
    CHECK(kg.contains({0, 0, 0}));
}
