#include "kepler/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "kepler/kernels.hpp"

namespace kepler {

std::string MetricsReport::to_tsv() const {
    char buf[64];
    std::ostringstream out;
    auto line = [&](const char* k, double v) {
        std::snprintf(buf, sizeof(buf), "%.6g", v);
        out << k << '\t' << buf << '\n';
    };
    line("mr", mr);
    line("mrr", mrr);
    line("hits@1", hits1);
    line("hits@3", hits3);
    line("hits@10", hits10);
    out << "n_queries\t" << n_queries << '\n';
    out << "filtered\t" << (filtered ? "true" : "false") << '\n';
    out << "tie_handling\tmean_rank\n";
    return out.str();
}

std::string MetricsReport::summary_line() const {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%.6g\t%.6g\t%.6g\t%.6g\t%.6g", mr, mrr, hits1, hits3,
                  hits10);
    return buf;
}

double rank_query(const std::vector<double>& scores, std::size_t answer_index,
                  const std::vector<char>& filtered) {
    if (answer_index >= scores.size())
        throw std::out_of_range("rank_query: answer index out of range");
    if (filtered.size() != scores.size())
        throw std::invalid_argument("rank_query: filter mask size mismatch");
    if (filtered[answer_index])
        throw std::logic_error("rank_query: the true answer is filtered out");
    const double s = scores[answer_index];
    std::int64_t better = 0, tied = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (filtered[i]) continue;
        if (scores[i] > s)
            ++better;
        else if (scores[i] == s)
            ++tied; // includes the answer itself
    }
    return static_cast<double>(better) + (static_cast<double>(tied) + 1.0) / 2.0;
}

void BaselineScorer::score_tail(const Triplet& query, const std::vector<std::int32_t>& candidates,
                                std::vector<double>& out) const {
    out.resize(candidates.size());
    Triplet t = query;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        t.tail = candidates[i];
        out[i] = baseline_score(model_, t);
    }
}

void BaselineScorer::score_head(const Triplet& query, const std::vector<std::int32_t>& candidates,
                                std::vector<double>& out) const {
    out.resize(candidates.size());
    Triplet t = query;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        t.head = candidates[i];
        out[i] = baseline_score(model_, t);
    }
}

void KeplerScorer::prepare(const std::vector<std::int32_t>& candidates,
                           const std::vector<Triplet>& queries) {
    candidates_ = candidates;
    row_of_.clear();
    for (std::size_t i = 0; i < candidates.size(); ++i)
        row_of_[candidates[i]] = static_cast<int>(i);

    std::set<std::int32_t> relations;
    for (const Triplet& q : queries) relations.insert(q.relation);

    cond_matrices_.clear();
    rel_vecs_.clear();
    if (model_.variant == KeplerVariant::Conditioned) {
        for (std::int32_t r : relations)
            cond_matrices_.emplace(
                r, precompute_entity_embeddings(model_, catalog_, rel_catalog_, candidates, r));
    } else {
        shared_matrix_ = precompute_entity_embeddings(model_, catalog_, rel_catalog_, candidates);
    }
    for (std::int32_t r : relations) {
        const Tensor v = relation_embedding(model_, rel_catalog_, r);
        rel_vecs_.emplace(r, std::vector<double>(v.data(), v.data() + v.size()));
    }
}

const Tensor& KeplerScorer::matrix_for(std::int32_t relation) const {
    if (model_.variant != KeplerVariant::Conditioned) return shared_matrix_;
    auto it = cond_matrices_.find(relation);
    if (it == cond_matrices_.end())
        throw std::logic_error("KeplerScorer: relation not prepared: " + std::to_string(relation));
    return it->second;
}

const std::vector<double>& KeplerScorer::relation_vec(std::int32_t relation) const {
    auto it = rel_vecs_.find(relation);
    if (it == rel_vecs_.end())
        throw std::logic_error("KeplerScorer: relation not prepared: " + std::to_string(relation));
    return it->second;
}

int KeplerScorer::candidate_row(std::int32_t entity) const {
    auto it = row_of_.find(entity);
    if (it == row_of_.end())
        throw std::logic_error("KeplerScorer: query entity " + std::to_string(entity) +
                               " is not in the candidate set");
    return it->second;
}

void KeplerScorer::score_tail(const Triplet& query, const std::vector<std::int32_t>& candidates,
                              std::vector<double>& out) const {
    const Tensor& m = matrix_for(query.relation);
    const std::vector<double>& r = relation_vec(query.relation);
    const int d = m.cols();
    const double* h = m.row_ptr(candidate_row(query.head));
    std::vector<double> q(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) q[static_cast<std::size_t>(j)] = h[j] + r[static_cast<std::size_t>(j)];
    out.resize(candidates.size());
    kernels::pnorm_to_rows(q.data(), m.data(), out.data(), m.rows(), d, 1);
    for (double& s : out) s = -s;
}

void KeplerScorer::score_head(const Triplet& query, const std::vector<std::int32_t>& candidates,
                              std::vector<double>& out) const {
    const Tensor& m = matrix_for(query.relation);
    const std::vector<double>& r = relation_vec(query.relation);
    const double* t = m.row_ptr(candidate_row(query.tail));
    out.resize(candidates.size());
    kernels::pnorm_shifted_rows(r.data(), t, m.data(), out.data(), m.rows(), m.cols(), 1);
    for (double& s : out) s = -s;
}

MetricsReport evaluate_link_prediction(CandidateScorer& scorer, const DataSplit& split,
                                       EvalSubset subset, const EvalOptions& opts) {
    if (split.setting == SplitSetting::Inductive && !scorer.supports_inductive())
        throw UnsupportedSettingError(
            "table-based models cannot score unseen entities; inductive evaluation is "
            "unsupported for this model");

    const std::vector<Triplet>& queries = subset == EvalSubset::Valid ? split.valid : split.test;
    MetricsReport report;
    report.filtered = opts.filtered;
    report.n_queries = 2 * static_cast<std::int64_t>(queries.size());
    if (queries.empty()) return report;

    std::vector<std::int32_t> candidates;
    if (split.setting == SplitSetting::Transductive) {
        candidates.resize(static_cast<std::size_t>(split.train.entities().size()));
        for (std::size_t i = 0; i < candidates.size(); ++i)
            candidates[i] = static_cast<std::int32_t>(i);
    } else {
        candidates = occurring_entities(queries);
    }
    std::vector<int> row_of(static_cast<std::size_t>(split.train.entities().size()), -1);
    for (std::size_t i = 0; i < candidates.size(); ++i)
        row_of[static_cast<std::size_t>(candidates[i])] = static_cast<int>(i);

    // union of train + valid + test for the filter (deduplicated)
    std::vector<Triplet> all;
    TripletSet seen;
    for (const auto* part : {&split.train.triplets(), &split.valid, &split.test})
        for (const Triplet& t : *part)
            if (seen.insert(t).second) all.push_back(t);
    const KnowledgeGraph union_graph(split.train.entities(), split.train.relations(),
                                     std::move(all));

    scorer.prepare(candidates, queries);

    const auto n_q = static_cast<std::int64_t>(queries.size()) * 2;
    std::vector<double> ranks(static_cast<std::size_t>(n_q));

    auto run_query = [&](std::int64_t qi) {
        const Triplet& t = queries[static_cast<std::size_t>(qi / 2)];
        const bool tail_side = (qi % 2) == 0;
        std::vector<double> scores;
        if (tail_side)
            scorer.score_tail(t, candidates, scores);
        else
            scorer.score_head(t, candidates, scores);

        const std::int32_t answer = tail_side ? t.tail : t.head;
        const int answer_row = row_of[static_cast<std::size_t>(answer)];
        if (answer_row < 0)
            throw std::logic_error("evaluate_link_prediction: true answer missing from the "
                                   "candidate set");

        std::vector<char> filtered(candidates.size(), 0);
        if (opts.filtered) {
            const auto others =
                known_true(union_graph, tail_side ? QueryDirection::TailQuery
                                                  : QueryDirection::HeadQuery,
                           tail_side ? t.head : t.tail, t.relation);
            for (std::int32_t o : others) {
                if (o == answer) continue;
                const int row = row_of[static_cast<std::size_t>(o)];
                if (row >= 0) filtered[static_cast<std::size_t>(row)] = 1;
            }
        }
        ranks[static_cast<std::size_t>(qi)] =
            rank_query(scores, static_cast<std::size_t>(answer_row), filtered);
    };

#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(std::max(1, opts.threads))
    for (std::int64_t qi = 0; qi < n_q; ++qi) run_query(qi);
#else
    for (std::int64_t qi = 0; qi < n_q; ++qi) run_query(qi);
#endif

    // fixed-order reduction
    double sum_rank = 0.0, sum_rr = 0.0;
    std::int64_t h1 = 0, h3 = 0, h10 = 0;
    for (double r : ranks) {
        sum_rank += r;
        sum_rr += 1.0 / r;
        if (r <= 1.0) ++h1;
        if (r <= 3.0) ++h3;
        if (r <= 10.0) ++h10;
    }
    const auto n = static_cast<double>(n_q);
    report.mr = sum_rank / n;
    report.mrr = sum_rr / n;
    report.hits1 = static_cast<double>(h1) / n;
    report.hits3 = static_cast<double>(h3) / n;
    report.hits10 = static_cast<double>(h10) / n;
    return report;
}

} // namespace kepler
