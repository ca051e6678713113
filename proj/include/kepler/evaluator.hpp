#pragma once
// Link-prediction evaluation: rank every candidate entity per query, filter
// other known-true answers, aggregate MR / MRR / HITS@{1,3,10} over head and
// tail predictions. Queries are independent; the aggregation is a fixed-order
// reduction over a per-query rank vector, so results are identical for any
// thread count.

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "kepler/dataset.hpp"
#include "kepler/ke.hpp"
#include "kepler/kg.hpp"

namespace kepler {

struct UnsupportedSettingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MetricsReport {
    double mr = 0.0;
    double mrr = 0.0;
    double hits1 = 0.0;
    double hits3 = 0.0;
    double hits10 = 0.0;
    std::int64_t n_queries = 0;
    bool filtered = true;

    bool operator==(const MetricsReport&) const = default;
    std::string to_tsv() const;        // "metric<TAB>value" lines
    std::string summary_line() const;  // MR MRR HITS@1 HITS@3 HITS@10
};

// Mean-tie rank: better_count + (tied_count + 1) / 2, counting only
// non-filtered candidates; the tied block includes the answer itself. The
// filter must never cover the answer.
double rank_query(const std::vector<double>& scores, std::size_t answer_index,
                  const std::vector<char>& filtered);

class CandidateScorer {
public:
    virtual ~CandidateScorer() = default;
    virtual bool supports_inductive() const = 0;
    // called once per evaluation before any scoring
    virtual void prepare(const std::vector<std::int32_t>& candidates,
                         const std::vector<Triplet>& queries) {
        (void)candidates;
        (void)queries;
    }
    // out[i] = score of candidates[i]; higher = more plausible
    virtual void score_tail(const Triplet& query, const std::vector<std::int32_t>& candidates,
                            std::vector<double>& out) const = 0;
    virtual void score_head(const Triplet& query, const std::vector<std::int32_t>& candidates,
                            std::vector<double>& out) const = 0;
};

// Table models: per-candidate native scoring. Transductive only.
class BaselineScorer : public CandidateScorer {
public:
    explicit BaselineScorer(const BaselineModel& model) : model_(model) {}
    bool supports_inductive() const override { return false; }
    void score_tail(const Triplet& query, const std::vector<std::int32_t>& candidates,
                    std::vector<double>& out) const override;
    void score_head(const Triplet& query, const std::vector<std::int32_t>& candidates,
                    std::vector<double>& out) const override;

private:
    const BaselineModel& model_;
};

// Description-encoder models: candidate embeddings are precomputed once (per
// query relation for the conditioned variant) and scored through the batched
// translational kernels.
class KeplerScorer : public CandidateScorer {
public:
    KeplerScorer(KeplerModel& model, const EntityCatalog& catalog,
                 const RelationCatalog* rel_catalog)
        : model_(model), catalog_(catalog), rel_catalog_(rel_catalog) {}

    bool supports_inductive() const override { return true; }
    void prepare(const std::vector<std::int32_t>& candidates,
                 const std::vector<Triplet>& queries) override;
    void score_tail(const Triplet& query, const std::vector<std::int32_t>& candidates,
                    std::vector<double>& out) const override;
    void score_head(const Triplet& query, const std::vector<std::int32_t>& candidates,
                    std::vector<double>& out) const override;

private:
    const Tensor& matrix_for(std::int32_t relation) const;
    const std::vector<double>& relation_vec(std::int32_t relation) const;
    int candidate_row(std::int32_t entity) const;

    KeplerModel& model_;
    const EntityCatalog& catalog_;
    const RelationCatalog* rel_catalog_;
    std::vector<std::int32_t> candidates_;
    std::unordered_map<std::int32_t, int> row_of_;
    Tensor shared_matrix_;                                   // non-conditioned variants
    std::unordered_map<std::int32_t, Tensor> cond_matrices_; // per relation
    std::unordered_map<std::int32_t, std::vector<double>> rel_vecs_;
};

enum class EvalSubset { Valid, Test };

struct EvalOptions {
    bool filtered = true;
    int threads = 1;
};

// Candidates: every training entity (transductive) or the entities of the
// evaluated subgraphs (inductive). Each eval triplet contributes one tail
// query and one head query; the filter excludes other correct answers from
// train + valid + test, never the query's own answer.
MetricsReport evaluate_link_prediction(CandidateScorer& scorer, const DataSplit& split,
                                       EvalSubset subset, const EvalOptions& opts = {});

} // namespace kepler
