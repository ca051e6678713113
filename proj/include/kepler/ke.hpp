#pragma once
// Knowledge-embedding models and losses: the three description-encoder
// variants (entity descriptions, entity + relation descriptions, entity
// conditioned on relation) sharing one translational distance and
// negative-sampling loss, plus five table-based baselines scored by their
// native functions inside the same loss shell.

#include <optional>
#include <string>
#include <vector>

#include "kepler/dataset.hpp"
#include "kepler/encoder.hpp"
#include "kepler/kg.hpp"
#include "kepler/optim.hpp"

namespace kepler {

enum class KeplerVariant { EntityDesc, EntityRelDesc, Conditioned };
enum class BaselineKind { TransE, DistMult, ComplEx, RotatE, SimplE };

enum class ModelKind {
    KeplerWiki, KeplerRel, KeplerCond, KeplerKE, MlmOnly,
    TransE, DistMult, ComplEx, RotatE, SimplE,
};

bool is_baseline(ModelKind k);
bool is_encoder_model(ModelKind k);
KeplerVariant variant_of(ModelKind k);
BaselineKind baseline_of(ModelKind k);
std::string to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& s);

// ---------------------------------------------------------------------------
// Scalar scoring

// || h + r - t ||_p, p in {1, 2}
double transe_distance(const double* h, const double* r, const double* t, int d, int p = 1);
double transe_distance(const std::vector<double>& h, const std::vector<double>& r,
                       const std::vector<double>& t, int p = 1);

// -log sigma(gamma - d_pos) - (1/n) sum_i log sigma(d_neg_i - gamma)
double ke_loss(double pos_distance, const std::vector<double>& neg_distances, double gamma);

double stable_sigmoid_scalar(double x);
double stable_log_sigmoid_scalar(double x);

// ---------------------------------------------------------------------------
// Table-based baselines

struct BaselineModel {
    BaselineKind kind = BaselineKind::TransE;
    int dim = 0; // entity embedding width; even for the complex-pair models
    int n_entities = 0;
    int n_relations = 0;
    ParameterSet params;

    // tables: "entity" (V x dim), "relation"; RotatE stores relation rows as
    // phases (R x dim/2); SimplE adds "entity_tail" and "relation_inv"
    static BaselineModel init(BaselineKind kind, int n_entities, int n_relations, int dim,
                              Rng& rng);
};

// Higher = more plausible. Pure function of the tables and ids.
double baseline_score(const BaselineModel& model, const Triplet& t);

// (N,1) tape node of per-triplet distances (similarity scores negated), for
// training through the shared loss shell.
Tape::Id baseline_distance_node(Tape& tape, const BaselineModel& model,
                                const std::vector<Triplet>& triplets);

// ---------------------------------------------------------------------------
// Description-encoder models

struct KeplerModel {
    KeplerVariant variant = KeplerVariant::EntityDesc;
    EncoderConfig cfg;
    Tokenizer tokenizer;
    TextEncoder encoder;
    ParameterSet params;
    int n_relations = 0;
    int n_relations2 = 0; // second KG, when trained with one
    int max_desc_len = 64;

    KeplerModel() = default; // empty shell, fill via init() or move assignment
    KeplerModel(KeplerVariant v, EncoderConfig c, Tokenizer tok, int max_len);

    // Registers encoder parameters and the relation table(s).
    static KeplerModel init(KeplerVariant v, EncoderConfig c, Tokenizer tok, int n_relations,
                            int max_desc_len, std::uint64_t seed, int n_relations2 = 0);

    bool uses_relation_table() const { return variant != KeplerVariant::EntityRelDesc; }
};

// Token ids for the encoder input representing an entity. For the
// relation-conditioned variant the input is
// <s> entity-description </s> relation-description, and relation must be set.
std::vector<int> entity_input_ids(const KeplerModel& model, const EntityCatalog& catalog,
                                  const RelationCatalog* rel_catalog, std::int32_t entity,
                                  std::int32_t relation = -1);

// E_<s> of a single entity description (fresh forward pass); 1 x d.
Tensor entity_embedding(KeplerModel& model, const EntityCatalog& catalog,
                        const RelationCatalog* rel_catalog, std::int32_t entity,
                        std::int32_t relation = -1);

// Relation embedding: table row, or E_<s>(text_r) for the
// relation-description variant. 1 x d.
Tensor relation_embedding(KeplerModel& model, const RelationCatalog* rel_catalog,
                          std::int32_t relation, int table_index = 1);

// Row i = embedding of entities[i]; for the conditioned variant all rows are
// conditioned on `relation`. Batched internally; rows match single-entity
// calls exactly.
Tensor precompute_entity_embeddings(KeplerModel& model, const EntityCatalog& catalog,
                                    const RelationCatalog* rel_catalog,
                                    const std::vector<std::int32_t>& entities,
                                    std::int32_t relation = -1);

// Batched tape embedding of (entity, conditioning relation) pairs;
// descriptions that repeat inside the batch are encoded once and the pooled
// rows reused. Returns an (n, d) node aligned with ent_rel.
Tape::Id embed_entities_node(Tape& tape, const KeplerModel& model, const EntityCatalog& catalog,
                             const RelationCatalog* rel_catalog,
                             const std::vector<std::pair<std::int32_t, std::int32_t>>& ent_rel,
                             bool training = false, Rng* dropout_rng = nullptr);

// (N,1) translational distances for the given triplets through the encoder.
Tape::Id kepler_distance_node(Tape& tape, const KeplerModel& model, const EntityCatalog& catalog,
                              const RelationCatalog* rel_catalog,
                              const std::vector<Triplet>& triplets, bool training = false,
                              Rng* dropout_rng = nullptr, int table_index = 1);

// Loss shell over per-row distances: pos (B,1), neg (B*n,1).
Tape::Id ke_loss_node(Tape& tape, Tape::Id pos_distances, Tape::Id neg_distances, double gamma);

// ---------------------------------------------------------------------------
// Negative sampling

struct NegativeBatch {
    std::vector<Triplet> negatives;
    std::uint64_t accepted_known_true = 0; // kept after exhausting retries
};

// Each negative corrupts exactly one side (chosen uniformly) with an entity
// drawn uniformly from the training entity set; corruptions that are known
// true triplets are resampled up to max_retries times, then accepted.
NegativeBatch sample_negatives(const KnowledgeGraph& kg, const Triplet& triplet, int n, Rng& rng,
                               int max_retries = 10);

} // namespace kepler
