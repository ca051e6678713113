#include "kepler/ke.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace kepler {

bool is_baseline(ModelKind k) {
    switch (k) {
    case ModelKind::TransE:
    case ModelKind::DistMult:
    case ModelKind::ComplEx:
    case ModelKind::RotatE:
    case ModelKind::SimplE:
        return true;
    default:
        return false;
    }
}

bool is_encoder_model(ModelKind k) { return !is_baseline(k); }

KeplerVariant variant_of(ModelKind k) {
    switch (k) {
    case ModelKind::KeplerWiki:
    case ModelKind::KeplerKE:
    case ModelKind::MlmOnly:
        return KeplerVariant::EntityDesc;
    case ModelKind::KeplerRel:
        return KeplerVariant::EntityRelDesc;
    case ModelKind::KeplerCond:
        return KeplerVariant::Conditioned;
    default:
        throw std::invalid_argument("variant_of: not an encoder model");
    }
}

BaselineKind baseline_of(ModelKind k) {
    switch (k) {
    case ModelKind::TransE: return BaselineKind::TransE;
    case ModelKind::DistMult: return BaselineKind::DistMult;
    case ModelKind::ComplEx: return BaselineKind::ComplEx;
    case ModelKind::RotatE: return BaselineKind::RotatE;
    case ModelKind::SimplE: return BaselineKind::SimplE;
    default:
        throw std::invalid_argument("baseline_of: not a table model");
    }
}

std::string to_string(ModelKind k) {
    switch (k) {
    case ModelKind::KeplerWiki: return "kepler-wiki";
    case ModelKind::KeplerRel: return "kepler-rel";
    case ModelKind::KeplerCond: return "kepler-cond";
    case ModelKind::KeplerKE: return "kepler-ke";
    case ModelKind::MlmOnly: return "mlm-only";
    case ModelKind::TransE: return "transe";
    case ModelKind::DistMult: return "distmult";
    case ModelKind::ComplEx: return "complex";
    case ModelKind::RotatE: return "rotate";
    case ModelKind::SimplE: return "simple";
    }
    return "?";
}

ModelKind model_kind_from_string(const std::string& s) {
    for (ModelKind k : {ModelKind::KeplerWiki, ModelKind::KeplerRel, ModelKind::KeplerCond,
                        ModelKind::KeplerKE, ModelKind::MlmOnly, ModelKind::TransE,
                        ModelKind::DistMult, ModelKind::ComplEx, ModelKind::RotatE,
                        ModelKind::SimplE})
        if (to_string(k) == s) return k;
    throw std::invalid_argument("unknown model kind: " + s);
}

// ---------------------------------------------------------------------------

double stable_sigmoid_scalar(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double stable_log_sigmoid_scalar(double x) {
    if (x >= 0.0) return -std::log1p(std::exp(-x));
    return x - std::log1p(std::exp(x));
}

double transe_distance(const double* h, const double* r, const double* t, int d, int p) {
    if (p != 1 && p != 2) throw std::invalid_argument("transe_distance: p must be 1 or 2");
    double acc = 0.0;
    if (p == 1) {
        for (int j = 0; j < d; ++j) acc += std::fabs(h[j] + r[j] - t[j]);
        return acc;
    }
    for (int j = 0; j < d; ++j) {
        const double x = h[j] + r[j] - t[j];
        acc += x * x;
    }
    return std::sqrt(acc);
}

double transe_distance(const std::vector<double>& h, const std::vector<double>& r,
                       const std::vector<double>& t, int p) {
    if (h.size() != r.size() || h.size() != t.size())
        throw std::invalid_argument("transe_distance: dimension mismatch " +
                                    std::to_string(h.size()) + "/" + std::to_string(r.size()) +
                                    "/" + std::to_string(t.size()));
    return transe_distance(h.data(), r.data(), t.data(), static_cast<int>(h.size()), p);
}

double ke_loss(double pos_distance, const std::vector<double>& neg_distances, double gamma) {
    if (neg_distances.empty()) throw std::invalid_argument("ke_loss: no negative distances");
    double loss = -stable_log_sigmoid_scalar(gamma - pos_distance);
    double neg = 0.0;
    for (double d : neg_distances) neg += stable_log_sigmoid_scalar(d - gamma);
    return loss - neg / static_cast<double>(neg_distances.size());
}

Tape::Id ke_loss_node(Tape& tape, Tape::Id pos_distances, Tape::Id neg_distances, double gamma) {
    const Tape::Id pos = tape.mean_all(tape.log_sigmoid(tape.affine(pos_distances, -1.0, gamma)));
    const Tape::Id neg = tape.mean_all(tape.log_sigmoid(tape.affine(neg_distances, 1.0, -gamma)));
    return tape.affine(tape.add(pos, neg), -1.0, 0.0);
}

// ---------------------------------------------------------------------------

BaselineModel BaselineModel::init(BaselineKind kind, int n_entities, int n_relations, int dim,
                                  Rng& rng) {
    if (n_entities < 1 || n_relations < 1)
        throw std::invalid_argument("BaselineModel: empty entity or relation set");
    const bool complex_pairs = kind == BaselineKind::ComplEx || kind == BaselineKind::RotatE;
    if (dim < 1 || (complex_pairs && dim % 2 != 0))
        throw std::invalid_argument("BaselineModel: complex-pair models need an even dimension");

    BaselineModel m;
    m.kind = kind;
    m.dim = dim;
    m.n_entities = n_entities;
    m.n_relations = n_relations;

    const double bound = 6.0 / std::sqrt(static_cast<double>(dim));
    auto uniform_table = [&](const std::string& name, int rows, int cols, double lo, double hi) {
        Tensor t(rows, cols);
        for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
        m.params.add(name, std::move(t));
    };

    uniform_table("entity", n_entities, dim, -bound, bound);
    if (kind == BaselineKind::RotatE) {
        constexpr double pi = 3.14159265358979323846;
        uniform_table("relation", n_relations, dim / 2, -pi, pi); // phases
    } else {
        uniform_table("relation", n_relations, dim, -bound, bound);
    }
    if (kind == BaselineKind::SimplE) {
        uniform_table("entity_tail", n_entities, dim, -bound, bound);
        uniform_table("relation_inv", n_relations, dim, -bound, bound);
    }
    return m;
}

double baseline_score(const BaselineModel& model, const Triplet& t) {
    const int d = model.dim;
    const Tensor& ent = model.params.at("entity").value;
    const Tensor& rel = model.params.at("relation").value;
    const double* h = ent.row_ptr(t.head);
    const double* tt = ent.row_ptr(t.tail);
    const double* r = rel.row_ptr(t.relation);

    switch (model.kind) {
    case BaselineKind::TransE:
        return -transe_distance(h, r, tt, d, 1);
    case BaselineKind::DistMult: {
        double acc = 0.0;
        for (int j = 0; j < d; ++j) acc += h[j] * r[j] * tt[j];
        return acc;
    }
    case BaselineKind::ComplEx: {
        // layout: [re(0..d/2) | im(0..d/2)]; Re(sum h r conj(t))
        const int half = d / 2;
        double acc = 0.0;
        for (int j = 0; j < half; ++j) {
            const double hr = h[j], hi = h[half + j];
            const double rr = r[j], ri = r[half + j];
            const double tr = tt[j], ti = tt[half + j];
            acc += (hr * rr - hi * ri) * tr + (hr * ri + hi * rr) * ti;
        }
        return acc;
    }
    case BaselineKind::RotatE: {
        // relation rows are phases, modulus exactly 1 by construction
        const int half = d / 2;
        double acc = 0.0;
        for (int j = 0; j < half; ++j) {
            const double c = std::cos(r[j]), s = std::sin(r[j]);
            const double re = h[j] * c - h[half + j] * s - tt[j];
            const double im = h[j] * s + h[half + j] * c - tt[half + j];
            acc += re * re + im * im;
        }
        return -std::sqrt(acc);
    }
    case BaselineKind::SimplE: {
        const Tensor& ent_tail = model.params.at("entity_tail").value;
        const Tensor& rel_inv = model.params.at("relation_inv").value;
        const double* h_head = h;
        const double* t_tail = ent_tail.row_ptr(t.tail);
        const double* t_head = ent.row_ptr(t.tail);
        const double* h_tail = ent_tail.row_ptr(t.head);
        const double* r_inv = rel_inv.row_ptr(t.relation);
        double fwd = 0.0, bwd = 0.0;
        for (int j = 0; j < d; ++j) {
            fwd += h_head[j] * r[j] * t_tail[j];
            bwd += t_head[j] * r_inv[j] * h_tail[j];
        }
        return 0.5 * (fwd + bwd);
    }
    }
    throw std::logic_error("baseline_score: unreachable");
}

Tape::Id baseline_distance_node(Tape& tape, const BaselineModel& model,
                                const std::vector<Triplet>& triplets) {
    std::vector<int> hs, rs, ts;
    hs.reserve(triplets.size());
    rs.reserve(triplets.size());
    ts.reserve(triplets.size());
    for (const Triplet& t : triplets) {
        hs.push_back(t.head);
        rs.push_back(t.relation);
        ts.push_back(t.tail);
    }

    const Tape::Id ent = tape.param("entity");
    const Tape::Id rel = tape.param("relation");
    const Tape::Id h = tape.gather_rows(ent, hs);
    const Tape::Id r = tape.gather_rows(rel, rs);
    const Tape::Id t = tape.gather_rows(ent, ts);
    const int half = model.dim / 2;

    switch (model.kind) {
    case BaselineKind::TransE:
        return tape.row_pnorm(tape.sub(tape.add(h, r), t), 1);
    case BaselineKind::DistMult:
        return tape.affine(tape.row_sum(tape.mul(tape.mul(h, r), t)), -1.0, 0.0);
    case BaselineKind::ComplEx: {
        const Tape::Id hr = tape.slice_cols(h, 0, half), hi = tape.slice_cols(h, half, half);
        const Tape::Id rr = tape.slice_cols(r, 0, half), ri = tape.slice_cols(r, half, half);
        const Tape::Id tr = tape.slice_cols(t, 0, half), ti = tape.slice_cols(t, half, half);
        const Tape::Id re_part =
            tape.mul(tape.sub(tape.mul(hr, rr), tape.mul(hi, ri)), tr);
        const Tape::Id im_part =
            tape.mul(tape.add(tape.mul(hr, ri), tape.mul(hi, rr)), ti);
        return tape.affine(tape.row_sum(tape.add(re_part, im_part)), -1.0, 0.0);
    }
    case BaselineKind::RotatE: {
        const Tape::Id hr = tape.slice_cols(h, 0, half), hi = tape.slice_cols(h, half, half);
        const Tape::Id tr = tape.slice_cols(t, 0, half), ti = tape.slice_cols(t, half, half);
        const Tape::Id c = tape.cos(r), s = tape.sin(r);
        const Tape::Id re = tape.sub(tape.sub(tape.mul(hr, c), tape.mul(hi, s)), tr);
        const Tape::Id im = tape.sub(tape.add(tape.mul(hr, s), tape.mul(hi, c)), ti);
        return tape.row_pnorm(tape.concat_cols({re, im}), 2);
    }
    case BaselineKind::SimplE: {
        const Tape::Id ent_tail = tape.param("entity_tail");
        const Tape::Id rel_inv = tape.param("relation_inv");
        const Tape::Id h_tail = tape.gather_rows(ent_tail, hs);
        const Tape::Id t_tail = tape.gather_rows(ent_tail, ts);
        const Tape::Id t_head = tape.gather_rows(ent, ts);
        const Tape::Id r_inv = tape.gather_rows(rel_inv, rs);
        const Tape::Id fwd = tape.row_sum(tape.mul(tape.mul(h, r), t_tail));
        const Tape::Id bwd = tape.row_sum(tape.mul(tape.mul(t_head, r_inv), h_tail));
        return tape.affine(tape.add(fwd, bwd), -0.5, 0.0);
    }
    }
    throw std::logic_error("baseline_distance_node: unreachable");
}

// ---------------------------------------------------------------------------

KeplerModel::KeplerModel(KeplerVariant v, EncoderConfig c, Tokenizer tok, int max_len)
    : variant(v), cfg(c), tokenizer(std::move(tok)), encoder(c), max_desc_len(max_len) {}

KeplerModel KeplerModel::init(KeplerVariant v, EncoderConfig c, Tokenizer tok, int n_relations,
                              int max_desc_len, std::uint64_t seed, int n_relations2) {
    if (c.vocab_size == 0) c.vocab_size = tok.vocab_size();
    if (max_desc_len > c.max_positions)
        throw std::invalid_argument("KeplerModel: max_desc_len exceeds encoder max_positions");
    KeplerModel m(v, c, std::move(tok), max_desc_len);
    m.n_relations = n_relations;
    m.n_relations2 = n_relations2;
    Rng rng(seed);
    m.encoder.init_params(m.params, rng);
    if (m.uses_relation_table()) {
        auto add_table = [&](const std::string& name, int rows) {
            Tensor t(rows, c.hidden);
            for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, c.init_std);
            m.params.add(name, std::move(t));
        };
        add_table("relation_table", n_relations);
        if (n_relations2 > 0) add_table("relation_table2", n_relations2);
    }
    return m;
}

std::vector<int> entity_input_ids(const KeplerModel& model, const EntityCatalog& catalog,
                                  const RelationCatalog* rel_catalog, std::int32_t entity,
                                  std::int32_t relation) {
    if (entity < 0 || entity >= static_cast<std::int32_t>(catalog.descriptions.size()) ||
        catalog.descriptions[static_cast<std::size_t>(entity)].empty())
        throw std::invalid_argument("entity_embedding: missing description for entity id " +
                                    std::to_string(entity));
    const std::string& desc = catalog.descriptions[static_cast<std::size_t>(entity)];

    if (model.variant == KeplerVariant::Conditioned) {
        if (relation < 0)
            throw std::invalid_argument(
                "entity_embedding: conditioned variant requires a relation");
        if (!rel_catalog || !rel_catalog->has(relation))
            throw std::invalid_argument(
                "entity_embedding: missing relation description for relation id " +
                std::to_string(relation));
        return model.tokenizer.encode_pair(desc, rel_catalog->description_of(relation),
                                           model.max_desc_len);
    }
    return model.tokenizer.encode(desc, model.max_desc_len);
}

namespace {
std::vector<int> relation_input_ids(const KeplerModel& model, const RelationCatalog* rel_catalog,
                                    std::int32_t relation) {
    if (!rel_catalog || !rel_catalog->has(relation))
        throw std::invalid_argument(
            "relation_embedding: missing relation description for relation id " +
            std::to_string(relation));
    return model.tokenizer.encode(rel_catalog->description_of(relation), model.max_desc_len);
}
} // namespace

Tape::Id embed_entities_node(Tape& tape, const KeplerModel& model, const EntityCatalog& catalog,
                             const RelationCatalog* rel_catalog,
                             const std::vector<std::pair<std::int32_t, std::int32_t>>& ent_rel,
                             bool training, Rng* dropout_rng) {
    if (ent_rel.empty()) throw std::invalid_argument("embed_entities_node: empty batch");

    // encode each distinct (entity, conditioning relation) once
    std::map<std::pair<std::int32_t, std::int32_t>, int> unique_index;
    std::vector<std::vector<int>> sequences;
    std::vector<int> expand;
    expand.reserve(ent_rel.size());
    for (const auto& er : ent_rel) {
        auto [it, fresh] = unique_index.emplace(er, static_cast<int>(sequences.size()));
        if (fresh)
            sequences.push_back(entity_input_ids(model, catalog, rel_catalog, er.first,
                                                 er.second));
        expand.push_back(it->second);
    }

    const TokenBatch batch = TokenBatch::from_sequences(sequences);
    const Tape::Id h = model.encoder.encode(tape, batch, training, dropout_rng);
    const Tape::Id pooled = model.encoder.pool_start(tape, h, batch);
    return tape.gather_rows(pooled, expand);
}

Tensor entity_embedding(KeplerModel& model, const EntityCatalog& catalog,
                        const RelationCatalog* rel_catalog, std::int32_t entity,
                        std::int32_t relation) {
    Tape tape(&model.params);
    const Tape::Id pooled =
        embed_entities_node(tape, model, catalog, rel_catalog, {{entity, relation}});
    return tape.value(pooled);
}

Tensor relation_embedding(KeplerModel& model, const RelationCatalog* rel_catalog,
                          std::int32_t relation, int table_index) {
    if (model.variant == KeplerVariant::EntityRelDesc) {
        Tape tape(&model.params);
        const std::vector<int> ids = relation_input_ids(model, rel_catalog, relation);
        const TokenBatch batch = TokenBatch::from_sequences({ids});
        const Tape::Id h = model.encoder.encode(tape, batch);
        const Tape::Id pooled = model.encoder.pool_start(tape, h, batch);
        return tape.value(pooled);
    }
    const std::string table = table_index == 2 ? "relation_table2" : "relation_table";
    const Tensor& t = model.params.at(table).value;
    if (relation < 0 || relation >= t.rows())
        throw std::out_of_range("relation_embedding: relation id " + std::to_string(relation) +
                                " out of table rows " + std::to_string(t.rows()));
    Tensor out(1, t.cols());
    std::copy(t.row_ptr(relation), t.row_ptr(relation) + t.cols(), out.data());
    return out;
}

Tensor precompute_entity_embeddings(KeplerModel& model, const EntityCatalog& catalog,
                                    const RelationCatalog* rel_catalog,
                                    const std::vector<std::int32_t>& entities,
                                    std::int32_t relation) {
    // surface missing descriptions before any encoding work
    std::string missing;
    int n_missing = 0;
    for (std::int32_t e : entities) {
        if (e < 0 || e >= static_cast<std::int32_t>(catalog.descriptions.size()) ||
            catalog.descriptions[static_cast<std::size_t>(e)].empty()) {
            ++n_missing;
            if (!missing.empty()) missing += ", ";
            if (n_missing <= 8) missing += std::to_string(e);
        }
    }
    if (n_missing > 0)
        throw std::invalid_argument("precompute_entity_embeddings: " + std::to_string(n_missing) +
                                    " entities without descriptions: " + missing);

    Tensor out(static_cast<int>(entities.size()), model.cfg.hidden);
    constexpr std::size_t kGroup = 32;
    for (std::size_t base = 0; base < entities.size(); base += kGroup) {
        const std::size_t count = std::min(kGroup, entities.size() - base);
        std::vector<std::pair<std::int32_t, std::int32_t>> ent_rel;
        ent_rel.reserve(count);
        for (std::size_t i = 0; i < count; ++i)
            ent_rel.emplace_back(entities[base + i], relation);
        Tape tape(&model.params);
        const Tape::Id pooled = embed_entities_node(tape, model, catalog, rel_catalog, ent_rel);
        const Tensor& v = tape.value(pooled);
        for (std::size_t i = 0; i < count; ++i)
            std::copy(v.row_ptr(static_cast<int>(i)), v.row_ptr(static_cast<int>(i)) + v.cols(),
                      out.row_ptr(static_cast<int>(base + i)));
    }
    return out;
}

Tape::Id kepler_distance_node(Tape& tape, const KeplerModel& model, const EntityCatalog& catalog,
                              const RelationCatalog* rel_catalog,
                              const std::vector<Triplet>& triplets, bool training,
                              Rng* dropout_rng, int table_index) {
    if (triplets.empty()) throw std::invalid_argument("kepler_distance_node: empty batch");
    const bool cond = model.variant == KeplerVariant::Conditioned;

    std::vector<std::pair<std::int32_t, std::int32_t>> ent_rel;
    ent_rel.reserve(triplets.size() * 2);
    for (const Triplet& t : triplets) {
        ent_rel.emplace_back(t.head, cond ? t.relation : -1);
        ent_rel.emplace_back(t.tail, cond ? t.relation : -1);
    }
    const Tape::Id both =
        embed_entities_node(tape, model, catalog, rel_catalog, ent_rel, training, dropout_rng);
    std::vector<int> head_rows, tail_rows;
    for (std::size_t i = 0; i < triplets.size(); ++i) {
        head_rows.push_back(static_cast<int>(2 * i));
        tail_rows.push_back(static_cast<int>(2 * i + 1));
    }
    const Tape::Id h = tape.gather_rows(both, head_rows);
    const Tape::Id t = tape.gather_rows(both, tail_rows);

    Tape::Id r;
    if (model.variant == KeplerVariant::EntityRelDesc) {
        std::map<std::int32_t, int> unique;
        std::vector<std::vector<int>> sequences;
        std::vector<int> expand;
        for (const Triplet& t2 : triplets) {
            auto [it, fresh] = unique.emplace(t2.relation, static_cast<int>(sequences.size()));
            if (fresh) sequences.push_back(relation_input_ids(model, rel_catalog, t2.relation));
            expand.push_back(it->second);
        }
        const TokenBatch batch = TokenBatch::from_sequences(sequences);
        const Tape::Id hr = model.encoder.encode(tape, batch, training, dropout_rng);
        const Tape::Id pooled = model.encoder.pool_start(tape, hr, batch);
        r = tape.gather_rows(pooled, expand);
    } else {
        std::vector<int> rel_rows;
        rel_rows.reserve(triplets.size());
        for (const Triplet& t2 : triplets) rel_rows.push_back(t2.relation);
        const std::string table = table_index == 2 ? "relation_table2" : "relation_table";
        r = tape.gather_rows(tape.param(table), rel_rows);
    }

    return tape.row_pnorm(tape.sub(tape.add(h, r), t), 1);
}

// ---------------------------------------------------------------------------

NegativeBatch sample_negatives(const KnowledgeGraph& kg, const Triplet& triplet, int n, Rng& rng,
                               int max_retries) {
    const std::int32_t n_entities = kg.entities().size();
    if (n_entities < 2)
        throw std::invalid_argument("sample_negatives: need at least 2 entities");
    NegativeBatch out;
    out.negatives.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const bool corrupt_head = rng.coin();
        Triplet neg = triplet;
        for (int attempt = 0;; ++attempt) {
            const auto replacement =
                static_cast<std::int32_t>(rng.uniform_int(static_cast<std::uint64_t>(n_entities)));
            (corrupt_head ? neg.head : neg.tail) = replacement;
            if (!kg.contains(neg)) break;
            if (attempt >= max_retries) {
                ++out.accepted_known_true;
                break;
            }
        }
        out.negatives.push_back(neg);
    }
    return out;
}

} // namespace kepler
