#include "kepler/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "kepler/checkpoint.hpp"

namespace kepler {

std::string to_string(Objective o) {
    switch (o) {
    case Objective::Joint: return "joint";
    case Objective::KeOnly: return "ke_only";
    case Objective::MlmOnly: return "mlm_only";
    }
    return "?";
}

Objective objective_from_string(const std::string& s) {
    if (s == "joint") return Objective::Joint;
    if (s == "ke_only") return Objective::KeOnly;
    if (s == "mlm_only") return Objective::MlmOnly;
    throw std::invalid_argument("unknown objective: " + s);
}

Objective default_objective(ModelKind kind) {
    if (is_baseline(kind)) return Objective::KeOnly;
    switch (kind) {
    case ModelKind::KeplerKE: return Objective::KeOnly;
    case ModelKind::MlmOnly: return Objective::MlmOnly;
    default: return Objective::Joint;
    }
}

void write_train_log(const TrainReport& report, std::ostream& out, bool second_kg) {
    char buf[128];
    for (const StepLoss& s : report.steps) {
        out << s.step;
        auto col = [&](double v) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            out << '\t' << buf;
        };
        col(s.total);
        col(s.ke);
        col(s.mlm);
        if (second_kg) col(s.ke2);
        out << '\n';
    }
}

TripletSource::TripletSource(const KnowledgeGraph& train, int batch_size, Rng rng)
    : train_(train), batch_size_(batch_size), rng_(rng) {
    if (batch_size_ < 1) throw std::invalid_argument("TripletSource: batch size must be >= 1");
    if (train_.n_triplets() == 0) throw std::invalid_argument("TripletSource: empty train graph");
    order_.resize(static_cast<std::size_t>(train_.n_triplets()));
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    rng_.shuffle(order_);
}

std::vector<Triplet> TripletSource::next_batch() {
    std::vector<Triplet> batch;
    batch.reserve(static_cast<std::size_t>(batch_size_));
    for (int i = 0; i < batch_size_; ++i) {
        if (cursor_ >= order_.size()) {
            rng_.shuffle(order_);
            cursor_ = 0;
        }
        batch.push_back(train_.triplets()[order_[cursor_++]]);
    }
    read_ += static_cast<std::uint64_t>(batch.size());
    return batch;
}

std::int64_t TripletSource::steps_per_epoch() const {
    return (train_.n_triplets() + batch_size_ - 1) / batch_size_;
}

CorpusSource::CorpusSource(std::vector<std::string> lines) : lines_(std::move(lines)) {
    lines_.erase(std::remove_if(lines_.begin(), lines_.end(),
                                [](const std::string& l) { return count_words(l) == 0; }),
                 lines_.end());
}

CorpusSource CorpusSource::from_stream(std::istream& in) {
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return CorpusSource(std::move(lines));
}

CorpusSource CorpusSource::from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open corpus file: " + path);
    return from_stream(in);
}

std::string CorpusSource::text_for_tokenizer() {
    std::string all;
    for (const std::string& l : lines_) {
        all += l;
        all += '\n';
        bytes_read_ += l.size() + 1;
    }
    return all;
}

std::vector<std::string> CorpusSource::next_lines(int n) {
    if (lines_.empty()) throw std::runtime_error("CorpusSource: corpus has no usable lines");
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        if (cursor_ >= lines_.size()) cursor_ = 0;
        out.push_back(lines_[cursor_]);
        bytes_read_ += lines_[cursor_].size();
        ++cursor_;
    }
    return out;
}

namespace {

struct CheckpointWriter {
    std::string dir;
    std::string path; // empty when checkpoints are disabled
    void write(const ParameterSet& params, const nlohmann::json& meta) {
        if (dir.empty()) return;
        std::filesystem::create_directories(dir);
        if (path.empty()) path = dir + "/model.kepf";
        save_checkpoint(path, params, meta);
    }
};

double require_finite(double total, const std::string& last_ckpt) {
    if (!std::isfinite(total))
        throw TrainAbort("training aborted on non-finite loss; last good checkpoint: " +
                         (last_ckpt.empty() ? std::string("none") : last_ckpt));
    return total;
}

} // namespace

nlohmann::json checkpoint_meta(const TrainConfig& cfg, const KeplerModel& model,
                               std::int64_t steps) {
    nlohmann::json j;
    j["schema"] = "kepler-checkpoint";
    j["kind"] = to_string(cfg.model);
    j["objective"] = to_string(cfg.objective);
    j["gamma"] = cfg.gamma;
    j["gamma2"] = cfg.gamma2;
    j["n_neg"] = cfg.n_neg;
    j["dim"] = model.cfg.hidden;
    j["layers"] = model.cfg.n_layers;
    j["heads"] = model.cfg.n_heads;
    j["ffn_dim"] = model.cfg.ffn_dim;
    j["max_positions"] = model.cfg.max_positions;
    j["max_desc_len"] = model.max_desc_len;
    j["vocab_size"] = model.cfg.vocab_size;
    j["dropout"] = model.cfg.dropout;
    j["n_relations"] = model.n_relations;
    j["n_relations2"] = model.n_relations2;
    j["seed"] = cfg.seed;
    j["steps"] = steps;
    j["vocab_file"] = "vocab.txt";
    j["merges_file"] = "merges.txt";
    return j;
}

nlohmann::json checkpoint_meta(const TrainConfig& cfg, const BaselineModel& model,
                               std::int64_t steps) {
    nlohmann::json j;
    j["schema"] = "kepler-checkpoint";
    j["kind"] = to_string(cfg.model);
    j["objective"] = "ke_only";
    j["gamma"] = cfg.gamma;
    j["n_neg"] = cfg.n_neg;
    j["dim"] = model.dim;
    j["n_entities"] = model.n_entities;
    j["n_relations"] = model.n_relations;
    j["seed"] = cfg.seed;
    j["steps"] = steps;
    return j;
}

TrainReport train_kepler(const TrainConfig& cfg, const KeplerTrainData& data,
                         KeplerModel* out_model) {
    const auto t_start = std::chrono::steady_clock::now();
    if (!is_encoder_model(cfg.model))
        throw std::invalid_argument("train_kepler: " + to_string(cfg.model) +
                                    " is a table baseline; use train_baseline");
    if (!data.split || !data.catalog)
        throw std::invalid_argument("train_kepler: a data split and entity catalog are required");
    const bool want_ke = cfg.objective != Objective::MlmOnly;
    const bool want_mlm = cfg.objective != Objective::KeOnly;
    if (want_mlm && !data.corpus)
        throw std::invalid_argument("train_kepler: objective " + to_string(cfg.objective) +
                                    " requires an MLM corpus");
    if (cfg.model == ModelKind::MlmOnly && cfg.objective != Objective::MlmOnly)
        throw std::invalid_argument("train_kepler: mlm-only model implies the mlm_only objective");
    const bool second_kg = want_ke && data.split2 != nullptr;
    if (second_kg && !data.catalog2)
        throw std::invalid_argument("train_kepler: second KG given without its entity catalog");
    const KeplerVariant variant = variant_of(cfg.model);
    if ((variant == KeplerVariant::EntityRelDesc || variant == KeplerVariant::Conditioned) &&
        !data.rel_catalog)
        throw std::invalid_argument("train_kepler: this variant needs relation descriptions");

    // Tokenizer: trained on the entity descriptions (skipped for mlm_only,
    // which never touches the KG side) plus the MLM corpus when active.
    std::string tok_text;
    if (cfg.objective != Objective::MlmOnly) {
        for (const std::string& d : data.catalog->descriptions) {
            tok_text += d;
            tok_text += '\n';
        }
        if (second_kg)
            for (const std::string& d : data.catalog2->descriptions) {
                tok_text += d;
                tok_text += '\n';
            }
        if (data.rel_catalog)
            for (const auto& d : data.rel_catalog->descriptions)
                if (d) {
                    tok_text += *d;
                    tok_text += '\n';
                }
    }
    if (want_mlm) tok_text += data.corpus->text_for_tokenizer();
    std::istringstream tok_stream(tok_text);
    Tokenizer tokenizer = Tokenizer::train_bpe(tok_stream, cfg.bpe_vocab);

    EncoderConfig enc_cfg;
    enc_cfg.n_layers = cfg.layers;
    enc_cfg.hidden = cfg.dim;
    enc_cfg.n_heads = cfg.heads;
    enc_cfg.ffn_dim = cfg.ffn > 0 ? cfg.ffn : 4 * cfg.dim;
    enc_cfg.max_positions = cfg.max_len;
    enc_cfg.vocab_size = tokenizer.vocab_size();
    enc_cfg.dropout = cfg.dropout;

    KeplerModel model = KeplerModel::init(
        variant, enc_cfg, std::move(tokenizer), data.split->train.relations().size(),
        cfg.max_len, cfg.seed, second_kg ? data.split2->train.relations().size() : 0);

    Rng master(cfg.seed);
    Rng ke_rng = master.fork(1);
    Rng neg_rng = master.fork(2);
    Rng mask_rng = master.fork(3);
    Rng drop_rng = master.fork(4);
    Rng ke2_rng = master.fork(5);
    Rng neg2_rng = master.fork(6);

    std::optional<TripletSource> ke_src, ke2_src;
    if (want_ke) {
        ke_src.emplace(data.split->train, cfg.batch_ke, ke_rng);
        if (second_kg) ke2_src.emplace(data.split2->train, cfg.batch_ke, ke2_rng);
    }

    // epochs are defined over the KE stream; pure-MLM runs fall back to the
    // corpus line count
    std::int64_t steps_per_epoch =
        want_ke ? ke_src->steps_per_epoch()
                : (data.corpus->n_lines() + cfg.batch_mlm - 1) / cfg.batch_mlm;
    std::int64_t total_steps = steps_per_epoch * cfg.epochs;
    if (cfg.max_steps > 0) total_steps = std::min(total_steps, cfg.max_steps);

    AdamConfig adam_cfg;
    adam_cfg.lr = cfg.lr;
    adam_cfg.beta1 = cfg.beta1;
    adam_cfg.beta2 = cfg.beta2;
    adam_cfg.eps = cfg.adam_eps;
    adam_cfg.warmup_steps = static_cast<std::int64_t>(cfg.warmup_frac * total_steps);
    AdamOptimizer opt(adam_cfg);

    TrainReport report;
    CheckpointWriter ckpt{cfg.out_dir, ""};
    if (!cfg.out_dir.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        model.tokenizer.save(cfg.out_dir + "/vocab.txt", cfg.out_dir + "/merges.txt");
    }

    const bool training_mode = cfg.dropout > 0.0;
    std::int64_t logged = 0;
    for (std::int64_t step = 1; step <= total_steps; ++step) {
        for (int micro = 0; micro < cfg.grad_accum; ++micro) {
            Tape tape(&model.params);
            StepLoss row;
            row.step = ++logged;
            Tape::Id total_node = -1;
            auto accumulate = [&](Tape::Id part) {
                total_node = total_node < 0 ? part : tape.add(total_node, part);
            };

            if (want_ke) {
                auto build_kg_loss = [&](TripletSource& src, const DataSplit& split,
                                         const EntityCatalog& catalog, Rng& nrng, double gamma,
                                         int table_index) {
                    const std::vector<Triplet> pos = src.next_batch();
                    std::vector<Triplet> all = pos;
                    for (const Triplet& p : pos) {
                        NegativeBatch nb =
                            sample_negatives(split.train, p, cfg.n_neg, nrng);
                        report.false_negatives_accepted += nb.accepted_known_true;
                        all.insert(all.end(), nb.negatives.begin(), nb.negatives.end());
                    }
                    const Tape::Id d = kepler_distance_node(
                        tape, model, catalog, data.rel_catalog, all, training_mode,
                        training_mode ? &drop_rng : nullptr, table_index);
                    const auto b = static_cast<int>(pos.size());
                    const Tape::Id d_pos = tape.slice_rows(d, 0, b);
                    const Tape::Id d_neg = tape.slice_rows(d, b, b * cfg.n_neg);
                    return ke_loss_node(tape, d_pos, d_neg, gamma);
                };
                const Tape::Id ke_id = build_kg_loss(*ke_src, *data.split, *data.catalog,
                                                     neg_rng, cfg.gamma, 1);
                row.ke = tape.value(ke_id).item();
                accumulate(ke_id);
                if (second_kg) {
                    const Tape::Id ke2_id = build_kg_loss(*ke2_src, *data.split2, *data.catalog2,
                                                          neg2_rng, cfg.gamma2, 2);
                    row.ke2 = tape.value(ke2_id).item();
                    accumulate(ke2_id);
                }
            }
            if (want_mlm) {
                const std::vector<std::string> lines = data.corpus->next_lines(cfg.batch_mlm);
                std::vector<std::vector<int>> seqs;
                seqs.reserve(lines.size());
                for (const std::string& l : lines)
                    seqs.push_back(model.tokenizer.encode(l, cfg.max_len));
                const TokenBatch clean = TokenBatch::from_sequences(seqs);
                const MlmBatch masked = apply_mlm_masking(clean, model.tokenizer, mask_rng);
                const Tape::Id mlm_id = mlm_loss(tape, model.encoder, masked, training_mode,
                                                 training_mode ? &drop_rng : nullptr);
                row.mlm = tape.value(mlm_id).item();
                accumulate(mlm_id);
            }

            row.total = tape.value(total_node).item();
            require_finite(row.total, ckpt.path);
            report.steps.push_back(row);

            const Tape::Id scaled =
                cfg.grad_accum > 1 ? tape.affine(total_node, 1.0 / cfg.grad_accum, 0.0)
                                   : total_node;
            tape.backward(scaled);
        }
        opt.step(model.params);
        if (cfg.checkpoint_interval > 0 && step % cfg.checkpoint_interval == 0)
            ckpt.write(model.params, checkpoint_meta(cfg, model, step));
    }
    ckpt.write(model.params, checkpoint_meta(cfg, model, total_steps));

    report.total_steps = total_steps;
    report.checkpoint_path = ckpt.path;
    if (ke_src) report.ke_triplets_read = ke_src->triplets_read();
    if (ke2_src) report.ke2_triplets_read = ke2_src->triplets_read();
    if (data.corpus) report.mlm_bytes_read = data.corpus->bytes_read();
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    if (out_model) *out_model = std::move(model);
    return report;
}

TrainReport train_baseline(const TrainConfig& cfg, const DataSplit& split,
                           BaselineModel* out_model) {
    const auto t_start = std::chrono::steady_clock::now();
    if (!is_baseline(cfg.model))
        throw std::invalid_argument("train_baseline: " + to_string(cfg.model) +
                                    " is not a table baseline");

    Rng master(cfg.seed);
    Rng init_rng = master.fork(0);
    Rng ke_rng = master.fork(1);
    Rng neg_rng = master.fork(2);

    BaselineModel model =
        BaselineModel::init(baseline_of(cfg.model), split.train.entities().size(),
                            split.train.relations().size(), cfg.dim, init_rng);

    TripletSource src(split.train, cfg.batch_ke, ke_rng);
    std::int64_t total_steps = src.steps_per_epoch() * cfg.epochs;
    if (cfg.max_steps > 0) total_steps = std::min(total_steps, cfg.max_steps);

    AdamConfig adam_cfg;
    adam_cfg.lr = cfg.lr;
    adam_cfg.beta1 = cfg.beta1;
    adam_cfg.beta2 = cfg.beta2;
    adam_cfg.eps = cfg.adam_eps;
    adam_cfg.warmup_steps = static_cast<std::int64_t>(cfg.warmup_frac * total_steps);
    AdamOptimizer opt(adam_cfg);

    TrainReport report;
    CheckpointWriter ckpt{cfg.out_dir, ""};
    std::int64_t logged = 0;
    for (std::int64_t step = 1; step <= total_steps; ++step) {
        for (int micro = 0; micro < cfg.grad_accum; ++micro) {
            Tape tape(&model.params);
            const std::vector<Triplet> pos = src.next_batch();
            std::vector<Triplet> all = pos;
            for (const Triplet& p : pos) {
                NegativeBatch nb = sample_negatives(split.train, p, cfg.n_neg, neg_rng);
                report.false_negatives_accepted += nb.accepted_known_true;
                all.insert(all.end(), nb.negatives.begin(), nb.negatives.end());
            }
            const Tape::Id d = baseline_distance_node(tape, model, all);
            const auto b = static_cast<int>(pos.size());
            const Tape::Id loss = ke_loss_node(tape, tape.slice_rows(d, 0, b),
                                               tape.slice_rows(d, b, b * cfg.n_neg), cfg.gamma);
            StepLoss row;
            row.step = ++logged;
            row.ke = tape.value(loss).item();
            row.total = row.ke;
            require_finite(row.total, ckpt.path);
            report.steps.push_back(row);
            const Tape::Id scaled = cfg.grad_accum > 1
                                        ? tape.affine(loss, 1.0 / cfg.grad_accum, 0.0)
                                        : loss;
            tape.backward(scaled);
        }
        opt.step(model.params);
        if (cfg.checkpoint_interval > 0 && step % cfg.checkpoint_interval == 0)
            ckpt.write(model.params, checkpoint_meta(cfg, model, step));
    }
    ckpt.write(model.params, checkpoint_meta(cfg, model, total_steps));

    report.total_steps = total_steps;
    report.checkpoint_path = ckpt.path;
    report.ke_triplets_read = src.triplets_read();
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    if (out_model) *out_model = std::move(model);
    return report;
}

LoadedModel load_model(const std::string& checkpoint_path) {
    LoadedModel out;
    ParameterSet params;
    out.meta = load_checkpoint(checkpoint_path, params);
    if (!out.meta.contains("kind"))
        throw CheckpointError("checkpoint meta lacks a model kind");
    out.kind = model_kind_from_string(out.meta.at("kind").get<std::string>());

    if (is_baseline(out.kind)) {
        auto model = std::make_unique<BaselineModel>();
        model->kind = baseline_of(out.kind);
        model->dim = out.meta.at("dim").get<int>();
        model->n_entities = out.meta.at("n_entities").get<int>();
        model->n_relations = out.meta.at("n_relations").get<int>();
        model->params = std::move(params);
        out.baseline = std::move(model);
        return out;
    }

    const auto dir = std::filesystem::path(checkpoint_path).parent_path();
    const std::string vocab = (dir / out.meta.at("vocab_file").get<std::string>()).string();
    const std::string merges = (dir / out.meta.at("merges_file").get<std::string>()).string();
    Tokenizer tok = Tokenizer::load(vocab, merges);

    EncoderConfig cfg;
    cfg.n_layers = out.meta.at("layers").get<int>();
    cfg.hidden = out.meta.at("dim").get<int>();
    cfg.n_heads = out.meta.at("heads").get<int>();
    cfg.ffn_dim = out.meta.at("ffn_dim").get<int>();
    cfg.max_positions = out.meta.at("max_positions").get<int>();
    cfg.vocab_size = out.meta.at("vocab_size").get<int>();
    cfg.dropout = out.meta.at("dropout").get<double>();

    auto model = std::make_unique<KeplerModel>(variant_of(out.kind), cfg, std::move(tok),
                                               out.meta.at("max_desc_len").get<int>());
    model->n_relations = out.meta.at("n_relations").get<int>();
    model->n_relations2 = out.meta.value("n_relations2", 0);
    model->params = std::move(params);
    out.kepler = std::move(model);
    return out;
}

} // namespace kepler
