#pragma once
// Joint multi-task training: one step samples a KE batch and an MLM batch
// independently, sums the active losses, and applies one optimizer update to
// the shared parameters. Data sources carry read counters so the ablation
// objectives are checkable: mlm_only reads zero triplets, ke_only reads zero
// corpus bytes.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "kepler/dataset.hpp"
#include "kepler/ke.hpp"

namespace kepler {

struct TrainAbort : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Objective { Joint, KeOnly, MlmOnly };

std::string to_string(Objective o);
Objective objective_from_string(const std::string& s);
Objective default_objective(ModelKind kind);

struct TrainConfig {
    ModelKind model = ModelKind::TransE;
    Objective objective = Objective::KeOnly;
    double gamma = 9.0;
    double gamma2 = 1.0; // second KG margin
    int n_neg = 1;
    int batch_ke = 16;
    int batch_mlm = 8;
    int epochs = 1;
    std::int64_t max_steps = 0; // optional cap on optimizer steps, 0 = no cap
    std::uint64_t seed = 42;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double adam_eps = 1e-6;
    double warmup_frac = 0.05;
    int grad_accum = 1;
    int dim = 32;
    int layers = 2;
    int heads = 2;
    int ffn = 0; // 0 = 4 * dim
    int max_len = 64;
    int bpe_vocab = 350;
    double dropout = 0.0;
    std::int64_t checkpoint_interval = 0; // optimizer steps; 0 = final only
    std::string out_dir;
};

struct StepLoss {
    std::int64_t step = 0;
    double total = 0.0;
    double ke = 0.0;
    double mlm = 0.0;
    double ke2 = 0.0; // second KG
};

struct TrainReport {
    std::vector<StepLoss> steps;
    double wall_seconds = 0.0;
    std::string checkpoint_path;
    std::int64_t total_steps = 0;
    std::uint64_t ke_triplets_read = 0;
    std::uint64_t ke2_triplets_read = 0;
    std::uint64_t mlm_bytes_read = 0;
    std::uint64_t false_negatives_accepted = 0;
};

// "step<TAB>loss_total<TAB>loss_ke<TAB>loss_mlm" (+ loss_ke2 column when a
// second KG is active).
void write_train_log(const TrainReport& report, std::ostream& out, bool second_kg = false);

// Epoch-shuffled batches over the training triplets; counts every triplet
// handed out.
class TripletSource {
public:
    TripletSource(const KnowledgeGraph& train, int batch_size, Rng rng);
    std::vector<Triplet> next_batch();
    std::int64_t steps_per_epoch() const;
    std::uint64_t triplets_read() const { return read_; }

private:
    const KnowledgeGraph& train_;
    int batch_size_;
    Rng rng_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
    std::uint64_t read_ = 0;
};

// Cycling line source over an MLM text corpus; counts every byte handed out,
// including the pass used for tokenizer training.
class CorpusSource {
public:
    static CorpusSource from_stream(std::istream& in);
    static CorpusSource from_file(const std::string& path);
    explicit CorpusSource(std::vector<std::string> lines);

    // all lines joined by newlines; counted as read
    std::string text_for_tokenizer();
    std::vector<std::string> next_lines(int n);
    std::int64_t n_lines() const { return static_cast<std::int64_t>(lines_.size()); }
    std::uint64_t bytes_read() const { return bytes_read_; }

private:
    std::vector<std::string> lines_;
    std::size_t cursor_ = 0;
    std::uint64_t bytes_read_ = 0;
};

struct KeplerTrainData {
    const DataSplit* split = nullptr;
    const EntityCatalog* catalog = nullptr;
    const RelationCatalog* rel_catalog = nullptr; // needed by Rel / Cond variants
    CorpusSource* corpus = nullptr;               // needed unless ke_only
    // optional second KG (adds its own loss term and relation table)
    const DataSplit* split2 = nullptr;
    const EntityCatalog* catalog2 = nullptr;
};

// Description-encoder training (all encoder model kinds, all objectives).
// The trained model is moved into *out_model when non-null.
TrainReport train_kepler(const TrainConfig& cfg, const KeplerTrainData& data,
                         KeplerModel* out_model);

// Table-baseline training: same loss shell, no text encoder.
TrainReport train_baseline(const TrainConfig& cfg, const DataSplit& split,
                           BaselineModel* out_model);

// Checkpoint + sidecar tokenizer files under cfg.out_dir.
nlohmann::json checkpoint_meta(const TrainConfig& cfg, const KeplerModel& model,
                               std::int64_t steps);
nlohmann::json checkpoint_meta(const TrainConfig& cfg, const BaselineModel& model,
                               std::int64_t steps);

struct LoadedModel {
    nlohmann::json meta;
    ModelKind kind = ModelKind::TransE;
    // exactly one of the two is populated
    std::unique_ptr<KeplerModel> kepler;
    std::unique_ptr<BaselineModel> baseline;
};

// Rebuilds a scorer-ready model from a checkpoint file; encoder models load
// the tokenizer from the vocab/merges files referenced by the meta block
// (resolved relative to the checkpoint's directory).
LoadedModel load_model(const std::string& checkpoint_path);

} // namespace kepler
