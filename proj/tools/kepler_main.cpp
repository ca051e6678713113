// Single command-line entry point: split building, training, evaluation, the
// baseline benchmark, gradient checks, and split stats. Exit codes: 0 ok,
// 1 usage error, 2 runtime error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "kepler/checkpoint.hpp"
#include "kepler/dataset.hpp"
#include "kepler/evaluator.hpp"
#include "kepler/gradcheck.hpp"
#include "kepler/kernels.hpp"
#include "kepler/trainer.hpp"

namespace {

using namespace kepler;

struct CommonArgs {
    std::uint64_t seed = 42;
    int threads = 1;
};

SplitSetting setting_from_string(const std::string& s) {
    if (s == "transductive") return SplitSetting::Transductive;
    if (s == "inductive") return SplitSetting::Inductive;
    throw CLI::ValidationError("--setting", "must be 'transductive' or 'inductive'");
}

std::ifstream open_or_throw(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return in;
}

int cmd_build_splits(const std::string& triplets, const std::string& descriptions,
                     const std::string& setting, std::int64_t valid_size, std::int64_t test_size,
                     int min_words, std::uint64_t seed, const std::string& out) {
    auto tin = open_or_throw(triplets);
    auto din = open_or_throw(descriptions);
    IngestResult ingested = ingest_corpus(tin, din, min_words);
    std::cerr << "ingested " << ingested.graph.n_triplets() << " triplets over "
              << ingested.graph.entities().size() << " entities ("
              << ingested.catalog.triplets_dropped << " triplets dropped, "
              << ingested.catalog.duplicate_triplets << " duplicates)\n";

    const SplitSetting s = setting_from_string(setting);
    const DataSplit split = s == SplitSetting::Transductive
                                ? split_transductive(ingested.graph, valid_size, test_size, seed)
                                : split_inductive(ingested.graph, valid_size, test_size, seed);
    write_split(split, out);
    std::cout << stats_to_tsv(split_stats(split));
    return 0;
}

EntityCatalog catalog_for_split(const DataSplit& split, const std::string& descriptions) {
    auto din = open_or_throw(descriptions);
    return load_entity_descriptions(din, split.train.entities());
}

int cmd_train(TrainConfig cfg, const std::string& split_dir, const std::string& setting,
              const std::string& descriptions, const std::string& rel_descriptions,
              const std::string& corpus_path, const std::string& second_kg,
              const std::string& second_descriptions) {
    const DataSplit split = read_split(split_dir, setting_from_string(setting));

    TrainReport report;
    bool second = false;
    if (is_baseline(cfg.model)) {
        report = train_baseline(cfg, split, nullptr);
    } else {
        EntityCatalog catalog;
        RelationCatalog rel_catalog;
        KeplerTrainData data;
        data.split = &split;
        if (cfg.objective != Objective::MlmOnly) {
            if (descriptions.empty())
                throw std::runtime_error("encoder models need --descriptions");
            catalog = catalog_for_split(split, descriptions);
        } else {
            catalog.descriptions.resize(static_cast<std::size_t>(split.train.entities().size()));
        }
        data.catalog = &catalog;
        if (!rel_descriptions.empty()) {
            auto rin = open_or_throw(rel_descriptions);
            rel_catalog = load_relation_descriptions(rin, split.train.relations());
            data.rel_catalog = &rel_catalog;
        }
        CorpusSource corpus({});
        if (!corpus_path.empty() && cfg.objective != Objective::KeOnly) {
            corpus = CorpusSource::from_file(corpus_path);
            data.corpus = &corpus;
        }
        DataSplit split2;
        EntityCatalog catalog2;
        if (!second_kg.empty()) {
            if (second_descriptions.empty())
                throw std::runtime_error("--second-kg needs --second-descriptions");
            auto tin = open_or_throw(second_kg);
            split2.setting = SplitSetting::Transductive;
            split2.train = KnowledgeGraph::from_parsed(parse_triplets(tin));
            auto din = open_or_throw(second_descriptions);
            catalog2 = load_entity_descriptions(din, split2.train.entities());
            data.split2 = &split2;
            data.catalog2 = &catalog2;
            second = true;
        }
        report = train_kepler(cfg, data, nullptr);
    }

    if (!cfg.out_dir.empty()) {
        std::ofstream log(cfg.out_dir + "/train_log.tsv", std::ios::trunc);
        write_train_log(report, log, second);
    }
    std::cout << "steps\t" << report.total_steps << "\n";
    if (!report.steps.empty()) {
        std::cout << "loss_first\t" << report.steps.front().total << "\n";
        std::cout << "loss_last\t" << report.steps.back().total << "\n";
    }
    std::cout << "checkpoint\t" << report.checkpoint_path << "\n";
    std::cout << "wall_seconds\t" << report.wall_seconds << "\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& split_dir,
             const std::string& setting, const std::string& subset,
             const std::string& descriptions, const std::string& rel_descriptions, bool raw,
             int threads) {
    const DataSplit split = read_split(split_dir, setting_from_string(setting));
    LoadedModel model = load_model(checkpoint);

    EvalOptions opts;
    opts.filtered = !raw;
    opts.threads = threads;
    const EvalSubset sub = subset == "valid" ? EvalSubset::Valid : EvalSubset::Test;

    MetricsReport report;
    if (model.baseline) {
        if (model.baseline->n_entities != split.train.entities().size() ||
            model.baseline->n_relations != split.train.relations().size())
            throw std::runtime_error(
                "checkpoint tables do not match the split's entity/relation counts");
        BaselineScorer scorer(*model.baseline);
        report = evaluate_link_prediction(scorer, split, sub, opts);
    } else {
        if (descriptions.empty()) throw std::runtime_error("encoder models need --descriptions");
        EntityCatalog catalog = catalog_for_split(split, descriptions);
        RelationCatalog rel_catalog;
        const RelationCatalog* rel_ptr = nullptr;
        if (!rel_descriptions.empty()) {
            auto rin = open_or_throw(rel_descriptions);
            rel_catalog = load_relation_descriptions(rin, split.train.relations());
            rel_ptr = &rel_catalog;
        }
        KeplerScorer scorer(*model.kepler, catalog, rel_ptr);
        report = evaluate_link_prediction(scorer, split, sub, opts);
    }
    std::cout << report.to_tsv();
    std::cout << report.summary_line() << "\n";
    return 0;
}

int cmd_bench(TrainConfig base, const std::string& split_dir, const std::string& subset) {
    const DataSplit split = read_split(split_dir, SplitSetting::Transductive);
    const EvalSubset sub = subset == "valid" ? EvalSubset::Valid : EvalSubset::Test;
    std::cout << "model\tMR\tMRR\tHITS@1\tHITS@3\tHITS@10\n";
    for (ModelKind kind : {ModelKind::TransE, ModelKind::DistMult, ModelKind::ComplEx,
                           ModelKind::SimplE, ModelKind::RotatE}) {
        TrainConfig cfg = base;
        cfg.model = kind;
        cfg.objective = Objective::KeOnly;
        BaselineModel model;
        train_baseline(cfg, split, &model);
        BaselineScorer scorer(model);
        const MetricsReport r = evaluate_link_prediction(scorer, split, sub);
        std::cout << to_string(kind) << '\t' << r.summary_line() << "\n";
    }
    return 0;
}

int cmd_stats(const std::string& split_dir, const std::string& setting) {
    const DataSplit split = read_split(split_dir, setting_from_string(setting));
    std::cout << stats_to_tsv(split_stats(split));
    return 0;
}

// Small deterministic fixtures for the gradient check.
int cmd_gradcheck(const std::string& model_name, int dim, int layers, int heads, double gamma,
                  int n_neg, std::uint64_t seed) {
    const ModelKind kind = model_kind_from_string(model_name);
    Rng rng(seed);

    // toy graph: a ring with chords over 10 entities, 3 relations
    IdCatalog ents, rels;
    for (int i = 0; i < 10; ++i) ents.get_or_add("e" + std::to_string(i));
    for (int i = 0; i < 3; ++i) rels.get_or_add("r" + std::to_string(i));
    std::vector<Triplet> triplets;
    for (int i = 0; i < 10; ++i) {
        triplets.push_back({i, i % 3, (i + 1) % 10});
        triplets.push_back({i, (i + 1) % 3, (i + 4) % 10});
    }
    KnowledgeGraph kg(ents, rels, triplets);

    GradCheckReport report;
    if (is_baseline(kind)) {
        BaselineModel model = BaselineModel::init(baseline_of(kind), 10, 3, dim, rng);
        std::vector<Triplet> batch(triplets.begin(), triplets.begin() + 4);
        std::vector<Triplet> all = batch;
        Rng neg_rng = rng.fork(1);
        for (const Triplet& t : batch) {
            NegativeBatch nb = sample_negatives(kg, t, n_neg, neg_rng);
            all.insert(all.end(), nb.negatives.begin(), nb.negatives.end());
        }
        auto loss = [&]() {
            Tape tape(&model.params);
            const Tape::Id d = baseline_distance_node(tape, model, all);
            const Tape::Id l =
                ke_loss_node(tape, tape.slice_rows(d, 0, 4), tape.slice_rows(d, 4, 4 * n_neg),
                             gamma);
            return tape.value(l).item();
        };
        auto grads = [&]() {
            Tape tape(&model.params);
            const Tape::Id d = baseline_distance_node(tape, model, all);
            tape.backward(ke_loss_node(tape, tape.slice_rows(d, 0, 4),
                                       tape.slice_rows(d, 4, 4 * n_neg), gamma));
        };
        report = finite_diff_check(model.params, loss, grads, 1e-4, 6, seed);
    } else {
        EntityCatalog catalog;
        for (int i = 0; i < 10; ++i)
            catalog.descriptions.push_back("entity number " + std::to_string(i) +
                                           " with a few description words");
        RelationCatalog rel_catalog;
        for (int i = 0; i < 3; ++i)
            rel_catalog.descriptions.emplace_back("relation kind " + std::to_string(i) +
                                                  " connecting entities");
        std::string corpus_text;
        for (const auto& d : catalog.descriptions) corpus_text += d + "\n";
        std::istringstream corpus(corpus_text);
        Tokenizer tok = Tokenizer::train_bpe(corpus, 280);

        EncoderConfig cfg;
        cfg.n_layers = layers;
        cfg.hidden = dim;
        cfg.n_heads = heads;
        cfg.ffn_dim = 2 * dim;
        cfg.max_positions = 32;
        cfg.vocab_size = tok.vocab_size();
        KeplerModel model =
            KeplerModel::init(variant_of(kind), cfg, std::move(tok), 3, 32, seed);

        if (kind == ModelKind::MlmOnly) {
            std::vector<std::vector<int>> seqs;
            for (int i = 0; i < 4; ++i)
                seqs.push_back(model.tokenizer.encode(catalog.descriptions[i], 32));
            const TokenBatch clean = TokenBatch::from_sequences(seqs);
            Rng mask_rng(seed + 1);
            const MlmBatch masked = apply_mlm_masking(clean, model.tokenizer, mask_rng);
            auto loss = [&]() {
                Tape tape(&model.params);
                return tape.value(mlm_loss(tape, model.encoder, masked)).item();
            };
            auto grads = [&]() {
                Tape tape(&model.params);
                tape.backward(mlm_loss(tape, model.encoder, masked));
            };
            report = finite_diff_check(model.params, loss, grads, 1e-4, 4, seed);
        } else {
            std::vector<Triplet> batch(triplets.begin(), triplets.begin() + 2);
            std::vector<Triplet> all = batch;
            Rng neg_rng(seed + 1);
            for (const Triplet& t : batch) {
                NegativeBatch nb = sample_negatives(kg, t, n_neg, neg_rng);
                all.insert(all.end(), nb.negatives.begin(), nb.negatives.end());
            }
            auto loss = [&]() {
                Tape tape(&model.params);
                const Tape::Id d = kepler_distance_node(tape, model, catalog, &rel_catalog, all);
                const Tape::Id l = ke_loss_node(tape, tape.slice_rows(d, 0, 2),
                                                tape.slice_rows(d, 2, 2 * n_neg), gamma);
                return tape.value(l).item();
            };
            auto grads = [&]() {
                Tape tape(&model.params);
                const Tape::Id d = kepler_distance_node(tape, model, catalog, &rel_catalog, all);
                tape.backward(ke_loss_node(tape, tape.slice_rows(d, 0, 2),
                                           tape.slice_rows(d, 2, 2 * n_neg), gamma));
            };
            report = finite_diff_check(model.params, loss, grads, 1e-4, 4, seed);
        }
    }

    std::printf("max_rel_err\t%.6e\n", report.max_rel_err);
    std::printf("checked\t%d\n", report.checked);
    if (!report.worst_param.empty())
        std::printf("worst\t%s[%lld]\n", report.worst_param.c_str(),
                    static_cast<long long>(report.worst_index));
    const bool ok = report.passed(1e-4);
    std::printf("%s\n", ok ? "PASS" : "FAIL");
    return ok ? 0 : 2;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"knowledge-embedding + language-model pre-training toolkit"};
    app.require_subcommand(1);

    CommonArgs common;

    // --- build-splits ---
    auto* build = app.add_subcommand("build-splits", "ingest dumps and construct a data split");
    std::string b_triplets, b_descriptions, b_setting = "transductive", b_out;
    std::int64_t b_valid = 0, b_test = 0;
    int b_min_words = 5;
    build->add_option("--triplets", b_triplets, "triplet dump (head<TAB>rel<TAB>tail)")
        ->required();
    build->add_option("--descriptions", b_descriptions, "entity description file")->required();
    build->add_option("--setting", b_setting, "transductive|inductive")
        ->check(CLI::IsMember({"transductive", "inductive"}));
    build->add_option("--valid-size", b_valid, "validation triplet budget");
    build->add_option("--test-size", b_test, "test triplet budget");
    build->add_option("--min-words", b_min_words, "description word-count filter");
    build->add_option("--seed", common.seed, "rng seed");
    build->add_option("--out", b_out, "output split directory")->required();

    // --- train ---
    auto* train = app.add_subcommand("train", "train a model on a split");
    train->set_config("--config", "", "key = value config file; flags override");
    TrainConfig cfg;
    std::string t_split, t_setting = "transductive", t_model = "transe", t_objective;
    std::string t_descriptions, t_rel_descriptions, t_corpus, t_second_kg, t_second_desc;
    train->add_option("--split", t_split, "split directory from build-splits")->required();
    train->add_option("--setting", t_setting, "transductive|inductive")
        ->check(CLI::IsMember({"transductive", "inductive"}));
    train->add_option("--model", t_model,
                      "kepler-wiki|kepler-rel|kepler-cond|kepler-ke|mlm-only|transe|distmult|"
                      "complex|rotate|simple");
    train->add_option("--objective", t_objective, "joint|ke_only|mlm_only (default per model)");
    train->add_option("--descriptions", t_descriptions, "entity description file");
    train->add_option("--rel-descriptions", t_rel_descriptions, "relation description file");
    train->add_option("--corpus", t_corpus, "MLM text corpus, one passage per line");
    train->add_option("--second-kg", t_second_kg, "second KG triplet file (extra loss term)");
    train->add_option("--second-descriptions", t_second_desc, "descriptions for the second KG");
    train->add_option("--gamma", cfg.gamma, "margin for the KE loss");
    train->add_option("--gamma2", cfg.gamma2, "margin for the second KG");
    train->add_option("--neg", cfg.n_neg, "negative samples per positive");
    train->add_option("--dim", cfg.dim, "embedding / hidden dimension");
    train->add_option("--layers", cfg.layers, "encoder layers");
    train->add_option("--heads", cfg.heads, "attention heads");
    train->add_option("--max-len", cfg.max_len, "description truncation length");
    train->add_option("--epochs", cfg.epochs, "epochs over the KE stream");
    train->add_option("--max-steps", cfg.max_steps, "hard cap on optimizer steps (0 = none)");
    train->add_option("--lr", cfg.lr, "learning rate");
    train->add_option("--batch-ke", cfg.batch_ke, "KE triplets per step");
    train->add_option("--batch-mlm", cfg.batch_mlm, "MLM rows per step");
    train->add_option("--bpe-vocab", cfg.bpe_vocab, "tokenizer vocab budget");
    train->add_option("--dropout", cfg.dropout, "dropout rate");
    train->add_option("--grad-accum", cfg.grad_accum, "gradient accumulation micro-steps");
    train->add_option("--checkpoint-interval", cfg.checkpoint_interval,
                      "steps between checkpoints (0 = final only)");
    train->add_option("--seed", common.seed, "rng seed");
    train->add_option("--out", cfg.out_dir, "output directory")->required();

    // --- eval ---
    auto* eval = app.add_subcommand("eval", "link-prediction evaluation of a checkpoint");
    std::string e_checkpoint, e_split, e_setting = "transductive", e_subset = "test";
    std::string e_descriptions, e_rel_descriptions;
    bool e_raw = false;
    eval->add_option("--checkpoint", e_checkpoint, "model.kepf path")->required();
    eval->add_option("--split", e_split, "split directory")->required();
    eval->add_option("--setting", e_setting, "transductive|inductive")
        ->check(CLI::IsMember({"transductive", "inductive"}));
    eval->add_option("--subset", e_subset, "valid|test")
        ->check(CLI::IsMember({"valid", "test"}));
    eval->add_option("--descriptions", e_descriptions, "entity description file");
    eval->add_option("--rel-descriptions", e_rel_descriptions, "relation description file");
    eval->add_flag("--raw-metrics", e_raw, "skip known-true filtering");
    eval->add_option("--threads", common.threads, "evaluation worker threads");
    eval->add_option("--seed", common.seed, "rng seed");

    // --- bench ---
    auto* bench = app.add_subcommand("bench", "train + evaluate all five table baselines");
    std::string n_split, n_subset = "test";
    bench->add_option("--split", n_split, "transductive split directory")->required();
    bench->add_option("--subset", n_subset, "valid|test")
        ->check(CLI::IsMember({"valid", "test"}));
    bench->add_option("--dim", cfg.dim, "embedding dimension");
    bench->add_option("--gamma", cfg.gamma, "margin");
    bench->add_option("--neg", cfg.n_neg, "negatives per positive");
    bench->add_option("--epochs", cfg.epochs, "training epochs");
    bench->add_option("--max-steps", cfg.max_steps, "step cap per model (0 = none)");
    bench->add_option("--lr", cfg.lr, "learning rate");
    bench->add_option("--batch-ke", cfg.batch_ke, "triplets per step");
    bench->add_option("--seed", common.seed, "rng seed");
    bench->add_option("--threads", common.threads, "evaluation worker threads");

    // --- gradcheck ---
    auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    std::string g_model = "transe";
    int g_dim = 8, g_layers = 2, g_heads = 2, g_neg = 2;
    double g_gamma = 4.0;
    grad->add_option("--model", g_model, "model kind");
    grad->add_option("--dim", g_dim, "dimension");
    grad->add_option("--layers", g_layers, "encoder layers");
    grad->add_option("--heads", g_heads, "attention heads");
    grad->add_option("--neg", g_neg, "negatives per positive");
    grad->add_option("--gamma", g_gamma, "margin");
    grad->add_option("--seed", common.seed, "rng seed");

    // --- stats ---
    auto* stats = app.add_subcommand("stats", "split statistics");
    std::string s_split, s_setting = "transductive";
    stats->add_option("--split", s_split, "split directory")->required();
    stats->add_option("--setting", s_setting, "transductive|inductive")
        ->check(CLI::IsMember({"transductive", "inductive"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        kernels::set_threads(common.threads);
        cfg.seed = common.seed;
        if (build->parsed())
            return cmd_build_splits(b_triplets, b_descriptions, b_setting, b_valid, b_test,
                                    b_min_words, common.seed, b_out);
        if (train->parsed()) {
            cfg.model = model_kind_from_string(t_model);
            cfg.objective = t_objective.empty() ? default_objective(cfg.model)
                                                : objective_from_string(t_objective);
            return cmd_train(cfg, t_split, t_setting, t_descriptions, t_rel_descriptions,
                             t_corpus, t_second_kg, t_second_desc);
        }
        if (eval->parsed())
            return cmd_eval(e_checkpoint, e_split, e_setting, e_subset, e_descriptions,
                            e_rel_descriptions, e_raw, common.threads);
        if (bench->parsed()) return cmd_bench(cfg, n_split, n_subset);
        if (grad->parsed())
            return cmd_gradcheck(g_model, g_dim, g_layers, g_heads, g_gamma, g_neg, common.seed);
        if (stats->parsed()) return cmd_stats(s_split, s_setting);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
