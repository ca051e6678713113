#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "helpers.hpp"
#include "kepler/checkpoint.hpp"
#include "kepler/trainer.hpp"

using namespace kepler;

namespace {

constexpr const char* kDescWords = " described with plenty of words for the filter";

// small synthetic world: cycle KG + descriptions + corpus
struct World {
    DataSplit split;
    EntityCatalog catalog;
    CorpusSource corpus{std::vector<std::string>{}};

    explicit World(int n = 20) {
        IdCatalog ents, rels;
        for (int i = 0; i < n; ++i) ents.get_or_add("e" + std::to_string(i));
        rels.get_or_add("next");
        rels.get_or_add("skip");
        std::vector<Triplet> ts;
        for (int i = 0; i < n; ++i) {
            ts.push_back({i, 0, (i + 1) % n});
            ts.push_back({i, 1, (i + 2) % n});
        }
        split.setting = SplitSetting::Transductive;
        split.train = KnowledgeGraph(ents, rels, ts);
        for (int i = 0; i < n; ++i)
            catalog.descriptions.push_back("entity number " + std::to_string(i) + kDescWords);
        std::vector<std::string> lines;
        for (int i = 0; i < 12; ++i)
            lines.push_back("corpus line " + std::to_string(i) + " with text to model");
        corpus = CorpusSource(std::move(lines));
    }

    TrainConfig config(ModelKind kind) const {
        TrainConfig cfg;
        cfg.model = kind;
        cfg.objective = default_objective(kind);
        cfg.dim = 12;
        cfg.layers = 1;
        cfg.heads = 2;
        cfg.max_len = 24;
        cfg.batch_ke = 4;
        cfg.batch_mlm = 3;
        cfg.n_neg = 2;
        cfg.gamma = 4.0;
        cfg.epochs = 1;
        cfg.seed = 11;
        cfg.bpe_vocab = 280;
        return cfg;
    }
};

} // namespace

TEST_CASE("joint loss is exactly the sum of its parts at every step") {
    World w;
    TrainConfig cfg = w.config(ModelKind::KeplerWiki);
    cfg.max_steps = 6;
    KeplerTrainData data{&w.split, &w.catalog, nullptr, &w.corpus, nullptr, nullptr};
    const TrainReport r = train_kepler(cfg, data, nullptr);
    REQUIRE(r.steps.size() == 6);
    for (const StepLoss& s : r.steps) {
        CHECK(s.total == s.ke + s.mlm); // 64-bit exact
        CHECK(s.ke > 0.0);
        CHECK(s.mlm > 0.0);
    }
}

TEST_CASE("ke_only matches the joint run's first KE loss under one seed") {
    World w;
    TrainConfig joint = w.config(ModelKind::KeplerWiki);
    joint.max_steps = 1;
    KeplerTrainData jdata{&w.split, &w.catalog, nullptr, &w.corpus, nullptr, nullptr};
    const TrainReport jr = train_kepler(joint, jdata, nullptr);

    World w2; // fresh corpus cursor
    TrainConfig ke = w2.config(ModelKind::KeplerKE);
    ke.max_steps = 1;
    // keep the tokenizer corpus identical so initialization matches: the
    // ke_only tokenizer sees only descriptions, so compare against a joint
    // run whose corpus is exactly the descriptions
    std::vector<std::string> desc_lines = w2.catalog.descriptions;
    CorpusSource desc_corpus(desc_lines);
    KeplerTrainData jdata2{&w2.split, &w2.catalog, nullptr, &desc_corpus, nullptr, nullptr};
    TrainConfig joint2 = w2.config(ModelKind::KeplerWiki);
    joint2.max_steps = 1;
    const TrainReport jr2 = train_kepler(joint2, jdata2, nullptr);

    KeplerTrainData kdata{&w2.split, &w2.catalog, nullptr, nullptr, nullptr, nullptr};
    const TrainReport kr = train_kepler(ke, kdata, nullptr);
    CHECK(kr.steps.at(0).ke == jr2.steps.at(0).ke);
    CHECK(jr.steps.at(0).ke > 0.0);
}

TEST_CASE("ablation objectives never touch the other data source") {
    World w;

    TrainConfig mlm = w.config(ModelKind::MlmOnly);
    mlm.max_steps = 4;
    KeplerTrainData mdata{&w.split, &w.catalog, nullptr, &w.corpus, nullptr, nullptr};
    const TrainReport mr = train_kepler(mlm, mdata, nullptr);
    CHECK(mr.ke_triplets_read == 0);
    CHECK(mr.mlm_bytes_read > 0);
    for (const StepLoss& s : mr.steps) CHECK(s.total == s.mlm);

    World w2;
    TrainConfig ke = w2.config(ModelKind::KeplerKE);
    ke.max_steps = 4;
    KeplerTrainData kdata{&w2.split, &w2.catalog, nullptr, &w2.corpus, nullptr, nullptr};
    const TrainReport kr = train_kepler(ke, kdata, nullptr);
    CHECK(kr.mlm_bytes_read == 0);
    CHECK(kr.ke_triplets_read == 4 * 4);
    for (const StepLoss& s : kr.steps) CHECK(s.total == s.ke);
}

TEST_CASE("both objectives reach shared encoder parameters in a joint step") {
    World w;
    TrainConfig cfg = w.config(ModelKind::KeplerWiki);
    KeplerTrainData data{&w.split, &w.catalog, nullptr, &w.corpus, nullptr, nullptr};
    KeplerModel model;
    cfg.max_steps = 1;
    train_kepler(cfg, data, &model);

    // rebuild each loss separately on the trained model and inspect grads
    const std::vector<Triplet> batch{{0, 0, 1}, {2, 1, 4}, {0, 0, 5}, {2, 1, 7}};
    model.params.zero_grads();
    {
        Tape tape(&model.params);
        const auto d = kepler_distance_node(tape, model, w.catalog, nullptr, batch);
        tape.backward(ke_loss_node(tape, tape.slice_rows(d, 0, 2), tape.slice_rows(d, 2, 2),
                                   cfg.gamma));
    }
    double ke_grad = 0;
    for (std::int64_t i = 0; i < model.params.at("enc.tok_emb").grad.size(); ++i)
        ke_grad += std::fabs(model.params.at("enc.tok_emb").grad[i]);
    CHECK(ke_grad > 0.0);

    model.params.zero_grads();
    {
        Rng rng(3);
        const TokenBatch clean = TokenBatch::from_sequences(
            {model.tokenizer.encode("corpus line 1 with text to model", cfg.max_len)});
        const MlmBatch masked = apply_mlm_masking(clean, model.tokenizer, rng);
        Tape tape(&model.params);
        tape.backward(mlm_loss(tape, model.encoder, masked));
    }
    double mlm_grad = 0;
    for (std::int64_t i = 0; i < model.params.at("enc.tok_emb").grad.size(); ++i)
        mlm_grad += std::fabs(model.params.at("enc.tok_emb").grad[i]);
    CHECK(mlm_grad > 0.0);
}

TEST_CASE("a second KG adds its own exactly-summed loss term") {
    World w;
    World w2(14);
    TrainConfig cfg = w.config(ModelKind::KeplerWiki);
    cfg.max_steps = 3;
    cfg.gamma2 = 1.0;
    KeplerTrainData data{&w.split, &w.catalog, nullptr, &w.corpus, &w2.split, &w2.catalog};
    const TrainReport r = train_kepler(cfg, data, nullptr);
    REQUIRE(r.steps.size() == 3);
    for (const StepLoss& s : r.steps) {
        CHECK(s.ke2 > 0.0);
        CHECK(s.total == s.ke + s.ke2 + s.mlm);
    }
    CHECK(r.ke2_triplets_read > 0);
}

TEST_CASE("ke loss descends on a learnable toy graph") {
    World w(50);
    TrainConfig cfg = w.config(ModelKind::KeplerWiki);
    cfg.epochs = 8;
    cfg.max_steps = 200;
    cfg.lr = 1e-3;
    KeplerTrainData data{&w.split, &w.catalog, nullptr, &w.corpus, nullptr, nullptr};
    const TrainReport r = train_kepler(cfg, data, nullptr);
    REQUIRE(r.steps.size() == 200);
    auto mean_ke = [&](std::size_t from, std::size_t to) {
        double sum = 0;
        for (std::size_t i = from; i < to; ++i) sum += r.steps[i].ke;
        return sum / static_cast<double>(to - from);
    };
    CHECK(mean_ke(180, 200) < mean_ke(0, 20));
}

TEST_CASE("baseline training: zero epochs returns the initialization") {
    World w;
    TrainConfig cfg = w.config(ModelKind::TransE);
    cfg.epochs = 0;
    BaselineModel trained;
    const TrainReport r = train_baseline(cfg, w.split, &trained);
    CHECK(r.total_steps == 0);

    Rng master(cfg.seed);
    Rng init_rng = master.fork(0);
    const BaselineModel fresh = BaselineModel::init(
        BaselineKind::TransE, w.split.train.entities().size(),
        w.split.train.relations().size(), cfg.dim, init_rng);
    CHECK(trained.params.at("entity").value == fresh.params.at("entity").value);
    CHECK(trained.params.at("relation").value == fresh.params.at("relation").value);
}

TEST_CASE("same seed gives byte-identical checkpoints") {
    namespace fs = std::filesystem;
    World w;
    TrainConfig cfg = w.config(ModelKind::DistMult);
    cfg.max_steps = 10;
    auto run = [&](const char* dir) {
        TrainConfig c = cfg;
        c.out_dir = (fs::temp_directory_path() / dir).string();
        train_baseline(c, w.split, nullptr);
        std::ifstream in(c.out_dir + "/model.kepf", std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), {});
    };
    const std::string a = run("bl_a"), b = run("bl_b");
    CHECK(!a.empty());
    CHECK(a == b);
}

TEST_CASE("training aborts on a non-finite loss keeping the last checkpoint") {
    World w;
    TrainConfig cfg = w.config(ModelKind::TransE);
    cfg.lr = std::numeric_limits<double>::infinity(); // params blow up immediately
    cfg.epochs = 50;
    cfg.checkpoint_interval = 1;
    cfg.out_dir = (std::filesystem::temp_directory_path() / "bl_abort").string();
    CHECK_THROWS_AS(train_baseline(cfg, w.split, nullptr), TrainAbort);
    CHECK(std::filesystem::exists(cfg.out_dir + "/model.kepf"));
}

TEST_CASE("train log format has one row per step") {
    TrainReport r;
    r.steps.push_back({1, 3.5, 2.0, 1.5, 0.0});
    r.steps.push_back({2, 3.0, 1.75, 1.25, 0.0});
    std::ostringstream out;
    write_train_log(r, out);
    std::istringstream in(out.str());
    std::string line;
    int rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        CHECK(std::count(line.begin(), line.end(), '\t') == 3);
    }
    CHECK(rows == 2);
}

TEST_CASE("checkpoints reload into a usable model") {
    namespace fs = std::filesystem;
    World w;
    TrainConfig cfg = w.config(ModelKind::KeplerWiki);
    cfg.max_steps = 2;
    cfg.out_dir = (fs::temp_directory_path() / "kep_ckpt").string();
    KeplerTrainData data{&w.split, &w.catalog, nullptr, &w.corpus, nullptr, nullptr};
    KeplerModel trained;
    const TrainReport r = train_kepler(cfg, data, &trained);

    LoadedModel loaded = load_model(r.checkpoint_path);
    REQUIRE(loaded.kepler != nullptr);
    CHECK(loaded.kind == ModelKind::KeplerWiki);
    CHECK(loaded.kepler->params.count() == trained.params.count());
    const Tensor a = entity_embedding(*loaded.kepler, w.catalog, nullptr, 0);
    const Tensor b = entity_embedding(trained, w.catalog, nullptr, 0);
    CHECK(a == b);
}
