#include "kepler/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace kepler {

namespace {
constexpr double kMaskedScore = -1e30;

std::string layer_prefix(int l) { return "enc.l" + std::to_string(l) + "."; }
} // namespace

void EncoderConfig::validate() const {
    if (n_layers < 1) throw std::invalid_argument("EncoderConfig: n_layers must be >= 1");
    if (hidden < 1 || n_heads < 1 || hidden % n_heads != 0)
        throw std::invalid_argument("EncoderConfig: hidden must be divisible by n_heads");
    if (ffn_dim < 1) throw std::invalid_argument("EncoderConfig: ffn_dim must be >= 1");
    if (max_positions < 2) throw std::invalid_argument("EncoderConfig: max_positions must be >= 2");
    if (vocab_size < 1) throw std::invalid_argument("EncoderConfig: vocab_size must be set");
    if (dropout < 0.0 || dropout >= 1.0)
        throw std::invalid_argument("EncoderConfig: dropout must be in [0,1)");
}

TokenBatch TokenBatch::from_sequences(const std::vector<std::vector<int>>& seqs) {
    TokenBatch b;
    b.rows = static_cast<int>(seqs.size());
    b.cols = 1;
    for (const auto& s : seqs) b.cols = std::max(b.cols, static_cast<int>(s.size()));
    b.ids.assign(static_cast<std::size_t>(b.rows) * b.cols, Tokenizer::kPad);
    for (int r = 0; r < b.rows; ++r) {
        const auto& s = seqs[static_cast<std::size_t>(r)];
        b.lengths.push_back(static_cast<int>(s.size()));
        for (std::size_t j = 0; j < s.size(); ++j) b.at(r, static_cast<int>(j)) = s[j];
    }
    return b;
}

TextEncoder::TextEncoder(EncoderConfig cfg) : cfg_(cfg) { cfg_.validate(); }

void TextEncoder::init_params(ParameterSet& params, Rng& rng) const {
    const int d = cfg_.hidden;
    auto dense = [&](const std::string& name, int rows, int cols) {
        Tensor t(rows, cols);
        for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, cfg_.init_std);
        params.add(name, std::move(t));
    };
    auto zeros = [&](const std::string& name, int cols) { params.add(name, Tensor(1, cols)); };
    auto ones = [&](const std::string& name, int cols) {
        params.add(name, Tensor(1, cols, 1.0));
    };

    dense("enc.tok_emb", cfg_.vocab_size, d);
    dense("enc.pos_emb", cfg_.max_positions, d);
    for (int l = 0; l < cfg_.n_layers; ++l) {
        const std::string p = layer_prefix(l);
        ones(p + "ln1.g", d);
        zeros(p + "ln1.b", d);
        dense(p + "attn.wq", d, d);
        zeros(p + "attn.bq", d);
        dense(p + "attn.wk", d, d);
        zeros(p + "attn.bk", d);
        dense(p + "attn.wv", d, d);
        zeros(p + "attn.bv", d);
        dense(p + "attn.wo", d, d);
        zeros(p + "attn.bo", d);
        ones(p + "ln2.g", d);
        zeros(p + "ln2.b", d);
        dense(p + "ffn.w1", d, cfg_.ffn_dim);
        zeros(p + "ffn.b1", cfg_.ffn_dim);
        dense(p + "ffn.w2", cfg_.ffn_dim, d);
        zeros(p + "ffn.b2", d);
    }
    ones("enc.final_ln.g", d);
    zeros("enc.final_ln.b", d);
    dense("mlm.w", d, cfg_.vocab_size);
    zeros("mlm.b", cfg_.vocab_size);
}

Tape::Id TextEncoder::encode(Tape& tape, const TokenBatch& batch, bool training,
                             Rng* dropout_rng) const {
    const int B = batch.rows, T = batch.cols, d = cfg_.hidden;
    const int dh = d / cfg_.n_heads;
    if (B < 1 || T < 1) throw std::invalid_argument("encode: empty batch");
    if (T > cfg_.max_positions)
        throw std::invalid_argument("encode: sequence length " + std::to_string(T) +
                                    " exceeds max_positions " +
                                    std::to_string(cfg_.max_positions));
    for (int r = 0; r < B; ++r) {
        if (batch.lengths[static_cast<std::size_t>(r)] < 1 ||
            batch.at(r, 0) != Tokenizer::kBos)
            throw std::invalid_argument("encode: row " + std::to_string(r) +
                                        " does not start with <s>");
        for (int c = 0; c < T; ++c) {
            const int id = batch.at(r, c);
            if (id < 0 || id >= cfg_.vocab_size)
                throw std::out_of_range("encode: token id " + std::to_string(id) +
                                        " out of vocab size " + std::to_string(cfg_.vocab_size));
        }
    }
    const bool use_dropout = training && cfg_.dropout > 0.0;
    if (use_dropout && !dropout_rng)
        throw std::invalid_argument("encode: dropout requires an rng in training mode");
    auto drop = [&](Tape::Id x) {
        return use_dropout ? tape.dropout(x, cfg_.dropout, *dropout_rng, true) : x;
    };

    std::vector<int> flat_ids(batch.ids.begin(), batch.ids.end());
    std::vector<int> flat_pos(static_cast<std::size_t>(B) * T);
    for (int r = 0; r < B; ++r)
        for (int c = 0; c < T; ++c) flat_pos[static_cast<std::size_t>(r) * T + c] = c;

    Tape::Id x = tape.add(tape.gather_rows(tape.param("enc.tok_emb"), flat_ids),
                          tape.gather_rows(tape.param("enc.pos_emb"), flat_pos));
    x = drop(x);

    // one additive key mask per batch row, shared across layers and heads
    std::vector<Tape::Id> masks(static_cast<std::size_t>(B));
    for (int r = 0; r < B; ++r) {
        Tensor m(T, T);
        for (int j = batch.lengths[static_cast<std::size_t>(r)]; j < T; ++j)
            for (int i = 0; i < T; ++i) m.at(i, j) = kMaskedScore;
        masks[static_cast<std::size_t>(r)] = tape.input(std::move(m));
    }

    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int l = 0; l < cfg_.n_layers; ++l) {
        const std::string p = layer_prefix(l);

        Tape::Id h1 = tape.layer_norm(x);
        h1 = tape.add_row(tape.mul_row(h1, tape.param(p + "ln1.g")), tape.param(p + "ln1.b"));
        const Tape::Id q =
            tape.add_row(tape.matmul(h1, tape.param(p + "attn.wq")), tape.param(p + "attn.bq"));
        const Tape::Id k =
            tape.add_row(tape.matmul(h1, tape.param(p + "attn.wk")), tape.param(p + "attn.bk"));
        const Tape::Id v =
            tape.add_row(tape.matmul(h1, tape.param(p + "attn.wv")), tape.param(p + "attn.bv"));

        std::vector<Tape::Id> row_ctx;
        row_ctx.reserve(static_cast<std::size_t>(B));
        for (int r = 0; r < B; ++r) {
            const Tape::Id qr = tape.slice_rows(q, r * T, T);
            const Tape::Id kr = tape.slice_rows(k, r * T, T);
            const Tape::Id vr = tape.slice_rows(v, r * T, T);
            std::vector<Tape::Id> heads;
            heads.reserve(static_cast<std::size_t>(cfg_.n_heads));
            for (int h = 0; h < cfg_.n_heads; ++h) {
                const Tape::Id qh = tape.slice_cols(qr, h * dh, dh);
                const Tape::Id kh = tape.slice_cols(kr, h * dh, dh);
                const Tape::Id vh = tape.slice_cols(vr, h * dh, dh);
                Tape::Id scores = tape.affine(tape.matmul_nt(qh, kh), scale, 0.0);
                scores = tape.add(scores, masks[static_cast<std::size_t>(r)]);
                heads.push_back(tape.matmul(tape.softmax_rows(scores), vh));
            }
            row_ctx.push_back(tape.concat_cols(heads));
        }
        Tape::Id ctx = tape.concat_rows(row_ctx);
        ctx = tape.add_row(tape.matmul(ctx, tape.param(p + "attn.wo")),
                           tape.param(p + "attn.bo"));
        x = tape.add(x, drop(ctx));

        Tape::Id h2 = tape.layer_norm(x);
        h2 = tape.add_row(tape.mul_row(h2, tape.param(p + "ln2.g")), tape.param(p + "ln2.b"));
        Tape::Id ffn = tape.gelu(
            tape.add_row(tape.matmul(h2, tape.param(p + "ffn.w1")), tape.param(p + "ffn.b1")));
        ffn = tape.add_row(tape.matmul(ffn, tape.param(p + "ffn.w2")), tape.param(p + "ffn.b2"));
        x = tape.add(x, drop(ffn));
    }

    Tape::Id h = tape.layer_norm(x);
    return tape.add_row(tape.mul_row(h, tape.param("enc.final_ln.g")),
                        tape.param("enc.final_ln.b"));
}

Tape::Id TextEncoder::pool_start(Tape& tape, Tape::Id h, const TokenBatch& batch) const {
    std::vector<int> starts;
    starts.reserve(static_cast<std::size_t>(batch.rows));
    for (int r = 0; r < batch.rows; ++r) starts.push_back(r * batch.cols);
    return tape.gather_rows(h, std::move(starts));
}

Tape::Id TextEncoder::mlm_logits(Tape& tape, Tape::Id h, const std::vector<int>& flat_rows) const {
    const Tape::Id picked = tape.gather_rows(h, flat_rows);
    return tape.add_row(tape.matmul(picked, tape.param("mlm.w")), tape.param("mlm.b"));
}

int MlmBatch::total_targets() const {
    int n = 0;
    for (const auto& v : target_positions) n += static_cast<int>(v.size());
    return n;
}

MlmBatch apply_mlm_masking(const TokenBatch& clean, const Tokenizer& tok, Rng& rng,
                           double rate, double p_mask, double p_random) {
    if (rate <= 0.0 || rate > 1.0) throw std::invalid_argument("apply_mlm_masking: bad rate");
    if (p_mask < 0.0 || p_random < 0.0 || p_mask + p_random > 1.0)
        throw std::invalid_argument("apply_mlm_masking: bad proportions");

    MlmBatch out;
    out.tokens = clean;
    out.target_positions.resize(static_cast<std::size_t>(clean.rows));
    out.target_labels.resize(static_cast<std::size_t>(clean.rows));
    const int non_special = tok.vocab_size() - Tokenizer::kNumSpecials;

    for (int r = 0; r < clean.rows; ++r) {
        std::vector<int> eligible;
        for (int c = 0; c < clean.lengths[static_cast<std::size_t>(r)]; ++c)
            if (!tok.is_special(clean.at(r, c))) eligible.push_back(c);
        if (eligible.empty())
            throw std::invalid_argument("apply_mlm_masking: row " + std::to_string(r) +
                                        " has no maskable token");

        auto n_pick = static_cast<std::size_t>(
            std::lround(rate * static_cast<double>(eligible.size())));
        n_pick = std::max<std::size_t>(1, std::min(n_pick, eligible.size()));

        // partial Fisher-Yates: first n_pick entries are the selection
        for (std::size_t i = 0; i < n_pick; ++i) {
            const std::size_t j =
                i + static_cast<std::size_t>(rng.uniform_int(eligible.size() - i));
            std::swap(eligible[i], eligible[j]);
        }
        std::vector<int> picked(eligible.begin(),
                                eligible.begin() + static_cast<std::ptrdiff_t>(n_pick));
        std::sort(picked.begin(), picked.end());

        for (int c : picked) {
            out.target_positions[static_cast<std::size_t>(r)].push_back(c);
            out.target_labels[static_cast<std::size_t>(r)].push_back(clean.at(r, c));
            const double u = rng.uniform();
            if (u < p_mask)
                out.tokens.at(r, c) = Tokenizer::kMask;
            else if (u < p_mask + p_random)
                out.tokens.at(r, c) =
                    Tokenizer::kNumSpecials + static_cast<int>(rng.uniform_int(
                                                  static_cast<std::uint64_t>(non_special)));
            // else: keep the original token
        }
    }
    return out;
}

Tape::Id mlm_loss(Tape& tape, const TextEncoder& enc, const MlmBatch& batch, bool training,
                  Rng* dropout_rng) {
    if (batch.total_targets() == 0)
        throw std::invalid_argument("mlm_loss: batch has no target positions");
    const Tape::Id h = enc.encode(tape, batch.tokens, training, dropout_rng);
    std::vector<int> flat_rows;
    std::vector<int> labels;
    for (int r = 0; r < batch.tokens.rows; ++r) {
        const auto& pos = batch.target_positions[static_cast<std::size_t>(r)];
        const auto& lab = batch.target_labels[static_cast<std::size_t>(r)];
        for (std::size_t i = 0; i < pos.size(); ++i) {
            flat_rows.push_back(r * batch.tokens.cols + pos[i]);
            labels.push_back(lab[i]);
        }
    }
    const Tape::Id logits = enc.mlm_logits(tape, h, flat_rows);
    return tape.cross_entropy(logits, std::move(labels));
}

} // namespace kepler
