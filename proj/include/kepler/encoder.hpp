#pragma once
// Pre-norm transformer encoder with learned absolute positions, start-token
// pooling, and the masked-language-modeling head. All trainable state lives
// in a ParameterSet under the "enc." / "mlm." name prefixes; forward passes
// are pure tape programs.

#include <string>
#include <vector>

#include "kepler/bpe.hpp"
#include "kepler/rng.hpp"
#include "kepler/tape.hpp"

namespace kepler {

struct EncoderConfig {
    int n_layers = 2;
    int hidden = 32;
    int n_heads = 2;
    int ffn_dim = 64;
    int max_positions = 64;
    int vocab_size = 0;
    double dropout = 0.0;
    double init_std = 0.02;

    void validate() const;
};

// Right-padded id matrix with per-row true lengths.
struct TokenBatch {
    int rows = 0;
    int cols = 0;
    std::vector<int> ids;
    std::vector<int> lengths;

    static TokenBatch from_sequences(const std::vector<std::vector<int>>& seqs);
    int at(int r, int c) const { return ids[static_cast<std::size_t>(r) * cols + c]; }
    int& at(int r, int c) { return ids[static_cast<std::size_t>(r) * cols + c]; }
};

class TextEncoder {
public:
    TextEncoder() = default; // unusable until move-assigned from a real one
    explicit TextEncoder(EncoderConfig cfg);

    // Registers every encoder + MLM-head parameter (normal init, std 0.02;
    // layer-norm gains 1, biases 0).
    void init_params(ParameterSet& params, Rng& rng) const;

    // Returns the final-layer representation H_L as a (rows * cols, hidden)
    // node. Padded key positions are masked out of attention. The tape must
    // own the ParameterSet the encoder was initialized into.
    Tape::Id encode(Tape& tape, const TokenBatch& batch, bool training = false,
                    Rng* dropout_rng = nullptr) const;

    // Row b of the result is H_L at position 0 of batch row b: E_<s>(.)
    Tape::Id pool_start(Tape& tape, Tape::Id h, const TokenBatch& batch) const;

    // (n, vocab) logits for the given flat row indices of H_L.
    Tape::Id mlm_logits(Tape& tape, Tape::Id h, const std::vector<int>& flat_rows) const;

    const EncoderConfig& config() const { return cfg_; }

private:
    EncoderConfig cfg_;
};

struct MlmBatch {
    TokenBatch tokens; // post-corruption ids
    std::vector<std::vector<int>> target_positions;
    std::vector<std::vector<int>> target_labels; // pre-corruption ids
    int total_targets() const;
};

// Selects round(rate * eligible) positions per row (minimum 1; specials are
// never eligible), then corrupts each with the mask / random / keep split.
MlmBatch apply_mlm_masking(const TokenBatch& clean, const Tokenizer& tok, Rng& rng,
                           double rate = 0.15, double p_mask = 0.8, double p_random = 0.1);

// Mean cross-entropy over the batch's target positions only.
Tape::Id mlm_loss(Tape& tape, const TextEncoder& enc, const MlmBatch& batch,
                  bool training = false, Rng* dropout_rng = nullptr);

} // namespace kepler
