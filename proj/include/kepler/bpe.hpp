#pragma once
// Byte-level BPE tokenizer. The base alphabet is all 256 bytes, remapped to
// printable unicode codepoints so token strings survive the line-oriented
// vocab/merges files (no raw tabs, spaces, or newlines inside tokens). Merge
// training is greedy highest-frequency with lexicographic tie-breaking, so a
// given corpus and budget always produce the same merge table.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "kepler/rng.hpp"

namespace kepler {

class Tokenizer {
public:
    // specials + raw byte alphabet, no merges
    Tokenizer();

    static constexpr int kBos = 0;  // <s>
    static constexpr int kEos = 1;  // </s>
    static constexpr int kMask = 2; // <mask>
    static constexpr int kPad = 3;  // <pad>
    static constexpr int kUnk = 4;  // <unk>, unreachable with a byte alphabet
    static constexpr int kNumSpecials = 5;
    static constexpr int kFirstByte = kNumSpecials; // byte b has id kFirstByte + b

    // Greedy BPE training until vocab_size tokens exist (or no pair is left).
    // vocab_size must exceed the 256-byte alphabet plus specials.
    static Tokenizer train_bpe(std::istream& corpus, int vocab_size);

    // [<s>] + subword ids, truncated to max_len (>= 2).
    std::vector<int> encode(const std::string& text, int max_len) const;
    // [<s>] + first + [</s>] + second, truncated.
    std::vector<int> encode_pair(const std::string& first, const std::string& second,
                                 int max_len) const;
    // Byte-exact inverse on the token-id level; specials are dropped.
    std::string decode(const std::vector<int>& ids) const;

    int vocab_size() const { return static_cast<int>(token_strs_.size()); }
    int n_merges() const { return static_cast<int>(merges_.size()); }
    bool is_special(int id) const { return id >= 0 && id < kNumSpecials; }
    const std::string& token_str(int id) const { return token_strs_[static_cast<std::size_t>(id)]; }

    // First merge applied to the raw id sequence of `text` (testing hook).
    std::vector<int> encode_chunk_ids(const std::string& chunk) const;

    void save(const std::string& vocab_path, const std::string& merges_path) const;
    static Tokenizer load(const std::string& vocab_path, const std::string& merges_path);

    struct Merge {
        int left = 0;
        int right = 0;
        int result = 0;
    };
    const std::vector<Merge>& merges() const { return merges_; }

private:
    std::vector<int> bytes_to_ids(const std::string& raw) const;
    void apply_merges(std::vector<int>& syms) const;
    void index_merges();

    std::vector<std::string> token_strs_;
    std::vector<Merge> merges_;
    // (left, right) -> merge rank and produced id
    std::map<std::pair<int, int>, std::pair<int, int>> merge_rank_;
};

// Pre-tokenization: pieces of the form [whitespace run][non-whitespace run]
// (a trailing whitespace run forms its own piece), so decode(encode(x))
// reproduces x byte for byte.
std::vector<std::string> pretokenize(const std::string& text);

// The byte <-> printable display mapping (exposed for tests).
const std::string& byte_display(unsigned char b);
std::string display_to_bytes(const std::string& display);

} // namespace kepler
