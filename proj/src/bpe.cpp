#include "kepler/bpe.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace kepler {

namespace {

std::string encode_codepoint(int cp) {
    std::string s;
    if (cp < 0x80) {
        s.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        s.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        s.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        throw std::logic_error("byte display codepoint out of range");
    }
    return s;
}

bool byte_kept_printable(int b) {
    return (b >= 0x21 && b <= 0x7E) || (b >= 0xA1 && b <= 0xAC) || (b >= 0xAE && b <= 0xFF);
}

struct ByteDisplayTable {
    std::array<std::string, 256> display;
    std::unordered_map<int, unsigned char> cp_to_byte;

    ByteDisplayTable() {
        int next = 256;
        for (int b = 0; b < 256; ++b) {
            const int cp = byte_kept_printable(b) ? b : next++;
            display[static_cast<std::size_t>(b)] = encode_codepoint(cp);
            cp_to_byte[cp] = static_cast<unsigned char>(b);
        }
    }
};

const ByteDisplayTable& table() {
    static const ByteDisplayTable t;
    return t;
}

const std::array<std::string, Tokenizer::kNumSpecials> kSpecialStrs = {
    "<s>", "</s>", "<mask>", "<pad>", "<unk>"};

} // namespace

const std::string& byte_display(unsigned char b) { return table().display[b]; }

std::string display_to_bytes(const std::string& display) {
    std::string out;
    std::size_t i = 0;
    while (i < display.size()) {
        const auto c0 = static_cast<unsigned char>(display[i]);
        int cp;
        if (c0 < 0x80) {
            cp = c0;
            i += 1;
        } else if ((c0 & 0xE0) == 0xC0 && i + 1 < display.size()) {
            cp = ((c0 & 0x1F) << 6) | (static_cast<unsigned char>(display[i + 1]) & 0x3F);
            i += 2;
        } else {
            throw std::invalid_argument("display_to_bytes: malformed token string");
        }
        auto it = table().cp_to_byte.find(cp);
        if (it == table().cp_to_byte.end())
            throw std::invalid_argument("display_to_bytes: unknown codepoint");
        out.push_back(static_cast<char>(it->second));
    }
    return out;
}

std::vector<std::string> pretokenize(const std::string& text) {
    std::vector<std::string> pieces;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        std::size_t j = i;
        while (j < n && std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        std::size_t k = j;
        while (k < n && !std::isspace(static_cast<unsigned char>(text[k]))) ++k;
        pieces.push_back(text.substr(i, k - i));
        i = k;
    }
    return pieces;
}

Tokenizer::Tokenizer() {
    token_strs_.reserve(kNumSpecials + 256);
    for (const auto& s : kSpecialStrs) token_strs_.push_back(s);
    for (int b = 0; b < 256; ++b)
        token_strs_.push_back(table().display[static_cast<std::size_t>(b)]);
}

std::vector<int> Tokenizer::bytes_to_ids(const std::string& raw) const {
    std::vector<int> ids;
    ids.reserve(raw.size());
    for (unsigned char c : raw) ids.push_back(kFirstByte + c);
    return ids;
}

void Tokenizer::index_merges() {
    merge_rank_.clear();
    for (std::size_t i = 0; i < merges_.size(); ++i)
        merge_rank_[{merges_[i].left, merges_[i].right}] = {static_cast<int>(i),
                                                            merges_[i].result};
}

Tokenizer Tokenizer::train_bpe(std::istream& corpus, int vocab_size) {
    Tokenizer tok;
    if (vocab_size <= 256 + kNumSpecials)
        throw std::invalid_argument("train_bpe: vocab_size must exceed " +
                                    std::to_string(256 + kNumSpecials));

    // chunk -> count in first-seen order
    std::vector<std::pair<std::vector<int>, std::int64_t>> chunks;
    std::unordered_map<std::string, std::size_t> chunk_index;
    std::string line;
    while (std::getline(corpus, line)) {
        for (const std::string& piece : pretokenize(line)) {
            auto [it, fresh] = chunk_index.emplace(piece, chunks.size());
            if (fresh)
                chunks.emplace_back(tok.bytes_to_ids(piece), 1);
            else
                chunks[it->second].second += 1;
        }
    }
    if (chunks.empty()) throw std::invalid_argument("train_bpe: empty corpus");

    std::set<std::pair<int, int>> banned; // pairs whose merge would spell a special
    while (tok.vocab_size() < vocab_size) {
        std::unordered_map<std::uint64_t, std::int64_t> pair_counts;
        auto pack = [](int a, int b) {
            return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
                   static_cast<std::uint32_t>(b);
        };
        for (const auto& [syms, count] : chunks)
            for (std::size_t i = 0; i + 1 < syms.size(); ++i)
                pair_counts[pack(syms[i], syms[i + 1])] += count;

        // best = highest count, ties by lexicographically smallest
        // (left string, right string)
        bool found = false;
        std::int64_t best_count = 0;
        std::pair<int, int> best{0, 0};
        for (const auto& [packed, count] : pair_counts) {
            const int l = static_cast<int>(packed >> 32);
            const int r = static_cast<int>(packed & 0xFFFFFFFFu);
            if (banned.count({l, r})) continue;
            if (!found || count > best_count ||
                (count == best_count &&
                 std::make_pair(tok.token_str(l), tok.token_str(r)) <
                     std::make_pair(tok.token_str(best.first), tok.token_str(best.second)))) {
                found = true;
                best_count = count;
                best = {l, r};
            }
        }
        if (!found) break; // nothing left to merge

        const std::string merged_str = tok.token_str(best.first) + tok.token_str(best.second);
        const bool is_special_str =
            std::find(kSpecialStrs.begin(), kSpecialStrs.end(), merged_str) != kSpecialStrs.end();
        if (is_special_str) {
            banned.insert(best);
            continue;
        }

        const int new_id = tok.vocab_size();
        tok.token_strs_.push_back(merged_str);
        tok.merges_.push_back({best.first, best.second, new_id});

        for (auto& [syms, count] : chunks) {
            std::size_t w = 0;
            for (std::size_t r = 0; r < syms.size();) {
                if (r + 1 < syms.size() && syms[r] == best.first && syms[r + 1] == best.second) {
                    syms[w++] = new_id;
                    r += 2;
                } else {
                    syms[w++] = syms[r++];
                }
            }
            syms.resize(w);
        }
    }

    tok.index_merges();
    return tok;
}

void Tokenizer::apply_merges(std::vector<int>& syms) const {
    while (syms.size() >= 2) {
        int best_rank = -1;
        std::pair<int, int> best{0, 0};
        int best_id = -1;
        for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
            auto it = merge_rank_.find({syms[i], syms[i + 1]});
            if (it != merge_rank_.end() && (best_rank < 0 || it->second.first < best_rank)) {
                best_rank = it->second.first;
                best = it->first;
                best_id = it->second.second;
            }
        }
        if (best_rank < 0) break;
        std::size_t w = 0;
        for (std::size_t r = 0; r < syms.size();) {
            if (r + 1 < syms.size() && syms[r] == best.first && syms[r + 1] == best.second) {
                syms[w++] = best_id;
                r += 2;
            } else {
                syms[w++] = syms[r++];
            }
        }
        syms.resize(w);
    }
}

std::vector<int> Tokenizer::encode_chunk_ids(const std::string& chunk) const {
    std::vector<int> syms = bytes_to_ids(chunk);
    apply_merges(syms);
    return syms;
}

std::vector<int> Tokenizer::encode(const std::string& text, int max_len) const {
    if (max_len < 2) throw std::invalid_argument("encode: max_len must be >= 2");
    std::vector<int> ids{kBos};
    for (const std::string& piece : pretokenize(text)) {
        if (static_cast<int>(ids.size()) >= max_len) break;
        const std::vector<int> syms = encode_chunk_ids(piece);
        ids.insert(ids.end(), syms.begin(), syms.end());
    }
    if (static_cast<int>(ids.size()) > max_len) ids.resize(static_cast<std::size_t>(max_len));
    return ids;
}

std::vector<int> Tokenizer::encode_pair(const std::string& first, const std::string& second,
                                        int max_len) const {
    if (max_len < 2) throw std::invalid_argument("encode_pair: max_len must be >= 2");
    std::vector<int> ids{kBos};
    for (const std::string& piece : pretokenize(first)) {
        const std::vector<int> syms = encode_chunk_ids(piece);
        ids.insert(ids.end(), syms.begin(), syms.end());
    }
    ids.push_back(kEos);
    for (const std::string& piece : pretokenize(second)) {
        if (static_cast<int>(ids.size()) >= max_len) break;
        const std::vector<int> syms = encode_chunk_ids(piece);
        ids.insert(ids.end(), syms.begin(), syms.end());
    }
    if (static_cast<int>(ids.size()) > max_len) ids.resize(static_cast<std::size_t>(max_len));
    return ids;
}

std::string Tokenizer::decode(const std::vector<int>& ids) const {
    std::string display;
    for (int id : ids) {
        if (id < 0 || id >= vocab_size())
            throw std::out_of_range("decode: id " + std::to_string(id) + " out of vocab");
        if (is_special(id)) continue;
        display += token_strs_[static_cast<std::size_t>(id)];
    }
    return display_to_bytes(display);
}

void Tokenizer::save(const std::string& vocab_path, const std::string& merges_path) const {
    std::ofstream vocab(vocab_path, std::ios::binary | std::ios::trunc);
    if (!vocab) throw std::runtime_error("cannot write " + vocab_path);
    for (int id = 0; id < vocab_size(); ++id)
        vocab << token_strs_[static_cast<std::size_t>(id)] << '\t' << id << '\n';

    std::ofstream merges(merges_path, std::ios::binary | std::ios::trunc);
    if (!merges) throw std::runtime_error("cannot write " + merges_path);
    for (const Merge& m : merges_)
        merges << token_str(m.left) << ' ' << token_str(m.right) << '\n';
}

Tokenizer Tokenizer::load(const std::string& vocab_path, const std::string& merges_path) {
    std::ifstream vocab(vocab_path, std::ios::binary);
    if (!vocab) throw std::runtime_error("cannot open " + vocab_path);
    std::vector<std::string> strs;
    std::unordered_map<std::string, int> ids;
    std::string line;
    std::int64_t line_no = 0;
    while (std::getline(vocab, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::size_t tab = line.rfind('\t');
        if (tab == std::string::npos)
            throw std::runtime_error("vocab parse error at line " + std::to_string(line_no));
        const std::string tok_str = line.substr(0, tab);
        const int id = std::stoi(line.substr(tab + 1));
        if (id != static_cast<int>(strs.size()))
            throw std::runtime_error("vocab ids must be dense and ascending, line " +
                                     std::to_string(line_no));
        strs.push_back(tok_str);
        ids[tok_str] = id;
    }

    Tokenizer tok;
    if (strs.size() < static_cast<std::size_t>(kFirstByte + 256))
        throw std::runtime_error("vocab too small for the byte alphabet");
    for (int i = 0; i < kFirstByte + 256; ++i)
        if (strs[static_cast<std::size_t>(i)] != tok.token_strs_[static_cast<std::size_t>(i)])
            throw std::runtime_error("vocab specials/byte alphabet mismatch at id " +
                                     std::to_string(i));
    tok.token_strs_ = strs;

    std::ifstream merges(merges_path, std::ios::binary);
    if (!merges) throw std::runtime_error("cannot open " + merges_path);
    int next_id = kFirstByte + 256;
    line_no = 0;
    while (std::getline(merges, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::size_t sp = line.find(' ');
        if (sp == std::string::npos || line.find(' ', sp + 1) != std::string::npos)
            throw std::runtime_error("merges parse error at line " + std::to_string(line_no));
        const auto l = ids.find(line.substr(0, sp));
        const auto r = ids.find(line.substr(sp + 1));
        if (l == ids.end() || r == ids.end())
            throw std::runtime_error("merges reference unknown token at line " +
                                     std::to_string(line_no));
        const auto merged = ids.find(line.substr(0, sp) + line.substr(sp + 1));
        if (merged == ids.end() || merged->second != next_id)
            throw std::runtime_error("merge result missing from vocab at line " +
                                     std::to_string(line_no));
        tok.merges_.push_back({l->second, r->second, next_id});
        ++next_id;
    }
    if (next_id != tok.vocab_size())
        throw std::runtime_error("vocab contains tokens not produced by merges");
    tok.index_merges();
    return tok;
}

} // namespace kepler
