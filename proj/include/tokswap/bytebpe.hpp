#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tokswap/common.hpp"

namespace tokswap {

using TokenId = std::uint32_t;

// Regex-based splitter. Chunks are the regex matches; bytes not covered by
// any match become chunks of their own, so the concatenation of all chunks
// always reproduces the input exactly. Merges never cross chunk boundaries.
class PreTokenizer {
 public:
  // GPT-style default: contractions, letter runs (any non-ASCII byte counts
  // as a letter), digit runs, punctuation runs, whitespace. Each of the
  // word-like alternatives absorbs one leading space.
  static const std::string& default_pattern() {
    static const std::string pat =
        R"('(?:[sdmt]|ll|ve|re)| ?[A-Za-z\x80-\xFF]+| ?[0-9]+| ?[^\sA-Za-z0-9\x80-\xFF]+|\s+(?!\S)|\s+)";
    return pat;
  }

  explicit PreTokenizer(std::string pattern = default_pattern())
      : pattern_(std::move(pattern)) {
    try {
      re_ = std::regex(pattern_, std::regex::ECMAScript | std::regex::optimize);
    } catch (const std::regex_error& e) {
      fail(std::string("invalid pretokenizer pattern: ") + e.what());
    }
  }

  const std::string& pattern() const { return pattern_; }

  std::vector<std::string> split(std::string_view text) const {
    std::vector<std::string> chunks;
    const char* begin = text.data();
    const char* end = begin + text.size();
    const char* pos = begin;
    for (std::cregex_iterator it(begin, end, re_), last; it != last; ++it) {
      const auto& m = (*it)[0];
      if (m.first > pos) chunks.emplace_back(pos, m.first);
      if (m.second > m.first) chunks.emplace_back(m.first, m.second);
      pos = m.second;
    }
    if (pos < end) chunks.emplace_back(pos, end);
    return chunks;
  }

  bool operator==(const PreTokenizer& other) const {
    return pattern_ == other.pattern_;
  }

 private:
  std::string pattern_;
  std::regex re_;
};

// Dense id -> byte-sequence table. Ids 0..255 are always the single bytes in
// byte order; learned tokens follow. Byte sequences are unique.
class Vocabulary {
 public:
  Vocabulary() {
    entries_.reserve(512);
    for (int b = 0; b < 256; ++b) {
      entries_.emplace_back(1, static_cast<char>(b));
      index_.emplace(entries_.back(), static_cast<TokenId>(b));
    }
  }

  std::size_t size() const { return entries_.size(); }

  const std::string& bytes(TokenId id) const {
    if (id >= entries_.size()) fail("token id out of range");
    return entries_[id];
  }

  std::optional<TokenId> find(const std::string& bytes) const {
    auto it = index_.find(bytes);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  TokenId add(std::string bytes) {
    if (bytes.empty()) fail("empty token bytes");
    TokenId id = static_cast<TokenId>(entries_.size());
    auto [it, inserted] = index_.emplace(std::move(bytes), id);
    if (!inserted) fail("duplicate token bytes");
    entries_.push_back(it->first);
    return id;
  }

  bool operator==(const Vocabulary& other) const {
    return entries_ == other.entries_;
  }

 private:
  std::vector<std::string> entries_;
  std::unordered_map<std::string, TokenId> index_;
};

struct MergeRule {
  TokenId left = 0;
  TokenId right = 0;
  TokenId result = 0;
  std::uint32_t rank = 0;

  bool operator==(const MergeRule&) const = default;
};

class Tokenizer {
 public:
  Tokenizer(Vocabulary vocab, std::vector<MergeRule> merges,
            PreTokenizer pretok)
      : vocab_(std::move(vocab)),
        merges_(std::move(merges)),
        pretok_(std::move(pretok)) {
    validate();
    build_merge_index();
  }

  static Tokenizer bytes_only(PreTokenizer pretok = PreTokenizer{}) {
    return Tokenizer(Vocabulary{}, {}, std::move(pretok));
  }

  const Vocabulary& vocab() const { return vocab_; }
  const std::vector<MergeRule>& merges() const { return merges_; }
  const PreTokenizer& pretok() const { return pretok_; }
  std::size_t vocab_size() const { return vocab_.size(); }

  std::vector<TokenId> encode(std::string_view text) const {
    std::vector<TokenId> out;
    out.reserve(text.size() / 2 + 1);
    for (const auto& chunk : pretok_.split(text)) encode_chunk_into(chunk, out);
    return out;
  }

  // Merge-only encoding of a raw byte sequence as a single chunk. Used when
  // the input is already one chunk, or is token bytes that may not be valid
  // UTF-8 (re-initialization planning).
  std::vector<TokenId> encode_bytes(std::string_view bytes) const {
    std::vector<TokenId> out;
    encode_chunk_into(bytes, out);
    return out;
  }

  std::string decode(std::span<const TokenId> ids) const {
    std::string out;
    for (TokenId id : ids) out += vocab_.bytes(id);
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json vocab_arr = nlohmann::json::array();
    for (TokenId id = 256; id < vocab_.size(); ++id)
      vocab_arr.push_back(
          {{"id", id}, {"bytes_hex", bytes_to_hex(vocab_.bytes(id))}});
    nlohmann::json merges_arr = nlohmann::json::array();
    for (const auto& m : merges_)
      merges_arr.push_back({{"left", m.left},
                            {"right", m.right},
                            {"result", m.result},
                            {"rank", m.rank}});
    return {{"format_version", 1},
            {"pretokenizer", pretok_.pattern()},
            {"vocab", std::move(vocab_arr)},
            {"merges", std::move(merges_arr)}};
  }

  static Tokenizer from_json(const nlohmann::json& j) {
    if (!j.is_object()) fail("malformed tokenizer file: not an object");
    if (!j.contains("format_version") ||
        !j["format_version"].is_number_integer())
      fail("malformed tokenizer file: missing format_version");
    if (j["format_version"].get<int>() != 1)
      fail("unsupported format_version: " +
           std::to_string(j["format_version"].get<int>()));
    try {
      PreTokenizer pretok(j.at("pretokenizer").get<std::string>());
      Vocabulary vocab;
      for (const auto& entry : j.at("vocab")) {
        TokenId id = entry.at("id").get<TokenId>();
        std::string bytes = hex_to_bytes(entry.at("bytes_hex").get<std::string>());
        if (id < 256) {
          // Byte tokens may be listed explicitly; they must agree.
          if (bytes.size() != 1 ||
              static_cast<unsigned char>(bytes[0]) != id)
            fail("malformed tokenizer file: byte token mismatch");
          continue;
        }
        if (id != vocab.size())
          fail("malformed tokenizer file: vocab ids not dense");
        vocab.add(std::move(bytes));
      }
      std::size_t vocab_size = vocab.size();
      std::vector<MergeRule> merges;
      for (const auto& entry : j.at("merges")) {
        MergeRule m{entry.at("left").get<TokenId>(),
                    entry.at("right").get<TokenId>(),
                    entry.at("result").get<TokenId>(),
                    entry.at("rank").get<std::uint32_t>()};
        if (m.rank != merges.size())
          fail("malformed tokenizer file: merge ranks not dense");
        if (m.left >= vocab_size || m.right >= vocab_size ||
            m.result >= vocab_size)
          fail("dangling merge reference");
        merges.push_back(m);
      }
      return Tokenizer(std::move(vocab), std::move(merges), std::move(pretok));
    } catch (const nlohmann::json::exception& e) {
      fail(std::string("malformed tokenizer file: ") + e.what());
    }
  }

  void save(const std::filesystem::path& path) const {
    write_file_atomic(path, to_json().dump(2) + "\n");
  }

  static Tokenizer load(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
      fail(std::string("malformed tokenizer file: ") + e.what());
    }
    return from_json(j);
  }

  bool operator==(const Tokenizer& other) const {
    return vocab_ == other.vocab_ && merges_ == other.merges_ &&
           pretok_ == other.pretok_;
  }

 private:
  static std::uint64_t pack_pair(TokenId a, TokenId b) {
    return (static_cast<std::uint64_t>(a) << 32) | b;
  }

  void validate() const {
    std::vector<bool> produced(vocab_.size(), false);
    for (std::size_t i = 0; i < merges_.size(); ++i) {
      const MergeRule& m = merges_[i];
      if (m.rank != i) fail("malformed tokenizer: merge ranks not dense");
      if (m.left >= vocab_.size() || m.right >= vocab_.size() ||
          m.result >= vocab_.size())
        fail("dangling merge reference");
      if (m.result < 256) fail("malformed tokenizer: merge result is a byte");
      if (vocab_.bytes(m.result) !=
          vocab_.bytes(m.left) + vocab_.bytes(m.right))
        fail("malformed tokenizer: merge bytes mismatch");
      produced[m.result] = true;
    }
    for (std::size_t id = 256; id < vocab_.size(); ++id)
      if (!produced[id]) fail("malformed tokenizer: unreachable token");
  }

  void build_merge_index() {
    merge_index_.reserve(merges_.size() * 2);
    for (const auto& m : merges_)
      // keep the lowest rank if a pair somehow repeats
      merge_index_.emplace(pack_pair(m.left, m.right),
                           MergeRef{m.rank, m.result});
  }

  // Greedy merge loop: repeatedly apply the lowest-rank applicable merge,
  // leftmost occurrence first.
  void encode_chunk_into(std::string_view chunk,
                         std::vector<TokenId>& out) const {
    const std::size_t n = chunk.size();
    if (n == 0) return;
    std::vector<TokenId> ids(n);
    for (std::size_t i = 0; i < n; ++i)
      ids[i] = static_cast<unsigned char>(chunk[i]);
    if (n > 1 && !merge_index_.empty()) {
      constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();
      auto pair_rank = [&](TokenId a, TokenId b) -> std::uint32_t {
        auto it = merge_index_.find(pack_pair(a, b));
        return it == merge_index_.end() ? kNone : it->second.rank;
      };
      std::vector<std::uint32_t> rank(ids.size());
      for (std::size_t i = 0; i + 1 < ids.size(); ++i)
        rank[i] = pair_rank(ids[i], ids[i + 1]);
      rank.back() = kNone;
      while (ids.size() > 1) {
        std::size_t best = 0;
        std::uint32_t best_rank = kNone;
        for (std::size_t i = 0; i + 1 < ids.size(); ++i)
          if (rank[i] < best_rank) {
            best_rank = rank[i];
            best = i;
          }
        if (best_rank == kNone) break;
        ids[best] = merge_index_.at(pack_pair(ids[best], ids[best + 1])).result;
        ids.erase(ids.begin() + static_cast<std::ptrdiff_t>(best) + 1);
        rank.erase(rank.begin() + static_cast<std::ptrdiff_t>(best) + 1);
        rank[best] = best + 1 < ids.size()
                         ? pair_rank(ids[best], ids[best + 1])
                         : kNone;
        if (best > 0) rank[best - 1] = pair_rank(ids[best - 1], ids[best]);
      }
    }
    out.insert(out.end(), ids.begin(), ids.end());
  }

  Vocabulary vocab_;
  std::vector<MergeRule> merges_;
  PreTokenizer pretok_;
  struct MergeRef {
    std::uint32_t rank;
    TokenId result;
  };
  std::unordered_map<std::uint64_t, MergeRef> merge_index_;
};

inline std::string tokenizer_hash(const Tokenizer& tok) {
  return to_hex64(fnv1a64(tok.to_json().dump()));
}

namespace detail {

struct WeightedSeq {
  std::vector<TokenId> ids;
  std::size_t weight = 1;
};

// Core merge learner shared by from-scratch training and vocabulary
// extension. Atoms are whatever token ids the sequences already contain.
// Learned tokens are appended to `vocab`, merges to `merges` (ranks continue
// from merges.size()). Stops early when the best pair occurs fewer than
// twice.
//
// Selection is by highest weighted count; ties go to the pair whose
// (left bytes, right bytes) is lexicographically smallest. That order is
// total, so the result does not depend on hash-map iteration order.
inline void learn_merges(std::vector<WeightedSeq>& seqs, Vocabulary& vocab,
                         std::vector<MergeRule>& merges,
                         std::size_t num_merges) {
  auto pack = [](TokenId a, TokenId b) {
    return (static_cast<std::uint64_t>(a) << 32) | b;
  };
  auto unpack_left = [](std::uint64_t p) {
    return static_cast<TokenId>(p >> 32);
  };
  auto unpack_right = [](std::uint64_t p) {
    return static_cast<TokenId>(p & 0xFFFFFFFFu);
  };

  std::unordered_map<std::uint64_t, std::size_t> counts;
  std::unordered_map<std::uint64_t, std::unordered_set<std::uint32_t>> where;
  for (std::uint32_t s = 0; s < seqs.size(); ++s) {
    const auto& ws = seqs[s];
    for (std::size_t i = 0; i + 1 < ws.ids.size(); ++i) {
      std::uint64_t p = pack(ws.ids[i], ws.ids[i + 1]);
      counts[p] += ws.weight;
      where[p].insert(s);
    }
  }

  for (std::size_t step = 0; step < num_merges; ++step) {
    std::uint64_t best = 0;
    std::size_t best_count = 0;
    bool have_best = false;
    for (const auto& [p, c] : counts) {
      if (c < 2) continue;
      if (!have_best || c > best_count) {
        best = p;
        best_count = c;
        have_best = true;
        continue;
      }
      if (c == best_count) {
        const std::string& l = vocab.bytes(unpack_left(p));
        const std::string& bl = vocab.bytes(unpack_left(best));
        if (l < bl || (l == bl && vocab.bytes(unpack_right(p)) <
                                      vocab.bytes(unpack_right(best))))
          best = p;
      }
    }
    if (!have_best) break;

    TokenId left = unpack_left(best), right = unpack_right(best);
    std::string merged_bytes = vocab.bytes(left) + vocab.bytes(right);
    // Extension training can rediscover a byte sequence that already exists
    // in the base vocabulary; the merge then points at the existing token.
    TokenId result;
    if (auto existing = vocab.find(merged_bytes))
      result = *existing;
    else
      result = vocab.add(std::move(merged_bytes));
    merges.push_back({left, right, result,
                      static_cast<std::uint32_t>(merges.size())});

    std::vector<std::uint32_t> affected(where[best].begin(),
                                        where[best].end());
    for (std::uint32_t s : affected) {
      WeightedSeq& ws = seqs[s];
      std::unordered_set<std::uint64_t> old_pairs, new_pairs;
      for (std::size_t i = 0; i + 1 < ws.ids.size(); ++i) {
        std::uint64_t p = pack(ws.ids[i], ws.ids[i + 1]);
        auto it = counts.find(p);
        it->second -= ws.weight;
        if (it->second == 0) counts.erase(it);
        old_pairs.insert(p);
      }
      std::vector<TokenId> next;
      next.reserve(ws.ids.size());
      std::size_t i = 0;
      while (i < ws.ids.size()) {
        if (i + 1 < ws.ids.size() && ws.ids[i] == left &&
            ws.ids[i + 1] == right) {
          next.push_back(result);
          i += 2;
        } else {
          next.push_back(ws.ids[i]);
          i += 1;
        }
      }
      ws.ids = std::move(next);
      for (std::size_t k = 0; k + 1 < ws.ids.size(); ++k) {
        std::uint64_t p = pack(ws.ids[k], ws.ids[k + 1]);
        counts[p] += ws.weight;
        new_pairs.insert(p);
      }
      for (std::uint64_t p : old_pairs)
        if (!new_pairs.count(p)) where[p].erase(s);
      for (std::uint64_t p : new_pairs)
        if (!old_pairs.count(p)) where[p].insert(s);
    }
    where.erase(best);
  }
}

// Pre-tokenize a corpus and aggregate identical chunks with counts.
inline std::vector<std::pair<std::string, std::size_t>> count_chunks(
    const std::vector<std::string>& corpus, const PreTokenizer& pretok) {
  std::unordered_map<std::string, std::size_t> counts;
  std::vector<std::string> order;
  for (const auto& doc : corpus) {
    for (auto& chunk : pretok.split(doc)) {
      auto [it, inserted] = counts.try_emplace(std::move(chunk), 0);
      it->second++;
      if (inserted) order.push_back(it->first);
    }
  }
  std::vector<std::pair<std::string, std::size_t>> out;
  out.reserve(order.size());
  for (auto& chunk : order) out.emplace_back(std::move(chunk), counts[chunk]);
  return out;
}

}  // namespace detail

// Learn a byte-level BPE tokenizer from scratch. Deterministic given corpus
// order; may return fewer than num_merges merges if no pair occurs at least
// twice.
inline Tokenizer train_bpe(const std::vector<std::string>& corpus,
                           std::size_t num_merges,
                           PreTokenizer pretok = PreTokenizer{}) {
  if (corpus.empty()) fail("empty corpus");
  auto chunks = detail::count_chunks(corpus, pretok);
  Vocabulary vocab;
  std::vector<MergeRule> merges;
  std::vector<detail::WeightedSeq> seqs;
  seqs.reserve(chunks.size());
  for (auto& [chunk, count] : chunks) {
    detail::WeightedSeq ws;
    ws.weight = count;
    ws.ids.reserve(chunk.size());
    for (char b : chunk) ws.ids.push_back(static_cast<unsigned char>(b));
    seqs.push_back(std::move(ws));
  }
  detail::learn_merges(seqs, vocab, merges, num_merges);
  return Tokenizer(std::move(vocab), std::move(merges), std::move(pretok));
}

}  // namespace tokswap
