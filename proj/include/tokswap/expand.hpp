#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tokswap/bytebpe.hpp"
#include "tokswap/common.hpp"

namespace tokswap {

struct ExtensionReport {
  std::size_t base_size = 0;
  std::size_t requested_new = 0;       // non-byte tokens offered by ext
  std::size_t added = 0;
  std::size_t duplicates_dropped = 0;
  TokenId new_ids_begin = 0;           // [new_ids_begin, new_ids_end)
  TokenId new_ids_end = 0;

  nlohmann::json to_json() const {
    return {{"format_version", 1},
            {"base_size", base_size},
            {"requested_new", requested_new},
            {"added", added},
            {"duplicates_dropped", duplicates_dropped},
            {"new_token_ids", {{"begin", new_ids_begin}, {"end", new_ids_end}}}};
  }

  void save(const std::filesystem::path& path) const {
    write_file_atomic(path, to_json().dump(2) + "\n");
  }
};

// Learn num_new_merges additional merges on a domain corpus, on top of an
// existing tokenizer. Pair counting runs over the base tokenizer's encoding
// of the corpus, so every learned merge joins two tokens the base already
// produces. The result extends the base: its vocabulary and merge list are
// the base's followed by the new tokens and merges.
inline Tokenizer train_extension(const Tokenizer& base,
                                 const std::vector<std::string>& domain_corpus,
                                 std::size_t num_new_merges) {
  if (domain_corpus.empty()) fail("empty corpus");
  auto chunks = detail::count_chunks(domain_corpus, base.pretok());
  std::vector<detail::WeightedSeq> seqs;
  seqs.reserve(chunks.size());
  for (auto& [chunk, count] : chunks) {
    detail::WeightedSeq ws;
    ws.weight = count;
    ws.ids = base.encode_bytes(chunk);
    seqs.push_back(std::move(ws));
  }
  Vocabulary vocab = base.vocab();
  std::vector<MergeRule> merges = base.merges();
  detail::learn_merges(seqs, vocab, merges, num_new_merges);
  return Tokenizer(std::move(vocab), std::move(merges), base.pretok());
}

// Append ext's tokens and merges onto base. Base ids and ranks are
// preserved unchanged; ext tokens whose byte sequences already exist in the
// result are dropped, and ext merges are re-pointed through byte-sequence
// identity. Ext merges that duplicate an existing (left, right) pair are
// skipped, which makes the operation idempotent.
inline std::pair<Tokenizer, ExtensionReport> merge_tokenizers(
    const Tokenizer& base, const Tokenizer& ext) {
  if (!(base.pretok() == ext.pretok())) fail("pretokenizer mismatch");

  ExtensionReport report;
  report.base_size = base.vocab_size();
  report.requested_new = ext.vocab_size() - 256;
  report.new_ids_begin = static_cast<TokenId>(base.vocab_size());

  Vocabulary vocab = base.vocab();
  std::vector<TokenId> ext_to_merged(ext.vocab_size());
  for (TokenId id = 0; id < 256; ++id) ext_to_merged[id] = id;
  for (TokenId id = 256; id < ext.vocab_size(); ++id) {
    const std::string& bytes = ext.vocab().bytes(id);
    if (auto existing = vocab.find(bytes)) {
      ext_to_merged[id] = *existing;
      report.duplicates_dropped++;
    } else {
      ext_to_merged[id] = vocab.add(bytes);
      report.added++;
    }
  }
  report.new_ids_end = static_cast<TokenId>(vocab.size());

  std::vector<MergeRule> merges = base.merges();
  std::unordered_set<std::uint64_t> seen_pairs;
  seen_pairs.reserve(merges.size() + ext.merges().size());
  auto pack = [](TokenId a, TokenId b) {
    return (static_cast<std::uint64_t>(a) << 32) | b;
  };
  for (const auto& m : merges) seen_pairs.insert(pack(m.left, m.right));
  for (const auto& m : ext.merges()) {
    TokenId left = ext_to_merged[m.left];
    TokenId right = ext_to_merged[m.right];
    if (!seen_pairs.insert(pack(left, right)).second) continue;
    merges.push_back({left, right, ext_to_merged[m.result],
                      static_cast<std::uint32_t>(merges.size())});
  }

  Tokenizer merged(std::move(vocab), std::move(merges), base.pretok());
  return {std::move(merged), report};
}

}  // namespace tokswap
