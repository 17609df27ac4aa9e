#include "tokswap/expand.hpp"

#include <gtest/gtest.h>

#include <random>
#include <set>
#include <string>
#include <vector>

#include "testutil.hpp"

using tokswap::ExtensionReport;
using tokswap::merge_tokenizers;
using tokswap::TokenId;
using tokswap::Tokenizer;
using tokswap::train_bpe;
using tokswap::train_extension;

namespace {

std::set<std::string> nonbyte_token_set(const Tokenizer& tok) {
  std::set<std::string> out;
  for (TokenId id = 256; id < tok.vocab_size(); ++id)
    out.insert(tok.vocab().bytes(id));
  return out;
}

TEST(TrainExtension, ByteOnlyBaseLearnsTheOnlyPair) {
  Tokenizer base = Tokenizer::bytes_only();
  Tokenizer ext = train_extension(base, {"zzzz"}, 1);
  ASSERT_EQ(ext.merges().size(), 1u);
  EXPECT_EQ(ext.merges()[0].left, TokenId{'z'});
  EXPECT_EQ(ext.merges()[0].right, TokenId{'z'});
  EXPECT_EQ(ext.vocab().bytes(ext.merges()[0].result), "zz");
}

TEST(TrainExtension, ZeroMergesLeavesBaseUnchanged) {
  auto corpus = testutil::en_corpus(30, 41);
  Tokenizer base = train_bpe(corpus, 50);
  Tokenizer ext = train_extension(base, corpus, 0);
  EXPECT_EQ(ext, base);
}

TEST(TrainExtension, EmptyCorpusIsAnError) {
  Tokenizer base = Tokenizer::bytes_only();
  EXPECT_THROW(train_extension(base, {}, 5), std::runtime_error);
}

TEST(TrainExtension, LearnsOnlyPairsTheBaseLeftUnmerged) {
  auto corpus = testutil::en_corpus(40, 42);
  Tokenizer base = train_bpe(corpus, 60);
  Tokenizer ext = train_extension(base, corpus, 20);
  ASSERT_GT(ext.merges().size(), base.merges().size());

  // No extension merge may repeat a base merge pair.
  std::set<std::pair<TokenId, TokenId>> base_pairs;
  for (const auto& m : base.merges()) base_pairs.insert({m.left, m.right});
  for (std::size_t i = base.merges().size(); i < ext.merges().size(); ++i) {
    const auto& m = ext.merges()[i];
    EXPECT_FALSE(base_pairs.count({m.left, m.right}))
        << "extension merge " << i << " repeats a base pair";
  }

  // The first extension merge must be a pair adjacent somewhere in the
  // base encoding of the corpus.
  const auto& first = ext.merges()[base.merges().size()];
  bool found = false;
  for (const auto& doc : corpus) {
    auto ids = base.encode(doc);
    for (std::size_t i = 0; i + 1 < ids.size() && !found; ++i)
      if (ids[i] == first.left && ids[i + 1] == first.right) found = true;
    if (found) break;
  }
  EXPECT_TRUE(found);
}

TEST(MergeTokenizers, EmptyExtensionChangesNothing) {
  auto corpus = testutil::en_corpus(30, 43);
  Tokenizer base = train_bpe(corpus, 40);
  Tokenizer ext = train_extension(base, corpus, 0);
  auto [merged, report] = merge_tokenizers(base, ext);
  EXPECT_EQ(merged, base);
  EXPECT_EQ(report.added, 0u);
  EXPECT_EQ(report.new_ids_begin, report.new_ids_end);
}

TEST(MergeTokenizers, FullyDuplicateExtensionIsDropped) {
  auto corpus = testutil::en_corpus(30, 44);
  Tokenizer base = train_bpe(corpus, 40);
  // An independently trained tokenizer over the same corpus relearns the
  // same tokens; every one of them is a duplicate.
  Tokenizer ext = train_bpe(corpus, 40);
  auto [merged, report] = merge_tokenizers(base, ext);
  EXPECT_EQ(merged, base);
  EXPECT_EQ(report.added, 0u);
  EXPECT_EQ(report.duplicates_dropped, ext.vocab_size() - 256);
}

TEST(MergeTokenizers, VocabularySizeCountsDistinctByteSequences) {
  auto en = testutil::en_corpus(60, 45);
  std::vector<std::string> overlap(en.begin(), en.begin() + 30);
  Tokenizer base = train_bpe(en, 50);
  Tokenizer ext = train_bpe(overlap, 30);
  ASSERT_EQ(base.vocab_size(), 306u);
  ASSERT_EQ(ext.vocab_size(), 286u);

  std::set<std::string> distinct = nonbyte_token_set(base);
  std::size_t base_distinct = distinct.size();
  for (const auto& t : nonbyte_token_set(ext)) distinct.insert(t);

  auto [merged, report] = merge_tokenizers(base, ext);
  EXPECT_EQ(merged.vocab_size(), 256 + distinct.size());
  EXPECT_EQ(report.added, distinct.size() - base_distinct);
  EXPECT_EQ(report.duplicates_dropped, 30 - report.added);
  EXPECT_EQ(report.new_ids_begin, base.vocab_size());
  EXPECT_EQ(report.new_ids_end, base.vocab_size() + report.added);
}

TEST(MergeTokenizers, PretokenizerMismatchIsAnError) {
  Tokenizer base = Tokenizer::bytes_only();
  Tokenizer ext = Tokenizer::bytes_only(tokswap::PreTokenizer(R"(\s+|\S+)"));
  EXPECT_THROW(
      {
        try {
          merge_tokenizers(base, ext);
        } catch (const std::runtime_error& e) {
          EXPECT_STREQ(e.what(), "pretokenizer mismatch");
          throw;
        }
      },
      std::runtime_error);
}

TEST(MergeTokenizers, BaseIdsAreStable) {
  auto en = testutil::en_corpus(40, 46);
  auto domain = testutil::domain_corpus(40, 47);
  Tokenizer base = train_bpe(en, 80);
  Tokenizer ext = train_extension(base, domain, 60);
  auto [merged, report] = merge_tokenizers(base, ext);
  ASSERT_GE(merged.vocab_size(), base.vocab_size());
  for (TokenId id = 0; id < base.vocab_size(); ++id)
    ASSERT_EQ(merged.vocab().bytes(id), base.vocab().bytes(id)) << "id " << id;
  for (std::size_t i = 0; i < base.merges().size(); ++i)
    ASSERT_EQ(merged.merges()[i], base.merges()[i]) << "rank " << i;
}

TEST(MergeTokenizers, MonotoneCompression) {
  auto en = testutil::en_corpus(60, 48);
  auto domain = testutil::domain_corpus(60, 49);
  Tokenizer base = train_bpe(en, 100);
  Tokenizer ext = train_extension(base, domain, 80);
  auto [merged, report] = merge_tokenizers(base, ext);
  ASSERT_GT(report.added, 0u);

  std::mt19937_64 rng(50);
  for (int i = 0; i < 500; ++i) {
    std::string s = testutil::random_unicode_string(rng, 60);
    ASSERT_LE(merged.encode(s).size(), base.encode(s).size()) << s;
  }
  for (int i = 0; i < 500; ++i) {
    std::mt19937_64 drng(1000 + i);
    std::string s = testutil::domain_line(drng);
    ASSERT_LE(merged.encode(s).size(), base.encode(s).size()) << s;
  }
}

TEST(MergeTokenizers, NeutralOffDomain) {
  auto en = testutil::en_corpus(60, 51);
  auto domain = testutil::domain_corpus(60, 52);
  Tokenizer base = train_bpe(en, 100);
  Tokenizer ext = train_extension(base, domain, 80);
  auto [merged, report] = merge_tokenizers(base, ext);

  // Extension merge pairs, in merged-id space.
  std::set<std::pair<TokenId, TokenId>> ext_pairs;
  for (std::size_t i = base.merges().size(); i < merged.merges().size(); ++i)
    ext_pairs.insert({merged.merges()[i].left, merged.merges()[i].right});

  std::mt19937_64 rng(53);
  for (int i = 0; i < 200; ++i) {
    std::string s = testutil::en_line(rng);
    auto base_ids = base.encode(s);
    bool has_ext_pair = false;
    for (std::size_t k = 0; k + 1 < base_ids.size(); ++k)
      if (ext_pairs.count({base_ids[k], base_ids[k + 1]})) has_ext_pair = true;
    ASSERT_FALSE(has_ext_pair) << "off-domain sample hit an extension pair";
    ASSERT_EQ(merged.encode(s), base_ids) << s;
  }
}

TEST(MergeTokenizers, Idempotent) {
  auto en = testutil::en_corpus(40, 54);
  auto domain = testutil::domain_corpus(40, 55);
  Tokenizer base = train_bpe(en, 60);
  Tokenizer ext = train_extension(base, domain, 40);
  auto [merged, r1] = merge_tokenizers(base, ext);
  auto [merged2, r2] = merge_tokenizers(merged, ext);
  EXPECT_EQ(merged2, merged);
  EXPECT_EQ(r2.added, 0u);
}

TEST(ExtensionReport, JsonShape) {
  ExtensionReport r;
  r.base_size = 300;
  r.requested_new = 30;
  r.added = 26;
  r.duplicates_dropped = 4;
  r.new_ids_begin = 300;
  r.new_ids_end = 326;
  auto j = r.to_json();
  EXPECT_EQ(j["base_size"], 300);
  EXPECT_EQ(j["added"], 26);
  EXPECT_EQ(j["new_token_ids"]["begin"], 300);
  EXPECT_EQ(j["new_token_ids"]["end"], 326);
}

}  // namespace
