#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tokswap/bytebpe.hpp"
#include "tokswap/common.hpp"
#include "tokswap/matrix.hpp"

namespace tokswap {

// How one new-vocabulary row is derived from old-model rows: either the new
// token exists in the old vocabulary (copy its row) or it is decomposed by
// the old tokenizer (average the rows of that decomposition).
struct InitRule {
  enum class Kind { kCopy, kAverage };

  TokenId new_id = 0;
  Kind kind = Kind::kCopy;
  std::vector<TokenId> old_ids;  // exactly one entry for kCopy

  bool operator==(const InitRule&) const = default;
};

struct RemapPlan {
  std::size_t old_vocab_size = 0;
  std::size_t new_vocab_size = 0;
  std::vector<InitRule> rules;  // one per new id, sorted by new_id
};

// For each new token: Copy if its byte sequence exists in the old
// vocabulary, otherwise Average over the old tokenizer's merge-level
// encoding of those bytes. Token bytes are encoded as a single chunk (they
// may be partial UTF-8, so re-running pre-tokenization is not meaningful).
inline RemapPlan build_remap_plan(const Tokenizer& old_tok,
                                  const Tokenizer& new_tok) {
  RemapPlan plan;
  plan.old_vocab_size = old_tok.vocab_size();
  plan.new_vocab_size = new_tok.vocab_size();
  plan.rules.reserve(plan.new_vocab_size);
  for (TokenId id = 0; id < new_tok.vocab_size(); ++id) {
    const std::string& bytes = new_tok.vocab().bytes(id);
    InitRule rule;
    rule.new_id = id;
    if (auto old_id = old_tok.vocab().find(bytes)) {
      rule.kind = InitRule::Kind::kCopy;
      rule.old_ids = {*old_id};
    } else {
      rule.kind = InitRule::Kind::kAverage;
      rule.old_ids = old_tok.encode_bytes(bytes);
    }
    plan.rules.push_back(std::move(rule));
  }
  return plan;
}

inline void validate_plan(const RemapPlan& plan) {
  if (plan.rules.size() != plan.new_vocab_size) fail("incomplete plan");
  for (std::size_t i = 0; i < plan.rules.size(); ++i) {
    const InitRule& r = plan.rules[i];
    if (r.new_id != i) fail("incomplete plan");
    if (r.old_ids.empty()) fail("malformed plan: empty rule");
    if (r.kind == InitRule::Kind::kCopy && r.old_ids.size() != 1)
      fail("malformed plan: copy rule with multiple sources");
    for (TokenId old_id : r.old_ids)
      if (old_id >= plan.old_vocab_size)
        fail("malformed plan: old id out of range");
  }
}

namespace detail {

template <typename T>
Matrix<T> remap_rows(const RemapPlan& plan, const Matrix<T>& old_rows) {
  Matrix<T> out(plan.new_vocab_size, old_rows.cols);
  for (const InitRule& rule : plan.rules) {
    T* dst = out.row(rule.new_id);
    if (rule.kind == InitRule::Kind::kCopy) {
      const T* src = old_rows.row(rule.old_ids[0]);
      std::copy(src, src + old_rows.cols, dst);
    } else {
      // Mean accumulated in double regardless of T.
      for (std::size_t j = 0; j < old_rows.cols; ++j) {
        double sum = 0.0;
        for (TokenId old_id : rule.old_ids) sum += old_rows.at(old_id, j);
        dst[j] = static_cast<T>(sum / static_cast<double>(rule.old_ids.size()));
      }
    }
  }
  return out;
}

}  // namespace detail

// Build the new embedding and head matrices. The two matrices share the
// rules but are remapped independently; no weight tying is assumed.
template <typename T>
std::pair<Matrix<T>, Matrix<T>> apply_remap(const RemapPlan& plan,
                                            const Matrix<T>& old_embedding,
                                            const Matrix<T>& old_head) {
  validate_plan(plan);
  if (old_embedding.rows != plan.old_vocab_size ||
      old_head.rows != plan.old_vocab_size)
    fail("plan/matrix row count mismatch");
  return {detail::remap_rows(plan, old_embedding),
          detail::remap_rows(plan, old_head)};
}

inline nlohmann::json plan_to_json(const RemapPlan& plan) {
  nlohmann::json rules = nlohmann::json::array();
  for (const InitRule& r : plan.rules) {
    if (r.kind == InitRule::Kind::kCopy)
      rules.push_back({{"new_id", r.new_id}, {"copy", r.old_ids[0]}});
    else
      rules.push_back({{"new_id", r.new_id}, {"average", r.old_ids}});
  }
  return {{"format_version", 1},
          {"old_vocab_size", plan.old_vocab_size},
          {"new_vocab_size", plan.new_vocab_size},
          {"rules", std::move(rules)}};
}

inline RemapPlan plan_from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail("malformed plan file: not an object");
  if (!j.contains("format_version") || !j["format_version"].is_number_integer())
    fail("malformed plan file: missing format_version");
  if (j["format_version"].get<int>() != 1)
    fail("unsupported format_version: " +
         std::to_string(j["format_version"].get<int>()));
  try {
    RemapPlan plan;
    plan.old_vocab_size = j.at("old_vocab_size").get<std::size_t>();
    plan.new_vocab_size = j.at("new_vocab_size").get<std::size_t>();
    for (const auto& entry : j.at("rules")) {
      InitRule rule;
      rule.new_id = entry.at("new_id").get<TokenId>();
      if (entry.contains("copy")) {
        rule.kind = InitRule::Kind::kCopy;
        rule.old_ids = {entry.at("copy").get<TokenId>()};
      } else {
        rule.kind = InitRule::Kind::kAverage;
        rule.old_ids = entry.at("average").get<std::vector<TokenId>>();
      }
      plan.rules.push_back(std::move(rule));
    }
    validate_plan(plan);
    return plan;
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("malformed plan file: ") + e.what());
  }
}

inline void save_plan(const std::filesystem::path& path,
                      const RemapPlan& plan) {
  write_file_atomic(path, plan_to_json(plan).dump(2) + "\n");
}

inline RemapPlan load_plan(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    fail(std::string("malformed plan file: ") + e.what());
  }
  return plan_from_json(j);
}

}  // namespace tokswap
