#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qbin/binning.hpp"
#include "qbin/cloudstore.hpp"
#include "qbin/crypto.hpp"
#include "qbin/relation.hpp"

namespace qbin {

/// A single-value query rewritten to one sensitive and one non-sensitive bin.
/// Empty when the value is unknown to the layout (nothing is fetched; the
/// cloud never sees the miss).
struct QueryPlan {
  std::optional<std::uint32_t> sensitive_bin;
  std::optional<std::uint32_t> nonsensitive_bin;
  std::string target_value;  // owner-only, never sent alone

  bool empty() const { return !sensitive_bin && !nonsensitive_bin; }
};

/// Rule R1: w = SB_i[j] fetches (SB_i, NSB_j). Rule R2: w = NSB_i[j] fetches
/// (NSB_i, SB_j). Values present on both sides resolve to the same pair.
QueryPlan plan_query(const BinLayout& layout, const std::string& value);

/// Cloud-visible request for a plan: every slot of the sensitive bin expands
/// to tokens for all outsourced occurrences (fakes included), the
/// non-sensitive bin to its cleartext value list.
struct QueryRequest {
  std::vector<Token> sensitive_tokens;
  std::vector<std::string> nonsensitive_values;
};

QueryRequest build_request(const BinLayout& layout, const QueryPlan& plan,
                           const OccurrenceHistogram& histogram,
                           const OwnerKey& key, const std::string& attribute);

struct SelectionResult {
  std::vector<TupleRecord> tuples;       // merged, filtered, fakes removed
  std::uint64_t fetched_sensitive = 0;   // pre-filter counts
  std::uint64_t fetched_nonsensitive = 0;
  std::uint64_t retrieved() const { return fetched_sensitive + fetched_nonsensitive; }
};

/// Executes both fetches (sensitive first) under one query_seq, decrypts,
/// and merges: q_merge = union filtered to attr == w with fakes dropped.
SelectionResult execute_selection(const QueryPlan& plan, const BinLayout& layout,
                                  CloudStore& store, const OccurrenceHistogram& histogram,
                                  const OwnerKey& key, const std::string& attribute);

/// Deviant executor used to demonstrate the leakage of not following the
/// retrieval rules: fetches an explicit bin pair instead of R1/R2.
SelectionResult execute_pair(std::uint32_t sensitive_bin, std::uint32_t nonsensitive_bin,
                             const std::string& target, const BinLayout& layout,
                             CloudStore& store, const OccurrenceHistogram& histogram,
                             const OwnerKey& key, const std::string& attribute);

/// Owner-side post-filter: decrypts, keeps exact attribute matches, drops
/// fake tuples.
std::vector<TupleRecord> filter_results(const std::vector<EncryptedRecord>& fetched,
                                        const std::string& value, const OwnerKey& key,
                                        const std::string& attribute);

}  // namespace qbin
