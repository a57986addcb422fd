#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "qbin/binning.hpp"
#include "qbin/cloudstore.hpp"

namespace qbin {

/// What the honest-but-curious adversary can reconstruct from the log:
/// bins identified by their (stable) request signatures, edges wherever two
/// bins were co-retrieved.
struct SurvivingMatchGraph {
  std::vector<std::string> left;   // sensitive bin signatures
  std::vector<std::string> right;  // non-sensitive bin signatures
  std::set<std::pair<std::uint32_t, std::uint32_t>> edges;
  std::uint64_t paired_queries = 0;
};

SurvivingMatchGraph build_surviving_match_graph(const std::vector<AvEntry>& av_log);

struct BipartiteCheck {
  bool full = true;
  // Missing co-retrievals; meaningful only after a full value sweep.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> dropped_matches;
};

/// Theorem check: after a sweep over every domain value, each sensitive bin
/// must have been co-retrieved with each non-sensitive bin. Expected counts
/// catch bins that never appeared at all.
BipartiteCheck check_full_bipartite(const SurvivingMatchGraph& graph,
                                    std::uint64_t expected_left = 0,
                                    std::uint64_t expected_right = 0);

struct SizeUniformity {
  bool uniform = true;
  std::uint64_t min_returned = 0;
  std::uint64_t max_returned = 0;
  std::uint64_t entries = 0;
};

/// Every sensitive-side fetch must return the same tuple count, otherwise
/// fetch sizes order the bins and the count condition of the security
/// definition breaks.
SizeUniformity check_size_uniformity(const std::vector<AvEntry>& av_log);

struct AllocationQuery {
  std::vector<std::uint32_t> ciphertexts;  // indices of queried ciphertexts
  std::vector<std::uint32_t> cleartexts;   // indices of queried values
};

struct AllocationCount {
  std::uint64_t total = 0;  // allocations consistent with the observed queries
  std::uint64_t fixed = 0;  // of those, allocations with the fixed pairing
};

/// Brute force over all n! bijections values -> ciphertexts, keeping those
/// where every logged query's sensitive bin decrypts to exactly one of the
/// queried cleartext values (the query's hidden target). n is capped at 9.
AllocationCount allocation_count(std::uint32_t n,
                                 const std::vector<AllocationQuery>& queries,
                                 std::uint32_t fixed_ciphertext,
                                 std::uint32_t fixed_value);

/// Sampled variant for n > 9; non-exhaustive, reported with its sample size.
struct AllocationEstimate {
  double probability = 0.0;
  std::uint64_t samples = 0;
  std::uint64_t consistent = 0;
};
AllocationEstimate allocation_estimate(std::uint32_t n,
                                       const std::vector<AllocationQuery>& queries,
                                       std::uint32_t fixed_ciphertext,
                                       std::uint32_t fixed_value,
                                       std::uint64_t samples, std::uint64_t seed);

struct SkewFinding {
  std::map<std::string, std::uint64_t> fetch_counts;  // per sensitive signature
  std::vector<std::string> hot_bins;
  bool flagged = false;
  double skew_ratio = 1.0;
};

/// Flags traces where query frequency concentrates on a strict subset of the
/// sensitive bins (the workload-skew failure mode). Also reports frequent
/// values that appear in the log too rarely to hide (fake-query gap).
SkewFinding check_frequency_exposure(const std::vector<AvEntry>& av_log,
                                     const WorkloadProfile& profile,
                                     double hot_ratio = 2.0);

struct AuditReport {
  bool bipartite_checked = false;
  BipartiteCheck bipartite;
  bool size_checked = false;
  SizeUniformity size;
  bool skew_checked = false;
  SkewFinding skew;
  bool allocation_checked = false;
  AllocationCount allocation;
  std::uint32_t allocation_n = 0;

  bool passed() const;
  std::string to_json() const;
};

}  // namespace qbin
