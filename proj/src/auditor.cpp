#include "qbin/auditor.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "qbin/error.hpp"
#include "qbin/rng.hpp"

namespace qbin {

using nlohmann::json;

namespace {

std::string signature_of(const AvEntry& entry) {
  // Requests are stored sorted, so the joined request doubles as a stable
  // bin identity; re-fetching a bin replays the same token/value set.
  std::string sig;
  for (const auto& r : entry.request) {
    sig += r;
    sig.push_back('\x1f');
  }
  return sig;
}

}  // namespace

SurvivingMatchGraph build_surviving_match_graph(const std::vector<AvEntry>& av_log) {
  SurvivingMatchGraph graph;
  std::map<std::string, std::uint32_t> left_ids, right_ids;
  std::map<std::uint64_t, std::pair<std::optional<std::uint32_t>, std::optional<std::uint32_t>>>
      by_seq;

  for (const auto& entry : av_log) {
    if (entry.op != "selection") continue;
    std::string sig = signature_of(entry);
    if (entry.side == Side::Sensitive) {
      auto [it, fresh] = left_ids.try_emplace(sig, static_cast<std::uint32_t>(left_ids.size()));
      if (fresh) graph.left.push_back(sig);
      auto& slot = by_seq[entry.query_seq].first;
      if (slot.has_value()) {
        fail(ErrorKind::Audit, "two sensitive-side entries under one query_seq");
      }
      slot = it->second;
    } else {
      auto [it, fresh] =
          right_ids.try_emplace(sig, static_cast<std::uint32_t>(right_ids.size()));
      if (fresh) graph.right.push_back(sig);
      auto& slot = by_seq[entry.query_seq].second;
      if (slot.has_value()) {
        fail(ErrorKind::Audit, "two non-sensitive-side entries under one query_seq");
      }
      slot = it->second;
    }
  }
  for (const auto& [seq, pair] : by_seq) {
    if (pair.first && pair.second) {
      graph.edges.insert({*pair.first, *pair.second});
      graph.paired_queries++;
    }
  }
  return graph;
}

BipartiteCheck check_full_bipartite(const SurvivingMatchGraph& graph,
                                    std::uint64_t expected_left,
                                    std::uint64_t expected_right) {
  BipartiteCheck check;
  std::uint64_t left = std::max<std::uint64_t>(expected_left, graph.left.size());
  std::uint64_t right = std::max<std::uint64_t>(expected_right, graph.right.size());
  for (std::uint32_t i = 0; i < left; ++i) {
    for (std::uint32_t j = 0; j < right; ++j) {
      if (!graph.edges.count({i, j})) check.dropped_matches.push_back({i, j});
    }
  }
  check.full = check.dropped_matches.empty();
  return check;
}

SizeUniformity check_size_uniformity(const std::vector<AvEntry>& av_log) {
  SizeUniformity result;
  bool first = true;
  for (const auto& entry : av_log) {
    if (entry.side != Side::Sensitive) continue;
    if (entry.op != "selection") continue;
    std::uint64_t n = entry.returned_ids.size();
    if (first) {
      result.min_returned = result.max_returned = n;
      first = false;
    } else {
      result.min_returned = std::min(result.min_returned, n);
      result.max_returned = std::max(result.max_returned, n);
    }
    result.entries++;
  }
  result.uniform = result.entries == 0 || result.min_returned == result.max_returned;
  return result;
}

namespace {

// An allocation assigns cleartext value pi[e] to ciphertext e. A logged QB
// query retrieves one sensitive bin and one non-sensitive bin sharing
// exactly the hidden target, so an allocation is consistent when each
// query's ciphertext set decrypts to exactly one of its cleartext values.
bool consistent(const std::vector<std::uint32_t>& pi,
                const std::vector<AllocationQuery>& queries) {
  for (const auto& q : queries) {
    std::size_t hits = 0;
    for (std::uint32_t e : q.ciphertexts) {
      std::uint32_t v = pi[e];
      if (std::find(q.cleartexts.begin(), q.cleartexts.end(), v) != q.cleartexts.end()) {
        hits++;
      }
    }
    if (hits != 1) return false;
  }
  return true;
}

}  // namespace

AllocationCount allocation_count(std::uint32_t n,
                                 const std::vector<AllocationQuery>& queries,
                                 std::uint32_t fixed_ciphertext, std::uint32_t fixed_value) {
  if (n == 0 || n > 9) {
    fail(ErrorKind::Domain, "allocation_count enumerates up to n = 9");
  }
  for (const auto& q : queries) {
    for (auto e : q.ciphertexts) {
      if (e >= n) fail(ErrorKind::Domain, "ciphertext index out of range");
    }
    for (auto v : q.cleartexts) {
      if (v >= n) fail(ErrorKind::Domain, "value index out of range");
    }
  }
  if (fixed_ciphertext >= n || fixed_value >= n) {
    fail(ErrorKind::Domain, "fixed pairing out of range");
  }

  std::vector<std::uint32_t> pi(n);
  std::iota(pi.begin(), pi.end(), 0);
  AllocationCount out;
  do {
    if (!consistent(pi, queries)) continue;
    out.total++;
    if (pi[fixed_ciphertext] == fixed_value) out.fixed++;
  } while (std::next_permutation(pi.begin(), pi.end()));
  return out;
}

AllocationEstimate allocation_estimate(std::uint32_t n,
                                       const std::vector<AllocationQuery>& queries,
                                       std::uint32_t fixed_ciphertext,
                                       std::uint32_t fixed_value, std::uint64_t samples,
                                       std::uint64_t seed) {
  AllocationEstimate est;
  est.samples = samples;
  Rng rng(seed);
  std::vector<std::uint32_t> pi(n);
  std::uint64_t fixed = 0;
  for (std::uint64_t s = 0; s < samples; ++s) {
    std::iota(pi.begin(), pi.end(), 0);
    rng.shuffle(pi);
    if (!consistent(pi, queries)) continue;
    est.consistent++;
    if (pi[fixed_ciphertext] == fixed_value) fixed++;
  }
  est.probability = est.consistent ? static_cast<double>(fixed) /
                                         static_cast<double>(est.consistent)
                                   : 0.0;
  return est;
}

SkewFinding check_frequency_exposure(const std::vector<AvEntry>& av_log,
                                     const WorkloadProfile& profile, double hot_ratio) {
  SkewFinding finding;
  for (const auto& entry : av_log) {
    if (entry.side != Side::Sensitive || entry.op != "selection") continue;
    finding.fetch_counts[signature_of(entry)]++;
  }
  if (finding.fetch_counts.empty()) return finding;

  std::uint64_t total = 0, max_count = 0;
  std::uint64_t min_count = UINT64_MAX;
  for (const auto& [_, c] : finding.fetch_counts) {
    total += c;
    max_count = std::max(max_count, c);
    min_count = std::min(min_count, c);
  }
  double mean = static_cast<double>(total) / finding.fetch_counts.size();
  finding.skew_ratio =
      min_count == 0 ? static_cast<double>(max_count)
                     : static_cast<double>(max_count) / static_cast<double>(min_count);
  for (const auto& [sig, c] : finding.fetch_counts) {
    if (static_cast<double>(c) > hot_ratio * mean) finding.hot_bins.push_back(sig);
  }
  // A hot strict subset singles out the bins serving the frequent keywords;
  // heat spread over every bin (or none) does not.
  finding.flagged =
      !finding.hot_bins.empty() && finding.hot_bins.size() < finding.fetch_counts.size();
  (void)profile;
  return finding;
}

bool AuditReport::passed() const {
  if (bipartite_checked && !bipartite.full) return false;
  if (size_checked && !size.uniform) return false;
  if (skew_checked && skew.flagged) return false;
  return true;
}

std::string AuditReport::to_json() const {
  json j;
  if (bipartite_checked) {
    json d = json::array();
    for (auto [a, b] : bipartite.dropped_matches) d.push_back({a, b});
    j["bipartite"] = {{"full", bipartite.full}, {"dropped_matches", d}};
  }
  if (size_checked) {
    j["size"] = {{"uniform", size.uniform},
                 {"min_returned", size.min_returned},
                 {"max_returned", size.max_returned},
                 {"entries", size.entries}};
  }
  if (skew_checked) {
    j["skew"] = {{"flagged", skew.flagged},
                 {"skew_ratio", skew.skew_ratio},
                 {"hot_bins", skew.hot_bins.size()},
                 {"bins_seen", skew.fetch_counts.size()}};
  }
  if (allocation_checked) {
    j["allocation"] = {{"n", allocation_n},
                       {"total", allocation.total},
                       {"fixed", allocation.fixed}};
  }
  j["passed"] = passed();
  return j.dump(2) + "\n";
}

}  // namespace qbin
