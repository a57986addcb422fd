#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qbin/binning.hpp"
#include "qbin/cloudstore.hpp"
#include "qbin/retrieval.hpp"

namespace qbin {

enum class ValueOrder { Lexicographic, Numeric };

/// Compare under the tree's ordering key.
int order_compare(ValueOrder order, const std::string& a, const std::string& b);

struct NodeRef {
  std::uint32_t level = 0;
  bool additional = false;
  std::uint32_t index = 0;

  bool operator==(const NodeRef&) const = default;
  bool operator<(const NodeRef& o) const;
};

/// Bins over the nodes of one tree level; same transposed placement rule as
/// the value-level construction, with node ids instead of values. slot -1 is
/// a fake filler node.
struct LevelBins {
  std::uint64_t x = 0, y = 0;
  std::vector<std::vector<std::int64_t>> sensitive_bins;     // node ids per SB
  std::vector<std::vector<std::int64_t>> nonsensitive_bins;  // node ids per NSB
  // node index -> (nsb bin, slot); the paired SB is the slot by rule R2
  std::map<std::uint32_t, SlotRef> node_position;
};

/// Full binary tree over the ordered unique non-sensitive values, plus the
/// half-shifted "additional" nodes that bridge adjacent subtrees. Bins exist
/// for levels 1 .. height-2 (the root and its children are never binned).
struct RangeTree {
  ValueOrder order = ValueOrder::Lexicographic;
  std::vector<std::string> leaves;  // sorted unique non-sensitive values
  std::uint32_t height = 0;         // root level; padded leaf count = 2^height
  std::size_t padded_size = 0;

  // Sensitive values attached per leaf: associates of the leaf value plus any
  // sensitive-only values that sort into this leaf's gap.
  std::vector<std::vector<std::string>> leaf_sensitive;

  std::map<std::uint32_t, LevelBins> regular;     // level -> bins
  std::map<std::uint32_t, LevelBins> additional;  // level -> bins

  std::uint32_t max_binned_level() const;  // height - 2 (0 when none)

  // Leaf span [first, last] covered by a node.
  std::pair<std::uint32_t, std::uint32_t> node_span(const NodeRef& node) const;
  std::vector<std::string> covered_values(const NodeRef& node) const;
  std::vector<std::string> covered_sensitive(const NodeRef& node) const;
};

RangeTree build_range_tree(const std::vector<std::string>& unique_ns_values,
                           const std::vector<std::string>& sensitive_values,
                           const std::map<std::string, std::string>& association,
                           ValueOrder order = ValueOrder::Lexicographic);

struct NodeFetch {
  NodeRef node;
  std::uint32_t nonsensitive_bin = 0;
  std::uint32_t sensitive_bin = 0;
};

struct RangePlan {
  std::vector<NodeFetch> node_fetches;
  std::vector<std::string> leaf_values;  // routed to selection planning
  std::string from, to;                  // requested range
  bool full_scan = false;                // only set via --allow-full-scan

  bool empty() const { return node_fetches.empty() && leaf_values.empty() && !full_scan; }
};

/// Bottom-up scan for the first binned node covering the whole range.
/// A range only the unbinned top levels can cover is refused unless
/// allow_full_scan is set (it would pull an entire relation).
RangePlan plan_range_best_match(const RangeTree& tree, const std::string& from,
                                const std::string& to, bool allow_full_scan = false);

/// Minimal node cover of the range (greedy over the interval family), using
/// additional nodes when allowed; leaf-level singletons become selection
/// sub-plans.
RangePlan plan_range_least_match(const RangeTree& tree, const std::string& from,
                                 const std::string& to, bool use_additional = true);

struct RangeResult {
  std::vector<TupleRecord> tuples;
  std::uint64_t fetched_sensitive = 0;
  std::uint64_t fetched_nonsensitive = 0;
  std::uint64_t retrieved() const { return fetched_sensitive + fetched_nonsensitive; }
};

/// Executes a range plan: distinct bin fetches are issued once, leaf values
/// go through the selection layout, results are filtered to [from, to].
RangeResult execute_range(const RangePlan& plan, const RangeTree& tree,
                          const BinLayout& selection_layout, CloudStore& store,
                          const OccurrenceHistogram& histogram, const OwnerKey& key,
                          const std::string& attribute);

/// Fake sensitive values the tree bins rely on; they must be outsourced with
/// the relation so level fetches stay width-uniform.
std::vector<FakePadding> range_tree_fake_values(const RangeTree& tree);

}  // namespace qbin
