#include "qbin/range.hpp"

#include <algorithm>
#include <cstdlib>
#include <set>

#include "qbin/error.hpp"

namespace qbin {

namespace {

bool numeric_value(const std::string& s, long double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = strtold(s.c_str(), &end);
  return end && *end == '\0';
}

constexpr std::uint32_t kTreeFakeRound = 50000;

}  // namespace

int order_compare(ValueOrder order, const std::string& a, const std::string& b) {
  if (order == ValueOrder::Numeric) {
    long double na, nb;
    if (numeric_value(a, na) && numeric_value(b, nb)) {
      if (na < nb) return -1;
      if (na > nb) return 1;
      return a.compare(b);  // stable among equal numerics ("1" vs "1.0")
    }
    fail(ErrorKind::Domain, "value is not numeric under the numeric ordering key");
  }
  return a.compare(b);
}

bool NodeRef::operator<(const NodeRef& o) const {
  if (level != o.level) return level < o.level;
  if (additional != o.additional) return additional < o.additional;
  return index < o.index;
}

std::uint32_t RangeTree::max_binned_level() const {
  return height >= 3 ? height - 2 : 0;
}

std::pair<std::uint32_t, std::uint32_t> RangeTree::node_span(const NodeRef& node) const {
  const std::uint32_t width = 1u << node.level;
  std::uint32_t first = node.index * width + (node.additional ? width / 2 : 0);
  return {first, first + width - 1};
}

std::vector<std::string> RangeTree::covered_values(const NodeRef& node) const {
  auto [first, last] = node_span(node);
  std::vector<std::string> out;
  for (std::uint32_t p = first; p <= last && p < leaves.size(); ++p) {
    out.push_back(leaves[p]);
  }
  return out;
}

std::vector<std::string> RangeTree::covered_sensitive(const NodeRef& node) const {
  auto [first, last] = node_span(node);
  std::vector<std::string> out;
  for (std::uint32_t p = first; p <= last && p < leaf_sensitive.size(); ++p) {
    out.insert(out.end(), leaf_sensitive[p].begin(), leaf_sensitive[p].end());
  }
  return out;
}

namespace {

// Same construction as the value-level base case, over node ids: the i-th
// (1-based) id goes to sensitive bin i mod x, and each id's non-sensitive
// face sits at the transposed position. node ids past `real_count` are
// fillers.
LevelBins build_level_bins(std::uint32_t node_count, std::uint32_t real_count) {
  LevelBins bins;
  Factors f = approx_sq_factors(node_count);
  bins.x = f.x;
  bins.y = f.y;
  bins.sensitive_bins.assign(f.x, {});
  for (std::uint32_t i = 1; i <= node_count; ++i) {
    bins.sensitive_bins[i % f.x].push_back(static_cast<std::int64_t>(i - 1));
  }
  std::uint64_t ns_bins = node_count / f.x;
  bins.nonsensitive_bins.assign(ns_bins, std::vector<std::int64_t>(f.x, -1));
  for (std::size_t i = 0; i < bins.sensitive_bins.size(); ++i) {
    for (std::size_t j = 0; j < bins.sensitive_bins[i].size(); ++j) {
      bins.nonsensitive_bins[j][i] = bins.sensitive_bins[i][j];
    }
  }
  for (std::size_t b = 0; b < bins.nonsensitive_bins.size(); ++b) {
    for (std::size_t s = 0; s < bins.nonsensitive_bins[b].size(); ++s) {
      std::int64_t id = bins.nonsensitive_bins[b][s];
      if (id >= 0 && id < real_count) {
        bins.node_position[static_cast<std::uint32_t>(id)] =
            SlotRef{static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(s)};
      }
    }
  }
  return bins;
}

}  // namespace

RangeTree build_range_tree(const std::vector<std::string>& unique_ns_values,
                           const std::vector<std::string>& sensitive_values,
                           const std::map<std::string, std::string>& association,
                           ValueOrder order) {
  RangeTree tree;
  tree.order = order;
  tree.leaves = unique_ns_values;
  std::sort(tree.leaves.begin(), tree.leaves.end(),
            [&](const std::string& a, const std::string& b) {
              return order_compare(order, a, b) < 0;
            });
  for (std::size_t i = 1; i < tree.leaves.size(); ++i) {
    if (tree.leaves[i] == tree.leaves[i - 1]) {
      fail(ErrorKind::Usage, "duplicate value '" + tree.leaves[i] + "' in range domain");
    }
  }

  tree.padded_size = 1;
  tree.height = 0;
  while (tree.padded_size < std::max<std::size_t>(tree.leaves.size(), 1)) {
    tree.padded_size <<= 1;
    tree.height++;
  }

  // Sensitive values ride on leaves: associates on their own leaf, values
  // without a non-sensitive counterpart on the predecessor leaf.
  tree.leaf_sensitive.assign(tree.leaves.size(), {});
  std::map<std::string, std::string> ns_to_s;
  for (const auto& [s, ns] : association) ns_to_s[ns] = s;
  for (std::size_t i = 0; i < tree.leaves.size(); ++i) {
    auto it = ns_to_s.find(tree.leaves[i]);
    if (it != ns_to_s.end()) tree.leaf_sensitive[i].push_back(it->second);
  }
  if (!tree.leaves.empty()) {
    for (const auto& s : sensitive_values) {
      if (association.count(s)) continue;
      // predecessor leaf; values before the first leaf go to leaf 0
      auto it = std::upper_bound(tree.leaves.begin(), tree.leaves.end(), s,
                                 [&](const std::string& a, const std::string& b) {
                                   return order_compare(order, a, b) < 0;
                                 });
      std::size_t pos = it == tree.leaves.begin()
                            ? 0
                            : static_cast<std::size_t>(it - tree.leaves.begin()) - 1;
      tree.leaf_sensitive[pos].push_back(s);
    }
  }

  const std::uint32_t top = tree.max_binned_level();
  for (std::uint32_t level = 1; level <= top; ++level) {
    std::uint32_t count = static_cast<std::uint32_t>(tree.padded_size >> level);
    tree.regular[level] = build_level_bins(count, count);
    if (count >= 2) {
      // count-1 bridging nodes plus one filler to keep the matrix full
      tree.additional[level] = build_level_bins(count, count - 1);
    }
  }
  return tree;
}

namespace {

struct ResolvedRange {
  bool empty = true;
  std::uint32_t lo = 0;
  std::uint32_t hi = 0;
};

// Leaf span the plan must cover: leaves holding values in [from, to], widened
// to the home leaves of sensitive-only values inside the range.
ResolvedRange resolve_range(const RangeTree& tree, const std::string& from,
                            const std::string& to) {
  if (order_compare(tree.order, from, to) > 0) {
    fail(ErrorKind::Usage, "range bounds out of order");
  }
  ResolvedRange r;
  if (tree.leaves.empty()) return r;
  auto cmp = [&](const std::string& a, const std::string& b) {
    return order_compare(tree.order, a, b) < 0;
  };
  auto lo_it = std::lower_bound(tree.leaves.begin(), tree.leaves.end(), from, cmp);
  auto hi_it = std::upper_bound(tree.leaves.begin(), tree.leaves.end(), to, cmp);
  std::int64_t lo = lo_it - tree.leaves.begin();
  std::int64_t hi = static_cast<std::int64_t>(hi_it - tree.leaves.begin()) - 1;

  // A sensitive-only value in range may live on the leaf just below `from`.
  for (std::size_t p = 0; p < tree.leaf_sensitive.size(); ++p) {
    for (const auto& s : tree.leaf_sensitive[p]) {
      if (order_compare(tree.order, s, from) >= 0 &&
          order_compare(tree.order, s, to) <= 0) {
        lo = std::min<std::int64_t>(lo, static_cast<std::int64_t>(p));
        hi = std::max<std::int64_t>(hi, static_cast<std::int64_t>(p));
      }
    }
  }
  if (lo > hi) return r;
  r.empty = false;
  r.lo = static_cast<std::uint32_t>(lo);
  r.hi = static_cast<std::uint32_t>(hi);
  return r;
}

NodeFetch fetch_for(const RangeTree& tree, const NodeRef& node) {
  const LevelBins& bins = node.additional ? tree.additional.at(node.level)
                                          : tree.regular.at(node.level);
  auto it = bins.node_position.find(node.index);
  if (it == bins.node_position.end()) {
    fail(ErrorKind::Integrity, "range node has no bin position");
  }
  return NodeFetch{node, it->second.bin, it->second.slot};
}

}  // namespace

RangePlan plan_range_best_match(const RangeTree& tree, const std::string& from,
                                const std::string& to, bool allow_full_scan) {
  RangePlan plan;
  plan.from = from;
  plan.to = to;
  ResolvedRange r = resolve_range(tree, from, to);
  if (r.empty) return plan;
  if (r.lo == r.hi) {
    // Degenerate range; selection planning covers it.
    plan.leaf_values.push_back(tree.leaves[r.lo]);
    for (const auto& s : tree.leaf_sensitive[r.lo]) {
      if (order_compare(tree.order, s, from) >= 0 &&
          order_compare(tree.order, s, to) <= 0 && s != tree.leaves[r.lo]) {
        plan.leaf_values.push_back(s);
      }
    }
    return plan;
  }

  for (std::uint32_t level = 1; level <= tree.max_binned_level(); ++level) {
    if (!tree.regular.count(level)) continue;
    if ((r.lo >> level) == (r.hi >> level)) {
      NodeRef node{level, false, r.lo >> level};
      plan.node_fetches.push_back(fetch_for(tree, node));
      return plan;
    }
  }
  if (allow_full_scan) {
    plan.full_scan = true;
    return plan;
  }
  fail(ErrorKind::Capacity,
       "best-match too wide: only the unbinned top of the tree covers this range; "
       "use the least-match strategy or --allow-full-scan");
}

RangePlan plan_range_least_match(const RangeTree& tree, const std::string& from,
                                 const std::string& to, bool use_additional) {
  RangePlan plan;
  plan.from = from;
  plan.to = to;
  ResolvedRange r = resolve_range(tree, from, to);
  if (r.empty) return plan;

  std::vector<NodeRef> chosen;
  std::uint32_t p = r.lo;
  while (p <= r.hi) {
    // Widest in-range node covering p; the leaf singleton always qualifies.
    NodeRef best{0, false, p};
    std::uint32_t best_end = p;
    for (std::uint32_t level = 1; level <= tree.max_binned_level(); ++level) {
      const std::uint32_t width = 1u << level;
      if (tree.regular.count(level)) {
        std::uint32_t i = p >> level;
        std::uint32_t first = i * width;
        std::uint32_t last = first + width - 1;
        if (first >= r.lo && last <= r.hi && last > best_end) {
          best = NodeRef{level, false, i};
          best_end = last;
        }
      }
      if (use_additional && tree.additional.count(level) && p >= width / 2) {
        std::uint32_t shifted = p - width / 2;
        std::uint32_t i = shifted >> level;
        std::uint32_t first = i * width + width / 2;
        std::uint32_t last = first + width - 1;
        std::uint32_t real_nodes = static_cast<std::uint32_t>(tree.padded_size >> level) - 1;
        if (i < real_nodes && first <= p && p <= last && first >= r.lo && last <= r.hi &&
            last > best_end) {
          best = NodeRef{level, true, i};
          best_end = last;
        }
      }
    }
    if (best.level == 0) {
      if (p < tree.leaves.size()) {
        plan.leaf_values.push_back(tree.leaves[p]);
        for (const auto& s : tree.leaf_sensitive[p]) {
          if (s != tree.leaves[p]) plan.leaf_values.push_back(s);
        }
      }
      p = best_end + 1;
    } else {
      chosen.push_back(best);
      p = best_end + 1;
    }
  }
  for (const auto& node : chosen) plan.node_fetches.push_back(fetch_for(tree, node));
  return plan;
}

namespace {

std::vector<std::string> node_fake_values(const RangeTree& tree, const NodeRef& node) {
  // Sensitive-side padding: every binned node presents the same width.
  std::vector<std::string> fakes;
  std::size_t have = tree.covered_sensitive(node).size();
  std::size_t width = 1u << node.level;
  for (std::size_t k = have; k < width; ++k) {
    fakes.push_back(make_fake_value(node.index, static_cast<std::uint32_t>(k),
                                    kTreeFakeRound + node.level * 2 +
                                        (node.additional ? 1 : 0)));
  }
  return fakes;
}

}  // namespace

std::vector<FakePadding> range_tree_fake_values(const RangeTree& tree) {
  std::vector<FakePadding> out;
  auto emit_level = [&](std::uint32_t level, bool additional, const LevelBins& bins) {
    std::uint32_t node_count = static_cast<std::uint32_t>(tree.padded_size >> level);
    std::uint32_t real = additional ? node_count - 1 : node_count;
    for (std::uint32_t i = 0; i < node_count; ++i) {
      NodeRef node{level, additional, i};
      if (i < real) {
        for (auto& f : node_fake_values(tree, node)) out.push_back({f, 1});
      } else {
        // filler node: full width of fakes
        for (std::uint32_t k = 0; k < (1u << level); ++k) {
          out.push_back({make_fake_value(i, k, kTreeFakeRound + level * 2 + 1), 1});
        }
      }
    }
    (void)bins;
  };
  for (const auto& [level, bins] : tree.regular) emit_level(level, false, bins);
  for (const auto& [level, bins] : tree.additional) emit_level(level, true, bins);
  return out;
}

RangeResult execute_range(const RangePlan& plan, const RangeTree& tree,
                          const BinLayout& selection_layout, CloudStore& store,
                          const OccurrenceHistogram& histogram, const OwnerKey& key,
                          const std::string& attribute) {
  RangeResult result;
  std::vector<TupleRecord> collected;

  auto in_range = [&](const std::string& v) {
    return order_compare(tree.order, v, plan.from) >= 0 &&
           order_compare(tree.order, v, plan.to) <= 0;
  };

  if (plan.full_scan) {
    std::uint64_t seq = store.begin_query();
    auto enc = store.fetch_all_encrypted("sensitive", seq, "range");
    result.fetched_sensitive += enc.size();
    for (const auto& rec : enc) {
      auto plainv = aead_decrypt(key, rec.ciphertext);
      if (!plainv) fail(ErrorKind::Integrity, "record failed authentication");
      auto [row, fake] = decode_tuple(*plainv);
      if (!fake && in_range(row.attr(attribute))) collected.push_back(std::move(row));
    }
    auto rows = store.fetch_all_cleartext("nonsensitive", seq, "range");
    result.fetched_nonsensitive += rows.size();
    for (auto& row : rows) {
      if (in_range(row.attr(attribute))) collected.push_back(std::move(row));
    }
  }

  std::set<std::tuple<std::uint32_t, bool, char, std::uint32_t>> done;
  for (const auto& fetch : plan.node_fetches) {
    const LevelBins& bins = fetch.node.additional ? tree.additional.at(fetch.node.level)
                                                  : tree.regular.at(fetch.node.level);
    std::uint64_t seq = store.begin_query();

    auto sb_key = std::make_tuple(fetch.node.level, fetch.node.additional, 'S',
                                  fetch.sensitive_bin);
    if (done.insert(sb_key).second) {
      std::vector<Token> tokens;
      for (std::int64_t id : bins.sensitive_bins[fetch.sensitive_bin]) {
        NodeRef member{fetch.node.level, fetch.node.additional,
                       static_cast<std::uint32_t>(id)};
        std::uint32_t node_count =
            static_cast<std::uint32_t>(tree.padded_size >> fetch.node.level);
        std::uint32_t real = fetch.node.additional ? node_count - 1 : node_count;
        std::vector<std::string> values;
        if (member.index < real) {
          values = tree.covered_sensitive(member);
          auto fakes = node_fake_values(tree, member);
          values.insert(values.end(), fakes.begin(), fakes.end());
        } else {
          for (std::uint32_t k = 0; k < (1u << member.level); ++k) {
            values.push_back(make_fake_value(
                member.index, k, kTreeFakeRound + member.level * 2 + 1));
          }
        }
        for (const auto& v : values) {
          std::uint64_t n = histogram.count(attribute, v);
          for (std::uint64_t occ = 1; occ <= n; ++occ) {
            tokens.push_back(occurrence_token(key, attribute, v, occ));
          }
        }
      }
      auto fetched = store.fetch_sensitive("sensitive", tokens, seq, "range");
      result.fetched_sensitive += fetched.size();
      for (const auto& rec : fetched) {
        auto plainv = aead_decrypt(key, rec.ciphertext);
        if (!plainv) fail(ErrorKind::Integrity, "record failed authentication");
        auto [row, fake] = decode_tuple(*plainv);
        if (!fake && in_range(row.attr(attribute))) collected.push_back(std::move(row));
      }
    }

    auto nsb_key = std::make_tuple(fetch.node.level, fetch.node.additional, 'N',
                                   fetch.nonsensitive_bin);
    if (done.insert(nsb_key).second) {
      std::vector<std::string> values;
      for (std::int64_t id : bins.nonsensitive_bins[fetch.nonsensitive_bin]) {
        std::uint32_t node_count =
            static_cast<std::uint32_t>(tree.padded_size >> fetch.node.level);
        std::uint32_t real = fetch.node.additional ? node_count - 1 : node_count;
        if (id < 0 || id >= real) continue;  // filler: nothing to say in cleartext
        NodeRef member{fetch.node.level, fetch.node.additional,
                       static_cast<std::uint32_t>(id)};
        auto covered = tree.covered_values(member);
        values.insert(values.end(), covered.begin(), covered.end());
      }
      auto rows = store.fetch_nonsensitive("nonsensitive", attribute, values, seq, "range");
      result.fetched_nonsensitive += rows.size();
      for (auto& row : rows) {
        if (in_range(row.attr(attribute))) collected.push_back(std::move(row));
      }
    }
  }

  for (const auto& value : plan.leaf_values) {
    QueryPlan qp = plan_query(selection_layout, value);
    SelectionResult sel =
        execute_selection(qp, selection_layout, store, histogram, key, attribute);
    result.fetched_sensitive += sel.fetched_sensitive;
    result.fetched_nonsensitive += sel.fetched_nonsensitive;
    for (auto& row : sel.tuples) {
      if (in_range(row.attr(attribute))) collected.push_back(std::move(row));
    }
  }

  std::sort(collected.begin(), collected.end(),
            [](const TupleRecord& a, const TupleRecord& b) { return a.tuple_id < b.tuple_id; });
  collected.erase(std::unique(collected.begin(), collected.end(),
                              [](const TupleRecord& a, const TupleRecord& b) {
                                return a.tuple_id == b.tuple_id;
                              }),
                  collected.end());
  result.tuples = std::move(collected);
  return result;
}

}  // namespace qbin
