#include "qbin/binning.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "qbin/crypto.hpp"
#include "qbin/error.hpp"
#include "qbin/rng.hpp"

namespace qbin {

using nlohmann::json;

Factors approx_sq_factors(std::uint64_t n) {
  if (n == 0) fail(ErrorKind::Domain, "approx_sq_factors: n must be >= 1");
  std::uint64_t root = static_cast<std::uint64_t>(std::sqrt(static_cast<double>(n)));
  while (root * root > n) --root;
  while ((root + 1) * (root + 1) <= n) ++root;
  for (std::uint64_t d = root; d >= 1; --d) {
    if (n % d == 0) return Factors{n / d, d};
  }
  return Factors{n, 1};
}

std::uint64_t closest_square(std::uint64_t n) {
  if (n == 0) fail(ErrorKind::Domain, "closest_square: n must be >= 1");
  std::uint64_t root = static_cast<std::uint64_t>(std::sqrt(static_cast<double>(n)));
  while (root * root > n) --root;
  while ((root + 1) * (root + 1) <= n) ++root;
  return root * root;
}

const char* bin_mode_name(BinMode mode) {
  switch (mode) {
    case BinMode::Base: return "base";
    case BinMode::Extended: return "extended";
    case BinMode::Workload: return "workload";
    case BinMode::Padded: return "padded";
  }
  return "base";
}

BinMode bin_mode_from_name(const std::string& name) {
  if (name == "base") return BinMode::Base;
  if (name == "extended") return BinMode::Extended;
  if (name == "workload") return BinMode::Workload;
  if (name == "padded") return BinMode::Padded;
  fail(ErrorKind::Usage, "unknown bin mode '" + name + "'");
}

namespace {

constexpr char kFakePrefix[] = "\x01qb-fake|";

std::vector<std::string> apply_seed(std::vector<std::string> values, ShuffleSeed seed) {
  if (seed && *seed != 0) {
    Rng rng(*seed);
    rng.shuffle(values);
  }
  return values;
}

void check_unique(const std::vector<std::string>& values, const char* what) {
  std::set<std::string> seen;
  for (const auto& v : values) {
    if (!seen.insert(v).second) {
      fail(ErrorKind::Usage, std::string(what) + " value '" + v + "' listed twice");
    }
  }
}

void check_association(const std::vector<std::string>& sensitive,
                       const std::vector<std::string>& nonsensitive,
                       const std::map<std::string, std::string>& association) {
  std::set<std::string> s_set(sensitive.begin(), sensitive.end());
  std::set<std::string> ns_set(nonsensitive.begin(), nonsensitive.end());
  std::set<std::string> targets;
  for (const auto& [s, ns] : association) {
    if (!s_set.count(s)) {
      fail(ErrorKind::Usage, "association source '" + s + "' is not a sensitive value");
    }
    if (!ns_set.count(ns)) {
      fail(ErrorKind::Usage, "association target '" + ns + "' is not a non-sensitive value");
    }
    if (!targets.insert(ns).second) {
      fail(ErrorKind::Usage,
           "association is not 1:1 at '" + ns + "'; use the padded mode for "
           "multi-tuple values");
    }
  }
}

// Round-robin placement of the factored counterpart side: the i-th (1-based)
// value goes to bin i mod bin_count, appended in arrival order.
std::vector<std::vector<std::string>> round_robin(const std::vector<std::string>& values,
                                                  std::uint64_t bin_count) {
  std::vector<std::vector<std::string>> bins(bin_count);
  for (std::size_t i = 1; i <= values.size(); ++i) {
    bins[i % bin_count].push_back(values[i - 1]);
  }
  return bins;
}

// Places associates at transposed positions (value at bin i slot j puts its
// associate at bin j slot i of the other side) and fills leftovers into the
// lowest empty slots.
std::vector<std::vector<std::string>> place_counterpart(
    const std::vector<std::vector<std::string>>& placed_bins,
    const std::map<std::string, std::string>& assoc,
    const std::vector<std::string>& counterpart_values, std::uint64_t bin_count,
    std::uint64_t capacity) {
  std::vector<std::vector<std::optional<std::string>>> slots(
      bin_count, std::vector<std::optional<std::string>>(capacity));

  std::set<std::string> used;
  for (std::size_t i = 0; i < placed_bins.size(); ++i) {
    for (std::size_t j = 0; j < placed_bins[i].size(); ++j) {
      auto it = assoc.find(placed_bins[i][j]);
      if (it == assoc.end()) continue;
      if (j >= bin_count || i >= capacity) {
        fail(ErrorKind::Capacity, "association placement out of bounds");
      }
      slots[j][i] = it->second;
      used.insert(it->second);
    }
  }

  std::size_t bin = 0, slot = 0;
  auto advance_to_empty = [&] {
    while (bin < bin_count && slots[bin][slot].has_value()) {
      if (++slot == capacity) { slot = 0; ++bin; }
    }
  };
  for (const auto& v : counterpart_values) {
    if (used.count(v)) continue;
    advance_to_empty();
    if (bin >= bin_count) fail(ErrorKind::Capacity, "non-sensitive bins overflow");
    slots[bin][slot] = v;
  }

  std::vector<std::vector<std::string>> bins(bin_count);
  for (std::size_t b = 0; b < bin_count; ++b) {
    for (std::size_t s = 0; s < capacity; ++s) {
      if (!slots[b][s]) {
        // Only trailing slots of the trailing bins may stay empty.
        for (std::size_t s2 = s; s2 < capacity; ++s2) {
          if (slots[b][s2]) fail(ErrorKind::Capacity, "hole in counterpart bin");
        }
        break;
      }
      bins[b].push_back(*slots[b][s]);
    }
  }
  return bins;
}

// Pads sensitive bins with fake markers up to the largest occupancy so every
// sensitive fetch has the same width.
void pad_sensitive(BinLayout& layout) {
  layout.fake_padding.assign(layout.sensitive_bins.size(), {});
  layout.bin_tuple_totals.assign(layout.sensitive_bins.size(), 0);
  std::size_t max_slots = 0;
  for (const auto& bin : layout.sensitive_bins) max_slots = std::max(max_slots, bin.size());
  for (std::size_t b = 0; b < layout.sensitive_bins.size(); ++b) {
    std::uint32_t ordinal = 0;
    for (std::size_t k = layout.sensitive_bins[b].size(); k < max_slots; ++k) {
      layout.fake_padding[b].push_back(
          {make_fake_value(static_cast<std::uint32_t>(b), ordinal++), 1});
    }
    layout.bin_tuple_totals[b] =
        layout.sensitive_bins[b].size() + layout.fake_padding[b].size();
  }
}

std::map<std::string, std::string> invert(const std::map<std::string, std::string>& m) {
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : m) out[v] = k;
  return out;
}

BinLayout base_construction(const std::vector<std::string>& sensitive_values,
                            const std::vector<std::string>& nonsensitive_values,
                            const std::map<std::string, std::string>& association,
                            ShuffleSeed seed, BinMode mode) {
  check_unique(sensitive_values, "sensitive");
  check_unique(nonsensitive_values, "non-sensitive");
  check_association(sensitive_values, nonsensitive_values, association);

  BinLayout layout;
  layout.mode = mode;
  layout.seed = seed;
  layout.association = association;

  if (nonsensitive_values.empty()) {
    // Degenerate: nothing on the cleartext side, bins exist only to group
    // the encrypted values.
    if (sensitive_values.empty()) return layout;
    Factors f = approx_sq_factors(sensitive_values.size());
    layout.x = f.x;
    layout.y = f.y;
    layout.sensitive_bins = round_robin(apply_seed(sensitive_values, seed), f.x);
    pad_sensitive(layout);
    return layout;
  }

  if (sensitive_values.size() > nonsensitive_values.size()) {
    fail(ErrorKind::Capacity,
         "|S| > |NS|: invoke the reversed construction (create_bins swaps roles)");
  }

  Factors f = approx_sq_factors(nonsensitive_values.size());
  layout.x = f.x;
  layout.y = f.y;

  if (sensitive_values.empty()) {
    // All-cleartext relation: queries touch the non-sensitive store only.
    std::uint64_t ns_bins = (nonsensitive_values.size() + f.x - 1) / f.x;
    layout.nonsensitive_bins =
        place_counterpart({}, association, nonsensitive_values, ns_bins, f.x);
    pad_sensitive(layout);
    return layout;
  }

  layout.sensitive_bins = round_robin(apply_seed(sensitive_values, seed), f.x);
  for (const auto& bin : layout.sensitive_bins) {
    if (bin.size() > f.y) {
      fail(ErrorKind::Capacity, "sensitive bin exceeds capacity y");
    }
  }
  std::uint64_t ns_bin_count = (nonsensitive_values.size() + f.x - 1) / f.x;
  layout.nonsensitive_bins = place_counterpart(layout.sensitive_bins, association,
                                               nonsensitive_values, ns_bin_count, f.x);
  pad_sensitive(layout);
  layout.validate();
  return layout;
}

BinLayout reversed_construction(const std::vector<std::string>& sensitive_values,
                                const std::vector<std::string>& nonsensitive_values,
                                const std::map<std::string, std::string>& association,
                                ShuffleSeed seed, BinMode mode) {
  check_unique(sensitive_values, "sensitive");
  check_unique(nonsensitive_values, "non-sensitive");
  check_association(sensitive_values, nonsensitive_values, association);

  BinLayout layout;
  layout.mode = mode;
  layout.seed = seed;
  layout.roles_swapped = true;
  layout.association = association;

  Factors f = approx_sq_factors(sensitive_values.size());
  layout.x = f.x;
  layout.y = f.y;

  // The non-sensitive side is the permuted round-robin side here; the
  // sensitive side is filled by association and leftover placement.
  layout.nonsensitive_bins = round_robin(apply_seed(nonsensitive_values, seed), f.x);
  std::uint64_t s_bin_count = (sensitive_values.size() + f.x - 1) / f.x;
  layout.sensitive_bins =
      place_counterpart(layout.nonsensitive_bins, invert(association),
                        sensitive_values, s_bin_count, f.x);
  pad_sensitive(layout);
  layout.validate();
  return layout;
}

}  // namespace

bool is_fake_value(const std::string& value) {
  return value.rfind(kFakePrefix, 0) == 0;
}

std::string make_fake_value(std::uint32_t bin, std::uint32_t ordinal, std::uint32_t round) {
  return kFakePrefix + std::to_string(bin) + "|" + std::to_string(ordinal) + "|" +
         std::to_string(round);
}

std::optional<SlotRef> BinLayout::find_sensitive(const std::string& value) const {
  for (std::size_t b = 0; b < sensitive_bins.size(); ++b) {
    for (std::size_t s = 0; s < sensitive_bins[b].size(); ++s) {
      if (sensitive_bins[b][s] == value) {
        return SlotRef{static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(s)};
      }
    }
  }
  return std::nullopt;
}

std::optional<SlotRef> BinLayout::find_nonsensitive(const std::string& value) const {
  for (std::size_t b = 0; b < nonsensitive_bins.size(); ++b) {
    for (std::size_t s = 0; s < nonsensitive_bins[b].size(); ++s) {
      if (nonsensitive_bins[b][s] == value) {
        return SlotRef{static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(s)};
      }
    }
  }
  return std::nullopt;
}

std::uint64_t BinLayout::fake_tuple_total() const {
  std::uint64_t total = 0;
  for (const auto& bin : fake_padding) {
    for (const auto& fake : bin) total += fake.tuple_count;
  }
  return total;
}

void BinLayout::validate() const {
  std::set<std::string> seen_s, seen_ns;
  for (const auto& bin : sensitive_bins) {
    for (const auto& v : bin) {
      if (!seen_s.insert(v).second) {
        fail(ErrorKind::Integrity, "sensitive value '" + v + "' in two slots");
      }
    }
  }
  for (const auto& bin : nonsensitive_bins) {
    for (const auto& v : bin) {
      if (!seen_ns.insert(v).second) {
        fail(ErrorKind::Integrity, "non-sensitive value '" + v + "' in two slots");
      }
    }
  }
  // Transposed placement of associated pairs; inserted values may carry an
  // explicit override instead.
  for (const auto& [s, ns] : association) {
    if (pair_overrides.count(s) || pair_overrides.count(ns)) continue;
    auto sp = find_sensitive(s);
    auto np = find_nonsensitive(ns);
    if (!sp || !np) continue;
    if (insert_rounds == 0) {
      if (np->bin != sp->slot || np->slot != sp->bin) {
        fail(ErrorKind::Integrity, "association placement broken for '" + s + "'");
      }
    }
  }
  if (!fake_padding.empty() && fake_padding.size() != sensitive_bins.size()) {
    fail(ErrorKind::Integrity, "fake padding shape mismatch");
  }
}

BinLayout create_bins_base(const std::vector<std::string>& sensitive_values,
                           const std::vector<std::string>& nonsensitive_values,
                           const std::map<std::string, std::string>& association,
                           ShuffleSeed seed) {
  return base_construction(sensitive_values, nonsensitive_values, association, seed,
                           BinMode::Base);
}

BinLayout create_bins_extended(const std::vector<std::string>& sensitive_values,
                               const std::vector<std::string>& nonsensitive_values,
                               const std::map<std::string, std::string>& association,
                               ShuffleSeed seed) {
  check_unique(sensitive_values, "sensitive");
  check_unique(nonsensitive_values, "non-sensitive");
  check_association(sensitive_values, nonsensitive_values, association);
  if (sensitive_values.size() > nonsensitive_values.size()) {
    fail(ErrorKind::Capacity,
         "|S| > |NS|: invoke the reversed construction (create_bins swaps roles)");
  }
  if (nonsensitive_values.empty()) {
    return base_construction(sensitive_values, nonsensitive_values, association, seed,
                             BinMode::Extended);
  }

  const std::uint64_t ns_count = nonsensitive_values.size();
  Factors direct = approx_sq_factors(ns_count);
  const std::uint64_t cost_direct = direct.x + direct.y;

  const std::uint64_t z = closest_square(ns_count);
  const std::uint64_t root = static_cast<std::uint64_t>(std::llround(std::sqrt(double(z))));
  const std::uint64_t leftover = ns_count - z;
  const std::uint64_t extra_per_bin = root == 0 ? 0 : (leftover + root - 1) / root;
  const std::uint64_t cost_square = 2 * root + extra_per_bin;

  if (!(cost_square < cost_direct) || sensitive_values.size() > z) {
    return base_construction(sensitive_values, nonsensitive_values, association, seed,
                             BinMode::Extended);
  }

  // Core of z values: associated non-sensitive values first so the placement
  // rule can anchor every pair, then unassociated ones up to z.
  std::set<std::string> associated_ns;
  for (const auto& [_, ns] : association) associated_ns.insert(ns);
  std::vector<std::string> core, remaining;
  core.reserve(z);
  for (const auto& v : nonsensitive_values) {
    if (associated_ns.count(v)) core.push_back(v);
  }
  for (const auto& v : nonsensitive_values) {
    if (associated_ns.count(v)) continue;
    if (core.size() < z) core.push_back(v);
    else remaining.push_back(v);
  }

  BinLayout layout =
      base_construction(sensitive_values, core, association, seed, BinMode::Extended);
  // Spread the remaining values evenly; their slots sit past the core
  // capacity and pair to sensitive bins modulo x at retrieval time.
  for (std::size_t i = 0; i < remaining.size(); ++i) {
    layout.nonsensitive_bins[i % layout.nonsensitive_bins.size()].push_back(remaining[i]);
  }
  layout.validate();
  return layout;
}

std::uint64_t MultiplicityAssignment::padded_total() const {
  std::uint64_t m = 0;
  for (std::size_t i = 0; i < real_totals.size(); ++i) {
    m = std::max(m, real_totals[i] + (i < fake_counts.size() ? fake_counts[i] : 0));
  }
  return m;
}

MultiplicityAssignment assign_multiplicity(std::vector<ValueCount> values,
                                           std::uint64_t bin_count,
                                           std::uint64_t capacity) {
  if (bin_count == 0) fail(ErrorKind::Domain, "assign_multiplicity: no bins");
  if (values.size() > bin_count * capacity) {
    fail(ErrorKind::Capacity, "more values than bin slots");
  }
  // Decreasing count; ties resolved by value for determinism.
  std::stable_sort(values.begin(), values.end(), [](const ValueCount& a, const ValueCount& b) {
    if (a.count != b.count) return a.count > b.count;
    return a.value < b.value;
  });

  MultiplicityAssignment out;
  out.bins.assign(bin_count, {});
  out.real_totals.assign(bin_count, 0);
  out.fake_counts.assign(bin_count, 0);

  std::size_t next = 0;
  for (; next < values.size() && next < bin_count; ++next) {
    out.bins[next].push_back(values[next].value);
    out.real_totals[next] += values[next].count;
  }
  for (; next < values.size(); ++next) {
    // Lightest non-full bin, lowest index on ties.
    std::size_t best = bin_count;
    for (std::size_t b = 0; b < bin_count; ++b) {
      if (out.bins[b].size() >= capacity) continue;
      if (best == bin_count || out.real_totals[b] < out.real_totals[best]) best = b;
    }
    if (best == bin_count) fail(ErrorKind::Capacity, "all bins full");
    out.bins[best].push_back(values[next].value);
    out.real_totals[best] += values[next].count;
  }

  std::uint64_t max_total = 0;
  for (auto t : out.real_totals) max_total = std::max(max_total, t);
  for (std::size_t b = 0; b < bin_count; ++b) {
    out.fake_counts[b] = max_total - out.real_totals[b];
    out.fake_total += out.fake_counts[b];
  }
  return out;
}

MultiplicityAssignment assign_multiplicity_optimal(std::vector<ValueCount> values,
                                                   std::uint64_t bin_count,
                                                   std::uint64_t capacity) {
  if (values.size() > 12) {
    fail(ErrorKind::Domain, "exact assignment is limited to 12 values");
  }
  if (values.size() > bin_count * capacity) {
    fail(ErrorKind::Capacity, "more values than bin slots");
  }
  std::stable_sort(values.begin(), values.end(), [](const ValueCount& a, const ValueCount& b) {
    if (a.count != b.count) return a.count > b.count;
    return a.value < b.value;
  });

  std::vector<std::size_t> assign(values.size(), 0);
  std::vector<std::uint64_t> totals(bin_count, 0);
  std::vector<std::size_t> fill(bin_count, 0);
  std::uint64_t best_fakes = UINT64_MAX;
  std::vector<std::size_t> best_assign;

  auto fakes_of = [&](const std::vector<std::uint64_t>& t) {
    std::uint64_t mx = *std::max_element(t.begin(), t.end());
    std::uint64_t f = 0;
    for (auto v : t) f += mx - v;
    return f;
  };

  // Exhaustive assignment with a symmetry break: value i may only open bin
  // i' <= i, which enumerates set partitions instead of bin labelings.
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t i, std::size_t opened) {
    if (i == values.size()) {
      std::uint64_t f = fakes_of(totals);
      if (f < best_fakes) {
        best_fakes = f;
        best_assign = assign;
      }
      return;
    }
    std::size_t limit = std::min<std::size_t>(bin_count, opened + 1);
    for (std::size_t b = 0; b < limit; ++b) {
      if (fill[b] >= capacity) continue;
      assign[i] = b;
      totals[b] += values[i].count;
      fill[b]++;
      rec(i + 1, std::max(opened, b + 1));
      fill[b]--;
      totals[b] -= values[i].count;
    }
  };
  rec(0, 0);

  MultiplicityAssignment out;
  out.bins.assign(bin_count, {});
  out.real_totals.assign(bin_count, 0);
  out.fake_counts.assign(bin_count, 0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    out.bins[best_assign[i]].push_back(values[i].value);
    out.real_totals[best_assign[i]] += values[i].count;
  }
  std::uint64_t max_total = 0;
  for (auto t : out.real_totals) max_total = std::max(max_total, t);
  for (std::size_t b = 0; b < bin_count; ++b) {
    out.fake_counts[b] = max_total - out.real_totals[b];
    out.fake_total += out.fake_counts[b];
  }
  return out;
}

BinLayout create_bins_padded(const std::vector<ValueCount>& sensitive_values,
                             const std::vector<std::string>& nonsensitive_values,
                             const std::map<std::string, std::string>& association,
                             ShuffleSeed seed) {
  std::vector<std::string> s_plain;
  s_plain.reserve(sensitive_values.size());
  for (const auto& vc : sensitive_values) s_plain.push_back(vc.value);
  check_unique(s_plain, "sensitive");
  check_unique(nonsensitive_values, "non-sensitive");
  check_association(s_plain, nonsensitive_values, association);

  if (nonsensitive_values.empty() || sensitive_values.empty()) {
    BinLayout layout = base_construction(s_plain, nonsensitive_values, association,
                                         seed, BinMode::Padded);
    return layout;
  }
  if (s_plain.size() > nonsensitive_values.size()) {
    fail(ErrorKind::Capacity,
         "|S| > |NS|: invoke the reversed construction (create_bins swaps roles)");
  }

  Factors f = approx_sq_factors(nonsensitive_values.size());

  // The greedy works on the shuffled order only through its sort; shuffling
  // first still decides ties among equal counts unpredictably for the
  // adversary when a seed is set.
  std::vector<ValueCount> counted = sensitive_values;
  if (seed && *seed != 0) {
    Rng rng(*seed);
    rng.shuffle(counted);
  }

  MultiplicityAssignment assignment = assign_multiplicity(counted, f.x, f.y);

  BinLayout layout;
  layout.mode = BinMode::Padded;
  layout.seed = seed;
  layout.x = f.x;
  layout.y = f.y;
  layout.association = association;
  layout.sensitive_bins = assignment.bins;
  std::uint64_t ns_bin_count = (nonsensitive_values.size() + f.x - 1) / f.x;
  layout.nonsensitive_bins = place_counterpart(layout.sensitive_bins, association,
                                               nonsensitive_values, ns_bin_count, f.x);

  layout.fake_padding.assign(f.x, {});
  layout.bin_tuple_totals.assign(f.x, 0);
  std::uint64_t target = assignment.padded_total();
  for (std::size_t b = 0; b < f.x; ++b) {
    if (assignment.fake_counts[b] > 0) {
      layout.fake_padding[b].push_back(
          {make_fake_value(static_cast<std::uint32_t>(b), 0), assignment.fake_counts[b]});
    }
    layout.bin_tuple_totals[b] = target;
  }
  layout.validate();
  return layout;
}

BinLayout create_bins_workload(const std::vector<std::string>& sensitive_values,
                               const std::vector<std::string>& nonsensitive_values,
                               const std::map<std::string, std::string>& association,
                               const WorkloadProfile& profile, ShuffleSeed seed) {
  check_unique(sensitive_values, "sensitive");
  check_unique(nonsensitive_values, "non-sensitive");
  check_association(sensitive_values, nonsensitive_values, association);
  if (sensitive_values.size() > nonsensitive_values.size()) {
    fail(ErrorKind::Capacity,
         "|S| > |NS|: invoke the reversed construction (create_bins swaps roles)");
  }
  if (nonsensitive_values.empty()) {
    return base_construction(sensitive_values, nonsensitive_values, association, seed,
                             BinMode::Workload);
  }
  std::set<std::string> ns_set(nonsensitive_values.begin(), nonsensitive_values.end());
  for (const auto& v : profile.frequent_values) {
    if (!ns_set.count(v)) {
      fail(ErrorKind::Usage, "frequent value '" + v + "' is not a non-sensitive value");
    }
  }

  Factors f = approx_sq_factors(nonsensitive_values.size());
  std::uint64_t ns_bin_count = (nonsensitive_values.size() + f.x - 1) / f.x;

  // Frequent values first, in groups of x: the i-th group fills NSB_i, so the
  // associates of one group land in x distinct sensitive bins.
  std::vector<std::vector<std::optional<std::string>>> ns_slots(
      ns_bin_count, std::vector<std::optional<std::string>>(f.x));
  std::size_t bin = 0, slot = 0;
  auto push_ns = [&](const std::string& v) {
    while (bin < ns_bin_count && ns_slots[bin][slot].has_value()) {
      if (++slot == f.x) { slot = 0; ++bin; }
    }
    if (bin >= ns_bin_count) fail(ErrorKind::Capacity, "non-sensitive bins overflow");
    ns_slots[bin][slot] = v;
  };
  for (const auto& v : nonsensitive_values) {
    if (profile.frequent_values.count(v)) push_ns(v);
  }
  for (const auto& v : nonsensitive_values) {
    if (!profile.frequent_values.count(v)) push_ns(v);
  }

  BinLayout layout;
  layout.mode = BinMode::Workload;
  layout.seed = seed;
  layout.x = f.x;
  layout.y = f.y;
  layout.association = association;
  layout.nonsensitive_bins.assign(ns_bin_count, {});
  for (std::size_t b = 0; b < ns_bin_count; ++b) {
    for (std::size_t s = 0; s < f.x; ++s) {
      if (ns_slots[b][s]) layout.nonsensitive_bins[b].push_back(**&ns_slots[b][s]);
    }
  }

  // Sensitive associate of NSB_z[j] sits at SB_j[z]; the remaining sensitive
  // values fill the lowest empty slots (after a seeded shuffle).
  std::map<std::string, std::string> ns_to_s = invert(association);
  std::vector<std::vector<std::optional<std::string>>> s_slots(
      f.x, std::vector<std::optional<std::string>>(f.y));
  std::set<std::string> placed;
  for (std::size_t z = 0; z < layout.nonsensitive_bins.size(); ++z) {
    for (std::size_t j = 0; j < layout.nonsensitive_bins[z].size(); ++j) {
      auto it = ns_to_s.find(layout.nonsensitive_bins[z][j]);
      if (it == ns_to_s.end()) continue;
      if (j >= f.x || z >= f.y) fail(ErrorKind::Capacity, "sensitive placement out of bounds");
      s_slots[j][z] = it->second;
      placed.insert(it->second);
    }
  }
  std::vector<std::string> rest;
  for (const auto& v : sensitive_values) {
    if (!placed.count(v)) rest.push_back(v);
  }
  rest = apply_seed(rest, seed);
  std::size_t sb = 0, ss = 0;
  for (const auto& v : rest) {
    while (sb < f.x && s_slots[sb][ss].has_value()) {
      if (++ss == f.y) { ss = 0; ++sb; }
    }
    if (sb >= f.x) fail(ErrorKind::Capacity, "sensitive bins overflow");
    s_slots[sb][ss] = v;
  }
  // Associated values are pinned to their slots; holes below them become
  // inline fake markers so slot positions (and with them the R1 pairing)
  // survive.
  layout.sensitive_bins.assign(f.x, {});
  std::vector<std::uint32_t> fake_ordinal(f.x, 1000);
  for (std::size_t b = 0; b < f.x; ++b) {
    std::size_t last = 0;
    for (std::size_t s = 0; s < f.y; ++s) {
      if (s_slots[b][s]) last = s + 1;
    }
    for (std::size_t s = 0; s < last; ++s) {
      if (s_slots[b][s]) {
        layout.sensitive_bins[b].push_back(*s_slots[b][s]);
      } else {
        layout.sensitive_bins[b].push_back(
            make_fake_value(static_cast<std::uint32_t>(b), fake_ordinal[b]++));
      }
    }
  }
  pad_sensitive(layout);
  return layout;
}

BinLayout create_bins(BinMode mode, const std::vector<ValueCount>& sensitive_values,
                      const std::vector<std::string>& nonsensitive_values,
                      const std::map<std::string, std::string>& association,
                      ShuffleSeed seed, const WorkloadProfile* profile) {
  std::vector<std::string> s_plain;
  s_plain.reserve(sensitive_values.size());
  for (const auto& vc : sensitive_values) s_plain.push_back(vc.value);

  const bool reversed = !nonsensitive_values.empty() &&
                        s_plain.size() > nonsensitive_values.size();
  if (reversed) {
    // Roles swapped; the layout records which side was factored. Only the
    // base shape is defined for the reversed orientation.
    return reversed_construction(s_plain, nonsensitive_values, association, seed, mode);
  }
  switch (mode) {
    case BinMode::Base:
      return create_bins_base(s_plain, nonsensitive_values, association, seed);
    case BinMode::Extended:
      return create_bins_extended(s_plain, nonsensitive_values, association, seed);
    case BinMode::Workload: {
      WorkloadProfile empty;
      return create_bins_workload(s_plain, nonsensitive_values, association,
                                  profile ? *profile : empty, seed);
    }
    case BinMode::Padded:
      return create_bins_padded(sensitive_values, nonsensitive_values, association, seed);
  }
  fail(ErrorKind::Usage, "unknown bin mode");
}

InsertResult insert_batch(const BinLayout& layout,
                          const std::vector<std::string>& new_sensitive,
                          const std::vector<std::string>& new_nonsensitive) {
  check_unique(new_sensitive, "batch sensitive");
  check_unique(new_nonsensitive, "batch non-sensitive");

  InsertResult result;
  result.layout = layout;
  BinLayout& next = result.layout;
  next.version = layout.version + 1;

  if (next.sensitive_bins.empty() && !new_sensitive.empty()) {
    fail(ErrorKind::Usage, "layout has no sensitive bins; re-bin instead of inserting");
  }

  Rng rng((layout.seed.value_or(0) ^ 0x9e3779b97f4a7c15ULL) + layout.version);

  // New non-sensitive values: associated ones join the bin paired with their
  // sensitive associate, the rest spread one per bin in seeded order.
  std::vector<std::string> ns_unassociated;
  for (const auto& v : new_nonsensitive) {
    if (next.find_nonsensitive(v)) continue;  // old value, no layout change
    auto sp = next.find_sensitive(v);
    if (sp) {
      std::uint32_t target =
          sp->slot < next.nonsensitive_bins.size()
              ? sp->slot
              : static_cast<std::uint32_t>(sp->slot % next.nonsensitive_bins.size());
      if (next.nonsensitive_bins.empty()) {
        fail(ErrorKind::Usage, "layout has no non-sensitive bins");
      }
      next.nonsensitive_bins[target].push_back(v);
      // The appended slot rarely transposes back to the associate's bin, so
      // the pair is pinned explicitly.
      next.pair_overrides[v] = {sp->bin, target};
      next.association[v] = v;
      result.new_nonsensitive_values.push_back(v);
    } else {
      ns_unassociated.push_back(v);
    }
  }
  if (!ns_unassociated.empty()) {
    if (next.nonsensitive_bins.empty()) {
      fail(ErrorKind::Usage, "layout has no non-sensitive bins");
    }
    std::vector<std::uint32_t> order(next.nonsensitive_bins.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    for (std::size_t i = 0; i < ns_unassociated.size(); ++i) {
      next.nonsensitive_bins[order[i % order.size()]].push_back(ns_unassociated[i]);
      result.new_nonsensitive_values.push_back(ns_unassociated[i]);
    }
  }

  // New sensitive values; the associated ones are pinned to the bin that
  // rule R2 pairs with their associate's bin.
  std::vector<std::string> s_unassociated;
  std::vector<std::uint64_t> grown(next.sensitive_bins.size(), 0);
  for (const auto& v : new_sensitive) {
    if (next.find_sensitive(v)) continue;  // old value
    auto np = next.find_nonsensitive(v);
    if (np) {
      std::uint32_t target =
          np->slot < next.sensitive_bins.size()
              ? np->slot
              : static_cast<std::uint32_t>(np->slot % next.sensitive_bins.size());
      next.sensitive_bins[target].push_back(v);
      grown[target]++;
      next.pair_overrides[v] = {target, np->bin};
      next.association[v] = v;
      result.new_sensitive_values.push_back(v);
    } else {
      s_unassociated.push_back(v);
    }
  }
  if (!s_unassociated.empty()) {
    std::vector<std::uint32_t> order(next.sensitive_bins.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    for (std::size_t i = 0; i < s_unassociated.size(); ++i) {
      std::uint32_t b = order[i % order.size()];
      next.sensitive_bins[b].push_back(s_unassociated[i]);
      grown[b]++;
      result.new_sensitive_values.push_back(s_unassociated[i]);
    }
  }

  // Sensitive bins must keep identical growth; short bins take fake values.
  std::uint64_t max_grown = 0;
  for (auto g : grown) max_grown = std::max(max_grown, g);
  if (max_grown > 0) {
    for (std::size_t b = 0; b < next.sensitive_bins.size(); ++b) {
      for (std::uint64_t k = grown[b]; k < max_grown; ++k) {
        FakePadding fake{make_fake_value(static_cast<std::uint32_t>(b),
                                         static_cast<std::uint32_t>(k), next.version),
                         1};
        next.fake_padding[b].push_back(fake);
        result.new_fake_values.push_back(fake);
      }
      next.bin_tuple_totals[b] += max_grown;
    }
    next.insert_rounds += static_cast<std::uint32_t>(max_grown);
  }
  next.validate();
  return result;
}

bool should_rebin(const std::vector<std::uint64_t>& retrieved_per_query,
                  double baseline, double threshold) {
  if (threshold <= 1.0) fail(ErrorKind::Usage, "re-bin threshold must be > 1");
  if (retrieved_per_query.empty() || baseline <= 0.0) return false;
  double sum = 0;
  for (auto v : retrieved_per_query) sum += static_cast<double>(v);
  double mean = sum / static_cast<double>(retrieved_per_query.size());
  return mean / baseline > threshold;
}

namespace {

json layout_payload(const BinLayout& layout) {
  json j;
  j["format"] = "qbin-layout";
  j["format_version"] = 1;
  j["layout_version"] = layout.version;
  j["mode"] = bin_mode_name(layout.mode);
  j["x"] = layout.x;
  j["y"] = layout.y;
  j["roles_swapped"] = layout.roles_swapped;
  j["insert_rounds"] = layout.insert_rounds;
  if (layout.seed) j["seed"] = *layout.seed;
  j["sensitive_bins"] = layout.sensitive_bins;
  j["nonsensitive_bins"] = layout.nonsensitive_bins;
  j["association"] = layout.association;
  json fakes = json::array();
  for (const auto& bin : layout.fake_padding) {
    json fb = json::array();
    for (const auto& f : bin) fb.push_back({{"value", f.value}, {"tuples", f.tuple_count}});
    fakes.push_back(fb);
  }
  j["fake_padding"] = fakes;
  j["bin_tuple_totals"] = layout.bin_tuple_totals;
  json overrides = json::object();
  for (const auto& [v, pair] : layout.pair_overrides) {
    overrides[v] = {pair.first, pair.second};
  }
  j["pair_overrides"] = overrides;
  return j;
}

}  // namespace

std::string layout_to_json(const BinLayout& layout) {
  json j = layout_payload(layout);
  j["checksum"] = sha256_hex(j.dump());
  return j.dump(2) + "\n";
}

BinLayout layout_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::Integrity, std::string("layout parse error: ") + e.what());
  }
  if (j.value("format", "") != "qbin-layout") {
    fail(ErrorKind::Integrity, "not a layout file");
  }
  std::string checksum = j.value("checksum", "");
  j.erase("checksum");
  if (checksum != sha256_hex(j.dump())) {
    fail(ErrorKind::Integrity, "layout checksum mismatch");
  }

  BinLayout layout;
  layout.version = j.at("layout_version").get<std::uint32_t>();
  layout.mode = bin_mode_from_name(j.at("mode").get<std::string>());
  layout.x = j.at("x").get<std::uint64_t>();
  layout.y = j.at("y").get<std::uint64_t>();
  layout.roles_swapped = j.value("roles_swapped", false);
  layout.insert_rounds = j.value("insert_rounds", 0u);
  if (j.contains("seed")) layout.seed = j.at("seed").get<std::uint64_t>();
  layout.sensitive_bins = j.at("sensitive_bins").get<std::vector<std::vector<std::string>>>();
  layout.nonsensitive_bins =
      j.at("nonsensitive_bins").get<std::vector<std::vector<std::string>>>();
  layout.association = j.at("association").get<std::map<std::string, std::string>>();
  for (const auto& fb : j.at("fake_padding")) {
    std::vector<FakePadding> bin;
    for (const auto& f : fb) {
      bin.push_back({f.at("value").get<std::string>(), f.at("tuples").get<std::uint64_t>()});
    }
    layout.fake_padding.push_back(std::move(bin));
  }
  layout.bin_tuple_totals = j.at("bin_tuple_totals").get<std::vector<std::uint64_t>>();
  for (const auto& [v, pair] : j.at("pair_overrides").items()) {
    layout.pair_overrides[v] = {pair.at(0).get<std::uint32_t>(),
                                pair.at(1).get<std::uint32_t>()};
  }
  return layout;
}

void save_layout(const std::string& path, const BinLayout& layout) {
  std::ofstream out(path + ".tmp", std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Store, "cannot write '" + path + "'");
  out << layout_to_json(layout);
  out.close();
  if (std::rename((path + ".tmp").c_str(), path.c_str()) != 0) {
    fail(ErrorKind::Store, "cannot rename into '" + path + "'");
  }
}

BinLayout load_layout(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Store, "cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return layout_from_json(buf.str());
}

}  // namespace qbin
