#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace qbin {

struct Factors {
  std::uint64_t x = 0;  // larger factor
  std::uint64_t y = 0;  // smaller factor

  bool operator==(const Factors&) const = default;
};

/// Factor pair of n with the smallest |x - y|, x >= y. n must be >= 1.
Factors approx_sq_factors(std::uint64_t n);

/// Largest perfect square <= n. n must be >= 1.
std::uint64_t closest_square(std::uint64_t n);

enum class Side { Sensitive, NonSensitive };

enum class BinMode { Base, Extended, Workload, Padded };

const char* bin_mode_name(BinMode mode);
BinMode bin_mode_from_name(const std::string& name);

struct SlotRef {
  std::uint32_t bin = 0;
  std::uint32_t slot = 0;

  bool operator==(const SlotRef&) const = default;
};

/// Identity permutation when unset; otherwise a seeded shuffle of the
/// sensitive values before round-robin placement. The seed never leaves
/// owner metadata.
using ShuffleSeed = std::optional<std::uint64_t>;

struct FakePadding {
  std::string value;          // owner-side marker value, never sent in cleartext
  std::uint64_t tuple_count;  // encrypted fake tuples carried by this marker
};

/// The owner's secret layout. Sensitive bins hold values to be queried via
/// encrypted tokens; non-sensitive bins hold cleartext values. For every
/// associated pair placed by the base construction, s = SB_i[j] implies its
/// associate sits at NSB_j[i], which is what makes rules R1/R2 agree.
struct BinLayout {
  BinMode mode = BinMode::Base;
  std::uint64_t x = 0;  // non-sensitive bin capacity == sensitive bin count
  std::uint64_t y = 0;  // sensitive bin capacity
  ShuffleSeed seed;
  bool roles_swapped = false;  // |S| > |NS|: the sensitive side was factored
  std::uint32_t version = 1;
  std::uint32_t insert_rounds = 0;

  std::vector<std::vector<std::string>> sensitive_bins;
  std::vector<std::vector<std::string>> nonsensitive_bins;

  // sensitive value -> associated non-sensitive value (equal plaintexts)
  std::map<std::string, std::string> association;

  // Per sensitive bin: fake markers and the encrypted fake tuples they carry.
  std::vector<std::vector<FakePadding>> fake_padding;
  // Per sensitive bin: target real+fake tuple total (uniform in Padded mode).
  std::vector<std::uint64_t> bin_tuple_totals;

  // Values whose R1/R2 bin pair cannot be derived from slot positions
  // (inserted values whose associate predates them).
  std::map<std::string, std::pair<std::uint32_t, std::uint32_t>> pair_overrides;

  std::optional<SlotRef> find_sensitive(const std::string& value) const;
  std::optional<SlotRef> find_nonsensitive(const std::string& value) const;

  std::uint64_t fake_tuple_total() const;
  std::uint64_t sensitive_bin_count() const { return sensitive_bins.size(); }
  std::uint64_t nonsensitive_bin_count() const { return nonsensitive_bins.size(); }

  /// Structural self-check: disjoint slots, association placement, capacity.
  void validate() const;
};

/// Base construction (1:1 association, |S| <= |NS|). Sensitive values are
/// shuffled by the seed, the i-th (1-based) goes to bin i mod x; the
/// associate of SB_i[j] goes to NSB_j[i]; leftover non-sensitive values fill
/// the lowest empty slots. Sensitive bins are padded with fake markers up to
/// the largest occupancy so every fetch has the same width.
BinLayout create_bins_base(const std::vector<std::string>& sensitive_values,
                           const std::vector<std::string>& nonsensitive_values,
                           const std::map<std::string, std::string>& association,
                           ShuffleSeed seed = std::nullopt);

/// Square-number extension: when 2*sqrt(z) + ceil((|NS|-z)/sqrt(z)) beats
/// x + y for z the closest square, bins are built over z core values and the
/// remaining non-sensitive values are spread evenly across the bins.
BinLayout create_bins_extended(const std::vector<std::string>& sensitive_values,
                               const std::vector<std::string>& nonsensitive_values,
                               const std::map<std::string, std::string>& association,
                               ShuffleSeed seed = std::nullopt);

struct WorkloadProfile {
  std::set<std::string> frequent_values;  // frequent non-sensitive keywords
};

/// Workload-skew resistant construction: frequent non-sensitive values fill
/// the bins first in groups of x, so their sensitive associates spread over
/// all x sensitive bins and frequent queries touch every sensitive bin.
BinLayout create_bins_workload(const std::vector<std::string>& sensitive_values,
                               const std::vector<std::string>& nonsensitive_values,
                               const std::map<std::string, std::string>& association,
                               const WorkloadProfile& profile,
                               ShuffleSeed seed = std::nullopt);

struct ValueCount {
  std::string value;
  std::uint64_t count = 0;
};

struct MultiplicityAssignment {
  std::vector<std::vector<std::string>> bins;  // values per sensitive bin
  std::vector<std::uint64_t> real_totals;      // real tuples per bin
  std::vector<std::uint64_t> fake_counts;      // padding tuples per bin
  std::uint64_t fake_total = 0;

  std::uint64_t padded_total() const;  // uniform per-bin total after padding
};

/// Greedy assignment of multi-tuple values: sort by count descending, seed
/// each bin with one of the largest, then repeatedly give the next value to
/// the lightest non-full bin (lowest index on ties), and pad every bin with
/// fakes up to the heaviest.
MultiplicityAssignment assign_multiplicity(std::vector<ValueCount> values,
                                           std::uint64_t bin_count,
                                           std::uint64_t capacity);

/// Exact minimum-fakes assignment by exhaustive search; instances are
/// limited to 12 values.
MultiplicityAssignment assign_multiplicity_optimal(std::vector<ValueCount> values,
                                                   std::uint64_t bin_count,
                                                   std::uint64_t capacity);

/// Full layout for multi-tuple data: greedy sensitive placement plus the
/// base rules for the non-sensitive side, with per-bin tuple totals equalized
/// by fake tuples.
BinLayout create_bins_padded(const std::vector<ValueCount>& sensitive_values,
                             const std::vector<std::string>& nonsensitive_values,
                             const std::map<std::string, std::string>& association,
                             ShuffleSeed seed = std::nullopt);

/// Orchestrator: picks the requested mode and swaps roles when |S| > |NS|.
BinLayout create_bins(BinMode mode,
                      const std::vector<ValueCount>& sensitive_values,
                      const std::vector<std::string>& nonsensitive_values,
                      const std::map<std::string, std::string>& association,
                      ShuffleSeed seed = std::nullopt,
                      const WorkloadProfile* profile = nullptr);

struct InsertResult {
  BinLayout layout;  // new version
  // Values that must be (re-)outsourced alongside the batch tuples.
  std::vector<std::string> new_sensitive_values;
  std::vector<std::string> new_nonsensitive_values;
  std::vector<FakePadding> new_fake_values;  // sensitive-side batch padding
};

/// Four insert scenarios: old/old changes nothing, new/new grows every bin by
/// one per round, and new values whose associate already exists are pinned to
/// the associate's bin pair. Under-filled rounds are completed with fake
/// sensitive values so sensitive bins stay uniform.
InsertResult insert_batch(const BinLayout& layout,
                          const std::vector<std::string>& new_sensitive,
                          const std::vector<std::string>& new_nonsensitive);

/// True when mean retrieved-tuples-per-query exceeds threshold * baseline.
/// Empty history never triggers a re-bin. threshold must be > 1.
bool should_rebin(const std::vector<std::uint64_t>& retrieved_per_query,
                  double baseline, double threshold);

bool is_fake_value(const std::string& value);
std::string make_fake_value(std::uint32_t bin, std::uint32_t ordinal,
                            std::uint32_t round = 0);

/// Versioned JSON persistence with a SHA-256 checksum. Never contains keys.
std::string layout_to_json(const BinLayout& layout);
BinLayout layout_from_json(const std::string& text);
void save_layout(const std::string& path, const BinLayout& layout);
BinLayout load_layout(const std::string& path);

}  // namespace qbin
