#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "qbin/binning.hpp"
#include "qbin/cloudstore.hpp"
#include "qbin/relation.hpp"
#include "qbin/retrieval.hpp"
#include "qbin/rng.hpp"

namespace qbin::test {

inline TupleRecord row(std::string id, std::string attr, std::string value,
                       bool sensitive) {
  TupleRecord r;
  r.tuple_id = std::move(id);
  r.attrs.emplace_back(std::move(attr), std::move(value));
  r.sensitive = sensitive;
  return r;
}

inline std::set<std::string> ids_of(const std::vector<TupleRecord>& rows) {
  std::set<std::string> out;
  for (const auto& r : rows) out.insert(r.tuple_id);
  return out;
}

/// Independent oracle: plain scan of the original rows.
inline std::set<std::string> direct_select(const std::vector<TupleRecord>& rows,
                                           const std::string& attribute,
                                           const std::string& value) {
  std::set<std::string> out;
  for (const auto& r : rows) {
    if (r.attr(attribute) == value) out.insert(r.tuple_id);
  }
  return out;
}

inline std::set<std::string> bin_set(const std::vector<std::string>& bin) {
  return {bin.begin(), bin.end()};
}

struct RandomInstance {
  std::vector<TupleRecord> rows;
  std::string attribute = "k";
  std::vector<std::string> domain;          // every value present in the data
  std::vector<std::string> absent_probes;   // values the owner never saw
};

/// Mixed association patterns: values sensitive-only, non-sensitive-only or
/// both, with multiplicities up to max_mult per side.
inline RandomInstance random_instance(Rng& rng, std::size_t max_ns_values = 64,
                                      std::uint64_t max_mult = 50) {
  RandomInstance inst;
  std::size_t n_values = 1 + rng.bounded(max_ns_values);
  std::size_t next_id = 1;
  for (std::size_t v = 0; v < n_values; ++v) {
    std::string value = "v" + std::to_string(v);
    std::uint64_t kind = rng.bounded(3);  // 0 sensitive-only, 1 ns-only, 2 both
    std::uint64_t s_count = kind != 1 ? 1 + rng.bounded(max_mult) : 0;
    std::uint64_t ns_count = kind != 0 ? 1 + rng.bounded(max_mult) : 0;
    for (std::uint64_t i = 0; i < s_count; ++i) {
      inst.rows.push_back(row("t" + std::to_string(next_id++), inst.attribute, value, true));
    }
    for (std::uint64_t i = 0; i < ns_count; ++i) {
      inst.rows.push_back(row("t" + std::to_string(next_id++), inst.attribute, value, false));
    }
    inst.domain.push_back(value);
  }
  inst.absent_probes = {"missing-a", "missing-b"};
  return inst;
}

struct BuiltInstance {
  PartitionedRelation part;
  ValueHistogram hist;
  BinLayout layout;
  OutsourceResult outsourced;
  OwnerKey key;
};

inline BuiltInstance build_instance(const RandomInstance& inst, BinMode mode,
                                    ShuffleSeed seed = std::nullopt,
                                    const WorkloadProfile* profile = nullptr) {
  BuiltInstance built;
  built.part = partition_relation(inst.rows, inst.attribute);
  built.hist = value_histogram(built.part, inst.attribute);
  std::vector<ValueCount> s_values;
  for (const auto& v : built.hist.sensitive_values()) {
    s_values.push_back({v, built.hist.at(v).sensitive});
  }
  built.layout = create_bins(mode, s_values, built.hist.nonsensitive_values(),
                             derive_association(built.hist), seed, profile);
  built.key = OwnerKey::generate();
  built.outsourced = outsource(built.layout, built.part, built.key);
  return built;
}

inline std::set<std::string> qb_select(BuiltInstance& built, const std::string& value) {
  QueryPlan plan = plan_query(built.layout, value);
  SelectionResult result =
      execute_selection(plan, built.layout, *built.outsourced.store,
                        built.outsourced.histogram, built.key, built.part.search_attribute);
  return ids_of(result.tuples);
}

}  // namespace qbin::test
