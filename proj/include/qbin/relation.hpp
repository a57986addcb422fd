#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace qbin {

/// One row of a relation. Attribute order follows the schema.
struct TupleRecord {
  std::string tuple_id;
  std::vector<std::pair<std::string, std::string>> attrs;
  bool sensitive = false;

  const std::string* find_attr(std::string_view name) const;
  const std::string& attr(std::string_view name) const;  // throws Schema error
};

/// A relation split by the per-row sensitivity flag.
struct PartitionedRelation {
  std::vector<std::string> schema;
  std::vector<TupleRecord> sensitive_tuples;
  std::vector<TupleRecord> nonsensitive_tuples;
  std::string search_attribute;

  std::size_t size() const {
    return sensitive_tuples.size() + nonsensitive_tuples.size();
  }
};

struct ValueCounts {
  std::uint64_t sensitive = 0;
  std::uint64_t nonsensitive = 0;
};

/// Per-value tuple counts on both halves of the partition. Absent values
/// count as zero by convention.
struct ValueHistogram {
  std::map<std::string, ValueCounts> entries;

  ValueCounts at(const std::string& value) const {
    auto it = entries.find(value);
    return it == entries.end() ? ValueCounts{} : it->second;
  }
  std::vector<std::string> sensitive_values() const;
  std::vector<std::string> nonsensitive_values() const;
};

PartitionedRelation partition_relation(const std::vector<TupleRecord>& rows,
                                       std::string_view attribute);

ValueHistogram value_histogram(const PartitionedRelation& part,
                               std::string_view attribute);

/// Sensitive/non-sensitive values that share the same plaintext are
/// associated. Returns the map sensitive value -> non-sensitive value.
std::map<std::string, std::string> derive_association(const ValueHistogram& hist);

std::vector<std::string> schema_of(const std::vector<TupleRecord>& rows);

}  // namespace qbin
