#include "qbin/relation.hpp"

#include <algorithm>
#include <set>

#include "qbin/error.hpp"

namespace qbin {

const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage: return "usage";
    case ErrorKind::Schema: return "schema";
    case ErrorKind::Ingest: return "ingest";
    case ErrorKind::Domain: return "domain";
    case ErrorKind::Capacity: return "capacity";
    case ErrorKind::Integrity: return "integrity";
    case ErrorKind::Constraint: return "constraint";
    case ErrorKind::Crypto: return "crypto";
    case ErrorKind::Store: return "store";
    case ErrorKind::Audit: return "audit";
  }
  return "unknown";
}

const std::string* TupleRecord::find_attr(std::string_view name) const {
  for (const auto& [attr, value] : attrs) {
    if (attr == name) return &value;
  }
  return nullptr;
}

const std::string& TupleRecord::attr(std::string_view name) const {
  const std::string* v = find_attr(name);
  if (!v) fail(ErrorKind::Schema, "tuple " + tuple_id + " has no attribute '" + std::string(name) + "'");
  return *v;
}

std::vector<std::string> schema_of(const std::vector<TupleRecord>& rows) {
  if (rows.empty()) return {};
  std::vector<std::string> schema;
  schema.reserve(rows.front().attrs.size());
  for (const auto& [attr, _] : rows.front().attrs) schema.push_back(attr);
  return schema;
}

PartitionedRelation partition_relation(const std::vector<TupleRecord>& rows,
                                       std::string_view attribute) {
  PartitionedRelation part;
  part.schema = schema_of(rows);
  part.search_attribute = std::string(attribute);

  if (!rows.empty() &&
      std::find(part.schema.begin(), part.schema.end(), part.search_attribute) ==
          part.schema.end()) {
    fail(ErrorKind::Schema, "unknown attribute '" + part.search_attribute + "'");
  }

  std::set<std::string> seen_ids;
  for (const auto& row : rows) {
    if (!seen_ids.insert(row.tuple_id).second) {
      fail(ErrorKind::Ingest, "duplicate tuple_id '" + row.tuple_id + "'");
    }
    if (!row.find_attr(attribute)) {
      fail(ErrorKind::Schema,
           "tuple " + row.tuple_id + " misses attribute '" + part.search_attribute + "'");
    }
    (row.sensitive ? part.sensitive_tuples : part.nonsensitive_tuples).push_back(row);
  }
  return part;
}

ValueHistogram value_histogram(const PartitionedRelation& part,
                               std::string_view attribute) {
  if (!part.schema.empty() &&
      std::find(part.schema.begin(), part.schema.end(), std::string(attribute)) ==
          part.schema.end()) {
    fail(ErrorKind::Schema, "unknown attribute '" + std::string(attribute) + "'");
  }
  ValueHistogram hist;
  for (const auto& row : part.sensitive_tuples) {
    hist.entries[row.attr(attribute)].sensitive++;
  }
  for (const auto& row : part.nonsensitive_tuples) {
    hist.entries[row.attr(attribute)].nonsensitive++;
  }
  return hist;
}

std::vector<std::string> ValueHistogram::sensitive_values() const {
  std::vector<std::string> out;
  for (const auto& [value, counts] : entries) {
    if (counts.sensitive > 0) out.push_back(value);
  }
  return out;
}

std::vector<std::string> ValueHistogram::nonsensitive_values() const {
  std::vector<std::string> out;
  for (const auto& [value, counts] : entries) {
    if (counts.nonsensitive > 0) out.push_back(value);
  }
  return out;
}

std::map<std::string, std::string> derive_association(const ValueHistogram& hist) {
  std::map<std::string, std::string> assoc;
  for (const auto& [value, counts] : hist.entries) {
    if (counts.sensitive > 0 && counts.nonsensitive > 0) assoc[value] = value;
  }
  return assoc;
}

}  // namespace qbin
