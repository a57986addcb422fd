#pragma once

#include <set>
#include <string>
#include <vector>

#include "qbin/cloudstore.hpp"
#include "qbin/crypto.hpp"
#include "qbin/relation.hpp"

namespace qbin {

/// Parent/child relations prepared for a PK-to-FK join: non-sensitive parent
/// tuples that join sensitive child tuples are promoted to pseudo-sensitive
/// and encrypted alongside R_s, so the join runs as
/// (R_ns x S_ns) in cleartext plus (R_ps x S_s) on the encrypted side.
struct JoinPartition {
  std::string key_attribute;
  std::vector<TupleRecord> parent_ps;   // sensitive + pseudo-sensitive, encrypted
  std::vector<TupleRecord> parent_ns;   // cleartext
  std::vector<TupleRecord> child_s;     // encrypted
  std::vector<TupleRecord> child_ns;    // cleartext
  std::set<std::string> pseudo_keys;
  std::vector<std::string> parent_schema;
  std::vector<std::string> child_schema;
};

/// Keys of non-sensitive parent tuples with at least one sensitive child.
std::set<std::string> compute_pseudo_sensitive_keys(
    const std::vector<TupleRecord>& parent_ns,
    const std::vector<TupleRecord>& child_s, const std::string& key_attribute);

/// Builds the four relations. The model requires that no sensitive parent
/// key appears in the cleartext child half; violations are reported with the
/// offending keys.
JoinPartition build_join_relations(const PartitionedRelation& parent,
                                   const PartitionedRelation& child,
                                   const std::string& key_attribute);

/// Outsources the four relations into one store (two encrypted segments, two
/// cleartext segments).
OutsourceResult outsource_join(const JoinPartition& partition, const OwnerKey& key);

struct JoinedTuple {
  std::string key;
  TupleRecord parent;
  TupleRecord child;
  bool from_encrypted_side = false;
};

/// Cleartext sub-join at the cloud, encrypted sub-join decrypted owner-side;
/// output canonically ordered by (key, parent id, child id). The optional
/// selection filters on the parent key after merging.
std::vector<JoinedTuple> execute_join(const JoinPartition& partition,
                                      CloudStore& store, const OwnerKey& key,
                                      const std::string& select_key = "");

}  // namespace qbin
