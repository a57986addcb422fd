#include "qbin/join.hpp"

#include <algorithm>
#include <unordered_map>

#include "qbin/error.hpp"

namespace qbin {

std::set<std::string> compute_pseudo_sensitive_keys(
    const std::vector<TupleRecord>& parent_ns, const std::vector<TupleRecord>& child_s,
    const std::string& key_attribute) {
  std::set<std::string> child_keys;
  for (const auto& row : child_s) child_keys.insert(row.attr(key_attribute));
  std::set<std::string> out;
  for (const auto& row : parent_ns) {
    const std::string& key = row.attr(key_attribute);
    if (child_keys.count(key)) out.insert(key);
  }
  return out;
}

JoinPartition build_join_relations(const PartitionedRelation& parent,
                                   const PartitionedRelation& child,
                                   const std::string& key_attribute) {
  auto has_attr = [&](const std::vector<std::string>& schema) {
    return std::find(schema.begin(), schema.end(), key_attribute) != schema.end();
  };
  if ((!parent.schema.empty() && !has_attr(parent.schema)) ||
      (!child.schema.empty() && !has_attr(child.schema))) {
    fail(ErrorKind::Schema, "join key '" + key_attribute + "' missing from a schema");
  }

  // Model constraint: a sensitive parent tuple cannot join a cleartext child
  // tuple, otherwise the cleartext side would name the hidden key.
  std::set<std::string> sensitive_parent_keys;
  for (const auto& row : parent.sensitive_tuples) {
    sensitive_parent_keys.insert(row.attr(key_attribute));
  }
  std::set<std::string> offending;
  for (const auto& row : child.nonsensitive_tuples) {
    if (sensitive_parent_keys.count(row.attr(key_attribute))) {
      offending.insert(row.attr(key_attribute));
    }
  }
  if (!offending.empty()) {
    std::string keys;
    for (const auto& k : offending) keys += (keys.empty() ? "" : ", ") + k;
    fail(ErrorKind::Constraint,
         "sensitive parent keys join non-sensitive child tuples: " + keys);
  }

  JoinPartition part;
  part.key_attribute = key_attribute;
  part.parent_schema = parent.schema;
  part.child_schema = child.schema;
  part.parent_ns = parent.nonsensitive_tuples;
  part.child_s = child.sensitive_tuples;
  part.child_ns = child.nonsensitive_tuples;
  part.pseudo_keys =
      compute_pseudo_sensitive_keys(parent.nonsensitive_tuples, child.sensitive_tuples,
                                    key_attribute);

  part.parent_ps = parent.sensitive_tuples;
  for (const auto& row : parent.nonsensitive_tuples) {
    if (part.pseudo_keys.count(row.attr(key_attribute))) part.parent_ps.push_back(row);
  }
  std::sort(part.parent_ps.begin(), part.parent_ps.end(),
            [](const TupleRecord& a, const TupleRecord& b) { return a.tuple_id < b.tuple_id; });
  return part;
}

OutsourceResult outsource_join(const JoinPartition& partition, const OwnerKey& key) {
  OutsourceResult result;
  result.store = std::make_shared<CloudStore>();
  result.store->manifest_key_fingerprint = key.fingerprint();
  result.store->manifest_extra["cipher"] = "aes-256-gcm";
  result.store->manifest_extra["join_key"] = partition.key_attribute;

  auto encrypt_segment = [&](const std::string& name,
                             const std::vector<TupleRecord>& rows) {
    CloudStore::EncryptedSegment seg;
    for (const auto& row : rows) {
      std::uint32_t idx = static_cast<std::uint32_t>(seg.records.size());
      EncryptedRecord rec;
      rec.record_id = "e" + std::to_string(idx);
      rec.ciphertext = aead_encrypt(key, encode_tuple(row, false));
      const std::string& value = row.attr(partition.key_attribute);
      std::uint64_t occ =
          ++result.histogram.counts[name + "." + partition.key_attribute][value];
      seg.token_index[token_hex(
              occurrence_token(key, name + "." + partition.key_attribute, value, occ))]
          .push_back(idx);
      seg.records.push_back(std::move(rec));
    }
    result.store->add_encrypted_segment(name, std::move(seg));
  };
  auto cleartext_segment = [&](const std::string& name,
                               const std::vector<TupleRecord>& rows,
                               const std::vector<std::string>& schema) {
    CloudStore::CleartextSegment seg;
    seg.schema = schema;
    seg.rows = rows;
    for (std::uint32_t i = 0; i < seg.rows.size(); ++i) {
      seg.value_index[partition.key_attribute][seg.rows[i].attr(partition.key_attribute)]
          .push_back(i);
    }
    result.store->add_cleartext_segment(name, std::move(seg));
  };

  encrypt_segment("parent_ps", partition.parent_ps);
  encrypt_segment("child_s", partition.child_s);
  cleartext_segment("parent_ns", partition.parent_ns, partition.parent_schema);
  cleartext_segment("child_ns", partition.child_ns, partition.child_schema);
  return result;
}

std::vector<JoinedTuple> execute_join(const JoinPartition& partition, CloudStore& store,
                                      const OwnerKey& key, const std::string& select_key) {
  std::vector<JoinedTuple> out;
  const std::string& key_attr = partition.key_attribute;

  // Cleartext side runs at the cloud.
  {
    std::uint64_t seq = store.begin_query();
    auto parents = store.fetch_all_cleartext("parent_ns", seq, "join");
    auto children = store.fetch_all_cleartext("child_ns", seq, "join");
    std::unordered_map<std::string, std::vector<const TupleRecord*>> by_key;
    for (const auto& p : parents) by_key[p.attr(key_attr)].push_back(&p);
    for (const auto& c : children) {
      auto it = by_key.find(c.attr(key_attr));
      if (it == by_key.end()) continue;
      for (const TupleRecord* p : it->second) {
        out.push_back(JoinedTuple{c.attr(key_attr), *p, c, false});
      }
    }
  }

  // Encrypted side: the simulator stands in for an external encrypted-join
  // engine by shipping both segments to the owner, who joins after
  // decryption.
  {
    std::uint64_t seq = store.begin_query();
    auto decrypt_all = [&](const std::string& segment) {
      std::vector<TupleRecord> rows;
      for (const auto& rec : store.fetch_all_encrypted(segment, seq, "join")) {
        auto plain = aead_decrypt(key, rec.ciphertext);
        if (!plain) {
          fail(ErrorKind::Integrity, "record " + rec.record_id + " failed authentication");
        }
        auto [row, fake] = decode_tuple(*plain);
        if (!fake) rows.push_back(std::move(row));
      }
      return rows;
    };
    auto parents = decrypt_all("parent_ps");
    auto children = decrypt_all("child_s");
    std::unordered_map<std::string, std::vector<const TupleRecord*>> by_key;
    for (const auto& p : parents) by_key[p.attr(key_attr)].push_back(&p);
    for (const auto& c : children) {
      auto it = by_key.find(c.attr(key_attr));
      if (it == by_key.end()) continue;
      for (const TupleRecord* p : it->second) {
        out.push_back(JoinedTuple{c.attr(key_attr), *p, c, true});
      }
    }
  }

  if (!select_key.empty()) {
    out.erase(std::remove_if(out.begin(), out.end(),
                             [&](const JoinedTuple& jt) { return jt.key != select_key; }),
              out.end());
  }
  std::sort(out.begin(), out.end(), [](const JoinedTuple& a, const JoinedTuple& b) {
    if (a.key != b.key) return a.key < b.key;
    if (a.parent.tuple_id != b.parent.tuple_id) return a.parent.tuple_id < b.parent.tuple_id;
    return a.child.tuple_id < b.child.tuple_id;
  });
  return out;
}

}  // namespace qbin
