#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "qbin/binning.hpp"
#include "qbin/crypto.hpp"
#include "qbin/relation.hpp"

namespace qbin {

/// One log entry per cloud round trip: what the cloud saw arrive and which
/// tuple identities it sent back. Append-only.
struct AvEntry {
  std::uint64_t query_seq = 0;
  Side side = Side::Sensitive;
  std::string op;                        // "selection", "range", "join", ...
  std::string segment;                   // store segment the fetch hit
  std::vector<std::string> request;      // token hex strings or cleartext values
  std::vector<std::string> returned_ids; // ciphertext record ids or tuple ids
};

/// Owner-side secret: per attribute and value, how many tuples were
/// outsourced. Needed to generate the full token set for a fetch.
struct OccurrenceHistogram {
  // attribute -> value -> outsourced tuple count (fake markers included)
  std::map<std::string, std::map<std::string, std::uint64_t>> counts;

  std::uint64_t count(const std::string& attribute, const std::string& value) const;
};

struct EncryptedRecord {
  std::string record_id;  // position-derived, what the adversary sees
  Bytes ciphertext;
};

/// Simulated honest-but-curious cloud. Encrypted segments are searchable
/// only through occurrence tokens; cleartext segments carry a value index.
/// Every fetch appends to the adversarial-view log.
class CloudStore {
 public:
  struct EncryptedSegment {
    std::vector<EncryptedRecord> records;
    std::unordered_map<std::string, std::vector<std::uint32_t>> token_index;
  };
  struct CleartextSegment {
    std::vector<std::string> schema;
    std::vector<TupleRecord> rows;
    // attribute -> value -> row positions
    std::map<std::string, std::unordered_map<std::string, std::vector<std::uint32_t>>> value_index;
  };

  CloudStore() = default;

  std::uint64_t begin_query();

  std::vector<EncryptedRecord> fetch_sensitive(const std::string& segment,
                                               const std::vector<Token>& tokens,
                                               std::uint64_t query_seq,
                                               const std::string& op = "selection");

  std::vector<TupleRecord> fetch_nonsensitive(const std::string& segment,
                                              const std::string& attribute,
                                              const std::vector<std::string>& values,
                                              std::uint64_t query_seq,
                                              const std::string& op = "selection");

  /// Bulk scan of an encrypted segment (simulates handing the whole relation
  /// to an external encrypted-join engine). Logged like any other access.
  std::vector<EncryptedRecord> fetch_all_encrypted(const std::string& segment,
                                                   std::uint64_t query_seq,
                                                   const std::string& op);
  std::vector<TupleRecord> fetch_all_cleartext(const std::string& segment,
                                               std::uint64_t query_seq,
                                               const std::string& op);

  const std::vector<AvEntry>& adversarial_view_log() const { return av_log_; }

  bool has_encrypted_segment(const std::string& name) const;
  bool has_cleartext_segment(const std::string& name) const;
  const EncryptedSegment& encrypted_segment(const std::string& name) const;
  const CleartextSegment& cleartext_segment(const std::string& name) const;

  std::string manifest_layout_hash;
  std::string manifest_key_fingerprint;
  std::map<std::string, std::string> manifest_extra;

  void add_encrypted_segment(const std::string& name, EncryptedSegment segment);
  void add_cleartext_segment(const std::string& name, CleartextSegment segment);

  void save(const std::string& dir) const;
  static std::shared_ptr<CloudStore> load(const std::string& dir);

 private:
  std::map<std::string, EncryptedSegment> encrypted_;
  std::map<std::string, CleartextSegment> cleartext_;
  std::vector<AvEntry> av_log_;
  std::uint64_t next_seq_ = 1;
  mutable std::mutex log_mutex_;

  void append_av(AvEntry entry);
};

/// What the owner keeps after outsourcing: the key stays on disk, the
/// histogram feeds token generation, the layout hash pins the store version.
struct OutsourceResult {
  std::shared_ptr<CloudStore> store;
  OccurrenceHistogram histogram;
  std::string layout_hash;
};

/// Encrypts sensitive tuples (plus fake padding from the layout and any
/// extra fake values, e.g. from a range tree), builds the token index,
/// stores non-sensitive tuples in cleartext with a value index.
OutsourceResult outsource(const BinLayout& layout, const PartitionedRelation& part,
                          const OwnerKey& key,
                          const std::vector<FakePadding>& extra_fakes = {});

/// Serialization of tuples that ride inside ciphertexts.
Bytes encode_tuple(const TupleRecord& row, bool fake);
std::pair<TupleRecord, bool> decode_tuple(std::span<const std::uint8_t> data);

std::string layout_hash(const BinLayout& layout);

}  // namespace qbin
