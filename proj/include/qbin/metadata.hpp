#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qbin/binning.hpp"
#include "qbin/cloudstore.hpp"
#include "qbin/relation.hpp"

namespace qbin {

/// Owner metadata directory: layouts, occurrence histograms and query
/// history. Size tracks the value domain, not the payload. One command at a
/// time per directory, enforced by a lock file.
class OwnerMetadata {
 public:
  explicit OwnerMetadata(std::string dir);

  void init();
  bool exists() const;

  // Staged relation data (input rows between ingest and outsource; not part
  // of the metadata size accounting).
  void stage_relation(const std::string& name, const std::vector<TupleRecord>& rows,
                      const std::vector<std::string>& schema);
  std::vector<TupleRecord> load_staged(const std::string& name) const;
  std::vector<std::string> staged_schema(const std::string& name) const;
  bool has_staged(const std::string& name) const;

  void save_layout(const std::string& relation, const std::string& attribute,
                   const BinLayout& layout);
  BinLayout load_layout(const std::string& relation, const std::string& attribute) const;
  bool has_layout(const std::string& relation, const std::string& attribute) const;

  void save_histogram(const std::string& relation, const std::string& attribute,
                      const OccurrenceHistogram& histogram);
  OccurrenceHistogram load_histogram(const std::string& relation,
                                     const std::string& attribute) const;

  void set_config(const std::string& key, const std::string& value);
  std::optional<std::string> config(const std::string& key) const;

  // Per-query retrieved-tuple history feeding the re-bin decision.
  void append_overhead(const std::string& relation, const std::string& attribute,
                       std::uint64_t retrieved);
  std::vector<std::uint64_t> overhead_history(const std::string& relation,
                                              const std::string& attribute) const;
  void reset_overhead(const std::string& relation, const std::string& attribute);

  void set_baseline(const std::string& relation, const std::string& attribute,
                    double baseline);
  std::optional<double> baseline(const std::string& relation,
                                 const std::string& attribute) const;

  std::uint64_t metadata_bytes() const;  // layouts + histograms + config

  const std::string& dir() const { return dir_; }

 private:
  std::string dir_;
  std::string path(const std::string& leaf) const;
};

/// Exclusive lock for one metadata directory; throws when already held.
class MetadataLock {
 public:
  explicit MetadataLock(const std::string& dir);
  ~MetadataLock();
  MetadataLock(const MetadataLock&) = delete;
  MetadataLock& operator=(const MetadataLock&) = delete;

 private:
  std::string lock_path_;
  bool held_ = false;
};

/// Baseline per-query cost of a fresh layout: uniform sensitive fetch plus
/// the mean non-sensitive bin tuple count.
double layout_baseline_cost(const BinLayout& layout, const ValueHistogram& hist);

void write_file_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

}  // namespace qbin
