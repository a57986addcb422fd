#pragma once

#include <optional>
#include <string>
#include <vector>

#include "qbin/relation.hpp"

namespace qbin {

/// How the sensitivity flag of each row is resolved at ingest time.
/// Either a 0/1 flag column, or a single-column equality predicate
/// ("rows where column == value are sensitive").
struct SensitivitySource {
  std::string column;
  std::optional<std::string> equals;

  bool is_predicate() const { return equals.has_value(); }
  static SensitivitySource flag_column(std::string name) {
    return SensitivitySource{std::move(name), std::nullopt};
  }
  static SensitivitySource predicate(std::string column, std::string value) {
    return SensitivitySource{std::move(column), std::move(value)};
  }
};

/// Dialect: UTF-8, first line header, comma separator, RFC-style
/// double-quote escaping. Newlines inside quoted fields are preserved.
std::vector<std::vector<std::string>> parse_csv(const std::string& text);
std::vector<std::vector<std::string>> read_csv_file(const std::string& path);

/// Builds records from parsed rows. The id column ("tuple_id" when present,
/// otherwise synthesized t1, t2, ...) and the sensitivity column are removed
/// from the record attributes.
std::vector<TupleRecord> records_from_csv(
    const std::vector<std::vector<std::string>>& rows,
    const SensitivitySource& sensitivity,
    const std::optional<std::string>& id_column = std::nullopt);

std::vector<TupleRecord> ingest_csv(
    const std::string& path, const SensitivitySource& sensitivity,
    const std::optional<std::string>& id_column = std::nullopt);

/// Canonical re-emission: tuple_id first, schema attributes, then the "sens"
/// flag; rows sorted by tuple_id. Re-ingesting reproduces identical records.
std::string to_canonical_csv(const std::vector<TupleRecord>& rows,
                             const std::vector<std::string>& schema);
void write_canonical_csv(const std::string& path,
                         const std::vector<TupleRecord>& rows,
                         const std::vector<std::string>& schema);

std::string csv_escape(const std::string& field);

}  // namespace qbin
