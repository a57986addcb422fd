#include "qbin/csv.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "qbin/error.hpp"

namespace qbin {

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;

  auto end_field = [&] {
    row.push_back(field);
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    rows.push_back(std::move(row));
    row.clear();
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field.empty()) {
          fail(ErrorKind::Ingest,
               "line " + std::to_string(line) + ": quote inside unquoted field");
        }
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        break;
      case '\n':
        end_row();
        ++line;
        break;
      default:
        field.push_back(c);
        field_started = true;
        break;
    }
  }
  if (in_quotes) {
    fail(ErrorKind::Ingest, "line " + std::to_string(line) + ": unterminated quote");
  }
  if (field_started || !row.empty()) end_row();
  return rows;
}

std::vector<std::vector<std::string>> read_csv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Ingest, "cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str());
}

namespace {

bool parse_flag(const std::string& raw, std::size_t line) {
  if (raw == "0" || raw == "false") return false;
  if (raw == "1" || raw == "true") return true;
  fail(ErrorKind::Ingest,
       "line " + std::to_string(line) + ": sensitivity flag '" + raw + "' is not 0/1");
}

}  // namespace

std::vector<TupleRecord> records_from_csv(
    const std::vector<std::vector<std::string>>& rows,
    const SensitivitySource& sensitivity,
    const std::optional<std::string>& id_column) {
  if (rows.empty()) return {};

  const std::vector<std::string>& header = rows.front();
  auto column_of = [&](const std::string& name) -> std::optional<std::size_t> {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  };

  auto sens_col = column_of(sensitivity.column);
  if (!sens_col) {
    fail(ErrorKind::Usage, "sensitivity column '" + sensitivity.column + "' not in header");
  }

  std::optional<std::size_t> id_col;
  std::string id_name = id_column.value_or("tuple_id");
  id_col = column_of(id_name);
  if (id_column && !id_col) {
    fail(ErrorKind::Usage, "id column '" + *id_column + "' not in header");
  }

  // The predicate column stays a data attribute; a plain flag column does not.
  std::set<std::size_t> skip;
  if (!sensitivity.is_predicate()) skip.insert(*sens_col);
  if (id_col) skip.insert(*id_col);

  std::vector<TupleRecord> records;
  std::set<std::string> ids;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& cells = rows[r];
    std::size_t line = r + 1;
    if (cells.size() != header.size()) {
      fail(ErrorKind::Ingest, "line " + std::to_string(line) + ": expected " +
                                  std::to_string(header.size()) + " fields, got " +
                                  std::to_string(cells.size()));
    }
    TupleRecord rec;
    rec.tuple_id = id_col ? cells[*id_col] : "t" + std::to_string(r);
    if (!ids.insert(rec.tuple_id).second) {
      fail(ErrorKind::Ingest,
           "line " + std::to_string(line) + ": duplicate tuple_id '" + rec.tuple_id + "'");
    }
    rec.sensitive = sensitivity.is_predicate()
                        ? cells[*sens_col] == *sensitivity.equals
                        : parse_flag(cells[*sens_col], line);
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (skip.count(c)) continue;
      rec.attrs.emplace_back(header[c], cells[c]);
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<TupleRecord> ingest_csv(const std::string& path,
                                    const SensitivitySource& sensitivity,
                                    const std::optional<std::string>& id_column) {
  return records_from_csv(read_csv_file(path), sensitivity, id_column);
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

std::string to_canonical_csv(const std::vector<TupleRecord>& rows,
                             const std::vector<std::string>& schema) {
  std::vector<const TupleRecord*> sorted;
  sorted.reserve(rows.size());
  for (const auto& r : rows) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(),
            [](const TupleRecord* a, const TupleRecord* b) { return a->tuple_id < b->tuple_id; });

  std::string out = "tuple_id";
  for (const auto& a : schema) out += "," + csv_escape(a);
  out += ",sens\n";
  for (const TupleRecord* r : sorted) {
    out += csv_escape(r->tuple_id);
    for (const auto& a : schema) {
      const std::string* v = r->find_attr(a);
      out += ",";
      out += csv_escape(v ? *v : "");
    }
    out += r->sensitive ? ",1\n" : ",0\n";
  }
  return out;
}

void write_canonical_csv(const std::string& path, const std::vector<TupleRecord>& rows,
                         const std::vector<std::string>& schema) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Store, "cannot write '" + path + "'");
  out << to_canonical_csv(rows, schema);
}

}  // namespace qbin
