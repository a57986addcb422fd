#include "qbin/gen.hpp"

#include <set>

#include "qbin/error.hpp"
#include "qbin/rng.hpp"

namespace qbin {

namespace {

const char* kShipModes[] = {"AIR", "RAIL", "SHIP", "TRUCK", "MAIL"};
const char* kStatuses[] = {"O", "F", "P"};

std::string money(std::uint64_t cents) {
  return std::to_string(cents / 100) + "." + (cents % 100 < 10 ? "0" : "") +
         std::to_string(cents % 100);
}

}  // namespace

std::vector<std::string> generated_schema(const std::string& table) {
  if (table == "lineitem") {
    return {"orderkey", "partkey", "suppkey", "linenumber", "quantity", "price", "shipmode"};
  }
  if (table == "orders") {
    return {"orderkey", "custkey", "status", "totalprice"};
  }
  fail(ErrorKind::Usage, "unknown table '" + table + "' (lineitem|orders)");
}

std::vector<TupleRecord> generate_table(const GenConfig& config) {
  if (config.sensitivity_pct < 0 || config.sensitivity_pct > 100) {
    fail(ErrorKind::Usage, "sensitivity percentage out of range");
  }
  Rng rng(config.seed);
  std::uint64_t distinct = config.distinct_keys
                               ? config.distinct_keys
                               : std::max<std::uint64_t>(1, config.rows / 4);

  std::vector<TupleRecord> rows;
  rows.reserve(config.rows);
  if (config.table == "lineitem") {
    for (std::uint64_t i = 0; i < config.rows; ++i) {
      TupleRecord rec;
      rec.tuple_id = "L" + std::to_string(i + 1);
      std::uint64_t orderkey = 100000 + rng.bounded(distinct);
      rec.attrs = {
          {"orderkey", std::to_string(orderkey)},
          {"partkey", std::to_string(1 + rng.bounded(2000))},
          {"suppkey", std::to_string(1 + rng.bounded(100))},
          {"linenumber", std::to_string(1 + rng.bounded(7))},
          {"quantity", std::to_string(1 + rng.bounded(50))},
          {"price", money(100 + rng.bounded(10000000))},
          {"shipmode", kShipModes[rng.bounded(5)]},
      };
      rec.sensitive = rng.next_double() * 100.0 < config.sensitivity_pct;
      rows.push_back(std::move(rec));
    }
    return rows;
  }
  if (config.table == "orders") {
    for (std::uint64_t i = 0; i < config.rows; ++i) {
      TupleRecord rec;
      rec.tuple_id = "O" + std::to_string(i + 1);
      rec.attrs = {
          {"orderkey", std::to_string(100000 + i)},
          {"custkey", std::to_string(1 + rng.bounded(1000))},
          {"status", kStatuses[rng.bounded(3)]},
          {"totalprice", money(1000 + rng.bounded(50000000))},
      };
      rec.sensitive = rng.next_double() * 100.0 < config.sensitivity_pct;
      rows.push_back(std::move(rec));
    }
    return rows;
  }
  fail(ErrorKind::Usage, "unknown table '" + config.table + "' (lineitem|orders)");
}

JoinInstance generate_join_instance(std::uint64_t parents, std::uint64_t children,
                                    double sensitivity_pct, std::uint64_t seed) {
  Rng rng(seed);
  JoinInstance out;
  std::vector<std::string> keys;
  std::set<std::uint64_t> sensitive_parents;
  for (std::uint64_t i = 0; i < parents; ++i) {
    TupleRecord rec;
    rec.tuple_id = "O" + std::to_string(i + 1);
    std::string key = std::to_string(100000 + i);
    keys.push_back(key);
    rec.attrs = {
        {"orderkey", key},
        {"custkey", std::to_string(1 + rng.bounded(1000))},
        {"status", kStatuses[rng.bounded(3)]},
        {"totalprice", money(1000 + rng.bounded(50000000))},
    };
    rec.sensitive = rng.next_double() * 100.0 < sensitivity_pct;
    if (rec.sensitive) sensitive_parents.insert(i);
    out.parent.push_back(std::move(rec));
  }
  for (std::uint64_t i = 0; i < children; ++i) {
    TupleRecord rec;
    rec.tuple_id = "L" + std::to_string(i + 1);
    std::uint64_t p = parents == 0 ? 0 : rng.bounded(parents);
    rec.attrs = {
        {"orderkey", parents == 0 ? "0" : keys[p]},
        {"partkey", std::to_string(1 + rng.bounded(2000))},
        {"quantity", std::to_string(1 + rng.bounded(50))},
        {"shipmode", kShipModes[rng.bounded(5)]},
    };
    // A child of a sensitive parent must itself be sensitive; anything else
    // breaks the join model.
    rec.sensitive = sensitive_parents.count(p) > 0 ||
                    rng.next_double() * 100.0 < sensitivity_pct;
    out.child.push_back(std::move(rec));
  }
  return out;
}

}  // namespace qbin
