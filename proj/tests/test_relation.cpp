#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "qbin/csv.hpp"
#include "qbin/error.hpp"
#include "qbin/relation.hpp"

#include "helpers.hpp"

using namespace qbin;
using namespace qbin::test;

namespace {

// The employee relation with the defense rows sensitive.
std::vector<TupleRecord> employee_rows() {
  auto make = [](std::string id, std::string eid, std::string dept) {
    TupleRecord r;
    r.tuple_id = std::move(id);
    r.attrs = {{"EId", std::move(eid)}, {"Department", dept}};
    r.sensitive = dept == "Defense";
    return r;
  };
  return {
      make("t1", "E101", "Defense"), make("t2", "E259", "Design"),
      make("t3", "E199", "Design"),  make("t4", "E259", "Defense"),
      make("t5", "E152", "Defense"), make("t6", "E254", "Design"),
      make("t7", "E159", "Defense"), make("t8", "E152", "Design"),
  };
}

}  // namespace

TEST_SUITE("relation") {
  TEST_CASE("partition splits the employee relation by the defense flag") {
    auto part = partition_relation(employee_rows(), "EId");
    CHECK(ids_of(part.sensitive_tuples) == std::set<std::string>{"t1", "t4", "t5", "t7"});
    CHECK(ids_of(part.nonsensitive_tuples) == std::set<std::string>{"t2", "t3", "t6", "t8"});
    CHECK(part.size() == 8);
  }

  TEST_CASE("partition handles empty and single-sided inputs") {
    auto empty = partition_relation({}, "EId");
    CHECK(empty.sensitive_tuples.empty());
    CHECK(empty.nonsensitive_tuples.empty());
    CHECK(value_histogram(empty, "EId").entries.empty());

    auto rows = employee_rows();
    for (auto& r : rows) r.sensitive = false;
    auto all_ns = partition_relation(rows, "EId");
    CHECK(all_ns.sensitive_tuples.empty());
    CHECK(all_ns.nonsensitive_tuples.size() == 8);
  }

  TEST_CASE("partition rejects unknown attributes and duplicate ids") {
    CHECK_THROWS_AS(partition_relation(employee_rows(), "Salary"), Error);
    auto rows = employee_rows();
    rows[1].tuple_id = "t1";
    CHECK_THROWS_AS(partition_relation(rows, "EId"), Error);
  }

  TEST_CASE("value histogram counts both halves") {
    auto part = partition_relation(employee_rows(), "EId");
    auto hist = value_histogram(part, "EId");
    CHECK(hist.at("E259").sensitive == 1);
    CHECK(hist.at("E259").nonsensitive == 1);
    CHECK(hist.at("E101").sensitive == 1);
    CHECK(hist.at("E101").nonsensitive == 0);
    CHECK(hist.at("E199").sensitive == 0);
    CHECK(hist.at("E199").nonsensitive == 1);
    CHECK(hist.at("absent").sensitive == 0);

    std::uint64_t total_s = 0;
    for (const auto& [_, c] : hist.entries) total_s += c.sensitive;
    CHECK(total_s == part.sensitive_tuples.size());
  }

  TEST_CASE("value histogram heavy multiplicities") {
    std::vector<TupleRecord> rows;
    for (int i = 0; i < 1000; ++i) rows.push_back(row("s" + std::to_string(i), "k", "s1", true));
    for (int i = 0; i < 2000; ++i) {
      rows.push_back(row("n" + std::to_string(i), "k", "ns1", false));
    }
    auto hist = value_histogram(partition_relation(rows, "k"), "k");
    CHECK(hist.at("s1").sensitive == 1000);
    CHECK(hist.at("s1").nonsensitive == 0);
    CHECK(hist.at("ns1").nonsensitive == 2000);
  }

  TEST_CASE("single sensitive tuple") {
    auto hist = value_histogram(partition_relation({row("t1", "k", "k", true)}, "k"), "k");
    CHECK(hist.at("k").sensitive == 1);
    CHECK(hist.at("k").nonsensitive == 0);
  }

  TEST_CASE("csv parses quoted fields") {
    auto rows = parse_csv("a,b,sens\n\"x,y\",\"he said \"\"hi\"\"\",1\n");
    REQUIRE(rows.size() == 2);
    CHECK(rows[1][0] == "x,y");
    CHECK(rows[1][1] == "he said \"hi\"");
    auto records = records_from_csv(rows, SensitivitySource::flag_column("sens"));
    REQUIRE(records.size() == 1);
    CHECK(records[0].attr("a") == "x,y");
    CHECK(records[0].sensitive);
  }

  TEST_CASE("csv flag column ingest") {
    auto rows = parse_csv("tuple_id,name,sens\nt1,alice,0\nt2,bob,1\nt3,carol,0\n");
    auto records = records_from_csv(rows, SensitivitySource::flag_column("sens"));
    REQUIRE(records.size() == 3);
    CHECK(records[0].tuple_id == "t1");
    CHECK_FALSE(records[0].sensitive);
    CHECK(records[1].sensitive);
    CHECK(records[0].find_attr("sens") == nullptr);
  }

  TEST_CASE("csv ingest errors carry line numbers") {
    auto rows = parse_csv("a,sens\nx,1\ny\n");
    CHECK_THROWS_WITH_AS(records_from_csv(rows, SensitivitySource::flag_column("sens")),
                         doctest::Contains("line 3"), Error);
    CHECK_THROWS_AS(
        records_from_csv(parse_csv("a,b\nx,y\n"), SensitivitySource::flag_column("sens")),
        Error);
  }

  TEST_CASE("predicate sensitivity matches a per-row oracle") {
    Rng rng(7);
    std::string csv = "tuple_id,dept,name\n";
    std::vector<bool> expected;
    for (int i = 0; i < 50; ++i) {
      bool defense = rng.bounded(2) == 0;
      expected.push_back(defense);
      csv += "t" + std::to_string(i) + "," + (defense ? "Defense" : "Design") + ",n" +
             std::to_string(i) + "\n";
    }
    auto records = records_from_csv(parse_csv(csv),
                                    SensitivitySource::predicate("dept", "Defense"));
    REQUIRE(records.size() == expected.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
      // independent row-by-row evaluation
      CHECK(records[i].sensitive == (records[i].attr("dept") == "Defense"));
      CHECK(records[i].sensitive == expected[i]);
    }
  }

  TEST_CASE("canonical csv round-trips") {
    auto rows = employee_rows();
    auto schema = schema_of(rows);
    std::string text = to_canonical_csv(rows, schema);
    auto reparsed = records_from_csv(parse_csv(text), SensitivitySource::flag_column("sens"),
                                     std::string("tuple_id"));
    REQUIRE(reparsed.size() == rows.size());
    std::sort(rows.begin(), rows.end(),
              [](const TupleRecord& a, const TupleRecord& b) { return a.tuple_id < b.tuple_id; });
    for (std::size_t i = 0; i < rows.size(); ++i) {
      CHECK(reparsed[i].tuple_id == rows[i].tuple_id);
      CHECK(reparsed[i].sensitive == rows[i].sensitive);
      CHECK(reparsed[i].attrs == rows[i].attrs);
    }
    // and the canonical form is a fixpoint
    CHECK(to_canonical_csv(reparsed, schema) == text);
  }

  TEST_CASE("association derived from shared values") {
    auto part = partition_relation(employee_rows(), "EId");
    auto assoc = derive_association(value_histogram(part, "EId"));
    CHECK(assoc == std::map<std::string, std::string>{{"E152", "E152"}, {"E259", "E259"}});
  }
}
