#include <doctest.h>

#include "qbin/binning.hpp"
#include "qbin/error.hpp"
#include "qbin/retrieval.hpp"

#include "helpers.hpp"

using namespace qbin;
using namespace qbin::test;

namespace {

std::vector<std::string> seq(const std::string& prefix, int from, int to) {
  std::vector<std::string> out;
  for (int i = from; i <= to; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

BinLayout ten_by_ten_layout() {
  std::vector<std::string> ns{"ns1",  "ns2",  "ns3",  "ns5",  "ns6",
                              "ns11", "ns12", "ns13", "ns14", "ns15"};
  std::map<std::string, std::string> assoc{
      {"s1", "ns1"}, {"s2", "ns2"}, {"s3", "ns3"}, {"s5", "ns5"}, {"s6", "ns6"}};
  return create_bins_base(seq("s", 1, 10), ns, assoc);
}

// Employee instance arranged so that the reference adversarial views come
// out of the rules verbatim (sensitive order E101, E152, E259, E159).
BuiltInstance employee_instance() {
  RandomInstance inst;
  inst.attribute = "EId";
  inst.rows = {
      row("t1", "EId", "E101", true),  row("t5", "EId", "E152", true),
      row("t4", "EId", "E259", true),  row("t7", "EId", "E159", true),
      row("t2", "EId", "E259", false), row("t3", "EId", "E199", false),
      row("t6", "EId", "E254", false), row("t8", "EId", "E152", false),
  };
  BuiltInstance built;
  built.part = partition_relation(inst.rows, inst.attribute);
  built.hist = value_histogram(built.part, inst.attribute);
  built.layout = create_bins_base({"E101", "E152", "E259", "E159"},
                                  built.hist.nonsensitive_values(),
                                  derive_association(built.hist));
  built.key = OwnerKey::generate();
  built.outsourced = outsource(built.layout, built.part, built.key);
  return built;
}

}  // namespace

TEST_SUITE("retrieval-plan") {
  TEST_CASE("rule R1 on the ten-by-ten layout") {
    BinLayout layout = ten_by_ten_layout();
    QueryPlan plan = plan_query(layout, "s2");
    CHECK(plan.sensitive_bin == 2);
    CHECK(plan.nonsensitive_bin == 0);
  }

  TEST_CASE("rule R2 on the ten-by-ten layout") {
    BinLayout layout = ten_by_ten_layout();
    QueryPlan plan = plan_query(layout, "ns14");
    CHECK(plan.nonsensitive_bin == 1);
    CHECK(plan.sensitive_bin == 3);
  }

  TEST_CASE("absent values produce an empty plan") {
    BinLayout layout = ten_by_ten_layout();
    QueryPlan plan = plan_query(layout, "nowhere");
    CHECK(plan.empty());
  }

  TEST_CASE("rules agree for values on both sides") {
    auto values = seq("v", 1, 16);
    std::map<std::string, std::string> assoc;
    for (const auto& v : values) assoc[v] = v;
    BinLayout layout = create_bins_base(values, values, assoc);
    for (const auto& v : values) {
      QueryPlan plan = plan_query(layout, v);  // throws if R1 and R2 disagree
      auto sp = layout.find_sensitive(v);
      auto np = layout.find_nonsensitive(v);
      CHECK(plan.sensitive_bin == sp->bin);
      CHECK(plan.nonsensitive_bin == np->bin);
    }
  }
}

TEST_SUITE("retrieval-execute") {
  TEST_CASE("reference adversarial views for the employee queries") {
    BuiltInstance built = employee_instance();
    CHECK(built.layout.sensitive_bins[1] == std::vector<std::string>{"E101", "E259"});
    CHECK(built.layout.sensitive_bins[0] == std::vector<std::string>{"E152", "E159"});
    CHECK(bin_set(built.layout.nonsensitive_bins[0]) ==
          std::set<std::string>{"E152", "E199"});
    CHECK(bin_set(built.layout.nonsensitive_bins[1]) ==
          std::set<std::string>{"E254", "E259"});

    // query E259: result {t2, t4}; both E101/E259 ciphertexts and the
    // cleartext tuples of E254/E259 cross the wire
    auto r1 = qb_select(built, "E259");
    CHECK(r1 == std::set<std::string>{"t2", "t4"});
    const auto& log = built.outsourced.store->adversarial_view_log();
    REQUIRE(log.size() == 2);
    CHECK(log[0].side == Side::Sensitive);
    CHECK(log[0].returned_ids.size() == 2);
    CHECK(log[1].side == Side::NonSensitive);
    CHECK(std::set<std::string>(log[1].returned_ids.begin(), log[1].returned_ids.end()) ==
          std::set<std::string>{"t2", "t6"});

    // query E101 and E199 share the non-sensitive view
    auto r2 = qb_select(built, "E101");
    CHECK(r2 == std::set<std::string>{"t1"});
    auto r3 = qb_select(built, "E199");
    CHECK(r3 == std::set<std::string>{"t3"});
    REQUIRE(log.size() == 6);
    CHECK(log[3].returned_ids == log[5].returned_ids);  // {t3, t8} both times
    CHECK(std::set<std::string>(log[5].returned_ids.begin(), log[5].returned_ids.end()) ==
          std::set<std::string>{"t3", "t8"});
  }

  TEST_CASE("empty plans touch nothing") {
    BuiltInstance built = employee_instance();
    QueryPlan plan = plan_query(built.layout, "E999");
    auto result = execute_selection(plan, built.layout, *built.outsourced.store,
                                    built.outsourced.histogram, built.key, "EId");
    CHECK(result.tuples.empty());
    CHECK(result.retrieved() == 0);
    CHECK(built.outsourced.store->adversarial_view_log().empty());
  }

  TEST_CASE("fetch-size bound in the fully associated single-tuple case") {
    auto values = seq("v", 1, 16);
    RandomInstance inst;
    inst.attribute = "k";
    int id = 0;
    for (const auto& v : values) {
      inst.rows.push_back(row("s" + std::to_string(id), "k", v, true));
      inst.rows.push_back(row("n" + std::to_string(id++), "k", v, false));
    }
    inst.domain = values;
    BuiltInstance built = build_instance(inst, BinMode::Base);
    for (const auto& v : values) {
      QueryPlan plan = plan_query(built.layout, v);
      auto result = execute_selection(plan, built.layout, *built.outsourced.store,
                                      built.outsourced.histogram, built.key, "k");
      CHECK(result.fetched_sensitive == built.layout.y);
      CHECK(result.fetched_nonsensitive == built.layout.x);
    }
  }

  TEST_CASE("oracle equivalence over random instances and modes") {
    Rng rng(2024);
    for (int iter = 0; iter < 25; ++iter) {
      RandomInstance inst = random_instance(rng, 40, 8);
      BinMode mode = iter % 2 == 0 ? BinMode::Base : BinMode::Padded;
      BuiltInstance built = build_instance(inst, mode, ShuffleSeed{rng.next()});
      for (const auto& w : inst.domain) {
        CHECK(qb_select(built, w) == direct_select(inst.rows, inst.attribute, w));
      }
      for (const auto& w : inst.absent_probes) {
        CHECK(qb_select(built, w).empty());
      }
    }
  }

  TEST_CASE("filter results drops fakes and non-matches") {
    BuiltInstance built = employee_instance();
    QueryPlan plan = plan_query(built.layout, "E101");
    QueryRequest request = build_request(built.layout, plan, built.outsourced.histogram,
                                         built.key, "EId");
    std::uint64_t seq = built.outsourced.store->begin_query();
    auto fetched = built.outsourced.store->fetch_sensitive("sensitive",
                                                           request.sensitive_tokens, seq);
    REQUIRE(fetched.size() == 2);
    auto matches = filter_results(fetched, "E101", built.key, "EId");
    REQUIRE(matches.size() == 1);
    CHECK(matches[0].tuple_id == "t1");
    CHECK(filter_results(fetched, "E777", built.key, "EId").empty());

    // corrupt a fetched ciphertext: decryption must report tampering
    fetched[0].ciphertext[5] ^= 0x40;
    CHECK_THROWS_AS(filter_results(fetched, "E101", built.key, "EId"), Error);
  }

  TEST_CASE("all-fake bins filter to nothing") {
    // one sensitive value, nine non-sensitive: two bins are pure padding
    RandomInstance inst;
    inst.attribute = "k";
    inst.rows.push_back(row("s1", "k", "only", true));
    for (int i = 1; i <= 9; ++i) {
      inst.rows.push_back(row("n" + std::to_string(i), "k", "w" + std::to_string(i), false));
    }
    BuiltInstance built = build_instance(inst, BinMode::Base);
    for (int i = 1; i <= 9; ++i) {
      std::string w = "w" + std::to_string(i);
      auto got = qb_select(built, w);
      CHECK(got == direct_select(inst.rows, "k", w));
    }
  }
}
