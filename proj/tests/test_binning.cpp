#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>

#include "qbin/binning.hpp"
#include "qbin/error.hpp"
#include "qbin/rng.hpp"

#include "helpers.hpp"

using namespace qbin;
using namespace qbin::test;

namespace {

std::vector<std::string> seq(const std::string& prefix, int from, int to) {
  std::vector<std::string> out;
  for (int i = from; i <= to; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

// 10 sensitive + 10 non-sensitive values, s1..s3,s5,s6 associated.
struct TenByTen {
  std::vector<std::string> s = seq("s", 1, 10);
  std::vector<std::string> ns{"ns1",  "ns2",  "ns3",  "ns5",  "ns6",
                              "ns11", "ns12", "ns13", "ns14", "ns15"};
  std::map<std::string, std::string> assoc{{"s1", "ns1"},
                                           {"s2", "ns2"},
                                           {"s3", "ns3"},
                                           {"s5", "ns5"},
                                           {"s6", "ns6"}};
};

std::set<std::set<std::string>> bin_family(const std::vector<std::vector<std::string>>& bins) {
  std::set<std::set<std::string>> out;
  for (const auto& b : bins) out.insert(bin_set(b));
  return out;
}

}  // namespace

TEST_SUITE("factors") {
  TEST_CASE("reference pairs") {
    CHECK(approx_sq_factors(10) == Factors{5, 2});
    CHECK(approx_sq_factors(16) == Factors{4, 4});
    CHECK(approx_sq_factors(82) == Factors{41, 2});
    CHECK(approx_sq_factors(1) == Factors{1, 1});
    CHECK(approx_sq_factors(81) == Factors{9, 9});
    CHECK_THROWS_AS(approx_sq_factors(0), Error);
  }

  TEST_CASE("factor law by exhaustive factorization") {
    auto oracle = [](std::uint64_t n) {
      std::uint64_t best_diff = UINT64_MAX;
      for (std::uint64_t a = 1; a * a <= n; ++a) {
        if (n % a == 0) best_diff = std::min(best_diff, n / a - a);
      }
      return best_diff;
    };
    for (std::uint64_t n = 1; n <= 20000; ++n) {
      Factors f = approx_sq_factors(n);
      CHECK(f.x * f.y == n);
      CHECK(f.x >= f.y);
      if (f.x - f.y != oracle(n)) {
        FAIL("non-minimal factor gap at n=", n);
      }
    }
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
      std::uint64_t n = 1 + rng.bounded(1000000);
      Factors f = approx_sq_factors(n);
      CHECK(f.x * f.y == n);
      CHECK(f.x - f.y == oracle(n));
    }
  }

  TEST_CASE("closest square") {
    CHECK(closest_square(82) == 81);
    CHECK(closest_square(81) == 81);
    CHECK(closest_square(5) == 4);
    CHECK(closest_square(1) == 1);
    for (std::uint64_t n = 1; n <= 5000; ++n) {
      std::uint64_t z = closest_square(n);
      std::uint64_t r = static_cast<std::uint64_t>(std::sqrt(double(z)));
      CHECK(r * r == z);
      CHECK(z <= n);
      CHECK((r + 1) * (r + 1) > n);
    }
  }
}

TEST_SUITE("binning-base") {
  TEST_CASE("ten by ten reference layout under the identity permutation") {
    TenByTen t;
    BinLayout layout = create_bins_base(t.s, t.ns, t.assoc);
    CHECK(layout.x == 5);
    CHECK(layout.y == 2);
    REQUIRE(layout.sensitive_bins.size() == 5);
    REQUIRE(layout.nonsensitive_bins.size() == 2);
    CHECK(layout.sensitive_bins[0] == std::vector<std::string>{"s5", "s10"});
    CHECK(layout.sensitive_bins[1] == std::vector<std::string>{"s1", "s6"});
    CHECK(layout.sensitive_bins[2] == std::vector<std::string>{"s2", "s7"});
    CHECK(layout.sensitive_bins[3] == std::vector<std::string>{"s3", "s8"});
    CHECK(layout.sensitive_bins[4] == std::vector<std::string>{"s4", "s9"});
    CHECK(layout.nonsensitive_bins[0] ==
          std::vector<std::string>{"ns5", "ns1", "ns2", "ns3", "ns11"});
    CHECK(layout.nonsensitive_bins[1] ==
          std::vector<std::string>{"ns12", "ns6", "ns13", "ns14", "ns15"});
    CHECK(layout.fake_tuple_total() == 0);
  }

  TEST_CASE("sixteen fully associated values form a 4x4 matrix") {
    auto values = seq("v", 1, 16);
    std::map<std::string, std::string> assoc;
    for (const auto& v : values) assoc[v] = v;
    BinLayout layout = create_bins_base(values, values, assoc);
    CHECK(layout.x == 4);
    CHECK(layout.y == 4);
    REQUIRE(layout.sensitive_bins.size() == 4);
    REQUIRE(layout.nonsensitive_bins.size() == 4);
    std::set<std::string> seen;
    for (const auto& bin : layout.sensitive_bins) {
      CHECK(bin.size() == 4);
      for (const auto& v : bin) CHECK(seen.insert(v).second);
    }
    CHECK(seen.size() == 16);
    seen.clear();
    for (const auto& bin : layout.nonsensitive_bins) {
      CHECK(bin.size() == 4);
      for (const auto& v : bin) seen.insert(v);
    }
    CHECK(seen.size() == 16);
  }

  TEST_CASE("|S| == x places one value per sensitive bin at slot zero") {
    // Hand trace on a 4-value instance: x=2, y=2, two sensitive values.
    std::vector<std::string> s{"sa", "sb"};
    std::vector<std::string> ns{"na", "nb", "nc", "nd"};
    std::map<std::string, std::string> assoc{{"sa", "na"}, {"sb", "nb"}};
    BinLayout layout = create_bins_base(s, ns, assoc);
    CHECK(layout.x == 2);
    // 1-based round robin: sa -> bin 1, sb -> bin 0, both at slot 0
    CHECK(layout.sensitive_bins[0][0] == "sb");
    CHECK(layout.sensitive_bins[1][0] == "sa");
    // NSB_0 slot j holds the associate of SB_j[0]
    CHECK(layout.nonsensitive_bins[0][0] == "nb");
    CHECK(layout.nonsensitive_bins[0][1] == "na");
  }

  TEST_CASE("placement law holds over random instances") {
    Rng rng(11);
    for (int iter = 0; iter < 60; ++iter) {
      RandomInstance inst = random_instance(rng, 48, 1);
      auto part = partition_relation(inst.rows, inst.attribute);
      auto hist = value_histogram(part, inst.attribute);
      auto s = hist.sensitive_values();
      auto ns = hist.nonsensitive_values();
      std::vector<ValueCount> s_counts;
      for (const auto& v : s) s_counts.push_back({v, 1});
      BinLayout layout =
          create_bins(BinMode::Base, s_counts, ns, derive_association(hist),
                      ShuffleSeed{rng.next()});
      layout.validate();

      // coverage: every input value in exactly one slot on its side
      std::set<std::string> s_seen, ns_seen;
      for (const auto& bin : layout.sensitive_bins) {
        for (const auto& v : bin) {
          if (!is_fake_value(v)) CHECK(s_seen.insert(v).second);
        }
      }
      for (const auto& bin : layout.nonsensitive_bins) {
        for (const auto& v : bin) CHECK(ns_seen.insert(v).second);
      }
      CHECK(s_seen == std::set<std::string>(s.begin(), s.end()));
      CHECK(ns_seen == std::set<std::string>(ns.begin(), ns.end()));

      // placement law via lookup
      for (const auto& [sv, nsv] : layout.association) {
        auto sp = layout.find_sensitive(sv);
        auto np = layout.find_nonsensitive(nsv);
        REQUIRE(sp.has_value());
        REQUIRE(np.has_value());
        CHECK(np->bin == sp->slot);
        CHECK(np->slot == sp->bin);
      }

      // capacity law
      std::uint64_t cap_s = layout.roles_swapped ? layout.x : layout.y;
      std::uint64_t cap_ns = layout.roles_swapped ? layout.y : layout.x;
      for (const auto& bin : layout.sensitive_bins) CHECK(bin.size() <= cap_s);
      for (const auto& bin : layout.nonsensitive_bins) CHECK(bin.size() <= cap_ns);

      // uniform fetch width on the sensitive side
      std::set<std::uint64_t> widths;
      for (std::size_t b = 0; b < layout.sensitive_bins.size(); ++b) {
        widths.insert(layout.sensitive_bins[b].size() + layout.fake_padding[b].size());
      }
      CHECK(widths.size() <= 1);
    }
  }

  TEST_CASE("determinism: same inputs and seed give identical layouts") {
    TenByTen t;
    BinLayout a = create_bins_base(t.s, t.ns, t.assoc, ShuffleSeed{42});
    BinLayout b = create_bins_base(t.s, t.ns, t.assoc, ShuffleSeed{42});
    CHECK(layout_to_json(a) == layout_to_json(b));
    BinLayout c = create_bins_base(t.s, t.ns, t.assoc, ShuffleSeed{43});
    CHECK(layout_to_json(a) != layout_to_json(c));
  }

  TEST_CASE("non 1:1 association is rejected") {
    CHECK_THROWS_WITH_AS(
        create_bins_base({"s1", "s2"}, {"n1", "n2", "n3"},
                         {{"s1", "n1"}, {"s2", "n1"}}),
        doctest::Contains("1:1"), Error);
  }

  TEST_CASE("|S| > |NS| requires the reversed construction") {
    CHECK_THROWS_AS(create_bins_base(seq("s", 1, 5), seq("n", 1, 3), {}), Error);
    BinLayout layout = create_bins(BinMode::Base, {{"s1", 1}, {"s2", 1}, {"s3", 1},
                                                   {"s4", 1}, {"s5", 1}, {"s6", 1}},
                                   {"s1", "s2"}, {{"s1", "s1"}, {"s2", "s2"}});
    CHECK(layout.roles_swapped);
    CHECK(layout.x * layout.y == 6);
    // every value still lands somewhere and pairs transpose
    for (const auto& [sv, nsv] : layout.association) {
      auto sp = layout.find_sensitive(sv);
      auto np = layout.find_nonsensitive(nsv);
      REQUIRE(sp.has_value());
      REQUIRE(np.has_value());
      CHECK(np->bin == sp->slot);
      CHECK(np->slot == sp->bin);
    }
  }

  TEST_CASE("|S| < x pads the sensitive side with fakes") {
    BinLayout layout = create_bins_base({"s1"}, seq("n", 1, 9), {});
    CHECK(layout.x == 3);
    REQUIRE(layout.sensitive_bins.size() == 3);
    std::uint64_t fakes = layout.fake_tuple_total();
    CHECK(fakes == 2);  // two empty bins padded to width 1
    for (std::size_t b = 0; b < 3; ++b) {
      CHECK(layout.sensitive_bins[b].size() + layout.fake_padding[b].size() == 1);
    }
  }
}

TEST_SUITE("binning-extended") {
  TEST_CASE("41 sensitive and 82 non-sensitive values give 9+9 bins") {
    auto s = seq("s", 1, 41);
    auto ns = seq("n", 1, 82);
    std::map<std::string, std::string> assoc;
    for (int i = 1; i <= 41; ++i) assoc["s" + std::to_string(i)] = "n" + std::to_string(i);
    BinLayout layout = create_bins_extended(s, ns, assoc);
    CHECK(layout.sensitive_bins.size() == 9);
    CHECK(layout.nonsensitive_bins.size() == 9);
    std::uint64_t worst_s = 0, worst_ns = 0;
    for (std::size_t b = 0; b < layout.sensitive_bins.size(); ++b) {
      worst_s = std::max<std::uint64_t>(
          worst_s, layout.sensitive_bins[b].size() + layout.fake_padding[b].size());
      CHECK(layout.sensitive_bins[b].size() <= 5);
    }
    for (const auto& bin : layout.nonsensitive_bins) {
      worst_ns = std::max<std::uint64_t>(worst_ns, bin.size());
      CHECK(bin.size() <= 10);
    }
    CHECK(worst_s + worst_ns == 15);
  }

  TEST_CASE("square-path cost arithmetic for 82") {
    // direct factors (41,2): cost 43; square 81: 2*9 + ceil(1/9) = 19
    Factors f = approx_sq_factors(82);
    CHECK(f.x + f.y == 43);
    std::uint64_t z = closest_square(82);
    std::uint64_t root = 9;
    CHECK(2 * root + (82 - z + root - 1) / root == 19);
  }

  TEST_CASE("square counts fall back to the direct path") {
    auto values = seq("v", 1, 16);
    std::map<std::string, std::string> assoc;
    for (const auto& v : values) assoc[v] = v;
    BinLayout base = create_bins_base(values, values, assoc);
    BinLayout ext = create_bins_extended(values, values, assoc);
    CHECK(ext.sensitive_bins == base.sensitive_bins);
    CHECK(ext.nonsensitive_bins == base.nonsensitive_bins);
  }

  TEST_CASE("coverage survives the spill slots") {
    auto s = seq("s", 1, 10);
    auto ns = seq("n", 1, 28);  // factors (7,4) cost 11; square 25: 10+1 = 11 -> direct
    BinLayout layout = create_bins_extended(s, ns, {});
    std::set<std::string> seen;
    for (const auto& bin : layout.nonsensitive_bins) {
      for (const auto& v : bin) CHECK(seen.insert(v).second);
    }
    CHECK(seen.size() == 28);
  }
}

TEST_SUITE("binning-multiplicity") {
  TEST_CASE("greedy trace for counts 10..90 into 3 bins") {
    std::vector<ValueCount> values;
    for (int i = 1; i <= 9; ++i) values.push_back({"s" + std::to_string(i), 10ull * i});
    MultiplicityAssignment a = assign_multiplicity(values, 3, 3);
    std::vector<std::uint64_t> totals = a.real_totals;
    CHECK(totals == std::vector<std::uint64_t>{160, 150, 140});
    CHECK(a.fake_total == 30);
    CHECK(a.padded_total() == 160);
  }

  TEST_CASE("exact mode matches an independent partition enumeration") {
    std::vector<ValueCount> values;
    for (int i = 1; i <= 9; ++i) values.push_back({"s" + std::to_string(i), 10ull * i});

    // oracle: enumerate all ways to split 9 values into 3 unordered triples
    std::vector<std::uint64_t> counts{10, 20, 30, 40, 50, 60, 70, 80, 90};
    std::uint64_t best = UINT64_MAX;
    std::uint64_t partitions = 0;
    std::vector<int> assign(9, -1);
    std::vector<std::uint64_t> totals(3, 0);
    std::vector<int> fill(3, 0);
    std::function<void(int, int)> rec = [&](int i, int opened) {
      if (i == 9) {
        ++partitions;
        std::uint64_t mx = std::max({totals[0], totals[1], totals[2]});
        best = std::min(best, 3 * mx - totals[0] - totals[1] - totals[2]);
        return;
      }
      for (int b = 0; b < std::min(3, opened + 1); ++b) {
        if (fill[b] == 3) continue;
        fill[b]++;
        totals[b] += counts[i];
        rec(i + 1, std::max(opened, b + 1));
        totals[b] -= counts[i];
        fill[b]--;
      }
    };
    rec(0, 0);
    CHECK(partitions == 280);
    CHECK(best == 0);  // 150/150/150 is reachable

    MultiplicityAssignment exact = assign_multiplicity_optimal(values, 3, 3);
    CHECK(exact.fake_total == best);
    for (auto t : exact.real_totals) CHECK(t == 150);
  }

  TEST_CASE("equal counts need no fakes") {
    std::vector<ValueCount> values;
    for (int i = 1; i <= 9; ++i) values.push_back({"v" + std::to_string(i), 7});
    MultiplicityAssignment a = assign_multiplicity(values, 3, 3);
    CHECK(a.fake_total == 0);
  }

  TEST_CASE("uniformity law on random instances") {
    Rng rng(5);
    for (int iter = 0; iter < 40; ++iter) {
      std::uint64_t bins = 1 + rng.bounded(6);
      std::uint64_t cap = 1 + rng.bounded(6);
      std::uint64_t n = 1 + rng.bounded(bins * cap);
      std::vector<ValueCount> values;
      for (std::uint64_t i = 0; i < n; ++i) {
        values.push_back({"v" + std::to_string(i), 1 + rng.bounded(50)});
      }
      MultiplicityAssignment a = assign_multiplicity(values, bins, cap);
      std::uint64_t target = a.padded_total();
      for (std::size_t b = 0; b < bins; ++b) {
        CHECK(a.real_totals[b] + a.fake_counts[b] == target);
      }
      std::size_t placed = 0;
      for (const auto& bin : a.bins) placed += bin.size();
      CHECK(placed == n);
    }
  }

  TEST_CASE("overfull instances are rejected") {
    std::vector<ValueCount> values(10, ValueCount{"v", 1});
    for (int i = 0; i < 10; ++i) values[i].value = "v" + std::to_string(i);
    CHECK_THROWS_AS(assign_multiplicity(values, 3, 3), Error);
  }

  TEST_CASE("padded layout equalizes per-bin totals") {
    std::vector<ValueCount> s;
    for (int i = 1; i <= 9; ++i) s.push_back({"v" + std::to_string(i), 10ull * i});
    auto ns = seq("n", 1, 9);
    BinLayout layout = create_bins_padded(s, ns, {});
    REQUIRE(layout.bin_tuple_totals.size() == 3);
    for (auto t : layout.bin_tuple_totals) CHECK(t == 160);
    CHECK(layout.fake_tuple_total() == 30);
  }
}

TEST_SUITE("binning-workload") {
  TEST_CASE("frequent associates spread across all sensitive bins") {
    auto s = seq("s", 1, 9);
    auto ns = seq("ns", 1, 9);
    std::map<std::string, std::string> assoc;
    for (int i = 1; i <= 9; ++i) assoc["s" + std::to_string(i)] = "ns" + std::to_string(i);
    WorkloadProfile profile{{"ns1", "ns4", "ns7"}};
    BinLayout layout = create_bins_workload(s, ns, assoc, profile);
    CHECK(layout.nonsensitive_bins[0] == std::vector<std::string>{"ns1", "ns4", "ns7"});
    CHECK(layout.sensitive_bins[0][0] == "s1");
    CHECK(layout.sensitive_bins[1][0] == "s4");
    CHECK(layout.sensitive_bins[2][0] == "s7");
    // workload law: the associates of one frequent group occupy x distinct bins
    std::set<std::uint32_t> bins;
    for (const auto& f : profile.frequent_values) {
      auto sp = layout.find_sensitive(f.substr(0, 1) == "n" ? "s" + f.substr(2) : f);
      REQUIRE(sp.has_value());
      bins.insert(sp->bin);
    }
    CHECK(bins.size() == 3);
  }

  TEST_CASE("empty profile reduces to plain fill order") {
    auto s = seq("s", 1, 9);
    auto ns = seq("ns", 1, 9);
    std::map<std::string, std::string> assoc;
    for (int i = 1; i <= 9; ++i) assoc["s" + std::to_string(i)] = "ns" + std::to_string(i);
    BinLayout layout = create_bins_workload(s, ns, assoc, WorkloadProfile{});
    std::set<std::string> seen;
    for (const auto& bin : layout.nonsensitive_bins) {
      for (const auto& v : bin) seen.insert(v);
    }
    CHECK(seen.size() == 9);
    layout.validate();
  }

  TEST_CASE("frequent value outside the domain is rejected") {
    CHECK_THROWS_AS(create_bins_workload(seq("s", 1, 4), seq("ns", 1, 4), {},
                                         WorkloadProfile{{"zzz"}}),
                    Error);
  }
}

TEST_SUITE("binning-insert") {
  TEST_CASE("old values leave the layout untouched") {
    TenByTen t;
    BinLayout layout = create_bins_base(t.s, t.ns, t.assoc);
    InsertResult r = insert_batch(layout, {"s1", "s7"}, {"ns2", "ns12"});
    CHECK(r.layout.sensitive_bins == layout.sensitive_bins);
    CHECK(r.layout.nonsensitive_bins == layout.nonsensitive_bins);
    CHECK(r.layout.version == layout.version + 1);
    CHECK(r.new_sensitive_values.empty());
    CHECK(r.new_nonsensitive_values.empty());
  }

  TEST_CASE("a full batch of new values grows every bin by one") {
    TenByTen t;
    BinLayout layout = create_bins_base(t.s, t.ns, t.assoc);
    InsertResult r = insert_batch(layout, seq("x", 1, 5), seq("y", 1, 2));
    for (std::size_t b = 0; b < 5; ++b) {
      CHECK(r.layout.sensitive_bins[b].size() + r.layout.fake_padding[b].size() ==
            layout.sensitive_bins[b].size() + layout.fake_padding[b].size() + 1);
    }
    std::size_t ns_before = 0, ns_after = 0;
    for (const auto& b : layout.nonsensitive_bins) ns_before += b.size();
    for (const auto& b : r.layout.nonsensitive_bins) ns_after += b.size();
    CHECK(ns_after == ns_before + 2);
    CHECK(r.layout.insert_rounds == 1);
  }

  TEST_CASE("under-filled batches are completed with fakes") {
    TenByTen t;
    BinLayout layout = create_bins_base(t.s, t.ns, t.assoc);
    InsertResult r = insert_batch(layout, {"x1"}, {});
    std::set<std::uint64_t> widths;
    for (std::size_t b = 0; b < 5; ++b) {
      widths.insert(r.layout.sensitive_bins[b].size() + r.layout.fake_padding[b].size());
    }
    CHECK(widths == std::set<std::uint64_t>{3});
    CHECK(r.new_fake_values.size() == 4);
  }

  TEST_CASE("new value with an existing associate is co-retrievable") {
    TenByTen t;
    BinLayout layout = create_bins_base(t.s, t.ns, t.assoc);
    // s4 exists and is unassociated; insert the matching cleartext value
    InsertResult r = insert_batch(layout, {}, {"s4"});
    auto np = r.layout.find_nonsensitive("s4");
    REQUIRE(np.has_value());
    auto plan_pair = r.layout.pair_overrides.find("s4");
    REQUIRE(plan_pair != r.layout.pair_overrides.end());
    auto sp = r.layout.find_sensitive("s4");
    REQUIRE(sp.has_value());
    CHECK(plan_pair->second.first == sp->bin);
    CHECK(plan_pair->second.second == np->bin);
  }

  TEST_CASE("duplicated batch entries are a consistency error") {
    TenByTen t;
    BinLayout layout = create_bins_base(t.s, t.ns, t.assoc);
    CHECK_THROWS_AS(insert_batch(layout, {"x1", "x1"}, {}), Error);
  }
}

TEST_SUITE("binning-rebin") {
  TEST_CASE("threshold ratios") {
    CHECK_FALSE(should_rebin({10, 10, 10}, 10.0, 1.2));  // ratio 1.0
    CHECK(should_rebin({13, 13, 13}, 10.0, 1.2));        // ratio 1.3
    CHECK_FALSE(should_rebin({}, 10.0, 1.2));
    CHECK_THROWS_AS(should_rebin({10}, 10.0, 1.0), Error);
  }
}

TEST_SUITE("binning-persistence") {
  TEST_CASE("layout json round-trips and checksums") {
    TenByTen t;
    BinLayout layout = create_bins_base(t.s, t.ns, t.assoc, ShuffleSeed{77});
    std::string text = layout_to_json(layout);
    BinLayout back = layout_from_json(text);
    CHECK(layout_to_json(back) == text);
    CHECK(back.x == layout.x);
    CHECK(back.sensitive_bins == layout.sensitive_bins);
    CHECK(back.seed == layout.seed);

    // flip a byte inside the payload
    std::string broken = text;
    auto pos = broken.find("\"s5\"");
    REQUIRE(pos != std::string::npos);
    broken[pos + 1] = 'z';
    CHECK_THROWS_WITH_AS(layout_from_json(broken), doctest::Contains("checksum"), Error);
  }

  TEST_CASE("save and load through a file") {
    TenByTen t;
    BinLayout layout = create_bins_base(t.s, t.ns, t.assoc);
    std::string path = (std::filesystem::temp_directory_path() / "qbin_layout_test.json").string();
    save_layout(path, layout);
    BinLayout back = load_layout(path);
    CHECK(back.nonsensitive_bins == layout.nonsensitive_bins);
    std::filesystem::remove(path);
  }
}
