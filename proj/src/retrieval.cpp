#include "qbin/retrieval.hpp"

#include <algorithm>

#include "qbin/error.hpp"

namespace qbin {

QueryPlan plan_query(const BinLayout& layout, const std::string& value) {
  QueryPlan plan;
  plan.target_value = value;
  if (is_fake_value(value)) return plan;

  if (auto it = layout.pair_overrides.find(value); it != layout.pair_overrides.end()) {
    plan.sensitive_bin = it->second.first;
    plan.nonsensitive_bin = it->second.second;
    return plan;
  }

  const std::uint64_t sb_count = layout.sensitive_bins.size();
  const std::uint64_t nsb_count = layout.nonsensitive_bins.size();

  auto sp = layout.find_sensitive(value);
  if (sp) {
    plan.sensitive_bin = sp->bin;
    if (nsb_count > 0) {
      // Rule R1; slots past the bin range (extension spill, insert growth)
      // wrap around.
      plan.nonsensitive_bin = static_cast<std::uint32_t>(sp->slot % nsb_count);
    }
  }
  auto np = layout.find_nonsensitive(value);
  if (np) {
    QueryPlan r2;
    r2.nonsensitive_bin = np->bin;
    if (sb_count > 0) {
      r2.sensitive_bin = static_cast<std::uint32_t>(np->slot % sb_count);
    }
    if (sp) {
      // Rules R1 and R2 must agree when the value sits on both sides.
      if (r2.sensitive_bin != plan.sensitive_bin ||
          r2.nonsensitive_bin != plan.nonsensitive_bin) {
        fail(ErrorKind::Integrity,
             "R1/R2 disagree for '" + value + "'; layout is corrupt");
      }
    } else {
      plan.sensitive_bin = r2.sensitive_bin;
      plan.nonsensitive_bin = r2.nonsensitive_bin;
    }
  }
  return plan;
}

QueryRequest build_request(const BinLayout& layout, const QueryPlan& plan,
                           const OccurrenceHistogram& histogram, const OwnerKey& key,
                           const std::string& attribute) {
  QueryRequest request;
  if (plan.sensitive_bin) {
    std::uint32_t b = *plan.sensitive_bin;
    if (b >= layout.sensitive_bins.size()) {
      fail(ErrorKind::Integrity, "plan names a sensitive bin that does not exist");
    }
    auto add_tokens = [&](const std::string& value) {
      std::uint64_t n = histogram.count(attribute, value);
      for (std::uint64_t occ = 1; occ <= n; ++occ) {
        request.sensitive_tokens.push_back(occurrence_token(key, attribute, value, occ));
      }
    };
    for (const auto& value : layout.sensitive_bins[b]) add_tokens(value);
    if (b < layout.fake_padding.size()) {
      for (const auto& fake : layout.fake_padding[b]) add_tokens(fake.value);
    }
  }
  if (plan.nonsensitive_bin) {
    std::uint32_t b = *plan.nonsensitive_bin;
    if (b >= layout.nonsensitive_bins.size()) {
      fail(ErrorKind::Integrity, "plan names a non-sensitive bin that does not exist");
    }
    request.nonsensitive_values = layout.nonsensitive_bins[b];
  }
  return request;
}

std::vector<TupleRecord> filter_results(const std::vector<EncryptedRecord>& fetched,
                                        const std::string& value, const OwnerKey& key,
                                        const std::string& attribute) {
  std::vector<TupleRecord> out;
  for (const auto& rec : fetched) {
    auto plain = aead_decrypt(key, rec.ciphertext);
    if (!plain) {
      fail(ErrorKind::Integrity, "record " + rec.record_id + " failed authentication");
    }
    auto [row, fake] = decode_tuple(*plain);
    if (fake) continue;
    if (row.attr(attribute) == value) out.push_back(std::move(row));
  }
  return out;
}

namespace {

SelectionResult run_fetches(const QueryPlan& plan, const QueryRequest& request,
                            CloudStore& store, const OwnerKey& key,
                            const std::string& attribute, const std::string& op) {
  SelectionResult result;
  std::uint64_t seq = store.begin_query();
  if (plan.sensitive_bin) {
    auto fetched = store.fetch_sensitive("sensitive", request.sensitive_tokens, seq, op);
    result.fetched_sensitive = fetched.size();
    auto matches = filter_results(fetched, plan.target_value, key, attribute);
    result.tuples.insert(result.tuples.end(), matches.begin(), matches.end());
  }
  if (plan.nonsensitive_bin) {
    auto fetched = store.fetch_nonsensitive("nonsensitive", attribute,
                                            request.nonsensitive_values, seq, op);
    result.fetched_nonsensitive = fetched.size();
    for (auto& row : fetched) {
      if (row.attr(attribute) == plan.target_value) result.tuples.push_back(std::move(row));
    }
  }
  std::sort(result.tuples.begin(), result.tuples.end(),
            [](const TupleRecord& a, const TupleRecord& b) { return a.tuple_id < b.tuple_id; });
  return result;
}

}  // namespace

SelectionResult execute_selection(const QueryPlan& plan, const BinLayout& layout,
                                  CloudStore& store, const OccurrenceHistogram& histogram,
                                  const OwnerKey& key, const std::string& attribute) {
  if (plan.empty()) return {};
  QueryRequest request = build_request(layout, plan, histogram, key, attribute);
  return run_fetches(plan, request, store, key, attribute, "selection");
}

SelectionResult execute_pair(std::uint32_t sensitive_bin, std::uint32_t nonsensitive_bin,
                             const std::string& target, const BinLayout& layout,
                             CloudStore& store, const OccurrenceHistogram& histogram,
                             const OwnerKey& key, const std::string& attribute) {
  QueryPlan plan;
  plan.target_value = target;
  plan.sensitive_bin = sensitive_bin;
  plan.nonsensitive_bin = nonsensitive_bin;
  QueryRequest request = build_request(layout, plan, histogram, key, attribute);
  return run_fetches(plan, request, store, key, attribute, "selection");
}

}  // namespace qbin
