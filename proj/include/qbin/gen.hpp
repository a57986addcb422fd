#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qbin/relation.hpp"

namespace qbin {

/// Synthetic TPC-H-flavoured data at desk scale.
struct GenConfig {
  std::string table = "lineitem";    // lineitem | orders
  std::uint64_t rows = 1000;
  double sensitivity_pct = 20.0;     // share of sensitive rows
  std::uint64_t distinct_keys = 0;   // 0: ~rows/4 distinct order keys
  std::uint64_t seed = 1;
};

std::vector<TupleRecord> generate_table(const GenConfig& config);
std::vector<std::string> generated_schema(const std::string& table);

/// Parent/child pair respecting the join model: sensitive parent keys never
/// occur in the cleartext child half.
struct JoinInstance {
  std::vector<TupleRecord> parent;  // orders-like, unique keys
  std::vector<TupleRecord> child;   // lineitem-like, FK to parent
};
JoinInstance generate_join_instance(std::uint64_t parents, std::uint64_t children,
                                    double sensitivity_pct, std::uint64_t seed);

}  // namespace qbin
