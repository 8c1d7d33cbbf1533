#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "teachloop/core/types.hpp"

namespace teachloop {

using StratumKey = std::function<std::string(const TaskItem&)>;

/// Balanced stratified sample: exactly `per_stratum` items from every stratum.
/// Output is grouped by stratum key (sorted); within a stratum items keep their
/// dataset order. Selection depends only on the dataset digest and `seed`.
Dataset build_stratified_split(const Dataset& items, const StratumKey& strata,
                               std::size_t per_stratum, std::uint64_t seed);

/// Largest-remainder apportionment of `total` units proportional to `weights`.
/// Ties on the fractional part go to the lower index. All-zero weights split
/// uniformly.
std::vector<std::int64_t> apportion(const std::vector<double>& weights,
                                    std::int64_t total);

}  // namespace teachloop
