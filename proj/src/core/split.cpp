#include "teachloop/core/split.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "teachloop/core/digest.hpp"
#include "teachloop/core/error.hpp"
#include "teachloop/core/rng.hpp"
#include "teachloop/core/serialize.hpp"

namespace teachloop {

Dataset build_stratified_split(const Dataset& items, const StratumKey& strata,
                               std::size_t per_stratum, std::uint64_t seed) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < items.items.size(); ++i) {
    groups[strata(items.items[i])].push_back(i);
  }
  for (const auto& [key, members] : groups) {
    if (members.size() < per_stratum) {
      throw Error(ErrorCode::kUnderstockedStratum,
                  "stratum '" + key + "' has " + std::to_string(members.size()) +
                      " items, needs " + std::to_string(per_stratum));
    }
  }

  Rng rng(seed_from(dataset_digest(items) + "/" + std::to_string(seed)));
  Dataset out{items.domain, {}};
  out.items.reserve(groups.size() * per_stratum);
  for (auto& [key, members] : groups) {
    std::vector<std::size_t> order = members;
    rng.shuffle(order);
    order.resize(per_stratum);
    std::sort(order.begin(), order.end());
    for (auto idx : order) out.items.push_back(items.items[idx]);
  }
  return out;
}

std::vector<std::int64_t> apportion(const std::vector<double>& weights,
                                    std::int64_t total) {
  const std::size_t n = weights.size();
  if (n == 0) return {};
  std::vector<double> w = weights;
  for (auto& x : w) x = std::max(0.0, x);
  double sum = std::accumulate(w.begin(), w.end(), 0.0);
  if (sum <= 0.0) {
    std::fill(w.begin(), w.end(), 1.0);
    sum = static_cast<double>(n);
  }

  std::vector<std::int64_t> out(n);
  std::vector<double> remainder(n);
  std::int64_t assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double quota = static_cast<double>(total) * w[i] / sum;
    // Snap values that are integral up to rounding noise (e.g. 4.9999999999).
    const double nearest = std::round(quota);
    if (std::abs(quota - nearest) < 1e-9) quota = nearest;
    out[i] = static_cast<std::int64_t>(std::floor(quota));
    remainder[i] = quota - static_cast<double>(out[i]);
    assigned += out[i];
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++out[order[k % n]];
  return out;
}

}  // namespace teachloop
