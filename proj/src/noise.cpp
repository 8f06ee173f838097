#include "demoval/noise.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "demoval/error.hpp"
#include "demoval/rng.hpp"

namespace demoval::noise {

using nlohmann::json;

NoisyPool inject_label_noise(const CandidatePool& pool, const TaskSpec& task,
                             double rate, std::uint64_t seed) {
  if (rate < 0.0 || rate > 1.0) {
    throw ConfigError("label noise: rate must be in [0,1]");
  }
  if (task.label_set.size() < 2) {
    throw ConfigError("label noise: need at least two labels to flip");
  }
  const std::size_t n_flips = static_cast<std::size_t>(
      std::llround(rate * static_cast<double>(pool.size())));

  NoisyPool out;
  out.pool = pool;
  if (n_flips == 0) return out;

  Rng rng(seed);
  const auto picks = rng.sample_arrangement(pool.size(), n_flips);
  for (const std::size_t idx : picks) {
    Demonstration& demo = out.pool.demos[idx];
    // labels other than the current one, in label-set order
    std::vector<std::string> others;
    for (const auto& label : task.label_set) {
      if (normalize_label(label) != normalize_label(demo.label)) {
        others.push_back(label);
      }
    }
    if (others.empty()) {
      throw ConfigError("label noise: demo '" + demo.id +
                        "' has no alternative label");
    }
    demo.label = others[rng.uniform_below(others.size())];
    out.flipped_ids.insert(demo.id);
  }
  return out;
}

DetectionReport detection_report(const ValueTable& values,
                                 const std::set<std::string>& flipped,
                                 const std::vector<int>& cutoffs) {
  for (const auto& id : flipped) {
    if (!values.has(id)) {
      throw ConfigError("detection report: flipped id '" + id +
                        "' not in the value table");
    }
  }
  const std::vector<std::string> order = values.ids_by_value_ascending();

  DetectionReport report;
  report.n = order.size();
  report.n_flipped = flipped.size();

  std::int64_t rank_sum = 0;
  std::vector<int> flipped_prefix(order.size() + 1, 0);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const bool is_flipped = flipped.count(order[i]) != 0;
    flipped_prefix[i + 1] = flipped_prefix[i] + (is_flipped ? 1 : 0);
    if (is_flipped) rank_sum += static_cast<std::int64_t>(i) + 1;
  }
  for (const int k : cutoffs) {
    const std::size_t bound =
        std::min(order.size(), static_cast<std::size_t>(std::max(k, 0)));
    report.counts_by_cutoff[k] = flipped_prefix[bound];
  }
  report.average_rank =
      flipped.empty() ? 0.0
                      : static_cast<double>(rank_sum) /
                            static_cast<double>(flipped.size());
  return report;
}

std::string report_to_json(const DetectionReport& report) {
  json cutoffs = json::object();
  for (const auto& [k, count] : report.counts_by_cutoff) {
    cutoffs[std::to_string(k)] = count;
  }
  json obj{{"cutoffs", cutoffs},
           {"average_rank", report.average_rank},
           {"n", report.n},
           {"n_flipped", report.n_flipped}};
  return obj.dump(2) + "\n";
}

}  // namespace demoval::noise
