#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "demoval/types.hpp"
#include "demoval/value_table.hpp"

namespace demoval::noise {

struct NoisyPool {
  CandidatePool pool;
  std::set<std::string> flipped_ids;
};

// Flips the labels of exactly round(rate * n) uniformly chosen demos:
// binary tasks flip to the other label, multi-class uniformly over the
// other labels. Every changed label differs from the original.
NoisyPool inject_label_noise(const CandidatePool& pool, const TaskSpec& task,
                             double rate, std::uint64_t seed);

// Rank-based detection summary: demos sorted ascending by value (ties by
// id); per cutoff k, the number of flipped ids in the bottom k; plus the
// mean 1-based rank of the flipped ids.
struct DetectionReport {
  std::map<int, int> counts_by_cutoff;
  double average_rank = 0.0;
  std::size_t n = 0;
  std::size_t n_flipped = 0;
};

DetectionReport detection_report(const ValueTable& values,
                                 const std::set<std::string>& flipped,
                                 const std::vector<int>& cutoffs);

// Report JSON: {"cutoffs":{"k":count},"average_rank":...,"n":...,"n_flipped":...}
std::string report_to_json(const DetectionReport& report);

}  // namespace demoval::noise
