#include "demoval/fairness.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "demoval/digest.hpp"
#include "demoval/error.hpp"
#include "demoval/rng.hpp"

namespace demoval::fairness {

namespace {

struct GroupCounts {
  std::int64_t total[2] = {0, 0};     // by a
  std::int64_t positive[2] = {0, 0};  // y == 1 by a
};

double rate(std::int64_t num, std::int64_t den) {
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

double base_rate_parity(const Dataset& dataset,
                        const std::string& positive_label) {
  GroupCounts counts;
  const std::string pos = normalize_label(positive_label);
  for (const auto& ex : dataset) {
    if (!ex.sensitive.has_value()) {
      throw MetricError("base_rate_parity: example '" + ex.id +
                        "' lacks a sensitive attribute");
    }
    const int a = *ex.sensitive ? 1 : 0;
    counts.total[a] += 1;
    if (normalize_label(ex.label) == pos) counts.positive[a] += 1;
  }
  for (int a : {0, 1}) {
    if (counts.total[a] == 0) {
      throw MetricError("base_rate_parity: group A=" + std::to_string(a) +
                        " is empty");
    }
  }
  return rate(counts.positive[1], counts.total[1]) -
         rate(counts.positive[0], counts.total[0]);
}

double base_rate_parity(const BinaryPredictions& preds) {
  GroupCounts counts;
  for (const auto& p : preds) {
    const int a = p.a ? 1 : 0;
    counts.total[a] += 1;
    if (p.y_true == 1) counts.positive[a] += 1;
  }
  for (int a : {0, 1}) {
    if (counts.total[a] == 0) {
      throw MetricError("base_rate_parity: group A=" + std::to_string(a) +
                        " is empty");
    }
  }
  return rate(counts.positive[1], counts.total[1]) -
         rate(counts.positive[0], counts.total[0]);
}

double demographic_parity_difference(const BinaryPredictions& preds) {
  std::int64_t total[2] = {0, 0};
  std::int64_t predicted_pos[2] = {0, 0};
  for (const auto& p : preds) {
    const int a = p.a ? 1 : 0;
    total[a] += 1;
    if (p.y_pred == 1) predicted_pos[a] += 1;
  }
  for (int a : {0, 1}) {
    if (total[a] == 0) {
      throw MetricError("demographic_parity_difference: group A=" +
                        std::to_string(a) + " is empty");
    }
  }
  return std::abs(rate(predicted_pos[1], total[1]) -
                  rate(predicted_pos[0], total[0]));
}

double equalized_odds_difference(const BinaryPredictions& preds) {
  // cells indexed [y][a]
  std::int64_t total[2][2] = {{0, 0}, {0, 0}};
  std::int64_t predicted_pos[2][2] = {{0, 0}, {0, 0}};
  for (const auto& p : preds) {
    const int y = p.y_true ? 1 : 0;
    const int a = p.a ? 1 : 0;
    total[y][a] += 1;
    if (p.y_pred == 1) predicted_pos[y][a] += 1;
  }
  for (int y : {0, 1}) {
    for (int a : {0, 1}) {
      if (total[y][a] == 0) {
        throw MetricError("equalized_odds_difference: cell (Y=" +
                          std::to_string(y) + ",A=" + std::to_string(a) +
                          ") is empty");
      }
    }
  }
  const double m_tp = std::abs(rate(predicted_pos[1][0], total[1][0]) -
                               rate(predicted_pos[1][1], total[1][1]));
  const double m_fp = std::abs(rate(predicted_pos[0][0], total[0][0]) -
                               rate(predicted_pos[0][1], total[0][1]));
  return std::max(m_tp, m_fp);
}

Dataset construct_parity_split(const Dataset& source, std::size_t size,
                               double target_b,
                               const std::string& positive_label,
                               std::uint64_t seed) {
  if (target_b < -1.0 || target_b > 1.0) {
    throw ConfigError("parity split: target_b must be in [-1,1]");
  }
  const std::size_t per_group = size / 2;
  if (per_group == 0 || size % 2 != 0) {
    throw ConfigError("parity split: size must be even and >= 2");
  }
  // Equal group sizes with rates r1 = (1+b)/2 and r0 = (1-b)/2 realize
  // base rate parity b.
  const auto rounded = [](double x) {
    return static_cast<std::size_t>(std::llround(x));
  };
  std::array<std::array<std::size_t, 2>, 2> want{};  // [a][y]
  want[1][1] = rounded((1.0 + target_b) / 2.0 * static_cast<double>(per_group));
  want[1][0] = per_group - want[1][1];
  want[0][1] = rounded((1.0 - target_b) / 2.0 * static_cast<double>(per_group));
  want[0][0] = per_group - want[0][1];

  std::array<std::array<std::vector<std::size_t>, 2>, 2> cells;  // [a][y]
  const std::string pos = normalize_label(positive_label);
  for (std::size_t i = 0; i < source.size(); ++i) {
    const auto& ex = source[i];
    if (!ex.sensitive.has_value()) {
      throw ConfigError("parity split: example '" + ex.id +
                        "' lacks a sensitive attribute");
    }
    const int a = *ex.sensitive ? 1 : 0;
    const int y = normalize_label(ex.label) == pos ? 1 : 0;
    cells[static_cast<std::size_t>(a)][static_cast<std::size_t>(y)].push_back(i);
  }

  Rng rng(seed);
  Dataset out;
  out.reserve(size);
  for (int a : {1, 0}) {
    for (int y : {1, 0}) {
      auto& cell = cells[static_cast<std::size_t>(a)][static_cast<std::size_t>(y)];
      const std::size_t need = want[static_cast<std::size_t>(a)]
                                   [static_cast<std::size_t>(y)];
      if (cell.size() < need) {
        throw ConfigError("parity split: cell (Y=" + std::to_string(y) +
                          ",A=" + std::to_string(a) + ") has " +
                          std::to_string(cell.size()) + " examples, needs " +
                          std::to_string(need));
      }
      const auto picks = rng.sample_arrangement(cell.size(), need);
      for (const std::size_t p : picks) out.push_back(source[cell[p]]);
    }
  }
  return out;
}

BinaryPredictions binarize(const std::vector<PredictionRow>& rows,
                           const std::string& positive_label) {
  const std::string pos = normalize_label(positive_label);
  BinaryPredictions out;
  out.reserve(rows.size());
  for (const auto& row : rows) {
    BinaryPrediction p;
    p.y_true = normalize_label(row.gold) == pos ? 1 : 0;
    p.y_pred = normalize_label(row.predicted) == pos ? 1 : 0;
    p.a = row.sensitive ? 1 : 0;
    out.push_back(p);
  }
  return out;
}

}  // namespace demoval::fairness
