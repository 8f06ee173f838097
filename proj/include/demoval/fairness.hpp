#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "demoval/types.hpp"

namespace demoval::fairness {

// Per-example binary outcome for group-fairness metrics.
struct BinaryPrediction {
  int y_true = 0;  // in {0,1}
  int y_pred = 0;
  int a = 0;  // sensitive attribute
};

using BinaryPredictions = std::vector<BinaryPrediction>;

// P(Y=1|A=1) - P(Y=1|A=0) over the labeled examples; `positive_label`
// defines Y=1. Both groups must be non-empty.
double base_rate_parity(const Dataset& dataset,
                        const std::string& positive_label);
double base_rate_parity(const BinaryPredictions& preds);

// |P(f=1|A=1) - P(f=1|A=0)|. Both groups must be non-empty.
double demographic_parity_difference(const BinaryPredictions& preds);

// max of the TPR gap and FPR gap between groups. All four (Y,A) cells must
// be non-empty; the error names the offending cell.
double equalized_odds_difference(const BinaryPredictions& preds);

// Parity-controlled sample: equal group sizes with positive rates
// (1 +- target_b)/2, counts rounded to nearest. Sampling within each
// (Y,A) cell is uniform without replacement under the seed. Throws a
// shortage report when a cell lacks population.
Dataset construct_parity_split(const Dataset& source, std::size_t size,
                               double target_b,
                               const std::string& positive_label,
                               std::uint64_t seed);

// Maps per-example model predictions onto binary outcomes: an example is
// positive when its label/prediction equals positive_label after
// normalization; an unparseable prediction counts as the negative class.
struct PredictionRow {
  std::string gold;
  std::string predicted;  // empty = unparseable/refusal
  int sensitive = 0;
};
BinaryPredictions binarize(const std::vector<PredictionRow>& rows,
                           const std::string& positive_label);

// Fairness report schema: {acc, m_dpd, m_eod, bpc, bpt, shots, refusals}.
struct FairnessReport {
  double acc = 0.0;
  double m_dpd = 0.0;
  double m_eod = 0.0;
  double bpc = 0.0;
  double bpt = 0.0;
  int shots = 0;
  int refusals = 0;
};

}  // namespace demoval::fairness
