#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cvdsched/types.hpp"

namespace cvdsched {

struct PredictionRow {
  std::int64_t person_id = 0;
  double s = 0.0;               // origin
  double w = 0.0;               // window length
  double predicted_risk = 0.0;  // P(event in (s, s + w])
  double observed_time = 0.0;   // years since s
  bool event = false;
};

using PredictionSet = std::vector<PredictionRow>;

struct Concordance {
  double value = 0.5;
  double se = 0.0;
  double usable_pairs = 0.0;
};

/// Harrell concordance within the window: a pair (i, j) is usable when i has
/// an event at t_i < min(t_j, w); ties in predicted risk count one half.
/// The standard error comes from per-subject pair contributions.
Concordance dynamic_cindex(std::span<const PredictionRow> preds);

/// Pair-count weighted mean of several concordance estimates.
Concordance pooled_cindex(std::span<const Concordance> parts);

/// Inverse-probability-of-censoring weighted Brier score at the window end,
/// with Kaplan-Meier censoring weights from the same rows.
double brier_score(std::span<const PredictionRow> preds);

/// Kaplan-Meier event-free probability at w.
double km_survival(std::span<const PredictionRow> preds, double w);

}  // namespace cvdsched
