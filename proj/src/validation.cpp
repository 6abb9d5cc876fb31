#include "cvdsched/validation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace cvdsched {

namespace {

class Fenwick {
 public:
  explicit Fenwick(std::size_t n) : tree_(n + 1, 0.0) {}
  void add(std::size_t i, double v) {
    for (++i; i < tree_.size(); i += i & (~i + 1)) tree_[i] += v;
  }
  // Sum over [0, i).
  double prefix(std::size_t i) const {
    double s = 0.0;
    for (; i > 0; i -= i & (~i + 1)) s += tree_[i];
    return s;
  }

 private:
  std::vector<double> tree_;
};

double common_window(std::span<const PredictionRow> preds) {
  if (preds.empty()) throw DataError("empty prediction set");
  const double w = preds.front().w;
  for (const auto& p : preds) {
    if (p.w != w) throw DataError("prediction rows mix different windows");
    if (!(p.observed_time > 0.0)) throw DataError("observed_time must be > 0");
    if (!std::isfinite(p.predicted_risk)) throw DataError("non-finite predicted risk");
  }
  return w;
}

}  // namespace

Concordance dynamic_cindex(std::span<const PredictionRow> preds) {
  const double w = common_window(preds);
  const std::size_t n = preds.size();

  std::vector<double> levels(n);
  for (std::size_t i = 0; i < n; ++i) levels[i] = preds[i].predicted_risk;
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  std::vector<std::size_t> rank(n);
  for (std::size_t i = 0; i < n; ++i)
    rank[i] = static_cast<std::size_t>(std::lower_bound(levels.begin(), levels.end(), preds[i].predicted_risk) -
                                       levels.begin());

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return preds[a].observed_time < preds[b].observed_time; });
  auto anchor = [&](std::size_t i) { return preds[i].event && preds[i].observed_time < w; };

  // score[k]: concordance credit of pairs containing k; pairs[k]: their count.
  std::vector<double> score(n, 0.0), pairs(n, 0.0);

  // Subject as the earlier event: compare with everyone observed strictly later.
  {
    Fenwick tree(levels.size());
    double inserted = 0.0;
    std::size_t g = n;
    while (g > 0) {
      std::size_t start = g;
      const double t = preds[order[g - 1]].observed_time;
      while (start > 0 && preds[order[start - 1]].observed_time == t) --start;
      for (std::size_t q = start; q < g; ++q) {
        const std::size_t i = order[q];
        if (!anchor(i) || inserted == 0.0) continue;
        const double less = tree.prefix(rank[i]);
        const double eq = tree.prefix(rank[i] + 1) - less;
        score[i] += less + 0.5 * eq;
        pairs[i] += inserted;
      }
      for (std::size_t q = start; q < g; ++q) tree.add(rank[order[q]], 1.0);
      inserted += static_cast<double>(g - start);
      g = start;
    }
  }
  // Subject as the later member: compare with earlier anchoring events.
  {
    Fenwick tree(levels.size());
    double inserted = 0.0;
    std::size_t g = 0;
    while (g < n) {
      std::size_t end = g;
      const double t = preds[order[g]].observed_time;
      while (end < n && preds[order[end]].observed_time == t) ++end;
      if (inserted > 0.0) {
        for (std::size_t q = g; q < end; ++q) {
          const std::size_t j = order[q];
          const double upto = tree.prefix(rank[j] + 1);
          const double eq = upto - tree.prefix(rank[j]);
          const double greater = inserted - upto;
          score[j] += greater + 0.5 * eq;
          pairs[j] += inserted;
        }
      }
      for (std::size_t q = g; q < end; ++q)
        if (anchor(order[q])) {
          tree.add(rank[order[q]], 1.0);
          inserted += 1.0;
        }
      g = end;
    }
  }

  // Each usable pair is credited to both members.
  const double total_pairs = std::accumulate(pairs.begin(), pairs.end(), 0.0) / 2.0;
  const double total_score = std::accumulate(score.begin(), score.end(), 0.0) / 2.0;
  if (total_pairs <= 0.0) throw DataError("no usable pairs for the concordance index");
  Concordance out;
  out.value = total_score / total_pairs;
  out.usable_pairs = total_pairs;
  double var = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double d = score[k] - out.value * pairs[k];
    var += d * d;
  }
  out.se = std::sqrt(var) / total_pairs;
  return out;
}

Concordance pooled_cindex(std::span<const Concordance> parts) {
  Concordance out;
  double pairs = 0.0, num = 0.0, var = 0.0;
  for (const auto& c : parts) {
    pairs += c.usable_pairs;
    num += c.value * c.usable_pairs;
    var += c.se * c.se * c.usable_pairs * c.usable_pairs;
  }
  if (pairs <= 0.0) throw DataError("no usable pairs across landmark ages");
  out.value = num / pairs;
  out.se = std::sqrt(var) / pairs;
  out.usable_pairs = pairs;
  return out;
}

namespace {

// Kaplan-Meier survival of the censoring time evaluated just before each
// query time. Events precede censorings at tied times.
struct CensoringKm {
  std::vector<double> time;    // distinct censoring times
  std::vector<double> after;   // G(time[k])

  double left_limit(double t) const {
    auto it = std::lower_bound(time.begin(), time.end(), t);
    if (it == time.begin()) return 1.0;
    return after[static_cast<std::size_t>(it - time.begin()) - 1];
  }
};

CensoringKm censoring_km(std::span<const PredictionRow> preds) {
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return preds[a].observed_time < preds[b].observed_time; });
  CensoringKm km;
  double at_risk = static_cast<double>(preds.size());
  double g = 1.0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double t = preds[order[i]].observed_time;
    double censored = 0.0, leaving = 0.0;
    for (; i < order.size() && preds[order[i]].observed_time == t; ++i, leaving += 1.0)
      censored += preds[order[i]].event ? 0.0 : 1.0;
    if (censored > 0.0) {
      km.time.push_back(t);
      g *= 1.0 - censored / at_risk;
      km.after.push_back(g);
    }
    at_risk -= leaving;
  }
  return km;
}

}  // namespace

double brier_score(std::span<const PredictionRow> preds) {
  const double w = common_window(preds);
  const CensoringKm km = censoring_km(preds);
  const double g_w = km.left_limit(w);
  double total = 0.0;
  for (const auto& p : preds) {
    if (p.event && p.observed_time <= w) {
      const double g = km.left_limit(p.observed_time);
      if (g <= 0.0) {
        std::ostringstream msg;
        msg << "censoring distribution reaches zero before an event within horizon w=" << w;
        throw DataError(msg.str());
      }
      total += (1.0 - p.predicted_risk) * (1.0 - p.predicted_risk) / g;
    } else if (p.observed_time >= w) {
      if (g_w <= 0.0) {
        std::ostringstream msg;
        msg << "censoring distribution reaches zero before horizon w=" << w << " with persons still at risk";
        throw DataError(msg.str());
      }
      total += p.predicted_risk * p.predicted_risk / g_w;
    }
  }
  return total / static_cast<double>(preds.size());
}

double km_survival(std::span<const PredictionRow> preds, double w) {
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return preds[a].observed_time < preds[b].observed_time; });
  double at_risk = static_cast<double>(preds.size());
  double s = 1.0;
  std::size_t i = 0;
  while (i < order.size() && preds[order[i]].observed_time <= w) {
    const double t = preds[order[i]].observed_time;
    double d = 0.0, leaving = 0.0;
    for (; i < order.size() && preds[order[i]].observed_time == t; ++i, leaving += 1.0)
      d += preds[order[i]].event ? 1.0 : 0.0;
    if (d > 0.0) s *= 1.0 - d / at_risk;
    at_risk -= leaving;
  }
  return s;
}

}  // namespace cvdsched
