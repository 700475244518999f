#pragma once

// Ranking quality against injected ground truth, convergence traces and the
// card-reissue savings simulation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "breachradar/baselines.hpp"
#include "breachradar/detector.hpp"
#include "breachradar/graph.hpp"
#include "breachradar/synth.hpp"

namespace breachradar {

// Candidate j is positive iff its bucket was injected. A nonzero
// week_tolerance also accepts the same terminal within that many weeks.
inline std::vector<std::uint8_t> label_candidates(const BipartiteGraph& g, const GroundTruth& truth,
                                                  std::int64_t week_tolerance = 0) {
  std::vector<std::uint8_t> labels(g.num_locations(), 0);
  for (BipartiteGraph::Index j = 0; j < g.num_locations(); ++j) {
    const auto& b = g.location(j);
    for (std::int64_t d = -week_tolerance; d <= week_tolerance && !labels[j]; ++d)
      labels[j] = truth.is_injected({b.terminal_id, b.week_index + d}) ? 1 : 0;
  }
  return labels;
}

struct CurvePoint {
  double threshold = 0.0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  double precision = 1.0;
  double recall = 0.0;  // also the true-positive rate
  double fpr = 0.0;
};

struct ScoreReport {
  std::vector<CurvePoint> points;  // descending threshold
  double auc = 0.0;
  double average_precision = 0.0;
  std::size_t positives = 0;
  std::size_t negatives = 0;

  // True when some sweep point reaches both levels at once.
  bool has_operating_point(double min_precision, double min_recall) const {
    return std::any_of(points.begin(), points.end(), [&](const CurvePoint& p) {
      return p.precision >= min_precision && p.recall >= min_recall;
    });
  }
};

// Threshold sweep with one point per distinct score. The ROC area is the
// trapezoid rule from the origin; AP is sum of precision * recall increment.
inline ScoreReport score_ranking(const RankedLocations& ranking, const std::vector<std::uint8_t>& labels) {
  ScoreReport rep;
  for (const auto& e : ranking.entries) (labels.at(e.location) ? rep.positives : rep.negatives)++;
  if (rep.positives == 0) throw DataError("ground truth has no positive candidates; curves undefined");

  std::size_t tp = 0, fp = 0;
  double prev_fpr = 0.0, prev_tpr = 0.0;
  const auto& es = ranking.entries;
  for (std::size_t k = 0; k < es.size();) {
    const double score = es[k].score;
    for (; k < es.size() && es[k].score == score; ++k) (labels[es[k].location] ? tp : fp)++;
    CurvePoint p;
    p.threshold = score;
    p.true_positives = tp;
    p.false_positives = fp;
    p.precision = tp + fp == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    p.recall = static_cast<double>(tp) / static_cast<double>(rep.positives);
    p.fpr = rep.negatives == 0 ? 0.0 : static_cast<double>(fp) / static_cast<double>(rep.negatives);
    rep.average_precision += p.precision * (p.recall - prev_tpr);
    rep.auc += (p.fpr - prev_fpr) * (p.recall + prev_tpr) / 2.0;
    prev_fpr = p.fpr;
    prev_tpr = p.recall;
    rep.points.push_back(p);
  }
  if (rep.negatives == 0) rep.auc = 1.0;
  return rep;
}

// Mean of precision@k over the ranks of the positives. Equal to the
// curve-based AP whenever scores have no ties.
inline double average_precision_by_rank(const RankedLocations& ranking, const std::vector<std::uint8_t>& labels) {
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t k = 0; k < ranking.size(); ++k) {
    if (!labels.at(ranking[k].location)) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  if (hits == 0) throw DataError("ground truth has no positive candidates; curves undefined");
  return sum / static_cast<double>(hits);
}

inline void write_curve_csv(std::ostream& out, const ScoreReport& rep) {
  out << "threshold,true_positives,false_positives,precision,recall,fpr\n";
  char buf[160];
  for (const auto& p : rep.points) {
    std::snprintf(buf, sizeof buf, "%.17g,%zu,%zu,%.17g,%.17g,%.17g\n", p.threshold, p.true_positives,
                  p.false_positives, p.precision, p.recall, p.fpr);
    out << buf;
  }
}

// ---------------------------------------------------------------------------
// Convergence

inline void convergence_report(std::ostream& out, const ConvergenceTrace& trace) {
  out << "iteration,l1_residual\n";
  char buf[64];
  for (std::size_t t = 0; t < trace.l1_residuals.size(); ++t) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", t + 1, trace.l1_residuals[t]);
    out << buf;
  }
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::size_t points = 0;
};

inline LinearFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  LinearFit f;
  f.points = x.size();
  if (x.size() < 2) return f;
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    mx += x[k];
    my += y[k];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxx += (x[k] - mx) * (x[k] - mx);
    sxy += (x[k] - mx) * (y[k] - my);
    syy += (y[k] - my) * (y[k] - my);
  }
  f.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  f.intercept = my - f.slope * mx;
  f.r_squared = (sxx > 0.0 && syy > 0.0) ? (sxy * sxy) / (sxx * syy) : 1.0;
  return f;
}

// Fits log(residual) against iteration for iterations > after_iteration,
// skipping exact zeros.
inline LinearFit log_residual_fit(const ConvergenceTrace& trace, std::size_t after_iteration = 3) {
  std::vector<double> x, y;
  for (std::size_t t = after_iteration; t < trace.l1_residuals.size(); ++t) {
    if (trace.l1_residuals[t] <= 0.0) continue;
    x.push_back(static_cast<double>(t + 1));
    y.push_back(std::log(trace.l1_residuals[t]));
  }
  return least_squares(x, y);
}

// ---------------------------------------------------------------------------
// Savings

struct SavingsPolicy {
  double theta_threshold = 0.1;
  std::int64_t reissue_cost = 1000;  // minor units per card
};

// Compromise probabilities computed from data strictly before decision_week.
struct WeeklyTheta {
  std::int64_t decision_week = 0;
  std::unordered_map<LocationBucket, double, LocationBucketHash> theta;
};

struct SavingsWeek {
  std::int64_t decision_week = 0;
  std::size_t cards_reissued = 0;
  std::int64_t reissue_cost = 0;
  std::int64_t fraud_prevented = 0;
  std::int64_t net_savings = 0;
  std::size_t reissued_victims = 0;  // reissued cards with later fraud
  std::int64_t cumulative_net = 0;
};

struct SavingsReport {
  std::vector<SavingsWeek> weeks;

  std::int64_t total_net() const { return weeks.empty() ? 0 : weeks.back().cumulative_net; }
  std::size_t total_reissued() const {
    std::size_t n = 0;
    for (const auto& w : weeks) n += w.cards_reissued;
    return n;
  }
};

// Each decision week, reissues every not-yet-reissued card that transacted
// (before that week) at a bucket whose theta exceeds the threshold. The card's
// fraudulent transactions from the decision week on count as prevented.
inline SavingsReport savings_simulation(std::vector<WeeklyTheta> snapshots,
                                        const std::vector<TransactionRecord>& transactions,
                                        const SavingsPolicy& policy) {
  std::sort(snapshots.begin(), snapshots.end(),
            [](const WeeklyTheta& a, const WeeklyTheta& b) { return a.decision_week < b.decision_week; });
  std::unordered_set<std::string> reissued;
  SavingsReport rep;
  std::int64_t cumulative = 0;
  for (const auto& snap : snapshots) {
    std::set<std::string> chosen;
    for (const auto& r : transactions) {
      const auto b = bucketize(r);
      if (b.week_index >= snap.decision_week || reissued.count(r.card_id)) continue;
      const auto it = snap.theta.find(b);
      if (it != snap.theta.end() && it->second > policy.theta_threshold) chosen.insert(r.card_id);
    }
    SavingsWeek w;
    w.decision_week = snap.decision_week;
    w.cards_reissued = chosen.size();
    w.reissue_cost = static_cast<std::int64_t>(chosen.size()) * policy.reissue_cost;
    std::unordered_set<std::string> victims;
    for (const auto& r : transactions) {
      if (!r.is_fraud || week_index_of(r.timestamp) < snap.decision_week || !chosen.count(r.card_id)) continue;
      w.fraud_prevented += r.amount;
      victims.insert(r.card_id);
    }
    w.reissued_victims = victims.size();
    w.net_savings = w.fraud_prevented - w.reissue_cost;
    cumulative += w.net_savings;
    w.cumulative_net = cumulative;
    reissued.insert(chosen.begin(), chosen.end());
    rep.weeks.push_back(w);
  }
  return rep;
}

// Re-runs the detector once per decision week on the transactions strictly
// before it. Weeks without any candidate bucket yield an empty snapshot.
inline std::vector<WeeklyTheta> weekly_theta_snapshots(const std::vector<TransactionRecord>& transactions,
                                                       std::int64_t first_decision_week,
                                                       std::int64_t last_decision_week,
                                                       const PriorParams& prior,
                                                       std::size_t min_fraud_cards = 5) {
  std::vector<WeeklyTheta> out;
  for (std::int64_t d = first_decision_week; d <= last_decision_week; ++d) {
    WeeklyTheta snap;
    snap.decision_week = d;
    GraphBuilder builder;
    for (const auto& r : transactions)
      if (week_index_of(r.timestamp) < d) builder.add(r);
    try {
      const BipartiteGraph g = builder.build(min_fraud_cards);
      const auto res = run_detector(g, prior);
      for (BipartiteGraph::Index j = 0; j < g.num_locations(); ++j) snap.theta[g.location(j)] = res.theta[j];
    } catch (const DataError&) {
      // no candidates yet
    }
    out.push_back(std::move(snap));
  }
  return out;
}

inline void write_savings_csv(std::ostream& out, const SavingsReport& rep) {
  out << "decision_week,cards_reissued,reissue_cost,fraud_prevented,net_savings,reissued_victims,cumulative_net\n";
  for (const auto& w : rep.weeks)
    out << w.decision_week << ',' << w.cards_reissued << ',' << w.reissue_cost << ',' << w.fraud_prevented
        << ',' << w.net_savings << ',' << w.reissued_victims << ',' << w.cumulative_net << '\n';
}

}  // namespace breachradar
