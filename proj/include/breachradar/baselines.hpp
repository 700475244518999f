#pragma once

// Comparison rankers: fraud ratio, fraud ratio with a Beta prior, greedy
// vertex cover and linearized belief propagation.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <cmath>
#include <cstddef>
#include <queue>
#include <string>
#include <vector>

#include "breachradar/detector.hpp"
#include "breachradar/graph.hpp"

namespace breachradar {

struct RankedEntry {
  BipartiteGraph::Index location = 0;
  double score = 0.0;
  bool operator==(const RankedEntry&) const = default;
};

// Locations by descending score, ascending index on ties.
struct RankedLocations {
  std::vector<RankedEntry> entries;

  std::size_t size() const { return entries.size(); }
  const RankedEntry& operator[](std::size_t k) const { return entries[k]; }

  std::vector<BipartiteGraph::Index> order() const {
    std::vector<BipartiteGraph::Index> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.location);
    return out;
  }

  static RankedLocations from_scores(const std::vector<double>& scores) {
    RankedLocations r;
    r.entries.reserve(scores.size());
    for (std::size_t j = 0; j < scores.size(); ++j)
      r.entries.push_back({static_cast<BipartiteGraph::Index>(j), scores[j]});
    std::stable_sort(r.entries.begin(), r.entries.end(), [](const RankedEntry& a, const RankedEntry& b) {
      return a.score > b.score;
    });
    return r;
  }
};

inline RankedLocations rank_theta(const ThetaVector& theta) {
  return RankedLocations::from_scores(theta.values);
}

inline RankedLocations ratio_score(const BipartiteGraph& g) {
  std::vector<double> s(g.num_locations());
  for (BipartiteGraph::Index j = 0; j < g.num_locations(); ++j)
    s[j] = static_cast<double>(g.fraud_neighbors(j)) / static_cast<double>(g.degree_of_location(j));
  return RankedLocations::from_scores(s);
}

// alpha = beta = 0 is allowed here and reduces to ratio_score.
inline RankedLocations ratio_prior_score(const BipartiteGraph& g, double alpha, double beta) {
  std::vector<double> s(g.num_locations());
  for (BipartiteGraph::Index j = 0; j < g.num_locations(); ++j)
    s[j] = (static_cast<double>(g.fraud_neighbors(j)) + alpha) /
           (static_cast<double>(g.degree_of_location(j)) + alpha + beta);
  return RankedLocations::from_scores(s);
}

inline RankedLocations ratio_prior_score(const BipartiteGraph& g, const PriorParams& prior) {
  return ratio_prior_score(g, prior.alpha, prior.beta);
}

// Repeatedly selects the location covering the most still-uncovered
// fraud-cards (lowest index on ties). Selected locations are scored by their
// coverage at selection time; the rest follow with score 0.
inline RankedLocations greedy_vertex_cover(const BipartiteGraph& g) {
  using Index = BipartiteGraph::Index;
  std::vector<std::size_t> count(g.num_locations());
  // Max-heap on (count, -index); entries go stale as cards get covered and
  // are re-pushed with their current count when popped.
  using Key = std::pair<std::size_t, std::int64_t>;
  std::priority_queue<Key> heap;
  for (Index j = 0; j < g.num_locations(); ++j) {
    count[j] = g.fraud_neighbors(j);
    if (count[j] > 0) heap.emplace(count[j], -static_cast<std::int64_t>(j));
  }
  std::vector<std::uint8_t> covered(g.num_cards(), 0), selected(g.num_locations(), 0);
  RankedLocations r;
  while (!heap.empty()) {
    const auto [c, neg_j] = heap.top();
    heap.pop();
    const auto j = static_cast<Index>(-neg_j);
    if (c != count[j]) {
      if (count[j] > 0) heap.emplace(count[j], neg_j);
      continue;
    }
    selected[j] = 1;
    r.entries.push_back({j, static_cast<double>(c)});
    for (Index i : g.cards_of(j)) {
      if (!g.is_fraud(i) || covered[i]) continue;
      covered[i] = 1;
      for (Index k : g.locations_of(i)) --count[k];
    }
  }
  for (Index j = 0; j < g.num_locations(); ++j)
    if (!selected[j]) r.entries.push_back({j, 0.0});
  return r;
}

struct LinearizedBpOptions {
  double coupling = 0.05;  // c in b = phi + c*A*b - c^2*D*b
  double fraud_prior = 0.5;
  double clean_prior = -0.1;
  double location_prior = 0.0;
  double tolerance = 1e-8;
  std::size_t max_sweeps = 10000;
  std::size_t divergence_window = 10;
};

// Upper bound on the spectral radius of the adjacency: rho(A)^2 = rho(A A^T)
// is bounded by the largest row sum of A A^T, i.e. max_i sum_{j in L_i} |N_j|.
inline double adjacency_spectral_bound(const BipartiteGraph& g) {
  double best = 0.0;
  for (BipartiteGraph::Index i = 0; i < g.num_cards(); ++i) {
    double s = 0.0;
    for (auto j : g.locations_of(i)) s += static_cast<double>(g.degree_of_location(j));
    best = std::max(best, s);
  }
  return std::sqrt(best);
}

// Largest coupling, capped at `cap`, for which Jacobi sweeps are guaranteed to
// contract: the sweep operator is similar to a symmetric matrix of norm at
// most c * rho(A), so c = 0.5 / rho(A) halves the error every sweep at worst.
inline double safe_coupling(const BipartiteGraph& g, double cap = 0.05) {
  const double rho = adjacency_spectral_bound(g);
  return rho > 0.0 ? std::min(cap, 0.5 / rho) : cap;
}

struct LinearizedBpResult {
  std::vector<double> card_beliefs;
  std::vector<double> location_beliefs;
  std::size_t sweeps = 0;
};

// Jacobi sweeps on (I + c^2 D - c A) b = phi over the bipartite graph, i.e.
// b_v <- (phi_v + c * sum_{u~v} b_u) / (1 + c^2 deg(v)).
inline LinearizedBpResult solve_linearized_bp(const BipartiteGraph& g, const LinearizedBpOptions& opt) {
  using Index = BipartiteGraph::Index;
  if (!(opt.coupling > 0.0 && opt.coupling < 1.0))
    throw StructuralError("linearized BP coupling must lie in (0, 1)");
  const double c = opt.coupling, c2 = c * c;
  std::vector<double> phi_card(g.num_cards());
  for (Index i = 0; i < g.num_cards(); ++i) phi_card[i] = g.is_fraud(i) ? opt.fraud_prior : opt.clean_prior;

  LinearizedBpResult res;
  res.card_beliefs = phi_card;
  res.location_beliefs.assign(g.num_locations(), opt.location_prior);
  std::vector<double> next_card(g.num_cards()), next_loc(g.num_locations());
  double prev_delta = std::numeric_limits<double>::infinity();
  std::size_t growth = 0;
  for (std::size_t sweep = 1; sweep <= opt.max_sweeps; ++sweep) {
    double delta = 0.0;
    for (Index i = 0; i < g.num_cards(); ++i) {
      double acc = 0.0;
      for (Index j : g.locations_of(i)) acc += res.location_beliefs[j];
      next_card[i] = (phi_card[i] + c * acc) / (1.0 + c2 * static_cast<double>(g.degree_of_card(i)));
      delta = std::max(delta, std::abs(next_card[i] - res.card_beliefs[i]));
    }
    for (Index j = 0; j < g.num_locations(); ++j) {
      double acc = 0.0;
      for (Index i : g.cards_of(j)) acc += res.card_beliefs[i];
      next_loc[j] = (opt.location_prior + c * acc) /
                    (1.0 + c2 * static_cast<double>(g.degree_of_location(j)));
      delta = std::max(delta, std::abs(next_loc[j] - res.location_beliefs[j]));
    }
    res.card_beliefs.swap(next_card);
    res.location_beliefs.swap(next_loc);
    res.sweeps = sweep;
    if (!std::isfinite(delta))
      throw DivergenceError("linearized BP produced non-finite beliefs; use a smaller homophily coupling");
    if (delta < opt.tolerance) return res;
    growth = delta > prev_delta ? growth + 1 : 0;
    if (growth >= opt.divergence_window)
      throw DivergenceError("linearized BP residual grew for " + std::to_string(growth) +
                            " consecutive sweeps (coupling " + std::to_string(c) +
                            "); use a smaller homophily coupling");
    prev_delta = delta;
  }
  throw DivergenceError("linearized BP did not reach tolerance within " +
                        std::to_string(opt.max_sweeps) + " sweeps; use a smaller homophily coupling");
}

inline RankedLocations linearized_bp_score(const BipartiteGraph& g, const LinearizedBpOptions& opt = {}) {
  return RankedLocations::from_scores(solve_linearized_bp(g, opt).location_beliefs);
}

inline RankedLocations linearized_bp_score(const BipartiteGraph& g, double coupling) {
  LinearizedBpOptions opt;
  opt.coupling = coupling;
  return linearized_bp_score(g, opt);
}

}  // namespace breachradar
