#pragma once

// Alternating blame / compromise-probability estimation over the
// card-location graph.
//
// Each location j carries a Beta(alpha, beta) prior on its compromise
// probability. Given blames b_ij the posterior mean is
//
//     theta_j = (z_j + alpha) / (|N_j| + alpha + beta),   z_j = sum_i b_ij,
//
// and given theta every fraud-card spreads one unit of blame over its
// locations in proportion to their theta. The two updates are alternated
// from uniform blames until the l1 change of theta drops below epsilon.

#include <bit>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "breachradar/graph.hpp"

namespace breachradar {

struct PriorParams {
  double alpha = 0.2;  // virtual fraud-cards per location
  double beta = 15.0;  // virtual non-fraud cards per location
  double epsilon = 1e-6;
  std::size_t max_iterations = 100;

  void validate() const {
    if (!(alpha > 0.0)) throw StructuralError("alpha must be > 0");
    if (!(beta > 0.0)) throw StructuralError("beta must be > 0");
    if (!(epsilon > 0.0)) throw StructuralError("epsilon must be > 0");
    if (max_iterations < 1) throw StructuralError("max_iterations must be >= 1");
  }
};

// Sum of values in [0, 1] held as an integer count of 2^-127 units. Every
// term of at least 2^-74 lands on that grid exactly (smaller ones are
// truncated), and integer addition is associative, so any split or order of
// the same terms gives the same bits. This is what lets partitioned runs match
// the sequential detector. Capacity is 2^64 terms.
class FixedPointSum {
 public:
  void add(double x) {
    assert(x >= 0.0 && x <= 1.0);
    const auto bits = std::bit_cast<std::uint64_t>(x);
    const int exponent = static_cast<int>(bits >> 52);
    const std::uint64_t mantissa = (bits & ((std::uint64_t{1} << 52) - 1)) | (exponent ? std::uint64_t{1} << 52 : 0);
    const int shift = (exponent ? exponent : 1) - 948;  // x * 2^127 = mantissa * 2^shift
    if (shift >= 0)
      add_units(static_cast<unsigned __int128>(mantissa) << shift);
    else if (shift > -64)
      add_units(mantissa >> -shift);
  }
  void add(const FixedPointSum& o) {
    add_units(o.low_);
    high_ += o.high_;
  }
  double value() const {
    return (std::ldexp(static_cast<double>(high_), 128) + static_cast<double>(low_)) * 0x1p-127;
  }
  bool operator==(const FixedPointSum&) const = default;

 private:
  void add_units(unsigned __int128 t) {
    low_ += t;
    high_ += low_ < t;
  }

  unsigned __int128 low_ = 0;
  std::uint64_t high_ = 0;
};

// Compromise probability per location, indexed like the graph's locations.
struct ThetaVector {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t j) const { return values[j]; }
  bool operator==(const ThetaVector&) const = default;
};

inline double l1_distance(const ThetaVector& a, const ThetaVector& b) {
  double d = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) d += std::abs(a[j] - b[j]);
  return d;
}

// Storage plan for the sparse blame matrix: only fraud-card rows exist, laid
// out in global edge order. Shared between all matrices of one graph.
class BlameLayout {
 public:
  using Index = BipartiteGraph::Index;
  static constexpr std::size_t kNoRow = static_cast<std::size_t>(-1);

  explicit BlameLayout(const BipartiteGraph& g) : row_of_card_(g.num_cards(), kNoRow) {
    row_offsets_.push_back(0);
    for (Index i = 0; i < g.num_cards(); ++i) {
      if (!g.is_fraud(i)) continue;
      if (g.degree_of_card(i) == 0)
        throw StructuralError("fraud-card '" + g.card_id(i) + "' has no locations");
      row_of_card_[i] = fraud_cards_.size();
      fraud_cards_.push_back(i);
      row_offsets_.push_back(row_offsets_.back() + g.degree_of_card(i));
    }
    // Per-location slot lists, in the fixed card order of N_j.
    location_offsets_.assign(g.num_locations() + 1, 0);
    for (Index j = 0; j < g.num_locations(); ++j)
      location_offsets_[j + 1] = location_offsets_[j] + g.fraud_neighbors(j);
    location_slots_.resize(location_offsets_.back());
    for (Index j = 0; j < g.num_locations(); ++j) {
      std::size_t out = location_offsets_[j];
      const auto cards = g.cards_of(j);
      const auto edges = g.edges_of_location(j);
      for (std::size_t k = 0; k < cards.size(); ++k) {
        const std::size_t row = row_of_card_[cards[k]];
        if (row == kNoRow) continue;
        location_slots_[out++] = row_offsets_[row] + (edges[k] - g.edge_begin(cards[k]));
      }
    }
  }

  std::size_t num_rows() const { return fraud_cards_.size(); }
  std::size_t num_slots() const { return row_offsets_.back(); }
  Index card_of_row(std::size_t row) const { return fraud_cards_[row]; }
  std::size_t row_of_card(Index card) const { return row_of_card_[card]; }
  std::size_t row_begin(std::size_t row) const { return row_offsets_[row]; }
  std::size_t row_end(std::size_t row) const { return row_offsets_[row + 1]; }

  // Blame slots of the fraud-card edges incident to location j.
  std::span<const std::size_t> location_slots(Index j) const {
    return {location_slots_.data() + location_offsets_[j],
            location_slots_.data() + location_offsets_[j + 1]};
  }

 private:
  std::vector<Index> fraud_cards_;
  std::vector<std::size_t> row_of_card_;
  std::vector<std::size_t> row_offsets_;
  std::vector<std::size_t> location_offsets_;
  std::vector<std::size_t> location_slots_;
};

// Per-edge blames. Rows of non-fraud cards are implicit zeros.
class BlameMatrix {
 public:
  using Index = BipartiteGraph::Index;

  BlameMatrix() = default;
  BlameMatrix(std::shared_ptr<const BlameLayout> layout, std::vector<double> values)
      : layout_(std::move(layout)), values_(std::move(values)) {
    if (values_.size() != layout_->num_slots()) throw StructuralError("blame vector size mismatch");
  }

  const BlameLayout& layout() const { return *layout_; }
  const std::shared_ptr<const BlameLayout>& shared_layout() const { return layout_; }

  // Blames of card i aligned with L_i; empty for non-fraud cards.
  std::span<const double> row(Index card) const {
    const std::size_t r = layout_->row_of_card(card);
    if (r == BlameLayout::kNoRow) return {};
    return {values_.data() + layout_->row_begin(r), values_.data() + layout_->row_end(r)};
  }

  // b_ij for the k-th neighbour of card i.
  double at(Index card, std::size_t k) const {
    const auto r = row(card);
    return r.empty() ? 0.0 : r[k];
  }

  std::span<const double> values() const { return values_; }
  std::vector<double>& mutable_values() { return values_; }

  bool operator==(const BlameMatrix& o) const { return values_ == o.values_; }

 private:
  std::shared_ptr<const BlameLayout> layout_;
  std::vector<double> values_;
};

struct ConvergenceTrace {
  std::vector<double> l1_residuals;  // entry t-1 holds the residual of iteration t
};

struct DetectionResult {
  ThetaVector theta;
  std::vector<double> blame_sums;  // z_j of the final iterate
  BlameMatrix blames;
  ConvergenceTrace trace;
  bool converged = false;
  std::size_t iterations() const { return trace.l1_residuals.size(); }
};

// Called once with iteration 0 for the theta of the uniform blames, then once
// per completed iteration.
using IterationObserver = std::function<void(std::size_t iteration, const ThetaVector& theta,
                                             double l1_residual)>;

inline ThetaVector theta_from_blame_sums(const BipartiteGraph& g, std::span<const double> z,
                                         const PriorParams& prior) {
  ThetaVector theta;
  theta.values.resize(g.num_locations());
  for (BipartiteGraph::Index j = 0; j < g.num_locations(); ++j) {
    theta.values[j] = (z[j] + prior.alpha) /
                      (static_cast<double>(g.degree_of_location(j)) + prior.alpha + prior.beta);
  }
  return theta;
}

// Drives any pair of update functions through the alternating schedule.
// `updates` provides uniform_blames(), blame_sums(B), update_blames(theta).
template <class Updates>
DetectionResult alternate(const BipartiteGraph& g, const Updates& updates,
                          const PriorParams& prior, const IterationObserver& observer = {}) {
  prior.validate();
  DetectionResult res;
  res.blames = updates.uniform_blames();
  res.blame_sums = updates.blame_sums(res.blames);
  res.theta = theta_from_blame_sums(g, res.blame_sums, prior);
  if (observer) observer(0, res.theta, 0.0);
  for (std::size_t it = 1; it <= prior.max_iterations; ++it) {
    res.blames = updates.update_blames(res.theta);
    res.blame_sums = updates.blame_sums(res.blames);
    ThetaVector next = theta_from_blame_sums(g, res.blame_sums, prior);
    const double residual = l1_distance(next, res.theta);
    res.theta = std::move(next);
    res.trace.l1_residuals.push_back(residual);
    if (observer) observer(it, res.theta, residual);
    if (residual < prior.epsilon) {
      res.converged = true;
      break;
    }
  }
  return res;
}

// Sequential implementation of both updates. Card and location sums go
// through FixedPointSum, so they do not depend on summation order.
class Detector {
 public:
  using Index = BipartiteGraph::Index;

  explicit Detector(const BipartiteGraph& g)
      : graph_(g), layout_(std::make_shared<const BlameLayout>(g)) {}

  const BipartiteGraph& graph() const { return graph_; }
  const std::shared_ptr<const BlameLayout>& layout() const { return layout_; }

  BlameMatrix uniform_blames() const {
    std::vector<double> v(layout_->num_slots());
    for (std::size_t r = 0; r < layout_->num_rows(); ++r) {
      const double share = 1.0 / static_cast<double>(layout_->row_end(r) - layout_->row_begin(r));
      for (std::size_t s = layout_->row_begin(r); s < layout_->row_end(r); ++s) v[s] = share;
    }
    return {layout_, std::move(v)};
  }

  std::vector<double> blame_sums(const BlameMatrix& blames) const {
    const auto b = blames.values();
    std::vector<double> z(graph_.num_locations(), 0.0);
    for (Index j = 0; j < graph_.num_locations(); ++j) {
      FixedPointSum acc;
      for (std::size_t s : layout_->location_slots(j)) acc.add(b[s]);
      z[j] = acc.value();
    }
    return z;
  }

  ThetaVector update_poc_probabilities(const BlameMatrix& blames, const PriorParams& prior) const {
    return theta_from_blame_sums(graph_, blame_sums(blames), prior);
  }

  BlameMatrix update_blames(const ThetaVector& theta) const {
    std::vector<double> v(layout_->num_slots());
    for (std::size_t r = 0; r < layout_->num_rows(); ++r) {
      const Index card = layout_->card_of_row(r);
      const auto locs = graph_.locations_of(card);
      FixedPointSum acc;
      for (Index j : locs) acc.add(theta[j]);
      const double sum = acc.value();
      const std::size_t base = layout_->row_begin(r);
      for (std::size_t k = 0; k < locs.size(); ++k) v[base + k] = theta[locs[k]] / sum;
    }
    return {layout_, std::move(v)};
  }

  DetectionResult run(const PriorParams& prior, const IterationObserver& observer = {}) const {
    return alternate(graph_, *this, prior, observer);
  }

 private:
  const BipartiteGraph& graph_;
  std::shared_ptr<const BlameLayout> layout_;
};

inline BlameMatrix init_uniform_blames(const BipartiteGraph& g) {
  return Detector(g).uniform_blames();
}

inline ThetaVector update_poc_probabilities(const BlameMatrix& blames, const BipartiteGraph& g,
                                            const PriorParams& prior) {
  std::vector<double> z(g.num_locations(), 0.0);
  const auto b = blames.values();
  for (BipartiteGraph::Index j = 0; j < g.num_locations(); ++j) {
    double acc = 0.0;
    for (std::size_t s : blames.layout().location_slots(j)) acc += b[s];
    z[j] = acc;
  }
  return theta_from_blame_sums(g, z, prior);
}

inline BlameMatrix update_blames(const ThetaVector& theta, const BipartiteGraph& g) {
  return Detector(g).update_blames(theta);
}

inline DetectionResult run_detector(const BipartiteGraph& g, const PriorParams& prior = {},
                                    const IterationObserver& observer = {}) {
  return Detector(g).run(prior, observer);
}

// Closed-form bounds every posterior iterate must respect:
// alpha / (|N_j|+alpha+beta) <= theta_j <= (F_j+alpha) / (|N_j|+alpha+beta).
inline bool theta_within_bounds(const ThetaVector& theta, const BipartiteGraph& g,
                                const PriorParams& prior, double slack = 1e-12) {
  for (BipartiteGraph::Index j = 0; j < g.num_locations(); ++j) {
    const double denom = static_cast<double>(g.degree_of_location(j)) + prior.alpha + prior.beta;
    const double lo = prior.alpha / denom;
    const double hi = (static_cast<double>(g.fraud_neighbors(j)) + prior.alpha) / denom;
    if (theta[j] < lo - slack || theta[j] > hi + slack) return false;
  }
  return true;
}

}  // namespace breachradar
