#pragma once

// Small graphs shared by the unit and acceptance tests.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "breachradar/breachradar.hpp"

namespace fixtures {

using breachradar::BipartiteGraph;
using breachradar::LocationBucket;
using Index = BipartiteGraph::Index;

// Graph from explicit adjacency: cards[i] lists the location indices of card i.
inline BipartiteGraph make_graph(const std::vector<std::vector<Index>>& cards, const std::vector<int>& fraud,
                                 std::size_t num_locations) {
  std::vector<std::string> ids;
  std::vector<std::uint8_t> flags;
  std::vector<std::pair<Index, Index>> edges;
  for (std::size_t i = 0; i < cards.size(); ++i) {
    ids.push_back("c" + std::to_string(i + 1));
    flags.push_back(static_cast<std::uint8_t>(fraud[i]));
    for (Index j : cards[i]) edges.emplace_back(static_cast<Index>(i), j);
  }
  std::vector<LocationBucket> locs;
  for (std::size_t j = 0; j < num_locations; ++j) locs.push_back({"j" + std::to_string(j + 1), 0});
  return BipartiteGraph(std::move(ids), std::move(locs), std::move(flags), std::move(edges));
}

// c1 fraud on {j1, j2}, c2 fraud on {j1}, c3 clean on {j2}.
inline BipartiteGraph three_card() { return make_graph({{0, 1}, {0}, {1}}, {1, 1, 0}, 2); }

// Random bipartite graph in which every card has at least one location.
inline BipartiteGraph random_graph(std::uint64_t seed, std::size_t cards, std::size_t locations,
                                   std::size_t max_degree, double fraud_rate) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> deg(1, max_degree);
  std::uniform_int_distribution<Index> loc(0, static_cast<Index>(locations - 1));
  std::bernoulli_distribution fraud(fraud_rate);
  std::vector<std::vector<Index>> adj(cards);
  std::vector<int> flags(cards);
  for (std::size_t i = 0; i < cards; ++i) {
    const std::size_t d = deg(rng);
    for (std::size_t k = 0; k < d; ++k) adj[i].push_back(loc(rng));
    flags[i] = fraud(rng) ? 1 : 0;
  }
  return make_graph(adj, flags, locations);
}

// The three graphs the parallel engine is checked on: the 3-card example, a
// random graph, and a hub-heavy graph whose long rows straddle slices.
inline std::vector<BipartiteGraph> engine_graphs() {
  std::vector<BipartiteGraph> out;
  out.push_back(three_card());
  out.push_back(random_graph(7, 500, 60, 8, 0.3));
  std::vector<std::vector<Index>> adj;
  std::vector<int> fraud;
  for (Index i = 0; i < 40; ++i) {
    std::vector<Index> l;
    const Index deg = i % 10 == 0 ? 90 : 1 + i % 4;
    for (Index k = 0; k < deg; ++k) l.push_back((i * 7 + k * 3) % 100);
    adj.push_back(l);
    fraud.push_back(i % 3 != 1);
  }
  out.push_back(make_graph(adj, fraud, 100));
  return out;
}

// Relabels cards by card_perm (new index of old card i) and locations by loc_perm.
inline BipartiteGraph permute(const BipartiteGraph& g, const std::vector<Index>& card_perm,
                              const std::vector<Index>& loc_perm) {
  std::vector<std::string> ids(g.num_cards());
  std::vector<std::uint8_t> flags(g.num_cards());
  std::vector<LocationBucket> locs(g.num_locations());
  for (Index i = 0; i < g.num_cards(); ++i) {
    ids[card_perm[i]] = g.card_id(i);
    flags[card_perm[i]] = g.is_fraud(i);
  }
  for (Index j = 0; j < g.num_locations(); ++j) locs[loc_perm[j]] = g.location(j);
  std::vector<std::pair<Index, Index>> edges;
  for (auto [i, j] : g.edge_list()) edges.emplace_back(card_perm[i], loc_perm[j]);
  return BipartiteGraph(std::move(ids), std::move(locs), std::move(flags), std::move(edges));
}

inline std::vector<Index> random_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<Index> p(n);
  std::iota(p.begin(), p.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

inline breachradar::TransactionRecord tx(std::string card, std::string terminal, std::int64_t ts,
                                         std::int64_t amount = 100, bool fraud = false) {
  return {std::move(card), std::move(terminal), ts, amount, fraud};
}

}  // namespace fixtures
