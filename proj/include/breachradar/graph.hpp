#pragma once

// Transaction records, terminal-week buckets and the card/location bipartite
// graph with its preprocessing filter.

#include <algorithm>
#include <chrono>
#include <compare>
#include <cstdio>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "breachradar/common.hpp"

namespace breachradar {

struct TransactionRecord {
  std::string card_id;
  std::string terminal_id;
  std::int64_t timestamp = 0;  // seconds since epoch, UTC
  std::int64_t amount = 0;     // minor currency units
  bool is_fraud = false;

  bool operator==(const TransactionRecord&) const = default;
};

inline void validate(const TransactionRecord& r) {
  if (r.card_id.empty()) throw DataError("empty card_id");
  if (r.terminal_id.empty()) throw DataError("empty terminal_id");
  if (r.amount < 0) throw DataError("negative amount " + std::to_string(r.amount));
}

// Seconds from the Unix epoch to Monday 1970-01-05T00:00:00Z, the week anchor.
inline constexpr std::int64_t kWeekAnchorSeconds = 4 * 86400;
inline constexpr std::int64_t kSecondsPerWeek = 7 * 86400;

inline constexpr std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  const std::int64_t q = a / b;
  return (a % b != 0 && ((a < 0) != (b < 0))) ? q - 1 : q;
}

inline constexpr std::int64_t week_index_of(std::int64_t timestamp) {
  return floor_div(timestamp - kWeekAnchorSeconds, kSecondsPerWeek);
}

// First second of a week.
inline constexpr std::int64_t week_start(std::int64_t week_index) {
  return kWeekAnchorSeconds + week_index * kSecondsPerWeek;
}

struct LocationBucket {
  std::string terminal_id;
  std::int64_t week_index = 0;

  auto operator<=>(const LocationBucket&) const = default;
  bool operator==(const LocationBucket&) const = default;

  // "terminal@week"; terminals may contain '@', the week never does.
  std::string key() const { return terminal_id + "@" + std::to_string(week_index); }

  static LocationBucket parse(std::string_view key) {
    const auto at = key.rfind('@');
    if (at == std::string_view::npos || at == 0 || at + 1 == key.size())
      throw DataError("malformed location key '" + std::string(key) + "'");
    LocationBucket b;
    b.terminal_id = std::string(key.substr(0, at));
    try {
      std::size_t used = 0;
      const std::string week(key.substr(at + 1));
      b.week_index = std::stoll(week, &used);
      if (used != week.size()) throw DataError("");
    } catch (const std::exception&) {
      throw DataError("malformed week in location key '" + std::string(key) + "'");
    }
    return b;
  }
};

struct LocationBucketHash {
  std::size_t operator()(const LocationBucket& b) const {
    return static_cast<std::size_t>(
        splitmix64(fnv1a(b.terminal_id) ^ static_cast<std::uint64_t>(b.week_index)));
  }
};

inline LocationBucket bucketize(const TransactionRecord& r) {
  return {r.terminal_id, week_index_of(r.timestamp)};
}

// ---------------------------------------------------------------------------
// Timestamps

namespace detail {

inline bool parse_fixed_digits(std::string_view s, std::size_t pos, std::size_t n, int& out) {
  if (pos + n > s.size()) return false;
  int v = 0;
  for (std::size_t i = pos; i < pos + n; ++i) {
    if (s[i] < '0' || s[i] > '9') return false;
    v = v * 10 + (s[i] - '0');
  }
  out = v;
  return true;
}

}  // namespace detail

inline std::optional<std::int64_t> parse_epoch_seconds(std::string_view s) {
  if (s.empty()) return std::nullopt;
  std::size_t i = 0;
  bool neg = false;
  if (s[0] == '-' || s[0] == '+') {
    neg = s[0] == '-';
    i = 1;
  }
  if (i == s.size()) return std::nullopt;
  std::int64_t v = 0;
  for (; i < s.size(); ++i) {
    if (s[i] < '0' || s[i] > '9') return std::nullopt;
    if (v > (INT64_MAX - 9) / 10) return std::nullopt;
    v = v * 10 + (s[i] - '0');
  }
  return neg ? -v : v;
}

// RFC 3339 date-time: YYYY-MM-DD[T ]HH:MM:SS[.frac](Z|+HH:MM|-HH:MM).
// Fractional seconds are truncated.
inline std::optional<std::int64_t> parse_rfc3339(std::string_view s) {
  using namespace std::chrono;
  int Y = 0, M = 0, D = 0, h = 0, m = 0, sec = 0;
  if (!detail::parse_fixed_digits(s, 0, 4, Y) || s.size() < 20 || s[4] != '-' ||
      !detail::parse_fixed_digits(s, 5, 2, M) || s[7] != '-' ||
      !detail::parse_fixed_digits(s, 8, 2, D) ||
      (s[10] != 'T' && s[10] != 't' && s[10] != ' ') ||
      !detail::parse_fixed_digits(s, 11, 2, h) || s[13] != ':' ||
      !detail::parse_fixed_digits(s, 14, 2, m) || s[16] != ':' ||
      !detail::parse_fixed_digits(s, 17, 2, sec))
    return std::nullopt;
  std::size_t pos = 19;
  if (pos < s.size() && s[pos] == '.') {
    ++pos;
    const std::size_t start = pos;
    while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
    if (pos == start) return std::nullopt;
  }
  if (pos >= s.size()) return std::nullopt;
  int offset = 0;
  if (s[pos] == 'Z' || s[pos] == 'z') {
    ++pos;
  } else if (s[pos] == '+' || s[pos] == '-') {
    int oh = 0, om = 0;
    if (!detail::parse_fixed_digits(s, pos + 1, 2, oh) || pos + 3 >= s.size() ||
        s[pos + 3] != ':' || !detail::parse_fixed_digits(s, pos + 4, 2, om))
      return std::nullopt;
    if (oh > 23 || om > 59) return std::nullopt;
    offset = (oh * 3600 + om * 60) * (s[pos] == '-' ? -1 : 1);
    pos += 6;
  } else {
    return std::nullopt;
  }
  if (pos != s.size()) return std::nullopt;
  if (h > 23 || m > 59 || sec > 60) return std::nullopt;
  const year_month_day ymd{year{Y}, month{static_cast<unsigned>(M)}, day{static_cast<unsigned>(D)}};
  if (!ymd.ok()) return std::nullopt;
  const auto days = sys_days{ymd}.time_since_epoch().count();
  return static_cast<std::int64_t>(days) * 86400 + h * 3600 + m * 60 + sec - offset;
}

inline std::string format_rfc3339(std::int64_t timestamp) {
  using namespace std::chrono;
  const std::int64_t days = floor_div(timestamp, 86400);
  const std::int64_t rem = timestamp - days * 86400;
  const year_month_day ymd{sys_days{std::chrono::days{days}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(rem / 3600), static_cast<int>(rem / 60 % 60),
                static_cast<int>(rem % 60));
  return buf;
}

// ---------------------------------------------------------------------------
// Bipartite graph

// Immutable card/location bipartite graph in compressed sparse row form.
// Edges are numbered in card-major order: edge ids of card i are
// [edge_begin(i), edge_end(i)) and follow the sorted order of L_i.
class BipartiteGraph {
 public:
  using Index = std::uint32_t;

  BipartiteGraph() = default;

  // Builds both adjacency directions from an edge list of (card, location)
  // pairs. Duplicate pairs are collapsed.
  BipartiteGraph(std::vector<std::string> card_ids, std::vector<LocationBucket> locations,
                 std::vector<std::uint8_t> fraud_flags,
                 std::vector<std::pair<Index, Index>> edges)
      : card_ids_(std::move(card_ids)),
        locations_(std::move(locations)),
        fraud_(std::move(fraud_flags)) {
    const std::size_t C = card_ids_.size();
    const std::size_t L = locations_.size();
    if (fraud_.size() != C) throw StructuralError("fraud flag vector size != card count");
    for (auto& f : fraud_) f = f ? 1 : 0;
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

    card_offsets_.assign(C + 1, 0);
    card_adj_.resize(edges.size());
    for (std::size_t e = 0; e < edges.size(); ++e) {
      const auto [i, j] = edges[e];
      if (i >= C || j >= L) throw StructuralError("edge endpoint out of range");
      ++card_offsets_[i + 1];
      card_adj_[e] = j;
    }
    for (std::size_t i = 0; i < C; ++i) card_offsets_[i + 1] += card_offsets_[i];

    loc_offsets_.assign(L + 1, 0);
    for (Index j : card_adj_) ++loc_offsets_[j + 1];
    for (std::size_t j = 0; j < L; ++j) loc_offsets_[j + 1] += loc_offsets_[j];
    loc_adj_.resize(card_adj_.size());
    loc_edge_.resize(card_adj_.size());
    std::vector<std::size_t> cursor(loc_offsets_.begin(), loc_offsets_.end() - 1);
    for (std::size_t i = 0; i < C; ++i) {
      for (std::size_t e = card_offsets_[i]; e < card_offsets_[i + 1]; ++e) {
        const std::size_t slot = cursor[card_adj_[e]]++;
        loc_adj_[slot] = static_cast<Index>(i);
        loc_edge_[slot] = e;
      }
    }

    fraud_neighbors_.assign(L, 0);
    for (std::size_t i = 0; i < C; ++i) {
      if (!fraud_[i]) continue;
      ++num_fraud_cards_;
      for (Index j : locations_of(static_cast<Index>(i))) ++fraud_neighbors_[j];
    }
  }

  std::size_t num_cards() const { return card_ids_.size(); }
  std::size_t num_locations() const { return locations_.size(); }
  std::size_t num_edges() const { return card_adj_.size(); }
  std::size_t num_fraud_cards() const { return num_fraud_cards_; }

  // L_i, ascending location indices.
  std::span<const Index> locations_of(Index card) const {
    return {card_adj_.data() + card_offsets_[card], card_adj_.data() + card_offsets_[card + 1]};
  }
  // N_j, ascending card indices.
  std::span<const Index> cards_of(Index location) const {
    return {loc_adj_.data() + loc_offsets_[location],
            loc_adj_.data() + loc_offsets_[location + 1]};
  }
  // Global edge ids of N_j, aligned with cards_of(location).
  std::span<const std::size_t> edges_of_location(Index location) const {
    return {loc_edge_.data() + loc_offsets_[location],
            loc_edge_.data() + loc_offsets_[location + 1]};
  }

  std::size_t edge_begin(Index card) const { return card_offsets_[card]; }
  std::size_t edge_end(Index card) const { return card_offsets_[card + 1]; }
  Index edge_location(std::size_t edge) const { return card_adj_[edge]; }

  std::size_t degree_of_card(Index card) const { return edge_end(card) - edge_begin(card); }
  std::size_t degree_of_location(Index location) const {
    return loc_offsets_[location + 1] - loc_offsets_[location];
  }

  bool is_fraud(Index card) const { return fraud_[card] != 0; }
  // F_j: fraud-card neighbours of location j.
  std::size_t fraud_neighbors(Index location) const { return fraud_neighbors_[location]; }

  const std::string& card_id(Index card) const { return card_ids_[card]; }
  const LocationBucket& location(Index j) const { return locations_[j]; }

  const std::vector<std::string>& card_ids() const { return card_ids_; }
  const std::vector<LocationBucket>& locations() const { return locations_; }
  const std::vector<std::uint8_t>& fraud_flags() const { return fraud_; }
  const std::vector<std::size_t>& card_offsets() const { return card_offsets_; }
  const std::vector<Index>& card_adjacency() const { return card_adj_; }
  const std::vector<std::size_t>& location_offsets() const { return loc_offsets_; }
  const std::vector<Index>& location_adjacency() const { return loc_adj_; }

  // (card, location) pairs in global edge order.
  std::vector<std::pair<Index, Index>> edge_list() const {
    std::vector<std::pair<Index, Index>> out;
    out.reserve(num_edges());
    for (Index i = 0; i < num_cards(); ++i)
      for (Index j : locations_of(i)) out.emplace_back(i, j);
    return out;
  }

  bool operator==(const BipartiteGraph& o) const {
    return card_ids_ == o.card_ids_ && locations_ == o.locations_ && fraud_ == o.fraud_ &&
           card_offsets_ == o.card_offsets_ && card_adj_ == o.card_adj_;
  }

 private:
  std::vector<std::string> card_ids_;
  std::vector<LocationBucket> locations_;
  std::vector<std::uint8_t> fraud_;
  std::vector<std::size_t> card_offsets_{0};
  std::vector<Index> card_adj_;
  std::vector<std::size_t> loc_offsets_{0};
  std::vector<Index> loc_adj_;
  std::vector<std::size_t> loc_edge_;
  std::vector<std::size_t> fraud_neighbors_;
  std::size_t num_fraud_cards_ = 0;
};

// Collects records into token tables and an edge list, then applies the
// preprocessing filter.
class GraphBuilder {
 public:
  void add(const TransactionRecord& r) {
    validate(r);
    const auto card = intern_card(r.card_id);
    const auto loc = intern_location(bucketize(r));
    if (r.is_fraud) fraud_[card] = 1;
    edges_.emplace_back(card, loc);
  }

  template <class Range>
  void add_all(const Range& records) {
    for (const auto& r : records) add(r);
  }

  // Drops locations with fewer than `min_fraud_cards` distinct fraud-card
  // neighbours, then cards left without edges. Surviving tokens keep their
  // first-appearance order. Single pass, no cascade.
  BipartiteGraph build(std::size_t min_fraud_cards) const {
    if (min_fraud_cards < 1) throw StructuralError("min_fraud_cards must be >= 1");
    using Index = BipartiteGraph::Index;
    auto edges = edges_;
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

    std::vector<std::size_t> fraud_count(locations_.size(), 0);
    for (auto [i, j] : edges)
      if (fraud_[i]) ++fraud_count[j];

    constexpr Index kDropped = ~Index{0};
    std::vector<Index> loc_map(locations_.size(), kDropped);
    std::vector<LocationBucket> kept_locations;
    for (std::size_t j = 0; j < locations_.size(); ++j) {
      if (fraud_count[j] >= min_fraud_cards) {
        loc_map[j] = static_cast<Index>(kept_locations.size());
        kept_locations.push_back(locations_[j]);
      }
    }
    if (kept_locations.empty())
      throw DataError("no candidate POCs: no location has at least " +
                      std::to_string(min_fraud_cards) + " fraud-card neighbours");

    std::vector<std::uint8_t> has_edge(card_ids_.size(), 0);
    for (auto [i, j] : edges)
      if (loc_map[j] != kDropped) has_edge[i] = 1;
    std::vector<Index> card_map(card_ids_.size(), kDropped);
    std::vector<std::string> kept_cards;
    std::vector<std::uint8_t> kept_fraud;
    for (std::size_t i = 0; i < card_ids_.size(); ++i) {
      if (has_edge[i]) {
        card_map[i] = static_cast<Index>(kept_cards.size());
        kept_cards.push_back(card_ids_[i]);
        kept_fraud.push_back(fraud_[i]);
      }
    }

    std::vector<std::pair<Index, Index>> kept_edges;
    kept_edges.reserve(edges.size());
    for (auto [i, j] : edges)
      if (loc_map[j] != kDropped) kept_edges.emplace_back(card_map[i], loc_map[j]);

    return BipartiteGraph(std::move(kept_cards), std::move(kept_locations), std::move(kept_fraud),
                          std::move(kept_edges));
  }

  std::size_t num_records() const { return edges_.size(); }

 private:
  BipartiteGraph::Index intern_card(const std::string& id) {
    auto [it, inserted] = card_index_.try_emplace(id, static_cast<BipartiteGraph::Index>(card_ids_.size()));
    if (inserted) {
      card_ids_.push_back(id);
      fraud_.push_back(0);
    }
    return it->second;
  }
  BipartiteGraph::Index intern_location(LocationBucket b) {
    auto [it, inserted] =
        location_index_.try_emplace(b, static_cast<BipartiteGraph::Index>(locations_.size()));
    if (inserted) locations_.push_back(std::move(b));
    return it->second;
  }

  std::unordered_map<std::string, BipartiteGraph::Index> card_index_;
  std::unordered_map<LocationBucket, BipartiteGraph::Index, LocationBucketHash> location_index_;
  std::vector<std::string> card_ids_;
  std::vector<std::uint8_t> fraud_;
  std::vector<LocationBucket> locations_;
  std::vector<std::pair<BipartiteGraph::Index, BipartiteGraph::Index>> edges_;
};

template <class Range>
BipartiteGraph build_graph(const Range& records, std::size_t min_fraud_cards = 5) {
  GraphBuilder b;
  b.add_all(records);
  return b.build(min_fraud_cards);
}

}  // namespace breachradar
