#pragma once

// Synthetic transaction corpora and ground-truth POC injection.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "breachradar/common.hpp"
#include "breachradar/graph.hpp"

namespace breachradar {

struct GeneratorConfig {
  std::size_t num_cards = 20000;
  std::size_t num_terminals = 2000;
  std::size_t weeks = 26;
  double transactions_per_card = 40.0;  // Poisson mean over the whole horizon
  double zipf_exponent = 1.1;           // terminal popularity
  std::uint64_t seed = 0;
  double amount_median = 4000.0;  // minor units
  double amount_sigma = 0.8;
  std::int64_t start_week = 2296;  // week index of the first day (2014-01-06)
  // Repeat-customer behaviour: each card keeps a few favourite terminals and
  // sends this share of its transactions to them.
  std::size_t favorite_terminals = 2;
  double favorite_share = 0.7;

  void validate() const {
    if (num_cards < 1 || num_terminals < 1 || weeks < 1)
      throw StructuralError("generator counts must be >= 1");
    if (transactions_per_card < 0.0) throw StructuralError("transactions_per_card must be >= 0");
    if (!(zipf_exponent >= 0.0)) throw StructuralError("zipf_exponent must be >= 0");
    if (!(favorite_share >= 0.0 && favorite_share <= 1.0))
      throw StructuralError("favorite_share must lie in [0, 1]");
    if (amount_median < 1.0 || amount_sigma < 0.0) throw StructuralError("bad amount distribution");
  }
};

// Random streams; each draw is keyed on (seed, stream, entity).
enum RngStream : std::uint64_t {
  kStreamCard = 1,
  kStreamPocSelect = 2,
  kStreamSteal = 3,
  kStreamFlag = 4,
  kStreamNoise = 5,
  kStreamNoiseFlag = 6,
};

inline std::string terminal_name(std::size_t rank) { return "t" + std::to_string(rank); }
inline std::string card_name(std::size_t index) { return "c" + std::to_string(index); }

// Inverse-CDF sampler for a Zipf law over ranks 0..n-1.
class ZipfSampler {
 public:
  ZipfSampler(std::size_t n, double exponent) : cdf_(n) {
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      acc += 1.0 / std::pow(static_cast<double>(k + 1), exponent);
      cdf_[k] = acc;
    }
    for (auto& v : cdf_) v /= acc;
  }
  std::size_t operator()(double u) const {
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return std::min(static_cast<std::size_t>(it - cdf_.begin()), cdf_.size() - 1);
  }

 private:
  std::vector<double> cdf_;
};

// Deterministic corpus, sorted by (timestamp, card, per-card sequence). Every
// card draws from its own keyed stream, so cards can be generated in any
// order or in parallel.
inline std::vector<TransactionRecord> generate_corpus(const GeneratorConfig& cfg) {
  cfg.validate();
  const ZipfSampler zipf(cfg.num_terminals, cfg.zipf_exponent);
  const std::int64_t t0 = week_start(cfg.start_week);
  const auto horizon = static_cast<std::uint64_t>(cfg.weeks) * kSecondsPerWeek;

  struct Keyed {
    std::int64_t ts;
    std::size_t card;
    std::size_t seq;
    TransactionRecord rec;
  };
  std::vector<Keyed> all;
  std::vector<std::size_t> favorites;
  for (std::size_t c = 0; c < cfg.num_cards; ++c) {
    CounterRng rng(cfg.seed, kStreamCard, c);
    const auto n = rng.poisson(cfg.transactions_per_card);
    favorites.clear();
    for (std::size_t f = 0; f < cfg.favorite_terminals; ++f) favorites.push_back(zipf(rng.uniform()));
    for (std::uint64_t s = 0; s < n; ++s) {
      std::size_t term;
      if (!favorites.empty() && rng.bernoulli(cfg.favorite_share))
        term = favorites[rng.below(favorites.size())];
      else
        term = zipf(rng.uniform());
      const auto ts = t0 + static_cast<std::int64_t>(rng.below(horizon));
      const double amt = std::round(cfg.amount_median * std::exp(cfg.amount_sigma * rng.normal()));
      TransactionRecord r{card_name(c), terminal_name(term), ts,
                          std::max<std::int64_t>(1, static_cast<std::int64_t>(amt)), false};
      all.push_back({ts, c, s, std::move(r)});
    }
  }
  std::sort(all.begin(), all.end(), [](const Keyed& a, const Keyed& b) {
    return std::tie(a.ts, a.card, a.seq) < std::tie(b.ts, b.card, b.seq);
  });
  std::vector<TransactionRecord> out;
  out.reserve(all.size());
  for (auto& k : all) out.push_back(std::move(k.rec));
  return out;
}

struct BenchGraphConfig {
  std::size_t num_edges = 100000;
  std::size_t edges_per_card = 20;
  std::size_t cards_per_location = 200;
  double fraud_fraction = 0.5;
  std::uint64_t seed = 0;
};

// Random bipartite graph of roughly num_edges edges for timing runs; each card
// picks edges_per_card distinct locations uniformly.
inline BipartiteGraph generate_bench_graph(const BenchGraphConfig& cfg) {
  using Index = BipartiteGraph::Index;
  if (cfg.edges_per_card < 1 || cfg.cards_per_location < 1) throw StructuralError("bad bench graph shape");
  const std::size_t cards = std::max<std::size_t>(1, cfg.num_edges / cfg.edges_per_card);
  const std::size_t locations =
      std::max(cfg.edges_per_card, cfg.num_edges / cfg.cards_per_location);
  std::vector<std::string> card_ids(cards);
  std::vector<std::uint8_t> fraud(cards);
  std::vector<LocationBucket> locs(locations);
  for (std::size_t j = 0; j < locations; ++j) locs[j] = {"b" + std::to_string(j), 0};
  std::vector<std::pair<Index, Index>> edges;
  edges.reserve(cards * cfg.edges_per_card);
  std::vector<Index> picked;
  for (std::size_t i = 0; i < cards; ++i) {
    CounterRng rng(cfg.seed, kStreamCard, i);
    card_ids[i] = card_name(i);
    fraud[i] = rng.bernoulli(cfg.fraud_fraction) ? 1 : 0;
    picked.clear();
    while (picked.size() < cfg.edges_per_card) {
      const auto j = static_cast<Index>(rng.below(locations));
      if (std::find(picked.begin(), picked.end(), j) == picked.end()) picked.push_back(j);
    }
    for (Index j : picked) edges.emplace_back(static_cast<Index>(i), j);
  }
  return BipartiteGraph(std::move(card_ids), std::move(locs), std::move(fraud), std::move(edges));
}

struct InjectionConfig {
  std::size_t num_pocs = 20;
  double steal_probability = 0.1;
  double noise_multiplier = 0.0;  // 1.0 doubles the fraud-card count
  std::uint64_t seed = 0;
  // Only buckets with a distinct-card count in [min, max] can be injected.
  std::size_t min_poc_cards = 20;
  std::size_t max_poc_cards = std::numeric_limits<std::size_t>::max();

  void validate() const {
    if (!(steal_probability >= 0.0 && steal_probability <= 1.0))
      throw StructuralError("steal probability must lie in [0, 1]");
    if (!(noise_multiplier >= 0.0)) throw StructuralError("noise multiplier must be >= 0");
    if (min_poc_cards > max_poc_cards) throw StructuralError("min_poc_cards exceeds max_poc_cards");
  }
};

struct GroundTruth {
  std::vector<LocationBucket> injected_pocs;  // sorted
  // card_id -> culprit bucket, or nullopt for noise fraud-cards
  std::map<std::string, std::optional<LocationBucket>> culprits;
  double steal_probability = 0.0;
  double noise_multiplier = 0.0;
  std::uint64_t seed = 0;

  bool is_injected(const LocationBucket& b) const {
    return std::binary_search(injected_pocs.begin(), injected_pocs.end(), b);
  }
  std::size_t num_victims() const {
    std::size_t n = 0;
    for (const auto& [card, c] : culprits) n += c.has_value();
    return n;
  }
  std::size_t num_noise() const { return culprits.size() - num_victims(); }
};

inline nlohmann::json to_json(const GroundTruth& t) {
  nlohmann::json pocs = nlohmann::json::array();
  for (const auto& b : t.injected_pocs) pocs.push_back(b.key());
  nlohmann::json culprits = nlohmann::json::object();
  for (const auto& [card, c] : t.culprits) culprits[card] = c ? c->key() : std::string("noise");
  return {{"steal_probability", t.steal_probability},
          {"noise_multiplier", t.noise_multiplier},
          {"seed", t.seed},
          {"injected_pocs", pocs},
          {"culprits", culprits}};
}

inline GroundTruth ground_truth_from_json(const nlohmann::json& j) {
  GroundTruth t;
  try {
    t.steal_probability = j.at("steal_probability").get<double>();
    t.noise_multiplier = j.at("noise_multiplier").get<double>();
    t.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& k : j.at("injected_pocs")) t.injected_pocs.push_back(LocationBucket::parse(k.get<std::string>()));
    for (const auto& [card, v] : j.at("culprits").items()) {
      const auto s = v.get<std::string>();
      t.culprits[card] = s == "noise" ? std::nullopt : std::optional(LocationBucket::parse(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed ground truth: ") + e.what());
  }
  std::sort(t.injected_pocs.begin(), t.injected_pocs.end());
  return t;
}

struct InjectionResult {
  std::vector<TransactionRecord> records;
  GroundTruth truth;
};

namespace detail {

// Stable identity of a transaction: its fields plus its ordinal among exact
// duplicates.
inline std::vector<std::uint64_t> transaction_keys(const std::vector<TransactionRecord>& records) {
  std::vector<std::uint64_t> keys(records.size());
  std::unordered_map<std::uint64_t, std::uint64_t> seen;
  for (std::size_t k = 0; k < records.size(); ++k) {
    const auto& r = records[k];
    std::uint64_t h = fnv1a(r.card_id);
    h = fnv1a("\x1f", h);
    h = fnv1a(r.terminal_id, h);
    h = fnv1a("\x1f" + std::to_string(r.timestamp), h);
    const auto ordinal = seen[h]++;
    keys[k] = splitmix64(h ^ splitmix64(ordinal));
  }
  return keys;
}

}  // namespace detail

// Plants compromised buckets into a clean corpus.
//
// Injected buckets are drawn uniformly among buckets whose distinct-card
// count lies in [min_poc_cards, max_poc_cards]. Every transaction at an
// injected bucket steals its card with probability p; a stolen card becomes a
// fraud-card by flagging one of its later transactions away from the culprit
// bucket (or appending one when none exists). Afterwards ceil(noise * fraud-cards)
// never-stolen cards are flagged at random as noise.
inline InjectionResult inject_pocs(std::vector<TransactionRecord> records, const InjectionConfig& cfg) {
  cfg.validate();
  if (records.empty()) throw DataError("cannot inject into an empty corpus");
  const auto tx_key = detail::transaction_keys(records);

  std::unordered_map<LocationBucket, std::unordered_set<std::string>, LocationBucketHash> bucket_cards;
  for (const auto& r : records) bucket_cards[bucketize(r)].insert(r.card_id);

  std::vector<std::pair<std::uint64_t, LocationBucket>> eligible;
  for (const auto& [b, cards] : bucket_cards) {
    if (cards.size() < cfg.min_poc_cards || cards.size() > cfg.max_poc_cards) continue;
    eligible.emplace_back(CounterRng(cfg.seed, kStreamPocSelect, fnv1a(b.key())).next_u64(), b);
  }
  if (eligible.size() < cfg.num_pocs)
    throw DataError("requested " + std::to_string(cfg.num_pocs) + " POCs but only " +
                    std::to_string(eligible.size()) + " buckets have between " +
                    std::to_string(cfg.min_poc_cards) + " and " + std::to_string(cfg.max_poc_cards) +
                    " distinct cards");
  std::sort(eligible.begin(), eligible.end());

  GroundTruth truth;
  truth.steal_probability = cfg.steal_probability;
  truth.noise_multiplier = cfg.noise_multiplier;
  truth.seed = cfg.seed;
  for (std::size_t k = 0; k < cfg.num_pocs; ++k) truth.injected_pocs.push_back(eligible[k].second);
  std::sort(truth.injected_pocs.begin(), truth.injected_pocs.end());

  // Earliest stealing transaction per card.
  struct Theft {
    std::int64_t ts;
    LocationBucket bucket;
    std::size_t record;
  };
  std::unordered_map<std::string, Theft> thefts;
  for (std::size_t k = 0; k < records.size(); ++k) {
    const auto& r = records[k];
    const auto b = bucketize(r);
    if (!truth.is_injected(b)) continue;
    if (!CounterRng(cfg.seed, kStreamSteal, tx_key[k]).bernoulli(cfg.steal_probability)) continue;
    auto [it, inserted] = thefts.try_emplace(r.card_id, Theft{r.timestamp, b, k});
    if (!inserted && std::tie(r.timestamp, b) < std::tie(it->second.ts, it->second.bucket))
      it->second = Theft{r.timestamp, b, k};
  }

  std::unordered_map<std::string, std::vector<std::size_t>> by_card;
  for (std::size_t k = 0; k < records.size(); ++k) by_card[records[k].card_id].push_back(k);

  std::vector<TransactionRecord> appended;
  std::vector<std::string> victims;
  victims.reserve(thefts.size());
  for (const auto& [card, th] : thefts) victims.push_back(card);
  std::sort(victims.begin(), victims.end());
  for (const auto& card : victims) {
    const Theft& th = thefts.at(card);
    truth.culprits[card] = th.bucket;
    std::vector<std::size_t> later;
    for (std::size_t k : by_card[card]) {
      const auto& r = records[k];
      if (r.timestamp > th.ts && bucketize(r) != th.bucket) later.push_back(k);
    }
    CounterRng rng(cfg.seed, kStreamFlag, fnv1a(card));
    if (!later.empty()) {
      records[later[rng.below(later.size())]].is_fraud = true;
      continue;
    }
    // No later transaction: append one a day after the theft at another of
    // the card's terminals when it has one.
    std::vector<std::string> others;
    for (std::size_t k : by_card[card])
      if (records[k].terminal_id != th.bucket.terminal_id) others.push_back(records[k].terminal_id);
    std::sort(others.begin(), others.end());
    others.erase(std::unique(others.begin(), others.end()), others.end());
    const std::string terminal = others.empty() ? th.bucket.terminal_id : others[rng.below(others.size())];
    appended.push_back({card, terminal, th.ts + 86400, records[th.record].amount, true});
  }

  const auto noise_count = static_cast<std::size_t>(
      std::ceil(cfg.noise_multiplier * static_cast<double>(victims.size()) - 1e-9));
  if (noise_count > 0) {
    std::vector<std::pair<std::uint64_t, std::string>> clean;
    for (const auto& [card, idx] : by_card)
      if (!thefts.count(card)) clean.emplace_back(CounterRng(cfg.seed, kStreamNoise, fnv1a(card)).next_u64(), card);
    if (clean.size() < noise_count)
      throw DataError("noise needs " + std::to_string(noise_count) + " never-stolen cards but only " +
                      std::to_string(clean.size()) + " exist (short by " +
                      std::to_string(noise_count - clean.size()) + ")");
    std::partial_sort(clean.begin(), clean.begin() + static_cast<std::ptrdiff_t>(noise_count), clean.end());
    for (std::size_t k = 0; k < noise_count; ++k) {
      const auto& card = clean[k].second;
      const auto& idx = by_card[card];
      CounterRng rng(cfg.seed, kStreamNoiseFlag, fnv1a(card));
      records[idx[rng.below(idx.size())]].is_fraud = true;
      truth.culprits[card] = std::nullopt;
    }
  }

  std::sort(appended.begin(), appended.end(), [](const TransactionRecord& a, const TransactionRecord& b) {
    return std::tie(a.timestamp, a.card_id) < std::tie(b.timestamp, b.card_id);
  });
  for (auto& r : appended) records.push_back(std::move(r));
  return {std::move(records), std::move(truth)};
}

}  // namespace breachradar
