#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "fixtures.hpp"

using namespace breachradar;
using fixtures::tx;

namespace {

GeneratorConfig small_config(std::uint64_t seed) {
  GeneratorConfig c;
  c.num_cards = 1500;
  c.num_terminals = 200;
  c.weeks = 6;
  c.transactions_per_card = 20;
  c.seed = seed;
  return c;
}

std::string csv_bytes(const std::vector<TransactionRecord>& recs) {
  std::ostringstream out;
  write_transactions_csv(out, recs);
  return out.str();
}

std::set<std::string> fraud_cards(const std::vector<TransactionRecord>& recs) {
  std::set<std::string> out;
  for (const auto& r : recs)
    if (r.is_fraud) out.insert(r.card_id);
  return out;
}

// Bucket "poc" in week 2300 with n cards, one transaction each, then one
// transaction per card at "home" a week later.
std::vector<TransactionRecord> one_bucket_corpus(int n) {
  std::vector<TransactionRecord> recs;
  const auto t0 = week_start(2300);
  for (int k = 0; k < n; ++k) {
    recs.push_back(tx("c" + std::to_string(k), "poc", t0 + 3600 + k, 500));
    recs.push_back(tx("c" + std::to_string(k), "home" + std::to_string(k % 3), t0 + 8 * 86400 + k, 700));
  }
  return recs;
}

}  // namespace

// ---------------------------------------------------------------- generator

TEST(GenerateCorpus, ZeroMeanGivesEmptyStream) {
  GeneratorConfig c;
  c.num_cards = 1;
  c.transactions_per_card = 0;
  c.seed = 3;
  EXPECT_TRUE(generate_corpus(c).empty());
}

TEST(GenerateCorpus, DeterministicPerSeed) {
  const auto a = csv_bytes(generate_corpus(small_config(9)));
  EXPECT_EQ(a, csv_bytes(generate_corpus(small_config(9))));
  EXPECT_NE(a, csv_bytes(generate_corpus(small_config(10))));
}

TEST(GenerateCorpus, RecordsAreCleanValidAndInsideTheHorizon) {
  const auto cfg = small_config(4);
  const auto recs = generate_corpus(cfg);
  ASSERT_FALSE(recs.empty());
  const double mean = static_cast<double>(recs.size()) / static_cast<double>(cfg.num_cards);
  EXPECT_NEAR(mean, cfg.transactions_per_card, 1.0);
  for (std::size_t k = 0; k < recs.size(); ++k) {
    const auto& r = recs[k];
    EXPECT_FALSE(r.is_fraud);
    EXPECT_GE(r.amount, 0);
    EXPECT_GE(week_index_of(r.timestamp), cfg.start_week);
    EXPECT_LT(week_index_of(r.timestamp), cfg.start_week + static_cast<std::int64_t>(cfg.weeks));
    if (k > 0) EXPECT_LE(recs[k - 1].timestamp, r.timestamp);
  }
}

TEST(GenerateCorpus, ZipfHeadBeatsMedian) {
  GeneratorConfig c;
  c.num_cards = 3000;
  c.num_terminals = 10000;
  c.weeks = 4;
  c.transactions_per_card = 10;
  c.seed = 5;
  std::vector<std::size_t> count(c.num_terminals, 0);
  for (const auto& r : generate_corpus(c)) count[std::stoul(r.terminal_id.substr(1))]++;
  auto sorted = count;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_GT(count[0], sorted[sorted.size() / 2]);
  EXPECT_EQ(count[0], sorted.back());
}

TEST(GenerateCorpus, InvalidConfigRejected) {
  GeneratorConfig c;
  c.num_terminals = 0;
  EXPECT_THROW(generate_corpus(c), StructuralError);
}

TEST(BenchGraph, SizeAndDeterminism) {
  BenchGraphConfig c;
  c.num_edges = 50000;
  c.seed = 2;
  const auto g = generate_bench_graph(c);
  EXPECT_NEAR(static_cast<double>(g.num_edges()), 50000.0, 50.0);
  EXPECT_TRUE(generate_bench_graph(c) == g);
  EXPECT_NEAR(static_cast<double>(g.num_fraud_cards()) / static_cast<double>(g.num_cards()), 0.5, 0.05);
}

// ---------------------------------------------------------------- injection

TEST(InjectPocs, ZeroProbabilityNoNoise) {
  InjectionConfig ic;
  ic.steal_probability = 0.0;
  ic.num_pocs = 5;
  ic.seed = 1;
  const auto res = inject_pocs(generate_corpus(small_config(2)), ic);
  EXPECT_TRUE(fraud_cards(res.records).empty());
  EXPECT_TRUE(res.truth.culprits.empty());
  EXPECT_EQ(res.truth.injected_pocs.size(), 5u);
}

TEST(InjectPocs, CertainTheftAtSevenCardBucket) {
  InjectionConfig ic;
  ic.steal_probability = 1.0;
  ic.num_pocs = 1;
  ic.min_poc_cards = 7;
  ic.max_poc_cards = 7;
  ic.seed = 8;
  auto corpus = one_bucket_corpus(7);
  corpus.push_back(tx("lonely", "other", week_start(2300) + 5, 1));
  const auto res = inject_pocs(corpus, ic);
  ASSERT_EQ(res.truth.injected_pocs.size(), 1u);
  const LocationBucket poc{"poc", 2300};
  EXPECT_EQ(res.truth.injected_pocs[0], poc);
  EXPECT_EQ(fraud_cards(res.records).size(), 7u);
  ASSERT_EQ(res.truth.culprits.size(), 7u);
  for (const auto& [card, c] : res.truth.culprits) EXPECT_EQ(c, poc);
}

TEST(InjectPocs, TooFewEligibleBucketsIsDataError) {
  InjectionConfig ic;
  ic.num_pocs = 2;
  ic.min_poc_cards = 7;
  EXPECT_THROW(inject_pocs(one_bucket_corpus(7), ic), DataError);
  EXPECT_THROW(inject_pocs({}, ic), DataError);
}

TEST(InjectPocs, VictimsTransactedAtCulpritAndFlagElsewhereLater) {
  InjectionConfig ic;
  ic.num_pocs = 8;
  ic.steal_probability = 0.3;
  ic.seed = 77;
  const auto corpus = generate_corpus(small_config(6));
  const auto res = inject_pocs(corpus, ic);
  ASSERT_GT(res.truth.num_victims(), 0u);

  std::map<std::string, std::vector<const TransactionRecord*>> by_card;
  for (const auto& r : res.records) by_card[r.card_id].push_back(&r);
  const auto flagged = fraud_cards(res.records);
  for (const auto& [card, culprit] : res.truth.culprits) {
    EXPECT_TRUE(flagged.count(card));
    if (!culprit) continue;
    EXPECT_TRUE(res.truth.is_injected(*culprit));
    std::int64_t first_visit = INT64_MAX;
    for (const auto* r : by_card[card])
      if (bucketize(*r) == *culprit) first_visit = std::min(first_visit, r->timestamp);
    ASSERT_NE(first_visit, INT64_MAX) << card << " never visited its culprit";
    for (const auto* r : by_card[card]) {
      if (!r->is_fraud) continue;
      EXPECT_NE(bucketize(*r), *culprit);
      EXPECT_GT(r->timestamp, first_visit);
    }
  }
  EXPECT_EQ(flagged.size(), res.truth.culprits.size());
}

TEST(InjectPocs, ExpectedVictimCountIsBinomialMean) {
  const int n = 50;
  const double p = 0.1;
  const int seeds = 200;
  const auto corpus = one_bucket_corpus(n);
  double total = 0.0;
  for (int s = 0; s < seeds; ++s) {
    InjectionConfig ic;
    ic.num_pocs = 1;
    ic.steal_probability = p;
    ic.min_poc_cards = n;
    ic.seed = static_cast<std::uint64_t>(s);
    total += static_cast<double>(inject_pocs(corpus, ic).truth.num_victims());
  }
  const double mean = total / seeds;
  const double se = std::sqrt(n * p * (1 - p) / seeds);
  EXPECT_NEAR(mean, n * p, 3 * se);
}

TEST(InjectPocs, FullNoiseDoublesFraudCards) {
  InjectionConfig ic;
  ic.num_pocs = 6;
  ic.steal_probability = 0.2;
  ic.seed = 12;
  const auto corpus = generate_corpus(small_config(13));
  const auto base = inject_pocs(corpus, ic);
  ic.noise_multiplier = 1.0;
  const auto noisy = inject_pocs(corpus, ic);
  const auto victims = base.truth.num_victims();
  ASSERT_GT(victims, 0u);
  EXPECT_EQ(noisy.truth.num_victims(), victims);
  EXPECT_EQ(noisy.truth.num_noise(), victims);
  EXPECT_EQ(fraud_cards(noisy.records).size(), 2 * victims);
  for (const auto& [card, c] : noisy.truth.culprits)
    if (!c) EXPECT_FALSE(base.truth.culprits.count(card));
}

TEST(InjectPocs, NoiseShortfallNamesTheGap) {
  InjectionConfig ic;
  ic.num_pocs = 1;
  ic.steal_probability = 1.0;
  ic.min_poc_cards = 7;
  ic.noise_multiplier = 1.0;
  try {
    inject_pocs(one_bucket_corpus(7), ic);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("short by 7"), std::string::npos) << e.what();
  }
}

TEST(InjectPocs, DeterministicAndOrderIndependent) {
  InjectionConfig ic;
  ic.num_pocs = 5;
  ic.noise_multiplier = 0.5;
  ic.seed = 31;
  auto corpus = generate_corpus(small_config(30));
  const auto a = inject_pocs(corpus, ic);
  const auto b = inject_pocs(corpus, ic);
  EXPECT_EQ(csv_bytes(a.records), csv_bytes(b.records));
  EXPECT_EQ(to_json(a.truth), to_json(b.truth));

  std::mt19937_64 rng(1);
  std::shuffle(corpus.begin(), corpus.end(), rng);
  const auto c = inject_pocs(corpus, ic);
  EXPECT_EQ(to_json(a.truth), to_json(c.truth));
  EXPECT_EQ(fraud_cards(a.records), fraud_cards(c.records));
}

TEST(InjectPocs, VictimCountGrowsWithProbability) {
  const auto corpus = generate_corpus(small_config(40));
  std::size_t prev = 0;
  for (double p : {0.02, 0.05, 0.1, 0.2}) {
    InjectionConfig ic;
    ic.num_pocs = 10;
    ic.steal_probability = p;
    ic.seed = 41;
    const auto v = inject_pocs(corpus, ic).truth.num_victims();
    EXPECT_GE(v, prev);
    prev = v;
  }
}

TEST(GroundTruthJson, RoundTrip) {
  GroundTruth t;
  t.injected_pocs = {{"a", 1}, {"b@x", 2}};
  t.culprits["c1"] = LocationBucket{"a", 1};
  t.culprits["c2"] = std::nullopt;
  t.steal_probability = 0.1;
  t.noise_multiplier = 1.0;
  t.seed = 7;
  const auto j = to_json(t);
  EXPECT_EQ(j["culprits"]["c2"], "noise");
  const auto back = ground_truth_from_json(j);
  EXPECT_EQ(back.injected_pocs, t.injected_pocs);
  EXPECT_EQ(back.culprits, t.culprits);
  EXPECT_EQ(back.seed, 7u);
  EXPECT_EQ(back.num_noise(), 1u);
  EXPECT_THROW(ground_truth_from_json(nlohmann::json::object()), DataError);
}
